//! Minimal CPU splat renderer: front-to-back alpha compositing for overlay
//! and highlight rendering, plus back-projection of a selected subset into a
//! 2D mask.
//!
//! Compositing is exact per pixel; there is no tile scheme. Rows are
//! independent, so rendering is row-parallel and deterministic for any
//! worker count.

use std::io;
use std::path::Path;

use nalgebra::{Vector2, Vector3};
use rayon::prelude::*;

use crate::camera_io::CameraView;
use crate::geometry::{
    self, Cov2D, GeometryError, DEFAULT_EPSILON_COV, DEFAULT_EPSILON_Z,
};
use crate::mask_io::Mask2D;
use crate::scene_io::SplatScene;
use crate::uplift::footprint_radius;

#[derive(Debug, thiserror::Error)]
pub enum RasterError {
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("image write failed for {path}: {source}")]
    ImageWrite {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error("i/o failure: {0}")]
    Io(#[from] io::Error),
}

/// Projection knobs shared by rendering and back-projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectionParams {
    pub epsilon_cov: f64,
    pub epsilon_z: f64,
}

impl Default for ProjectionParams {
    fn default() -> Self {
        Self {
            epsilon_cov: DEFAULT_EPSILON_COV,
            epsilon_z: DEFAULT_EPSILON_Z,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RenderOptions {
    /// Splats to tint with `highlight_color`.
    pub selection: Option<Vec<usize>>,
    pub highlight_color: Option<[f64; 3]>,
    /// Accumulated-opacity saturation at which a pixel stops compositing.
    pub saturation: f64,
    /// Footprint radius in standard deviations of the projected Gaussian.
    pub footprint_sigma: f64,
    pub projection: ProjectionParams,
}

impl Default for RenderOptions {
    fn default() -> Self {
        Self {
            selection: None,
            highlight_color: None,
            saturation: 0.9999,
            footprint_sigma: 3.0,
            projection: ProjectionParams::default(),
        }
    }
}

/// Per-pixel color and accumulated-opacity planes.
#[derive(Debug, Clone)]
pub struct RenderTarget {
    pub width: u32,
    pub height: u32,
    /// Row-major linear RGB.
    pub rgb: Vec<[f64; 3]>,
    /// Row-major accumulated opacity in [0, 1].
    pub alpha_acc: Vec<f64>,
}

impl RenderTarget {
    pub fn pixel(&self, x: u32, y: u32) -> [f64; 3] {
        self.rgb[y as usize * self.width as usize + x as usize]
    }

    pub fn alpha(&self, x: u32, y: u32) -> f64 {
        self.alpha_acc[y as usize * self.width as usize + x as usize]
    }

    /// Mask of pixels whose accumulated opacity exceeds `threshold`.
    pub fn alpha_mask(&self, threshold: f64) -> Mask2D {
        let bits = self.alpha_acc.iter().map(|&a| a > threshold).collect();
        Mask2D::from_bits(self.width, self.height, bits)
    }

    /// Saves as 8-bit RGB PNG on a black background.
    pub fn save_png(&self, path: &Path) -> Result<(), RasterError> {
        let img = image::RgbImage::from_fn(self.width, self.height, |x, y| {
            let c = self.pixel(x, y);
            image::Rgb(c.map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8))
        });
        img.save(path).map_err(|source| RasterError::ImageWrite {
            path: path.display().to_string(),
            source,
        })
    }
}

/// A splat prepared for compositing.
struct Footprint {
    pixel: Vector2<f64>,
    cov2d: Cov2D,
    alpha: f64,
    color: Vector3<f64>,
    /// Inclusive pixel-row and column bounds, clipped to the image.
    x0: u32,
    x1: u32,
    y0: u32,
    y1: u32,
}

fn project_footprints(
    scene: &SplatScene,
    view: &CameraView,
    footprint_sigma: f64,
    params: &ProjectionParams,
    recolor: impl Fn(usize, Vector3<f64>) -> Vector3<f64> + Sync,
) -> Result<Vec<Footprint>, GeometryError> {
    let (w, h) = (view.intrinsics.width, view.intrinsics.height);
    let mut items: Vec<(f64, usize, Footprint)> = (0..scene.len())
        .into_par_iter()
        .map(|i| -> Result<Option<(f64, usize, Footprint)>, GeometryError> {
            let splat = scene.splat(i);
            let point_cam = geometry::world_to_camera(&splat.position, &view.extrinsics);
            let proj = match geometry::camera_to_pixel(&point_cam, &view.intrinsics, params.epsilon_z) {
                Ok(p) => p,
                Err(GeometryError::DegenerateDepth { .. }) => return Ok(None),
                Err(e) => return Err(e),
            };
            let cov_world = geometry::covariance_world(&splat);
            let cov_cam = geometry::covariance_camera(&cov_world, &view.extrinsics);
            let jacobian =
                geometry::projection_jacobian(&point_cam, &view.intrinsics, params.epsilon_z)?;
            let cov2d = geometry::covariance_image(&cov_cam, &jacobian, params.epsilon_cov);
            let radius = footprint_radius(&cov2d, footprint_sigma);
            let x0 = (proj.pixel.x - radius).floor();
            let x1 = (proj.pixel.x + radius).ceil();
            let y0 = (proj.pixel.y - radius).floor();
            let y1 = (proj.pixel.y + radius).ceil();
            if x1 < 0.0 || y1 < 0.0 || x0 >= w as f64 || y0 >= h as f64 {
                return Ok(None);
            }
            Ok(Some((
                proj.depth,
                i,
                Footprint {
                    pixel: proj.pixel,
                    cov2d,
                    alpha: splat.alpha(),
                    color: recolor(i, splat.color),
                    x0: x0.max(0.0) as u32,
                    x1: x1.min(w as f64 - 1.0) as u32,
                    y0: y0.max(0.0) as u32,
                    y1: y1.min(h as f64 - 1.0) as u32,
                },
            )))
        })
        .collect::<Result<Vec<_>, _>>()?
        .into_iter()
        .flatten()
        .collect();
    // Front to back; ties broken by scene index so ordering is total.
    items.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Ok(items.into_iter().map(|(_, _, f)| f).collect())
}

/// Renders the scene into `view`, compositing splats front to back until the
/// accumulated opacity reaches `options.saturation`. Splats listed in
/// `options.selection` take `options.highlight_color` when given. The
/// background is black.
pub fn render(
    scene: &SplatScene,
    view: &CameraView,
    options: &RenderOptions,
) -> Result<RenderTarget, RasterError> {
    let (w, h) = (view.intrinsics.width, view.intrinsics.height);
    let highlight = match (&options.selection, options.highlight_color) {
        (Some(sel), Some(rgb)) => {
            let mut sorted = sel.clone();
            sorted.sort_unstable();
            Some((sorted, Vector3::new(rgb[0], rgb[1], rgb[2])))
        }
        _ => None,
    };
    let footprints = project_footprints(
        scene,
        view,
        options.footprint_sigma,
        &options.projection,
        |i, color| match &highlight {
            Some((sel, tint)) if sel.binary_search(&i).is_ok() => *tint,
            _ => color,
        },
    )?;

    // Bin depth-sorted footprints by the rows they touch.
    let mut row_bins: Vec<Vec<u32>> = vec![Vec::new(); h as usize];
    for (k, f) in footprints.iter().enumerate() {
        for y in f.y0..=f.y1 {
            row_bins[y as usize].push(k as u32);
        }
    }

    let mut rgb = vec![[0.0f64; 3]; w as usize * h as usize];
    let mut alpha_acc = vec![0.0f64; w as usize * h as usize];
    rgb.par_chunks_mut(w as usize)
        .zip(alpha_acc.par_chunks_mut(w as usize))
        .enumerate()
        .try_for_each(|(y, (rgb_row, alpha_row))| -> Result<(), GeometryError> {
            let mut trans = vec![1.0f64; w as usize];
            let py = y as f64 + 0.5;
            for &k in &row_bins[y] {
                let f = &footprints[k as usize];
                for x in f.x0..=f.x1 {
                    // Eq.-style stop: once saturated, later splats are ignored.
                    if 1.0 - trans[x as usize] >= options.saturation {
                        continue;
                    }
                    let center = Vector2::new(x as f64 + 0.5, py);
                    let weight =
                        geometry::gaussian_weight(&center, &f.pixel, &f.cov2d, f.alpha)?;
                    let t = trans[x as usize];
                    let contribution = t * weight;
                    let px = &mut rgb_row[x as usize];
                    px[0] += contribution * f.color.x;
                    px[1] += contribution * f.color.y;
                    px[2] += contribution * f.color.z;
                    trans[x as usize] = t * (1.0 - weight);
                }
            }
            for (a, t) in alpha_row.iter_mut().zip(&trans) {
                *a = 1.0 - t;
            }
            Ok(())
        })?;

    Ok(RenderTarget {
        width: w,
        height: h,
        rgb,
        alpha_acc,
    })
}

/// Back-projects a selected subset into a binary mask: a pixel is set iff
/// its center lies within Mahalanobis distance `radius_sigma` of at least
/// one selected splat's projected Gaussian.
pub fn backproject_mask(
    scene: &SplatScene,
    view: &CameraView,
    selection: &[usize],
    radius_sigma: f64,
    params: &ProjectionParams,
) -> Result<Mask2D, RasterError> {
    let (w, h) = (view.intrinsics.width, view.intrinsics.height);
    let mut mask = Mask2D::new_empty(w, h);
    let r2 = radius_sigma * radius_sigma;
    for &i in selection {
        let splat = scene.splat(i);
        let point_cam = geometry::world_to_camera(&splat.position, &view.extrinsics);
        let proj = match geometry::camera_to_pixel(&point_cam, &view.intrinsics, params.epsilon_z) {
            Ok(p) => p,
            Err(GeometryError::DegenerateDepth { .. }) => continue,
            Err(e) => return Err(e.into()),
        };
        let cov_world = geometry::covariance_world(&splat);
        let cov_cam = geometry::covariance_camera(&cov_world, &view.extrinsics);
        let jacobian =
            geometry::projection_jacobian(&point_cam, &view.intrinsics, params.epsilon_z)?;
        let cov2d = geometry::covariance_image(&cov_cam, &jacobian, params.epsilon_cov);
        let radius = footprint_radius(&cov2d, radius_sigma);
        let x0 = ((proj.pixel.x - radius).floor()).max(0.0) as i64;
        let y0 = ((proj.pixel.y - radius).floor()).max(0.0) as i64;
        let x1 = ((proj.pixel.x + radius).ceil() as i64).min(w as i64 - 1);
        let y1 = ((proj.pixel.y + radius).ceil() as i64).min(h as i64 - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                if mask.get(x as u32, y as u32) {
                    continue;
                }
                let center = Vector2::new(x as f64 + 0.5, y as f64 + 0.5);
                let d2 = cov2d.mahalanobis_sq(&(center - proj.pixel))?;
                if d2 <= r2 {
                    mask.set(x as u32, y as u32, true);
                }
            }
        }
    }
    Ok(mask)
}
