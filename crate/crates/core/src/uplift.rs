//! Single-view mask up-lifting: gate Gaussians by a 2D mask, traverse them
//! front to back through a Z-buffer with an adaptive acceptance threshold,
//! then clean the subset with depth/opacity statistics and a depth-window
//! fill pass.

use std::time::Instant;

use nalgebra::Vector2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::camera_io::CameraView;
use crate::geometry::{
    self, Cov2D, GeometryError, DEFAULT_EPSILON_COV, DEFAULT_EPSILON_Z,
};
use crate::mask_io::Mask2D;
use crate::scene_io::SplatScene;

#[derive(Debug, thiserror::Error)]
pub enum UpliftError {
    #[error("mask is {mask_w}x{mask_h} but view {view} is {view_w}x{view_h}")]
    MaskSizeMismatch {
        view: String,
        mask_w: u32,
        mask_h: u32,
        view_w: u32,
        view_h: u32,
    },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Tunables of the up-lift pipeline. Defaults follow the two-standard-
/// deviations filtering rule with a 3-sigma splat footprint.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UpliftConfig {
    /// Width of the statistical filter and fill windows, in standard
    /// deviations.
    pub sigma_k: f64,
    /// Footprint radius in standard deviations of the projected Gaussian;
    /// bounds the buffer splat region.
    pub footprint_sigma: f64,
    /// Diagonal regularizer for projected covariances (pixels squared).
    pub epsilon_cov: f64,
    /// Depth below which a Gaussian counts as behind the camera.
    pub epsilon_z: f64,
    /// Run the depth-window fill pass after filtering.
    pub fill: bool,
    /// Make the fill pass also respect the opacity window (stricter than
    /// the default depth-only fill).
    pub fill_opacity_window: bool,
}

impl Default for UpliftConfig {
    fn default() -> Self {
        Self {
            sigma_k: 2.0,
            footprint_sigma: 3.0,
            epsilon_cov: DEFAULT_EPSILON_COV,
            epsilon_z: DEFAULT_EPSILON_Z,
            fill: true,
            fill_opacity_window: false,
        }
    }
}

/// A splat projected into one view: center pixel, depth, image-space
/// covariance, and activated opacity.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ProjectedSplat {
    pub splat_index: usize,
    pub pixel: Vector2<f64>,
    pub depth: f64,
    pub cov2d: Cov2D,
    pub alpha: f64,
}

/// Output of [`project_and_gate`]: the in-mask splats in scene order plus
/// cull counters.
#[derive(Debug, Clone, Default)]
pub struct GateOutput {
    pub gated: Vec<ProjectedSplat>,
    pub behind_camera: usize,
    pub out_of_bounds: usize,
    pub outside_mask: usize,
}

/// Mask-bounded grid accumulating footprint weights, with the running
/// statistics that define the acceptance threshold beta.
#[derive(Debug, Clone)]
pub struct DepthBuffer {
    origin: (i64, i64),
    width: usize,
    height: usize,
    cells: Vec<f64>,
    accepted_opacity_sum: f64,
    accepted_count: usize,
}

impl DepthBuffer {
    fn new(origin: (i64, i64), width: usize, height: usize) -> Self {
        Self {
            origin,
            width,
            height,
            cells: vec![0.0; width * height],
            accepted_opacity_sum: 0.0,
            accepted_count: 0,
        }
    }

    pub fn origin(&self) -> (i64, i64) {
        self.origin
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn accepted_count(&self) -> usize {
        self.accepted_count
    }

    /// Mean opacity of the accepted splats; infinite while the buffer is
    /// empty so the first splat is always accepted.
    pub fn beta(&self) -> f64 {
        if self.accepted_count == 0 {
            f64::INFINITY
        } else {
            self.accepted_opacity_sum / self.accepted_count as f64
        }
    }

    fn cell_index(&self, px: i64, py: i64) -> Option<usize> {
        let cx = px - self.origin.0;
        let cy = py - self.origin.1;
        if cx < 0 || cy < 0 || cx >= self.width as i64 || cy >= self.height as i64 {
            return None;
        }
        Some(cy as usize * self.width + cx as usize)
    }

    /// Accumulated weight at the cell holding image pixel (px, py); zero
    /// outside the buffer.
    pub fn value_at(&self, px: i64, py: i64) -> f64 {
        self.cell_index(px, py).map_or(0.0, |i| self.cells[i])
    }

    /// Adds a splat's footprint weights over the axis-aligned box of its
    /// `footprint_sigma` ellipse, evaluated at cell centers.
    fn splat(&mut self, s: &ProjectedSplat, footprint_sigma: f64) -> Result<(), GeometryError> {
        let radius = footprint_radius(&s.cov2d, footprint_sigma);
        let x0 = ((s.pixel.x - radius).floor() as i64).max(self.origin.0);
        let y0 = ((s.pixel.y - radius).floor() as i64).max(self.origin.1);
        let x1 = ((s.pixel.x + radius).ceil() as i64).min(self.origin.0 + self.width as i64 - 1);
        let y1 = ((s.pixel.y + radius).ceil() as i64).min(self.origin.1 + self.height as i64 - 1);
        for py in y0..=y1 {
            for px in x0..=x1 {
                let center = Vector2::new(px as f64 + 0.5, py as f64 + 0.5);
                let w = geometry::gaussian_weight(&center, &s.pixel, &s.cov2d, s.alpha)?;
                let idx = self
                    .cell_index(px, py)
                    .expect("footprint box clipped to buffer");
                self.cells[idx] += w;
            }
        }
        self.accepted_opacity_sum += s.alpha;
        self.accepted_count += 1;
        Ok(())
    }
}

/// Radius in pixels of the `sigma` footprint: `sigma * sqrt(max eigenvalue)`.
pub fn footprint_radius(cov: &Cov2D, sigma: f64) -> f64 {
    sigma * cov.eigenvalues().0.max(0.0).sqrt()
}

/// Projects every splat into the view and keeps those whose center lands on
/// a set mask bit with depth above `epsilon_z`. Behind-camera and
/// out-of-bounds splats are counted, not returned. Output preserves scene
/// order.
pub fn project_and_gate(
    scene: &SplatScene,
    view: &CameraView,
    mask: &Mask2D,
    config: &UpliftConfig,
) -> Result<GateOutput, UpliftError> {
    if (mask.width(), mask.height()) != (view.intrinsics.width, view.intrinsics.height) {
        return Err(UpliftError::MaskSizeMismatch {
            view: view.image_name.clone(),
            mask_w: mask.width(),
            mask_h: mask.height(),
            view_w: view.intrinsics.width,
            view_h: view.intrinsics.height,
        });
    }

    enum Outcome {
        Gated(ProjectedSplat),
        Behind,
        OutOfBounds,
        OutsideMask,
    }

    let outcomes: Vec<Result<Outcome, GeometryError>> = (0..scene.len())
        .into_par_iter()
        .map(|i| {
            let splat = scene.splat(i);
            let point_cam = geometry::world_to_camera(&splat.position, &view.extrinsics);
            let proj = match geometry::camera_to_pixel(&point_cam, &view.intrinsics, config.epsilon_z)
            {
                Ok(p) => p,
                Err(GeometryError::DegenerateDepth { .. }) => return Ok(Outcome::Behind),
                Err(e) => return Err(e),
            };
            let px = proj.pixel.x.floor();
            let py = proj.pixel.y.floor();
            if px < 0.0
                || py < 0.0
                || px >= view.intrinsics.width as f64
                || py >= view.intrinsics.height as f64
            {
                return Ok(Outcome::OutOfBounds);
            }
            if !mask.get(px as u32, py as u32) {
                return Ok(Outcome::OutsideMask);
            }
            // Covariance work only for splats that pass the gate.
            let cov_world = geometry::covariance_world(&splat);
            let cov_cam = geometry::covariance_camera(&cov_world, &view.extrinsics);
            let jacobian =
                geometry::projection_jacobian(&point_cam, &view.intrinsics, config.epsilon_z)?;
            let cov2d = geometry::covariance_image(&cov_cam, &jacobian, config.epsilon_cov);
            Ok(Outcome::Gated(ProjectedSplat {
                splat_index: i,
                pixel: proj.pixel,
                depth: proj.depth,
                cov2d,
                alpha: splat.alpha(),
            }))
        })
        .collect();

    let mut out = GateOutput::default();
    for outcome in outcomes {
        match outcome? {
            Outcome::Gated(p) => out.gated.push(p),
            Outcome::Behind => out.behind_camera += 1,
            Outcome::OutOfBounds => out.out_of_bounds += 1,
            Outcome::OutsideMask => out.outside_mask += 1,
        }
    }
    Ok(out)
}

/// Traverses the gated splats in ascending depth (ties by splat index),
/// accepting a splat iff the buffer value at its center cell is below beta,
/// the running mean opacity of the splats already accepted. Accepted
/// footprints are splatted into the buffer. Returns accepted splat indices
/// in traversal (depth) order together with the final buffer.
pub fn zbuffer_select(
    gated: &[ProjectedSplat],
    mask: &Mask2D,
    config: &UpliftConfig,
) -> Result<(Vec<usize>, DepthBuffer), UpliftError> {
    let Some(bbox) = mask.bounding_box() else {
        return Ok((Vec::new(), DepthBuffer::new((0, 0), 0, 0)));
    };

    // Buffer: mask bounding box plus the largest footprint radius, clipped
    // to the image.
    let margin = gated
        .iter()
        .map(|s| footprint_radius(&s.cov2d, config.footprint_sigma))
        .fold(0.0, f64::max)
        .ceil() as i64;
    let x0 = (bbox.min_x as i64 - margin).max(0);
    let y0 = (bbox.min_y as i64 - margin).max(0);
    let x1 = (bbox.max_x as i64 + margin).min(mask.width() as i64 - 1);
    let y1 = (bbox.max_y as i64 + margin).min(mask.height() as i64 - 1);
    let mut buffer = DepthBuffer::new(
        (x0, y0),
        (x1 - x0 + 1) as usize,
        (y1 - y0 + 1) as usize,
    );

    let mut order: Vec<usize> = (0..gated.len()).collect();
    order.sort_by(|&a, &b| {
        gated[a]
            .depth
            .total_cmp(&gated[b].depth)
            .then(gated[a].splat_index.cmp(&gated[b].splat_index))
    });

    let mut accepted = Vec::new();
    for idx in order {
        let s = &gated[idx];
        let value = buffer.value_at(s.pixel.x.floor() as i64, s.pixel.y.floor() as i64);
        if value < buffer.beta() {
            buffer.splat(s, config.footprint_sigma)?;
            accepted.push(s.splat_index);
        }
    }
    Ok((accepted, buffer))
}

/// Population mean and standard deviation.
fn mean_std(values: impl Iterator<Item = f64> + Clone) -> Option<(f64, f64)> {
    let n = values.clone().count();
    if n == 0 {
        return None;
    }
    let mean = values.clone().sum::<f64>() / n as f64;
    let var = values.map(|v| (v - mean).powi(2)).sum::<f64>() / n as f64;
    Some((mean, var.sqrt()))
}

fn lookup(gated: &[ProjectedSplat], splat_index: usize) -> &ProjectedSplat {
    // Gated output preserves ascending scene order.
    let pos = gated
        .binary_search_by(|p| p.splat_index.cmp(&splat_index))
        .expect("selected index comes from the gated list");
    &gated[pos]
}

/// Both stages of the statistical filter, kept separate so stage counts can
/// be reported.
#[derive(Debug, Clone)]
pub struct FilterStages {
    pub after_depth: Vec<usize>,
    pub after_opacity: Vec<usize>,
}

/// Two sequential passes: retain splats within `sigma_k` standard deviations
/// of the mean depth (statistics over the input set), then of the mean
/// opacity (statistics over the depth survivors). Input order is preserved.
pub fn statistical_filter_stages(
    gated: &[ProjectedSplat],
    selected: &[usize],
    sigma_k: f64,
) -> FilterStages {
    let depth_window = mean_std(selected.iter().map(|&i| lookup(gated, i).depth));
    let after_depth: Vec<usize> = match depth_window {
        Some((mean, std)) => selected
            .iter()
            .copied()
            .filter(|&i| (lookup(gated, i).depth - mean).abs() <= sigma_k * std)
            .collect(),
        None => Vec::new(),
    };

    let alpha_window = mean_std(after_depth.iter().map(|&i| lookup(gated, i).alpha));
    let after_opacity: Vec<usize> = match alpha_window {
        Some((mean, std)) => after_depth
            .iter()
            .copied()
            .filter(|&i| (lookup(gated, i).alpha - mean).abs() <= sigma_k * std)
            .collect(),
        None => Vec::new(),
    };

    FilterStages {
        after_depth,
        after_opacity,
    }
}

/// Depth pass then opacity pass; see [`statistical_filter_stages`].
pub fn statistical_filter(
    gated: &[ProjectedSplat],
    selected: &[usize],
    sigma_k: f64,
) -> Vec<usize> {
    statistical_filter_stages(gated, selected, sigma_k).after_opacity
}

/// Re-admits every gated splat within `sigma_k` standard deviations of the
/// filtered set's mean depth (depth only by default; `opacity_window` adds
/// the same condition on opacity). Returns the union with `filtered`,
/// sorted ascending.
pub fn depth_fill(
    gated: &[ProjectedSplat],
    filtered: &[usize],
    sigma_k: f64,
    opacity_window: bool,
) -> Vec<usize> {
    let Some((depth_mean, depth_std)) =
        mean_std(filtered.iter().map(|&i| lookup(gated, i).depth))
    else {
        return Vec::new();
    };
    let alpha_window = if opacity_window {
        mean_std(filtered.iter().map(|&i| lookup(gated, i).alpha))
    } else {
        None
    };

    let mut result: Vec<usize> = filtered.to_vec();
    for p in gated {
        if (p.depth - depth_mean).abs() > sigma_k * depth_std {
            continue;
        }
        if let Some((mean, std)) = alpha_window {
            if (p.alpha - mean).abs() > sigma_k * std {
                continue;
            }
        }
        result.push(p.splat_index);
    }
    result.sort_unstable();
    result.dedup();
    result
}

/// Gaussians surviving each pipeline stage.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageCounts {
    pub in_mask: usize,
    pub zbuffer: usize,
    pub depth_filter: usize,
    pub opacity_filter: usize,
    pub fill: usize,
}

/// Depth/opacity statistics of the post-filter set plus cull counters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectionStats {
    pub depth_mean: Option<f64>,
    pub depth_std: Option<f64>,
    pub opacity_mean: Option<f64>,
    pub opacity_std: Option<f64>,
    pub scene_splats: usize,
    pub behind_camera: usize,
    pub out_of_bounds: usize,
}

/// Wall-clock milliseconds per pipeline stage.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
pub struct StageTimings {
    pub gate_ms: f64,
    pub zbuffer_ms: f64,
    pub filter_ms: f64,
    pub fill_ms: f64,
    pub total_ms: f64,
}

/// The up-lift output: the selected subset (ascending scene indices) with
/// per-stage counts, statistics, and timings.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SegmentationResult {
    pub view: String,
    pub selected: Vec<usize>,
    pub stages: StageCounts,
    pub stats: SelectionStats,
    pub timings_ms: StageTimings,
    pub config: UpliftConfig,
}

impl SegmentationResult {
    /// An empty selection is a reported status, not a fault.
    pub fn is_empty(&self) -> bool {
        self.selected.is_empty()
    }
}

/// Full pipeline: gate, Z-buffer select, statistical filter, fill.
/// Deterministic for fixed inputs and config, regardless of worker count.
pub fn uplift_mask(
    scene: &SplatScene,
    view: &CameraView,
    mask: &Mask2D,
    config: &UpliftConfig,
) -> Result<SegmentationResult, UpliftError> {
    let start = Instant::now();
    let gate = project_and_gate(scene, view, mask, config)?;
    let gate_ms = elapsed_ms(start);

    let t = Instant::now();
    let (accepted, _buffer) = zbuffer_select(&gate.gated, mask, config)?;
    let zbuffer_ms = elapsed_ms(t);

    let t = Instant::now();
    let filter = statistical_filter_stages(&gate.gated, &accepted, config.sigma_k);
    let filter_ms = elapsed_ms(t);

    let t = Instant::now();
    let mut selected = if config.fill {
        depth_fill(
            &gate.gated,
            &filter.after_opacity,
            config.sigma_k,
            config.fill_opacity_window,
        )
    } else {
        filter.after_opacity.clone()
    };
    let fill_ms = elapsed_ms(t);
    selected.sort_unstable();

    let depth_stats = mean_std(
        filter
            .after_opacity
            .iter()
            .map(|&i| lookup(&gate.gated, i).depth),
    );
    let alpha_stats = mean_std(
        filter
            .after_opacity
            .iter()
            .map(|&i| lookup(&gate.gated, i).alpha),
    );

    Ok(SegmentationResult {
        view: view.image_name.clone(),
        stages: StageCounts {
            in_mask: gate.gated.len(),
            zbuffer: accepted.len(),
            depth_filter: filter.after_depth.len(),
            opacity_filter: filter.after_opacity.len(),
            fill: selected.len(),
        },
        stats: SelectionStats {
            depth_mean: depth_stats.map(|(m, _)| m),
            depth_std: depth_stats.map(|(_, s)| s),
            opacity_mean: alpha_stats.map(|(m, _)| m),
            opacity_std: alpha_stats.map(|(_, s)| s),
            scene_splats: scene.len(),
            behind_camera: gate.behind_camera,
            out_of_bounds: gate.out_of_bounds,
        },
        timings_ms: StageTimings {
            gate_ms,
            zbuffer_ms,
            filter_ms,
            fill_ms,
            total_ms: elapsed_ms(start),
        },
        selected,
        config: *config,
    })
}

fn elapsed_ms(start: Instant) -> f64 {
    start.elapsed().as_secs_f64() * 1e3
}
