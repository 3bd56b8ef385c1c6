//! Synthetic scene generation with exact per-splat group labels.
//!
//! Scenes are built around a camera ring looking at the origin. The
//! cluster-wall preset puts a compact foreground blob in front of a distant
//! wall, with the depth gap far exceeding the blob's own depth spread, so
//! depth filtering is decisive by construction. The floaters preset adds
//! low-opacity near-camera Gaussians in front of the blob. Generation uses
//! ChaCha8 with the [`SynthSpec`] seed, single-threaded, so a seed fully
//! determines the output bytes.

use std::fs;
use std::io;
use std::path::Path;

use nalgebra::{Quaternion, UnitQuaternion, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::camera_io::{self, CameraView, ColmapError};
use crate::geometry::{logit, CameraExtrinsics, CameraIntrinsics, GaussianSplat, GeometryError};
use crate::mask_io::{self, Mask2D, MaskError};
use crate::rasterizer::{self, RasterError, RenderOptions};
use crate::scene_io::{self, PlyError, SplatScene};

#[derive(Debug, thiserror::Error)]
pub enum SynthError {
    #[error("invalid synth spec: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Ply(#[from] PlyError),
    #[error(transparent)]
    Colmap(#[from] ColmapError),
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error("i/o failure: {0}")]
    Io(#[from] io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    ClusterWall,
    TwoObjects,
    Floaters,
}

/// Parameters of a synthetic scene. Construct via [`SynthSpec::new`] for
/// per-preset defaults, then override fields as needed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SynthSpec {
    pub preset: Preset,
    pub seed: u64,
    pub foreground_count: usize,
    pub background_count: usize,
    pub floater_count: usize,
    pub camera_count: usize,
    /// Ring radius; the scene sits at the origin.
    pub camera_radius: f64,
    pub image_width: u32,
    pub image_height: u32,
    pub focal: f64,
}

impl SynthSpec {
    pub fn new(preset: Preset, seed: u64) -> Self {
        let floater_count = match preset {
            Preset::Floaters => 25,
            _ => 0,
        };
        Self {
            preset,
            seed,
            foreground_count: 500,
            background_count: 4500,
            floater_count,
            camera_count: 8,
            camera_radius: 5.0,
            image_width: 640,
            image_height: 480,
            focal: 600.0,
        }
    }

    fn validate(&self) -> Result<(), SynthError> {
        if self.camera_count < 1 {
            return Err(SynthError::InvalidSpec("camera_count must be >= 1".into()));
        }
        if self.camera_radius <= 0.0 || self.focal <= 0.0 {
            return Err(SynthError::InvalidSpec(
                "camera_radius and focal must be positive".into(),
            ));
        }
        if self.image_width == 0 || self.image_height == 0 {
            return Err(SynthError::InvalidSpec("image size must be positive".into()));
        }
        if self.foreground_count == 0 {
            return Err(SynthError::InvalidSpec(
                "foreground_count must be positive".into(),
            ));
        }
        Ok(())
    }
}

pub const GROUP_FOREGROUND: &str = "foreground";
pub const GROUP_BACKGROUND: &str = "background";
pub const GROUP_FLOATER: &str = "floater";
pub const GROUP_OBJECT_A: &str = "object_a";
pub const GROUP_OBJECT_B: &str = "object_b";

/// A generated scene, its camera ring, and one group label per splat
/// (aligned with scene indices).
#[derive(Debug, Clone)]
pub struct SynthOutput {
    pub scene: SplatScene,
    pub views: Vec<CameraView>,
    pub labels: Vec<String>,
}

impl SynthOutput {
    /// Name of the camera facing the scene head-on.
    pub fn front_view_name(&self) -> &str {
        &self.views[0].image_name
    }

    pub fn indices_of(&self, group: &str) -> Vec<usize> {
        self.labels
            .iter()
            .enumerate()
            .filter(|(_, l)| l.as_str() == group)
            .map(|(i, _)| i)
            .collect()
    }
}

fn ring_views(spec: &SynthSpec) -> Result<Vec<CameraView>, SynthError> {
    let up = Vector3::new(0.0, 1.0, 0.0);
    let mut views = Vec::with_capacity(spec.camera_count);
    for i in 0..spec.camera_count {
        let theta = std::f64::consts::TAU * i as f64 / spec.camera_count as f64;
        let center = Vector3::new(
            spec.camera_radius * theta.sin(),
            0.0,
            -spec.camera_radius * theta.cos(),
        );
        let forward = (-center).normalize();
        let right = up.cross(&forward).normalize();
        let down = forward.cross(&right);
        let rotation = nalgebra::Matrix3::from_rows(&[
            right.transpose(),
            down.transpose(),
            forward.transpose(),
        ]);
        views.push(CameraView {
            image_name: format!("cam{i:02}.png"),
            intrinsics: CameraIntrinsics::with_center(
                spec.focal,
                spec.focal,
                spec.image_width,
                spec.image_height,
            )?,
            extrinsics: CameraExtrinsics::from_camera_center(rotation, center)?,
        });
    }
    Ok(views)
}

fn random_rotation(rng: &mut ChaCha8Rng) -> [f64; 4] {
    loop {
        let q = Quaternion::new(
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
            rng.random_range(-1.0..1.0),
        );
        if q.norm() > 1e-3 {
            let u = UnitQuaternion::from_quaternion(q);
            let q = u.quaternion();
            return [q.w, q.i, q.j, q.k];
        }
    }
}

struct GroupParams {
    /// Cluster center in world coordinates.
    center: Vector3<f64>,
    /// Lateral (x, y) disc radius; points are uniform over the disc.
    lateral_radius: f64,
    /// Depth half-extent; z is uniform in [-d, d] around the center.
    depth_half: f64,
    /// Base world-space scale of one splat; log-jittered per axis.
    sigma_world: f64,
    alpha_range: (f64, f64),
    color: [f64; 3],
}

fn draw_group(
    rng: &mut ChaCha8Rng,
    params: &GroupParams,
    count: usize,
    splats: &mut Vec<GaussianSplat>,
    labels: &mut Vec<String>,
    label: &str,
) -> Result<(), SynthError> {
    for _ in 0..count {
        let r = params.lateral_radius * rng.random_range(0.0..1.0f64).sqrt();
        let t = rng.random_range(0.0..std::f64::consts::TAU);
        let z = rng.random_range(-params.depth_half..=params.depth_half);
        let position = params.center + Vector3::new(r * t.cos(), r * t.sin(), z);
        let log_base = params.sigma_world.ln();
        let log_scale = Vector3::new(
            log_base + rng.random_range(-0.15..0.15),
            log_base + rng.random_range(-0.15..0.15),
            log_base + rng.random_range(-0.15..0.15),
        );
        let alpha = rng.random_range(params.alpha_range.0..params.alpha_range.1);
        let color = Vector3::new(
            (params.color[0] + rng.random_range(-0.08..0.08)).clamp(0.0, 1.0),
            (params.color[1] + rng.random_range(-0.08..0.08)).clamp(0.0, 1.0),
            (params.color[2] + rng.random_range(-0.08..0.08)).clamp(0.0, 1.0),
        );
        splats.push(GaussianSplat::new(
            position,
            log_scale,
            random_rotation(rng),
            logit(alpha),
            color,
        )?);
        labels.push(label.to_string());
    }
    Ok(())
}

/// Generates the scene, camera ring, and per-splat labels for a spec.
pub fn generate(spec: &SynthSpec) -> Result<SynthOutput, SynthError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let views = ring_views(spec)?;
    let mut splats = Vec::new();
    let mut labels = Vec::new();

    let foreground = GroupParams {
        center: Vector3::zeros(),
        lateral_radius: 0.42,
        depth_half: 0.15,
        sigma_world: 0.019,
        alpha_range: (0.85, 0.98),
        color: [0.85, 0.30, 0.20],
    };
    let wall = GroupParams {
        center: Vector3::new(0.0, 0.0, 2.0),
        lateral_radius: 2.5,
        depth_half: 0.05,
        sigma_world: 0.030,
        alpha_range: (0.75, 0.95),
        color: [0.25, 0.35, 0.70],
    };

    match spec.preset {
        Preset::ClusterWall => {
            draw_group(
                &mut rng,
                &foreground,
                spec.foreground_count,
                &mut splats,
                &mut labels,
                GROUP_FOREGROUND,
            )?;
            draw_group(
                &mut rng,
                &wall,
                spec.background_count,
                &mut splats,
                &mut labels,
                GROUP_BACKGROUND,
            )?;
        }
        Preset::Floaters => {
            // Thinner, sparser blob than cluster-wall: less self-occlusion
            // keeps the depth-sorted acceptance representative, which is
            // what the foreground-retention guarantee rests on.
            let foreground = GroupParams {
                lateral_radius: 0.35,
                sigma_world: 0.013,
                alpha_range: (0.75, 0.95),
                ..foreground
            };
            draw_group(
                &mut rng,
                &foreground,
                spec.foreground_count,
                &mut splats,
                &mut labels,
                GROUP_FOREGROUND,
            )?;
            // Noise between the camera and the object: in front of the blob
            // (outside its depth band, so the fill window cannot re-admit
            // them), low opacity, small footprints. Sparse relative to the
            // blob so the opacity statistics stay foreground-dominated.
            let floaters = GroupParams {
                center: Vector3::new(0.0, 0.0, -0.42),
                lateral_radius: 0.28,
                depth_half: 0.12,
                sigma_world: 0.010,
                alpha_range: (0.01, 0.08),
                color: [0.6, 0.6, 0.6],
            };
            draw_group(
                &mut rng,
                &floaters,
                spec.floater_count,
                &mut splats,
                &mut labels,
                GROUP_FLOATER,
            )?;
            draw_group(
                &mut rng,
                &wall,
                spec.background_count,
                &mut splats,
                &mut labels,
                GROUP_BACKGROUND,
            )?;
        }
        Preset::TwoObjects => {
            let a = GroupParams {
                center: Vector3::new(-0.8, 0.0, 0.0),
                lateral_radius: 0.30,
                depth_half: 0.12,
                sigma_world: 0.018,
                alpha_range: (0.75, 0.95),
                color: [0.85, 0.30, 0.20],
            };
            let b = GroupParams {
                center: Vector3::new(0.8, 0.25, 0.15),
                lateral_radius: 0.30,
                depth_half: 0.12,
                sigma_world: 0.018,
                alpha_range: (0.75, 0.95),
                color: [0.20, 0.75, 0.30],
            };
            let half = spec.foreground_count / 2;
            draw_group(&mut rng, &a, half, &mut splats, &mut labels, GROUP_OBJECT_A)?;
            draw_group(
                &mut rng,
                &b,
                spec.foreground_count - half,
                &mut splats,
                &mut labels,
                GROUP_OBJECT_B,
            )?;
            draw_group(
                &mut rng,
                &wall,
                spec.background_count,
                &mut splats,
                &mut labels,
                GROUP_BACKGROUND,
            )?;
        }
    }

    Ok(SynthOutput {
        scene: SplatScene::from_splats(&splats),
        views,
        labels,
    })
}

/// Ground-truth mask for one labeled group in one view: the group rendered
/// alone, thresholded at accumulated opacity 0.5.
pub fn reference_mask(
    scene: &SplatScene,
    view: &CameraView,
    group: &str,
    labels: &[String],
) -> Result<Mask2D, SynthError> {
    let members: Vec<GaussianSplat> = labels
        .iter()
        .enumerate()
        .filter(|(_, l)| l.as_str() == group)
        .map(|(i, _)| scene.splat(i))
        .collect();
    let sub_scene = SplatScene::from_splats(&members);
    let target = rasterizer::render(&sub_scene, view, &RenderOptions::default())?;
    Ok(target.alpha_mask(0.5))
}

/// Document describing a materialized synthetic scene.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct LabelsDocument {
    /// Group label per splat, aligned with scene order.
    pub labels: Vec<String>,
    pub front_view: String,
}

/// Writes scene, cameras, reference masks, and labels under `dir`, using
/// only the public file formats, so a consumer exercises the same surfaces
/// as real data.
pub fn materialize(spec: &SynthSpec, dir: &Path) -> Result<SynthOutput, SynthError> {
    let out = generate(spec)?;
    fs::create_dir_all(dir)?;
    scene_io::write_splat_ply(&out.scene, &dir.join("scene.ply"), None, None)?;
    camera_io::write_colmap_text(&out.views, dir)?;

    let masks_dir = dir.join("masks");
    fs::create_dir_all(&masks_dir)?;
    let mut groups: Vec<&String> = out.labels.iter().collect();
    groups.sort();
    groups.dedup();
    for group in groups {
        if group == GROUP_BACKGROUND {
            continue;
        }
        for view in &out.views {
            let mask = reference_mask(&out.scene, view, group, &out.labels)?;
            let stem = view.image_name.trim_end_matches(".png");
            mask_io::save_mask(&mask, &masks_dir.join(format!("{stem}_{group}.png")))?;
        }
    }

    let doc = LabelsDocument {
        labels: out.labels.clone(),
        front_view: out.front_view_name().to_string(),
    };
    fs::write(
        dir.join("labels.json"),
        serde_json::to_vec_pretty(&doc).expect("labels serialize"),
    )?;
    fs::write(
        dir.join("spec.json"),
        serde_json::to_vec_pretty(spec).expect("spec serialize"),
    )?;
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{camera_to_pixel, world_to_camera, DEFAULT_EPSILON_Z};
    use crate::rasterizer::backproject_mask;
    use crate::rasterizer::ProjectionParams;

    fn small_spec(preset: Preset) -> SynthSpec {
        SynthSpec {
            foreground_count: 200,
            background_count: 800,
            ..SynthSpec::new(preset, 7)
        }
    }

    #[test]
    fn generation_is_deterministic() {
        let spec = small_spec(Preset::ClusterWall);
        let a = generate(&spec).unwrap();
        let b = generate(&spec).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.scene.len(), b.scene.len());
        for i in 0..a.scene.len() {
            assert_eq!(a.scene.raw(i), b.scene.raw(i));
        }
        for (va, vb) in a.views.iter().zip(&b.views) {
            assert_eq!(va, vb);
        }
    }

    #[test]
    fn group_counts_match_spec() {
        let spec = small_spec(Preset::ClusterWall);
        let out = generate(&spec).unwrap();
        assert_eq!(out.indices_of(GROUP_FOREGROUND).len(), 200);
        assert_eq!(out.indices_of(GROUP_BACKGROUND).len(), 800);
        assert_eq!(out.scene.len(), 1000);

        let spec = small_spec(Preset::Floaters);
        let out = generate(&spec).unwrap();
        assert_eq!(out.indices_of(GROUP_FLOATER).len(), spec.floater_count);
    }

    #[test]
    fn foreground_projects_inside_front_reference_mask() {
        let spec = small_spec(Preset::ClusterWall);
        let out = generate(&spec).unwrap();
        let front = &out.views[0];
        let mask = reference_mask(&out.scene, front, GROUP_FOREGROUND, &out.labels).unwrap();
        for i in out.indices_of(GROUP_FOREGROUND) {
            let splat = out.scene.splat(i);
            let cam = world_to_camera(&splat.position, &front.extrinsics);
            let proj = camera_to_pixel(&cam, &front.intrinsics, DEFAULT_EPSILON_Z).unwrap();
            let (x, y) = (proj.pixel.x.floor() as u32, proj.pixel.y.floor() as u32);
            assert!(mask.get(x, y), "foreground splat {i} at ({x}, {y}) not covered");
        }
    }

    #[test]
    fn depth_gap_dominates_within_group_spread() {
        let spec = small_spec(Preset::ClusterWall);
        let out = generate(&spec).unwrap();
        let front = &out.views[0];
        let depth = |i: usize| {
            world_to_camera(&out.scene.splat(i).position, &front.extrinsics).z
        };
        let fg: Vec<f64> = out.indices_of(GROUP_FOREGROUND).iter().map(|&i| depth(i)).collect();
        let bg: Vec<f64> = out.indices_of(GROUP_BACKGROUND).iter().map(|&i| depth(i)).collect();
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let std = |v: &[f64], m: f64| {
            (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt()
        };
        let fg_mean = mean(&fg);
        let fg_std = std(&fg, fg_mean);
        let gap = mean(&bg) - fg_mean;
        assert!(
            gap > 4.0 * fg_std,
            "gap {gap} must exceed 4x foreground depth std {fg_std}"
        );
    }

    #[test]
    fn empty_group_has_empty_mask() {
        let spec = small_spec(Preset::ClusterWall);
        let out = generate(&spec).unwrap();
        let mask =
            reference_mask(&out.scene, &out.views[0], "no-such-group", &out.labels).unwrap();
        assert!(mask.is_empty());
    }

    #[test]
    fn reference_mask_area_matches_footprint_union() {
        // Full preset density: the cluster must be opaque for the area
        // comparison to be meaningful.
        let spec = SynthSpec::new(Preset::ClusterWall, 7);
        let out = generate(&spec).unwrap();
        let front = &out.views[0];
        let mask = reference_mask(&out.scene, front, GROUP_FOREGROUND, &out.labels).unwrap();
        let union = backproject_mask(
            &out.scene,
            front,
            &out.indices_of(GROUP_FOREGROUND),
            2.0,
            &ProjectionParams::default(),
        )
        .unwrap();
        let mask_area = mask.count_set() as f64;
        let union_area = union.count_set() as f64;
        assert!(
            (mask_area - union_area).abs() <= 0.2 * union_area,
            "mask area {mask_area} vs 2-sigma union {union_area}"
        );
    }

    #[test]
    fn group_union_mask_is_monotone() {
        let spec = small_spec(Preset::TwoObjects);
        let out = generate(&spec).unwrap();
        let front = &out.views[0];
        let single = reference_mask(&out.scene, front, GROUP_OBJECT_A, &out.labels).unwrap();
        // All groups: relabel everything to one group and render.
        let all_labels: Vec<String> = vec!["all".to_string(); out.labels.len()];
        let all = reference_mask(&out.scene, front, "all", &all_labels).unwrap();
        assert_eq!(single.difference_count(&all), 0);
    }

    #[test]
    fn materialized_scene_round_trips_through_public_formats() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SynthSpec {
            foreground_count: 50,
            background_count: 100,
            camera_count: 3,
            ..SynthSpec::new(Preset::ClusterWall, 11)
        };
        let out = materialize(&spec, dir.path()).unwrap();

        let scene = scene_io::load_splat_ply(&dir.path().join("scene.ply")).unwrap();
        assert_eq!(scene.len(), out.scene.len());
        for i in 0..scene.len() {
            assert_eq!(scene.raw(i), out.scene.raw(i));
        }

        let views = camera_io::load_colmap_bundle(dir.path()).unwrap();
        assert_eq!(views.len(), 3);
        for (a, b) in views.iter().zip(&out.views) {
            assert_eq!(a.image_name, b.image_name);
            approx::assert_relative_eq!(
                a.extrinsics.rotation,
                b.extrinsics.rotation,
                epsilon = 1e-12
            );
        }

        let labels: LabelsDocument =
            serde_json::from_slice(&fs::read(dir.path().join("labels.json")).unwrap()).unwrap();
        assert_eq!(labels.labels, out.labels);
        assert!(dir.path().join("masks/cam00_foreground.png").is_file());
    }
}
