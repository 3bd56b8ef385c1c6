//! Shared fixtures for the pipeline benchmarks.

use splatlift_core::camera_io::CameraView;
use splatlift_core::mask_io::Mask2D;
use splatlift_core::scene_io::SplatScene;
use splatlift_core::synth::{self, Preset, SynthSpec};

/// A generated cluster-wall scene with its front view and foreground mask.
pub struct Fixture {
    pub scene: SplatScene,
    pub front: CameraView,
    pub mask: Mask2D,
}

/// Deterministic scene of roughly `total` Gaussians.
pub fn fixture(total: usize) -> Fixture {
    let foreground = 500.min(total / 2);
    let spec = SynthSpec {
        foreground_count: foreground,
        background_count: total - foreground,
        camera_count: 1,
        ..SynthSpec::new(Preset::ClusterWall, 1234)
    };
    let out = synth::generate(&spec).expect("fixture generates");
    let front = out.views[0].clone();
    let mask = synth::reference_mask(&out.scene, &front, synth::GROUP_FOREGROUND, &out.labels)
        .expect("reference mask renders");
    Fixture {
        scene: out.scene,
        front,
        mask,
    }
}
