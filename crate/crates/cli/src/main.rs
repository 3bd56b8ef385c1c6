//! Command-line front end for the mask up-lifting pipeline.
//!
//! Subcommands: `uplift`, `render`, `backproject`, `evaluate`, `synth`,
//! `info`. Exit codes: 0 success, 1 error (with a single machine-readable
//! `error[<kind>]: ...` line on stderr), 2 empty selection when
//! `--fail-on-empty` is set.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{FileConfig, RunConfig};
use splatlift_core::evaluate::HullKind;

#[derive(Debug)]
pub struct CliError {
    pub kind: &'static str,
    pub message: String,
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "error[{}]: {}", self.kind, self.message)
    }
}

macro_rules! error_kind {
    ($ty:ty, $($variant:pat => $kind:expr),+ $(,)?) => {
        impl From<$ty> for CliError {
            fn from(e: $ty) -> Self {
                let kind = match &e {
                    $($variant => $kind),+
                };
                CliError { kind, message: e.to_string() }
            }
        }
    };
}

use splatlift_core::camera_io::ColmapError;
use splatlift_core::evaluate::EvalError;
use splatlift_core::geometry::GeometryError;
use splatlift_core::mask_io::MaskError;
use splatlift_core::rasterizer::RasterError;
use splatlift_core::scene_io::PlyError;
use splatlift_core::synth::SynthError;
use splatlift_core::uplift::UpliftError;

error_kind!(PlyError,
    PlyError::MalformedHeader(_) => "ply-malformed-header",
    PlyError::TruncatedBody { .. } => "ply-truncated-body",
    PlyError::UnsupportedEncoding(_) => "ply-unsupported-encoding",
    PlyError::InvalidVertex { .. } => "ply-invalid-vertex",
    PlyError::SelectionOutOfRange { .. } => "selection-out-of-range",
    PlyError::IoFailure(_) => "io",
);
error_kind!(ColmapError,
    ColmapError::MissingFile(_) => "missing-file",
    ColmapError::UnsupportedCameraModel { .. } => "unsupported-camera-model",
    ColmapError::MalformedRecord { .. } => "malformed-record",
    ColmapError::ViewNotFound { .. } => "view-not-found",
    ColmapError::AmbiguousName { .. } => "view-ambiguous",
    ColmapError::Geometry(_) => "geometry",
    ColmapError::Io(_) => "io",
);
error_kind!(MaskError,
    MaskError::Io { .. } => "io",
    MaskError::DegeneratePolygon(_) => "degenerate-polygon",
    MaskError::Geometry(_) => "geometry",
);
error_kind!(UpliftError,
    UpliftError::MaskSizeMismatch { .. } => "mask-size-mismatch",
    UpliftError::Geometry(_) => "geometry",
);
error_kind!(RasterError,
    RasterError::Geometry(_) => "geometry",
    RasterError::ImageWrite { .. } => "io",
    RasterError::Io(_) => "io",
);
error_kind!(EvalError,
    EvalError::DegenerateInput(_) => "degenerate-hull-input",
    EvalError::DimensionMismatch { .. } => "dimension-mismatch",
    EvalError::Raster(_) => "geometry",
    EvalError::Mask(_) => "io",
);
error_kind!(SynthError,
    SynthError::InvalidSpec(_) => "invalid-spec",
    SynthError::Geometry(_) => "geometry",
    SynthError::Ply(_) => "io",
    SynthError::Colmap(_) => "io",
    SynthError::Mask(_) => "io",
    SynthError::Raster(_) => "geometry",
    SynthError::Io(_) => "io",
);
error_kind!(GeometryError,
    GeometryError::DegenerateDepth { .. } => "geometry",
    GeometryError::SingularCovariance { .. } => "geometry",
    GeometryError::InvalidIntrinsics(_) => "geometry",
    GeometryError::InvalidExtrinsics(_) => "geometry",
    GeometryError::InvalidSplat(_) => "geometry",
);

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError {
            kind: "io",
            message: e.to_string(),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "splatlift",
    about = "Lift single-view 2D segmentation masks into 3D Gaussian Splatting scenes",
    version
)]
struct Cli {
    /// Worker count for data-parallel stages (0 = all cores); results are
    /// identical for any value.
    #[arg(long, global = true, env = "SPLATLIFT_WORKERS")]
    workers: Option<usize>,

    /// JSON config file; command-line flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Emit a machine-readable JSON document on stdout.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

/// Tunables shared by the pipeline commands; unset flags fall back to the
/// config file, then to built-in defaults.
#[derive(Args, Debug, Default)]
struct Tunables {
    /// Statistical filter window width in standard deviations.
    #[arg(long)]
    sigma_k: Option<f64>,
    /// Footprint radius in standard deviations of the projected Gaussian.
    #[arg(long)]
    footprint_sigma: Option<f64>,
    /// Diagonal regularizer for projected covariances (pixels squared).
    #[arg(long)]
    epsilon_cov: Option<f64>,
    /// Depth below which a Gaussian counts as behind the camera.
    #[arg(long)]
    epsilon_z: Option<f64>,
    /// Mahalanobis radius of back-projected footprints.
    #[arg(long)]
    backproject_sigma: Option<f64>,
    /// Accumulated-opacity saturation at which compositing stops.
    #[arg(long)]
    saturation: Option<f64>,
}

impl Tunables {
    fn as_file_config(&self) -> FileConfig {
        FileConfig {
            sigma_k: self.sigma_k,
            footprint_sigma: self.footprint_sigma,
            epsilon_cov: self.epsilon_cov,
            epsilon_z: self.epsilon_z,
            backproject_sigma: self.backproject_sigma,
            saturation: self.saturation,
            ..Default::default()
        }
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Lift a 2D mask to the matching subset of 3D Gaussians.
    Uplift {
        /// Splat scene (PLY).
        #[arg(long)]
        splat: PathBuf,
        /// Directory with the reconstruction's cameras/images files.
        #[arg(long)]
        cameras: PathBuf,
        /// Image name of the view the mask belongs to.
        #[arg(long)]
        view: String,
        /// Binary mask image aligned with the view.
        #[arg(long)]
        mask: PathBuf,
        /// Where to write the selection document.
        #[arg(long, default_value = "indices.json")]
        out_indices: PathBuf,
        /// Where to write the selected sub-scene (PLY).
        #[arg(long, default_value = "selected.ply")]
        out_ply: PathBuf,
        /// Also write the full scene with the selection recolored.
        #[arg(long)]
        highlight_ply: Option<PathBuf>,
        /// Highlight color as R,G,B in [0,1].
        #[arg(long, value_parser = parse_rgb, default_value = "1,0,0")]
        highlight_color: Rgb,
        /// Skip the depth-window fill pass.
        #[arg(long)]
        no_fill: bool,
        /// Make the fill pass respect the opacity window too.
        #[arg(long)]
        fill_opacity_window: bool,
        /// Exit with status 2 when the selection comes out empty.
        #[arg(long)]
        fail_on_empty: bool,
        #[command(flatten)]
        tunables: Tunables,
    },
    /// Render the scene, optionally highlighting a selection.
    Render {
        #[arg(long)]
        splat: PathBuf,
        #[arg(long)]
        cameras: PathBuf,
        #[arg(long)]
        view: String,
        /// Output image (PNG).
        #[arg(long)]
        out: PathBuf,
        /// Selection document whose splats get highlighted.
        #[arg(long)]
        indices: Option<PathBuf>,
        #[arg(long, value_parser = parse_rgb)]
        highlight_color: Option<Rgb>,
        #[command(flatten)]
        tunables: Tunables,
    },
    /// Back-project a selection into a binary mask.
    Backproject {
        #[arg(long)]
        splat: PathBuf,
        #[arg(long)]
        cameras: PathBuf,
        #[arg(long)]
        view: String,
        /// Selection document to back-project.
        #[arg(long)]
        indices: PathBuf,
        /// Output mask image (PNG).
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        tunables: Tunables,
    },
    /// Score a selection against ground-truth masks.
    Evaluate {
        #[arg(long)]
        splat: PathBuf,
        #[arg(long)]
        cameras: PathBuf,
        /// View name; repeat for the multi-view protocol.
        #[arg(long, required = true)]
        view: Vec<String>,
        /// Ground-truth mask per view, in the same order.
        #[arg(long, required = true)]
        gt: Vec<PathBuf>,
        #[arg(long)]
        indices: PathBuf,
        /// Hull over the back-projected shapes: none, convex, or concave.
        #[arg(long, value_parser = parse_hull)]
        hull: Option<HullKind>,
        /// Neighborhood size for the concave hull.
        #[arg(long)]
        hull_k: Option<usize>,
        /// Where to write the metrics report document.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Append one CSV row per view to this file.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[command(flatten)]
        tunables: Tunables,
    },
    /// Generate a labeled synthetic scene.
    Synth {
        /// Preset: cluster-wall, two-objects, or floaters.
        #[arg(long)]
        preset: String,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        foreground: Option<usize>,
        #[arg(long)]
        background: Option<usize>,
        #[arg(long)]
        floaters: Option<usize>,
        #[arg(long)]
        cameras: Option<usize>,
        #[arg(long)]
        radius: Option<f64>,
        #[arg(long)]
        width: Option<u32>,
        #[arg(long)]
        height: Option<u32>,
        #[arg(long)]
        focal: Option<f64>,
    },
    /// Summarize a scene and/or camera bundle.
    Info {
        #[arg(long)]
        splat: Option<PathBuf>,
        #[arg(long)]
        cameras: Option<PathBuf>,
    },
}

pub type Rgb = [f64; 3];

fn parse_rgb(s: &str) -> Result<Rgb, String> {
    let parts: Vec<&str> = s.split(',').collect();
    if parts.len() != 3 {
        return Err(format!("expected R,G,B, got {s:?}"));
    }
    let mut rgb = [0.0; 3];
    for (slot, part) in rgb.iter_mut().zip(&parts) {
        *slot = part
            .trim()
            .parse::<f64>()
            .map_err(|e| format!("bad channel {part:?}: {e}"))?;
        if !(0.0..=1.0).contains(slot) {
            return Err(format!("channel {part} outside [0, 1]"));
        }
    }
    Ok(rgb)
}

fn parse_hull(s: &str) -> Result<HullKind, String> {
    match s {
        "none" => Ok(HullKind::None),
        "convex" => Ok(HullKind::Convex),
        "concave" => Ok(HullKind::Concave),
        other => Err(format!(
            "unknown hull kind {other:?} (expected none, convex, or concave)"
        )),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();

    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Keep the exit-code contract: anything but success or the
            // explicit empty-selection status exits 1.
            let _ = e.print();
            return ExitCode::from(1);
        }
    };

    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, CliError> {
    let file_config = match &cli.config {
        Some(path) => FileConfig::load(path)?,
        None => FileConfig::default(),
    };

    let mut flag_overrides = match &cli.command {
        Command::Uplift {
            tunables,
            no_fill,
            fill_opacity_window,
            ..
        } => {
            let mut f = tunables.as_file_config();
            if *no_fill {
                f.fill = Some(false);
            }
            if *fill_opacity_window {
                f.fill_opacity_window = Some(true);
            }
            f
        }
        Command::Render { tunables, .. }
        | Command::Backproject { tunables, .. } => tunables.as_file_config(),
        Command::Evaluate {
            tunables,
            hull,
            hull_k,
            ..
        } => {
            let mut f = tunables.as_file_config();
            f.hull = *hull;
            f.hull_k = *hull_k;
            f
        }
        _ => FileConfig::default(),
    };
    flag_overrides.workers = cli.workers.or(flag_overrides.workers);

    let config = RunConfig::resolve(&file_config, &flag_overrides);
    if config.workers > 0 {
        // Ignore the error if a pool already exists (e.g. repeated calls in
        // tests); determinism does not depend on the pool size.
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(config.workers)
            .build_global();
    }

    commands::dispatch(cli.command, &config, cli.json)
}
