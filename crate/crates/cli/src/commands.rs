//! Implementations of the CLI subcommands.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use serde::Serialize;
use serde_json::json;

use splatlift_core::camera_io::{self, CameraView};
use splatlift_core::evaluate::{self, HullKind, MetricsReport};
use splatlift_core::mask_io;
use splatlift_core::rasterizer::{self, RenderOptions};
use splatlift_core::scene_io::{self, SplatScene};
use splatlift_core::synth::{self, Preset, SynthSpec};
use splatlift_core::uplift;

use crate::config::RunConfig;
use crate::{CliError, Command};

pub fn dispatch(command: Command, config: &RunConfig, json: bool) -> Result<ExitCode, CliError> {
    match command {
        Command::Uplift {
            splat,
            cameras,
            view,
            mask,
            out_indices,
            out_ply,
            highlight_ply,
            highlight_color,
            fail_on_empty,
            ..
        } => cmd_uplift(
            &splat,
            &cameras,
            &view,
            &mask,
            &out_indices,
            &out_ply,
            highlight_ply.as_deref(),
            highlight_color,
            fail_on_empty,
            config,
            json,
        ),
        Command::Render {
            splat,
            cameras,
            view,
            out,
            indices,
            highlight_color,
            ..
        } => cmd_render(
            &splat,
            &cameras,
            &view,
            &out,
            indices.as_deref(),
            highlight_color,
            config,
            json,
        ),
        Command::Backproject {
            splat,
            cameras,
            view,
            indices,
            out,
            ..
        } => cmd_backproject(&splat, &cameras, &view, &indices, &out, config, json),
        Command::Evaluate {
            splat,
            cameras,
            view,
            gt,
            indices,
            out,
            csv,
            ..
        } => cmd_evaluate(
            &splat,
            &cameras,
            &view,
            &gt,
            &indices,
            out.as_deref(),
            csv.as_deref(),
            config,
            json,
        ),
        Command::Synth {
            preset,
            out,
            seed,
            foreground,
            background,
            floaters,
            cameras,
            radius,
            width,
            height,
            focal,
        } => {
            let preset = match preset.as_str() {
                "cluster-wall" => Preset::ClusterWall,
                "two-objects" => Preset::TwoObjects,
                "floaters" => Preset::Floaters,
                other => {
                    return Err(CliError {
                        kind: "invalid-spec",
                        message: format!(
                            "unknown preset {other:?} (expected cluster-wall, two-objects, or floaters)"
                        ),
                    })
                }
            };
            let mut spec = SynthSpec::new(preset, seed);
            if let Some(v) = foreground {
                spec.foreground_count = v;
            }
            if let Some(v) = background {
                spec.background_count = v;
            }
            if let Some(v) = floaters {
                spec.floater_count = v;
            }
            if let Some(v) = cameras {
                spec.camera_count = v;
            }
            if let Some(v) = radius {
                spec.camera_radius = v;
            }
            if let Some(v) = width {
                spec.image_width = v;
            }
            if let Some(v) = height {
                spec.image_height = v;
            }
            if let Some(v) = focal {
                spec.focal = v;
            }
            cmd_synth(&spec, &out, json)
        }
        Command::Info { splat, cameras } => cmd_info(splat.as_deref(), cameras.as_deref(), json),
    }
}

fn load_scene(path: &Path) -> Result<SplatScene, CliError> {
    Ok(scene_io::load_splat_ply(path)?)
}

fn load_views(path: &Path) -> Result<Vec<CameraView>, CliError> {
    Ok(camera_io::load_colmap_bundle(path)?)
}

/// Reads a selection from an indices document: either the full uplift
/// output, any object with a `selected` array, or a bare JSON array.
fn load_selection(path: &Path) -> Result<Vec<usize>, CliError> {
    let bytes = fs::read(path).map_err(|e| CliError {
        kind: "io",
        message: format!("cannot read indices document {}: {e}", path.display()),
    })?;
    let value: serde_json::Value = serde_json::from_slice(&bytes).map_err(|e| CliError {
        kind: "malformed-record",
        message: format!("indices document {} is not valid JSON: {e}", path.display()),
    })?;
    let array = match &value {
        serde_json::Value::Array(a) => a,
        serde_json::Value::Object(o) => match o.get("selected") {
            Some(serde_json::Value::Array(a)) => a,
            _ => {
                return Err(CliError {
                    kind: "malformed-record",
                    message: format!(
                        "indices document {} has no `selected` array",
                        path.display()
                    ),
                })
            }
        },
        _ => {
            return Err(CliError {
                kind: "malformed-record",
                message: format!(
                    "indices document {} must be an array or an object",
                    path.display()
                ),
            })
        }
    };
    array
        .iter()
        .map(|v| {
            v.as_u64().map(|n| n as usize).ok_or_else(|| CliError {
                kind: "malformed-record",
                message: format!("non-integer index {v} in {}", path.display()),
            })
        })
        .collect()
}

fn emit<T: Serialize>(doc: &T) {
    println!(
        "{}",
        serde_json::to_string_pretty(doc).expect("document serializes")
    );
}

#[allow(clippy::too_many_arguments)]
fn cmd_uplift(
    splat: &Path,
    cameras: &Path,
    view_name: &str,
    mask_path: &Path,
    out_indices: &Path,
    out_ply: &Path,
    highlight_ply: Option<&Path>,
    highlight_color: [f64; 3],
    fail_on_empty: bool,
    config: &RunConfig,
    json: bool,
) -> Result<ExitCode, CliError> {
    let scene = load_scene(splat)?;
    let views = load_views(cameras)?;
    let view = camera_io::find_view(&views, view_name)?;
    let mask = mask_io::load_mask(
        mask_path,
        Some((view.intrinsics.width, view.intrinsics.height)),
    )?;

    let result = uplift::uplift_mask(&scene, view, &mask, &config.uplift())?;

    fs::write(
        out_indices,
        serde_json::to_vec_pretty(&result).expect("result serializes"),
    )?;
    scene_io::write_splat_ply(&scene, out_ply, Some(&result.selected), None)?;
    if let Some(path) = highlight_ply {
        scene_io::write_splat_ply(&scene, path, Some(&result.selected), Some(highlight_color))?;
    }

    if json {
        emit(&json!({
            "command": "uplift",
            "result": result,
            "outputs": {
                "indices": out_indices,
                "ply": out_ply,
                "highlight_ply": highlight_ply,
            },
        }));
    } else {
        println!(
            "view {}: {} of {} splats selected",
            result.view,
            result.selected.len(),
            result.stats.scene_splats
        );
        println!(
            "stages: in-mask {} -> z-buffer {} -> depth {} -> opacity {} -> fill {}",
            result.stages.in_mask,
            result.stages.zbuffer,
            result.stages.depth_filter,
            result.stages.opacity_filter,
            result.stages.fill
        );
        println!(
            "timings: gate {:.1} ms, z-buffer {:.1} ms, filter {:.1} ms, fill {:.1} ms, total {:.1} ms",
            result.timings_ms.gate_ms,
            result.timings_ms.zbuffer_ms,
            result.timings_ms.filter_ms,
            result.timings_ms.fill_ms,
            result.timings_ms.total_ms
        );
        println!("wrote {} and {}", out_indices.display(), out_ply.display());
    }

    if result.is_empty() {
        eprintln!("selection is empty");
        if fail_on_empty {
            return Ok(ExitCode::from(2));
        }
    }
    Ok(ExitCode::SUCCESS)
}

#[allow(clippy::too_many_arguments)]
fn cmd_render(
    splat: &Path,
    cameras: &Path,
    view_name: &str,
    out: &Path,
    indices: Option<&Path>,
    highlight_color: Option<[f64; 3]>,
    config: &RunConfig,
    json: bool,
) -> Result<ExitCode, CliError> {
    let scene = load_scene(splat)?;
    let views = load_views(cameras)?;
    let view = camera_io::find_view(&views, view_name)?;
    let selection = indices.map(load_selection).transpose()?;
    let highlighted = selection.as_ref().map_or(0, Vec::len);

    let options = RenderOptions {
        selection,
        highlight_color,
        saturation: config.saturation,
        footprint_sigma: config.footprint_sigma,
        projection: config.projection(),
    };
    let target = rasterizer::render(&scene, view, &options)?;
    target.save_png(out)?;

    if json {
        emit(&json!({
            "command": "render",
            "output": out,
            "view": view.image_name,
            "width": target.width,
            "height": target.height,
            "highlighted": highlighted,
            "config": config,
        }));
    } else {
        println!(
            "rendered {} ({}x{}) to {}",
            view.image_name,
            target.width,
            target.height,
            out.display()
        );
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_backproject(
    splat: &Path,
    cameras: &Path,
    view_name: &str,
    indices: &Path,
    out: &Path,
    config: &RunConfig,
    json: bool,
) -> Result<ExitCode, CliError> {
    let scene = load_scene(splat)?;
    let views = load_views(cameras)?;
    let view = camera_io::find_view(&views, view_name)?;
    let selection = load_selection(indices)?;

    let mask = rasterizer::backproject_mask(
        &scene,
        view,
        &selection,
        config.backproject_sigma,
        &config.projection(),
    )?;
    mask_io::save_mask(&mask, out)?;

    if json {
        emit(&json!({
            "command": "backproject",
            "output": out,
            "view": view.image_name,
            "selection_size": selection.len(),
            "set_pixels": mask.count_set(),
            "config": config,
        }));
    } else {
        println!(
            "back-projected {} splats into {} ({} set pixels)",
            selection.len(),
            out.display(),
            mask.count_set()
        );
    }
    Ok(ExitCode::SUCCESS)
}

#[derive(Serialize)]
struct ViewReport {
    view: String,
    #[serde(flatten)]
    metrics: MetricsReport,
}

#[allow(clippy::too_many_arguments)]
fn cmd_evaluate(
    splat: &Path,
    cameras: &Path,
    view_names: &[String],
    gt_paths: &[PathBuf],
    indices: &Path,
    out: Option<&Path>,
    csv: Option<&Path>,
    config: &RunConfig,
    json: bool,
) -> Result<ExitCode, CliError> {
    if view_names.len() != gt_paths.len() {
        return Err(CliError {
            kind: "invalid-spec",
            message: format!(
                "{} views but {} ground-truth masks",
                view_names.len(),
                gt_paths.len()
            ),
        });
    }
    let scene = load_scene(splat)?;
    let views = load_views(cameras)?;
    let selection = load_selection(indices)?;

    let mut reports = Vec::new();
    for (name, gt_path) in view_names.iter().zip(gt_paths) {
        let view = camera_io::find_view(&views, name)?;
        let gt = mask_io::load_mask(
            gt_path,
            Some((view.intrinsics.width, view.intrinsics.height)),
        )?;
        let metrics = evaluate::evaluate_view(
            &scene,
            view,
            &selection,
            &gt,
            config.hull,
            config.hull_k,
            config.backproject_sigma,
            &config.projection(),
        )?;
        reports.push(ViewReport {
            view: view.image_name.clone(),
            metrics,
        });
    }

    let doc = json!({
        "command": "evaluate",
        "reports": reports,
        "config": config,
    });
    if let Some(path) = out {
        fs::write(path, serde_json::to_vec_pretty(&doc).expect("doc serializes"))?;
    }
    if let Some(path) = csv {
        let mut rows = String::from("view,iou,f1,accuracy,tp,fp,fn,tn,hull,timing_ms\n");
        for r in &reports {
            let m = &r.metrics;
            let hull = match m.hull_kind {
                HullKind::None => "none",
                HullKind::Convex => "convex",
                HullKind::Concave => "concave",
            };
            rows.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.view,
                m.iou,
                m.f1,
                m.accuracy,
                m.true_positives,
                m.false_positives,
                m.false_negatives,
                m.true_negatives,
                hull,
                m.timing_ms
            ));
        }
        fs::write(path, rows)?;
    }

    if json {
        emit(&doc);
    } else {
        for r in &reports {
            println!(
                "{}: IoU {:.4}, F1 {:.4}, accuracy {:.4}",
                r.view, r.metrics.iou, r.metrics.f1, r.metrics.accuracy
            );
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_synth(spec: &SynthSpec, out: &Path, json: bool) -> Result<ExitCode, CliError> {
    let generated = synth::materialize(spec, out)?;
    let mut group_counts = std::collections::BTreeMap::new();
    for label in &generated.labels {
        *group_counts.entry(label.clone()).or_insert(0usize) += 1;
    }

    if json {
        emit(&json!({
            "command": "synth",
            "out_dir": out,
            "splats": generated.scene.len(),
            "views": generated.views.len(),
            "groups": group_counts,
            "front_view": generated.front_view_name(),
            "spec": spec,
        }));
    } else {
        println!(
            "wrote {} splats, {} cameras, and reference masks to {}",
            generated.scene.len(),
            generated.views.len(),
            out.display()
        );
        for (group, count) in &group_counts {
            println!("  {group}: {count}");
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_info(
    splat: Option<&Path>,
    cameras: Option<&Path>,
    json: bool,
) -> Result<ExitCode, CliError> {
    if splat.is_none() && cameras.is_none() {
        return Err(CliError {
            kind: "invalid-spec",
            message: "pass --splat and/or --cameras".into(),
        });
    }

    let scene_info = splat
        .map(|path| -> Result<serde_json::Value, CliError> {
            let scene = load_scene(path)?;
            let bounds = scene.position_bounds().map(|(lo, hi)| {
                json!({"min": lo, "max": hi})
            });
            Ok(json!({
                "path": path,
                "splats": scene.len(),
                "sh_rest_dims": scene.sh_rest_dims(),
                "bounds": bounds,
            }))
        })
        .transpose()?;

    let views_info = cameras
        .map(|path| -> Result<serde_json::Value, CliError> {
            let views = load_views(path)?;
            let list: Vec<serde_json::Value> = views
                .iter()
                .map(|v| {
                    json!({
                        "name": v.image_name,
                        "width": v.intrinsics.width,
                        "height": v.intrinsics.height,
                        "fx": v.intrinsics.fx,
                        "fy": v.intrinsics.fy,
                    })
                })
                .collect();
            Ok(json!({"path": path, "count": views.len(), "views": list}))
        })
        .transpose()?;

    if json {
        emit(&json!({
            "command": "info",
            "scene": scene_info,
            "cameras": views_info,
        }));
    } else {
        if let Some(info) = &scene_info {
            println!(
                "scene {}: {} splats, {} higher-order SH coefficients",
                info["path"].as_str().unwrap_or_default(),
                info["splats"],
                info["sh_rest_dims"]
            );
            if let Some(bounds) = info.get("bounds").filter(|b| !b.is_null()) {
                println!("  bounds: {} to {}", bounds["min"], bounds["max"]);
            }
        }
        if let Some(info) = &views_info {
            println!("cameras: {} registered views", info["count"]);
            for v in info["views"].as_array().into_iter().flatten() {
                println!(
                    "  {} ({}x{}, fx {}, fy {})",
                    v["name"].as_str().unwrap_or_default(),
                    v["width"],
                    v["height"],
                    v["fx"],
                    v["fy"]
                );
            }
        }
    }
    Ok(ExitCode::SUCCESS)
}
