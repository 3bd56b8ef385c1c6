//! Parsing of SfM reconstruction outputs (COLMAP cameras/images files, text
//! and binary) into per-view camera records.
//!
//! Only the undistorted pinhole models are accepted; a distorted model would
//! corrupt the segmentation quietly, so those are rejected by name. The 2D
//! feature observations in the images file are skipped. Loaded extrinsics
//! already satisfy the canonical `X_cam = R X + t` convention used by the
//! projection math.

use std::collections::HashMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Quaternion, Rotation3, UnitQuaternion, Vector3};

use crate::geometry::{CameraExtrinsics, CameraIntrinsics, GeometryError};

#[derive(Debug, thiserror::Error)]
pub enum ColmapError {
    #[error("missing reconstruction file: {0}")]
    MissingFile(PathBuf),
    #[error("unsupported camera model {model} for camera {camera_id} (supported: SIMPLE_PINHOLE, PINHOLE)")]
    UnsupportedCameraModel { model: String, camera_id: u32 },
    #[error("malformed record in {file} at {location}: {message}")]
    MalformedRecord {
        file: PathBuf,
        location: String,
        message: String,
    },
    #[error("view {name:?} not found; available views: {}", available.join(", "))]
    ViewNotFound {
        name: String,
        available: Vec<String>,
    },
    #[error("view name {name:?} matches multiple images: {}", matches.join(", "))]
    AmbiguousName { name: String, matches: Vec<String> },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("i/o failure: {0}")]
    Io(#[from] io::Error),
}

/// Camera model ids as written by the SfM tool, with parameter counts.
const CAMERA_MODELS: &[(i32, &str, usize)] = &[
    (0, "SIMPLE_PINHOLE", 3),
    (1, "PINHOLE", 4),
    (2, "SIMPLE_RADIAL", 4),
    (3, "RADIAL", 5),
    (4, "OPENCV", 8),
    (5, "OPENCV_FISHEYE", 8),
    (6, "FULL_OPENCV", 12),
    (7, "FOV", 5),
    (8, "SIMPLE_RADIAL_FISHEYE", 4),
    (9, "RADIAL_FISHEYE", 5),
    (10, "THIN_PRISM_FISHEYE", 12),
];

fn model_by_id(id: i32) -> Option<(&'static str, usize)> {
    CAMERA_MODELS
        .iter()
        .find(|(mid, _, _)| *mid == id)
        .map(|(_, name, n)| (*name, *n))
}

/// One registered image: its name plus intrinsics and extrinsics.
#[derive(Debug, Clone, PartialEq)]
pub struct CameraView {
    pub image_name: String,
    pub intrinsics: CameraIntrinsics,
    pub extrinsics: CameraExtrinsics,
}

/// Loads a reconstruction from a directory holding `cameras` + `images`
/// files, preferring the binary pair when both encodings are present.
/// Views come back sorted by image name.
pub fn load_colmap_bundle(dir: &Path) -> Result<Vec<CameraView>, ColmapError> {
    let bin = (dir.join("cameras.bin"), dir.join("images.bin"));
    let txt = (dir.join("cameras.txt"), dir.join("images.txt"));
    if bin.0.is_file() && bin.1.is_file() {
        load_colmap_files(&bin.0, &bin.1)
    } else if txt.0.is_file() && txt.1.is_file() {
        load_colmap_files(&txt.0, &txt.1)
    } else if txt.0.is_file() || bin.0.is_file() {
        Err(ColmapError::MissingFile(if bin.0.is_file() {
            bin.1
        } else {
            txt.1
        }))
    } else {
        Err(ColmapError::MissingFile(txt.0))
    }
}

/// Loads a reconstruction from explicit cameras/images paths; the encoding
/// is chosen per file by its extension (`.bin` is binary, anything else is
/// text).
pub fn load_colmap_files(
    cameras_path: &Path,
    images_path: &Path,
) -> Result<Vec<CameraView>, ColmapError> {
    let cameras = if is_binary(cameras_path) {
        parse_cameras_binary(cameras_path)?
    } else {
        parse_cameras_text(cameras_path)?
    };
    let images = if is_binary(images_path) {
        parse_images_binary(images_path)?
    } else {
        parse_images_text(images_path)?
    };

    let mut views = Vec::with_capacity(images.len());
    let mut seen: HashMap<String, ()> = HashMap::new();
    for img in images {
        let intrinsics = cameras.get(&img.camera_id).ok_or_else(|| {
            ColmapError::MalformedRecord {
                file: images_path.to_path_buf(),
                location: format!("image {}", img.name),
                message: format!("references unknown camera id {}", img.camera_id),
            }
        })?;
        if seen.insert(img.name.clone(), ()).is_some() {
            return Err(ColmapError::MalformedRecord {
                file: images_path.to_path_buf(),
                location: format!("image {}", img.name),
                message: "duplicate image name".into(),
            });
        }
        let q = Quaternion::new(img.qvec[0], img.qvec[1], img.qvec[2], img.qvec[3]);
        if q.norm() < 1e-12 {
            return Err(ColmapError::MalformedRecord {
                file: images_path.to_path_buf(),
                location: format!("image {}", img.name),
                message: "zero quaternion".into(),
            });
        }
        let rotation = UnitQuaternion::from_quaternion(q)
            .to_rotation_matrix()
            .into_inner();
        let translation = Vector3::new(img.tvec[0], img.tvec[1], img.tvec[2]);
        // Re-validates orthonormality and determinant.
        let extrinsics = CameraExtrinsics::new(rotation, translation)?;
        views.push(CameraView {
            image_name: img.name,
            intrinsics: *intrinsics,
            extrinsics,
        });
    }
    views.sort_by(|a, b| a.image_name.cmp(&b.image_name));
    Ok(views)
}

/// Exact-name lookup first, then unique basename match.
pub fn find_view<'v>(views: &'v [CameraView], image_name: &str) -> Result<&'v CameraView, ColmapError> {
    if let Some(v) = views.iter().find(|v| v.image_name == image_name) {
        return Ok(v);
    }
    let wanted = basename(image_name);
    let matches: Vec<&CameraView> = views
        .iter()
        .filter(|v| basename(&v.image_name) == wanted)
        .collect();
    match matches.len() {
        1 => Ok(matches[0]),
        0 => Err(ColmapError::ViewNotFound {
            name: image_name.to_string(),
            available: views.iter().map(|v| v.image_name.clone()).collect(),
        }),
        _ => Err(ColmapError::AmbiguousName {
            name: image_name.to_string(),
            matches: matches.iter().map(|v| v.image_name.clone()).collect(),
        }),
    }
}

fn basename(name: &str) -> &str {
    name.rsplit(['/', '\\']).next().unwrap_or(name)
}

fn is_binary(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "bin")
}

struct ImageRecord {
    qvec: [f64; 4],
    tvec: [f64; 3],
    camera_id: u32,
    name: String,
}

fn intrinsics_from_params(
    model: &str,
    camera_id: u32,
    width: u64,
    height: u64,
    params: &[f64],
    err: impl Fn(String) -> ColmapError,
) -> Result<CameraIntrinsics, ColmapError> {
    let (fx, fy, cx, cy) = match model {
        "SIMPLE_PINHOLE" => {
            if params.len() != 3 {
                return Err(err(format!(
                    "SIMPLE_PINHOLE expects 3 params, got {}",
                    params.len()
                )));
            }
            (params[0], params[0], params[1], params[2])
        }
        "PINHOLE" => {
            if params.len() != 4 {
                return Err(err(format!(
                    "PINHOLE expects 4 params, got {}",
                    params.len()
                )));
            }
            (params[0], params[1], params[2], params[3])
        }
        other => {
            return Err(ColmapError::UnsupportedCameraModel {
                model: other.to_string(),
                camera_id,
            })
        }
    };
    Ok(CameraIntrinsics::new(
        fx,
        fy,
        cx,
        cy,
        width as u32,
        height as u32,
    )?)
}

fn parse_cameras_text(path: &Path) -> Result<HashMap<u32, CameraIntrinsics>, ColmapError> {
    let text = read_text(path)?;
    let mut cameras = HashMap::new();
    for (lineno, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let err = |message: String| ColmapError::MalformedRecord {
            file: path.to_path_buf(),
            location: format!("line {}", lineno + 1),
            message,
        };
        let tokens: Vec<&str> = line.split_whitespace().collect();
        if tokens.len() < 4 {
            return Err(err("camera line needs at least 4 fields".into()));
        }
        let camera_id: u32 = tokens[0]
            .parse()
            .map_err(|_| err(format!("bad camera id {:?}", tokens[0])))?;
        let model = tokens[1];
        let width: u64 = tokens[2]
            .parse()
            .map_err(|_| err(format!("bad width {:?}", tokens[2])))?;
        let height: u64 = tokens[3]
            .parse()
            .map_err(|_| err(format!("bad height {:?}", tokens[3])))?;
        let params: Vec<f64> = tokens[4..]
            .iter()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| err(format!("bad camera parameter: {e}")))?;
        let intr = intrinsics_from_params(model, camera_id, width, height, &params, err)?;
        cameras.insert(camera_id, intr);
    }
    Ok(cameras)
}

fn parse_images_text(path: &Path) -> Result<Vec<ImageRecord>, ColmapError> {
    let text = read_text(path)?;
    let mut images = Vec::new();
    let mut lines = text.lines().enumerate();
    while let Some((lineno, line)) = lines.next() {
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let err = |message: String| ColmapError::MalformedRecord {
            file: path.to_path_buf(),
            location: format!("line {}", lineno + 1),
            message,
        };
        let tokens: Vec<&str> = trimmed.split_whitespace().collect();
        if tokens.len() != 10 {
            return Err(err(format!(
                "pose line needs 10 fields (IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME), got {}",
                tokens.len()
            )));
        }
        let nums: Vec<f64> = tokens[1..8]
            .iter()
            .map(|t| t.parse::<f64>())
            .collect::<Result<_, _>>()
            .map_err(|e| err(format!("bad pose value: {e}")))?;
        let camera_id: u32 = tokens[8]
            .parse()
            .map_err(|_| err(format!("bad camera id {:?}", tokens[8])))?;
        images.push(ImageRecord {
            qvec: [nums[0], nums[1], nums[2], nums[3]],
            tvec: [nums[4], nums[5], nums[6]],
            camera_id,
            name: tokens[9].to_string(),
        });
        // The following line lists 2D feature observations; skipped.
        lines.next();
    }
    Ok(images)
}

/// Little-endian binary cursor that reports byte offsets in errors.
struct Cursor<'a> {
    bytes: &'a [u8],
    offset: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn err(&self, message: String) -> ColmapError {
        ColmapError::MalformedRecord {
            file: self.path.to_path_buf(),
            location: format!("byte offset {}", self.offset),
            message,
        }
    }

    fn take(&mut self, n: usize) -> Result<&'a [u8], ColmapError> {
        if self.offset + n > self.bytes.len() {
            return Err(self.err(format!(
                "unexpected end of file (need {n} bytes, {} left)",
                self.bytes.len() - self.offset
            )));
        }
        let out = &self.bytes[self.offset..self.offset + n];
        self.offset += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, ColmapError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn i32(&mut self) -> Result<i32, ColmapError> {
        Ok(i32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, ColmapError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64, ColmapError> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn cstring(&mut self) -> Result<String, ColmapError> {
        let start = self.offset;
        while self.offset < self.bytes.len() && self.bytes[self.offset] != 0 {
            self.offset += 1;
        }
        if self.offset >= self.bytes.len() {
            return Err(self.err("unterminated string".into()));
        }
        let s = std::str::from_utf8(&self.bytes[start..self.offset])
            .map_err(|_| self.err("string is not valid utf-8".into()))?
            .to_string();
        self.offset += 1; // the NUL
        Ok(s)
    }
}

fn parse_cameras_binary(path: &Path) -> Result<HashMap<u32, CameraIntrinsics>, ColmapError> {
    let bytes = read_bytes(path)?;
    let mut cur = Cursor {
        bytes: &bytes,
        offset: 0,
        path,
    };
    let count = cur.u64()?;
    let mut cameras = HashMap::new();
    for _ in 0..count {
        let camera_id = cur.u32()?;
        let model_id = cur.i32()?;
        let width = cur.u64()?;
        let height = cur.u64()?;
        let (model, n_params) = model_by_id(model_id)
            .ok_or_else(|| cur.err(format!("unknown camera model id {model_id}")))?;
        let mut params = Vec::with_capacity(n_params);
        for _ in 0..n_params {
            params.push(cur.f64()?);
        }
        let record_offset = cur.offset;
        let intr = intrinsics_from_params(model, camera_id, width, height, &params, |message| {
            ColmapError::MalformedRecord {
                file: path.to_path_buf(),
                location: format!("byte offset {record_offset}"),
                message,
            }
        })?;
        cameras.insert(camera_id, intr);
    }
    Ok(cameras)
}

fn parse_images_binary(path: &Path) -> Result<Vec<ImageRecord>, ColmapError> {
    let bytes = read_bytes(path)?;
    let mut cur = Cursor {
        bytes: &bytes,
        offset: 0,
        path,
    };
    let count = cur.u64()?;
    let mut images = Vec::with_capacity(count as usize);
    for _ in 0..count {
        let _image_id = cur.u32()?;
        let qvec = [cur.f64()?, cur.f64()?, cur.f64()?, cur.f64()?];
        let tvec = [cur.f64()?, cur.f64()?, cur.f64()?];
        let camera_id = cur.u32()?;
        let name = cur.cstring()?;
        let num_points = cur.u64()?;
        // Each 2D observation is x, y (f64) plus a 3D point id (u64).
        cur.take(num_points as usize * 24)?;
        images.push(ImageRecord {
            qvec,
            tvec,
            camera_id,
            name,
        });
    }
    Ok(images)
}

fn read_text(path: &Path) -> Result<String, ColmapError> {
    if !path.is_file() {
        return Err(ColmapError::MissingFile(path.to_path_buf()));
    }
    Ok(fs::read_to_string(path)?)
}

fn read_bytes(path: &Path) -> Result<Vec<u8>, ColmapError> {
    if !path.is_file() {
        return Err(ColmapError::MissingFile(path.to_path_buf()));
    }
    Ok(fs::read(path)?)
}

fn rotation_to_qvec(rotation: &Matrix3<f64>) -> [f64; 4] {
    let q = UnitQuaternion::from_rotation_matrix(&Rotation3::from_matrix_unchecked(*rotation));
    let q = q.quaternion();
    [q.w, q.i, q.j, q.k]
}

/// Writes views as the text-format reconstruction pair (`cameras.txt`,
/// `images.txt`), one camera per view.
pub fn write_colmap_text(views: &[CameraView], dir: &Path) -> Result<(), ColmapError> {
    fs::create_dir_all(dir)?;
    let mut cameras = fs::File::create(dir.join("cameras.txt"))?;
    writeln!(cameras, "# Camera list: CAMERA_ID MODEL WIDTH HEIGHT PARAMS[]")?;
    for (i, v) in views.iter().enumerate() {
        let k = &v.intrinsics;
        writeln!(
            cameras,
            "{} PINHOLE {} {} {} {} {} {}",
            i + 1,
            k.width,
            k.height,
            k.fx,
            k.fy,
            k.cx,
            k.cy
        )?;
    }
    let mut images = fs::File::create(dir.join("images.txt"))?;
    writeln!(
        images,
        "# Image list: IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME, then one line of 2D points"
    )?;
    for (i, v) in views.iter().enumerate() {
        let q = rotation_to_qvec(&v.extrinsics.rotation);
        let t = v.extrinsics.translation;
        writeln!(
            images,
            "{} {} {} {} {} {} {} {} {} {}",
            i + 1,
            q[0],
            q[1],
            q[2],
            q[3],
            t.x,
            t.y,
            t.z,
            i + 1,
            v.image_name
        )?;
        writeln!(images)?;
    }
    Ok(())
}

/// Writes views as the binary reconstruction pair (`cameras.bin`,
/// `images.bin`).
pub fn write_colmap_binary(views: &[CameraView], dir: &Path) -> Result<(), ColmapError> {
    fs::create_dir_all(dir)?;
    let mut cameras: Vec<u8> = Vec::new();
    cameras.extend_from_slice(&(views.len() as u64).to_le_bytes());
    for (i, v) in views.iter().enumerate() {
        let k = &v.intrinsics;
        cameras.extend_from_slice(&(i as u32 + 1).to_le_bytes());
        cameras.extend_from_slice(&1i32.to_le_bytes()); // PINHOLE
        cameras.extend_from_slice(&(k.width as u64).to_le_bytes());
        cameras.extend_from_slice(&(k.height as u64).to_le_bytes());
        for p in [k.fx, k.fy, k.cx, k.cy] {
            cameras.extend_from_slice(&p.to_le_bytes());
        }
    }
    fs::write(dir.join("cameras.bin"), cameras)?;

    let mut images: Vec<u8> = Vec::new();
    images.extend_from_slice(&(views.len() as u64).to_le_bytes());
    for (i, v) in views.iter().enumerate() {
        images.extend_from_slice(&(i as u32 + 1).to_le_bytes());
        let q = rotation_to_qvec(&v.extrinsics.rotation);
        let t = v.extrinsics.translation;
        for val in [q[0], q[1], q[2], q[3], t.x, t.y, t.z] {
            images.extend_from_slice(&val.to_le_bytes());
        }
        images.extend_from_slice(&(i as u32 + 1).to_le_bytes());
        images.extend_from_slice(v.image_name.as_bytes());
        images.push(0);
        images.extend_from_slice(&0u64.to_le_bytes()); // no 2D points
    }
    fs::write(dir.join("images.bin"), images)?;
    Ok(())
}
