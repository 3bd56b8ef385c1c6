//! Splat PLY scenes: parsing, lazy activation, and writing of filtered or
//! recolored sub-scenes.
//!
//! Scenes keep the file's float32 values verbatim so that loading and
//! rewriting a binary file produced by this module is byte-identical.
//! Activation (exp on scales, sigmoid on opacity, quaternion normalization,
//! zeroth-SH-band to RGB) happens on demand via [`SplatScene::splat`].
//! Higher-order spherical-harmonic coefficients are carried as an opaque
//! payload and never interpreted.

use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use nalgebra::Vector3;

use crate::geometry::{GaussianSplat, GeometryError, SH_C0};

#[derive(Debug, thiserror::Error)]
pub enum PlyError {
    #[error("malformed PLY header: {0}")]
    MalformedHeader(String),
    #[error("truncated PLY body: expected {expected} vertices, found {found}")]
    TruncatedBody { expected: usize, found: usize },
    #[error("unsupported PLY encoding {0:?} (only binary_little_endian and ascii)")]
    UnsupportedEncoding(String),
    #[error("invalid vertex {index}: {source}")]
    InvalidVertex {
        index: usize,
        #[source]
        source: GeometryError,
    },
    #[error("selection index {index} out of range for scene of {len} splats")]
    SelectionOutOfRange { index: usize, len: usize },
    #[error("i/o failure: {0}")]
    IoFailure(#[from] io::Error),
}

/// One splat exactly as stored in the file, unactivated.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSplat {
    pub position: [f32; 3],
    /// Zeroth spherical-harmonic band (f_dc_0..2).
    pub f_dc: [f32; 3],
    /// Opacity logit.
    pub opacity: f32,
    /// Log-scales (scale_0..2).
    pub scale: [f32; 3],
    /// Quaternion as stored, (w, x, y, z), not necessarily unit norm.
    pub rot: [f32; 4],
}

/// An ordered, immutable set of Gaussians plus the metadata needed to write
/// it back faithfully.
#[derive(Debug, Clone)]
pub struct SplatScene {
    raw: Vec<RawSplat>,
    /// Flat `len * sh_rest_dims` array of higher-order SH coefficients,
    /// preserved verbatim.
    sh_rest: Vec<f32>,
    sh_rest_dims: usize,
    /// Recognized property names in file order; drives the writer.
    field_layout: Vec<String>,
}

impl SplatScene {
    pub fn len(&self) -> usize {
        self.raw.len()
    }

    pub fn is_empty(&self) -> bool {
        self.raw.is_empty()
    }

    /// Activated view of splat `i`. Panics if `i` is out of range; the
    /// stored values were validated on ingest so activation itself cannot
    /// fail.
    pub fn splat(&self, i: usize) -> GaussianSplat {
        let r = &self.raw[i];
        activate(r).expect("raw splat validated on ingest")
    }

    pub fn splats(&self) -> impl Iterator<Item = GaussianSplat> + '_ {
        (0..self.len()).map(|i| self.splat(i))
    }

    pub fn raw(&self, i: usize) -> &RawSplat {
        &self.raw[i]
    }

    pub fn sh_rest_dims(&self) -> usize {
        self.sh_rest_dims
    }

    pub fn field_layout(&self) -> &[String] {
        &self.field_layout
    }

    /// Axis-aligned bounds of all splat positions.
    pub fn position_bounds(&self) -> Option<([f64; 3], [f64; 3])> {
        if self.raw.is_empty() {
            return None;
        }
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for r in &self.raw {
            for k in 0..3 {
                lo[k] = lo[k].min(r.position[k] as f64);
                hi[k] = hi[k].max(r.position[k] as f64);
            }
        }
        Some((lo, hi))
    }

    /// Builds a scene from activated splats (file-precision float32 storage,
    /// canonical field layout, no higher-order SH).
    pub fn from_splats(splats: &[GaussianSplat]) -> Self {
        let raw = splats
            .iter()
            .map(|s| {
                let q = s.rotation.quaternion();
                RawSplat {
                    position: [
                        s.position.x as f32,
                        s.position.y as f32,
                        s.position.z as f32,
                    ],
                    f_dc: [
                        rgb_to_sh(s.color.x),
                        rgb_to_sh(s.color.y),
                        rgb_to_sh(s.color.z),
                    ],
                    opacity: s.opacity_logit as f32,
                    scale: [
                        s.log_scale.x as f32,
                        s.log_scale.y as f32,
                        s.log_scale.z as f32,
                    ],
                    rot: [q.w as f32, q.i as f32, q.j as f32, q.k as f32],
                }
            })
            .collect();
        Self {
            raw,
            sh_rest: Vec::new(),
            sh_rest_dims: 0,
            field_layout: canonical_layout(0),
        }
    }
}

fn activate(r: &RawSplat) -> Result<GaussianSplat, GeometryError> {
    GaussianSplat::new(
        Vector3::new(
            r.position[0] as f64,
            r.position[1] as f64,
            r.position[2] as f64,
        ),
        Vector3::new(r.scale[0] as f64, r.scale[1] as f64, r.scale[2] as f64),
        [
            r.rot[0] as f64,
            r.rot[1] as f64,
            r.rot[2] as f64,
            r.rot[3] as f64,
        ],
        r.opacity as f64,
        Vector3::new(
            sh_to_rgb(r.f_dc[0]),
            sh_to_rgb(r.f_dc[1]),
            sh_to_rgb(r.f_dc[2]),
        ),
    )
}

/// rgb = 0.5 + C0 * f_dc, clamped to [0, 1].
pub fn sh_to_rgb(f_dc: f32) -> f64 {
    (0.5 + SH_C0 * f_dc as f64).clamp(0.0, 1.0)
}

/// Inverse of [`sh_to_rgb`] (without the clamp).
pub fn rgb_to_sh(rgb: f64) -> f32 {
    ((rgb - 0.5) / SH_C0) as f32
}

fn canonical_layout(sh_rest_dims: usize) -> Vec<String> {
    let mut names = vec!["x".into(), "y".into(), "z".into()];
    for k in 0..3 {
        names.push(format!("f_dc_{k}"));
    }
    for k in 0..sh_rest_dims {
        names.push(format!("f_rest_{k}"));
    }
    names.push("opacity".into());
    for k in 0..3 {
        names.push(format!("scale_{k}"));
    }
    for k in 0..4 {
        names.push(format!("rot_{k}"));
    }
    names
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Encoding {
    Ascii,
    BinaryLittleEndian,
}

/// Where a recognized property routes inside [`RawSplat`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Field {
    Position(usize),
    FDc(usize),
    FRest(usize),
    Opacity,
    Scale(usize),
    Rot(usize),
    Ignored,
}

fn classify(name: &str) -> Option<Field> {
    match name {
        "x" => return Some(Field::Position(0)),
        "y" => return Some(Field::Position(1)),
        "z" => return Some(Field::Position(2)),
        "opacity" => return Some(Field::Opacity),
        "nx" | "ny" | "nz" => return Some(Field::Ignored),
        _ => {}
    }
    for (prefix, make) in [
        ("f_dc_", Field::FDc as fn(usize) -> Field),
        ("f_rest_", Field::FRest as fn(usize) -> Field),
        ("scale_", Field::Scale as fn(usize) -> Field),
        ("rot_", Field::Rot as fn(usize) -> Field),
    ] {
        if let Some(rest) = name.strip_prefix(prefix) {
            if let Ok(k) = rest.parse::<usize>() {
                return Some(make(k));
            }
        }
    }
    None
}

fn scalar_size(ty: &str) -> Option<usize> {
    match ty {
        "char" | "uchar" | "int8" | "uint8" => Some(1),
        "short" | "ushort" | "int16" | "uint16" => Some(2),
        "int" | "uint" | "float" | "int32" | "uint32" | "float32" => Some(4),
        "double" | "float64" => Some(8),
        _ => None,
    }
}

struct Header {
    encoding: Encoding,
    vertex_count: usize,
    /// For each vertex property: its byte size and destination.
    properties: Vec<(usize, Field)>,
    field_layout: Vec<String>,
    sh_rest_dims: usize,
    body_offset: usize,
}

fn parse_header(bytes: &[u8]) -> Result<Header, PlyError> {
    let end_pat: &[u8] = b"end_header\n";
    let end = bytes
        .windows(end_pat.len())
        .position(|w| w == end_pat)
        .ok_or_else(|| PlyError::MalformedHeader("missing end_header".into()))?;
    let body_offset = end + end_pat.len();
    let text = std::str::from_utf8(&bytes[..end])
        .map_err(|_| PlyError::MalformedHeader("header is not valid utf-8".into()))?;

    let mut lines = text.lines().map(str::trim).filter(|l| !l.is_empty());
    if lines.next() != Some("ply") {
        return Err(PlyError::MalformedHeader(
            "first line must be \"ply\"".into(),
        ));
    }

    let mut encoding = None;
    let mut vertex_count = None;
    let mut in_vertex = false;
    let mut properties: Vec<(usize, Field)> = Vec::new();
    let mut field_layout: Vec<String> = Vec::new();
    let mut f_rest_indices: Vec<usize> = Vec::new();

    for line in lines {
        let mut it = line.split_whitespace();
        match it.next().unwrap_or("") {
            "comment" | "obj_info" => {}
            "format" => {
                let fmt = it.next().unwrap_or("");
                encoding = Some(match fmt {
                    "ascii" => Encoding::Ascii,
                    "binary_little_endian" => Encoding::BinaryLittleEndian,
                    other => return Err(PlyError::UnsupportedEncoding(other.to_string())),
                });
            }
            "element" => {
                let name = it.next().unwrap_or("");
                let count: usize = it
                    .next()
                    .and_then(|c| c.parse().ok())
                    .ok_or_else(|| PlyError::MalformedHeader("bad element count".into()))?;
                if name == "vertex" {
                    if vertex_count.is_some() {
                        return Err(PlyError::MalformedHeader(
                            "duplicate vertex element".into(),
                        ));
                    }
                    vertex_count = Some(count);
                    in_vertex = true;
                } else {
                    if vertex_count.is_none() && count > 0 {
                        return Err(PlyError::MalformedHeader(format!(
                            "element {name:?} precedes vertex element"
                        )));
                    }
                    in_vertex = false;
                }
            }
            "property" => {
                if !in_vertex {
                    continue;
                }
                let ty = it.next().unwrap_or("");
                if ty == "list" {
                    return Err(PlyError::MalformedHeader(
                        "list properties are not supported on vertex".into(),
                    ));
                }
                let name = it
                    .next()
                    .ok_or_else(|| PlyError::MalformedHeader("property without a name".into()))?;
                let size = scalar_size(ty).ok_or_else(|| {
                    PlyError::MalformedHeader(format!("unknown property type {ty:?}"))
                })?;
                let field = match classify(name) {
                    Some(f) => {
                        if !matches!(f, Field::Ignored) && ty != "float" && ty != "float32" {
                            return Err(PlyError::MalformedHeader(format!(
                                "property {name} has type {ty}, expected float"
                            )));
                        }
                        f
                    }
                    None => {
                        log::warn!("ignoring unrecognized vertex property {name:?}");
                        Field::Ignored
                    }
                };
                if let Field::FRest(k) = field {
                    f_rest_indices.push(k);
                }
                if !matches!(field, Field::Ignored) {
                    field_layout.push(name.to_string());
                }
                properties.push((size, field));
            }
            other => {
                return Err(PlyError::MalformedHeader(format!(
                    "unknown header directive {other:?}"
                )))
            }
        }
    }

    let encoding = encoding
        .ok_or_else(|| PlyError::MalformedHeader("missing format line".into()))?;
    let vertex_count = vertex_count
        .ok_or_else(|| PlyError::MalformedHeader("missing vertex element".into()))?;

    // All required fields present?
    let mut missing = Vec::new();
    let have = |f: Field| properties.iter().any(|(_, p)| *p == f);
    for (field, name) in [
        (Field::Position(0), "x"),
        (Field::Position(1), "y"),
        (Field::Position(2), "z"),
        (Field::FDc(0), "f_dc_0"),
        (Field::FDc(1), "f_dc_1"),
        (Field::FDc(2), "f_dc_2"),
        (Field::Opacity, "opacity"),
        (Field::Scale(0), "scale_0"),
        (Field::Scale(1), "scale_1"),
        (Field::Scale(2), "scale_2"),
        (Field::Rot(0), "rot_0"),
        (Field::Rot(1), "rot_1"),
        (Field::Rot(2), "rot_2"),
        (Field::Rot(3), "rot_3"),
    ] {
        if !have(field) {
            missing.push(name);
        }
    }
    if !missing.is_empty() {
        return Err(PlyError::MalformedHeader(format!(
            "missing required vertex properties: {}",
            missing.join(", ")
        )));
    }

    f_rest_indices.sort_unstable();
    let sh_rest_dims = f_rest_indices.len();
    if f_rest_indices.iter().enumerate().any(|(i, &k)| i != k) {
        return Err(PlyError::MalformedHeader(
            "f_rest_* indices are not contiguous from 0".into(),
        ));
    }

    Ok(Header {
        encoding,
        vertex_count,
        properties,
        field_layout,
        sh_rest_dims,
        body_offset,
    })
}

/// Loads a splat scene from a PLY file with the conventional splat vertex
/// properties. Property discovery is by name, not position.
pub fn load_splat_ply(path: &Path) -> Result<SplatScene, PlyError> {
    let bytes = fs::read(path)?;
    load_splat_ply_bytes(&bytes)
}

/// [`load_splat_ply`] over an in-memory buffer.
pub fn load_splat_ply_bytes(bytes: &[u8]) -> Result<SplatScene, PlyError> {
    let header = parse_header(bytes)?;
    let n = header.vertex_count;
    let mut raw = Vec::with_capacity(n);
    let mut sh_rest = vec![0f32; n * header.sh_rest_dims];

    match header.encoding {
        Encoding::BinaryLittleEndian => {
            let stride: usize = header.properties.iter().map(|(s, _)| s).sum();
            let body = &bytes[header.body_offset..];
            if body.len() < n * stride {
                return Err(PlyError::TruncatedBody {
                    expected: n,
                    found: body.len() / stride.max(1),
                });
            }
            for i in 0..n {
                let mut offset = i * stride;
                let mut splat = RawSplat::default();
                for (size, field) in &header.properties {
                    if !matches!(field, Field::Ignored) {
                        let v = f32::from_le_bytes(
                            body[offset..offset + 4].try_into().expect("float32 field"),
                        );
                        store(&mut splat, &mut sh_rest, header.sh_rest_dims, i, *field, v);
                    }
                    offset += size;
                }
                raw.push(splat);
            }
        }
        Encoding::Ascii => {
            let text = std::str::from_utf8(&bytes[header.body_offset..])
                .map_err(|_| PlyError::MalformedHeader("ascii body is not valid utf-8".into()))?;
            let mut lines = text.lines().filter(|l| !l.trim().is_empty());
            for i in 0..n {
                let line = lines.next().ok_or(PlyError::TruncatedBody {
                    expected: n,
                    found: i,
                })?;
                let mut tokens = line.split_whitespace();
                let mut splat = RawSplat::default();
                for (_, field) in &header.properties {
                    let tok = tokens.next().ok_or(PlyError::TruncatedBody {
                        expected: n,
                        found: i,
                    })?;
                    if !matches!(field, Field::Ignored) {
                        let v: f32 = tok.parse().map_err(|_| {
                            PlyError::MalformedHeader(format!(
                                "vertex {i}: cannot parse {tok:?} as float"
                            ))
                        })?;
                        store(&mut splat, &mut sh_rest, header.sh_rest_dims, i, *field, v);
                    }
                }
                raw.push(splat);
            }
        }
    }

    // Validate activation once so downstream access is infallible.
    for (index, r) in raw.iter().enumerate() {
        activate(r).map_err(|source| PlyError::InvalidVertex { index, source })?;
    }

    Ok(SplatScene {
        raw,
        sh_rest,
        sh_rest_dims: header.sh_rest_dims,
        field_layout: header.field_layout,
    })
}

impl Default for RawSplat {
    fn default() -> Self {
        Self {
            position: [0.0; 3],
            f_dc: [0.0; 3],
            opacity: 0.0,
            scale: [0.0; 3],
            rot: [1.0, 0.0, 0.0, 0.0],
        }
    }
}

fn store(
    splat: &mut RawSplat,
    sh_rest: &mut [f32],
    sh_rest_dims: usize,
    vertex: usize,
    field: Field,
    v: f32,
) {
    match field {
        Field::Position(k) => splat.position[k] = v,
        Field::FDc(k) => splat.f_dc[k] = v,
        Field::FRest(k) => sh_rest[vertex * sh_rest_dims + k] = v,
        Field::Opacity => splat.opacity = v,
        Field::Scale(k) => splat.scale[k] = v,
        Field::Rot(k) => splat.rot[k] = v,
        Field::Ignored => {}
    }
}

fn field_value(scene: &SplatScene, i: usize, name: &str) -> f32 {
    let r = &scene.raw[i];
    match classify(name).expect("layout contains only recognized names") {
        Field::Position(k) => r.position[k],
        Field::FDc(k) => r.f_dc[k],
        Field::FRest(k) => scene.sh_rest[i * scene.sh_rest_dims + k],
        Field::Opacity => r.opacity,
        Field::Scale(k) => r.scale[k],
        Field::Rot(k) => r.rot[k],
        Field::Ignored => unreachable!("ignored fields are not in the layout"),
    }
}

/// Writes a scene as binary little-endian splat PLY.
///
/// With `selection` and no color, only the selected splats are written (in
/// ascending index order). With `highlight_color`, all splats are written
/// and the selected ones have their zeroth SH band replaced by the color.
pub fn write_splat_ply(
    scene: &SplatScene,
    path: &Path,
    selection: Option<&[usize]>,
    highlight_color: Option<[f64; 3]>,
) -> Result<(), PlyError> {
    if let Some(sel) = selection {
        if let Some(&bad) = sel.iter().find(|&&i| i >= scene.len()) {
            return Err(PlyError::SelectionOutOfRange {
                index: bad,
                len: scene.len(),
            });
        }
    }

    let mut sorted_selection: Vec<usize> = selection.map(<[usize]>::to_vec).unwrap_or_default();
    sorted_selection.sort_unstable();
    sorted_selection.dedup();

    let highlight_fdc = highlight_color.map(|rgb| rgb.map(rgb_to_sh));
    let is_selected = |i: usize| sorted_selection.binary_search(&i).is_ok();

    let indices: Vec<usize> = match (selection, highlight_color) {
        (Some(_), None) => sorted_selection.clone(),
        _ => (0..scene.len()).collect(),
    };

    let file = fs::File::create(path)?;
    let mut w = BufWriter::new(file);
    writeln!(w, "ply")?;
    writeln!(w, "format binary_little_endian 1.0")?;
    writeln!(w, "element vertex {}", indices.len())?;
    for name in &scene.field_layout {
        writeln!(w, "property float {name}")?;
    }
    writeln!(w, "end_header")?;

    for &i in &indices {
        let recolor = match (&highlight_fdc, is_selected(i)) {
            (Some(fdc), true) => Some(*fdc),
            _ => None,
        };
        for name in &scene.field_layout {
            let v = match (recolor, classify(name)) {
                (Some(fdc), Some(Field::FDc(k))) => fdc[k],
                _ => field_value(scene, i, name),
            };
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use tempfile::tempdir;

    /// Hand-composed binary PLY with the canonical 14 float properties.
    fn one_vertex_binary() -> Vec<u8> {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"ply\nformat binary_little_endian 1.0\nelement vertex 1\n");
        for name in canonical_layout(0) {
            bytes.extend_from_slice(format!("property float {name}\n").as_bytes());
        }
        bytes.extend_from_slice(b"end_header\n");
        let values: [f32; 14] = [
            1.0, 2.0, 3.0, // x y z
            0.0, 0.0, 0.0, // f_dc
            0.0, // opacity logit
            0.0, 0.0, 0.0, // log scales
            1.0, 0.0, 0.0, 0.0, // quaternion wxyz
        ];
        for v in values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        bytes
    }

    #[test]
    fn empty_scene_from_zero_vertex_header() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"ply\nformat binary_little_endian 1.0\nelement vertex 0\n");
        for name in canonical_layout(0) {
            bytes.extend_from_slice(format!("property float {name}\n").as_bytes());
        }
        bytes.extend_from_slice(b"end_header\n");
        let scene = load_splat_ply_bytes(&bytes).unwrap();
        assert_eq!(scene.len(), 0);
    }

    #[test]
    fn one_vertex_binary_activates() {
        let scene = load_splat_ply_bytes(&one_vertex_binary()).unwrap();
        assert_eq!(scene.len(), 1);
        let s = scene.splat(0);
        assert_eq!(s.position, Vector3::new(1.0, 2.0, 3.0));
        assert_eq!(s.alpha(), 0.5);
        assert_eq!(s.scale(), Vector3::new(1.0, 1.0, 1.0));
        let cov = crate::geometry::covariance_world(&s);
        assert_relative_eq!(cov, nalgebra::Matrix3::identity(), epsilon = 1e-12);
        assert_relative_eq!(s.color, Vector3::new(0.5, 0.5, 0.5), epsilon = 1e-12);
    }

    #[test]
    fn binary_round_trip_is_byte_identical() {
        let dir = tempdir().unwrap();
        let scene = SplatScene::from_splats(&test_splats());
        let a = dir.path().join("a.ply");
        let b = dir.path().join("b.ply");
        write_splat_ply(&scene, &a, None, None).unwrap();
        let reloaded = load_splat_ply(&a).unwrap();
        write_splat_ply(&reloaded, &b, None, None).unwrap();
        assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    }

    #[test]
    fn ascii_and_binary_agree() {
        let mut ascii = Vec::new();
        ascii.extend_from_slice(b"ply\nformat ascii 1.0\nelement vertex 1\n");
        for name in canonical_layout(0) {
            ascii.extend_from_slice(format!("property float {name}\n").as_bytes());
        }
        ascii.extend_from_slice(b"end_header\n");
        ascii.extend_from_slice(b"1 2 3 0 0 0 0 0 0 0 1 0 0 0\n");
        let from_ascii = load_splat_ply_bytes(&ascii).unwrap();
        let from_binary = load_splat_ply_bytes(&one_vertex_binary()).unwrap();
        assert_eq!(from_ascii.raw(0), from_binary.raw(0));
    }

    #[test]
    fn header_errors() {
        let err = load_splat_ply_bytes(b"not a ply").unwrap_err();
        assert!(matches!(err, PlyError::MalformedHeader(_)));

        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"ply\nformat binary_big_endian 1.0\nelement vertex 0\n");
        bytes.extend_from_slice(b"property float x\nend_header\n");
        let err = load_splat_ply_bytes(&bytes).unwrap_err();
        assert!(matches!(err, PlyError::UnsupportedEncoding(_)));

        // Missing most properties: the error should list them.
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"ply\nformat binary_little_endian 1.0\nelement vertex 0\n");
        bytes.extend_from_slice(b"property float x\nproperty float y\nend_header\n");
        let err = load_splat_ply_bytes(&bytes).unwrap_err();
        match err {
            PlyError::MalformedHeader(msg) => {
                assert!(msg.contains("z"), "missing-property list: {msg}");
                assert!(msg.contains("rot_3"), "missing-property list: {msg}");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn truncated_body_is_detected() {
        let mut bytes = one_vertex_binary();
        // Claim two vertices but supply one.
        let pos = bytes
            .windows(16)
            .position(|w| w == b"element vertex 1")
            .unwrap();
        bytes[pos + 15] = b'2';
        let err = load_splat_ply_bytes(&bytes).unwrap_err();
        assert!(matches!(
            err,
            PlyError::TruncatedBody {
                expected: 2,
                found: 1
            }
        ));
    }

    #[test]
    fn normals_are_skipped() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"ply\nformat binary_little_endian 1.0\nelement vertex 1\n");
        bytes.extend_from_slice(b"property float x\nproperty float y\nproperty float z\n");
        bytes.extend_from_slice(b"property float nx\nproperty float ny\nproperty float nz\n");
        for name in canonical_layout(0).into_iter().skip(3) {
            bytes.extend_from_slice(format!("property float {name}\n").as_bytes());
        }
        bytes.extend_from_slice(b"end_header\n");
        let values: [f32; 17] = [
            4.0, 5.0, 6.0, // position
            9.0, 9.0, 9.0, // normals, ignored
            0.1, 0.2, 0.3, // f_dc
            0.5, // opacity
            -0.1, -0.2, -0.3, // scales
            0.5, 0.5, 0.5, 0.5, // quaternion
        ];
        for v in values {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let scene = load_splat_ply_bytes(&bytes).unwrap();
        assert_eq!(scene.raw(0).position, [4.0, 5.0, 6.0]);
        assert_eq!(scene.raw(0).f_dc, [0.1, 0.2, 0.3]);
        assert!(!scene.field_layout().iter().any(|n| n.starts_with('n')));
    }

    #[test]
    fn sh_rest_preserved_verbatim() {
        let mut bytes = Vec::new();
        bytes.extend_from_slice(b"ply\nformat binary_little_endian 1.0\nelement vertex 2\n");
        for name in canonical_layout(9) {
            bytes.extend_from_slice(format!("property float {name}\n").as_bytes());
        }
        bytes.extend_from_slice(b"end_header\n");
        for i in 0..2 {
            let base = [0.0f32, 0.0, 0.0, 0.0, 0.0, 0.0];
            for v in base {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
            for k in 0..9 {
                bytes.extend_from_slice(&((i * 100 + k) as f32).to_le_bytes());
            }
            let tail = [0.0f32, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0];
            for v in tail {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        let scene = load_splat_ply_bytes(&bytes).unwrap();
        assert_eq!(scene.sh_rest_dims(), 9);

        let dir = tempdir().unwrap();
        let path = dir.path().join("rest.ply");
        write_splat_ply(&scene, &path, None, None).unwrap();
        let reloaded = load_splat_ply(&path).unwrap();
        assert_eq!(reloaded.sh_rest, scene.sh_rest);
        // Byte identity with f_rest payload in place.
        let again = dir.path().join("rest2.ply");
        write_splat_ply(&reloaded, &again, None, None).unwrap();
        assert_eq!(fs::read(&path).unwrap(), fs::read(&again).unwrap());
    }

    fn test_splats() -> Vec<GaussianSplat> {
        vec![
            GaussianSplat::new(
                Vector3::new(0.0, 0.0, 5.0),
                Vector3::new(-0.5, -0.2, -0.8),
                [0.9, 0.1, 0.3, 0.2],
                0.7,
                Vector3::new(0.2, 0.4, 0.6),
            )
            .unwrap(),
            GaussianSplat::new(
                Vector3::new(1.0, -1.0, 6.0),
                Vector3::new(0.1, 0.0, -0.3),
                [1.0, 0.0, 0.0, 0.0],
                -0.4,
                Vector3::new(0.8, 0.1, 0.1),
            )
            .unwrap(),
            GaussianSplat::new(
                Vector3::new(-1.0, 1.0, 4.0),
                Vector3::new(-1.0, -1.0, -1.0),
                [0.7, 0.7, 0.0, 0.0],
                1.2,
                Vector3::new(0.5, 0.5, 0.9),
            )
            .unwrap(),
        ]
    }

    #[test]
    fn selection_without_color_writes_subset() {
        let dir = tempdir().unwrap();
        let scene = SplatScene::from_splats(&test_splats());

        // All indices: equal scene.
        let all = dir.path().join("all.ply");
        write_splat_ply(&scene, &all, Some(&[0, 1, 2]), None).unwrap();
        let reloaded = load_splat_ply(&all).unwrap();
        assert_eq!(reloaded.len(), 3);
        for i in 0..3 {
            assert_eq!(reloaded.raw(i), scene.raw(i));
        }

        // Empty selection: valid 0-vertex file.
        let none = dir.path().join("none.ply");
        write_splat_ply(&scene, &none, Some(&[]), None).unwrap();
        assert_eq!(load_splat_ply(&none).unwrap().len(), 0);

        // Subset keeps file order.
        let some = dir.path().join("some.ply");
        write_splat_ply(&scene, &some, Some(&[2, 0]), None).unwrap();
        let sub = load_splat_ply(&some).unwrap();
        assert_eq!(sub.len(), 2);
        assert_eq!(sub.raw(0), scene.raw(0));
        assert_eq!(sub.raw(1), scene.raw(2));
    }

    #[test]
    fn highlight_recolors_selected_only() {
        let dir = tempdir().unwrap();
        let scene = SplatScene::from_splats(&test_splats());
        let path = dir.path().join("red.ply");
        write_splat_ply(&scene, &path, Some(&[1]), Some([1.0, 0.0, 0.0])).unwrap();
        let reloaded = load_splat_ply(&path).unwrap();
        assert_eq!(reloaded.len(), 3);
        assert_relative_eq!(
            reloaded.splat(1).color,
            Vector3::new(1.0, 0.0, 0.0),
            epsilon = 1e-6
        );
        assert_eq!(reloaded.raw(0), scene.raw(0));
        assert_eq!(reloaded.raw(2), scene.raw(2));
        // Non-color fields of the recolored splat are untouched.
        assert_eq!(reloaded.raw(1).position, scene.raw(1).position);
        assert_eq!(reloaded.raw(1).rot, scene.raw(1).rot);
    }

    #[test]
    fn selection_out_of_range_is_an_error() {
        let dir = tempdir().unwrap();
        let scene = SplatScene::from_splats(&test_splats());
        let path = dir.path().join("oob.ply");
        let err = write_splat_ply(&scene, &path, Some(&[7]), None).unwrap_err();
        assert!(matches!(
            err,
            PlyError::SelectionOutOfRange { index: 7, len: 3 }
        ));
    }
}
