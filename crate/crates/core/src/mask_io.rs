//! Binary 2D masks: loading from raster images, nearest-neighbor rescale,
//! polygon rasterization, and saving.

use std::path::Path;

use crate::geometry::GeometryError;

/// Luminance above which a pixel counts as inside the mask. Masks from
/// segmentation networks are near-binary; mid-gray edges split here.
pub const BINARIZE_THRESHOLD: u8 = 127;

#[derive(Debug, thiserror::Error)]
pub enum MaskError {
    #[error("mask i/o failed for {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: image::ImageError,
    },
    #[error("degenerate polygon: {0}")]
    DegeneratePolygon(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Binary pixel grid aligned to a camera view's image.
///
/// The bounding box of set bits is kept up to date; `None` means the mask is
/// empty.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Mask2D {
    width: u32,
    height: u32,
    bits: Vec<bool>,
    bounding_box: Option<BoundingBox>,
}

/// Inclusive pixel rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub min_x: u32,
    pub min_y: u32,
    pub max_x: u32,
    pub max_y: u32,
}

impl BoundingBox {
    pub fn width(&self) -> u32 {
        self.max_x - self.min_x + 1
    }

    pub fn height(&self) -> u32 {
        self.max_y - self.min_y + 1
    }
}

impl Mask2D {
    pub fn new_empty(width: u32, height: u32) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        Self {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
            bounding_box: None,
        }
    }

    /// Builds a mask from a row-major bit grid, computing the bounding box.
    pub fn from_bits(width: u32, height: u32, bits: Vec<bool>) -> Self {
        assert!(width > 0 && height > 0, "mask dimensions must be positive");
        assert_eq!(bits.len(), width as usize * height as usize);
        let mut mask = Self {
            width,
            height,
            bits,
            bounding_box: None,
        };
        mask.recompute_bounding_box();
        mask
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn bounding_box(&self) -> Option<BoundingBox> {
        self.bounding_box
    }

    pub fn is_empty(&self) -> bool {
        self.bounding_box.is_none()
    }

    pub fn count_set(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        debug_assert!(x < self.width && y < self.height);
        self.bits[y as usize * self.width as usize + x as usize]
    }

    /// Bit test with bounds check; coordinates outside the grid are unset.
    #[inline]
    pub fn contains(&self, x: i64, y: i64) -> bool {
        x >= 0
            && y >= 0
            && (x as u32) < self.width
            && (y as u32) < self.height
            && self.bits[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: bool) {
        debug_assert!(x < self.width && y < self.height);
        self.bits[y as usize * self.width as usize + x as usize] = value;
        // Cheap incremental update only for setting; clearing recomputes.
        match (&mut self.bounding_box, value) {
            (Some(bb), true) => {
                bb.min_x = bb.min_x.min(x);
                bb.min_y = bb.min_y.min(y);
                bb.max_x = bb.max_x.max(x);
                bb.max_y = bb.max_y.max(y);
            }
            (None, true) => {
                self.bounding_box = Some(BoundingBox {
                    min_x: x,
                    min_y: y,
                    max_x: x,
                    max_y: y,
                });
            }
            (_, false) => self.recompute_bounding_box(),
        }
    }

    fn recompute_bounding_box(&mut self) {
        let mut bb: Option<BoundingBox> = None;
        for y in 0..self.height {
            for x in 0..self.width {
                if self.bits[y as usize * self.width as usize + x as usize] {
                    match &mut bb {
                        Some(b) => {
                            b.min_x = b.min_x.min(x);
                            b.min_y = b.min_y.min(y);
                            b.max_x = b.max_x.max(x);
                            b.max_y = b.max_y.max(y);
                        }
                        None => {
                            bb = Some(BoundingBox {
                                min_x: x,
                                min_y: y,
                                max_x: x,
                                max_y: y,
                            })
                        }
                    }
                }
            }
        }
        self.bounding_box = bb;
    }

    /// Nearest-neighbor rescale; preserves binarity by construction.
    pub fn rescale(&self, width: u32, height: u32) -> Mask2D {
        let mut bits = vec![false; width as usize * height as usize];
        for y in 0..height {
            // Map destination pixel centers back into the source grid.
            let sy = (((y as f64 + 0.5) * self.height as f64 / height as f64) as u32)
                .min(self.height - 1);
            for x in 0..width {
                let sx = (((x as f64 + 0.5) * self.width as f64 / width as f64) as u32)
                    .min(self.width - 1);
                bits[y as usize * width as usize + x as usize] = self.get(sx, sy);
            }
        }
        Mask2D::from_bits(width, height, bits)
    }

    /// Pixels set in `self` but not in `other` (equal dimensions assumed).
    pub fn difference_count(&self, other: &Mask2D) -> usize {
        self.bits
            .iter()
            .zip(&other.bits)
            .filter(|(a, b)| **a && !**b)
            .count()
    }
}

/// Loads a mask from a raster image: a pixel is inside iff its luminance
/// exceeds [`BINARIZE_THRESHOLD`]. When `expected_size` differs from the
/// file's size the mask is rescaled (nearest-neighbor) to match; an empty
/// mask is a valid result, not an error.
pub fn load_mask(path: &Path, expected_size: Option<(u32, u32)>) -> Result<Mask2D, MaskError> {
    let img = image::open(path)
        .map_err(|source| MaskError::Io {
            path: path.display().to_string(),
            source,
        })?
        .into_luma8();
    let (w, h) = img.dimensions();
    let bits = img.pixels().map(|p| p.0[0] > BINARIZE_THRESHOLD).collect();
    let mask = Mask2D::from_bits(w, h, bits);
    match expected_size {
        Some((ew, eh)) if (ew, eh) != (w, h) => {
            log::warn!(
                "mask {} is {w}x{h}, rescaling to view size {ew}x{eh}",
                path.display()
            );
            Ok(mask.rescale(ew, eh))
        }
        _ => Ok(mask),
    }
}

/// Writes the mask as an 8-bit grayscale PNG (0 / 255).
pub fn save_mask(mask: &Mask2D, path: &Path) -> Result<(), MaskError> {
    let img = image::GrayImage::from_fn(mask.width(), mask.height(), |x, y| {
        image::Luma([if mask.get(x, y) { 255u8 } else { 0u8 }])
    });
    img.save(path).map_err(|source| MaskError::Io {
        path: path.display().to_string(),
        source,
    })
}

/// Rasterizes a polygon onto a `width` x `height` grid: a bit is set iff the
/// pixel center lies inside under the even-odd rule. Vertices are in pixel
/// coordinates.
pub fn rasterize_polygon(
    polygon: &[[f64; 2]],
    width: u32,
    height: u32,
) -> Result<Mask2D, MaskError> {
    if polygon.len() < 3 {
        return Err(MaskError::DegeneratePolygon(format!(
            "{} vertices, need at least 3",
            polygon.len()
        )));
    }
    let area2: f64 = polygon
        .iter()
        .zip(polygon.iter().cycle().skip(1))
        .map(|(p, q)| p[0] * q[1] - q[0] * p[1])
        .sum();
    if area2 == 0.0 {
        return Err(MaskError::DegeneratePolygon("zero area".into()));
    }

    let mut mask = Mask2D::new_empty(width, height);
    let mut crossings: Vec<f64> = Vec::new();
    for y in 0..height {
        let py = y as f64 + 0.5;
        crossings.clear();
        for (p, q) in polygon.iter().zip(polygon.iter().cycle().skip(1)) {
            let (y0, y1) = (p[1], q[1]);
            if (y0 > py) != (y1 > py) {
                let t = (py - y0) / (y1 - y0);
                crossings.push(p[0] + t * (q[0] - p[0]));
            }
        }
        crossings.sort_by(f64::total_cmp);
        // Even-odd: fill between consecutive crossing pairs.
        for pair in crossings.chunks_exact(2) {
            let (x0, x1) = (pair[0], pair[1]);
            // Pixel centers x + 0.5 in (x0, x1).
            let start = (x0 - 0.5).ceil().max(0.0) as i64;
            let end = ((x1 - 0.5).floor() as i64).min(width as i64 - 1);
            for x in start..=end {
                let center = x as f64 + 0.5;
                if center > x0 && center < x1 {
                    mask.set(x as u32, y, true);
                }
            }
        }
    }
    Ok(mask)
}

#[cfg(test)]
mod tests {
    use super::*;
    use tempfile::tempdir;

    #[test]
    fn empty_and_full_masks() {
        let empty = Mask2D::new_empty(4, 4);
        assert!(empty.is_empty());
        assert_eq!(empty.count_set(), 0);
        assert_eq!(empty.bounding_box(), None);

        let full = Mask2D::from_bits(4, 4, vec![true; 16]);
        assert_eq!(full.count_set(), 16);
        assert_eq!(
            full.bounding_box(),
            Some(BoundingBox {
                min_x: 0,
                min_y: 0,
                max_x: 3,
                max_y: 3
            })
        );
    }

    #[test]
    fn load_mask_binarizes_and_rescales() {
        let dir = tempdir().unwrap();

        let black = dir.path().join("black.png");
        image::GrayImage::from_pixel(6, 4, image::Luma([0]))
            .save(&black)
            .unwrap();
        let mask = load_mask(&black, None).unwrap();
        assert!(mask.is_empty());

        let white = dir.path().join("white.png");
        image::GrayImage::from_pixel(4, 4, image::Luma([255]))
            .save(&white)
            .unwrap();
        let mask = load_mask(&white, None).unwrap();
        assert_eq!(mask.count_set(), 16);

        // Threshold sits exactly at 127: 127 is out, 128 is in.
        let gray = dir.path().join("gray.png");
        let mut img = image::GrayImage::from_pixel(2, 1, image::Luma([127]));
        img.put_pixel(1, 0, image::Luma([128]));
        img.save(&gray).unwrap();
        let mask = load_mask(&gray, None).unwrap();
        assert!(!mask.get(0, 0));
        assert!(mask.get(1, 0));
    }

    #[test]
    fn checkerboard_upscale_blocks() {
        let mut src = Mask2D::new_empty(4, 4);
        for y in 0..4 {
            for x in 0..4 {
                if (x + y) % 2 == 0 {
                    src.set(x, y, true);
                }
            }
        }
        let up = src.rescale(8, 8);
        for y in 0..8u32 {
            for x in 0..8u32 {
                assert_eq!(up.get(x, y), src.get(x / 2, y / 2));
            }
        }
    }

    #[test]
    fn save_load_round_trip() {
        let dir = tempdir().unwrap();
        let path = dir.path().join("mask.png");
        let mut mask = Mask2D::new_empty(9, 7);
        mask.set(1, 1, true);
        mask.set(8, 6, true);
        mask.set(4, 3, true);
        save_mask(&mask, &path).unwrap();
        let loaded = load_mask(&path, None).unwrap();
        assert_eq!(loaded, mask);
    }

    #[test]
    fn polygon_square_pixel_count() {
        let square = [[0.0, 0.0], [10.0, 0.0], [10.0, 10.0], [0.0, 10.0]];
        let mask = rasterize_polygon(&square, 20, 20).unwrap();
        assert_eq!(mask.count_set(), 100);
        let bb = mask.bounding_box().unwrap();
        assert_eq!((bb.min_x, bb.min_y, bb.max_x, bb.max_y), (0, 0, 9, 9));
    }

    #[test]
    fn polygon_outside_canvas_is_empty() {
        let tri = [[30.0, 30.0], [40.0, 30.0], [35.0, 40.0]];
        let mask = rasterize_polygon(&tri, 20, 20).unwrap();
        assert!(mask.is_empty());
    }

    #[test]
    fn polygon_covering_canvas_sets_all_bits() {
        let rect = [[-1.0, -1.0], [21.0, -1.0], [21.0, 21.0], [-1.0, 21.0]];
        let mask = rasterize_polygon(&rect, 20, 20).unwrap();
        assert_eq!(mask.count_set(), 400);
    }

    #[test]
    fn polygon_degenerate_inputs() {
        assert!(matches!(
            rasterize_polygon(&[[0.0, 0.0], [1.0, 1.0]], 4, 4),
            Err(MaskError::DegeneratePolygon(_))
        ));
        // Collinear: zero area.
        assert!(matches!(
            rasterize_polygon(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]], 4, 4),
            Err(MaskError::DegeneratePolygon(_))
        ));
    }

    #[test]
    fn polygon_invariant_under_rotation_and_reversal() {
        let poly = [[2.0, 1.0], [14.0, 3.0], [10.0, 12.0], [4.0, 9.0]];
        let base = rasterize_polygon(&poly, 16, 16).unwrap();

        let rotated = [[14.0, 3.0], [10.0, 12.0], [4.0, 9.0], [2.0, 1.0]];
        assert_eq!(rasterize_polygon(&rotated, 16, 16).unwrap(), base);

        let mut reversed = poly;
        reversed.reverse();
        assert_eq!(rasterize_polygon(&reversed, 16, 16).unwrap(), base);
    }

    #[test]
    fn concave_polygon_even_odd() {
        // C shape: the notch between the arms must stay unset.
        let poly = [
            [0.0, 0.0],
            [12.0, 0.0],
            [12.0, 4.0],
            [4.0, 4.0],
            [4.0, 8.0],
            [12.0, 8.0],
            [12.0, 12.0],
            [0.0, 12.0],
        ];
        let mask = rasterize_polygon(&poly, 16, 16).unwrap();
        assert!(mask.get(2, 6));
        assert!(!mask.get(8, 6));
        assert!(mask.get(8, 2));
        assert!(mask.get(8, 10));
    }
}
