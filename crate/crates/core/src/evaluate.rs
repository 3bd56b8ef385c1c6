//! Evaluation of a selected subset against a ground-truth mask: hull
//! construction over the back-projected footprint union, polygon
//! rasterization, and pixel metrics (IoU, F1, accuracy).

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::camera_io::CameraView;
use crate::mask_io::{self, Mask2D, MaskError};
use crate::rasterizer::{self, ProjectionParams, RasterError};
use crate::scene_io::SplatScene;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("degenerate hull input: {0}")]
    DegenerateInput(String),
    #[error("mask dimensions differ: {pred_w}x{pred_h} vs {gt_w}x{gt_h}")]
    DimensionMismatch {
        pred_w: u32,
        pred_h: u32,
        gt_w: u32,
        gt_h: u32,
    },
    #[error(transparent)]
    Raster(#[from] RasterError),
    #[error(transparent)]
    Mask(#[from] MaskError),
}

/// Hull applied to the back-projected shape union before comparison.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HullKind {
    None,
    Convex,
    /// k-nearest-neighbor concave hull with the given neighborhood size.
    Concave,
}

/// Pixel-level comparison of a predicted mask against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub iou: f64,
    pub f1: f64,
    pub accuracy: f64,
    #[serde(rename = "tp")]
    pub true_positives: usize,
    #[serde(rename = "fp")]
    pub false_positives: usize,
    #[serde(rename = "fn")]
    pub false_negatives: usize,
    #[serde(rename = "tn")]
    pub true_negatives: usize,
    pub hull_kind: HullKind,
    pub timing_ms: f64,
}

/// IoU, F1 and pixel accuracy of `pred` against `gt`. Two empty masks
/// compare as a perfect match.
pub fn compare_masks(pred: &Mask2D, gt: &Mask2D) -> Result<MetricsReport, EvalError> {
    if (pred.width(), pred.height()) != (gt.width(), gt.height()) {
        return Err(EvalError::DimensionMismatch {
            pred_w: pred.width(),
            pred_h: pred.height(),
            gt_w: gt.width(),
            gt_h: gt.height(),
        });
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0usize, 0usize, 0usize, 0usize);
    for y in 0..pred.height() {
        for x in 0..pred.width() {
            match (pred.get(x, y), gt.get(x, y)) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => tn += 1,
            }
        }
    }
    let union = tp + fp + fn_;
    let iou = if union == 0 {
        1.0
    } else {
        tp as f64 / union as f64
    };
    let f1 = if union == 0 {
        1.0
    } else {
        2.0 * tp as f64 / (2 * tp + fp + fn_) as f64
    };
    let total = (tp + fp + fn_ + tn) as f64;
    Ok(MetricsReport {
        iou,
        f1,
        accuracy: (tp + tn) as f64 / total,
        true_positives: tp,
        false_positives: fp,
        false_negatives: fn_,
        true_negatives: tn,
        hull_kind: HullKind::None,
        timing_ms: 0.0,
    })
}

fn cross(o: [f64; 2], a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Minimal convex polygon containing all points: monotone chain,
/// counterclockwise, collinear vertices dropped. Starts at the
/// lexicographically smallest point.
pub fn convex_hull(points: &[[f64; 2]]) -> Result<Vec<[f64; 2]>, EvalError> {
    let mut pts: Vec<[f64; 2]> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return Err(EvalError::DegenerateInput(format!(
            "{} distinct points, need at least 3",
            pts.len()
        )));
    }

    let mut lower: Vec<[f64; 2]> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && cross(lower[lower.len() - 2], lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<[f64; 2]> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && cross(upper[upper.len() - 2], upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.len() < 3 {
        return Err(EvalError::DegenerateInput("all points collinear".into()));
    }
    Ok(lower)
}

/// Signed area via the shoelace formula; positive for counterclockwise.
pub fn polygon_area(polygon: &[[f64; 2]]) -> f64 {
    0.5 * polygon
        .iter()
        .zip(polygon.iter().cycle().skip(1))
        .map(|(p, q)| p[0] * q[1] - q[0] * p[1])
        .sum::<f64>()
}

fn on_segment(p: [f64; 2], a: [f64; 2], b: [f64; 2]) -> bool {
    cross(a, b, p).abs() < 1e-12
        && p[0] >= a[0].min(b[0]) - 1e-12
        && p[0] <= a[0].max(b[0]) + 1e-12
        && p[1] >= a[1].min(b[1]) - 1e-12
        && p[1] <= a[1].max(b[1]) + 1e-12
}

/// Whether segments (a, b) and (c, d) share any point, including collinear
/// overlap and endpoint touches.
fn segments_intersect(a: [f64; 2], b: [f64; 2], c: [f64; 2], d: [f64; 2]) -> bool {
    let d1 = cross(c, d, a);
    let d2 = cross(c, d, b);
    let d3 = cross(a, b, c);
    let d4 = cross(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0))
        && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0))
    {
        return true;
    }
    on_segment(a, c, d) || on_segment(b, c, d) || on_segment(c, a, b) || on_segment(d, a, b)
}

/// Even-odd point-in-polygon with boundary points counted inside.
pub fn polygon_contains(polygon: &[[f64; 2]], p: [f64; 2]) -> bool {
    let mut inside = false;
    for (a, b) in polygon.iter().zip(polygon.iter().cycle().skip(1)) {
        if on_segment(p, *a, *b) {
            return true;
        }
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let t = (p[1] - a[1]) / (b[1] - a[1]);
            let x = a[0] + t * (b[0] - a[0]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    inside
}

/// Rotate so the polygon starts at its lexicographically smallest vertex and
/// runs counterclockwise.
fn canonicalize(mut polygon: Vec<[f64; 2]>) -> Vec<[f64; 2]> {
    if polygon_area(&polygon) < 0.0 {
        polygon.reverse();
    }
    let start = polygon
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])))
        .map(|(i, _)| i)
        .unwrap_or(0);
    polygon.rotate_left(start);
    polygon
}

/// k-nearest-neighbor concave hull: a simple polygon containing all input
/// points. If construction fails at `k`, the neighborhood is doubled and
/// retried, falling back to [`convex_hull`] once `k` reaches the point
/// count.
pub fn concave_hull(points: &[[f64; 2]], k: usize) -> Result<Vec<[f64; 2]>, EvalError> {
    let mut pts: Vec<[f64; 2]> = points.to_vec();
    pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
    pts.dedup();
    if pts.len() < 3 {
        return Err(EvalError::DegenerateInput(format!(
            "{} distinct points, need at least 3",
            pts.len()
        )));
    }
    let mut k = k.max(3);
    loop {
        if k >= pts.len() {
            return Ok(canonicalize(convex_hull(&pts)?));
        }
        if let Some(hull) = try_knn_hull(&pts, k) {
            return Ok(canonicalize(hull));
        }
        k = (k * 2).min(pts.len());
    }
}

/// One attempt of the k-nearest-neighbor walk. `None` means this `k` failed
/// (walk stuck, or the closed polygon does not contain every point).
fn try_knn_hull(pts: &[[f64; 2]], k: usize) -> Option<Vec<[f64; 2]>> {
    // Start at the lowest point; walk clockwise with the interior on the
    // right-hand side.
    let first = pts
        .iter()
        .enumerate()
        .min_by(|(_, a), (_, b)| a[1].total_cmp(&b[1]).then(a[0].total_cmp(&b[0])))
        .map(|(i, _)| i)?;

    let mut available: Vec<bool> = vec![true; pts.len()];
    available[first] = false;
    let mut hull: Vec<[f64; 2]> = vec![pts[first]];
    let mut current = pts[first];
    // Virtual previous point due -x of the start; nothing lies below the
    // start, so the first move sweeps up the left side of the set.
    let mut prev_angle = std::f64::consts::PI;

    let max_steps = pts.len() * 4;
    for _ in 0..max_steps {
        let reopen_first = hull.len() >= 4;
        // k nearest available candidates (plus the start point once the
        // hull can legally close).
        let mut candidates: Vec<(f64, usize)> = pts
            .iter()
            .enumerate()
            .filter(|(i, _)| available[*i] || (reopen_first && *i == first))
            .map(|(i, p)| {
                let d2 = (p[0] - current[0]).powi(2) + (p[1] - current[1]).powi(2);
                (d2, i)
            })
            .collect();
        if candidates.is_empty() {
            break;
        }
        candidates.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        candidates.truncate(k);

        // Hug the empty side: smallest clockwise deviation from the reverse
        // of the incoming edge first, nearer candidates breaking angle ties
        // so collinear runs are not skipped over.
        let mut ranked: Vec<(f64, f64, usize)> = candidates
            .iter()
            .map(|&(d2, i)| {
                let angle =
                    (pts[i][1] - current[1]).atan2(pts[i][0] - current[0]);
                let turn = (prev_angle - angle).rem_euclid(std::f64::consts::TAU);
                (turn, d2, i)
            })
            .collect();
        ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2)));

        let mut chosen: Option<usize> = None;
        'candidates: for &(_, _, i) in &ranked {
            let cand = pts[i];
            let closing = i == first;
            // The new edge may touch only its own endpoints: skip the edge
            // ending at `current`, and the edge leaving `first` when closing.
            let n_edges = hull.len().saturating_sub(1);
            for e in 0..n_edges {
                if e + 1 == n_edges {
                    continue;
                }
                if closing && e == 0 {
                    continue;
                }
                if segments_intersect(current, cand, hull[e], hull[e + 1]) {
                    continue 'candidates;
                }
            }
            chosen = Some(i);
            break;
        }

        let Some(i) = chosen else {
            return None; // stuck: every candidate edge crosses the hull
        };
        if i == first {
            // Closed. Verify containment of every input point.
            if pts.iter().all(|&p| polygon_contains(&hull, p)) {
                return Some(hull);
            }
            return None;
        }
        prev_angle = (current[1] - pts[i][1]).atan2(current[0] - pts[i][0]);
        current = pts[i];
        available[i] = false;
        hull.push(current);
    }

    // Ran out of candidates without closing explicitly; accept the implicit
    // closure if it is simple and contains everything.
    if hull.len() >= 3 {
        let n = hull.len();
        for e in 1..n.saturating_sub(2) {
            if segments_intersect(hull[n - 1], hull[0], hull[e], hull[e + 1]) {
                return None;
            }
        }
        if pts.iter().all(|&p| polygon_contains(&hull, p)) {
            return Some(hull);
        }
    }
    None
}

/// Centers of set pixels that have at least one unset 4-neighbor (image
/// border counts as unset): the morphological boundary used as hull input.
pub fn boundary_points(mask: &Mask2D) -> Vec<[f64; 2]> {
    let mut points = Vec::new();
    let Some(bb) = mask.bounding_box() else {
        return points;
    };
    for y in bb.min_y..=bb.max_y {
        for x in bb.min_x..=bb.max_x {
            if !mask.get(x, y) {
                continue;
            }
            let (xi, yi) = (x as i64, y as i64);
            let interior = mask.contains(xi - 1, yi)
                && mask.contains(xi + 1, yi)
                && mask.contains(xi, yi - 1)
                && mask.contains(xi, yi + 1);
            if !interior {
                points.push([x as f64 + 0.5, y as f64 + 0.5]);
            }
        }
    }
    points
}

/// Back-projects the selection, optionally wraps it in a hull, rasterizes,
/// and compares against ground truth. When the hull input is degenerate
/// (fewer than three boundary points, or all collinear) the raw shape union
/// is compared instead and the report says so.
#[allow(clippy::too_many_arguments)]
pub fn evaluate_view(
    scene: &SplatScene,
    view: &CameraView,
    selection: &[usize],
    gt_mask: &Mask2D,
    hull_kind: HullKind,
    hull_k: usize,
    backproject_sigma: f64,
    params: &ProjectionParams,
) -> Result<MetricsReport, EvalError> {
    let start = Instant::now();
    let shape_union = rasterizer::backproject_mask(scene, view, selection, backproject_sigma, params)?;
    let (pred, used_kind) = match hull_kind {
        HullKind::None => (shape_union, HullKind::None),
        kind => {
            let boundary = boundary_points(&shape_union);
            let hull = match kind {
                HullKind::Convex => convex_hull(&boundary),
                HullKind::Concave => concave_hull(&boundary, hull_k),
                HullKind::None => unreachable!(),
            };
            match hull {
                Ok(polygon) => {
                    let mask = mask_io::rasterize_polygon(
                        &polygon,
                        gt_mask.width(),
                        gt_mask.height(),
                    )?;
                    (mask, kind)
                }
                // Too few footprint pixels for a polygon: compare raw.
                Err(EvalError::DegenerateInput(_)) => (shape_union, HullKind::None),
                Err(e) => return Err(e),
            }
        }
    };
    let mut report = compare_masks(&pred, gt_mask)?;
    report.hull_kind = used_kind;
    report.timing_ms = start.elapsed().as_secs_f64() * 1e3;
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn square_mask(canvas: u32, x0: u32, y0: u32, side: u32) -> Mask2D {
        let mut m = Mask2D::new_empty(canvas, canvas);
        for y in y0..y0 + side {
            for x in x0..x0 + side {
                m.set(x, y, true);
            }
        }
        m
    }

    #[test]
    fn identical_masks_are_perfect() {
        let m = square_mask(32, 4, 4, 10);
        let r = compare_masks(&m, &m).unwrap();
        assert_eq!(r.iou, 1.0);
        assert_eq!(r.f1, 1.0);
        assert_eq!(r.accuracy, 1.0);
        assert_eq!(r.false_positives, 0);
        assert_eq!(r.false_negatives, 0);
    }

    #[test]
    fn shifted_square_fixture_is_exact() {
        let pred = square_mask(100, 10, 10, 10);
        let gt = square_mask(100, 15, 10, 10);
        let r = compare_masks(&pred, &gt).unwrap();
        assert_eq!(r.true_positives, 50);
        assert_eq!(r.false_positives, 50);
        assert_eq!(r.false_negatives, 50);
        assert_eq!(r.iou, 1.0 / 3.0);
        assert_eq!(r.f1, 0.5);
        assert_eq!(r.accuracy, 0.99);
    }

    #[test]
    fn empty_prediction_scores_zero() {
        let pred = Mask2D::new_empty(20, 20);
        let gt = square_mask(20, 5, 5, 4);
        let r = compare_masks(&pred, &gt).unwrap();
        assert_eq!(r.iou, 0.0);
        assert_eq!(r.f1, 0.0);
    }

    #[test]
    fn both_empty_is_perfect_match() {
        let a = Mask2D::new_empty(8, 8);
        let r = compare_masks(&a, &a).unwrap();
        assert_eq!((r.iou, r.f1, r.accuracy), (1.0, 1.0, 1.0));
    }

    #[test]
    fn comparison_swaps_fp_fn_under_exchange() {
        let a = square_mask(40, 2, 2, 12);
        let b = square_mask(40, 8, 6, 12);
        let ab = compare_masks(&a, &b).unwrap();
        let ba = compare_masks(&b, &a).unwrap();
        assert_eq!(ab.iou, ba.iou);
        assert_eq!(ab.accuracy, ba.accuracy);
        assert_eq!(ab.false_positives, ba.false_negatives);
        assert_eq!(ab.false_negatives, ba.false_positives);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let a = Mask2D::new_empty(8, 8);
        let b = Mask2D::new_empty(9, 8);
        assert!(matches!(
            compare_masks(&a, &b),
            Err(EvalError::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn f1_iou_identity_on_random_masks() {
        let mut rng = ChaCha8Rng::seed_from_u64(33);
        for _ in 0..200 {
            let bits_a: Vec<bool> = (0..256).map(|_| rng.random_bool(0.3)).collect();
            let bits_b: Vec<bool> = (0..256).map(|_| rng.random_bool(0.3)).collect();
            let a = Mask2D::from_bits(16, 16, bits_a);
            let b = Mask2D::from_bits(16, 16, bits_b);
            let r = compare_masks(&a, &b).unwrap();
            if r.true_positives + r.false_positives + r.false_negatives > 0 {
                let expected = 2.0 * r.iou / (1.0 + r.iou);
                assert!((r.f1 - expected).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn convex_hull_drops_interior_points() {
        let pts = [
            [0.0, 0.0],
            [4.0, 0.0],
            [4.0, 4.0],
            [0.0, 4.0],
            [2.0, 2.0],
        ];
        let hull = convex_hull(&pts).unwrap();
        assert_eq!(hull.len(), 4);
        assert!(!hull.contains(&[2.0, 2.0]));
        assert!(polygon_area(&hull) > 0.0);
    }

    #[test]
    fn convex_hull_of_convex_polygon_is_itself() {
        let pts = [[0.0, 0.0], [5.0, 1.0], [6.0, 4.0], [2.0, 6.0], [-1.0, 3.0]];
        let hull = convex_hull(&pts).unwrap();
        assert_eq!(hull.len(), pts.len());
        for p in &pts {
            assert!(hull.contains(p));
        }
    }

    #[test]
    fn convex_hull_contains_random_disc_points() {
        let mut rng = ChaCha8Rng::seed_from_u64(34);
        let pts: Vec<[f64; 2]> = (0..1000)
            .map(|_| {
                let r: f64 = rng.random_range(0.0..1.0f64).sqrt() * 10.0;
                let t: f64 = rng.random_range(0.0..std::f64::consts::TAU);
                [r * t.cos(), r * t.sin()]
            })
            .collect();
        let hull = convex_hull(&pts).unwrap();
        let area = polygon_area(&hull);
        assert!(area > 0.0 && area <= std::f64::consts::PI * 100.0);
        for p in &pts {
            assert!(polygon_contains(&hull, *p));
        }
    }

    #[test]
    fn convex_hull_rejects_degenerate_inputs() {
        assert!(convex_hull(&[[0.0, 0.0], [1.0, 1.0]]).is_err());
        assert!(convex_hull(&[[0.0, 0.0], [1.0, 1.0], [2.0, 2.0], [3.0, 3.0]]).is_err());
    }

    #[test]
    fn concave_hull_on_convex_points_matches_convex_hull() {
        // Regular octagon: no collinear triples.
        let pts: Vec<[f64; 2]> = (0..8)
            .map(|i| {
                let t = i as f64 * std::f64::consts::TAU / 8.0;
                [t.cos() * 5.0, t.sin() * 5.0]
            })
            .collect();
        let convex = convex_hull(&pts).unwrap();
        for k in [3, 4, 8, 20] {
            let concave = concave_hull(&pts, k).unwrap();
            let mut a = convex.clone();
            let mut b = concave.clone();
            a.sort_by(|p, q| p[0].total_cmp(&q[0]).then(p[1].total_cmp(&q[1])));
            b.sort_by(|p, q| p[0].total_cmp(&q[0]).then(p[1].total_cmp(&q[1])));
            assert_eq!(a, b, "k = {k}");
        }
    }

    /// Unit-spaced points along the outline of a C: the square [0,12]^2 with
    /// the rectangle (4,3)-(12,9) removed from the right side.
    fn c_shaped_points() -> Vec<[f64; 2]> {
        let mut pts = Vec::new();
        for i in 0..=12 {
            let t = i as f64;
            pts.push([t, 0.0]); // bottom
            pts.push([t, 12.0]); // top
            pts.push([0.0, t]); // left
        }
        for i in 0..=3 {
            let t = i as f64;
            pts.push([12.0, t]); // lower right stub
            pts.push([12.0, 12.0 - t]); // upper right stub
        }
        for i in 4..=12 {
            let t = i as f64;
            pts.push([t, 3.0]); // notch lower lip
            pts.push([t, 9.0]); // notch upper lip
        }
        for i in 3..=9 {
            pts.push([4.0, i as f64]); // notch inner wall
        }
        pts.sort_by(|a, b| a[0].total_cmp(&b[0]).then(a[1].total_cmp(&b[1])));
        pts.dedup();
        pts
    }

    #[test]
    fn concave_hull_carves_into_the_notch() {
        let pts = c_shaped_points();
        let convex = convex_hull(&pts).unwrap();
        let concave = concave_hull(&pts, 4).unwrap();
        let convex_area = polygon_area(&convex);
        let concave_area = polygon_area(&concave);
        assert!(concave_area > 0.0);
        assert!(
            concave_area < convex_area,
            "concave area {concave_area} should undercut convex {convex_area}"
        );
        for p in &pts {
            assert!(polygon_contains(&concave, *p));
        }
    }

    #[test]
    fn concave_hull_with_k_at_point_count_equals_convex() {
        let pts = c_shaped_points();
        let convex = convex_hull(&pts).unwrap();
        let fallback = concave_hull(&pts, pts.len()).unwrap();
        let mut a = convex;
        let mut b = fallback;
        a.sort_by(|p, q| p[0].total_cmp(&q[0]).then(p[1].total_cmp(&q[1])));
        b.sort_by(|p, q| p[0].total_cmp(&q[0]).then(p[1].total_cmp(&q[1])));
        assert_eq!(a, b);
    }

    #[test]
    fn boundary_points_of_solid_square() {
        let mask = square_mask(16, 4, 4, 5);
        let pts = boundary_points(&mask);
        // Perimeter of a 5x5 block: 25 - 9 interior.
        assert_eq!(pts.len(), 16);
        assert!(pts.contains(&[4.5, 4.5]));
        assert!(!pts.contains(&[6.5, 6.5]));
    }
}
