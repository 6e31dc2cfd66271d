use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::primitives::{BBox, BinaryMask, BoxTrack};

/// Masks of one instance keyed by frame index.
pub type MaskTrack = BTreeMap<usize, BinaryMask>;

/// Intersection over union of two boxes; 0 when the union has no area.
pub fn box_iou(a: &BBox, b: &BBox) -> f64 {
    let inter = a.intersection_area(b);
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        0.0
    } else {
        (inter / union).clamp(0.0, 1.0)
    }
}

/// Pixel IoU. Two empty masks agree perfectly and score 1.
pub fn mask_iou(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    let (inter, union) = a.overlap_counts(b)?;
    Ok(ratio(inter, union))
}

fn ratio(inter: u64, union: u64) -> f64 {
    if union == 0 {
        1.0
    } else {
        inter as f64 / union as f64
    }
}

/// Temporal IoU of one instance between frame `t` and `t ± delta`.
///
/// Averages the two pairwise IoUs when the instance is present on both sides,
/// uses the single available pair otherwise, and yields `None` when it is
/// present on neither side.
fn temporal_iou<V>(
    get: impl Fn(usize) -> Option<V>,
    t: usize,
    delta: usize,
    iou: impl Fn(&V, &V) -> Result<f64>,
) -> Result<Option<f64>> {
    let anchor = get(t).ok_or_else(|| Error::invalid(format!("instance absent at frame {t}")))?;
    let before = t.checked_sub(delta).and_then(&get);
    let after = t.checked_add(delta).and_then(&get);
    Ok(match (before, after) {
        (Some(b), Some(a)) => Some(0.5 * (iou(&anchor, &b)? + iou(&anchor, &a)?)),
        (Some(x), None) | (None, Some(x)) => Some(iou(&anchor, &x)?),
        (None, None) => None,
    })
}

/// T-BIoU of a box track at frame `t` with interval `delta`.
pub fn t_biou(track: &BoxTrack, t: usize, delta: usize) -> Result<Option<f64>> {
    temporal_iou(|f| track.get(f), t, delta, |a, b| Ok(box_iou(a, b)))
}

/// T-MIoU of a mask track at frame `t` with interval `delta`.
pub fn t_miou(track: &MaskTrack, t: usize, delta: usize) -> Result<Option<f64>> {
    temporal_iou(|f| track.get(&f), t, delta, |a, b| mask_iou(a, b))
}

/// Spatio-temporal mask IoU: summed per-frame intersections over summed unions.
/// `None` frames count as empty; 1 when both sides are empty everywhere.
pub fn st_miou(pred: &[Option<&BinaryMask>], gt: &[Option<&BinaryMask>]) -> Result<f64> {
    if pred.len() != gt.len() {
        return Err(Error::dims(
            format!("{} frames", gt.len()),
            format!("{} frames", pred.len()),
        ));
    }
    let (mut inter, mut union) = (0u64, 0u64);
    for (p, g) in pred.iter().zip(gt) {
        match (p, g) {
            (Some(p), Some(g)) => {
                let (i, u) = p.overlap_counts(g)?;
                inter += i;
                union += u;
            }
            (Some(m), None) | (None, Some(m)) => union += m.area(),
            (None, None) => {}
        }
    }
    Ok(ratio(inter, union))
}

/// Volume IoU of two equally long mask sequences.
pub fn volume_iou<'a>(
    a: impl IntoIterator<Item = &'a BinaryMask>,
    b: impl IntoIterator<Item = &'a BinaryMask>,
) -> Result<f64> {
    let (mut inter, mut union) = (0u64, 0u64);
    for (x, y) in a.into_iter().zip(b) {
        let (i, u) = x.overlap_counts(y)?;
        inter += i;
        union += u;
    }
    Ok(ratio(inter, union))
}
