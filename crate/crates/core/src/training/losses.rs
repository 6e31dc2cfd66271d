use crate::assembly::{MaskParams, PROTO_STRIDE};
use crate::error::{Error, Result};
use crate::primitives::{crop, rounded_span, BBox, BinaryMask};
use crate::tensor::PrototypeCube;
use serde::{Deserialize, Serialize};

pub const PROB_EPS: f64 = 1e-7;

fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// Mean cross-entropy of probability vectors against target class indices.
///
/// Negatives target class 0 (background).
pub fn loss_cls(scores: &[Vec<f64>], targets: &[usize]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::invalid("classification loss needs at least one sample"));
    }
    if scores.len() != targets.len() {
        return Err(Error::dims(scores.len(), targets.len()));
    }
    let mut sum = 0.0;
    for (p, &c) in scores.iter().zip(targets) {
        let prob = *p
            .get(c)
            .ok_or_else(|| Error::invalid(format!("target class {c} outside {} scores", p.len())))?;
        sum -= prob.max(PROB_EPS).ln();
    }
    Ok(sum / scores.len() as f64)
}

pub fn smooth_l1(x: f64) -> f64 {
    let a = x.abs();
    if a < 1.0 {
        0.5 * a * a
    } else {
        a - 0.5
    }
}

/// Summed smooth-L1 per sample, averaged over samples.
///
/// NaN target coordinates (frames where the instance is absent) are skipped.
pub fn loss_reg(preds: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    if preds.is_empty() {
        return Err(Error::invalid("regression loss needs at least one positive"));
    }
    if preds.len() != targets.len() {
        return Err(Error::dims(preds.len(), targets.len()));
    }
    let mut sum = 0.0;
    for (p, g) in preds.iter().zip(targets) {
        if p.len() != g.len() {
            return Err(Error::dims(g.len(), p.len()));
        }
        sum += p
            .iter()
            .zip(g)
            .filter(|(_, g)| !g.is_nan())
            .map(|(p, g)| smooth_l1(p - g))
            .sum::<f64>();
    }
    Ok(sum / preds.len() as f64)
}

/// Max-pool an image-resolution mask down by an integer factor.
pub fn downsample_max(mask: &BinaryMask, factor: usize) -> Result<BinaryMask> {
    let (h, w) = mask.dims();
    if factor == 0 || h % factor != 0 || w % factor != 0 {
        return Err(Error::invalid(format!("{h}x{w} mask not divisible by {factor}")));
    }
    BinaryMask::from_fn(h / factor, w / factor, |y, x| {
        (0..factor).any(|dy| (0..factor).any(|dx| mask.get(y * factor + dy, x * factor + dx)))
    })
}

/// One positive sample of the mask loss.
#[derive(Debug, Clone, Copy)]
pub struct MaskSample<'a> {
    pub params: &'a MaskParams,
    /// Ground-truth circumscribed box at image resolution.
    pub cbox: BBox,
    /// One entry per clip frame at image resolution; `None` for absent frames.
    pub gt_masks: &'a [Option<&'a BinaryMask>],
}

/// Binary cross-entropy between assembled clip masks and ground truth,
/// averaged over in-box prototype cells and frames, then over samples.
pub fn loss_mask(protos: &PrototypeCube, samples: &[MaskSample<'_>]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::invalid("mask loss needs at least one positive"));
    }
    let (t, hp, wp, _) = protos.shape();
    let stride = PROTO_STRIDE as usize;
    let mut total = 0.0;
    for s in samples {
        if s.gt_masks.len() != t {
            return Err(Error::dims(t, s.gt_masks.len()));
        }
        let proto_box = s.cbox.scaled(1.0 / PROTO_STRIDE);
        let (y0, y1, x0, x1) = rounded_span(&proto_box, hp, wp);
        let cells = (y1 - y0) * (x1 - x0);
        if cells == 0 {
            return Err(Error::invalid("circumscribed box covers no prototype cells"));
        }
        let clip = s.params.assemble(protos, &s.cbox)?;
        let mut sum = 0.0;
        for (f, gt) in clip.frames().iter().zip(s.gt_masks) {
            let pred = crop(f, &proto_box);
            let target = match gt {
                Some(m) => {
                    if m.dims() != (hp * stride, wp * stride) {
                        return Err(Error::dims(hp * stride, m.height()));
                    }
                    Some(downsample_max(m, stride)?)
                }
                None => None,
            };
            for y in y0..y1 {
                for x in x0..x1 {
                    let p = clamp_prob(pred.get(y, x));
                    let on = target.as_ref().is_some_and(|m| m.get(y, x));
                    sum -= if on { p.ln() } else { (1.0 - p).ln() };
                }
            }
        }
        total += sum / (cells * t) as f64;
    }
    Ok(total / samples.len() as f64)
}

/// `0.5 * (cosine + 1)`.
pub fn embed_similarity(e1: &[f64], e2: &[f64]) -> Result<f64> {
    if e1.len() != e2.len() {
        return Err(Error::dims(e1.len(), e2.len()));
    }
    let n1 = e1.iter().map(|v| v * v).sum::<f64>().sqrt();
    let n2 = e2.iter().map(|v| v * v).sum::<f64>().sqrt();
    if n1 == 0.0 || n2 == 0.0 {
        return Err(Error::invalid("embedding similarity of a zero vector"));
    }
    let dot: f64 = e1.iter().zip(e2).map(|(a, b)| a * b).sum();
    Ok((0.5 * (dot / (n1 * n2) + 1.0)).clamp(0.0, 1.0))
}

/// Pairwise embedding loss over all ordered pairs of positives, self-pairs included.
pub fn loss_track(embeddings: &[Vec<f64>], ids: &[u64]) -> Result<f64> {
    if embeddings.is_empty() {
        return Err(Error::invalid("track loss needs at least one positive"));
    }
    if embeddings.len() != ids.len() {
        return Err(Error::dims(embeddings.len(), ids.len()));
    }
    let mut sum = 0.0;
    for (ei, idi) in embeddings.iter().zip(ids) {
        for (ej, idj) in embeddings.iter().zip(ids) {
            // one-sided clamp: only the side that can reach log(0)
            let d = embed_similarity(ei, ej)?;
            sum += if idi == idj {
                d.max(PROB_EPS).ln()
            } else {
                (1.0 - d.min(1.0 - PROB_EPS)).ln()
            };
        }
    }
    let n = embeddings.len() as f64;
    Ok(-sum / (n * n))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub cls: f64,
    pub reg: f64,
    pub mask: f64,
    pub track: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            cls: 1.0,
            reg: 1.0,
            mask: 1.0,
            track: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("cls", self.cls),
            ("reg", self.reg),
            ("mask", self.mask),
            ("track", self.track),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!(
                    "loss weight {name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub cls: f64,
    pub reg: f64,
    pub mask: f64,
    pub track: f64,
}

pub fn loss_total(c: &LossComponents, w: &LossWeights) -> f64 {
    w.cls * c.cls + w.reg * c.reg + w.mask * c.mask + w.track * c.track
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::YolactParams;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    #[test]
    fn cls_examples() {
        assert_abs_diff_eq!(loss_cls(&[vec![0.0, 1.0, 0.0]], &[1]).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(loss_cls(&[vec![0.25; 4]], &[2]).unwrap(), 4f64.ln(), epsilon = 1e-12);
        let a = loss_cls(&[vec![0.5, 0.5]], &[0]).unwrap();
        let b = loss_cls(&[vec![0.1, 0.9]], &[0]).unwrap();
        let both = loss_cls(&[vec![0.5, 0.5], vec![0.1, 0.9]], &[0, 0]).unwrap();
        assert_abs_diff_eq!(both, (a + b) / 2.0, epsilon = 1e-12);
        assert!(loss_cls(&[], &[]).is_err());
        assert!(loss_cls(&[vec![1.0]], &[3]).is_err());
    }

    #[test]
    fn reg_examples() {
        let t = vec![vec![0.1, 0.2, 0.3, 0.4]];
        assert_eq!(loss_reg(&t, &t).unwrap(), 0.0);
        assert_abs_diff_eq!(
            loss_reg(&[vec![0.5, 0., 0., 0.]], &[vec![0.; 4]]).unwrap(),
            0.125,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(
            loss_reg(&[vec![2.0, 0., 0., 0.]], &[vec![0.; 4]]).unwrap(),
            1.5,
            epsilon = 1e-12
        );
        assert_eq!(
            loss_reg(&[vec![9.0, 0., 0., 0.]], &[vec![f64::NAN, 0., 0., 0.]]).unwrap(),
            0.0
        );
        assert!(loss_reg(&[], &[]).is_err());
    }

    fn half_protos(t: usize, hp: usize, wp: usize) -> PrototypeCube {
        PrototypeCube::zeros(t, hp, wp, 1).unwrap()
    }

    #[test]
    fn mask_half_probability_is_ln2_and_area_normalized() {
        let protos = half_protos(2, 8, 8);
        let params = MaskParams::Yolact(YolactParams::new(vec![1.0]).unwrap());
        let gt = BinaryMask::from_fn(32, 32, |y, x| (y + x) % 9 == 0).unwrap();
        let frames = [Some(&gt), None];
        for cbox in [BBox::new(0., 0., 8., 8.).unwrap(), BBox::new(0., 0., 16., 8.).unwrap()] {
            let s = MaskSample {
                params: &params,
                cbox,
                gt_masks: &frames,
            };
            assert_abs_diff_eq!(loss_mask(&protos, &[s]).unwrap(), 2f64.ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn mask_perfect_prediction_near_zero() {
        let (hp, wp) = (6, 6);
        let coarse = BinaryMask::from_fn(hp, wp, |y, x| (1..4).contains(&y) && (2..5).contains(&x)).unwrap();
        let protos =
            PrototypeCube::from_fn(1, hp, wp, 1, |_, y, x, _| if coarse.get(y, x) { 50.0 } else { -50.0 }).unwrap();
        let gt = BinaryMask::from_fn(hp * 4, wp * 4, |y, x| coarse.get(y / 4, x / 4)).unwrap();
        let params = MaskParams::Yolact(YolactParams::new(vec![1.0]).unwrap());
        let frames = [Some(&gt)];
        let s = MaskSample {
            params: &params,
            cbox: BBox::new(4., 0., 24., 20.).unwrap(),
            gt_masks: &frames,
        };
        let v = loss_mask(&protos, &[s]).unwrap();
        assert!(v <= 2e-7, "{v}");
    }

    #[test]
    fn mask_errors() {
        let protos = half_protos(1, 4, 4);
        let params = MaskParams::Yolact(YolactParams::new(vec![1.0]).unwrap());
        assert!(loss_mask(&protos, &[]).is_err());
        let frames: [Option<&BinaryMask>; 0] = [];
        let s = MaskSample {
            params: &params,
            cbox: BBox::new(0., 0., 4., 4.).unwrap(),
            gt_masks: &frames,
        };
        assert!(loss_mask(&protos, &[s]).is_err());
    }

    #[test]
    fn downsample_is_max_pool() {
        let m = BinaryMask::from_fn(8, 8, |y, x| y == 5 && x == 2).unwrap();
        let d = downsample_max(&m, 4).unwrap();
        assert_eq!(d.dims(), (2, 2));
        assert!(d.get(1, 0) && d.area() == 1);
    }

    #[test]
    fn similarity_examples() {
        assert_abs_diff_eq!(embed_similarity(&[1., 2.], &[1., 2.]).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(embed_similarity(&[1., 0.], &[0., 3.]).unwrap(), 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(embed_similarity(&[1., 2.], &[-1., -2.]).unwrap(), 0.0, epsilon = 1e-12);
        assert!(embed_similarity(&[0., 0.], &[1., 0.]).is_err());
    }

    #[test]
    fn track_examples() {
        assert!(loss_track(&[vec![1., 0.]], &[7]).unwrap() < 1e-6);
        let orth = loss_track(&[vec![1., 0.], vec![0., 1.]], &[1, 2]).unwrap();
        assert_abs_diff_eq!(orth, 0.5 * 2f64.ln(), epsilon = 1e-12);
        assert!(loss_track(&[vec![1., 1.], vec![1., 1.]], &[3, 3]).unwrap() < 1e-6);
    }

    #[test]
    fn total_examples() {
        let c = LossComponents {
            cls: 1.,
            reg: 2.,
            mask: 3.,
            track: 4.,
        };
        assert_eq!(loss_total(&c, &LossWeights::default()), 10.0);
        assert_eq!(
            loss_total(
                &c,
                &LossWeights {
                    cls: 0.,
                    reg: 0.,
                    mask: 0.,
                    track: 0.
                }
            ),
            0.0
        );
        let ones = LossComponents {
            cls: 1.,
            reg: 1.,
            mask: 1.,
            track: 1.,
        };
        let w = LossWeights {
            cls: 1.,
            reg: 1.5,
            mask: 1.,
            track: 1.,
        };
        assert_eq!(loss_total(&ones, &w), 4.5);
        assert!(LossWeights { cls: -1., ..w }.validate().is_err());
    }

    proptest! {
        #[test]
        fn track_scale_invariant(
            embs in proptest::collection::vec(proptest::collection::vec(0.1f64..2.0, 3), 1..5),
            c in 0.01f64..100.0,
        ) {
            let ids: Vec<u64> = (0..embs.len() as u64).map(|i| i % 2).collect();
            let scaled: Vec<Vec<f64>> = embs.iter().map(|e| e.iter().map(|v| v * c).collect()).collect();
            let a = loss_track(&embs, &ids).unwrap();
            let b = loss_track(&scaled, &ids).unwrap();
            prop_assert!((a - b).abs() < 1e-9);
        }

        #[test]
        fn cls_and_reg_permutation_invariant_and_nonnegative(
            rows in proptest::collection::vec((0.01f64..1.0, 0.01f64..1.0, -3.0f64..3.0), 1..8),
        ) {
            let scores: Vec<Vec<f64>> = rows.iter().map(|(a, b, _)| vec![a / (a + b), b / (a + b)]).collect();
            let targets: Vec<usize> = (0..rows.len()).map(|i| i % 2).collect();
            let preds: Vec<Vec<f64>> = rows.iter().map(|(_, _, r)| vec![*r, 0., 0., 0.]).collect();
            let zeros = vec![vec![0.0; 4]; rows.len()];
            let c = loss_cls(&scores, &targets).unwrap();
            let r = loss_reg(&preds, &zeros).unwrap();
            prop_assert!(c >= 0.0 && r >= 0.0);
            let mut rs = scores.clone(); rs.reverse();
            let mut rt = targets.clone(); rt.reverse();
            let mut rp = preds.clone(); rp.reverse();
            prop_assert!((loss_cls(&rs, &rt).unwrap() - c).abs() < 1e-12);
            prop_assert!((loss_reg(&rp, &zeros).unwrap() - r).abs() < 1e-12);
        }

        #[test]
        fn total_linear(a in 0.0f64..10.0, b in 0.0f64..10.0, k in 0.0f64..5.0) {
            let w = LossWeights { cls: 0.7, reg: 1.3, mask: 0.2, track: 2.0 };
            let c1 = LossComponents { cls: a, reg: 1., mask: 1., track: 1. };
            let c2 = LossComponents { cls: a + k * b, ..c1 };
            prop_assert!((loss_total(&c2, &w) - loss_total(&c1, &w) - 0.7 * k * b).abs() < 1e-9);
        }
    }
}
