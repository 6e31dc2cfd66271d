//! Per-clip inference: partitioning, confidence filtering, NMS and mask assembly.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::assembly::{finalize_mask, HeadVariant, MaskParams};
use crate::error::{Error, Result};
use crate::heads::{decode_boxes, generate_anchors};
use crate::io::container::{ClipBoxes, ClipMeta, ClipNetOut, Container};
use crate::primitives::{box_iou, circumscribe, BBox, BinaryClip};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClipPartitionConfig {
    /// Clip length in frames.
    pub length: usize,
    /// Frames shared by consecutive clips.
    pub overlap: usize,
}

impl Default for ClipPartitionConfig {
    fn default() -> Self {
        ClipPartitionConfig { length: 3, overlap: 1 }
    }
}

impl ClipPartitionConfig {
    pub fn validate(&self) -> Result<()> {
        if self.length == 0 || self.overlap >= self.length {
            return Err(Error::invalid(format!(
                "clip partition needs length >= 1 and overlap < length, got length={} overlap={}",
                self.length, self.overlap
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClipWindow {
    pub index: usize,
    pub start: usize,
    /// Inclusive.
    pub end: usize,
}

impl ClipWindow {
    pub fn len(&self) -> usize {
        self.end + 1 - self.start
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Split `frames` frames into windows of `cfg.length`, stepping by `length - overlap`.
/// A final end-aligned window picks up any uncovered tail.
pub fn partition_clips(frames: usize, cfg: &ClipPartitionConfig) -> Result<Vec<ClipWindow>> {
    cfg.validate()?;
    if frames == 0 {
        return Err(Error::invalid("cannot partition an empty video"));
    }
    let t = cfg.length;
    if frames <= t {
        return Ok(vec![ClipWindow {
            index: 0,
            start: 0,
            end: frames - 1,
        }]);
    }
    let step = t - cfg.overlap;
    let mut windows = Vec::new();
    let mut start = 0;
    while start + t <= frames {
        windows.push(ClipWindow {
            index: windows.len(),
            start,
            end: start + t - 1,
        });
        start += step;
    }
    if windows.last().is_some_and(|w| w.end < frames - 1) {
        windows.push(ClipWindow {
            index: windows.len(),
            start: frames - t,
            end: frames - 1,
        });
    }
    Ok(windows)
}

/// An anchor that passed the confidence filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub index: usize,
    /// Category id; column index in the score vector.
    pub category: u32,
    pub score: f64,
}

/// Keep anchors whose best non-background probability is at least `threshold`.
/// Ties between classes go to the lower category id.
pub fn filter_confidence(scores: &[Vec<f64>], threshold: f64) -> Vec<Candidate> {
    scores
        .iter()
        .enumerate()
        .filter_map(|(index, p)| {
            let (c, &s) =
                p.iter()
                    .enumerate()
                    .skip(1)
                    .fold(None, |best: Option<(usize, &f64)>, (c, s)| match best {
                        Some((_, b)) if *b >= *s => best,
                        _ => Some((c, s)),
                    })?;
            (s >= threshold).then_some(Candidate {
                index,
                category: c as u32,
                score: s,
            })
        })
        .collect()
}

/// Greedy class-wise NMS. Items are `(category, score, box, tiebreak)`; returns kept
/// positions in descending score order.
pub fn nms_indices(items: &[(u32, f64, BBox, usize)], iou_threshold: f64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.sort_by(|&a, &b| items[b].1.total_cmp(&items[a].1).then(items[a].3.cmp(&items[b].3)));
    let mut kept: Vec<usize> = Vec::new();
    for i in order {
        let (cat, _, bx, _) = &items[i];
        let suppressed = kept
            .iter()
            .any(|&k| items[k].0 == *cat && box_iou(&items[k].2, bx) > iou_threshold);
        if !suppressed {
            kept.push(i);
        }
    }
    kept
}

/// One instance detected in one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipDetection {
    pub clip_index: usize,
    /// Absolute index of the clip's first frame.
    pub frame_start: usize,
    /// Source prediction index within the clip.
    pub anchor: usize,
    pub category: u32,
    pub score: f64,
    pub embedding: Vec<f64>,
    /// One entry per clip frame.
    pub boxes: Vec<Option<BBox>>,
    pub cbox: BBox,
    /// Image-resolution masks, one per clip frame.
    pub masks: BinaryClip,
}

impl ClipDetection {
    pub fn frames(&self) -> usize {
        self.masks.len()
    }

    /// Absolute index one past the last frame.
    pub fn frame_end(&self) -> usize {
        self.frame_start + self.frames()
    }
}

pub fn nms_clip(dets: &[ClipDetection], iou_threshold: f64) -> Vec<ClipDetection> {
    let items: Vec<_> = dets.iter().map(|d| (d.category, d.score, d.cbox, d.anchor)).collect();
    nms_indices(&items, iou_threshold)
        .into_iter()
        .map(|i| dets[i].clone())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InferenceConfig {
    #[serde(default = "default_confidence")]
    pub confidence_threshold: f64,
    #[serde(default = "default_nms")]
    pub nms_threshold: f64,
    #[serde(default = "default_top_k")]
    pub top_k: usize,
    /// When set, every clip must use this head.
    #[serde(skip)]
    pub head_variant: Option<HeadVariant>,
}

fn default_confidence() -> f64 {
    0.1
}
fn default_nms() -> f64 {
    0.5
}
fn default_top_k() -> usize {
    100
}

impl Default for InferenceConfig {
    fn default() -> Self {
        InferenceConfig {
            confidence_threshold: default_confidence(),
            nms_threshold: default_nms(),
            top_k: default_top_k(),
            head_variant: None,
        }
    }
}

impl InferenceConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("confidence_threshold", self.confidence_threshold),
            ("nms_threshold", self.nms_threshold),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::invalid(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        Ok(())
    }
}

/// Full per-clip pipeline, returning detections in descending score order.
pub fn run_clip(net: &ClipNetOut, cfg: &InferenceConfig) -> Result<Vec<ClipDetection>> {
    cfg.validate()?;
    let meta = &net.meta;
    if let Some(v) = cfg.head_variant {
        if v != meta.head_variant {
            return Err(Error::invalid(format!(
                "clip v{}/c{} uses the {} head but the config requires {}",
                meta.video_id,
                meta.clip_index,
                meta.head_variant.as_str(),
                v.as_str()
            )));
        }
    }
    let candidates = filter_confidence(&net.scores, cfg.confidence_threshold);
    if candidates.is_empty() {
        return Ok(Vec::new());
    }

    let anchors = match (&net.boxes, &meta.anchors) {
        (ClipBoxes::Regression(_), Some(a)) => {
            Some(generate_anchors(a, &a.level_dims(meta.image_height, meta.image_width))?)
        }
        _ => None,
    };
    let mut boxed = Vec::with_capacity(candidates.len());
    for c in candidates {
        let boxes: Vec<Option<BBox>> = match &net.boxes {
            ClipBoxes::Decoded(b) => b[c.index].clone(),
            ClipBoxes::Regression(r) => {
                let anchors = anchors.as_ref().expect("regression clips carry anchors");
                decode_boxes(&anchors[c.index], &r[c.index])?
                    .into_iter()
                    .map(Some)
                    .collect()
            }
        };
        if let Some(cbox) = circumscribe(boxes.iter().flatten()) {
            boxed.push((c, boxes, cbox));
        }
    }

    let items: Vec<_> = boxed
        .iter()
        .map(|(c, _, b)| (c.category, c.score, *b, c.index))
        .collect();
    let kept = nms_indices(&items, cfg.nms_threshold);

    kept.into_iter()
        .take(cfg.top_k)
        .map(|i| {
            let (c, boxes, cbox) = &boxed[i];
            let params = MaskParams::from_vec(meta.head_variant, net.mask_params[c.index].clone())?;
            let soft = params.assemble(&net.prototypes, cbox)?;
            let masks = finalize_mask(&soft, meta.image_height, meta.image_width)?;
            Ok(ClipDetection {
                clip_index: meta.clip_index,
                frame_start: meta.frame_start,
                anchor: c.index,
                category: c.category,
                score: c.score,
                embedding: net.embeddings[c.index].clone(),
                boxes: boxes.clone(),
                cbox: *cbox,
                masks,
            })
        })
        .collect()
}

/// Detections of every clip in a container, in container order.
pub fn run_container(
    container: &Container,
    cfg: &InferenceConfig,
    workers: usize,
) -> Result<Vec<(ClipMeta, Vec<ClipDetection>)>> {
    let job = || -> Result<Vec<(ClipMeta, Vec<ClipDetection>)>> {
        (0..container.clips().len())
            .into_par_iter()
            .map(|i| {
                let net = container.clip(i)?;
                let dets = run_clip(&net, cfg)?;
                Ok((net.meta, dets))
            })
            .collect()
    };
    if workers == 0 {
        return job();
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::invalid(format!("cannot start {workers} workers: {e}")))?
        .install(job)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::PrototypeCube;
    use proptest::prelude::*;

    fn w(windows: &[ClipWindow]) -> Vec<(usize, usize)> {
        windows.iter().map(|w| (w.start, w.end)).collect()
    }

    #[test]
    fn partition_examples() {
        let p = |l, t, o| w(&partition_clips(l, &ClipPartitionConfig { length: t, overlap: o }).unwrap());
        assert_eq!(p(9, 3, 0), vec![(0, 2), (3, 5), (6, 8)]);
        assert_eq!(p(9, 3, 1), vec![(0, 2), (2, 4), (4, 6), (6, 8)]);
        assert_eq!(p(10, 3, 1), vec![(0, 2), (2, 4), (4, 6), (6, 8), (7, 9)]);
        assert_eq!(p(2, 5, 1), vec![(0, 1)]);
        assert!(partition_clips(5, &ClipPartitionConfig { length: 3, overlap: 3 }).is_err());
    }

    proptest! {
        #[test]
        fn partition_covers_and_overlaps(l in 1usize..=50, t in 1usize..=7, o_seed in 0usize..7) {
            let o = o_seed % t;
            let ws = partition_clips(l, &ClipPartitionConfig { length: t, overlap: o }).unwrap();
            let mut covered = vec![false; l];
            for w in &ws {
                prop_assert!(w.len() <= t);
                for c in &mut covered[w.start..=w.end] { *c = true; }
            }
            prop_assert!(covered.iter().all(|&c| c));
            for (i, pair) in ws.windows(2).enumerate() {
                prop_assert!(pair[0].start < pair[1].start);
                if i + 2 < ws.len() {
                    prop_assert_eq!(pair[0].end + 1 - pair[1].start, o);
                }
            }
        }
    }

    #[test]
    fn filter_examples() {
        let s = |v: f64| vec![1.0 - v, v];
        assert!(filter_confidence(&[s(0.05), s(0.05)], 0.1).is_empty());
        assert_eq!(filter_confidence(&[s(0.0), s(0.05)], 0.0).len(), 2);
        let kept = filter_confidence(&[s(0.09), s(0.10), s(0.5)], 0.1);
        assert_eq!(kept.iter().map(|c| c.index).collect::<Vec<_>>(), vec![1, 2]);
        let multi = filter_confidence(&[vec![0.2, 0.4, 0.4]], 0.1);
        assert_eq!(multi[0].category, 1);
    }

    fn b(x1: f64, y1: f64, x2: f64, y2: f64) -> BBox {
        BBox::new(x1, y1, x2, y2).unwrap()
    }

    #[test]
    fn nms_examples() {
        let same = b(0., 0., 2., 2.);
        assert_eq!(nms_indices(&[(1, 0.9, same, 0), (1, 0.8, same, 1)], 0.5), vec![0]);
        assert_eq!(nms_indices(&[(1, 0.8, same, 0), (1, 0.9, same, 1)], 0.5), vec![1]);
        assert_eq!(nms_indices(&[(1, 0.9, same, 0), (2, 0.8, same, 1)], 0.5), vec![0, 1]);
        assert_eq!(
            nms_indices(&[(1, 0.9, same, 0), (1, 0.8, b(1., 1., 3., 3.), 1)], 0.5),
            vec![0, 1]
        );
        // equal scores: lower anchor index first
        assert_eq!(nms_indices(&[(1, 0.5, same, 7), (1, 0.5, same, 3)], 0.5), vec![1]);
    }

    proptest! {
        #[test]
        fn nms_idempotent(raw in proptest::collection::vec((1u32..3, 0.0f64..1.0, 0.0f64..10.0, 0.0f64..10.0, 1.0f64..6.0), 0..20)) {
            let items: Vec<_> = raw.iter().enumerate()
                .map(|(i, (c, s, x, y, e))| (*c, *s, b(*x, *y, x + e, y + e), i)).collect();
            let once: Vec<_> = nms_indices(&items, 0.5).into_iter().map(|i| items[i]).collect();
            let twice: Vec<_> = nms_indices(&once, 0.5).into_iter().map(|i| once[i]).collect();
            prop_assert_eq!(once, twice);
        }
    }

    fn tiny_clip(scores: Vec<Vec<f64>>) -> ClipNetOut {
        let n = scores.len();
        ClipNetOut {
            meta: ClipMeta {
                video_id: 1,
                clip_index: 0,
                frame_start: 0,
                frame_end: 0,
                video_length: 1,
                image_height: 16,
                image_width: 48,
                head_variant: HeadVariant::Yolact,
                anchors: None,
            },
            prototypes: PrototypeCube::from_fn(1, 4, 12, 1, |_, _, _, _| 5.0).unwrap(),
            embeddings: vec![vec![1.0]; n],
            boxes: ClipBoxes::Decoded(
                (0..n)
                    .map(|i| vec![Some(b(16. * i as f64, 0., 16. * i as f64 + 8., 8.))])
                    .collect(),
            ),
            mask_params: vec![vec![1.0]; n],
            scores,
        }
    }

    #[test]
    fn run_clip_top_k_and_empty() {
        let net = tiny_clip(vec![vec![0.7, 0.3], vec![0.1, 0.9], vec![0.4, 0.6]]);
        let all = run_clip(&net, &InferenceConfig::default()).unwrap();
        assert_eq!(all.iter().map(|d| d.anchor).collect::<Vec<_>>(), vec![1, 2, 0]);
        let top = run_clip(
            &net,
            &InferenceConfig {
                top_k: 1,
                ..Default::default()
            },
        )
        .unwrap();
        assert_eq!(top.len(), 1);
        assert_eq!(top[0].score, 0.9);
        let mask = top[0].masks.frame(0);
        // anchor 1 sits at x 16..24; bilinear edges soften its corner; interior and exterior are exact
        for y in 0..16 {
            for x in 0..48 {
                if y < 7 && (16..23).contains(&x) {
                    assert!(mask.get(y, x));
                } else if y >= 8 || !(16..24).contains(&x) {
                    assert!(!mask.get(y, x));
                }
            }
        }
        assert!(run_clip(&tiny_clip(vec![]), &InferenceConfig::default())
            .unwrap()
            .is_empty());
    }

    #[test]
    fn run_clip_rejects_head_mismatch() {
        let net = tiny_clip(vec![vec![0.1, 0.9]]);
        let cfg = InferenceConfig {
            head_variant: Some(HeadVariant::CondInst),
            ..Default::default()
        };
        assert!(run_clip(&net, &cfg).is_err());
    }
}
