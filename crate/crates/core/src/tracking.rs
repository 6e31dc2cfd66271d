//! Clip-to-clip identity linking and per-video stitching.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::inference::ClipDetection;
use crate::primitives::{box_iou, circumscribe, BBox, BinaryMask};
use crate::training::embed_similarity;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatchScoreConfig {
    #[serde(default = "third")]
    pub alpha_embed: f64,
    #[serde(default = "third")]
    pub alpha_mask: f64,
    #[serde(default = "third")]
    pub alpha_box: f64,
    /// A link needs a score strictly above this.
    #[serde(default = "default_tau")]
    pub tau: f64,
}

fn third() -> f64 {
    1.0 / 3.0
}
fn default_tau() -> f64 {
    0.3
}

impl Default for MatchScoreConfig {
    fn default() -> Self {
        MatchScoreConfig {
            alpha_embed: third(),
            alpha_mask: third(),
            alpha_box: third(),
            tau: default_tau(),
        }
    }
}

impl MatchScoreConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha_embed", self.alpha_embed),
            ("alpha_mask", self.alpha_mask),
            ("alpha_box", self.alpha_box),
            ("tau", self.tau),
        ] {
            if !v.is_finite() || v < 0.0 {
                return Err(Error::invalid(format!(
                    "tracking {name} must be finite and >= 0, got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// Frames `(prev, cur)` compared by the mask and box terms, as positions within each clip.
fn compared_frames(prev: &ClipDetection, cur: &ClipDetection) -> Vec<(usize, usize)> {
    let start = prev.frame_start.max(cur.frame_start);
    let end = prev.frame_end().min(cur.frame_end());
    if start < end {
        (start..end)
            .map(|f| (f - prev.frame_start, f - cur.frame_start))
            .collect()
    } else {
        vec![(prev.frames() - 1, 0)]
    }
}

/// Weighted sum of embedding similarity, mask IoU and box IoU between two detections.
///
/// Mask and box terms use the frames both clips cover, or prev's last against
/// cur's first frame when the clips do not overlap.
pub fn match_score(prev: &ClipDetection, cur: &ClipDetection, cfg: &MatchScoreConfig) -> Result<f64> {
    let d = embed_similarity(&prev.embedding, &cur.embedding)?;
    let frames = compared_frames(prev, cur);
    let (mut inter, mut union) = (0u64, 0u64);
    for &(p, c) in &frames {
        let (i, u) = prev.masks.frame(p).overlap_counts(cur.masks.frame(c))?;
        inter += i;
        union += u;
    }
    let miou = if union == 0 { 1.0 } else { inter as f64 / union as f64 };
    let pb = circumscribe(frames.iter().filter_map(|&(p, _)| prev.boxes[p].as_ref()));
    let cb = circumscribe(frames.iter().filter_map(|&(_, c)| cur.boxes[c].as_ref()));
    let biou = match (pb, cb) {
        (Some(a), Some(b)) => box_iou(&a, &b),
        _ => 0.0,
    };
    Ok(cfg.alpha_embed * d + cfg.alpha_mask * miou + cfg.alpha_box * biou)
}

/// How one detection received its id.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Association {
    pub video_id: u64,
    pub clip_index: usize,
    pub detection: usize,
    pub id: u64,
    /// Best score against the previous clip, if it had any detections.
    pub best_score: Option<f64>,
    pub linked: bool,
}

/// Tracker state for one video.
#[derive(Debug, Clone, Default)]
pub struct TrackState {
    next_id: u64,
    previous: Vec<(u64, ClipDetection)>,
}

fn score_order(dets: &[ClipDetection]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..dets.len()).collect();
    order.sort_by(|&a, &b| dets[b].score.total_cmp(&dets[a].score).then(a.cmp(&b)));
    order
}

impl TrackState {
    pub fn new() -> Self {
        TrackState {
            next_id: 1,
            previous: Vec::new(),
        }
    }

    /// Number of ids handed out so far.
    pub fn assigned(&self) -> u64 {
        self.next_id.saturating_sub(1)
    }

    fn fresh(&mut self) -> u64 {
        let id = self.next_id;
        self.next_id += 1;
        id
    }

    /// Assign ids to the detections of the next clip. Returns one association per
    /// detection, in input order.
    pub fn link_clips(
        &mut self,
        video_id: u64,
        dets: &[ClipDetection],
        cfg: &MatchScoreConfig,
    ) -> Result<Vec<Association>> {
        cfg.validate()?;
        if self.next_id == 0 {
            self.next_id = 1;
        }
        let mut consumed = vec![false; self.previous.len()];
        let mut out: Vec<Option<Association>> = vec![None; dets.len()];
        for j in score_order(dets) {
            let mut best: Option<(usize, f64)> = None;
            for (i, (_, prev)) in self.previous.iter().enumerate() {
                if consumed[i] {
                    continue;
                }
                let s = match_score(prev, &dets[j], cfg)?;
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((i, s));
                }
            }
            let (id, linked) = match best {
                Some((i, s)) if s > cfg.tau => {
                    consumed[i] = true;
                    (self.previous[i].0, true)
                }
                _ => (self.fresh(), false),
            };
            out[j] = Some(Association {
                video_id,
                clip_index: dets[j].clip_index,
                detection: j,
                id,
                best_score: best.map(|(_, s)| s),
                linked,
            });
        }
        let out: Vec<Association> = out.into_iter().map(|a| a.expect("every detection visited")).collect();
        self.previous = out.iter().map(|a| a.id).zip(dets.iter().cloned()).collect();
        Ok(out)
    }
}

/// One identity stitched across a video.
#[derive(Debug, Clone, PartialEq)]
pub struct VideoTrack {
    pub id: u64,
    pub category: u32,
    pub score: f64,
    /// One entry per video frame; `None` where no clip of this id covers the frame.
    pub masks: Vec<Option<BinaryMask>>,
    pub boxes: Vec<Option<BBox>>,
}

/// Stitch tracked clip detections into per-id video tracks, ordered by id.
///
/// Clips are applied in clip order, so a later clip overwrites earlier ones on
/// shared frames.
pub fn merge_video(tracked: &[(u64, &ClipDetection)], video_length: usize) -> Result<Vec<VideoTrack>> {
    struct Acc {
        masks: Vec<Option<BinaryMask>>,
        boxes: Vec<Option<BBox>>,
        scores: Vec<f64>,
        categories: BTreeMap<u32, Vec<f64>>,
    }
    let mut order: Vec<usize> = (0..tracked.len()).collect();
    order.sort_by_key(|&i| (tracked[i].1.clip_index, i));
    let mut acc: BTreeMap<u64, Acc> = BTreeMap::new();
    for i in order {
        let (id, det) = tracked[i];
        if det.frame_end() > video_length {
            return Err(Error::invalid(format!(
                "clip {} ends at frame {} beyond video length {video_length}",
                det.clip_index,
                det.frame_end() - 1
            )));
        }
        let a = acc.entry(id).or_insert_with(|| Acc {
            masks: vec![None; video_length],
            boxes: vec![None; video_length],
            scores: Vec::new(),
            categories: BTreeMap::new(),
        });
        for (k, m) in det.masks.frames().iter().enumerate() {
            a.masks[det.frame_start + k] = Some(m.clone());
            a.boxes[det.frame_start + k] = det.boxes[k];
        }
        a.scores.push(det.score);
        a.categories.entry(det.category).or_default().push(det.score);
    }
    Ok(acc
        .into_iter()
        .map(|(id, a)| {
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let category = a
                .categories
                .iter()
                .max_by(|(ca, sa), (cb, sb)| {
                    sa.len()
                        .cmp(&sb.len())
                        .then(mean(sa).total_cmp(&mean(sb)))
                        .then(cb.cmp(ca))
                })
                .map(|(c, _)| *c)
                .expect("every track has a category");
            VideoTrack {
                id,
                category,
                score: mean(&a.scores),
                masks: a.masks,
                boxes: a.boxes,
            }
        })
        .collect())
}
