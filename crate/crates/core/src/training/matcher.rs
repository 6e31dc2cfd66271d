use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primitives::{box_iou, circumscribe, BBox, BoxTrack, MaskTrack};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MatcherConfig {
    /// IoU above which an anchor is positive.
    pub eps_p: f64,
    /// IoU below which (against every ground truth) an anchor is negative.
    pub eps_n: f64,
    /// Match against the envelope of frames `t-1..=t+1` instead of frame `t`.
    pub use_circumscribed: bool,
}

impl Default for MatcherConfig {
    fn default() -> Self {
        MatcherConfig {
            eps_p: 0.5,
            eps_n: 0.4,
            use_circumscribed: true,
        }
    }
}

impl MatcherConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0 <= self.eps_n && self.eps_n <= self.eps_p && self.eps_p <= 1.0) {
            return Err(Error::invalid(format!(
                "matcher thresholds need 0 <= eps_n <= eps_p <= 1, got eps_n={} eps_p={}",
                self.eps_n, self.eps_p
            )));
        }
        Ok(())
    }
}

/// One annotated instance of a training clip.
#[derive(Debug, Clone, PartialEq)]
pub struct GtInstance {
    pub id: u64,
    pub category: u32,
    /// Keyed by absolute frame index.
    pub boxes: BoxTrack,
    pub masks: MaskTrack,
}

/// Ground truth restricted to one clip window.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruthClip {
    pub frame_start: usize,
    /// Inclusive.
    pub frame_end: usize,
    pub instances: Vec<GtInstance>,
}

impl GroundTruthClip {
    pub fn new(frame_start: usize, frame_end: usize, instances: Vec<GtInstance>) -> Result<Self> {
        if frame_end < frame_start {
            return Err(Error::invalid(format!(
                "empty clip window [{frame_start}, {frame_end}]"
            )));
        }
        for inst in &instances {
            let box_frames: Vec<usize> = inst.boxes.iter().map(|(t, _)| t).collect();
            let mask_frames: Vec<usize> = inst.masks.keys().copied().collect();
            if box_frames != mask_frames {
                return Err(Error::invalid(format!(
                    "instance {} has boxes and masks on different frames",
                    inst.id
                )));
            }
        }
        Ok(GroundTruthClip {
            frame_start,
            frame_end,
            instances,
        })
    }

    pub fn frames(&self) -> usize {
        self.frame_end + 1 - self.frame_start
    }

    /// Circumscribed box of an instance over the whole window, if present at all.
    pub fn circumscribed(&self, instance: usize) -> Option<BBox> {
        let inst = &self.instances[instance];
        circumscribe(
            inst.boxes
                .window(self.frame_start, self.frame_end)
                .iter()
                .map(|(_, b)| b),
        )
    }
}

/// Box used to match anchors for an instance at frame `t`.
pub fn matcher_box(instance: &GtInstance, t: usize, use_circumscribed: bool) -> Result<BBox> {
    let own = instance
        .boxes
        .get(t)
        .ok_or_else(|| Error::invalid(format!("instance {} absent at frame {t}", instance.id)))?;
    if !use_circumscribed {
        return Ok(*own);
    }
    let window = instance.boxes.window(t.saturating_sub(1), t + 1);
    Ok(circumscribe(window.iter().map(|(_, b)| b)).expect("frame t is present"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Assignment {
    /// Index of the matched ground truth.
    Positive(usize),
    Negative,
    Ignored,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchResult {
    pub assignments: Vec<Assignment>,
    pub n_pos: usize,
    pub n_neg: usize,
}

impl MatchResult {
    pub fn total(&self) -> usize {
        self.n_pos + self.n_neg
    }
}

/// Label every anchor positive, negative or ignored by its best ground-truth IoU.
pub fn match_samples(anchors: &[BBox], gt_boxes: &[BBox], cfg: &MatcherConfig) -> Result<MatchResult> {
    cfg.validate()?;
    let mut assignments = Vec::with_capacity(anchors.len());
    let (mut n_pos, mut n_neg) = (0, 0);
    for a in anchors {
        let mut best: Option<(usize, f64)> = None;
        for (g, gt) in gt_boxes.iter().enumerate() {
            let iou = box_iou(a, gt);
            if best.is_none_or(|(_, b)| iou > b) {
                best = Some((g, iou));
            }
        }
        let assignment = match best {
            Some((g, iou)) if iou > cfg.eps_p => {
                n_pos += 1;
                Assignment::Positive(g)
            }
            Some((_, iou)) if iou >= cfg.eps_n => Assignment::Ignored,
            _ => {
                n_neg += 1;
                Assignment::Negative
            }
        };
        assignments.push(assignment);
    }
    Ok(MatchResult {
        assignments,
        n_pos,
        n_neg,
    })
}
