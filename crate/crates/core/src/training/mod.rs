//! Sample matching and forward evaluation of the training losses.

mod losses;
mod matcher;

pub use losses::{
    downsample_max, embed_similarity, loss_cls, loss_mask, loss_reg, loss_total, loss_track, smooth_l1, LossComponents,
    LossWeights, MaskSample, PROB_EPS,
};
pub use matcher::{match_samples, matcher_box, Assignment, GroundTruthClip, GtInstance, MatchResult, MatcherConfig};

use serde::Serialize;

use crate::assembly::MaskParams;
use crate::error::{Error, Result};
use crate::heads::{encode_boxes, generate_anchors};
use crate::io::container::{ClipBoxes, ClipNetOut};
use crate::primitives::BinaryMask;

/// Loss components of one clip. Terms over positives are `None` without positives.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ClipLosses {
    pub video_id: u64,
    pub clip_index: usize,
    pub n_pos: usize,
    pub n_neg: usize,
    pub cls: f64,
    pub reg: Option<f64>,
    pub mask: Option<f64>,
    pub track: Option<f64>,
}

/// Match the anchors of a regression-form clip against its ground truth and
/// evaluate every loss term.
///
/// Anchors are matched at the clip's center frame; instances absent there do
/// not take part in matching.
pub fn clip_losses(net: &ClipNetOut, gt: &GroundTruthClip, cfg: &MatcherConfig) -> Result<ClipLosses> {
    let meta = &net.meta;
    let regression = match &net.boxes {
        ClipBoxes::Regression(r) => r,
        ClipBoxes::Decoded(_) => {
            return Err(Error::invalid(format!(
                "clip v{}/c{}: loss evaluation needs per-anchor box regression",
                meta.video_id, meta.clip_index
            )))
        }
    };
    if (gt.frame_start, gt.frame_end) != (meta.frame_start, meta.frame_end) {
        return Err(Error::invalid(format!(
            "ground truth window [{}, {}] differs from clip window [{}, {}]",
            gt.frame_start, gt.frame_end, meta.frame_start, meta.frame_end
        )));
    }
    let anchor_cfg = meta.anchors.as_ref().expect("regression clips carry anchors");
    let anchors = generate_anchors(anchor_cfg, &anchor_cfg.level_dims(meta.image_height, meta.image_width))?;

    let center = meta.frame_start + (meta.frames() - 1) / 2;
    let matched: Vec<usize> = (0..gt.instances.len())
        .filter(|&i| gt.instances[i].boxes.get(center).is_some())
        .collect();
    let gt_boxes = matched
        .iter()
        .map(|&i| matcher_box(&gt.instances[i], center, cfg.use_circumscribed))
        .collect::<Result<Vec<_>>>()?;
    let result = match_samples(&anchors, &gt_boxes, cfg)?;

    let mut cls_scores = Vec::with_capacity(result.total());
    let mut cls_targets = Vec::with_capacity(result.total());
    let mut positives = Vec::with_capacity(result.n_pos);
    for (a, assignment) in result.assignments.iter().enumerate() {
        match assignment {
            Assignment::Positive(g) => {
                let inst = matched[*g];
                cls_scores.push(net.scores[a].clone());
                cls_targets.push(gt.instances[inst].category as usize);
                positives.push((a, inst));
            }
            Assignment::Negative => {
                cls_scores.push(net.scores[a].clone());
                cls_targets.push(0);
            }
            Assignment::Ignored => {}
        }
    }
    let cls = loss_cls(&cls_scores, &cls_targets)?;

    let (mut reg, mut mask, mut track) = (None, None, None);
    if !positives.is_empty() {
        let mut preds = Vec::with_capacity(positives.len());
        let mut targets = Vec::with_capacity(positives.len());
        for &(a, inst) in &positives {
            let mut target = Vec::with_capacity(4 * meta.frames());
            for t in meta.frame_start..=meta.frame_end {
                match gt.instances[inst].boxes.get(t) {
                    Some(b) => target.extend(encode_boxes(&anchors[a], std::slice::from_ref(b))?),
                    None => target.extend([f64::NAN; 4]),
                }
            }
            preds.push(regression[a].clone());
            targets.push(target);
        }
        reg = Some(loss_reg(&preds, &targets)?);

        let params = positives
            .iter()
            .map(|&(a, _)| MaskParams::from_vec(meta.head_variant, net.mask_params[a].clone()))
            .collect::<Result<Vec<_>>>()?;
        let gt_frames: Vec<Vec<Option<&BinaryMask>>> = positives
            .iter()
            .map(|&(_, inst)| {
                (meta.frame_start..=meta.frame_end)
                    .map(|t| gt.instances[inst].masks.get(&t))
                    .collect()
            })
            .collect();
        let samples: Vec<MaskSample<'_>> = positives
            .iter()
            .zip(&params)
            .zip(&gt_frames)
            .map(|((&(_, inst), params), frames)| MaskSample {
                params,
                cbox: gt.circumscribed(inst).expect("matched instances are present"),
                gt_masks: frames,
            })
            .collect();
        mask = Some(loss_mask(&net.prototypes, &samples)?);

        let embeddings: Vec<Vec<f64>> = positives.iter().map(|&(a, _)| net.embeddings[a].clone()).collect();
        let ids: Vec<u64> = positives.iter().map(|&(_, inst)| gt.instances[inst].id).collect();
        track = Some(loss_track(&embeddings, &ids)?);
    }
    Ok(ClipLosses {
        video_id: meta.video_id,
        clip_index: meta.clip_index,
        n_pos: result.n_pos,
        n_neg: result.n_neg,
        cls,
        reg,
        mask,
        track,
    })
}

/// Average each component over the clips where it is defined.
pub fn summarize_losses(clips: &[ClipLosses], weights: &LossWeights) -> Result<(LossComponents, f64)> {
    weights.validate()?;
    if clips.is_empty() {
        return Err(Error::invalid("no clips to evaluate"));
    }
    let mean = |values: Vec<f64>| -> f64 {
        if values.is_empty() {
            0.0
        } else {
            values.iter().sum::<f64>() / values.len() as f64
        }
    };
    let comps = LossComponents {
        cls: mean(clips.iter().map(|c| c.cls).collect()),
        reg: mean(clips.iter().filter_map(|c| c.reg).collect()),
        mask: mean(clips.iter().filter_map(|c| c.mask).collect()),
        track: mean(clips.iter().filter_map(|c| c.track).collect()),
    };
    let total = loss_total(&comps, weights);
    Ok((comps, total))
}
