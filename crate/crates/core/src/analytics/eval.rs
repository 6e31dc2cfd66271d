use std::collections::{BTreeMap, BTreeSet};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::{AnnotationSet, ResultsFile};
use crate::primitives::{st_miou, BinaryMask};

/// 0.50, 0.55, ..., 0.95.
pub const IOU_THRESHOLDS: [f64; 10] = [0.5, 0.55, 0.6, 0.65, 0.7, 0.75, 0.8, 0.85, 0.9, 0.95];
pub const RECALL_POINTS: usize = 101;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryAp {
    pub category_id: u32,
    pub name: String,
    /// `None` when the category has no ground truth.
    pub ap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub ap: f64,
    pub ap50: f64,
    pub ap75: f64,
    pub ar1: f64,
    pub ar10: f64,
    pub per_category: Vec<CategoryAp>,
}

/// Interpolated AP from detections sorted by descending score.
///
/// `tp[i]` marks whether detection `i` matched; precision is made monotone from
/// the right and sampled at 101 evenly spaced recall levels.
pub fn interpolated_ap(tp: &[bool], num_gt: usize) -> f64 {
    if num_gt == 0 {
        return 0.0;
    }
    let mut recall = Vec::with_capacity(tp.len());
    let mut precision = Vec::with_capacity(tp.len());
    let mut hits = 0usize;
    for (i, &m) in tp.iter().enumerate() {
        hits += m as usize;
        recall.push(hits as f64 / num_gt as f64);
        precision.push(hits as f64 / (i + 1) as f64);
    }
    for i in (0..precision.len().saturating_sub(1)).rev() {
        precision[i] = precision[i].max(precision[i + 1]);
    }
    let mut sum = 0.0;
    for r in 0..RECALL_POINTS {
        let level = r as f64 / (RECALL_POINTS - 1) as f64;
        let idx = recall.partition_point(|&v| v < level - 1e-12);
        if idx < precision.len() {
            sum += precision[idx];
        }
    }
    sum / RECALL_POINTS as f64
}

struct Pred {
    video: u64,
    masks: Vec<Option<BinaryMask>>,
}

struct Gt {
    video: u64,
    masks: Vec<Option<BinaryMask>>,
}

/// Per-category state: predictions by descending score and their IoUs against
/// same-video ground truth.
struct CategoryEval {
    preds: Vec<Pred>,
    gts: Vec<Gt>,
    /// `ious[p][g]`, `None` across videos.
    ious: Vec<Vec<Option<f64>>>,
}

impl CategoryEval {
    /// Greedy matching: each prediction takes the unmatched same-video ground
    /// truth with the highest IoU at or above `thr`. Ties go to the lower index.
    fn matches(&self, thr: f64, keep: &[bool]) -> Vec<bool> {
        let mut used = vec![false; self.gts.len()];
        let mut tp = Vec::new();
        for (p, row) in self.ious.iter().enumerate() {
            if !keep[p] {
                continue;
            }
            let mut best: Option<(usize, f64)> = None;
            for (g, iou) in row.iter().enumerate() {
                if let Some(v) = iou {
                    if !used[g] && *v >= thr && best.is_none_or(|(_, b)| *v > b) {
                        best = Some((g, *v));
                    }
                }
            }
            if let Some((g, _)) = best {
                used[g] = true;
            }
            tp.push(best.is_some());
        }
        tp
    }

    /// Keep at most `n` top-scoring predictions per video.
    fn top_n(&self, n: usize) -> Vec<bool> {
        let mut seen: BTreeMap<u64, usize> = BTreeMap::new();
        self.preds
            .iter()
            .map(|p| {
                let c = seen.entry(p.video).or_default();
                *c += 1;
                *c <= n
            })
            .collect()
    }
}

/// Score a results file against ground truth.
pub fn evaluate(results: &ResultsFile, gt: &AnnotationSet) -> Result<EvalReport> {
    gt.validate()?;
    results.validate()?;
    let categories: BTreeSet<u32> = gt.categories.iter().map(|c| c.id).collect();
    let mut per_cat: BTreeMap<u32, CategoryEval> = categories
        .iter()
        .map(|&c| {
            (
                c,
                CategoryEval {
                    preds: Vec::new(),
                    gts: Vec::new(),
                    ious: Vec::new(),
                },
            )
        })
        .collect();

    for a in &gt.annotations {
        per_cat.get_mut(&a.category_id).expect("validated").gts.push(Gt {
            video: a.video_id,
            masks: a.decode_masks()?,
        });
    }
    let mut order: Vec<usize> = (0..results.0.len()).collect();
    order.sort_by(|&a, &b| results.0[b].score.total_cmp(&results.0[a].score).then(a.cmp(&b)));
    for i in order {
        let r = &results.0[i];
        let ctx = format!("results[{i}]");
        let video = gt
            .video(r.video_id)
            .ok_or_else(|| Error::format(ctx.clone(), format!("unknown video id {}", r.video_id)))?;
        let cat = per_cat
            .get_mut(&r.category_id)
            .ok_or_else(|| Error::format(ctx.clone(), format!("unknown category id {}", r.category_id)))?;
        if r.segmentations.len() != video.length {
            return Err(Error::format(
                ctx,
                format!("{} frames for a {}-frame video", r.segmentations.len(), video.length),
            ));
        }
        if let Some(rle) = r
            .segmentations
            .iter()
            .flatten()
            .find(|s| (s.height, s.width) != (video.height, video.width))
        {
            return Err(Error::format(
                ctx,
                format!(
                    "mask {}x{} in a {}x{} video",
                    rle.height, rle.width, video.height, video.width
                ),
            ));
        }
        cat.preds.push(Pred {
            video: r.video_id,
            masks: r.decode_masks()?,
        });
    }

    per_cat.par_iter_mut().try_for_each(|(_, cat)| -> Result<()> {
        cat.ious = cat
            .preds
            .iter()
            .map(|p| {
                let pm: Vec<Option<&BinaryMask>> = p.masks.iter().map(Option::as_ref).collect();
                cat.gts
                    .iter()
                    .map(|g| {
                        if g.video != p.video {
                            return Ok(None);
                        }
                        let gm: Vec<Option<&BinaryMask>> = g.masks.iter().map(Option::as_ref).collect();
                        st_miou(&pm, &gm).map(Some)
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(())
    })?;

    let with_gt: Vec<(&u32, &CategoryEval)> = per_cat.iter().filter(|(_, c)| !c.gts.is_empty()).collect();
    let mean = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let ap_at = |cat: &CategoryEval, thr: f64| {
        let keep = vec![true; cat.preds.len()];
        interpolated_ap(&cat.matches(thr, &keep), cat.gts.len())
    };
    let recall_at = |cat: &CategoryEval, thr: f64, n: usize| {
        let hits = cat.matches(thr, &cat.top_n(n)).iter().filter(|&&m| m).count();
        hits as f64 / cat.gts.len() as f64
    };

    let cat_ap: BTreeMap<u32, f64> = with_gt
        .iter()
        .map(|(&c, cat)| (c, mean(&IOU_THRESHOLDS.map(|t| ap_at(cat, t)))))
        .collect();
    let ap50 = mean(&with_gt.iter().map(|(_, c)| ap_at(c, 0.5)).collect::<Vec<_>>());
    let ap75 = mean(&with_gt.iter().map(|(_, c)| ap_at(c, 0.75)).collect::<Vec<_>>());
    let ar = |n: usize| {
        mean(
            &with_gt
                .iter()
                .map(|(_, c)| mean(&IOU_THRESHOLDS.map(|t| recall_at(c, t, n))))
                .collect::<Vec<_>>(),
        )
    };

    Ok(EvalReport {
        ap: mean(&cat_ap.values().copied().collect::<Vec<_>>()),
        ap50,
        ap75,
        ar1: ar(1),
        ar10: ar(10),
        per_category: gt
            .categories
            .iter()
            .map(|c| CategoryAp {
                category_id: c.id,
                name: c.name.clone(),
                ap: cat_ap.get(&c.id).copied(),
            })
            .collect(),
    })
}
