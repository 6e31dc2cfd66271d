use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::AnnotationSet;
use crate::primitives::{t_biou, t_miou};

pub const HISTOGRAM_BINS: usize = 20;
/// Proportions count samples at or above this IoU.
pub const HIGH_IOU: f64 = 0.75;

/// Histogram bin of an IoU in `[0, 1]`; 1.0 falls in the last bin.
pub fn histogram_bin(v: f64) -> usize {
    ((v * HISTOGRAM_BINS as f64).floor() as usize).min(HISTOGRAM_BINS - 1)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeltaStats {
    pub delta: usize,
    pub box_samples: u64,
    pub mask_samples: u64,
    pub box_histogram: [u64; HISTOGRAM_BINS],
    pub mask_histogram: [u64; HISTOGRAM_BINS],
    pub pb_ge075: f64,
    pub pm_ge075: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CoherenceReport {
    pub deltas: Vec<DeltaStats>,
}

fn proportion(hits: u64, total: u64) -> f64 {
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

/// T-BIoU / T-MIoU histograms for `delta = 1..=delta_max`.
///
/// A sample is an (instance, frame) pair where the instance is present and at
/// least one of the frames `t - delta`, `t + delta` also shows it.
pub fn coherence_stats(gt: &AnnotationSet, delta_max: usize) -> Result<CoherenceReport> {
    if gt.annotations.is_empty() {
        return Err(Error::invalid("coherence statistics need at least one annotation"));
    }
    if delta_max == 0 {
        return Err(Error::invalid("delta_max must be at least 1"));
    }
    let instances = gt
        .videos
        .iter()
        .map(|v| gt.instances(v.id))
        .collect::<Result<Vec<_>>>()?
        .into_iter()
        .flatten()
        .collect::<Vec<_>>();
    let mut deltas = Vec::with_capacity(delta_max);
    for delta in 1..=delta_max {
        let mut s = DeltaStats {
            delta,
            box_samples: 0,
            mask_samples: 0,
            box_histogram: [0; HISTOGRAM_BINS],
            mask_histogram: [0; HISTOGRAM_BINS],
            pb_ge075: 0.0,
            pm_ge075: 0.0,
        };
        let (mut box_hi, mut mask_hi) = (0u64, 0u64);
        for inst in &instances {
            for (t, _) in inst.boxes.iter() {
                if let Some(v) = t_biou(&inst.boxes, t, delta)? {
                    s.box_samples += 1;
                    s.box_histogram[histogram_bin(v)] += 1;
                    box_hi += (v >= HIGH_IOU) as u64;
                }
                if let Some(v) = t_miou(&inst.masks, t, delta)? {
                    s.mask_samples += 1;
                    s.mask_histogram[histogram_bin(v)] += 1;
                    mask_hi += (v >= HIGH_IOU) as u64;
                }
            }
        }
        s.pb_ge075 = proportion(box_hi, s.box_samples);
        s.pm_ge075 = proportion(mask_hi, s.mask_samples);
        deltas.push(s);
    }
    Ok(CoherenceReport { deltas })
}
