use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primitives::BBox;

/// Center-offset and log-size scaling applied by the box codec.
pub const CENTER_VARIANCE: f64 = 0.1;
pub const SIZE_VARIANCE: f64 = 0.2;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorLevel {
    /// Feature stride in input pixels.
    pub stride: f64,
    /// Anchor side length for aspect ratio 1, in input pixels.
    pub scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorConfig {
    pub levels: Vec<AnchorLevel>,
    /// Width / height ratios.
    pub ratios: Vec<f64>,
}

impl Default for AnchorConfig {
    /// P3–P7 layout: strides 8..128, scales 24..384, ratios {0.5, 1, 2}.
    fn default() -> Self {
        AnchorConfig {
            levels: [(8.0, 24.0), (16.0, 48.0), (32.0, 96.0), (64.0, 192.0), (128.0, 384.0)]
                .into_iter()
                .map(|(stride, scale)| AnchorLevel { stride, scale })
                .collect(),
            ratios: vec![0.5, 1.0, 2.0],
        }
    }
}

impl AnchorConfig {
    pub fn validate(&self) -> Result<()> {
        if self.levels.is_empty() || self.ratios.is_empty() {
            return Err(Error::invalid("anchor config needs at least one level and one ratio"));
        }
        let positive = |v: f64| v.is_finite() && v > 0.0;
        if !self.levels.iter().all(|l| positive(l.stride) && positive(l.scale))
            || !self.ratios.iter().all(|&r| positive(r))
        {
            return Err(Error::invalid("anchor strides, scales and ratios must be positive"));
        }
        Ok(())
    }

    pub fn anchors_per_cell(&self) -> usize {
        self.ratios.len()
    }

    /// Feature-map dims of every level for an input image.
    pub fn level_dims(&self, image_height: usize, image_width: usize) -> Vec<(usize, usize)> {
        self.levels
            .iter()
            .map(|l| {
                (
                    (image_height as f64 / l.stride).ceil().max(1.0) as usize,
                    (image_width as f64 / l.stride).ceil().max(1.0) as usize,
                )
            })
            .collect()
    }
}

/// One box per `(level, row, col, ratio)`, in that order, centered on the cell.
pub fn generate_anchors(cfg: &AnchorConfig, level_dims: &[(usize, usize)]) -> Result<Vec<BBox>> {
    cfg.validate()?;
    if level_dims.len() != cfg.levels.len() {
        return Err(Error::dims(
            format!("{} levels", cfg.levels.len()),
            format!("{} level dims", level_dims.len()),
        ));
    }
    let mut anchors = Vec::new();
    for (level, &(h, w)) in cfg.levels.iter().zip(level_dims) {
        for y in 0..h {
            for x in 0..w {
                let cx = (x as f64 + 0.5) * level.stride;
                let cy = (y as f64 + 0.5) * level.stride;
                for &r in &cfg.ratios {
                    let bw = level.scale * r.sqrt();
                    let bh = level.scale / r.sqrt();
                    anchors.push(BBox {
                        x1: cx - bw / 2.0,
                        y1: cy - bh / 2.0,
                        x2: cx + bw / 2.0,
                        y2: cy + bh / 2.0,
                    });
                }
            }
        }
    }
    Ok(anchors)
}

/// Decode `4T` regression values (`dx, dy, dw, dh` per frame) against an anchor.
pub fn decode_boxes(anchor: &BBox, regression: &[f64]) -> Result<Vec<BBox>> {
    if regression.is_empty() || !regression.len().is_multiple_of(4) {
        return Err(Error::dims("a multiple of 4 regression values", regression.len()));
    }
    if regression.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("box regression must be finite"));
    }
    let (acx, acy) = anchor.center();
    let (aw, ah) = (anchor.width(), anchor.height());
    regression
        .chunks(4)
        .map(|r| {
            let cx = acx + r[0] * CENTER_VARIANCE * aw;
            let cy = acy + r[1] * CENTER_VARIANCE * ah;
            let w = aw * (r[2] * SIZE_VARIANCE).exp();
            let h = ah * (r[3] * SIZE_VARIANCE).exp();
            BBox::new(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)
        })
        .collect()
}

/// Inverse of [`decode_boxes`]. Anchor and targets need positive area.
pub fn encode_boxes(anchor: &BBox, boxes: &[BBox]) -> Result<Vec<f64>> {
    let (acx, acy) = anchor.center();
    let (aw, ah) = (anchor.width(), anchor.height());
    if aw <= 0.0 || ah <= 0.0 {
        return Err(Error::invalid("cannot encode against a zero-area anchor"));
    }
    let mut out = Vec::with_capacity(boxes.len() * 4);
    for b in boxes {
        if b.width() <= 0.0 || b.height() <= 0.0 {
            return Err(Error::invalid(format!("cannot encode zero-area box {b:?}")));
        }
        let (cx, cy) = b.center();
        out.push((cx - acx) / (CENTER_VARIANCE * aw));
        out.push((cy - acy) / (CENTER_VARIANCE * ah));
        out.push((b.width() / aw).ln() / SIZE_VARIANCE);
        out.push((b.height() / ah).ln() / SIZE_VARIANCE);
    }
    Ok(out)
}
