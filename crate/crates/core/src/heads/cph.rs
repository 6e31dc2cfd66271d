use crate::error::{Error, Result};
use crate::heads::conv::{conv_forward, ConvKind, ConvLayer};
use crate::heads::layers::{conv_spec, Layer, LayerSpec};
use crate::tensor::{Cube, FeatureCube};

/// Structure of the clip-level prediction heads.
#[derive(Debug, Clone, PartialEq)]
pub struct CphConfig {
    /// Feature channels `C` of every pyramid level.
    pub channels: usize,
    /// Class logits per anchor, background included.
    pub num_classes: usize,
    pub embed_dim: usize,
    /// Mask parameters `k'` per anchor.
    pub mask_params: usize,
    pub anchors_per_cell: usize,
    pub tower_depth: usize,
    /// Shared box-regression / mask-parameter tower.
    pub box_kind: ConvKind,
    pub track_kind: ConvKind,
    pub cls_kind: ConvKind,
}

impl CphConfig {
    /// Box and tracking towers 3D, classification tower 2D.
    pub fn new(
        channels: usize,
        num_classes: usize,
        embed_dim: usize,
        mask_params: usize,
        anchors_per_cell: usize,
    ) -> Self {
        CphConfig {
            channels,
            num_classes,
            embed_dim,
            mask_params,
            anchors_per_cell,
            tower_depth: 4,
            box_kind: ConvKind::Conv3d,
            track_kind: ConvKind::Conv3d,
            cls_kind: ConvKind::Conv2d,
        }
    }

    fn tower_specs(&self, branch: &str, kind: ConvKind) -> Vec<LayerSpec> {
        let (kernel, padding) = match kind {
            ConvKind::Conv3d => ((3, 3, 3), (1, 1, 1)),
            ConvKind::Conv2d => ((1, 3, 3), (0, 1, 1)),
        };
        (0..self.tower_depth)
            .map(|i| {
                conv_spec(
                    format!("cph/{branch}/tower/{i}"),
                    kind,
                    kernel,
                    padding,
                    self.channels,
                    self.channels,
                    true,
                )
            })
            .collect()
    }

    fn pred_spec(&self, name: &str, kind: ConvKind, frames: usize, width: usize) -> LayerSpec {
        // 3D prediction layers span the whole clip and emit one slice
        let kt = if kind == ConvKind::Conv3d { frames } else { 1 };
        conv_spec(
            format!("cph/{name}"),
            kind,
            (kt, 3, 3),
            (0, 1, 1),
            self.channels,
            self.anchors_per_cell * width,
            false,
        )
    }

    /// Every parameterized layer for clips of `frames` frames, in storage order.
    pub fn layer_specs(&self, frames: usize) -> Vec<LayerSpec> {
        let mut specs = self.tower_specs("cls", self.cls_kind);
        specs.push(self.pred_spec("cls/pred", self.cls_kind, frames, self.num_classes));
        specs.extend(self.tower_specs("box", self.box_kind));
        specs.push(self.pred_spec("box/pred_box", self.box_kind, frames, 4 * frames));
        specs.push(self.pred_spec("box/pred_mask", self.box_kind, frames, self.mask_params));
        specs.extend(self.tower_specs("track", self.track_kind));
        specs.push(self.pred_spec("track/pred", self.track_kind, frames, self.embed_dim));
        specs
    }

    pub fn record_len(&self, frames: usize) -> usize {
        self.num_classes + self.embed_dim + 4 * frames + self.mask_params
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Branch {
    tower: Vec<ConvLayer>,
    preds: Vec<ConvLayer>,
}

impl Branch {
    /// Tower then each prediction layer; per-frame outputs are mean-pooled
    /// over time so every branch yields one slice per clip.
    fn forward(&self, input: &Cube) -> Result<Vec<Cube>> {
        let mut x = input.clone();
        for layer in &self.tower {
            x = conv_forward(&x, layer)?;
        }
        self.preds
            .iter()
            .map(|p| conv_forward(&x, p).map(|out| temporal_mean(&out)))
            .collect()
    }
}

fn temporal_mean(cube: &Cube) -> Cube {
    let (t, h, w, c) = cube.shape();
    if t == 1 {
        return cube.clone();
    }
    let plane = h * w * c;
    let data = cube.as_slice();
    let mut out = vec![0.0; plane];
    for ti in 0..t {
        for (o, v) in out.iter_mut().zip(&data[ti * plane..(ti + 1) * plane]) {
            *o += v;
        }
    }
    for v in &mut out {
        *v /= t as f64;
    }
    Cube::from_raw(1, h, w, c, out)
}

/// Weights of the prediction heads for one clip length.
#[derive(Debug, Clone, PartialEq)]
pub struct CphWeights {
    config: CphConfig,
    frames: usize,
    cls: Branch,
    box_mask: Branch,
    track: Branch,
}

impl CphWeights {
    /// Assemble from built layers given in [`CphConfig::layer_specs`] order.
    pub fn from_layers(config: &CphConfig, frames: usize, layers: Vec<Layer>) -> Result<Self> {
        let specs = config.layer_specs(frames);
        if layers.len() != specs.len() {
            return Err(Error::dims(format!("{} head layers", specs.len()), layers.len()));
        }
        let mut convs = Vec::with_capacity(layers.len());
        for (spec, layer) in specs.iter().zip(layers) {
            let conv = layer.into_conv(&spec.name)?;
            let expected = spec
                .build(conv.weights().to_vec(), conv.bias().to_vec())?
                .into_conv(&spec.name)?;
            if expected != conv {
                return Err(Error::invalid(format!("layer {} does not match its spec", spec.name)));
            }
            convs.push(conv);
        }
        let d = config.tower_depth;
        let mut it = convs.into_iter();
        let mut take = |n: usize| -> Vec<ConvLayer> { it.by_ref().take(n).collect() };
        let cls = Branch {
            tower: take(d),
            preds: take(1),
        };
        let box_mask = Branch {
            tower: take(d),
            preds: take(2),
        };
        let track = Branch {
            tower: take(d),
            preds: take(1),
        };
        Ok(CphWeights {
            config: config.clone(),
            frames,
            cls,
            box_mask,
            track,
        })
    }

    /// Every parameter drawn from `init`, in storage order.
    pub fn init(config: &CphConfig, frames: usize, init: &mut dyn FnMut() -> f64) -> Result<Self> {
        let layers = config
            .layer_specs(frames)
            .iter()
            .map(|s| s.build_with(init))
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(config, frames, layers)
    }

    pub fn config(&self) -> &CphConfig {
        &self.config
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    /// Layers in storage order.
    pub fn layers(&self) -> Vec<&ConvLayer> {
        [&self.cls, &self.box_mask, &self.track]
            .into_iter()
            .flat_map(|b| b.tower.iter().chain(&b.preds))
            .collect()
    }
}

/// Per-anchor outputs of one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionRecord {
    pub class_logits: Vec<f64>,
    pub embedding: Vec<f64>,
    pub box_regression: Vec<f64>,
    pub mask_params: Vec<f64>,
}

impl PredictionRecord {
    pub fn len(&self) -> usize {
        self.class_logits.len() + self.embedding.len() + self.box_regression.len() + self.mask_params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// One record per anchor, ordered `(row, col, anchor)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RawClipPredictions {
    pub height: usize,
    pub width: usize,
    pub records: Vec<PredictionRecord>,
}

/// Run the heads over every pyramid level of one clip.
pub fn cph_forward(levels: &[FeatureCube], weights: &CphWeights) -> Result<Vec<RawClipPredictions>> {
    levels.iter().map(|f| cph_level(f, weights)).collect()
}

fn cph_level(features: &FeatureCube, weights: &CphWeights) -> Result<RawClipPredictions> {
    let cfg = &weights.config;
    let (t, h, w, c) = features.shape();
    if t != weights.frames {
        return Err(Error::dims(
            format!("{}-frame clip", weights.frames),
            format!("{t} frames"),
        ));
    }
    if c != cfg.channels {
        return Err(Error::dims(
            format!("{} feature channels", cfg.channels),
            format!("{c} channels"),
        ));
    }
    let cls = weights.cls.forward(features)?;
    let box_mask = weights.box_mask.forward(features)?;
    let track = weights.track.forward(features)?;
    let (cls, boxes, masks, embeds) = (&cls[0], &box_mask[0], &box_mask[1], &track[0]);

    let a_count = cfg.anchors_per_cell;
    let slice = |cube: &Cube, y: usize, x: usize, a: usize, width: usize| -> Vec<f64> {
        cube.pixel(0, y, x)[a * width..(a + 1) * width].to_vec()
    };
    let mut records = Vec::with_capacity(h * w * a_count);
    for y in 0..h {
        for x in 0..w {
            for a in 0..a_count {
                records.push(PredictionRecord {
                    class_logits: slice(cls, y, x, a, cfg.num_classes),
                    embedding: slice(embeds, y, x, a, cfg.embed_dim),
                    box_regression: slice(boxes, y, x, a, 4 * t),
                    mask_params: slice(masks, y, x, a, cfg.mask_params),
                });
            }
        }
    }
    Ok(RawClipPredictions {
        height: h,
        width: w,
        records,
    })
}

/// Numerically stable softmax.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|v| v / sum).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn small_cfg() -> CphConfig {
        CphConfig::new(4, 3, 5, 6, 3)
    }

    #[test]
    fn record_shape_contract() {
        let cfg = small_cfg();
        let w = CphWeights::init(&cfg, 3, &mut || 0.01).unwrap();
        let feats = Cube::from_fn(3, 8, 8, 4, |t, y, x, c| ((t + y * x + c) % 5) as f64 * 0.1).unwrap();
        let out = cph_forward(&[feats], &w).unwrap();
        assert_eq!(out[0].records.len(), 192);
        assert!(out[0].records.iter().all(|r| r.len() == 3 + 5 + 12 + 6));
        assert_eq!(cfg.record_len(3), 26);
    }

    #[test]
    fn zero_weights_uniform_classes() {
        let cfg = small_cfg();
        let w = CphWeights::init(&cfg, 2, &mut || 0.0).unwrap();
        let feats = Cube::from_fn(2, 4, 4, 4, |t, y, x, c| (t + y + x + c) as f64).unwrap();
        for r in &cph_forward(&[feats], &w).unwrap()[0].records {
            let p = softmax(&r.class_logits);
            assert!(p.iter().all(|v| (v - 1.0 / 3.0).abs() < 1e-15));
        }
    }

    #[test]
    fn storage_order_roundtrip() {
        let cfg = small_cfg();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let w = CphWeights::init(&cfg, 3, &mut || rng.random_range(-0.1..0.1)).unwrap();
        let layers = w.layers().into_iter().map(|c| Layer::Conv(c.clone())).collect();
        assert_eq!(CphWeights::from_layers(&cfg, 3, layers).unwrap(), w);
        assert_eq!(cfg.layer_specs(3).len(), 4 + 1 + 4 + 2 + 4 + 1);
    }

    #[test]
    fn rejects_wrong_clip_length() {
        let cfg = small_cfg();
        let w = CphWeights::init(&cfg, 3, &mut || 0.0).unwrap();
        assert!(cph_forward(&[Cube::zeros(2, 4, 4, 4).unwrap()], &w).is_err());
        assert!(cph_forward(&[Cube::zeros(3, 4, 4, 5).unwrap()], &w).is_err());
    }

    #[test]
    fn softmax_sums_to_one() {
        let p = softmax(&[1000.0, 1000.0, 0.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert!((p[0] - 0.5).abs() < 1e-15);
    }
}
