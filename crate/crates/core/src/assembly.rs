//! Instance mask generation from prototypes and per-instance dynamic filters.
//!
//! Two heads are provided. The linear-combination head takes a `k`-vector of
//! coefficients, combines prototype channels, applies a sigmoid and crops with
//! the instance's circumscribed box. The dynamic-FCN head feeds prototypes plus
//! a relative-coordinate map through three `1×1×1` layers whose weights come
//! from a 169-value parameter vector, and applies no crop.
//!
//! Clip-level functions take a whole prototype cube and one box shared by all
//! frames. The `*_frame` functions are the single-frame formulation with a
//! per-frame box; on one-frame cubes the two agree bit for bit.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::primitives::{crop, BBox, BinaryMask, FloatClip, FloatMask, MaskClip};
use crate::tensor::{Cube, PrototypeCube};

/// Prototypes live at one quarter of the input resolution.
pub const PROTO_STRIDE: f64 = 4.0;

/// Prototype channels expected by the dynamic-FCN head.
pub const CONDINST_PROTO_CHANNELS: usize = 8;
/// Hidden width of both dynamic-FCN hidden layers.
pub const CONDINST_HIDDEN: usize = 8;
/// Input channels of the first dynamic layer: prototypes plus `(dx, dy)`.
pub const CONDINST_IN: usize = CONDINST_PROTO_CHANNELS + 2;
pub const CONDINST_LAYER1_LEN: usize = CONDINST_IN * CONDINST_HIDDEN + CONDINST_HIDDEN;
pub const CONDINST_LAYER2_LEN: usize = CONDINST_HIDDEN * CONDINST_HIDDEN + CONDINST_HIDDEN;
pub const CONDINST_LAYER3_LEN: usize = CONDINST_HIDDEN + 1;
pub const CONDINST_PARAMS: usize = CONDINST_LAYER1_LEN + CONDINST_LAYER2_LEN + CONDINST_LAYER3_LEN;

const _: () = assert!(CONDINST_PARAMS == 169);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum HeadVariant {
    Yolact,
    CondInst,
}

impl HeadVariant {
    pub fn as_str(&self) -> &'static str {
        match self {
            HeadVariant::Yolact => "yolact",
            HeadVariant::CondInst => "condinst",
        }
    }
}

impl std::str::FromStr for HeadVariant {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "yolact" => Ok(HeadVariant::Yolact),
            "condinst" => Ok(HeadVariant::CondInst),
            other => Err(Error::invalid(format!("unknown head variant {other:?}"))),
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Coefficients of the linear-combination head, one per prototype channel.
#[derive(Debug, Clone, PartialEq)]
pub struct YolactParams(Vec<f64>);

impl YolactParams {
    pub fn new(coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.is_empty() || coeffs.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("mask coefficients must be finite and non-empty"));
        }
        Ok(YolactParams(coeffs))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// Flat parameters of the three dynamic layers.
///
/// Layout: layer 1 weights `[in=10][out=8]` then bias `[8]`; layer 2 weights
/// `[in=8][out=8]` then bias `[8]`; layer 3 weights `[in=8]` then bias `[1]`.
/// Input channel order is the 8 prototype channels followed by `dx`, `dy`.
#[derive(Debug, Clone, PartialEq)]
pub struct CondInstParams(Vec<f64>);

impl CondInstParams {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.len() != CONDINST_PARAMS {
            return Err(Error::invalid(format!(
                "dynamic FCN expects {CONDINST_PARAMS} parameters, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("dynamic FCN parameters must be finite"));
        }
        Ok(CondInstParams(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    /// `(weights, bias)` of each layer in order.
    pub fn layers(&self) -> [(&[f64], &[f64]); 3] {
        let p = &self.0;
        let l1w = CONDINST_IN * CONDINST_HIDDEN;
        let l2 = CONDINST_LAYER1_LEN;
        let l2w = l2 + CONDINST_HIDDEN * CONDINST_HIDDEN;
        let l3 = l2 + CONDINST_LAYER2_LEN;
        let l3w = l3 + CONDINST_HIDDEN;
        [
            (&p[..l1w], &p[l1w..l2]),
            (&p[l2..l2w], &p[l2w..l3]),
            (&p[l3..l3w], &p[l3w..]),
        ]
    }
}

/// `T×Hp×Wp×2` map of offsets to a clip-wide center, normalized by `max(Hp, Wp)`.
pub fn relative_coords(t: usize, hp: usize, wp: usize, center: (f64, f64)) -> Result<Cube> {
    if !center.0.is_finite() || !center.1.is_finite() {
        return Err(Error::invalid("relative-coordinate center must be finite"));
    }
    let s = hp.max(wp) as f64;
    let (cx, cy) = center;
    Cube::from_fn(t, hp, wp, 2, |_, y, x, ch| {
        if ch == 0 {
            (x as f64 - cx) / s
        } else {
            (y as f64 - cy) / s
        }
    })
}

fn check_yolact(protos: &PrototypeCube, theta: &YolactParams) -> Result<()> {
    if theta.len() != protos.channels() {
        return Err(Error::dims(
            format!("{} coefficients", protos.channels()),
            format!("{} coefficients", theta.len()),
        ));
    }
    Ok(())
}

fn check_condinst(protos: &PrototypeCube) -> Result<()> {
    if protos.channels() != CONDINST_PROTO_CHANNELS {
        return Err(Error::dims(
            format!("{CONDINST_PROTO_CHANNELS} prototype channels"),
            format!("{} channels", protos.channels()),
        ));
    }
    Ok(())
}

/// Linear-combination head over a whole clip, cropped by the circumscribed box
/// `cbox` (image coordinates) on every frame.
pub fn assemble_yolact(protos: &PrototypeCube, theta: &YolactParams, cbox: &BBox) -> Result<FloatClip> {
    check_yolact(protos, theta)?;
    let (t, h, w, k) = protos.shape();
    let coeffs = theta.as_slice();
    let data = protos.as_slice();
    let plane = h * w;
    let mut out = vec![0.0; t * plane];
    for (cell, value) in out.iter_mut().enumerate() {
        let px = &data[cell * k..(cell + 1) * k];
        let mut acc = 0.0;
        for c in 0..k {
            acc += px[c] * coeffs[c];
        }
        *value = sigmoid(acc);
    }
    let grid_box = cbox.scaled(1.0 / PROTO_STRIDE);
    let frames = out
        .chunks(plane)
        .map(|f| crop(&FloatMask::from_raw(h, w, f.to_vec()), &grid_box))
        .collect();
    MaskClip::new(frames)
}

/// Single-frame linear-combination head with that frame's own box.
pub fn assemble_yolact_frame(
    protos: &PrototypeCube,
    frame: usize,
    theta: &YolactParams,
    bbox: &BBox,
) -> Result<FloatMask> {
    check_yolact(protos, theta)?;
    check_frame(protos, frame)?;
    let (_, h, w, k) = protos.shape();
    let coeffs = theta.as_slice();
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let px = protos.pixel(frame, y, x);
            let mut acc = 0.0;
            for c in 0..k {
                acc += px[c] * coeffs[c];
            }
            out.push(sigmoid(acc));
        }
    }
    Ok(crop(&FloatMask::from_raw(h, w, out), &bbox.scaled(1.0 / PROTO_STRIDE)))
}

fn check_frame(protos: &PrototypeCube, frame: usize) -> Result<()> {
    if frame >= protos.frames() {
        return Err(Error::invalid(format!("frame {frame} out of {}", protos.frames())));
    }
    Ok(())
}

#[inline]
fn dense_relu(input: &[f64], weights: &[f64], bias: &[f64], out: &mut [f64]) {
    let n_out = bias.len();
    out.copy_from_slice(bias);
    for (i, &v) in input.iter().enumerate() {
        let row = &weights[i * n_out..(i + 1) * n_out];
        for o in 0..n_out {
            out[o] += v * row[o];
        }
    }
    for v in out.iter_mut() {
        *v = v.max(0.0);
    }
}

#[inline]
fn condinst_pixel(protos: &[f64], dx: f64, dy: f64, layers: &[(&[f64], &[f64]); 3]) -> f64 {
    let mut input = [0.0; CONDINST_IN];
    input[..CONDINST_PROTO_CHANNELS].copy_from_slice(protos);
    input[CONDINST_PROTO_CHANNELS] = dx;
    input[CONDINST_PROTO_CHANNELS + 1] = dy;
    let mut h1 = [0.0; CONDINST_HIDDEN];
    let mut h2 = [0.0; CONDINST_HIDDEN];
    dense_relu(&input, layers[0].0, layers[0].1, &mut h1);
    dense_relu(&h1, layers[1].0, layers[1].1, &mut h2);
    let (w3, b3) = layers[2];
    let mut acc = b3[0];
    for i in 0..CONDINST_HIDDEN {
        acc += h2[i] * w3[i];
    }
    sigmoid(acc)
}

/// Dynamic-FCN head over a whole clip. Relative coordinates point at the
/// center of `cbox` (image coordinates) and are shared by all frames.
pub fn assemble_condinst(protos: &PrototypeCube, theta: &CondInstParams, cbox: &BBox) -> Result<FloatClip> {
    check_condinst(protos)?;
    let (t, h, w, _) = protos.shape();
    let (cx, cy) = cbox.center();
    let coords = relative_coords(t, h, w, (cx / PROTO_STRIDE, cy / PROTO_STRIDE))?;
    let layers = theta.layers();
    let mut frames = Vec::with_capacity(t);
    for ti in 0..t {
        let mut out = Vec::with_capacity(h * w);
        for y in 0..h {
            for x in 0..w {
                let rel = coords.pixel(ti, y, x);
                out.push(condinst_pixel(protos.pixel(ti, y, x), rel[0], rel[1], &layers));
            }
        }
        frames.push(FloatMask::from_raw(h, w, out));
    }
    MaskClip::new(frames)
}

/// Single-frame dynamic-FCN head centered on that frame's own box.
pub fn assemble_condinst_frame(
    protos: &PrototypeCube,
    frame: usize,
    theta: &CondInstParams,
    bbox: &BBox,
) -> Result<FloatMask> {
    check_condinst(protos)?;
    check_frame(protos, frame)?;
    let (_, h, w, _) = protos.shape();
    let (cx, cy) = bbox.center();
    let (cx, cy) = (cx / PROTO_STRIDE, cy / PROTO_STRIDE);
    let s = h.max(w) as f64;
    let layers = theta.layers();
    let mut out = Vec::with_capacity(h * w);
    for y in 0..h {
        for x in 0..w {
            let dx = (x as f64 - cx) / s;
            let dy = (y as f64 - cy) / s;
            out.push(condinst_pixel(protos.pixel(frame, y, x), dx, dy, &layers));
        }
    }
    Ok(FloatMask::from_raw(h, w, out))
}

/// Per-instance dynamic-filter parameters of either head.
#[derive(Debug, Clone, PartialEq)]
pub enum MaskParams {
    Yolact(YolactParams),
    CondInst(CondInstParams),
}

impl MaskParams {
    pub fn from_vec(variant: HeadVariant, values: Vec<f64>) -> Result<Self> {
        Ok(match variant {
            HeadVariant::Yolact => MaskParams::Yolact(YolactParams::new(values)?),
            HeadVariant::CondInst => MaskParams::CondInst(CondInstParams::new(values)?),
        })
    }

    pub fn variant(&self) -> HeadVariant {
        match self {
            MaskParams::Yolact(_) => HeadVariant::Yolact,
            MaskParams::CondInst(_) => HeadVariant::CondInst,
        }
    }

    /// Clip mask with the head's own cropping rule.
    pub fn assemble(&self, protos: &PrototypeCube, cbox: &BBox) -> Result<FloatClip> {
        match self {
            MaskParams::Yolact(p) => assemble_yolact(protos, p, cbox),
            MaskParams::CondInst(p) => assemble_condinst(protos, p, cbox),
        }
    }
}

/// Bilinear resample (half-pixel centers, no corner alignment) of one frame.
pub fn resize_bilinear(mask: &FloatMask, out_h: usize, out_w: usize) -> FloatMask {
    let (in_h, in_w) = mask.dims();
    let axis = |out: usize, inp: usize| -> Vec<(usize, usize, f64)> {
        let scale = inp as f64 / out as f64;
        (0..out)
            .map(|o| {
                let src = ((o as f64 + 0.5) * scale - 0.5).max(0.0);
                let lo = (src.floor() as usize).min(inp - 1);
                let hi = (lo + 1).min(inp - 1);
                (lo, hi, src - lo as f64)
            })
            .collect()
    };
    let ys = axis(out_h, in_h);
    let xs = axis(out_w, in_w);
    let mut out = Vec::with_capacity(out_h * out_w);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            let top = mask.get(y0, x0) * (1.0 - fx) + mask.get(y0, x1) * fx;
            let bottom = mask.get(y1, x0) * (1.0 - fx) + mask.get(y1, x1) * fx;
            out.push((top * (1.0 - fy) + bottom * fy).clamp(0.0, 1.0));
        }
    }
    FloatMask::from_raw(out_h, out_w, out)
}

/// Foreground threshold applied after upsampling.
pub const BINARIZE_THRESHOLD: f64 = 0.5;

/// Upsample every frame to `out_h×out_w` and binarize (`> 0.5`).
pub fn finalize_mask(clip: &FloatClip, out_h: usize, out_w: usize) -> Result<MaskClip<BinaryMask>> {
    let (h, w) = clip.dims();
    if out_h < h || out_w < w {
        return Err(Error::invalid(format!(
            "output {out_h}x{out_w} smaller than prototype grid {h}x{w}"
        )));
    }
    let frames = clip
        .frames()
        .iter()
        .map(|f| {
            let up = resize_bilinear(f, out_h, out_w);
            let bits = up.as_slice().iter().map(|&v| (v > BINARIZE_THRESHOLD) as u8).collect();
            BinaryMask::from_vec(out_h, out_w, bits)
        })
        .collect::<Result<Vec<_>>>()?;
    MaskClip::new(frames)
}
