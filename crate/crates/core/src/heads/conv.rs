use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::Cube;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ConvKind {
    /// Applied to each frame independently (frames stacked as a batch).
    Conv2d,
    /// Spatio-temporal; frames stacked along the temporal axis.
    Conv3d,
}

/// One convolution layer with its weights.
///
/// Weights are laid out `[out][kt][kh][kw][in]`. Temporal padding replicates
/// the edge frames; spatial padding is zero.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    kind: ConvKind,
    kernel: (usize, usize, usize),
    padding: (usize, usize, usize),
    in_channels: usize,
    out_channels: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    relu: bool,
    // [kt][kh][kw][in][out], the order the inner loop walks
    packed: Vec<f64>,
}

impl ConvLayer {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        kind: ConvKind,
        kernel: (usize, usize, usize),
        padding: (usize, usize, usize),
        in_channels: usize,
        out_channels: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        relu: bool,
    ) -> Result<Self> {
        let (kt, kh, kw) = kernel;
        if kt == 0 || kh == 0 || kw == 0 || in_channels == 0 || out_channels == 0 {
            return Err(Error::invalid("conv kernel and channel counts must be positive"));
        }
        if kind == ConvKind::Conv2d && (kt != 1 || padding.0 != 0) {
            return Err(Error::invalid("2D conv layers need kt = 1 and no temporal padding"));
        }
        let expected = out_channels * kt * kh * kw * in_channels;
        if weights.len() != expected {
            return Err(Error::dims(
                format!("{expected} weights for [{out_channels},{kt},{kh},{kw},{in_channels}]"),
                weights.len(),
            ));
        }
        if bias.len() != out_channels {
            return Err(Error::dims(format!("{out_channels} biases"), bias.len()));
        }
        if weights.iter().chain(&bias).any(|v| !v.is_finite()) {
            return Err(Error::invalid("conv parameters must be finite"));
        }
        let taps = kt * kh * kw;
        let mut packed = vec![0.0; expected];
        for o in 0..out_channels {
            for tap in 0..taps {
                for i in 0..in_channels {
                    packed[(tap * in_channels + i) * out_channels + o] = weights[(o * taps + tap) * in_channels + i];
                }
            }
        }
        Ok(ConvLayer {
            kind,
            kernel,
            padding,
            in_channels,
            out_channels,
            weights,
            bias,
            relu,
            packed,
        })
    }

    /// Layer with "same" spatial padding (`k / 2`); 3D layers also pad time by `kt / 2`.
    pub fn same(
        kind: ConvKind,
        kernel: (usize, usize, usize),
        in_channels: usize,
        out_channels: usize,
        weights: Vec<f64>,
        bias: Vec<f64>,
        relu: bool,
    ) -> Result<Self> {
        let pt = if kind == ConvKind::Conv3d { kernel.0 / 2 } else { 0 };
        Self::new(
            kind,
            kernel,
            (pt, kernel.1 / 2, kernel.2 / 2),
            in_channels,
            out_channels,
            weights,
            bias,
            relu,
        )
    }

    pub fn kind(&self) -> ConvKind {
        self.kind
    }

    pub fn kernel(&self) -> (usize, usize, usize) {
        self.kernel
    }

    pub fn padding(&self) -> (usize, usize, usize) {
        self.padding
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn relu(&self) -> bool {
        self.relu
    }

    /// `[out, kt, kh, kw, in]`.
    pub fn weight_shape(&self) -> [usize; 5] {
        [
            self.out_channels,
            self.kernel.0,
            self.kernel.1,
            self.kernel.2,
            self.in_channels,
        ]
    }

    pub fn output_shape(&self, input: (usize, usize, usize, usize)) -> Result<(usize, usize, usize, usize)> {
        let (t, h, w, c) = input;
        if c != self.in_channels {
            return Err(Error::dims(
                format!("{} input channels", self.in_channels),
                format!("{c} channels"),
            ));
        }
        let span = |n: usize, pad: usize, k: usize| (n + 2 * pad).checked_sub(k).map(|v| v + 1).filter(|v| *v > 0);
        let (kt, kh, kw) = self.kernel;
        let (pt, ph, pw) = self.padding;
        match (span(t, pt, kt), span(h, ph, kh), span(w, pw, kw)) {
            (Some(ot), Some(oh), Some(ow)) => Ok((ot, oh, ow, self.out_channels)),
            _ => Err(Error::dims(
                format!("input covering kernel {kt}x{kh}x{kw}"),
                format!("{t}x{h}x{w}"),
            )),
        }
    }
}

/// Cross-correlation of `input` with `layer`, plus bias and optional relu.
pub fn conv_forward(input: &Cube, layer: &ConvLayer) -> Result<Cube> {
    let (t_in, h_in, w_in, c_in) = input.shape();
    let (t_out, h_out, w_out, c_out) = layer.output_shape(input.shape())?;
    let (kt, kh, kw) = layer.kernel;
    let (pt, ph, pw) = layer.padding;
    let data = input.as_slice();
    let mut out = vec![0.0; t_out * h_out * w_out * c_out];
    let mut acc = vec![0.0; c_out];
    for t in 0..t_out {
        for y in 0..h_out {
            for x in 0..w_out {
                acc.copy_from_slice(&layer.bias);
                for dt in 0..kt {
                    // replicate padding in time
                    let st = (t + dt).saturating_sub(pt).min(t_in - 1);
                    for dy in 0..kh {
                        let sy = y + dy;
                        if sy < ph || sy - ph >= h_in {
                            continue;
                        }
                        let sy = sy - ph;
                        for dx in 0..kw {
                            let sx = x + dx;
                            if sx < pw || sx - pw >= w_in {
                                continue;
                            }
                            let sx = sx - pw;
                            let base = ((st * h_in + sy) * w_in + sx) * c_in;
                            let px = &data[base..base + c_in];
                            let tap = (dt * kh + dy) * kw + dx;
                            let wtap = &layer.packed[tap * c_in * c_out..(tap + 1) * c_in * c_out];
                            for (i, &v) in px.iter().enumerate() {
                                if v == 0.0 {
                                    continue;
                                }
                                let row = &wtap[i * c_out..(i + 1) * c_out];
                                for (a, &wv) in acc.iter_mut().zip(row) {
                                    *a += v * wv;
                                }
                            }
                        }
                    }
                }
                let dst = ((t * h_out + y) * w_out + x) * c_out;
                for (o, &a) in acc.iter().enumerate() {
                    out[dst + o] = if layer.relu { a.max(0.0) } else { a };
                }
            }
        }
    }
    Ok(Cube::from_raw(t_out, h_out, w_out, c_out, out))
}

/// Stride-2 spatial transposed convolution with a `2×2` kernel: each input
/// cell expands into a `2×2` output block. Weights are `[out][2][2][in]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Upsample2x {
    in_channels: usize,
    out_channels: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
    relu: bool,
}

impl Upsample2x {
    pub fn new(in_channels: usize, out_channels: usize, weights: Vec<f64>, bias: Vec<f64>, relu: bool) -> Result<Self> {
        if weights.len() != out_channels * 4 * in_channels {
            return Err(Error::dims(
                format!("{} deconv weights", out_channels * 4 * in_channels),
                weights.len(),
            ));
        }
        if bias.len() != out_channels {
            return Err(Error::dims(format!("{out_channels} deconv biases"), bias.len()));
        }
        Ok(Upsample2x {
            in_channels,
            out_channels,
            weights,
            bias,
            relu,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn forward(&self, input: &Cube) -> Result<Cube> {
        let (t, h, w, c) = input.shape();
        if c != self.in_channels {
            return Err(Error::dims(
                format!("{} input channels", self.in_channels),
                format!("{c} channels"),
            ));
        }
        let co = self.out_channels;
        let (oh, ow) = (2 * h, 2 * w);
        let mut out = vec![0.0; t * oh * ow * co];
        for ti in 0..t {
            for y in 0..h {
                for x in 0..w {
                    let px = input.pixel(ti, y, x);
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let dst = ((ti * oh + 2 * y + dy) * ow + 2 * x + dx) * co;
                            for o in 0..co {
                                let wrow = &self.weights[((o * 2 + dy) * 2 + dx) * c..][..c];
                                let mut acc = self.bias[o];
                                for i in 0..c {
                                    acc += px[i] * wrow[i];
                                }
                                out[dst + o] = if self.relu { acc.max(0.0) } else { acc };
                            }
                        }
                    }
                }
            }
        }
        Ok(Cube::from_raw(t, oh, ow, co, out))
    }
}
