use crate::error::{Error, Result};
use crate::heads::conv::{ConvKind, ConvLayer, Upsample2x};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LayerShape {
    Conv {
        kind: ConvKind,
        kernel: (usize, usize, usize),
        padding: (usize, usize, usize),
    },
    Upsample2x,
}

/// Static description of one parameterized layer of a head.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerSpec {
    pub name: String,
    pub shape: LayerShape,
    pub in_channels: usize,
    pub out_channels: usize,
    pub relu: bool,
}

/// A built layer of either kind.
#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Conv(ConvLayer),
    Upsample(Upsample2x),
}

impl LayerSpec {
    pub fn weight_shape(&self) -> Vec<usize> {
        match self.shape {
            LayerShape::Conv {
                kernel: (kt, kh, kw), ..
            } => vec![self.out_channels, kt, kh, kw, self.in_channels],
            LayerShape::Upsample2x => vec![self.out_channels, 2, 2, self.in_channels],
        }
    }

    pub fn weight_len(&self) -> usize {
        self.weight_shape().iter().product()
    }

    pub fn build(&self, weights: Vec<f64>, bias: Vec<f64>) -> Result<Layer> {
        let layer = match self.shape {
            LayerShape::Conv { kind, kernel, padding } => Layer::Conv(ConvLayer::new(
                kind,
                kernel,
                padding,
                self.in_channels,
                self.out_channels,
                weights,
                bias,
                self.relu,
            )?),
            LayerShape::Upsample2x => Layer::Upsample(Upsample2x::new(
                self.in_channels,
                self.out_channels,
                weights,
                bias,
                self.relu,
            )?),
        };
        Ok(layer)
    }

    /// Build with every parameter drawn from `init`.
    pub fn build_with(&self, init: &mut dyn FnMut() -> f64) -> Result<Layer> {
        let weights = (0..self.weight_len()).map(|_| init()).collect();
        let bias = (0..self.out_channels).map(|_| init()).collect();
        self.build(weights, bias)
    }
}

impl Layer {
    pub fn weights(&self) -> &[f64] {
        match self {
            Layer::Conv(c) => c.weights(),
            Layer::Upsample(u) => u.weights(),
        }
    }

    pub fn bias(&self) -> &[f64] {
        match self {
            Layer::Conv(c) => c.bias(),
            Layer::Upsample(u) => u.bias(),
        }
    }

    pub(crate) fn into_conv(self, name: &str) -> Result<ConvLayer> {
        match self {
            Layer::Conv(c) => Ok(c),
            Layer::Upsample(_) => Err(Error::invalid(format!("layer {name} is not a convolution"))),
        }
    }

    pub(crate) fn into_upsample(self, name: &str) -> Result<Upsample2x> {
        match self {
            Layer::Upsample(u) => Ok(u),
            Layer::Conv(_) => Err(Error::invalid(format!("layer {name} is not an upsampling layer"))),
        }
    }
}

pub(crate) fn conv_spec(
    name: impl Into<String>,
    kind: ConvKind,
    kernel: (usize, usize, usize),
    padding: (usize, usize, usize),
    in_channels: usize,
    out_channels: usize,
    relu: bool,
) -> LayerSpec {
    LayerSpec {
        name: name.into(),
        shape: LayerShape::Conv { kind, kernel, padding },
        in_channels,
        out_channels,
        relu,
    }
}
