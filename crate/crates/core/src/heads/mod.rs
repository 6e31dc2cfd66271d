//! Forward-only clip-level heads: convolutions, prediction towers, the mask
//! head, anchors and the box codec.

mod anchors;
mod cmh;
mod conv;
mod cph;
mod layers;

pub use anchors::{
    decode_boxes, encode_boxes, generate_anchors, AnchorConfig, AnchorLevel, CENTER_VARIANCE, SIZE_VARIANCE,
};
pub use cmh::{cmh_forward, CmhConfig, CmhWeights};
pub use conv::{conv_forward, ConvKind, ConvLayer, Upsample2x};
pub use cph::{cph_forward, softmax, CphConfig, CphWeights, PredictionRecord, RawClipPredictions};
pub use layers::{Layer, LayerShape, LayerSpec};

use crate::error::{Error, Result};
use crate::io::container::{Container, Tensor};

/// Store layers as `<name>/weight` and `<name>/bias` tensors.
pub fn store_layers<'a>(
    container: &mut Container,
    specs: &[LayerSpec],
    layers: impl IntoIterator<Item = (&'a [f64], &'a [f64])>,
) -> Result<()> {
    for (spec, (weights, bias)) in specs.iter().zip(layers) {
        container.insert(
            format!("{}/weight", spec.name),
            Tensor::new(spec.weight_shape(), weights.to_vec())?,
        )?;
        container.insert(
            format!("{}/bias", spec.name),
            Tensor::new(vec![spec.out_channels], bias.to_vec())?,
        )?;
    }
    Ok(())
}

/// Load and shape-check layers described by `specs`.
pub fn load_layers(container: &Container, specs: &[LayerSpec]) -> Result<Vec<Layer>> {
    specs
        .iter()
        .map(|spec| {
            let fetch = |suffix: &str, shape: Vec<usize>| -> Result<Vec<f64>> {
                let name = format!("{}/{suffix}", spec.name);
                let t = container
                    .get(&name)
                    .ok_or_else(|| Error::format("weights", format!("missing tensor {name}")))?;
                if t.shape() != shape.as_slice() {
                    return Err(Error::format(
                        "weights",
                        format!("tensor {name} has shape {:?}, expected {shape:?}", t.shape()),
                    ));
                }
                Ok(t.to_f64())
            };
            spec.build(
                fetch("weight", spec.weight_shape())?,
                fetch("bias", vec![spec.out_channels])?,
            )
        })
        .collect()
}

impl CphWeights {
    pub fn store(&self, container: &mut Container) -> Result<()> {
        let specs = self.config().layer_specs(self.frames());
        store_layers(
            container,
            &specs,
            self.layers().into_iter().map(|l| (l.weights(), l.bias())),
        )
    }

    pub fn load(container: &Container, config: &CphConfig, frames: usize) -> Result<Self> {
        let layers = load_layers(container, &config.layer_specs(frames))?;
        Self::from_layers(config, frames, layers)
    }
}

impl CmhWeights {
    pub fn store(&self, container: &mut Container) -> Result<()> {
        let specs = self.config().layer_specs();
        let layers = self.layers();
        store_layers(container, &specs, layers.iter().map(|l| (l.weights(), l.bias())))
    }

    pub fn load(container: &Container, config: &CmhConfig) -> Result<Self> {
        Self::from_layers(config, load_layers(container, &config.layer_specs())?)
    }
}
