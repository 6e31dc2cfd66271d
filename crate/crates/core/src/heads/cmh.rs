use crate::error::{Error, Result};
use crate::heads::conv::{conv_forward, ConvKind, ConvLayer, Upsample2x};
use crate::heads::layers::{conv_spec, Layer, LayerShape, LayerSpec};
use crate::tensor::{FeatureCube, PrototypeCube};

/// Clip-level mask head: three `3×3×3` convs, a 2× spatial deconvolution,
/// a `1×3×3` conv and a `1×1×1` conv down to `k` prototype channels.
#[derive(Debug, Clone, PartialEq)]
pub struct CmhConfig {
    pub channels: usize,
    pub prototypes: usize,
}

impl CmhConfig {
    pub fn layer_specs(&self) -> Vec<LayerSpec> {
        let c = self.channels;
        let mut specs: Vec<LayerSpec> = (0..3)
            .map(|i| {
                conv_spec(
                    format!("cmh/conv/{i}"),
                    ConvKind::Conv3d,
                    (3, 3, 3),
                    (1, 1, 1),
                    c,
                    c,
                    true,
                )
            })
            .collect();
        specs.push(LayerSpec {
            name: "cmh/up".into(),
            shape: LayerShape::Upsample2x,
            in_channels: c,
            out_channels: c,
            relu: true,
        });
        specs.push(conv_spec(
            "cmh/refine",
            ConvKind::Conv3d,
            (1, 3, 3),
            (0, 1, 1),
            c,
            c,
            true,
        ));
        specs.push(conv_spec(
            "cmh/out",
            ConvKind::Conv3d,
            (1, 1, 1),
            (0, 0, 0),
            c,
            self.prototypes,
            false,
        ));
        specs
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CmhWeights {
    config: CmhConfig,
    convs: Vec<ConvLayer>,
    up: Upsample2x,
    refine: ConvLayer,
    out: ConvLayer,
}

impl CmhWeights {
    pub fn from_layers(config: &CmhConfig, layers: Vec<Layer>) -> Result<Self> {
        let specs = config.layer_specs();
        if layers.len() != specs.len() {
            return Err(Error::dims(format!("{} mask-head layers", specs.len()), layers.len()));
        }
        for (spec, layer) in specs.iter().zip(&layers) {
            if spec.build(layer.weights().to_vec(), layer.bias().to_vec())? != *layer {
                return Err(Error::invalid(format!("layer {} does not match its spec", spec.name)));
            }
        }
        let mut it = layers.into_iter().zip(specs.iter());
        let mut next = || it.next().expect("length checked");
        let convs = (0..3)
            .map(|_| {
                let (l, s) = next();
                l.into_conv(&s.name)
            })
            .collect::<Result<Vec<_>>>()?;
        let (l, s) = next();
        let up = l.into_upsample(&s.name)?;
        let (l, s) = next();
        let refine = l.into_conv(&s.name)?;
        let (l, s) = next();
        let out = l.into_conv(&s.name)?;
        Ok(CmhWeights {
            config: config.clone(),
            convs,
            up,
            refine,
            out,
        })
    }

    pub fn init(config: &CmhConfig, init: &mut dyn FnMut() -> f64) -> Result<Self> {
        let layers = config
            .layer_specs()
            .iter()
            .map(|s| s.build_with(init))
            .collect::<Result<Vec<_>>>()?;
        Self::from_layers(config, layers)
    }

    pub fn config(&self) -> &CmhConfig {
        &self.config
    }

    pub fn layers(&self) -> Vec<Layer> {
        let mut out: Vec<Layer> = self.convs.iter().cloned().map(Layer::Conv).collect();
        out.push(Layer::Upsample(self.up.clone()));
        out.push(Layer::Conv(self.refine.clone()));
        out.push(Layer::Conv(self.out.clone()));
        out
    }
}

/// Fused P3-resolution cube `T×h×w×C` to prototypes `T×2h×2w×k`.
pub fn cmh_forward(fused: &FeatureCube, weights: &CmhWeights) -> Result<PrototypeCube> {
    if fused.channels() != weights.config.channels {
        return Err(Error::dims(
            format!("{} fused channels", weights.config.channels),
            format!("{} channels", fused.channels()),
        ));
    }
    let mut x = fused.clone();
    for conv in &weights.convs {
        x = conv_forward(&x, conv)?;
    }
    x = weights.up.forward(&x)?;
    x = conv_forward(&x, &weights.refine)?;
    conv_forward(&x, &weights.out)
}
