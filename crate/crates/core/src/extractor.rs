//! Per-electrode 1-D CNN turning a raw segment `N × T_s` into node
//! features `N × F_d`.
//!
//! Every electrode runs through the same convolution stack: the segment is
//! reshaped to a batch of `N` single-channel signals, so rows never mix and
//! the channel axis is preserved.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Var};
use crate::rng::glorot;
use crate::tensor::Tensor;

/// Standard deviation floor used by [`zscore_rows`].
pub const STD_FLOOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConvSpec {
    pub kernel: usize,
    pub stride: usize,
    pub out_channels: usize,
}

impl ConvSpec {
    pub const fn new(kernel: usize, stride: usize, out_channels: usize) -> Self {
        Self {
            kernel,
            stride,
            out_channels,
        }
    }
}

/// Two layers, `(7, /4, 1→16)` then `(5, /2, 16→32)`.
pub fn default_conv_specs() -> Vec<ConvSpec> {
    vec![ConvSpec::new(7, 4, 16), ConvSpec::new(5, 2, 32)]
}

/// Length of the time axis after each layer; errors on the first layer
/// whose input is shorter than its kernel.
pub fn layer_lengths(specs: &[ConvSpec], input_len: usize) -> Result<Vec<usize>> {
    let mut len = input_len;
    let mut out = Vec::with_capacity(specs.len());
    for (layer, spec) in specs.iter().enumerate() {
        if spec.kernel == 0 || spec.stride == 0 {
            return Err(Error::Config(format!("conv layer {layer}: kernel and stride must be positive")));
        }
        if len < spec.kernel {
            return Err(Error::SignalTooShort {
                layer,
                len,
                kernel: spec.kernel,
            });
        }
        len = (len - spec.kernel) / spec.stride + 1;
        out.push(len);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer {
    /// `[out_channels, in_channels, kernel]`.
    pub weight: Tensor,
    pub bias: Tensor,
    pub stride: usize,
}

impl ConvLayer {
    pub fn in_channels(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_channels(&self) -> usize {
        self.weight.shape()[0]
    }

    pub fn kernel(&self) -> usize {
        self.weight.shape()[2]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExtractorParams {
    pub layers: Vec<ConvLayer>,
}

impl ExtractorParams {
    pub fn init<R: Rng + ?Sized>(specs: &[ConvSpec], rng: &mut R) -> Self {
        let mut in_ch = 1;
        let layers = specs
            .iter()
            .map(|s| {
                let weight = glorot(
                    &[s.out_channels, in_ch, s.kernel],
                    in_ch * s.kernel,
                    s.out_channels * s.kernel,
                    rng,
                );
                in_ch = s.out_channels;
                ConvLayer {
                    weight,
                    bias: Tensor::zeros(&[s.out_channels]),
                    stride: s.stride,
                }
            })
            .collect();
        Self { layers }
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map_or(1, ConvLayer::out_channels)
    }

    pub fn specs(&self) -> Vec<ConvSpec> {
        self.layers
            .iter()
            .map(|l| ConvSpec::new(l.kernel(), l.stride, l.out_channels()))
            .collect()
    }

    /// Checks that the first layer takes one channel and channel counts chain.
    pub fn validate(&self) -> Result<()> {
        let mut in_ch = 1;
        for (i, l) in self.layers.iter().enumerate() {
            if l.in_channels() != in_ch || l.bias.shape() != [l.out_channels()] {
                return Err(Error::Config(format!(
                    "conv layer {i}: expected {in_ch} input channels and bias of length {}",
                    l.out_channels()
                )));
            }
            in_ch = l.out_channels();
        }
        Ok(())
    }

    pub fn bind(&self, g: &mut Graph, trainable: bool) -> BoundExtractor {
        let mut bind = |t: &Tensor| if trainable { g.leaf(t.clone()) } else { g.constant(t.clone()) };
        BoundExtractor {
            layers: self
                .layers
                .iter()
                .map(|l| (bind(&l.weight), bind(&l.bias), l.stride))
                .collect(),
        }
    }
}

/// Extractor parameters registered in a graph: `(weight, bias, stride)`.
#[derive(Debug, Clone)]
pub struct BoundExtractor {
    pub layers: Vec<(Var, Var, usize)>,
}

impl BoundExtractor {
    pub fn vars(&self) -> Vec<Var> {
        self.layers.iter().flat_map(|&(w, b, _)| [w, b]).collect()
    }
}

/// Per-row standardization to mean 0 and standard deviation 1.
pub fn zscore_rows(segment: &Tensor) -> Tensor {
    let (rows, cols) = segment.dims2();
    let mut out = segment.clone();
    for r in 0..rows {
        let row = &mut out.data_mut()[r * cols..(r + 1) * cols];
        let mean = row.iter().sum::<f64>() / cols as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / cols as f64;
        let std = var.sqrt().max(STD_FLOOR);
        row.iter_mut().for_each(|v| *v = (*v - mean) / std);
    }
    out
}

/// Runs the conv stack over `segment` (`N × T_s`) and averages the remaining
/// time axis, giving `N × F_d`.
pub fn extract_features(g: &mut Graph, segment: Var, params: &BoundExtractor) -> Result<Var> {
    let shape = g.value(segment).shape().to_vec();
    if shape.len() != 2 {
        return Err(Error::Config(format!("segment must be a matrix, got shape {shape:?}")));
    }
    let (n, t) = (shape[0], shape[1]);
    let mut len = t;
    for (layer, &(w, _, stride)) in params.layers.iter().enumerate() {
        let kernel = g.value(w).shape()[2];
        if len < kernel {
            return Err(Error::SignalTooShort { layer, len, kernel });
        }
        len = (len - kernel) / stride + 1;
    }

    let mut h = g.reshape(segment, &[n, 1, t])?;
    for &(w, b, stride) in &params.layers {
        h = g.conv1d(h, w, stride)?;
        h = g.add_bias(h, b, 1)?;
        h = g.relu(h)?;
    }
    Ok(g.mean_axis(h, 2)?)
}

/// Valid-padding cross-correlation of one signal with one kernel.
pub fn conv1d(signal: &[f64], kernel: &[f64], stride: usize) -> Result<Vec<f64>> {
    if kernel.is_empty() || stride == 0 {
        return Err(Error::Config("conv1d needs a non-empty kernel and stride ≥ 1".into()));
    }
    if signal.len() < kernel.len() {
        return Err(Error::SignalTooShort {
            layer: 0,
            len: signal.len(),
            kernel: kernel.len(),
        });
    }
    let out_len = (signal.len() - kernel.len()) / stride + 1;
    Ok((0..out_len)
        .map(|t| {
            let window = &signal[t * stride..t * stride + kernel.len()];
            window.iter().zip(kernel).map(|(a, b)| a * b).sum()
        })
        .collect())
}
