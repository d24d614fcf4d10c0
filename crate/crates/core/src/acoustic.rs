//! Convolutional acoustic model: stacked conv → GLU → dropout layers and a
//! width-1 projection to per-frame letter scores.

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::frontend::FeatureMap;
use crate::math::Table;
use crate::nn::{self, conv_tensors, grad_tensors, Conv1d, Conv1dGrads};
use crate::optim::ParamSet;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvLayerSpec {
    pub in_channels: usize,
    /// Channels after the GLU; the convolution itself produces twice as many.
    pub out_channels: usize,
    pub kernel_width: usize,
    pub stride: usize,
    pub dropout_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AcousticModelConfig {
    pub layers: Vec<ConvLayerSpec>,
    pub alphabet_size: usize,
}

impl AcousticModelConfig {
    /// GLU layers with the given widths, all sharing one kernel width and dropout rate.
    pub fn stack(
        input_channels: usize,
        channels: &[usize],
        kernel_width: usize,
        dropout_rate: f64,
        alphabet_size: usize,
    ) -> Self {
        let mut layers = Vec::with_capacity(channels.len());
        let mut prev = input_channels;
        for &c in channels {
            layers.push(ConvLayerSpec {
                in_channels: prev,
                out_channels: c,
                kernel_width,
                stride: 1,
                dropout_rate,
            });
            prev = c;
        }
        AcousticModelConfig {
            layers,
            alphabet_size,
        }
    }

    /// Four layers growing 32 → 64 → 96 → 128, width 13, dropout 0.25.
    pub fn desk_default(input_channels: usize, alphabet_size: usize) -> Self {
        Self::stack(input_channels, &[32, 64, 96, 128], 13, 0.25, alphabet_size)
    }

    pub fn input_channels(&self) -> usize {
        self.layers.first().map_or(0, |l| l.in_channels)
    }

    pub fn validate(&self) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("acoustic model needs at least one layer".into()));
        }
        if self.alphabet_size < 2 {
            return Err(Error::Config("alphabet must have at least two tokens".into()));
        }
        for (i, l) in self.layers.iter().enumerate() {
            if l.in_channels == 0 || l.out_channels == 0 || l.kernel_width == 0 || l.stride == 0 {
                return Err(Error::Config(format!("layer {i} has a zero dimension")));
            }
            if !(0.0..1.0).contains(&l.dropout_rate) {
                return Err(Error::Config(format!("layer {i} dropout must be in [0, 1)")));
            }
            if i > 0 && self.layers[i - 1].out_channels != l.in_channels {
                return Err(Error::Config(format!(
                    "layer {i} expects {} channels but layer {} produces {}",
                    l.in_channels,
                    i - 1,
                    self.layers[i - 1].out_channels
                )));
            }
        }
        Ok(())
    }
}

/// Per-frame letter scores, `T × |A|`.
#[derive(Clone, Debug, PartialEq)]
pub struct EmissionTable {
    pub scores: Table,
    /// Rows are log-probabilities (log-softmax applied).
    pub normalized: bool,
}

impl EmissionTable {
    pub fn frames(&self) -> usize {
        self.scores.rows()
    }

    pub fn alphabet_size(&self) -> usize {
        self.scores.cols()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AcousticModel {
    pub config: AcousticModelConfig,
    pub layers: Vec<Conv1d>,
    pub projection: Conv1d,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AcousticGrads {
    pub layers: Vec<Conv1dGrads>,
    pub projection: Conv1dGrads,
}

/// Intermediate values kept by a forward pass for the backward pass.
#[derive(Clone, Debug)]
pub struct ForwardTrace {
    inputs: Vec<Table>,
    pre: Vec<Table>,
    masks: Vec<Option<Table>>,
    hidden: Table,
    emissions: EmissionTable,
}

impl ForwardTrace {
    pub fn emissions(&self) -> &EmissionTable {
        &self.emissions
    }
}

impl AcousticModel {
    pub fn new<R: Rng + ?Sized>(config: AcousticModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let layers = config
            .layers
            .iter()
            .map(|l| Conv1d::centered(l.in_channels, 2 * l.out_channels, l.kernel_width, l.stride, rng))
            .collect();
        let last = config.layers.last().expect("validated").out_channels;
        let projection = Conv1d::centered(last, config.alphabet_size, 1, 1, rng);
        Ok(AcousticModel {
            config,
            layers,
            projection,
        })
    }

    /// Inference forward pass (no dropout).
    pub fn forward(&self, features: &FeatureMap, normalize: bool) -> Result<EmissionTable> {
        Ok(self.forward_trace(&features.values, None, normalize)?.emissions)
    }

    /// Forward pass on a `channels × frames` table, keeping what backward needs.
    /// Dropout is active only when `rng` is given.
    pub fn forward_trace(
        &self,
        x: &Table,
        mut rng: Option<&mut dyn RngCore>,
        normalize: bool,
    ) -> Result<ForwardTrace> {
        if x.rows() != self.config.input_channels() {
            return Err(Error::Dimension(format!(
                "acoustic model expects {} feature channels, got {}",
                self.config.input_channels(),
                x.rows()
            )));
        }
        let mut inputs = Vec::with_capacity(self.layers.len());
        let mut pre = Vec::with_capacity(self.layers.len());
        let mut masks = Vec::with_capacity(self.layers.len());
        let mut h = x.clone();
        for (conv, spec) in self.layers.iter().zip(&self.config.layers) {
            let a = conv.forward(&h)?;
            let mut out = nn::glu(&a)?;
            let mask = match rng.as_deref_mut() {
                Some(r) if spec.dropout_rate > 0.0 => {
                    let m = nn::dropout_mask(out.rows(), out.cols(), spec.dropout_rate, r);
                    out = nn::hadamard(&out, &m);
                    Some(m)
                }
                _ => None,
            };
            inputs.push(std::mem::replace(&mut h, out));
            pre.push(a);
            masks.push(mask);
        }
        let logits = self.projection.forward(&h)?.transpose();
        let scores = if normalize {
            nn::log_softmax_rows(&logits)
        } else {
            logits
        };
        Ok(ForwardTrace {
            inputs,
            pre,
            masks,
            hidden: h,
            emissions: EmissionTable {
                scores,
                normalized: normalize,
            },
        })
    }

    /// Gradients of `Σ upstream ⊙ emissions` for every parameter and for the input features.
    pub fn backward(&self, trace: &ForwardTrace, upstream: &Table) -> Result<(AcousticGrads, Table)> {
        let em = &trace.emissions;
        if upstream.shape() != em.scores.shape() {
            return Err(Error::Dimension(format!(
                "upstream gradient {:?} does not match emissions {:?}",
                upstream.shape(),
                em.scores.shape()
            )));
        }
        let d_logits = if em.normalized {
            nn::log_softmax_rows_backward(&em.scores, upstream)
        } else {
            upstream.clone()
        };
        let (mut dh, proj) = self.projection.backward(&trace.hidden, &d_logits.transpose())?;
        let mut layer_grads = Vec::with_capacity(self.layers.len());
        for i in (0..self.layers.len()).rev() {
            if let Some(m) = &trace.masks[i] {
                dh = nn::hadamard(&dh, m);
            }
            let d_pre = nn::glu_backward(&trace.pre[i], &dh)?;
            let (dx, g) = self.layers[i].backward(&trace.inputs[i], &d_pre)?;
            layer_grads.push(g);
            dh = dx;
        }
        layer_grads.reverse();
        Ok((
            AcousticGrads {
                layers: layer_grads,
                projection: proj,
            },
            dh,
        ))
    }

    pub fn zero_grads(&self) -> AcousticGrads {
        AcousticGrads {
            layers: self.layers.iter().map(Conv1d::zero_grads).collect(),
            projection: self.projection.zero_grads(),
        }
    }
}

impl ParamSet for AcousticModel {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            conv_tensors(&format!("am.layer{i}"), l, &mut out);
        }
        conv_tensors("am.proj", &self.projection, &mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in self.layers.iter_mut().chain(std::iter::once(&mut self.projection)) {
            out.push(&mut l.v);
            out.push(&mut l.g);
            out.push(&mut l.bias);
        }
        out
    }
}

impl ParamSet for AcousticGrads {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = Vec::new();
        for (i, l) in self.layers.iter().enumerate() {
            grad_tensors(&format!("am.layer{i}"), l, &mut out);
        }
        grad_tensors("am.proj", &self.projection, &mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = Vec::new();
        for l in self.layers.iter_mut().chain(std::iter::once(&mut self.projection)) {
            out.push(&mut l.v);
            out.push(&mut l.g);
            out.push(&mut l.bias);
        }
        out
    }
}
