//! End-to-end acoustic training: front-end, conv-GLU network and ASG
//! transitions optimized jointly.

use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use serde::{Deserialize, Serialize};

use super::Utterance;
use crate::acoustic::{AcousticGrads, AcousticModel, AcousticModelConfig, EmissionTable};
use crate::criterion::{asg_gradients, asg_loss, Alphabet, Target};
use crate::error::{Error, Result};
use crate::frontend::{
    frontend_backward, FeatureMap, FrontendConfig, FrontendGrads, LearnableFrontend, MelFrontend,
    Waveform,
};
use crate::math::Table;
use crate::optim::{Momentum, ParamSet, PlateauSchedule, Sgd};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FrontendKind {
    Learnable,
    Mel,
}

impl std::str::FromStr for FrontendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learnable" => Ok(FrontendKind::Learnable),
            "mel" => Ok(FrontendKind::Mel),
            other => Err(Error::Config(format!(
                "unknown front-end {other:?} (expected learnable or mel)"
            ))),
        }
    }
}

impl std::fmt::Display for FrontendKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            FrontendKind::Learnable => "learnable",
            FrontendKind::Mel => "mel",
        })
    }
}

/// Architecture of an [`AsrModel`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub frontend: FrontendKind,
    pub frontend_config: FrontendConfig,
    pub channels: Vec<usize>,
    pub kernel_width: usize,
    pub dropout: f64,
}

impl Default for ModelConfig {
    /// 40 filters feeding four GLU layers of 32, 64, 96 and 128 channels.
    fn default() -> Self {
        ModelConfig {
            frontend: FrontendKind::Learnable,
            frontend_config: FrontendConfig::default(),
            channels: vec![32, 64, 96, 128],
            kernel_width: 13,
            dropout: 0.25,
        }
    }
}

impl ModelConfig {
    /// A configuration small enough to train on the synthetic task in seconds.
    pub fn small(frontend: FrontendKind) -> Self {
        ModelConfig {
            frontend,
            frontend_config: FrontendConfig {
                num_filters: 16,
                ..FrontendConfig::default()
            },
            channels: vec![32, 32],
            kernel_width: 5,
            dropout: 0.0,
        }
    }

    pub fn acoustic(&self, alphabet_size: usize) -> AcousticModelConfig {
        AcousticModelConfig::stack(
            self.frontend_config.num_filters,
            &self.channels,
            self.kernel_width,
            self.dropout,
            alphabet_size,
        )
    }
}

#[derive(Clone, Debug)]
pub enum Frontend {
    Learnable(LearnableFrontend),
    Mel(MelFrontend),
}

impl Frontend {
    pub fn new<R: RngCore + ?Sized>(kind: FrontendKind, config: FrontendConfig, rng: &mut R) -> Result<Self> {
        Ok(match kind {
            FrontendKind::Learnable => Frontend::Learnable(LearnableFrontend::new(config, rng)?),
            FrontendKind::Mel => Frontend::Mel(MelFrontend::new(config.num_filters, config)?),
        })
    }

    pub fn kind(&self) -> FrontendKind {
        match self {
            Frontend::Learnable(_) => FrontendKind::Learnable,
            Frontend::Mel(_) => FrontendKind::Mel,
        }
    }

    pub fn config(&self) -> &FrontendConfig {
        match self {
            Frontend::Learnable(f) => &f.config,
            Frontend::Mel(m) => &m.geometry,
        }
    }

    pub fn forward(&self, x: &Waveform) -> Result<FeatureMap> {
        match self {
            Frontend::Learnable(f) => f.forward(x),
            Frontend::Mel(m) => m.forward(x),
        }
    }

    pub fn as_learnable(&self) -> Option<&LearnableFrontend> {
        match self {
            Frontend::Learnable(f) => Some(f),
            Frontend::Mel(_) => None,
        }
    }
}

/// Waveform in, letter scores out.
#[derive(Clone, Debug)]
pub struct AsrModel {
    pub config: ModelConfig,
    pub alphabet: Alphabet,
    pub frontend: Frontend,
    pub am: AcousticModel,
    /// ASG transition scores, `|A| × |A|`, initialized to zero.
    pub transitions: Table,
}

#[derive(Clone, Debug)]
pub struct AsrGrads {
    pub frontend: Option<FrontendGrads>,
    pub am: AcousticGrads,
    pub transitions: Table,
}

impl AsrModel {
    pub fn new<R: RngCore + ?Sized>(alphabet: Alphabet, config: ModelConfig, rng: &mut R) -> Result<Self> {
        let frontend = Frontend::new(config.frontend, config.frontend_config.clone(), rng)?;
        let am = AcousticModel::new(config.acoustic(alphabet.len()), rng)?;
        let n = alphabet.len();
        Ok(AsrModel {
            config,
            alphabet,
            frontend,
            am,
            transitions: Table::zeros(n, n),
        })
    }

    pub fn frames_for(&self, samples: usize) -> usize {
        self.frontend.config().frame_count(samples)
    }

    pub fn features(&self, x: &Waveform) -> Result<FeatureMap> {
        self.frontend.forward(x)
    }

    pub fn emissions(&self, x: &Waveform, normalize: bool) -> Result<EmissionTable> {
        self.am.forward(&self.features(x)?, normalize)
    }

    pub fn loss(&self, x: &Waveform, target: &Target) -> Result<f64> {
        let em = self.emissions(x, false)?;
        asg_loss(&em.scores, &self.transitions, target)
    }

    pub fn zero_grads(&self) -> AsrGrads {
        AsrGrads {
            frontend: self
                .frontend
                .as_learnable()
                .map(|f| FrontendGrads::zeros(f.num_filters(), f.filter_width())),
            am: self.am.zero_grads(),
            transitions: Table::zeros(self.transitions.rows(), self.transitions.cols()),
        }
    }

    /// ASG loss of one utterance and its gradient with respect to every trainable
    /// parameter. Dropout is applied only when `rng` is given.
    pub fn loss_and_grads(
        &self,
        x: &Waveform,
        target: &Target,
        rng: Option<&mut dyn RngCore>,
    ) -> Result<(f64, AsrGrads)> {
        let features = self.features(x)?;
        let trace = self.am.forward_trace(&features.values, rng, false)?;
        let asg = asg_gradients(&trace.emissions().scores, &self.transitions, target)?;
        let (am, d_features) = self.am.backward(&trace, &asg.emissions)?;
        let frontend = match &self.frontend {
            Frontend::Learnable(fe) => Some(frontend_backward(x, fe, &d_features)?),
            Frontend::Mel(_) => None,
        };
        Ok((
            asg.loss,
            AsrGrads {
                frontend,
                am,
                transitions: asg.transitions,
            },
        ))
    }
}

impl ParamSet for AsrModel {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = match &self.frontend {
            Frontend::Learnable(f) => f.tensors(),
            Frontend::Mel(_) => Vec::new(),
        };
        out.extend(self.am.tensors());
        out.push(("asg.transitions".into(), self.transitions.as_slice()));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = match &mut self.frontend {
            Frontend::Learnable(f) => f.tensors_mut(),
            Frontend::Mel(_) => Vec::new(),
        };
        out.extend(self.am.tensors_mut());
        out.push(self.transitions.as_mut_slice());
        out
    }
}

impl ParamSet for AsrGrads {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = self.frontend.as_ref().map_or_else(Vec::new, |f| f.tensors());
        out.extend(self.am.tensors());
        out.push(("asg.transitions".into(), self.transitions.as_slice()));
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = self.frontend.as_mut().map_or_else(Vec::new, |f| f.tensors_mut());
        out.extend(self.am.tensors_mut());
        out.push(self.transitions.as_mut_slice());
        out
    }
}

/// `dst += s · src` over two parameter sets with the same layout.
pub fn add_scaled<D: ParamSet + ?Sized, S: ParamSet + ?Sized>(dst: &mut D, src: &S, s: f64) {
    let src = src.tensors();
    for (d, (_, v)) in dst.tensors_mut().into_iter().zip(src) {
        for (a, b) in d.iter_mut().zip(v) {
            *a += s * b;
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub clip: Option<f64>,
    pub batch_size: usize,
    /// Halve the learning rate after this many epochs without validation improvement.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 10,
            lr: 1.0,
            momentum: 0.9,
            clip: Some(0.2),
            batch_size: 8,
            patience: 1,
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub lr: f64,
    /// Mean per-utterance ASG loss over the epoch's updates.
    pub train_loss: f64,
    pub valid_loss: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    /// Utterances whose transcript cannot fit in their frames.
    pub skipped: usize,
}

/// Targets for the utterances that can be aligned; the rest are counted.
pub fn prepare_targets<'a>(
    model: &AsrModel,
    data: &'a [Utterance],
) -> Result<(Vec<(&'a Utterance, Target)>, usize)> {
    let mut out = Vec::with_capacity(data.len());
    let mut skipped = 0;
    for u in data {
        let target = model.alphabet.transcript_target(&u.text)?;
        if target.encoded.len() > model.frames_for(u.wave.samples.len()) {
            skipped += 1;
        } else {
            out.push((u, target));
        }
    }
    Ok((out, skipped))
}

/// Mean ASG loss without dropout.
pub fn mean_loss(model: &AsrModel, data: &[(&Utterance, Target)]) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::Domain("no utterances to score".into()));
    }
    let mut total = 0.0;
    for (u, t) in data {
        total += model.loss(&u.wave, t)?;
    }
    Ok(total / data.len() as f64)
}

pub fn train_acoustic(
    model: &mut AsrModel,
    train: &[Utterance],
    valid: &[Utterance],
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    train_acoustic_with(model, train, valid, cfg, |_, _| Ok(()))
}

/// Mini-batch SGD with classical momentum and global-norm clipping; the
/// learning rate halves when the validation loss plateaus. `on_epoch` sees
/// every epoch's statistics and the model as it stands after that epoch.
pub fn train_acoustic_with<F>(
    model: &mut AsrModel,
    train: &[Utterance],
    valid: &[Utterance],
    cfg: &TrainConfig,
    mut on_epoch: F,
) -> Result<TrainReport>
where
    F: FnMut(&EpochStats, &AsrModel) -> Result<()>,
{
    if cfg.batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    let (train_set, skipped_train) = prepare_targets(model, train)?;
    let (valid_set, skipped_valid) = prepare_targets(model, valid)?;
    let skipped = skipped_train + skipped_valid;
    if skipped > 0 {
        log::warn!("skipping {skipped} utterances whose transcripts do not fit their audio");
    }
    if train_set.is_empty() {
        return Err(Error::Domain("no trainable utterances".into()));
    }

    let mut rng = StdRng::seed_from_u64(cfg.seed);
    let mut sgd = Sgd::new(cfg.lr, Momentum::Classical(cfg.momentum), cfg.clip);
    let mut schedule = PlateauSchedule::new(0.5, cfg.patience, cfg.lr * 1e-3);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut report = TrainReport {
        epochs: Vec::with_capacity(cfg.epochs),
        skipped,
    };
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let mut grads = model.zero_grads();
            for &i in batch {
                let (u, target) = &train_set[i];
                let (loss, g) = model.loss_and_grads(&u.wave, target, Some(&mut rng))?;
                if !loss.is_finite() {
                    return Err(Error::Divergence(format!("loss is {loss} on {}", u.id)));
                }
                total += loss;
                add_scaled(&mut grads, &g, 1.0 / batch.len() as f64);
            }
            sgd.step(model, &grads)?;
        }
        let valid_loss = if valid_set.is_empty() {
            None
        } else {
            Some(mean_loss(model, &valid_set)?)
        };
        let stats = EpochStats {
            epoch,
            lr: sgd.lr,
            train_loss: total / train_set.len() as f64,
            valid_loss,
        };
        log::info!(
            "epoch {epoch}: lr {:.4} train {:.4} valid {:?}",
            stats.lr,
            stats.train_loss,
            stats.valid_loss
        );
        sgd.lr = schedule.observe(valid_loss.unwrap_or(stats.train_loss), sgd.lr);
        on_epoch(&stats, model)?;
        report.epochs.push(stats);
    }
    Ok(report)
}
