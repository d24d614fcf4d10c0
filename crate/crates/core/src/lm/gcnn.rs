use std::num::NonZeroUsize;
use std::sync::{Arc, Mutex};

use lru::LruCache;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{LanguageModel, LmState, Vocabulary};
use crate::error::{Error, Result};
use crate::math::Table;
use crate::nn::{self, conv_tensors, grad_tensors, Conv1d, Conv1dGrads};
use crate::optim::{Momentum, ParamSet, Sgd};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcnnConfig {
    pub num_blocks: usize,
    pub embed_dim: usize,
    pub bottleneck_dim: usize,
    pub mid_kernel_width: usize,
    pub dropout_rate: f64,
    /// Maximum number of history tokens the model may condition on.
    pub context_limit: Option<usize>,
}

impl Default for GcnnConfig {
    fn default() -> Self {
        GcnnConfig {
            num_blocks: 4,
            embed_dim: 128,
            bottleneck_dim: 64,
            mid_kernel_width: 5,
            dropout_rate: 0.0,
            context_limit: None,
        }
    }
}

impl GcnnConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_blocks == 0 || self.embed_dim == 0 || self.bottleneck_dim == 0 {
            return Err(Error::Config("GCNN dimensions must be >= 1".into()));
        }
        if self.mid_kernel_width.is_multiple_of(2) {
            return Err(Error::Config(format!(
                "GCNN middle kernel width must be odd, got {}",
                self.mid_kernel_width
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config("GCNN dropout must be in [0, 1)".into()));
        }
        if self.context_limit == Some(0) {
            return Err(Error::Config("context limit must be >= 1".into()));
        }
        Ok(())
    }

    /// Number of input positions the last output can see.
    pub fn receptive_field(&self) -> usize {
        1 + self.num_blocks * (self.mid_kernel_width - 1)
    }

    /// Length of the token window kept as LM state.
    pub fn window(&self) -> usize {
        let rf = self.receptive_field();
        self.context_limit.map_or(rf, |l| l.min(rf))
    }
}

/// Residual bottleneck block: 1×1 down, causal middle conv, 1×1 up, each followed by a GLU.
#[derive(Clone, Debug, PartialEq)]
pub struct GcnnBlock {
    pub down: Conv1d,
    pub mid: Conv1d,
    pub up: Conv1d,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GcnnModel {
    pub config: GcnnConfig,
    pub vocab: Vocabulary,
    /// `vocab × embed_dim`.
    pub embedding: Table,
    pub blocks: Vec<GcnnBlock>,
    pub output: Conv1d,
}

#[derive(Clone, Debug, PartialEq)]
pub struct GcnnGrads {
    pub embedding: Table,
    pub blocks: Vec<[Conv1dGrads; 3]>,
    pub output: Conv1dGrads,
}

struct BlockTrace {
    input: Table,
    pre_down: Table,
    a: Table,
    pre_mid: Table,
    b: Table,
    pre_up: Table,
    mask: Option<Table>,
}

struct Trace {
    tokens: Vec<usize>,
    blocks: Vec<BlockTrace>,
    top: Table,
    /// `positions × vocab` log-probabilities.
    logprobs: Table,
}

impl GcnnModel {
    pub fn new<R: RngCore>(config: GcnnConfig, vocab: Vocabulary, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let (d, b, k) = (config.embed_dim, config.bottleneck_dim, config.mid_kernel_width);
        let dist = Normal::new(0.0, 1.0 / (d as f64).sqrt()).expect("valid normal");
        let embedding = Table::from_vec(vocab.len(), d, (0..vocab.len() * d).map(|_| dist.sample(rng)).collect());
        let blocks = (0..config.num_blocks)
            .map(|_| GcnnBlock {
                down: Conv1d::new(d, 2 * b, 1, 1, (0, 0), rng),
                mid: Conv1d::causal(b, 2 * b, k, rng),
                up: Conv1d::new(b, 2 * d, 1, 1, (0, 0), rng),
            })
            .collect();
        let output = Conv1d::new(d, vocab.len(), 1, 1, (0, 0), rng);
        Ok(GcnnModel {
            config,
            vocab,
            embedding,
            blocks,
            output,
        })
    }

    pub fn zero_grads(&self) -> GcnnGrads {
        GcnnGrads {
            embedding: Table::zeros(self.embedding.rows(), self.embedding.cols()),
            blocks: self
                .blocks
                .iter()
                .map(|b| [b.down.zero_grads(), b.mid.zero_grads(), b.up.zero_grads()])
                .collect(),
            output: self.output.zero_grads(),
        }
    }

    fn embed(&self, tokens: &[usize]) -> Result<Table> {
        let d = self.config.embed_dim;
        let mut h = Table::zeros(d, tokens.len());
        for (t, &tok) in tokens.iter().enumerate() {
            if tok >= self.vocab.len() {
                return Err(Error::Vocabulary(format!("token id {tok} outside vocabulary of {}", self.vocab.len())));
            }
            for c in 0..d {
                h.set(c, t, self.embedding.get(tok, c));
            }
        }
        Ok(h)
    }

    fn forward_trace(&self, tokens: &[usize], mut rng: Option<&mut dyn RngCore>) -> Result<Trace> {
        if tokens.is_empty() {
            return Err(Error::Dimension("GCNN input must contain at least one token".into()));
        }
        let mut h = self.embed(tokens)?;
        let mut traces = Vec::with_capacity(self.blocks.len());
        for blk in &self.blocks {
            let pre_down = blk.down.forward(&h)?;
            let a = nn::glu(&pre_down)?;
            let pre_mid = blk.mid.forward(&a)?;
            let b = nn::glu(&pre_mid)?;
            let pre_up = blk.up.forward(&b)?;
            let mut c = nn::glu(&pre_up)?;
            let mask = match rng.as_deref_mut() {
                Some(r) if self.config.dropout_rate > 0.0 => {
                    let m = nn::dropout_mask(c.rows(), c.cols(), self.config.dropout_rate, r);
                    c = nn::hadamard(&c, &m);
                    Some(m)
                }
                _ => None,
            };
            let mut next = h.clone();
            next.as_mut_slice().iter_mut().zip(c.as_slice()).for_each(|(x, y)| *x += y);
            traces.push(BlockTrace {
                input: h,
                pre_down,
                a,
                pre_mid,
                b,
                pre_up,
                mask,
            });
            h = next;
        }
        let logits = self.output.forward(&h)?.transpose();
        Ok(Trace {
            tokens: tokens.to_vec(),
            blocks: traces,
            top: h,
            logprobs: nn::log_softmax_rows(&logits),
        })
    }

    /// Row `t` is the next-token log-distribution after `tokens[..=t]`.
    pub fn forward(&self, tokens: &[usize]) -> Result<Table> {
        Ok(self.forward_trace(tokens, None)?.logprobs)
    }

    /// Log-distribution of the token following `context`.
    pub fn next_logprobs(&self, context: &[usize]) -> Result<Vec<f64>> {
        let lp = self.forward(context)?;
        Ok(lp.row(lp.rows() - 1).to_vec())
    }

    fn backward(&self, trace: &Trace, dlogprobs: &Table, grads: &mut GcnnGrads) -> Result<()> {
        let dlogits = nn::log_softmax_rows_backward(&trace.logprobs, dlogprobs).transpose();
        let (mut dh, g_out) = self.output.backward(&trace.top, &dlogits)?;
        accumulate(&mut grads.output, &g_out);
        for (i, (blk, bt)) in self.blocks.iter().zip(&trace.blocks).enumerate().rev() {
            let dc = match &bt.mask {
                Some(m) => nn::hadamard(&dh, m),
                None => dh.clone(),
            };
            let dpre_up = nn::glu_backward(&bt.pre_up, &dc)?;
            let (db, g_up) = blk.up.backward(&bt.b, &dpre_up)?;
            let dpre_mid = nn::glu_backward(&bt.pre_mid, &db)?;
            let (da, g_mid) = blk.mid.backward(&bt.a, &dpre_mid)?;
            let dpre_down = nn::glu_backward(&bt.pre_down, &da)?;
            let (dx, g_down) = blk.down.backward(&bt.input, &dpre_down)?;
            dh.as_mut_slice().iter_mut().zip(dx.as_slice()).for_each(|(x, y)| *x += y);
            accumulate(&mut grads.blocks[i][0], &g_down);
            accumulate(&mut grads.blocks[i][1], &g_mid);
            accumulate(&mut grads.blocks[i][2], &g_up);
        }
        for (t, &tok) in trace.tokens.iter().enumerate() {
            for c in 0..self.config.embed_dim {
                grads.embedding.add(tok, c, dh.get(c, t));
            }
        }
        Ok(())
    }

    /// `<s> w1 .. wn` as inputs and `w1 .. wn </s>` as targets.
    fn sentence_io(&self, sentence: &[usize]) -> (Vec<usize>, Vec<usize>) {
        let mut input = Vec::with_capacity(sentence.len() + 1);
        input.push(self.vocab.bos());
        input.extend_from_slice(sentence);
        let mut target = sentence.to_vec();
        target.push(self.vocab.eos());
        (input, target)
    }

    /// Summed negative log-likelihood of one sentence (end token included),
    /// adding its gradient into `grads` scaled by `scale`.
    pub fn sentence_loss_and_grads(
        &self,
        sentence: &[usize],
        grads: &mut GcnnGrads,
        scale: f64,
        rng: Option<&mut dyn RngCore>,
    ) -> Result<f64> {
        let (input, target) = self.sentence_io(sentence);
        let trace = self.forward_trace(&input, rng)?;
        let mut d = Table::zeros(trace.logprobs.rows(), trace.logprobs.cols());
        let mut nll = 0.0;
        for (t, &y) in target.iter().enumerate() {
            nll -= trace.logprobs.get(t, y);
            d.set(t, y, -scale);
        }
        self.backward(&trace, &d, grads)?;
        Ok(nll)
    }

    /// Summed negative log-likelihood and predicted-token count, without a context limit.
    pub fn corpus_nll(&self, corpus: &[Vec<usize>]) -> Result<(f64, usize)> {
        let mut nll = 0.0;
        let mut n = 0;
        for s in corpus {
            let (input, target) = self.sentence_io(s);
            let lp = self.forward(&input)?;
            for (t, &y) in target.iter().enumerate() {
                nll -= lp.get(t, y);
            }
            n += target.len();
        }
        Ok((nll, n))
    }

    pub fn all_finite(&self) -> bool {
        self.tensors().iter().all(|(_, t)| t.iter().all(|v| v.is_finite()))
    }
}

fn accumulate(into: &mut Conv1dGrads, g: &Conv1dGrads) {
    for (a, b) in [(&mut into.v, &g.v), (&mut into.g, &g.g), (&mut into.bias, &g.bias)] {
        a.iter_mut().zip(b.iter()).for_each(|(x, y)| *x += y);
    }
}

impl ParamSet for GcnnModel {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = vec![("lm.embedding".to_string(), self.embedding.as_slice())];
        for (i, b) in self.blocks.iter().enumerate() {
            conv_tensors(&format!("lm.block{i}.down"), &b.down, &mut out);
            conv_tensors(&format!("lm.block{i}.mid"), &b.mid, &mut out);
            conv_tensors(&format!("lm.block{i}.up"), &b.up, &mut out);
        }
        conv_tensors("lm.output", &self.output, &mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![self.embedding.as_mut_slice()];
        let convs = self
            .blocks
            .iter_mut()
            .flat_map(|b| [&mut b.down, &mut b.mid, &mut b.up])
            .chain(std::iter::once(&mut self.output));
        for c in convs {
            out.push(&mut c.v);
            out.push(&mut c.g);
            out.push(&mut c.bias);
        }
        out
    }
}

impl ParamSet for GcnnGrads {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        let mut out = vec![("lm.embedding".to_string(), self.embedding.as_slice())];
        for (i, b) in self.blocks.iter().enumerate() {
            for (name, g) in ["down", "mid", "up"].iter().zip(b) {
                grad_tensors(&format!("lm.block{i}.{name}"), g, &mut out);
            }
        }
        grad_tensors("lm.output", &self.output, &mut out);
        out
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out: Vec<&mut [f64]> = vec![self.embedding.as_mut_slice()];
        let grads = self.blocks.iter_mut().flat_map(|b| b.iter_mut()).chain(std::iter::once(&mut self.output));
        for g in grads {
            out.push(&mut g.v);
            out.push(&mut g.g);
            out.push(&mut g.bias);
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcnnEpoch {
    pub epoch: usize,
    pub lr: f64,
    pub train_perplexity: f64,
    pub valid_perplexity: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct GcnnTrainReport {
    pub epochs: Vec<GcnnEpoch>,
}

/// Mini-batch SGD with Nesterov momentum and gradient-norm clipping.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GcnnTrainer {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    pub clip: Option<f64>,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for GcnnTrainer {
    fn default() -> Self {
        GcnnTrainer {
            epochs: 20,
            lr: 0.5,
            momentum: 0.9,
            clip: Some(0.5),
            batch_size: 16,
            seed: 0,
        }
    }
}

impl GcnnTrainer {
    pub fn train(&self, model: &mut GcnnModel, train: &[Vec<usize>], valid: &[Vec<usize>]) -> Result<GcnnTrainReport> {
        self.train_with(model, train, valid, |_, _| Ok(()))
    }

    /// Trains in place, calling `on_epoch` after every epoch (e.g. to snapshot checkpoints).
    pub fn train_with<F>(
        &self,
        model: &mut GcnnModel,
        train: &[Vec<usize>],
        valid: &[Vec<usize>],
        mut on_epoch: F,
    ) -> Result<GcnnTrainReport>
    where
        F: FnMut(&GcnnEpoch, &GcnnModel) -> Result<()>,
    {
        if train.is_empty() {
            return Err(Error::Domain("GCNN training corpus is empty".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be >= 1".into()));
        }
        let mut rng = StdRng::seed_from_u64(self.seed);
        let mut opt = Sgd::new(self.lr, Momentum::Nesterov(self.momentum), self.clip);
        let mut order: Vec<usize> = (0..train.len()).collect();
        let mut report = GcnnTrainReport::default();
        for epoch in 0..self.epochs {
            order.shuffle(&mut rng);
            let mut nll = 0.0;
            let mut count = 0;
            for batch in order.chunks(self.batch_size) {
                let n_tok: usize = batch.iter().map(|&i| train[i].len() + 1).sum();
                let mut grads = model.zero_grads();
                for &i in batch {
                    nll += model.sentence_loss_and_grads(&train[i], &mut grads, 1.0 / n_tok as f64, Some(&mut rng))?;
                }
                count += n_tok;
                if !nll.is_finite() {
                    return Err(Error::Divergence(format!("non-finite LM loss in epoch {epoch}")));
                }
                opt.step(model, &grads)?;
            }
            let valid_perplexity = if valid.is_empty() {
                None
            } else {
                let (v, n) = model.corpus_nll(valid)?;
                Some((v / n as f64).exp())
            };
            let stats = GcnnEpoch {
                epoch,
                lr: self.lr,
                train_perplexity: (nll / count as f64).exp(),
                valid_perplexity,
            };
            log::info!(
                "lm epoch {epoch}: train ppl {:.3}, valid ppl {:?}",
                stats.train_perplexity,
                stats.valid_perplexity
            );
            on_epoch(&stats, model)?;
            report.epochs.push(stats);
        }
        Ok(report)
    }
}

/// A [`GcnnModel`] behind the [`LanguageModel`] interface, with an LRU cache of
/// next-token distributions keyed by the token window.
pub struct GcnnLm {
    model: Arc<GcnnModel>,
    window: usize,
    cache: Mutex<LruCache<Vec<usize>, Arc<Vec<f64>>>>,
}

impl GcnnLm {
    pub const DEFAULT_CACHE: usize = 4096;

    pub fn new(model: GcnnModel) -> Self {
        Self::with_capacity(Arc::new(model), Self::DEFAULT_CACHE)
    }

    pub fn with_capacity(model: Arc<GcnnModel>, capacity: usize) -> Self {
        let window = model.config.window();
        GcnnLm {
            model,
            window,
            cache: Mutex::new(LruCache::new(NonZeroUsize::new(capacity.max(1)).expect("nonzero"))),
        }
    }

    /// Same weights, different context limit (fresh cache).
    pub fn with_context_limit(&self, limit: Option<usize>) -> Result<Self> {
        if limit == Some(0) {
            return Err(Error::Config("context limit must be >= 1".into()));
        }
        let rf = self.model.config.receptive_field();
        let cap = self.cache.lock().expect("cache lock").cap().get();
        let mut lm = Self::with_capacity(Arc::clone(&self.model), cap);
        lm.window = limit.map_or(rf, |l| l.min(rf));
        Ok(lm)
    }

    pub fn model(&self) -> &GcnnModel {
        &self.model
    }

    pub fn window(&self) -> usize {
        self.window
    }

    pub fn cache_len(&self) -> usize {
        self.cache.lock().expect("cache lock").len()
    }

    fn distribution(&self, window: &[usize]) -> Arc<Vec<f64>> {
        if let Some(hit) = self.cache.lock().expect("cache lock").get(window) {
            return Arc::clone(hit);
        }
        let row = if window.is_empty() {
            // empty window only arises from a hand-built state; treat as sentence start
            self.model.next_logprobs(&[self.model.vocab.bos()])
        } else {
            self.model.next_logprobs(window)
        };
        let row = Arc::new(row.expect("tokens validated by vocabulary"));
        self.cache
            .lock()
            .expect("cache lock")
            .put(window.to_vec(), Arc::clone(&row));
        row
    }
}

impl LanguageModel for GcnnLm {
    fn vocab(&self) -> &Vocabulary {
        &self.model.vocab
    }

    fn state_for_history(&self, history: &[usize]) -> LmState {
        LmState(history[history.len().saturating_sub(self.window)..].to_vec())
    }

    fn score(&self, state: &LmState, token: usize) -> (f64, LmState) {
        let token = if token < self.model.vocab.len() {
            token
        } else {
            self.model.vocab.unk()
        };
        let dist = self.distribution(&state.0);
        let mut next = state.0.clone();
        next.push(token);
        (dist[token], self.state_for_history(&next))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::perplexity;
    use crate::math::log_sum_exp;
    use rand::Rng;

    fn toy(blocks: usize, seed: u64) -> GcnnModel {
        let cfg = GcnnConfig {
            num_blocks: blocks,
            embed_dim: 4,
            bottleneck_dim: 3,
            mid_kernel_width: 5,
            dropout_rate: 0.0,
            context_limit: None,
        };
        let vocab = Vocabulary::new(&["a", "b", "c", "d"]);
        GcnnModel::new(cfg, vocab, &mut StdRng::seed_from_u64(seed)).unwrap()
    }

    #[test]
    fn config_validation() {
        let mut c = GcnnConfig::default();
        assert_eq!(c.receptive_field(), 17);
        c.mid_kernel_width = 4;
        assert!(c.validate().is_err());
    }

    #[test]
    fn rows_are_normalized() {
        let m = toy(2, 1);
        let lp = m.forward(&[1, 3, 4, 5, 6, 3]).unwrap();
        for r in 0..lp.rows() {
            assert!(log_sum_exp(lp.row(r)).abs() < 1e-9);
        }
    }

    #[test]
    fn causality_under_future_perturbation() {
        let m = toy(3, 2);
        let mut rng = StdRng::seed_from_u64(3);
        let base: Vec<usize> = (0..12).map(|_| rng.gen_range(0..m.vocab.len())).collect();
        let out = m.forward(&base).unwrap();
        for t in 0..base.len() - 1 {
            let mut p = base.clone();
            for tok in &mut p[t + 1..] {
                *tok = (*tok + 1) % m.vocab.len();
            }
            let o2 = m.forward(&p).unwrap();
            for r in 0..=t {
                assert_eq!(out.row(r), o2.row(r));
            }
        }
    }

    #[test]
    fn zero_convs_leave_embedding_path() {
        let mut m = toy(1, 4);
        let b = &mut m.blocks[0];
        for c in [&mut b.down, &mut b.mid, &mut b.up] {
            c.g.iter_mut().for_each(|g| *g = 0.0);
        }
        // every block output is 0·sigmoid(0) = 0, so row t depends on token t only
        let x = m.forward(&[1, 3, 4]).unwrap();
        let y = m.forward(&[5, 5, 4]).unwrap();
        assert_eq!(x.row(2), y.row(2));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let m = toy(2, 5);
        let sentence = vec![3, 4, 5, 3, 6];
        let mut grads = m.zero_grads();
        m.sentence_loss_and_grads(&sentence, &mut grads, 1.0, None).unwrap();
        let analytic: Vec<f64> = grads.tensors().iter().flat_map(|(_, t)| t.to_vec()).collect();
        let loss = |mm: &GcnnModel| mm.corpus_nll(std::slice::from_ref(&sentence)).unwrap().0;
        let total = analytic.len();
        let mut worst: f64 = 0.0;
        for idx in (0..total).step_by(3) {
            let h = 1e-5;
            let mut plus = m.clone();
            let mut minus = m.clone();
            set_flat(&mut plus, idx, h);
            set_flat(&mut minus, idx, -h);
            let num = (loss(&plus) - loss(&minus)) / (2.0 * h);
            let a = analytic[idx];
            let rel = (num - a).abs() / (num.abs() + a.abs()).max(1e-6);
            worst = worst.max(rel);
        }
        assert!(worst <= 1e-4, "worst relative error {worst}");
    }

    fn set_flat(m: &mut GcnnModel, mut idx: usize, delta: f64) {
        for t in m.tensors_mut() {
            if idx < t.len() {
                t[idx] += delta;
                return;
            }
            idx -= t.len();
        }
    }

    #[test]
    fn zero_learning_rate_keeps_parameters() {
        let mut m = toy(1, 6);
        let before = m.clone();
        let trainer = GcnnTrainer {
            epochs: 2,
            lr: 0.0,
            batch_size: 2,
            ..GcnnTrainer::default()
        };
        trainer.train(&mut m, &[vec![3, 4], vec![5]], &[]).unwrap();
        assert_eq!(m, before);
    }

    #[test]
    fn memorizes_small_corpus() {
        let words: Vec<String> = (0..12).map(|i| format!("w{i}")).collect();
        let vocab = Vocabulary::new(&words);
        let mut rng = StdRng::seed_from_u64(7);
        let corpus: Vec<Vec<usize>> = (0..10)
            .map(|i| {
                let mut s = vec![vocab.id(&words[i])];
                s.extend((0..11).map(|_| vocab.id(&words[rng.gen_range(0..12)])));
                s
            })
            .collect();
        let cfg = GcnnConfig {
            num_blocks: 3,
            embed_dim: 16,
            bottleneck_dim: 8,
            ..GcnnConfig::default()
        };
        let mut m = GcnnModel::new(cfg, vocab, &mut StdRng::seed_from_u64(8)).unwrap();
        let trainer = GcnnTrainer {
            epochs: 150,
            lr: 0.5,
            batch_size: 5,
            ..GcnnTrainer::default()
        };
        trainer.train(&mut m, &corpus, &[]).unwrap();
        let lm = GcnnLm::new(m);
        let ppl = perplexity(&lm, &corpus).unwrap();
        assert!(ppl <= 1.5, "perplexity {ppl}");
    }

    #[test]
    fn equal_windows_give_equal_scores() {
        let lm = GcnnLm::new(toy(1, 9)).with_context_limit(Some(2)).unwrap();
        let h1 = lm.state_for_history(&[1, 3, 4, 5]);
        let h2 = lm.state_for_history(&[6, 6, 4, 5]);
        assert_eq!(h1, h2);
        for w in lm.vocab().predictable() {
            assert_eq!(lm.score(&h1, w).0, lm.score(&h2, w).0);
        }
        assert!(lm.cache_len() >= 1);
    }

    #[test]
    fn window_scoring_matches_full_forward() {
        let m = toy(2, 10);
        let seq = vec![1, 3, 4, 5, 6, 3, 4, 4, 5, 6, 3, 5];
        let full = m.forward(&seq).unwrap();
        let lm = GcnnLm::new(m);
        let mut state = lm.begin();
        for t in 1..seq.len() {
            let (lp, next) = lm.score(&state, seq[t]);
            assert!((lp - full.get(t - 1, seq[t])).abs() < 1e-12);
            state = next;
        }
    }
}
