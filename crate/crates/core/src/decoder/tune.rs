use serde::{Deserialize, Serialize};

use super::{decode, DecoderOptions, LexiconTrie};
use crate::acoustic::EmissionTable;
use crate::criterion::Alphabet;
use crate::error::{Error, Result};
use crate::lm::LanguageModel;
use crate::math::Table;
use crate::pipeline::metrics::wer;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneGrid {
    pub alphas: Vec<f64>,
    pub betas: Vec<f64>,
    pub gammas: Vec<f64>,
}

impl TuneGrid {
    pub fn len(&self) -> usize {
        self.alphas.len() * self.betas.len() * self.gammas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneStage {
    pub beam_size: usize,
    pub beam_score: f64,
}

impl TuneStage {
    /// Beam used while searching the grid.
    pub const SEARCH: TuneStage = TuneStage {
        beam_size: 2500,
        beam_score: 26.0,
    };
    /// Wider beam used to re-evaluate the chosen point.
    pub const FINAL: TuneStage = TuneStage {
        beam_size: 3000,
        beam_score: 50.0,
    };
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneRow {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub wer: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TuneReport {
    pub best: DecoderOptions,
    pub search_wer: f64,
    pub final_wer: f64,
    pub rows: Vec<TuneRow>,
}

/// WER of decoding every `(emissions, reference)` pair; failed decodes count
/// as empty hypotheses.
pub fn dev_wer<L: LanguageModel + ?Sized>(
    dev: &[(EmissionTable, String)],
    transitions: &Table,
    alphabet: &Alphabet,
    trie: &LexiconTrie,
    lm: &L,
    opts: &DecoderOptions,
) -> Result<f64> {
    let mut pairs = Vec::with_capacity(dev.len());
    for (em, reference) in dev {
        let hyp = match decode(em, transitions, alphabet, trie, lm, opts) {
            Ok(r) => r.transcript(),
            Err(Error::EmptyBeam { .. }) => String::new(),
            Err(e) => return Err(e),
        };
        pairs.push((reference.clone(), hyp));
    }
    Ok(wer(&pairs))
}

/// Grid search over α, β, γ at the search beam, then re-evaluation of the
/// winner at the final beam. Ties keep the earliest grid point.
#[allow(clippy::too_many_arguments)]
pub fn tune_grid<L: LanguageModel + ?Sized>(
    dev: &[(EmissionTable, String)],
    transitions: &Table,
    alphabet: &Alphabet,
    trie: &LexiconTrie,
    lm: &L,
    grid: &TuneGrid,
    base: &DecoderOptions,
    stages: [TuneStage; 2],
) -> Result<TuneReport> {
    if grid.is_empty() {
        return Err(Error::Config("tuning grid is empty".into()));
    }
    if dev.is_empty() {
        return Err(Error::Config("tuning needs at least one validation utterance".into()));
    }
    let mut rows = Vec::with_capacity(grid.len());
    let mut best: Option<(f64, DecoderOptions)> = None;
    for &alpha in &grid.alphas {
        for &beta in &grid.betas {
            for &gamma in &grid.gammas {
                let opts = DecoderOptions {
                    alpha,
                    beta,
                    gamma,
                    beam_size: stages[0].beam_size,
                    beam_score: stages[0].beam_score,
                    ..base.clone()
                };
                let w = dev_wer(dev, transitions, alphabet, trie, lm, &opts)?;
                log::info!("tune alpha={alpha} beta={beta} gamma={gamma}: WER {w:.2}");
                rows.push(TuneRow { alpha, beta, gamma, wer: w });
                if best.as_ref().is_none_or(|b| w < b.0) {
                    best = Some((w, opts));
                }
            }
        }
    }
    let (search_wer, chosen) = best.expect("non-empty grid");
    let best = DecoderOptions {
        beam_size: stages[1].beam_size,
        beam_score: stages[1].beam_score,
        ..chosen
    };
    let final_wer = dev_wer(dev, transitions, alphabet, trie, lm, &best)?;
    Ok(TuneReport {
        best,
        search_wer,
        final_wer,
        rows,
    })
}
