//! How language-model quality and context length move the decoded WER.

use serde::{Deserialize, Serialize};

use super::eval::evaluate_emissions;
use crate::acoustic::EmissionTable;
use crate::criterion::Alphabet;
use crate::decoder::{DecoderOptions, LexiconTrie};
use crate::error::{Error, Result};
use crate::lm::{perplexity, ContextLimited, LanguageModel};
use crate::math::Table;

/// Fixed decoding inputs shared by every row of a study.
pub struct StudySetup<'a> {
    pub items: &'a [(String, EmissionTable, String)],
    pub transitions: &'a Table,
    pub alphabet: &'a Alphabet,
    pub trie: &'a LexiconTrie,
    pub opts: DecoderOptions,
}

impl StudySetup<'_> {
    fn wer<L: LanguageModel + ?Sized>(&self, lm: &L) -> Result<f64> {
        Ok(evaluate_emissions(self.items, self.transitions, self.alphabet, self.trie, lm, &self.opts)?.wer)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PplWerRow {
    pub checkpoint: String,
    pub perplexity: f64,
    pub wer: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContextWerRow {
    pub context: usize,
    pub wer: f64,
}

/// Perplexity on `text` and decoded WER for each LM checkpoint, at fixed
/// decoder weights.
pub fn perplexity_wer_study(
    checkpoints: &[(String, &dyn LanguageModel)],
    text: &[Vec<usize>],
    setup: &StudySetup<'_>,
) -> Result<Vec<PplWerRow>> {
    if checkpoints.len() < 3 {
        return Err(Error::Config(format!(
            "the study needs at least 3 checkpoints, got {}",
            checkpoints.len()
        )));
    }
    checkpoints
        .iter()
        .map(|(name, lm)| {
            Ok(PplWerRow {
                checkpoint: name.clone(),
                perplexity: perplexity(*lm, text)?,
                wer: setup.wer(*lm)?,
            })
        })
        .collect()
}

/// Decoded WER when the LM sees at most `limit` tokens of history, for each limit.
pub fn context_wer_study<L: LanguageModel>(
    lm: &L,
    limits: &[usize],
    setup: &StudySetup<'_>,
) -> Result<Vec<ContextWerRow>> {
    if limits.is_empty() || limits.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::Config("context limits must be non-empty and ascending".into()));
    }
    limits
        .iter()
        .map(|&limit| {
            let limited = ContextLimited::new(lm, limit)?;
            Ok(ContextWerRow {
                context: limit,
                wer: setup.wer(&limited)?,
            })
        })
        .collect()
}

pub fn ppl_wer_csv(rows: &[PplWerRow]) -> String {
    let mut out = String::from("checkpoint,perplexity,wer\n");
    for r in rows {
        out.push_str(&format!("{},{},{}\n", r.checkpoint, r.perplexity, r.wer));
    }
    out
}

pub fn context_wer_csv(rows: &[ContextWerRow]) -> String {
    let mut out = String::from("context,wer\n");
    for r in rows {
        out.push_str(&format!("{},{}\n", r.context, r.wer));
    }
    out
}
