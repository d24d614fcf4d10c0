//! Word-level language models used by the decoder: an ARPA back-off n-gram
//! model and a gated convolutional LM, behind one [`LanguageModel`] trait.

mod gcnn;
mod ngram;

pub use gcnn::{GcnnBlock, GcnnConfig, GcnnEpoch, GcnnGrads, GcnnLm, GcnnModel, GcnnTrainReport, GcnnTrainer};
pub use ngram::{NGramEntry, NGramModel};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const UNK: &str = "<unk>";
pub const BOS: &str = "<s>";
pub const EOS: &str = "</s>";

/// Ordered token set with the three special tokens always present.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    tokens: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl Vocabulary {
    /// Builds a vocabulary from `words`, adding `<unk>`, `<s>`, `</s>` first if missing.
    pub fn new<S: AsRef<str>>(words: &[S]) -> Self {
        let mut tokens: Vec<String> = Vec::new();
        for special in [UNK, BOS, EOS] {
            if !words.iter().any(|w| w.as_ref() == special) {
                tokens.push(special.to_string());
            }
        }
        for w in words {
            if !tokens.iter().any(|t| t == w.as_ref()) {
                tokens.push(w.as_ref().to_string());
            }
        }
        Self::from_tokens(tokens)
    }

    fn from_tokens(tokens: Vec<String>) -> Self {
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocabulary { tokens, index }
    }

    /// Rebuilds the lookup table after deserialization.
    pub fn reindex(&mut self) {
        self.index = self.tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, i: usize) -> &str {
        &self.tokens[i]
    }

    pub fn get(&self, word: &str) -> Option<usize> {
        self.index.get(word).copied()
    }

    /// Index of `word`, or of `<unk>` when it is out of vocabulary.
    pub fn id(&self, word: &str) -> usize {
        self.get(word).unwrap_or_else(|| self.unk())
    }

    pub fn unk(&self) -> usize {
        self.index[UNK]
    }

    pub fn bos(&self) -> usize {
        self.index[BOS]
    }

    pub fn eos(&self) -> usize {
        self.index[EOS]
    }

    /// Tokens that can be predicted: everything except `<s>`.
    pub fn predictable(&self) -> impl Iterator<Item = usize> + '_ {
        let bos = self.bos();
        (0..self.len()).filter(move |&i| i != bos)
    }

    pub fn encode_sentence(&self, line: &str) -> Vec<usize> {
        line.split_whitespace().map(|w| self.id(w)).collect()
    }
}

/// The recent-token window an LM conditions on. Equal keys score every continuation identically.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct LmState(pub Vec<usize>);

pub trait LanguageModel {
    fn vocab(&self) -> &Vocabulary;

    /// State at the start of a sentence.
    fn begin(&self) -> LmState {
        self.state_for_history(&[self.vocab().bos()])
    }

    /// State summarizing an explicit token history.
    fn state_for_history(&self, history: &[usize]) -> LmState;

    /// Natural-log probability of `token` after `state`, and the successor state.
    fn score(&self, state: &LmState, token: usize) -> (f64, LmState);

    /// Log-probability of ending the sentence.
    fn finish(&self, state: &LmState) -> f64 {
        self.score(state, self.vocab().eos()).0
    }
}

impl<L: LanguageModel + ?Sized> LanguageModel for &L {
    fn vocab(&self) -> &Vocabulary {
        (**self).vocab()
    }
    fn begin(&self) -> LmState {
        (**self).begin()
    }
    fn state_for_history(&self, history: &[usize]) -> LmState {
        (**self).state_for_history(history)
    }
    fn score(&self, state: &LmState, token: usize) -> (f64, LmState) {
        (**self).score(state, token)
    }
    fn finish(&self, state: &LmState) -> f64 {
        (**self).finish(state)
    }
}

/// Log-probability of `token` given only the last `limit` tokens of `history`.
pub fn score_with_context_limit<L: LanguageModel + ?Sized>(
    lm: &L,
    history: &[usize],
    token: usize,
    limit: usize,
) -> Result<f64> {
    if limit == 0 {
        return Err(Error::Config("context limit must be >= 1".into()));
    }
    let start = history.len().saturating_sub(limit);
    let state = lm.state_for_history(&history[start..]);
    Ok(lm.score(&state, token).0)
}

/// Wraps an LM so that it never sees more than `limit` tokens of history.
#[derive(Clone, Debug)]
pub struct ContextLimited<L> {
    pub inner: L,
    pub limit: usize,
}

impl<L: LanguageModel> ContextLimited<L> {
    pub fn new(inner: L, limit: usize) -> Result<Self> {
        if limit == 0 {
            return Err(Error::Config("context limit must be >= 1".into()));
        }
        Ok(ContextLimited { inner, limit })
    }

    fn truncate(&self, mut s: LmState) -> LmState {
        if s.0.len() > self.limit {
            s.0.drain(..s.0.len() - self.limit);
        }
        s
    }
}

impl<L: LanguageModel> LanguageModel for ContextLimited<L> {
    fn vocab(&self) -> &Vocabulary {
        self.inner.vocab()
    }

    fn state_for_history(&self, history: &[usize]) -> LmState {
        let start = history.len().saturating_sub(self.limit);
        self.truncate(self.inner.state_for_history(&history[start..]))
    }

    fn score(&self, state: &LmState, token: usize) -> (f64, LmState) {
        let (lp, next) = self.inner.score(state, token);
        (lp, self.truncate(next))
    }
}

/// Every predictable token equally likely.
#[derive(Clone, Debug)]
pub struct UniformLm {
    vocab: Vocabulary,
}

impl UniformLm {
    pub fn new(vocab: Vocabulary) -> Self {
        UniformLm { vocab }
    }
}

impl LanguageModel for UniformLm {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn state_for_history(&self, _history: &[usize]) -> LmState {
        LmState(Vec::new())
    }

    fn score(&self, state: &LmState, _token: usize) -> (f64, LmState) {
        (-((self.vocab.len() - 1) as f64).ln(), state.clone())
    }
}

/// `exp` of the mean negative log-likelihood per predicted token; each
/// sentence contributes its words plus the end-of-sentence token.
pub fn perplexity<L: LanguageModel + ?Sized>(lm: &L, corpus: &[Vec<usize>]) -> Result<f64> {
    let (nll, count) = corpus_nll(lm, corpus)?;
    Ok((nll / count as f64).exp())
}

/// Total negative log-likelihood and token count.
pub fn corpus_nll<L: LanguageModel + ?Sized>(lm: &L, corpus: &[Vec<usize>]) -> Result<(f64, usize)> {
    if corpus.is_empty() {
        return Err(Error::Domain("perplexity of an empty corpus".into()));
    }
    let mut nll = 0.0;
    let mut count = 0;
    for sentence in corpus {
        let mut state = lm.begin();
        for &w in sentence {
            let (lp, next) = lm.score(&state, w);
            nll -= lp;
            state = next;
        }
        nll -= lm.finish(&state);
        count += sentence.len() + 1;
    }
    Ok((nll, count))
}

/// Reads a whitespace-tokenized corpus, one sentence per line; blank lines are skipped.
pub fn read_corpus(text: &str) -> Vec<Vec<String>> {
    text.lines()
        .map(|l| l.split_whitespace().map(str::to_string).collect::<Vec<_>>())
        .filter(|s| !s.is_empty())
        .collect()
}
