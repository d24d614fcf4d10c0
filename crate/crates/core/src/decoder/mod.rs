//! Lexicon-constrained beam search over letter emissions with word-level LM
//! fusion, a word insertion reward and a silence penalty.
//!
//! The objective of a word sequence `W` is
//! `logadd_π (AM(π) − γ·sil(π)) + α·log P_lm(W) + β·|W|`, where `π` ranges over
//! the frame-level letter paths spelling `W` (words separated by silence,
//! leading and trailing silence optional). With `γ = 0` the first term is the
//! usual logadd of path scores.

mod exhaustive;
mod trie;
mod tune;

pub use exhaustive::{exhaustive_decode, ExhaustiveLimits};
pub use trie::{format_lexicon, parse_lexicon, LexiconEntry, LexiconTrie, TrieNode};
pub use tune::{dev_wer, tune_grid, TuneGrid, TuneReport, TuneRow, TuneStage};

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::acoustic::EmissionTable;
use crate::criterion::Alphabet;
use crate::error::{Error, Result};
use crate::lm::{LanguageModel, LmState};
use crate::math::{log_add, Table};
use crate::nn::log_softmax_rows;

/// How hypotheses that reach the same search state are combined.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum MergeMode {
    /// Log-add the acoustic scores (sum over paths).
    LogAdd,
    /// Keep only the better hypothesis.
    Max,
    /// Never merge during the search; paths of the same word sequence are
    /// only log-added at the end. Exponential, for testing.
    Off,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecoderOptions {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
    pub beam_size: usize,
    /// Hypotheses scoring below `best − beam_score` are dropped.
    pub beam_score: f64,
    /// Apply a log-softmax to raw emissions before decoding.
    pub normalize_emissions: bool,
    pub merge: MergeMode,
}

impl Default for DecoderOptions {
    fn default() -> Self {
        DecoderOptions {
            alpha: 0.5,
            beta: 1.0,
            gamma: 0.0,
            beam_size: 2500,
            beam_score: 26.0,
            normalize_emissions: false,
            merge: MergeMode::LogAdd,
        }
    }
}

impl DecoderOptions {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("alpha", self.alpha), ("beta", self.beta), ("gamma", self.gamma)] {
            if !(v >= 0.0) || v.is_infinite() {
                return Err(Error::Config(format!("{name} must be a finite value >= 0, got {v}")));
            }
        }
        if self.beam_size == 0 {
            return Err(Error::Config("beam size must be >= 1".into()));
        }
        if !(self.beam_score >= 0.0) {
            return Err(Error::Config("beam score must be >= 0".into()));
        }
        Ok(())
    }

    /// Unlimited beam: nothing is ever pruned.
    pub fn unlimited(alpha: f64, beta: f64, gamma: f64) -> Self {
        DecoderOptions {
            alpha,
            beta,
            gamma,
            beam_size: usize::MAX,
            beam_score: f64::INFINITY,
            ..Self::default()
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeResult {
    pub words: Vec<String>,
    /// Best single letter path (one token per frame) through the winning hypothesis.
    pub letter_path: Vec<usize>,
    pub objective: f64,
    pub am_component: f64,
    /// Raw natural-log LM probability of the words plus sentence end.
    pub lm_component: f64,
    pub silence_count: usize,
}

impl DecodeResult {
    pub fn transcript(&self) -> String {
        self.words.join(" ")
    }
}

/// Raw LM log-probability of a word sequence, sentence end included.
pub fn sentence_log_prob<L: LanguageModel + ?Sized, S: AsRef<str>>(lm: &L, words: &[S]) -> f64 {
    let mut state = lm.begin();
    let mut total = 0.0;
    for w in words {
        let (lp, next) = lm.score(&state, lm.vocab().id(w.as_ref()));
        total += lp;
        state = next;
    }
    total + lm.finish(&state)
}

pub(crate) fn prepare_emissions(
    emissions: &EmissionTable,
    transitions: &Table,
    alphabet: &Alphabet,
    opts: &DecoderOptions,
) -> Result<Table> {
    opts.validate()?;
    let a = alphabet.len();
    if emissions.alphabet_size() != a || transitions.shape() != (a, a) {
        return Err(Error::Dimension(format!(
            "emissions have {} columns and transitions {:?}, alphabet has {a} tokens",
            emissions.alphabet_size(),
            transitions.shape()
        )));
    }
    if emissions.frames() == 0 {
        return Err(Error::Dimension("emission table has no frames".into()));
    }
    if !emissions.scores.all_finite() || !transitions.all_finite() {
        return Err(Error::Domain("emissions and transitions must be finite".into()));
    }
    Ok(if opts.normalize_emissions && !emissions.normalized {
        log_softmax_rows(&emissions.scores)
    } else {
        emissions.scores.clone()
    })
}

const NO_LETTER: usize = usize::MAX;
const NO_PARENT: u32 = u32::MAX;

#[derive(Clone, Debug)]
struct Hyp {
    node: usize,
    history: u32,
    last: usize,
    am: f64,
    lm: f64,
    lm_raw: f64,
    words: u32,
    silences: u32,
    back: u32,
}

impl Hyp {
    fn total(&self, opts: &DecoderOptions) -> f64 {
        self.am + self.lm + opts.beta * f64::from(self.words) - opts.gamma * f64::from(self.silences)
    }

    fn penalized_am(&self, gamma: f64) -> f64 {
        self.am - gamma * f64::from(self.silences)
    }
}

struct HistoryNode {
    parent: u32,
    word: usize,
    state: LmState,
}

/// Interned word histories plus an LM score cache keyed by LM state.
struct Histories<'a, L: ?Sized> {
    lm: &'a L,
    nodes: Vec<HistoryNode>,
    index: HashMap<(u32, usize), (u32, f64)>,
    scores: HashMap<(LmState, usize), (f64, LmState)>,
}

impl<'a, L: LanguageModel + ?Sized> Histories<'a, L> {
    fn new(lm: &'a L) -> Self {
        Histories {
            lm,
            nodes: vec![HistoryNode {
                parent: NO_PARENT,
                word: usize::MAX,
                state: lm.begin(),
            }],
            index: HashMap::new(),
            scores: HashMap::new(),
        }
    }

    fn score(&mut self, state: &LmState, token: usize) -> (f64, LmState) {
        if let Some((lp, next)) = self.scores.get(&(state.clone(), token)) {
            return (*lp, next.clone());
        }
        let (lp, next) = self.lm.score(state, token);
        self.scores.insert((state.clone(), token), (lp, next.clone()));
        (lp, next)
    }

    /// Child history after `word`, and the raw LM log-probability of that word.
    fn extend(&mut self, parent: u32, word: usize, lm_token: usize) -> (u32, f64) {
        if let Some(&hit) = self.index.get(&(parent, word)) {
            return hit;
        }
        let state = self.nodes[parent as usize].state.clone();
        let (lp, next) = self.score(&state, lm_token);
        let id = self.nodes.len() as u32;
        self.nodes.push(HistoryNode {
            parent,
            word,
            state: next,
        });
        self.index.insert((parent, word), (id, lp));
        (id, lp)
    }

    fn finish(&mut self, h: u32) -> f64 {
        self.lm.finish(&self.nodes[h as usize].state)
    }

    fn words(&self, mut h: u32) -> Vec<usize> {
        let mut out = Vec::new();
        while h != 0 {
            let n = &self.nodes[h as usize];
            out.push(n.word);
            h = n.parent;
        }
        out.reverse();
        out
    }
}

/// Frame-synchronous candidate set with merging on insertion.
struct Candidates<'o> {
    opts: &'o DecoderOptions,
    hyps: Vec<Hyp>,
    index: HashMap<(usize, u32, usize), usize>,
}

impl<'o> Candidates<'o> {
    fn new(opts: &'o DecoderOptions) -> Self {
        Candidates {
            opts,
            hyps: Vec::new(),
            index: HashMap::new(),
        }
    }

    fn push(&mut self, h: Hyp, key: (usize, u32, usize)) {
        if self.opts.merge == MergeMode::Off {
            self.hyps.push(h);
            return;
        }
        match self.index.get(&key) {
            None => {
                self.index.insert(key, self.hyps.len());
                self.hyps.push(h);
            }
            Some(&i) => {
                let old = &mut self.hyps[i];
                merge_into(old, h, self.opts);
            }
        }
    }
}

/// Combines `new` into `old`. The higher-total member supplies every field
/// except the acoustic score, which (in log-add mode) absorbs both members so
/// that `am − γ·silences` equals the log-sum of the members' values.
fn merge_into(old: &mut Hyp, new: Hyp, opts: &DecoderOptions) {
    let new_wins = new.total(opts) > old.total(opts);
    match opts.merge {
        MergeMode::Max => {
            if new_wins {
                *old = new;
            }
        }
        MergeMode::LogAdd | MergeMode::Off => {
            let merged = log_add(old.penalized_am(opts.gamma), new.penalized_am(opts.gamma));
            if new_wins {
                *old = new;
            }
            old.am = merged + opts.gamma * f64::from(old.silences);
        }
    }
}

/// Keeps hypotheses within `beam_score` of the best, then the `beam_size` best.
fn prune(hyps: Vec<Hyp>, opts: &DecoderOptions) -> Vec<Hyp> {
    if hyps.is_empty() {
        return hyps;
    }
    let totals: Vec<f64> = hyps.iter().map(|h| h.total(opts)).collect();
    let best = totals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut order: Vec<usize> = (0..hyps.len())
        .filter(|&i| totals[i] >= best - opts.beam_score)
        .collect();
    if order.len() > opts.beam_size {
        // stable: equal totals keep insertion order
        order.sort_by(|&a, &b| totals[b].total_cmp(&totals[a]));
        order.truncate(opts.beam_size);
        order.sort_unstable();
    }
    let mut slots: Vec<Option<Hyp>> = hyps.into_iter().map(Some).collect();
    order.into_iter().map(|i| slots[i].take().expect("unique index")).collect()
}

/// Beam-search decode of one utterance.
pub fn decode<L: LanguageModel + ?Sized>(
    emissions: &EmissionTable,
    transitions: &Table,
    alphabet: &Alphabet,
    trie: &LexiconTrie,
    lm: &L,
    opts: &DecoderOptions,
) -> Result<DecodeResult> {
    let f = prepare_emissions(emissions, transitions, alphabet, opts)?;
    let g = transitions;
    let t_len = f.rows();
    let sil = alphabet.silence();
    let lm_tokens: Vec<usize> = trie.words().iter().map(|w| lm.vocab().id(w)).collect();
    let mut histories = Histories::new(lm);
    // traceback arena: (parent entry, letter)
    let mut arena: Vec<(u32, u32)> = Vec::with_capacity(t_len * 64);
    let mut beam = vec![Hyp {
        node: LexiconTrie::ROOT,
        history: 0,
        last: NO_LETTER,
        am: 0.0,
        lm: 0.0,
        lm_raw: 0.0,
        words: 0,
        silences: 0,
        back: NO_PARENT,
    }];

    for t in 0..t_len {
        let frame = f.row(t);
        let mut cand = Candidates::new(opts);
        for h in &beam {
            let trans = |to: usize| if t == 0 { 0.0 } else { g.get(h.last, to) };
            let mut emit = |cand: &mut Candidates, mut next: Hyp, letter: usize| {
                next.am += frame[letter] + trans(letter);
                next.last = letter;
                next.back = arena.len() as u32;
                arena.push((h.back, letter as u32));
                let key = (next.node, next.history, letter);
                cand.push(next, key);
            };
            let in_word = h.last != NO_LETTER && h.last != sil;
            // (a) advance in the trie
            for &(tok, child) in &trie.node(h.node).children {
                if tok != h.last {
                    emit(&mut cand, Hyp { node: child, ..h.clone() }, tok);
                }
            }
            // (b) hold the current letter
            if in_word {
                emit(&mut cand, h.clone(), h.last);
            }
            // (c) silence: continue a silence run, or close a word
            if h.node == LexiconTrie::ROOT && !in_word {
                emit(
                    &mut cand,
                    Hyp {
                        silences: h.silences + 1,
                        ..h.clone()
                    },
                    sil,
                );
            } else if in_word {
                for &w in &trie.node(h.node).words {
                    let (hist, lp) = histories.extend(h.history, w, lm_tokens[w]);
                    emit(
                        &mut cand,
                        Hyp {
                            node: LexiconTrie::ROOT,
                            history: hist,
                            lm: h.lm + opts.alpha * lp,
                            lm_raw: h.lm_raw + lp,
                            words: h.words + 1,
                            silences: h.silences + 1,
                            ..h.clone()
                        },
                        sil,
                    );
                }
            }
        }
        beam = prune(cand.hyps, opts);
        if beam.is_empty() {
            return Err(Error::EmptyBeam { frame: t });
        }
    }

    // finalize: close words at terminals, drop hypotheses stranded mid-word
    let mut finals: Vec<Hyp> = Vec::new();
    let mut by_history: HashMap<u32, usize> = HashMap::new();
    for h in beam {
        let mut closed: Vec<Hyp> = Vec::new();
        if h.node == LexiconTrie::ROOT {
            closed.push(h);
        } else {
            for &w in &trie.node(h.node).words {
                let (hist, lp) = histories.extend(h.history, w, lm_tokens[w]);
                closed.push(Hyp {
                    node: LexiconTrie::ROOT,
                    history: hist,
                    lm: h.lm + opts.alpha * lp,
                    lm_raw: h.lm_raw + lp,
                    words: h.words + 1,
                    ..h.clone()
                });
            }
        }
        for mut c in closed {
            let lp = histories.finish(c.history);
            c.lm += opts.alpha * lp;
            c.lm_raw += lp;
            match by_history.get(&c.history) {
                Some(&i) => merge_into(&mut finals[i], c, opts),
                None => {
                    by_history.insert(c.history, finals.len());
                    finals.push(c);
                }
            }
        }
    }
    let best = finals
        .iter()
        .enumerate()
        .fold(None::<(usize, f64)>, |acc, (i, h)| {
            let s = h.total(opts);
            match acc {
                Some((_, b)) if b >= s => acc,
                _ => Some((i, s)),
            }
        })
        .ok_or(Error::EmptyBeam { frame: t_len })?;
    let h = &finals[best.0];
    let mut letter_path = Vec::with_capacity(t_len);
    let mut cur = h.back;
    while cur != NO_PARENT {
        let (parent, letter) = arena[cur as usize];
        letter_path.push(letter as usize);
        cur = parent;
    }
    letter_path.reverse();
    Ok(DecodeResult {
        words: histories
            .words(h.history)
            .into_iter()
            .map(|w| trie.word(w).to_string())
            .collect(),
        letter_path,
        objective: best.1,
        am_component: h.am,
        lm_component: h.lm_raw,
        silence_count: h.silences as usize,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{NGramModel, UniformLm, Vocabulary};
    use rand::rngs::StdRng;
    use rand::{Rng, SeedableRng};

    fn alphabet() -> Alphabet {
        Alphabet::with_letters(&["a", "b", "c"]).unwrap()
    }

    fn emissions(rows: Vec<Vec<f64>>) -> EmissionTable {
        EmissionTable {
            scores: Table::from_rows(&rows),
            normalized: false,
        }
    }

    #[test]
    fn single_word_forced_path() {
        let a = alphabet();
        let trie = LexiconTrie::from_words(&["a"], &a).unwrap();
        let lm = UniformLm::new(Vocabulary::new(&["a"]));
        let n = a.len();
        let mut rows = vec![vec![-5.0; n]; 2];
        rows[0][0] = 2.0;
        rows[1][0] = 1.5;
        let mut g = Table::zeros(n, n);
        g.set(0, 0, 0.25);
        let opts = DecoderOptions::unlimited(0.0, 0.0, 0.0);
        let r = decode(&emissions(rows), &g, &a, &trie, &lm, &opts).unwrap();
        assert_eq!(r.words, vec!["a"]);
        assert_eq!(r.letter_path, vec![0, 0]);
        // paths spelling [a]: "a a", "a |", "| a"
        let expect = [2.0 + 0.25 + 1.5, 2.0 - 5.0, -5.0 + 1.5]
            .iter()
            .fold(f64::NEG_INFINITY, |acc, &x| log_add(acc, x));
        assert!((r.objective - expect).abs() < 1e-12, "{} vs {expect}", r.objective);
    }

    #[test]
    fn prune_threshold_arithmetic() {
        let opts = DecoderOptions {
            beam_score: 26.0,
            beam_size: 10,
            ..DecoderOptions::unlimited(0.0, 0.0, 0.0)
        };
        let mk = |am: f64| Hyp {
            node: 0,
            history: 0,
            last: 0,
            am,
            lm: 0.0,
            lm_raw: 0.0,
            words: 0,
            silences: 0,
            back: NO_PARENT,
        };
        let kept = prune(vec![mk(0.0), mk(-10.0), mk(-30.0)], &opts);
        assert_eq!(kept.len(), 2);
        let all = prune(vec![mk(0.0), mk(-10.0), mk(-30.0)], &DecoderOptions::unlimited(0.0, 0.0, 0.0));
        assert_eq!(all.len(), 3);
        let top = prune(
            vec![mk(-1.0), mk(0.0), mk(0.0), mk(-2.0)],
            &DecoderOptions {
                beam_size: 2,
                ..DecoderOptions::unlimited(0.0, 0.0, 0.0)
            },
        );
        assert_eq!(top.iter().map(|h| h.am).collect::<Vec<_>>(), vec![0.0, 0.0]);
    }

    #[test]
    fn merge_logadds_acoustic_scores() {
        let opts = DecoderOptions::unlimited(0.0, 0.0, 0.0);
        let mut c = Candidates::new(&opts);
        let mk = |am: f64| Hyp {
            node: 1,
            history: 0,
            last: 0,
            am,
            lm: 0.0,
            lm_raw: 0.0,
            words: 0,
            silences: 0,
            back: NO_PARENT,
        };
        c.push(mk(0.3f64.ln()), (1, 0, 0));
        c.push(mk(0.5f64.ln()), (1, 0, 0));
        c.push(mk(0.1f64.ln()), (2, 0, 0));
        assert_eq!(c.hyps.len(), 2);
        assert!((c.hyps[0].am - 0.8f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn merge_with_silence_penalty_keeps_penalized_sum() {
        let opts = DecoderOptions::unlimited(0.0, 0.0, 2.0);
        let mut old = Hyp {
            node: 0,
            history: 0,
            last: 3,
            am: 1.0,
            lm: 0.0,
            lm_raw: 0.0,
            words: 0,
            silences: 1,
            back: NO_PARENT,
        };
        let new = Hyp {
            am: 0.5,
            silences: 3,
            ..old.clone()
        };
        let expect = log_add(1.0 - 2.0, 0.5 - 6.0);
        merge_into(&mut old, new, &opts);
        assert_eq!(old.silences, 1);
        assert!((old.penalized_am(2.0) - expect).abs() < 1e-12);
    }

    #[test]
    fn empty_beam_reports_frame() {
        let a = alphabet();
        let trie = LexiconTrie::from_words(&["abc"], &a).unwrap();
        let lm = UniformLm::new(Vocabulary::new(&["abc"]));
        let n = a.len();
        // a one-wide beam follows "a b" and is stranded mid-word at the end
        let mut rows = vec![vec![0.0; n]; 2];
        rows[0][0] = 10.0;
        rows[1][1] = 10.0;
        let opts = DecoderOptions {
            beam_size: 1,
            beam_score: 0.0,
            ..DecoderOptions::unlimited(0.0, 0.0, 0.0)
        };
        let err = decode(&emissions(rows), &Table::zeros(n, n), &a, &trie, &lm, &opts).unwrap_err();
        assert!(matches!(err, Error::EmptyBeam { frame: 2 }), "{err:?}");
    }

    #[test]
    fn invalid_options_rejected() {
        let opts = DecoderOptions {
            alpha: -1.0,
            ..DecoderOptions::default()
        };
        assert!(opts.validate().is_err());
        let opts = DecoderOptions {
            beam_size: 0,
            ..DecoderOptions::default()
        };
        assert!(opts.validate().is_err());
    }

    #[test]
    fn deterministic_and_decomposes() {
        let a = alphabet();
        let trie = LexiconTrie::from_words(&["ab", "ba", "c", "cab"], &a).unwrap();
        let vocab = Vocabulary::new(&["ab", "ba", "c", "cab"]);
        let corpus: Vec<Vec<usize>> = ["ab c", "ba ab", "c c ab", "cab"].iter().map(|s| vocab.encode_sentence(s)).collect();
        let lm = NGramModel::estimate(&corpus, &vocab, 2, 0.5).unwrap();
        let mut rng = StdRng::seed_from_u64(3);
        let n = a.len();
        let rows: Vec<Vec<f64>> = (0..12).map(|_| (0..n).map(|_| rng.gen_range(-3.0..1.0)).collect()).collect();
        let g = Table::from_vec(n, n, (0..n * n).map(|_| rng.gen_range(-1.0..0.5)).collect());
        let opts = DecoderOptions {
            alpha: 0.7,
            beta: 0.4,
            gamma: 0.3,
            beam_size: 20,
            beam_score: 15.0,
            ..DecoderOptions::default()
        };
        let r1 = decode(&emissions(rows.clone()), &g, &a, &trie, &lm, &opts).unwrap();
        let r2 = decode(&emissions(rows), &g, &a, &trie, &lm, &opts).unwrap();
        assert_eq!(r1, r2);
        assert_eq!(r1.letter_path.len(), 12);
        let sil = r1.letter_path.iter().filter(|&&l| l == a.silence()).count();
        assert_eq!(sil, r1.silence_count);
        let lm_raw = sentence_log_prob(&lm, &r1.words);
        let recomputed = r1.am_component + 0.7 * lm_raw + 0.4 * r1.words.len() as f64 - 0.3 * sil as f64;
        assert!((recomputed - r1.objective).abs() <= 1e-10 * r1.objective.abs().max(1.0));
    }
}
