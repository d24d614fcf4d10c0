//! Auto Segmentation Criterion (ASG).
//!
//! A path assigns one token to each of the `T` frames. Its score is
//! `Σ_t f[t][π_t] + Σ_{t≥1} g[π_{t-1}][π_t]`; there is no transition term on the
//! first frame. The loss is the log-sum-exp over all paths minus the
//! log-sum-exp over paths that spell the target, where each target token
//! occupies at least one consecutive frame.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{log_add, log_sum_exp, Table, NEG_INF};

pub const SILENCE: &str = "|";
pub const REPETITION: &str = "<rep>";

/// Output tokens of the acoustic model.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Alphabet {
    tokens: Vec<String>,
    silence: usize,
    repetition: usize,
}

impl Alphabet {
    pub fn new(tokens: Vec<String>, silence: usize, repetition: usize) -> Result<Self> {
        if tokens.len() < 2 {
            return Err(Error::Config("alphabet needs at least two tokens".into()));
        }
        for (i, t) in tokens.iter().enumerate() {
            if tokens[..i].contains(t) {
                return Err(Error::Config(format!("duplicate token {t:?}")));
            }
        }
        if silence >= tokens.len() || repetition >= tokens.len() || silence == repetition {
            return Err(Error::Config(
                "silence and repetition must be distinct members".into(),
            ));
        }
        Ok(Alphabet {
            tokens,
            silence,
            repetition,
        })
    }

    /// `letters` followed by the silence token `|` and the repetition token `<rep>`.
    pub fn with_letters<S: AsRef<str>>(letters: &[S]) -> Result<Self> {
        let mut tokens: Vec<String> = letters.iter().map(|s| s.as_ref().to_string()).collect();
        tokens.push(SILENCE.to_string());
        tokens.push(REPETITION.to_string());
        let n = tokens.len();
        Alphabet::new(tokens, n - 2, n - 1)
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn silence(&self) -> usize {
        self.silence
    }

    pub fn repetition(&self) -> usize {
        self.repetition
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn token(&self, i: usize) -> &str {
        &self.tokens[i]
    }

    pub fn index_of(&self, token: &str) -> Result<usize> {
        self.tokens
            .iter()
            .position(|t| t == token)
            .ok_or_else(|| Error::Vocabulary(format!("unknown letter {token:?}")))
    }

    /// Letter indices for `text`, one per character, with spaces mapped to silence.
    pub fn letters_of(&self, text: &str) -> Result<Vec<usize>> {
        text.chars()
            .map(|c| {
                if c == ' ' {
                    Ok(self.silence)
                } else {
                    self.index_of(c.encode_utf8(&mut [0; 4]))
                }
            })
            .collect()
    }

    /// Training target for a transcript: silence around and between words.
    pub fn transcript_target(&self, text: &str) -> Result<Target> {
        let mut letters = vec![self.silence];
        for (i, word) in text.split_whitespace().enumerate() {
            if i > 0 {
                letters.push(self.silence);
            }
            letters.extend(self.letters_of(word)?);
        }
        letters.push(self.silence);
        encode_target(self, &letters)
    }
}

/// A repetition-encoded token sequence with no identical neighbours.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Target {
    pub encoded: Vec<usize>,
}

/// Replaces each immediate repeat by the repetition token; runs of three encode as `x, rep, x`.
pub fn encode_target(alphabet: &Alphabet, letters: &[usize]) -> Result<Target> {
    if letters.is_empty() {
        return Err(Error::Vocabulary("empty letter sequence".into()));
    }
    let mut encoded = Vec::with_capacity(letters.len());
    let mut prev_literal: Option<usize> = None;
    for &l in letters {
        if l >= alphabet.len() || l == alphabet.repetition {
            return Err(Error::Vocabulary(format!("letter index {l} is not encodable")));
        }
        if prev_literal == Some(l) {
            encoded.push(alphabet.repetition);
            prev_literal = None;
        } else {
            encoded.push(l);
            prev_literal = Some(l);
        }
    }
    Ok(Target { encoded })
}

/// Inverse of [`encode_target`].
pub fn decode_target(alphabet: &Alphabet, encoded: &[usize]) -> Result<Vec<usize>> {
    let mut out: Vec<usize> = Vec::with_capacity(encoded.len());
    for &e in encoded {
        if e == alphabet.repetition {
            let prev = *out
                .last()
                .ok_or_else(|| Error::Vocabulary("repetition token with no predecessor".into()))?;
            out.push(prev);
        } else {
            out.push(e);
        }
    }
    Ok(out)
}

/// Collapses a frame-level path into its token sequence (runs merged).
pub fn collapse_path(path: &[usize]) -> Vec<usize> {
    let mut out: Vec<usize> = Vec::new();
    for &p in path {
        if out.last() != Some(&p) {
            out.push(p);
        }
    }
    out
}

/// The set of admissible frame-level paths.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum AlignmentGraph {
    /// Every token at every frame.
    Full { num_tokens: usize },
    /// Monotonic alignments of a token sequence, each token held for ≥ 1 frame.
    Constrained { states: Vec<usize> },
}

impl AlignmentGraph {
    pub fn constrained(target: &Target) -> Self {
        AlignmentGraph::Constrained {
            states: target.encoded.clone(),
        }
    }
}

fn check_shapes(emissions: &Table, transitions: &Table, graph: &AlignmentGraph) -> Result<()> {
    let a = emissions.cols();
    if transitions.shape() != (a, a) {
        return Err(Error::Dimension(format!(
            "transitions {:?} do not match {a} emission columns",
            transitions.shape()
        )));
    }
    if emissions.rows() == 0 {
        return Err(Error::Dimension("emission table has no frames".into()));
    }
    match graph {
        AlignmentGraph::Full { num_tokens } if *num_tokens != a => Err(Error::Dimension(
            format!("graph over {num_tokens} tokens, emissions over {a}"),
        )),
        AlignmentGraph::Constrained { states } if states.is_empty() => {
            Err(Error::Dimension("empty constrained graph".into()))
        }
        AlignmentGraph::Constrained { states } if states.iter().any(|&s| s >= a) => Err(
            Error::Dimension("constrained graph names a token outside the alphabet".into()),
        ),
        _ => Ok(()),
    }
}

/// Forward variables `alpha[t][state]`.
fn forward_table(emissions: &Table, g: &Table, graph: &AlignmentGraph) -> Table {
    let t_len = emissions.rows();
    match graph {
        AlignmentGraph::Full { num_tokens } => {
            let a = *num_tokens;
            let mut alpha = Table::zeros(t_len, a);
            alpha.row_mut(0).copy_from_slice(emissions.row(0));
            let mut terms = vec![0.0; a];
            for t in 1..t_len {
                for j in 0..a {
                    for (i, term) in terms.iter_mut().enumerate() {
                        *term = alpha.get(t - 1, i) + g.get(i, j);
                    }
                    alpha.set(t, j, emissions.get(t, j) + log_sum_exp(&terms));
                }
            }
            alpha
        }
        AlignmentGraph::Constrained { states } => {
            let l = states.len();
            let mut alpha = Table::filled(t_len, l, NEG_INF);
            alpha.set(0, 0, emissions.get(0, states[0]));
            for t in 1..t_len {
                for j in 0..l {
                    let s = states[j];
                    let stay = alpha.get(t - 1, j) + g.get(s, s);
                    let advance = if j > 0 {
                        alpha.get(t - 1, j - 1) + g.get(states[j - 1], s)
                    } else {
                        NEG_INF
                    };
                    let acc = log_add(stay, advance);
                    if acc != NEG_INF {
                        alpha.set(t, j, emissions.get(t, s) + acc);
                    }
                }
            }
            alpha
        }
    }
}

/// Backward variables `beta[t][state]`: log-sum of scores of frames `t+1..T` given the state at `t`.
fn backward_table(emissions: &Table, g: &Table, graph: &AlignmentGraph) -> Table {
    let t_len = emissions.rows();
    match graph {
        AlignmentGraph::Full { num_tokens } => {
            let a = *num_tokens;
            let mut beta = Table::zeros(t_len, a);
            let mut terms = vec![0.0; a];
            for t in (0..t_len - 1).rev() {
                for i in 0..a {
                    for (j, term) in terms.iter_mut().enumerate() {
                        *term = g.get(i, j) + emissions.get(t + 1, j) + beta.get(t + 1, j);
                    }
                    beta.set(t, i, log_sum_exp(&terms));
                }
            }
            beta
        }
        AlignmentGraph::Constrained { states } => {
            let l = states.len();
            let mut beta = Table::filled(t_len, l, NEG_INF);
            beta.set(t_len - 1, l - 1, 0.0);
            for t in (0..t_len - 1).rev() {
                for j in 0..l {
                    let s = states[j];
                    let stay = g.get(s, s) + emissions.get(t + 1, s) + beta.get(t + 1, j);
                    let advance = if j + 1 < l {
                        let n = states[j + 1];
                        g.get(s, n) + emissions.get(t + 1, n) + beta.get(t + 1, j + 1)
                    } else {
                        NEG_INF
                    };
                    beta.set(t, j, log_add(stay, advance));
                }
            }
            beta
        }
    }
}

/// Log-sum-exp of path scores over `graph`; `NEG_INF` when the graph admits no path.
pub fn forward_score(emissions: &Table, transitions: &Table, graph: &AlignmentGraph) -> Result<f64> {
    check_shapes(emissions, transitions, graph)?;
    if let AlignmentGraph::Constrained { states } = graph {
        if states.len() > emissions.rows() {
            return Ok(NEG_INF);
        }
    }
    let alpha = forward_table(emissions, transitions, graph);
    let last = emissions.rows() - 1;
    Ok(match graph {
        AlignmentGraph::Full { .. } => log_sum_exp(alpha.row(last)),
        AlignmentGraph::Constrained { states } => alpha.get(last, states.len() - 1),
    })
}

fn check_feasible(emissions: &Table, target: &Target) -> Result<()> {
    if target.encoded.len() > emissions.rows() {
        return Err(Error::InfeasibleAlignment {
            target_len: target.encoded.len(),
            frames: emissions.rows(),
        });
    }
    Ok(())
}

/// Full-graph score minus target-graph score; never negative.
pub fn asg_loss(emissions: &Table, transitions: &Table, target: &Target) -> Result<f64> {
    check_feasible(emissions, target)?;
    let full = forward_score(
        emissions,
        transitions,
        &AlignmentGraph::Full {
            num_tokens: emissions.cols(),
        },
    )?;
    let constrained = forward_score(emissions, transitions, &AlignmentGraph::constrained(target))?;
    Ok(full - constrained)
}

#[derive(Clone, Debug, PartialEq)]
pub struct AsgGradients {
    pub loss: f64,
    /// `∂loss/∂f`, `T × |A|`.
    pub emissions: Table,
    /// `∂loss/∂g`, `|A| × |A|`.
    pub transitions: Table,
}

/// Adds `sign ×` (state and edge posteriors of `graph`) into the gradient tables.
fn accumulate_posteriors(
    emissions: &Table,
    g: &Table,
    graph: &AlignmentGraph,
    sign: f64,
    d_emit: &mut Table,
    d_trans: &mut Table,
) -> f64 {
    let alpha = forward_table(emissions, g, graph);
    let beta = backward_table(emissions, g, graph);
    let t_len = emissions.rows();
    match graph {
        AlignmentGraph::Full { num_tokens } => {
            let a = *num_tokens;
            let z = log_sum_exp(alpha.row(t_len - 1));
            for t in 0..t_len {
                for j in 0..a {
                    let p = (alpha.get(t, j) + beta.get(t, j) - z).exp();
                    d_emit.add(t, j, sign * p);
                }
            }
            for t in 1..t_len {
                for i in 0..a {
                    let ai = alpha.get(t - 1, i);
                    for j in 0..a {
                        let p = (ai + g.get(i, j) + emissions.get(t, j) + beta.get(t, j) - z).exp();
                        d_trans.add(i, j, sign * p);
                    }
                }
            }
            z
        }
        AlignmentGraph::Constrained { states } => {
            let l = states.len();
            let z = alpha.get(t_len - 1, l - 1);
            for t in 0..t_len {
                for (j, &s) in states.iter().enumerate() {
                    let lp = alpha.get(t, j) + beta.get(t, j) - z;
                    if lp > NEG_INF {
                        d_emit.add(t, s, sign * lp.exp());
                    }
                }
            }
            for t in 1..t_len {
                for (j, &s) in states.iter().enumerate() {
                    let tail = emissions.get(t, s) + beta.get(t, j) - z;
                    let stay = alpha.get(t - 1, j) + g.get(s, s) + tail;
                    if stay > NEG_INF {
                        d_trans.add(s, s, sign * stay.exp());
                    }
                    if j > 0 {
                        let p = states[j - 1];
                        let adv = alpha.get(t - 1, j - 1) + g.get(p, s) + tail;
                        if adv > NEG_INF {
                            d_trans.add(p, s, sign * adv.exp());
                        }
                    }
                }
            }
            z
        }
    }
}

/// Loss plus exact gradients: full-graph posteriors minus target-graph posteriors.
pub fn asg_gradients(emissions: &Table, transitions: &Table, target: &Target) -> Result<AsgGradients> {
    let a = emissions.cols();
    let full = AlignmentGraph::Full { num_tokens: a };
    let constrained = AlignmentGraph::constrained(target);
    check_shapes(emissions, transitions, &full)?;
    check_shapes(emissions, transitions, &constrained)?;
    check_feasible(emissions, target)?;
    let mut d_emit = Table::zeros(emissions.rows(), a);
    let mut d_trans = Table::zeros(a, a);
    let z_full = accumulate_posteriors(emissions, transitions, &full, 1.0, &mut d_emit, &mut d_trans);
    let z_target = accumulate_posteriors(
        emissions,
        transitions,
        &constrained,
        -1.0,
        &mut d_emit,
        &mut d_trans,
    );
    Ok(AsgGradients {
        loss: z_full - z_target,
        emissions: d_emit,
        transitions: d_trans,
    })
}

/// Best single path and its score. Ties go to the lower token index.
pub fn viterbi(
    emissions: &Table,
    transitions: &Table,
    graph: &AlignmentGraph,
) -> Result<(Vec<usize>, f64)> {
    check_shapes(emissions, transitions, graph)?;
    let t_len = emissions.rows();
    let g = transitions;
    match graph {
        AlignmentGraph::Full { num_tokens } => {
            let a = *num_tokens;
            let mut score = emissions.row(0).to_vec();
            let mut back = vec![vec![0usize; a]; t_len];
            for t in 1..t_len {
                let mut next = vec![0.0; a];
                for j in 0..a {
                    let mut best = (0, f64::NEG_INFINITY);
                    for (i, &s) in score.iter().enumerate() {
                        let v = s + g.get(i, j);
                        if v > best.1 {
                            best = (i, v);
                        }
                    }
                    back[t][j] = best.0;
                    next[j] = best.1 + emissions.get(t, j);
                }
                score = next;
            }
            let (mut cur, best) = score
                .iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |acc, (j, &s)| {
                    if s > acc.1 {
                        (j, s)
                    } else {
                        acc
                    }
                });
            let mut path = vec![0; t_len];
            for t in (0..t_len).rev() {
                path[t] = cur;
                cur = back[t][cur];
            }
            Ok((path, best))
        }
        AlignmentGraph::Constrained { states } => {
            let l = states.len();
            if l > t_len {
                return Err(Error::InfeasibleAlignment {
                    target_len: l,
                    frames: t_len,
                });
            }
            let mut score = vec![NEG_INF; l];
            score[0] = emissions.get(0, states[0]);
            // true = advanced from j-1
            let mut back = vec![vec![false; l]; t_len];
            for t in 1..t_len {
                let mut next = vec![NEG_INF; l];
                for j in 0..l {
                    let s = states[j];
                    let stay = score[j] + g.get(s, s);
                    let adv = if j > 0 {
                        score[j - 1] + g.get(states[j - 1], s)
                    } else {
                        NEG_INF
                    };
                    let take_adv = adv > stay || (adv == stay && j > 0 && states[j - 1] < s);
                    back[t][j] = take_adv;
                    let best = if take_adv { adv } else { stay };
                    if best > NEG_INF {
                        next[j] = best + emissions.get(t, s);
                    }
                }
                score = next;
            }
            let mut path = vec![0; t_len];
            let mut j = l - 1;
            for t in (0..t_len).rev() {
                path[t] = states[j];
                if back[t][j] {
                    j -= 1;
                }
            }
            Ok((path, score[l - 1]))
        }
    }
}
