use super::{prepare_emissions, sentence_log_prob, DecodeResult, DecoderOptions, LexiconTrie};
use crate::acoustic::EmissionTable;
use crate::criterion::Alphabet;
use crate::error::{Error, Result};
use crate::lm::LanguageModel;
use crate::math::{log_add, Table, NEG_INF};

/// Size bounds for brute-force decoding.
#[derive(Clone, Debug, PartialEq)]
pub struct ExhaustiveLimits {
    pub max_frames: usize,
    pub max_lexicon: usize,
    /// Longest word sequence considered; `None` means as many as fit in the frames.
    pub max_words: Option<usize>,
    /// Total number of frame-level paths that may be scored.
    pub max_paths: u64,
}

impl Default for ExhaustiveLimits {
    fn default() -> Self {
        ExhaustiveLimits {
            max_frames: 20,
            max_lexicon: 8,
            max_words: None,
            max_paths: 20_000_000,
        }
    }
}

struct Scorer<'a> {
    f: &'a Table,
    g: &'a Table,
    sil: usize,
    gamma: f64,
    paths: u64,
    max_paths: u64,
}

impl Scorer<'_> {
    /// Log-sum over every alignment of `tokens` to all frames (each token
    /// held ≥ 1 frame) of the penalized path score, plus the best single path.
    fn sum_alignments(&mut self, tokens: &[usize]) -> Result<(f64, f64, Vec<usize>)> {
        let t_len = self.f.rows();
        let mut path = Vec::with_capacity(t_len);
        let mut acc = (NEG_INF, NEG_INF, Vec::new());
        self.recurse(tokens, 0, 0.0, &mut path, &mut acc)?;
        Ok(acc)
    }

    fn recurse(
        &mut self,
        tokens: &[usize],
        k: usize,
        score: f64,
        path: &mut Vec<usize>,
        acc: &mut (f64, f64, Vec<usize>),
    ) -> Result<()> {
        let t_len = self.f.rows();
        if k == tokens.len() {
            if path.len() == t_len {
                self.paths += 1;
                if self.paths > self.max_paths {
                    return Err(Error::Capacity(format!(
                        "more than {} alignments to enumerate",
                        self.max_paths
                    )));
                }
                acc.0 = log_add(acc.0, score);
                if score > acc.1 {
                    acc.1 = score;
                    acc.2 = path.clone();
                }
            }
            return Ok(());
        }
        let remaining_tokens = tokens.len() - k - 1;
        let start = path.len();
        let max_dur = t_len - start - remaining_tokens;
        let tok = tokens[k];
        let mut s = score;
        for d in 1..=max_dur {
            let t = start + d - 1;
            let trans = match path.last() {
                Some(&prev) => self.g.get(prev, tok),
                None => 0.0,
            };
            s += self.f.get(t, tok) + trans;
            if tok == self.sil {
                s -= self.gamma;
            }
            path.push(tok);
            self.recurse(tokens, k + 1, s, path, acc)?;
        }
        path.truncate(start);
        Ok(())
    }
}

/// Scores every word sequence over the lexicon by explicit path enumeration
/// and returns the best one. Intended as a test oracle for [`super::decode`].
pub fn exhaustive_decode<L: LanguageModel + ?Sized>(
    emissions: &EmissionTable,
    transitions: &Table,
    alphabet: &Alphabet,
    trie: &LexiconTrie,
    lm: &L,
    opts: &DecoderOptions,
    limits: &ExhaustiveLimits,
) -> Result<DecodeResult> {
    let f = prepare_emissions(emissions, transitions, alphabet, opts)?;
    let t_len = f.rows();
    if t_len > limits.max_frames {
        return Err(Error::Capacity(format!(
            "{t_len} frames exceeds the exhaustive limit of {}",
            limits.max_frames
        )));
    }
    let n_words = trie.words().len();
    if n_words > limits.max_lexicon {
        return Err(Error::Capacity(format!(
            "lexicon of {n_words} words exceeds the exhaustive limit of {}",
            limits.max_lexicon
        )));
    }
    let sil = alphabet.silence();
    let mut scorer = Scorer {
        f: &f,
        g: transitions,
        sil,
        gamma: opts.gamma,
        paths: 0,
        max_paths: limits.max_paths,
    };
    let max_words = limits.max_words.unwrap_or(t_len);

    let mut best: Option<(f64, Vec<usize>, f64, Vec<usize>)> = None;
    let mut seq: Vec<usize> = Vec::new();
    // iterative DFS over word sequences in lexicographic order of word index
    loop {
        let words: Vec<&str> = seq.iter().map(|&w| trie.word(w)).collect();
        let core: Vec<usize> = seq
            .iter()
            .enumerate()
            .flat_map(|(i, &w)| {
                let sep = if i > 0 { Some(sil) } else { None };
                sep.into_iter().chain(trie.spelling(w).iter().copied())
            })
            .collect();
        let mut variants: Vec<Vec<usize>> = Vec::new();
        if seq.is_empty() {
            variants.push(vec![sil]);
        } else {
            for (lead, trail) in [(false, false), (true, false), (false, true), (true, true)] {
                let mut v = Vec::with_capacity(core.len() + 2);
                if lead {
                    v.push(sil);
                }
                v.extend_from_slice(&core);
                if trail {
                    v.push(sil);
                }
                variants.push(v);
            }
        }
        let mut am = NEG_INF;
        let mut best_path: (f64, Vec<usize>) = (NEG_INF, Vec::new());
        for v in variants.iter().filter(|v| v.len() <= t_len) {
            let (sum, top, path) = scorer.sum_alignments(v)?;
            am = log_add(am, sum);
            if top > best_path.0 {
                best_path = (top, path);
            }
        }
        if am > NEG_INF {
            let lm_raw = sentence_log_prob(lm, &words);
            let objective = am + opts.alpha * lm_raw + opts.beta * seq.len() as f64;
            if best.as_ref().is_none_or(|b| objective > b.0) {
                best = Some((objective, seq.clone(), lm_raw, best_path.1));
            }
        }

        // next sequence: extend if the shortest realization still fits, else advance
        let min_len = core.len() + if seq.is_empty() { 0 } else { 1 };
        let can_extend = seq.len() < max_words && n_words > 0 && min_len < t_len;
        if can_extend {
            seq.push(0);
            continue;
        }
        loop {
            match seq.pop() {
                None => {
                    return finish(best, trie, sil, opts).ok_or(Error::EmptyBeam { frame: t_len });
                }
                Some(w) if w + 1 < n_words => {
                    seq.push(w + 1);
                    break;
                }
                Some(_) => {}
            }
        }
    }
}

fn finish(
    best: Option<(f64, Vec<usize>, f64, Vec<usize>)>,
    trie: &LexiconTrie,
    sil: usize,
    opts: &DecoderOptions,
) -> Option<DecodeResult> {
    let (objective, seq, lm_raw, path) = best?;
    let silence_count = path.iter().filter(|&&l| l == sil).count();
    Some(DecodeResult {
        words: seq.iter().map(|&w| trie.word(w).to_string()).collect(),
        am_component: objective - opts.alpha * lm_raw - opts.beta * seq.len() as f64
            + opts.gamma * silence_count as f64,
        letter_path: path,
        objective,
        lm_component: lm_raw,
        silence_count,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{UniformLm, Vocabulary};

    #[test]
    fn single_word_hand_objective() {
        let a = Alphabet::with_letters(&["a", "b"]).unwrap();
        let trie = LexiconTrie::from_words(&["a"], &a).unwrap();
        let lm = UniformLm::new(Vocabulary::new(&["a"]));
        let n = a.len();
        let mut rows = vec![vec![-4.0; n]; 2];
        rows[0][0] = 1.0;
        rows[1][0] = 1.0;
        let em = EmissionTable {
            scores: Table::from_rows(&rows),
            normalized: false,
        };
        let g = Table::zeros(n, n);
        let opts = DecoderOptions::unlimited(0.0, 0.0, 0.0);
        let r = exhaustive_decode(&em, &g, &a, &trie, &lm, &opts, &ExhaustiveLimits::default()).unwrap();
        assert_eq!(r.words, vec!["a"]);
        let expect = log_add(log_add(2.0, -3.0), -3.0);
        assert!((r.objective - expect).abs() < 1e-12);
    }

    #[test]
    fn capacity_limits() {
        let a = Alphabet::with_letters(&["a"]).unwrap();
        let trie = LexiconTrie::from_words(&["a"], &a).unwrap();
        let lm = UniformLm::new(Vocabulary::new(&["a"]));
        let em = EmissionTable {
            scores: Table::zeros(21, a.len()),
            normalized: false,
        };
        let r = exhaustive_decode(
            &em,
            &Table::zeros(a.len(), a.len()),
            &a,
            &trie,
            &lm,
            &DecoderOptions::unlimited(0.0, 0.0, 0.0),
            &ExhaustiveLimits::default(),
        );
        assert!(matches!(r, Err(Error::Capacity(_))));
    }
}
