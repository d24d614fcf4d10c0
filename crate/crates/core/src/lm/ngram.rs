use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::io::BufRead;

use super::{LanguageModel, LmState, Vocabulary, BOS};
use crate::error::{Error, Result};

const LN_10: f64 = std::f64::consts::LN_10;
/// ARPA convention for "never predicted" (used for `<s>`).
const ARPA_FLOOR_LOG10: f64 = -99.0;

/// Natural-log probability and back-off weight of one n-gram.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NGramEntry {
    pub logprob: f64,
    pub backoff: f64,
}

/// Back-off n-gram model. All scores are natural logs.
#[derive(Clone, Debug, PartialEq)]
pub struct NGramModel {
    order: usize,
    vocab: Vocabulary,
    /// `tables[k-1]` holds the k-grams.
    tables: Vec<HashMap<Vec<usize>, NGramEntry>>,
}

fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}

fn parse_f64(s: &str, line: usize) -> Result<f64> {
    s.parse::<f64>()
        .map_err(|_| parse_err(line, format!("expected a number, found {s:?}")))
}

impl NGramModel {
    pub fn order(&self) -> usize {
        self.order
    }

    pub fn num_entries(&self, n: usize) -> usize {
        self.tables.get(n - 1).map_or(0, HashMap::len)
    }

    pub fn entry(&self, ngram: &[usize]) -> Option<&NGramEntry> {
        self.tables.get(ngram.len().checked_sub(1)?)?.get(ngram)
    }

    /// Parses ARPA text (log10 values are converted to natural logs).
    pub fn load_arpa<R: BufRead>(reader: R) -> Result<Self> {
        let mut lines = Vec::new();
        for (i, line) in reader.lines().enumerate() {
            lines.push((i + 1, line.map_err(|e| parse_err(i + 1, e.to_string()))?));
        }
        Self::parse_lines(&lines)
    }

    pub fn from_arpa_str(text: &str) -> Result<Self> {
        Self::load_arpa(text.as_bytes())
    }

    fn parse_lines(lines: &[(usize, String)]) -> Result<Self> {
        let mut it = lines
            .iter()
            .map(|(n, l)| (*n, l.trim()))
            .filter(|(_, l)| !l.is_empty())
            .peekable();
        // header may be preceded by free text
        loop {
            match it.next() {
                Some((_, "\\data\\")) => break,
                Some(_) => continue,
                None => return Err(parse_err(lines.len(), "missing \\data\\ header")),
            }
        }
        let mut declared: Vec<usize> = Vec::new();
        while let Some(&(n, l)) = it.peek() {
            let Some(rest) = l.strip_prefix("ngram ") else { break };
            let (k, count) = rest
                .split_once('=')
                .ok_or_else(|| parse_err(n, format!("malformed count line {l:?}")))?;
            let k: usize = k
                .trim()
                .parse()
                .map_err(|_| parse_err(n, format!("bad order in {l:?}")))?;
            let count: usize = count
                .trim()
                .parse()
                .map_err(|_| parse_err(n, format!("bad count in {l:?}")))?;
            if k != declared.len() + 1 {
                return Err(parse_err(n, format!("expected ngram {} count, found {k}", declared.len() + 1)));
            }
            declared.push(count);
            it.next();
        }
        if declared.is_empty() {
            return Err(parse_err(
                it.peek().map_or(lines.len(), |x| x.0),
                "no ngram counts in \\data\\ section",
            ));
        }
        let order = declared.len();
        let mut raw: Vec<Vec<(Vec<String>, f64, f64)>> = vec![Vec::new(); order];
        let mut section: Option<(usize, usize)> = None; // (order, header line)
        let mut saw_end = false;
        for (n, l) in it {
            if l == "\\end\\" {
                saw_end = true;
                break;
            }
            if l.starts_with('\\') {
                let k = l
                    .strip_prefix('\\')
                    .and_then(|s| s.strip_suffix("-grams:"))
                    .and_then(|s| s.parse::<usize>().ok())
                    .ok_or_else(|| parse_err(n, format!("malformed section header {l:?}")))?;
                if k == 0 || k > order {
                    return Err(parse_err(n, format!("section \\{k}-grams: not declared in \\data\\")));
                }
                if let Some((prev, _)) = section {
                    if k != prev + 1 {
                        return Err(parse_err(n, format!("section \\{k}-grams: out of order")));
                    }
                } else if k != 1 {
                    return Err(parse_err(n, "first section must be \\1-grams:"));
                }
                section = Some((k, n));
                continue;
            }
            let (k, _) = section.ok_or_else(|| parse_err(n, "entry outside of an n-gram section"))?;
            let fields: Vec<&str> = l.split_whitespace().collect();
            if fields.len() != k + 1 && fields.len() != k + 2 {
                return Err(parse_err(
                    n,
                    format!("{k}-gram entry needs {} or {} fields, found {}", k + 1, k + 2, fields.len()),
                ));
            }
            let lp = parse_f64(fields[0], n)?;
            let bow = if fields.len() == k + 2 {
                parse_f64(fields[k + 1], n)?
            } else {
                0.0
            };
            if lp > 0.0 {
                return Err(parse_err(n, format!("log10 probability {lp} is positive")));
            }
            raw[k - 1].push((fields[1..=k].iter().map(|s| s.to_string()).collect(), lp, bow));
        }
        if !saw_end {
            return Err(parse_err(lines.len(), "missing \\end\\ marker"));
        }
        for (k, entries) in raw.iter().enumerate() {
            if entries.len() != declared[k] {
                return Err(parse_err(
                    lines.len(),
                    format!(
                        "section \\{}-grams: declares {} entries in \\data\\ but contains {}",
                        k + 1,
                        declared[k],
                        entries.len()
                    ),
                ));
            }
        }
        let words: Vec<&str> = raw[0].iter().map(|(t, _, _)| t[0].as_str()).collect();
        let vocab = Vocabulary::new(&words);
        let mut tables: Vec<HashMap<Vec<usize>, NGramEntry>> = vec![HashMap::new(); order];
        for (k, entries) in raw.into_iter().enumerate() {
            for (toks, lp, bow) in entries {
                let ids: Vec<usize> = toks
                    .iter()
                    .map(|t| {
                        vocab.get(t).ok_or_else(|| {
                            Error::Vocabulary(format!("{}-gram uses {t:?} which has no unigram", k + 1))
                        })
                    })
                    .collect::<Result<_>>()?;
                if k > 0 && !tables[k - 1].contains_key(&ids[..k]) {
                    return Err(Error::Vocabulary(format!(
                        "context {:?} of a {}-gram is missing from the {}-grams",
                        &toks[..k],
                        k + 1,
                        k
                    )));
                }
                tables[k].insert(
                    ids,
                    NGramEntry {
                        logprob: lp * LN_10,
                        backoff: bow * LN_10,
                    },
                );
            }
        }
        Ok(NGramModel {
            order,
            vocab,
            tables,
        })
    }

    /// Back-off recursion: use the full n-gram if present, otherwise the
    /// context's back-off weight plus the score under the shortened context.
    pub fn logprob(&self, context: &[usize], word: usize) -> f64 {
        let max_ctx = self.order - 1;
        let ctx = &context[context.len().saturating_sub(max_ctx)..];
        let word = if self.tables[0].contains_key(&[word][..]) {
            word
        } else {
            self.vocab.unk()
        };
        let mut acc = 0.0;
        let mut key: Vec<usize> = Vec::with_capacity(ctx.len() + 1);
        for start in 0..=ctx.len() {
            let h = &ctx[start..];
            key.clear();
            key.extend_from_slice(h);
            key.push(word);
            if let Some(e) = self.tables[h.len()].get(&key) {
                return acc + e.logprob;
            }
            if !h.is_empty() {
                if let Some(e) = self.tables[h.len() - 1].get(h) {
                    acc += e.backoff;
                }
            }
        }
        acc + ARPA_FLOOR_LOG10 * LN_10
    }

    /// Absolute-discounting back-off estimate from a tokenized corpus.
    ///
    /// Unigrams are add-one smoothed over every predictable token, so every
    /// conditional distribution sums to one.
    pub fn estimate(corpus: &[Vec<usize>], vocab: &Vocabulary, order: usize, discount: f64) -> Result<Self> {
        if order == 0 {
            return Err(Error::Config("n-gram order must be >= 1".into()));
        }
        if !(0.0..1.0).contains(&discount) {
            return Err(Error::Config("discount must be in [0, 1)".into()));
        }
        let (bos, eos) = (vocab.bos(), vocab.eos());
        let mut counts: Vec<BTreeMap<Vec<usize>, f64>> = vec![BTreeMap::new(); order];
        for s in corpus {
            let mut padded = Vec::with_capacity(s.len() + 2);
            padded.push(bos);
            padded.extend_from_slice(s);
            padded.push(eos);
            for k in 1..=order {
                for i in 0..padded.len().saturating_sub(k - 1) {
                    let g = &padded[i..i + k];
                    if k == 1 && g[0] == bos {
                        continue;
                    }
                    *counts[k - 1].entry(g.to_vec()).or_insert(0.0) += 1.0;
                }
            }
        }
        let mut model = NGramModel {
            order,
            vocab: vocab.clone(),
            tables: vec![HashMap::new(); order],
        };
        let predictable: Vec<usize> = vocab.predictable().collect();
        let total: f64 = counts[0].values().sum();
        let denom = total + predictable.len() as f64;
        for &w in &predictable {
            let c = counts[0].get(&vec![w]).copied().unwrap_or(0.0);
            model.tables[0].insert(
                vec![w],
                NGramEntry {
                    logprob: ((c + 1.0) / denom).ln(),
                    backoff: 0.0,
                },
            );
        }
        model.tables[0].insert(
            vec![bos],
            NGramEntry {
                logprob: ARPA_FLOOR_LOG10 * LN_10,
                backoff: 0.0,
            },
        );
        for k in 2..=order {
            let mut by_ctx: BTreeMap<Vec<usize>, Vec<(usize, f64)>> = BTreeMap::new();
            for (g, &c) in &counts[k - 1] {
                by_ctx.entry(g[..k - 1].to_vec()).or_default().push((g[k - 1], c));
            }
            for (ctx, followers) in by_ctx {
                let c_ctx: f64 = followers.iter().map(|x| x.1).sum();
                let mut seen_lower = 0.0;
                for &(w, c) in &followers {
                    let p = (c - discount) / c_ctx;
                    seen_lower += model.logprob(&ctx[1..], w).exp();
                    let mut key = ctx.clone();
                    key.push(w);
                    model.tables[k - 1].insert(
                        key,
                        NGramEntry {
                            logprob: p.ln(),
                            backoff: 0.0,
                        },
                    );
                }
                let left = discount * followers.len() as f64 / c_ctx;
                let bow = if seen_lower < 1.0 && left > 0.0 {
                    (left / (1.0 - seen_lower)).ln()
                } else {
                    0.0
                };
                if let Some(e) = model.tables[k - 2].get_mut(&ctx) {
                    e.backoff = bow;
                }
            }
        }
        Ok(model)
    }

    /// ARPA text with log10 values, entries sorted for reproducible output.
    pub fn to_arpa(&self) -> String {
        let mut out = String::from("\\data\\\n");
        for k in 1..=self.order {
            let _ = writeln!(out, "ngram {k}={}", self.tables[k - 1].len());
        }
        for k in 1..=self.order {
            let _ = writeln!(out, "\n\\{k}-grams:");
            let mut entries: Vec<(Vec<&str>, &NGramEntry)> = self.tables[k - 1]
                .iter()
                .map(|(ids, e)| (ids.iter().map(|&i| self.vocab.token(i)).collect(), e))
                .collect();
            entries.sort_by(|a, b| a.0.cmp(&b.0));
            for (toks, e) in entries {
                let _ = write!(out, "{}\t{}", e.logprob / LN_10, toks.join(" "));
                if k < self.order {
                    let _ = write!(out, "\t{}", e.backoff / LN_10);
                }
                out.push('\n');
            }
        }
        out.push_str("\n\\end\\\n");
        out
    }
}

impl LanguageModel for NGramModel {
    fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    fn state_for_history(&self, history: &[usize]) -> LmState {
        let keep = self.order - 1;
        LmState(history[history.len().saturating_sub(keep)..].to_vec())
    }

    fn score(&self, state: &LmState, token: usize) -> (f64, LmState) {
        let lp = self.logprob(&state.0, token);
        let mut next = state.0.clone();
        next.push(token);
        (lp, self.state_for_history(&next))
    }
}

impl NGramModel {
    /// `<s>` followed by `words`, as token ids.
    pub fn history_of(&self, words: &[&str]) -> Vec<usize> {
        let mut h = vec![self.vocab.id(BOS)];
        h.extend(words.iter().map(|w| self.vocab.id(w)));
        h
    }
}
