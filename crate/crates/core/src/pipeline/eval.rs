use serde::{Deserialize, Serialize};

use super::metrics::{edit_distance, letters, percent, words, EditCounts};
use super::train::AsrModel;
use super::Utterance;
use crate::acoustic::EmissionTable;
use crate::criterion::Alphabet;
use crate::decoder::{decode, DecoderOptions, LexiconTrie};
use crate::error::Result;
use crate::lm::LanguageModel;
use crate::math::Table;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtteranceResult {
    pub id: String,
    pub reference: String,
    pub hypothesis: String,
    pub words: EditCounts,
    pub reference_words: usize,
    pub letters: EditCounts,
    pub reference_letters: usize,
    /// Set when decoding failed; the hypothesis is then empty.
    pub error: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub wer: f64,
    pub cer: f64,
    pub substitutions: usize,
    pub deletions: usize,
    pub insertions: usize,
    pub reference_words: usize,
    pub failures: usize,
    pub utterances: Vec<UtteranceResult>,
}

impl EvalReport {
    pub fn from_results(utterances: Vec<UtteranceResult>) -> Self {
        let mut words_total = EditCounts::default();
        let mut letters_total = EditCounts::default();
        let (mut nw, mut nl, mut failures) = (0, 0, 0);
        for u in &utterances {
            words_total.add(&u.words);
            letters_total.add(&u.letters);
            nw += u.reference_words;
            nl += u.reference_letters;
            failures += usize::from(u.error.is_some());
        }
        EvalReport {
            wer: percent(words_total.errors(), nw),
            cer: percent(letters_total.errors(), nl),
            substitutions: words_total.substitutions,
            deletions: words_total.deletions,
            insertions: words_total.insertions,
            reference_words: nw,
            failures,
            utterances,
        }
    }

    /// Per-utterance rows as CSV.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("id,reference,hypothesis,substitutions,deletions,insertions,reference_words,error\n");
        for u in &self.utterances {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                u.id,
                u.reference,
                u.hypothesis,
                u.words.substitutions,
                u.words.deletions,
                u.words.insertions,
                u.reference_words,
                u.error.as_deref().unwrap_or("").replace(',', ";")
            ));
        }
        out
    }
}

/// Scores one hypothesis against its reference.
pub fn score_utterance(id: &str, reference: &str, hypothesis: &str, error: Option<String>) -> UtteranceResult {
    let (rw, hw) = (words(reference), words(hypothesis));
    let (rl, hl) = (letters(reference), letters(hypothesis));
    UtteranceResult {
        id: id.to_string(),
        reference: reference.to_string(),
        hypothesis: hypothesis.to_string(),
        words: edit_distance(&rw, &hw),
        reference_words: rw.len(),
        letters: edit_distance(&rl, &hl),
        reference_letters: rl.len(),
        error,
    }
}

/// Decoded WER/CER over precomputed emissions `(id, emissions, reference)`.
pub fn evaluate_emissions<L: LanguageModel + ?Sized>(
    items: &[(String, EmissionTable, String)],
    transitions: &Table,
    alphabet: &Alphabet,
    trie: &LexiconTrie,
    lm: &L,
    opts: &DecoderOptions,
) -> Result<EvalReport> {
    opts.validate()?;
    let results = items
        .iter()
        .map(|(id, em, reference)| match decode(em, transitions, alphabet, trie, lm, opts) {
            Ok(r) => score_utterance(id, reference, &r.transcript(), None),
            Err(e) => score_utterance(id, reference, "", Some(e.to_string())),
        })
        .collect();
    Ok(EvalReport::from_results(results))
}

/// Runs the acoustic model over every utterance.
pub fn compute_emissions(
    model: &AsrModel,
    data: &[Utterance],
    normalize: bool,
) -> Result<Vec<(String, EmissionTable, String)>> {
    data.iter()
        .map(|u| Ok((u.id.clone(), model.emissions(&u.wave, normalize)?, u.text.clone())))
        .collect()
}

pub fn evaluate<L: LanguageModel + ?Sized>(
    model: &AsrModel,
    data: &[Utterance],
    trie: &LexiconTrie,
    lm: &L,
    opts: &DecoderOptions,
) -> Result<EvalReport> {
    let items = compute_emissions(model, data, false)?;
    evaluate_emissions(&items, &model.transitions, &model.alphabet, trie, lm, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lm::{UniformLm, Vocabulary};

    /// Emissions that strongly favor one frame-level path.
    fn peaked(alphabet: &Alphabet, path: &[usize]) -> EmissionTable {
        let mut t = Table::filled(path.len(), alphabet.len(), -10.0);
        for (i, &l) in path.iter().enumerate() {
            t.set(i, l, 10.0);
        }
        EmissionTable {
            scores: t,
            normalized: false,
        }
    }

    fn setup() -> (Alphabet, LexiconTrie, UniformLm) {
        let a = Alphabet::with_letters(&["a", "b", "c"]).unwrap();
        let trie = LexiconTrie::from_words(&["ab", "ca"], &a).unwrap();
        let lm = UniformLm::new(Vocabulary::new(&["ab", "ca"]));
        (a, trie, lm)
    }

    #[test]
    fn perfect_emissions_give_zero_wer() {
        let (a, trie, lm) = setup();
        let s = a.silence();
        let items = vec![
            ("u1".to_string(), peaked(&a, &[s, 0, 1, s, 2, 0, s]), "ab ca".to_string()),
            ("u2".to_string(), peaked(&a, &[2, 2, 0, s]), "ca".to_string()),
        ];
        let g = Table::zeros(a.len(), a.len());
        let opts = DecoderOptions::default();
        let r = evaluate_emissions(&items, &g, &a, &trie, &lm, &opts).unwrap();
        assert_eq!(r.wer, 0.0);
        assert_eq!(r.cer, 0.0);
        let again = evaluate_emissions(&items, &g, &a, &trie, &lm, &opts).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn empty_hypotheses_are_all_deletions() {
        let (a, trie, lm) = setup();
        let s = a.silence();
        let items = vec![
            ("u1".to_string(), peaked(&a, &[s, s, s]), "ab ca".to_string()),
            ("u2".to_string(), peaked(&a, &[s, s]), "ab".to_string()),
        ];
        let g = Table::zeros(a.len(), a.len());
        let r = evaluate_emissions(&items, &g, &a, &trie, &lm, &DecoderOptions::default()).unwrap();
        assert_eq!(r.wer, 100.0);
        assert_eq!((r.deletions, r.substitutions, r.insertions), (3, 0, 0));
    }

    #[test]
    fn totals_are_sums_of_rows() {
        let rows = vec![
            score_utterance("a", "x y z", "x q", None),
            score_utterance("b", "p", "p r s", None),
            score_utterance("c", "m n", "", Some("beam is empty".into())),
        ];
        let r = EvalReport::from_results(rows.clone());
        let s: usize = rows.iter().map(|u| u.words.substitutions).sum();
        let d: usize = rows.iter().map(|u| u.words.deletions).sum();
        let i: usize = rows.iter().map(|u| u.words.insertions).sum();
        assert_eq!((r.substitutions, r.deletions, r.insertions), (s, d, i));
        assert_eq!(r.reference_words, 6);
        assert_eq!(r.failures, 1);
        assert!((r.wer - 100.0 * (s + d + i) as f64 / 6.0).abs() < 1e-12);
        assert_eq!(r.to_csv().lines().count(), 4);
    }
}
