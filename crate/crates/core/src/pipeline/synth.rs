//! The "spoken letters" task: every letter is a pure tone, words are runs of
//! tones, and words are separated by silence. Sentences come from a fixed
//! second-order Markov grammar over a small lexicon, so a language model with
//! two words of context predicts them better than one with a single word.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::manifest::{Manifest, ManifestEntry};
use super::wav::{quantize, write_wav};
use super::Utterance;
use crate::criterion::Alphabet;
use crate::decoder::LexiconEntry;
use crate::error::{Error, Result};
use crate::frontend::{ms_to_samples, Waveform};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticTaskSpec {
    pub letters: Vec<char>,
    pub tones_hz: Vec<f64>,
    pub letter_ms: f64,
    pub silence_ms: f64,
    /// Raised-cosine ramp at both ends of every tone.
    pub fade_ms: f64,
    pub amplitude: f64,
    /// Additive white noise at this signal-to-noise ratio; `None` is clean.
    pub snr_db: Option<f64>,
    pub lexicon: Vec<String>,
    pub min_words: usize,
    pub max_words: usize,
    /// Successors allowed after each two-word context.
    pub branching: usize,
    /// Seeds the grammar, not the utterances: corpora drawn with different
    /// seeds share one grammar.
    pub grammar_seed: u64,
    pub sample_rate: u32,
}

impl Default for SyntheticTaskSpec {
    fn default() -> Self {
        SyntheticTaskSpec {
            letters: vec!['a', 'b', 'c', 'd', 'e'],
            tones_hz: vec![300.0, 600.0, 1000.0, 1600.0, 2400.0],
            letter_ms: 120.0,
            silence_ms: 60.0,
            fade_ms: 10.0,
            amplitude: 0.5,
            snr_db: None,
            lexicon: [
                "ab", "be", "ace", "bad", "bed", "cab", "dab", "abed", "aced", "bead", "cede",
                "deca",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
            min_words: 1,
            max_words: 3,
            branching: 3,
            grammar_seed: 7,
            sample_rate: 16_000,
        }
    }
}

impl SyntheticTaskSpec {
    /// The same task with white noise at `snr_db`.
    pub fn noisy(snr_db: f64) -> Self {
        SyntheticTaskSpec {
            snr_db: Some(snr_db),
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.letters.is_empty() || self.letters.len() != self.tones_hz.len() {
            return Err(Error::Config("need exactly one tone per letter".into()));
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        for (i, &f) in self.tones_hz.iter().enumerate() {
            if !(f > 0.0 && f < nyquist) {
                return Err(Error::Config(format!("tone {f} Hz is outside (0, {nyquist})")));
            }
            if self.tones_hz[..i].contains(&f) {
                return Err(Error::Config(format!("tone {f} Hz is used twice")));
            }
        }
        for (i, c) in self.letters.iter().enumerate() {
            if self.letters[..i].contains(c) || c.is_whitespace() {
                return Err(Error::Config(format!("bad or repeated letter {c:?}")));
            }
        }
        let stride = 10.0;
        if self.letter_ms < stride || self.silence_ms < stride {
            return Err(Error::Config(
                "letters and silences must last at least one frame stride".into(),
            ));
        }
        if 2.0 * self.fade_ms > self.letter_ms || self.fade_ms < 0.0 {
            return Err(Error::Config("fades must fit inside a letter".into()));
        }
        if self.lexicon.is_empty() || self.min_words == 0 || self.min_words > self.max_words {
            return Err(Error::Config("empty lexicon or bad sentence length range".into()));
        }
        for w in &self.lexicon {
            if w.is_empty() || w.chars().any(|c| !self.letters.contains(&c)) {
                return Err(Error::Config(format!("word {w:?} uses letters outside the task")));
            }
        }
        if self.branching == 0 {
            return Err(Error::Config("branching must be >= 1".into()));
        }
        Ok(())
    }

    pub fn alphabet(&self) -> Alphabet {
        let letters: Vec<String> = self.letters.iter().map(|c| c.to_string()).collect();
        Alphabet::with_letters(&letters).expect("validated letters form an alphabet")
    }

    pub fn lexicon_entries(&self) -> Vec<LexiconEntry> {
        self.lexicon.iter().map(|w| LexiconEntry::from_word(w)).collect()
    }

    fn tone(&self, c: char) -> f64 {
        let i = self.letters.iter().position(|&l| l == c).expect("letter in task");
        self.tones_hz[i]
    }
}

// (w[-2], w[-1]) with `None` before the sentence start → (successor, cumulative weight)
type Transitions = HashMap<(Option<usize>, Option<usize>), Vec<(usize, f64)>>;

/// The sentence source: a sparse second-order Markov chain over word indices.
#[derive(Clone, Debug)]
pub struct Grammar {
    words: Vec<String>,
    table: Transitions,
    min_words: usize,
    max_words: usize,
    branching: usize,
    seed: u64,
}

impl Grammar {
    pub fn new(spec: &SyntheticTaskSpec) -> Result<Self> {
        spec.validate()?;
        Ok(Grammar {
            words: spec.lexicon.clone(),
            table: HashMap::new(),
            min_words: spec.min_words,
            max_words: spec.max_words,
            branching: spec.branching.min(spec.lexicon.len()),
            seed: spec.grammar_seed,
        })
    }

    /// Successor distribution for a context, derived from the grammar seed alone.
    fn successors(&mut self, ctx: (Option<usize>, Option<usize>)) -> &[(usize, f64)] {
        let (n, k, seed) = (self.words.len(), self.branching, self.seed);
        self.table.entry(ctx).or_insert_with(|| {
            let code = |w: Option<usize>| w.map_or(0, |i| i as u64 + 1);
            let mut rng = StdRng::seed_from_u64(seed ^ (code(ctx.0) << 32) ^ (code(ctx.1) << 16));
            let picks = rand::seq::index::sample(&mut rng, n, k);
            let mut total = 0.0;
            let mut out = Vec::with_capacity(k);
            for w in picks.iter() {
                total += rng.gen_range(0.2..1.0);
                out.push((w, total));
            }
            for e in &mut out {
                e.1 /= total;
            }
            out
        })
    }

    pub fn sentence<R: Rng + ?Sized>(&mut self, rng: &mut R) -> String {
        let len = rng.gen_range(self.min_words..=self.max_words);
        let mut ctx = (None, None);
        let mut out = Vec::with_capacity(len);
        for _ in 0..len {
            let u: f64 = rng.gen();
            let succ = self.successors(ctx);
            let w = succ.iter().find(|e| u < e.1).unwrap_or(succ.last().expect("non-empty")).0;
            out.push(w);
            ctx = (ctx.1, Some(w));
        }
        out.iter().map(|&w| self.words[w].as_str()).collect::<Vec<_>>().join(" ")
    }
}

/// Renders a transcript as tones and silences, plus white noise when `spec.snr_db` is set.
pub fn synthesize_utterance<R: Rng + ?Sized>(
    spec: &SyntheticTaskSpec,
    text: &str,
    rng: &mut R,
) -> Waveform {
    let rate = spec.sample_rate;
    let letter = ms_to_samples(spec.letter_ms, rate);
    let silence = ms_to_samples(spec.silence_ms, rate);
    let fade = ms_to_samples(spec.fade_ms, rate);
    let mut samples = vec![0.0; silence];
    for (i, word) in text.split_whitespace().enumerate() {
        if i > 0 {
            samples.extend(std::iter::repeat_n(0.0, silence));
        }
        for c in word.chars() {
            let hz = spec.tone(c);
            let phase = rng.gen_range(0.0..2.0 * PI);
            let amp = spec.amplitude * rng.gen_range(0.7..1.0);
            for t in 0..letter {
                let ramp = if fade == 0 {
                    1.0
                } else {
                    let edge = t.min(letter - 1 - t) as f64 / fade as f64;
                    if edge >= 1.0 {
                        1.0
                    } else {
                        0.5 - 0.5 * (PI * edge).cos()
                    }
                };
                let x = 2.0 * PI * hz * t as f64 / rate as f64 + phase;
                samples.push(amp * ramp * x.sin());
            }
        }
    }
    samples.extend(std::iter::repeat_n(0.0, silence));
    if let Some(snr) = spec.snr_db {
        let power = samples.iter().map(|s| s * s).sum::<f64>() / samples.len() as f64;
        let sd = (power / 10f64.powf(snr / 10.0)).sqrt();
        if sd > 0.0 {
            let noise = Normal::new(0.0, sd).expect("positive deviation");
            for s in &mut samples {
                *s += noise.sample(rng);
            }
        }
    }
    quantize(&mut samples);
    Waveform::new(samples, rate)
}

/// `count` utterances with ids `{prefix}-{index}`, fully determined by `seed`.
pub fn synthesize_corpus(
    spec: &SyntheticTaskSpec,
    count: usize,
    seed: u64,
    prefix: &str,
) -> Result<Vec<Utterance>> {
    let mut grammar = Grammar::new(spec)?;
    let mut rng = StdRng::seed_from_u64(seed);
    Ok((0..count)
        .map(|i| {
            let text = grammar.sentence(&mut rng);
            let wave = synthesize_utterance(spec, &text, &mut rng);
            Utterance {
                id: format!("{prefix}-{i:05}"),
                text,
                wave,
            }
        })
        .collect())
}

/// Sentences only, for language-model training text.
pub fn synthesize_text(spec: &SyntheticTaskSpec, count: usize, seed: u64) -> Result<Vec<String>> {
    let mut grammar = Grammar::new(spec)?;
    let mut rng = StdRng::seed_from_u64(seed);
    Ok((0..count).map(|_| grammar.sentence(&mut rng)).collect())
}

/// Writes `{dir}/{split}/*.wav` and `{dir}/{split}.jsonl`.
pub fn synthesize_dataset(
    spec: &SyntheticTaskSpec,
    count: usize,
    seed: u64,
    dir: &Path,
    split: &str,
) -> Result<Manifest> {
    let audio_dir = dir.join(split);
    std::fs::create_dir_all(&audio_dir).map_err(|e| Error::io(&audio_dir, e))?;
    let mut entries = Vec::with_capacity(count);
    for u in synthesize_corpus(spec, count, seed, split)? {
        let rel = Path::new(split).join(format!("{}.wav", u.id));
        write_wav(&dir.join(&rel), &u.wave)?;
        entries.push(ManifestEntry {
            id: u.id,
            audio: rel,
            text: u.text,
        });
    }
    let manifest = Manifest {
        split: Some(split.to_string()),
        entries,
    };
    manifest.save(&dir.join(format!("{split}.jsonl")))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pipeline::wav::read_wav;

    #[test]
    fn same_seed_same_audio() {
        let spec = SyntheticTaskSpec::noisy(5.0);
        let a = synthesize_corpus(&spec, 5, 3, "x").unwrap();
        let b = synthesize_corpus(&spec, 5, 3, "x").unwrap();
        assert_eq!(a, b);
        let c = synthesize_corpus(&spec, 5, 4, "x").unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn durations_follow_the_transcript() {
        let spec = SyntheticTaskSpec::default();
        let w = synthesize_utterance(&spec, "ab cab", &mut StdRng::seed_from_u64(0));
        // 5 letters × 1920 + 3 silences × 960
        assert_eq!(w.samples.len(), 5 * 1920 + 3 * 960);
        assert!(w.samples[..960].iter().all(|&s| s == 0.0));
    }

    #[test]
    fn noise_level_matches_snr() {
        let spec = SyntheticTaskSpec::default();
        let noisy = SyntheticTaskSpec::noisy(5.0);
        let text = "bead cede deca";
        let clean = synthesize_utterance(&spec, text, &mut StdRng::seed_from_u64(9));
        let dirty = synthesize_utterance(&noisy, text, &mut StdRng::seed_from_u64(9));
        let ps = clean.samples.iter().map(|s| s * s).sum::<f64>();
        let pn = clean
            .samples
            .iter()
            .zip(&dirty.samples)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>();
        let snr = 10.0 * (ps / pn).log10();
        assert!((snr - 5.0).abs() < 0.3, "snr {snr}");
    }

    #[test]
    fn grammar_is_shared_across_seeds_and_respects_lengths() {
        let spec = SyntheticTaskSpec::default();
        let a = synthesize_text(&spec, 300, 1).unwrap();
        let b = synthesize_text(&spec, 300, 2).unwrap();
        let first = |v: &[String]| {
            let mut s: Vec<String> = v.iter().map(|l| l.split(' ').next().unwrap().to_string()).collect();
            s.sort();
            s.dedup();
            s
        };
        // the sentence-initial context allows exactly `branching` words
        assert_eq!(first(&a), first(&b));
        assert_eq!(first(&a).len(), spec.branching);
        for s in &a {
            let n = s.split(' ').count();
            assert!((spec.min_words..=spec.max_words).contains(&n));
        }
    }

    #[test]
    fn dataset_on_disk() {
        let dir = tempfile::tempdir().unwrap();
        let spec = SyntheticTaskSpec::default();
        let m = synthesize_dataset(&spec, 4, 5, dir.path(), "dev").unwrap();
        let loaded = Manifest::load(&dir.path().join("dev.jsonl")).unwrap();
        assert_eq!(loaded.len(), 4);
        let ids: std::collections::HashSet<_> = m.entries.iter().map(|e| &e.id).collect();
        assert_eq!(ids.len(), 4);
        let again = synthesize_corpus(&spec, 4, 5, "dev").unwrap();
        assert_eq!(read_wav(&loaded.entries[2].audio).unwrap(), again[2].wave);
    }

    #[test]
    fn rejects_bad_specs() {
        let mut s = SyntheticTaskSpec::default();
        s.tones_hz[0] = 9000.0;
        assert!(s.validate().is_err());
        let mut s = SyntheticTaskSpec::default();
        s.tones_hz[1] = s.tones_hz[0];
        assert!(s.validate().is_err());
        let mut s = SyntheticTaskSpec::default();
        s.lexicon.push("xyz".into());
        assert!(s.validate().is_err());
    }
}
