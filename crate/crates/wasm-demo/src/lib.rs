//! Browser bindings for a few self-contained pieces of the toolkit: log-mel
//! features of a synthesized utterance, the spectrum and center frequency of
//! a Gabor filter, and lexicon-constrained beam search with an n-gram LM.

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rustfft::num_complex::Complex64;
use wasm_bindgen::prelude::*;

use convasr::acoustic::EmissionTable;
use convasr::decoder::{decode, DecoderOptions, LexiconTrie};
use convasr::frontend::{center_frequency, power_spectrum, FrontendConfig, MelFrontend};
use convasr::lm::{NGramModel, Vocabulary};
use convasr::math::Table;
use convasr::pipeline::synth::{synthesize_text, synthesize_utterance, SyntheticTaskSpec};

const RATE: u32 = 16_000;
const FFT: usize = 1024;

fn err(e: impl std::fmt::Display) -> JsError {
    JsError::new(&e.to_string())
}

/// Keeps the letters the synthetic task can render.
fn clean(spec: &SyntheticTaskSpec, text: &str) -> String {
    text.to_lowercase()
        .split_whitespace()
        .map(|w| w.chars().filter(|c| spec.letters.contains(c)).collect::<String>())
        .filter(|w| !w.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// A `channels × frames` matrix, row-major.
#[wasm_bindgen]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[wasm_bindgen]
impl Matrix {
    #[wasm_bindgen(getter)]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[wasm_bindgen(getter)]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[wasm_bindgen(getter)]
    pub fn data(&self) -> Vec<f64> {
        self.data.clone()
    }
}

/// Synthesizes `text` (letters a to e) and returns its normalized log-mel features.
/// `snr_db` below 100 adds white noise at that SNR.
#[wasm_bindgen]
pub fn mel_features(text: &str, snr_db: f64, n_mels: usize, seed: u64) -> Result<Matrix, JsError> {
    let mut spec = SyntheticTaskSpec::default();
    if snr_db < 100.0 {
        spec.snr_db = Some(snr_db);
    }
    let text = clean(&spec, text);
    if text.is_empty() {
        return Err(JsError::new("type at least one of the letters a, b, c, d, e"));
    }
    let wave = synthesize_utterance(&spec, &text, &mut StdRng::seed_from_u64(seed));
    let fe = MelFrontend::new(n_mels, FrontendConfig::default()).map_err(err)?;
    let f = fe.forward(&wave).map_err(err)?;
    Ok(Matrix {
        rows: f.channels(),
        cols: f.frames(),
        data: f.values.into_vec(),
    })
}

/// Power spectrum of a Gabor filter, plus where the center-frequency estimate lands.
#[wasm_bindgen]
pub struct FilterResponse {
    spectrum: Vec<f64>,
    bin_hz: f64,
    center_hz: f64,
}

#[wasm_bindgen]
impl FilterResponse {
    #[wasm_bindgen(getter)]
    pub fn spectrum(&self) -> Vec<f64> {
        self.spectrum.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn bin_hz(&self) -> f64 {
        self.bin_hz
    }

    #[wasm_bindgen(getter)]
    pub fn center_hz(&self) -> f64 {
        self.center_hz
    }
}

/// A 25 ms complex Gabor kernel tuned to `freq_hz` with a Gaussian envelope of
/// standard deviation `sigma_ms`.
#[wasm_bindgen]
pub fn gabor_response(freq_hz: f64, sigma_ms: f64) -> Result<FilterResponse, JsError> {
    if !(0.0..=RATE as f64 / 2.0).contains(&freq_hz) || sigma_ms <= 0.0 {
        return Err(JsError::new("frequency must lie in [0, 8000] Hz and sigma must be positive"));
    }
    let width = 400;
    let sigma = sigma_ms * RATE as f64 / 1000.0;
    let mid = (width - 1) as f64 / 2.0;
    let kernel: Vec<Complex64> = (0..width)
        .map(|t| {
            let d = t as f64 - mid;
            let env = (-0.5 * (d / sigma).powi(2)).exp();
            Complex64::from_polar(env, 2.0 * std::f64::consts::PI * freq_hz * d / RATE as f64)
        })
        .collect();
    Ok(FilterResponse {
        spectrum: power_spectrum(&kernel, FFT),
        bin_hz: RATE as f64 / FFT as f64,
        center_hz: center_frequency(&kernel, RATE).map_err(err)?,
    })
}

#[wasm_bindgen]
pub struct Decoded {
    transcript: String,
    greedy: String,
    objective: f64,
}

#[wasm_bindgen]
impl Decoded {
    #[wasm_bindgen(getter)]
    pub fn transcript(&self) -> String {
        self.transcript.clone()
    }

    /// Frame-wise argmax letters before the lexicon and LM are applied.
    #[wasm_bindgen(getter)]
    pub fn greedy(&self) -> String {
        self.greedy.clone()
    }

    #[wasm_bindgen(getter)]
    pub fn objective(&self) -> f64 {
        self.objective
    }
}

/// Builds noisy emissions for `text` (four frames per letter, two per
/// silence) and decodes them against the synthetic lexicon and a trigram LM
/// estimated from the synthetic grammar.
#[wasm_bindgen]
pub fn decode_noisy(text: &str, noise: f64, alpha: f64, beta: f64, gamma: f64, seed: u64) -> Result<Decoded, JsError> {
    let spec = SyntheticTaskSpec::default();
    let text = clean(&spec, text);
    let alphabet = spec.alphabet();
    let sil = alphabet.silence();
    let mut path = vec![sil, sil];
    for (i, word) in text.split_whitespace().enumerate() {
        if i > 0 {
            path.extend([sil, sil]);
        }
        for l in alphabet.letters_of(word).map_err(err)? {
            path.extend([l; 4]);
        }
    }
    path.extend([sil, sil]);

    let mut rng = StdRng::seed_from_u64(seed);
    let mut scores = Table::zeros(path.len(), alphabet.len());
    for (t, &l) in path.iter().enumerate() {
        for c in 0..alphabet.len() {
            let target = if c == l { 2.0 } else { 0.0 };
            scores.set(t, c, target + noise.max(0.0) * rng.gen_range(-1.0..1.0));
        }
    }
    let greedy: String = (0..scores.rows())
        .map(|t| {
            let row = scores.row(t);
            let best = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap_or(sil);
            if best == sil { "_".to_string() } else { alphabet.token(best).to_string() }
        })
        .collect();
    let emissions = EmissionTable {
        scores,
        normalized: false,
    };

    let vocab = Vocabulary::new(&spec.lexicon);
    let corpus: Vec<Vec<usize>> = synthesize_text(&spec, 2000, 0)
        .map_err(err)?
        .iter()
        .map(|s| vocab.encode_sentence(s))
        .collect();
    let lm = NGramModel::estimate(&corpus, &vocab, 3, 0.5).map_err(err)?;
    let trie = LexiconTrie::build(&spec.lexicon_entries(), &alphabet).map_err(err)?;
    let transitions = Table::zeros(alphabet.len(), alphabet.len());
    let opts = DecoderOptions {
        alpha,
        beta,
        gamma,
        beam_size: 200,
        ..DecoderOptions::default()
    };
    let r = decode(&emissions, &transitions, &alphabet, &trie, &lm, &opts).map_err(err)?;
    Ok(Decoded {
        transcript: r.transcript(),
        greedy,
        objective: r.objective,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn features_have_mel_rows() {
        let m = mel_features("bad cab", 200.0, 24, 0).ok().unwrap();
        assert_eq!(m.rows, 24);
        assert_eq!(m.data.len(), m.rows * m.cols);
    }

    #[test]
    fn gabor_center_tracks_tuning() {
        let r = gabor_response(1000.0, 3.0).ok().unwrap();
        assert!((r.center_hz - 1000.0).abs() <= r.bin_hz);
        assert_eq!(r.spectrum.len(), FFT / 2 + 1);
    }

    #[test]
    fn clean_emissions_decode_exactly() {
        let d = decode_noisy("bad cab", 0.0, 0.5, 1.0, 0.0, 0).ok().unwrap();
        assert_eq!(d.transcript, "bad cab");
        assert!(d.greedy.starts_with("__bbbb"));
    }
}
