use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::LearnableFrontend;
use crate::error::{Error, Result};
use crate::math::Table;

/// Center frequencies (ascending) and the matching power spectra, one row per filter.
#[derive(Clone, Debug, PartialEq)]
pub struct FilterAnalysis {
    pub center_frequencies: Vec<f64>,
    /// Original filter index of each sorted row.
    pub order: Vec<usize>,
    pub power_spectra: Table,
    pub bin_hz: Vec<f64>,
}

/// Power spectrum of a kernel zero-padded to `n_fft`, bins `0..=n_fft/2`.
///
/// The filterbank only ever sees real input, so each bin holds the mean of the
/// responses at `+f` and `-f` (the gain seen by a real sinusoid at `f`).
pub fn power_spectrum(kernel: &[Complex64], n_fft: usize) -> Vec<f64> {
    assert!(n_fft >= kernel.len() && n_fft >= 2);
    let mut buf = vec![Complex64::new(0.0, 0.0); n_fft];
    buf[..kernel.len()].copy_from_slice(kernel);
    FftPlanner::new().plan_fft_forward(n_fft).process(&mut buf);
    let half = n_fft / 2;
    (0..=half)
        .map(|k| {
            let pos = buf[k].norm_sqr();
            if k == 0 || (n_fft.is_multiple_of(2) && k == half) {
                pos
            } else {
                0.5 * (pos + buf[n_fft - k].norm_sqr())
            }
        })
        .collect()
}

fn analysis_fft_len(width: usize) -> usize {
    4 * width
}

/// Frequency (Hz) of the power-spectrum maximum, with a DFT four times the kernel width.
pub fn center_frequency(kernel: &[Complex64], sample_rate: u32) -> Result<f64> {
    if kernel.is_empty() || kernel.iter().all(|c| c.norm_sqr() == 0.0) {
        return Err(Error::DegenerateFilter);
    }
    let n = analysis_fft_len(kernel.len());
    let spec = power_spectrum(kernel, n);
    let (best, _) = spec
        .iter()
        .enumerate()
        .fold((0, f64::MIN), |acc, (i, &p)| if p > acc.1 { (i, p) } else { acc });
    Ok(best as f64 * sample_rate as f64 / n as f64)
}

/// Center frequencies for every filter, sorted ascending, with their spectra.
pub fn analyze_filters(fe: &LearnableFrontend) -> FilterAnalysis {
    let rate = fe.config.sample_rate;
    let n = analysis_fft_len(fe.filter_width());
    let mut rows: Vec<(f64, usize, Vec<f64>)> = (0..fe.num_filters())
        .map(|f| {
            let kernel = fe.filter(f);
            let spec = power_spectrum(&kernel, n);
            let center = center_frequency(&kernel, rate).unwrap_or(0.0);
            (center, f, spec)
        })
        .collect();
    rows.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let bins = n / 2 + 1;
    let mut power = Table::zeros(rows.len(), bins);
    for (r, (_, _, spec)) in rows.iter().enumerate() {
        power.row_mut(r).copy_from_slice(spec);
    }
    FilterAnalysis {
        center_frequencies: rows.iter().map(|r| r.0).collect(),
        order: rows.iter().map(|r| r.1).collect(),
        power_spectra: power,
        bin_hz: (0..bins).map(|k| k as f64 * rate as f64 / n as f64).collect(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::frontend::FrontendConfig;
    use crate::math::Table;
    use rand::SeedableRng;
    use std::f64::consts::PI;

    fn exponential(freq: f64, rate: f64, width: usize) -> Vec<Complex64> {
        (0..width)
            .map(|w| Complex64::from_polar(1.0, 2.0 * PI * freq * w as f64 / rate))
            .collect()
    }

    #[test]
    fn exponential_center() {
        let bin = 16_000.0 / 1600.0;
        let c = center_frequency(&exponential(2000.0, 16_000.0, 400), 16_000).unwrap();
        assert!((c - 2000.0).abs() <= bin);
    }

    #[test]
    fn cosine_and_dc_center() {
        let cos: Vec<Complex64> = (0..400)
            .map(|w| Complex64::new((2.0 * PI * 500.0 * w as f64 / 16_000.0).cos(), 0.0))
            .collect();
        let c = center_frequency(&cos, 16_000).unwrap();
        assert!((c - 500.0).abs() <= 10.0);
        let dc = vec![Complex64::new(1.0, 0.0); 400];
        assert_eq!(center_frequency(&dc, 16_000).unwrap(), 0.0);
        let zero = vec![Complex64::new(0.0, 0.0); 10];
        assert!(matches!(center_frequency(&zero, 16_000), Err(Error::DegenerateFilter)));
    }

    #[test]
    fn sorted_bank_of_exponentials() {
        let cfg = FrontendConfig {
            num_filters: 8,
            ..FrontendConfig::default()
        };
        let w = cfg.filter_samples();
        let mut re = Table::zeros(8, w);
        let mut im = Table::zeros(8, w);
        // filters listed in reverse order so the analysis has to sort them
        for f in 0..8 {
            let freq = 100.0 * (8 - f) as f64;
            for (j, c) in exponential(freq, 16_000.0, w).into_iter().enumerate() {
                re.set(f, j, c.re);
                im.set(f, j, c.im);
            }
        }
        let fe = LearnableFrontend::from_parts([-0.97, 1.0], re, im, cfg);
        let a = analyze_filters(&fe);
        for (i, c) in a.center_frequencies.iter().enumerate() {
            assert!((c - 100.0 * (i + 1) as f64).abs() <= 10.0, "{c}");
        }
        assert_eq!(a.order, (0..8).rev().collect::<Vec<_>>());
        assert_eq!(a.power_spectra.shape(), (8, 801));
        assert!(a.power_spectra.as_slice().iter().all(|&p| p >= 0.0));
    }

    #[test]
    fn random_bank_within_nyquist() {
        let mut rng = rand::rngs::StdRng::seed_from_u64(3);
        let cfg = FrontendConfig {
            num_filters: 1,
            ..FrontendConfig::default()
        };
        let fe = LearnableFrontend::new(cfg, &mut rng).unwrap();
        let a = analyze_filters(&fe);
        assert_eq!(a.center_frequencies.len(), 1);
        assert!((0.0..=8000.0).contains(&a.center_frequencies[0]));
    }
}
