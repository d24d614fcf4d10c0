use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;

use super::{instance_normalize, FeatureMap, FrontendConfig, Waveform};
use crate::error::{Error, Result};
use crate::math::Table;

pub fn hz_to_mel(hz: f64) -> f64 {
    2595.0 * (1.0 + hz / 700.0).log10()
}

pub fn mel_to_hz(mel: f64) -> f64 {
    700.0 * (10f64.powf(mel / 2595.0) - 1.0)
}

/// Fixed log-mel baseline sharing the learnable front-end's frame geometry.
///
/// Frame `n` is a Hamming-windowed 25 ms slice centered inside the span that
/// the learnable front-end's frame `n` covers, so both produce the same
/// number of frames for every input length.
#[derive(Clone, Debug)]
pub struct MelFrontend {
    pub n_mels: usize,
    pub geometry: FrontendConfig,
    window: Vec<f64>,
    n_fft: usize,
    /// `n_mels × (n_fft/2 + 1)` triangular weights.
    filters: Table,
    centers_hz: Vec<f64>,
}

impl MelFrontend {
    pub fn new(n_mels: usize, geometry: FrontendConfig) -> Result<Self> {
        geometry.validate()?;
        if n_mels == 0 {
            return Err(Error::Config("n_mels must be >= 1".into()));
        }
        let wlen = geometry.filter_samples();
        let window: Vec<f64> = if wlen == 1 {
            vec![1.0]
        } else {
            (0..wlen)
                .map(|i| 0.54 - 0.46 * (2.0 * PI * i as f64 / (wlen - 1) as f64).cos())
                .collect()
        };
        let n_fft = wlen.next_power_of_two();
        let rate = geometry.sample_rate as f64;
        let nyquist = rate / 2.0;
        let top = hz_to_mel(nyquist);
        let points: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(top * i as f64 / (n_mels + 1) as f64))
            .collect();
        let bins = n_fft / 2 + 1;
        let mut filters = Table::zeros(n_mels, bins);
        for m in 0..n_mels {
            let (lo, mid, hi) = (points[m], points[m + 1], points[m + 2]);
            for b in 0..bins {
                let hz = b as f64 * rate / n_fft as f64;
                let w = if hz > lo && hz <= mid {
                    (hz - lo) / (mid - lo)
                } else if hz > mid && hz < hi {
                    (hi - hz) / (hi - mid)
                } else {
                    0.0
                };
                filters.set(m, b, w);
            }
        }
        Ok(MelFrontend {
            n_mels,
            geometry,
            window,
            n_fft,
            filters,
            centers_hz: points[1..=n_mels].to_vec(),
        })
    }

    pub fn center_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    /// Log mel energies before normalization, `n_mels × frames`.
    pub fn log_mel(&self, x: &Waveform) -> Result<Table> {
        if x.samples.is_empty() {
            return Err(Error::EmptySignal);
        }
        let g = &self.geometry;
        if x.sample_rate != g.sample_rate {
            return Err(Error::Config(format!(
                "waveform sample rate {} does not match mel rate {}",
                x.sample_rate, g.sample_rate
            )));
        }
        let frames = g.frame_count(x.samples.len());
        if frames == 0 {
            return Err(Error::InsufficientInput {
                needed: g.min_samples(),
                got: x.samples.len(),
            });
        }
        let wlen = self.window.len();
        let offset = (g.min_samples() - wlen) / 2;
        let stride = g.stride_samples();
        let fft = FftPlanner::new().plan_fft_forward(self.n_fft);
        let bins = self.n_fft / 2 + 1;
        let mut out = Table::zeros(self.n_mels, frames);
        let mut buf = vec![Complex64::new(0.0, 0.0); self.n_fft];
        let mut power = vec![0.0; bins];
        for n in 0..frames {
            let start = n * stride + offset;
            buf.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            for (i, w) in self.window.iter().enumerate() {
                buf[i] = Complex64::new(x.samples[start + i] * w, 0.0);
            }
            fft.process(&mut buf);
            for (p, c) in power.iter_mut().zip(&buf) {
                *p = c.norm_sqr();
            }
            for m in 0..self.n_mels {
                let e: f64 = self
                    .filters
                    .row(m)
                    .iter()
                    .zip(&power)
                    .map(|(a, b)| a * b)
                    .sum();
                out.set(m, n, (e + g.log_epsilon).ln());
            }
        }
        Ok(out)
    }

    pub fn forward(&self, x: &Waveform) -> Result<FeatureMap> {
        let logged = self.log_mel(x)?;
        Ok(FeatureMap {
            values: instance_normalize(&logged, self.geometry.norm_epsilon),
            frame_stride_ms: self.geometry.stride_ms,
        })
    }
}

/// Log-mel features with the default 25 ms / 10 ms geometry at the waveform's rate.
pub fn mel_frontend(x: &Waveform, n_mels: usize) -> Result<FeatureMap> {
    let geometry = FrontendConfig {
        sample_rate: x.sample_rate,
        ..FrontendConfig::default()
    };
    MelFrontend::new(n_mels, geometry)?.forward(x)
}
