//! Learnable raw-waveform front-end and a fixed log-mel baseline.
//!
//! The learnable chain is
//! pre-emphasis → complex filterbank → squared modulus → squared-Hanning
//! low-pass with decimation → log → per-channel mean/variance normalization.
//! Every stage has an exact backward pass; the low-pass window is a fixed
//! buffer and never receives a gradient.

mod analysis;
mod mel;

pub use analysis::{analyze_filters, center_frequency, power_spectrum, FilterAnalysis};
pub use mel::{hz_to_mel, mel_frontend, mel_to_hz, MelFrontend};

use std::cell::RefCell;
use std::f64::consts::PI;
use std::sync::Arc;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::Table;
use crate::optim::ParamSet;

/// Mono audio with amplitudes nominally in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform {
    pub samples: Vec<f64>,
    pub sample_rate: u32,
}

impl Waveform {
    pub fn new(samples: Vec<f64>, sample_rate: u32) -> Self {
        Waveform {
            samples,
            sample_rate,
        }
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }
}

/// Converts a duration to a whole number of samples.
pub fn ms_to_samples(ms: f64, sample_rate: u32) -> usize {
    (ms * sample_rate as f64 / 1000.0).round() as usize
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrontendConfig {
    pub num_filters: usize,
    pub sample_rate: u32,
    pub filter_width_ms: f64,
    pub lowpass_width_ms: f64,
    pub stride_ms: f64,
    pub log_epsilon: f64,
    pub norm_epsilon: f64,
}

impl Default for FrontendConfig {
    fn default() -> Self {
        FrontendConfig {
            num_filters: 40,
            sample_rate: 16_000,
            filter_width_ms: 25.0,
            lowpass_width_ms: 25.0,
            stride_ms: 10.0,
            log_epsilon: 1e-6,
            norm_epsilon: 1e-5,
        }
    }
}

impl FrontendConfig {
    pub fn filter_samples(&self) -> usize {
        ms_to_samples(self.filter_width_ms, self.sample_rate)
    }

    pub fn lowpass_samples(&self) -> usize {
        ms_to_samples(self.lowpass_width_ms, self.sample_rate)
    }

    pub fn stride_samples(&self) -> usize {
        ms_to_samples(self.stride_ms, self.sample_rate)
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_filters == 0 {
            return Err(Error::Config("num_filters must be >= 1".into()));
        }
        if self.sample_rate == 0 {
            return Err(Error::Config("sample_rate must be > 0".into()));
        }
        if self.filter_samples() == 0 || self.lowpass_samples() == 0 || self.stride_samples() == 0
        {
            return Err(Error::Config(
                "filter width, low-pass width and stride must each span at least one sample"
                    .into(),
            ));
        }
        if !(self.log_epsilon > 0.0 && self.norm_epsilon > 0.0) {
            return Err(Error::Config("epsilons must be positive".into()));
        }
        Ok(())
    }

    /// Number of output frames for a signal of `len` samples, or 0 if it is too short.
    pub fn frame_count(&self, len: usize) -> usize {
        frame_count(
            len,
            self.filter_samples(),
            self.lowpass_samples(),
            self.stride_samples(),
        )
    }

    /// Shortest signal producing one frame.
    pub fn min_samples(&self) -> usize {
        self.filter_samples() + self.lowpass_samples() - 1
    }
}

/// `floor((T_conv - W_lp) / stride) + 1` with `T_conv = len - W + 1`; zero when the input is too short.
pub fn frame_count(len: usize, filter: usize, lowpass: usize, stride: usize) -> usize {
    if len < filter {
        return 0;
    }
    let t_conv = len - filter + 1;
    if t_conv < lowpass {
        return 0;
    }
    (t_conv - lowpass) / stride + 1
}

/// Features laid out `channels × frames`.
#[derive(Clone, Debug, PartialEq)]
pub struct FeatureMap {
    pub values: Table,
    pub frame_stride_ms: f64,
}

impl FeatureMap {
    pub fn channels(&self) -> usize {
        self.values.rows()
    }

    pub fn frames(&self) -> usize {
        self.values.cols()
    }
}

/// Trainable front-end parameters plus the fixed low-pass window.
#[derive(Clone, Debug, PartialEq)]
pub struct LearnableFrontend {
    /// `[previous, current]`: `y[t] = k[1]·x[t] + k[0]·x[t-1]`.
    pub preemphasis: [f64; 2],
    pub filters_re: Table,
    pub filters_im: Table,
    lowpass_window: Vec<f64>,
    pub config: FrontendConfig,
}

/// Gradients of a scalar loss with respect to the trainable front-end parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct FrontendGrads {
    pub preemphasis: [f64; 2],
    pub filters_re: Table,
    pub filters_im: Table,
}

impl FrontendGrads {
    pub fn zeros(k: usize, width: usize) -> Self {
        FrontendGrads {
            preemphasis: [0.0; 2],
            filters_re: Table::zeros(k, width),
            filters_im: Table::zeros(k, width),
        }
    }

    pub fn accumulate(&mut self, other: &FrontendGrads) {
        self.preemphasis[0] += other.preemphasis[0];
        self.preemphasis[1] += other.preemphasis[1];
        add_into(self.filters_re.as_mut_slice(), other.filters_re.as_slice());
        add_into(self.filters_im.as_mut_slice(), other.filters_im.as_slice());
    }

    pub fn scale(&mut self, s: f64) {
        self.preemphasis[0] *= s;
        self.preemphasis[1] *= s;
        self.filters_re.as_mut_slice().iter_mut().for_each(|v| *v *= s);
        self.filters_im.as_mut_slice().iter_mut().for_each(|v| *v *= s);
    }
}

impl ParamSet for LearnableFrontend {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        vec![
            ("fe.preemphasis".into(), &self.preemphasis[..]),
            ("fe.filters_re".into(), self.filters_re.as_slice()),
            ("fe.filters_im".into(), self.filters_im.as_slice()),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.preemphasis[..],
            self.filters_re.as_mut_slice(),
            self.filters_im.as_mut_slice(),
        ]
    }
}

impl ParamSet for FrontendGrads {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        vec![
            ("fe.preemphasis".into(), &self.preemphasis[..]),
            ("fe.filters_re".into(), self.filters_re.as_slice()),
            ("fe.filters_im".into(), self.filters_im.as_slice()),
        ]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.preemphasis[..],
            self.filters_re.as_mut_slice(),
            self.filters_im.as_mut_slice(),
        ]
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    for (d, s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Squared Hanning window, endpoint-inclusive: `(0.5 - 0.5 cos(2πw/(n-1)))²`.
pub fn squared_hanning(n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0];
    }
    (0..n)
        .map(|w| {
            let h = 0.5 - 0.5 * (2.0 * PI * w as f64 / (n - 1) as f64).cos();
            h * h
        })
        .collect()
}

impl LearnableFrontend {
    /// Pre-emphasis at `[-0.97, 1]`, filters drawn from `N(0, 1/W)`.
    pub fn new<R: Rng + ?Sized>(config: FrontendConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let k = config.num_filters;
        let w = config.filter_samples();
        let dist = Normal::new(0.0, 1.0 / (w as f64).sqrt()).expect("valid normal");
        let re = (0..k * w).map(|_| dist.sample(rng)).collect();
        let im = (0..k * w).map(|_| dist.sample(rng)).collect();
        Ok(Self::from_parts(
            [-0.97, 1.0],
            Table::from_vec(k, w, re),
            Table::from_vec(k, w, im),
            config,
        ))
    }

    pub fn from_parts(
        preemphasis: [f64; 2],
        filters_re: Table,
        filters_im: Table,
        config: FrontendConfig,
    ) -> Self {
        assert_eq!(filters_re.shape(), filters_im.shape());
        let lowpass_window = squared_hanning(config.lowpass_samples());
        LearnableFrontend {
            preemphasis,
            filters_re,
            filters_im,
            lowpass_window,
            config,
        }
    }

    pub fn num_filters(&self) -> usize {
        self.filters_re.rows()
    }

    pub fn filter_width(&self) -> usize {
        self.filters_re.cols()
    }

    pub fn lowpass_window(&self) -> &[f64] {
        &self.lowpass_window
    }

    /// Complex coefficients of filter `f`.
    pub fn filter(&self, f: usize) -> Vec<Complex64> {
        self.filters_re
            .row(f)
            .iter()
            .zip(self.filters_im.row(f))
            .map(|(&re, &im)| Complex64::new(re, im))
            .collect()
    }

    pub fn forward(&self, x: &Waveform) -> Result<FeatureMap> {
        frontend_forward(x, self)
    }

    /// Plain gradient step; the low-pass window is untouched.
    pub fn apply_update(&mut self, delta: &FrontendGrads, scale: f64) {
        self.preemphasis[0] += scale * delta.preemphasis[0];
        self.preemphasis[1] += scale * delta.preemphasis[1];
        for (p, d) in self
            .filters_re
            .as_mut_slice()
            .iter_mut()
            .zip(delta.filters_re.as_slice())
        {
            *p += scale * d;
        }
        for (p, d) in self
            .filters_im
            .as_mut_slice()
            .iter_mut()
            .zip(delta.filters_im.as_slice())
        {
            *p += scale * d;
        }
    }

    pub fn all_finite(&self) -> bool {
        self.preemphasis.iter().all(|v| v.is_finite())
            && self.filters_re.all_finite()
            && self.filters_im.all_finite()
    }
}

thread_local! {
    static PLANNER: RefCell<FftPlanner<f64>> = RefCell::new(FftPlanner::new());
}

struct FftPair {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    n: usize,
}

impl FftPair {
    fn new(n: usize) -> Self {
        PLANNER.with(|p| {
            let mut p = p.borrow_mut();
            FftPair {
                fwd: p.plan_fft_forward(n),
                inv: p.plan_fft_inverse(n),
                n,
            }
        })
    }
}

/// `y[t] = kernel[1]·x[t] + kernel[0]·x[t-1]`, zero left padding.
pub fn preemphasize(x: &[f64], kernel: [f64; 2]) -> Result<Vec<f64>> {
    if x.is_empty() {
        return Err(Error::EmptySignal);
    }
    let mut y = Vec::with_capacity(x.len());
    let mut prev = 0.0;
    for &v in x {
        y.push(kernel[1] * v + kernel[0] * prev);
        prev = v;
    }
    Ok(y)
}

struct ConvTrace {
    fft: FftPair,
    x_spec: Vec<Complex64>,
    filter_specs: Vec<Vec<Complex64>>,
    re: Table,
    im: Table,
}

fn complex_conv(x: &[f64], re: &Table, im: &Table) -> Result<ConvTrace> {
    let width = re.cols();
    if re.shape() != im.shape() {
        return Err(Error::Dimension(
            "real and imaginary filter tables differ in shape".into(),
        ));
    }
    if x.len() < width {
        return Err(Error::InsufficientInput {
            needed: width,
            got: x.len(),
        });
    }
    let t_conv = x.len() - width + 1;
    let n = x.len().next_power_of_two();
    let fft = FftPair::new(n);
    let mut x_spec: Vec<Complex64> = x.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    x_spec.resize(n, Complex64::new(0.0, 0.0));
    fft.fwd.process(&mut x_spec);

    let k = re.rows();
    let mut out_re = Table::zeros(k, t_conv);
    let mut out_im = Table::zeros(k, t_conv);
    let mut filter_specs = Vec::with_capacity(k);
    let inv_n = 1.0 / n as f64;
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    for f in 0..k {
        // Reversed placement turns the convolution into the cross-correlation Σ_w h[w]·x[t+w].
        let mut spec = vec![Complex64::new(0.0, 0.0); n];
        for w in 0..width {
            spec[(n - w) % n] = Complex64::new(re.get(f, w), im.get(f, w));
        }
        fft.fwd.process(&mut spec);
        for ((b, xs), hs) in buf.iter_mut().zip(&x_spec).zip(&spec) {
            *b = xs * hs;
        }
        fft.inv.process(&mut buf);
        for t in 0..t_conv {
            out_re.set(f, t, buf[t].re * inv_n);
            out_im.set(f, t, buf[t].im * inv_n);
        }
        filter_specs.push(spec);
    }
    Ok(ConvTrace {
        fft,
        x_spec,
        filter_specs,
        re: out_re,
        im: out_im,
    })
}

/// Squared modulus of the complex filterbank response, valid positions, stride 1.
pub fn complex_conv_power(x: &[f64], re: &Table, im: &Table) -> Result<Table> {
    let trace = complex_conv(x, re, im)?;
    Ok(modulus_sq(&trace.re, &trace.im))
}

fn modulus_sq(re: &Table, im: &Table) -> Table {
    let data = re
        .as_slice()
        .iter()
        .zip(im.as_slice())
        .map(|(a, b)| a * a + b * b)
        .collect();
    Table::from_vec(re.rows(), re.cols(), data)
}

/// `out[f][n] = Σ_w window[w]·p[f][n·stride + w]`.
pub fn lowpass_decimate(p: &Table, window: &[f64], stride: usize) -> Result<Table> {
    let wl = window.len();
    if stride == 0 || wl == 0 {
        return Err(Error::Config("window and stride must be non-empty".into()));
    }
    if p.cols() < wl {
        return Err(Error::InsufficientInput {
            needed: wl,
            got: p.cols(),
        });
    }
    let t_out = (p.cols() - wl) / stride + 1;
    let mut out = Table::zeros(p.rows(), t_out);
    for f in 0..p.rows() {
        let row = p.row(f);
        for n in 0..t_out {
            let seg = &row[n * stride..n * stride + wl];
            out.set(f, n, seg.iter().zip(window).map(|(a, b)| a * b).sum());
        }
    }
    Ok(out)
}

/// `log(v + epsilon)` elementwise; rejects negative entries.
pub fn log_compress(v: &Table, epsilon: f64) -> Result<Table> {
    if !(epsilon > 0.0) {
        return Err(Error::Domain("log epsilon must be positive".into()));
    }
    if let Some(bad) = v.as_slice().iter().find(|&&x| x < 0.0 || x.is_nan()) {
        return Err(Error::Domain(format!(
            "log compression of negative value {bad}"
        )));
    }
    Ok(v.map(|x| (x + epsilon).ln()))
}

/// Per-channel mean/variance normalization over frames (population variance).
pub fn instance_normalize(v: &Table, epsilon: f64) -> Table {
    instance_norm_with_stats(v, epsilon).0
}

fn instance_norm_with_stats(v: &Table, epsilon: f64) -> (Table, Vec<f64>) {
    let t = v.cols() as f64;
    let mut out = Table::zeros(v.rows(), v.cols());
    let mut inv_std = Vec::with_capacity(v.rows());
    for f in 0..v.rows() {
        let row = v.row(f);
        let mean = row.iter().sum::<f64>() / t;
        let var = row.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / t;
        let is = 1.0 / (var + epsilon).sqrt();
        for (o, x) in out.row_mut(f).iter_mut().zip(row) {
            *o = (x - mean) * is;
        }
        inv_std.push(is);
    }
    (out, inv_std)
}

struct ForwardTrace {
    emphasized: Vec<f64>,
    conv: ConvTrace,
    lowpassed: Table,
    normalized: Table,
    inv_std: Vec<f64>,
}

fn forward_trace(x: &Waveform, fe: &LearnableFrontend) -> Result<ForwardTrace> {
    if x.samples.is_empty() {
        return Err(Error::EmptySignal);
    }
    let cfg = &fe.config;
    if x.sample_rate != cfg.sample_rate {
        return Err(Error::Config(format!(
            "waveform sample rate {} does not match front-end rate {}",
            x.sample_rate, cfg.sample_rate
        )));
    }
    let needed = fe.filter_width() + fe.lowpass_window.len() - 1;
    if x.samples.len() < needed {
        return Err(Error::InsufficientInput {
            needed,
            got: x.samples.len(),
        });
    }
    let emphasized = preemphasize(&x.samples, fe.preemphasis)?;
    let conv = complex_conv(&emphasized, &fe.filters_re, &fe.filters_im)?;
    let power = modulus_sq(&conv.re, &conv.im);
    let lowpassed = lowpass_decimate(&power, &fe.lowpass_window, cfg.stride_samples())?;
    let logged = log_compress(&lowpassed, cfg.log_epsilon)?;
    let (normalized, inv_std) = instance_norm_with_stats(&logged, cfg.norm_epsilon);
    Ok(ForwardTrace {
        emphasized,
        conv,
        lowpassed,
        normalized,
        inv_std,
    })
}

pub fn frontend_forward(x: &Waveform, fe: &LearnableFrontend) -> Result<FeatureMap> {
    let trace = forward_trace(x, fe)?;
    Ok(FeatureMap {
        values: trace.normalized,
        frame_stride_ms: fe.config.stride_ms,
    })
}

/// Exact gradients of `Σ upstream ⊙ frontend_forward(x)` w.r.t. the trainable parameters.
pub fn frontend_backward(
    x: &Waveform,
    fe: &LearnableFrontend,
    upstream: &Table,
) -> Result<FrontendGrads> {
    let trace = forward_trace(x, fe)?;
    if upstream.shape() != trace.normalized.shape() {
        return Err(Error::Dimension(format!(
            "upstream gradient is {:?}, features are {:?}",
            upstream.shape(),
            trace.normalized.shape()
        )));
    }
    let k = fe.num_filters();
    let width = fe.filter_width();
    let frames = trace.normalized.cols();
    let tf = frames as f64;

    // instance norm and log, fused: dv = (1/σ)(dy - mean(dy) - y·mean(dy·y)) / (v + eps)
    let mut d_low = Table::zeros(k, frames);
    for f in 0..k {
        let dy = upstream.row(f);
        let y = trace.normalized.row(f);
        let mean_dy = dy.iter().sum::<f64>() / tf;
        let mean_dyy = dy.iter().zip(y).map(|(a, b)| a * b).sum::<f64>() / tf;
        let is = trace.inv_std[f];
        for n in 0..frames {
            let d_log = is * (dy[n] - mean_dy - y[n] * mean_dyy);
            d_low.set(
                f,
                n,
                d_log / (trace.lowpassed.get(f, n) + fe.config.log_epsilon),
            );
        }
    }

    // fixed low-pass: scatter back onto the power map
    let t_conv = trace.conv.re.cols();
    let stride = fe.config.stride_samples();
    let window = &fe.lowpass_window;
    let mut d_power = Table::zeros(k, t_conv);
    for f in 0..k {
        let row = d_power.row_mut(f);
        for n in 0..frames {
            let g = d_low.get(f, n);
            if g == 0.0 {
                continue;
            }
            for (w, &win) in window.iter().enumerate() {
                row[n * stride + w] += g * win;
            }
        }
    }

    // squared modulus and complex correlation
    let ConvTrace {
        fft,
        x_spec,
        filter_specs,
        re,
        im,
    } = &trace.conv;
    let n = fft.n;
    let inv_n = 1.0 / n as f64;
    let zero = Complex64::new(0.0, 0.0);
    let mut grads = FrontendGrads::zeros(k, width);
    let mut dx_spec = vec![zero; n];
    let mut q = vec![zero; n];
    let mut buf = vec![zero; n];
    for f in 0..k {
        q.iter_mut().for_each(|v| *v = zero);
        for t in 0..t_conv {
            let g2 = 2.0 * d_power.get(f, t);
            q[t] = Complex64::new(g2 * re.get(f, t), g2 * im.get(f, t));
        }
        fft.fwd.process(&mut q);
        // dh[w] = Σ_t q[t]·x[t+w]; the index-reversed spectrum of q is the spectrum of its reversal.
        for j in 0..n {
            buf[j] = x_spec[j] * q[(n - j) % n];
        }
        fft.inv.process(&mut buf);
        for w in 0..width {
            grads.filters_re.set(f, w, buf[w].re * inv_n);
            grads.filters_im.set(f, w, buf[w].im * inv_n);
        }
        // dx = Re Σ_f q_f * conj(h_f); the spectrum of conj(h) is conj of the reversed-placement spectrum.
        for j in 0..n {
            dx_spec[j] += q[j] * filter_specs[f][j].conj();
        }
    }
    fft.inv.process(&mut dx_spec);

    // pre-emphasis
    let xs = &x.samples;
    let mut dk = [0.0; 2];
    for t in 0..xs.len() {
        let g = dx_spec[t].re * inv_n;
        dk[1] += g * xs[t];
        if t > 0 {
            dk[0] += g * xs[t - 1];
        }
    }
    grads.preemphasis = dk;
    debug_assert_eq!(trace.emphasized.len(), xs.len());
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::rngs::StdRng;
    use rand::SeedableRng;

    fn naive_preemph(x: &[f64], k: [f64; 2]) -> Vec<f64> {
        (0..x.len())
            .map(|t| k[1] * x[t] + if t > 0 { k[0] * x[t - 1] } else { 0.0 })
            .collect()
    }

    fn naive_power(x: &[f64], re: &Table, im: &Table) -> Table {
        let w = re.cols();
        let t_conv = x.len() - w + 1;
        let mut out = Table::zeros(re.rows(), t_conv);
        for f in 0..re.rows() {
            for t in 0..t_conv {
                let mut a = 0.0;
                let mut b = 0.0;
                for j in 0..w {
                    a += re.get(f, j) * x[t + j];
                    b += im.get(f, j) * x[t + j];
                }
                out.set(f, t, a * a + b * b);
            }
        }
        out
    }

    fn rand_vec(rng: &mut StdRng, n: usize) -> Vec<f64> {
        (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect()
    }

    fn small_config() -> FrontendConfig {
        FrontendConfig {
            num_filters: 3,
            sample_rate: 1000,
            filter_width_ms: 12.0,
            lowpass_width_ms: 8.0,
            stride_ms: 4.0,
            ..FrontendConfig::default()
        }
    }

    #[test]
    fn preemphasis_constant_input() {
        let y = preemphasize(&[1.0, 1.0, 1.0], [-0.97, 1.0]).unwrap();
        let expected = [1.0, 0.03, 0.03];
        for (a, b) in y.iter().zip(expected) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn preemphasis_identity_and_oracle() {
        let mut rng = StdRng::seed_from_u64(1);
        let x = rand_vec(&mut rng, 64);
        assert_eq!(preemphasize(&x, [0.0, 1.0]).unwrap(), x);
        let k = [rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0)];
        let got = preemphasize(&x, k).unwrap();
        for (a, b) in got.iter().zip(naive_preemph(&x, k)) {
            assert!((a - b).abs() <= 1e-12);
        }
        assert!(matches!(preemphasize(&[], k), Err(Error::EmptySignal)));
    }

    #[test]
    fn power_matches_naive_loop() {
        let mut rng = StdRng::seed_from_u64(2);
        let x = rand_vec(&mut rng, 300);
        let re = Table::from_vec(4, 37, rand_vec(&mut rng, 4 * 37));
        let im = Table::from_vec(4, 37, rand_vec(&mut rng, 4 * 37));
        let fast = complex_conv_power(&x, &re, &im).unwrap();
        let slow = naive_power(&x, &re, &im);
        assert_eq!(fast.shape(), slow.shape());
        for (a, b) in fast.as_slice().iter().zip(slow.as_slice()) {
            assert!((a - b).abs() <= 1e-10 * b.abs().max(1e-3), "{a} vs {b}");
            assert!(*a >= 0.0);
        }
    }

    #[test]
    fn power_of_silence_is_zero_and_short_input_rejected() {
        let mut rng = StdRng::seed_from_u64(3);
        let re = Table::from_vec(2, 10, rand_vec(&mut rng, 20));
        let im = Table::from_vec(2, 10, rand_vec(&mut rng, 20));
        let p = complex_conv_power(&[0.0; 50], &re, &im).unwrap();
        assert!(p.as_slice().iter().all(|&v| v.abs() < 1e-20));
        assert!(matches!(
            complex_conv_power(&[0.0; 9], &re, &im),
            Err(Error::InsufficientInput { needed: 10, got: 9 })
        ));
    }

    #[test]
    fn matched_complex_filter_gives_flat_envelope() {
        let rate = 16_000.0;
        let freq = 1000.0;
        let w = 400;
        let re: Vec<f64> = (0..w)
            .map(|j| (2.0 * PI * freq * j as f64 / rate).cos())
            .collect();
        let im: Vec<f64> = (0..w)
            .map(|j| (2.0 * PI * freq * j as f64 / rate).sin())
            .collect();
        let x: Vec<f64> = (0..4000)
            .map(|t| (2.0 * PI * freq * t as f64 / rate).sin())
            .collect();
        let p = complex_conv_power(
            &x,
            &Table::from_vec(1, w, re),
            &Table::from_vec(1, w, im),
        )
        .unwrap();
        let row = p.row(0);
        let inner = &row[100..row.len() - 100];
        let max = inner.iter().copied().fold(f64::MIN, f64::max);
        let min = inner.iter().copied().fold(f64::MAX, f64::min);
        assert!((max - min) / max <= 0.05);
    }

    #[test]
    fn lowpass_constant_and_pairwise() {
        let window = squared_hanning(7);
        let p = Table::filled(2, 30, 3.0);
        let out = lowpass_decimate(&p, &window, 5).unwrap();
        let s: f64 = window.iter().sum();
        assert_eq!(out.cols(), (30 - 7) / 5 + 1);
        assert!(out.as_slice().iter().all(|v| (v - 3.0 * s).abs() < 1e-12));

        let p = Table::from_rows(&[vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]]);
        let out = lowpass_decimate(&p, &[1.0, 1.0], 2).unwrap();
        assert_eq!(out.row(0), &[3.0, 7.0, 11.0]);
        assert!(lowpass_decimate(&p, &[1.0; 7], 2).is_err());
    }

    #[test]
    fn lowpass_matches_naive_loop() {
        let mut rng = StdRng::seed_from_u64(4);
        let p = Table::from_vec(3, 200, rand_vec(&mut rng, 600));
        let win = squared_hanning(25);
        let out = lowpass_decimate(&p, &win, 7).unwrap();
        for f in 0..3 {
            for n in 0..out.cols() {
                let mut acc = 0.0;
                for w in 0..25 {
                    acc += win[w] * p.get(f, n * 7 + w);
                }
                assert!((out.get(f, n) - acc).abs() <= 1e-10 * acc.abs().max(1.0));
            }
        }
    }

    #[test]
    fn squared_hanning_shape() {
        let w = squared_hanning(400);
        assert_eq!(w[0], 0.0);
        assert!(w[399].abs() < 1e-20);
        let mid = 0.5 - 0.5 * (2.0 * PI * 200.0 / 399.0).cos();
        assert!((w[200] - mid * mid).abs() < 1e-15);
    }

    #[test]
    fn log_compress_cases() {
        let eps = 1e-6;
        let v = Table::from_rows(&[vec![0.0, 1.0 - eps]]);
        let out = log_compress(&v, eps).unwrap();
        assert!((out.get(0, 0) - (-13.815510557964274)).abs() < 1e-9);
        assert!(out.get(0, 1).abs() < 1e-15);
        assert!(matches!(
            log_compress(&Table::from_rows(&[vec![-1.0]]), eps),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn instance_norm_cases() {
        let v = Table::from_rows(&[vec![4.0; 5], vec![-1.0, 1.0]
            .into_iter()
            .cycle()
            .take(5)
            .collect()]);
        let out = instance_normalize(&v, 1e-5);
        assert!(out.row(0).iter().all(|&x| x == 0.0));

        let v = Table::from_rows(&[vec![-1.0, 1.0]]);
        let out = instance_normalize(&v, 1e-5);
        assert!((out.get(0, 0) + 1.0).abs() < 1e-5);
        assert!((out.get(0, 1) - 1.0).abs() < 1e-5);

        let mut rng = StdRng::seed_from_u64(5);
        let v = Table::from_vec(2, 1000, (0..2000).map(|_| rng.gen_range(-3.0..7.0)).collect());
        let out = instance_normalize(&v, 1e-5);
        for f in 0..2 {
            let row = out.row(f);
            let mean = row.iter().sum::<f64>() / 1000.0;
            let var = row.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 1000.0;
            assert!(mean.abs() <= 1e-6);
            assert!((var - 1.0).abs() <= 1e-4);
        }
    }

    #[test]
    fn forward_geometry_one_second() {
        let mut rng = StdRng::seed_from_u64(6);
        let fe = LearnableFrontend::new(FrontendConfig::default(), &mut rng).unwrap();
        let x = Waveform::new(rand_vec(&mut rng, 16_000), 16_000);
        let feats = fe.forward(&x).unwrap();
        // 16000 - 400 + 1 = 15601 conv positions; (15601 - 400) / 160 + 1 = 96 frames
        assert_eq!(feats.frames(), (15_601 - 400) / 160 + 1);
        assert_eq!(feats.frames(), 96);
        assert_eq!(feats.channels(), 40);
        assert!(feats.values.all_finite());
    }

    #[test]
    fn forward_of_silence_is_zero() {
        let mut rng = StdRng::seed_from_u64(7);
        let fe = LearnableFrontend::new(small_config(), &mut rng).unwrap();
        let x = Waveform::new(vec![0.0; 100], 1000);
        let feats = fe.forward(&x).unwrap();
        assert!(feats.values.as_slice().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn backward_zero_upstream() {
        let mut rng = StdRng::seed_from_u64(8);
        let fe = LearnableFrontend::new(small_config(), &mut rng).unwrap();
        let x = Waveform::new(rand_vec(&mut rng, 100), 1000);
        let feats = fe.forward(&x).unwrap();
        let g = frontend_backward(&x, &fe, &Table::zeros(feats.channels(), feats.frames())).unwrap();
        assert_eq!(g.preemphasis, [0.0, 0.0]);
        assert!(g.filters_re.as_slice().iter().all(|&v| v == 0.0));
        assert!(frontend_backward(&x, &fe, &Table::zeros(1, 1)).is_err());
    }

    #[test]
    fn backward_matches_finite_differences() {
        let mut rng = StdRng::seed_from_u64(9);
        let fe = LearnableFrontend::new(small_config(), &mut rng).unwrap();
        let x = Waveform::new(rand_vec(&mut rng, 100), 1000);
        let feats = fe.forward(&x).unwrap();
        let u = Table::from_vec(
            feats.channels(),
            feats.frames(),
            rand_vec(&mut rng, feats.channels() * feats.frames()),
        );
        let loss = |fe: &LearnableFrontend| -> f64 {
            let f = fe.forward(&x).unwrap();
            f.values.as_slice().iter().zip(u.as_slice()).map(|(a, b)| a * b).sum()
        };
        let g = frontend_backward(&x, &fe, &u).unwrap();
        let h = 1e-5;
        let check = |analytic: f64, numeric: f64| {
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            assert!(rel <= 1e-4, "analytic {analytic} numeric {numeric}");
        };
        for f in 0..fe.num_filters() {
            for w in 0..fe.filter_width() {
                for imag in [false, true] {
                    let mut p = fe.clone();
                    let mut m = fe.clone();
                    let (tp, tm) = if imag {
                        (&mut p.filters_im, &mut m.filters_im)
                    } else {
                        (&mut p.filters_re, &mut m.filters_re)
                    };
                    tp.add(f, w, h);
                    tm.add(f, w, -h);
                    let numeric = (loss(&p) - loss(&m)) / (2.0 * h);
                    let analytic = if imag {
                        g.filters_im.get(f, w)
                    } else {
                        g.filters_re.get(f, w)
                    };
                    check(analytic, numeric);
                }
            }
        }
        for i in 0..2 {
            let mut p = fe.clone();
            let mut m = fe.clone();
            p.preemphasis[i] += h;
            m.preemphasis[i] -= h;
            check(g.preemphasis[i], (loss(&p) - loss(&m)) / (2.0 * h));
        }
    }
}
