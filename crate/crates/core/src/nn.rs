//! Building blocks shared by the acoustic model and the convolutional LM:
//! weight-normalized 1-D convolution, gated linear units, inverted dropout.

use rand::Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::math::{sigmoid, Table};

/// Weight-normalized 1-D convolution, effective weight `g[o]·v[o]/‖v[o]‖`.
///
/// Inputs and outputs are laid out `channels × frames`.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv1d {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel_width: usize,
    pub stride: usize,
    pub pad_left: usize,
    pub pad_right: usize,
    /// `out × in × kernel`, row-major.
    pub v: Vec<f64>,
    pub g: Vec<f64>,
    pub bias: Vec<f64>,
}

/// Gradients for a [`Conv1d`], same layout as its parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct Conv1dGrads {
    pub v: Vec<f64>,
    pub g: Vec<f64>,
    pub bias: Vec<f64>,
}

impl Conv1d {
    /// Random direction, magnitude initialized to the direction's own norm.
    pub fn new<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel_width: usize,
        stride: usize,
        (pad_left, pad_right): (usize, usize),
        rng: &mut R,
    ) -> Self {
        let fan_in = (in_channels * kernel_width) as f64;
        let dist = Normal::new(0.0, 1.0 / fan_in.sqrt()).expect("valid normal");
        let v: Vec<f64> = (0..out_channels * in_channels * kernel_width)
            .map(|_| dist.sample(rng))
            .collect();
        let row = in_channels * kernel_width;
        let g = v
            .chunks(row)
            .map(|c| c.iter().map(|x| x * x).sum::<f64>().sqrt())
            .collect();
        Conv1d {
            in_channels,
            out_channels,
            kernel_width,
            stride,
            pad_left,
            pad_right,
            v,
            g,
            bias: vec![0.0; out_channels],
        }
    }

    /// Padding `floor(k/2)` on both sides.
    pub fn centered<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel_width: usize,
        stride: usize,
        rng: &mut R,
    ) -> Self {
        let p = kernel_width / 2;
        Self::new(in_channels, out_channels, kernel_width, stride, (p, p), rng)
    }

    /// Left padding `k-1`: output `t` sees only inputs `≤ t`.
    pub fn causal<R: Rng + ?Sized>(
        in_channels: usize,
        out_channels: usize,
        kernel_width: usize,
        rng: &mut R,
    ) -> Self {
        Self::new(in_channels, out_channels, kernel_width, 1, (kernel_width - 1, 0), rng)
    }

    fn row_len(&self) -> usize {
        self.in_channels * self.kernel_width
    }

    pub fn output_len(&self, input_len: usize) -> usize {
        let padded = input_len + self.pad_left + self.pad_right;
        if padded < self.kernel_width {
            0
        } else {
            (padded - self.kernel_width) / self.stride + 1
        }
    }

    /// Effective weights plus the per-output-channel direction norms.
    pub fn effective_weight(&self) -> (Vec<f64>, Vec<f64>) {
        let row = self.row_len();
        let mut w = Vec::with_capacity(self.v.len());
        let mut norms = Vec::with_capacity(self.out_channels);
        for (o, chunk) in self.v.chunks(row).enumerate() {
            let n = chunk.iter().map(|x| x * x).sum::<f64>().sqrt();
            let s = self.g[o] / n;
            w.extend(chunk.iter().map(|x| x * s));
            norms.push(n);
        }
        (w, norms)
    }

    pub fn forward(&self, x: &Table) -> Result<Table> {
        if x.rows() != self.in_channels {
            return Err(Error::Dimension(format!(
                "conv expects {} input channels, got {}",
                self.in_channels,
                x.rows()
            )));
        }
        let t_in = x.cols() as isize;
        let t_out = self.output_len(x.cols());
        let (w, _) = self.effective_weight();
        let k = self.kernel_width;
        let s = self.stride;
        let mut out = Table::zeros(self.out_channels, t_out);
        for o in 0..self.out_channels {
            let orow = out.row_mut(o);
            orow.iter_mut().for_each(|v| *v = self.bias[o]);
            for i in 0..self.in_channels {
                let xrow = x.row(i);
                for j in 0..k {
                    let wv = w[(o * self.in_channels + i) * k + j];
                    if wv == 0.0 {
                        continue;
                    }
                    let offset = j as isize - self.pad_left as isize;
                    if s == 1 {
                        // valid t: 0 <= t + offset < t_in
                        let lo = (-offset).max(0) as usize;
                        let hi = ((t_in - offset).max(0) as usize).min(t_out);
                        if lo >= hi {
                            continue;
                        }
                        let src = &xrow[(lo as isize + offset) as usize..(hi as isize + offset) as usize];
                        for (dst, &xv) in orow[lo..hi].iter_mut().zip(src) {
                            *dst += wv * xv;
                        }
                    } else {
                        for (t, dst) in orow.iter_mut().enumerate() {
                            let pos = (t * s) as isize + offset;
                            if pos >= 0 && pos < t_in {
                                *dst += wv * xrow[pos as usize];
                            }
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Returns the input gradient and the parameter gradients.
    pub fn backward(&self, x: &Table, dy: &Table) -> Result<(Table, Conv1dGrads)> {
        let t_out = self.output_len(x.cols());
        if dy.shape() != (self.out_channels, t_out) || x.rows() != self.in_channels {
            return Err(Error::Dimension(format!(
                "conv backward: input {:?}, upstream {:?}, expected upstream ({}, {t_out})",
                x.shape(),
                dy.shape(),
                self.out_channels
            )));
        }
        let t_in = x.cols() as isize;
        let (w, norms) = self.effective_weight();
        let k = self.kernel_width;
        let s = self.stride;
        let mut dx = Table::zeros(self.in_channels, x.cols());
        let mut dw = vec![0.0; w.len()];
        let mut dbias = vec![0.0; self.out_channels];
        for o in 0..self.out_channels {
            let dyrow = dy.row(o);
            dbias[o] = dyrow.iter().sum();
            for i in 0..self.in_channels {
                let xrow = x.row(i);
                for j in 0..k {
                    let idx = (o * self.in_channels + i) * k + j;
                    let wv = w[idx];
                    let offset = j as isize - self.pad_left as isize;
                    let mut acc = 0.0;
                    if s == 1 {
                        let lo = (-offset).max(0) as usize;
                        let hi = ((t_in - offset).max(0) as usize).min(t_out);
                        if lo >= hi {
                            continue;
                        }
                        let a = (lo as isize + offset) as usize;
                        let b = (hi as isize + offset) as usize;
                        let dxrow = dx.row_mut(i);
                        for ((d, &g), &xv) in dxrow[a..b].iter_mut().zip(&dyrow[lo..hi]).zip(&xrow[a..b]) {
                            *d += wv * g;
                            acc += g * xv;
                        }
                    } else {
                        let dxrow = dx.row_mut(i);
                        for (t, &g) in dyrow.iter().enumerate() {
                            let pos = (t * s) as isize + offset;
                            if pos >= 0 && pos < t_in {
                                dxrow[pos as usize] += wv * g;
                                acc += g * xrow[pos as usize];
                            }
                        }
                    }
                    dw[idx] = acc;
                }
            }
        }
        // weight norm: dg = dW·u, dv = (g/n)(dW - (dW·u)u), u = v/n
        let row = self.row_len();
        let mut dv = vec![0.0; self.v.len()];
        let mut dg = vec![0.0; self.out_channels];
        for o in 0..self.out_channels {
            let n = norms[o];
            let vrow = &self.v[o * row..(o + 1) * row];
            let dwrow = &dw[o * row..(o + 1) * row];
            let proj: f64 = vrow.iter().zip(dwrow).map(|(v, d)| v * d).sum::<f64>() / n;
            dg[o] = proj;
            let scale = self.g[o] / n;
            for ((dvv, &d), &v) in dv[o * row..(o + 1) * row].iter_mut().zip(dwrow).zip(vrow) {
                *dvv = scale * (d - proj * v / n);
            }
        }
        Ok((
            dx,
            Conv1dGrads {
                v: dv,
                g: dg,
                bias: dbias,
            },
        ))
    }

    pub fn zero_grads(&self) -> Conv1dGrads {
        Conv1dGrads {
            v: vec![0.0; self.v.len()],
            g: vec![0.0; self.g.len()],
            bias: vec![0.0; self.bias.len()],
        }
    }
}

pub(crate) fn conv_tensors<'a>(prefix: &str, c: &'a Conv1d, out: &mut Vec<(String, &'a [f64])>) {
    out.push((format!("{prefix}.v"), &c.v));
    out.push((format!("{prefix}.g"), &c.g));
    out.push((format!("{prefix}.bias"), &c.bias));
}

pub(crate) fn grad_tensors<'a>(prefix: &str, c: &'a Conv1dGrads, out: &mut Vec<(String, &'a [f64])>) {
    out.push((format!("{prefix}.v"), &c.v));
    out.push((format!("{prefix}.g"), &c.g));
    out.push((format!("{prefix}.bias"), &c.bias));
}

/// `a ⊙ sigmoid(b)` where `a` is the first half of the channels and `b` the second.
pub fn glu(pre: &Table) -> Result<Table> {
    if !pre.rows().is_multiple_of(2) {
        return Err(Error::Config(format!(
            "GLU needs an even channel count, got {}",
            pre.rows()
        )));
    }
    let c = pre.rows() / 2;
    let mut out = Table::zeros(c, pre.cols());
    for i in 0..c {
        let a = pre.row(i);
        let b = pre.row(i + c);
        for ((o, &av), &bv) in out.row_mut(i).iter_mut().zip(a).zip(b) {
            *o = av * sigmoid(bv);
        }
    }
    Ok(out)
}

pub fn glu_backward(pre: &Table, dout: &Table) -> Result<Table> {
    if !pre.rows().is_multiple_of(2) || dout.shape() != (pre.rows() / 2, pre.cols()) {
        return Err(Error::Dimension("GLU backward shape mismatch".into()));
    }
    let c = pre.rows() / 2;
    let mut d = Table::zeros(pre.rows(), pre.cols());
    for i in 0..c {
        for t in 0..pre.cols() {
            let a = pre.get(i, t);
            let s = sigmoid(pre.get(i + c, t));
            let g = dout.get(i, t);
            d.set(i, t, g * s);
            d.set(i + c, t, g * a * s * (1.0 - s));
        }
    }
    Ok(d)
}

/// Inverted-dropout mask: entries are `0` or `1/(1-p)`.
pub fn dropout_mask<R: Rng + ?Sized>(rows: usize, cols: usize, p: f64, rng: &mut R) -> Table {
    if p <= 0.0 {
        return Table::filled(rows, cols, 1.0);
    }
    let keep = 1.0 / (1.0 - p);
    let data = (0..rows * cols)
        .map(|_| if rng.gen::<f64>() < p { 0.0 } else { keep })
        .collect();
    Table::from_vec(rows, cols, data)
}

pub fn hadamard(a: &Table, b: &Table) -> Table {
    debug_assert_eq!(a.shape(), b.shape());
    let data = a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| x * y).collect();
    Table::from_vec(a.rows(), a.cols(), data)
}

/// Row-wise log-softmax of a `T × C` table.
pub fn log_softmax_rows(x: &Table) -> Table {
    let mut out = x.clone();
    for r in 0..x.rows() {
        let z = crate::math::log_sum_exp(x.row(r));
        out.row_mut(r).iter_mut().for_each(|v| *v -= z);
    }
    out
}

/// Backward of [`log_softmax_rows`] given its output.
pub fn log_softmax_rows_backward(out: &Table, dout: &Table) -> Table {
    let mut d = dout.clone();
    for r in 0..out.rows() {
        let s: f64 = dout.row(r).iter().sum();
        for (c, dv) in d.row_mut(r).iter_mut().enumerate() {
            *dv -= out.get(r, c).exp() * s;
        }
    }
    d
}
