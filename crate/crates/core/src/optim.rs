//! SGD with momentum (classical or Nesterov), global-norm clipping and a
//! plateau learning-rate schedule.

use crate::error::{Error, Result};

/// A model whose trainable tensors can be visited as flat slices in a fixed order.
pub trait ParamSet {
    /// Named tensors, always in the same order.
    fn tensors(&self) -> Vec<(String, &[f64])>;
    fn tensors_mut(&mut self) -> Vec<&mut [f64]>;

    fn num_params(&self) -> usize {
        self.tensors().iter().map(|(_, t)| t.len()).sum()
    }
}

pub fn global_norm<P: ParamSet + ?Sized>(grads: &P) -> f64 {
    grads
        .tensors()
        .iter()
        .flat_map(|(_, t)| t.iter())
        .map(|g| g * g)
        .sum::<f64>()
        .sqrt()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Momentum {
    Classical(f64),
    Nesterov(f64),
}

impl Momentum {
    fn coefficient(self) -> f64 {
        match self {
            Momentum::Classical(m) | Momentum::Nesterov(m) => m,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Sgd {
    pub lr: f64,
    pub momentum: Momentum,
    /// Maximum global gradient norm; `None` disables clipping.
    pub clip: Option<f64>,
    velocity: Vec<Vec<f64>>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepInfo {
    pub grad_norm: f64,
    pub clipped: bool,
}

impl Sgd {
    pub fn new(lr: f64, momentum: Momentum, clip: Option<f64>) -> Self {
        Sgd {
            lr,
            momentum,
            clip,
            velocity: Vec::new(),
        }
    }

    /// `m ← μm + ĝ`, then `p ← p − lr·m` (classical) or `p ← p − lr·(ĝ + μm)` (Nesterov),
    /// where `ĝ` is the gradient rescaled to norm at most `clip`.
    pub fn step<P: ParamSet + ?Sized, G: ParamSet + ?Sized>(
        &mut self,
        params: &mut P,
        grads: &G,
    ) -> Result<StepInfo> {
        if self.lr < 0.0 {
            return Err(Error::Config("learning rate must be >= 0".into()));
        }
        let g = grads.tensors();
        if let Some((name, _)) = g.iter().find(|(_, t)| t.iter().any(|v| !v.is_finite())) {
            return Err(Error::Divergence(format!("non-finite gradient in {name}")));
        }
        let norm = global_norm(grads);
        let scale = match self.clip {
            Some(c) if c <= 0.0 => return Err(Error::Config("clip must be > 0".into())),
            Some(c) if norm > c => c / norm,
            _ => 1.0,
        };
        let mut p = params.tensors_mut();
        if p.len() != g.len() || p.iter().zip(&g).any(|(a, (_, b))| a.len() != b.len()) {
            return Err(Error::Dimension("parameter and gradient layouts differ".into()));
        }
        if self.velocity.is_empty() {
            self.velocity = g.iter().map(|(_, t)| vec![0.0; t.len()]).collect();
        }
        let mu = self.momentum.coefficient();
        let nesterov = matches!(self.momentum, Momentum::Nesterov(_));
        for ((param, (_, grad)), vel) in p.iter_mut().zip(&g).zip(self.velocity.iter_mut()) {
            for ((pv, &gv), m) in param.iter_mut().zip(grad.iter()).zip(vel.iter_mut()) {
                let gh = gv * scale;
                *m = mu * *m + gh;
                let update = if nesterov { gh + mu * *m } else { *m };
                *pv -= self.lr * update;
            }
        }
        Ok(StepInfo {
            grad_norm: norm,
            clipped: scale < 1.0,
        })
    }

    pub fn velocity(&self) -> &[Vec<f64>] {
        &self.velocity
    }
}

/// Halves (by default) the learning rate when the monitored loss stops improving.
#[derive(Clone, Debug)]
pub struct PlateauSchedule {
    pub factor: f64,
    pub patience: usize,
    pub min_lr: f64,
    best: f64,
    bad_epochs: usize,
}

impl PlateauSchedule {
    pub fn new(factor: f64, patience: usize, min_lr: f64) -> Self {
        PlateauSchedule {
            factor,
            patience,
            min_lr,
            best: f64::INFINITY,
            bad_epochs: 0,
        }
    }

    /// Records a validation loss and returns the learning rate to use next.
    pub fn observe(&mut self, loss: f64, lr: f64) -> f64 {
        if loss < self.best - 1e-9 {
            self.best = loss;
            self.bad_epochs = 0;
            return lr;
        }
        self.bad_epochs += 1;
        if self.bad_epochs > self.patience {
            self.bad_epochs = 0;
            (lr * self.factor).max(self.min_lr)
        } else {
            lr
        }
    }
}

impl Default for PlateauSchedule {
    fn default() -> Self {
        PlateauSchedule::new(0.5, 1, 1e-6)
    }
}

/// A single flat tensor, handy for tests and scalar toy problems.
#[derive(Clone, Debug, PartialEq)]
pub struct FlatParams(pub Vec<f64>);

impl ParamSet for FlatParams {
    fn tensors(&self) -> Vec<(String, &[f64])> {
        vec![("flat".to_string(), &self.0)]
    }

    fn tensors_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.0]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_keeps_params_and_decays_momentum() {
        let mut opt = Sgd::new(0.1, Momentum::Classical(0.9), Some(0.2));
        let mut p = FlatParams(vec![1.0, 2.0]);
        opt.step(&mut p, &FlatParams(vec![0.1, 0.0])).unwrap();
        let before = p.clone();
        let v0 = opt.velocity()[0][0];
        opt.step(&mut p, &FlatParams(vec![0.0, 0.0])).unwrap();
        assert!((opt.velocity()[0][0] - 0.9 * v0).abs() < 1e-15);

        let mut fresh = Sgd::new(0.1, Momentum::Classical(0.9), Some(0.2));
        let mut q = before.clone();
        fresh.step(&mut q, &FlatParams(vec![0.0, 0.0])).unwrap();
        assert_eq!(q, before);
    }

    #[test]
    fn clipping_to_point_two() {
        let mut opt = Sgd::new(1.0, Momentum::Classical(0.0), Some(0.2));
        let mut p = FlatParams(vec![0.0, 0.0]);
        let info = opt.step(&mut p, &FlatParams(vec![0.6, 0.8])).unwrap();
        assert!((info.grad_norm - 1.0).abs() < 1e-15);
        assert!(info.clipped);
        let n = (p.0[0].powi(2) + p.0[1].powi(2)).sqrt();
        assert!((n - 0.2).abs() < 1e-15);
    }

    #[test]
    fn two_momentum_steps_closed_form() {
        // m1 = g1, p1 = p0 - lr g1; m2 = 0.9 g1 + g2, p2 = p1 - lr m2
        let (lr, g1, g2, p0) = (0.1, 0.5, -0.25, 3.0);
        let mut opt = Sgd::new(lr, Momentum::Classical(0.9), None);
        let mut p = FlatParams(vec![p0]);
        opt.step(&mut p, &FlatParams(vec![g1])).unwrap();
        opt.step(&mut p, &FlatParams(vec![g2])).unwrap();
        let expected = p0 - lr * g1 - lr * (0.9 * g1 + g2);
        assert!((p.0[0] - expected).abs() < 1e-15);

        // Nesterov: p1 = p0 - lr(g1 + 0.9 g1)
        let mut opt = Sgd::new(lr, Momentum::Nesterov(0.9), None);
        let mut p = FlatParams(vec![p0]);
        opt.step(&mut p, &FlatParams(vec![g1])).unwrap();
        assert!((p.0[0] - (p0 - lr * 1.9 * g1)).abs() < 1e-15);
    }

    #[test]
    fn non_finite_gradient_is_divergence() {
        let mut opt = Sgd::new(0.1, Momentum::Classical(0.9), None);
        let mut p = FlatParams(vec![0.0]);
        assert!(matches!(
            opt.step(&mut p, &FlatParams(vec![f64::NAN])),
            Err(Error::Divergence(_))
        ));
    }

    #[test]
    fn quadratic_loss_decreases() {
        let loss = |p: &FlatParams| p.0.iter().map(|x| (x - 1.5).powi(2)).sum::<f64>();
        let mut p = FlatParams(vec![0.0, 4.0, -2.0]);
        let mut opt = Sgd::new(0.01, Momentum::Classical(0.9), Some(0.2));
        let before = loss(&p);
        let g = FlatParams(p.0.iter().map(|x| 2.0 * (x - 1.5)).collect());
        opt.step(&mut p, &g).unwrap();
        assert!(loss(&p) < before);
    }

    #[test]
    fn plateau_halves() {
        let mut s = PlateauSchedule::new(0.5, 1, 1e-3);
        let mut lr = 1.0;
        lr = s.observe(3.0, lr);
        lr = s.observe(2.0, lr);
        assert_eq!(lr, 1.0);
        lr = s.observe(2.5, lr);
        assert_eq!(lr, 1.0);
        lr = s.observe(2.5, lr);
        assert_eq!(lr, 0.5);
    }
}
