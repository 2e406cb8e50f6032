use serde::{Deserialize, Serialize};

use super::Parameters;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0;
        ok.then_some(())
            .ok_or_else(|| Error::InvalidConfig("adam needs lr > 0, betas in [0, 1), eps > 0".into()))
    }
}

/// Bias-corrected Adam moments, flattened in parameter registration order.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &Parameters) -> Self {
        let n = params.count();
        Self {
            config,
            step: 0,
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }

    pub fn step(&mut self, params: &mut Parameters, grads: &Parameters) -> Result<()> {
        if !params.same_layout(grads) || params.count() != self.m.len() {
            return Err(Error::ShapeMismatch("adam state, parameters and gradients differ in layout".into()));
        }
        self.step += 1;
        let AdamConfig { lr, beta1, beta2, eps } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (((p, &g), m), v) in params.iter_mut().zip(grads.iter()).zip(&mut self.m).zip(&mut self.v) {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            *p -= lr * (*m / c1) / ((*v / c2).sqrt() + eps);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Tensor;

    fn single(values: &[f64]) -> Parameters {
        Parameters {
            tensors: vec![Tensor {
                name: "w".into(),
                shape: vec![values.len()],
                data: values.to_vec(),
            }],
        }
    }

    #[test]
    fn first_step_moves_by_lr() {
        // With bias correction the first update is lr * sign(g) (up to eps).
        let mut p = single(&[1.0, -2.0, 0.5]);
        let g = single(&[0.3, -4.0, 0.0]);
        let mut s = AdamState::new(AdamConfig::default(), &p);
        s.step(&mut p, &g).unwrap();
        let d = &p.tensors[0].data;
        assert!((d[0] - (1.0 - 1e-3)).abs() < 1e-10);
        assert!((d[1] - (-2.0 + 1e-3)).abs() < 1e-10);
        assert_eq!(d[2], 0.5);
    }

    #[test]
    fn matches_scalar_oracle() {
        let cfg = AdamConfig { lr: 0.05, ..Default::default() };
        let grads = [0.5, -1.0, 2.0, 0.1, -0.3];
        let mut p = single(&[0.7]);
        let mut s = AdamState::new(cfg, &p);
        let (mut x, mut m, mut v) = (0.7f64, 0.0f64, 0.0f64);
        for (t, &g) in grads.iter().enumerate() {
            s.step(&mut p, &single(&[g])).unwrap();
            let t = t as i32 + 1;
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            x -= 0.05 * mh / (vh.sqrt() + 1e-8);
            assert!((p.tensors[0].data[0] - x).abs() < 1e-14);
        }
        assert_eq!(s.step, 5);
    }

    #[test]
    fn zero_gradient_keeps_parameters_and_decays_moments() {
        let mut p = single(&[1.0, -1.0]);
        let mut s = AdamState::new(AdamConfig::default(), &p);
        s.step(&mut p, &single(&[0.5, -0.5])).unwrap();
        let (before, m, v) = (p.clone(), s.m.clone(), s.v.clone());
        let mut q = p.clone();
        let mut s2 = s.clone();
        s2.step(&mut q, &single(&[0.0, 0.0])).unwrap();
        // The bias-corrected momentum still moves the parameters; with the
        // moments cleared there is nothing left to apply.
        assert!(s2.m.iter().zip(&m).all(|(a, b)| *a == 0.9 * b));
        assert!(s2.v.iter().zip(&v).all(|(a, b)| *a == 0.999 * b));
        let mut fresh = AdamState::new(AdamConfig::default(), &before);
        let mut r = before.clone();
        fresh.step(&mut r, &single(&[0.0, 0.0])).unwrap();
        assert_eq!(r, before);
    }

    #[test]
    fn step_is_deterministic() {
        let g = single(&[0.3, -0.7]);
        let run = || {
            let mut p = single(&[1.0, 2.0]);
            let mut s = AdamState::new(AdamConfig::default(), &p);
            s.step(&mut p, &g).unwrap();
            s.step(&mut p, &g).unwrap();
            (p, s)
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn layout_mismatch() {
        let mut p = single(&[1.0]);
        let mut s = AdamState::new(AdamConfig::default(), &p);
        assert!(s.step(&mut p, &single(&[1.0, 2.0])).is_err());
    }
}
