use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::params::{Grads, ParamStore};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.99,
            eps: 1e-15,
        }
    }
}

/// First and second moments for one tensor.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
}

impl Moments {
    pub fn zeros(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// One bias-corrected Adam update of `param` in place; `step` counts from 1.
pub fn adam_step(
    name: &str,
    param: &mut [f64],
    grad: &[f64],
    state: &mut Moments,
    step: u64,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    if param.len() != grad.len() || state.m.len() != grad.len() || state.v.len() != grad.len() {
        return Err(Error::ShapeMismatch(format!("adam update for `{name}`")));
    }
    if grad.iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFiniteGradient(name.to_string()));
    }
    let bc1 = 1.0 - cfg.beta1.powf(step as f64);
    let bc2 = 1.0 - cfg.beta2.powf(step as f64);
    for i in 0..param.len() {
        let g = grad[i];
        let m = cfg.beta1 * state.m[i] + (1.0 - cfg.beta1) * g;
        let v = cfg.beta2 * state.v[i] + (1.0 - cfg.beta2) * g * g;
        state.m[i] = m;
        state.v[i] = v;
        param[i] -= lr * (m / bc1) / ((v / bc2).sqrt() + cfg.eps);
    }
    Ok(())
}

/// Adam over every tensor of a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Adam {
    pub cfg: AdamConfig,
    moments: Vec<Moments>,
    step: u64,
}

impl Adam {
    pub fn new(params: &ParamStore, cfg: AdamConfig) -> Self {
        Self {
            cfg,
            moments: params.iter().map(|(_, t)| Moments::zeros(t.len())).collect(),
            step: 0,
        }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut ParamStore, grads: &Grads, lr: f64) -> Result<()> {
        self.step_scaled(params, grads, lr, |_| 1.0)
    }

    /// Like [`Adam::step`], with the rate of each tensor multiplied by `scale(name)`.
    pub fn step_scaled(
        &mut self,
        params: &mut ParamStore,
        grads: &Grads,
        lr: f64,
        scale: impl Fn(&str) -> f64,
    ) -> Result<()> {
        // Validate everything before mutating anything.
        for (id, t) in params.iter() {
            if grads.tensors[id.0].iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteGradient(t.name.clone()));
            }
        }
        self.step += 1;
        let ids: Vec<_> = params.ids().collect();
        for id in ids {
            let name = params.get(id).name.clone();
            adam_step(
                &name,
                params.data_mut(id),
                &grads.tensors[id.0],
                &mut self.moments[id.0],
                self.step,
                lr * scale(&name),
                &self.cfg,
            )?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_fresh_state_leaves_params() {
        let mut p = vec![1.0, -2.0];
        let mut s = Moments::zeros(2);
        adam_step("p", &mut p, &[0.0, 0.0], &mut s, 1, 0.1, &AdamConfig::default()).unwrap();
        assert_eq!(p, vec![1.0, -2.0]);
    }

    #[test]
    fn zero_gradient_decays_moments() {
        let cfg = AdamConfig::default();
        let mut p = vec![0.0];
        let mut s = Moments { m: vec![0.5], v: vec![0.25] };
        adam_step("p", &mut p, &[0.0], &mut s, 3, 0.1, &cfg).unwrap();
        assert!((s.m[0] - 0.5 * cfg.beta1).abs() < 1e-15);
        assert!((s.v[0] - 0.25 * cfg.beta2).abs() < 1e-15);
    }

    #[test]
    fn first_step_moves_by_lr_against_gradient() {
        let cfg = AdamConfig { eps: 1e-8, ..Default::default() };
        for g in [3.0, -0.01, 250.0] {
            let mut p = vec![0.0];
            let mut s = Moments::zeros(1);
            adam_step("p", &mut p, &[g], &mut s, 1, 0.01, &cfg).unwrap();
            assert!((p[0] + 0.01 * g.signum()).abs() < 1e-8, "{g}: {}", p[0]);
        }
    }

    #[test]
    fn non_finite_gradient_names_tensor() {
        let mut p = vec![0.0];
        let mut s = Moments::zeros(1);
        let err = adam_step("decoder_w", &mut p, &[f64::NAN], &mut s, 1, 0.1, &AdamConfig::default()).unwrap_err();
        assert!(err.to_string().contains("decoder_w"));
    }

    /// Straight-line Adam on f(x, y) = (x − 3)² + 10 (y + 1)², written
    /// independently of `adam_step`.
    fn scripted_adam(iters: usize, lr: f64) -> [f64; 2] {
        let (b1, b2, eps) = (0.9f64, 0.99f64, 1e-15f64);
        let mut x = [0.0f64, 0.0];
        let mut m = [0.0f64; 2];
        let mut v = [0.0f64; 2];
        for t in 1..=iters {
            let g = [2.0 * (x[0] - 3.0), 20.0 * (x[1] + 1.0)];
            for i in 0..2 {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mh = m[i] / (1.0 - b1.powi(t as i32));
                let vh = v[i] / (1.0 - b2.powi(t as i32));
                x[i] -= lr * mh / (vh.sqrt() + eps);
            }
        }
        x
    }

    #[test]
    fn converges_on_quadratic_like_reference() {
        let cfg = AdamConfig::default();
        let mut x = vec![0.0, 0.0];
        let mut s = Moments::zeros(2);
        let lr = |t: usize| 0.05 * (1.0 - t as f64 / 2000.0).max(0.0) + 1e-4;
        for t in 1..=2000 {
            let g = [2.0 * (x[0] - 3.0), 20.0 * (x[1] + 1.0)];
            adam_step("x", &mut x, &g, &mut s, t as u64, lr(t), &cfg).unwrap();
        }
        let loss = (x[0] - 3.0f64).powi(2) + 10.0 * (x[1] + 1.0f64).powi(2);
        assert!(loss < 1e-6, "loss {loss}");
        // Constant-rate agreement with the scripted run, step for step.
        let mut y = vec![0.0, 0.0];
        let mut s2 = Moments::zeros(2);
        for t in 1..=500 {
            let g = [2.0 * (y[0] - 3.0), 20.0 * (y[1] + 1.0)];
            adam_step("y", &mut y, &g, &mut s2, t as u64, 0.01, &cfg).unwrap();
        }
        let reference = scripted_adam(500, 0.01);
        assert!((y[0] - reference[0]).abs() < 1e-12 && (y[1] - reference[1]).abs() < 1e-12);
    }
}
