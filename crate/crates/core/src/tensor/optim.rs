use serde::{Deserialize, Serialize};

use super::{Tape, Tensor, Var};
use crate::error::{Error, Result};

/// Optimizer settings. Defaults: momentum 0.9, lr 0.01, weight decay 1e-4.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SgdConfig {
    pub learning_rate: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for SgdConfig {
    fn default() -> Self {
        SgdConfig {
            learning_rate: 0.01,
            momentum: 0.9,
            weight_decay: 1e-4,
            seed: 0,
        }
    }
}

impl SgdConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return Err(Error::Config(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            )));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(Error::Config(format!(
                "weight decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

/// Named learnable tensors, in a fixed order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ModelParams {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ModelParams {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) {
        let name = name.into();
        if let Some(i) = self.names.iter().position(|n| *n == name) {
            self.tensors[i] = tensor;
        } else {
            self.names.push(name);
            self.tensors.push(tensor);
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| &self.tensors[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(move |i| &mut self.tensors[i])
    }

    pub(crate) fn require(&self, name: &str) -> Result<&Tensor> {
        self.get(name)
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor)> {
        self.names.iter().map(String::as_str).zip(self.tensors.iter_mut())
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Puts every parameter on `tape`, returning handles in declaration order.
    pub fn register(&self, tape: &mut Tape) -> Vec<Var> {
        self.tensors.iter().map(|t| tape.param(t.clone())).collect()
    }

    /// Adds the tape gradients for `vars` (from [`ModelParams::register`])
    /// into each tensor's gradient buffer.
    pub fn accumulate_grads(&mut self, tape: &Tape, vars: &[Var]) {
        for (t, &v) in self.tensors.iter_mut().zip(vars) {
            let buf = t.grad_mut();
            if let Some(g) = tape.grad(v) {
                buf.iter_mut().zip(g).for_each(|(b, &x)| *b += x);
            }
        }
    }

    pub fn zero_grads(&mut self) {
        self.tensors.iter_mut().for_each(Tensor::zero_grad);
    }
}

/// Stochastic gradient descent with momentum and L2 weight decay.
#[derive(Clone, Debug)]
pub struct Sgd {
    config: SgdConfig,
    velocity: Vec<Vec<f64>>,
}

impl Sgd {
    pub fn new(config: SgdConfig) -> Result<Self> {
        config.validate()?;
        Ok(Sgd {
            config,
            velocity: Vec::new(),
        })
    }

    pub fn config(&self) -> &SgdConfig {
        &self.config
    }

    /// `v ← μ·v + (g + λ·p)`, `p ← p − lr·v`; gradients are zeroed afterwards.
    ///
    /// Nothing is modified when any gradient is non-finite.
    pub fn step(&mut self, params: &mut ModelParams) -> Result<()> {
        for (name, t) in params.iter() {
            if t.grad().is_some_and(|g| g.iter().any(|v| !v.is_finite())) {
                return Err(Error::TrainingDiverged(format!("non-finite gradient for `{name}`")));
            }
        }
        if self.velocity.len() != params.len() {
            self.velocity = params.tensors.iter().map(|t| vec![0.0; t.len()]).collect();
        }
        let SgdConfig {
            learning_rate: lr,
            momentum: mu,
            weight_decay: wd,
            ..
        } = self.config;
        for (t, vel) in params.tensors.iter_mut().zip(&mut self.velocity) {
            let Some(grad) = t.grad.take() else { continue };
            for ((p, &g), v) in t.data.iter_mut().zip(&grad).zip(vel.iter_mut()) {
                *v = mu * *v + (g + wd * *p);
                *p -= lr * *v;
            }
            t.grad = Some(vec![0.0; grad.len()]);
        }
        for (name, t) in params.iter() {
            t.check_finite(name)
                .map_err(|_| Error::TrainingDiverged(format!("non-finite value in `{name}`")))?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(value: f64, grad: f64) -> ModelParams {
        let mut p = ModelParams::new();
        let mut t = Tensor::vector(vec![value]).unwrap();
        t.grad_mut()[0] = grad;
        p.insert("w", t);
        p
    }

    #[test]
    fn zero_gradient_leaves_params() {
        let mut params = single(1.5, 0.0);
        let mut sgd = Sgd::new(SgdConfig {
            weight_decay: 0.0,
            ..Default::default()
        })
        .unwrap();
        sgd.step(&mut params).unwrap();
        assert_eq!(params.get("w").unwrap().data(), &[1.5]);
    }

    #[test]
    fn plain_step_is_exact() {
        let mut params = single(2.0, 0.25);
        let cfg = SgdConfig {
            learning_rate: 0.1,
            momentum: 0.0,
            weight_decay: 0.0,
            seed: 0,
        };
        Sgd::new(cfg).unwrap().step(&mut params).unwrap();
        assert_eq!(params.get("w").unwrap().data(), &[2.0 - 0.1 * 0.25]);
        assert_eq!(params.get("w").unwrap().grad().unwrap(), &[0.0]);
    }

    #[test]
    fn quadratic_converges_to_minimum() {
        let mut params = single(-4.0, 0.0);
        let mut sgd = Sgd::new(SgdConfig {
            learning_rate: 0.05,
            momentum: 0.9,
            weight_decay: 0.0,
            seed: 0,
        })
        .unwrap();
        for _ in 0..500 {
            let p = params.get("w").unwrap().data()[0];
            params.get_mut("w").unwrap().grad_mut()[0] = 2.0 * (p - 3.0);
            sgd.step(&mut params).unwrap();
        }
        assert!((params.get("w").unwrap().data()[0] - 3.0).abs() < 1e-9);
    }

    #[test]
    fn non_finite_gradient_diverges() {
        let mut params = single(1.0, f64::INFINITY);
        let err = Sgd::new(SgdConfig::default())
            .unwrap()
            .step(&mut params)
            .unwrap_err();
        assert!(matches!(err, Error::TrainingDiverged(ref n) if n.contains("`w`")));
        assert_eq!(params.get("w").unwrap().data(), &[1.0]);
    }

    #[test]
    fn config_validation() {
        let bad = SgdConfig {
            learning_rate: 0.0,
            ..Default::default()
        };
        assert!(Sgd::new(bad).is_err());
        let bad = SgdConfig {
            momentum: 1.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
