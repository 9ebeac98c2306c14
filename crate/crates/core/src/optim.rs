//! Decoupled-weight-decay Adam.

use crate::error::{Error, Result};
use crate::model::ModelParams;
use crate::tensor::{Real, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Also decay normalization gains and biases.
    pub decay_norm_and_bias: bool,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 0.01,
            decay_norm_and_bias: false,
        }
    }
}

impl AdamWConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.eps > 0.0
            && self.weight_decay >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid optimizer settings {self:?}")))
        }
    }
}

/// Optimizer state: step count and per-tensor moment estimates.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamW<T: Real = f32> {
    config: AdamWConfig,
    t: u64,
    names: Vec<String>,
    decays: Vec<bool>,
    m: Vec<Tensor<T>>,
    v: Vec<Tensor<T>>,
}

impl<T: Real> AdamW<T> {
    /// Fresh state for tensors with the given names and shapes. Decay applies
    /// to `*.weight` tensors, or to all when `decay_norm_and_bias` is set.
    pub fn new(config: AdamWConfig, names: &[String], shapes: &[&[usize]]) -> Result<Self> {
        config.validate()?;
        if names.len() != shapes.len() {
            return Err(Error::Dimension(format!("{} names for {} tensors", names.len(), shapes.len())));
        }
        Ok(Self {
            config,
            t: 0,
            names: names.to_vec(),
            decays: names
                .iter()
                .map(|n| config.decay_norm_and_bias || n.ends_with(".weight"))
                .collect(),
            m: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
        })
    }

    pub fn for_params(config: AdamWConfig, params: &ModelParams<T>) -> Result<Self> {
        let shapes: Vec<&[usize]> = params.tensors().iter().map(Tensor::shape).collect();
        Self::new(config, params.names(), &shapes)
    }

    /// Rebuild from saved moments.
    pub fn from_parts(
        config: AdamWConfig,
        t: u64,
        names: &[String],
        m: Vec<Tensor<T>>,
        v: Vec<Tensor<T>>,
    ) -> Result<Self> {
        let shapes: Vec<&[usize]> = m.iter().map(Tensor::shape).collect();
        let mut s = Self::new(config, names, &shapes)?;
        if v.len() != m.len() || v.iter().zip(&m).any(|(a, b)| a.shape() != b.shape()) {
            return Err(Error::Dimension("first and second moments differ in shape".into()));
        }
        s.t = t;
        s.m = m;
        s.v = v;
        Ok(s)
    }

    pub fn config(&self) -> &AdamWConfig {
        &self.config
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    pub fn first_moments(&self) -> &[Tensor<T>] {
        &self.m
    }

    pub fn second_moments(&self) -> &[Tensor<T>] {
        &self.v
    }

    pub fn decays(&self) -> &[bool] {
        &self.decays
    }

    /// One update. Nothing is modified if any gradient is non-finite.
    pub fn step(&mut self, params: &mut [Tensor<T>], grads: &[Tensor<T>]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::Dimension(format!(
                "optimizer holds {} tensors, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, (p, g)) in params.iter().zip(grads).enumerate() {
            if p.shape() != self.m[i].shape() || g.shape() != self.m[i].shape() {
                return Err(Error::Dimension(format!(
                    "{}: param {:?} / grad {:?} / state {:?}",
                    self.names[i],
                    p.shape(),
                    g.shape(),
                    self.m[i].shape()
                )));
            }
            if let Some(j) = g.data().iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient of {} has non-finite value {:?} at element {j}",
                    self.names[i],
                    g.data()[j]
                )));
            }
        }
        self.t += 1;
        let c = self.config;
        let t = self.t as i32;
        let bc1 = T::of(1.0 - c.beta1.powi(t));
        let bc2 = T::of(1.0 - c.beta2.powi(t));
        let (b1, b2) = (T::of(c.beta1), T::of(c.beta2));
        let (one_b1, one_b2) = (T::of(1.0 - c.beta1), T::of(1.0 - c.beta2));
        let lr = T::of(c.lr);
        let eps = T::of(c.eps);
        for i in 0..params.len() {
            let decay = if self.decays[i] { T::of(c.lr * c.weight_decay) } else { T::zero() };
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            let g = grads[i].data();
            for (j, theta) in params[i].data_mut().iter_mut().enumerate() {
                m[j] = b1 * m[j] + one_b1 * g[j];
                v[j] = b2 * v[j] + one_b2 * g[j] * g[j];
                let m_hat = m[j] / bc1;
                let v_hat = v[j] / bc2;
                *theta = *theta - lr * m_hat / (v_hat.sqrt() + eps) - decay * *theta;
            }
        }
        Ok(())
    }
}
