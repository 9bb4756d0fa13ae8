//! First-order optimizers over a flat list of parameter tensors.
//!
//! Both add weight decay to the gradient: `g + lambda * p`.

use super::config::OptimizerKind;
use crate::error::{Error, Result};
use crate::tensor::DenseTensor;

fn check_pairs(params: &[&mut DenseTensor], grads: &[DenseTensor]) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::shape(format!("{} parameter tensors but {} gradients", params.len(), grads.len())));
    }
    params.iter().zip(grads).try_for_each(|(p, g)| p.same_shape(g))
}

fn check_rate(lr: f64) -> Result<()> {
    if lr > 0.0 && lr.is_finite() {
        Ok(())
    } else {
        Err(Error::config(format!("learning rate must be positive, got {lr}")))
    }
}

/// `p <- p - lr * (g + weight_decay * p)`.
pub fn sgd_step(params: &mut [&mut DenseTensor], grads: &[DenseTensor], lr: f64, weight_decay: f64) -> Result<()> {
    check_rate(lr)?;
    check_pairs(params, grads)?;
    for (p, g) in params.iter_mut().zip(grads) {
        for (pv, &gv) in p.data_mut().iter_mut().zip(g.data()) {
            *pv -= lr * (gv + weight_decay * *pv);
        }
    }
    Ok(())
}

/// Adam with bias-corrected moments.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    t: u64,
    m: Vec<DenseTensor>,
    v: Vec<DenseTensor>,
}

impl Adam {
    pub fn new(lr: f64, weight_decay: f64) -> Result<Self> {
        check_rate(lr)?;
        Ok(Adam { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay, t: 0, m: vec![], v: vec![] })
    }

    pub fn steps(&self) -> u64 {
        self.t
    }

    pub fn step(&mut self, params: &mut [&mut DenseTensor], grads: &[DenseTensor]) -> Result<()> {
        check_pairs(params, grads)?;
        if self.m.is_empty() {
            self.m = grads.iter().map(|g| DenseTensor::zeros(g.shape())).collect::<Result<_>>()?;
            self.v = self.m.clone();
        } else if self.m.len() != grads.len() {
            return Err(Error::shape("parameter list changed between Adam steps"));
        }
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        for (((p, g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            let (pd, md, vd) = (p.data_mut(), m.data_mut(), v.data_mut());
            for (idx, &gv) in g.data().iter().enumerate() {
                let g = gv + self.weight_decay * pd[idx];
                md[idx] = self.beta1 * md[idx] + (1.0 - self.beta1) * g;
                vd[idx] = self.beta2 * vd[idx] + (1.0 - self.beta2) * g * g;
                let m_hat = md[idx] / c1;
                let v_hat = vd[idx] / c2;
                pd[idx] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Optimizer {
    Sgd { lr: f64, weight_decay: f64 },
    Adam(Adam),
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, weight_decay: f64) -> Result<Self> {
        check_rate(lr)?;
        Ok(match kind {
            OptimizerKind::Sgd => Optimizer::Sgd { lr, weight_decay },
            OptimizerKind::Adam => Optimizer::Adam(Adam::new(lr, weight_decay)?),
        })
    }

    pub fn step(&mut self, params: &mut [&mut DenseTensor], grads: &[DenseTensor]) -> Result<()> {
        match self {
            Optimizer::Sgd { lr, weight_decay } => sgd_step(params, grads, *lr, *weight_decay),
            Optimizer::Adam(adam) => adam.step(params, grads),
        }
    }
}
