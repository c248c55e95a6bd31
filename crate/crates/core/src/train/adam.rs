use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamStore;
use crate::numerics::Tensor;

/// Adam moments for every parameter block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Completed updates.
    pub step: u64,
    /// Weight decay added to the update directly instead of the gradient.
    pub decoupled: bool,
    m: BTreeMap<String, Tensor>,
    v: BTreeMap<String, Tensor>,
}

impl Adam {
    pub fn new(params: &ParamStore) -> Self {
        let zeros = |t: &Tensor| Tensor::zeros(t.rows(), t.cols());
        Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            decoupled: false,
            m: params.iter().map(|(k, t)| (k.clone(), zeros(t))).collect(),
            v: params.iter().map(|(k, t)| (k.clone(), zeros(t))).collect(),
        }
    }

    /// One bias-corrected update. Every gradient is checked before any
    /// parameter moves, so a non-finite gradient leaves the model untouched.
    pub fn update(
        &mut self,
        params: &mut ParamStore,
        grads: &BTreeMap<String, Tensor>,
        lr: f64,
        weight_decay: f64,
    ) -> Result<()> {
        for (name, p) in params.iter() {
            let g = grads
                .get(name)
                .ok_or_else(|| Error::InvalidInput(format!("no gradient for parameter {name}")))?;
            if g.shape() != p.shape() {
                return Err(Error::InvalidShape(format!(
                    "gradient {:?} for parameter {name} {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            if !g.is_finite() {
                return Err(Error::NonFinite(format!("gradient of parameter {name}")));
            }
        }
        self.step += 1;
        let bc1 = 1.0 - self.beta1.powi(self.step as i32);
        let bc2 = 1.0 - self.beta2.powi(self.step as i32);
        for (name, p) in params.iter_mut() {
            let g = grads[name].data();
            let m = self.m.get_mut(name).expect("moments mirror parameters").data_mut();
            let v = self.v.get_mut(name).expect("moments mirror parameters").data_mut();
            for (i, theta) in p.data_mut().iter_mut().enumerate() {
                let gi = if self.decoupled { g[i] } else { g[i] + weight_decay * *theta };
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * gi;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * gi * gi;
                let mut delta = lr * (m[i] / bc1) / ((v[i] / bc2).sqrt() + self.eps);
                if self.decoupled {
                    delta += lr * weight_decay * *theta;
                }
                *theta -= delta;
            }
        }
        Ok(())
    }
}
