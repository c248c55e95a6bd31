use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{Gradients, Tape, Tensor, Var};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Init {
    /// `U(−1/√fan_in, 1/√fan_in)` with `fan_in` = rows.
    FanIn,
    Const(f64),
}

/// Name, shape and initializer of one parameter block.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSpec {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub init: Init,
}

impl ParamSpec {
    pub fn weight(name: impl Into<String>, rows: usize, cols: usize) -> Self {
        ParamSpec {
            name: name.into(),
            rows,
            cols,
            init: Init::FanIn,
        }
    }

    pub fn filled(name: impl Into<String>, rows: usize, cols: usize, value: f64) -> Self {
        ParamSpec {
            name: name.into(),
            rows,
            cols,
            init: Init::Const(value),
        }
    }
}

/// Named parameter tensors in a stable (sorted) order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ParamStore {
    params: BTreeMap<String, Tensor>,
}

impl ParamStore {
    /// Draws every block in spec order from `rng`.
    pub fn init<R: Rng + ?Sized>(specs: &[ParamSpec], rng: &mut R) -> Self {
        let mut params = BTreeMap::new();
        for s in specs {
            let t = match s.init {
                Init::FanIn => {
                    let bound = 1.0 / (s.rows as f64).sqrt();
                    let data = (0..s.rows * s.cols).map(|_| rng.random_range(-bound..bound)).collect();
                    Tensor::from_rows(s.rows, s.cols, data).expect("spec shape")
                }
                Init::Const(v) => Tensor::filled(s.rows, s.cols, v),
            };
            params.insert(s.name.clone(), t);
        }
        ParamStore { params }
    }

    /// Checks that names and shapes match `specs` exactly.
    pub fn check(&self, specs: &[ParamSpec]) -> Result<()> {
        for s in specs {
            let t = self
                .params
                .get(&s.name)
                .ok_or_else(|| Error::Checkpoint(format!("missing parameter {}", s.name)))?;
            if t.shape() != [s.rows, s.cols] {
                return Err(Error::Checkpoint(format!(
                    "parameter {} has shape {:?}, expected [{}, {}]",
                    s.name,
                    t.shape(),
                    s.rows,
                    s.cols
                )));
            }
            if !t.is_finite() {
                return Err(Error::NonFinite(format!("parameter {}", s.name)));
            }
        }
        if self.params.len() != specs.len() {
            let known: Vec<&str> = specs.iter().map(|s| s.name.as_str()).collect();
            let extra: Vec<&String> = self.params.keys().filter(|k| !known.contains(&k.as_str())).collect();
            return Err(Error::Checkpoint(format!("unexpected parameters {extra:?}")));
        }
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) {
        self.params.insert(name.into(), value);
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Tensor)> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&String, &mut Tensor)> {
        self.params.iter_mut()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn scalar_count(&self) -> usize {
        self.params.values().map(Tensor::len).sum()
    }

    /// Registers every block as a trainable leaf of `tape`.
    pub fn bind(&self, tape: &mut Tape) -> Bound {
        Bound {
            vars: self.params.iter().map(|(k, v)| (k.clone(), tape.param(v.clone()))).collect(),
        }
    }

    /// Like [`ParamStore::bind`] but as constants, for inference.
    pub fn bind_frozen(&self, tape: &mut Tape) -> Bound {
        Bound {
            vars: self.params.iter().map(|(k, v)| (k.clone(), tape.constant(v.clone()))).collect(),
        }
    }
}

/// Tape handles of a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Bound {
    vars: BTreeMap<String, Var>,
}

impl Bound {
    /// Handles registered elsewhere, e.g. by a gradient checker.
    pub fn from_vars(vars: impl IntoIterator<Item = (String, Var)>) -> Self {
        Bound {
            vars: vars.into_iter().collect(),
        }
    }

    pub fn var(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::ContractViolation(format!("parameter {name} is not bound")))
    }

    pub fn iter(&self) -> impl Iterator<Item = (&String, &Var)> {
        self.vars.iter()
    }

    /// Per-parameter gradients; blocks the root does not depend on get zeros.
    pub fn grads(&self, tape: &Tape, g: &Gradients) -> BTreeMap<String, Tensor> {
        self.vars
            .iter()
            .map(|(k, &v)| {
                let grad = g.get(v).cloned().unwrap_or_else(|| {
                    let shape = tape.value(v).shape();
                    Tensor::zeros(shape[0], shape[1])
                });
                (k.clone(), grad)
            })
            .collect()
    }
}
