//! Building blocks shared by PACT and the baselines.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use super::params::{Bound, ParamSpec};
use crate::data::FEATURES;
use crate::error::{Error, Result};
use crate::numerics::{Adjacency, Tape, Var};

pub fn linear_specs(prefix: &str, fan_in: usize, fan_out: usize) -> Vec<ParamSpec> {
    vec![
        ParamSpec::weight(format!("{prefix}.w"), fan_in, fan_out),
        ParamSpec::filled(format!("{prefix}.b"), 1, fan_out, 0.0),
    ]
}

pub fn linear(t: &mut Tape, p: &Bound, prefix: &str, x: Var) -> Result<Var> {
    let y = t.matmul(x, p.var(&format!("{prefix}.w"))?)?;
    t.add_row(y, p.var(&format!("{prefix}.b"))?)
}

/// Two-layer perceptron `in → hidden → out` with a LeakyReLU in between.
pub fn mlp2_specs(prefix: &str, fan_in: usize, hidden: usize, out: usize) -> Vec<ParamSpec> {
    let mut s = linear_specs(&format!("{prefix}.0"), fan_in, hidden);
    s.extend(linear_specs(&format!("{prefix}.1"), hidden, out));
    s
}

pub fn mlp2(t: &mut Tape, p: &Bound, prefix: &str, x: Var, slope: f64) -> Result<Var> {
    let h = linear(t, p, &format!("{prefix}.0"), x)?;
    let h = t.leaky_relu(h, slope);
    linear(t, p, &format!("{prefix}.1"), h)
}

/// Q/K/V projections without bias and an output projection with bias.
pub fn mha_specs(prefix: &str, d: usize) -> Vec<ParamSpec> {
    let mut s: Vec<ParamSpec> = ["wq", "wk", "wv"]
        .iter()
        .map(|n| ParamSpec::weight(format!("{prefix}.{n}"), d, d))
        .collect();
    s.extend(linear_specs(&format!("{prefix}.o"), d, d));
    s
}

/// Multi-head attention of `q_in` over `kv_in`, both grouped into `groups`
/// independent blocks. Returns the projected output and the attention node.
pub fn mha(
    t: &mut Tape,
    p: &Bound,
    prefix: &str,
    q_in: Var,
    kv_in: Var,
    groups: usize,
    heads: usize,
) -> Result<(Var, Var)> {
    let q = t.matmul(q_in, p.var(&format!("{prefix}.wq"))?)?;
    let k = t.matmul(kv_in, p.var(&format!("{prefix}.wk"))?)?;
    let v = t.matmul(kv_in, p.var(&format!("{prefix}.wv"))?)?;
    let a = t.attention(q, k, v, groups, heads)?;
    Ok((linear(t, p, &format!("{prefix}.o"), a)?, a))
}

pub fn sage_specs(layers: usize, d: usize) -> Vec<ParamSpec> {
    (0..layers)
        .flat_map(|l| {
            let d_in = if l == 0 { FEATURES } else { d };
            linear_specs(&format!("sage.{l}"), 2 * d_in, d)
        })
        .collect()
}

/// Mean-aggregator GraphSAGE: `h ← φ([h ∥ mean_{j∈N(i)} h_j] W + b)`,
/// applied to every stacked graph with the same weights.
pub fn graphsage(
    t: &mut Tape,
    p: &Bound,
    layers: usize,
    slope: f64,
    dropout: f64,
    x: Var,
    adj: &Arc<Adjacency>,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<Var> {
    if t.value(x).cols() != FEATURES {
        return Err(Error::InvalidShape(format!(
            "node features have width {}, expected {FEATURES}",
            t.value(x).cols()
        )));
    }
    let mut h = x;
    for l in 0..layers {
        let m = t.neighbor_mean(h, adj.clone())?;
        let z = t.concat_cols(h, m)?;
        let z = linear(t, p, &format!("sage.{l}"), z)?;
        let z = t.leaky_relu(z, slope);
        h = t.dropout(z, dropout, rng.as_deref_mut());
    }
    Ok(h)
}
