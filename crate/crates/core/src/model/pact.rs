//! The PACT network: shared GraphSAGE encoder → station cross-attention
//! readout → temporal encoder → horizon-query decoder → dual head.

use std::sync::Arc;

use rand_chacha::ChaCha8Rng;

use super::batch::Batch;
use super::config::PactConfig;
use super::layers::{graphsage, mha, mha_specs, mlp2, mlp2_specs, sage_specs};
use super::params::{Bound, ParamSpec};
use crate::data::{HORIZON, INPUT_STEPS};
use crate::error::{Error, Result};
use crate::numerics::{Adjacency, Tape, Var};

const LN_EPS: f64 = 1e-5;
pub const GATE_BIAS_INIT: f64 = -2.0;

pub fn pact_specs(cfg: &PactConfig) -> Vec<ParamSpec> {
    let d = cfg.d_model;
    let mut s = sage_specs(cfg.sage_layers, d);
    s.extend(mlp2_specs("readout.psi", 3, d, d));
    s.push(ParamSpec::filled("readout.q_base", 1, d, 0.0));
    s.extend(mha_specs("readout.attn", d));
    s.push(ParamSpec::filled("temporal.emb", INPUT_STEPS, d, 0.0));
    for l in 0..cfg.temporal_layers {
        s.extend(mha_specs(&format!("temporal.{l}.attn"), d));
        s.extend(mlp2_specs(&format!("temporal.{l}.ff"), d, cfg.ff_width, d));
        for ln in ["ln1", "ln2"] {
            s.push(ParamSpec::filled(format!("temporal.{l}.{ln}.g"), 1, d, 1.0));
            s.push(ParamSpec::filled(format!("temporal.{l}.{ln}.b"), 1, d, 0.0));
        }
    }
    s.push(ParamSpec::filled("horizon.queries", HORIZON, d, 0.0));
    s.extend(mha_specs("horizon.attn", d));
    s.extend(mlp2_specs("head.base", d, d, 1));
    if cfg.use_dual_head {
        s.extend(mlp2_specs("head.tail", d, d, 1));
        s.extend(mlp2_specs("head.gate", d, d, 1));
        for spec in &mut s {
            if spec.name == "head.gate.1.b" {
                *spec = ParamSpec::filled("head.gate.1.b", 1, 1, GATE_BIAS_INIT);
            }
        }
        s.push(ParamSpec::filled("head.alpha_logit", 1, 1, 0.0));
    }
    s
}

/// Station-conditioned cross-attention readout of node embeddings.
///
/// `u` holds `groups_per_sample` graphs of `nodes` rows for each of the
/// `meta.rows()` samples. Returns one `d`-vector per graph and the attention
/// node.
pub fn station_readout(
    t: &mut Tape,
    p: &Bound,
    cfg: &PactConfig,
    u: Var,
    meta: Var,
    graphs_per_sample: usize,
) -> Result<(Var, Var)> {
    let b = t.value(meta).rows();
    let graphs = b * graphs_per_sample;
    if graphs == 0 || t.value(u).rows() == 0 || t.value(u).rows() % graphs != 0 {
        return Err(Error::InvalidInput(format!(
            "{} node rows do not form {graphs} non-empty graphs",
            t.value(u).rows()
        )));
    }
    let psi = mlp2(t, p, "readout.psi", meta, cfg.leaky_slope)?;
    let q = t.add_row(psi, p.var("readout.q_base")?)?;
    let q = t.gather_rows(q, (0..graphs).map(|g| g / graphs_per_sample).collect())?;
    mha(t, p, "readout.attn", q, u, graphs, cfg.heads)
}

fn layer_norm_affine(t: &mut Tape, p: &Bound, prefix: &str, x: Var) -> Result<Var> {
    let y = t.layer_norm(x, LN_EPS);
    let y = t.mul_row(y, p.var(&format!("{prefix}.g"))?)?;
    t.add_row(y, p.var(&format!("{prefix}.b"))?)
}

/// Adds temporal embeddings to `[B·3 × d]` tokens and runs the post-LN
/// encoder. Returns the encoded tokens and each layer's attention node.
pub fn temporal_encode(
    t: &mut Tape,
    p: &Bound,
    cfg: &PactConfig,
    tokens: Var,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<(Var, Vec<Var>)> {
    let rows = t.value(tokens).rows();
    if rows == 0 || rows % INPUT_STEPS != 0 {
        return Err(Error::InvalidShape(format!("{rows} temporal tokens, expected a multiple of 3")));
    }
    let b = rows / INPUT_STEPS;
    let emb = t.gather_rows(p.var("temporal.emb")?, (0..rows).map(|r| r % INPUT_STEPS).collect())?;
    let mut x = t.add(tokens, emb)?;
    let mut attn = Vec::with_capacity(cfg.temporal_layers);
    for l in 0..cfg.temporal_layers {
        let (a, probs) = mha(t, p, &format!("temporal.{l}.attn"), x, x, b, cfg.heads)?;
        attn.push(probs);
        let a = t.dropout(a, cfg.dropout, rng.as_deref_mut());
        let x1 = t.add(x, a)?;
        let x1 = layer_norm_affine(t, p, &format!("temporal.{l}.ln1"), x1)?;
        let f = mlp2(t, p, &format!("temporal.{l}.ff"), x1, cfg.leaky_slope)?;
        let f = t.dropout(f, cfg.dropout, rng.as_deref_mut());
        let x2 = t.add(x1, f)?;
        x = layer_norm_affine(t, p, &format!("temporal.{l}.ln2"), x2)?;
    }
    Ok((x, attn))
}

/// Six learned horizon queries attend over each sample's three encoded
/// tokens: `[B·3 × d] → [B·6 × d]`.
pub fn horizon_decode(
    t: &mut Tape,
    p: &Bound,
    cfg: &PactConfig,
    h: Var,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<(Var, Var)> {
    let rows = t.value(h).rows();
    if rows == 0 || rows % INPUT_STEPS != 0 {
        return Err(Error::InvalidShape(format!("{rows} memory rows, expected a multiple of 3")));
    }
    let b = rows / INPUT_STEPS;
    let q = t.gather_rows(p.var("horizon.queries")?, (0..b * HORIZON).map(|r| r % HORIZON).collect())?;
    let (c, probs) = mha(t, p, "horizon.attn", q, h, b, cfg.heads)?;
    Ok((t.dropout(c, cfg.dropout, rng), probs))
}

/// Outputs of the dual head, each `[B·6 × 1]` except `gate` (`[B × 1]`) and
/// `alpha` (`[1 × 1]`).
#[derive(Debug, Clone, Copy)]
pub struct HeadOutput {
    pub y: Var,
    pub base: Var,
    pub tail: Var,
    pub gate: Var,
    pub alpha: Var,
}

/// `ŷ = ŷ_base + g·α·c·tanh(r/c)` with one gate per sample computed from the
/// mean context vector. Without the dual head, `ŷ = ŷ_base`.
pub fn dual_head(t: &mut Tape, p: &Bound, cfg: &PactConfig, c: Var) -> Result<HeadOutput> {
    let rows = t.value(c).rows();
    if rows == 0 || rows % HORIZON != 0 {
        return Err(Error::InvalidShape(format!("{rows} context rows, expected a multiple of 6")));
    }
    let b = rows / HORIZON;
    let base = mlp2(t, p, "head.base", c, cfg.leaky_slope)?;
    if !cfg.use_dual_head {
        let zero = t.scale(base, 0.0);
        let gate = t.constant(crate::numerics::Tensor::zeros(b, 1));
        let alpha = t.constant(crate::numerics::Tensor::zeros(1, 1));
        return Ok(HeadOutput {
            y: base,
            base,
            tail: zero,
            gate,
            alpha,
        });
    }
    let r = mlp2(t, p, "head.tail", c, cfg.leaky_slope)?;
    let r = t.scale(r, 1.0 / cfg.tail_clip);
    let r = t.tanh(r);
    let tail = t.scale(r, cfg.tail_clip);
    let pooled = t.group_mean(c, HORIZON)?;
    let logit = mlp2(t, p, "head.gate", pooled, cfg.leaky_slope)?;
    let gate = t.sigmoid(logit);
    let alpha = t.sigmoid(p.var("head.alpha_logit")?);
    let g = t.gather_rows(gate, (0..rows).map(|r| r / HORIZON).collect())?;
    let ga = t.mul_row(g, alpha)?;
    let corr = t.mul(ga, tail)?;
    let y = t.add(base, corr)?;
    Ok(HeadOutput {
        y,
        base,
        tail,
        gate,
        alpha,
    })
}

/// Every intermediate a caller may want to inspect.
#[derive(Debug, Clone)]
pub struct PactOutput {
    /// `[B × 6]`
    pub y: Var,
    pub head: HeadOutput,
    /// GraphSAGE embeddings `[B·3·N × d]`.
    pub nodes: Var,
    /// Readout vectors `[B·3 × d]`.
    pub readout: Var,
    pub readout_attn: Var,
    pub encoded: Var,
    pub temporal_attn: Vec<Var>,
    /// Context vectors `[B·6 × d]`.
    pub context: Var,
    pub decoder_attn: Var,
}

pub fn encode_nodes(
    t: &mut Tape,
    p: &Bound,
    cfg: &PactConfig,
    x: Var,
    adj: &Arc<Adjacency>,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<Var> {
    graphsage(t, p, cfg.sage_layers, cfg.leaky_slope, cfg.dropout, x, adj, rng)
}

pub fn pact_forward(
    t: &mut Tape,
    p: &Bound,
    cfg: &PactConfig,
    batch: &Batch,
    mut rng: Option<&mut ChaCha8Rng>,
) -> Result<PactOutput> {
    let x = t.constant(batch.x.clone());
    let meta = t.constant(batch.meta.clone());
    let nodes = encode_nodes(t, p, cfg, x, &batch.adjacency, rng.as_deref_mut())?;
    let (readout, readout_attn) = station_readout(t, p, cfg, nodes, meta, INPUT_STEPS)?;
    let (encoded, temporal_attn) = temporal_encode(t, p, cfg, readout, rng.as_deref_mut())?;
    let (context, decoder_attn) = horizon_decode(t, p, cfg, encoded, rng.as_deref_mut())?;
    let head = dual_head(t, p, cfg, context)?;
    let y = t.reshape(head.y, batch.size, HORIZON)?;
    Ok(PactOutput {
        y,
        head,
        nodes,
        readout,
        readout_attn,
        encoded,
        temporal_attn,
        context,
        decoder_attn,
    })
}
