//! Graph baselines. Both see the station metadata through concatenation with
//! the pooled graph embedding.

use rand_chacha::ChaCha8Rng;

use super::batch::Batch;
use super::config::PactConfig;
use super::layers::{graphsage, linear, linear_specs, mlp2, mlp2_specs, sage_specs};
use super::params::{Bound, ParamSpec};
use crate::data::{HORIZON, INPUT_STEPS};
use crate::error::Result;
use crate::numerics::{Tape, Var};

/// Width of the pooled graph vector plus the metadata scalars.
fn pooled_width(cfg: &PactConfig) -> usize {
    cfg.d_model + 3
}

pub fn simple_gnn_specs(cfg: &PactConfig) -> Vec<ParamSpec> {
    let mut s = sage_specs(cfg.sage_layers, cfg.d_model);
    s.extend(mlp2_specs("head", pooled_width(cfg), cfg.d_model, HORIZON));
    s
}

/// GraphSAGE on `G_t` only → mean pool → perceptron to six outputs.
pub fn simple_gnn_forward(
    t: &mut Tape,
    p: &Bound,
    cfg: &PactConfig,
    batch: &Batch,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<Var> {
    let x = t.constant(batch.x_last.clone());
    let meta = t.constant(batch.meta.clone());
    let h = graphsage(t, p, cfg.sage_layers, cfg.leaky_slope, cfg.dropout, x, &batch.adjacency, rng)?;
    let pooled = t.group_mean(h, batch.nodes)?;
    let z = t.concat_cols(pooled, meta)?;
    mlp2(t, p, "head", z, cfg.leaky_slope)
}

pub fn stgnn_specs(cfg: &PactConfig) -> Vec<ParamSpec> {
    let hidden = cfg.d_model;
    let mut s = sage_specs(cfg.sage_layers, cfg.d_model);
    s.push(ParamSpec::weight("lstm.wx", pooled_width(cfg), 4 * hidden));
    s.push(ParamSpec::weight("lstm.wh", hidden, 4 * hidden));
    s.push(ParamSpec::filled("lstm.b", 1, 4 * hidden, 0.0));
    s.extend(linear_specs("out", hidden, HORIZON));
    s
}

/// Per-step pooled embeddings `[B·3 × (d+3)]` fed to the recurrent cell.
pub fn stgnn_pooled(
    t: &mut Tape,
    p: &Bound,
    cfg: &PactConfig,
    batch: &Batch,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<Var> {
    let x = t.constant(batch.x.clone());
    let meta = t.constant(batch.meta.clone());
    let h = graphsage(t, p, cfg.sage_layers, cfg.leaky_slope, cfg.dropout, x, &batch.adjacency, rng)?;
    let pooled = t.group_mean(h, batch.nodes)?;
    let meta = t.gather_rows(meta, (0..batch.size * INPUT_STEPS).map(|r| r / INPUT_STEPS).collect())?;
    t.concat_cols(pooled, meta)
}

/// LSTM over the three pooled steps; the final hidden state goes through a
/// linear map to six outputs. Gate column blocks are ordered i, f, g, o.
pub fn lstm_head(t: &mut Tape, p: &Bound, cfg: &PactConfig, pooled: Var, batch_size: usize) -> Result<Var> {
    let hidden = cfg.d_model;
    let mut h: Option<Var> = None;
    let mut c: Option<Var> = None;
    for step in 0..INPUT_STEPS {
        let xs = t.gather_rows(pooled, (0..batch_size).map(|b| b * INPUT_STEPS + step).collect())?;
        let mut z = t.matmul(xs, p.var("lstm.wx")?)?;
        if let Some(hp) = h {
            let r = t.matmul(hp, p.var("lstm.wh")?)?;
            z = t.add(z, r)?;
        }
        let z = t.add_row(z, p.var("lstm.b")?)?;
        let gate = |t: &mut Tape, k: usize| t.slice_cols(z, k * hidden, (k + 1) * hidden);
        let i = gate(t, 0)?;
        let i = t.sigmoid(i);
        let f = gate(t, 1)?;
        let f = t.sigmoid(f);
        let g = gate(t, 2)?;
        let g = t.tanh(g);
        let o = gate(t, 3)?;
        let o = t.sigmoid(o);
        let ig = t.mul(i, g)?;
        let cn = match c {
            Some(cp) => {
                let fc = t.mul(f, cp)?;
                t.add(fc, ig)?
            }
            None => ig,
        };
        let tc = t.tanh(cn);
        h = Some(t.mul(o, tc)?);
        c = Some(cn);
    }
    linear(t, p, "out", h.expect("three steps"))
}

pub fn stgnn_forward(
    t: &mut Tape,
    p: &Bound,
    cfg: &PactConfig,
    batch: &Batch,
    rng: Option<&mut ChaCha8Rng>,
) -> Result<Var> {
    let pooled = stgnn_pooled(t, p, cfg, batch, rng)?;
    lstm_head(t, p, cfg, pooled, batch.size)
}
