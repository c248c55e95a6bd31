//! Peak-aware objective: bulk MSE, MSE over samples whose 6 h peak reaches a
//! frozen training quantile, and a Charbonnier penalty on slope errors.

use serde::{Deserialize, Serialize};

use crate::data::HORIZON;
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossConfig {
    pub lambda_tail: f64,
    pub lambda_slope: f64,
    /// Fraction `ρ` of training peaks above the tail threshold.
    pub tail_fraction: f64,
    /// Charbonnier `ε`, meters.
    pub epsilon: f64,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_tail: 0.5,
            lambda_slope: 0.2,
            tail_fraction: 0.05,
            epsilon: 1e-3,
        }
    }
}

impl LossConfig {
    /// Plain MSE: both auxiliary weights zero.
    pub fn mse_only() -> Self {
        LossConfig {
            lambda_tail: 0.0,
            lambda_slope: 0.0,
            ..LossConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda_tail >= 0.0) || !(self.lambda_slope >= 0.0) {
            return Err(Error::InvalidConfig("loss weights must be non-negative".into()));
        }
        if !(self.tail_fraction > 0.0 && self.tail_fraction < 1.0) {
            return Err(Error::InvalidConfig("tail_fraction must lie in (0, 1)".into()));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidConfig("epsilon must be positive".into()));
        }
        Ok(())
    }
}

/// Loss terms of one batch. `total = mse + λ_tail·tail + λ_slope·slope`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub mse: f64,
    pub tail: f64,
    pub slope: f64,
    pub total: f64,
    pub tail_count: usize,
}

/// Lower order statistic at index `ceil(q·n) − 1`, clamped to `[0, n−1]`.
pub fn lower_quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidInput("quantile of an empty set".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("quantile input".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    let idx = ((q * n as f64).ceil() as i64 - 1).clamp(0, n as i64 - 1) as usize;
    Ok(sorted[idx])
}

/// `τ_tail`: the `(1−ρ)` quantile of training peak scores.
pub fn fit_tail_threshold(peaks: &[f64], rho: f64) -> Result<f64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::InvalidConfig(format!("tail fraction {rho} outside (0, 1)")));
    }
    lower_quantile(peaks, 1.0 - rho)
}

fn check_pair(pred: &Tensor, target: &Tensor) -> Result<()> {
    if pred.shape() != target.shape() || pred.cols() != HORIZON || pred.rows() == 0 {
        return Err(Error::InvalidShape(format!(
            "predictions {:?} vs targets {:?}, expected [B, 6]",
            pred.shape(),
            target.shape()
        )));
    }
    Ok(())
}

pub fn mse_loss(pred: &Tensor, target: &Tensor) -> Result<f64> {
    check_pair(pred, target)?;
    let mut s = 0.0;
    for (a, b) in pred.data().iter().zip(target.data()) {
        s += (a - b) * (a - b);
    }
    Ok(s / pred.len() as f64)
}

/// Mean per-sample MSE over samples with `peak ≥ τ`, and their count.
pub fn tail_loss(pred: &Tensor, target: &Tensor, peaks: &[f64], tau: f64) -> Result<(f64, usize)> {
    check_pair(pred, target)?;
    if peaks.len() != pred.rows() {
        return Err(Error::InvalidShape(format!("{} peaks for {} samples", peaks.len(), pred.rows())));
    }
    let mut s = 0.0;
    let mut count = 0;
    for (b, &pk) in peaks.iter().enumerate() {
        if pk >= tau {
            count += 1;
            for (x, y) in pred.row(b).iter().zip(target.row(b)) {
                s += (x - y) * (x - y);
            }
        }
    }
    if count == 0 {
        return Ok((0.0, 0));
    }
    Ok((s / (count * HORIZON) as f64, count))
}

/// Mean of `√(e² + ε²)` over the five slope errors of every sample.
///
/// The floor ε is taken out of each term and added back after averaging so
/// that zero slope errors give exactly ε.
pub fn slope_loss(pred: &Tensor, target: &Tensor, eps: f64) -> Result<f64> {
    check_pair(pred, target)?;
    let mut s = 0.0;
    for b in 0..pred.rows() {
        let (p, y) = (pred.row(b), target.row(b));
        for h in 1..HORIZON {
            let e = (p[h] - p[h - 1]) - (y[h] - y[h - 1]);
            s += (e * e + eps * eps).sqrt() - eps;
        }
    }
    Ok(s / (pred.rows() * (HORIZON - 1)) as f64 + eps)
}

fn require_tau(cfg: &LossConfig, tau: Option<f64>) -> Result<()> {
    if cfg.lambda_tail > 0.0 && tau.is_none() {
        return Err(Error::InvalidConfig("lambda_tail > 0 needs a fitted tail threshold".into()));
    }
    Ok(())
}

/// Loss terms evaluated directly on values.
pub fn combined_loss(
    pred: &Tensor,
    target: &Tensor,
    peaks: &[f64],
    cfg: &LossConfig,
    tau: Option<f64>,
) -> Result<LossBreakdown> {
    require_tau(cfg, tau)?;
    let mse = mse_loss(pred, target)?;
    let (tail, tail_count) = match tau {
        Some(t) => tail_loss(pred, target, peaks, t)?,
        None => (0.0, 0),
    };
    let slope = slope_loss(pred, target, cfg.epsilon)?;
    let mut total = mse;
    if cfg.lambda_tail > 0.0 {
        total += cfg.lambda_tail * tail;
    }
    if cfg.lambda_slope > 0.0 {
        total += cfg.lambda_slope * slope;
    }
    Ok(LossBreakdown {
        mse,
        tail,
        slope,
        total,
        tail_count,
    })
}

/// `[6 × 5]` first-difference matrix: `(x·D)[h] = x[h+1] − x[h]`.
fn difference_matrix() -> Tensor {
    let mut d = vec![0.0; HORIZON * (HORIZON - 1)];
    for h in 0..HORIZON - 1 {
        d[h * (HORIZON - 1) + h] = -1.0;
        d[(h + 1) * (HORIZON - 1) + h] = 1.0;
    }
    Tensor::from_rows(HORIZON, HORIZON - 1, d).expect("static shape")
}

/// Records the combined objective on the tape and returns its root with the
/// breakdown. Terms whose weight is zero are left out of the graph, so the
/// MSE-only objective is bitwise the plain MSE.
pub fn combined_loss_tape(
    t: &mut Tape,
    pred: Var,
    target: &Tensor,
    peaks: &[f64],
    cfg: &LossConfig,
    tau: Option<f64>,
) -> Result<(Var, LossBreakdown)> {
    require_tau(cfg, tau)?;
    check_pair(t.value(pred), target)?;
    if peaks.len() != target.rows() {
        return Err(Error::InvalidShape(format!("{} peaks for {} samples", peaks.len(), target.rows())));
    }
    let y = t.constant(target.clone());
    let diff = t.sub(pred, y)?;
    let sq = t.square(diff);
    let mse = t.mean(sq);
    let mut total = mse;

    let members: Vec<usize> = match tau {
        Some(tau) => (0..peaks.len()).filter(|&b| peaks[b] >= tau).collect(),
        None => Vec::new(),
    };
    let tail_count = members.len();
    let mut tail_value = 0.0;
    if tail_count > 0 {
        let rows = t.gather_rows(sq, members)?;
        let tail = t.mean(rows);
        tail_value = t.value(tail).item();
        if cfg.lambda_tail > 0.0 {
            let w = t.scale(tail, cfg.lambda_tail);
            total = t.add(total, w)?;
        }
    }

    let dm = t.constant(difference_matrix());
    let e = t.matmul(diff, dm)?;
    let e2 = t.square(e);
    let e2 = t.add_scalar(e2, cfg.epsilon * cfg.epsilon);
    let ch = t.sqrt(e2)?;
    let ch = t.add_scalar(ch, -cfg.epsilon);
    let slope = t.mean(ch);
    let slope = t.add_scalar(slope, cfg.epsilon);
    if cfg.lambda_slope > 0.0 {
        let w = t.scale(slope, cfg.lambda_slope);
        total = t.add(total, w)?;
    }
    let breakdown = LossBreakdown {
        mse: t.value(mse).item(),
        tail: tail_value,
        slope: t.value(slope).item(),
        total: t.value(total).item(),
        tail_count,
    };
    Ok((total, breakdown))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::numerics::grad_check;

    fn rows(data: &[[f64; 6]]) -> Tensor {
        Tensor::from_rows(data.len(), 6, data.concat()).unwrap()
    }

    fn random(rng: &mut ChaCha8Rng, b: usize) -> Tensor {
        Tensor::from_rows(b, 6, (0..6 * b).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    }

    #[test]
    fn threshold_examples() {
        let s: Vec<f64> = (1..=100).map(f64::from).collect();
        assert_eq!(fit_tail_threshold(&s, 0.05).unwrap(), 95.0);
        assert_eq!(fit_tail_threshold(&[0.3; 7], 0.05).unwrap(), 0.3);
        assert_eq!(fit_tail_threshold(&[0.2, 0.1], 0.5).unwrap(), 0.1);
        assert!(matches!(fit_tail_threshold(&[], 0.05), Err(Error::InvalidInput(_))));
        assert!(fit_tail_threshold(&s, 1.0).is_err());
    }

    #[test]
    fn constant_scores_put_everything_in_the_tail() {
        let y = rows(&[[0.3; 6], [0.3; 6]]);
        let tau = fit_tail_threshold(&[0.3, 0.3], 0.05).unwrap();
        let (_, n) = tail_loss(&y, &y, &[0.3, 0.3], tau).unwrap();
        assert_eq!(n, 2);
    }

    #[test]
    fn mse_examples() {
        let y = rows(&[[0.5, 0.1, -0.2, 0.0, 0.3, 0.9]]);
        assert_eq!(mse_loss(&y, &y).unwrap(), 0.0);
        let p = rows(&[[1.5, 0.1, -0.2, 0.0, 0.3, 0.9]]);
        assert!((mse_loss(&p, &y).unwrap() - 1.0 / 6.0).abs() < 1e-15);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (a, b) = (random(&mut rng, 4), random(&mut rng, 4));
        let doubled = a.zip_map(&b, |x, y| y + 2.0 * (x - y));
        let r = mse_loss(&doubled, &b).unwrap() / mse_loss(&a, &b).unwrap();
        assert!((r - 4.0).abs() < 1e-12);
        assert!(mse_loss(&a, &Tensor::zeros(4, 5)).is_err());
    }

    #[test]
    fn tail_examples() {
        let y = rows(&[[0.0; 6], [1.0; 6]]);
        let p = rows(&[[0.3; 6], [1.1; 6]]);
        assert_eq!(tail_loss(&p, &y, &[0.0, 1.0], 5.0).unwrap(), (0.0, 0));
        let (v, n) = tail_loss(&p, &y, &[0.0, 1.0], 0.5).unwrap();
        assert_eq!(n, 1);
        assert!((v - 0.01).abs() < 1e-15);
        let (v, n) = tail_loss(&p, &y, &[0.0, 1.0], f64::NEG_INFINITY).unwrap();
        assert_eq!(n, 2);
        assert_eq!(v, mse_loss(&p, &y).unwrap());
    }

    #[test]
    fn slope_examples() {
        let y = rows(&[[0.1, 0.4, 0.2, 0.5, 0.9, 0.3]]);
        assert_eq!(slope_loss(&y, &y, 1e-3).unwrap(), 1e-3);
        let shifted = y.map(|x| x + 0.7);
        assert!((slope_loss(&shifted, &y, 1e-3).unwrap() - 1e-3).abs() < 1e-15);
        // One slope error of 0.003 (step 2 → 3), the rest zero.
        let mut p = y.data().to_vec();
        for v in &mut p[3..] {
            *v += 0.003;
        }
        let p = rows(&[p.try_into().unwrap()]);
        let expect = ((9e-6f64 + 1e-6).sqrt() + 4.0 * 0.001) / 5.0;
        let got = slope_loss(&p, &y, 1e-3).unwrap();
        assert!((got - expect).abs() < 1e-15);
        assert!((got - 0.0014325).abs() < 1e-7);
    }

    fn tape_loss(p: &Tensor, y: &Tensor, peaks: &[f64], cfg: &LossConfig, tau: Option<f64>) -> LossBreakdown {
        let mut t = Tape::new();
        let v = t.param(p.clone());
        combined_loss_tape(&mut t, v, y, peaks, cfg, tau).unwrap().1
    }

    #[test]
    fn combined_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (p, y) = (random(&mut rng, 5), random(&mut rng, 5));
        let peaks: Vec<f64> = (0..5).map(|b| y.row(b).iter().copied().fold(f64::MIN, f64::max)).collect();
        let zero = tape_loss(&p, &y, &peaks, &LossConfig::mse_only(), Some(0.2));
        assert_eq!(zero.total.to_bits(), zero.mse.to_bits());
        assert_eq!(zero.total.to_bits(), mse_loss(&p, &y).unwrap().to_bits());

        let cfg = LossConfig {
            lambda_tail: 0.0,
            lambda_slope: 1.0,
            ..LossConfig::default()
        };
        assert!((tape_loss(&y, &y, &peaks, &cfg, None).total - 1e-3).abs() < 1e-15);

        let cfg = LossConfig::default();
        assert!(matches!(
            combined_loss(&p, &y, &peaks, &cfg, None),
            Err(Error::InvalidConfig(_))
        ));
    }

    #[test]
    fn combined_hand_batch() {
        // Sample 0 errors 0.2 everywhere (peak 1.0, in tail); sample 1 has one
        // error of 0.6 at the first lead (peak 0.1, not in tail).
        let y = rows(&[[1.0; 6], [0.1, 0.0, 0.0, 0.0, 0.0, 0.0]]);
        let p = rows(&[[1.2; 6], [0.7, 0.0, 0.0, 0.0, 0.0, 0.0]]);
        let cfg = LossConfig {
            lambda_tail: 0.5,
            lambda_slope: 0.0,
            ..LossConfig::default()
        };
        let mse = (6.0 * 0.04 + 0.36) / 12.0;
        let tail = 0.04;
        let b = tape_loss(&p, &y, &[1.0, 0.1], &cfg, Some(0.5));
        assert_eq!(b.tail_count, 1);
        assert!((b.mse - mse).abs() < 1e-15);
        assert!((b.tail - tail).abs() < 1e-15);
        assert!((b.total - (mse + 0.5 * tail)).abs() < 1e-15);
        let plain = combined_loss(&p, &y, &[1.0, 0.1], &cfg, Some(0.5)).unwrap();
        assert!((plain.total - b.total).abs() < 1e-15);
    }

    #[test]
    fn combined_loss_passes_grad_check() {
        let cfg = LossConfig {
            lambda_tail: 0.7,
            lambda_slope: 0.4,
            ..LossConfig::default()
        };
        for seed in 0..10 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (p, y) = (random(&mut rng, 4), random(&mut rng, 4));
            let peaks: Vec<f64> = (0..4).map(|b| y.row(b).iter().copied().fold(f64::MIN, f64::max)).collect();
            let tau = lower_quantile(&peaks, 0.5).unwrap();
            let err = grad_check(
                |t, v| Ok(combined_loss_tape(t, v, &y, &peaks, &cfg, Some(tau))?.0),
                &p,
                1e-5,
            )
            .unwrap();
            assert!(err < 1e-4, "seed {seed}: {err}");
        }
    }

    proptest! {
        #[test]
        fn breakdown_identity_and_agreement(seed in 0u64..10_000, lt in 0.0f64..2.0, ls in 0.0f64..2.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (p, y) = (random(&mut rng, 6), random(&mut rng, 6));
            let peaks: Vec<f64> = (0..6).map(|b| y.row(b).iter().copied().fold(f64::MIN, f64::max)).collect();
            let cfg = LossConfig { lambda_tail: lt, lambda_slope: ls, ..LossConfig::default() };
            let tau = Some(rng.random_range(-1.0..1.0));
            let b = tape_loss(&p, &y, &peaks, &cfg, tau);
            prop_assert!((b.total - (b.mse + lt * b.tail + ls * b.slope)).abs() < 1e-12);
            let plain = combined_loss(&p, &y, &peaks, &cfg, tau).unwrap();
            prop_assert!((plain.total - b.total).abs() < 1e-12);
            prop_assert_eq!(plain.tail_count, b.tail_count);
            prop_assert!(b.slope >= cfg.epsilon);
        }

        #[test]
        fn threshold_is_monotone_in_rho(vals in prop::collection::vec(-3.0f64..3.0, 1..60), r1 in 0.01f64..0.99, r2 in 0.01f64..0.99) {
            let (lo, hi) = if r1 <= r2 { (r1, r2) } else { (r2, r1) };
            prop_assert!(fit_tail_threshold(&vals, hi).unwrap() <= fit_tail_threshold(&vals, lo).unwrap());
        }

        #[test]
        fn slope_is_shift_invariant(seed in 0u64..10_000, shift in -5.0f64..5.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (p, y) = (random(&mut rng, 3), random(&mut rng, 3));
            let a = slope_loss(&p, &y, 1e-3).unwrap();
            let b = slope_loss(&p.map(|x| x + shift), &y.map(|x| x + shift), 1e-3).unwrap();
            prop_assert!((a - b).abs() < 1e-12);
        }
    }
}
