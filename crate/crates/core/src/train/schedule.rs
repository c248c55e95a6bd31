use super::TrainConfig;
use crate::error::{Error, Result};

/// Learning rate for a whole epoch: a linear ramp from 0 over the warmup
/// epochs, then cosine decay that reaches `min_lr` on the final epoch.
pub fn lr_at(cfg: &TrainConfig, epoch: usize) -> Result<f64> {
    if epoch >= cfg.epochs {
        return Err(Error::InvalidInput(format!("epoch {epoch} outside 0..{}", cfg.epochs)));
    }
    let (w, peak, min) = (cfg.warmup_epochs, cfg.peak_lr, cfg.min_lr);
    if epoch < w {
        return Ok(peak * epoch as f64 / w as f64);
    }
    if epoch == w {
        return Ok(peak);
    }
    let last = cfg.epochs - 1;
    if epoch == last {
        return Ok(min);
    }
    let phase = (epoch - w) as f64 / (last - w) as f64;
    Ok(min + 0.5 * (peak - min) * (1.0 + (std::f64::consts::PI * phase).cos()))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn paper() -> TrainConfig {
        TrainConfig::default()
    }

    #[test]
    fn endpoints() {
        let c = paper();
        assert_eq!(lr_at(&c, c.warmup_epochs).unwrap(), 0.005);
        assert!((lr_at(&c, c.epochs - 1).unwrap() - 1e-6).abs() <= 1e-12);
        assert_eq!(lr_at(&c, 0).unwrap(), 0.0);
        assert!((lr_at(&c, 3).unwrap() - 0.003).abs() < 1e-15);
        assert!(lr_at(&c, c.epochs).is_err());
        let long = TrainConfig { epochs: 300, ..paper() };
        assert!((lr_at(&long, 299).unwrap() - 1e-6).abs() <= 1e-12);
    }

    #[test]
    fn midpoint_is_mean_of_peak_and_min() {
        let c = paper();
        // Decay runs from epoch 5 to epoch 49; 27 is halfway.
        let mid = lr_at(&c, 27).unwrap();
        assert!((mid - (0.005 + 1e-6) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn no_warmup_starts_at_peak() {
        let c = TrainConfig { warmup_epochs: 0, epochs: 3, ..paper() };
        assert_eq!(lr_at(&c, 0).unwrap(), c.peak_lr);
        assert_eq!(lr_at(&c, 2).unwrap(), c.min_lr);
        let one = TrainConfig { warmup_epochs: 0, epochs: 1, ..paper() };
        assert_eq!(lr_at(&one, 0).unwrap(), one.peak_lr);
    }

    proptest! {
        #[test]
        fn ramps_up_then_never_increases(epochs in 2usize..400, w in 0usize..20) {
            prop_assume!(w < epochs);
            let c = TrainConfig { epochs, warmup_epochs: w, ..paper() };
            let lrs: Vec<f64> = (0..epochs).map(|e| lr_at(&c, e).unwrap()).collect();
            for e in 1..epochs {
                if e <= w {
                    prop_assert!(lrs[e] > lrs[e - 1]);
                } else {
                    prop_assert!(lrs[e] <= lrs[e - 1]);
                }
            }
            prop_assert!(lrs.iter().all(|&l| (0.0..=c.peak_lr).contains(&l)));
        }
    }
}
