use super::{TrainConfig, TrainError};

/// Number of warmup steps for a run of `total` steps.
///
/// `round(warmup_fraction · total)`, at least 1 when the fraction is positive
/// and at most `total − 1` so the decay phase can reach zero at `total`.
pub fn warmup_steps(total: usize, config: &TrainConfig) -> usize {
    if config.warmup_fraction <= 0.0 || total < 2 {
        return 0;
    }
    let w = (config.warmup_fraction * total as f64).round() as usize;
    w.clamp(1, total - 1)
}

/// Learning rate at step `t` of `total`: linear rise from 0 to the peak over
/// the warmup steps, then linear decay to exactly 0 at `total`.
pub fn lr_at_step(t: usize, total: usize, config: &TrainConfig) -> Result<f64, TrainError> {
    if total == 0 {
        return Err(TrainError::Config("total steps must be positive".into()));
    }
    if t > total {
        return Err(TrainError::Config(format!("step {t} beyond total {total}")));
    }
    let peak = config.peak_lr;
    let w = warmup_steps(total, config);
    Ok(if w > 0 && t <= w {
        peak * t as f64 / w as f64
    } else {
        peak * (total - t) as f64 / (total - w) as f64
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(frac: f64) -> TrainConfig {
        TrainConfig {
            warmup_fraction: frac,
            peak_lr: 2e-3,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn boundaries_and_midpoint() {
        let c = cfg(0.1);
        assert_eq!(warmup_steps(100, &c), 10);
        assert_eq!(lr_at_step(10, 100, &c).unwrap(), 2e-3);
        assert_eq!(lr_at_step(100, 100, &c).unwrap(), 0.0);
        assert_eq!(lr_at_step(0, 100, &c).unwrap(), 0.0);
        let mid = lr_at_step(55, 100, &c).unwrap();
        assert!((mid - 1e-3).abs() < 1e-18);
    }

    #[test]
    fn no_warmup_starts_at_peak() {
        let c = cfg(0.0);
        assert_eq!(lr_at_step(0, 20, &c).unwrap(), 2e-3);
        assert_eq!(lr_at_step(20, 20, &c).unwrap(), 0.0);
    }

    #[test]
    fn tiny_fractions_still_warm_up() {
        let c = cfg(0.001);
        assert_eq!(warmup_steps(50, &c), 1);
        assert_eq!(lr_at_step(1, 50, &c).unwrap(), 2e-3);
        assert_eq!(warmup_steps(1, &c), 0);
    }

    #[test]
    fn rejects_bad_steps() {
        let c = cfg(0.1);
        assert!(lr_at_step(0, 0, &c).is_err());
        assert!(lr_at_step(11, 10, &c).is_err());
    }

    #[test]
    fn single_peak_and_nonnegative() {
        let c = cfg(0.25);
        let total = 37;
        let lrs: Vec<f64> = (0..=total).map(|t| lr_at_step(t, total, &c).unwrap()).collect();
        let w = warmup_steps(total, &c);
        assert!(lrs.iter().all(|&l| l >= 0.0));
        assert!(lrs[..=w].windows(2).all(|p| p[0] < p[1]));
        assert!(lrs[w..].windows(2).all(|p| p[0] > p[1]));
        assert_eq!(lrs[w], c.peak_lr);
    }
}
