//! Censored survival tables, power-law tail fits, two-sample KS tests and
//! interval estimates.

pub mod concentration;
pub mod fit;
pub mod ks;
pub mod marginal;
pub mod survival;

use serde::{Deserialize, Serialize};

pub use concentration::{concentration_bound_check, ConcentrationReport};
pub use fit::{fit_tail, fit_tail_with, FitOptions, TailFit};
pub use ks::{ks_two_sample, KsReport};
pub use marginal::{marginal_distance_bp_vs_sde, MarginalConfig, MarginalReport};
pub use survival::{build_survival, Sample, SurvivalTable, DEFAULT_GRID_BASE};

/// Two-sided 95% normal quantile.
pub const Z95: f64 = 1.959_963_984_540_054;

/// A binomial proportion with its Wilson score interval.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Proportion {
    pub successes: u64,
    pub trials: u64,
    pub estimate: f64,
    pub lo: f64,
    pub hi: f64,
}

pub fn wilson(successes: u64, trials: u64, z: f64) -> Proportion {
    if trials == 0 {
        return Proportion {
            successes,
            trials,
            estimate: f64::NAN,
            lo: 0.0,
            hi: 1.0,
        };
    }
    let n = trials as f64;
    let p = successes as f64 / n;
    let z2 = z * z;
    let denom = 1.0 + z2 / n;
    let center = (p + z2 / (2.0 * n)) / denom;
    let half = z * (p * (1.0 - p) / n + z2 / (4.0 * n * n)).sqrt() / denom;
    Proportion {
        successes,
        trials,
        estimate: p,
        lo: (center - half).max(0.0),
        hi: (center + half).min(1.0),
    }
}

/// Sample mean and its standard error.
pub fn mean_se(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, f64::NAN);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn wilson_reference_values() {
        // 8 of 10 at 95%: (0.4902, 0.9433).
        let w = wilson(8, 10, Z95);
        assert!((w.lo - 0.4902).abs() < 1e-4 && (w.hi - 0.9433).abs() < 1e-4);
        let z = wilson(0, 1000, Z95);
        assert!(z.lo < 1e-15);
        assert!(z.hi > 0.0 && z.hi < 0.004);
    }

    #[test]
    fn mean_se_small() {
        let (m, se) = mean_se(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((se - (1.0f64 / 3.0).sqrt()).abs() < 1e-15);
    }
}
