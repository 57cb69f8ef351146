//! Distance between a rescaled branching-process marginal and the
//! corresponding diffusion marginal.

use serde::{Deserialize, Serialize};

use super::ks::{ks_two_sample, KsReport};
use super::mean_se;
use crate::branching::{sample_conditioned, simulate_bp_many, BpLimits, DEFAULT_GEN_CAP};
use crate::cookie::CookieLaw;
use crate::diffusion::{euler_marginals, exact_marginals, PostAbsorption};
use crate::error::{Error, Result};
use crate::rng::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalConfig {
    pub law: CookieLaw,
    /// Space and time scale; the process starts at `V_0 = n`.
    pub n: u64,
    pub t: f64,
    pub runs: u64,
    /// Diffusion-side sample size; `runs` when unset.
    pub sde_runs: Option<u64>,
    pub dt: f64,
    /// Condition the process on extinction and compare with drift
    /// `1 - |delta - 1|`.
    pub conditioned: bool,
    /// Rejection level for conditioned proposals, as a multiple of `n`.
    pub level_factor: u64,
}

pub const DEFAULT_LEVEL_FACTOR: u64 = 100;

impl MarginalConfig {
    pub fn new(law: CookieLaw, n: u64) -> Self {
        Self {
            law,
            n,
            t: 1.0,
            runs: 10_000,
            sde_runs: None,
            dt: crate::diffusion::DEFAULT_DT,
            conditioned: false,
            level_factor: DEFAULT_LEVEL_FACTOR,
        }
    }

    pub fn conditioned(mut self) -> Self {
        self.conditioned = true;
        self
    }

    /// Drift of the limiting diffusion.
    pub fn sde_drift(&self) -> f64 {
        let d = self.law.delta();
        if self.conditioned {
            1.0 - (d - 1.0).abs()
        } else {
            d
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalReport {
    pub ks: KsReport,
    pub sde_drift: f64,
    /// True when the diffusion side used the exact sampler.
    pub exact_sde: bool,
    pub bp_mean: (f64, f64),
    pub sde_mean: (f64, f64),
    /// Acceptance rate of the conditioned proposals.
    pub acceptance_rate: Option<f64>,
}

/// KS distance between `V_{floor(n t)} / n` from `V_0 = n` and the stopped
/// diffusion at time `t` from 1.
pub fn marginal_distance_bp_vs_sde(
    cfg: &MarginalConfig,
    seed: u64,
    workers: Option<usize>,
) -> Result<MarginalReport> {
    if cfg.n < 1 || cfg.runs == 0 || !(cfg.t > 0.0) {
        return Err(Error::InvalidInput("need n >= 1, runs >= 1 and t > 0".into()));
    }
    let generation = (cfg.n as f64 * cfg.t).floor() as u64;
    let scale = cfg.n as f64;
    let (bp, acceptance_rate): (Vec<f64>, _) = if cfg.conditioned {
        let limits = BpLimits::gen_cap(DEFAULT_GEN_CAP)
            .with_level_cap(cfg.n.saturating_mul(cfg.level_factor))
            .observing(generation);
        let s = sample_conditioned(&cfg.law, cfg.n, &limits, cfg.runs, derive_seed(seed, 1), workers)?;
        let v = s
            .paths
            .iter()
            .map(|p| p.observed.unwrap_or(0) as f64 / scale)
            .collect();
        (v, Some(s.acceptance_rate))
    } else {
        let limits = BpLimits::gen_cap(generation).observing(generation);
        let v = simulate_bp_many(&cfg.law, cfg.n, &limits, cfg.runs, derive_seed(seed, 1), workers)
            .iter()
            .map(|p| p.observed.unwrap_or(0) as f64 / scale)
            .collect();
        (v, None)
    };
    let drift = cfg.sde_drift();
    // Zero is absorbing at drift 0 and never reached at drift >= 1, so the
    // exact marginal is the stopped one there.
    let exact_sde = drift == 0.0 || drift >= 1.0;
    let sde_runs = cfg.sde_runs.unwrap_or(cfg.runs);
    let sde = if exact_sde {
        exact_marginals(drift, 1.0, cfg.t, sde_runs, derive_seed(seed, 2))?
    } else {
        euler_marginals(drift, 1.0, cfg.dt, cfg.t, PostAbsorption::Frozen, sde_runs, derive_seed(seed, 2), workers)?
    };
    Ok(MarginalReport {
        ks: ks_two_sample(&bp, &sde)?,
        sde_drift: drift,
        exact_sde,
        bp_mean: mean_se(&bp),
        sde_mean: mean_se(&sde),
        acceptance_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fair_law_matches_zero_drift() {
        let cfg = MarginalConfig::new(CookieLaw::fair(1), 1000);
        let r = marginal_distance_bp_vs_sde(&cfg, 1, None).unwrap();
        assert!(r.exact_sde);
        assert!(r.ks.statistic < 0.05, "{r:?}");
        // Both sides are martingales from 1.
        assert!((r.bp_mean.0 - 1.0).abs() < 3.0 * r.bp_mean.1);
    }

    #[test]
    fn positive_drift_matches() {
        let mut cfg = MarginalConfig::new(CookieLaw::equal_strength(0.5).unwrap(), 1000);
        cfg.runs = 5000;
        let r = marginal_distance_bp_vs_sde(&cfg, 2, None).unwrap();
        assert!(!r.exact_sde);
        assert!(r.ks.statistic < 0.05, "{r:?}");
    }

    #[test]
    fn drift_of_conditioned_limit() {
        let cfg = MarginalConfig::new(CookieLaw::equal_strength(2.0).unwrap(), 100).conditioned();
        assert_eq!(cfg.sde_drift(), 0.0);
        let cfg = MarginalConfig::new(CookieLaw::equal_strength(0.5).unwrap(), 100).conditioned();
        assert_eq!(cfg.sde_drift(), 0.5);
    }
}
