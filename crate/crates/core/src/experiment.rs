//! Experiment records, return-time estimators and the phase sweep.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::branching::{conditioned_tails, sample_conditioned, Brancher, BpLimits, DEFAULT_GEN_CAP, DEFAULT_LEVEL_CAP};
use crate::cookie::CookieLaw;
use crate::error::{Error, Result};
use crate::par::map_paths;
use crate::rng::{Coins, PathCoins};
use crate::stats::{build_survival, fit_tail, mean_se, FitOptions, Sample, TailFit, DEFAULT_GRID_BASE};

/// Everything that determines an experiment's output besides the code.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub kind: String,
    pub law: Option<CookieLaw>,
    pub runs: u64,
    pub seed: u64,
    /// Named caps and other numeric parameters, in a fixed order.
    pub params: Vec<(String, f64)>,
}

impl ExperimentConfig {
    pub fn new(kind: &str, law: Option<CookieLaw>, runs: u64, seed: u64) -> Self {
        Self {
            kind: kind.to_string(),
            law,
            runs,
            seed,
            params: Vec::new(),
        }
    }

    pub fn param(mut self, name: &str, value: f64) -> Self {
        self.params.push((name.to_string(), value));
        self
    }

    /// SHA-256 of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        sha256_hex(&serde_json::to_vec(self).expect("config serializes"))
    }
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Metadata embedded in every emitted artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactMeta {
    pub tool_version: String,
    pub config_sha256: String,
    pub seed: u64,
    pub config: ExperimentConfig,
    /// SHA-256 of the JSON encoding of the payload.
    pub payload_sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Artifact<T> {
    pub meta: ArtifactMeta,
    pub result: T,
}

impl<T: Serialize> Artifact<T> {
    pub fn new(config: ExperimentConfig, result: T) -> Result<Self> {
        let payload = serde_json::to_vec(&result)?;
        Ok(Self {
            meta: ArtifactMeta {
                tool_version: env!("CARGO_PKG_VERSION").to_string(),
                config_sha256: config.hash(),
                seed: config.seed,
                config,
                payload_sha256: sha256_hex(&payload),
            },
            result,
        })
    }

    /// `# key: value` lines heading CSV output.
    pub fn csv_header(&self) -> String {
        let m = &self.meta;
        let mut s = format!(
            "# tool_version: {}\n# config_sha256: {}\n# seed: {}\n# kind: {}\n# runs: {}\n",
            m.tool_version, m.config_sha256, m.seed, m.config.kind, m.config.runs
        );
        for (k, v) in &m.config.params {
            s.push_str(&format!("# {k}: {v}\n"));
        }
        s
    }
}

/// `E[R 1{R <= cap}]` for each cap, from common samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CensoredMeanR {
    pub delta: f64,
    pub caps: Vec<u64>,
    /// `(mean, standard error)` per cap.
    pub means: Vec<(f64, f64)>,
    /// Largest-cap mean over smallest-cap mean.
    pub ratio: f64,
    pub runs: u64,
    /// Fraction of draws with `R` above the largest cap, escapes included.
    pub beyond_largest: f64,
}

/// Return time from 0, or `None` when it exceeds `cap`.
///
/// The first step goes right with the mean first-cookie probability; an
/// excursion to the left is an excursion of the mirrored law. An excursion
/// from 1 returns at time `2 * progeny - 1` of the forward branching
/// process, so `R = 2 * progeny`.
fn capped_return<C: Coins>(right: &Brancher, left: &Brancher, p_right: f64, cap: u64, coins: &mut C) -> Option<u64> {
    let b = if coins.stack_uniform(0) < p_right { right } else { left };
    let half = cap / 2;
    let limits = BpLimits::gen_cap(half + 1).with_progeny_cap(half as u128);
    let p = b.path(1, &limits, coins);
    (p.extinct() && p.total_progeny <= half as u128).then(|| 2 * p.total_progeny as u64)
}

pub fn censored_mean_r(
    law: &CookieLaw,
    caps: &[u64],
    runs: u64,
    seed: u64,
    workers: Option<usize>,
) -> Result<CensoredMeanR> {
    if caps.is_empty() || caps.contains(&0) || runs == 0 {
        return Err(Error::InvalidInput("need runs >= 1 and positive caps".into()));
    }
    let mut caps = caps.to_vec();
    caps.sort_unstable();
    caps.dedup();
    let largest = *caps.last().unwrap();
    let right = Brancher::new(law);
    let left = Brancher::new(&law.mirror());
    let p_right = law.first_cookie_mean();
    let rs: Vec<Option<u64>> = map_paths(workers, runs, || (), |_, i| {
        capped_return(&right, &left, p_right, largest, &mut PathCoins::new(seed, i))
    });
    let means: Vec<(f64, f64)> = caps
        .iter()
        .map(|&c| {
            let xs: Vec<f64> = rs.iter().map(|r| r.filter(|&r| r <= c).map_or(0.0, |r| r as f64)).collect();
            mean_se(&xs)
        })
        .collect();
    let ratio = means.last().unwrap().0 / means[0].0;
    Ok(CensoredMeanR {
        delta: law.delta(),
        caps,
        means,
        ratio,
        runs,
        beyond_largest: rs.iter().filter(|r| r.is_none()).count() as f64 / runs as f64,
    })
}

/// Return times from 0 conditioned on returning. A draw whose excursion
/// survives the caps is discarded together with its side, so the side mix
/// is the conditioned one.
pub fn conditioned_return_times(
    law: &CookieLaw,
    limits: &BpLimits,
    runs: u64,
    seed: u64,
    workers: Option<usize>,
) -> Result<(Vec<Sample>, f64)> {
    let right = Brancher::new(law);
    let left = Brancher::new(&law.mirror());
    let p_right = law.first_cookie_mean();
    let budget = crate::branching::MAX_PROPOSALS_PER_SAMPLE;
    let out: Vec<(Option<Sample>, u64)> = map_paths(workers, runs, || (), |_, i| {
        let mut coins = PathCoins::new(seed, i);
        for k in 1..=budget {
            let b = if coins.stack_uniform(0) < p_right { &right } else { &left };
            let p = b.path(1, limits, &mut coins);
            if p.extinct() {
                return (Some(Sample::exact(2.0 * p.total_progeny as f64)), k);
            }
        }
        (None, budget)
    });
    let proposals: u64 = out.iter().map(|o| o.1).sum();
    let samples: Vec<Sample> = out.into_iter().filter_map(|o| o.0).collect();
    let rate = samples.len() as f64 / proposals as f64;
    if (samples.len() as u64) < runs || rate < crate::branching::MIN_ACCEPTANCE {
        return Err(Error::LowAcceptance {
            rate,
            proposals,
            min: crate::branching::MIN_ACCEPTANCE,
        });
    }
    Ok((samples, rate))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    StronglyTransient,
    NotStronglyTransient,
    Inconclusive,
}

impl Verdict {
    /// From the CI of the return-time exponent: the mean return time is
    /// finite exactly when the exponent exceeds 1.
    pub fn from_ci(ci: (f64, f64)) -> Self {
        if ci.0 > 1.0 {
            Self::StronglyTransient
        } else if ci.1 < 1.0 {
            Self::NotStronglyTransient
        } else {
            Self::Inconclusive
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExponentEstimate {
    pub target: f64,
    pub exponent: f64,
    pub ci: (f64, f64),
    pub fit_window: (f64, f64),
    pub warning: Option<String>,
}

impl ExponentEstimate {
    fn new(target: f64, fit: &TailFit) -> Self {
        Self {
            target,
            exponent: fit.exponent,
            ci: fit.ci_exponent,
            fit_window: fit.fit_window,
            warning: fit.warning.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub delta: f64,
    /// Excursion depth, target `|delta - 1|`.
    pub depth: Option<ExponentEstimate>,
    /// Excursion duration, target `|delta - 1| / 2`.
    pub duration: Option<ExponentEstimate>,
    /// Return time, target `||delta| - 1| / 2`.
    pub ret: Option<ExponentEstimate>,
    pub verdict: Option<Verdict>,
    pub acceptance_rate: Option<f64>,
    pub errors: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepBudget {
    pub runs: u64,
    pub gen_cap: u64,
    pub level_cap: u64,
}

impl Default for SweepBudget {
    fn default() -> Self {
        Self {
            runs: 100_000,
            gen_cap: DEFAULT_GEN_CAP,
            level_cap: DEFAULT_LEVEL_CAP,
        }
    }
}

fn phase_row(delta: f64, budget: &SweepBudget, seed: u64, workers: Option<usize>) -> PhaseRow {
    let mut row = PhaseRow {
        delta,
        depth: None,
        duration: None,
        ret: None,
        verdict: None,
        acceptance_rate: None,
        errors: Vec::new(),
    };
    let law = match CookieLaw::equal_strength(delta) {
        Ok(l) => l,
        Err(e) => {
            row.errors.push(e.to_string());
            return row;
        }
    };
    let limits = BpLimits::gen_cap(budget.gen_cap).with_level_cap(budget.level_cap);
    let a = (delta - 1.0).abs();
    match sample_conditioned(&law, 1, &limits, budget.runs, crate::rng::derive_seed(seed, 1), workers) {
        Ok(s) => {
            row.acceptance_rate = Some(s.acceptance_rate);
            match conditioned_tails(&s, &FitOptions::default()) {
                Ok(t) => {
                    row.depth = Some(ExponentEstimate::new(a, &t.extinction));
                    row.duration = Some(ExponentEstimate::new(a / 2.0, &t.progeny));
                }
                Err(e) => row.errors.push(format!("excursion tails: {e}")),
            }
        }
        Err(e) => row.errors.push(format!("excursion sampling: {e}")),
    }
    let ret = conditioned_return_times(&law, &limits, budget.runs, crate::rng::derive_seed(seed, 2), workers)
        .and_then(|(s, _)| fit_tail(&build_survival(&s, DEFAULT_GRID_BASE)?));
    match ret {
        Ok(f) => {
            row.verdict = Some(Verdict::from_ci(f.ci_exponent));
            row.ret = Some(ExponentEstimate::new((delta.abs() - 1.0).abs() / 2.0, &f));
        }
        Err(e) => row.errors.push(format!("return tail: {e}")),
    }
    row
}

/// One row per drift; a failure is recorded in its row and the sweep
/// continues. Row `j` uses seeds derived from `(seed, j)`.
pub fn phase_sweep(deltas: &[f64], budget: &SweepBudget, seed: u64, workers: Option<usize>) -> Vec<PhaseRow> {
    deltas
        .iter()
        .enumerate()
        .map(|(j, &d)| phase_row(d, budget, crate::rng::derive_seed(seed, j as u64), workers))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::walk::{simulate_returns, WalkConfig};

    #[test]
    fn config_hash_is_stable() {
        let a = ExperimentConfig::new("bp", Some(CookieLaw::fair(1)), 10, 3).param("gen_cap", 100.0);
        let b = a.clone();
        assert_eq!(a.hash(), b.hash());
        assert_ne!(a.hash(), a.clone().param("x", 1.0).hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn artifact_is_deterministic() {
        let cfg = ExperimentConfig::new("mean-r", Some(CookieLaw::fair(1)), 1000, 5);
        let run = || {
            let r = censored_mean_r(&CookieLaw::fair(1), &[100, 1000], 1000, 5, None).unwrap();
            serde_json::to_string(&Artifact::new(cfg.clone(), r).unwrap()).unwrap()
        };
        assert_eq!(run(), run());
        let w1 = censored_mean_r(&CookieLaw::fair(1), &[100, 1000], 1000, 5, Some(1)).unwrap();
        let w2 = censored_mean_r(&CookieLaw::fair(1), &[100, 1000], 1000, 5, Some(2)).unwrap();
        assert_eq!(w1, w2);
    }

    #[test]
    fn mean_r_matches_walk() {
        let cap = 1000;
        for (k, delta) in [0.0, 0.5, -1.5, 2.0].into_iter().enumerate() {
            let law = CookieLaw::equal_strength(delta).unwrap();
            let bp = censored_mean_r(&law, &[cap], 100_000, 30 + k as u64, None).unwrap();
            let cfg = WalkConfig::new(law).with_step_cap(cap).with_range_cap(10 * cap);
            let walk: Vec<f64> = simulate_returns(&cfg, 100_000, 40 + k as u64, None)
                .unwrap()
                .iter()
                .map(|o| if o.returned && o.duration <= cap { o.duration as f64 } else { 0.0 })
                .collect();
            let (m, se) = mean_se(&walk);
            let (mb, seb) = bp.means[0];
            assert!((m - mb).abs() < 4.0 * (se * se + seb * seb).sqrt(), "delta {delta}: walk {m} bp {mb}");
        }
    }

    #[test]
    fn truncated_mean_diverges_for_fair_law() {
        let r = censored_mean_r(&CookieLaw::fair(1), &[10_000, 100, 1_000_000], 20_000, 50, None).unwrap();
        assert_eq!(r.caps, vec![100, 10_000, 1_000_000]);
        assert!(r.means.windows(2).all(|w| w[1].0 >= w[0].0));
        assert!(r.ratio >= 2.0, "{r:?}");
    }

    #[test]
    fn verdict_from_interval() {
        assert_eq!(Verdict::from_ci((1.2, 1.8)), Verdict::StronglyTransient);
        assert_eq!(Verdict::from_ci((0.4, 0.6)), Verdict::NotStronglyTransient);
        assert_eq!(Verdict::from_ci((0.9, 1.1)), Verdict::Inconclusive);
    }

    #[test]
    fn sweep_records_failures_and_continues() {
        let budget = SweepBudget {
            runs: 2000,
            gen_cap: 100_000,
            level_cap: 1000,
        };
        let rows = phase_sweep(&[f64::NAN, 0.0], &budget, 60, None);
        assert_eq!(rows.len(), 2);
        assert!(!rows[0].errors.is_empty());
        assert!(rows[1].depth.is_some());
    }

    #[test]
    fn sweep_at_zero_drift() {
        let budget = SweepBudget {
            runs: 100_000,
            ..SweepBudget::default()
        };
        let row = &phase_sweep(&[0.0], &budget, 61, None)[0];
        assert!(row.errors.is_empty(), "{row:?}");
        let depth = row.depth.as_ref().unwrap();
        let duration = row.duration.as_ref().unwrap();
        let ret = row.ret.as_ref().unwrap();
        assert!((depth.exponent - 1.0).abs() < 0.15, "{row:?}");
        assert!((duration.exponent - 0.5).abs() < 0.07, "{row:?}");
        assert!((ret.exponent - 0.5).abs() < 0.07, "{row:?}");
        assert_eq!(row.verdict, Some(Verdict::NotStronglyTransient));
    }
}
