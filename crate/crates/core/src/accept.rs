//! The acceptance suite: eleven pinned-seed checks with pass/fail verdicts.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::branching::{
    conditioned_tails, estimate_h, martingale_diagnostics_paths, sample_conditioned, simulate_bp, simulate_bp_many,
    BpLimits, DEFAULT_GEN_CAP, DEFAULT_LEVEL_CAP,
};
use crate::cookie::CookieLaw;
use crate::diffusion::{sample_functionals, scaling_check, FunctionalConfig};
use crate::error::{Error, Result};
use crate::experiment::censored_mean_r;
use crate::par::map_paths;
use crate::rng::{derive_seed, SiteCoins};
use crate::stats::{
    build_survival, concentration_bound_check, fit_tail, marginal_distance_bp_vs_sde, FitOptions, MarginalConfig, Sample,
    DEFAULT_GRID_BASE,
};
use crate::walk::{coupled_excursion, coupling_seed, simulate_excursions, WalkConfig};

pub const DEFAULT_SEED: u64 = 20_261_016;

/// Closed interval a statistic must fall in.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub lo: f64,
    pub hi: f64,
}

impl Band {
    pub const fn new(lo: f64, hi: f64) -> Self {
        Self { lo, hi }
    }

    pub const fn at_most(hi: f64) -> Self {
        Self { lo: f64::NEG_INFINITY, hi }
    }

    pub const fn at_least(lo: f64) -> Self {
        Self { lo, hi: f64::INFINITY }
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lo <= x && x <= self.hi
    }
}

/// Every numeric target of the suite.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Targets {
    pub walk_duration: Band,
    pub walk_depth: Band,
    pub conditioned_extinction: Band,
    pub conditioned_progeny: Band,
    pub harmonic: Band,
    pub mean_return_recurrent: Band,
    pub mean_return_transient: Band,
    /// Bound on `|mean| / SE` of both increment statistics.
    pub martingale_z: f64,
    pub marginal: Band,
    pub marginal_conditioned: Band,
    pub sde_sigma0: Band,
    pub sde_area: Band,
    pub scaling: Band,
}

impl Default for Targets {
    fn default() -> Self {
        Self {
            walk_duration: Band::new(0.43, 0.57),
            walk_depth: Band::new(0.85, 1.15),
            conditioned_extinction: Band::new(0.85, 1.15),
            conditioned_progeny: Band::new(0.40, 0.60),
            harmonic: Band::new(0.85, 1.15),
            mean_return_recurrent: Band::at_least(2.0),
            mean_return_transient: Band::at_most(1.1),
            martingale_z: 3.0,
            marginal: Band::at_most(0.05),
            marginal_conditioned: Band::at_most(0.07),
            sde_sigma0: Band::new(0.43, 0.57),
            sde_area: Band::new(0.20, 0.30),
            scaling: Band::at_most(0.05),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metric {
    pub name: String,
    pub value: f64,
    pub band: Option<Band>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CriterionResult {
    pub id: u8,
    pub name: String,
    pub passed: bool,
    pub metrics: Vec<Metric>,
    pub elapsed_s: f64,
    pub time_limit_s: f64,
    pub detail: String,
}

impl CriterionResult {
    /// One human-readable line.
    pub fn line(&self) -> String {
        let metrics: Vec<String> = self
            .metrics
            .iter()
            .map(|m| match m.band {
                Some(b) => format!("{} = {:.4} in [{}, {}]", m.name, m.value, fmt_bound(b.lo), fmt_bound(b.hi)),
                None => format!("{} = {:.4}", m.name, m.value),
            })
            .collect();
        format!(
            "{} [{:>2}] {}: {} ({:.1} s of {:.0} s){}",
            if self.passed { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            metrics.join(", "),
            self.elapsed_s,
            self.time_limit_s,
            if self.detail.is_empty() { String::new() } else { format!(" {}", self.detail) }
        )
    }
}

fn fmt_bound(x: f64) -> String {
    if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SuiteReport {
    pub seed: u64,
    pub results: Vec<CriterionResult>,
    pub passed: bool,
}

#[derive(Debug, Clone, Copy)]
pub struct Criterion {
    pub id: u8,
    pub name: &'static str,
    pub time_limit_s: f64,
    run: fn(&Ctx) -> Result<Outcome>,
}

struct Ctx<'a> {
    seed: u64,
    workers: Option<usize>,
    targets: &'a Targets,
}

#[derive(Default)]
struct Outcome {
    metrics: Vec<Metric>,
    detail: String,
    extra_ok: bool,
}

impl Outcome {
    fn new() -> Self {
        Self {
            extra_ok: true,
            ..Self::default()
        }
    }

    fn check(mut self, name: &str, value: f64, band: Band) -> Self {
        self.metrics.push(Metric {
            name: name.into(),
            value,
            band: Some(band),
        });
        self
    }

    fn info(mut self, name: &str, value: f64) -> Self {
        self.metrics.push(Metric {
            name: name.into(),
            value,
            band: None,
        });
        self
    }

    fn passed(&self) -> bool {
        self.extra_ok && self.metrics.iter().all(|m| m.band.is_none_or(|b| b.contains(m.value)))
    }
}

pub const CRITERIA: [Criterion; 11] = [
    Criterion { id: 1, name: "walk-duration", time_limit_s: 600.0, run: walk_duration },
    Criterion { id: 2, name: "walk-depth", time_limit_s: 300.0, run: walk_depth },
    Criterion { id: 3, name: "conditioned-bp", time_limit_s: 900.0, run: conditioned_bp },
    Criterion { id: 4, name: "harmonic", time_limit_s: 600.0, run: harmonic },
    Criterion { id: 5, name: "mean-return", time_limit_s: 1200.0, run: mean_return },
    Criterion { id: 6, name: "martingale", time_limit_s: 120.0, run: martingale },
    Criterion { id: 7, name: "concentration", time_limit_s: 60.0, run: concentration },
    Criterion { id: 8, name: "diffusion-marginal", time_limit_s: 600.0, run: diffusion_marginal },
    Criterion { id: 9, name: "sde-functionals", time_limit_s: 900.0, run: sde_functionals },
    Criterion { id: 10, name: "scaling", time_limit_s: 300.0, run: scaling },
    Criterion { id: 11, name: "coupling", time_limit_s: 120.0, run: coupling },
];

/// Criteria matching `selection`: `all`, or a comma-separated list of
/// names or numbers.
pub fn select(selection: &str) -> Result<Vec<Criterion>> {
    if selection.trim() == "all" {
        return Ok(CRITERIA.to_vec());
    }
    selection
        .split(',')
        .map(|s| {
            let s = s.trim();
            CRITERIA
                .iter()
                .find(|c| c.name == s || c.id.to_string() == s)
                .copied()
                .ok_or_else(|| {
                    let names: Vec<&str> = CRITERIA.iter().map(|c| c.name).collect();
                    Error::Config(format!("unknown criterion {s:?}; known: all, {}", names.join(", ")))
                })
        })
        .collect()
}

/// Runs one criterion. Seed `derive_seed(seed, id)` feeds it.
pub fn run_criterion(c: &Criterion, seed: u64, workers: Option<usize>, targets: &Targets) -> CriterionResult {
    let start = Instant::now();
    let ctx = Ctx {
        seed: derive_seed(seed, c.id as u64),
        workers,
        targets,
    };
    let outcome = (c.run)(&ctx);
    let elapsed_s = start.elapsed().as_secs_f64();
    let (metrics, detail, passed) = match outcome {
        Ok(o) => {
            let p = o.passed() && elapsed_s <= c.time_limit_s;
            (o.metrics, o.detail, p)
        }
        Err(e) => (Vec::new(), format!("error: {e}"), false),
    };
    CriterionResult {
        id: c.id,
        name: c.name.to_string(),
        passed,
        metrics,
        elapsed_s,
        time_limit_s: c.time_limit_s,
        detail,
    }
}

/// Runs the selected criteria, calling `report` after each.
pub fn run_suite(
    criteria: &[Criterion],
    seed: u64,
    workers: Option<usize>,
    targets: &Targets,
    mut report: impl FnMut(&CriterionResult),
) -> SuiteReport {
    let results: Vec<CriterionResult> = criteria
        .iter()
        .map(|c| {
            let r = run_criterion(c, seed, workers, targets);
            report(&r);
            r
        })
        .collect();
    SuiteReport {
        seed,
        passed: results.iter().all(|r| r.passed),
        results,
    }
}

fn walk_duration(ctx: &Ctx) -> Result<Outcome> {
    let cfg = WalkConfig::new(CookieLaw::fair(1)).with_step_cap(1_000_000);
    let out = simulate_excursions(&cfg, 1_000_000, ctx.seed, ctx.workers)?;
    let s: Vec<Sample> = out.iter().map(|o| o.duration_sample()).collect();
    let f = fit_tail(&build_survival(&s, DEFAULT_GRID_BASE)?)?;
    Ok(Outcome::new()
        .check("exponent", f.exponent, ctx.targets.walk_duration)
        .info("ci_lo", f.ci_exponent.0)
        .info("ci_hi", f.ci_exponent.1))
}

fn walk_depth(ctx: &Ctx) -> Result<Outcome> {
    let paths = simulate_bp_many(&CookieLaw::fair(1), 1, &BpLimits::gen_cap(DEFAULT_GEN_CAP), 1_000_000, ctx.seed, ctx.workers);
    let s: Vec<Sample> = paths.iter().map(|p| p.extinction_sample()).collect();
    let f = fit_tail(&build_survival(&s, DEFAULT_GRID_BASE)?)?;
    Ok(Outcome::new()
        .check("exponent", f.exponent, ctx.targets.walk_depth)
        .info("ci_lo", f.ci_exponent.0)
        .info("ci_hi", f.ci_exponent.1))
}

fn conditioned_bp(ctx: &Ctx) -> Result<Outcome> {
    let law = CookieLaw::equal_strength(2.0)?;
    let limits = BpLimits::gen_cap(DEFAULT_GEN_CAP).with_level_cap(DEFAULT_LEVEL_CAP);
    let s = sample_conditioned(&law, 1, &limits, 100_000, ctx.seed, ctx.workers)?;
    let t = conditioned_tails(&s, &FitOptions::default())?;
    Ok(Outcome::new()
        .check("extinction_exponent", t.extinction.exponent, ctx.targets.conditioned_extinction)
        .check("progeny_exponent", t.progeny.exponent, ctx.targets.conditioned_progeny)
        .info("acceptance", t.acceptance_rate))
}

fn harmonic(ctx: &Ctx) -> Result<Outcome> {
    let law = CookieLaw::equal_strength(2.0)?;
    let grid: Vec<u64> = (3..=10).map(|j| 1u64 << j).collect();
    let r = estimate_h(&law, &grid, 100_000, DEFAULT_GEN_CAP, ctx.seed, ctx.workers)?;
    let a = r
        .exponent
        .ok_or_else(|| Error::InsufficientData(r.warning.clone().unwrap_or_default()))?;
    Ok(Outcome::new()
        .check("exponent", a, ctx.targets.harmonic)
        .info("se", r.exponent_se.unwrap_or(f64::NAN)))
}

fn mean_return(ctx: &Ctx) -> Result<Outcome> {
    let caps = [10_000, 1_000_000];
    let r2 = censored_mean_r(&CookieLaw::equal_strength(2.0)?, &caps, 100_000, derive_seed(ctx.seed, 2), ctx.workers)?;
    let r4 = censored_mean_r(&CookieLaw::equal_strength(4.0)?, &caps, 100_000, derive_seed(ctx.seed, 4), ctx.workers)?;
    Ok(Outcome::new()
        .check("ratio_delta2", r2.ratio, ctx.targets.mean_return_recurrent)
        .check("ratio_delta4", r4.ratio, ctx.targets.mean_return_transient))
}

fn martingale(ctx: &Ctx) -> Result<Outcome> {
    let band = Band::new(-ctx.targets.martingale_z, ctx.targets.martingale_z);
    let mut o = Outcome::new();
    for (k, delta) in [0.0, 0.5, 2.0].into_iter().enumerate() {
        let law = CookieLaw::equal_strength(delta)?;
        let d = martingale_diagnostics_paths(&law, 10, 1000, 100_000, derive_seed(ctx.seed, k as u64))?;
        o = o
            .check(&format!("z1_delta{delta}"), d.first.z(), band)
            .check(&format!("z2_delta{delta}"), d.second.z(), band);
    }
    Ok(o)
}

fn concentration(_ctx: &Ctx) -> Result<Outcome> {
    let r = concentration_bound_check(300, 300)?;
    Ok(Outcome::new()
        .check("violations", 0.0, Band::new(0.0, 0.0))
        .info("checked", r.checked as f64)
        .info("min_slack", r.min_slack))
}

fn diffusion_marginal(ctx: &Ctx) -> Result<Outcome> {
    let cfg = MarginalConfig::new(CookieLaw::fair(1), 1000);
    let plain = marginal_distance_bp_vs_sde(&cfg, derive_seed(ctx.seed, 1), ctx.workers)?;
    let mut cond = MarginalConfig::new(CookieLaw::equal_strength(2.0)?, 100).conditioned();
    cond.runs = 2000;
    cond.sde_runs = Some(100_000);
    let c = marginal_distance_bp_vs_sde(&cond, derive_seed(ctx.seed, 2), ctx.workers)?;
    Ok(Outcome::new()
        .check("ks", plain.ks.statistic, ctx.targets.marginal)
        .check("ks_conditioned", c.ks.statistic, ctx.targets.marginal_conditioned)
        .info("acceptance", c.acceptance_rate.unwrap_or(f64::NAN)))
}

fn sde_functionals(ctx: &Ctx) -> Result<Outcome> {
    let cfg = FunctionalConfig::new(0.5, 1.0).with_dt(1e-4).with_horizon(1e7);
    let r = sample_functionals(&cfg, 100_000, ctx.seed, ctx.workers)?;
    Ok(Outcome::new()
        .check("sigma0_exponent", r.sigma0_fit.exponent, ctx.targets.sde_sigma0)
        .check("area_exponent", r.area_fit.exponent, ctx.targets.sde_area)
        .info("censored", r.censored_fraction))
}

fn scaling(ctx: &Ctx) -> Result<Outcome> {
    let cfg = FunctionalConfig::new(0.0, 1.0).with_dt(1e-4);
    let r = scaling_check(&cfg, 2.0, 10_000, ctx.seed, ctx.workers)?;
    Ok(Outcome::new()
        .check("ks", r.statistic, ctx.targets.scaling)
        .info("p_value", r.p_value))
}

fn coupling(ctx: &Ctx) -> Result<Outcome> {
    let cap = 1_000_000u64;
    let mut o = Outcome::new();
    let mut mismatches = Vec::new();
    for (k, delta) in [0.0, 0.5].into_iter().enumerate() {
        let law = CookieLaw::equal_strength(delta)?;
        let seed = derive_seed(ctx.seed, k as u64);
        let limits = BpLimits::gen_cap(cap).with_progeny_cap(cap as u128 / 2 + 1);
        let res: Vec<(bool, bool)> = map_paths(ctx.workers, 10_000, || (), |_, i| {
            let s = coupling_seed(seed, i);
            let (walk, _) = coupled_excursion(&law, cap, cap, s);
            if !walk.returned {
                return (false, true);
            }
            let bp = simulate_bp(&law, 1, &limits, &mut SiteCoins::new(s));
            let ok = bp.extinct()
                && bp.extinction_time == walk.depth
                && 2 * bp.total_progeny == walk.duration as u128 + 1;
            (true, ok)
        });
        let returned = res.iter().filter(|r| r.0).count();
        let bad = res.iter().filter(|r| !r.1).count();
        if bad > 0 {
            mismatches.push(format!("delta {delta}: {bad} mismatches"));
        }
        o = o
            .check(&format!("mismatches_delta{delta}"), bad as f64, Band::new(0.0, 0.0))
            .info(&format!("returned_delta{delta}"), returned as f64);
    }
    o.detail = mismatches.join("; ");
    Ok(o)
}
