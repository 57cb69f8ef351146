//! The forward branching process of an excursion and its relatives.
//!
//! Generation `k` reads the trial sequence of site `k`: `V_k` is the number
//! of successes before the `V_{k-1}`-th failure, where the first `m` trials
//! use the site's cookies and the rest are fair.

use serde::{Deserialize, Serialize};

use crate::cookie::{CookieLaw, SiteStack};
use crate::error::{Error, Result};
use crate::par::map_paths;
use crate::rng::{Coins, PathCoins};
use crate::stats::{build_survival, fit_tail_with, wilson, FitOptions, Sample, TailFit, DEFAULT_GRID_BASE, Z95};

pub const DEFAULT_GEN_CAP: u64 = 1_000_000;
/// Level at which a proposal for the conditioned process is rejected.
pub const DEFAULT_LEVEL_CAP: u64 = 10_000;
/// Acceptance rates below this abort conditioned sampling.
pub const MIN_ACCEPTANCE: f64 = 1e-4;
/// Proposal budget per conditioned sample.
pub const MAX_PROPOSALS_PER_SAMPLE: u64 = 100_000;

/// Number of successes before the `v`-th failure, reading the cookies of
/// `stack` first and fair trials afterwards. Advances the stack cursor by
/// the number of trials read.
pub fn bp_step<C: Coins>(v: u64, stack: &mut SiteStack, coins: &mut C, site: usize) -> u64 {
    successes_before(v, &stack_probs_remaining(stack), coins, site, Some(stack))
}

fn stack_probs_remaining(stack: &SiteStack) -> Vec<f64> {
    stack.probs()[stack.cursor().min(stack.probs().len())..].to_vec()
}

fn successes_before<C: Coins>(
    v: u64,
    probs: &[f64],
    coins: &mut C,
    site: usize,
    stack: Option<&mut SiteStack>,
) -> u64 {
    if v == 0 {
        return 0;
    }
    let mut successes = 0u64;
    let mut failures = 0u64;
    let mut read = 0usize;
    for &p in probs {
        if failures == v {
            break;
        }
        read += 1;
        if coins.trial(site, p) {
            successes += 1;
        } else {
            failures += 1;
        }
    }
    let mut fair = 0u64;
    if failures < v {
        let s = coins.fair_run(site, v - failures);
        fair = s + (v - failures);
        successes += s;
    }
    if let Some(stack) = stack {
        stack.advance(read);
        stack.advance(fair.min(usize::MAX as u64) as usize);
    }
    successes
}

/// Why a path stopped before extinction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Censor {
    GenCap,
    LevelCap,
    ProgenyCap,
    /// The progeny counter saturated.
    Overflow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpLimits {
    pub gen_cap: u64,
    /// Stop once a generation reaches this size.
    pub level_cap: Option<u64>,
    /// Stop once the total progeny exceeds this.
    pub progeny_cap: Option<u128>,
    /// Keep the full trajectory.
    pub record: bool,
    /// Generation whose size is reported in [`BpPath::observed`].
    pub observe_at: Option<u64>,
}

impl Default for BpLimits {
    fn default() -> Self {
        Self {
            gen_cap: DEFAULT_GEN_CAP,
            level_cap: None,
            progeny_cap: None,
            record: false,
            observe_at: None,
        }
    }
}

impl BpLimits {
    pub fn gen_cap(gen_cap: u64) -> Self {
        Self {
            gen_cap,
            ..Self::default()
        }
    }

    pub fn with_level_cap(mut self, cap: u64) -> Self {
        self.level_cap = Some(cap);
        self
    }

    pub fn with_progeny_cap(mut self, cap: u128) -> Self {
        self.progeny_cap = Some(cap);
        self
    }

    pub fn recording(mut self) -> Self {
        self.record = true;
        self
    }

    pub fn observing(mut self, generation: u64) -> Self {
        self.observe_at = Some(generation);
        self
    }
}

/// One trajectory of the forward branching process.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BpPath {
    /// `V_0, V_1, ...` when recorded, otherwise empty.
    pub trajectory: Vec<u64>,
    /// Extinction time when extinct, otherwise the generations simulated.
    pub extinction_time: u64,
    /// Sum of all generations simulated, `V_0` included.
    pub total_progeny: u128,
    pub final_size: u64,
    pub max_size: u64,
    pub censored: bool,
    pub censor: Option<Censor>,
    /// `V_k` at `k = observe_at`, 0 after extinction; `None` if not reached.
    pub observed: Option<u64>,
}

impl BpPath {
    pub fn extinct(&self) -> bool {
        !self.censored
    }

    pub fn extinction_sample(&self) -> Sample {
        Sample {
            value: self.extinction_time as f64,
            censored: self.censored,
        }
    }

    pub fn progeny_sample(&self) -> Sample {
        Sample {
            value: self.total_progeny as f64,
            censored: self.censored,
        }
    }
}

/// Reusable flattened cookie table.
#[derive(Debug, Clone)]
pub struct Brancher {
    law: CookieLaw,
    m: usize,
    probs: Vec<f64>,
}

impl Brancher {
    pub fn new(law: &CookieLaw) -> Self {
        Self {
            law: law.clone(),
            m: law.m(),
            probs: law
                .stacks()
                .iter()
                .flat_map(|s| s.probs.iter().copied())
                .collect(),
        }
    }

    pub fn law(&self) -> &CookieLaw {
        &self.law
    }

    /// Draws the next generation from site `site`.
    #[inline]
    pub fn step<C: Coins>(&self, v: u64, coins: &mut C, site: usize) -> u64 {
        if v == 0 {
            return 0;
        }
        let stack = self.law.stack_index_from_uniform(coins.stack_uniform(site));
        let probs = &self.probs[stack * self.m..(stack + 1) * self.m];
        successes_before(v, probs, coins, site, None)
    }

    /// Successes before `r` failures, `r` floored at `m` (one generation of
    /// the modified process).
    fn modified_draw<C: Coins>(&self, r: u64, coins: &mut C, site: usize) -> u64 {
        let stack = self.law.stack_index_from_uniform(coins.stack_uniform(site));
        let probs = &self.probs[stack * self.m..(stack + 1) * self.m];
        successes_before(r, probs, coins, site, None)
    }

    pub fn path<C: Coins>(&self, v0: u64, limits: &BpLimits, coins: &mut C) -> BpPath {
        let mut v = v0;
        let mut progeny = v0 as u128;
        let mut max = v0;
        let mut trajectory = Vec::new();
        if limits.record {
            trajectory.push(v0);
        }
        let mut k = 0u64;
        let mut censor = None;
        let mut observed = (limits.observe_at == Some(0)).then_some(v0);
        while v > 0 {
            if k >= limits.gen_cap {
                censor = Some(Censor::GenCap);
                break;
            }
            if limits.level_cap.is_some_and(|c| v >= c) {
                censor = Some(Censor::LevelCap);
                break;
            }
            if limits.progeny_cap.is_some_and(|c| progeny > c) {
                censor = Some(Censor::ProgenyCap);
                break;
            }
            k += 1;
            v = self.step(v, coins, k as usize);
            progeny = progeny.saturating_add(v as u128);
            max = max.max(v);
            if progeny == u128::MAX {
                censor = Some(Censor::Overflow);
                break;
            }
            if limits.record {
                trajectory.push(v);
            }
            if limits.observe_at == Some(k) {
                observed = Some(v);
            }
        }
        if v == 0 && limits.observe_at.is_some_and(|g| g > k) {
            observed = Some(0);
        }
        BpPath {
            trajectory,
            extinction_time: k,
            total_progeny: progeny,
            final_size: v,
            max_size: max,
            censored: censor.is_some(),
            censor,
            observed,
        }
    }
}

/// One path of the branching process started from `v0`.
pub fn simulate_bp<C: Coins>(law: &CookieLaw, v0: u64, limits: &BpLimits, coins: &mut C) -> BpPath {
    Brancher::new(law).path(v0, limits, coins)
}

/// `runs` independent paths; path `i` reads stream `i` of `seed`.
pub fn simulate_bp_many(
    law: &CookieLaw,
    v0: u64,
    limits: &BpLimits,
    runs: u64,
    seed: u64,
    workers: Option<usize>,
) -> Vec<BpPath> {
    let b = Brancher::new(law);
    map_paths(workers, runs, || (), |_, i| {
        b.path(v0, limits, &mut PathCoins::new(seed, i))
    })
}

/// Trajectory of the modified process together with its martingale and
/// compensator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModifiedBpPath {
    pub trajectory: Vec<i64>,
    /// `M_k = V~_k - k delta`.
    pub martingale_m: Vec<f64>,
    /// `A_k = v k + 2 sum_{j<k} (V~_j - m)^+`.
    pub compensator_a: Vec<f64>,
    pub delta: f64,
    pub v: f64,
    pub m: usize,
    pub censored: bool,
}

impl ModifiedBpPath {
    fn from_trajectory(trajectory: Vec<i64>, delta: f64, v: f64, m: usize, censored: bool) -> Self {
        let mut martingale_m = Vec::with_capacity(trajectory.len());
        let mut compensator_a = Vec::with_capacity(trajectory.len());
        let mut a = 0.0;
        for (k, &x) in trajectory.iter().enumerate() {
            martingale_m.push(x as f64 - k as f64 * delta);
            compensator_a.push(a);
            a += v + 2.0 * ((x - m as i64).max(0) as f64);
        }
        Self {
            trajectory,
            martingale_m,
            compensator_a,
            delta,
            v,
            m,
            censored,
        }
    }
}

/// One generation of the modified process from state `x >= 1`.
pub fn modified_step<C: Coins>(b: &Brancher, x: i64, coins: &mut C, site: usize) -> i64 {
    let r = (x.max(0) as u64).max(b.m as u64);
    let s = b.modified_draw(r, coins, site);
    x - r as i64 + s as i64
}

/// Runs the modified process from `v0 >= 1` until it drops to 0 or below,
/// or until `gen_cap` generations.
pub fn simulate_modified_bp<C: Coins>(
    law: &CookieLaw,
    v0: u64,
    gen_cap: u64,
    coins: &mut C,
) -> Result<ModifiedBpPath> {
    if v0 == 0 {
        return Err(Error::InvalidInput("modified process needs v0 >= 1".into()));
    }
    let b = Brancher::new(law);
    let mut x = v0 as i64;
    let mut traj = vec![x];
    let mut k = 0u64;
    while x > 0 && k < gen_cap {
        k += 1;
        x = modified_step(&b, x, coins, k as usize);
        traj.push(x);
    }
    Ok(ModifiedBpPath::from_trajectory(
        traj,
        law.delta(),
        law.offspring_variance(),
        law.m(),
        x > 0,
    ))
}

/// Mean and standard error of one martingale increment statistic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IncrementMean {
    pub mean: f64,
    pub se: f64,
    pub n: u64,
}

impl IncrementMean {
    pub fn z(&self) -> f64 {
        self.mean / self.se
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MartingaleDiagnostics {
    pub delta: f64,
    pub v: f64,
    /// Increments of `M_k`.
    pub first: IncrementMean,
    /// Increments of `M_k^2 - A_k`.
    pub second: IncrementMean,
}

/// Increments `(M_{k+1} - M_k, (M_{k+1}^2 - A_{k+1}) - (M_k^2 - A_k))` of one
/// step taken from state `x` at time `k`, given the drawn next state.
pub fn martingale_increments(x: i64, next: i64, k: u64, delta: f64, v: f64, m: usize) -> (f64, f64) {
    let mk = x as f64 - k as f64 * delta;
    let d1 = (next - x) as f64 - delta;
    let da = v + 2.0 * ((x - m as i64).max(0) as f64);
    (d1, 2.0 * mk * d1 + d1 * d1 - da)
}

fn summarize(xs: &[f64]) -> IncrementMean {
    let (mean, se) = crate::stats::mean_se(xs);
    IncrementMean {
        mean,
        se,
        n: xs.len() as u64,
    }
}

/// Single-step increments from each state in `states`, `per_state` draws
/// each, pooled.
pub fn martingale_diagnostics_at(
    law: &CookieLaw,
    states: &[i64],
    per_state: u64,
    seed: u64,
    workers: Option<usize>,
) -> MartingaleDiagnostics {
    let b = Brancher::new(law);
    let (delta, v, m) = (law.delta(), law.offspring_variance(), law.m());
    let n = states.len() as u64 * per_state;
    let inc: Vec<(f64, f64)> = map_paths(workers, n, || (), |_, i| {
        let x = states[(i / per_state) as usize];
        let mut coins = PathCoins::new(seed, i);
        let next = modified_step(&b, x, &mut coins, 1);
        martingale_increments(x, next, 0, delta, v, m)
    });
    let (a, c): (Vec<f64>, Vec<f64>) = inc.into_iter().unzip();
    MartingaleDiagnostics {
        delta,
        v,
        first: summarize(&a),
        second: summarize(&c),
    }
}

/// Increments collected along modified-process paths started at `v0`, each
/// run for at most `gen_cap` generations, until `increments` are gathered.
pub fn martingale_diagnostics_paths(
    law: &CookieLaw,
    v0: u64,
    gen_cap: u64,
    increments: usize,
    seed: u64,
) -> Result<MartingaleDiagnostics> {
    let (delta, v, m) = (law.delta(), law.offspring_variance(), law.m());
    let mut a = Vec::with_capacity(increments);
    let mut c = Vec::with_capacity(increments);
    let mut path = 0;
    while a.len() < increments {
        let mut coins = PathCoins::new(seed, path);
        let p = simulate_modified_bp(law, v0, gen_cap, &mut coins)?;
        for k in 0..p.trajectory.len() - 1 {
            if a.len() == increments {
                break;
            }
            let (d1, d2) = martingale_increments(p.trajectory[k], p.trajectory[k + 1], k as u64, delta, v, m);
            a.push(d1);
            c.push(d2);
        }
        path += 1;
    }
    Ok(MartingaleDiagnostics {
        delta,
        v,
        first: summarize(&a),
        second: summarize(&c),
    })
}

/// Monte Carlo estimate of `h(n) = P_n[extinction]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HarmonicEstimate {
    pub n: u64,
    pub h_hat: f64,
    pub ci: (f64, f64),
    /// Level at which a path was counted as surviving.
    pub cap_used: u64,
    pub runs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HarmonicReport {
    pub estimates: Vec<HarmonicEstimate>,
    /// Fitted `a` in `h(n) ~ c n^(-a)`; `None` when `h = 1` identically.
    pub exponent: Option<f64>,
    pub exponent_se: Option<f64>,
    pub prefactor: Option<f64>,
    pub warning: Option<String>,
}

/// Relative level cap used by [`estimate_h`]: a path from `n` that reaches
/// `H_LEVEL_FACTOR * n` counts as surviving. This scales `h(n)` by roughly
/// `1 - H_LEVEL_FACTOR^(1 - delta)` at every `n`, leaving the exponent intact.
pub const H_LEVEL_FACTOR: u64 = 8;

pub fn estimate_h(
    law: &CookieLaw,
    n_grid: &[u64],
    runs: u64,
    gen_cap: u64,
    seed: u64,
    workers: Option<usize>,
) -> Result<HarmonicReport> {
    if runs == 0 || n_grid.is_empty() || n_grid.contains(&0) {
        return Err(Error::InvalidInput("need runs >= 1 and a grid of positive starts".into()));
    }
    let delta = law.delta();
    if delta <= 1.0 {
        return Ok(HarmonicReport {
            estimates: n_grid
                .iter()
                .map(|&n| HarmonicEstimate {
                    n,
                    h_hat: 1.0,
                    ci: (1.0, 1.0),
                    cap_used: 0,
                    runs: 0,
                })
                .collect(),
            exponent: None,
            exponent_se: None,
            prefactor: None,
            warning: Some(format!("delta = {delta} <= 1: extinction is certain, h = 1")),
        });
    }
    let b = Brancher::new(law);
    let mut estimates = Vec::with_capacity(n_grid.len());
    for (gi, &n) in n_grid.iter().enumerate() {
        let cap = n.saturating_mul(H_LEVEL_FACTOR);
        let limits = BpLimits::gen_cap(gen_cap).with_level_cap(cap);
        let stream_seed = crate::rng::derive_seed(seed, gi as u64);
        let extinct: u64 = map_paths(workers, runs, || (), |_, i| {
            u64::from(b.path(n, &limits, &mut PathCoins::new(stream_seed, i)).extinct())
        })
        .into_iter()
        .sum();
        let w = wilson(extinct, runs, Z95);
        estimates.push(HarmonicEstimate {
            n,
            h_hat: w.estimate,
            ci: (w.lo, w.hi),
            cap_used: cap,
            runs,
        });
    }
    // Weighted fit of ln h on ln n, weights from the binomial variance.
    let pts: Vec<(f64, f64, f64)> = estimates
        .iter()
        .filter(|e| e.h_hat > 0.0)
        .map(|e| {
            let var = (1.0 - e.h_hat) / (e.runs as f64 * e.h_hat);
            ((e.n as f64).ln(), e.h_hat.ln(), 1.0 / var.max(1e-12))
        })
        .collect();
    let (exponent, exponent_se, prefactor, warning) = if pts.len() >= 2 {
        let sw: f64 = pts.iter().map(|p| p.2).sum();
        let mx = pts.iter().map(|p| p.0 * p.2).sum::<f64>() / sw;
        let my = pts.iter().map(|p| p.1 * p.2).sum::<f64>() / sw;
        let sxx: f64 = pts.iter().map(|p| p.2 * (p.0 - mx).powi(2)).sum();
        let sxy: f64 = pts.iter().map(|p| p.2 * (p.0 - mx) * (p.1 - my)).sum();
        let slope = sxy / sxx;
        (Some(-slope), Some(sxx.recip().sqrt()), Some((my - slope * mx).exp()), None)
    } else {
        (None, None, None, Some("fewer than two positive estimates".to_string()))
    };
    Ok(HarmonicReport {
        estimates,
        exponent,
        exponent_se,
        prefactor,
        warning,
    })
}

/// Conditioned paths and the rejection bookkeeping behind them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionedSample {
    pub paths: Vec<BpPath>,
    pub proposals: u64,
    pub accepted: u64,
    /// `accepted / proposals`, an estimate of `h(v0)` biased up by the caps.
    pub acceptance_rate: f64,
    /// False when `delta <= 1`: the process is not conditioned at all.
    pub rejection: bool,
}

/// One path of `V` conditioned on extinction.
///
/// For `delta <= 1` extinction is certain and this is [`simulate_bp`] on the
/// same coins. Otherwise proposals are drawn until one dies out; a proposal
/// that hits `gen_cap`, the level cap or the progeny cap is rejected.
/// Returns the path and the number of proposals used, or `None` when
/// `max_proposals` ran out.
pub fn simulate_conditioned_bp<C: Coins>(
    law: &CookieLaw,
    v0: u64,
    limits: &BpLimits,
    max_proposals: u64,
    coins: &mut C,
) -> (Option<BpPath>, u64) {
    let b = Brancher::new(law);
    conditioned_with(&b, v0, limits, max_proposals, coins)
}

fn conditioned_with<C: Coins>(
    b: &Brancher,
    v0: u64,
    limits: &BpLimits,
    max_proposals: u64,
    coins: &mut C,
) -> (Option<BpPath>, u64) {
    if b.law().delta() <= 1.0 {
        return (Some(b.path(v0, limits, coins)), 1);
    }
    for k in 1..=max_proposals {
        let p = b.path(v0, limits, coins);
        if p.extinct() {
            return (Some(p), k);
        }
    }
    (None, max_proposals)
}

/// `runs` conditioned paths; sample `i` draws all its proposals from stream
/// `i` of `seed`.
pub fn sample_conditioned(
    law: &CookieLaw,
    v0: u64,
    limits: &BpLimits,
    runs: u64,
    seed: u64,
    workers: Option<usize>,
) -> Result<ConditionedSample> {
    if v0 == 0 {
        return Err(Error::InvalidInput("conditioned process needs v0 >= 1".into()));
    }
    let b = Brancher::new(law);
    let rejection = law.delta() > 1.0;
    let out = map_paths(workers, runs, || (), |_, i| {
        conditioned_with(&b, v0, limits, MAX_PROPOSALS_PER_SAMPLE, &mut PathCoins::new(seed, i))
    });
    let proposals: u64 = out.iter().map(|o| o.1).sum();
    let paths: Vec<BpPath> = out.into_iter().filter_map(|o| o.0).collect();
    let accepted = paths.len() as u64;
    let rate = accepted as f64 / proposals.max(1) as f64;
    if rejection && (accepted < runs || rate < MIN_ACCEPTANCE) {
        return Err(Error::LowAcceptance {
            rate,
            proposals,
            min: MIN_ACCEPTANCE,
        });
    }
    Ok(ConditionedSample {
        paths,
        proposals,
        accepted,
        acceptance_rate: rate,
        rejection,
    })
}

/// Survival fit of the extinction time and total progeny of conditioned
/// paths from `v0 = 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionedTails {
    pub extinction: TailFit,
    pub progeny: TailFit,
    pub acceptance_rate: f64,
    pub accepted: u64,
    pub censored: u64,
}

pub fn conditioned_tails(sample: &ConditionedSample, opts: &FitOptions) -> Result<ConditionedTails> {
    let ext: Vec<Sample> = sample.paths.iter().map(|p| p.extinction_sample()).collect();
    let prog: Vec<Sample> = sample.paths.iter().map(|p| p.progeny_sample()).collect();
    Ok(ConditionedTails {
        extinction: fit_tail_with(&build_survival(&ext, DEFAULT_GRID_BASE)?, opts)?,
        progeny: fit_tail_with(&build_survival(&prog, DEFAULT_GRID_BASE)?, opts)?,
        acceptance_rate: sample.acceptance_rate,
        accepted: sample.accepted,
        censored: sample.paths.iter().filter(|p| p.censored).count() as u64,
    })
}

/// Tail fit of the total progeny of the conditioned process from 1.
pub fn progeny_tail(
    law: &CookieLaw,
    runs: u64,
    limits: &BpLimits,
    seed: u64,
    workers: Option<usize>,
) -> Result<TailFit> {
    if (law.delta() - 1.0).abs() < 1e-12 {
        return Err(Error::InvalidInput("progeny tail is not a power law at delta = 1".into()));
    }
    let s = sample_conditioned(law, 1, limits, runs, seed, workers)?;
    Ok(conditioned_tails(&s, &FitOptions::default())?.progeny)
}

/// Overshoots `V_{tau_x} - x` of paths started at `ceil(x / 2)` that reach
/// `x` before dying out, where `tau_x` is the first generation `>= x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OvershootReport {
    pub x: u64,
    pub start: u64,
    pub runs: u64,
    pub overshoots: Vec<u64>,
    pub mean: f64,
    /// Fraction of overshoots above `x^(2/3)`.
    pub tail_mass: f64,
}

pub fn overshoot_stat(
    law: &CookieLaw,
    x: u64,
    runs: u64,
    seed: u64,
    workers: Option<usize>,
) -> Result<OvershootReport> {
    if x == 0 {
        return Err(Error::InvalidInput("overshoot level must be >= 1".into()));
    }
    let start = x.div_ceil(2);
    if start >= x {
        // No start strictly between 0 and x.
        return Ok(OvershootReport {
            x,
            start,
            runs: 0,
            overshoots: Vec::new(),
            mean: f64::NAN,
            tail_mass: f64::NAN,
        });
    }
    let b = Brancher::new(law);
    let out: Vec<Option<u64>> = map_paths(workers, runs, || (), |_, i| {
        let mut coins = PathCoins::new(seed, i);
        let mut v = start;
        let mut k = 0;
        while v > 0 && v < x {
            k += 1;
            v = b.step(v, &mut coins, k);
        }
        (v >= x).then(|| v - x)
    });
    let overshoots: Vec<u64> = out.into_iter().flatten().collect();
    let n = overshoots.len() as f64;
    let mean = overshoots.iter().sum::<u64>() as f64 / n;
    let level = (x as f64).powf(2.0 / 3.0);
    let tail_mass = overshoots.iter().filter(|&&o| o as f64 > level).count() as f64 / n;
    Ok(OvershootReport {
        x,
        start,
        runs,
        overshoots,
        mean,
        tail_mass,
    })
}
