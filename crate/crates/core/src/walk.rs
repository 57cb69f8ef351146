//! Direct simulation of the excited random walk under the averaged law.
//!
//! Each visit to a site consumes that site's next cookie; once the cookies
//! are used up the site is fair. Environments are sampled lazily, one stack
//! per site on its first visit.

use serde::{Deserialize, Serialize};

use crate::cookie::CookieLaw;
use crate::error::{Error, Result};
use crate::par::map_paths;
use crate::rng::{derive_seed, Coins, PathCoins, SiteCoins};
use crate::stats::{wilson, Proportion, Sample, Z95};

pub const DEFAULT_STEP_CAP: u64 = 1_000_000;
pub const DEFAULT_RANGE_CAP: u64 = 1_000_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WalkConfig {
    pub law: CookieLaw,
    /// Starting site. Excursions need `start != 0`; return times start at 0.
    pub start: i64,
    pub step_cap: u64,
    /// Distance from 0 at which a run is stopped and censored.
    pub range_cap: u64,
}

impl WalkConfig {
    pub fn new(law: CookieLaw) -> Self {
        Self {
            law,
            start: 1,
            step_cap: DEFAULT_STEP_CAP,
            range_cap: DEFAULT_RANGE_CAP,
        }
    }

    pub fn with_start(mut self, start: i64) -> Self {
        self.start = start;
        self
    }

    pub fn with_step_cap(mut self, cap: u64) -> Self {
        self.step_cap = cap;
        self
    }

    pub fn with_range_cap(mut self, cap: u64) -> Self {
        self.range_cap = cap;
        self
    }

    fn validate(&self) -> Result<()> {
        if self.step_cap == 0 || self.range_cap == 0 {
            return Err(Error::InvalidInput("step_cap and range_cap must be >= 1".into()));
        }
        if self.start.unsigned_abs() >= self.range_cap {
            return Err(Error::InvalidInput(format!(
                "start {} lies beyond range_cap {}",
                self.start, self.range_cap
            )));
        }
        Ok(())
    }
}

/// One excursion (or return) of the walk.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExcursionOutcome {
    /// The walk reached 0 within the caps.
    pub returned: bool,
    /// Steps taken: the hitting time of 0 when returned.
    pub duration: u64,
    /// Largest distance from 0 reached.
    pub depth: u64,
    pub censored: bool,
    /// Side of 0 the excursion lived on: 1 right, -1 left.
    pub side: i8,
}

impl ExcursionOutcome {
    pub fn duration_sample(&self) -> Sample {
        if self.returned {
            Sample::exact(self.duration as f64)
        } else {
            Sample::censored(self.duration as f64)
        }
    }

    pub fn depth_sample(&self) -> Sample {
        if self.returned {
            Sample::exact(self.depth as f64)
        } else {
            Sample::censored(self.depth as f64)
        }
    }
}

const UNSAMPLED: u32 = u32::MAX;

#[derive(Debug, Clone, Copy)]
struct SiteState {
    stack: u32,
    visits: u32,
}

const FRESH: SiteState = SiteState {
    stack: UNSAMPLED,
    visits: 0,
};

/// Reusable per-worker state: the flattened cookie table and the lazily
/// filled environment.
#[derive(Debug, Clone)]
pub struct Walker {
    law: CookieLaw,
    m: usize,
    probs: Vec<f64>,
    sites: Vec<SiteState>,
}

impl Walker {
    pub fn new(law: &CookieLaw) -> Self {
        let probs = law
            .stacks()
            .iter()
            .flat_map(|s| s.probs.iter().copied())
            .collect();
        Self {
            law: law.clone(),
            m: law.m(),
            probs,
            sites: vec![FRESH; 64],
        }
    }

    /// Walks from distance `start >= 1` on side `side` until 0 or a cap.
    /// `upcrossings[k]`, when given, counts steps from `k` to `k + 1`.
    pub fn excursion<C: Coins>(
        &mut self,
        start: u64,
        side: i8,
        step_cap: u64,
        range_cap: u64,
        coins: &mut C,
        mut upcrossings: Option<&mut Vec<u64>>,
    ) -> ExcursionOutcome {
        debug_assert!(start >= 1);
        let mut x = start as usize;
        let mut depth = x;
        let mut steps = 0u64;
        let range = range_cap.min(usize::MAX as u64) as usize;
        while x > 0 && steps < step_cap && x < range {
            if x >= self.sites.len() {
                let len = (2 * self.sites.len()).max(x + 1).min(range + 1);
                self.sites.resize(len, FRESH);
            }
            let site = &mut self.sites[x];
            if site.stack == UNSAMPLED {
                site.stack = self.law.stack_index_from_uniform(coins.stack_uniform(x)) as u32;
            }
            let away = if (site.visits as usize) < self.m {
                let p = self.probs[site.stack as usize * self.m + site.visits as usize];
                site.visits += 1;
                coins.trial(x, if side > 0 { p } else { 1.0 - p })
            } else {
                coins.fair(x)
            };
            steps += 1;
            if away {
                if let Some(u) = upcrossings.as_deref_mut() {
                    if x >= u.len() {
                        u.resize(x + 1, 0);
                    }
                    u[x] += 1;
                }
                x += 1;
                depth = depth.max(x);
            } else {
                x -= 1;
            }
        }
        let end = (depth + 1).min(self.sites.len());
        self.sites[..end].fill(FRESH);
        let returned = x == 0;
        ExcursionOutcome {
            returned,
            duration: steps,
            depth: depth as u64,
            censored: !returned,
            side,
        }
    }

    /// Walks from 0 until the first return, with the step cap counting the
    /// first step.
    pub fn ret<C: Coins>(&mut self, step_cap: u64, range_cap: u64, coins: &mut C) -> ExcursionOutcome {
        let stack = self.law.stack_index_from_uniform(coins.stack_uniform(0));
        let p = self.probs[stack * self.m];
        let side = if coins.trial(0, p) { 1 } else { -1 };
        if step_cap <= 1 || range_cap <= 1 {
            return ExcursionOutcome {
                returned: false,
                duration: 1,
                depth: 1,
                censored: true,
                side,
            };
        }
        let mut out = self.excursion(1, side, step_cap - 1, range_cap, coins, None);
        out.duration += 1;
        out
    }
}

/// One excursion from `cfg.start` to 0 under the averaged law.
pub fn run_excursion<C: Coins>(cfg: &WalkConfig, coins: &mut C) -> Result<ExcursionOutcome> {
    cfg.validate()?;
    if cfg.start == 0 {
        return Err(Error::InvalidInput("excursions need start != 0".into()));
    }
    let side = if cfg.start > 0 { 1 } else { -1 };
    Ok(Walker::new(&cfg.law).excursion(
        cfg.start.unsigned_abs(),
        side,
        cfg.step_cap,
        cfg.range_cap,
        coins,
        None,
    ))
}

/// One return to 0 from 0 under the averaged law.
pub fn run_return<C: Coins>(cfg: &WalkConfig, coins: &mut C) -> Result<ExcursionOutcome> {
    cfg.validate()?;
    if cfg.start != 0 {
        return Err(Error::InvalidInput("return times start at 0".into()));
    }
    Ok(Walker::new(&cfg.law).ret(cfg.step_cap, cfg.range_cap, coins))
}

/// `runs` independent excursions; path `i` reads stream `i` of `seed`.
pub fn simulate_excursions(
    cfg: &WalkConfig,
    runs: u64,
    seed: u64,
    workers: Option<usize>,
) -> Result<Vec<ExcursionOutcome>> {
    cfg.validate()?;
    if cfg.start == 0 {
        return Err(Error::InvalidInput("excursions need start != 0".into()));
    }
    let side = if cfg.start > 0 { 1 } else { -1 };
    let start = cfg.start.unsigned_abs();
    Ok(map_paths(
        workers,
        runs,
        || Walker::new(&cfg.law),
        |w, i| {
            let mut coins = PathCoins::new(seed, i);
            w.excursion(start, side, cfg.step_cap, cfg.range_cap, &mut coins, None)
        },
    ))
}

/// `runs` independent returns from 0.
pub fn simulate_returns(
    cfg: &WalkConfig,
    runs: u64,
    seed: u64,
    workers: Option<usize>,
) -> Result<Vec<ExcursionOutcome>> {
    cfg.validate()?;
    Ok(map_paths(
        workers,
        runs,
        || Walker::new(&cfg.law),
        |w, i| {
            let mut coins = PathCoins::new(seed, i);
            w.ret(cfg.step_cap, cfg.range_cap, &mut coins)
        },
    ))
}

/// Fraction of excursions from `cfg.start` that did not return within the
/// caps: an upper estimate of `P[T_0 = inf]` that decreases as caps grow.
pub fn estimate_escape(
    cfg: &WalkConfig,
    runs: u64,
    seed: u64,
    workers: Option<usize>,
) -> Result<Proportion> {
    if runs == 0 {
        return Err(Error::InvalidInput("runs must be >= 1".into()));
    }
    let out = simulate_excursions(cfg, runs, seed, workers)?;
    let escaped = out.iter().filter(|o| o.censored).count() as u64;
    Ok(wilson(escaped, runs, Z95))
}

/// Excursion from 1 reading per-site coin streams keyed by `site_seed`,
/// together with the upcrossing counts `U_k` (with `U_0 = 1`).
pub fn coupled_excursion(
    law: &CookieLaw,
    step_cap: u64,
    range_cap: u64,
    site_seed: u64,
) -> (ExcursionOutcome, Vec<u64>) {
    let mut coins = SiteCoins::new(site_seed);
    let mut up = vec![1u64];
    let out = Walker::new(law).excursion(1, 1, step_cap, range_cap, &mut coins, Some(&mut up));
    while up.len() > 1 && *up.last().unwrap() == 0 {
        up.pop();
    }
    (out, up)
}

/// Seed of the per-site streams used by path `path` of a coupling run.
pub fn coupling_seed(seed: u64, path: u64) -> u64 {
    derive_seed(seed, path)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cookie::WeightedStack;
    use crate::stats::{build_survival, fit_tail, ks_two_sample, DEFAULT_GRID_BASE};

    fn fair() -> CookieLaw {
        CookieLaw::fair(2)
    }

    #[test]
    fn fair_one_step_return() {
        let cfg = WalkConfig::new(fair());
        let out = simulate_excursions(&cfg, 100_000, 1, None).unwrap();
        let ones = out.iter().filter(|o| o.duration == 1).count() as f64 / 1e5;
        // Binomial SE 0.0016.
        assert!((ones - 0.5).abs() < 0.007, "{ones}");
    }

    #[test]
    fn parity_and_depth_invariants() {
        let law = CookieLaw::single(vec![0.9, 0.2, 0.7]).unwrap();
        let cfg = WalkConfig::new(law).with_step_cap(10_000);
        for o in simulate_excursions(&cfg, 5000, 2, None).unwrap() {
            if o.returned {
                assert_eq!(o.duration % 2, 1);
            }
            assert!(o.depth >= 1);
        }
        let cfg = cfg.with_start(0);
        for o in simulate_returns(&cfg, 5000, 3, None).unwrap() {
            if o.returned {
                assert_eq!(o.duration % 2, 0);
            }
        }
    }

    #[test]
    fn forced_first_step() {
        let law = CookieLaw::without_ellipticity_check(
            3,
            vec![WeightedStack {
                probs: vec![1.0; 3],
                weight: 1.0,
            }],
        )
        .unwrap();
        let cfg = WalkConfig::new(law).with_step_cap(1000);
        for o in simulate_excursions(&cfg, 1000, 4, None).unwrap() {
            assert!(o.depth >= 2);
        }
    }

    #[test]
    fn fair_return_two_steps() {
        let cfg = WalkConfig::new(fair()).with_start(0);
        let out = simulate_returns(&cfg, 100_000, 5, None).unwrap();
        let twos = out.iter().filter(|o| o.duration == 2).count() as f64 / 1e5;
        assert!((twos - 0.5).abs() < 0.007, "{twos}");
    }

    #[test]
    fn fair_return_tail_slope() {
        let cfg = WalkConfig::new(fair()).with_start(0).with_step_cap(1 << 18);
        let out = simulate_returns(&cfg, 200_000, 6, None).unwrap();
        let s: Vec<Sample> = out.iter().map(|o| o.duration_sample()).collect();
        let fit = fit_tail(&build_survival(&s, DEFAULT_GRID_BASE).unwrap()).unwrap();
        assert!((fit.exponent - 0.5).abs() < 0.05, "{fit:?}");
    }

    #[test]
    fn escape_estimates() {
        let fair_cfg = WalkConfig::new(fair());
        let p = estimate_escape(&fair_cfg, 10_000, 7, None).unwrap();
        assert!(p.estimate < 0.01, "{p:?}");

        let up = WalkConfig::new(CookieLaw::single(vec![0.9, 0.9]).unwrap());
        let p = estimate_escape(&up, 2000, 8, None).unwrap();
        assert!(p.estimate > 0.05, "{p:?}");

        let down = WalkConfig::new(CookieLaw::equal_strength(-2.0).unwrap());
        let p = estimate_escape(&down, 10_000, 9, None).unwrap();
        assert_eq!(p.successes, 0, "{p:?}");
    }

    #[test]
    fn escape_is_monotone_in_cap() {
        let law = CookieLaw::single(vec![0.9, 0.9]).unwrap();
        let small = WalkConfig::new(law.clone()).with_step_cap(100);
        let large = WalkConfig::new(law).with_step_cap(10_000);
        let a = estimate_escape(&small, 4000, 10, None).unwrap();
        let b = estimate_escape(&large, 4000, 10, None).unwrap();
        // Same streams, so the longer cap can only turn escapes into returns.
        assert!(b.successes <= a.successes);
    }

    #[test]
    fn left_excursion_mirrors_right() {
        let law = CookieLaw::single(vec![0.8, 0.35]).unwrap();
        let left = WalkConfig::new(law.clone()).with_start(-1).with_step_cap(100_000);
        let right = WalkConfig::new(law.mirror()).with_step_cap(100_000);
        let a: Vec<f64> = simulate_excursions(&left, 100_000, 11, None)
            .unwrap()
            .iter()
            .map(|o| o.depth as f64)
            .collect();
        let b: Vec<f64> = simulate_excursions(&right, 100_000, 12, None)
            .unwrap()
            .iter()
            .map(|o| o.depth as f64)
            .collect();
        let ks = ks_two_sample(&a, &b).unwrap();
        assert!(ks.p_value > 0.01, "{ks:?}");
    }

    #[test]
    fn deterministic_under_worker_count() {
        let cfg = WalkConfig::new(CookieLaw::single(vec![0.7, 0.6]).unwrap()).with_step_cap(5000);
        let a = simulate_excursions(&cfg, 3000, 13, Some(1)).unwrap();
        let b = simulate_excursions(&cfg, 3000, 13, Some(3)).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn validation() {
        let cfg = WalkConfig::new(fair());
        assert!(run_excursion(&cfg.clone().with_start(0), &mut PathCoins::new(0, 0)).is_err());
        assert!(run_return(&cfg.clone(), &mut PathCoins::new(0, 0)).is_err());
        assert!(run_excursion(&cfg.clone().with_step_cap(0), &mut PathCoins::new(0, 0)).is_err());
        let o = run_excursion(&cfg, &mut PathCoins::new(0, 0)).unwrap();
        assert!(o.returned || o.censored);
    }

    #[test]
    fn range_cap_censors() {
        let law = CookieLaw::single(vec![0.99, 0.99]).unwrap();
        let cfg = WalkConfig::new(law).with_range_cap(10);
        for o in simulate_excursions(&cfg, 500, 14, None).unwrap() {
            assert!(o.depth <= 10);
            assert_eq!(o.censored, !o.returned);
        }
    }
}
