//! The limiting diffusion `dY = delta dt + sqrt(2 Y^+) dB`.
//!
//! `2Y` is a squared Bessel process of dimension `2 delta`.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par::map_paths;
use crate::rng::stream_rng;
use crate::stats::{build_survival, fit_tail, ks_two_sample, KsReport, Sample, SurvivalTable, TailFit, DEFAULT_GRID_BASE, Z95};

pub const DEFAULT_DT: f64 = 1e-4;
pub const DEFAULT_HORIZON: f64 = 1e3;

/// What a path does after its first passage below 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PostAbsorption {
    /// Stays at 0.
    Frozen,
    /// Continues as `delta (t - sigma_0)`; only for `delta < 0`.
    DegenerateDrift,
    /// Keeps integrating the equation; the unstopped process for `delta > 0`.
    Free,
}

/// Step size rule for functional sampling.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stepping {
    /// Constant step `dt`.
    Fixed,
    /// Step `dt * max(1, Y)`: constant relative resolution, so paths that
    /// wander to level `L` cost `O(log L / dt)` steps instead of `O(L / dt)`.
    Adaptive,
}

/// Euler path on the grid `t_j = j dt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiffusionPath {
    pub dt: f64,
    pub values: Vec<f64>,
    /// First passage to 0, linearly interpolated between grid points.
    pub absorbed_at: Option<f64>,
    pub mode: PostAbsorption,
}

impl DiffusionPath {
    pub fn time(&self, j: usize) -> f64 {
        j as f64 * self.dt
    }

    pub fn last(&self) -> f64 {
        *self.values.last().unwrap()
    }
}

fn check_start(delta: f64, x0: f64) -> Result<()> {
    if !delta.is_finite() || !x0.is_finite() || x0 < 0.0 {
        return Err(Error::InvalidInput(format!("need finite delta and x0 >= 0, got {delta}, {x0}")));
    }
    Ok(())
}

fn check_grid(x0: f64, dt: f64, horizon: f64) -> Result<()> {
    if !(dt > 0.0 && dt <= 1e-3 * x0.max(1.0) * (1.0 + 1e-12)) {
        return Err(Error::InvalidInput(format!("dt = {dt} must lie in (0, 1e-3 max(1, x0)]")));
    }
    if !(horizon.is_finite() && horizon >= dt) {
        return Err(Error::InvalidInput(format!("horizon {horizon} must be finite and >= dt")));
    }
    Ok(())
}

fn grid_steps(dt: f64, horizon: f64) -> usize {
    ((horizon / dt) * (1.0 - 1e-12)).ceil() as usize
}

#[inline]
fn euler_increment<R: Rng + ?Sized>(y: f64, delta: f64, h: f64, rng: &mut R) -> f64 {
    let z: f64 = rng.sample(StandardNormal);
    y + delta * h + (2.0 * y.max(0.0) * h).sqrt() * z
}

/// Euler-Maruyama path on `[0, horizon]`.
pub fn euler_path<R: Rng + ?Sized>(
    delta: f64,
    x0: f64,
    dt: f64,
    horizon: f64,
    mode: PostAbsorption,
    rng: &mut R,
) -> Result<DiffusionPath> {
    check_start(delta, x0)?;
    check_grid(x0, dt, horizon)?;
    if mode == PostAbsorption::DegenerateDrift && delta >= 0.0 {
        return Err(Error::InvalidInput("degenerate continuation needs delta < 0".into()));
    }
    let steps = grid_steps(dt, horizon);
    let mut values = Vec::with_capacity(steps + 1);
    values.push(x0);
    let mut absorbed_at = (x0 == 0.0 && delta <= 0.0).then_some(0.0);
    let mut y = x0;
    for j in 0..steps {
        let t = j as f64 * dt;
        let next = match (absorbed_at, mode) {
            (Some(_), PostAbsorption::Frozen) => 0.0,
            (Some(s), PostAbsorption::DegenerateDrift) => delta * (t + dt - s),
            _ => {
                let next = euler_increment(y, delta, dt, rng);
                if !next.is_finite() {
                    return Err(Error::NonFinite { t: t + dt });
                }
                if absorbed_at.is_none() && y > 0.0 && next <= 0.0 {
                    let s = t + dt * y / (y - next);
                    absorbed_at = Some(s);
                    match mode {
                        PostAbsorption::Frozen => 0.0,
                        PostAbsorption::DegenerateDrift => delta * (t + dt - s),
                        PostAbsorption::Free => next,
                    }
                } else {
                    next
                }
            }
        };
        y = next;
        values.push(y);
    }
    Ok(DiffusionPath {
        dt,
        values,
        absorbed_at,
        mode,
    })
}

/// `Y(t)` of an Euler path without storing it, and the stopping time
/// `t ^ sigma_0` (the first passage only counts in frozen mode).
pub fn euler_marginal<R: Rng + ?Sized>(
    delta: f64,
    x0: f64,
    dt: f64,
    t: f64,
    mode: PostAbsorption,
    rng: &mut R,
) -> Result<(f64, f64)> {
    check_start(delta, x0)?;
    check_grid(x0, dt, t)?;
    if mode == PostAbsorption::DegenerateDrift {
        let p = euler_path(delta, x0, dt, t, mode, rng)?;
        return Ok((p.last(), p.absorbed_at.map_or(t, |s| s.min(t))));
    }
    if x0 == 0.0 && delta <= 0.0 {
        return Ok((0.0, 0.0));
    }
    let steps = grid_steps(dt, t);
    let mut y = x0;
    for j in 0..steps {
        let next = euler_increment(y, delta, dt, rng);
        if !next.is_finite() {
            return Err(Error::NonFinite { t: (j + 1) as f64 * dt });
        }
        if mode == PostAbsorption::Frozen && y > 0.0 && next <= 0.0 {
            return Ok((0.0, j as f64 * dt + dt * y / (y - next)));
        }
        y = next;
    }
    Ok((y, t))
}

/// Exact draw of `Y(t)` from `x0` for `delta >= 0`: `t Gamma(delta + N)`
/// with `N ~ Poisson(x0 / t)`, shape 0 meaning the point mass at 0.
pub fn exact_bessel_marginal<R: Rng + ?Sized>(delta: f64, x0: f64, t: f64, rng: &mut R) -> Result<f64> {
    check_start(delta, x0)?;
    if delta < 0.0 {
        return Err(Error::InvalidInput("exact marginal needs delta >= 0".into()));
    }
    if !(t > 0.0 && t.is_finite()) {
        return Err(Error::InvalidInput(format!("time {t} must be positive")));
    }
    let lambda = x0 / t;
    let n = if lambda > 0.0 {
        Poisson::new(lambda)
            .map_err(|e| Error::InvalidInput(e.to_string()))?
            .sample(rng)
    } else {
        0.0
    };
    let shape = delta + n;
    if shape == 0.0 {
        return Ok(0.0);
    }
    let g = Gamma::new(shape, 1.0).map_err(|e| Error::InvalidInput(e.to_string()))?;
    Ok(t * g.sample(rng))
}

/// First passage to 0 and the area below the path up to it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FunctionalSample {
    pub sigma0: Option<f64>,
    /// Area up to `sigma_0`, or up to the horizon when censored.
    pub area: f64,
    pub censored: bool,
    pub horizon: f64,
}

impl FunctionalSample {
    pub fn sigma0_sample(&self) -> Sample {
        match self.sigma0 {
            Some(s) => Sample::exact(s),
            None => Sample::censored(self.horizon),
        }
    }

    pub fn area_sample(&self) -> Sample {
        Sample {
            value: self.area,
            censored: self.censored,
        }
    }

    /// `sigma_0`, or `+inf` when censored.
    pub fn sigma0_or_inf(&self) -> f64 {
        self.sigma0.unwrap_or(f64::INFINITY)
    }
}

/// Runs one frozen path until absorption or `horizon`, tracking the
/// trapezoidal area.
pub fn functional_path<R: Rng + ?Sized>(
    delta: f64,
    x0: f64,
    dt: f64,
    horizon: f64,
    stepping: Stepping,
    rng: &mut R,
) -> Result<FunctionalSample> {
    check_start(delta, x0)?;
    check_grid(x0, dt, horizon)?;
    let mut t = 0.0;
    let mut y = x0;
    let mut area = 0.0;
    if y <= 0.0 && delta <= 0.0 {
        return Ok(FunctionalSample {
            sigma0: Some(0.0),
            area: 0.0,
            censored: false,
            horizon,
        });
    }
    while t < horizon {
        let h = match stepping {
            Stepping::Fixed => dt,
            Stepping::Adaptive => dt * y.max(1.0),
        }
        .min(horizon - t);
        let next = euler_increment(y, delta, h, rng);
        if !next.is_finite() {
            return Err(Error::NonFinite { t: t + h });
        }
        if y > 0.0 && next <= 0.0 {
            let frac = y / (y - next);
            return Ok(FunctionalSample {
                sigma0: Some(t + frac * h),
                area: area + 0.5 * y * frac * h,
                censored: false,
                horizon,
            });
        }
        area += 0.5 * (y.max(0.0) + next.max(0.0)) * h;
        t += h;
        y = next;
    }
    Ok(FunctionalSample {
        sigma0: None,
        area,
        censored: true,
        horizon,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalConfig {
    pub delta: f64,
    pub x0: f64,
    pub dt: f64,
    pub horizon: f64,
    pub stepping: Stepping,
}

impl FunctionalConfig {
    pub fn new(delta: f64, x0: f64) -> Self {
        Self {
            delta,
            x0,
            dt: DEFAULT_DT,
            horizon: DEFAULT_HORIZON,
            stepping: Stepping::Adaptive,
        }
    }

    pub fn with_dt(mut self, dt: f64) -> Self {
        self.dt = dt;
        self
    }

    pub fn with_horizon(mut self, horizon: f64) -> Self {
        self.horizon = horizon;
        self
    }

    pub fn with_stepping(mut self, stepping: Stepping) -> Self {
        self.stepping = stepping;
        self
    }
}

/// `runs` functional samples; path `i` uses stream `i` of `seed`.
pub fn functional_samples(
    cfg: &FunctionalConfig,
    runs: u64,
    seed: u64,
    workers: Option<usize>,
) -> Result<Vec<FunctionalSample>> {
    check_start(cfg.delta, cfg.x0)?;
    check_grid(cfg.x0, cfg.dt, cfg.horizon)?;
    map_paths(workers, runs, || (), |_, i| {
        functional_path(cfg.delta, cfg.x0, cfg.dt, cfg.horizon, cfg.stepping, &mut stream_rng(seed, i))
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FunctionalReport {
    pub samples: Vec<FunctionalSample>,
    /// Target exponent `1 - delta`.
    pub sigma0_fit: TailFit,
    /// Target exponent `(1 - delta) / 2`.
    pub area_fit: TailFit,
    pub censored_fraction: f64,
    pub warning: Option<String>,
}

/// Samples the functionals and fits both tails. Needs `delta < 1`.
pub fn sample_functionals(
    cfg: &FunctionalConfig,
    runs: u64,
    seed: u64,
    workers: Option<usize>,
) -> Result<FunctionalReport> {
    if cfg.delta >= 1.0 {
        return Err(Error::InvalidInput(format!("functional tails need delta < 1, got {}", cfg.delta)));
    }
    let samples = functional_samples(cfg, runs, seed, workers)?;
    let sig: Vec<Sample> = samples.iter().map(|s| s.sigma0_sample()).collect();
    let area: Vec<Sample> = samples.iter().map(|s| s.area_sample()).collect();
    let sigma0_fit = fit_tail(&build_survival(&sig, DEFAULT_GRID_BASE)?)?;
    let area_fit = fit_tail(&build_survival(&area, DEFAULT_GRID_BASE)?)?;
    let censored = samples.iter().filter(|s| s.censored).count() as f64 / samples.len() as f64;
    let warning = (censored > 0.5).then(|| format!("{:.0}% of paths censored at the horizon", 100.0 * censored));
    Ok(FunctionalReport {
        samples,
        sigma0_fit,
        area_fit,
        censored_fraction: censored,
        warning,
    })
}

/// KS distance between `sigma_0` from `x1` and `(x1 / x2) sigma_0` from `x2`.
///
/// Paths from `x2` run to `horizon * x2 / x1` so both samples are censored at
/// the same rescaled time; censored values enter as `+inf`.
pub fn scaling_check(
    cfg: &FunctionalConfig,
    x2: f64,
    runs: u64,
    seed: u64,
    workers: Option<usize>,
) -> Result<KsReport> {
    let x1 = cfg.x0;
    if !(x1 > 0.0 && x2 > 0.0) {
        return Err(Error::InvalidInput("scaling check needs x1, x2 > 0".into()));
    }
    let c2 = FunctionalConfig {
        x0: x2,
        horizon: cfg.horizon * x2 / x1,
        ..cfg.clone()
    };
    let a: Vec<f64> = functional_samples(cfg, runs, crate::rng::derive_seed(seed, 1), workers)?
        .iter()
        .map(|s| s.sigma0_or_inf())
        .collect();
    let b: Vec<f64> = functional_samples(&c2, runs, crate::rng::derive_seed(seed, 2), workers)?
        .iter()
        .map(|s| s.sigma0_or_inf() * x1 / x2)
        .collect();
    ks_two_sample(&a, &b)
}

/// Plateau of `t^alpha P[X > t]` over the top decade of usable grid points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Plateau {
    pub value: f64,
    pub ci: (f64, f64),
    /// `|d ln(t^alpha S) / d ln t|` times the log-width of the window:
    /// the relative drift of the plateau across it.
    pub flatness: f64,
    pub window: (f64, f64),
    pub reliable: bool,
}

pub const PLATEAU_MIN_EXCEED: u64 = 1000;
pub const PLATEAU_MAX_FLATNESS: f64 = 0.1;

pub fn plateau(table: &SurvivalTable, alpha: f64) -> Result<Plateau> {
    let idx: Vec<usize> = (0..table.len())
        .filter(|&j| table.exceed[j] >= PLATEAU_MIN_EXCEED && table.survival[j] > 0.0 && table.survival[j] < 1.0)
        .collect();
    let Some(&top) = idx.last() else {
        return Err(Error::InsufficientData("no grid point with enough exceedances".into()));
    };
    let t_hi = table.thresholds[top];
    let win: Vec<usize> = idx.into_iter().filter(|&j| table.thresholds[j] >= t_hi / 10.0).collect();
    if win.len() < 2 {
        return Err(Error::InsufficientData("fewer than two points in the top decade".into()));
    }
    let xs: Vec<f64> = win.iter().map(|&j| table.thresholds[j].ln()).collect();
    let ys: Vec<f64> = win
        .iter()
        .map(|&j| alpha * table.thresholds[j].ln() + table.survival[j].ln())
        .collect();
    let ws: Vec<f64> = win.iter().map(|&j| 1.0 / table.log_variance[j].max(1e-12)).collect();
    let sw: f64 = ws.iter().sum();
    let mx = xs.iter().zip(&ws).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my = ys.iter().zip(&ws).map(|(y, w)| y * w).sum::<f64>() / sw;
    let sxx: f64 = xs.iter().zip(&ws).map(|(x, w)| w * (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(&ys).zip(&ws).map(|((x, y), w)| w * (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let flatness = (slope * (xs[xs.len() - 1] - xs[0])).abs();
    let value = my.exp();
    let mid = win[win.len() / 2];
    let half = Z95 * table.log_variance[mid].sqrt();
    Ok(Plateau {
        value,
        ci: (value * (-half).exp(), value * half.exp()),
        flatness,
        window: (table.thresholds[win[0]], t_hi),
        reliable: flatness <= PLATEAU_MAX_FLATNESS,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AbEstimate {
    pub delta: f64,
    /// Plateau of `t^(1-delta) P_1[sigma_0 > t]`.
    pub a: Plateau,
    /// Plateau of `t^((1-delta)/2) P_1[area > t]`.
    pub b: Plateau,
}

/// Plateau estimates of the constants in the functional tails from `x0 = 1`.
pub fn estimate_ab(cfg: &FunctionalConfig, runs: u64, seed: u64, workers: Option<usize>) -> Result<AbEstimate> {
    if cfg.delta >= 1.0 {
        return Err(Error::InvalidInput(format!("constants need delta < 1, got {}", cfg.delta)));
    }
    let cfg = FunctionalConfig { x0: 1.0, ..cfg.clone() };
    let s = functional_samples(&cfg, runs, seed, workers)?;
    let sig: Vec<Sample> = s.iter().map(|s| s.sigma0_sample()).collect();
    let area: Vec<Sample> = s.iter().map(|s| s.area_sample()).collect();
    let alpha = 1.0 - cfg.delta;
    Ok(AbEstimate {
        delta: cfg.delta,
        a: plateau(&build_survival(&sig, DEFAULT_GRID_BASE)?, alpha)?,
        b: plateau(&build_survival(&area, DEFAULT_GRID_BASE)?, alpha / 2.0)?,
    })
}

/// `n` exact marginal draws of `Y(t)` from `x0`.
pub fn exact_marginals(delta: f64, x0: f64, t: f64, n: u64, seed: u64) -> Result<Vec<f64>> {
    let mut rng: ChaCha8Rng = stream_rng(seed, 0);
    (0..n).map(|_| exact_bessel_marginal(delta, x0, t, &mut rng)).collect()
}

/// `n` Euler marginal draws of `Y(t)` from `x0`; path `i` uses stream `i`.
pub fn euler_marginals(
    delta: f64,
    x0: f64,
    dt: f64,
    t: f64,
    mode: PostAbsorption,
    n: u64,
    seed: u64,
    workers: Option<usize>,
) -> Result<Vec<f64>> {
    map_paths(workers, n, || (), |_, i| {
        euler_marginal(delta, x0, dt, t, mode, &mut stream_rng(seed, i)).map(|r| r.0)
    })
    .into_iter()
    .collect()
}
