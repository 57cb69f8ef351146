use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::survival::SurvivalTable;
use crate::error::{Error, Result};

/// Power-law fit `P[X > n] ~ prefactor * n^(-exponent)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub exponent: f64,
    pub prefactor: f64,
    /// 95% bootstrap percentile interval for the exponent.
    pub ci_exponent: (f64, f64),
    pub fit_window: (f64, f64),
    pub points: usize,
    pub r2: f64,
    /// Set when no window with a stable local slope was found.
    pub warning: Option<String>,
}

impl TailFit {
    pub fn ci_contains(&self, x: f64) -> bool {
        self.ci_exponent.0 <= x && x <= self.ci_exponent.1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FitOptions {
    /// A grid point is usable when at least this many samples exceed it.
    pub min_exceed: u64,
    pub min_points: usize,
    /// Points per local-slope sub-window.
    pub local_width: usize,
    /// Maximal relative spread of local slopes inside a stable window.
    pub max_variation: f64,
    /// Variance floor added to every point's `Var[ln S]`: the regression
    /// model only holds asymptotically, so no point is trusted beyond this.
    pub model_variance: f64,
    pub bootstrap: usize,
    pub seed: u64,
    /// Manual `[n_lo, n_hi]` override of the window search.
    pub window: Option<(f64, f64)>,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            min_exceed: 30,
            min_points: 8,
            local_width: 7,
            max_variation: 0.2,
            model_variance: 0.01,
            bootstrap: 200,
            seed: 0x7a11,
            window: None,
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct Line {
    slope: f64,
    intercept: f64,
    r2: f64,
}

fn wls(xs: &[f64], ys: &[f64], ws: &[f64]) -> Option<Line> {
    let sw: f64 = ws.iter().sum();
    if xs.len() < 2 || sw <= 0.0 {
        return None;
    }
    let mx = xs.iter().zip(ws).map(|(x, w)| x * w).sum::<f64>() / sw;
    let my = ys.iter().zip(ws).map(|(y, w)| y * w).sum::<f64>() / sw;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for ((x, y), w) in xs.iter().zip(ys).zip(ws) {
        sxx += w * (x - mx) * (x - mx);
        sxy += w * (x - mx) * (y - my);
        syy += w * (y - my) * (y - my);
    }
    if sxx <= 0.0 {
        return None;
    }
    let slope = sxy / sxx;
    let r2 = if syy > 0.0 { sxy * sxy / (sxx * syy) } else { 1.0 };
    Some(Line {
        slope,
        intercept: my - slope * mx,
        r2,
    })
}

/// Regression data `(ln n, ln S, weight)` at the given grid indices.
fn points(table: &SurvivalTable, idx: &[usize], model_variance: f64) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let mut xs = Vec::with_capacity(idx.len());
    let mut ys = Vec::with_capacity(idx.len());
    let mut ws = Vec::with_capacity(idx.len());
    for &j in idx {
        let s = table.survival[j];
        if s > 0.0 && s < 1.0 {
            xs.push(table.thresholds[j].ln());
            ys.push(s.ln());
            ws.push(1.0 / (table.log_variance[j] + model_variance));
        }
    }
    (xs, ys, ws)
}

fn usable(table: &SurvivalTable, opts: &FitOptions) -> Vec<usize> {
    (0..table.len())
        .filter(|&j| {
            let s = table.survival[j];
            table.exceed[j] >= opts.min_exceed && s > 0.0 && s < 1.0
        })
        .collect()
}

/// Widest run of usable points whose local slopes agree within
/// `max_variation`; ties go to the run reaching larger `n`.
fn stable_window(table: &SurvivalTable, idx: &[usize], opts: &FitOptions) -> Option<(usize, usize)> {
    let w = opts.local_width.max(2);
    let p = idx.len();
    if p < opts.min_points.max(w) {
        return None;
    }
    let local: Vec<f64> = (0..=p - w)
        .map(|i| {
            let (xs, ys, ws) = points(table, &idx[i..i + w], opts.model_variance);
            wls(&xs, &ys, &ws).map_or(f64::NAN, |l| l.slope)
        })
        .collect();
    let mut best: Option<(usize, usize)> = None;
    for a in 0..p {
        for b in (a + opts.min_points.max(w) - 1)..p {
            let slopes = &local[a..=b + 1 - w];
            if slopes.iter().any(|s| !s.is_finite()) {
                continue;
            }
            let lo = slopes.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let mean = slopes.iter().map(|s| s.abs()).sum::<f64>() / slopes.len() as f64;
            if mean <= 0.0 || (hi - lo) > opts.max_variation * mean {
                continue;
            }
            let better = match best {
                None => true,
                Some((ba, bb)) => b - a > bb - ba || (b - a == bb - ba && b > bb),
            };
            if better {
                best = Some((a, b));
            }
        }
    }
    best
}

/// Fits the tail with default options.
pub fn fit_tail(table: &SurvivalTable) -> Result<TailFit> {
    fit_tail_with(table, &FitOptions::default())
}

/// Grid indices entering the regression, plus a warning when the window
/// search found nothing stable.
fn select(table: &SurvivalTable, opts: &FitOptions) -> Result<(Vec<usize>, Option<String>)> {
    let all = usable(table, opts);
    if all.len() < opts.min_points {
        return Err(Error::InsufficientData(format!(
            "{} usable grid points (exceed >= {}), need {}",
            all.len(),
            opts.min_exceed,
            opts.min_points
        )));
    }
    let (idx, warning) = match opts.window {
        Some((lo, hi)) => {
            let idx: Vec<usize> = all
                .into_iter()
                .filter(|&j| table.thresholds[j] >= lo && table.thresholds[j] <= hi)
                .collect();
            (idx, None)
        }
        None => match stable_window(table, &all, opts) {
            Some((a, b)) => (all[a..=b].to_vec(), None),
            None => (
                all,
                Some(format!(
                    "no window of {} points with local slopes within {:.0}%",
                    opts.min_points,
                    100.0 * opts.max_variation
                )),
            ),
        },
    };
    if idx.len() < 2 {
        return Err(Error::InsufficientData(format!(
            "{} usable grid points inside the window",
            idx.len()
        )));
    }
    Ok((idx, warning))
}

/// Fits the tail. The bootstrap repeats the window search on every
/// replicate, so the interval reflects the window choice as well.
pub fn fit_tail_with(table: &SurvivalTable, opts: &FitOptions) -> Result<TailFit> {
    let (idx, warning) = select(table, opts)?;
    let (xs, ys, ws) = points(table, &idx, opts.model_variance);
    let line = wls(&xs, &ys, &ws)
        .ok_or_else(|| Error::InsufficientData("degenerate regression".into()))?;
    let exponent = -line.slope;

    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut boot: Vec<f64> = (0..opts.bootstrap)
        .filter_map(|_| {
            let r = table.resample(&mut rng);
            let (idx, _) = select(&r, opts).ok()?;
            let (xs, ys, ws) = points(&r, &idx, opts.model_variance);
            wls(&xs, &ys, &ws).map(|l| -l.slope)
        })
        .collect();
    boot.sort_by(f64::total_cmp);
    let ci = if boot.is_empty() {
        (exponent, exponent)
    } else {
        let q = |p: f64| boot[((p * (boot.len() - 1) as f64).round() as usize).min(boot.len() - 1)];
        (q(0.025).min(exponent), q(0.975).max(exponent))
    };
    Ok(TailFit {
        exponent,
        prefactor: line.intercept.exp(),
        ci_exponent: ci,
        fit_window: (table.thresholds[idx[0]], table.thresholds[*idx.last().unwrap()]),
        points: idx.len(),
        r2: line.r2,
        warning,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::survival::{build_survival, Sample, DEFAULT_GRID_BASE};
    use rand::Rng;

    fn quantile_sample(n: usize, inv_survival: impl Fn(f64) -> f64) -> Vec<Sample> {
        (0..n)
            .map(|i| Sample::exact(inv_survival((i as f64 + 0.5) / n as f64)))
            .collect()
    }

    #[test]
    fn exact_power_law() {
        let s = quantile_sample(100_000, |u| u.powf(-2.0));
        let t = build_survival(&s, DEFAULT_GRID_BASE).unwrap();
        let f = fit_tail(&t).unwrap();
        assert!((f.exponent - 0.5).abs() < 0.02, "{f:?}");
        assert!(f.warning.is_none());
        assert!(f.ci_contains(f.exponent));
    }

    #[test]
    fn perturbed_power_law_with_window() {
        // S(n) = (1 + 10/n) / n on n >= 11 (S = 1 there up to rounding).
        let inv = |u: f64| {
            // Solve (n + 10) / n^2 = u for n.
            (1.0 + (1.0 + 40.0 * u).sqrt()) / (2.0 * u)
        };
        let s = quantile_sample(100_000, inv);
        let t = build_survival(&s, DEFAULT_GRID_BASE).unwrap();
        let opts = FitOptions {
            window: Some((100.0, f64::INFINITY)),
            ..FitOptions::default()
        };
        let f = fit_tail_with(&t, &opts).unwrap();
        assert!((f.exponent - 1.0).abs() < 0.05, "{f:?}");
        assert!(f.fit_window.0 >= 100.0);
    }

    #[test]
    fn exponential_tail_is_flagged() {
        let s = quantile_sample(100_000, |u| -1000.0 * u.ln());
        let t = build_survival(&s, DEFAULT_GRID_BASE).unwrap();
        let f = fit_tail(&t).unwrap();
        assert!(f.warning.is_some(), "{f:?}");
    }

    #[test]
    fn too_few_points_is_an_error() {
        let s = quantile_sample(1000, |u| -u.ln());
        let t = build_survival(&s, DEFAULT_GRID_BASE).unwrap();
        assert!(matches!(fit_tail(&t), Err(Error::InsufficientData(_))));
    }

    #[test]
    fn bootstrap_ci_covers_true_exponent() {
        // A calibrated 95% interval covers about 95 of 100 repeats, so each
        // exponent is held to the 1% binomial quantile (90) and the pooled
        // 500 repeats to 93%.
        let mut rng = ChaCha8Rng::seed_from_u64(20261016);
        let mut pooled = 0;
        for alpha in [0.25, 0.5, 1.0, 1.5, 2.0] {
            let mut covered = 0;
            for rep in 0..100 {
                let s: Vec<Sample> = (0..50_000)
                    .map(|_| Sample::exact((1.0 - rng.random::<f64>()).powf(-1.0 / alpha)))
                    .collect();
                let t = build_survival(&s, DEFAULT_GRID_BASE).unwrap();
                let opts = FitOptions {
                    seed: rep,
                    ..FitOptions::default()
                };
                let f = fit_tail_with(&t, &opts).unwrap();
                covered += usize::from(f.ci_contains(alpha));
            }
            assert!(covered >= 90, "alpha {alpha}: {covered}/100");
            pooled += covered;
        }
        assert!(pooled >= 465, "{pooled}/500");
    }
}
