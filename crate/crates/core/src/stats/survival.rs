use rand::Rng;
use rand_distr::{Binomial, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default grid base: two thresholds per octave.
pub const DEFAULT_GRID_BASE: f64 = std::f64::consts::SQRT_2;

/// One observation. A censored value `c` means only `X > c` is known.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub value: f64,
    pub censored: bool,
}

impl Sample {
    pub fn exact(value: f64) -> Self {
        Self {
            value,
            censored: false,
        }
    }

    pub fn censored(value: f64) -> Self {
        Self {
            value,
            censored: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Group {
    value: f64,
    events: u64,
    censored: u64,
}

/// Empirical survival `P[X > n]` on a geometric grid of thresholds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SurvivalTable {
    pub thresholds: Vec<f64>,
    /// Samples whose status at the threshold is known.
    pub at_risk: Vec<u64>,
    /// Samples known to exceed the threshold.
    pub exceed: Vec<u64>,
    /// Samples censored strictly below the threshold.
    pub censored_below: Vec<u64>,
    /// Kaplan-Meier estimate of `P[X > n]`.
    pub survival: Vec<f64>,
    /// Greenwood sum, an estimate of `Var[ln S(n)]`.
    pub log_variance: Vec<f64>,
    pub total: u64,
    pub grid_base: f64,
    #[serde(skip)]
    groups: Vec<Group>,
}

/// `ceil(base^j)`, treating values within rounding noise of an integer as
/// that integer.
fn grid_point(base: f64, j: i32) -> f64 {
    let v = base.powi(j);
    let r = v.round();
    if (v - r).abs() <= 1e-9 * v.max(1.0) {
        r
    } else {
        v.ceil()
    }
}

/// Thresholds `ceil(base^j)`, deduplicated, up to the first one at or above
/// `max_value`.
pub fn geometric_grid(base: f64, max_value: f64) -> Vec<f64> {
    let mut out: Vec<f64> = Vec::new();
    let mut j = 0;
    loop {
        let t = grid_point(base, j);
        if out.last().is_none_or(|&last| t > last) {
            out.push(t);
        }
        if t >= max_value || !t.is_finite() {
            break;
        }
        j += 1;
    }
    out
}

/// Builds a survival table from right-censored samples.
pub fn build_survival(samples: &[Sample], grid_base: f64) -> Result<SurvivalTable> {
    if !(grid_base > 1.0 && grid_base.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "grid base {grid_base} must exceed 1"
        )));
    }
    if samples.is_empty() {
        return Err(Error::InsufficientData("no samples".into()));
    }
    if let Some(s) = samples.iter().find(|s| !s.value.is_finite()) {
        return Err(Error::InvalidInput(format!("sample value {}", s.value)));
    }
    if samples.iter().all(|s| s.censored) {
        return Err(Error::AllCensored(samples.len()));
    }
    let mut sorted: Vec<Sample> = samples.to_vec();
    sorted.sort_by(|a, b| a.value.total_cmp(&b.value));
    let mut groups: Vec<Group> = Vec::new();
    for s in sorted {
        match groups.last_mut() {
            Some(g) if g.value == s.value => {
                if s.censored {
                    g.censored += 1;
                } else {
                    g.events += 1;
                }
            }
            _ => groups.push(Group {
                value: s.value,
                events: u64::from(!s.censored),
                censored: u64::from(s.censored),
            }),
        }
    }
    let max = groups.last().map(|g| g.value).unwrap_or(1.0);
    let thresholds = geometric_grid(grid_base, max);
    let groups = compress(groups, &thresholds);
    Ok(SurvivalTable::from_groups(groups, thresholds, grid_base))
}

/// Merges the events of every grid cell `(t_{j-1}, t_j]` that holds no
/// censored sample into one group at `t_j`. The product-limit factors of
/// such a cell telescope, so the table is unchanged while resampling gets
/// cheap.
fn compress(groups: Vec<Group>, thresholds: &[f64]) -> Vec<Group> {
    let mut out = Vec::with_capacity(thresholds.len());
    let mut i = 0;
    for (j, &t) in thresholds.iter().enumerate() {
        let start = i;
        while i < groups.len() && groups[i].value <= t {
            i += 1;
        }
        let cell = &groups[start..i];
        if cell.iter().all(|g| g.censored == 0) {
            let events: u64 = cell.iter().map(|g| g.events).sum();
            if events > 0 {
                out.push(Group {
                    value: if j == 0 { cell[0].value.min(t) } else { t },
                    events,
                    censored: 0,
                });
            }
        } else {
            out.extend_from_slice(cell);
        }
    }
    out.extend_from_slice(&groups[i..]);
    out
}

impl SurvivalTable {
    fn from_groups(groups: Vec<Group>, thresholds: Vec<f64>, grid_base: f64) -> Self {
        let total: u64 = groups.iter().map(|g| g.events + g.censored).sum();
        let k = thresholds.len();
        let mut at_risk = Vec::with_capacity(k);
        let mut exceed = Vec::with_capacity(k);
        let mut censored_below = Vec::with_capacity(k);
        let mut survival = Vec::with_capacity(k);
        let mut log_variance = Vec::with_capacity(k);

        // Sweep groups in value order. `risk` counts samples with value at
        // or above the current group; `cens_seen` counts censored samples
        // already passed.
        let mut gi = 0;
        let mut risk = total;
        let mut cens_seen = 0u64;
        let mut s = 1.0f64;
        let mut greenwood = 0.0f64;
        for &n in &thresholds {
            while gi < groups.len() && groups[gi].value <= n {
                let g = groups[gi];
                if g.events > 0 {
                    let y = risk as f64;
                    let d = g.events as f64;
                    s *= 1.0 - d / y;
                    if risk > g.events {
                        greenwood += d / (y * (y - d));
                    }
                }
                risk -= g.events + g.censored;
                cens_seen += g.censored;
                gi += 1;
            }
            // Censored exactly at n are known to exceed n.
            let cens_at_n = if gi > 0 && groups[gi - 1].value == n {
                groups[gi - 1].censored
            } else {
                0
            };
            let below = cens_seen - cens_at_n;
            censored_below.push(below);
            exceed.push(risk + cens_at_n);
            at_risk.push(total - below);
            survival.push(s);
            log_variance.push(greenwood);
        }
        Self {
            thresholds,
            at_risk,
            exceed,
            censored_below,
            survival,
            log_variance,
            total,
            grid_base,
            groups,
        }
    }

    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    /// Number of censored samples.
    pub fn censored_total(&self) -> u64 {
        self.groups.iter().map(|g| g.censored).sum()
    }

    /// Nonparametric bootstrap replicate on the same thresholds.
    pub fn resample<R: Rng + ?Sized>(&self, rng: &mut R) -> Self {
        // Multinomial over the (group, status) cells by sequential binomials.
        let mut remaining = self.total;
        let mut mass_left = self.total;
        let mut groups = Vec::with_capacity(self.groups.len());
        for g in &self.groups {
            let mut draw = |count: u64, remaining: &mut u64, mass_left: &mut u64| -> u64 {
                if count == 0 || *remaining == 0 {
                    return 0;
                }
                let k = if count >= *mass_left {
                    *remaining
                } else {
                    let p = count as f64 / *mass_left as f64;
                    Binomial::new(*remaining, p).expect("valid p").sample(rng)
                };
                *remaining -= k;
                *mass_left -= count;
                k
            };
            let events = draw(g.events, &mut remaining, &mut mass_left);
            let censored = draw(g.censored, &mut remaining, &mut mass_left);
            if events + censored > 0 {
                groups.push(Group {
                    value: g.value,
                    events,
                    censored,
                });
            }
        }
        Self::from_groups(groups, self.thresholds.clone(), self.grid_base)
    }

    /// CSV rows `n, survivors, censored, survival`.
    pub fn write_csv<W: std::io::Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        self.write_rows(&mut out)?;
        out.flush()?;
        Ok(())
    }

    /// Same rows into an existing CSV writer.
    pub fn write_rows<W: std::io::Write>(&self, out: &mut csv::Writer<W>) -> Result<()> {
        out.write_record(["n", "survivors", "censored", "survival"])?;
        for j in 0..self.len() {
            out.write_record([
                self.thresholds[j].to_string(),
                self.exceed[j].to_string(),
                self.censored_below[j].to_string(),
                self.survival[j].to_string(),
            ])?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn exact(values: &[f64]) -> Vec<Sample> {
        values.iter().map(|&v| Sample::exact(v)).collect()
    }

    #[test]
    fn counts_small_example() {
        let t = build_survival(&exact(&[1.0, 2.0, 4.0, 8.0]), 2.0).unwrap();
        assert_eq!(t.thresholds, vec![1.0, 2.0, 4.0, 8.0]);
        assert_eq!(t.exceed, vec![3, 2, 1, 0]);
        assert_eq!(t.survival, vec![0.75, 0.5, 0.25, 0.0]);
    }

    #[test]
    fn sqrt2_grid_has_no_rounding_artifacts() {
        let g = geometric_grid(DEFAULT_GRID_BASE, 100.0);
        assert_eq!(
            g,
            vec![1.0, 2.0, 3.0, 4.0, 6.0, 8.0, 12.0, 16.0, 23.0, 32.0, 46.0, 64.0, 91.0, 128.0]
        );
    }

    #[test]
    fn censoring_above_window_is_inert() {
        let values: Vec<f64> = (1..=200).map(|i| (i % 23) as f64 + 0.5).collect();
        let plain = build_survival(&exact(&values), 2.0).unwrap();
        let capped: Vec<Sample> = values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                if i % 2 == 0 && v > 10.0 {
                    Sample::censored(10.0)
                } else {
                    Sample::exact(v)
                }
            })
            .collect();
        let capped = build_survival(&capped, 2.0).unwrap();
        for j in 0..4 {
            assert_eq!(plain.thresholds[j], capped.thresholds[j]);
            assert_eq!(plain.exceed[j], capped.exceed[j]);
            assert_eq!(plain.at_risk[j], capped.at_risk[j]);
            assert!((plain.survival[j] - capped.survival[j]).abs() < 1e-15);
        }
    }

    #[test]
    fn km_matches_quantile_sample() {
        // Deterministic quantiles of P[X > n] = 1/n on [1, inf).
        let n = 10_000;
        let samples: Vec<Sample> = (0..n)
            .map(|i| Sample::exact(1.0 / ((i as f64 + 0.5) / n as f64)))
            .collect();
        let t = build_survival(&samples, DEFAULT_GRID_BASE).unwrap();
        for (x, s) in t.thresholds.iter().zip(&t.survival) {
            if (10.0..=100.0).contains(x) {
                assert!((s - 1.0 / x).abs() < 0.01, "{x} {s}");
            }
        }
    }

    #[test]
    fn km_handles_censoring() {
        // Classic textbook set: 3, 5+, 6, 8+, 10.
        let s = vec![
            Sample::exact(3.0),
            Sample::censored(5.0),
            Sample::exact(6.0),
            Sample::censored(8.0),
            Sample::exact(10.0),
        ];
        let t = build_survival(&s, 2.0).unwrap();
        // Thresholds 1, 2, 4, 8, 16.
        let expect = [1.0, 1.0, 0.8, 0.8 * (1.0 - 1.0 / 3.0), 0.0];
        for (a, b) in t.survival.iter().zip(expect) {
            assert!((a - b).abs() < 1e-12);
        }
        assert_eq!(t.exceed, vec![5, 5, 4, 2, 0]);
        assert_eq!(t.censored_below, vec![0, 0, 0, 1, 2]);
    }

    #[test]
    fn rejects_degenerate_input() {
        assert!(matches!(
            build_survival(&[Sample::censored(3.0)], 2.0),
            Err(Error::AllCensored(1))
        ));
        assert!(build_survival(&[], 2.0).is_err());
        assert!(build_survival(&exact(&[1.0]), 1.0).is_err());
    }

    #[test]
    fn resample_conserves_total() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let s: Vec<Sample> = (0..500)
            .map(|i| {
                if i % 7 == 0 {
                    Sample::censored(i as f64)
                } else {
                    Sample::exact((i % 50) as f64)
                }
            })
            .collect();
        let t = build_survival(&s, 2.0).unwrap();
        for _ in 0..20 {
            let r = t.resample(&mut rng);
            assert_eq!(r.total, 500);
            assert_eq!(r.thresholds, t.thresholds);
        }
    }

    proptest! {
        #[test]
        fn accounting_is_conserved(
            raw in prop::collection::vec((0.0f64..500.0, any::<bool>()), 1..300),
            base in 1.1f64..3.0,
        ) {
            prop_assume!(raw.iter().any(|(_, c)| !c));
            let samples: Vec<Sample> =
                raw.iter().map(|&(v, c)| Sample { value: v.floor(), censored: c }).collect();
            let t = build_survival(&samples, base).unwrap();
            for j in 0..t.len() {
                let n = t.thresholds[j];
                let known_below = samples.iter().filter(|s| !s.censored && s.value <= n).count() as u64;
                prop_assert_eq!(t.exceed[j] + known_below + t.censored_below[j], t.total);
                prop_assert_eq!(t.at_risk[j], t.total - t.censored_below[j]);
                if j > 0 {
                    prop_assert!(t.exceed[j] <= t.exceed[j - 1]);
                    prop_assert!(t.survival[j] <= t.survival[j - 1]);
                }
            }
            prop_assert!(*t.thresholds.last().unwrap()
                >= samples.iter().map(|s| s.value).fold(0.0, f64::max));
        }
    }
}
