//! Exact check of the two-sided concentration bound for sums of geometric
//! variables: with `S` the number of successes before the `x`-th failure of
//! fair trials, `P[|S - x| >= y] <= 2 exp(-y^2 / (6 max(x, y)))`.

use serde::Serialize;

use crate::error::{Error, Result};

/// Largest `x` or `y` the exhaustive check accepts.
pub const MAX_ARG: u32 = 2000;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConcentrationReport {
    pub x_max: u32,
    pub y_max: u32,
    pub checked: u64,
    /// Minimum of `bound - probability` over the range.
    pub min_slack: f64,
    pub min_slack_at: (u32, u32),
    /// Minimum of `ln(bound / probability)` over the range.
    pub min_log_ratio: f64,
    pub min_log_ratio_at: (u32, u32),
}

fn log_add(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

/// Log tail sums of NB(x, 1/2): `upper[j] = ln P[S >= j]` and
/// `lower[j] = ln P[S <= j]` for `j` in `0..=x + y_max`.
fn log_tails(x: u32, y_max: u32) -> (Vec<f64>, Vec<f64>) {
    let xf = x as f64;
    let need = (x + y_max) as usize;
    let len = need + 1 + (x as usize) + (20.0 * (2.0 * xf).sqrt()) as usize + 100;
    let ln2 = std::f64::consts::LN_2;
    let mut lp = Vec::with_capacity(len);
    lp.push(-xf * ln2);
    for j in 1..len {
        let prev = lp[j - 1];
        lp.push(prev + ((j as f64 - 1.0 + xf) / j as f64).ln() - ln2);
    }
    let mut upper = vec![f64::NEG_INFINITY; len + 1];
    for j in (0..len).rev() {
        upper[j] = log_add(lp[j], upper[j + 1]);
    }
    let mut lower = vec![f64::NEG_INFINITY; len];
    let mut acc = f64::NEG_INFINITY;
    for j in 0..len {
        acc = log_add(acc, lp[j]);
        lower[j] = acc;
    }
    upper.truncate(need + 1);
    lower.truncate(need + 1);
    (upper, lower)
}

/// `ln P[|S - x| >= y]` for S ~ NB(x, 1/2).
pub fn log_deviation_probability(x: u32, y: u32) -> f64 {
    let (upper, lower) = log_tails(x, y);
    deviation_from_tails(x, y, &upper, &lower)
}

fn deviation_from_tails(x: u32, y: u32, upper: &[f64], lower: &[f64]) -> f64 {
    let hi = upper[(x + y) as usize];
    let lo = if y <= x {
        lower[(x - y) as usize]
    } else {
        f64::NEG_INFINITY
    };
    log_add(hi, lo)
}

pub fn log_bound(x: u32, y: u32) -> f64 {
    let (x, y) = (x as f64, y as f64);
    std::f64::consts::LN_2 - y * y / (6.0 * x.max(y))
}

/// Exhaustive check over `1 <= x <= x_max`, `1 <= y <= y_max`.
pub fn concentration_bound_check(x_max: u32, y_max: u32) -> Result<ConcentrationReport> {
    if x_max == 0 || y_max == 0 || x_max > MAX_ARG || y_max > MAX_ARG {
        return Err(Error::InvalidInput(format!(
            "ranges must lie in 1..={MAX_ARG}, got x_max={x_max}, y_max={y_max}"
        )));
    }
    let mut report = ConcentrationReport {
        x_max,
        y_max,
        checked: 0,
        min_slack: f64::INFINITY,
        min_slack_at: (0, 0),
        min_log_ratio: f64::INFINITY,
        min_log_ratio_at: (0, 0),
    };
    for x in 1..=x_max {
        let (upper, lower) = log_tails(x, y_max);
        for y in 1..=y_max {
            let lhs = deviation_from_tails(x, y, &upper, &lower);
            let bound = log_bound(x, y);
            if lhs > bound {
                return Err(Error::BoundViolation {
                    x,
                    y,
                    lhs: lhs.exp(),
                    bound: bound.exp(),
                });
            }
            let slack = bound.exp() - lhs.exp();
            if slack < report.min_slack {
                report.min_slack = slack;
                report.min_slack_at = (x, y);
            }
            if bound - lhs < report.min_log_ratio {
                report.min_log_ratio = bound - lhs;
                report.min_log_ratio_at = (x, y);
            }
            report.checked += 1;
        }
    }
    Ok(report)
}

#[cfg(test)]
mod tests {
    use super::*;
    use statrs::distribution::{Binomial, DiscreteCDF};

    /// `P[S >= x + y]` and `P[S <= x - y]` through the binomial reading of
    /// the trial sequence: at least `k` successes before the `x`-th failure
    /// iff the first `k + x - 1` trials contain at most `x - 1` failures.
    fn via_binomial(x: u64, y: u64) -> f64 {
        let k = x + y;
        let upper = Binomial::new(0.5, k + x - 1).unwrap().cdf(x - 1);
        let lower = if y <= x {
            // S <= x - y iff the first 2x - y trials hold at least x failures.
            let n = 2 * x - y;
            1.0 - Binomial::new(0.5, n).unwrap().cdf(x - 1)
        } else {
            0.0
        };
        upper + lower
    }

    #[test]
    fn x1_y1_is_three_quarters() {
        assert!((log_deviation_probability(1, 1).exp() - 0.75).abs() < 1e-14);
        assert!(0.75 <= log_bound(1, 1).exp());
        assert!((log_bound(1, 1).exp() - 2.0 * (-1.0f64 / 6.0).exp()).abs() < 1e-14);
    }

    #[test]
    fn x1_geometric_tail() {
        for y in 2..60 {
            // Only the upper side contributes: P[S >= 1 + y] = 2^-(y+1).
            let p = log_deviation_probability(1, y).exp();
            assert!((p / 0.5f64.powi(y as i32 + 1) - 1.0).abs() < 1e-12, "{y}");
            assert!(p <= log_bound(1, y).exp());
        }
    }

    #[test]
    fn matches_binomial_identities() {
        for x in [1u32, 2, 5, 17, 100, 300] {
            for y in [1u32, 2, 3, 10, 40, 150, 300] {
                let exact = via_binomial(x as u64, y as u64);
                let ours = log_deviation_probability(x, y).exp();
                if exact > 1e-250 {
                    assert!((ours / exact - 1.0).abs() < 1e-7, "x={x} y={y} {ours} {exact}");
                }
            }
        }
    }

    #[test]
    fn high_precision_reference() {
        // 40-digit evaluation of the same sums.
        let p = log_deviation_probability(300, 150).exp();
        assert!((p / 1.911_435_685_185_000_5e-8 - 1.0).abs() < 1e-12, "{p}");
    }

    #[test]
    fn holds_up_to_300() {
        let r = concentration_bound_check(300, 300).unwrap();
        assert_eq!(r.checked, 90_000);
        assert!(r.min_slack > 0.0);
    }

    #[test]
    fn rejects_out_of_range() {
        assert!(concentration_bound_check(0, 5).is_err());
        assert!(concentration_bound_check(5, 2001).is_err());
    }
}
