//! Cookie environments: the law of one site's cookie stack and the drift
//! parameter it induces.
//!
//! A law is a finite mixture of deterministic stacks. Every stack holds `m`
//! cookies; a cookie is the probability of stepping right on the
//! corresponding visit to the site. Visits beyond `m` are fair.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const WEIGHT_TOL: f64 = 1e-12;

/// One atom of a cookie law: a deterministic stack and its mixture weight.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightedStack {
    pub probs: Vec<f64>,
    pub weight: f64,
}

/// Law of the cookie stack at a single site.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawLaw", into = "RawLaw")]
pub struct CookieLaw {
    m: usize,
    stacks: Vec<WeightedStack>,
    cumulative: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct RawLaw {
    m: usize,
    stacks: Vec<WeightedStack>,
}

impl TryFrom<RawLaw> for CookieLaw {
    type Error = Error;

    fn try_from(raw: RawLaw) -> Result<Self> {
        CookieLaw::new(raw.m, raw.stacks)
    }
}

impl From<CookieLaw> for RawLaw {
    fn from(law: CookieLaw) -> Self {
        RawLaw {
            m: law.m,
            stacks: law.stacks,
        }
    }
}

impl CookieLaw {
    /// Builds a law and checks weak ellipticity.
    pub fn new(m: usize, stacks: Vec<WeightedStack>) -> Result<Self> {
        let law = Self::without_ellipticity_check(m, stacks)?;
        let all_below_one = law
            .stacks
            .iter()
            .any(|s| s.weight > 0.0 && s.probs.iter().all(|&p| p < 1.0));
        let all_above_zero = law
            .stacks
            .iter()
            .any(|s| s.weight > 0.0 && s.probs.iter().all(|&p| p > 0.0));
        if !all_below_one {
            return Err(Error::InvalidLaw(
                "ellipticity: no stack of positive weight has all cookies below 1".into(),
            ));
        }
        if !all_above_zero {
            return Err(Error::InvalidLaw(
                "ellipticity: no stack of positive weight has all cookies above 0".into(),
            ));
        }
        Ok(law)
    }

    /// Builds a law that may put all its mass on cookies equal to 0 or 1.
    ///
    /// Only the shape, range and weight checks are applied. Useful for
    /// boundary experiments (forced first steps); the CLI never uses it.
    pub fn without_ellipticity_check(m: usize, stacks: Vec<WeightedStack>) -> Result<Self> {
        if m == 0 {
            return Err(Error::InvalidLaw("m must be at least 1".into()));
        }
        if stacks.is_empty() {
            return Err(Error::InvalidLaw("at least one stack is required".into()));
        }
        for (i, s) in stacks.iter().enumerate() {
            if s.probs.len() != m {
                return Err(Error::InvalidLaw(format!(
                    "stack {i} has {} cookies, expected {m}",
                    s.probs.len()
                )));
            }
            if let Some(p) = s.probs.iter().find(|p| !(0.0..=1.0).contains(*p)) {
                return Err(Error::InvalidLaw(format!(
                    "stack {i}: cookie {p} outside [0, 1]"
                )));
            }
            if !(s.weight >= 0.0 && s.weight.is_finite()) {
                return Err(Error::InvalidLaw(format!(
                    "stack {i}: weight {} is not a nonnegative number",
                    s.weight
                )));
            }
        }
        let total: f64 = stacks.iter().map(|s| s.weight).sum();
        if (total - 1.0).abs() > WEIGHT_TOL {
            return Err(Error::InvalidLaw(format!(
                "weights sum to {total}, expected 1"
            )));
        }
        let mut acc = 0.0;
        let cumulative = stacks
            .iter()
            .map(|s| {
                acc += s.weight;
                acc
            })
            .collect();
        Ok(Self {
            m,
            stacks,
            cumulative,
        })
    }

    /// A single deterministic stack.
    pub fn single(probs: Vec<f64>) -> Result<Self> {
        let m = probs.len();
        Self::new(m, vec![WeightedStack { probs, weight: 1.0 }])
    }

    /// The fair law: `m` cookies of strength 1/2.
    pub fn fair(m: usize) -> Self {
        Self::single(vec![0.5; m.max(1)]).expect("fair law is valid")
    }

    /// Equal-strength stack realizing a requested drift:
    /// `m = max(1, ceil(2|delta|))` cookies of strength `1/2 + delta / (2m)`.
    pub fn equal_strength(delta: f64) -> Result<Self> {
        if !delta.is_finite() {
            return Err(Error::InvalidLaw(format!("drift {delta} is not finite")));
        }
        let m = ((2.0 * delta.abs()).ceil() as usize).max(1);
        let p = 0.5 + delta / (2.0 * m as f64);
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::InvalidLaw(format!(
                "drift {delta} needs cookie strength {p} outside (0, 1)"
            )));
        }
        Self::single(vec![p; m])
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn stacks(&self) -> &[WeightedStack] {
        &self.stacks
    }

    /// Expected total drift contributed by one site's cookies.
    pub fn delta(&self) -> f64 {
        self.stacks
            .iter()
            .map(|s| s.weight * s.probs.iter().map(|p| 2.0 * p - 1.0).sum::<f64>())
            .sum()
    }

    /// Law of the reflected stack `1 - omega`.
    pub fn mirror(&self) -> Self {
        let stacks = self
            .stacks
            .iter()
            .map(|s| WeightedStack {
                probs: s.probs.iter().map(|p| 1.0 - p).collect(),
                weight: s.weight,
            })
            .collect();
        Self {
            m: self.m,
            stacks,
            cumulative: self.cumulative.clone(),
        }
    }

    /// Mean of the first cookie, i.e. the probability that a walk started at
    /// a fresh site steps right.
    pub fn first_cookie_mean(&self) -> f64 {
        self.stacks.iter().map(|s| s.weight * s.probs[0]).sum()
    }

    /// Picks a stack index from a uniform draw in `[0, 1)`.
    pub fn stack_index_from_uniform(&self, u: f64) -> usize {
        let last = self.stacks.len() - 1;
        // Zero-weight atoms are never selected.
        self.cumulative
            .iter()
            .zip(&self.stacks)
            .position(|(&c, s)| s.weight > 0.0 && u < c)
            .unwrap_or_else(|| {
                (0..=last)
                    .rev()
                    .find(|&i| self.stacks[i].weight > 0.0)
                    .unwrap_or(last)
            })
    }

    pub fn sample_stack<R: Rng + ?Sized>(&self, rng: &mut R) -> SiteStack {
        let idx = self.stack_index_from_uniform(rng.random::<f64>());
        SiteStack::new(self.stacks[idx].probs.clone())
    }

    /// Distribution of the number of successes among the `m` cookie trials,
    /// as a vector indexed by the count. Exact (Poisson-binomial per stack).
    pub fn cookie_success_distribution(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.m + 1];
        for s in &self.stacks {
            if s.weight == 0.0 {
                continue;
            }
            let mut dist = vec![0.0; self.m + 1];
            dist[0] = 1.0;
            for (i, &p) in s.probs.iter().enumerate() {
                for k in (0..=i + 1).rev() {
                    let stay = dist[k] * (1.0 - p);
                    let up = if k > 0 { dist[k - 1] * p } else { 0.0 };
                    dist[k] = stay + up;
                }
            }
            for (o, d) in out.iter_mut().zip(dist) {
                *o += s.weight * d;
            }
        }
        out
    }

    /// Variance of the number of offspring produced by the first `m`
    /// individuals of a generation.
    ///
    /// With `K` the cookie successes, that count is `K + NB(K, 1/2)`, so the
    /// variance is `2 E[K] + 4 Var[K]`.
    pub fn offspring_variance(&self) -> f64 {
        let dist = self.cookie_success_distribution();
        let mean: f64 = dist.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
        let second: f64 = dist
            .iter()
            .enumerate()
            .map(|(k, p)| (k * k) as f64 * p)
            .sum();
        2.0 * mean + 4.0 * (second - mean * mean)
    }
}

/// The realized cookie stack of one site and the number of visits consumed.
#[derive(Debug, Clone, PartialEq)]
pub struct SiteStack {
    probs: Vec<f64>,
    cursor: usize,
}

impl SiteStack {
    pub fn new(probs: Vec<f64>) -> Self {
        Self { probs, cursor: 0 }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn cursor(&self) -> usize {
        self.cursor
    }

    /// Number of cookies left before the stack turns fair.
    pub fn remaining_cookies(&self) -> usize {
        self.probs.len().saturating_sub(self.cursor)
    }

    /// Probability for the next visit; advances the cursor.
    pub fn next_probability(&mut self) -> f64 {
        let p = self.probs.get(self.cursor).copied().unwrap_or(0.5);
        self.cursor = self.cursor.saturating_add(1);
        p
    }

    /// Skips `n` visits that are known to be fair.
    pub fn advance(&mut self, n: usize) {
        self.cursor = self.cursor.saturating_add(n);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn mix(a: Vec<f64>, wa: f64, b: Vec<f64>, wb: f64) -> CookieLaw {
        CookieLaw::new(
            a.len(),
            vec![
                WeightedStack { probs: a, weight: wa },
                WeightedStack { probs: b, weight: wb },
            ],
        )
        .unwrap()
    }

    #[test]
    fn delta_examples() {
        assert_eq!(CookieLaw::fair(3).delta(), 0.0);
        assert!((CookieLaw::single(vec![0.75, 0.75]).unwrap().delta() - 1.0).abs() < 1e-15);
        assert!((CookieLaw::single(vec![0.75; 4]).unwrap().delta() - 2.0).abs() < 1e-15);
        let sym = mix(vec![0.9, 0.9], 0.5, vec![0.1, 0.1], 0.5);
        assert!(sym.delta().abs() < 1e-12);
    }

    #[test]
    fn mirror_examples() {
        let law = CookieLaw::single(vec![0.75, 0.75]).unwrap();
        assert_eq!(law.mirror().stacks()[0].probs, vec![0.25, 0.25]);
        let fair = CookieLaw::fair(2);
        assert_eq!(fair.mirror(), fair);
        let two = CookieLaw::equal_strength(2.0).unwrap();
        assert!((two.mirror().delta() + 2.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_laws() {
        assert!(CookieLaw::single(vec![1.0, 1.0]).is_err());
        assert!(CookieLaw::single(vec![0.0]).is_err());
        assert!(CookieLaw::single(vec![1.2]).is_err());
        assert!(CookieLaw::new(
            2,
            vec![WeightedStack {
                probs: vec![0.5, 0.5],
                weight: 0.9
            }]
        )
        .is_err());
        assert!(CookieLaw::new(
            2,
            vec![WeightedStack {
                probs: vec![0.5],
                weight: 1.0
            }]
        )
        .is_err());
        // Ellipticity may be met by two different atoms.
        assert!(CookieLaw::new(
            1,
            vec![
                WeightedStack { probs: vec![1.0], weight: 0.5 },
                WeightedStack { probs: vec![0.0], weight: 0.5 },
            ]
        )
        .is_ok());
        assert!(CookieLaw::without_ellipticity_check(2, vec![WeightedStack {
            probs: vec![1.0, 1.0],
            weight: 1.0
        }])
        .is_ok());
    }

    #[test]
    fn equal_strength_inverts_delta() {
        for d in [-3.7, -2.0, -0.3, 0.0, 0.5, 1.6, 2.0, 4.0, 7.25] {
            let law = CookieLaw::equal_strength(d).unwrap();
            assert!((law.delta() - d).abs() < 1e-12, "delta {d}");
            assert_eq!(law.m(), ((2.0 * f64::abs(d)).ceil() as usize).max(1));
        }
    }

    #[test]
    fn sample_stack_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let single = CookieLaw::single(vec![0.3, 0.8]).unwrap();
        let s = single.sample_stack(&mut rng);
        assert_eq!(s.probs(), &[0.3, 0.8]);
        assert_eq!(s.cursor(), 0);

        let degenerate = mix(vec![0.2, 0.9], 1.0, vec![0.6, 0.6], 0.0);
        for _ in 0..1000 {
            assert_eq!(degenerate.sample_stack(&mut rng).probs(), &[0.2, 0.9]);
        }

        // 10^5 draws, p = 1/2: the binomial standard error is 0.00158, so
        // +-0.01 is more than six of them.
        let half = mix(vec![0.2, 0.9], 0.5, vec![0.6, 0.6], 0.5);
        let n = 100_000;
        let hits = (0..n)
            .filter(|_| half.sample_stack(&mut rng).probs()[0] == 0.2)
            .count();
        let freq = hits as f64 / n as f64;
        assert!((freq - 0.5).abs() < 0.01, "{freq}");
    }

    #[test]
    fn fair_beyond_stack() {
        let mut s = SiteStack::new(vec![0.9, 0.1]);
        assert_eq!(s.next_probability(), 0.9);
        assert_eq!(s.next_probability(), 0.1);
        for _ in 0..100 {
            assert_eq!(s.next_probability(), 0.5);
        }
    }

    #[test]
    fn offspring_variance_matches_leaf_enumeration() {
        // Brute force over the 2^m outcomes of the cookie trials: with K
        // successes, the count is K + NB(K, 1/2) (mean 2K, variance 2K).
        let law = mix(vec![0.9, 0.3, 0.6], 0.25, vec![0.2, 0.5, 0.7], 0.75);
        let m = law.m();
        let (mut e1, mut e2) = (0.0, 0.0);
        for s in law.stacks() {
            for leaf in 0..(1u32 << m) {
                let mut p = s.weight;
                let mut k = 0.0;
                for (i, &q) in s.probs.iter().enumerate() {
                    if leaf >> i & 1 == 1 {
                        p *= q;
                        k += 1.0;
                    } else {
                        p *= 1.0 - q;
                    }
                }
                e1 += p * 2.0 * k;
                e2 += p * (2.0 * k + 4.0 * k * k);
            }
        }
        let v = e2 - e1 * e1;
        assert!((law.offspring_variance() - v).abs() < 1e-12);
        // Mean identity: E[K + NB(K)] - m = delta.
        assert!((e1 - m as f64 - law.delta()).abs() < 1e-12);
    }

    #[test]
    fn parses_toml_config() {
        let text = r#"
            m = 2
            [[stacks]]
            probs = [0.9, 0.9]
            weight = 0.5
            [[stacks]]
            probs = [0.1, 0.1]
            weight = 0.5
        "#;
        let law: CookieLaw = toml::from_str(text).unwrap();
        assert_eq!(law.m(), 2);
        assert!(law.delta().abs() < 1e-12);
        let bad = "m = 1\n[[stacks]]\nprobs = [1.0]\nweight = 1.0\n";
        assert!(toml::from_str::<CookieLaw>(bad).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        fn stack(m: usize) -> impl Strategy<Value = Vec<f64>> {
            prop::collection::vec(0.01f64..0.99, m)
        }

        proptest! {
            #[test]
            fn delta_is_linear_in_weights(a in stack(3), b in stack(3), w in 0.0f64..=1.0) {
                let law = CookieLaw::new(3, vec![
                    WeightedStack { probs: a.clone(), weight: w },
                    WeightedStack { probs: b.clone(), weight: 1.0 - w },
                ]).unwrap();
                let da = CookieLaw::single(a).unwrap().delta();
                let db = CookieLaw::single(b).unwrap().delta();
                prop_assert!((law.delta() - (w * da + (1.0 - w) * db)).abs() < 1e-12);
            }

            #[test]
            fn mirror_negates_delta(a in stack(4), b in stack(4), w in 0.0f64..=1.0) {
                let law = CookieLaw::new(4, vec![
                    WeightedStack { probs: a, weight: w },
                    WeightedStack { probs: b, weight: 1.0 - w },
                ]).unwrap();
                prop_assert!((law.mirror().delta() + law.delta()).abs() < 1e-12);
                let twice = law.mirror().mirror();
                for (x, y) in twice.stacks().iter().zip(law.stacks()) {
                    for (p, q) in x.probs.iter().zip(&y.probs) {
                        prop_assert!((p - q).abs() < 1e-15);
                    }
                }
            }

            #[test]
            fn fair_after_m_visits(a in stack(3), extra in 0usize..50, visits in 0usize..20) {
                let mut s = SiteStack::new(a);
                s.advance(visits);
                for _ in 0..3usize.saturating_sub(visits) { s.next_probability(); }
                for _ in 0..extra { prop_assert_eq!(s.next_probability(), 0.5); }
            }
        }
    }
}
