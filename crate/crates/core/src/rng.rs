//! Counter-addressable random streams.
//!
//! Every path draws from its own ChaCha8 stream, addressed by
//! `(seed, path index)`, so results do not depend on how paths are
//! scheduled across workers.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma, Poisson};

/// Below this many failures the fair run is drawn bit by bit.
const BIT_RUN_MAX: u64 = 32;

/// Mixes a tag into a seed (splitmix64 finalizer).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream `stream` of the generator keyed by `seed`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// Number of successes before the `r`-th failure in fair Bernoulli trials,
/// i.e. a negative binomial NB(r, 1/2) draw.
///
/// Uses the gamma-Poisson mixture: NB(r, 1/2) = Poisson(Gamma(r, 1)).
pub fn negative_binomial_half<R: Rng + ?Sized>(rng: &mut R, r: u64) -> u64 {
    if r == 0 {
        return 0;
    }
    let lambda: f64 = Gamma::new(r as f64, 1.0)
        .expect("positive shape")
        .sample(rng);
    if lambda <= 0.0 {
        return 0;
    }
    let lambda = lambda.min(Poisson::<f64>::MAX_LAMBDA);
    Poisson::new(lambda).expect("finite rate").sample(rng) as u64
}

/// Source of the Bernoulli trials read by walks and branching processes.
///
/// `site` is the distance from the excursion's base point. Implementations
/// may ignore it (one stream per path) or use it to give every site its own
/// stream, which is what lets a walk and a branching process read the same
/// coins.
pub trait Coins {
    /// Uniform draw used to pick the site's cookie stack. Called once per
    /// site, before any trial at that site.
    fn stack_uniform(&mut self, site: usize) -> f64;
    /// One trial with success probability `p`.
    fn trial(&mut self, site: usize, p: f64) -> bool;
    /// One fair trial.
    fn fair(&mut self, site: usize) -> bool;
    /// Successes before `r` failures of fair trials at `site`.
    fn fair_run(&mut self, site: usize, r: u64) -> u64 {
        let mut successes = 0;
        let mut failures = 0;
        while failures < r {
            if self.fair(site) {
                successes += 1;
            } else {
                failures += 1;
            }
        }
        successes
    }
}

/// One stream per path; fair trials come from a bit buffer and long fair
/// runs from the negative-binomial sampler.
#[derive(Debug, Clone)]
pub struct PathCoins {
    rng: ChaCha8Rng,
    bits: u64,
    nbits: u32,
}

impl PathCoins {
    pub fn new(seed: u64, path: u64) -> Self {
        Self::from_rng(stream_rng(seed, path))
    }

    pub fn from_rng(rng: ChaCha8Rng) -> Self {
        Self {
            rng,
            bits: 0,
            nbits: 0,
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    #[inline]
    fn bit(&mut self) -> bool {
        if self.nbits == 0 {
            self.bits = self.rng.next_u64();
            self.nbits = 64;
        }
        let b = self.bits & 1 == 1;
        self.bits >>= 1;
        self.nbits -= 1;
        b
    }
}

impl Coins for PathCoins {
    #[inline]
    fn stack_uniform(&mut self, _site: usize) -> f64 {
        self.rng.random()
    }

    #[inline]
    fn trial(&mut self, _site: usize, p: f64) -> bool {
        self.rng.random::<f64>() < p
    }

    #[inline]
    fn fair(&mut self, _site: usize) -> bool {
        self.bit()
    }

    fn fair_run(&mut self, _site: usize, r: u64) -> u64 {
        if r <= BIT_RUN_MAX {
            let mut successes = 0;
            let mut failures = 0;
            while failures < r {
                if self.bit() {
                    successes += 1;
                } else {
                    failures += 1;
                }
            }
            successes
        } else {
            negative_binomial_half(&mut self.rng, r)
        }
    }
}

/// One stream per site, so that every reader of site `k` sees the same
/// trial sequence regardless of what it did at other sites.
#[derive(Debug, Clone)]
pub struct SiteCoins {
    seed: u64,
    sites: Vec<Option<ChaCha8Rng>>,
}

impl SiteCoins {
    pub fn new(seed: u64) -> Self {
        Self {
            seed,
            sites: Vec::new(),
        }
    }

    fn site(&mut self, site: usize) -> &mut ChaCha8Rng {
        if site >= self.sites.len() {
            self.sites.resize(site + 1, None);
        }
        let seed = self.seed;
        self.sites[site].get_or_insert_with(|| stream_rng(seed, site as u64))
    }
}

impl Coins for SiteCoins {
    fn stack_uniform(&mut self, site: usize) -> f64 {
        self.site(site).random()
    }

    fn trial(&mut self, site: usize, p: f64) -> bool {
        self.site(site).random::<f64>() < p
    }

    fn fair(&mut self, site: usize) -> bool {
        self.site(site).random::<f64>() < 0.5
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn streams_are_reproducible_and_distinct() {
        let draw = |seed, stream| {
            let mut r = stream_rng(seed, stream);
            (0..4).map(|_| r.next_u64()).collect::<Vec<_>>()
        };
        let (a, b, c) = (draw(9, 3), draw(9, 3), draw(9, 4));
        assert_eq!(a, b);
        assert_ne!(a, c);
        assert_ne!(derive_seed(1, 2), derive_seed(2, 1));
    }

    #[test]
    fn site_coins_independent_of_visit_order() {
        let mut x = SiteCoins::new(5);
        let mut y = SiteCoins::new(5);
        let xs: Vec<bool> = (0..10).map(|_| x.trial(3, 0.3)).collect();
        for _ in 0..50 {
            y.fair(1);
            y.fair(7);
        }
        let ys: Vec<bool> = (0..10).map(|_| y.trial(3, 0.3)).collect();
        assert_eq!(xs, ys);
    }

    #[test]
    fn negative_binomial_moments() {
        // NB(r, 1/2) has mean r and variance 2r.
        let mut rng = stream_rng(11, 0);
        let r = 200;
        let n = 100_000;
        let draws: Vec<f64> = (0..n)
            .map(|_| negative_binomial_half(&mut rng, r) as f64)
            .collect();
        let mean = draws.iter().sum::<f64>() / n as f64;
        let var = draws.iter().map(|d| (d - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (2.0 * r as f64 / n as f64).sqrt();
        assert!((mean - r as f64).abs() < 4.0 * se, "{mean}");
        assert!((var / (2.0 * r as f64) - 1.0).abs() < 0.03, "{var}");
        assert_eq!(negative_binomial_half(&mut rng, 0), 0);
    }

    #[test]
    fn bit_buffer_is_fair() {
        let mut c = PathCoins::new(1, 0);
        let n = 200_000;
        let ones = (0..n).filter(|_| c.fair(0)).count() as f64;
        assert!((ones / n as f64 - 0.5).abs() < 4.0 * (0.25 / n as f64).sqrt());
    }
}
