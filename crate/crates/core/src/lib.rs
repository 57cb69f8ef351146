//! Excited random walks on the integers, their forward branching processes
//! and the squared-Bessel diffusion limit, with the statistics needed to
//! check tail exponents against Monte Carlo.

pub mod accept;
pub mod branching;
pub mod cli;
pub mod cookie;
pub mod diffusion;
pub mod error;
pub mod experiment;
pub mod par;
pub mod rng;
pub mod stats;
pub mod walk;

pub use cookie::{CookieLaw, SiteStack, WeightedStack};
pub use error::{Error, Result};
