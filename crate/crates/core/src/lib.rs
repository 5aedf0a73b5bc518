//! Large-deviation rates and Monte Carlo estimates for level sets of
//! supercritical branching random walks.
//!
//! A particle at the origin produces offspring according to an offspring law;
//! each child moves from its parent by an independent step. The quantities of
//! interest are the level-set counts `Z_n[xn, ∞)` and the probabilities
//! `P(Z_n[xn, ∞) >= e^{an})`.
//!
//! * [`model`] validates offspring and step laws.
//! * [`cgf`] and [`rate`] give `Λ`, `I`, the speed `x*` and the growth exponent.
//! * [`deviation`] solves the upper-deviation problems.
//! * [`sim`] simulates the process and the lower-bound strategies.
//! * [`oracle`] holds exact and brute-force references at small scale.

pub mod cgf;
pub mod deviation;
pub mod ext;
pub mod model;
pub mod oracle;
pub mod quad;
pub mod rate;
pub mod sim;
pub mod solve;

pub use ext::ExtReal;

/// `⌈e^{an}⌉`, saturating at `u64::MAX`. The event `{Z >= e^{an}}` equals
/// `{Z >= ⌈e^{an}⌉}` for an integer count `Z`.
pub fn count_threshold(a: f64, n: u32) -> u64 {
    model::smallest_int_at_least((a * n as f64).exp())
}

/// Whether `pos` lies in `[level, ∞)`, with a relative slack of `1e-12` so
/// that lattice positions built by repeated addition hit exact levels.
pub fn at_or_above(pos: f64, level: f64) -> bool {
    pos >= level - 1e-12 * (1.0 + level.abs())
}
