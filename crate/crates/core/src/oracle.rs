//! Exact and brute-force reference computations at small scale.
//!
//! These are deliberately simple, slow and independent of the optimised code
//! paths they check: exact count laws for lattice models by dynamic
//! programming (with double-double accumulation), the Galton–Watson
//! population law, exhaustive tree enumeration, dense-grid Legendre
//! transforms, and a brute-force grid infimum for `I(a,x)`.

use std::collections::HashMap;
use std::ops::{Add, Mul};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::cgf::{cgf, lambda_star};
use crate::ext::ExtReal;
use crate::model::{Atom, CheckedModel, Offspring, StepLaw};
use crate::rate::{rate_profile_with, RateFunction};
use crate::{at_or_above, count_threshold};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("exact computation needs {0}")]
    Unsupported(String),
    #[error("state space of {entries} entries exceeds the limit {limit}")]
    TooLarge { entries: u64, limit: u64 },
    #[error("probability mass drifted by {drift:e} from 1")]
    MassDrift { drift: f64 },
}

/// Size limits for the exact computations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OracleLimits {
    pub n_max: u32,
    pub max_atoms: usize,
    pub max_offspring: u64,
    pub max_entries: u64,
}

impl Default for OracleLimits {
    fn default() -> Self {
        OracleLimits { n_max: 5, max_atoms: 8, max_offspring: 4, max_entries: 100_000_000 }
    }
}

// ---------------------------------------------------------------------------
// Double-double arithmetic (about 106 bits of mantissa)

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct DoubleDouble {
    hi: f64,
    lo: f64,
}

impl DoubleDouble {
    pub const ZERO: DoubleDouble = DoubleDouble { hi: 0.0, lo: 0.0 };
    pub const ONE: DoubleDouble = DoubleDouble { hi: 1.0, lo: 0.0 };

    pub fn from_f64(v: f64) -> Self {
        DoubleDouble { hi: v, lo: 0.0 }
    }

    pub fn to_f64(self) -> f64 {
        self.hi + self.lo
    }

    fn two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        let bb = s - a;
        (s, (a - (s - bb)) + (b - bb))
    }

    fn quick_two_sum(a: f64, b: f64) -> (f64, f64) {
        let s = a + b;
        (s, b - (s - a))
    }
}

impl Add for DoubleDouble {
    type Output = DoubleDouble;
    fn add(self, o: DoubleDouble) -> DoubleDouble {
        let (s, e) = Self::two_sum(self.hi, o.hi);
        let (t, f) = Self::two_sum(self.lo, o.lo);
        let (s, e) = Self::quick_two_sum(s, e + t);
        let (hi, lo) = Self::quick_two_sum(s, e + f);
        DoubleDouble { hi, lo }
    }
}

impl Mul for DoubleDouble {
    type Output = DoubleDouble;
    fn mul(self, o: DoubleDouble) -> DoubleDouble {
        let p = self.hi * o.hi;
        let e = self.hi.mul_add(o.hi, -p);
        let e = e + (self.hi * o.lo + self.lo * o.hi);
        let (hi, lo) = Self::quick_two_sum(p, e);
        DoubleDouble { hi, lo }
    }
}

impl std::iter::Sum for DoubleDouble {
    fn sum<I: Iterator<Item = DoubleDouble>>(iter: I) -> Self {
        iter.fold(DoubleDouble::ZERO, |a, b| a + b)
    }
}

type Pmf = Vec<DoubleDouble>;

fn convolve(a: &[DoubleDouble], b: &[DoubleDouble]) -> Pmf {
    let mut out = vec![DoubleDouble::ZERO; a.len() + b.len() - 1];
    for (i, &x) in a.iter().enumerate() {
        if x.hi == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            out[i + j] = out[i + j] + x * y;
        }
    }
    out
}

fn mix_into(acc: &mut Pmf, w: DoubleDouble, p: &[DoubleDouble]) {
    if acc.len() < p.len() {
        acc.resize(p.len(), DoubleDouble::ZERO);
    }
    for (a, &v) in acc.iter_mut().zip(p) {
        *a = *a + w * v;
    }
}

/// Exact law of a level-set count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CountDistribution {
    pub level: f64,
    pub n: u32,
    /// `pmf[k] = P(Z_n[level, ∞) = k)`.
    pub pmf: Vec<f64>,
}

impl CountDistribution {
    /// `P(count >= k)`.
    pub fn tail(&self, k: u64) -> f64 {
        if k as usize >= self.pmf.len() {
            return 0.0;
        }
        self.pmf[k as usize..].iter().rev().sum()
    }

    pub fn mean(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum()
    }
}

fn finish(pmf: Pmf, level: f64, n: u32) -> Result<CountDistribution, OracleError> {
    let total: DoubleDouble = pmf.iter().copied().sum();
    let drift = (total.to_f64() - 1.0).abs();
    if drift > 1e-12 {
        return Err(OracleError::MassDrift { drift });
    }
    let t = total.to_f64();
    let mut pmf: Vec<f64> = pmf.into_iter().map(|p| p.to_f64() / t).collect();
    while pmf.len() > 1 && *pmf.last().unwrap() == 0.0 {
        pmf.pop();
    }
    Ok(CountDistribution { level, n, pmf })
}

fn finite_support(model: &CheckedModel, limits: &OracleLimits) -> Result<Vec<(u64, f64)>, OracleError> {
    match &model.offspring {
        Offspring::Finite { support } => {
            let mu = support.iter().map(|s| s.0).max().unwrap_or(1);
            if mu > limits.max_offspring {
                return Err(OracleError::Unsupported(format!(
                    "offspring support at most {} (got {mu})",
                    limits.max_offspring
                )));
            }
            Ok(support.clone())
        }
        Offspring::Zeta(_) => Err(OracleError::Unsupported("a finite offspring support".into())),
    }
}

fn lattice_atoms(step: &StepLaw, limits: &OracleLimits) -> Result<Vec<Atom>, OracleError> {
    let atoms = step
        .atoms()
        .ok_or_else(|| OracleError::Unsupported("a discrete (lattice) step law".into()))?;
    if atoms.len() > limits.max_atoms {
        return Err(OracleError::Unsupported(format!("at most {} step atoms", limits.max_atoms)));
    }
    Ok(atoms)
}

/// `Σ_k p_k g^{*k}` for the law `g` of one child's contribution.
fn offspring_mixture(support: &[(u64, f64)], child: &[DoubleDouble]) -> Pmf {
    let max_k = support.iter().map(|s| s.0).max().unwrap_or(0);
    let mut acc: Pmf = Vec::new();
    let mut power: Pmf = vec![DoubleDouble::ONE];
    for k in 1..=max_k {
        power = convolve(&power, child);
        if let Some(&(_, p)) = support.iter().find(|s| s.0 == k) {
            mix_into(&mut acc, DoubleDouble::from_f64(p), &power);
        }
    }
    acc
}

/// Exact law of `Z_n[y, ∞)` for a lattice step law and a finite offspring
/// law. A particle is identified by how many of each atom its path used, so
/// equal positions are merged exactly.
pub fn exact_level_dist_with(
    model: &CheckedModel,
    n: u32,
    y: f64,
    limits: &OracleLimits,
) -> Result<CountDistribution, OracleError> {
    if n > limits.n_max {
        return Err(OracleError::Unsupported(format!("n <= {}", limits.n_max)));
    }
    let support = finite_support(model, limits)?;
    let atoms = lattice_atoms(&model.step, limits)?;
    let mu = support.iter().map(|s| s.0).max().unwrap_or(1);
    let states = binomial(n as u64 + atoms.len() as u64, atoms.len() as u64);
    let entries = states.saturating_mul(mu.saturating_pow(n) + 1);
    if entries > limits.max_entries {
        return Err(OracleError::TooLarge { entries, limit: limits.max_entries });
    }
    let mut memo: HashMap<Vec<u8>, Pmf> = HashMap::new();
    let root = vec![0u8; atoms.len()];
    let pmf = level_law(&root, n, y, &support, &atoms, &mut memo);
    finish(pmf, y, n)
}

pub fn exact_level_dist(model: &CheckedModel, n: u32, y: f64) -> Result<CountDistribution, OracleError> {
    exact_level_dist_with(model, n, y, &OracleLimits::default())
}

fn position(counts: &[u8], atoms: &[Atom]) -> f64 {
    counts.iter().zip(atoms).map(|(&c, a)| c as f64 * a.position).sum()
}

fn level_law(
    counts: &[u8],
    remaining: u32,
    y: f64,
    support: &[(u64, f64)],
    atoms: &[Atom],
    memo: &mut HashMap<Vec<u8>, Pmf>,
) -> Pmf {
    if remaining == 0 {
        return if at_or_above(position(counts, atoms), y) {
            vec![DoubleDouble::ZERO, DoubleDouble::ONE]
        } else {
            vec![DoubleDouble::ONE]
        };
    }
    if let Some(p) = memo.get(counts) {
        return p.clone();
    }
    let mut child: Pmf = Vec::new();
    let mut next = counts.to_vec();
    for (j, a) in atoms.iter().enumerate() {
        next[j] += 1;
        let sub = level_law(&next, remaining - 1, y, support, atoms, memo);
        mix_into(&mut child, DoubleDouble::from_f64(a.prob), &sub);
        next[j] -= 1;
    }
    let out = offspring_mixture(support, &child);
    memo.insert(counts.to_vec(), out.clone());
    out
}

fn binomial(n: u64, k: u64) -> u64 {
    (0..k).fold(1u64, |acc, i| acc.saturating_mul(n - i) / (i + 1))
}

/// Law of `|Z_n|` by the forward recursion on counts alone.
pub fn exact_population_dist(model: &CheckedModel, n: u32) -> Result<Vec<f64>, OracleError> {
    let limits = OracleLimits::default();
    let support = finite_support(model, &limits)?;
    let mut offspring: Pmf = Vec::new();
    for &(k, p) in &support {
        if offspring.len() <= k as usize {
            offspring.resize(k as usize + 1, DoubleDouble::ZERO);
        }
        offspring[k as usize] = DoubleDouble::from_f64(p);
    }
    let mut law: Pmf = vec![DoubleDouble::ZERO, DoubleDouble::ONE];
    for _ in 0..n {
        let mut next: Pmf = Vec::new();
        let mut power: Pmf = vec![DoubleDouble::ONE];
        for (j, &w) in law.iter().enumerate() {
            if j > 0 {
                power = convolve(&power, &offspring);
            }
            if w.hi != 0.0 {
                mix_into(&mut next, w, &power);
            }
        }
        law = next;
    }
    Ok(finish(law, f64::NEG_INFINITY, n)?.pmf)
}

/// `P(Z_n[xn, ∞) >= ⌈e^{an}⌉)` from the exact law.
pub fn exact_upper_dev(model: &CheckedModel, a: f64, x: f64, n: u32) -> Result<f64, OracleError> {
    let d = exact_level_dist(model, n, x * n as f64)?;
    Ok(d.tail(count_threshold(a, n)))
}

/// Law of `Z_n[y, ∞)` by listing every realisation of the tree: each
/// particle's offspring number and each child's step. Exponential cost; for
/// checking the dynamic programme on trees with a handful of leaves. Sums
/// and products use the same double-double arithmetic as the programme.
pub fn enumerate_level_dist(model: &CheckedModel, n: u32, y: f64) -> Result<Vec<f64>, OracleError> {
    let limits = OracleLimits { n_max: 4, ..OracleLimits::default() };
    if n > limits.n_max {
        return Err(OracleError::Unsupported("n <= 4 for enumeration".into()));
    }
    let support = finite_support(model, &limits)?;
    let atoms = lattice_atoms(&model.step, &limits)?;
    let mut pmf = vec![DoubleDouble::ZERO; 1];
    enumerate(vec![0.0], n, DoubleDouble::ONE, y, &support, &atoms, &mut pmf);
    Ok(pmf.into_iter().map(DoubleDouble::to_f64).collect())
}

fn enumerate(
    gen: Vec<f64>,
    remaining: u32,
    weight: DoubleDouble,
    y: f64,
    support: &[(u64, f64)],
    atoms: &[Atom],
    pmf: &mut Vec<DoubleDouble>,
) {
    if remaining == 0 {
        let c = gen.iter().filter(|&&p| at_or_above(p, y)).count();
        if pmf.len() <= c {
            pmf.resize(c + 1, DoubleDouble::ZERO);
        }
        pmf[c] = pmf[c] + weight;
        return;
    }
    // Choose the children of every particle of this generation, one particle
    // and one child at a time.
    fn expand(
        parents: &[f64],
        idx: usize,
        acc: &mut Vec<f64>,
        weight: DoubleDouble,
        k: &mut dyn FnMut(Vec<f64>, DoubleDouble),
        support: &[(u64, f64)],
        atoms: &[Atom],
    ) {
        if idx == parents.len() {
            k(acc.clone(), weight);
            return;
        }
        for &(kids, p) in support {
            place(parents, idx, kids, acc, weight * DoubleDouble::from_f64(p), k, support, atoms);
        }
    }
    #[allow(clippy::too_many_arguments)]
    fn place(
        parents: &[f64],
        idx: usize,
        left: u64,
        acc: &mut Vec<f64>,
        weight: DoubleDouble,
        k: &mut dyn FnMut(Vec<f64>, DoubleDouble),
        support: &[(u64, f64)],
        atoms: &[Atom],
    ) {
        if left == 0 {
            expand(parents, idx + 1, acc, weight, k, support, atoms);
            return;
        }
        for a in atoms {
            acc.push(parents[idx] + a.position);
            place(parents, idx, left - 1, acc, weight * DoubleDouble::from_f64(a.prob), k, support, atoms);
            acc.pop();
        }
    }
    let mut children = Vec::new();
    let mut sink = |next: Vec<f64>, w: DoubleDouble| children.push((next, w));
    expand(&gen, 0, &mut Vec::new(), weight, &mut sink, support, atoms);
    for (next, w) in children {
        enumerate(next, remaining - 1, w, y, support, atoms, pmf);
    }
}

// ---------------------------------------------------------------------------
// Brute-force rate computations

/// `max_{t ∈ grid} {tx - Λ(t)}` over `points` equally spaced tilts on
/// `[0, λ_hi]`, with `λ_hi` clipped to `λ*`.
pub fn grid_legendre(step: &StepLaw, x: f64, points: usize, lambda_hi: f64) -> f64 {
    assert!(points >= 2);
    let hi = match lambda_star(step) {
        ExtReal::Finite(l) => lambda_hi.min(l),
        ExtReal::PosInf => lambda_hi,
    };
    (0..points)
        .map(|i| {
            let t = hi * i as f64 / (points - 1) as f64;
            t * x - cgf(step, t).expect("grid inside the domain")
        })
        .fold(0.0, f64::max)
}

/// Brute-force minimum of `s I(y/s) - s log m` over the grid
/// `s = i/N_s (0 < i < N_s)`, `y = x j/N_y (0 < j <= N_y)` restricted to
/// `y/s > x*` and `log m - I((x-y)/(1-s)) >= a/(1-s)`. Returns `(value, s, y)`, or `None`
/// when no grid point is feasible.
pub fn grid_infimum_iax(
    model: &CheckedModel,
    a: f64,
    x: f64,
    s_points: usize,
    y_points: usize,
) -> Option<(f64, f64, f64)> {
    let rate = RateFunction::new(&model.step);
    let log_m = model.log_m();
    let x_star = rate_profile_with(&rate, log_m).x_star;
    (1..s_points)
        .into_par_iter()
        .filter_map(|i| {
            let s = i as f64 / s_points as f64;
            let mut best: Option<(f64, f64, f64)> = None;
            for j in 1..=y_points {
                let y = x * j as f64 / y_points as f64;
                if y / s <= x_star || log_m - rate.eval_f64((x - y) / (1.0 - s)) < a / (1.0 - s) {
                    continue;
                }
                let v = s * rate.eval_f64(y / s) - s * log_m;
                if best.is_none_or(|b| v < b.0) {
                    best = Some((v, s, y));
                }
            }
            best
        })
        .min_by(|p, q| p.0.total_cmp(&q.0).then(p.1.total_cmp(&q.1)))
}

/// Speed `x*` by a dense grid scan of `I` (independent of the bisection).
pub fn grid_speed(model: &CheckedModel, hi: f64, points: usize) -> f64 {
    let rate = RateFunction::new(&model.step);
    let lm = model.log_m();
    (0..=points)
        .map(|i| hi * i as f64 / points as f64)
        .filter(|&y| rate.eval_f64(y) <= lm)
        .fold(0.0, f64::max)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{validate_model, OffspringLaw};

    fn binary_rad() -> CheckedModel {
        validate_model(&OffspringLaw::finite(&[(2, 1.0)]), &StepLaw::rademacher()).unwrap()
    }

    fn half_rad() -> CheckedModel {
        validate_model(&OffspringLaw::finite(&[(1, 0.5), (2, 0.5)]), &StepLaw::rademacher()).unwrap()
    }

    #[test]
    fn double_double_keeps_small_terms() {
        let a = DoubleDouble::from_f64(1.0) + DoubleDouble::from_f64(1e-20);
        let b = a + DoubleDouble::from_f64(-1.0);
        assert_eq!(b.to_f64(), 1e-20);
        let c = DoubleDouble::from_f64(1.0 / 3.0) * DoubleDouble::from_f64(3.0);
        assert!((c.to_f64() - 1.0).abs() < 1e-16);
    }

    #[test]
    fn binomial_first_generation() {
        let d = exact_level_dist(&binary_rad(), 1, 1.0).unwrap();
        assert_eq!(d.pmf, vec![0.25, 0.5, 0.25]);
        assert_eq!(exact_upper_dev(&binary_rad(), 2f64.ln(), 1.0, 1).unwrap(), 0.25);
    }

    #[test]
    fn dp_matches_enumeration() {
        for (m, n, y) in [(binary_rad(), 2, 2.0), (binary_rad(), 2, 0.0), (half_rad(), 3, 1.0), (half_rad(), 2, 2.0)] {
            let dp = exact_level_dist(&m, n, y).unwrap().pmf;
            let mut en = enumerate_level_dist(&m, n, y).unwrap();
            while en.len() > 1 && *en.last().unwrap() == 0.0 {
                en.pop();
            }
            assert_eq!(dp.len(), en.len());
            for (p, q) in dp.iter().zip(&en) {
                assert!((p - q).abs() < 1e-15, "{dp:?} vs {en:?}");
            }
        }
        // All four grandchildren at +2: (1/2)^6.
        let d = exact_level_dist(&binary_rad(), 2, 2.0).unwrap();
        assert_eq!(d.pmf[4], 0.5f64.powi(6));
    }

    #[test]
    fn marginal_is_galton_watson() {
        let m = half_rad();
        for n in 0..=4 {
            let lvl = exact_level_dist(&m, n, f64::NEG_INFINITY).unwrap().pmf;
            let pop = exact_population_dist(&m, n).unwrap();
            assert_eq!(lvl.len(), pop.len());
            for (p, q) in lvl.iter().zip(&pop) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn impossible_threshold_and_limits() {
        let m = half_rad();
        assert_eq!(exact_upper_dev(&m, 3f64.ln(), -1.0, 2).unwrap(), 0.0);
        assert!(matches!(exact_level_dist(&m, 6, 0.0), Err(OracleError::Unsupported(_))));
        let normal = validate_model(&OffspringLaw::finite(&[(2, 1.0)]), &StepLaw::normal(1.0).unwrap()).unwrap();
        assert!(exact_level_dist(&normal, 2, 0.0).is_err());
    }

    #[test]
    fn legendre_grid_values() {
        let n = StepLaw::normal(1.0).unwrap();
        assert!((grid_legendre(&n, 1.0, 100_001, 10.0) - 0.5).abs() < 1e-6);
        assert_eq!(grid_legendre(&n, 0.0, 1000, 10.0), 0.0);
    }

    #[test]
    fn grid_infimum_empty_when_a_too_large() {
        let m = validate_model(&OffspringLaw::finite(&[(1, 0.5), (2, 0.5)]), &StepLaw::normal(1.0).unwrap()).unwrap();
        assert!(grid_infimum_iax(&m, 0.5, 1.0, 50, 50).is_none());
        let (v, _, _) = grid_infimum_iax(&m, 0.2, 1.0, 200, 200).unwrap();
        assert!(v >= crate::deviation::gaussian_iax(1.5, 0.2, 1.0) - 1e-9);
    }
}
