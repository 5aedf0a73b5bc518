//! The probability model behind every computation: an offspring law on the
//! positive integers and a centred step law.
//!
//! User-facing laws are built from [`OffspringLaw`] and [`StepLaw`]
//! constructors and then checked together by [`validate_model`], which
//! produces the immutable [`CheckedModel`] consumed by the other modules.

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal, Zeta};
use serde::{Deserialize, Serialize};
use statrs::function::erf::{erfc, erfc_inv};
use thiserror::Error;

use crate::ext::ExtReal;
use crate::quad;

/// Absolute tolerance for probabilities read from decimal input.
pub const PROB_TOL: f64 = 1e-12;
/// Mean-zero tolerance for centred step laws.
pub const MEAN_TOL: f64 = 1e-10;
/// Zeta-tail offspring counts above this are resampled.
pub const ZETA_SAMPLING_CAP: u64 = 1_000_000_000;
/// Below this acceptance, conditioned step sampling switches from rejection
/// to inverse transform.
pub const MIN_REJECTION_ACCEPTANCE: f64 = 1e-3;

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub enum Assumption {
    /// p_k outside [0, 1] or not summing to one.
    Probabilities(String),
    /// p_0 must vanish.
    NoExtinction,
    /// 1 < m < ∞.
    Supercritical,
    /// A zeta tail was declared but the listed probabilities contradict it.
    InconsistentTail,
    /// Step law parameters out of range.
    StepParameters(String),
    /// E[X] = 0.
    Centred,
    /// P(X = 0) < 1.
    NonDegenerateStep,
}

impl std::fmt::Display for Assumption {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Assumption::Probabilities(why) => write!(f, "offspring probabilities: {why}"),
            Assumption::NoExtinction => f.write_str("p_0 = 0"),
            Assumption::Supercritical => f.write_str("1 < m < inf"),
            Assumption::InconsistentTail => f.write_str("inconsistent tail declaration"),
            Assumption::StepParameters(why) => write!(f, "step law: {why}"),
            Assumption::Centred => f.write_str("E[X] = 0"),
            Assumption::NonDegenerateStep => f.write_str("P(X = 0) < 1"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("assumption violated: {0}")]
    AssumptionViolated(Assumption),
    #[error("conditioning event has zero probability (threshold {threshold})")]
    ZeroProbability { threshold: f64 },
}

fn violated<T>(which: Assumption) -> Result<T, ModelError> {
    Err(ModelError::AssumptionViolated(which))
}

/// Smallest integer `k` with `k >= v`, tolerant of `v` landing a few ulps
/// above an integer (as `exp(log 3)` does).
pub(crate) fn smallest_int_at_least(v: f64) -> u64 {
    if v <= 1.0 {
        return 1;
    }
    let c = v.ceil();
    if c - 1.0 >= v * (1.0 - 1e-12) {
        (c - 1.0) as u64
    } else {
        c as u64
    }
}

// ---------------------------------------------------------------------------
// Hurwitz zeta via Euler–Maclaurin

const BERNOULLI_2J: [f64; 7] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
    7.0 / 6.0,
];

/// `Σ_{k≥0} (q + k)^{-s}` for `s > 1`, `q > 0`, accurate to ~1e-15 relative.
pub fn hurwitz_zeta(s: f64, q: f64) -> f64 {
    const N: usize = 24;
    let mut sum = 0.0;
    for k in 0..N {
        sum += (q + k as f64).powf(-s);
    }
    let t = q + N as f64;
    sum += t.powf(1.0 - s) / (s - 1.0) + 0.5 * t.powf(-s);
    // Rising factorial s(s+1)...(s+2j-2) / (2j)! times t^{-s-2j+1}.
    let mut coef = s / 2.0;
    let mut tp = t.powf(-s - 1.0);
    for (j, b) in BERNOULLI_2J.iter().enumerate() {
        sum += b * coef * tp;
        let jj = (j + 1) as f64;
        coef *= (s + 2.0 * jj - 1.0) * (s + 2.0 * jj) / ((2.0 * jj + 1.0) * (2.0 * jj + 2.0));
        tp /= t * t;
    }
    sum
}

// ---------------------------------------------------------------------------
// Offspring law

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OffspringTail {
    FiniteSupport,
    /// p_k ∝ k^{-β-1} on k ≥ 1.
    Zeta { beta: f64 },
}

/// Offspring law as entered: listed `(k, p_k)` pairs plus a tail declaration.
/// For a zeta tail the listed pairs are optional and, when present, must agree
/// with the zeta pmf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OffspringLaw {
    pub support: Vec<(u64, f64)>,
    pub tail: OffspringTail,
}

impl OffspringLaw {
    pub fn finite(support: &[(u64, f64)]) -> Self {
        OffspringLaw { support: support.to_vec(), tail: OffspringTail::FiniteSupport }
    }

    pub fn zeta(beta: f64) -> Self {
        OffspringLaw { support: Vec::new(), tail: OffspringTail::Zeta { beta } }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ZetaTail {
    pub beta: f64,
    /// ζ(β + 1).
    pub normalizer: f64,
    /// Mass above [`ZETA_SAMPLING_CAP`], removed by the sampler.
    pub truncation_mass: f64,
    /// `c1 y^{-β} <= P(K > y) <= c2 y^{-β}` for all `y >= 1`.
    pub tail_lower: f64,
    pub tail_upper: f64,
}

impl ZetaTail {
    fn new(beta: f64) -> Self {
        let s = beta + 1.0;
        let normalizer = hurwitz_zeta(s, 1.0);
        let truncation_mass = hurwitz_zeta(s, ZETA_SAMPLING_CAP as f64 + 1.0) / normalizer;
        // Σ_{k≥K} k^{-s} lies between K^{-β}/β and K^{-s} + K^{-β}/β with K = ⌊y⌋+1 ∈ (y, 2y].
        ZetaTail {
            beta,
            normalizer,
            truncation_mass,
            tail_lower: 2f64.powf(-beta) / (beta * normalizer),
            tail_upper: (1.0 + 1.0 / beta) / normalizer,
        }
    }

    pub fn pmf(&self, k: u64) -> f64 {
        if k == 0 {
            0.0
        } else {
            (k as f64).powf(-self.beta - 1.0) / self.normalizer
        }
    }

    /// P(K > y).
    pub fn survival(&self, y: f64) -> f64 {
        if y < 1.0 {
            return 1.0;
        }
        hurwitz_zeta(self.beta + 1.0, y.floor() + 1.0) / self.normalizer
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Offspring {
    Finite { support: Vec<(u64, f64)> },
    Zeta(ZetaTail),
}

impl Offspring {
    pub fn pmf(&self, k: u64) -> f64 {
        match self {
            Offspring::Finite { support } => {
                support.iter().find(|(j, _)| *j == k).map_or(0.0, |(_, p)| *p)
            }
            Offspring::Zeta(z) => z.pmf(k),
        }
    }

    /// Largest support point, `None` for an unbounded law.
    pub fn max_support(&self) -> Option<u64> {
        match self {
            Offspring::Finite { support } => support.iter().map(|(k, _)| *k).max(),
            Offspring::Zeta(_) => None,
        }
    }

    /// Smallest support point `k` with `k >= v`.
    pub fn smallest_support_at_least(&self, v: f64) -> Option<u64> {
        let floor = smallest_int_at_least(v);
        match self {
            Offspring::Finite { support } => {
                support.iter().map(|(k, _)| *k).filter(|&k| k >= floor).min()
            }
            Offspring::Zeta(_) => Some(floor),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> u64 {
        match self {
            Offspring::Finite { support } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for &(k, p) in support {
                    acc += p;
                    if u < acc {
                        return k;
                    }
                }
                support.last().map(|(k, _)| *k).unwrap_or(1)
            }
            Offspring::Zeta(z) => {
                let dist = Zeta::new(z.beta + 1.0).expect("beta > 1 checked at validation");
                loop {
                    let k: f64 = dist.sample(rng);
                    if k <= ZETA_SAMPLING_CAP as f64 {
                        return k as u64;
                    }
                }
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Step law

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub position: f64,
    pub prob: f64,
}

/// `Y` with density `C e^{-y} / y^3` on `[1, ∞)`; the step is `Y - E[Y]`.
/// Integrals are evaluated on `u = 1/y ∈ (0, 1]`, where the integrands are
/// smooth.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TiltedPolynomial {
    pub normalizer: f64,
    pub mean_y: f64,
}

pub(crate) const QUAD_REL_TOL: f64 = 1e-13;

impl TiltedPolynomial {
    fn new() -> Self {
        let z = quad::integrate(|u| weight(u, 1.0) * u, 0.0, 1.0, QUAD_REL_TOL);
        let ey = quad::integrate(|u| weight(u, 1.0), 0.0, 1.0, QUAD_REL_TOL) / z;
        TiltedPolynomial { normalizer: 1.0 / z, mean_y: ey }
    }

    /// P(Y >= y).
    fn survival_y(&self, y: f64) -> f64 {
        if y <= 1.0 {
            return 1.0;
        }
        self.normalizer * quad::integrate(|u| weight(u, 1.0) * u, 0.0, 1.0 / y, QUAD_REL_TOL)
    }

    fn sample_y_from<R: Rng + ?Sized>(&self, y0: f64, rng: &mut R) -> f64 {
        // Shifted-exponential proposal on [y0, ∞); accept with (y0/y)^3.
        loop {
            let e: f64 = Exp1.sample(rng);
            let y = y0 + e;
            let u: f64 = rng.random();
            if u < (y0 / y).powi(3) {
                return y;
            }
        }
    }
}

/// `e^{-c/u}` with the removable singularity at `u = 0` filled in.
pub(crate) fn weight(u: f64, c: f64) -> f64 {
    if u <= 0.0 {
        if c > 0.0 {
            0.0
        } else {
            1.0
        }
    } else {
        (-c / u).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepLaw {
    Normal { sigma: f64 },
    /// Two atoms `lo < 0 < hi`, `P(X = hi) = q`.
    TwoPoint { lo: f64, hi: f64, q: f64 },
    /// Uniform on `(-half_width, half_width)`.
    Uniform { half_width: f64 },
    /// Finitely many atoms, sorted by position.
    Lattice { atoms: Vec<Atom> },
    TiltedPolynomial(TiltedPolynomial),
}

impl StepLaw {
    /// Normal with standard deviation `sigma`; any mean is removed.
    pub fn normal(sigma: f64) -> Result<Self, ModelError> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return violated(Assumption::StepParameters(format!("sigma = {sigma} must be > 0")));
        }
        Ok(StepLaw::Normal { sigma })
    }

    /// Two-point law on `{x1, x2}` with `P(X = x2) = q`, recentred.
    pub fn two_point(x1: f64, x2: f64, q: f64) -> Result<Self, ModelError> {
        if !(x1 < x2) || !(q > 0.0 && q < 1.0) {
            return violated(Assumption::StepParameters(format!(
                "two-point law needs x1 < x2 and 0 < q < 1, got ({x1}, {x2}, {q})"
            )));
        }
        let mean = (1.0 - q) * x1 + q * x2;
        Ok(StepLaw::TwoPoint { lo: x1 - mean, hi: x2 - mean, q })
    }

    pub fn rademacher() -> Self {
        StepLaw::TwoPoint { lo: -1.0, hi: 1.0, q: 0.5 }
    }

    /// Uniform on `(lo, hi)`, recentred to `(-w, w)`.
    pub fn uniform(lo: f64, hi: f64) -> Result<Self, ModelError> {
        if !(lo < hi) || !(hi - lo).is_finite() {
            return violated(Assumption::StepParameters(format!(
                "uniform law needs lo < hi, got ({lo}, {hi})"
            )));
        }
        Ok(StepLaw::Uniform { half_width: 0.5 * (hi - lo) })
    }

    /// Finite law on the given atoms, recentred. Duplicate positions merge.
    pub fn lattice(atoms: &[(f64, f64)]) -> Result<Self, ModelError> {
        let total: f64 = atoms.iter().map(|a| a.1).sum();
        if atoms.is_empty()
            || atoms.iter().any(|a| !(a.1 >= -PROB_TOL && a.1 <= 1.0 + PROB_TOL) || !a.0.is_finite())
            || (total - 1.0).abs() > PROB_TOL
        {
            return violated(Assumption::StepParameters(
                "lattice atoms need finite positions and probabilities summing to 1".into(),
            ));
        }
        let mean: f64 = atoms.iter().map(|a| a.0 * a.1).sum();
        let mut sorted: Vec<Atom> = atoms
            .iter()
            .filter(|a| a.1 > 0.0)
            .map(|a| Atom { position: a.0 - mean, prob: a.1 })
            .collect();
        sorted.sort_by(|a, b| a.position.total_cmp(&b.position));
        sorted.dedup_by(|b, a| {
            if (a.position - b.position).abs() <= 1e-15 * (1.0 + a.position.abs()) {
                a.prob += b.prob;
                true
            } else {
                false
            }
        });
        Ok(StepLaw::Lattice { atoms: sorted })
    }

    /// The centred `C e^{-y}/y^3` density on `[1, ∞)`.
    pub fn tilted_polynomial() -> Self {
        StepLaw::TiltedPolynomial(TiltedPolynomial::new())
    }

    pub fn name(&self) -> &'static str {
        match self {
            StepLaw::Normal { .. } => "normal",
            StepLaw::TwoPoint { .. } => "two_point",
            StepLaw::Uniform { .. } => "uniform",
            StepLaw::Lattice { .. } => "lattice",
            StepLaw::TiltedPolynomial(_) => "tilted_polynomial",
        }
    }

    /// Atoms of a discrete law, `None` for continuous laws.
    pub fn atoms(&self) -> Option<Vec<Atom>> {
        match self {
            StepLaw::TwoPoint { lo, hi, q } => Some(vec![
                Atom { position: *lo, prob: 1.0 - q },
                Atom { position: *hi, prob: *q },
            ]),
            StepLaw::Lattice { atoms } => Some(atoms.clone()),
            _ => None,
        }
    }

    /// Analytic mean (zero up to rounding after construction).
    pub fn mean(&self) -> f64 {
        match self {
            StepLaw::Normal { .. } | StepLaw::Uniform { .. } => 0.0,
            StepLaw::TwoPoint { .. } | StepLaw::Lattice { .. } => {
                self.atoms().unwrap().iter().map(|a| a.position * a.prob).sum()
            }
            // Centred by construction: E[Y] - mean_y.
            StepLaw::TiltedPolynomial(_) => 0.0,
        }
    }

    /// Essential supremum L.
    pub fn ess_sup(&self) -> ExtReal {
        match self {
            StepLaw::Normal { .. } | StepLaw::TiltedPolynomial(_) => ExtReal::PosInf,
            StepLaw::TwoPoint { hi, .. } => ExtReal::Finite(*hi),
            StepLaw::Uniform { half_width } => ExtReal::Finite(*half_width),
            StepLaw::Lattice { atoms } => ExtReal::Finite(atoms.last().unwrap().position),
        }
    }

    /// P(X = L); zero for continuous laws.
    pub fn mass_at_sup(&self) -> f64 {
        match self {
            StepLaw::TwoPoint { q, .. } => *q,
            StepLaw::Lattice { atoms } => atoms.last().unwrap().prob,
            _ => 0.0,
        }
    }

    /// P(X = 0).
    pub fn mass_at_zero(&self) -> f64 {
        match self.atoms() {
            Some(atoms) => atoms.iter().filter(|a| a.position.abs() < 1e-14).map(|a| a.prob).sum(),
            None => 0.0,
        }
    }

    /// P(X >= t).
    pub fn survival(&self, t: f64) -> f64 {
        match self {
            StepLaw::Normal { sigma } => 0.5 * erfc(t / (sigma * std::f64::consts::SQRT_2)),
            StepLaw::Uniform { half_width: w } => ((w - t) / (2.0 * w)).clamp(0.0, 1.0),
            StepLaw::TwoPoint { .. } | StepLaw::Lattice { .. } => self
                .atoms()
                .unwrap()
                .iter()
                .filter(|a| a.position >= t)
                .map(|a| a.prob)
                .sum(),
            StepLaw::TiltedPolynomial(tp) => tp.survival_y(t + tp.mean_y),
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            StepLaw::Normal { sigma } => {
                let z: f64 = StandardNormal.sample(rng);
                sigma * z
            }
            StepLaw::Uniform { half_width } => rng.random_range(-half_width..*half_width),
            StepLaw::TwoPoint { lo, hi, q } => {
                if rng.random::<f64>() < *q {
                    *hi
                } else {
                    *lo
                }
            }
            StepLaw::Lattice { atoms } => {
                let u: f64 = rng.random();
                let mut acc = 0.0;
                for a in atoms {
                    acc += a.prob;
                    if u < acc {
                        return a.position;
                    }
                }
                atoms.last().unwrap().position
            }
            StepLaw::TiltedPolynomial(tp) => tp.sample_y_from(1.0, rng) - tp.mean_y,
        }
    }

    /// Sampler for `X | X >= threshold`.
    pub fn conditioned(&self, threshold: f64) -> Result<ConditionedStep, ModelError> {
        let acceptance = self.survival(threshold);
        if !(acceptance > 0.0) {
            return Err(ModelError::ZeroProbability { threshold });
        }
        let method = match self {
            StepLaw::TwoPoint { .. } | StepLaw::Lattice { .. } => ConditioningMethod::InverseTransform,
            // The tail proposal is exact with acceptance bounded below.
            StepLaw::TiltedPolynomial(_) => ConditioningMethod::TailRejection,
            _ if acceptance >= MIN_REJECTION_ACCEPTANCE => ConditioningMethod::Rejection,
            _ => ConditioningMethod::InverseTransform,
        };
        Ok(ConditionedStep { law: self.clone(), threshold, acceptance, method })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditioningMethod {
    Rejection,
    InverseTransform,
    TailRejection,
}

/// Exact sampler for a step conditioned on `X >= threshold`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionedStep {
    #[serde(skip)]
    law: StepLaw,
    pub threshold: f64,
    /// P(X >= threshold).
    pub acceptance: f64,
    pub method: ConditioningMethod,
}

impl ConditionedStep {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let t = self.threshold;
        match (self.method, &self.law) {
            (ConditioningMethod::Rejection, law) => loop {
                let x = law.sample(rng);
                if x >= t {
                    return x;
                }
            },
            (ConditioningMethod::TailRejection, StepLaw::TiltedPolynomial(tp)) => {
                let y0 = (t + tp.mean_y).max(1.0);
                tp.sample_y_from(y0, rng) - tp.mean_y
            }
            (_, StepLaw::Normal { sigma }) => {
                // X = -σ Φ^{-1}(U p) = σ √2 erfc^{-1}(2 U p), U ∈ (0, 1].
                let u = 1.0 - rng.random::<f64>();
                let x = sigma * std::f64::consts::SQRT_2 * erfc_inv(2.0 * u * self.acceptance);
                x.max(t)
            }
            (_, StepLaw::Uniform { half_width }) => {
                let lo = t.max(-half_width);
                lo + rng.random::<f64>() * (half_width - lo)
            }
            (_, law) => {
                let atoms = law.atoms().expect("discrete law");
                let u = rng.random::<f64>() * self.acceptance;
                let mut acc = 0.0;
                let mut last = t;
                for a in atoms.iter().filter(|a| a.position >= t) {
                    acc += a.prob;
                    last = a.position;
                    if u < acc {
                        return a.position;
                    }
                }
                last
            }
        }
    }
}

// ---------------------------------------------------------------------------
// Checked model

/// A model satisfying every standing assumption, with its derived constants.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CheckedModel {
    pub offspring: Offspring,
    pub step: StepLaw,
    /// Offspring mean m.
    pub mean: f64,
    /// b = inf{k >= m : p_k > 0}.
    pub b: u64,
    /// μ = sup{k : p_k > 0}; `None` when unbounded.
    pub mu: Option<u64>,
    /// Essential supremum L of the step.
    pub ess_sup: ExtReal,
}

impl CheckedModel {
    pub fn log_m(&self) -> f64 {
        self.mean.ln()
    }

    /// α(a) = inf{k : p_k > 0, k >= e^a}; `None` stands for ∞.
    pub fn alpha(&self, a: f64) -> Option<u64> {
        offspring_alpha(&self.offspring, a)
    }

    /// True unless some p_k = 1 (deterministic branching).
    pub fn has_random_branching(&self) -> bool {
        match &self.offspring {
            Offspring::Finite { support } => support.iter().all(|(_, p)| *p < 1.0 - PROB_TOL),
            Offspring::Zeta(_) => true,
        }
    }
}

/// α(a) = inf{k : p_k > 0, k >= e^a}; `None` when no such k exists.
pub fn offspring_alpha(offspring: &Offspring, a: f64) -> Option<u64> {
    offspring.smallest_support_at_least(a.exp())
}

fn check_offspring(law: &OffspringLaw) -> Result<Offspring, ModelError> {
    for &(k, p) in &law.support {
        if !(p >= -PROB_TOL && p <= 1.0 + PROB_TOL) {
            return violated(Assumption::Probabilities(format!("p_{k} = {p} not in [0, 1]")));
        }
    }
    let mut ks: Vec<u64> = law.support.iter().map(|s| s.0).collect();
    ks.sort_unstable();
    if ks.windows(2).any(|w| w[0] == w[1]) {
        return violated(Assumption::Probabilities("repeated offspring count".into()));
    }
    if law.support.iter().any(|&(k, p)| k == 0 && p > PROB_TOL) {
        return violated(Assumption::NoExtinction);
    }
    match law.tail {
        OffspringTail::FiniteSupport => {
            let total: f64 = law.support.iter().map(|s| s.1).sum();
            if (total - 1.0).abs() > PROB_TOL {
                return violated(Assumption::Probabilities(format!("sum = {total}, expected 1")));
            }
            let mut support: Vec<(u64, f64)> =
                law.support.iter().copied().filter(|&(k, p)| k > 0 && p > 0.0).collect();
            support.sort_unstable_by_key(|s| s.0);
            Ok(Offspring::Finite { support })
        }
        OffspringTail::Zeta { beta } => {
            if !(beta > 1.0 && beta.is_finite()) {
                return violated(Assumption::Supercritical);
            }
            let z = ZetaTail::new(beta);
            for &(k, p) in &law.support {
                if (z.pmf(k) - p).abs() > PROB_TOL {
                    return violated(Assumption::InconsistentTail);
                }
            }
            Ok(Offspring::Zeta(z))
        }
    }
}

fn check_step(step: &StepLaw) -> Result<(), ModelError> {
    if step.mean().abs() > MEAN_TOL {
        return violated(Assumption::Centred);
    }
    if step.mass_at_zero() >= 1.0 - PROB_TOL {
        return violated(Assumption::NonDegenerateStep);
    }
    // Every supported variant has λ* > 0 by construction.
    Ok(())
}

/// Checks the standing assumptions and records m, b, μ and L.
pub fn validate_model(offspring: &OffspringLaw, step: &StepLaw) -> Result<CheckedModel, ModelError> {
    let off = check_offspring(offspring)?;
    check_step(step)?;
    let mean = match &off {
        Offspring::Finite { support } => support.iter().map(|&(k, p)| k as f64 * p).sum(),
        Offspring::Zeta(z) => hurwitz_zeta(z.beta, 1.0) / z.normalizer,
    };
    if !(mean > 1.0 && mean.is_finite()) {
        return violated(Assumption::Supercritical);
    }
    let b = off
        .smallest_support_at_least(mean)
        .expect("m <= max support for a law with mean m");
    Ok(CheckedModel {
        mu: off.max_support(),
        offspring: off,
        step: step.clone(),
        mean,
        b,
        ess_sup: step.ess_sup(),
    })
}
