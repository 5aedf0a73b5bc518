//! Upper-deviation rates for level sets: the constrained optimisation that
//! defines `I(a,x)`, the regime classification deciding whether the decay is
//! exponential or double-exponential, the root `c*`, the bounds for
//! `a >= log m` and for Pareto offspring tails, and the exact log-weights of
//! the explicit lower-bound strategies.
//!
//! Throughout, `y_s` is the root in `(0, x]` of
//! `log m - I((x - y)/(1 - s)) = a/(1 - s)` for `s ∈ (0, 1 - a/log m]`, and
//! `I(a,x) = inf_s { s I(y_s/s) - s log m }`.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cgf::CgfCase;
use crate::ext::ExtReal;
use crate::model::{CheckedModel, Offspring, StepLaw};
use crate::rate::{rate_profile_with, RateFunction, RateProfile};
use crate::solve::{bisect, golden_section, log_grid};

/// Tolerance for deciding that two rates or ratios coincide.
const SNAP: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    /// Points in the log-uniform seed grid over `(s_min, 1 - a/log m]`.
    pub grid_points: usize,
    pub s_min: f64,
    /// Final bracket width of the local refinement in `s`.
    pub s_tol: f64,
    /// Beyond this `y/s` the objective uses the slope asymptote `κ y`.
    pub asymptote_ratio: f64,
    /// Relative width of the band around `L` reported as unresolved.
    pub boundary_tol: f64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            grid_points: 512,
            s_min: 1e-6,
            s_tol: 1e-10,
            asymptote_ratio: 1e6,
            boundary_tol: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    /// Unbounded steps: exponential decay at rate `I(a,x)`.
    #[serde(rename = "THM1_L_INF")]
    Thm1LInf,
    /// `L < ∞`, `x* < L`, no atom at `L`, and some `y_s/s < L`.
    #[serde(rename = "THM1_REMARK_I")]
    Thm1RemarkI,
    /// `L < ∞`, `x* < L`, an atom at `L`, and some `y_s/s <= L`.
    #[serde(rename = "THM1_REMARK_II")]
    Thm1RemarkII,
    /// `x* = L`: double-exponential decay.
    #[serde(rename = "THM2_I")]
    Thm2I,
    /// `x* < L` and `y_s/s > L` for every admissible `s`: double-exponential.
    #[serde(rename = "THM2_II")]
    Thm2II,
    /// No atom at `L` and `inf_s y_s/s = L`; the decay scale is unknown.
    #[serde(rename = "BOUNDARY_OPEN")]
    BoundaryOpen,
    /// `a >= log m`.
    #[serde(rename = "A_GE_LOGM")]
    AGeLogM,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::Thm1LInf => "THM1_L_INF",
            Regime::Thm1RemarkI => "THM1_REMARK_I",
            Regime::Thm1RemarkII => "THM1_REMARK_II",
            Regime::Thm2I => "THM2_I",
            Regime::Thm2II => "THM2_II",
            Regime::BoundaryOpen => "BOUNDARY_OPEN",
            Regime::AGeLogM => "A_GE_LOGM",
        }
    }

    /// Exponential decay at rate `I(a,x)`.
    pub fn is_exponential(self) -> bool {
        matches!(self, Regime::Thm1LInf | Regime::Thm1RemarkI | Regime::Thm1RemarkII)
    }

    /// Double-exponential decay governed by `c*`.
    pub fn is_double_exp(self) -> bool {
        matches!(self, Regime::Thm2I | Regime::Thm2II)
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DeviationError {
    #[error("s = {s} is outside (0, 1 - a/log m] = (0, {s_max}]; the constraint has no root")]
    NoSolution { s: f64, s_max: f64 },
    #[error("x = {x} must lie in (0, L) with L = {ess_sup}")]
    LevelOutOfRange { x: f64, ess_sup: ExtReal },
    #[error("a = {a} must lie in ((log m - I(x))^+, log m) = ({lower}, {upper})")]
    ExponentOutOfRange { a: f64, lower: f64, upper: f64 },
    #[error("regime {found} does not admit this computation (needs {expected})")]
    WrongRegime { expected: &'static str, found: Regime },
    #[error("a = {a} exceeds log mu = {log_mu}")]
    OutOfRange { a: f64, log_mu: f64 },
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("the forced event has zero probability: {0}")]
    ZeroProbability(String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum DeviationOutcome {
    /// `(1/n) log P → -i_ax`.
    Exponential { i_ax: f64, s_star: f64, y_star: f64 },
    /// Bounds on `lim (1/n) log[-log P]`. When the lower bound is only known
    /// to be positive, `lower_exponent` is 0 and `lower_strictly_positive`
    /// is set.
    DoubleExp { lower_exponent: f64, lower_strictly_positive: bool, upper_exponent: f64 },
    /// Bounds on `lim (1/n) log P`.
    Pareto { lower_rate: f64, upper_rate: f64 },
    Unresolved { reason: String },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeviationResult {
    pub regime: Option<Regime>,
    pub outcome: DeviationOutcome,
    pub diagnostics: BTreeMap<String, f64>,
}

impl DeviationResult {
    fn new(regime: Option<Regime>, outcome: DeviationOutcome) -> Self {
        DeviationResult { regime, outcome, diagnostics: BTreeMap::new() }
    }

    fn with(mut self, key: &str, value: f64) -> Self {
        self.diagnostics.insert(key.to_string(), value);
        self
    }
}

/// Regime label together with the `inf_s y_s/s` scan behind it.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RegimeReport {
    pub regime: Regime,
    pub x_star: f64,
    pub ess_sup: ExtReal,
    pub lambda_star: ExtReal,
    pub case: CgfCase,
    /// `inf_s y_s/s`, when it was needed for the decision.
    pub inf_ys_over_s: Option<f64>,
    pub s_at_inf: Option<f64>,
}

/// Solution of the equation defining `c*`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CStar {
    pub c_star: f64,
    /// `u(c*) - log b`.
    pub residual: f64,
    pub u_at_zero: f64,
    pub u_at_end: f64,
    pub log_b: f64,
}

/// Solver bound to one model; reuses the rate function across queries.
#[derive(Debug, Clone)]
pub struct DeviationSolver<'m> {
    model: &'m CheckedModel,
    rate: RateFunction,
    profile: RateProfile,
    config: SearchConfig,
}

impl<'m> DeviationSolver<'m> {
    pub fn new(model: &'m CheckedModel) -> Self {
        Self::with_config(model, SearchConfig::default())
    }

    pub fn with_config(model: &'m CheckedModel, config: SearchConfig) -> Self {
        let rate = RateFunction::new(&model.step);
        let profile = rate_profile_with(&rate, model.log_m());
        DeviationSolver { model, rate, profile, config }
    }

    pub fn rate(&self) -> &RateFunction {
        &self.rate
    }

    pub fn profile(&self) -> &RateProfile {
        &self.profile
    }

    pub fn config(&self) -> &SearchConfig {
        &self.config
    }

    fn log_m(&self) -> f64 {
        self.profile.log_m
    }

    /// `1 - a/log m`.
    pub fn s_max(&self, a: f64) -> f64 {
        1.0 - a / self.log_m()
    }

    fn check_level(&self, x: f64) -> Result<(), DeviationError> {
        let ok = x > 0.0 && ExtReal::Finite(x) < self.profile.cgf.ess_sup;
        if ok {
            Ok(())
        } else {
            Err(DeviationError::LevelOutOfRange { x, ess_sup: self.profile.cgf.ess_sup })
        }
    }

    /// Checks `x ∈ (0, L)` and `a ∈ ((log m - I(x))^+, log m)`.
    pub fn check_query(&self, a: f64, x: f64) -> Result<(), DeviationError> {
        self.check_level(x)?;
        let lower = (self.log_m() - self.rate.eval_f64(x)).max(0.0);
        if a > lower && a < self.log_m() {
            Ok(())
        } else {
            Err(DeviationError::ExponentOutOfRange { a, lower, upper: self.log_m() })
        }
    }

    /// `y(s, ε)`: the root of
    /// `(1-s) log m - (1-s) I((x - ε - y)/(1-s) - ε) = a - ε`; `ε = 0` gives `y_s`.
    pub fn y_perturbed(&self, a: f64, x: f64, s: f64, eps: f64) -> Result<f64, DeviationError> {
        let s_max = 1.0 - (a - eps) / self.log_m();
        if !(s > 0.0) || s > s_max * (1.0 + SNAP) {
            return Err(DeviationError::NoSolution { s, s_max });
        }
        let s = s.min(s_max);
        let level = (self.log_m() - (a - eps) / (1.0 - s)).max(0.0);
        let x_bar = self.rate.inverse(level);
        Ok(x - eps - (1.0 - s) * (x_bar + eps))
    }

    /// `y_s`.
    pub fn solve_ys(&self, a: f64, x: f64, s: f64) -> Result<f64, DeviationError> {
        self.y_perturbed(a, x, s, 0.0)
    }

    /// `s I(r)` with the slope asymptote for huge `r` and `L` snapping for
    /// ratios that overshoot an atom at `L` by rounding.
    fn scaled_rate(&self, s: f64, r: f64) -> f64 {
        let prof = &self.profile.cgf;
        if let (ExtReal::Finite(k), true) = (self.profile.kappa, r > self.config.asymptote_ratio) {
            return k * r * s;
        }
        if prof.case == CgfCase::II {
            let l = prof.ess_sup.expect_finite("L in case II");
            if r > l && r <= l * (1.0 + SNAP) {
                return s * self.rate.eval_f64(l);
            }
        }
        s * self.rate.eval_f64(r)
    }

    /// `s I(y(s,ε)/s - ε) - s log m`, the function minimised over `s`.
    pub fn objective(&self, a: f64, x: f64, s: f64, eps: f64) -> f64 {
        match self.y_perturbed(a, x, s, eps) {
            Ok(y) => self.scaled_rate(s, y / s - eps) - s * self.log_m(),
            Err(_) => f64::INFINITY,
        }
    }

    /// Grid seed plus golden-section refinement of `f` over
    /// `(s_min, s_hi]`; returns `(argmin, min, grid_min)`.
    fn minimise<F: Fn(f64) -> f64>(&self, f: F, s_hi: f64) -> (f64, f64, f64) {
        let cfg = &self.config;
        let s_lo = cfg.s_min.min(0.5 * s_hi);
        let grid = log_grid(s_lo, s_hi, cfg.grid_points);
        let vals: Vec<f64> = grid.iter().map(|&s| f(s)).collect();
        let (i, &grid_min) = vals
            .iter()
            .enumerate()
            .min_by(|p, q| p.1.total_cmp(q.1))
            .expect("non-empty grid");
        let lo = grid[i.saturating_sub(1)];
        let hi = grid[(i + 1).min(grid.len() - 1)];
        let (s_ref, v_ref) = golden_section(&f, lo, hi, cfg.s_tol);
        if v_ref < grid_min {
            (s_ref, v_ref, grid_min)
        } else {
            (grid[i], grid_min, grid_min)
        }
    }

    /// `inf_s y_s/s` over the admissible range, with its minimiser.
    pub fn inf_ratio(&self, a: f64, x: f64) -> (f64, f64) {
        let ratio = |s: f64| self.solve_ys(a, x, s).map_or(f64::INFINITY, |y| y / s);
        let (s, v, _) = self.minimise(ratio, self.s_max(a));
        (v, s)
    }

    /// Regime of the query, with the supporting scan.
    pub fn classify(&self, a: f64, x: f64) -> Result<RegimeReport, DeviationError> {
        let prof = &self.profile;
        let mut report = RegimeReport {
            regime: Regime::AGeLogM,
            x_star: prof.x_star,
            ess_sup: prof.cgf.ess_sup,
            lambda_star: prof.cgf.lambda_star,
            case: prof.cgf.case,
            inf_ys_over_s: None,
            s_at_inf: None,
        };
        if a >= self.log_m() {
            self.check_level(x)?;
            return Ok(report);
        }
        self.check_query(a, x)?;
        let l = match prof.cgf.ess_sup {
            ExtReal::PosInf => {
                report.regime = Regime::Thm1LInf;
                return Ok(report);
            }
            ExtReal::Finite(l) => l,
        };
        if prof.x_star_at_sup {
            report.regime = Regime::Thm2I;
            return Ok(report);
        }
        let (inf, s_inf) = self.inf_ratio(a, x);
        report.inf_ys_over_s = Some(inf);
        report.s_at_inf = Some(s_inf);
        let tol = self.config.boundary_tol * (1.0 + l);
        let atom = prof.cgf.mass_at_sup.unwrap_or(0.0) > 0.0;
        report.regime = match (atom, inf) {
            (false, r) if r < l - tol => Regime::Thm1RemarkI,
            (false, r) if r <= l + tol => Regime::BoundaryOpen,
            (true, r) if r <= l + tol => Regime::Thm1RemarkII,
            _ => Regime::Thm2II,
        };
        Ok(report)
    }

    pub fn classify_regime(&self, a: f64, x: f64) -> Result<Regime, DeviationError> {
        self.classify(a, x).map(|r| r.regime)
    }

    /// `sup_s { s log m - s I(y(s,ε)/s - ε) }`, so that `L_0 = -I(a,x)`.
    pub fn perturbed_sup(&self, a: f64, x: f64, eps: f64) -> f64 {
        let s_hi = 1.0 - (a - eps) / self.log_m();
        let (_, v, _) = self.minimise(|s| self.objective(a, x, s, eps), s_hi);
        -v
    }

    /// `I(a,x)` with its minimiser, for queries in an exponential regime.
    pub fn rate_iax(&self, a: f64, x: f64) -> Result<DeviationResult, DeviationError> {
        let report = self.classify(a, x)?;
        if !report.regime.is_exponential() {
            return Err(DeviationError::WrongRegime { expected: "THM1_*", found: report.regime });
        }
        let s_max = self.s_max(a);
        let (s_star, i_ax, grid_min) = self.minimise(|s| self.objective(a, x, s, 0.0), s_max);
        let y_star = self.solve_ys(a, x, s_star)?;
        let residual = self.log_m()
            - self.rate.eval_f64((x - y_star) / (1.0 - s_star))
            - a / (1.0 - s_star);
        let mut res = DeviationResult::new(
            Some(report.regime),
            DeviationOutcome::Exponential { i_ax, s_star, y_star },
        )
        .with("s_max", s_max)
        .with("x_star", self.profile.x_star)
        .with("grid_min", grid_min)
        .with("constraint_residual", residual)
        .with("y_star_over_s_star", y_star / s_star);
        if let Some(r) = report.inf_ys_over_s {
            res = res.with("inf_ys_over_s", r);
        }
        Ok(res)
    }

    /// `u(c) = log m - I(L + (x - L)/(1 - c)) - (a - log b)/(1 - c)`.
    pub fn u(&self, a: f64, x: f64, c: f64) -> f64 {
        let l = self.profile.cgf.ess_sup.expect_finite("L");
        let arg = (l + (x - l) / (1.0 - c)).max(0.0);
        self.log_m() - self.rate.eval_f64(arg) - (a - (self.model.b as f64).ln()) / (1.0 - c)
    }

    /// Root `c* ∈ (0, x/L)` of `u(c) = log b`.
    pub fn cstar(&self, a: f64, x: f64) -> Result<CStar, DeviationError> {
        let regime = self.classify_regime(a, x)?;
        if !regime.is_double_exp() {
            return Err(DeviationError::WrongRegime { expected: "THM2_*", found: regime });
        }
        let l = self.profile.cgf.ess_sup.expect_finite("L");
        let log_b = (self.model.b as f64).ln();
        let end = x / l;
        let u0 = self.u(a, x, 0.0);
        let u1 = self.u(a, x, end);
        if !(u0 < log_b && log_b < u1) {
            return Err(DeviationError::Precondition(format!(
                "u(0) = {u0} and u(x/L) = {u1} do not bracket log b = {log_b}"
            )));
        }
        let c = bisect(|c| self.u(a, x, c) - log_b, 0.0, end, 200);
        Ok(CStar { c_star: c, residual: self.u(a, x, c) - log_b, u_at_zero: u0, u_at_end: u1, log_b })
    }

    /// Bounds on `lim (1/n) log[-log P]` in the double-exponential regimes
    /// and for `a >= log m`.
    pub fn double_exp_bounds(&self, a: f64, x: f64) -> Result<DeviationResult, DeviationError> {
        let report = self.classify(a, x)?;
        match report.regime {
            Regime::AGeLogM => {
                if !self.model.has_random_branching() {
                    return Err(DeviationError::Precondition(
                        "some p_k = 1: the branching is deterministic".into(),
                    ));
                }
                if let Some(mu) = self.model.mu {
                    let log_mu = (mu as f64).ln();
                    if a > log_mu * (1.0 + SNAP) {
                        return Err(DeviationError::OutOfRange { a, log_mu });
                    }
                }
                let alpha = self.model.alpha(a).ok_or(DeviationError::OutOfRange {
                    a,
                    log_mu: self.model.mu.map_or(f64::INFINITY, |m| (m as f64).ln()),
                })?;
                let lower = a - self.log_m();
                let at_log_m = lower.abs() <= SNAP * self.log_m();
                let positive = if at_log_m { self.profile.cgf.ess_sup.is_finite() } else { lower > 0.0 };
                Ok(DeviationResult::new(
                    Some(Regime::AGeLogM),
                    DeviationOutcome::DoubleExp {
                        lower_exponent: if at_log_m { 0.0 } else { lower },
                        lower_strictly_positive: positive,
                        upper_exponent: (alpha as f64).ln(),
                    },
                )
                .with("alpha", alpha as f64))
            }
            r if r.is_double_exp() => {
                let c = self.cstar(a, x)?;
                Ok(DeviationResult::new(
                    Some(r),
                    DeviationOutcome::DoubleExp {
                        lower_exponent: 0.0,
                        lower_strictly_positive: true,
                        upper_exponent: c.c_star * c.log_b,
                    },
                )
                .with("c_star", c.c_star)
                .with("c_star_residual", c.residual)
                .with("b", self.model.b as f64))
            }
            found => Err(DeviationError::WrongRegime { expected: "THM2_* or A_GE_LOGM", found }),
        }
    }

    /// Dispatches a query to whichever result its regime supports.
    pub fn solve(&self, a: f64, x: f64) -> Result<DeviationResult, DeviationError> {
        let report = self.classify(a, x)?;
        let mut res = match report.regime {
            r if r.is_exponential() => self.rate_iax(a, x)?,
            r if r.is_double_exp() => self.double_exp_bounds(a, x)?,
            Regime::AGeLogM => match self.double_exp_bounds(a, x) {
                Ok(r) => r,
                Err(e) => DeviationResult::new(
                    Some(Regime::AGeLogM),
                    DeviationOutcome::Unresolved { reason: e.to_string() },
                ),
            },
            r => DeviationResult::new(
                Some(r),
                DeviationOutcome::Unresolved {
                    reason: "no atom at L and inf_s y_s/s = L: the decay scale is not determined"
                        .into(),
                },
            ),
        };
        if let Some(v) = report.inf_ys_over_s {
            res.diagnostics.insert("inf_ys_over_s".into(), v);
        }
        res.diagnostics.insert("x_star".into(), report.x_star);
        Ok(res)
    }
}

/// `y_s` for one query.
pub fn solve_ys(model: &CheckedModel, a: f64, x: f64, s: f64) -> Result<f64, DeviationError> {
    DeviationSolver::new(model).solve_ys(a, x, s)
}

pub fn rate_iax(model: &CheckedModel, a: f64, x: f64) -> Result<DeviationResult, DeviationError> {
    DeviationSolver::new(model).rate_iax(a, x)
}

pub fn classify_regime(model: &CheckedModel, a: f64, x: f64) -> Result<Regime, DeviationError> {
    DeviationSolver::new(model).classify_regime(a, x)
}

pub fn cstar(model: &CheckedModel, a: f64, x: f64) -> Result<CStar, DeviationError> {
    DeviationSolver::new(model).cstar(a, x)
}

pub fn double_exp_bounds(
    model: &CheckedModel,
    a: f64,
    x: f64,
) -> Result<DeviationResult, DeviationError> {
    DeviationSolver::new(model).double_exp_bounds(a, x)
}

/// `x² log m / (2(log m - a)) - log m`, the value of `I(a,x)` for standard
/// normal steps.
pub fn gaussian_iax(m: f64, a: f64, x: f64) -> f64 {
    let lm = m.ln();
    x * x * lm / (2.0 * (lm - a)) - lm
}

/// Bounds on `lim (1/n) log P` for standard normal steps and an offspring
/// law with `P(|Z_1| > y) = Θ(y^{-β})`.
pub fn pareto_bounds(m: f64, beta: f64, a: f64, x: f64) -> Result<DeviationResult, DeviationError> {
    if !(m > 1.0 && beta > 1.0 && x > 0.0) {
        return Err(DeviationError::Precondition(format!(
            "need m > 1, beta > 1, x > 0 (got m = {m}, beta = {beta}, x = {x})"
        )));
    }
    let typical = m.ln() - 0.5 * x * x;
    if !(a > typical.max(0.0)) {
        return Err(DeviationError::ExponentOutOfRange { a, lower: typical.max(0.0), upper: f64::INFINITY });
    }
    Ok(DeviationResult::new(
        None,
        DeviationOutcome::Pareto {
            lower_rate: -((beta - 1.0) * a + a - typical),
            upper_rate: -(a - typical),
        },
    )
    .with("beta", beta)
    .with("log_m_minus_rate", typical))
}

/// [`pareto_bounds`] for a model with a zeta offspring tail and `N(0,1)` steps.
pub fn pareto_bounds_for(model: &CheckedModel, a: f64, x: f64) -> Result<DeviationResult, DeviationError> {
    let beta = match &model.offspring {
        Offspring::Zeta(z) => z.beta,
        Offspring::Finite { .. } => {
            return Err(DeviationError::Precondition("offspring law has no Pareto tail".into()))
        }
    };
    match model.step {
        StepLaw::Normal { sigma } if (sigma - 1.0).abs() < 1e-15 => pareto_bounds(model.mean, beta, a, x),
        _ => Err(DeviationError::Precondition("the step must be standard normal".into())),
    }
}

// ---------------------------------------------------------------------------
// Strategy weights

/// Forced prefixes used in the lower-bound proofs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Strategy {
    /// For `horizon` generations every particle has exactly `b` children and
    /// every step is at least `L - eta`.
    BAry { horizon: u32, eta: f64 },
    /// For `generations` generations every particle has exactly `alpha`
    /// children and every step is at least `x`.
    AlphaAry { alpha: u64, generations: u32, x: f64 },
}

/// `Σ_{i=from}^{to} base^i`: exact while it fits below `2^63`, otherwise its
/// logarithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum GeometricSum {
    Exact(u64),
    Log(f64),
}

impl GeometricSum {
    pub fn new(base: u64, from: u32, to: u32) -> Self {
        if to < from {
            return GeometricSum::Exact(0);
        }
        const LIMIT: u64 = 1 << 63;
        let exact = (|| {
            let mut term = base.checked_pow(from)?;
            let mut total = 0u64;
            for i in from..=to {
                total = total.checked_add(term).filter(|&t| t < LIMIT)?;
                if i < to {
                    term = term.checked_mul(base)?;
                }
            }
            Some(total)
        })();
        match exact {
            Some(v) => GeometricSum::Exact(v),
            None if base == 1 => GeometricSum::Log(((to - from + 1) as f64).ln()),
            None => {
                // log Σ = to·log b + log(1 - b^{-(to-from+1)}) - log(1 - 1/b)
                let lb = (base as f64).ln();
                let k = (to - from + 1) as f64;
                GeometricSum::Log(to as f64 * lb + (-(-k * lb).exp()).ln_1p() - (-1.0 / base as f64).ln_1p())
            }
        }
    }

    pub fn ln(self) -> f64 {
        match self {
            GeometricSum::Exact(v) => (v as f64).ln(),
            GeometricSum::Log(l) => l,
        }
    }
}

/// Log-probability of a forced prefix, `Σ_j count_j · log p_j`, also given
/// as `log(-log P)` which stays finite when `log P` overflows.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct StrategyWeight {
    pub log_prob: f64,
    pub log_neg_log_prob: f64,
    pub branching_count: GeometricSum,
    pub step_count: GeometricSum,
    pub branching_prob: f64,
    pub step_prob: f64,
}

fn weight_of(
    branching_count: GeometricSum,
    branching_prob: f64,
    step_count: GeometricSum,
    step_prob: f64,
) -> StrategyWeight {
    let term = |count: GeometricSum, p: f64| -> (f64, f64) {
        // (count · log p, log(count · (-log p)))
        let nl = -p.ln();
        if nl == 0.0 {
            return (0.0, f64::NEG_INFINITY);
        }
        let lc = count.ln();
        let direct = match count {
            GeometricSum::Exact(c) => -(c as f64) * nl,
            GeometricSum::Log(l) => -(l.exp() * nl),
        };
        (direct, lc + nl.ln())
    };
    let (d1, l1) = term(branching_count, branching_prob);
    let (d2, l2) = term(step_count, step_prob);
    let hi = l1.max(l2);
    let log_neg = if hi == f64::NEG_INFINITY {
        f64::NEG_INFINITY
    } else {
        hi + ((l1 - hi).exp() + (l2 - hi).exp()).ln()
    };
    StrategyWeight {
        log_prob: d1 + d2,
        log_neg_log_prob: log_neg,
        branching_count,
        step_count,
        branching_prob,
        step_prob,
    }
}

/// Exact log-probability of the forced prefix of `strategy`.
pub fn strategy_log_prob(model: &CheckedModel, strategy: Strategy) -> Result<StrategyWeight, DeviationError> {
    let (k, gens, threshold) = match strategy {
        Strategy::BAry { horizon, eta } => {
            let l = model
                .ess_sup
                .finite()
                .ok_or_else(|| DeviationError::Precondition("B_ARY needs L < ∞".into()))?;
            if !(eta >= 0.0) {
                return Err(DeviationError::Precondition(format!("eta = {eta} must be >= 0")));
            }
            (model.b, horizon, l - eta)
        }
        Strategy::AlphaAry { alpha, generations, x } => (alpha, generations, x),
    };
    let p_k = model.offspring.pmf(k);
    if !(p_k > 0.0) {
        return Err(DeviationError::ZeroProbability(format!("p_{k} = 0")));
    }
    let q = model.step.survival(threshold);
    if !(q > 0.0) {
        return Err(DeviationError::ZeroProbability(format!("P(X >= {threshold}) = 0")));
    }
    let parents = match gens {
        0 => GeometricSum::Exact(0),
        g => GeometricSum::new(k, 0, g - 1),
    };
    Ok(weight_of(parents, p_k, GeometricSum::new(k, 1, gens), q))
}
