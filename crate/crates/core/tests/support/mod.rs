//! Randomised property suites shared by the `properties` and `acceptance`
//! targets. Each suite runs a fixed number of cases from a fixed RNG seed so
//! a failure is reproducible.

#![allow(dead_code)]

use brw_core::cgf::{cgf, cgf_prime, lambda_star};
use brw_core::deviation::{DeviationOutcome, DeviationSolver, SearchConfig};
use brw_core::model::{validate_model, CheckedModel, OffspringLaw, StepLaw};
use brw_core::rate::RateFunction;
use brw_core::sim::{martingale_mean, DEFAULT_POPULATION_CAP};
use brw_core::ExtReal;
use proptest::prelude::*;
use proptest::test_runner::{Config, RngSeed, TestCaseError, TestRunner};

pub fn half_half() -> OffspringLaw {
    OffspringLaw::finite(&[(1, 0.5), (2, 0.5)])
}

pub fn normal_model(m: f64) -> CheckedModel {
    // p_1 = 2 - m, p_2 = m - 1 gives mean m for m in (1, 2).
    validate_model(&OffspringLaw::finite(&[(1, 2.0 - m), (2, m - 1.0)]), &StepLaw::normal(1.0).unwrap()).unwrap()
}

/// Every step-law family, with random parameters.
pub fn any_step() -> impl Strategy<Value = StepLaw> {
    prop_oneof![
        (0.3f64..3.0).prop_map(|s| StepLaw::normal(s).unwrap()),
        Just(StepLaw::rademacher()),
        (0.3f64..3.0).prop_map(|c| StepLaw::uniform(-c, c).unwrap()),
        (-3.0f64..-0.2, 0.2f64..3.0, 0.05f64..0.95).prop_map(|(lo, hi, q)| StepLaw::two_point(lo, hi, q).unwrap()),
        bounded_lattice(),
        Just(StepLaw::tilted_polynomial()),
    ]
}

fn bounded_lattice() -> impl Strategy<Value = StepLaw> {
    (-2.0f64..-0.1, -0.05f64..0.05, 0.1f64..2.0, 0.05f64..1.0, 0.05f64..1.0, 0.05f64..1.0).prop_map(
        |(x0, x1, x2, w0, w1, w2)| {
            let t = w0 + w1 + w2;
            StepLaw::lattice(&[(x0, w0 / t), (x1, w1 / t), (x2, w2 / t)]).unwrap()
        },
    )
}

/// Bounded step laws (`L < ∞`).
pub fn bounded_step() -> impl Strategy<Value = StepLaw> {
    prop_oneof![
        Just(StepLaw::rademacher()),
        (0.3f64..3.0).prop_map(|c| StepLaw::uniform(-c, c).unwrap()),
        (-3.0f64..-0.2, 0.2f64..3.0, 0.05f64..0.95).prop_map(|(lo, hi, q)| StepLaw::two_point(lo, hi, q).unwrap()),
        bounded_lattice(),
    ]
}

fn lambda_hi(step: &StepLaw) -> f64 {
    match lambda_star(step) {
        ExtReal::Finite(l) => l,
        ExtReal::PosInf => 6.0,
    }
}

/// Largest x used when sampling `I`: just below `L`, or a few scales out.
fn x_hi(step: &StepLaw) -> f64 {
    match step.ess_sup() {
        ExtReal::Finite(l) => 0.995 * l,
        ExtReal::PosInf => 5.0,
    }
}

fn ensure(ok: bool, msg: impl FnOnce() -> String) -> Result<(), TestCaseError> {
    if ok {
        Ok(())
    } else {
        Err(TestCaseError::fail(msg()))
    }
}

// ---------------------------------------------------------------------------
// Properties

fn cgf_convex(step: &StepLaw, u: f64, v: f64, t: f64) -> Result<(), TestCaseError> {
    let hi = lambda_hi(step);
    let (l1, l2) = (u * hi, v * hi);
    let mid = t * l1 + (1.0 - t) * l2;
    let (f1, f2, fm) = (cgf(step, l1).unwrap(), cgf(step, l2).unwrap(), cgf(step, mid).unwrap());
    let chord = t * f1 + (1.0 - t) * f2;
    ensure(fm <= chord + 1e-10 * (1.0 + chord.abs()), || {
        format!("{step:?}: Λ({mid}) = {fm} above chord {chord}")
    })
}

fn cgf_slope(step: &StepLaw) -> Result<(), TestCaseError> {
    let d0 = cgf_prime(step, 0.0).unwrap();
    ensure(d0.abs() < 1e-8, || format!("{step:?}: Λ'(0) = {d0}"))?;
    let h = 1e-4;
    let diff = |t: f64| cgf(step, t).unwrap() - cgf(step, -t).unwrap();
    // Fourth-order central difference: the plain second-order truncation
    // h² Λ'''/6 reaches 1e-8 for skewed two-point laws. What remains is the
    // evaluation error of Λ divided by h; the quadrature law carries ~1e-12
    // relative error.
    let fd = (8.0 * diff(h) - diff(2.0 * h)) / (12.0 * h);
    let tol = if matches!(step, StepLaw::TiltedPolynomial(_)) { 1e-7 } else { 1e-8 };
    ensure((fd - d0).abs() < tol, || format!("{step:?}: FD slope {fd} vs Λ'(0) {d0}"))?;
    let hi = lambda_hi(step);
    let mut prev = f64::NEG_INFINITY;
    for i in 0..=40 {
        let l = hi * i as f64 / 40.0;
        let d = cgf_prime(step, l).unwrap();
        ensure(d >= prev - 1e-12 * (1.0 + prev.abs()), || format!("{step:?}: Λ' decreases at {l}"))?;
        prev = d;
    }
    Ok(())
}

fn rate_convex_increasing(step: &StepLaw, u: f64, v: f64, t: f64) -> Result<(), TestCaseError> {
    let rate = RateFunction::new(step);
    let hi = x_hi(step);
    let (x1, x2) = (u.min(v) * hi, u.max(v) * hi);
    let (i1, i2) = (rate.eval_f64(x1), rate.eval_f64(x2));
    let xm = t * x1 + (1.0 - t) * x2;
    let im = rate.eval_f64(xm);
    let chord = t * i1 + (1.0 - t) * i2;
    ensure(im <= chord + 1e-9 * (1.0 + chord.abs()), || format!("{step:?}: I({xm}) = {im} above chord {chord}"))?;
    ensure(i1 <= i2, || format!("{step:?}: I({x1}) = {i1} > I({x2}) = {i2}"))?;
    if x2 - x1 > 1e-3 {
        ensure(i1 < i2, || format!("{step:?}: I not strictly increasing on [{x1}, {x2}]"))?;
    }
    Ok(())
}

/// A Gaussian query with `a` strictly inside `((log m - I(x))⁺, log m)`.
fn gaussian_query(m: f64, x: f64, frac: f64) -> (CheckedModel, f64) {
    let model = normal_model(m);
    let lm = model.log_m();
    let lo = (lm - 0.5 * x * x).max(0.0);
    (model, lo + frac * (lm - lo))
}

fn ys_monotone(m: f64, x: f64, frac: f64) -> Result<(), TestCaseError> {
    let (model, a) = gaussian_query(m, x, frac);
    let solver = DeviationSolver::new(&model);
    let s_max = solver.s_max(a);
    let mut prev = f64::NEG_INFINITY;
    for i in 1..=60 {
        let s = s_max * i as f64 / 60.0;
        let y = solver.solve_ys(a, x, s).map_err(|e| TestCaseError::fail(e.to_string()))?;
        ensure(y >= prev - 1e-10, || format!("m {m}, a {a}, x {x}: y_s decreases at s = {s}"))?;
        prev = y;
    }
    // y_s/s blows up as s → 0.
    let ratios: Vec<f64> = [1e-1, 1e-2, 1e-3, 1e-4]
        .iter()
        .map(|&k| solver.solve_ys(a, x, k * s_max).map(|y| y / (k * s_max)))
        .collect::<Result<_, _>>()
        .map_err(|e| TestCaseError::fail(e.to_string()))?;
    ensure(ratios.windows(2).all(|w| w[1] > w[0]) && ratios[3] > 100.0 * ratios[0], || {
        format!("m {m}, a {a}, x {x}: y_s/s = {ratios:?}")
    })
}

fn exponential_rate(solver: &DeviationSolver, a: f64, x: f64) -> Result<f64, TestCaseError> {
    match solver.rate_iax(a, x).map_err(|e| TestCaseError::fail(e.to_string()))?.outcome {
        DeviationOutcome::Exponential { i_ax, .. } => Ok(i_ax),
        other => Err(TestCaseError::fail(format!("{other:?}"))),
    }
}

/// For normal steps `∂I/∂a = x² log m / (2 (log m - a)²)`, which is
/// unbounded as `a → log m`, so a fixed step of 1e-3 in `a` can move `I` by
/// more than 1e-2. The fixed-step bound is checked where that slope is at
/// most 5; everywhere, the left differences must shrink to zero with the
/// step.
fn left_continuity(m: f64, x: f64, frac: f64) -> Result<(), TestCaseError> {
    let (model, a) = gaussian_query(m, x, frac);
    let lm = model.log_m();
    let lo = (lm - 0.5 * x * x).max(0.0);
    if a - 1e-3 <= lo {
        return Err(TestCaseError::reject("a - 1e-3 leaves the range"));
    }
    let solver = DeviationSolver::new(&model);
    let i = exponential_rate(&solver, a, x)?;
    let closed = brw_core::deviation::gaussian_iax(m, a, x);
    ensure((i - closed).abs() < 1e-6, || format!("m {m}, a {a}, x {x}: I = {i}, closed form {closed}"))?;
    let mut gaps = Vec::new();
    for delta in [1e-3, 1e-4, 1e-5, 1e-6] {
        let i_left = exponential_rate(&solver, a - delta, x)?;
        ensure(i_left <= i + 1e-9, || format!("I(a, x) decreased in a: I(a - {delta}) = {i_left} > {i}"))?;
        gaps.push(i - i_left);
    }
    if x * x * lm / (2.0 * (lm - a).powi(2)) <= 5.0 {
        ensure(gaps[0] < 1e-2, || format!("m {m}, a {a}, x {x}: I(a) - I(a - 1e-3) = {}", gaps[0]))?;
    }
    ensure(gaps.windows(2).all(|w| w[1] <= w[0] + 1e-9) && gaps[3] < 1e-2 * gaps[0].max(1e-6) + 1e-8, || {
        format!("m {m}, a {a}, x {x}: left gaps {gaps:?} do not vanish")
    })
}

fn martingale(p1: f64, p3: f64, n: u32, seed: u64) -> Result<(), TestCaseError> {
    let p2 = 1.0 - p1 - p3;
    let model = validate_model(
        &OffspringLaw::finite(&[(1, p1), (2, p2), (3, p3)]),
        &StepLaw::normal(1.0).unwrap(),
    )
    .map_err(|e| TestCaseError::reject(e.to_string()))?;
    let (mean, se) = martingale_mean(&model, n, 2000, seed, DEFAULT_POPULATION_CAP);
    // 4.5 standard errors keeps the family-wise false-alarm rate of the whole
    // suite below 1e-3.
    ensure((mean - 1.0).abs() < 4.5 * se, || format!("p = ({p1}, {p2}, {p3}), n {n}: mean W = {mean} ± {se}"))
}

fn classifier_stable(step: &StepLaw, off: (f64, f64), xu: f64, frac: f64) -> Result<(), TestCaseError> {
    let model = validate_model(&OffspringLaw::finite(&[(1, off.0), (2, off.1), (3, 1.0 - off.0 - off.1)]), step)
        .map_err(|e| TestCaseError::reject(e.to_string()))?;
    let l = step.ess_sup().expect_finite("bounded law");
    let x = xu * l;
    let coarse = DeviationSolver::new(&model);
    let fine = DeviationSolver::with_config(&model, SearchConfig { grid_points: 1024, ..SearchConfig::default() });
    let lm = model.log_m();
    let lo = (lm - coarse.rate().eval_f64(x)).max(0.0);
    let a = lo + frac * (lm - lo);
    let (r1, r2) = match (coarse.classify(a, x), fine.classify(a, x)) {
        (Ok(r1), Ok(r2)) => (r1, r2),
        (Err(e), _) | (_, Err(e)) => return Err(TestCaseError::reject(e.to_string())),
    };
    ensure(r1.regime == r2.regime, || {
        format!(
            "{step:?}, a {a}, x {x}: {} at 512 points, {} at 1024 (inf y_s/s {:?} vs {:?}, L = {l})",
            r1.regime, r2.regime, r1.inf_ys_over_s, r2.inf_ys_over_s
        )
    })
}

// ---------------------------------------------------------------------------
// Suites

pub struct SuiteResult {
    pub name: &'static str,
    pub cases: u32,
    pub outcome: Result<(), String>,
}

fn runner(cases: u32, seed: u64) -> TestRunner {
    TestRunner::new(Config {
        cases,
        rng_seed: RngSeed::Fixed(seed),
        failure_persistence: None,
        max_global_rejects: 100 * cases,
        ..Config::default()
    })
}

fn suite<S: Strategy>(
    name: &'static str,
    cases: u32,
    seed: u64,
    strategy: S,
    test: impl Fn(S::Value) -> Result<(), TestCaseError>,
) -> SuiteResult {
    let outcome = runner(cases, seed).run(&strategy, test).map_err(|e| e.to_string());
    SuiteResult { name, cases, outcome }
}

pub const SUITES: [&str; 7] = [
    "cgf_convex",
    "cgf_slope_monotone",
    "rate_convex_increasing",
    "ys_monotone",
    "left_continuity",
    "martingale_mean",
    "classifier_grid_stability",
];

/// Runs one suite with `base_cases` scaled by `scale` (rounded, at least 1).
pub fn run_suite(name: &str, scale: f64, seed: u64) -> SuiteResult {
    let n = |base: u32| ((base as f64 * scale).round() as u32).max(1);
    let unit = || 0.0f64..1.0;
    match name {
        "cgf_convex" => suite("cgf_convex", n(200), seed, (any_step(), unit(), unit(), unit()), |(s, u, v, t)| {
            cgf_convex(&s, u, v, t)
        }),
        "cgf_slope_monotone" => suite("cgf_slope_monotone", n(100), seed, any_step(), |s| cgf_slope(&s)),
        "rate_convex_increasing" => suite(
            "rate_convex_increasing",
            n(200),
            seed,
            (any_step(), unit(), unit(), unit()),
            |(s, u, v, t)| rate_convex_increasing(&s, u, v, t),
        ),
        "ys_monotone" => suite("ys_monotone", n(150), seed, (1.1f64..1.95, 0.2f64..2.0, 0.05f64..0.95), |(m, x, f)| {
            ys_monotone(m, x, f)
        }),
        "left_continuity" => suite(
            "left_continuity",
            n(100),
            seed,
            (1.1f64..1.95, 0.2f64..2.0, 0.05f64..0.95),
            |(m, x, f)| left_continuity(m, x, f),
        ),
        "martingale_mean" => suite(
            "martingale_mean",
            n(50),
            seed,
            (0.0f64..0.8, 0.0f64..0.3, 5u32..=8, any::<u64>()),
            |(p1, p3, k, s)| martingale(p1, p3, k, s),
        ),
        "classifier_grid_stability" => suite(
            "classifier_grid_stability",
            n(200),
            seed,
            (bounded_step(), (0.0f64..0.7, 0.1f64..0.5), 0.05f64..0.95, 0.02f64..0.98),
            |(s, off, x, f)| classifier_stable(&s, off, x, f),
        ),
        other => SuiteResult { name: "unknown", cases: 0, outcome: Err(format!("no suite {other}")) },
    }
}
