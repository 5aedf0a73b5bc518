//! Cumulant generating function `Λ(λ) = log E[e^{λX}]` of a step law, its
//! first two derivatives, the domain boundary `λ*`, and the three-way
//! classification of the limit of `Λ'` at `λ*`.

use serde::Serialize;
use thiserror::Error;

use crate::ext::ExtReal;
use crate::model::{weight, Atom, StepLaw, TiltedPolynomial, QUAD_REL_TOL};
use crate::quad;

/// `Λ'` above this on the approach to `λ*` counts as divergence.
pub const DIVERGENCE_THRESHOLD: f64 = 1e8;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum CgfError {
    #[error("lambda = {lambda} outside the CGF domain (lambda* = {lambda_star})")]
    DomainExceeded { lambda: f64, lambda_star: ExtReal },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum CgfCase {
    /// `Λ' ↑ ∞` at `λ*`.
    I,
    /// `λ* = ∞` and `Λ' ↑ L < ∞`.
    II,
    /// `λ* < ∞` and `Λ'(λ*) = T < ∞`.
    III,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CgfProfile {
    pub lambda_star: ExtReal,
    pub ess_sup: ExtReal,
    pub case: CgfCase,
    /// Finite limit `T` of `Λ'` at `λ*` (case III only).
    pub t_limit: Option<f64>,
    /// `Λ(λ*)` when finite (case III only).
    pub cgf_at_lambda_star: Option<f64>,
    /// `P(X = L)` when `L < ∞`.
    pub mass_at_sup: Option<f64>,
}

/// `λ* = sup{λ >= 0 : E[e^{λX}] < ∞}`, known analytically for every variant.
pub fn lambda_star(step: &StepLaw) -> ExtReal {
    match step {
        StepLaw::TiltedPolynomial(_) => ExtReal::Finite(1.0),
        _ => ExtReal::PosInf,
    }
}

fn check_domain(step: &StepLaw, lambda: f64) -> Result<(), CgfError> {
    let ls = lambda_star(step);
    // The tilted density has a finite moment at λ* itself.
    let ok = lambda.is_finite()
        && match ls {
            ExtReal::PosInf => true,
            ExtReal::Finite(l) => lambda <= l,
        };
    if ok {
        Ok(())
    } else {
        Err(CgfError::DomainExceeded { lambda, lambda_star: ls })
    }
}

/// Value, first and second derivative of `Λ` at `λ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgfPoint {
    pub value: f64,
    pub slope: f64,
    pub curvature: f64,
}

pub fn cgf(step: &StepLaw, lambda: f64) -> Result<f64, CgfError> {
    cgf_point(step, lambda).map(|p| p.value)
}

pub fn cgf_prime(step: &StepLaw, lambda: f64) -> Result<f64, CgfError> {
    check_domain(step, lambda)?;
    Ok(match step {
        StepLaw::Normal { sigma } => sigma * sigma * lambda,
        StepLaw::Uniform { half_width } => uniform_prime(*half_width, lambda),
        StepLaw::TiltedPolynomial(tp) => tilted(tp, lambda, false).slope,
        _ => atoms_point(&step.atoms().unwrap(), lambda).slope,
    })
}

pub fn cgf_point(step: &StepLaw, lambda: f64) -> Result<CgfPoint, CgfError> {
    check_domain(step, lambda)?;
    Ok(match step {
        StepLaw::Normal { sigma } => {
            let v = sigma * sigma;
            CgfPoint { value: 0.5 * v * lambda * lambda, slope: v * lambda, curvature: v }
        }
        StepLaw::Uniform { half_width } => uniform_point(*half_width, lambda),
        StepLaw::TiltedPolynomial(tp) => tilted(tp, lambda, true),
        _ => atoms_point(&step.atoms().unwrap(), lambda),
    })
}

fn atoms_point(atoms: &[Atom], lambda: f64) -> CgfPoint {
    // Anchor at the atom maximising λx so every exponent is <= 0, and write
    // the slope as an offset from that atom to keep precision near L.
    let top = atoms
        .iter()
        .max_by(|a, b| (lambda * a.position).total_cmp(&(lambda * b.position)))
        .unwrap();
    let shift = lambda * top.position;
    let mut z = 0.0;
    let mut gap = 0.0;
    let mut gap2 = 0.0;
    for a in atoms {
        let w = a.prob * (lambda * a.position - shift).exp();
        let d = top.position - a.position;
        z += w;
        gap += w * d;
        gap2 += w * d * d;
    }
    let mean_gap = gap / z;
    CgfPoint {
        value: shift + z.ln(),
        slope: top.position - mean_gap,
        curvature: (gap2 / z - mean_gap * mean_gap).max(0.0),
    }
}

fn uniform_prime(c: f64, lambda: f64) -> f64 {
    let z = c * lambda;
    let a = z.abs();
    let g = if a < 0.1 {
        let z2 = z * z;
        z * (1.0 / 3.0 - z2 * (1.0 / 45.0 - z2 * (2.0 / 945.0 - z2 * (1.0 / 4725.0 - z2 * 2.0 / 93555.0))))
    } else {
        1.0 / z.tanh() - 1.0 / z
    };
    c * g
}

fn uniform_point(c: f64, lambda: f64) -> CgfPoint {
    let z = c * lambda;
    let a = z.abs();
    let z2 = z * z;
    let (value, curv) = if a < 0.1 {
        let v = z2
            * (1.0 / 6.0
                - z2 * (1.0 / 180.0 - z2 * (1.0 / 2835.0 - z2 * (1.0 / 37800.0 - z2 / 467_775.0))));
        let k = 1.0 / 3.0
            - z2 * (1.0 / 15.0 - z2 * (2.0 / 189.0 - z2 * (1.0 / 675.0 - z2 * 2.0 / 10395.0)));
        (v, k)
    } else {
        let v = a + (-(-2.0 * a).exp()).ln_1p() - std::f64::consts::LN_2 - a.ln();
        let sh = a.sinh();
        (v, 1.0 / z2 - 1.0 / (sh * sh))
    };
    CgfPoint { value, slope: uniform_prime(c, lambda), curvature: c * c * curv }
}

/// `J_k(λ) = ∫_0^1 e^{-(1-λ)/u} u^{k-2} du`, so that `E[Y^{3-k} e^{λY}] = C J_k`.
fn tilted_moment(lambda: f64, power: i32) -> f64 {
    let c = 1.0 - lambda;
    quad::integrate(|u| weight(u, c) * u.powi(power), 0.0, 1.0, QUAD_REL_TOL)
}

fn tilted(tp: &TiltedPolynomial, lambda: f64, with_curvature: bool) -> CgfPoint {
    let j3 = tilted_moment(lambda, 1);
    let j2 = tilted_moment(lambda, 0);
    let r = j2 / j3;
    let curvature = if with_curvature {
        if lambda >= 1.0 {
            f64::INFINITY
        } else {
            (tilted_moment(lambda, -1) / j3 - r * r).max(0.0)
        }
    } else {
        f64::NAN
    };
    CgfPoint {
        value: (tp.normalizer * j3).ln() - lambda * tp.mean_y,
        slope: r - tp.mean_y,
        curvature,
    }
}

/// Classifies the behaviour of `Λ'` at `λ*` by evaluating it along a
/// geometric grid approaching `λ*`.
pub fn classify_cgf(step: &StepLaw) -> CgfProfile {
    let ls = lambda_star(step);
    let ess_sup = step.ess_sup();
    let mass_at_sup = ess_sup.finite().map(|_| step.mass_at_sup());
    let (diverges, limit, at_boundary) = match ls {
        ExtReal::PosInf => {
            let mut last = 0.0;
            let mut diverges = false;
            for k in 0..=80 {
                last = cgf_prime(step, 2f64.powi(k)).expect("finite lambda");
                if last > DIVERGENCE_THRESHOLD {
                    diverges = true;
                    break;
                }
            }
            (diverges, last, None)
        }
        ExtReal::Finite(l) => {
            let mut last = 0.0;
            let mut diverges = false;
            for k in 1..=52 {
                last = cgf_prime(step, l * (1.0 - 2f64.powi(-k))).expect("inside domain");
                if last > DIVERGENCE_THRESHOLD {
                    diverges = true;
                    break;
                }
            }
            // Λ(λ*) is finite for the tilted density, so Λ'(λ*) is the limit.
            let at = cgf_point(step, l).ok();
            if let Some(p) = at {
                if p.slope.is_finite() && !diverges {
                    last = p.slope;
                }
            }
            (diverges, last, at.map(|p| p.value))
        }
    };
    let case = match (diverges, ls) {
        (true, _) => CgfCase::I,
        (false, ExtReal::PosInf) => CgfCase::II,
        (false, ExtReal::Finite(_)) => CgfCase::III,
    };
    if case == CgfCase::II {
        debug_assert!(
            ess_sup.finite().is_some_and(|l| (l - limit).abs() < 1e-6 * (1.0 + l.abs())),
            "numeric limit {limit} disagrees with L = {ess_sup}"
        );
    }
    CgfProfile {
        lambda_star: ls,
        ess_sup,
        case,
        t_limit: (case == CgfCase::III).then_some(limit),
        cgf_at_lambda_star: if case == CgfCase::III { at_boundary } else { None },
        mass_at_sup,
    }
}
