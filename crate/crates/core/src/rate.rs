//! The rate function `I(x) = sup_{t>=0} {tx - Λ(t)}`, the speed `x*` of the
//! maximal position, and the almost-sure growth exponent of level sets.

use serde::Serialize;
use thiserror::Error;

use crate::cgf::{cgf, cgf_point, classify_cgf, CgfCase, CgfProfile};
use crate::ext::ExtReal;
use crate::model::{CheckedModel, StepLaw};
use crate::solve::bisect;

/// Stopping tolerance on the maximising tilt `t`.
pub const TILT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum RateError {
    #[error("x = {x} equals the speed x*; the growth exponent is not determined there")]
    BoundaryPoint { x: f64 },
}

/// Legendre transform of the CGF of one step law, with the classification
/// needed to handle the three tail regimes.
#[derive(Debug, Clone)]
pub struct RateFunction {
    step: StepLaw,
    profile: CgfProfile,
    variance: f64,
}

impl RateFunction {
    pub fn new(step: &StepLaw) -> Self {
        let profile = classify_cgf(step);
        let variance = cgf_point(step, 0.0).expect("0 is in the domain").curvature;
        RateFunction { step: step.clone(), profile, variance }
    }

    pub fn step(&self) -> &StepLaw {
        &self.step
    }

    pub fn profile(&self) -> &CgfProfile {
        &self.profile
    }

    /// `lim_{t→∞} I(t)/t`: `λ*` in cases I and III, `∞` in case II.
    pub fn kappa(&self) -> ExtReal {
        match self.profile.case {
            CgfCase::II => ExtReal::PosInf,
            CgfCase::I | CgfCase::III => self.profile.lambda_star,
        }
    }

    /// `I(L) = -log P(X = L)` in case II.
    pub fn at_sup(&self) -> Option<ExtReal> {
        if self.profile.case != CgfCase::II {
            return None;
        }
        let q = self.profile.mass_at_sup.unwrap_or(0.0);
        Some(if q > 0.0 { ExtReal::Finite(-q.ln()) } else { ExtReal::PosInf })
    }

    /// Tilt `t ∈ [0, λ*)` solving `Λ'(t) = x`, for `0 < x` below the
    /// supremum of `Λ'`.
    fn solve_tilt(&self, x: f64) -> f64 {
        let (mut lo, mut hi) = match self.profile.lambda_star {
            ExtReal::Finite(l) => (0.0, l),
            ExtReal::PosInf => {
                let (mut lo, mut hi) = (0.0, 1.0);
                let d = |t: f64| crate::cgf::cgf_prime(&self.step, t).unwrap();
                while d(hi) < x && hi < 1e300 {
                    lo = hi;
                    hi *= 2.0;
                }
                (lo, hi)
            }
        };
        let mut t = (x / self.variance).clamp(lo, hi);
        if t <= lo || t >= hi {
            t = 0.5 * (lo + hi);
        }
        for _ in 0..400 {
            let p = cgf_point(&self.step, t).expect("inside the bracket");
            let r = p.slope - x;
            if r == 0.0 {
                return t;
            }
            if r < 0.0 {
                lo = t;
            } else {
                hi = t;
            }
            let newton = t - r / p.curvature;
            let next = if newton > lo && newton < hi && newton.is_finite() {
                newton
            } else {
                0.5 * (lo + hi)
            };
            let done = (next - t).abs() <= TILT_TOL * t.abs().max(1.0) || hi - lo <= TILT_TOL * hi.max(1.0);
            t = next;
            if done {
                break;
            }
        }
        t
    }

    /// `I(x)` on the extended reals.
    pub fn eval(&self, x: f64) -> ExtReal {
        if x <= 0.0 {
            return ExtReal::ZERO;
        }
        match self.profile.case {
            CgfCase::II => {
                let l = self.profile.ess_sup.expect_finite("L in case II");
                if x > l {
                    return ExtReal::PosInf;
                }
                if x == l {
                    return self.at_sup().unwrap();
                }
            }
            CgfCase::III => {
                let t_lim = self.profile.t_limit.unwrap();
                if x >= t_lim {
                    let ls = self.profile.lambda_star.expect_finite("lambda* in case III");
                    return ExtReal::Finite(ls * x - self.profile.cgf_at_lambda_star.unwrap());
                }
            }
            CgfCase::I => {}
        }
        let t = self.solve_tilt(x);
        let v = t * x - cgf(&self.step, t).expect("inside the domain");
        ExtReal::Finite(v.max(0.0))
    }

    /// `I(x)` with `+∞` as IEEE infinity, for comparisons inside optimisers.
    pub fn eval_f64(&self, x: f64) -> f64 {
        self.eval(x).to_f64()
    }

    /// Smallest `z >= 0` with `I(z) = level`, by bisection on `I`. Returns
    /// `L` when `level` is not below `I(L)` in case II.
    pub fn inverse(&self, level: f64) -> f64 {
        if level <= 0.0 {
            return 0.0;
        }
        let hi = match self.profile.case {
            CgfCase::II => {
                let l = self.profile.ess_sup.expect_finite("L in case II");
                if self.at_sup().unwrap() <= ExtReal::Finite(level) {
                    return l;
                }
                l
            }
            _ => {
                let mut hi = 1.0;
                while self.eval_f64(hi) < level {
                    hi *= 2.0;
                }
                hi
            }
        };
        bisect(|z| self.eval_f64(z) - level, 0.0, hi, 200)
    }
}

/// `I(x)` for one step law.
pub fn rate_i(step: &StepLaw, x: f64) -> ExtReal {
    RateFunction::new(step).eval(x)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateProfile {
    pub cgf: CgfProfile,
    pub log_m: f64,
    /// `x* = sup{y >= 0 : I(y) <= log m}`.
    pub x_star: f64,
    /// True when `x* = L` (case II with `I(L) <= log m`).
    pub x_star_at_sup: bool,
    pub kappa: ExtReal,
    /// `I(L)` in case II.
    pub i_at_sup: Option<ExtReal>,
}

fn speed_from(rate: &RateFunction, log_m: f64) -> (f64, bool) {
    let f = |y: f64| rate.eval_f64(y) - log_m;
    match rate.profile().case {
        CgfCase::II => {
            let l = rate.profile().ess_sup.expect_finite("L in case II");
            if rate.at_sup().unwrap().to_f64() <= log_m + 1e-12 {
                (l, true)
            } else {
                (bisect(f, 0.0, l, 200), false)
            }
        }
        _ => {
            let mut hi = 1.0;
            while f(hi) <= 0.0 {
                hi *= 2.0;
            }
            (bisect(f, 0.0, hi, 200), false)
        }
    }
}

/// Speed of the maximal position.
pub fn speed_xstar(model: &CheckedModel) -> f64 {
    speed_from(&RateFunction::new(&model.step), model.log_m()).0
}

pub fn rate_profile_with(rate: &RateFunction, log_m: f64) -> RateProfile {
    let (x_star, at_sup) = speed_from(rate, log_m);
    RateProfile {
        cgf: rate.profile().clone(),
        log_m,
        x_star,
        x_star_at_sup: at_sup,
        kappa: rate.kappa(),
        i_at_sup: rate.at_sup(),
    }
}

pub fn rate_profile(model: &CheckedModel) -> RateProfile {
    rate_profile_with(&RateFunction::new(&model.step), model.log_m())
}

/// Almost-sure limit of `(1/n) log Z_n[xn, ∞)`.
pub fn biggins_growth(model: &CheckedModel, x: f64) -> Result<f64, RateError> {
    let rate = RateFunction::new(&model.step);
    let log_m = model.log_m();
    if x <= 0.0 {
        return Ok(log_m);
    }
    let (x_star, _) = speed_from(&rate, log_m);
    if x == x_star {
        Err(RateError::BoundaryPoint { x })
    } else if x > x_star {
        Ok(0.0)
    } else {
        Ok(log_m - rate.eval_f64(x))
    }
}
