//! The four subcommands. Each one reads only the config fields it needs,
//! writes its files into the output directory and returns their paths.
//! Outputs are written before a non-zero outcome (regime mismatch, cap
//! breach) is reported, so a failed run still leaves its evidence behind.

use std::path::{Path, PathBuf};

use brw_core::cgf::CgfCase;
use brw_core::deviation::{gaussian_iax, pareto_bounds_for, DeviationOutcome, DeviationSolver, Regime};
use brw_core::model::{CheckedModel, Offspring, StepLaw};
use brw_core::oracle::{exact_level_dist, exact_upper_dev};
use brw_core::rate::RateFunction;
use brw_core::sim::{estimate_upper_dev, run_replicates, SimError, SimEstimate};
use brw_core::{count_threshold, ExtReal};
use serde::Serialize;

use crate::config::{ConfigError, RunConfig};
use crate::output::{fmt_f64, fmt_opt, write_json, Table};
use crate::{CliError, Format};

/// Per-invocation switches that are not part of the config.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub format: Option<Format>,
    pub oracle_check: bool,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        RunOptions { out_dir: out_dir.into(), format: None, oracle_check: false }
    }
}

fn check_expected(cfg: &RunConfig, found: &str) -> Result<(), CliError> {
    match cfg.expect_regime() {
        Some(want) if want != found => {
            Err(CliError::Regime(format!("expected {want}, found {found} (query.expect_regime)")))
        }
        _ => Ok(()),
    }
}

fn key_value_table(pairs: &[(&str, String)]) -> Table {
    let mut t = Table::new(&["key", "value"]);
    for (k, v) in pairs {
        t.push(vec![k.to_string(), v.clone()]);
    }
    t
}

// ---------------------------------------------------------------------------
// classify

#[derive(Debug, Clone, Serialize)]
pub struct RegimeOutput {
    pub regime: Regime,
    pub a: f64,
    pub x: f64,
    pub log_m: f64,
    pub x_star: f64,
    /// `L = ess sup X`.
    pub ess_sup: ExtReal,
    pub lambda_star: ExtReal,
    pub case: CgfCase,
    pub inf_ys_over_s: Option<f64>,
    pub s_at_inf: Option<f64>,
}

pub fn classify(cfg: &RunConfig, opts: &RunOptions) -> Result<Vec<PathBuf>, CliError> {
    let model = cfg.checked_model()?;
    let (a, x) = (cfg.a()?, cfg.x()?);
    let report = DeviationSolver::new(&model).classify(a, x)?;
    let out = RegimeOutput {
        regime: report.regime,
        a,
        x,
        log_m: model.log_m(),
        x_star: report.x_star,
        ess_sup: report.ess_sup,
        lambda_star: report.lambda_star,
        case: report.case,
        inf_ys_over_s: report.inf_ys_over_s,
        s_at_inf: report.s_at_inf,
    };
    let path = match opts.format.unwrap_or(Format::Json) {
        Format::Json => write_json(&opts.out_dir, "regime.json", "classify", cfg, &out)?,
        Format::Csv => key_value_table(&[
            ("regime", out.regime.label().to_string()),
            ("a", fmt_f64(a)),
            ("x", fmt_f64(x)),
            ("log_m", fmt_f64(out.log_m)),
            ("x_star", fmt_f64(out.x_star)),
            ("ess_sup", fmt_f64(out.ess_sup.to_f64())),
            ("lambda_star", fmt_f64(out.lambda_star.to_f64())),
            ("case", format!("{:?}", out.case)),
            ("inf_ys_over_s", fmt_opt(out.inf_ys_over_s)),
            ("s_at_inf", fmt_opt(out.s_at_inf)),
        ])
        .write(&opts.out_dir, "regime.csv", "classify", cfg)?,
    };
    check_expected(cfg, out.regime.label())?;
    Ok(vec![path])
}

// ---------------------------------------------------------------------------
// rate

#[derive(Debug, Clone, Serialize)]
pub struct RatePoint {
    pub x: f64,
    pub rate: ExtReal,
}

/// One `(a, x)` query of the deviation table. Exactly one group of columns
/// is filled, according to `kind`.
#[derive(Debug, Clone, Default, Serialize)]
pub struct DeviationRow {
    pub a: f64,
    pub x: f64,
    /// Regime label, or `PARETO_OFFSPRING` for a zeta offspring tail.
    pub regime: String,
    pub kind: String,
    pub i_ax: Option<f64>,
    pub s_star: Option<f64>,
    pub y_star: Option<f64>,
    /// `x² log m / (2(log m - a)) - log m` after scaling by σ, for normal steps.
    pub gaussian_closed_form: Option<f64>,
    pub c_star: Option<f64>,
    pub lower: Option<f64>,
    pub upper: Option<f64>,
    pub lower_strictly_positive: Option<bool>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct RateOutput {
    pub rates: Vec<RatePoint>,
    pub deviations: Vec<DeviationRow>,
}

fn deviation_row(model: &CheckedModel, solver: &DeviationSolver, a: f64, x: f64) -> Result<DeviationRow, CliError> {
    let mut row = DeviationRow { a, x, ..Default::default() };
    if let Offspring::Zeta(_) = model.offspring {
        let res = pareto_bounds_for(model, a, x)?;
        if let DeviationOutcome::Pareto { lower_rate, upper_rate } = res.outcome {
            row.regime = "PARETO_OFFSPRING".into();
            row.kind = "PARETO".into();
            row.lower = Some(lower_rate);
            row.upper = Some(upper_rate);
        }
        return Ok(row);
    }
    let res = solver.solve(a, x)?;
    row.regime = res.regime.map_or_else(String::new, |r| r.label().to_string());
    match res.outcome {
        DeviationOutcome::Exponential { i_ax, s_star, y_star } => {
            row.kind = "EXPONENTIAL".into();
            row.i_ax = Some(i_ax);
            row.s_star = Some(s_star);
            row.y_star = Some(y_star);
            if let StepLaw::Normal { sigma } = model.step {
                row.gaussian_closed_form = Some(gaussian_iax(model.mean, a, x / sigma));
            }
        }
        DeviationOutcome::DoubleExp { lower_exponent, lower_strictly_positive, upper_exponent } => {
            row.kind = "DOUBLE_EXPONENTIAL".into();
            row.c_star = res.diagnostics.get("c_star").copied();
            row.lower = Some(lower_exponent);
            row.upper = Some(upper_exponent);
            row.lower_strictly_positive = Some(lower_strictly_positive);
        }
        DeviationOutcome::Pareto { lower_rate, upper_rate } => {
            row.kind = "PARETO".into();
            row.lower = Some(lower_rate);
            row.upper = Some(upper_rate);
        }
        DeviationOutcome::Unresolved { reason } => {
            row.kind = "UNRESOLVED".into();
            row.note = Some(reason);
        }
    }
    Ok(row)
}

pub fn rate(cfg: &RunConfig, opts: &RunOptions) -> Result<Vec<PathBuf>, CliError> {
    let model = cfg.checked_model()?;
    let rf = RateFunction::new(&model.step);
    let rates: Vec<RatePoint> = cfg.x_grid()?.into_iter().map(|x| RatePoint { x, rate: rf.eval(x) }).collect();

    let solver = DeviationSolver::new(&model);
    let x = cfg.x()?;
    let deviations = cfg
        .a_values()?
        .into_iter()
        .map(|a| deviation_row(&model, &solver, a, x))
        .collect::<Result<Vec<_>, _>>()?;

    let out = RateOutput { rates, deviations };
    let paths = match opts.format.unwrap_or(Format::Csv) {
        Format::Json => vec![write_json(&opts.out_dir, "rates.json", "rate", cfg, &out)?],
        Format::Csv => {
            let mut t = Table::new(&["x", "rate"]);
            for p in &out.rates {
                t.push(vec![fmt_f64(p.x), fmt_f64(p.rate.to_f64())]);
            }
            let mut d = Table::new(&[
                "a",
                "x",
                "regime",
                "kind",
                "i_ax",
                "s_star",
                "y_star",
                "gaussian_closed_form",
                "c_star",
                "lower",
                "upper",
                "lower_strictly_positive",
                "note",
            ]);
            for r in &out.deviations {
                d.push(vec![
                    fmt_f64(r.a),
                    fmt_f64(r.x),
                    r.regime.clone(),
                    r.kind.clone(),
                    fmt_opt(r.i_ax),
                    fmt_opt(r.s_star),
                    fmt_opt(r.y_star),
                    fmt_opt(r.gaussian_closed_form),
                    fmt_opt(r.c_star),
                    fmt_opt(r.lower),
                    fmt_opt(r.upper),
                    r.lower_strictly_positive.map(|b| b.to_string()).unwrap_or_default(),
                    r.note.clone().unwrap_or_default(),
                ]);
            }
            vec![
                t.write(&opts.out_dir, "rates.csv", "rate", cfg)?,
                d.write(&opts.out_dir, "iax.csv", "rate", cfg)?,
            ]
        }
    };

    if let Some(r) = out.deviations.iter().find(|r| r.kind == "UNRESOLVED") {
        return Err(CliError::Regime(format!(
            "a = {}, x = {}: regime {} leaves the decay rate unresolved",
            r.a, r.x, r.regime
        )));
    }
    for r in &out.deviations {
        check_expected(cfg, &r.regime)?;
    }
    Ok(paths)
}

// ---------------------------------------------------------------------------
// simulate

/// Comparison of a Monte Carlo estimate with the exact probability.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct OracleCheck {
    pub exact: f64,
    pub abs_error: f64,
    /// `sqrt(exact (1 - exact) / replicates)`.
    pub sigma: f64,
    pub sigma_distance: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SimulateOutput {
    pub estimate: SimEstimate,
    pub oracle: Option<OracleCheck>,
}

fn sim_error(e: SimError) -> CliError {
    match e {
        SimError::InvalidInput(reason) => ConfigError::Invalid { field: "query", reason }.into(),
        SimError::Deviation(d) => d.into(),
        other => CliError::Compute(other.to_string()),
    }
}

fn oracle_check(model: &CheckedModel, est: &SimEstimate) -> Result<OracleCheck, CliError> {
    if model.step.atoms().is_none() {
        return Err(ConfigError::Invalid {
            field: "model.step.kind",
            reason: "--oracle-check needs a step law with finitely many atoms".into(),
        }
        .into());
    }
    let exact = exact_upper_dev(model, est.a, est.x, est.n).map_err(|e| CliError::Compute(e.to_string()))?;
    let abs_error = (est.p_hat - exact).abs();
    let sigma = (exact * (1.0 - exact) / est.replicates as f64).sqrt();
    let sigma_distance = if sigma > 0.0 {
        abs_error / sigma
    } else if abs_error == 0.0 {
        0.0
    } else {
        f64::INFINITY
    };
    Ok(OracleCheck { exact, abs_error, sigma, sigma_distance })
}

pub fn simulate(cfg: &RunConfig, opts: &RunOptions) -> Result<Vec<PathBuf>, CliError> {
    let model = cfg.checked_model()?;
    let (a, x, n) = (cfg.a()?, cfg.x()?, cfg.n()?);
    let (replicates, seed, cap) = (cfg.replicates()?, cfg.seed()?, cfg.population_cap());
    let estimate = estimate_upper_dev(&model, a, x, n, replicates, seed, cap).map_err(sim_error)?;
    let oracle = if opts.oracle_check { Some(oracle_check(&model, &estimate)?) } else { None };
    let out = SimulateOutput { estimate, oracle };

    let mut paths = vec![match opts.format.unwrap_or(Format::Json) {
        Format::Json => write_json(&opts.out_dir, "estimate.json", "simulate", cfg, &out)?,
        Format::Csv => {
            let e = &out.estimate;
            let mut pairs = vec![
                ("p_hat", fmt_f64(e.p_hat)),
                ("replicates", e.replicates.to_string()),
                ("successes", e.successes.to_string()),
                ("ci95_lower", fmt_f64(e.ci95.0)),
                ("ci95_upper", fmt_f64(e.ci95.1)),
                ("std_error", fmt_f64(e.std_error)),
                ("capped", e.capped.to_string()),
                ("capped_flag", e.capped_flag.to_string()),
                ("seed", e.seed.to_string()),
                ("n", e.n.to_string()),
                ("a", fmt_f64(e.a)),
                ("x", fmt_f64(e.x)),
                ("level", fmt_f64(e.level)),
                ("threshold", e.threshold.to_string()),
            ];
            if let Some(o) = &out.oracle {
                pairs.push(("oracle_exact", fmt_f64(o.exact)));
                pairs.push(("oracle_abs_error", fmt_f64(o.abs_error)));
                pairs.push(("oracle_sigma", fmt_f64(o.sigma)));
                pairs.push(("oracle_sigma_distance", fmt_f64(o.sigma_distance)));
            }
            key_value_table(&pairs).write(&opts.out_dir, "estimate.csv", "simulate", cfg)?
        }
    }];

    if cfg.replicates_csv() {
        let threshold = count_threshold(a, n);
        let mut t = Table::new(&["replicate", "n", "count_at_level", "max_position", "population", "capped", "success"]);
        for r in run_replicates(&model, n, x * n as f64, replicates, seed, cap) {
            t.push(vec![
                r.replicate.to_string(),
                r.n.to_string(),
                r.count_at_level.to_string(),
                fmt_f64(r.max_position),
                r.population.to_string(),
                r.capped.to_string(),
                (!r.capped && r.count_at_level >= threshold).to_string(),
            ]);
        }
        paths.push(t.write(&opts.out_dir, "replicates.csv", "simulate", cfg)?);
    }

    if out.estimate.capped_flag {
        return Err(CliError::CapBreach { capped: out.estimate.capped, requested: replicates, cap });
    }
    Ok(paths)
}

// ---------------------------------------------------------------------------
// pmf

#[derive(Debug, Clone, Serialize)]
pub struct PmfOutput {
    pub n: u32,
    pub level: f64,
    pub mean: f64,
    pub pmf: Vec<f64>,
}

/// Exact law of `Z_n[xn, ∞)` for a lattice model.
pub fn pmf(cfg: &RunConfig, opts: &RunOptions) -> Result<Vec<PathBuf>, CliError> {
    let model = cfg.checked_model()?;
    let (x, n) = (cfg.x()?, cfg.n()?);
    let dist = exact_level_dist(&model, n, x * n as f64).map_err(|e| match e {
        brw_core::oracle::OracleError::Unsupported(reason) => {
            CliError::Config(ConfigError::Invalid { field: "model", reason })
        }
        other => CliError::Compute(other.to_string()),
    })?;
    let out = PmfOutput { n, level: dist.level, mean: dist.mean(), pmf: dist.pmf.clone() };
    let path = match opts.format.unwrap_or(Format::Csv) {
        Format::Json => write_json(&opts.out_dir, "pmf.json", "pmf", cfg, &out)?,
        Format::Csv => {
            let mut t = Table::new(&["count", "probability", "tail"]);
            for (k, p) in dist.pmf.iter().enumerate() {
                t.push(vec![k.to_string(), fmt_f64(*p), fmt_f64(dist.tail(k as u64))]);
            }
            t.write(&opts.out_dir, "pmf.csv", "pmf", cfg)?
        }
    };
    Ok(vec![path])
}

/// Dispatches by subcommand name.
pub fn run(command: &str, cfg: &RunConfig, opts: &RunOptions) -> Result<Vec<PathBuf>, CliError> {
    std::fs::create_dir_all(Path::new(&opts.out_dir))?;
    match command {
        "classify" => classify(cfg, opts),
        "rate" => rate(cfg, opts),
        "simulate" => simulate(cfg, opts),
        "pmf" => pmf(cfg, opts),
        other => Err(CliError::Compute(format!("unknown command {other}"))),
    }
}
