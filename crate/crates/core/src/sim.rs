//! Monte Carlo simulation of the branching random walk.
//!
//! Every replicate draws from its own ChaCha8 stream, selected by
//! `(seed, replicate index)`, so results do not depend on how replicates are
//! scheduled across threads. Reductions are integer sums or ordered folds and
//! are therefore bit-reproducible.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::deviation::{strategy_log_prob, DeviationError, Strategy};
use crate::model::{CheckedModel, ConditionedStep, ModelError};
use crate::{at_or_above, count_threshold};

/// Default bound on the number of particles alive in one generation.
pub const DEFAULT_POPULATION_CAP: usize = 10_000_000;
/// Estimates are flagged when more than this fraction of replicates hit the cap.
pub const CAPPED_FLAG_FRACTION: f64 = 1e-3;
/// Two-sided 95% normal quantile.
const Z95: f64 = 1.959_963_984_540_054;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("population {size} exceeds the cap {cap} at generation {generation}")]
    PopulationCapExceeded { generation: u32, size: usize, cap: usize },
    #[error("invalid simulation input: {0}")]
    InvalidInput(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Deviation(#[from] DeviationError),
}

/// RNG for replicate `index` under `seed`.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Positions of all particles of one generation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GenerationSnapshot {
    pub index: u32,
    pub positions: Vec<f64>,
}

impl GenerationSnapshot {
    /// Generation 0: one particle at the origin.
    pub fn initial() -> Self {
        GenerationSnapshot { index: 0, positions: vec![0.0] }
    }

    pub fn population(&self) -> usize {
        self.positions.len()
    }

    /// Rightmost position `M_n`.
    pub fn max_position(&self) -> f64 {
        self.positions.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// `Z_n[y, ∞)`.
    pub fn level_count(&self, y: f64) -> u64 {
        level_count(&self.positions, y)
    }
}

/// Number of positions in `[y, ∞)`.
pub fn level_count(positions: &[f64], y: f64) -> u64 {
    positions.iter().filter(|&&p| at_or_above(p, y)).count() as u64
}

/// Replaces `current` by its children, each displaced by a fresh step.
fn branch<R: Rng + ?Sized>(
    model: &CheckedModel,
    current: &[f64],
    next: &mut Vec<f64>,
    generation: u32,
    cap: usize,
    rng: &mut R,
) -> Result<(), SimError> {
    next.clear();
    for &p in current {
        let k = model.offspring.sample(rng) as usize;
        if next.len() + k > cap {
            return Err(SimError::PopulationCapExceeded { generation, size: next.len() + k, cap });
        }
        for _ in 0..k {
            next.push(p + model.step.sample(rng));
        }
    }
    Ok(())
}

/// Advances `snapshot` by `generations` free generations.
pub fn evolve_from<R: Rng + ?Sized>(
    model: &CheckedModel,
    snapshot: GenerationSnapshot,
    generations: u32,
    cap: usize,
    rng: &mut R,
) -> Result<GenerationSnapshot, SimError> {
    let GenerationSnapshot { index, mut positions } = snapshot;
    let mut next = Vec::with_capacity(positions.len() * 2);
    for g in 1..=generations {
        branch(model, &positions, &mut next, index + g, cap, rng)?;
        std::mem::swap(&mut positions, &mut next);
    }
    Ok(GenerationSnapshot { index: index + generations, positions })
}

/// Generation `n` of a process started from one particle at 0, using
/// stream 0 of `seed`.
pub fn evolve(model: &CheckedModel, seed: u64, n: u32, cap: usize) -> Result<GenerationSnapshot, SimError> {
    let mut rng = replicate_rng(seed, 0);
    evolve_from(model, GenerationSnapshot::initial(), n, cap, &mut rng)
}

/// Outcome of one replicate at horizon `n`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub replicate: u64,
    pub n: u32,
    pub count_at_level: u64,
    pub max_position: f64,
    pub population: u64,
    pub capped: bool,
}

fn run_one(model: &CheckedModel, seed: u64, index: u64, n: u32, level: f64, cap: usize) -> ReplicateRecord {
    let mut rng = replicate_rng(seed, index);
    match evolve_from(model, GenerationSnapshot::initial(), n, cap, &mut rng) {
        Ok(s) => ReplicateRecord {
            replicate: index,
            n,
            count_at_level: s.level_count(level),
            max_position: s.max_position(),
            population: s.population() as u64,
            capped: false,
        },
        Err(_) => ReplicateRecord {
            replicate: index,
            n,
            count_at_level: 0,
            max_position: f64::NAN,
            population: 0,
            capped: true,
        },
    }
}

/// Per-replicate records for level `level` at horizon `n`, in replicate order.
pub fn run_replicates(
    model: &CheckedModel,
    n: u32,
    level: f64,
    replicates: u64,
    seed: u64,
    cap: usize,
) -> Vec<ReplicateRecord> {
    (0..replicates)
        .into_par_iter()
        .map(|i| run_one(model, seed, i, n, level, cap))
        .collect()
}

/// Wilson score interval at 95% for `k` successes out of `n`.
pub fn wilson_interval(k: u64, n: u64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = Z95 * Z95;
    let denom = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / denom;
    let half = Z95 * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / denom;
    let lo = if k == 0 { 0.0 } else { (centre - half).max(0.0) };
    let hi = if k == n { 1.0 } else { (centre + half).min(1.0) };
    (lo, hi)
}

/// Monte Carlo estimate of `P(Z_n[xn, ∞) >= ⌈e^{an}⌉)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SimEstimate {
    /// `successes / replicates`.
    pub p_hat: f64,
    /// Replicates that completed below the population cap.
    pub replicates: u64,
    pub successes: u64,
    pub ci95: (f64, f64),
    /// Binomial standard error `sqrt(p(1-p)/replicates)`.
    pub std_error: f64,
    /// Replicates abandoned at the population cap (excluded from `p_hat`).
    pub capped: u64,
    /// More than 0.1% of the requested replicates were capped.
    pub capped_flag: bool,
    pub seed: u64,
    pub n: u32,
    pub a: f64,
    pub x: f64,
    pub level: f64,
    pub threshold: u64,
}

/// Success/capped counts for the event `Z_n[level, ∞) >= threshold`.
pub fn count_successes(
    model: &CheckedModel,
    n: u32,
    level: f64,
    threshold: u64,
    replicates: u64,
    seed: u64,
    cap: usize,
) -> (u64, u64) {
    (0..replicates)
        .into_par_iter()
        .map(|i| {
            let r = run_one(model, seed, i, n, level, cap);
            if r.capped {
                (0u64, 1u64)
            } else {
                ((r.count_at_level >= threshold) as u64, 0)
            }
        })
        .reduce(|| (0, 0), |p, q| (p.0 + q.0, p.1 + q.1))
}

fn summarise(successes: u64, capped: u64, requested: u64) -> (f64, (f64, f64), f64, bool) {
    let done = requested - capped;
    let p = if done > 0 { successes as f64 / done as f64 } else { f64::NAN };
    let se = if done > 0 { (p * (1.0 - p) / done as f64).sqrt() } else { f64::NAN };
    let flag = capped as f64 > CAPPED_FLAG_FRACTION * requested as f64;
    (p, wilson_interval(successes, done), se, flag)
}

/// Estimate with an explicit level and integer threshold.
#[allow(clippy::too_many_arguments)]
pub fn estimate_event(
    model: &CheckedModel,
    n: u32,
    level: f64,
    threshold: u64,
    replicates: u64,
    seed: u64,
    cap: usize,
) -> Result<SimEstimate, SimError> {
    if replicates == 0 {
        return Err(SimError::InvalidInput("replicates must be at least 1".into()));
    }
    let (successes, capped) = count_successes(model, n, level, threshold, replicates, seed, cap);
    let (p_hat, ci95, std_error, capped_flag) = summarise(successes, capped, replicates);
    Ok(SimEstimate {
        p_hat,
        replicates: replicates - capped,
        successes,
        ci95,
        std_error,
        capped,
        capped_flag,
        seed,
        n,
        a: if n > 0 { (threshold as f64).ln() / n as f64 } else { 0.0 },
        x: if n > 0 { level / n as f64 } else { level },
        level,
        threshold,
    })
}

/// Monte Carlo estimate of `P(Z_n[xn, ∞) >= e^{an})`.
pub fn estimate_upper_dev(
    model: &CheckedModel,
    a: f64,
    x: f64,
    n: u32,
    replicates: u64,
    seed: u64,
    cap: usize,
) -> Result<SimEstimate, SimError> {
    let level = x * n as f64;
    let mut est = estimate_event(model, n, level, count_threshold(a, n), replicates, seed, cap)?;
    est.a = a;
    est.x = x;
    Ok(est)
}

/// Sample statistics of `(1/n) log Z_n[xn, ∞)` over replicates with a
/// non-empty level set.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GrowthSummary {
    pub mean: f64,
    pub std_dev: f64,
    pub std_error: f64,
    /// Replicates with `Z_n[xn, ∞) > 0`.
    pub nonzero: u64,
    /// Replicates with an empty level set.
    pub zero_count: u64,
    pub capped: u64,
    pub n: u32,
    pub x: f64,
    pub seed: u64,
}

pub fn empirical_growth(
    model: &CheckedModel,
    x: f64,
    n: u32,
    replicates: u64,
    seed: u64,
    cap: usize,
) -> Result<GrowthSummary, SimError> {
    if n == 0 || replicates == 0 {
        return Err(SimError::InvalidInput("need n >= 1 and replicates >= 1".into()));
    }
    let recs = run_replicates(model, n, x * n as f64, replicates, seed, cap);
    let capped = recs.iter().filter(|r| r.capped).count() as u64;
    let logs: Vec<f64> = recs
        .iter()
        .filter(|r| !r.capped && r.count_at_level > 0)
        .map(|r| (r.count_at_level as f64).ln() / n as f64)
        .collect();
    let k = logs.len() as f64;
    let mean = logs.iter().sum::<f64>() / k;
    let var = logs.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
    Ok(GrowthSummary {
        mean,
        std_dev: var.sqrt(),
        std_error: (var / k).sqrt(),
        nonzero: logs.len() as u64,
        zero_count: replicates - capped - logs.len() as u64,
        capped,
        n,
        x,
        seed,
    })
}

/// Sample mean and standard error of `W_n = |Z_n| m^{-n}`.
pub fn martingale_mean(model: &CheckedModel, n: u32, replicates: u64, seed: u64, cap: usize) -> (f64, f64) {
    let scale = model.mean.powi(-(n as i32));
    let w: Vec<f64> = run_replicates(model, n, f64::NEG_INFINITY, replicates, seed, cap)
        .into_iter()
        .filter(|r| !r.capped)
        .map(|r| r.population as f64 * scale)
        .collect();
    let k = w.len() as f64;
    let mean = w.iter().sum::<f64>() / k;
    let var = w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0);
    (mean, (var / k).sqrt())
}

// ---------------------------------------------------------------------------
// Strategy samplers

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RunStrategy {
    /// Force `b`-ary splitting with steps `>= L - eta` for `horizon`
    /// generations, then evolve freely.
    BAry { horizon: u32, eta: f64 },
    /// Evolve freely; require `M_t >= (1 + eps) y n` at `t = ⌈s n⌉`.
    MaxBoost { s: f64, y: f64, eps: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ConditionedOutcome {
    pub success: bool,
    /// Exact log-probability of the forced prefix (0 when nothing is forced).
    pub forced_log_weight: f64,
    /// `log(-log)` of the same probability.
    pub forced_log_neg_log_weight: f64,
    /// Whether the maximum reached its target (always true for `BAry`).
    pub stage_reached: bool,
    pub count_at_level: u64,
    pub capped: bool,
}

/// Prepared sampler for one strategy and horizon.
#[derive(Debug, Clone)]
pub struct StrategyRunner<'m> {
    model: &'m CheckedModel,
    strategy: RunStrategy,
    n: u32,
    level: f64,
    threshold: u64,
    conditioned: Option<ConditionedStep>,
    log_weight: f64,
    log_neg_log_weight: f64,
    cap: usize,
}

impl<'m> StrategyRunner<'m> {
    pub fn new(
        model: &'m CheckedModel,
        strategy: RunStrategy,
        a: f64,
        x: f64,
        n: u32,
        cap: usize,
    ) -> Result<Self, SimError> {
        let (conditioned, log_weight, log_neg_log_weight) = match strategy {
            RunStrategy::BAry { horizon, eta } => {
                if horizon > n {
                    return Err(SimError::InvalidInput(format!("horizon {horizon} exceeds n = {n}")));
                }
                let w = strategy_log_prob(model, Strategy::BAry { horizon, eta })?;
                let l = model.ess_sup.expect_finite("L checked by the weight");
                (Some(model.step.conditioned(l - eta)?), w.log_prob, w.log_neg_log_prob)
            }
            RunStrategy::MaxBoost { s, eps, .. } => {
                if !(s > 0.0 && s <= 1.0 && eps >= 0.0) {
                    return Err(SimError::InvalidInput(format!("need s in (0, 1], eps >= 0 (s = {s}, eps = {eps})")));
                }
                (None, 0.0, f64::NEG_INFINITY)
            }
        };
        Ok(StrategyRunner {
            model,
            strategy,
            n,
            level: x * n as f64,
            threshold: count_threshold(a, n),
            conditioned,
            log_weight,
            log_neg_log_weight,
            cap,
        })
    }

    /// `t = ⌈s n⌉` for `MaxBoost`.
    pub fn boost_time(&self) -> Option<u32> {
        match self.strategy {
            RunStrategy::MaxBoost { s, .. } => Some(((s * self.n as f64).ceil() as u32).min(self.n)),
            RunStrategy::BAry { .. } => None,
        }
    }

    fn forced_prefix<R: Rng + ?Sized>(&self, horizon: u32, rng: &mut R) -> Result<GenerationSnapshot, SimError> {
        let b = self.model.b as usize;
        let cond = self.conditioned.as_ref().expect("B_ARY has a conditioned step");
        let mut positions = vec![0.0];
        for g in 1..=horizon {
            let size = positions.len() * b;
            if size > self.cap {
                return Err(SimError::PopulationCapExceeded { generation: g, size, cap: self.cap });
            }
            let mut next = Vec::with_capacity(size);
            for &p in &positions {
                for _ in 0..b {
                    next.push(p + cond.sample(rng));
                }
            }
            positions = next;
        }
        Ok(GenerationSnapshot { index: horizon, positions })
    }

    fn attempt<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<(bool, bool, u64), SimError> {
        match self.strategy {
            RunStrategy::BAry { horizon, .. } => {
                let s = self.forced_prefix(horizon, rng)?;
                let s = evolve_from(self.model, s, self.n - horizon, self.cap, rng)?;
                let c = s.level_count(self.level);
                Ok((c >= self.threshold, true, c))
            }
            RunStrategy::MaxBoost { y, eps, .. } => {
                let t = self.boost_time().unwrap();
                let s = evolve_from(self.model, GenerationSnapshot::initial(), t, self.cap, rng)?;
                let reached = s.max_position() >= (1.0 + eps) * y * self.n as f64;
                let s = evolve_from(self.model, s, self.n - t, self.cap, rng)?;
                let c = s.level_count(self.level);
                Ok((reached && c >= self.threshold, reached, c))
            }
        }
    }

    /// One replicate on stream `index` of `seed`.
    pub fn run(&self, seed: u64, index: u64) -> ConditionedOutcome {
        let mut rng = replicate_rng(seed, index);
        let (success, stage_reached, count_at_level, capped) = match self.attempt(&mut rng) {
            Ok((s, r, c)) => (s, r, c, false),
            Err(_) => (false, false, 0, true),
        };
        ConditionedOutcome {
            success,
            forced_log_weight: self.log_weight,
            forced_log_neg_log_weight: self.log_neg_log_weight,
            stage_reached,
            count_at_level,
            capped,
        }
    }

    /// Aggregate over `replicates` runs.
    pub fn estimate(&self, replicates: u64, seed: u64) -> StrategyEstimate {
        let (successes, reached, capped) = (0..replicates)
            .into_par_iter()
            .map(|i| {
                let o = self.run(seed, i);
                (o.success as u64, o.stage_reached as u64, o.capped as u64)
            })
            .reduce(|| (0, 0, 0), |p, q| (p.0 + q.0, p.1 + q.1, p.2 + q.2));
        let done = replicates - capped;
        let freq = successes as f64 / done as f64;
        let log_lb = self.log_weight + freq.ln();
        StrategyEstimate {
            replicates: done,
            successes,
            stage_reached: reached,
            capped,
            success_frequency: freq,
            ci95: wilson_interval(successes, done),
            forced_log_weight: self.log_weight,
            forced_log_neg_log_weight: self.log_neg_log_weight,
            log_lower_bound: log_lb,
            seed,
            n: self.n,
            threshold: self.threshold,
            level: self.level,
        }
    }

    /// Frequency with which one particle placed at `(1+eps) y n` at time
    /// `⌈sn⌉` produces `⌈e^{an}⌉` descendants above `xn` at time `n`.
    pub fn post_stage_frequency(&self, replicates: u64, seed: u64) -> Result<f64, SimError> {
        let RunStrategy::MaxBoost { y, eps, .. } = self.strategy else {
            return Err(SimError::InvalidInput("post-stage frequency needs MAX_BOOST".into()));
        };
        let t = self.boost_time().unwrap();
        let start = (1.0 + eps) * y * self.n as f64;
        let hits: u64 = (0..replicates)
            .into_par_iter()
            .map(|i| {
                let mut rng = replicate_rng(seed, i);
                let s0 = GenerationSnapshot { index: t, positions: vec![start] };
                match evolve_from(self.model, s0, self.n - t, self.cap, &mut rng) {
                    Ok(s) => (s.level_count(self.level) >= self.threshold) as u64,
                    Err(_) => 0,
                }
            })
            .sum();
        Ok(hits as f64 / replicates as f64)
    }
}

/// One conditioned replicate.
#[allow(clippy::too_many_arguments)]
pub fn conditioned_run(
    model: &CheckedModel,
    strategy: RunStrategy,
    a: f64,
    x: f64,
    n: u32,
    seed: u64,
    index: u64,
    cap: usize,
) -> Result<ConditionedOutcome, SimError> {
    Ok(StrategyRunner::new(model, strategy, a, x, n, cap)?.run(seed, index))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StrategyEstimate {
    pub replicates: u64,
    pub successes: u64,
    pub stage_reached: u64,
    pub capped: u64,
    pub success_frequency: f64,
    pub ci95: (f64, f64),
    pub forced_log_weight: f64,
    pub forced_log_neg_log_weight: f64,
    /// `forced_log_weight + log(success_frequency)`.
    pub log_lower_bound: f64,
    pub seed: u64,
    pub n: u32,
    pub threshold: u64,
    pub level: f64,
}
