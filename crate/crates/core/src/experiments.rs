//! Seeded instance generation and the two simulation sweeps: market outcomes
//! against the number of registered workers, and the gap between median and
//! optimal placement against the number of workers and the path-loss
//! exponent.
//!
//! Randomness: every replication draws from its own ChaCha8 stream. The
//! instance seed of replication `k` is the first `u64` of
//! `ChaCha8Rng::seed_from_u64(master)` on stream `k`; the instance is then
//! generated from `ChaCha8Rng::seed_from_u64(instance_seed)`. Workers are
//! drawn in order, so with the same seed a smaller roster is a prefix of a
//! larger one, and the roster does not depend on `α`.

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::deployment::{self, Med, Opt};
use crate::error::{Error, Result};
use crate::game::{self, EquilibriumResult, SolverConfig};
use crate::model::{Instance, Location, RadioParams, Rect, WorkerProfile};

/// Rate above which a worker counts as employed.
pub const EMPLOYED_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub n_values: Vec<usize>,
    pub alpha_values: Vec<f64>,
    pub replications: usize,
    pub base_radio: RadioParams,
    pub task_side: f64,
    /// Sensing cost range `[lo, hi]` in W per bit/s.
    pub b_range: (f64, f64),
    pub seed: u64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let base_radio = RadioParams::default();
        Self {
            n_values: vec![10, 20, 30, 40, 50],
            alpha_values: vec![base_radio.pathloss_alpha],
            replications: 100,
            base_radio,
            task_side: 50.0,
            b_range: (1e-4, 1.5e-4),
            seed: 0,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_values.is_empty() {
            return Err(Error::invalid("n_values", "n_values must be nonempty"));
        }
        if self.n_values.contains(&0) {
            return Err(Error::invalid(
                "n_values",
                "every worker count must be >= 1",
            ));
        }
        if self.alpha_values.is_empty() {
            return Err(Error::invalid(
                "alpha_values",
                "alpha_values must be nonempty",
            ));
        }
        if let Some(a) = self.alpha_values.iter().find(|a| !(**a >= 2.0)) {
            return Err(Error::invalid(
                "alpha_values",
                format!("pathloss_alpha must be ≥ 2, got {a}"),
            ));
        }
        if self.replications == 0 {
            return Err(Error::invalid("replications", "replications must be >= 1"));
        }
        if !(self.task_side.is_finite() && self.task_side > 0.0) {
            return Err(Error::invalid("task_side", "task_side must be > 0"));
        }
        let (lo, hi) = self.b_range;
        if !(lo > 0.0 && lo <= hi && hi.is_finite()) {
            return Err(Error::invalid(
                "b_range",
                format!("need 0 < b_min <= b_max, got [{lo}, {hi}]"),
            ));
        }
        self.base_radio.validate()
    }

    pub fn radio_for(&self, alpha: f64) -> RadioParams {
        RadioParams {
            pathloss_alpha: alpha,
            ..self.base_radio
        }
    }
}

/// Instance seed for replication `rep` under `master`.
pub fn replication_seed(master: u64, rep: usize) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(rep as u64);
    rng.next_u64()
}

/// Instance on the default `[0, 50]²` task area with sensing costs drawn
/// from `[1e-4, 1.5e-4]`.
pub fn generate_instance(n: usize, radio: RadioParams, seed: u64) -> Result<Instance> {
    generate_instance_with(n, radio, 50.0, (1e-4, 1.5e-4), seed)
}

/// Worker `i` gets a square working area of half-width `β_i ~ U[0, side/2]`
/// centred in the task area, a true location uniform in it, and a sensing
/// cost uniform in `b_range`.
pub fn generate_instance_with(
    n: usize,
    radio: RadioParams,
    task_side: f64,
    b_range: (f64, f64),
    seed: u64,
) -> Result<Instance> {
    if n == 0 {
        return Err(Error::Empty("generate_instance"));
    }
    let task = Rect::square(0.0, task_side)?;
    let centre = 0.5 * task_side;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let workers = (0..n)
        .map(|_| {
            let beta = rng.gen_range(0.0..=centre);
            let area = Rect::square(centre - beta, centre + beta)?;
            let loc = Location::new(
                rng.gen_range(area.x_min..=area.x_max),
                rng.gen_range(area.y_min..=area.y_max),
            );
            let b = rng.gen_range(b_range.0..=b_range.1);
            WorkerProfile::new(b, area, loc, &task, radio.height)
        })
        .collect::<Result<Vec<_>>>()?;
    Instance::new(task, radio, workers, seed)
}

/// One replication's numbers; the deployment columns are `None` in the
/// market sweep and when the roster is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub n: usize,
    pub alpha: f64,
    pub seed: u64,
    pub pc_star: f64,
    pub platform_utility: f64,
    pub mean_worker_utility: f64,
    pub employed: usize,
    pub med_utility: Option<f64>,
    pub opt_utility: Option<f64>,
    pub rel_diff: Option<f64>,
    pub prop2_slack: Option<f64>,
    /// Whether the worst-case bound held; `None` when not evaluated.
    pub prop2_holds: Option<bool>,
}

/// Mean and standard error over the replications of one `(n, α)` cell.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub se: f64,
    pub count: usize,
}

impl Estimate {
    pub fn from_samples(values: &[f64]) -> Self {
        let count = values.len();
        if count == 0 {
            return Self {
                mean: f64::NAN,
                se: f64::NAN,
                count,
            };
        }
        let mean = values.iter().sum::<f64>() / count as f64;
        let se = if count > 1 {
            let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (count - 1) as f64;
            (var / count as f64).sqrt()
        } else {
            0.0
        };
        Self { mean, se, count }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub n: usize,
    pub alpha: f64,
    pub pc_star: Estimate,
    pub platform_utility: Estimate,
    pub worker_utility: Estimate,
    pub employed_count: Estimate,
    /// Over replications where the metric is defined; `None` in the market sweep.
    pub med_utility: Option<Estimate>,
    pub opt_utility: Option<Estimate>,
    pub relative_difference: Option<Estimate>,
    pub prop2_slack: Option<Estimate>,
    /// Replications left out of the relative difference (`û_m(OPT) ≤ 0` or
    /// empty roster).
    pub skipped: usize,
    pub prop2_violations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub rows: Vec<SweepRow>,
    pub records: Vec<RawRecord>,
}

impl SweepResult {
    pub fn skipped(&self) -> usize {
        self.rows.iter().map(|r| r.skipped).sum()
    }

    pub fn prop2_violations(&self) -> usize {
        self.rows.iter().map(|r| r.prop2_violations).sum()
    }
}

fn market_record(n: usize, alpha: f64, seed: u64, eq: &EquilibriumResult) -> RawRecord {
    RawRecord {
        n,
        alpha,
        seed,
        pc_star: eq.pc_star,
        platform_utility: eq.platform_utility,
        mean_worker_utility: eq.worker_utilities.iter().sum::<f64>() / n as f64,
        employed: eq.employed(EMPLOYED_THRESHOLD),
        med_utility: None,
        opt_utility: None,
        rel_diff: None,
        prop2_slack: None,
        prop2_holds: None,
    }
}

/// Solves one replication of the market sweep.
pub fn market_replication(
    n: usize,
    alpha: f64,
    seed: u64,
    cfg: &ExperimentConfig,
    solver: &SolverConfig,
) -> Result<RawRecord> {
    let inst = generate_instance_with(n, cfg.radio_for(alpha), cfg.task_side, cfg.b_range, seed)?;
    let eq = game::solve_stackelberg(&inst, solver)?;
    Ok(market_record(n, alpha, seed, &eq))
}

/// Solves one replication of the deployment sweep: equilibrium, then MED and
/// OPT placement and the worst-case bound.
pub fn deployment_replication(
    n: usize,
    alpha: f64,
    seed: u64,
    cfg: &ExperimentConfig,
    solver: &SolverConfig,
) -> Result<RawRecord> {
    let inst = generate_instance_with(n, cfg.radio_for(alpha), cfg.task_side, cfg.b_range, seed)?;
    let eq = game::solve_stackelberg(&inst, solver)?;
    let mut rec = market_record(n, alpha, seed, &eq);
    if eq.total_rate() <= 0.0 {
        return Ok(rec);
    }
    let med = deployment::deploy(&Med, &inst, &eq)?;
    let opt = deployment::deploy(&Opt, &inst, &eq)?;
    let bound = deployment::check_prop2_bound(&inst, &eq)?;
    rec.med_utility = Some(med.platform_utility);
    rec.opt_utility = Some(opt.platform_utility);
    if opt.platform_utility > 0.0 {
        rec.rel_diff = Some((opt.platform_utility - med.platform_utility) / opt.platform_utility);
    }
    rec.prop2_slack = Some(bound.slack);
    rec.prop2_holds = Some(bound.holds);
    Ok(rec)
}

type Replicate = fn(usize, f64, u64, &ExperimentConfig, &SolverConfig) -> Result<RawRecord>;

fn run_sweep(
    cfg: &ExperimentConfig,
    solver: &SolverConfig,
    replicate: Replicate,
    deployed: bool,
) -> Result<SweepResult> {
    cfg.validate()?;
    solver.validate()?;
    let seeds: Vec<u64> = (0..cfg.replications)
        .map(|k| replication_seed(cfg.seed, k))
        .collect();
    let jobs: Vec<(usize, f64, u64)> = cfg
        .n_values
        .iter()
        .flat_map(|n| {
            let seeds = &seeds;
            cfg.alpha_values
                .iter()
                .flat_map(move |a| seeds.iter().map(move |s| (*n, *a, *s)))
        })
        .collect();
    let records: Vec<RawRecord> = jobs
        .par_iter()
        .map(|(n, a, s)| replicate(*n, *a, *s, cfg, solver).map_err(|e| e.with_seed(*s)))
        .collect::<Result<_>>()?;

    let rows = records
        .chunks(cfg.replications)
        .map(|cell| summarize(cell, deployed))
        .collect();
    Ok(SweepResult { rows, records })
}

fn summarize(cell: &[RawRecord], deployed: bool) -> SweepRow {
    let collect = |f: fn(&RawRecord) -> f64| cell.iter().map(f).collect::<Vec<_>>();
    let rel: Vec<f64> = cell.iter().filter_map(|r| r.rel_diff).collect();
    let slack: Vec<f64> = cell.iter().filter_map(|r| r.prop2_slack).collect();
    let med: Vec<f64> = cell.iter().filter_map(|r| r.med_utility).collect();
    let opt: Vec<f64> = cell.iter().filter_map(|r| r.opt_utility).collect();
    SweepRow {
        n: cell[0].n,
        alpha: cell[0].alpha,
        pc_star: Estimate::from_samples(&collect(|r| r.pc_star)),
        platform_utility: Estimate::from_samples(&collect(|r| r.platform_utility)),
        worker_utility: Estimate::from_samples(&collect(|r| r.mean_worker_utility)),
        employed_count: Estimate::from_samples(&collect(|r| r.employed as f64)),
        med_utility: deployed.then(|| Estimate::from_samples(&med)),
        opt_utility: deployed.then(|| Estimate::from_samples(&opt)),
        relative_difference: deployed.then(|| Estimate::from_samples(&rel)),
        prop2_slack: deployed.then(|| Estimate::from_samples(&slack)),
        skipped: if deployed { cell.len() - rel.len() } else { 0 },
        prop2_violations: cell.iter().filter(|r| r.prop2_holds == Some(false)).count(),
    }
}

/// Market outcomes at the Stackelberg equilibrium for each `(n, α)`.
pub fn run_market_sweep(cfg: &ExperimentConfig, solver: &SolverConfig) -> Result<SweepResult> {
    run_sweep(cfg, solver, market_replication, false)
}

/// MED against OPT for each `(n, α)`.
pub fn run_deployment_sweep(cfg: &ExperimentConfig, solver: &SolverConfig) -> Result<SweepResult> {
    let result = run_sweep(cfg, solver, deployment_replication, true)?;
    let skipped = result.skipped();
    if skipped > 0 {
        log::info!("{skipped} replications had no defined relative difference and were skipped");
    }
    Ok(result)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_same_instance() {
        let radio = RadioParams::default();
        let a = generate_instance(12, radio, 99).unwrap();
        let b = generate_instance(12, radio, 99).unwrap();
        assert_eq!(
            serde_json::to_vec(&a).unwrap(),
            serde_json::to_vec(&b).unwrap()
        );
        assert_ne!(a, generate_instance(12, radio, 100).unwrap());
    }

    #[test]
    fn smaller_roster_is_prefix() {
        let radio = RadioParams::default();
        let big = generate_instance(30, radio, 7).unwrap();
        let small = generate_instance(10, radio, 7).unwrap();
        assert_eq!(&big.workers[..10], &small.workers[..]);
    }

    #[test]
    fn generated_workers_respect_ranges() {
        let inst = generate_instance(200, RadioParams::default(), 5).unwrap();
        for w in &inst.workers {
            assert!((1e-4..=1.5e-4).contains(&w.sensing_cost));
            assert!(w.work_area.contains(w.true_location));
            assert!(inst.task_area.contains_rect(&w.work_area));
            let half = 0.5 * (w.work_area.x_max - w.work_area.x_min);
            assert!((w.work_area.x_min - (25.0 - half)).abs() < 1e-12);
            assert!(w.worst_case_distance >= 35.70714214271425 - 1e-9);
            assert!(w.worst_case_distance <= 70.88723439378913 + 1e-9);
        }
    }

    #[test]
    fn replication_seeds_are_distinct() {
        let seeds: Vec<u64> = (0..100).map(|k| replication_seed(42, k)).collect();
        let mut sorted = seeds.clone();
        sorted.sort_unstable();
        sorted.dedup();
        assert_eq!(sorted.len(), seeds.len());
        assert_eq!(replication_seed(42, 3), seeds[3]);
    }

    #[test]
    fn estimate_of_constant_has_zero_se() {
        let e = Estimate::from_samples(&[2.0, 2.0, 2.0]);
        assert_eq!((e.mean, e.se, e.count), (2.0, 0.0, 3));
        let one = Estimate::from_samples(&[5.0]);
        assert_eq!(one.se, 0.0);
    }

    #[test]
    fn config_validation() {
        let mut cfg = ExperimentConfig::default();
        assert!(cfg.validate().is_ok());
        cfg.n_values.clear();
        assert!(cfg.validate().is_err());
        let cfg = ExperimentConfig {
            alpha_values: vec![1.5],
            ..ExperimentConfig::default()
        };
        assert!(cfg.validate().unwrap_err().to_string().contains("≥ 2"));
    }
}
