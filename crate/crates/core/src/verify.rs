//! Property suite run by `wpsc verify`: equilibrium optimality and
//! uniqueness, strategyproofness of the placement mechanism, the worst-case
//! guarantee of the median against the optimum, single-peaked preferences,
//! and dominance of the optimal placement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::ParsedConfig;
use crate::deployment::{self, Med, Opt, StrategyproofnessReport};
use crate::error::Result;
use crate::experiments::{generate_instance_with, replication_seed};
use crate::game::{self, EquilibriumResult};
use crate::model::{self, Instance, Location, Rect};

pub const FOC_TOL: f64 = 1e-6;
pub const UNIQUENESS_TOL: f64 = 1e-6;
/// Manipulation tolerance as a fraction of the liar's placement-dependent cost.
pub const MANIPULATION_TOL: f64 = 1e-9;
/// Allowed shortfall of the optimal placement against the median, relative to φ.
pub const DOMINANCE_TOL: f64 = 1e-9;
pub const SINGLE_PEAK_PAIRS: usize = 100;

pub const PROPERTIES: [&str; 6] = [
    "nash-foc",
    "nash-uniqueness",
    "strategyproofness",
    "worst-case-bound",
    "single-peakedness",
    "opt-dominance",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PropertyResult {
    pub name: &'static str,
    pub checked: usize,
    pub failures: usize,
    /// Largest violation measure seen (property specific; ≤ 0 or below the
    /// tolerance when it holds).
    pub worst: f64,
    pub first_failing_seed: Option<u64>,
    /// What went wrong on the first failing instance.
    pub detail: Option<String>,
}

impl PropertyResult {
    fn new(name: &'static str) -> Self {
        Self {
            name,
            checked: 0,
            failures: 0,
            worst: f64::NEG_INFINITY,
            first_failing_seed: None,
            detail: None,
        }
    }

    pub fn passed(&self) -> bool {
        self.failures == 0
    }

    fn record(&mut self, seed: u64, measure: f64, ok: bool) {
        self.record_with(seed, measure, ok, String::new);
    }

    fn record_with(&mut self, seed: u64, measure: f64, ok: bool, detail: impl FnOnce() -> String) {
        self.checked += 1;
        self.worst = self.worst.max(measure);
        if !ok {
            self.failures += 1;
            if self.first_failing_seed.is_none() {
                self.first_failing_seed = Some(seed);
                self.detail = Some(detail()).filter(|d| !d.is_empty());
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct VerifyReport {
    pub mechanism: String,
    pub instances: usize,
    /// Instances where nobody was employed, so no placement was checked.
    pub empty_rosters: usize,
    pub properties: Vec<PropertyResult>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.properties.iter().all(PropertyResult::passed)
    }

    pub fn first_failure(&self) -> Option<&PropertyResult> {
        self.properties.iter().find(|p| !p.passed())
    }
}

/// Two locations `(near, far)` with `far` at least as far from `peak` as
/// `near` on each axis and on the same side of it, both inside `area`.
pub fn single_peaked_pair<R: Rng>(
    peak: Location,
    area: &Rect,
    rng: &mut R,
) -> (Location, Location) {
    let axis = |p: f64, lo: f64, hi: f64, rng: &mut R| {
        let near = rng.gen_range(lo..=hi);
        let far = if near >= p {
            near + rng.gen::<f64>() * (hi - near)
        } else {
            near - rng.gen::<f64>() * (near - lo)
        };
        (near, far)
    };
    let (nx, fx) = axis(peak.x, area.x_min, area.x_max, rng);
    let (ny, fy) = axis(peak.y, area.y_min, area.y_max, rng);
    (Location::new(nx, ny), Location::new(fx, fy))
}

/// Largest `û_i(far) − û_i(near)` over sampled pairs and employed workers,
/// relative to the worker's transmit power at `near`. Positive values mean
/// a farther placement was preferred.
pub fn single_peak_violation(
    inst: &Instance,
    eq: &EquilibriumResult,
    pairs: usize,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut worst = f64::NEG_INFINITY;
    for (i, w) in inst.workers.iter().enumerate() {
        if eq.rates[i] <= 0.0 {
            continue;
        }
        for _ in 0..pairs {
            let (near, far) = single_peaked_pair(w.true_location, &inst.task_area, &mut rng);
            let d = model::distance(w.true_location, near, inst.radio.height);
            let scale =
                model::tx_power_unchecked(eq.rates[i], inst.radio.path_loss(d), &inst.radio);
            let diff = model::data_phase_worker_utility(i, far, eq, inst)
                - model::data_phase_worker_utility(i, near, eq, inst);
            worst = worst.max(diff / scale);
        }
    }
    worst
}

/// Largest relative gap between the equilibrium rates and the fixed point
/// reached from the all-`B` start.
pub fn uniqueness_gap(
    inst: &Instance,
    eq: &EquilibriumResult,
    cfg: &game::SolverConfig,
) -> Result<f64> {
    let start = vec![inst.radio.bandwidth; inst.len()];
    let other = game::solve_ne(eq.pc_star, inst, cfg, Some(&start))?;
    let scale = eq.rates.iter().cloned().fold(0.0, f64::max);
    if scale <= 0.0 {
        return Ok(other.rates.iter().cloned().fold(0.0, f64::max));
    }
    Ok(eq
        .rates
        .iter()
        .zip(&other.rates)
        .map(|(a, b)| (a - b).abs() / scale)
        .fold(0.0, f64::max))
}

struct InstanceOutcome {
    seed: u64,
    foc: f64,
    uniqueness: f64,
    placement: Option<PlacementChecks>,
}

struct PlacementChecks {
    manipulation: StrategyproofnessReport,
    bound_slack: f64,
    bound_holds: bool,
    single_peak: f64,
    dominance: f64,
}

fn check_instance(cfg: &ParsedConfig, seed: u64, grid: usize) -> Result<InstanceOutcome> {
    let exp = &cfg.experiment;
    let inst = generate_instance_with(cfg.n_workers, cfg.radio, exp.task_side, exp.b_range, seed)?;
    let eq = game::solve_stackelberg(&inst, &cfg.solver)?;
    let foc = (0..inst.len())
        .map(|i| game::foc_residual(i, &eq.rates, eq.pc_star, &inst))
        .fold(0.0, f64::max);
    let uniqueness = uniqueness_gap(&inst, &eq, &cfg.solver)?;
    let placement = if eq.total_rate() > 0.0 {
        let sp = deployment::check_strategyproofness(
            cfg.verify_mechanism.mechanism(),
            &inst,
            &eq,
            grid,
        )?;
        let bound = deployment::check_prop2_bound(&inst, &eq)?;
        let med = deployment::deploy(&Med, &inst, &eq)?;
        let opt = deployment::deploy(&Opt, &inst, &eq)?;
        Some(PlacementChecks {
            manipulation: sp,
            bound_slack: bound.slack / bound.phi.abs().max(f64::MIN_POSITIVE),
            bound_holds: bound.holds,
            single_peak: single_peak_violation(&inst, &eq, SINGLE_PEAK_PAIRS, seed),
            dominance: (med.platform_utility - opt.platform_utility)
                / bound.phi.abs().max(f64::MIN_POSITIVE),
        })
    } else {
        None
    };
    Ok(InstanceOutcome {
        seed,
        foc,
        uniqueness,
        placement,
    })
}

/// Runs every property on `reps` generated instances of `cfg.n_workers`
/// workers with a `grid × grid` misreport lattice.
pub fn run_suite(cfg: &ParsedConfig, reps: usize, grid: usize) -> Result<VerifyReport> {
    let outcomes: Vec<InstanceOutcome> = (0..reps)
        .into_par_iter()
        .map(|k| {
            let seed = replication_seed(cfg.experiment.seed, k);
            check_instance(cfg, seed, grid).map_err(|e| e.with_seed(seed))
        })
        .collect::<Result<_>>()?;

    let mut props: Vec<PropertyResult> =
        PROPERTIES.iter().map(|n| PropertyResult::new(n)).collect();
    let mut empty_rosters = 0;
    for o in &outcomes {
        props[0].record(o.seed, o.foc, o.foc < FOC_TOL);
        props[1].record(o.seed, o.uniqueness, o.uniqueness < UNIQUENESS_TOL);
        let Some(p) = &o.placement else {
            empty_rosters += 1;
            continue;
        };
        let sp = &p.manipulation;
        props[2].record_with(o.seed, sp.max_relative_gain, sp.is_relatively_strategyproof(MANIPULATION_TOL), || {
            format!(
                "worker {} gains {:.3e} W ({:.3e} of its transmit power) by reporting {} under `{}`",
                sp.worker, sp.max_gain, sp.max_relative_gain, sp.misreport, sp.mechanism
            )
        });
        props[3].record(o.seed, -p.bound_slack, p.bound_holds);
        props[4].record(o.seed, p.single_peak, p.single_peak <= MANIPULATION_TOL);
        props[5].record(o.seed, p.dominance, p.dominance <= DOMINANCE_TOL);
    }
    Ok(VerifyReport {
        mechanism: cfg.verify_mechanism.mechanism().name().to_string(),
        instances: outcomes.len(),
        empty_rosters,
        properties: props,
    })
}
