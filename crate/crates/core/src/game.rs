//! Two-level Stackelberg game between the platform (leader, picks the total
//! charging power `P_c`) and the workers (followers, pick transmission rates).
//!
//! The followers' rate-determination game is solved by Gauss–Seidel
//! best-response sweeps; the leader's scalar problem by a uniform grid
//! followed by golden-section refinement around the best grid point.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{self, Instance, RadioParams, WorkerProfile};

/// Relative tolerance of the fixed-point check run on every returned
/// equilibrium.
pub const FIXED_POINT_TOL: f64 = 1e-6;

const MAX_BRACKET_DOUBLINGS: i32 = 60;
const MAX_ROOT_ITERS: usize = 400;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Stop sweeping once the sup-norm change relative to the largest rate
    /// drops below this.
    pub br_tolerance: f64,
    pub br_max_iters: usize,
    /// Absolute first-order residual accepted from a best response
    /// (W per bit/s).
    pub foc_tolerance: f64,
    pub pc_grid_points: usize,
    /// `None` derives a bound from the instance beyond which the platform
    /// utility is provably negative.
    pub pc_upper_bound: Option<f64>,
    pub refine_iters: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            br_tolerance: 1e-9,
            br_max_iters: 10_000,
            foc_tolerance: 1e-10,
            pc_grid_points: 200,
            pc_upper_bound: None,
            refine_iters: 60,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("{name} must be > 0, got {v}")))
            }
        };
        positive("br_tolerance", self.br_tolerance)?;
        positive("foc_tolerance", self.foc_tolerance)?;
        if let Some(ub) = self.pc_upper_bound {
            positive("pc_upper_bound", ub)?;
        }
        if self.br_max_iters == 0 {
            return Err(Error::invalid("br_max_iters", "br_max_iters must be > 0"));
        }
        if self.pc_grid_points < 3 {
            return Err(Error::invalid(
                "pc_grid_points",
                "pc_grid_points must be >= 3",
            ));
        }
        if self.refine_iters == 0 {
            return Err(Error::invalid("refine_iters", "refine_iters must be > 0"));
        }
        Ok(())
    }
}

/// Stackelberg outcome `(P̃_c, r̃)` with everything derived from it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EquilibriumResult {
    pub pc_star: f64,
    pub rates: Vec<f64>,
    pub charging_powers: Vec<f64>,
    pub platform_utility: f64,
    pub worker_utilities: Vec<f64>,
    /// Best-response sweeps spent on the equilibrium at `pc_star`.
    pub iterations_used: usize,
    pub converged: bool,
}

impl EquilibriumResult {
    /// Fills in charging powers and utilities for a rate profile.
    pub fn from_rates(pc: f64, rates: Vec<f64>, inst: &Instance, sweeps: usize) -> Self {
        let charging_powers = model::charging_shares(&rates)
            .into_iter()
            .map(|s| s * pc)
            .collect();
        let worker_utilities = (0..rates.len())
            .map(|i| model::task_phase_worker_utility(i, &rates, pc, inst))
            .collect();
        Self {
            pc_star: pc,
            platform_utility: model::task_phase_platform_utility(pc, &rates, inst),
            charging_powers,
            worker_utilities,
            iterations_used: sweeps,
            converged: true,
            rates,
        }
    }

    pub fn total_rate(&self) -> f64 {
        self.rates.iter().sum()
    }

    /// Workers with `r̃_i > threshold`.
    pub fn employed(&self, threshold: f64) -> usize {
        self.rates.iter().filter(|r| **r > threshold).count()
    }
}

/// Per-worker cost coefficients of the task-phase utility.
#[derive(Debug, Clone, Copy)]
struct CostTerms {
    /// `D^α ln2 / (g B)`: slope of the transmit power at `r = 0`.
    tx_slope: f64,
    /// `ln2 / B`.
    growth: f64,
    sensing: f64,
}

impl CostTerms {
    fn new(w: &WorkerProfile, radio: &RadioParams) -> Self {
        let growth = LN_2 / radio.bandwidth;
        Self {
            tx_slope: radio.path_loss(w.worst_case_distance) * growth / radio.cnr,
            growth,
            sensing: w.sensing_cost,
        }
    }

    /// Marginal cost of one more bit/s at rate `r`.
    #[inline]
    fn marginal(&self, r: f64) -> f64 {
        self.tx_slope * (self.growth * r).exp() + self.sensing
    }

    #[inline]
    fn marginal_slope(&self, r: f64) -> f64 {
        self.tx_slope * self.growth * (self.growth * r).exp()
    }

    /// `∂ū_i/∂r_i` given the others' total `others`.
    #[inline]
    fn foc(&self, r: f64, others: f64, pc: f64) -> f64 {
        reward_slope(r, others, pc) - self.marginal(r)
    }

    #[inline]
    fn foc_slope(&self, r: f64, others: f64, pc: f64) -> f64 {
        let total = others + r;
        let reward = if others > 0.0 {
            -2.0 * pc * others / (total * total * total)
        } else {
            0.0
        };
        reward - self.marginal_slope(r)
    }
}

/// Slope of the proportional charging reward `P_c r / (S + r)` in `r`.
/// With nobody else transmitting the reward is flat and the slope is zero.
#[inline]
fn reward_slope(r: f64, others: f64, pc: f64) -> f64 {
    if others > 0.0 {
        let total = others + r;
        pc * others / (total * total)
    } else {
        0.0
    }
}

fn others_total(i: usize, rates: &[f64]) -> f64 {
    rates
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != i)
        .map(|(_, r)| r)
        .sum()
}

/// First derivative of worker `i`'s task-phase utility in its own rate.
pub fn marginal_utility(i: usize, rates: &[f64], pc: f64, inst: &Instance) -> f64 {
    let c = CostTerms::new(&inst.workers[i], &inst.radio);
    c.foc(rates[i], others_total(i, rates), pc)
}

/// Second derivative of worker `i`'s task-phase utility in its own rate.
/// Strictly negative everywhere.
pub fn second_derivative(i: usize, rates: &[f64], pc: f64, inst: &Instance) -> f64 {
    let c = CostTerms::new(&inst.workers[i], &inst.radio);
    c.foc_slope(rates[i], others_total(i, rates), pc)
}

/// `∂²ū_i / ∂r_i ∂r_j` for `j ≠ i`: `P_c (r_i − S_{-i}) / R³`.
pub fn cross_partial(i: usize, j: usize, rates: &[f64], pc: f64) -> f64 {
    assert_ne!(i, j, "cross_partial needs distinct workers");
    let total: f64 = rates.iter().sum();
    if total <= 0.0 {
        return 0.0;
    }
    let others = total - rates[i];
    pc * (rates[i] - others) / (total * total * total)
}

/// Relative first-order residual of worker `i` at `rates`: the interior
/// condition `|∂ū_i/∂r_i| / marginal cost` when `r_i > 0`, or the positive
/// part of the marginal utility at zero for a worker sitting at the corner.
pub fn foc_residual(i: usize, rates: &[f64], pc: f64, inst: &Instance) -> f64 {
    let c = CostTerms::new(&inst.workers[i], &inst.radio);
    let r = rates[i];
    let f = c.foc(r, others_total(i, rates), pc);
    let scale = c.marginal(r);
    if r > 0.0 {
        f.abs() / scale
    } else {
        f.max(0.0) / scale
    }
}

/// Worker `i`'s utility-maximizing rate against the others in `rates`
/// (its own entry is ignored).
pub fn best_response(
    i: usize,
    rates: &[f64],
    pc: f64,
    inst: &Instance,
    cfg: &SolverConfig,
) -> Result<f64> {
    let c = CostTerms::new(&inst.workers[i], &inst.radio);
    respond(i, &c, others_total(i, rates), pc, inst.radio.bandwidth, cfg)
}

/// Root of the strictly decreasing first-order condition, or the corner at
/// zero. The bracket starts at `[0, B]` and doubles until the sign flips;
/// Newton steps are taken inside the bracket and fall back to bisection.
fn respond(
    worker: usize,
    c: &CostTerms,
    others: f64,
    pc: f64,
    bandwidth: f64,
    cfg: &SolverConfig,
) -> Result<f64> {
    if pc <= 0.0 || others <= 0.0 || c.foc(0.0, others, pc) <= 0.0 {
        return Ok(0.0);
    }
    let mut lo = 0.0;
    let mut hi = bandwidth;
    let limit = bandwidth * 2f64.powi(MAX_BRACKET_DOUBLINGS);
    while c.foc(hi, others, pc) > 0.0 {
        lo = hi;
        hi *= 2.0;
        if hi > limit {
            return Err(Error::BracketOverflow { worker, limit });
        }
    }

    // Linear-cost contest solution; exact when the transmit term is linear.
    let guess = (pc * others / c.marginal(0.0)).sqrt() - others;
    let mut r = if guess > lo && guess < hi {
        guess
    } else {
        0.5 * (lo + hi)
    };
    let mut last_step = hi - lo;
    for _ in 0..MAX_ROOT_ITERS {
        let f = c.foc(r, others, pc);
        if f == 0.0 {
            return Ok(r);
        }
        if f > 0.0 {
            lo = r;
        } else {
            hi = r;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
        let step = f / c.foc_slope(r, others, pc);
        let newton = r - step;
        let next = if newton > lo && newton < hi && step.abs() < 0.5 * last_step {
            last_step = step.abs();
            newton
        } else {
            last_step = hi - lo;
            0.5 * (lo + hi)
        };
        if (next - r).abs() <= 2.0 * f64::EPSILON * r {
            r = next;
            break;
        }
        r = next;
    }
    let residual = c.foc(r, others, pc).abs();
    if residual > cfg.foc_tolerance && hi - lo > 16.0 * f64::EPSILON * hi {
        return Err(Error::NotAnEquilibrium {
            worker,
            residual: residual / c.marginal(r),
        });
    }
    Ok(r)
}

/// Rate profile from which sweeps start when the caller gives none: the
/// symmetric contest equilibrium `P_c (N−1) / (N² c_i)` evaluated per worker.
fn default_start(pc: f64, costs: &[CostTerms]) -> Vec<f64> {
    let n = costs.len() as f64;
    costs
        .iter()
        .map(|c| pc * (n - 1.0) / (n * n * c.marginal(0.0)))
        .collect()
}

/// A converged Nash equilibrium of the rate-determination game.
#[derive(Debug, Clone, PartialEq)]
pub struct NashSolution {
    pub rates: Vec<f64>,
    pub sweeps: usize,
}

/// Nash equilibrium of the followers' game at total charging power `pc`,
/// found by round-robin best-response sweeps.
///
/// A worker that finds every other rate at zero has no maximizer (its reward
/// jumps to `P_c` for any positive rate); it is restarted at the two-player
/// symmetric contest rate `P_c / (4 c_i)` so the sweep can recover. With a
/// single worker the share is constant and the market collapses to zero.
pub fn solve_ne(
    pc: f64,
    inst: &Instance,
    cfg: &SolverConfig,
    initial_rates: Option<&[f64]>,
) -> Result<NashSolution> {
    if !(pc >= 0.0) {
        return Err(Error::Negative {
            what: "total charging power",
            value: pc,
        });
    }
    let n = inst.len();
    if pc == 0.0 || n == 1 {
        return Ok(NashSolution {
            rates: vec![0.0; n],
            sweeps: 0,
        });
    }
    let costs: Vec<CostTerms> = inst
        .workers
        .iter()
        .map(|w| CostTerms::new(w, &inst.radio))
        .collect();
    let mut rates = match initial_rates {
        Some(init) => {
            if init.len() != n {
                return Err(Error::invalid(
                    "initial_rates",
                    format!("expected {n} rates, got {}", init.len()),
                ));
            }
            if let Some(bad) = init.iter().find(|r| !(**r >= 0.0 && r.is_finite())) {
                return Err(Error::Negative {
                    what: "initial rate",
                    value: *bad,
                });
            }
            init.to_vec()
        }
        None => default_start(pc, &costs),
    };
    let bandwidth = inst.radio.bandwidth;

    let mut last_change = f64::INFINITY;
    for sweep in 1..=cfg.br_max_iters {
        let mut total: f64 = rates.iter().sum();
        let mut max_change = 0.0f64;
        for (i, c) in costs.iter().enumerate() {
            let others = (total - rates[i]).max(0.0);
            let next = if others > 0.0 {
                respond(i, c, others, pc, bandwidth, cfg)?
            } else {
                pc / (4.0 * c.marginal(0.0))
            };
            max_change = max_change.max((next - rates[i]).abs());
            total += next - rates[i];
            rates[i] = next;
        }
        let scale = rates.iter().cloned().fold(0.0, f64::max);
        last_change = if scale > 0.0 {
            max_change / scale
        } else {
            f64::INFINITY
        };
        if last_change < cfg.br_tolerance {
            verify_fixed_point(&rates, pc, &costs, bandwidth, cfg)?;
            return Ok(NashSolution {
                rates,
                sweeps: sweep,
            });
        }
    }
    Err(Error::NashNotConverged {
        sweeps: cfg.br_max_iters,
        last_change,
        last_iterate: rates,
    })
}

fn verify_fixed_point(
    rates: &[f64],
    pc: f64,
    costs: &[CostTerms],
    bandwidth: f64,
    cfg: &SolverConfig,
) -> Result<()> {
    let total: f64 = rates.iter().sum();
    let scale = rates.iter().cloned().fold(0.0, f64::max);
    for (i, c) in costs.iter().enumerate() {
        let others = total - rates[i];
        let br = respond(i, c, others, pc, bandwidth, cfg)?;
        let gap = (br - rates[i]).abs() / scale;
        if !(gap < FIXED_POINT_TOL) {
            return Err(Error::NotAnEquilibrium {
                worker: i,
                residual: gap,
            });
        }
    }
    Ok(())
}

/// Upper end of the `P_c` search interval.
///
/// Without an explicit bound this is the positive root of
/// `a1 ln(1 + a2 P / b_min) − P D_min^α κ`. Every worker's equilibrium
/// utility is non-negative, so `P_c ≥ Σ b_i r_i ≥ b_min R`, and every charged
/// worker costs at least `D_min^α κ` per watt; hence the platform utility is
/// below that expression, which is negative past its root.
pub fn pc_search_bound(inst: &Instance, cfg: &SolverConfig) -> f64 {
    if let Some(ub) = cfg.pc_upper_bound {
        return ub;
    }
    let radio = &inst.radio;
    let b_min = inst
        .workers
        .iter()
        .map(|w| w.sensing_cost)
        .fold(f64::INFINITY, f64::min);
    let d_min = inst
        .workers
        .iter()
        .map(|w| w.worst_case_distance)
        .fold(f64::INFINITY, f64::min);
    let unit_cost = radio.path_loss(d_min) * radio.kappa;
    let envelope = |p: f64| radio.a1 * (radio.a2 * p / b_min).ln_1p() - p * unit_cost;
    if radio.a1 * radio.a2 / b_min <= unit_cost {
        return 0.0;
    }
    let mut lo = 0.0;
    let mut hi = radio.a1 / unit_cost;
    while envelope(hi) > 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if envelope(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 4.0 * f64::EPSILON * hi {
            break;
        }
    }
    hi
}

struct LeaderSearch<'a> {
    inst: &'a Instance,
    cfg: &'a SolverConfig,
    best_pc: f64,
    best_value: f64,
    best: NashSolution,
    warm_pc: f64,
    warm: Vec<f64>,
}

impl<'a> LeaderSearch<'a> {
    fn new(inst: &'a Instance, cfg: &'a SolverConfig) -> Self {
        let zeros = vec![0.0; inst.len()];
        Self {
            inst,
            cfg,
            best_pc: 0.0,
            best_value: 0.0,
            best: NashSolution {
                rates: zeros.clone(),
                sweeps: 0,
            },
            warm_pc: 0.0,
            warm: zeros,
        }
    }

    /// Platform utility at `pc`, starting the sweeps from the last
    /// equilibrium rescaled to the new reward (rates are close to linear in
    /// `P_c`).
    fn evaluate(&mut self, pc: f64) -> Result<f64> {
        let start: Option<Vec<f64>> = if self.warm_pc > 0.0 && self.warm.iter().any(|r| *r > 0.0) {
            let scale = pc / self.warm_pc;
            Some(self.warm.iter().map(|r| r * scale).collect())
        } else {
            None
        };
        let ne = solve_ne(pc, self.inst, self.cfg, start.as_deref())?;
        let value = model::task_phase_platform_utility(pc, &ne.rates, self.inst);
        if pc > 0.0 {
            self.warm_pc = pc;
            self.warm.clone_from(&ne.rates);
        }
        if value > self.best_value {
            self.best_value = value;
            self.best_pc = pc;
            self.best = ne;
        }
        Ok(value)
    }
}

/// Maximizes the platform utility over `P_c ≥ 0` with the followers at
/// their Nash equilibrium.
pub fn solve_stackelberg(inst: &Instance, cfg: &SolverConfig) -> Result<EquilibriumResult> {
    cfg.validate()?;
    let bound = pc_search_bound(inst, cfg);
    let mut search = LeaderSearch::new(inst, cfg);
    if bound > 0.0 {
        let points = cfg.pc_grid_points;
        let spacing = bound / (points - 1) as f64;
        let mut best_k = 0;
        for k in 1..points {
            let before = search.best_value;
            search.evaluate(spacing * k as f64)?;
            if search.best_value > before {
                best_k = k;
            }
        }
        if best_k == points - 1 && cfg.pc_upper_bound.is_some() {
            return Err(Error::UpperBoundBinding { bound });
        }
        let a = spacing * best_k.saturating_sub(1) as f64;
        let b = (spacing * (best_k + 1) as f64).min(bound);
        golden_section_max(&mut search, a, b, cfg.refine_iters)?;
    }
    let LeaderSearch { best_pc, best, .. } = search;
    Ok(EquilibriumResult::from_rates(
        best_pc,
        best.rates,
        inst,
        best.sweeps,
    ))
}

/// Golden-section search for a maximum on `[a, b]`; every probe is recorded
/// in `search`, which keeps the best point seen.
fn golden_section_max(
    search: &mut LeaderSearch<'_>,
    mut a: f64,
    mut b: f64,
    iters: usize,
) -> Result<()> {
    const INV_PHI: f64 = 0.618_033_988_749_894_9;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = search.evaluate(c)?;
    let mut fd = search.evaluate(d)?;
    for _ in 0..iters {
        if fc >= fd {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = search.evaluate(c)?;
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = search.evaluate(d)?;
        }
    }
    Ok(())
}
