//! Base-station placement in the data-crowdsourcing phase.
//!
//! Workers report locations, a [`Mechanism`] maps the reports to a service
//! location. [`Med`] is the coordinatewise median, [`GeneralizedMedian`] the
//! phantom-augmented family it belongs to, and [`Opt`] the utility-maximizing
//! (but manipulable) placement used as the baseline.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::EquilibriumResult;
use crate::model::{self, Instance, Location, RadioParams, Rect};

/// Projected-gradient stopping rule on the gradient mapping norm.
pub const OPT_GRAD_TOL: f64 = 1e-8;
pub const OPT_MAX_ITERS: usize = 100_000;

/// Relative slack allowed when checking the worst-case bound.
pub const BOUND_SLACK_TOL: f64 = 1e-6;

/// Workers who take part in placement: those with a positive equilibrium
/// rate. Everyone else neither transmits nor gets charged.
#[derive(Debug, Clone, PartialEq)]
pub struct Roster {
    /// Indices into `Instance::workers`.
    pub members: Vec<usize>,
    pub rates: Vec<f64>,
    pub locations: Vec<Location>,
}

impl Roster {
    pub fn from_equilibrium(eq: &EquilibriumResult, inst: &Instance) -> Result<Self> {
        let members: Vec<usize> = (0..inst.len()).filter(|i| eq.rates[*i] > 0.0).collect();
        if members.is_empty() {
            return Err(Error::EmptyRoster);
        }
        let reports: Vec<Location> = members
            .iter()
            .map(|i| inst.workers[*i].true_location)
            .collect();
        Ok(Self {
            rates: members.iter().map(|i| eq.rates[*i]).collect(),
            locations: ingest_reports(&reports, &inst.task_area),
            members,
        })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }
}

/// Clamps reports into the task area, logging each one that had to move.
pub fn ingest_reports(reports: &[Location], area: &Rect) -> Vec<Location> {
    reports
        .iter()
        .enumerate()
        .map(|(k, p)| {
            let c = area.clamp(*p);
            if c != *p {
                log::warn!("report {k} at {p} lies outside the task area; clamped to {c}");
            }
            c
        })
        .collect()
}

/// What a mechanism may look at besides the reports.
#[derive(Debug, Clone, Copy)]
pub struct PlacementContext<'a> {
    pub task_area: Rect,
    pub radio: &'a RadioParams,
    /// Equilibrium rates of the roster, aligned with the reports.
    pub rates: &'a [f64],
}

pub trait Mechanism: Sync {
    fn name(&self) -> &str;
    fn locate(&self, reports: &[Location], ctx: &PlacementContext<'_>) -> Result<Location>;
}

/// Coordinatewise median of the reports.
#[derive(Debug, Clone, Copy, Default)]
pub struct Med;

impl Mechanism for Med {
    fn name(&self) -> &str {
        "med"
    }

    fn locate(&self, reports: &[Location], _ctx: &PlacementContext<'_>) -> Result<Location> {
        med_deploy(reports)
    }
}

/// Median of the reports together with `N + 1` fixed phantom points per
/// axis.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizedMedian {
    pub constants_x: Vec<f64>,
    pub constants_y: Vec<f64>,
}

impl GeneralizedMedian {
    /// Phantoms that reproduce the lower median for `n` reports: ⌈(n+1)/2⌉ at
    /// −∞, the rest at +∞. For odd `n` this is the plain median.
    pub fn lower_median(n: usize) -> Self {
        let low = (n + 2) / 2;
        let mut c = vec![f64::NEG_INFINITY; low];
        c.resize(n + 1, f64::INFINITY);
        Self {
            constants_x: c.clone(),
            constants_y: c,
        }
    }
}

impl Mechanism for GeneralizedMedian {
    fn name(&self) -> &str {
        "generalized-median"
    }

    fn locate(&self, reports: &[Location], _ctx: &PlacementContext<'_>) -> Result<Location> {
        generalized_median_deploy(reports, &self.constants_x, &self.constants_y)
    }
}

/// [`GeneralizedMedian::lower_median`] sized to whatever roster it is given.
#[derive(Debug, Clone, Copy, Default)]
pub struct LowerMedian;

impl Mechanism for LowerMedian {
    fn name(&self) -> &str {
        "lower-median"
    }

    fn locate(&self, reports: &[Location], ctx: &PlacementContext<'_>) -> Result<Location> {
        GeneralizedMedian::lower_median(reports.len()).locate(reports, ctx)
    }
}

/// Placement maximizing the platform utility for the reported locations.
#[derive(Debug, Clone, Copy, Default)]
pub struct Opt;

impl Mechanism for Opt {
    fn name(&self) -> &str {
        "opt"
    }

    fn locate(&self, reports: &[Location], ctx: &PlacementContext<'_>) -> Result<Location> {
        opt_location(reports, ctx.rates, ctx.radio, &ctx.task_area)
    }
}

/// Sorts each axis and takes the middle element, or the mean of the two
/// middle elements when the number of reports is even.
pub fn med_deploy(reports: &[Location]) -> Result<Location> {
    if reports.is_empty() {
        return Err(Error::Empty("med_deploy"));
    }
    let axis_median = |mut v: Vec<f64>| {
        v.sort_by(f64::total_cmp);
        let n = v.len();
        if n % 2 == 1 {
            v[n / 2]
        } else {
            0.5 * (v[n / 2 - 1] + v[n / 2])
        }
    };
    Ok(Location::new(
        axis_median(reports.iter().map(|p| p.x).collect()),
        axis_median(reports.iter().map(|p| p.y).collect()),
    ))
}

pub fn generalized_median_deploy(
    reports: &[Location],
    constants_x: &[f64],
    constants_y: &[f64],
) -> Result<Location> {
    if reports.is_empty() {
        return Err(Error::Empty("generalized_median_deploy"));
    }
    let n = reports.len();
    for c in [constants_x, constants_y] {
        if c.len() != n + 1 {
            return Err(Error::ConstantCount {
                expected: n + 1,
                got: c.len(),
            });
        }
    }
    let axis = |values: Vec<f64>, phantoms: &[f64]| {
        let mut all = values;
        all.extend_from_slice(phantoms);
        all.sort_by(f64::total_cmp);
        all[n]
    };
    Ok(Location::new(
        axis(reports.iter().map(|p| p.x).collect(), constants_x),
        axis(reports.iter().map(|p| p.y).collect(), constants_y),
    ))
}

/// Minimizes `Σ r_i d_i^α` (equivalently maximizes the platform utility)
/// over the task area by projected gradient descent with step halving from 1.
///
/// The start is the unweighted centroid of the reports; for `α = 2` the
/// minimizer is the rate-weighted centroid, which the tests use as an
/// independent check.
pub fn opt_location(
    reports: &[Location],
    rates: &[f64],
    radio: &RadioParams,
    area: &Rect,
) -> Result<Location> {
    if reports.is_empty() {
        return Err(Error::EmptyRoster);
    }
    if reports.len() != rates.len() {
        return Err(Error::invalid(
            "rates",
            format!("{} reports but {} rates", reports.len(), rates.len()),
        ));
    }
    let total: f64 = rates.iter().sum();
    if !(total > 0.0) {
        return Err(Error::EmptyRoster);
    }
    let weights: Vec<f64> = rates.iter().map(|r| r / total).collect();
    let objective = PlacementCost {
        reports,
        weights: &weights,
        half_alpha: 0.5 * radio.pathloss_alpha,
        h_sq: radio.height * radio.height,
    };

    let n = reports.len() as f64;
    let mut p = area.clamp(Location::new(
        reports.iter().map(|q| q.x).sum::<f64>() / n,
        reports.iter().map(|q| q.y).sum::<f64>() / n,
    ));
    let mut grad_norm = f64::INFINITY;
    for _ in 0..OPT_MAX_ITERS {
        let g = objective.gradient(p);
        let mapped = area.clamp(Location::new(p.x - g.x, p.y - g.y));
        grad_norm = (p.x - mapped.x).hypot(p.y - mapped.y);
        if grad_norm < OPT_GRAD_TOL {
            return Ok(p);
        }
        let mut step = 1.0;
        loop {
            let trial = area.clamp(Location::new(p.x - step * g.x, p.y - step * g.y));
            if trial == p {
                // No representable progress left along the gradient.
                return Ok(p);
            }
            let dx = trial.x - p.x;
            let dy = trial.y - p.y;
            let predicted = g.x * dx + g.y * dy + (dx * dx + dy * dy) / (2.0 * step);
            if objective.change(p, trial) <= predicted {
                p = trial;
                break;
            }
            step *= 0.5;
        }
    }
    Err(Error::PlacementNotConverged {
        iterations: OPT_MAX_ITERS,
        grad_norm,
    })
}

struct PlacementCost<'a> {
    reports: &'a [Location],
    weights: &'a [f64],
    half_alpha: f64,
    h_sq: f64,
}

impl PlacementCost<'_> {
    fn sq_dist(&self, p: Location, q: Location) -> f64 {
        let dx = p.x - q.x;
        let dy = p.y - q.y;
        dx * dx + dy * dy + self.h_sq
    }

    /// `F(to) − F(from)`, formed term by term so that small steps near the
    /// optimum are not lost to cancellation.
    fn change(&self, from: Location, to: Location) -> f64 {
        self.reports
            .iter()
            .zip(self.weights)
            .map(|(q, w)| {
                let base = self.sq_dist(from, *q);
                let delta = (to.x - from.x) * (to.x + from.x - 2.0 * q.x)
                    + (to.y - from.y) * (to.y + from.y - 2.0 * q.y);
                w * base.powf(self.half_alpha) * (self.half_alpha * (delta / base).ln_1p()).exp_m1()
            })
            .sum()
    }

    fn gradient(&self, p: Location) -> Location {
        let mut g = Location::new(0.0, 0.0);
        for (q, w) in self.reports.iter().zip(self.weights) {
            let coef = w * 2.0 * self.half_alpha * self.sq_dist(p, *q).powf(self.half_alpha - 1.0);
            g.x += coef * (p.x - q.x);
            g.y += coef * (p.y - q.y);
        }
        g
    }
}

/// Utility-maximizing placement for the truthful roster of `eq`.
pub fn opt_deploy(eq: &EquilibriumResult, inst: &Instance) -> Result<Location> {
    let roster = Roster::from_equilibrium(eq, inst)?;
    opt_location(
        &roster.locations,
        &roster.rates,
        &inst.radio,
        &inst.task_area,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeploymentOutcome {
    pub mechanism_name: String,
    pub service_location: Location,
    pub platform_utility: f64,
    /// Realised utility of every registered worker (zero for the unemployed).
    pub worker_utilities: Vec<f64>,
    /// `a1 ln(1 + a2 Σ r̃_i)`: the platform utility before charging costs.
    pub phi: f64,
}

/// Runs `mechanism` on truthful reports from the employed workers of `eq`.
pub fn deploy(
    mechanism: &dyn Mechanism,
    inst: &Instance,
    eq: &EquilibriumResult,
) -> Result<DeploymentOutcome> {
    let roster = Roster::from_equilibrium(eq, inst)?;
    let ctx = PlacementContext {
        task_area: inst.task_area,
        radio: &inst.radio,
        rates: &roster.rates,
    };
    let loc = mechanism.locate(&roster.locations, &ctx)?;
    Ok(outcome(mechanism.name(), loc, inst, eq))
}

fn outcome(
    name: &str,
    loc: Location,
    inst: &Instance,
    eq: &EquilibriumResult,
) -> DeploymentOutcome {
    DeploymentOutcome {
        mechanism_name: name.to_string(),
        service_location: loc,
        platform_utility: model::data_phase_platform_utility(loc, eq, inst),
        worker_utilities: (0..inst.len())
            .map(|i| model::data_phase_worker_utility(i, loc, eq, inst))
            .collect(),
        phi: model::quality(eq.total_rate(), &inst.radio),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyproofnessReport {
    pub mechanism: String,
    /// Largest utility gain (W) any single worker obtains from a misreport.
    pub max_gain: f64,
    /// Largest gain divided by the gaining worker's transmit power at the
    /// truthful placement. Only the transmit term depends on the placement,
    /// so this is the scale-free size of a manipulation.
    pub max_relative_gain: f64,
    /// Instance index of the worker achieving `max_relative_gain`.
    pub worker: usize,
    pub misreport: Location,
    pub profiles_checked: usize,
}

impl StrategyproofnessReport {
    /// Absolute criterion: no misreport gains more than `tol` watts.
    pub fn is_strategyproof(&self, tol: f64) -> bool {
        self.max_gain <= tol
    }

    /// Scale-free criterion: no misreport gains more than `tol` of the
    /// liar's own placement-dependent cost.
    pub fn is_relatively_strategyproof(&self, tol: f64) -> bool {
        self.max_relative_gain <= tol
    }
}

/// Lattice of `k × k` points spanning `area`, edges included.
pub fn misreport_lattice(area: &Rect, k: usize) -> Vec<Location> {
    let coord = |lo: f64, hi: f64, j: usize| {
        if k == 1 {
            0.5 * (lo + hi)
        } else {
            lo + (hi - lo) * j as f64 / (k - 1) as f64
        }
    };
    (0..k)
        .flat_map(|ix| {
            (0..k).map(move |iy| {
                Location::new(
                    coord(area.x_min, area.x_max, ix),
                    coord(area.y_min, area.y_max, iy),
                )
            })
        })
        .collect()
}

/// For every employed worker and every lattice misreport (plus the truthful
/// location), compares the worker's realised utility under the misreport
/// with its utility under truthful reporting. Returns the largest gain.
pub fn check_strategyproofness(
    mechanism: &dyn Mechanism,
    inst: &Instance,
    eq: &EquilibriumResult,
    grid: usize,
) -> Result<StrategyproofnessReport> {
    if grid < 2 {
        return Err(Error::invalid(
            "misreport_grid",
            "misreport grid must be >= 2",
        ));
    }
    let roster = Roster::from_equilibrium(eq, inst)?;
    let ctx = PlacementContext {
        task_area: inst.task_area,
        radio: &inst.radio,
        rates: &roster.rates,
    };
    let truthful = mechanism.locate(&roster.locations, &ctx)?;
    let lattice = misreport_lattice(&inst.task_area, grid);

    let per_worker: Vec<(f64, f64, Location, usize)> = (0..roster.len())
        .into_par_iter()
        .map(|j| -> Result<(f64, f64, Location, usize)> {
            let i = roster.members[j];
            let honest = model::data_phase_worker_utility(i, truthful, eq, inst);
            let d = model::distance(inst.workers[i].true_location, truthful, inst.radio.height);
            let scale =
                model::tx_power_unchecked(roster.rates[j], inst.radio.path_loss(d), &inst.radio);
            let mut reports = roster.locations.clone();
            let mut best = (f64::NEG_INFINITY, roster.locations[j]);
            let mut checked = 0;
            for lie in std::iter::once(roster.locations[j]).chain(lattice.iter().copied()) {
                reports[j] = lie;
                let loc = mechanism.locate(&reports, &ctx)?;
                let gain = model::data_phase_worker_utility(i, loc, eq, inst) - honest;
                checked += 1;
                if gain > best.0 {
                    best = (gain, lie);
                }
            }
            Ok((best.0, best.0 / scale, best.1, checked))
        })
        .collect::<Result<_>>()?;

    let mut report = StrategyproofnessReport {
        mechanism: mechanism.name().to_string(),
        max_gain: f64::NEG_INFINITY,
        max_relative_gain: f64::NEG_INFINITY,
        worker: roster.members[0],
        misreport: roster.locations[0],
        profiles_checked: 0,
    };
    for (j, (gain, relative, lie, checked)) in per_worker.into_iter().enumerate() {
        report.profiles_checked += checked;
        report.max_gain = report.max_gain.max(gain);
        if relative > report.max_relative_gain {
            report.max_relative_gain = relative;
            report.worker = roster.members[j];
            report.misreport = lie;
        }
    }
    Ok(report)
}

/// Per-instance check of the worst-case guarantee of the median placement
/// against the optimal one.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub med_utility: f64,
    pub opt_utility: f64,
    pub phi: f64,
    pub bound_rhs: f64,
    /// `med_utility − bound_rhs`.
    pub slack: f64,
    pub holds: bool,
}

/// `û_m(MED) ≥ φ − 2^{α/2} N^{α/2−1} (r̃_max / r̃_min) (φ − û_m(OPT))`, with
/// `N` the employed roster.
pub fn check_prop2_bound(inst: &Instance, eq: &EquilibriumResult) -> Result<BoundReport> {
    let roster = Roster::from_equilibrium(eq, inst)?;
    let r_max = roster
        .rates
        .iter()
        .cloned()
        .fold(f64::NEG_INFINITY, f64::max);
    let r_min = roster.rates.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(r_min > 0.0) {
        return Err(Error::EmptyRoster);
    }
    let med = med_deploy(&roster.locations)?;
    let opt = opt_location(
        &roster.locations,
        &roster.rates,
        &inst.radio,
        &inst.task_area,
    )?;
    let med_utility = model::data_phase_platform_utility(med, eq, inst);
    let opt_utility = model::data_phase_platform_utility(opt, eq, inst);
    let phi = model::quality(eq.total_rate(), &inst.radio);

    let half_alpha = 0.5 * inst.radio.pathloss_alpha;
    let n = roster.len() as f64;
    let factor = 2f64.powf(half_alpha) * n.powf(half_alpha - 1.0) * (r_max / r_min);
    let bound_rhs = phi - factor * (phi - opt_utility);
    let slack = med_utility - bound_rhs;
    Ok(BoundReport {
        med_utility,
        opt_utility,
        phi,
        bound_rhs,
        slack,
        holds: slack >= -BOUND_SLACK_TOL * phi.abs(),
    })
}
