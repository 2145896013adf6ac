//! Channel, power-cost and valuation formulas of the wireless-powered
//! crowdsourcing market.
//!
//! Everything here is a pure function over plain value records. All
//! quantities are linear SI: rates in bits/s, powers in watts, distances in
//! meters. Decibel inputs are converted once, when a [`RadioParams`] is built
//! (see [`RadioParams::from_db`]).

use std::f64::consts::LN_2;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::game::EquilibriumResult;

/// A point on the ground plane.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Location {
    pub x: f64,
    pub y: f64,
}

impl Location {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    fn planar_sq(self, other: Location) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        dx * dx + dy * dy
    }
}

impl fmt::Display for Location {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Axis-aligned rectangle, used for both the task area and per-worker
/// working areas.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl Rect {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Result<Self> {
        let all_finite = [x_min, x_max, y_min, y_max].iter().all(|v| v.is_finite());
        if !all_finite || x_min > x_max || y_min > y_max {
            return Err(Error::invalid(
                "rect",
                format!("need finite bounds with min <= max, got x [{x_min}, {x_max}] y [{y_min}, {y_max}]"),
            ));
        }
        Ok(Self {
            x_min,
            x_max,
            y_min,
            y_max,
        })
    }

    /// `[lo, hi]²`.
    pub fn square(lo: f64, hi: f64) -> Result<Self> {
        Self::new(lo, hi, lo, hi)
    }

    pub fn contains(&self, p: Location) -> bool {
        p.x >= self.x_min && p.x <= self.x_max && p.y >= self.y_min && p.y <= self.y_max
    }

    pub fn contains_rect(&self, other: &Rect) -> bool {
        other.x_min >= self.x_min
            && other.x_max <= self.x_max
            && other.y_min >= self.y_min
            && other.y_max <= self.y_max
    }

    pub fn corners(&self) -> [Location; 4] {
        [
            Location::new(self.x_min, self.y_min),
            Location::new(self.x_min, self.y_max),
            Location::new(self.x_max, self.y_min),
            Location::new(self.x_max, self.y_max),
        ]
    }

    pub fn clamp(&self, p: Location) -> Location {
        Location::new(
            p.x.clamp(self.x_min, self.x_max),
            p.y.clamp(self.y_min, self.y_max),
        )
    }

    pub fn center(&self) -> Location {
        Location::new(
            0.5 * (self.x_min + self.x_max),
            0.5 * (self.y_min + self.y_max),
        )
    }
}

impl fmt::Display for Rect {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{}, {}] x [{}, {}]",
            self.x_min, self.x_max, self.y_min, self.y_max
        )
    }
}

/// Channel, wireless-charging and valuation constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadioParams {
    /// Channel bandwidth `B` in Hz.
    pub bandwidth: f64,
    /// Channel gain to noise ratio `g` (linear).
    pub cnr: f64,
    /// Path-loss exponent `α`.
    pub pathloss_alpha: f64,
    /// Base-station height `h` in meters.
    pub height: f64,
    /// `κ = 1 / (η Γ)`.
    pub kappa: f64,
    /// Quality scale `a1`.
    pub a1: f64,
    /// Quality rate sensitivity `a2`.
    pub a2: f64,
}

impl Default for RadioParams {
    /// h = 5 m, g = 90 dB, B = 60 MHz, a1 = 1000, a2 = 200, η = 0.5,
    /// Γ = −30 dB, α = 2.
    fn default() -> Self {
        Self::from_db(6e7, 90.0, 2.0, 5.0, 0.5, -30.0, 1000.0, 200.0)
            .expect("default radio parameters are valid")
    }
}

impl RadioParams {
    #[allow(clippy::too_many_arguments)]
    pub fn from_db(
        bandwidth: f64,
        cnr_db: f64,
        pathloss_alpha: f64,
        height: f64,
        eta: f64,
        gamma_db: f64,
        a1: f64,
        a2: f64,
    ) -> Result<Self> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::invalid(
                "eta",
                format!("eta must be in (0, 1), got {eta}"),
            ));
        }
        let params = Self {
            bandwidth,
            cnr: db_to_linear(cnr_db),
            pathloss_alpha,
            height,
            kappa: 1.0 / (eta * db_to_linear(gamma_db)),
            a1,
            a2,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("{name} must be > 0, got {v}")))
            }
        };
        positive("bandwidth", self.bandwidth)?;
        positive("cnr", self.cnr)?;
        positive("height", self.height)?;
        positive("kappa", self.kappa)?;
        positive("a2", self.a2)?;
        // a1 = 0 is allowed: it models a worthless task and yields an empty market.
        if !(self.a1.is_finite() && self.a1 >= 0.0) {
            return Err(Error::invalid(
                "a1",
                format!("a1 must be >= 0, got {}", self.a1),
            ));
        }
        if !(self.pathloss_alpha.is_finite() && self.pathloss_alpha >= 2.0) {
            return Err(Error::invalid(
                "pathloss_alpha",
                format!("pathloss_alpha must be ≥ 2, got {}", self.pathloss_alpha),
            ));
        }
        Ok(())
    }

    /// `d^α` from a squared distance.
    #[inline]
    pub fn path_loss_sq(&self, dist_sq: f64) -> f64 {
        dist_sq.powf(0.5 * self.pathloss_alpha)
    }

    #[inline]
    pub fn path_loss(&self, dist: f64) -> f64 {
        self.path_loss_sq(dist * dist)
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WorkerProfile {
    /// Sensing energy cost `b_i` per bit/s.
    pub sensing_cost: f64,
    pub work_area: Rect,
    pub true_location: Location,
    /// Worst-case distance `D_i` to any feasible base-station location.
    pub worst_case_distance: f64,
}

impl WorkerProfile {
    /// Builds a profile, computing `D_i` from the two areas.
    pub fn new(
        sensing_cost: f64,
        work_area: Rect,
        true_location: Location,
        task_area: &Rect,
        height: f64,
    ) -> Result<Self> {
        if !(sensing_cost.is_finite() && sensing_cost > 0.0) {
            return Err(Error::invalid(
                "sensing_cost",
                format!("sensing cost must be > 0, got {sensing_cost}"),
            ));
        }
        if !work_area.contains(true_location) {
            return Err(Error::invalid(
                "true_location",
                format!("{true_location} lies outside working area {work_area}"),
            ));
        }
        Ok(Self {
            sensing_cost,
            work_area,
            true_location,
            worst_case_distance: max_distance(&work_area, task_area, height)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Instance {
    pub task_area: Rect,
    pub radio: RadioParams,
    pub workers: Vec<WorkerProfile>,
    pub seed: u64,
}

impl Instance {
    pub fn new(
        task_area: Rect,
        radio: RadioParams,
        workers: Vec<WorkerProfile>,
        seed: u64,
    ) -> Result<Self> {
        radio.validate()?;
        if workers.is_empty() {
            return Err(Error::Empty("instance"));
        }
        for w in &workers {
            if !task_area.contains_rect(&w.work_area) {
                return Err(Error::NotNested {
                    work: w.work_area.to_string(),
                    task: task_area.to_string(),
                });
            }
        }
        Ok(Self {
            task_area,
            radio,
            workers,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.workers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.workers.is_empty()
    }

    /// Same roster, different radio environment. `D_i` depends only on
    /// geometry and height, so it is recomputed when the height changes.
    pub fn with_radio(&self, radio: RadioParams) -> Result<Self> {
        let workers = self
            .workers
            .iter()
            .map(|w| {
                WorkerProfile::new(
                    w.sensing_cost,
                    w.work_area,
                    w.true_location,
                    &self.task_area,
                    radio.height,
                )
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(self.task_area, radio, workers, self.seed)
    }
}

/// Euclidean distance between a worker on the ground and a base station
/// hovering at height `h`.
pub fn distance(worker_loc: Location, bs_loc: Location, h: f64) -> f64 {
    (worker_loc.planar_sq(bs_loc) + h * h).sqrt()
}

/// Largest worker/base-station distance over every worker position in
/// `work_area` and every station position in `task_area`. The distance is
/// convex, so the maximum over a product of rectangles sits on a corner pair.
pub fn max_distance(work_area: &Rect, task_area: &Rect, h: f64) -> Result<f64> {
    if !task_area.contains_rect(work_area) {
        return Err(Error::NotNested {
            work: work_area.to_string(),
            task: task_area.to_string(),
        });
    }
    let mut best = 0.0f64;
    for w in work_area.corners() {
        for t in task_area.corners() {
            best = best.max(distance(w, t, h));
        }
    }
    Ok(best)
}

/// Shannon rate `B log2(1 + P g / d^α)`.
pub fn transmission_rate(tx_power: f64, d: f64, radio: &RadioParams) -> Result<f64> {
    if !(tx_power >= 0.0) {
        return Err(Error::Negative {
            what: "transmission power",
            value: tx_power,
        });
    }
    let snr = tx_power * radio.cnr / radio.path_loss(d);
    Ok(radio.bandwidth * snr.ln_1p() / LN_2)
}

/// Transmit power needed to sustain rate `r` at distance `d`:
/// `(2^{r/B} − 1) d^α / g`.
pub fn transmission_power(rate: f64, d: f64, radio: &RadioParams) -> Result<f64> {
    if !(rate >= 0.0) {
        return Err(Error::Negative {
            what: "rate",
            value: rate,
        });
    }
    Ok(tx_power_unchecked(rate, radio.path_loss(d), radio))
}

/// `(2^{r/B} − 1) · path_loss / g`, with `expm1` to keep small rates exact.
#[inline]
pub(crate) fn tx_power_unchecked(rate: f64, path_loss: f64, radio: &RadioParams) -> f64 {
    (rate / radio.bandwidth * LN_2).exp_m1() / radio.cnr * path_loss
}

/// Transmit plus sensing power.
pub fn worker_power_cost(rate: f64, d: f64, sensing_cost: f64, radio: &RadioParams) -> Result<f64> {
    Ok(transmission_power(rate, d, radio)? + sensing_cost * rate)
}

/// Power the base station radiates to deliver `charging_power` at distance `d`.
pub fn wpt_cost(charging_power: f64, d: f64, radio: &RadioParams) -> f64 {
    charging_power * radio.path_loss(d) * radio.kappa
}

/// Task completion quality `a1 ln(1 + a2 R)`.
pub fn quality(total_rate: f64, radio: &RadioParams) -> f64 {
    radio.a1 * (radio.a2 * total_rate).ln_1p()
}

/// Proportional charging shares `r_i / Σ r_j`; all zero when nobody transmits.
pub fn charging_shares(rates: &[f64]) -> Vec<f64> {
    let total: f64 = rates.iter().sum();
    if total > 0.0 {
        rates.iter().map(|r| r / total).collect()
    } else {
        vec![0.0; rates.len()]
    }
}

fn share(i: usize, rates: &[f64]) -> f64 {
    let total: f64 = rates.iter().sum();
    if total > 0.0 {
        rates[i] / total
    } else {
        0.0
    }
}

/// Worker utility planned against the worst-case distance `D_i`.
pub fn task_phase_worker_utility(
    i: usize,
    rates: &[f64],
    total_power: f64,
    inst: &Instance,
) -> f64 {
    let w = &inst.workers[i];
    worker_utility_at(i, rates, total_power, w.worst_case_distance, inst)
}

/// Platform utility with every worker charged at its worst-case distance.
pub fn task_phase_platform_utility(total_power: f64, rates: &[f64], inst: &Instance) -> f64 {
    let dists: Vec<f64> = inst.workers.iter().map(|w| w.worst_case_distance).collect();
    platform_utility_at(total_power, rates, &dists, inst)
}

/// Realised worker utility once the base station is at `bs_loc`.
pub fn data_phase_worker_utility(
    i: usize,
    bs_loc: Location,
    eq: &EquilibriumResult,
    inst: &Instance,
) -> f64 {
    let d = distance(inst.workers[i].true_location, bs_loc, inst.radio.height);
    worker_utility_at(i, &eq.rates, eq.pc_star, d, inst)
}

/// Realised platform utility once the base station is at `bs_loc`.
pub fn data_phase_platform_utility(
    bs_loc: Location,
    eq: &EquilibriumResult,
    inst: &Instance,
) -> f64 {
    let dists: Vec<f64> = inst
        .workers
        .iter()
        .map(|w| distance(w.true_location, bs_loc, inst.radio.height))
        .collect();
    platform_utility_at(eq.pc_star, &eq.rates, &dists, inst)
}

fn worker_utility_at(i: usize, rates: &[f64], total_power: f64, d: f64, inst: &Instance) -> f64 {
    let w = &inst.workers[i];
    let r = rates[i];
    if r == 0.0 {
        return 0.0;
    }
    let radio = &inst.radio;
    share(i, rates) * total_power
        - tx_power_unchecked(r, radio.path_loss(d), radio)
        - w.sensing_cost * r
}

fn platform_utility_at(total_power: f64, rates: &[f64], dists: &[f64], inst: &Instance) -> f64 {
    let radio = &inst.radio;
    let total: f64 = rates.iter().sum();
    let q = quality(total, radio);
    if total <= 0.0 {
        return q;
    }
    let charge: f64 = rates
        .iter()
        .zip(dists)
        .filter(|(r, _)| **r > 0.0)
        .map(|(r, d)| wpt_cost(r / total * total_power, *d, radio))
        .sum();
    q - charge
}

#[cfg(test)]
mod tests {
    use super::*;

    fn radio_alpha2() -> RadioParams {
        RadioParams::default()
    }

    fn rel(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    fn two_worker_instance() -> Instance {
        let task = Rect::square(0.0, 50.0).unwrap();
        let area = Rect::square(25.0, 25.0).unwrap();
        let radio = radio_alpha2();
        let w = WorkerProfile::new(1e-4, area, Location::new(25.0, 25.0), &task, 5.0).unwrap();
        Instance::new(task, radio, vec![w, w], 0).unwrap()
    }

    #[test]
    fn defaults_convert_db_once() {
        let r = RadioParams::default();
        assert_eq!(r.cnr, 1e9);
        assert!(rel(r.kappa, 2000.0) < 1e-12);
        assert_eq!(r.bandwidth, 6e7);
    }

    #[test]
    fn distance_examples() {
        let c = Location::new(25.0, 25.0);
        assert_eq!(distance(c, c, 5.0), 5.0);
        assert_eq!(
            distance(Location::new(0.0, 0.0), Location::new(3.0, 4.0), 0.0),
            5.0
        );
        let d = distance(Location::new(0.0, 0.0), Location::new(3.0, 4.0), 5.0);
        assert!((d - 7.0710678118654755).abs() < 1e-12);
    }

    #[test]
    fn max_distance_examples() {
        let task = Rect::square(0.0, 50.0).unwrap();
        let centre = Rect::square(25.0, 25.0).unwrap();
        let d = max_distance(&centre, &task, 5.0).unwrap();
        assert!((d - 35.70714214271425).abs() < 1e-10);

        let point = Rect::square(0.0, 0.0).unwrap();
        assert_eq!(max_distance(&point, &point, 5.0).unwrap(), 5.0);

        let inner = Rect::square(20.0, 30.0).unwrap();
        let d = max_distance(&inner, &task, 5.0).unwrap();
        assert!((d - 42.720018726587654).abs() < 1e-10);
    }

    #[test]
    fn max_distance_rejects_non_nested() {
        let task = Rect::square(0.0, 50.0).unwrap();
        let outside = Rect::square(40.0, 60.0).unwrap();
        assert!(matches!(
            max_distance(&outside, &task, 5.0),
            Err(Error::NotNested { .. })
        ));
    }

    #[test]
    fn rate_and_power_examples() {
        let radio = radio_alpha2();
        assert_eq!(transmission_rate(0.0, 12.0, &radio).unwrap(), 0.0);
        // P g / d^α = 1
        let p = radio.path_loss(7.0) / radio.cnr;
        assert!(rel(transmission_rate(p, 7.0, &radio).unwrap(), radio.bandwidth) < 1e-12);
        assert!(rel(transmission_rate(2.5e-8, 5.0, &radio).unwrap(), 6e7) < 1e-12);

        assert_eq!(transmission_power(0.0, 5.0, &radio).unwrap(), 0.0);
        assert!(rel(transmission_power(6e7, 5.0, &radio).unwrap(), 2.5e-8) < 1e-12);

        assert!(transmission_rate(-1.0, 5.0, &radio).is_err());
        assert!(transmission_power(-1.0, 5.0, &radio).is_err());
    }

    #[test]
    fn rate_power_round_trip_over_range() {
        let radio = radio_alpha2();
        for k in 0..=1000 {
            let r = radio.bandwidth * 10.0 * k as f64 / 1000.0;
            for d in [5.0, 17.3, 70.887] {
                let p = transmission_power(r, d, &radio).unwrap();
                let back = transmission_rate(p, d, &radio).unwrap();
                if r == 0.0 {
                    assert_eq!(back, 0.0);
                } else {
                    assert!(rel(back, r) < 1e-9, "r={r} d={d} back={back}");
                }
            }
        }
    }

    #[test]
    fn worker_power_cost_examples() {
        let radio = radio_alpha2();
        assert_eq!(worker_power_cost(0.0, 5.0, 1e-4, &radio).unwrap(), 0.0);
        let c = worker_power_cost(6e7, 5.0, 1e-4, &radio).unwrap();
        assert!(rel(c, 6000.000000025) < 1e-14);
        let mut prev = 0.0;
        for k in 1..200 {
            let r = k as f64 * 1e6;
            let c = worker_power_cost(r, 30.0, 1e-4, &radio).unwrap();
            assert!(c > prev);
            prev = c;
        }
    }

    #[test]
    fn wpt_cost_examples() {
        let radio = radio_alpha2();
        assert_eq!(wpt_cost(0.0, 5.0, &radio), 0.0);
        assert!(rel(wpt_cost(1.0, 5.0, &radio), 50000.0) < 1e-12);
        assert_eq!(wpt_cost(2.0, 9.0, &radio), 2.0 * wpt_cost(1.0, 9.0, &radio));
    }

    #[test]
    fn quality_examples() {
        let radio = radio_alpha2();
        assert_eq!(quality(0.0, &radio), 0.0);
        assert!(rel(quality(1.0, &radio), 5303.304908059075) < 1e-12);
        for (a, b) in [(0.1, 3.0), (2.0, 2.0), (1e-3, 1e4)] {
            assert!(quality(a, &radio) + quality(b, &radio) >= quality(a + b, &radio));
        }
    }

    #[test]
    fn task_phase_worker_utility_examples() {
        let inst = two_worker_instance();
        assert_eq!(task_phase_worker_utility(0, &[0.0, 3.0], 10.0, &inst), 0.0);

        let u = task_phase_worker_utility(0, &[1e7, 1e7], 10.0, &inst);
        assert!((u - (-995.0000001561391)).abs() < 1e-9, "u = {u}");

        // equal shares
        let r = 0.7;
        let u = task_phase_worker_utility(1, &[r, r], 10.0, &inst);
        let cost =
            worker_power_cost(r, inst.workers[1].worst_case_distance, 1e-4, &inst.radio).unwrap();
        assert!((u - (5.0 - cost)).abs() < 1e-12);
    }

    #[test]
    fn task_phase_platform_utility_examples() {
        let inst = two_worker_instance();
        assert_eq!(task_phase_platform_utility(0.0, &[0.0, 0.0], &inst), 0.0);

        // equal D: shares sum to one
        let d = inst.workers[0].worst_case_distance;
        let u = task_phase_platform_utility(3.0, &[0.2, 0.9], &inst);
        let expect = quality(1.1, &inst.radio) - 3.0 * inst.radio.path_loss(d) * inst.radio.kappa;
        assert!(rel(u, expect) < 1e-12);

        let single = Instance::new(inst.task_area, inst.radio, vec![inst.workers[0]], 0).unwrap();
        let u = task_phase_platform_utility(1.0, &[1e7], &single);
        assert!(rel(u, -2528583.5869819936) < 1e-12, "u = {u}");
    }

    #[test]
    fn charging_shares_sum_to_one() {
        let s = charging_shares(&[1.0, 2.0, 5.0]);
        assert!((s.iter().sum::<f64>() - 1.0).abs() < 1e-15);
        assert_eq!(charging_shares(&[0.0, 0.0]), vec![0.0, 0.0]);
    }

    #[test]
    fn radio_rejects_small_alpha() {
        let r = RadioParams {
            pathloss_alpha: 1.5,
            ..RadioParams::default()
        };
        let err = r.validate().unwrap_err().to_string();
        assert!(err.contains("pathloss_alpha must be ≥ 2"), "{err}");
    }
}
