#![allow(dead_code)]

use wpsc::experiments::generate_instance;
use wpsc::game::{self, EquilibriumResult, SolverConfig};
use wpsc::model::{Instance, Location, RadioParams, Rect, WorkerProfile};

pub fn radio(alpha: f64) -> RadioParams {
    RadioParams {
        pathloss_alpha: alpha,
        ..RadioParams::default()
    }
}

pub fn task_area() -> Rect {
    Rect::square(0.0, 50.0).unwrap()
}

/// Workers pinned to the given points (degenerate working areas).
pub fn pinned_instance(points: &[(f64, f64)], costs: &[f64], radio: RadioParams) -> Instance {
    let task = task_area();
    let workers = points
        .iter()
        .zip(costs)
        .map(|(&(x, y), &b)| {
            let area = Rect::new(x, x, y, y).unwrap();
            WorkerProfile::new(b, area, Location::new(x, y), &task, radio.height).unwrap()
        })
        .collect();
    Instance::new(task, radio, workers, 0).unwrap()
}

/// Equilibrium stand-in with prescribed rates, for placement tests.
pub fn with_rates(inst: &Instance, pc: f64, rates: &[f64]) -> EquilibriumResult {
    EquilibriumResult::from_rates(pc, rates.to_vec(), inst, 0)
}

pub fn solved(n: usize, alpha: f64, seed: u64) -> (Instance, EquilibriumResult) {
    let inst = generate_instance(n, radio(alpha), seed).unwrap();
    let eq = game::solve_stackelberg(&inst, &SolverConfig::default()).unwrap();
    (inst, eq)
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}
