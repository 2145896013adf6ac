mod common;

use common::{rel_err, solved};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use wpsc::experiments::generate_instance;
use wpsc::game::{self, SolverConfig};
use wpsc::model;

/// Random rate vector around the equilibrium, all strictly positive.
fn jitter(rates: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    rates
        .iter()
        .map(|r| (r + 1e-3) * rng.gen_range(0.5..1.5))
        .collect()
}

#[test]
fn marginal_utility_matches_central_difference() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for seed in 0..10 {
        let (inst, eq) = solved(8, 2.0, seed);
        let rates = jitter(&eq.rates, &mut rng);
        for i in 0..inst.len() {
            let h = 1e-6 * rates[i];
            let mut up = rates.clone();
            up[i] += h;
            let mut down = rates.clone();
            down[i] -= h;
            let fd = (model::task_phase_worker_utility(i, &up, eq.pc_star, &inst)
                - model::task_phase_worker_utility(i, &down, eq.pc_star, &inst))
                / (2.0 * h);
            let analytic = game::marginal_utility(i, &rates, eq.pc_star, &inst);
            let scale = inst.workers[i].sensing_cost + analytic.abs();
            assert!(
                (fd - analytic).abs() < 1e-6 * scale,
                "seed {seed} worker {i}: fd {fd} vs {analytic}"
            );
        }
    }
}

#[test]
fn second_and_cross_derivatives_match_central_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for seed in 0..10 {
        let (inst, eq) = solved(6, 2.5, seed);
        let pc = eq.pc_star;
        let rates = jitter(&eq.rates, &mut rng);
        for i in 0..inst.len() {
            let h = 1e-5 * rates[i];
            let mut up = rates.clone();
            up[i] += h;
            let mut down = rates.clone();
            down[i] -= h;
            let fd = (game::marginal_utility(i, &up, pc, &inst)
                - game::marginal_utility(i, &down, pc, &inst))
                / (2.0 * h);
            let analytic = game::second_derivative(i, &rates, pc, &inst);
            assert!(analytic < 0.0);
            assert!(
                rel_err(fd, analytic) < 1e-5,
                "seed {seed} worker {i}: {fd} vs {analytic}"
            );

            let j = (i + 1) % inst.len();
            let h = 1e-5 * rates[j];
            let mut up = rates.clone();
            up[j] += h;
            let mut down = rates.clone();
            down[j] -= h;
            let fd = (game::marginal_utility(i, &up, pc, &inst)
                - game::marginal_utility(i, &down, pc, &inst))
                / (2.0 * h);
            let analytic = game::cross_partial(i, j, &rates, pc);
            let scale = analytic.abs() + pc / rates.iter().sum::<f64>().powi(2);
            assert!(
                (fd - analytic).abs() < 1e-5 * scale,
                "seed {seed} ({i},{j}): {fd} vs {analytic}"
            );
        }
    }
}

#[test]
fn utility_is_strictly_concave_in_own_rate() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let inst = generate_instance(10, common::radio(3.0), 5).unwrap();
    for _ in 0..200 {
        let rates: Vec<f64> = (0..inst.len()).map(|_| rng.gen_range(0.0..1.0)).collect();
        let pc = rng.gen_range(0.0..1e-2);
        for i in 0..inst.len() {
            assert!(game::second_derivative(i, &rates, pc, &inst) < 0.0);
        }
    }
}

#[test]
fn best_response_is_monotone_in_charging_power() {
    let cfg = SolverConfig::default();
    for seed in 0..5 {
        let (inst, eq) = solved(10, 2.0, seed);
        for i in 0..inst.len() {
            let mut last = 0.0;
            for k in 0..=40 {
                let pc = eq.pc_star * k as f64 / 10.0;
                let r = game::best_response(i, &eq.rates, pc, &inst, &cfg).unwrap();
                assert!(
                    r >= last * (1.0 - 1e-12),
                    "seed {seed} worker {i}: {r} < {last} at pc {pc}"
                );
                last = r;
            }
        }
    }
}

#[test]
fn equilibrium_is_independent_of_the_start() {
    let cfg = SolverConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for seed in 0..10 {
        let (inst, eq) = solved(25, 2.0, seed);
        let scale = eq.rates.iter().cloned().fold(0.0, f64::max);
        let starts = [
            vec![inst.radio.bandwidth; inst.len()],
            (0..inst.len())
                .map(|_| rng.gen_range(0.0..10.0))
                .collect::<Vec<_>>(),
            vec![1e-9; inst.len()],
        ];
        for start in &starts {
            let other = game::solve_ne(eq.pc_star, &inst, &cfg, Some(start)).unwrap();
            for (a, b) in eq.rates.iter().zip(&other.rates) {
                assert!((a - b).abs() <= 1e-6 * scale, "seed {seed}: {a} vs {b}");
            }
        }
    }
}

#[test]
fn leader_choice_is_a_local_maximum() {
    let cfg = SolverConfig::default();
    for seed in 0..10 {
        let (inst, eq) = solved(20, 2.0, seed);
        let spacing = game::pc_search_bound(&inst, &cfg) / (cfg.pc_grid_points - 1) as f64;
        for delta in [spacing, spacing / 100.0, -spacing / 100.0, -spacing] {
            let pc = eq.pc_star + delta;
            if pc < 0.0 {
                continue;
            }
            let ne = game::solve_ne(pc, &inst, &cfg, None).unwrap();
            let u = model::task_phase_platform_utility(pc, &ne.rates, &inst);
            assert!(
                u <= eq.platform_utility + 1e-9 * eq.platform_utility.abs(),
                "seed {seed}: P_c {pc} gives {u} > {}",
                eq.platform_utility
            );
        }
    }
}

#[test]
fn every_worker_satisfies_its_first_order_condition() {
    for seed in 0..10 {
        let (inst, eq) = solved(50, 2.0, seed);
        for i in 0..inst.len() {
            let res = game::foc_residual(i, &eq.rates, eq.pc_star, &inst);
            assert!(res < 1e-6, "seed {seed} worker {i}: residual {res}");
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn best_response_meets_the_optimality_conditions(
        seed in 0u64..1000,
        pc in 1e-6f64..1e-1,
        others in prop::collection::vec(1e-4f64..10.0, 1..6),
    ) {
        let inst = generate_instance(others.len() + 1, common::radio(2.0), seed).unwrap();
        let mut rates = vec![0.0];
        rates.extend(&others);
        let r = game::best_response(0, &rates, pc, &inst, &SolverConfig::default()).unwrap();
        rates[0] = r;
        prop_assert!(game::foc_residual(0, &rates, pc, &inst) < 1e-8);
        let u = model::task_phase_worker_utility(0, &rates, pc, &inst);
        for f in [0.0, 0.5, 0.99, 1.01, 2.0] {
            let mut alt = rates.clone();
            alt[0] = r * f;
            prop_assert!(model::task_phase_worker_utility(0, &alt, pc, &inst) <= u + 1e-12 * u.abs().max(1e-18));
        }
    }
}
