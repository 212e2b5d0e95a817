mod oracles;

use oed::config::{Preset, RunConfig};
use oed::optimizer::{initial_designs, select, suggest, Candidate, Observation, OptimizerState, SelectionSpec};
use oed::pareto::{dominates, hypervolume};
use oed::problem::{ObjectiveSpec, Problem, VariableSpec};
use oed::solver::{solve, solve_observed, Individual, SolverConfig};
use proptest::prelude::*;

fn cube(d: usize) -> Problem {
    Problem::new(
        (0..d).map(|i| VariableSpec::continuous(format!("x{i}"), 0.0, 1.0)).collect(),
        vec![ObjectiveSpec::minimize("f1"), ObjectiveSpec::minimize("f2")],
    )
}

fn small_solver(seed: u64) -> SolverConfig {
    SolverConfig {
        population_size: 24,
        generations: 15,
        seed,
        ..SolverConfig::default()
    }
}

fn zdt1(x: &[f64]) -> Vec<f64> {
    let g = 1.0 + 9.0 * x[1..].iter().sum::<f64>() / (x.len() - 1) as f64;
    vec![x[0], g * (1.0 - (x[0] / g).sqrt())]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn solver_stays_in_box_and_returns_a_front(d in 1usize..5, a in 0.1..3.0f64, seed in any::<u64>()) {
        let problem = cube(d);
        let f = move |x: &[f64]| {
            let s: f64 = x.iter().sum::<f64>() / x.len() as f64;
            vec![x[0].powf(a), 1.0 - x[0] + s * s]
        };
        let mut in_box = true;
        let out = solve_observed(f, &problem, &small_solver(seed), &[], &mut |_, pop: &[Individual]| {
            in_box &= pop.iter().all(|i| i.encoded.iter().all(|v| (0.0..=1.0).contains(v)));
        })
        .unwrap();
        prop_assert!(in_box);
        for p in &out.front {
            for q in &out.front {
                prop_assert!(!dominates(&p.acq_values, &q.acq_values).unwrap());
            }
        }
        let again = solve(f, &problem, &small_solver(seed), &[]).unwrap();
        prop_assert_eq!(out.population, again.population);
    }

    #[test]
    fn greedy_hvi_is_monotone_and_near_best_subset(
        cands in prop::collection::vec(prop::collection::vec(0.0..4.0f64, 2), 1..9),
        front in prop::collection::vec(prop::collection::vec(0.0..4.0f64, 2), 0..4),
        k in 1usize..4,
    ) {
        let reference = [4.5, 4.5];
        let candidates: Vec<Candidate> = cands
            .iter()
            .map(|m| Candidate { encoded: m.clone(), mean: m.clone(), variance: vec![0.1, 0.1], acq: m.clone() })
            .collect();
        let sel = select(&candidates, &SelectionSpec::HypervolumeImprovement, k, &front, &reference).unwrap();
        let mut pts = front.clone();
        let mut last = if pts.is_empty() { 0.0 } else { hypervolume(&pts, &reference).unwrap() };
        for &i in &sel.chosen {
            pts.push(cands[i].clone());
            let hv = hypervolume(&pts, &reference).unwrap();
            prop_assert!(hv >= last - 1e-12);
            last = hv;
        }
        // Greedy on a monotone submodular function keeps at least 1 - 1/e of the optimum.
        let take = k.min(cands.len());
        let best = oracles::best_subset_hv(&front, &cands, take, &reference);
        prop_assert!(last >= (1.0 - (-1.0f64).exp()) * best - 1e-9, "{} vs {}", last, best);
        if take == 1 {
            prop_assert!((last - best).abs() < 1e-9);
        }
    }
}

fn observed(problem: &Problem, n: usize, seed: u64) -> OptimizerState {
    let evaluated = initial_designs(problem, n, seed)
        .unwrap()
        .into_iter()
        .map(|d| Observation {
            objectives: zdt1(&problem.encode(&d).unwrap()),
            design: d,
        })
        .collect();
    OptimizerState {
        evaluated,
        pending: Vec::new(),
        initial_issued: n,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(6))]

    #[test]
    fn suggestions_avoid_evaluated_designs_and_repeat_exactly(
        seed in any::<u64>(),
        preset in prop::sample::select(vec![Preset::Parego, Preset::TsemoStyle, Preset::UsemoStyle, Preset::Random]),
        count in 1usize..4,
    ) {
        let problem = cube(3);
        let mut state = observed(&problem, 6, seed);
        // An evaluated design also left pending must not come back either.
        state.pending.push(state.evaluated[0].design.clone());
        let config = RunConfig {
            preset,
            seed,
            n_init: 6,
            solver: Some(small_solver(0)),
            ..RunConfig::default()
        };
        let batch = suggest(&problem, &state, &config, count, 2).unwrap();
        let taken: Vec<Vec<f64>> = state.evaluated.iter().map(|o| problem.encode(&o.design).unwrap()).collect();
        let chosen: Vec<Vec<f64>> = batch.designs().iter().map(|d| problem.encode(d).unwrap()).collect();
        let dist = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        for (i, c) in chosen.iter().enumerate() {
            prop_assert!(taken.iter().all(|t| dist(t, c) > 1e-9));
            prop_assert!(chosen[..i].iter().all(|o| dist(o, c) > 1e-9));
        }
        let again = suggest(&problem, &state, &config, count, 2).unwrap();
        prop_assert_eq!(batch.designs(), again.designs());
    }
}
