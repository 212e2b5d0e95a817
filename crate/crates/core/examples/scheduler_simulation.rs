//! Simulates sync and async batch evaluation on a virtual clock.
//!
//! Half the evaluations take 1 time unit, the other half 10.

use oed::benchmark::Benchmark;
use oed::config::{EvalMode, RunConfig};
use oed::scheduler::{random_suggester, simulate, DurationModel, Outcome};

fn main() {
    let problem = Benchmark::Zdt1.problem(6);
    let durations = DurationModel::Choice { values: vec![1.0, 10.0] };
    println!("{:>4} {:>10} {:>10}", "seed", "sync", "async");
    for seed in 0..5 {
        let span = |mode| {
            let config = RunConfig { eval_mode: mode, batch_size: 4, budget: 20, ..RunConfig::default() };
            let p = problem.clone();
            let report = simulate(&problem, &config, &durations, seed, &mut random_suggester(seed), move |r| Outcome::Objectives {
                values: Benchmark::Zdt1.evaluate_design(&p, &r.design).unwrap(),
                note: String::new(),
            })
            .unwrap();
            assert!(report.trace.max_in_flight() <= 4);
            report.makespan
        };
        println!("{seed:>4} {:>10.1} {:>10.1}", span(EvalMode::SyncBatch), span(EvalMode::AsyncBatch));
    }
}
