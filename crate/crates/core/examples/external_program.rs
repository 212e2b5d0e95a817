//! Runs the optimization loop against an external evaluation program.
//!
//! The program receives a JSON request file and prints `{"objectives": [...]}`.
//! Needs a Unix shell and python3.

use std::os::unix::fs::PermissionsExt;
use std::time::Duration;

use oed::config::{EvalMode, RunConfig};
use oed::problem::{ObjectiveSpec, Problem, VariableSpec};
use oed::scheduler::{run, EvaluatorBinding, OptimizerSuggester, StopSignal};
use oed::store::Store;

const PROGRAM: &str = r#"#!/usr/bin/env python3
import json, math, sys
x = json.load(open(sys.argv[1]))["design"]
a, b = x["a"], x["b"]
print(json.dumps({"objectives": [a * a + b, (a - 1) ** 2 + math.sin(3 * b)]}))
"#;

fn main() {
    let dir = tempfile::tempdir().unwrap();
    let program = dir.path().join("evaluate.py");
    std::fs::write(&program, PROGRAM).unwrap();
    std::fs::set_permissions(&program, std::fs::Permissions::from_mode(0o755)).unwrap();

    let problem = Problem::new(
        vec![VariableSpec::continuous("a", -1.0, 2.0), VariableSpec::continuous("b", 0.0, 1.0)],
        vec![ObjectiveSpec::minimize("f"), ObjectiveSpec::minimize("g")],
    );
    let config = RunConfig {
        n_init: 4,
        budget: 10,
        batch_size: 2,
        eval_mode: EvalMode::AsyncBatch,
        ..RunConfig::default()
    };
    let store = Store::open(dir.path()).unwrap();
    let exp = store.create_experiment("script", problem, config.clone()).unwrap();

    let binding = EvaluatorBinding::ExternalProgram {
        path: program,
        timeout_secs: Duration::from_secs(30).as_secs_f64(),
    };
    let mut executor = binding.executor(exp.problem()).unwrap();
    let mut suggester = OptimizerSuggester { config: config.clone() };
    let report = run(&exp, &config, &mut suggester, executor.as_mut(), &StopSignal::new()).unwrap();
    println!("evaluated {}, failed {}", report.evaluated, report.failed);
    print!("{}", oed::archive::records_csv(exp.problem(), &exp.all_records()).unwrap());
}
