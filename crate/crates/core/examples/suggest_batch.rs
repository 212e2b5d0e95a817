//! Proposes a batch for a mixed-variable problem from a handful of results.

use oed::config::RunConfig;
use oed::optimizer::{initial_designs, suggest, Observation, OptimizerState};
use oed::problem::{Design, Problem, Value};

const PROBLEM: &str = r#"
[[variables]]
name = "temperature"
kind = "continuous"
bounds = [20.0, 90.0]

[[variables]]
name = "stages"
kind = "discrete"
bounds = [1, 5]

[[variables]]
name = "catalyst"
kind = "categorical"
categories = ["Pd", "Pt", "Ni"]

[[objectives]]
name = "yield"
sense = "maximize"

[[objectives]]
name = "cost"
sense = "minimize"
"#;

const CONFIG: &str = r#"
preset = "tsemo_style"
n_init = 6
batch_size = 3
eval_mode = "sync_batch"
seed = 5
"#;

/// Stand-in for a lab measurement.
fn measure(design: &Design) -> Vec<f64> {
    let t = match design.get("temperature") {
        Some(Value::Real(t)) => *t,
        _ => unreachable!(),
    };
    let stages = match design.get("stages") {
        Some(Value::Int(s)) => *s as f64,
        _ => unreachable!(),
    };
    let boost = match design.get("catalyst") {
        Some(Value::Label(c)) if c == "Pd" => 1.2,
        Some(Value::Label(c)) if c == "Pt" => 1.0,
        _ => 0.7,
    };
    let yield_ = boost * (1.0 - ((t - 65.0) / 40.0).powi(2)) * (1.0 - (-stages).exp());
    let cost = 0.02 * t + stages + if boost > 1.0 { 3.0 } else { 1.0 };
    vec![yield_, cost]
}

fn main() {
    let problem = Problem::from_toml_str(PROBLEM).unwrap();
    let config = RunConfig::from_toml_str(CONFIG).unwrap();

    let mut state = OptimizerState::default();
    for design in initial_designs(&problem, config.n_init, config.seed).unwrap() {
        let objectives = measure(&design);
        state.evaluated.push(Observation { design, objectives });
    }
    state.initial_issued = config.n_init;

    let batch = suggest(&problem, &state, &config, config.batch_size, 1).unwrap();
    for s in &batch.suggestions {
        println!("{} (score {:.3})", serde_json::to_string(&s.design).unwrap(), s.score);
        if let Some(pred) = &s.predicted {
            for (o, p) in problem.objectives.iter().zip(pred) {
                println!("  {:<6} {:>7.3} +- {:.3}", o.name, p.mean, p.variance.sqrt());
            }
        }
    }
}
