//! Compares presets against random search on ZDT1 (d = 6, budget 40).
//!
//! Usage: cargo run --release --example benchmark_zdt1 -- [seeds]

use std::time::Instant;

use oed::benchmark::{comparison_config, final_hypervolumes, run_benchmark, Benchmark};
use oed::config::Preset;

fn main() {
    let n: u64 = std::env::args().nth(1).and_then(|s| s.parse().ok()).unwrap_or(5);
    let seeds: Vec<u64> = (0..n).collect();
    for preset in [Preset::Random, Preset::Parego, Preset::TsemoStyle, Preset::UsemoStyle] {
        let t = Instant::now();
        let points = run_benchmark(Benchmark::Zdt1, 6, &comparison_config(preset), &seeds).expect("benchmark runs");
        let finals: Vec<String> = final_hypervolumes(&points)
            .into_iter()
            .map(|(_, hv)| format!("{hv:.3}"))
            .collect();
        println!("{:<12} {:>6.1}s  {}", preset.name(), t.elapsed().as_secs_f64(), finals.join(" "));
    }
}
