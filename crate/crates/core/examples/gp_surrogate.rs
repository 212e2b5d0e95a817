//! Fits a GP to a noisy 1-d function and prints the posterior on a grid.

use oed::surrogate::{FittedGp, GpConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn truth(x: f64) -> f64 {
    (6.0 * x).sin() + 0.5 * x
}

fn main() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x: Vec<Vec<f64>> = (0..8).map(|_| vec![rng.random::<f64>()]).collect();
    let y: Vec<f64> = x.iter().map(|p| truth(p[0]) + 0.05 * (rng.random::<f64>() - 0.5)).collect();

    let gp = FittedGp::fit(&x, &y, &GpConfig::default(), 0).unwrap();
    println!("hyperparameters {:?}", gp.hyperparams());
    println!("log marginal likelihood {:.3}", gp.log_marginal_likelihood());
    println!("{:>5} {:>8} {:>8} {:>8}", "x", "truth", "mean", "std");
    for i in 0..=10 {
        let q = i as f64 / 10.0;
        let post = gp.predict(&[q]).unwrap();
        println!("{q:>5.1} {:>8.3} {:>8.3} {:>8.3}", truth(q), post.mean, post.variance.sqrt());
    }
}
