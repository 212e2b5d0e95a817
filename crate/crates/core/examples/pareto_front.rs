//! Non-dominated sorting, crowding distance and hypervolume on a small set.

use oed::pareto::{crowding_distance, hypervolume, hypervolume_monte_carlo, non_dominated_sort};

fn main() {
    let points = vec![
        vec![1.0, 5.0],
        vec![2.0, 3.0],
        vec![3.0, 2.5],
        vec![4.0, 1.0],
        vec![2.5, 3.5],
        vec![3.5, 3.0],
        vec![5.0, 5.0],
    ];
    let partition = non_dominated_sort(&points).unwrap();
    for (rank, front) in partition.fronts.iter().enumerate() {
        let members: Vec<&Vec<f64>> = front.iter().map(|&i| &points[i]).collect();
        let crowding = crowding_distance(&members);
        println!("front {rank}:");
        for (p, c) in members.iter().zip(crowding) {
            println!("  {p:?}  crowding {c:.3}");
        }
    }

    let reference = [6.0, 6.0];
    let first: Vec<&Vec<f64>> = partition.first().iter().map(|&i| &points[i]).collect();
    let exact = hypervolume(&first, &reference).unwrap();
    let mc = hypervolume_monte_carlo(&first, &reference, 200_000, 1).unwrap();
    println!("hypervolume {exact:.4}, Monte Carlo {:.4} +- {:.4}", mc.value, mc.std_error);
}
