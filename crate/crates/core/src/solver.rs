//! NSGA-II over the acquisition landscape.
//!
//! Individuals live in the relaxed `[0,1]^d` encoding; each is snapped to the
//! design it stands for (`encode(decode(x))`) before evaluation. Feasibility is
//! handled by constraint-domination: feasible beats infeasible, infeasible
//! individuals compare by total linear-constraint violation.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::pareto::{crowding_distance, non_dominated_sort};
use crate::problem::Problem;

#[derive(Debug, Error, PartialEq)]
pub enum SolverError {
    #[error("invalid solver configuration: {0}")]
    Config(String),
    #[error("no feasible individual in the final population")]
    AllInfeasible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolverConfig {
    pub population_size: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    pub crossover_eta: f64,
    /// Per-variable mutation probability; `None` means `1/d`.
    pub mutation_prob: Option<f64>,
    pub mutation_eta: f64,
    pub seed: u64,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            population_size: 100,
            generations: 100,
            crossover_prob: 0.9,
            crossover_eta: 15.0,
            mutation_prob: None,
            mutation_eta: 20.0,
            seed: 0,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<(), SolverError> {
        let bad = |m: &str| Err(SolverError::Config(m.to_string()));
        if self.population_size < 2 || self.population_size % 2 != 0 {
            return bad("population_size must be even and >= 2");
        }
        if self.generations == 0 {
            return bad("generations must be positive");
        }
        if !(0.0..=1.0).contains(&self.crossover_prob) {
            return bad("crossover_prob must lie in [0, 1]");
        }
        if matches!(self.mutation_prob, Some(p) if !(0.0..=1.0).contains(&p)) {
            return bad("mutation_prob must lie in [0, 1]");
        }
        if !(self.crossover_eta > 0.0) || !(self.mutation_eta > 0.0) {
            return bad("distribution indices must be positive");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Individual {
    /// Relaxed encoding the operators act on.
    pub encoded: Vec<f64>,
    /// Encoding of the snapped design; what acquisition values refer to.
    pub canonical: Vec<f64>,
    pub acq_values: Vec<f64>,
    pub rank: usize,
    pub crowding: f64,
    pub feasible: bool,
    /// Total constraint violation; infinite when the acquisition was not finite.
    pub violation: f64,
}

impl Individual {
    /// Crowded-comparison order: lower rank, then larger crowding distance.
    pub fn better_than(&self, other: &Individual) -> bool {
        self.rank < other.rank || (self.rank == other.rank && self.crowding > other.crowding)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SolverDiagnostics {
    pub evaluations: usize,
    pub non_finite_evaluations: usize,
}

#[derive(Debug, Clone)]
pub struct SolverOutput {
    /// Feasible rank-0 individuals of the final population.
    pub front: Vec<Individual>,
    /// Final population ordered by rank, then descending crowding.
    pub population: Vec<Individual>,
    pub diagnostics: SolverDiagnostics,
}

struct Evaluator<'a, F> {
    acq: F,
    problem: &'a Problem,
    diagnostics: SolverDiagnostics,
}

impl<F: Fn(&[f64]) -> Vec<f64>> Evaluator<'_, F> {
    fn evaluate(&mut self, encoded: Vec<f64>) -> Individual {
        let canonical = self.problem.canonicalize(&encoded).unwrap_or_else(|_| encoded.clone());
        let acq_values = (self.acq)(&canonical);
        self.diagnostics.evaluations += 1;
        let finite = !acq_values.is_empty() && acq_values.iter().all(|v| v.is_finite());
        if !finite {
            self.diagnostics.non_finite_evaluations += 1;
        }
        let violation = if finite {
            self.problem.linear_violation(&canonical)
        } else {
            f64::INFINITY
        };
        Individual {
            encoded,
            canonical,
            acq_values,
            rank: usize::MAX,
            crowding: 0.0,
            feasible: violation == 0.0,
            violation,
        }
    }
}

/// Assigns rank and crowding under constraint-domination. Feasible individuals
/// are sorted into non-dominated fronts; infeasible ones follow, one rank per
/// distinct violation level.
pub fn assign_ranks(pop: &mut [Individual]) {
    let feasible: Vec<usize> = (0..pop.len()).filter(|&i| pop[i].feasible).collect();
    let mut next_rank = 0;
    if !feasible.is_empty() {
        let mut assigned = Vec::with_capacity(feasible.len());
        {
            let values: Vec<&[f64]> = feasible.iter().map(|&i| pop[i].acq_values.as_slice()).collect();
            let partition = non_dominated_sort(&values).expect("feasible individuals have finite values");
            for (r, front) in partition.fronts.iter().enumerate() {
                let pts: Vec<&[f64]> = front.iter().map(|&k| values[k]).collect();
                let crowd = crowding_distance(&pts);
                assigned.extend(front.iter().zip(crowd).map(|(&k, c)| (feasible[k], r, c)));
            }
            next_rank = partition.fronts.len();
        }
        for (i, r, c) in assigned {
            pop[i].rank = r;
            pop[i].crowding = c;
        }
    }
    let mut infeasible: Vec<usize> = (0..pop.len()).filter(|&i| !pop[i].feasible).collect();
    infeasible.sort_by(|&a, &b| pop[a].violation.total_cmp(&pop[b].violation).then(a.cmp(&b)));
    let mut last: Option<f64> = None;
    for i in infeasible {
        if last.is_some_and(|v| v != pop[i].violation) {
            next_rank += 1;
        }
        last = Some(pop[i].violation);
        pop[i].rank = next_rank;
        pop[i].crowding = 0.0;
    }
}

/// Elitist truncation of `pool` to `size` individuals.
fn environmental_selection(mut pool: Vec<Individual>, size: usize) -> Vec<Individual> {
    assign_ranks(&mut pool);
    let mut order: Vec<usize> = (0..pool.len()).collect();
    order.sort_by(|&a, &b| {
        pool[a]
            .rank
            .cmp(&pool[b].rank)
            .then(pool[b].crowding.total_cmp(&pool[a].crowding))
            .then(a.cmp(&b))
    });
    let mut taken: Vec<Option<Individual>> = pool.into_iter().map(Some).collect();
    let mut survivors: Vec<Individual> = order
        .into_iter()
        .take(size)
        .map(|i| taken[i].take().expect("each index taken once"))
        .collect();
    // crowding among survivors of the truncated front is recomputed next round
    assign_ranks(&mut survivors);
    survivors
}

fn tournament<'p, R: Rng>(pop: &'p [Individual], rng: &mut R) -> &'p Individual {
    let a = &pop[rng.random_range(0..pop.len())];
    let b = &pop[rng.random_range(0..pop.len())];
    if b.better_than(a) {
        b
    } else {
        a
    }
}

fn sbx<R: Rng>(p1: &[f64], p2: &[f64], eta: f64, rng: &mut R) -> (Vec<f64>, Vec<f64>) {
    let mut c1 = p1.to_vec();
    let mut c2 = p2.to_vec();
    for i in 0..p1.len() {
        if rng.random::<f64>() > 0.5 || (p1[i] - p2[i]).abs() <= 1e-14 {
            continue;
        }
        let (y1, y2) = if p1[i] < p2[i] { (p1[i], p2[i]) } else { (p2[i], p1[i]) };
        let u = rng.random::<f64>();
        let spread = |beta: f64| {
            let alpha = 2.0 - beta.powf(-(eta + 1.0));
            if u <= 1.0 / alpha {
                (u * alpha).powf(1.0 / (eta + 1.0))
            } else {
                (1.0 / (2.0 - u * alpha)).powf(1.0 / (eta + 1.0))
            }
        };
        let beta_lo = 1.0 + 2.0 * y1 / (y2 - y1);
        let beta_hi = 1.0 + 2.0 * (1.0 - y2) / (y2 - y1);
        let mut a = 0.5 * ((y1 + y2) - spread(beta_lo) * (y2 - y1));
        let mut b = 0.5 * ((y1 + y2) + spread(beta_hi) * (y2 - y1));
        a = a.clamp(0.0, 1.0);
        b = b.clamp(0.0, 1.0);
        if rng.random::<f64>() < 0.5 {
            std::mem::swap(&mut a, &mut b);
        }
        c1[i] = a;
        c2[i] = b;
    }
    (c1, c2)
}

fn polynomial_mutation<R: Rng>(x: &mut [f64], prob: f64, eta: f64, rng: &mut R) {
    for v in x.iter_mut() {
        if rng.random::<f64>() >= prob {
            continue;
        }
        let y = *v;
        let u = rng.random::<f64>();
        let power = 1.0 / (eta + 1.0);
        let dq = if u < 0.5 {
            let xy = 1.0 - y;
            (2.0 * u + (1.0 - 2.0 * u) * xy.powf(eta + 1.0)).powf(power) - 1.0
        } else {
            let xy = y;
            1.0 - (2.0 * (1.0 - u) + 2.0 * (u - 0.5) * xy.powf(eta + 1.0)).powf(power)
        };
        *v = (y + dq).clamp(0.0, 1.0);
    }
}

/// Runs NSGA-II minimizing `acq` (encoded point → objective vector).
pub fn solve<F>(acq: F, problem: &Problem, config: &SolverConfig, warm_start: &[Vec<f64>]) -> Result<SolverOutput, SolverError>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    solve_observed(acq, problem, config, warm_start, &mut |_, _| {})
}

/// As [`solve`], calling `observer(generation, population)` after the initial
/// population (generation 0) and after each generation's survivor selection.
pub fn solve_observed<F>(
    acq: F,
    problem: &Problem,
    config: &SolverConfig,
    warm_start: &[Vec<f64>],
    observer: &mut dyn FnMut(usize, &[Individual]),
) -> Result<SolverOutput, SolverError>
where
    F: Fn(&[f64]) -> Vec<f64>,
{
    config.validate()?;
    let dim = problem.encoded_dim();
    if dim == 0 {
        return Err(SolverError::Config("problem has no encoded dimensions".into()));
    }
    let n = config.population_size;
    let pm = config.mutation_prob.unwrap_or(1.0 / dim as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut eval = Evaluator {
        acq,
        problem,
        diagnostics: SolverDiagnostics::default(),
    };

    let mut pop: Vec<Individual> = Vec::with_capacity(n);
    for w in warm_start.iter().filter(|w| w.len() == dim).take(n) {
        pop.push(eval.evaluate(w.iter().map(|v| v.clamp(0.0, 1.0)).collect()));
    }
    while pop.len() < n {
        let x: Vec<f64> = (0..dim).map(|_| rng.random::<f64>()).collect();
        pop.push(eval.evaluate(x));
    }
    assign_ranks(&mut pop);
    observer(0, &pop);

    for generation in 1..=config.generations {
        let mut offspring = Vec::with_capacity(n);
        while offspring.len() < n {
            let p1 = tournament(&pop, &mut rng).encoded.clone();
            let p2 = tournament(&pop, &mut rng).encoded.clone();
            let (mut c1, mut c2) = if rng.random::<f64>() < config.crossover_prob {
                sbx(&p1, &p2, config.crossover_eta, &mut rng)
            } else {
                (p1, p2)
            };
            polynomial_mutation(&mut c1, pm, config.mutation_eta, &mut rng);
            polynomial_mutation(&mut c2, pm, config.mutation_eta, &mut rng);
            offspring.push(eval.evaluate(c1));
            offspring.push(eval.evaluate(c2));
        }
        let mut pool = pop;
        pool.extend(offspring);
        pop = environmental_selection(pool, n);
        observer(generation, &pop);
    }

    let mut population = pop;
    population.sort_by(|a, b| a.rank.cmp(&b.rank).then(b.crowding.total_cmp(&a.crowding)));
    let front: Vec<Individual> = population
        .iter()
        .filter(|i| i.feasible && i.rank == 0)
        .cloned()
        .collect();
    if front.is_empty() {
        return Err(SolverError::AllInfeasible);
    }
    Ok(SolverOutput {
        front,
        population,
        diagnostics: eval.diagnostics,
    })
}

/// Re-ranks `population` under constraint-domination and returns it ordered
/// best-first. Exposed so callers can filter a population consistently.
pub fn feasibility_filter(mut population: Vec<Individual>, problem: &Problem) -> Vec<Individual> {
    for ind in &mut population {
        let finite = ind.acq_values.iter().all(|v| v.is_finite());
        ind.violation = if finite {
            problem.linear_violation(&ind.canonical)
        } else {
            f64::INFINITY
        };
        ind.feasible = ind.violation == 0.0;
    }
    assign_ranks(&mut population);
    population.sort_by(|a, b| a.rank.cmp(&b.rank).then(b.crowding.total_cmp(&a.crowding)));
    population
}
