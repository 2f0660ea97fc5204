//! Differential evolution in the unit box, maximizing fitness.
//!
//! Mutation: `y_i = x_i + F (x_best - x_i) + F (x_r1 - x_r2)`.
//! Crossover: binomial with one forced coordinate `j_rand`.
//! Selection: the trial replaces its parent only when strictly fitter.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SearchParams {
    pub np: usize,
    pub f: f64,
    pub cr: f64,
    pub g_max: usize,
    pub stagnation_eps: f64,
    pub stagnation_window: usize,
    pub top_k: usize,
    /// Representatives drawn per cluster.
    pub m: usize,
    /// Half-width of the initial sampling box around the defaults, as a
    /// fraction of each range.
    pub init_spread: f64,
}

impl Default for SearchParams {
    fn default() -> Self {
        Self {
            np: 200,
            f: 0.4,
            cr: 0.9,
            g_max: 200,
            stagnation_eps: 0.1,
            stagnation_window: 10,
            top_k: 10,
            m: 3,
            init_spread: 1.0,
        }
    }
}

impl SearchParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Precondition(m));
        if self.np < 4 {
            return bad(format!("population size must be at least 4, got {}", self.np));
        }
        if !(self.f > 0.0 && self.f <= 2.0) {
            return bad(format!("F must lie in (0, 2], got {}", self.f));
        }
        if !(0.0..=1.0).contains(&self.cr) {
            return bad(format!("CR must lie in [0, 1], got {}", self.cr));
        }
        if self.top_k > self.np {
            return bad(format!("top_k {} exceeds population size {}", self.top_k, self.np));
        }
        if !(0.0..=1.0).contains(&self.init_spread) {
            return bad(format!("initial spread must lie in [0, 1], got {}", self.init_spread));
        }
        if self.m == 0 {
            return bad("m must be at least 1".into());
        }
        Ok(())
    }
}

fn clip_unit(v: &mut [f64]) {
    for x in v {
        *x = x.clamp(0.0, 1.0);
    }
}

/// Index of the highest fitness; ties go to the lowest index.
pub fn best_index(fitness: &[f64]) -> usize {
    let mut best = 0;
    for (i, &f) in fitness.iter().enumerate().skip(1) {
        if f > fitness[best] {
            best = i;
        }
    }
    best
}

/// `center` itself followed by `np - 1` members drawn uniformly from the
/// box `center ± spread`, intersected with the unit box.
pub fn initial_population(center: &[f64], np: usize, spread: f64, seed: u64, stream: u64) -> Vec<Vec<f64>> {
    let mut r = rng::stream(seed, &[stream, 0x1417]);
    (0..np)
        .map(|i| {
            let mut x = center.to_vec();
            if i > 0 && spread > 0.0 {
                for v in &mut x {
                    let lo = (*v - spread).max(0.0);
                    let hi = (*v + spread).min(1.0);
                    *v = r.random_range(lo..=hi);
                }
            }
            x
        })
        .collect()
}

/// Draws `r1 != r2`, both different from `i`.
fn pick_pair<R: Rng>(r: &mut R, np: usize, i: usize) -> (usize, usize) {
    let r1 = loop {
        let c = r.random_range(0..np);
        if c != i {
            break c;
        }
    };
    let r2 = loop {
        let c = r.random_range(0..np);
        if c != i && c != r1 {
            break c;
        }
    };
    (r1, r2)
}

/// Random streams are keyed by (seed, stream, generation, member).
pub fn mutate(pop: &[Vec<f64>], fitness: &[f64], f: f64, seed: u64, stream: u64, generation: usize) -> Vec<Vec<f64>> {
    let np = pop.len();
    let best = &pop[best_index(fitness)];
    (0..np)
        .map(|i| {
            let mut r = rng::stream(seed, &[stream, generation as u64, i as u64, 0]);
            let (r1, r2) = pick_pair(&mut r, np, i);
            let x = &pop[i];
            let mut y: Vec<f64> = (0..x.len())
                .map(|j| x[j] + f * (best[j] - x[j]) + f * (pop[r1][j] - pop[r2][j]))
                .collect();
            clip_unit(&mut y);
            y
        })
        .collect()
}

pub fn crossover(
    pop: &[Vec<f64>],
    variants: &[Vec<f64>],
    cr: f64,
    seed: u64,
    stream: u64,
    generation: usize,
) -> Vec<Vec<f64>> {
    pop.iter()
        .zip(variants)
        .enumerate()
        .map(|(i, (x, y))| {
            let mut r = rng::stream(seed, &[stream, generation as u64, i as u64, 1]);
            let j_rand = r.random_range(0..x.len());
            let mut e: Vec<f64> = (0..x.len())
                .map(|j| {
                    if r.random::<f64>() < cr || j == j_rand {
                        y[j]
                    } else {
                        x[j]
                    }
                })
                .collect();
            clip_unit(&mut e);
            e
        })
        .collect()
}

/// Keeps the trial where it is strictly fitter than the parent.
pub fn select(pop: &mut [Vec<f64>], fitness: &mut [f64], trials: Vec<Vec<f64>>, trial_fitness: &[f64]) {
    for (i, trial) in trials.into_iter().enumerate() {
        if trial_fitness[i] > fitness[i] {
            pop[i] = trial;
            fitness[i] = trial_fitness[i];
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evolution {
    pub population: Vec<Vec<f64>>,
    pub fitness: Vec<f64>,
    pub generations: usize,
    /// Best fitness after each generation, starting with the initial one.
    pub best_history: Vec<f64>,
}

impl Evolution {
    pub fn best(&self) -> (&[f64], f64) {
        let b = best_index(&self.fitness);
        (&self.population[b], self.fitness[b])
    }

    /// Top `k` members by fitness, descending; ties keep population order.
    pub fn top_k(&self, k: usize) -> Vec<(Vec<f64>, f64)> {
        let mut order: Vec<usize> = (0..self.population.len()).collect();
        order.sort_by(|&a, &b| self.fitness[b].total_cmp(&self.fitness[a]).then(a.cmp(&b)));
        order
            .into_iter()
            .take(k)
            .map(|i| (self.population[i].clone(), self.fitness[i]))
            .collect()
    }
}

/// Runs mutation, crossover and selection until `g_max` generations or
/// until the best fitness gains less than `stagnation_eps` over the last
/// `stagnation_window` generations.
pub fn evolve<F>(fitness_fn: F, init: Vec<Vec<f64>>, params: &SearchParams, seed: u64, stream: u64) -> Result<Evolution>
where
    F: Fn(&[f64]) -> f64 + Sync,
{
    params.validate()?;
    if init.len() != params.np {
        return Err(Error::DimensionMismatch {
            expected: params.np,
            actual: init.len(),
        });
    }
    let mut pop = init;
    let mut fitness: Vec<f64> = pop.par_iter().map(|x| fitness_fn(x)).collect();
    let mut history = vec![fitness[best_index(&fitness)]];
    let w = params.stagnation_window;
    let mut g = 0;
    while g < params.g_max {
        g += 1;
        let variants = mutate(&pop, &fitness, params.f, seed, stream, g);
        let trials = crossover(&pop, &variants, params.cr, seed, stream, g);
        let trial_fitness: Vec<f64> = trials.par_iter().map(|x| fitness_fn(x)).collect();
        select(&mut pop, &mut fitness, trials, &trial_fitness);
        history.push(fitness[best_index(&fitness)]);
        if w > 0 && g >= w && history[g] - history[g - w] < params.stagnation_eps {
            break;
        }
    }
    Ok(Evolution {
        population: pop,
        fitness,
        generations: g,
        best_history: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn params(np: usize) -> SearchParams {
        SearchParams {
            np,
            top_k: np.min(10),
            ..SearchParams::default()
        }
    }

    #[test]
    fn hand_evaluated_mutation() {
        // with np = 4, member 0's r1/r2 come from {1, 2, 3}; pin them by
        // making every candidate pair give the same difference
        let pop = vec![vec![0.2], vec![0.8], vec![0.5], vec![0.1]];
        let fitness = [0.0, 1.0, 0.5, 0.2];
        let y = mutate(&pop, &fitness, 0.4, 1, 0, 1);
        // x_best = 0.8; r1 - r2 is one of the six ordered differences
        let candidates: Vec<f64> = [(1, 2), (2, 1), (1, 3), (3, 1), (2, 3), (3, 2)]
            .iter()
            .map(|&(a, b)| 0.2 + 0.4 * (0.8 - 0.2) + 0.4 * (pop[a][0] - pop[b][0]))
            .collect();
        assert!(candidates.iter().any(|c| (c - y[0][0]).abs() < 1e-12));
        // the worked example: r1 = 0.5, r2 = 0.1
        assert!((0.2 + 0.4 * 0.6 + 0.4 * 0.4 - 0.6f64).abs() < 1e-12);
        assert!(candidates.iter().any(|c| (c - 0.6).abs() < 1e-12));
    }

    #[test]
    fn zero_scale_leaves_members_unchanged() {
        let pop = initial_population(&[0.3, 0.7, 0.5], 8, 0.05, 3, 0);
        let fitness: Vec<f64> = (0..8).map(|i| i as f64).collect();
        assert_eq!(mutate(&pop, &fitness, 0.0, 4, 0, 1), pop);
    }

    #[test]
    fn crossover_extremes() {
        let pop = vec![vec![0.0; 5]; 4];
        let var = vec![vec![1.0; 5]; 4];
        assert_eq!(crossover(&pop, &var, 1.0, 1, 0, 1), var);
        for e in crossover(&pop, &var, 0.0, 1, 0, 1) {
            assert_eq!(e.iter().filter(|&&v| v == 1.0).count(), 1);
        }
        let one = crossover(&[vec![0.0]], &[vec![1.0]], 0.0, 1, 0, 1);
        assert_eq!(one, vec![vec![1.0]]);
    }

    #[test]
    fn selection_rules() {
        let mut pop = vec![vec![0.0], vec![0.0], vec![0.0]];
        let mut fit = vec![1.0, 1.0, 1.0];
        select(
            &mut pop,
            &mut fit,
            vec![vec![1.0], vec![2.0], vec![3.0]],
            &[2.0, 1.0, 0.5],
        );
        assert_eq!(pop, vec![vec![1.0], vec![0.0], vec![0.0]]);
        assert_eq!(fit, vec![2.0, 1.0, 1.0]);
    }

    #[test]
    fn best_ties_go_to_lowest_index() {
        assert_eq!(best_index(&[1.0, 3.0, 3.0, 2.0]), 1);
    }

    #[test]
    fn one_generation_when_capped() {
        let p = SearchParams { g_max: 1, ..params(10) };
        let init = initial_population(&[0.5; 3], 10, 0.05, 0, 0);
        let evo = evolve(|x| x[0], init, &p, 0, 0).unwrap();
        assert_eq!(evo.generations, 1);
        assert_eq!(evo.best_history.len(), 2);
    }

    #[test]
    fn stagnation_stops_flat_fitness() {
        let init = initial_population(&[0.5; 3], 10, 0.05, 0, 0);
        let evo = evolve(|_| 1.0, init, &params(10), 0, 0).unwrap();
        assert_eq!(evo.generations, 10);
    }

    #[test]
    fn invalid_params_rejected() {
        assert!(SearchParams {
            np: 3,
            top_k: 3,
            ..SearchParams::default()
        }
        .validate()
        .is_err());
        assert!(SearchParams {
            f: 0.0,
            ..SearchParams::default()
        }
        .validate()
        .is_err());
        assert!(SearchParams {
            cr: 1.5,
            ..SearchParams::default()
        }
        .validate()
        .is_err());
        assert!(SearchParams {
            top_k: 300,
            ..SearchParams::default()
        }
        .validate()
        .is_err());
    }

    #[test]
    fn top_k_sorted_descending() {
        let init = initial_population(&[0.5; 2], 20, 0.2, 1, 0);
        let p = SearchParams { g_max: 3, ..params(20) };
        let evo = evolve(|x| x[0] + x[1], init, &p, 1, 0).unwrap();
        let top = evo.top_k(10);
        assert_eq!(top.len(), 10);
        assert!(top.windows(2).all(|w| w[0].1 >= w[1].1));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        #[test]
        fn population_stays_in_unit_box_and_elitist(seed in 0u64..1000, f in 0.05f64..2.0, cr in 0.0f64..=1.0) {
            let p = SearchParams { f, cr, g_max: 15, stagnation_window: 0, ..params(12) };
            let init = initial_population(&[0.9, 0.1, 0.5, 0.95], 12, 0.2, seed, 0);
            let evo = evolve(|x| x.iter().map(|v| (v * 7.0).sin()).sum(), init, &p, seed, 0).unwrap();
            prop_assert!(evo.population.iter().flatten().all(|v| (0.0..=1.0).contains(v)));
            prop_assert!(evo.best_history.windows(2).all(|w| w[1] >= w[0]));
        }

        #[test]
        fn survivors_invariant_under_monotone_transform(seed in 0u64..1000) {
            let p = SearchParams { g_max: 8, stagnation_window: 0, ..params(10) };
            let init = initial_population(&[0.4, 0.6, 0.5], 10, 0.1, seed, 0);
            let f = |x: &[f64]| x[0] - (x[1] - 0.3).powi(2) + 0.5 * x[2];
            let a = evolve(f, init.clone(), &p, seed, 0).unwrap();
            let b = evolve(|x| (3.0 * f(x)).exp() - 2.0, init, &p, seed, 0).unwrap();
            prop_assert_eq!(a.population, b.population);
        }

        #[test]
        fn zero_f_zero_cr_changes_at_most_one_coordinate(seed in 0u64..1000) {
            let pop = initial_population(&[0.3, 0.6, 0.5, 0.2], 6, 0.1, seed, 0);
            let fit: Vec<f64> = (0..6).map(|i| i as f64).collect();
            let y = mutate(&pop, &fit, 0.0, seed, 0, 1);
            let e = crossover(&pop, &y, 0.0, seed, 0, 1);
            prop_assert_eq!(&e, &pop);
        }
    }
}
