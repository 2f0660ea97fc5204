//! Elitist non-dominated sorting GA over bound vectors.
//!
//! An individual is `[l_0, u_0, l_1, u_1, ...]` in normalized units.
//! Every evaluated individual also feeds an archive keyed by its
//! (covered, covered-incorrect) counts; the returned front is read from
//! the archive, so a front point found once is never lost.

use std::collections::{BTreeMap, HashSet};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{non_dominated, objectives, Objectives, RangeGuideline, ValidationRecord};
use crate::error::{Error, Result};
use crate::paramspec::{ParameterSpec, ParameterTable};
use crate::rng;

/// Smallest interval width in normalized units when no grid is set.
const MIN_GAP: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MoeaParams {
    pub population: usize,
    pub generations: usize,
    pub crossover_prob: f64,
    /// SBX distribution index.
    pub eta_c: f64,
    /// Polynomial mutation distribution index.
    pub eta_m: f64,
    /// Per-variable mutation probability; `None` means `1 / (2 D)`.
    pub mutation_prob: Option<f64>,
    /// Restrict every bound end to `grid` evenly spaced points.
    pub grid: Option<usize>,
}

impl Default for MoeaParams {
    fn default() -> Self {
        Self {
            population: 100,
            generations: 200,
            crossover_prob: 0.9,
            eta_c: 15.0,
            eta_m: 20.0,
            mutation_prob: None,
            grid: None,
        }
    }
}

impl MoeaParams {
    pub fn validate(&self) -> Result<()> {
        if self.population < 4 || self.population % 2 != 0 {
            return Err(Error::Precondition(format!(
                "MOEA population must be even and at least 4, got {}",
                self.population
            )));
        }
        if !(0.0..=1.0).contains(&self.crossover_prob) {
            return Err(Error::Precondition("crossover probability must lie in [0, 1]".into()));
        }
        if let Some(p) = self.mutation_prob {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Precondition("mutation probability must lie in [0, 1]".into()));
            }
        }
        if matches!(self.grid, Some(g) if g < 2) {
            return Err(Error::Precondition("grid needs at least two points".into()));
        }
        Ok(())
    }
}

/// Grid point `k` of `n` on a parameter's range; the ends are exact.
pub fn grid_value(spec: &ParameterSpec, k: usize, n: usize) -> f64 {
    if k + 1 >= n {
        spec.upper
    } else {
        spec.lower + k as f64 * spec.width() / (n - 1) as f64
    }
}

fn to_raw(spec: &ParameterSpec, u: f64, grid: Option<usize>) -> f64 {
    match grid {
        Some(n) => grid_value(spec, (u * (n - 1) as f64).round() as usize, n),
        None if u >= 1.0 => spec.upper,
        None => (spec.lower + u * spec.width()).clamp(spec.lower, spec.upper),
    }
}

/// Clip, snap to the grid, order each pair and keep a positive width.
fn repair(x: &mut [f64], grid: Option<usize>) {
    let gap = grid.map_or(MIN_GAP, |n| 1.0 / (n - 1) as f64);
    for pair in x.chunks_exact_mut(2) {
        for v in pair.iter_mut() {
            *v = v.clamp(0.0, 1.0);
            if let Some(n) = grid {
                *v = (*v * (n - 1) as f64).round() / (n - 1) as f64;
            }
        }
        if pair[0] > pair[1] {
            pair.swap(0, 1);
        }
        if pair[1] - pair[0] < gap * 0.5 {
            if pair[0] + gap <= 1.0 + 1e-12 {
                pair[1] = (pair[0] + gap).min(1.0);
            } else {
                pair[0] = (pair[1] - gap).max(0.0);
            }
        }
    }
}

struct Individual {
    x: Vec<f64>,
    obj: Objectives,
}

impl Individual {
    /// Minimization form.
    fn key(&self) -> (f64, f64) {
        (self.obj.f1, -(self.obj.f2 as f64))
    }
}

fn dominates_min(a: (f64, f64), b: (f64, f64)) -> bool {
    a.0 <= b.0 && a.1 <= b.1 && (a.0 < b.0 || a.1 < b.1)
}

/// Fronts as index lists, best first.
fn fast_non_dominated_sort(pop: &[Individual]) -> Vec<Vec<usize>> {
    let n = pop.len();
    let mut dominated_by: Vec<Vec<usize>> = vec![Vec::new(); n];
    let mut count = vec![0usize; n];
    let mut fronts = vec![Vec::new()];
    for p in 0..n {
        for q in 0..n {
            if dominates_min(pop[p].key(), pop[q].key()) {
                dominated_by[p].push(q);
            } else if dominates_min(pop[q].key(), pop[p].key()) {
                count[p] += 1;
            }
        }
        if count[p] == 0 {
            fronts[0].push(p);
        }
    }
    let mut i = 0;
    while !fronts[i].is_empty() {
        let mut next = Vec::new();
        for &p in &fronts[i] {
            for &q in &dominated_by[p] {
                count[q] -= 1;
                if count[q] == 0 {
                    next.push(q);
                }
            }
        }
        i += 1;
        fronts.push(next);
    }
    fronts.pop();
    fronts
}

fn crowding_distance(pop: &[Individual], front: &[usize]) -> Vec<f64> {
    let mut d = vec![0.0; front.len()];
    if front.len() <= 2 {
        return vec![f64::INFINITY; front.len()];
    }
    for m in 0..2 {
        let val = |i: usize| {
            if m == 0 {
                pop[front[i]].key().0
            } else {
                pop[front[i]].key().1
            }
        };
        let mut order: Vec<usize> = (0..front.len()).collect();
        order.sort_by(|&a, &b| val(a).total_cmp(&val(b)).then(a.cmp(&b)));
        let (lo, hi) = (val(order[0]), val(order[front.len() - 1]));
        d[order[0]] = f64::INFINITY;
        d[order[front.len() - 1]] = f64::INFINITY;
        if hi > lo {
            for k in 1..front.len() - 1 {
                d[order[k]] += (val(order[k + 1]) - val(order[k - 1])) / (hi - lo);
            }
        }
    }
    d
}

fn sbx<R: Rng>(r: &mut R, a: &mut [f64], b: &mut [f64], eta: f64) {
    for j in 0..a.len() {
        if r.random::<f64>() > 0.5 || (a[j] - b[j]).abs() < 1e-14 {
            continue;
        }
        let u: f64 = r.random();
        let beta = if u <= 0.5 {
            (2.0 * u).powf(1.0 / (eta + 1.0))
        } else {
            (1.0 / (2.0 * (1.0 - u))).powf(1.0 / (eta + 1.0))
        };
        let (x1, x2) = (a[j], b[j]);
        a[j] = 0.5 * ((1.0 + beta) * x1 + (1.0 - beta) * x2);
        b[j] = 0.5 * ((1.0 - beta) * x1 + (1.0 + beta) * x2);
    }
}

/// On a grid a mutated variable moves at least one grid step, otherwise
/// snapping would undo most small perturbations.
fn polynomial_mutation<R: Rng>(r: &mut R, x: &mut [f64], eta: f64, p: f64, grid: Option<usize>) {
    for v in x.iter_mut() {
        if r.random::<f64>() >= p {
            continue;
        }
        let u: f64 = r.random();
        let delta = if u < 0.5 {
            (2.0 * u).powf(1.0 / (eta + 1.0)) - 1.0
        } else {
            1.0 - (2.0 * (1.0 - u)).powf(1.0 / (eta + 1.0))
        };
        *v += match grid {
            Some(n) => {
                let step = 1.0 / (n - 1) as f64;
                delta.signum() * delta.abs().max(step)
            }
            None => delta,
        };
    }
}

struct Problem<'a> {
    table: &'a ParameterTable,
    records: &'a [ValidationRecord],
    grid: Option<usize>,
}

impl Problem<'_> {
    fn bounds(&self, x: &[f64]) -> Vec<(f64, f64)> {
        self.table
            .specs()
            .iter()
            .zip(x.chunks_exact(2))
            .map(|(s, p)| (to_raw(s, p[0], self.grid), to_raw(s, p[1], self.grid)))
            .collect()
    }

    fn evaluate(&self, xs: Vec<Vec<f64>>) -> Vec<Individual> {
        xs.into_par_iter()
            .map(|x| {
                let obj = objectives(&self.bounds(&x), self.records);
                Individual { x, obj }
            })
            .collect()
    }
}

const REMUTATE_ATTEMPTS: usize = 20;

fn bits(x: &[f64]) -> Vec<u64> {
    x.iter().map(|v| v.to_bits()).collect()
}

fn width(x: &[f64]) -> f64 {
    x.chunks_exact(2).map(|p| p[1] - p[0]).sum()
}

/// Wider boxes win; equal widths fall back to the lexicographically
/// smaller decision vector.
fn better_representative(candidate: &[f64], incumbent: &[f64]) -> bool {
    let (wc, wi) = (width(candidate), width(incumbent));
    if wc != wi {
        return wc > wi;
    }
    candidate
        .iter()
        .zip(incumbent)
        .map(|(a, b)| a.total_cmp(b))
        .find(|o| o.is_ne())
        .is_some_and(|o| o.is_lt())
}

fn archive_insert(archive: &mut BTreeMap<(usize, usize), Vec<f64>>, ind: &Individual) {
    let key = (ind.obj.f2, ind.obj.covered_incorrect);
    match archive.get_mut(&key) {
        Some(x) => {
            if better_representative(&ind.x, x) {
                *x = ind.x.clone();
            }
        }
        None => {
            archive.insert(key, ind.x.clone());
        }
    }
}

fn tournament<R: Rng>(r: &mut R, rank: &[usize], crowd: &[f64]) -> usize {
    let a = r.random_range(0..rank.len());
    let b = r.random_range(0..rank.len());
    if rank[a] != rank[b] {
        return if rank[a] < rank[b] { a } else { b };
    }
    if crowd[a] != crowd[b] {
        return if crowd[a] > crowd[b] { a } else { b };
    }
    a.min(b)
}

fn rank_and_crowd(pop: &[Individual]) -> (Vec<Vec<usize>>, Vec<usize>, Vec<f64>) {
    let fronts = fast_non_dominated_sort(pop);
    let mut rank = vec![0; pop.len()];
    let mut crowd = vec![0.0; pop.len()];
    for (k, f) in fronts.iter().enumerate() {
        let d = crowding_distance(pop, f);
        for (&i, di) in f.iter().zip(d) {
            rank[i] = k;
            crowd[i] = di;
        }
    }
    (fronts, rank, crowd)
}

/// Environmental selection. Counts make objective ties common, so only one
/// individual per objective pair (the widest box) takes part in the usual
/// rank and crowding truncation; the remaining copies fill leftover slots.
fn survivors(pop: &[Individual], n: usize) -> Vec<usize> {
    let mut lead: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    for (i, ind) in pop.iter().enumerate() {
        let key = (ind.obj.f2, ind.obj.covered_incorrect);
        match lead.get(&key) {
            Some(&j) if !better_representative(&ind.x, &pop[j].x) => {}
            _ => {
                lead.insert(key, i);
            }
        }
    }
    let leads: Vec<usize> = lead.values().copied().collect();
    let view: Vec<Individual> = leads
        .iter()
        .map(|&i| Individual {
            x: Vec::new(),
            obj: pop[i].obj,
        })
        .collect();
    let (fronts, rank, _) = rank_and_crowd(&view);
    let mut keep = Vec::with_capacity(n);
    for f in fronts {
        if keep.len() + f.len() <= n {
            keep.extend(f.iter().map(|&k| leads[k]));
        } else {
            let d = crowding_distance(&view, &f);
            let mut order: Vec<usize> = (0..f.len()).collect();
            order.sort_by(|&a, &b| d[b].total_cmp(&d[a]).then(f[a].cmp(&f[b])));
            keep.extend(order.into_iter().take(n - keep.len()).map(|k| leads[f[k]]));
            return keep;
        }
    }
    let lead_rank: BTreeMap<(usize, usize), usize> = lead.keys().zip(&rank).map(|(k, &r)| (*k, r)).collect();
    let mut rest: Vec<usize> = (0..pop.len()).filter(|i| !leads.contains(i)).collect();
    rest.sort_by_key(|&i| (lead_rank[&(pop[i].obj.f2, pop[i].obj.covered_incorrect)], i));
    keep.extend(rest.into_iter().take(n - keep.len()));
    keep
}

/// Non-dominated range guidelines for `records`, sorted by `f2` ascending.
pub fn pareto_optimize(
    records: &[ValidationRecord],
    table: &ParameterTable,
    params: &MoeaParams,
    seed: u64,
) -> Result<Vec<RangeGuideline>> {
    params.validate()?;
    if records.is_empty() {
        return Err(Error::NoRecords);
    }
    for r in records {
        table.check_dim(&r.config)?;
    }
    let dim = table.dim();
    let n_vars = 2 * dim;
    let p_mut = params.mutation_prob.unwrap_or(1.0 / n_vars as f64);
    let problem = Problem {
        table,
        records,
        grid: params.grid,
    };
    let mut archive: BTreeMap<(usize, usize), Vec<f64>> = BTreeMap::new();

    let mut r = rng::stream(seed, &[0x6E5A, 0]);
    let init: Vec<Vec<f64>> = (0..params.population)
        .map(|i| {
            let mut x: Vec<f64> = if i == 0 {
                (0..dim).flat_map(|_| [0.0, 1.0]).collect()
            } else {
                (0..n_vars).map(|_| r.random::<f64>()).collect()
            };
            repair(&mut x, params.grid);
            x
        })
        .collect();
    let mut pop = problem.evaluate(init);
    pop.iter().for_each(|ind| archive_insert(&mut archive, ind));
    // On a grid the box space is finite: children already evaluated are
    // mutated again so the budget goes to unseen boxes.
    let mut seen: HashSet<Vec<u64>> = HashSet::new();
    if params.grid.is_some() {
        seen.extend(pop.iter().map(|ind| bits(&ind.x)));
    }

    for g in 1..=params.generations {
        let mut r = rng::stream(seed, &[0x6E5A, g as u64]);
        let (_, rank, crowd) = rank_and_crowd(&pop);
        let mut children = Vec::with_capacity(params.population);
        while children.len() < params.population {
            let mut a = pop[tournament(&mut r, &rank, &crowd)].x.clone();
            let mut b = pop[tournament(&mut r, &rank, &crowd)].x.clone();
            if r.random::<f64>() < params.crossover_prob {
                sbx(&mut r, &mut a, &mut b, params.eta_c);
            }
            for c in [&mut a, &mut b] {
                polynomial_mutation(&mut r, c, params.eta_m, p_mut, params.grid);
                repair(c, params.grid);
                if params.grid.is_some() {
                    for _ in 0..REMUTATE_ATTEMPTS {
                        if seen.insert(bits(c)) {
                            break;
                        }
                        polynomial_mutation(&mut r, c, params.eta_m, p_mut.max(0.5), params.grid);
                        repair(c, params.grid);
                    }
                }
            }
            children.push(a);
            children.push(b);
        }
        let offspring = problem.evaluate(children);
        offspring.iter().for_each(|ind| archive_insert(&mut archive, ind));

        pop.extend(offspring);
        let mut keep = survivors(&pop, params.population);
        keep.sort_unstable();
        let mut slots: Vec<Option<Individual>> = pop.into_iter().map(Some).collect();
        pop = keep.into_iter().map(|i| slots[i].take().expect("kept once")).collect();
    }

    let mut front: Vec<RangeGuideline> = non_dominated(&archive)
        .into_iter()
        .map(|(_, x)| {
            let bounds = problem.bounds(&x);
            let obj = objectives(&bounds, records);
            RangeGuideline::new(table, bounds, obj)
        })
        .collect();
    front.sort_by(|a, b| a.f2.cmp(&b.f2).then(a.f1.total_cmp(&b.f1)));
    Ok(front)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn repair_orders_and_separates() {
        let mut x = vec![0.8, 0.2, 0.5, 0.5, 1.0, 1.0];
        repair(&mut x, None);
        assert_eq!(&x[..2], &[0.2, 0.8]);
        assert!(x[3] > x[2]);
        assert!(x[5] > x[4] && x[5] == 1.0);
        let mut g = vec![0.33, 0.31, 1.2, -0.4];
        repair(&mut g, Some(11));
        assert!((g[0] - 0.3).abs() < 1e-12 && (g[1] - 0.4).abs() < 1e-12);
        assert_eq!(&g[2..], &[0.0, 1.0]);
    }

    #[test]
    fn sorting_and_crowding() {
        let mk = |f1: f64, f2: usize| Individual {
            x: vec![],
            obj: Objectives {
                f1,
                f2,
                covered_incorrect: 0,
            },
        };
        let pop = vec![mk(0.1, 10), mk(0.2, 20), mk(0.3, 5), mk(0.0, 1), mk(0.2, 20)];
        let fronts = fast_non_dominated_sort(&pop);
        assert_eq!(fronts[0], vec![0, 1, 3, 4]);
        assert_eq!(fronts[1], vec![2]);
        let d = crowding_distance(&pop, &fronts[0]);
        assert!(d[2].is_infinite());
        assert!(d[0].is_finite() && d[0] > 0.0);
    }

    #[test]
    fn grid_ends_are_exact() {
        let spec = ParameterSpec {
            name: "p".into(),
            lower: 0.1,
            upper: 0.7,
            default: 0.3,
            unit: crate::paramspec::Unit::Gain,
            module_tag: crate::paramspec::ModuleTag::Controller,
        };
        assert_eq!(grid_value(&spec, 0, 11), 0.1);
        assert_eq!(grid_value(&spec, 10, 11), 0.7);
        assert_eq!(to_raw(&spec, 1.0, None), 0.7);
        assert_eq!(to_raw(&spec, 0.0, None), 0.1);
    }
}
