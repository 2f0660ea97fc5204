//! Flat-kernel mean shift.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rng;

const MAX_ITER: usize = 300;
const TOL_FRACTION: f64 = 1e-3;
/// Floor for a degenerate bandwidth estimate (all sampled points equal).
const MIN_BANDWIDTH: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct Clustering {
    /// Modes ordered by decreasing support.
    pub modes: Vec<Vec<f64>>,
    /// Index into `modes` for every input point.
    pub labels: Vec<usize>,
}

impl Clustering {
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.modes.len()];
        for (i, &l) in self.labels.iter().enumerate() {
            out[l].push(i);
        }
        out
    }
}

fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn climb(points: &[Vec<f64>], start: &[f64], bandwidth: f64) -> (Vec<f64>, usize) {
    let b2 = bandwidth * bandwidth;
    let tol2 = (TOL_FRACTION * bandwidth).powi(2);
    let mut x = start.to_vec();
    let mut support = 0;
    for _ in 0..MAX_ITER {
        let mut sum = vec![0.0; x.len()];
        let mut n = 0usize;
        for p in points {
            if dist2(p, &x) <= b2 {
                sum.iter_mut().zip(p).for_each(|(s, v)| *s += v);
                n += 1;
            }
        }
        if n == 0 {
            break;
        }
        let next: Vec<f64> = sum.into_iter().map(|s| s / n as f64).collect();
        support = n;
        let moved = dist2(&next, &x);
        x = next;
        if moved <= tol2 {
            break;
        }
    }
    (x, support)
}

/// Every point seeds a climb; converged modes closer than `bandwidth`
/// to a better-supported mode are merged into it, then each point is
/// labelled with its nearest surviving mode.
pub fn meanshift_cluster(points: &[Vec<f64>], bandwidth: f64) -> Result<Clustering> {
    if !(bandwidth > 0.0) || !bandwidth.is_finite() {
        return Err(Error::Precondition(format!(
            "bandwidth must be positive, got {bandwidth}"
        )));
    }
    if points.is_empty() {
        return Err(Error::NoSegments);
    }
    let dim = points[0].len();
    if let Some(bad) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::DimensionMismatch {
            expected: dim,
            actual: bad.len(),
        });
    }
    let mut climbed: Vec<(Vec<f64>, usize, usize)> = points
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let (m, s) = climb(points, p, bandwidth);
            (m, s, i)
        })
        .collect();
    climbed.sort_by(|a, b| b.1.cmp(&a.1).then(a.2.cmp(&b.2)));

    let b2 = bandwidth * bandwidth;
    let mut modes: Vec<Vec<f64>> = Vec::new();
    for (m, _, _) in climbed {
        if modes.iter().all(|k| dist2(k, &m) > b2) {
            modes.push(m);
        }
    }
    let labels = points
        .iter()
        .map(|p| {
            let mut best = 0;
            let mut best_d = f64::INFINITY;
            for (k, m) in modes.iter().enumerate() {
                let d = dist2(p, m);
                if d < best_d {
                    best_d = d;
                    best = k;
                }
            }
            best
        })
        .collect();
    Ok(Clustering { modes, labels })
}

/// Median pairwise Euclidean distance over a seeded subsample of at most
/// `sample` points.
pub fn median_bandwidth(points: &[Vec<f64>], sample: usize, seed: u64) -> Result<f64> {
    if points.len() < 2 {
        return Err(Error::Precondition(
            "need at least two points to estimate a bandwidth".into(),
        ));
    }
    let idx: Vec<usize> = if points.len() > sample {
        let mut r = rng::stream(seed, &[0xB0]);
        let mut v = rand::seq::index::sample(&mut r, points.len(), sample.max(2)).into_vec();
        v.sort_unstable();
        v
    } else {
        (0..points.len()).collect()
    };
    let mut d = Vec::with_capacity(idx.len() * (idx.len() - 1) / 2);
    for (a, &i) in idx.iter().enumerate() {
        for &j in &idx[a + 1..] {
            d.push(dist2(&points[i], &points[j]).sqrt());
        }
    }
    d.sort_by(f64::total_cmp);
    let n = d.len();
    let median = if n % 2 == 1 {
        d[n / 2]
    } else {
        0.5 * (d[n / 2 - 1] + d[n / 2])
    };
    Ok(median.max(MIN_BANDWIDTH))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;
    use rand_distr::{Distribution, Normal};

    pub(crate) fn blobs(seed: u64, per: usize, spread: f64) -> (Vec<Vec<f64>>, Vec<usize>) {
        let centers = [[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]];
        let n = Normal::new(0.0, spread).unwrap();
        let mut r = rng::stream(seed, &[]);
        let mut pts = Vec::new();
        let mut truth = Vec::new();
        for (k, c) in centers.iter().enumerate() {
            for _ in 0..per {
                pts.push(vec![c[0] + n.sample(&mut r), c[1] + n.sample(&mut r)]);
                truth.push(k);
            }
        }
        (pts, truth)
    }

    #[test]
    fn separated_blobs_are_recovered() {
        let (pts, truth) = blobs(3, 40, 0.15);
        let c = meanshift_cluster(&pts, 1.0).unwrap();
        assert_eq!(c.modes.len(), 3);
        for k in 0..3 {
            let labels: Vec<usize> = (0..pts.len()).filter(|&i| truth[i] == k).map(|i| c.labels[i]).collect();
            assert!(labels.iter().all(|&l| l == labels[0]));
        }
    }

    #[test]
    fn identical_points_form_one_cluster() {
        let pts = vec![vec![1.0, 2.0]; 7];
        let c = meanshift_cluster(&pts, 0.5).unwrap();
        assert_eq!(c.modes, vec![vec![1.0, 2.0]]);
        assert_eq!(c.labels, vec![0; 7]);
        assert_eq!(median_bandwidth(&pts, 200, 0).unwrap(), MIN_BANDWIDTH);
    }

    #[test]
    fn bad_bandwidth_is_rejected() {
        let pts = vec![vec![0.0]; 3];
        for b in [0.0, -1.0, f64::NAN] {
            assert!(matches!(meanshift_cluster(&pts, b), Err(Error::Precondition(_))));
        }
        assert!(matches!(meanshift_cluster(&[], 1.0), Err(Error::NoSegments)));
    }

    #[test]
    fn median_of_pairwise_distances() {
        // distances: 1, 3, 2 -> median 2
        let pts = vec![vec![0.0], vec![1.0], vec![3.0]];
        assert_eq!(median_bandwidth(&pts, 200, 0).unwrap(), 2.0);
        // four points on a line: 1,2,3,1,2,1 -> median 1.5
        let pts = vec![vec![0.0], vec![1.0], vec![2.0], vec![3.0]];
        assert_eq!(median_bandwidth(&pts, 200, 0).unwrap(), 1.5);
    }

    #[test]
    fn huge_bandwidth_collapses_everything() {
        let mut r = rng::stream(8, &[]);
        let pts: Vec<Vec<f64>> = (0..30)
            .map(|_| vec![r.random_range(0.0..1.0), r.random_range(0.0..1.0)])
            .collect();
        let c = meanshift_cluster(&pts, 100.0).unwrap();
        assert_eq!(c.modes.len(), 1);
    }
}
