use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{squared_distance, Matrix};

pub const MAX_ITER: usize = 300;
pub const TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterResult {
    pub k: usize,
    pub labels: Vec<usize>,
    pub centroids: Matrix,
    pub inertia: f64,
}

impl ClusterResult {
    pub fn members(&self, cluster: usize) -> Vec<usize> {
        (0..self.labels.len())
            .filter(|&i| self.labels[i] == cluster)
            .collect()
    }
}

/// A single seeded Lloyd run with its per-iteration inertia.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeansRun {
    pub result: ClusterResult,
    pub inertia_history: Vec<f64>,
}

fn check_points(points: &[Vec<f64>], k: usize) -> Result<usize> {
    if points.is_empty() {
        return Err(Error::domain("k-means over zero points"));
    }
    if k == 0 || k > points.len() {
        return Err(Error::domain(format!(
            "k = {k} is invalid for {} points",
            points.len()
        )));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::domain("points have inconsistent dimensions"));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite point passed to k-means".into()));
    }
    Ok(dim)
}

fn seed_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &points[chosen[0]]))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // rounding can leave `acc` just under `target`
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            // all remaining points coincide with a center
            (0..n).find(|i| !chosen.contains(i)).unwrap()
        };
        chosen.push(next);
        for (i, p) in points.iter().enumerate() {
            d2[i] = d2[i].min(squared_distance(p, &points[next]));
        }
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

fn nearest(p: &[f64], centroids: &[Vec<f64>]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (c, mu) in centroids.iter().enumerate() {
        let d = squared_distance(p, mu);
        if d < best_d {
            best_d = d;
            best = c;
        }
    }
    best
}

fn means(points: &[Vec<f64>], labels: &[usize], k: usize, dim: usize) -> Vec<Vec<f64>> {
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, v) in sums[l].iter_mut().zip(p) {
            *s += v;
        }
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        for v in s.iter_mut() {
            *v /= c as f64;
        }
    }
    sums
}

/// Moves the point farthest from its centroid into each empty cluster.
fn repair_empty(points: &[Vec<f64>], labels: &mut [usize], centroids: &mut [Vec<f64>]) {
    let k = centroids.len();
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let mut far = None;
        let mut far_d = -1.0;
        for (i, p) in points.iter().enumerate() {
            if counts[labels[i]] < 2 {
                continue;
            }
            let d = squared_distance(p, &centroids[labels[i]]);
            if d > far_d {
                far_d = d;
                far = Some(i);
            }
        }
        let i = far.expect("k <= n guarantees a donor cluster");
        labels[i] = empty;
        centroids[empty] = points[i].clone();
    }
}

fn inertia(points: &[Vec<f64>], labels: &[usize], centroids: &[Vec<f64>]) -> f64 {
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| squared_distance(p, &centroids[l]))
        .sum()
}

fn lloyd(points: &[Vec<f64>], k: usize, dim: usize, rng: &mut ChaCha8Rng) -> KMeansRun {
    let mut centroids = seed_plus_plus(points, k, rng);
    let mut labels = vec![0usize; points.len()];
    let mut history = Vec::new();
    for _ in 0..MAX_ITER {
        for (l, p) in labels.iter_mut().zip(points) {
            *l = nearest(p, &centroids);
        }
        repair_empty(points, &mut labels, &mut centroids);
        let updated = means(points, &labels, k, dim);
        history.push(inertia(points, &labels, &updated));
        let shift: f64 = centroids
            .iter()
            .zip(&updated)
            .map(|(a, b)| squared_distance(a, b))
            .sum();
        centroids = updated;
        if shift <= TOLERANCE {
            break;
        }
    }
    let inertia = *history.last().unwrap();
    KMeansRun {
        result: ClusterResult {
            k,
            labels,
            centroids: Matrix::from_rows(&centroids),
            inertia,
        },
        inertia_history: history,
    }
}

/// All `n_init` runs; run `r` draws from stream `r` of a ChaCha8 generator
/// seeded with `seed`.
pub fn kmeans_runs(points: &[Vec<f64>], k: usize, n_init: usize, seed: u64) -> Result<Vec<KMeansRun>> {
    let dim = check_points(points, k)?;
    if n_init == 0 {
        return Err(Error::domain("n_init must be at least 1"));
    }
    Ok((0..n_init)
        .into_par_iter()
        .map(|run| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(run as u64);
            lloyd(points, k, dim, &mut rng)
        })
        .collect())
}

/// Best of `n_init` k-means++ / Lloyd runs by inertia (lowest run index on ties).
pub fn kmeans(points: &[Vec<f64>], k: usize, n_init: usize, seed: u64) -> Result<ClusterResult> {
    let runs = kmeans_runs(points, k, n_init, seed)?;
    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.result.inertia < runs[best].result.inertia {
            best = i;
        }
    }
    Ok(runs.into_iter().nth(best).unwrap().result)
}

/// Chooses k in `k_lo..=k_hi` at the largest second difference of the
/// inertia curve. Returns the clustering for that k and the inertias for
/// `k_lo-1..=k_hi+1`.
pub fn elbow_cluster(
    points: &[Vec<f64>],
    k_lo: usize,
    k_hi: usize,
    n_init: usize,
    seed: u64,
) -> Result<(ClusterResult, Vec<f64>)> {
    if k_lo < 2 || k_hi < k_lo {
        return Err(Error::domain(format!("invalid elbow range {k_lo}..={k_hi}")));
    }
    if k_hi + 1 > points.len() {
        return Err(Error::domain(format!(
            "elbow range up to {k_hi} needs at least {} points",
            k_hi + 1
        )));
    }
    let mut fits = Vec::new();
    for k in k_lo - 1..=k_hi + 1 {
        fits.push(kmeans(points, k, n_init, seed)?);
    }
    let inertias: Vec<f64> = fits.iter().map(|f| f.inertia).collect();
    let mut best = 1;
    let mut best_d2 = f64::NEG_INFINITY;
    for i in 1..inertias.len() - 1 {
        let d2 = inertias[i - 1] - 2.0 * inertias[i] + inertias[i + 1];
        if d2 > best_d2 {
            best_d2 = d2;
            best = i;
        }
    }
    Ok((fits.swap_remove(best), inertias))
}
