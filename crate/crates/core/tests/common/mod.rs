//! Shared fixtures and independent reference implementations for the
//! integration tests.
#![allow(dead_code)]

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use topic_refine::graph::{Edge, EdgeKind, HeterogeneousGraph, NodeRef, Thresholds};
use topic_refine::linalg::Matrix;
use topic_refine::pipeline::{Overrides, PipelineConfig};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures")
}

/// The bundled fixture configuration with its output redirected to `out`.
pub fn fixture_config(out: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::load(&fixture_dir().join("fixture.toml"), &Overrides::default())
        .expect("bundled fixture config loads");
    cfg.output.dir = out.to_path_buf();
    cfg
}

/// Relative path → contents for every file below `dir`.
pub fn tree_bytes(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, Vec<u8>>) {
        for entry in fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&path).unwrap());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(dir, dir, &mut out);
    out
}

/// Minimum assignment cost by enumerating every injective map from the
/// shorter side into the longer side. Sums run in ascending row order.
pub fn brute_assignment(cost: &[Vec<f64>]) -> f64 {
    let (m, n) = (cost.len(), cost[0].len());
    let transposed = m > n;
    let (short, long) = if transposed { (n, m) } else { (m, n) };
    let mut best = f64::INFINITY;
    let mut chosen: Vec<usize> = Vec::with_capacity(short);
    let mut used = vec![false; long];
    fn rec(
        short: usize,
        cost: &[Vec<f64>],
        transposed: bool,
        used: &mut [bool],
        chosen: &mut Vec<usize>,
        best: &mut f64,
    ) {
        if chosen.len() == short {
            let mut pairs: Vec<(usize, usize)> = chosen
                .iter()
                .enumerate()
                .map(|(s, &l)| if transposed { (l, s) } else { (s, l) })
                .collect();
            pairs.sort_unstable();
            let total: f64 = pairs.iter().map(|&(r, c)| cost[r][c]).sum();
            *best = best.min(total);
            return;
        }
        for j in 0..used.len() {
            if !used[j] {
                used[j] = true;
                chosen.push(j);
                rec(short, cost, transposed, used, chosen, best);
                chosen.pop();
                used[j] = false;
            }
        }
    }
    rec(short, cost, transposed, &mut used, &mut chosen, &mut best);
    best
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Silhouette straight from the definition over a full distance matrix.
pub fn silhouette_oracle(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    let n = points.len();
    let d: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| dist(&points[i], &points[j])).collect()).collect();
    let clusters: BTreeSet<usize> = labels.iter().copied().collect();
    let mut s = Vec::with_capacity(n);
    for i in 0..n {
        let own: Vec<usize> = (0..n).filter(|&j| j != i && labels[j] == labels[i]).collect();
        if own.is_empty() {
            s.push(0.0);
            continue;
        }
        let a = own.iter().map(|&j| d[i][j]).sum::<f64>() / own.len() as f64;
        let b = clusters
            .iter()
            .filter(|&&c| c != labels[i])
            .map(|&c| {
                let m: Vec<usize> = (0..n).filter(|&j| labels[j] == c).collect();
                m.iter().map(|&j| d[i][j]).sum::<f64>() / m.len() as f64
            })
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        s.push(if denom == 0.0 { 0.0 } else { (b - a) / denom });
    }
    s.iter().sum::<f64>() / n as f64
}

/// Davies-Bouldin from the definition with σ the mean distance to the centroid.
pub fn davies_bouldin_oracle(points: &[Vec<f64>], labels: &[usize]) -> f64 {
    let clusters: Vec<usize> = labels.iter().copied().collect::<BTreeSet<_>>().into_iter().collect();
    let dim = points[0].len();
    let members = |c: usize| -> Vec<&Vec<f64>> { points.iter().zip(labels).filter(|(_, &l)| l == c).map(|(p, _)| p).collect() };
    let centroid = |c: usize| -> Vec<f64> {
        let m = members(c);
        (0..dim).map(|k| m.iter().map(|p| p[k]).sum::<f64>() / m.len() as f64).collect()
    };
    let cents: Vec<Vec<f64>> = clusters.iter().map(|&c| centroid(c)).collect();
    let sig: Vec<f64> = clusters
        .iter()
        .zip(&cents)
        .map(|(&c, mu)| {
            let m = members(c);
            m.iter().map(|p| dist(p, mu)).sum::<f64>() / m.len() as f64
        })
        .collect();
    let k = clusters.len();
    (0..k)
        .map(|i| {
            (0..k)
                .filter(|&j| j != i)
                .map(|j| (sig[i] + sig[j]) / dist(&cents[i], &cents[j]))
                .fold(f64::NEG_INFINITY, f64::max)
        })
        .sum::<f64>()
        / k as f64
}

/// Γ(x) for positive integers and half-integers.
fn gamma_half(x: f64) -> f64 {
    if (x - 0.5).abs() < 1e-12 {
        std::f64::consts::PI.sqrt()
    } else if (x - 1.0).abs() < 1e-12 {
        1.0
    } else {
        (x - 1.0) * gamma_half(x - 1.0)
    }
}

fn simpson(f: &dyn Fn(f64) -> f64, a: f64, b: f64, fa: f64, fm: f64, fb: f64, whole: f64, eps: f64, depth: u32) -> f64 {
    let m = (a + b) / 2.0;
    let (lm, rm) = ((a + m) / 2.0, (m + b) / 2.0);
    let (flm, frm) = (f(lm), f(rm));
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    if depth == 0 || (left + right - whole).abs() <= 15.0 * eps {
        return left + right + (left + right - whole) / 15.0;
    }
    simpson(f, a, m, fa, flm, fm, left, eps / 2.0, depth - 1) + simpson(f, m, b, fm, frm, fb, right, eps / 2.0, depth - 1)
}

/// Student t CDF for integer degrees of freedom by adaptive Simpson
/// integration of the density from 0 to |t|.
pub fn t_cdf_oracle(t: f64, df: u32) -> f64 {
    let nu = df as f64;
    let c = gamma_half((nu + 1.0) / 2.0) / ((nu * std::f64::consts::PI).sqrt() * gamma_half(nu / 2.0));
    let pdf = move |x: f64| c * (1.0 + x * x / nu).powf(-(nu + 1.0) / 2.0);
    let b = t.abs();
    let (fa, fm, fb) = (pdf(0.0), pdf(b / 2.0), pdf(b));
    let whole = b / 6.0 * (fa + 4.0 * fm + fb);
    let half = simpson(&pdf, 0.0, b, fa, fm, fb, whole, 1e-12, 50);
    if t >= 0.0 {
        0.5 + half
    } else {
        0.5 - half
    }
}

pub fn random_points(r: &mut impl Rng, n: usize, dim: usize) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| r.random_range(-1.0..1.0)).collect()).collect()
}

fn random_matrix(r: &mut impl Rng, rows: usize, cols: usize) -> Matrix {
    Matrix::from_rows(&random_points(r, rows, cols))
}

/// Four-kind graph small enough for an exhaustive finite-difference check:
/// 2 documents, 3 topics and 2 words with hybrid width 2 and word width 1.
pub fn tiny_graph(seed: u64) -> HeterogeneousGraph {
    let mut r = rng(seed);
    let e = |a: NodeRef, b: NodeRef, kind: EdgeKind, weight: f64| {
        let (a, b) = if a <= b { (a, b) } else { (b, a) };
        Edge { a, b, kind, weight }
    };
    let edges = vec![
        e(NodeRef::doc(0), NodeRef::topic(0), EdgeKind::TopicAssignment, 1.0),
        e(NodeRef::doc(0), NodeRef::topic(1), EdgeKind::TopicAssignment, 1.0),
        e(NodeRef::doc(1), NodeRef::topic(2), EdgeKind::TopicAssignment, 1.0),
        e(NodeRef::topic(0), NodeRef::topic(2), EdgeKind::SimilarTopics, 0.93),
        e(NodeRef::topic(0), NodeRef::word(0), EdgeKind::WordInTopic, 1.0),
        e(NodeRef::topic(1), NodeRef::word(1), EdgeKind::WordInTopic, 1.0),
        e(NodeRef::topic(2), NodeRef::word(1), EdgeKind::WordInTopic, 1.0),
        e(NodeRef::word(0), NodeRef::word(1), EdgeKind::SimilarWords, 0.88),
    ];
    HeterogeneousGraph::from_parts(
        vec!["d1".into(), "d2".into()],
        vec!["long wait".into(), "rude staff".into(), "wait staff".into()],
        vec!["wait".into(), "staff".into()],
        random_matrix(&mut r, 2, 2),
        random_matrix(&mut r, 3, 2),
        random_matrix(&mut r, 2, 1),
        edges,
        Thresholds {
            topic: Some(0.9),
            word: Some(0.85),
        },
    )
    .expect("tiny graph is well formed")
}
