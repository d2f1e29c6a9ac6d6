//! Topic-set quality metrics and the weighted composite score.

use std::collections::BTreeSet;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::corpus::tokenize;
use crate::error::{Error, Result};
use crate::extraction::{elbow_cluster, TopicSet};
use crate::linalg::euclidean;

/// Fraction of unique words over all words of the phrases.
pub fn topic_diversity<S: AsRef<str>>(phrases: &[S]) -> Result<f64> {
    let mut unique = BTreeSet::new();
    let mut total = 0usize;
    for p in phrases {
        for w in tokenize(p.as_ref()) {
            total += 1;
            unique.insert(w);
        }
    }
    if total == 0 {
        return Err(Error::domain("topic diversity of an empty topic set"));
    }
    Ok(unique.len() as f64 / total as f64)
}

/// Mean Jaccard similarity of word sets over unordered pairs.
pub fn mean_pairwise_jaccard<S: AsRef<str>>(phrases: &[S]) -> Result<f64> {
    if phrases.len() < 2 {
        return Err(Error::domain("Jaccard needs at least two topics"));
    }
    let sets: Vec<BTreeSet<String>> = phrases
        .iter()
        .map(|p| tokenize(p.as_ref()).into_iter().collect())
        .collect();
    let mut sum = 0.0;
    let mut pairs = 0usize;
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            let union = sets[i].union(&sets[j]).count();
            let inter = sets[i].intersection(&sets[j]).count();
            sum += if union == 0 { 0.0 } else { inter as f64 / union as f64 };
            pairs += 1;
        }
    }
    Ok(sum / pairs as f64)
}

pub fn coherence_mean(scores: &[f64]) -> Result<f64> {
    if scores.is_empty() {
        return Err(Error::domain("coherence mean of no scores"));
    }
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

fn validate_labels(points: &[Vec<f64>], labels: &[usize]) -> Result<usize> {
    if points.len() != labels.len() {
        return Err(Error::domain("points and labels differ in length"));
    }
    let distinct: BTreeSet<usize> = labels.iter().copied().collect();
    if distinct.len() < 2 {
        return Err(Error::domain("clustering metric needs at least two clusters"));
    }
    Ok(labels.iter().max().unwrap() + 1)
}

/// Mean silhouette with Euclidean distance. Points in singleton clusters
/// contribute 0, as do points with a = b = 0.
pub fn silhouette(points: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    let k = validate_labels(points, labels)?;
    let n = points.len();
    let mut sizes = vec![0usize; k];
    for &l in labels {
        sizes[l] += 1;
    }
    let mut total = 0.0;
    for i in 0..n {
        if sizes[labels[i]] < 2 {
            continue;
        }
        let mut sums = vec![0.0; k];
        for j in 0..n {
            if j != i {
                sums[labels[j]] += euclidean(&points[i], &points[j]);
            }
        }
        let a = sums[labels[i]] / (sizes[labels[i]] - 1) as f64;
        let b = (0..k)
            .filter(|&c| c != labels[i] && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let m = a.max(b);
        if m > 0.0 {
            total += (b - a) / m;
        }
    }
    Ok(total / n as f64)
}

/// Davies-Bouldin index with σ as the mean distance to the own centroid.
pub fn davies_bouldin(points: &[Vec<f64>], labels: &[usize]) -> Result<f64> {
    let k = validate_labels(points, labels)?;
    let dim = points.first().map_or(0, Vec::len);
    let mut centroids = vec![vec![0.0; dim]; k];
    let mut sizes = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        sizes[l] += 1;
        for (c, v) in centroids[l].iter_mut().zip(p) {
            *c += v;
        }
    }
    let used: Vec<usize> = (0..k).filter(|&c| sizes[c] > 0).collect();
    for &c in &used {
        for v in centroids[c].iter_mut() {
            *v /= sizes[c] as f64;
        }
    }
    let mut sigma = vec![0.0; k];
    for (p, &l) in points.iter().zip(labels) {
        sigma[l] += euclidean(p, &centroids[l]);
    }
    for &c in &used {
        sigma[c] /= sizes[c] as f64;
    }
    let mut total = 0.0;
    for &i in &used {
        let mut worst = f64::NEG_INFINITY;
        for &j in &used {
            if i == j {
                continue;
            }
            let d = euclidean(&centroids[i], &centroids[j]);
            if d == 0.0 {
                return Err(Error::domain(format!("clusters {i} and {j} share a centroid")));
            }
            worst = worst.max((sigma[i] + sigma[j]) / d);
        }
        total += worst;
    }
    Ok(total / used.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompositeWeights {
    pub w_td: f64,
    pub w_j: f64,
    pub w_coh: f64,
    pub w_sil: f64,
    pub w_db: f64,
}

impl Default for CompositeWeights {
    fn default() -> Self {
        CompositeWeights {
            w_td: 0.4,
            w_j: 0.15,
            w_coh: 0.2,
            w_sil: 0.2,
            w_db: 0.05,
        }
    }
}

pub const WEIGHT_NAMES: [&str; 5] = ["topic_diversity", "jaccard", "coherence", "silhouette", "davies_bouldin"];

impl CompositeWeights {
    pub fn as_array(&self) -> [f64; 5] {
        [self.w_td, self.w_j, self.w_coh, self.w_sil, self.w_db]
    }

    pub fn from_array(w: [f64; 5]) -> Self {
        CompositeWeights {
            w_td: w[0],
            w_j: w[1],
            w_coh: w[2],
            w_sil: w[3],
            w_db: w[4],
        }
    }

    pub fn validate(&self) -> Result<()> {
        let w = self.as_array();
        if w.iter().any(|&x| !(x >= 0.0)) {
            return Err(Error::Config("composite weights must be non-negative".into()));
        }
        let sum: f64 = w.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("composite weights sum to {sum}, not 1")));
        }
        Ok(())
    }
}

/// Raw metric values of one topic set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RawMetrics {
    pub topic_diversity: f64,
    pub jaccard_mean: f64,
    pub coherence_mean: f64,
    pub silhouette: f64,
    pub davies_bouldin: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalizedMetrics {
    pub topic_diversity: f64,
    pub jaccard: f64,
    pub coherence: f64,
    pub silhouette: f64,
    pub davies_bouldin: f64,
}

impl NormalizedMetrics {
    pub fn as_array(&self) -> [f64; 5] {
        [self.topic_diversity, self.jaccard, self.coherence, self.silhouette, self.davies_bouldin]
    }
}

/// Maps each metric onto [0, 1] with higher meaning better.
pub fn normalize(raw: &RawMetrics) -> NormalizedMetrics {
    NormalizedMetrics {
        topic_diversity: raw.topic_diversity,
        jaccard: 1.0 - raw.jaccard_mean,
        coherence: (raw.coherence_mean + 1.0) / 2.0,
        silhouette: (raw.silhouette + 1.0) / 2.0,
        davies_bouldin: if raw.davies_bouldin.is_infinite() {
            0.0
        } else {
            1.0 / (1.0 + raw.davies_bouldin)
        },
    }
}

pub fn composite(raw: &RawMetrics, weights: &CompositeWeights) -> f64 {
    let n = normalize(raw).as_array();
    let w = weights.as_array();
    n.iter().zip(w).map(|(x, w)| x * w).sum()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub method: String,
    pub topic_diversity: f64,
    pub jaccard_mean: f64,
    pub coherence_mean: f64,
    pub silhouette: f64,
    pub davies_bouldin: f64,
    pub composite: f64,
    pub normalized: NormalizedMetrics,
    /// Cluster count used for silhouette and Davies-Bouldin.
    pub metric_clusters: usize,
}

impl MetricsReport {
    pub fn raw(&self) -> RawMetrics {
        RawMetrics {
            topic_diversity: self.topic_diversity,
            jaccard_mean: self.jaccard_mean,
            coherence_mean: self.coherence_mean,
            silhouette: self.silhouette,
            davies_bouldin: self.davies_bouldin,
        }
    }
}

/// Evaluates a topic set. Silhouette and Davies-Bouldin come from
/// re-clustering the selected embeddings with the elbow rule over
/// `2..=min(k_max, k-1)`, so at least three topics are required.
pub fn evaluate_topic_set(
    set: &TopicSet,
    embeddings: &[Vec<f64>],
    coherence_scores: &[f64],
    weights: &CompositeWeights,
    k_max: usize,
    seed: u64,
) -> Result<MetricsReport> {
    let phrases = set.phrases();
    let selected: Vec<Vec<f64>> = set
        .ids()
        .into_iter()
        .map(|i| {
            embeddings
                .get(i)
                .cloned()
                .ok_or_else(|| Error::domain(format!("no embedding for topic {i}")))
        })
        .collect::<Result<_>>()?;
    if selected.len() < 3 {
        return Err(Error::domain("evaluation needs at least three selected topics"));
    }
    let coh: Vec<f64> = set
        .ids()
        .into_iter()
        .map(|i| {
            coherence_scores
                .get(i)
                .copied()
                .ok_or_else(|| Error::domain(format!("no coherence score for topic {i}")))
        })
        .collect::<Result<_>>()?;
    let k_hi = k_max.min(selected.len() - 1).max(2);
    let (clusters, _) = elbow_cluster(&selected, 2, k_hi, 10, seed)?;
    let raw = RawMetrics {
        topic_diversity: topic_diversity(&phrases)?,
        jaccard_mean: mean_pairwise_jaccard(&phrases)?,
        coherence_mean: coherence_mean(&coh)?,
        silhouette: silhouette(&selected, &clusters.labels)?,
        davies_bouldin: davies_bouldin(&selected, &clusters.labels)?,
    };
    Ok(MetricsReport {
        method: set.method.name().to_string(),
        topic_diversity: raw.topic_diversity,
        jaccard_mean: raw.jaccard_mean,
        coherence_mean: raw.coherence_mean,
        silhouette: raw.silhouette,
        davies_bouldin: raw.davies_bouldin,
        composite: composite(&raw, weights),
        normalized: normalize(&raw),
        metric_clusters: clusters.k,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityRow {
    pub weight: String,
    pub delta: f64,
    pub composite: f64,
}

/// Weights after adding `delta` to weight `index` and rescaling the others
/// proportionally so the sum stays 1.
pub fn perturb_weights(weights: &CompositeWeights, index: usize, delta: f64) -> Result<CompositeWeights> {
    let w = weights.as_array();
    if index >= w.len() {
        return Err(Error::domain(format!("weight index {index} out of range")));
    }
    if delta == 0.0 {
        return Ok(*weights);
    }
    let target = w[index] + delta;
    let rest = 1.0 - w[index];
    if !(0.0..=1.0).contains(&target) {
        return Err(Error::domain(format!(
            "delta {delta} drives {} outside [0, 1]",
            WEIGHT_NAMES[index]
        )));
    }
    if rest <= 0.0 {
        return Err(Error::domain("cannot rescale when one weight holds all the mass"));
    }
    let scale = (1.0 - target) / rest;
    let mut out = [0.0; 5];
    for (j, o) in out.iter_mut().enumerate() {
        *o = if j == index { target } else { w[j] * scale };
        if *o < 0.0 {
            return Err(Error::domain(format!("delta {delta} makes a weight negative")));
        }
    }
    Ok(CompositeWeights::from_array(out))
}

/// One row per weight and signed delta (a single row for delta 0).
pub fn sensitivity(raw: &RawMetrics, weights: &CompositeWeights, deltas: &[f64]) -> Result<Vec<SensitivityRow>> {
    let mut rows = Vec::new();
    for (i, name) in WEIGHT_NAMES.iter().enumerate() {
        for &d in deltas {
            let signed: &[f64] = if d == 0.0 { &[0.0] } else { &[-d, d] };
            for &s in signed {
                let w = perturb_weights(weights, i, s)?;
                rows.push(SensitivityRow {
                    weight: name.to_string(),
                    delta: s,
                    composite: composite(raw, &w),
                });
            }
        }
    }
    Ok(rows)
}

pub fn sensitivity_csv(rows: &[SensitivityRow]) -> String {
    let mut out = String::from("weight,delta,composite\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{}", r.weight, r.delta, r.composite);
    }
    out
}

/// Report table with the columns of the per-method results table.
pub fn reports_csv(reports: &[MetricsReport]) -> String {
    let mut out = String::from("method,topic_diversity,jaccard,coherence,silhouette,davies_bouldin,composite\n");
    for r in reports {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.method, r.topic_diversity, r.jaccard_mean, r.coherence_mean, r.silhouette, r.davies_bouldin, r.composite
        );
    }
    out
}
