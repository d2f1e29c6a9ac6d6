use std::collections::HashMap;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::assignment::hungarian;
use super::idf::IdfTable;
use crate::corpus::TopicPhrase;
use crate::error::{Error, Result};
use crate::linalg::{cosine, Matrix};

/// Word → raw word vector.
pub type WordVectors = HashMap<String, Vec<f64>>;

/// Anything made of an ordered list of words.
pub trait WordBag: Sync {
    fn words(&self) -> &[String];
}

impl WordBag for TopicPhrase {
    fn words(&self) -> &[String] {
        &self.words
    }
}

impl WordBag for Vec<String> {
    fn words(&self) -> &[String] {
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgsWeights {
    pub w_wmd: f64,
    pub w_idf: f64,
}

impl Default for SgsWeights {
    fn default() -> Self {
        SgsWeights {
            w_wmd: 0.9,
            w_idf: 0.099,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Wmd,
    Cosine,
    Hybrid,
    Relative,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityMatrix {
    pub n: usize,
    pub stage: Stage,
    pub values: Matrix,
}

impl SimilarityMatrix {
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values.get(i, j)
    }

    /// Strict upper-triangle entries in row-major order.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n * self.n.saturating_sub(1) / 2);
        for i in 0..self.n {
            for j in i + 1..self.n {
                out.push(self.values.get(i, j));
            }
        }
        out
    }

    pub fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "n": self.n,
            "stage": self.stage,
            "values": self.values.as_slice(),
        })
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for i in 0..self.n {
            let row: Vec<String> = self.values.row(i).iter().map(|v| v.to_string()).collect();
            let _ = writeln!(out, "{}", row.join(","));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RelativeTransformParams {
    pub mu: f64,
    pub sigma: f64,
}

/// Every word of one side lacked a vector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FilteredEmpty;

fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    // Zero vectors were filtered out, so cosine is defined.
    1.0 - cosine(a, b).unwrap_or(0.0)
}

fn weighted_vectors(words: &[String], vectors: &WordVectors, idf: &IdfTable, w_idf: f64) -> Vec<Vec<f64>> {
    words
        .iter()
        .filter_map(|w| {
            let v = vectors.get(w)?;
            if v.iter().all(|&x| x == 0.0) {
                return None;
            }
            let scale = 1.0 + w_idf * idf.get(w);
            Some(v.iter().map(|x| x * scale).collect())
        })
        .collect()
}

/// Assignment-based word-level similarity of two word lists.
///
/// Words without a vector are filtered first; lengths in the normalizer are
/// the filtered lengths.
pub fn wmd_similarity(
    t1: &[String],
    t2: &[String],
    vectors: &WordVectors,
    idf: &IdfTable,
    w_idf: f64,
) -> std::result::Result<f64, FilteredEmpty> {
    let e1 = weighted_vectors(t1, vectors, idf, w_idf);
    let e2 = weighted_vectors(t2, vectors, idf, w_idf);
    if e1.is_empty() || e2.is_empty() {
        return Err(FilteredEmpty);
    }
    let mut d = Matrix::zeros(e1.len(), e2.len());
    for (i, a) in e1.iter().enumerate() {
        for (j, b) in e2.iter().enumerate() {
            d.set(i, j, cosine_distance(a, b));
        }
    }
    let total = hungarian(&d).expect("non-empty finite distance matrix").total_cost;
    Ok(1.0 - total / (2.0 * e1.len().max(e2.len()) as f64))
}

/// Cosine similarity clamped to [0, 1].
pub fn cosine_topic_similarity(e1: &[f64], e2: &[f64]) -> Result<f64> {
    cosine(e1, e2)
        .map(|c| c.clamp(0.0, 1.0))
        .ok_or_else(|| Error::domain("cosine similarity with a zero vector"))
}

/// Fills a symmetric matrix from a pair function over the strict upper
/// triangle; the diagonal gets `diag`.
pub(crate) fn pairwise<F>(n: usize, diag: f64, parallel: bool, f: F) -> Result<Matrix>
where
    F: Fn(usize, usize) -> Result<f64> + Sync,
{
    let row = |i: usize| -> Result<Vec<f64>> { (i + 1..n).map(|j| f(i, j)).collect() };
    let rows: Vec<Vec<f64>> = if parallel {
        (0..n).into_par_iter().map(row).collect::<Result<_>>()?
    } else {
        (0..n).map(row).collect::<Result<_>>()?
    };
    let mut m = Matrix::zeros(n, n);
    for (i, r) in rows.into_iter().enumerate() {
        m.set(i, i, diag);
        for (off, v) in r.into_iter().enumerate() {
            let j = i + 1 + off;
            m.set(i, j, v);
            m.set(j, i, v);
        }
    }
    Ok(m)
}

pub fn wmd_matrix<T: WordBag>(topics: &[T], vectors: &WordVectors, idf: &IdfTable, w_idf: f64) -> Result<SimilarityMatrix> {
    wmd_matrix_with(topics, vectors, idf, w_idf, true)
}

pub(crate) fn wmd_matrix_with<T: WordBag>(
    topics: &[T],
    vectors: &WordVectors,
    idf: &IdfTable,
    w_idf: f64,
    parallel: bool,
) -> Result<SimilarityMatrix> {
    let values = pairwise(topics.len(), 1.0, parallel, |i, j| {
        Ok(wmd_similarity(topics[i].words(), topics[j].words(), vectors, idf, w_idf).unwrap_or(0.0))
    })?;
    Ok(SimilarityMatrix {
        n: topics.len(),
        stage: Stage::Wmd,
        values,
    })
}

pub fn cosine_matrix(embeddings: &[Vec<f64>]) -> Result<SimilarityMatrix> {
    let values = pairwise(embeddings.len(), 1.0, true, |i, j| {
        cosine_topic_similarity(&embeddings[i], &embeddings[j])
    })?;
    Ok(SimilarityMatrix {
        n: embeddings.len(),
        stage: Stage::Cosine,
        values,
    })
}

/// Entrywise `w·wmd + (1 − w)·cos`, unit diagonal.
pub fn combine_hybrid(wmd: &SimilarityMatrix, cos: &SimilarityMatrix, w_wmd: f64) -> Result<SimilarityMatrix> {
    if wmd.n != cos.n {
        return Err(Error::domain(format!(
            "similarity matrices disagree in size ({} vs {})",
            wmd.n, cos.n
        )));
    }
    let n = wmd.n;
    let mut values = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let v = if i == j {
                1.0
            } else {
                w_wmd * wmd.get(i, j) + (1.0 - w_wmd) * cos.get(i, j)
            };
            values.set(i, j, v);
        }
    }
    Ok(SimilarityMatrix {
        n,
        stage: Stage::Hybrid,
        values,
    })
}

pub fn hybrid_matrix<T: WordBag>(
    topics: &[T],
    embeddings: &[Vec<f64>],
    vectors: &WordVectors,
    idf: &IdfTable,
    weights: SgsWeights,
) -> Result<SimilarityMatrix> {
    if topics.len() != embeddings.len() {
        return Err(Error::domain(format!(
            "{} topics but {} embeddings",
            topics.len(),
            embeddings.len()
        )));
    }
    let wmd = wmd_matrix(topics, vectors, idf, weights.w_idf)?;
    let cos = cosine_matrix(embeddings)?;
    combine_hybrid(&wmd, &cos, weights.w_wmd)
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Standardizes off-diagonal entries by the strict-upper-triangle mean and
/// half the population standard deviation, then squashes with a sigmoid.
pub fn relative_transform(m: &SimilarityMatrix) -> Result<(SimilarityMatrix, RelativeTransformParams)> {
    if m.n < 2 {
        return Err(Error::domain("relative transform needs at least two items"));
    }
    let upper = m.upper_triangle();
    let count = upper.len() as f64;
    let (mu, sigma) = if upper.iter().all(|&v| v == upper[0]) {
        // exact constant input; summation could leave a rounding residue
        (upper[0], 0.0)
    } else {
        let mu = upper.iter().sum::<f64>() / count;
        (mu, (upper.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / count).sqrt())
    };
    let n = m.n;
    let mut values = Matrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let v = if i == j {
                1.0
            } else if sigma == 0.0 {
                0.5
            } else {
                sigmoid((m.get(i, j) - mu) / (sigma / 2.0))
            };
            values.set(i, j, v);
        }
    }
    Ok((
        SimilarityMatrix {
            n,
            stage: Stage::Relative,
            values,
        },
        RelativeTransformParams { mu, sigma },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sgs::compute_idf_from_words;

    fn w(s: &str) -> Vec<String> {
        s.split_whitespace().map(String::from).collect()
    }

    fn table(words: &[Vec<String>]) -> IdfTable {
        compute_idf_from_words(words.iter().map(Vec::as_slice)).unwrap()
    }

    #[test]
    fn identical_single_words_are_fully_similar() {
        let mut v = WordVectors::new();
        v.insert("pain".into(), vec![0.3, -1.2, 4.0]);
        let t = vec![w("pain")];
        assert_eq!(wmd_similarity(&t[0], &t[0], &v, &table(&t), 0.5), Ok(1.0));
    }

    #[test]
    fn orthogonal_single_words_give_one_half() {
        let mut v = WordVectors::new();
        v.insert("a".into(), vec![1.0, 0.0]);
        v.insert("b".into(), vec![0.0, 1.0]);
        let t = vec![w("a"), w("b")];
        assert_eq!(wmd_similarity(&t[0], &t[1], &v, &table(&t), 0.0), Ok(0.5));
    }

    #[test]
    fn subset_topic_aligns_on_shared_word() {
        let mut v = WordVectors::new();
        v.insert("a".into(), vec![1.0, 0.0]);
        v.insert("b".into(), vec![0.0, 1.0]);
        let t = vec![w("a b"), w("a")];
        assert_eq!(wmd_similarity(&t[0], &t[1], &v, &table(&t), 0.0), Ok(1.0));
    }

    #[test]
    fn fully_filtered_topic_signals() {
        let v = WordVectors::new();
        let t = vec![w("a"), w("b")];
        assert_eq!(wmd_similarity(&t[0], &t[1], &v, &table(&t), 0.0), Err(FilteredEmpty));
        // matrix assembly maps it to 0
        let m = wmd_matrix(&t, &v, &table(&t), 0.0).unwrap();
        assert_eq!(m.get(0, 1), 0.0);
        assert_eq!(m.get(0, 0), 1.0);
    }

    #[test]
    fn cosine_is_clamped() {
        assert_eq!(cosine_topic_similarity(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 1.0);
        assert_eq!(cosine_topic_similarity(&[1.0, 0.0], &[0.0, 3.0]).unwrap(), 0.0);
        assert_eq!(cosine_topic_similarity(&[1.0, 0.0], &[-1.0, 0.0]).unwrap(), 0.0);
        assert!(cosine_topic_similarity(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    fn sym(n: usize, stage: Stage, upper: &[f64]) -> SimilarityMatrix {
        let mut values = Matrix::zeros(n, n);
        let mut k = 0;
        for i in 0..n {
            values.set(i, i, 1.0);
            for j in i + 1..n {
                values.set(i, j, upper[k]);
                values.set(j, i, upper[k]);
                k += 1;
            }
        }
        SimilarityMatrix { n, stage, values }
    }

    #[test]
    fn hybrid_combination_cases() {
        let wmd = sym(2, Stage::Wmd, &[0.5]);
        let cos = sym(2, Stage::Cosine, &[1.0]);
        let h = combine_hybrid(&wmd, &cos, 0.9).unwrap();
        assert!((h.get(0, 1) - 0.55).abs() < 1e-15);
        let ones = sym(2, Stage::Wmd, &[1.0]);
        assert_eq!(combine_hybrid(&ones, &ones, 0.37).unwrap().get(0, 1), 1.0);
        assert_eq!(combine_hybrid(&wmd, &cos, 0.0).unwrap().values, cos.values);
    }

    #[test]
    fn relative_transform_fixed_points() {
        // upper = (0.2, 0.4, 0.6): mu = 0.4, sigma = sqrt(0.08/3)
        let m = sym(3, Stage::Hybrid, &[0.2, 0.4, 0.6]);
        let (r, p) = relative_transform(&m).unwrap();
        assert!((p.mu - 0.4).abs() < 1e-15);
        assert!((r.get(0, 2) - 0.5).abs() < 1e-15);
        let sigma = (0.08f64 / 3.0).sqrt();
        assert!((p.sigma - sigma).abs() < 1e-15);
        let expected = 1.0 / (1.0 + (0.2f64 / (sigma / 2.0)).exp());
        assert!((r.get(0, 1) - expected).abs() < 1e-12);
        assert!(r.get(0, 1) < 0.5 && r.get(1, 2) > 0.5);
        assert_eq!(r.get(1, 1), 1.0);
    }

    #[test]
    fn constant_entries_map_to_one_half() {
        let m = sym(4, Stage::Hybrid, &[0.7; 6]);
        let (r, p) = relative_transform(&m).unwrap();
        assert_eq!(p.sigma, 0.0);
        assert!(r.upper_triangle().iter().all(|&v| v == 0.5));
        assert!(relative_transform(&sym(1, Stage::Hybrid, &[])).is_err());
    }

    #[test]
    fn parallel_assembly_matches_serial() {
        let topics: Vec<Vec<String>> = (0..17).map(|i| vec![format!("w{}", i % 5), format!("w{}", (i * 3) % 7)]).collect();
        let mut v = WordVectors::new();
        for k in 0..7 {
            v.insert(format!("w{k}"), (0..4).map(|d| ((k * 4 + d) as f64).sin()).collect());
        }
        let idf = table(&topics);
        let a = wmd_matrix_with(&topics, &v, &idf, 0.3, true).unwrap();
        let b = wmd_matrix_with(&topics, &v, &idf, 0.3, false).unwrap();
        assert_eq!(a, b);
    }
}
