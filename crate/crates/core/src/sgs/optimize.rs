use serde::{Deserialize, Serialize};

use super::idf::IdfTable;
use super::similarity::{
    combine_hybrid, cosine_matrix, relative_transform, wmd_matrix, SgsWeights, SimilarityMatrix,
    WordBag, WordVectors,
};
use crate::error::{Error, Result};
use crate::extraction::elbow_cluster;
use crate::metrics::silhouette;

/// Outcome of one grid point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub w_wmd: f64,
    pub w_idf: f64,
    /// Cluster count chosen by the elbow rule; 0 when the point was degenerate.
    pub k: usize,
    pub silhouette: Option<f64>,
    pub inertias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizationDiagnostics {
    pub grid: Vec<GridPoint>,
    pub degenerate: bool,
}

/// Grid of `w_wmd` values 0.1..=0.9 with the paired `w_idf`.
pub fn weight_grid() -> Vec<SgsWeights> {
    (1..=9)
        .map(|i| {
            let w_wmd = i as f64 / 10.0;
            SgsWeights {
                w_wmd,
                w_idf: (1.0 - w_wmd) * 0.99,
            }
        })
        .collect()
}

/// Hybrid then relative matrix for one weight pair.
pub fn relative_for_weights<T: WordBag>(
    topics: &[T],
    embeddings: &[Vec<f64>],
    vectors: &WordVectors,
    idf: &IdfTable,
    weights: SgsWeights,
) -> Result<(SimilarityMatrix, f64)> {
    let wmd = wmd_matrix(topics, vectors, idf, weights.w_idf)?;
    let cos = cosine_matrix(embeddings)?;
    let hybrid = combine_hybrid(&wmd, &cos, weights.w_wmd)?;
    let (rel, params) = relative_transform(&hybrid)?;
    Ok((rel, params.sigma))
}

/// Grid search over the SGS weights scored by silhouette of a K-means
/// clustering of the relative-similarity rows.
pub fn optimize_weights<T: WordBag>(
    topics: &[T],
    embeddings: &[Vec<f64>],
    vectors: &WordVectors,
    idf: &IdfTable,
    k_max: usize,
    seed: u64,
) -> Result<(SgsWeights, OptimizationDiagnostics)> {
    let n = topics.len();
    if n < 4 {
        return Err(Error::domain(format!(
            "weight optimization needs at least 4 topics, got {n}"
        )));
    }
    if embeddings.len() != n {
        return Err(Error::domain("topic/embedding count mismatch"));
    }
    let k_hi = k_max.min(n - 1);
    if k_hi < 2 {
        return Err(Error::domain("k_max must be at least 2"));
    }
    let cos = cosine_matrix(embeddings)?;
    let mut grid = Vec::new();
    let mut best: Option<(SgsWeights, f64)> = None;
    for weights in weight_grid() {
        let wmd = wmd_matrix(topics, vectors, idf, weights.w_idf)?;
        let hybrid = combine_hybrid(&wmd, &cos, weights.w_wmd)?;
        let (rel, params) = relative_transform(&hybrid)?;
        if params.sigma == 0.0 {
            grid.push(GridPoint {
                w_wmd: weights.w_wmd,
                w_idf: weights.w_idf,
                k: 0,
                silhouette: None,
                inertias: Vec::new(),
            });
            continue;
        }
        let rows = rel.values.to_rows();
        let (clusters, inertias) = elbow_cluster(&rows, 2, k_hi, 10, seed)?;
        let score = silhouette(&rows, &clusters.labels)?;
        grid.push(GridPoint {
            w_wmd: weights.w_wmd,
            w_idf: weights.w_idf,
            k: clusters.k,
            silhouette: Some(score),
            inertias,
        });
        // `>=` so that ties go to the larger w_wmd (grid ascends).
        if best.is_none_or(|(_, s)| score >= s) {
            best = Some((weights, score));
        }
    }
    match best {
        Some((w, _)) => Ok((
            w,
            OptimizationDiagnostics {
                grid,
                degenerate: false,
            },
        )),
        None => Ok((
            SgsWeights::default(),
            OptimizationDiagnostics {
                grid,
                degenerate: true,
            },
        )),
    }
}
