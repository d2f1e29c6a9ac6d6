//! Semantic-geometric similarity: IDF-weighted assignment similarity over
//! words blended with embedding cosine similarity, followed by a
//! standardizing sigmoid.

mod assignment;
mod idf;
mod optimize;
mod similarity;

pub use assignment::{hungarian, Assignment};
pub use idf::{compute_idf, compute_idf_from_words, IdfTable};
pub use optimize::{optimize_weights, relative_for_weights, weight_grid, GridPoint, OptimizationDiagnostics};
pub use similarity::{
    combine_hybrid, cosine_matrix, cosine_topic_similarity, hybrid_matrix, relative_transform,
    wmd_matrix, wmd_similarity, FilteredEmpty, RelativeTransformParams, SgsWeights,
    SimilarityMatrix, Stage, WordBag, WordVectors,
};

/// Relative similarity between words, each treated as a one-word topic whose
/// embedding is its own word vector.
pub fn word_relative_matrix(
    words: &[String],
    vectors: &WordVectors,
    weights: SgsWeights,
) -> crate::error::Result<SimilarityMatrix> {
    let topics: Vec<Vec<String>> = words.iter().map(|w| vec![w.clone()]).collect();
    let embeddings: Vec<Vec<f64>> = words
        .iter()
        .map(|w| {
            vectors
                .get(w)
                .cloned()
                .ok_or_else(|| crate::error::Error::MissingEmbedding(w.clone()))
        })
        .collect::<crate::error::Result<_>>()?;
    let idf = compute_idf_from_words(topics.iter().map(Vec::as_slice))?;
    let hybrid = hybrid_matrix(&topics, &embeddings, vectors, &idf, weights)?;
    Ok(relative_transform(&hybrid)?.0)
}
