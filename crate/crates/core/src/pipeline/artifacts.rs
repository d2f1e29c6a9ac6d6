use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::corpus::{Document, GeneratedTopicRecord, Language, TopicPool};
use crate::extraction::{ClusterResult, Method, TopicSet};
use crate::fusion::AttentionParams;
use crate::gnn::{Dims, TrainReport};
use crate::graph::GraphCounts;
use crate::metrics::{MetricsReport, SensitivityRow};
use crate::sgs::{OptimizationDiagnostics, RelativeTransformParams, SgsWeights, SimilarityMatrix};
use crate::stats::{ReplicationSet, ValidationReport};

use super::Variant;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicsArtifact {
    pub config_hash: String,
    pub language: Language,
    pub documents: Vec<Document>,
    pub records: Vec<GeneratedTopicRecord>,
    pub pool: TopicPool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocEmbedding {
    pub id: String,
    pub hybrid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordEmbedding {
    pub word: String,
    /// Raw d_b word vector.
    pub vector: Vec<f64>,
    /// The word passed through the fusion layer like any text.
    pub hybrid: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedArtifact {
    pub config_hash: String,
    pub d_s: usize,
    pub d_b: usize,
    pub attention: AttentionParams,
    /// Assigned documents only, in ingest order.
    pub documents: Vec<DocEmbedding>,
    /// Aligned with the topic pool.
    pub topics: Vec<Vec<f64>>,
    /// Vocabulary words that have a vector, in first-appearance order.
    pub words: Vec<WordEmbedding>,
    pub missing_words: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimilarityArtifact {
    pub config_hash: String,
    pub weights: SgsWeights,
    /// Whether `weights` came from the grid search.
    pub optimized: bool,
    pub diagnostics: Option<OptimizationDiagnostics>,
    pub topic_hybrid: SimilarityMatrix,
    pub topic_relative: SimilarityMatrix,
    pub topic_params: RelativeTransformParams,
    pub word_relative: Option<SimilarityMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GraphArtifact {
    pub config_hash: String,
    pub counts: GraphCounts,
    pub graph: serde_json::Value,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainArtifact {
    pub config_hash: String,
    pub dims: Dims,
    pub n_params: usize,
    pub report: Option<TrainReport>,
    /// Set when training diverged; `report` then holds the epochs completed.
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractArtifact {
    pub config_hash: String,
    pub variant: Variant,
    pub k_requested: usize,
    pub k: usize,
    pub clusters: ClusterResult,
    /// Topic embeddings the clustering ran on.
    pub embeddings: Vec<Vec<f64>>,
    /// Coherence score of every topic, used by the evaluation.
    pub coherence: Vec<f64>,
    pub scores: BTreeMap<Method, Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSetArtifact {
    pub config_hash: String,
    #[serde(flatten)]
    pub set: TopicSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodComposite {
    pub method: Method,
    pub composite: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluateArtifact {
    pub config_hash: String,
    pub variant: Variant,
    pub reports: Vec<MetricsReport>,
    pub composites: Vec<MethodComposite>,
    pub selected: Method,
    pub topics: TopicSet,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidateArtifact {
    pub config_hash: String,
    pub base_seed: u64,
    pub replications: usize,
    pub baseline: String,
    pub sets: BTreeMap<String, ReplicationSet>,
    pub report: ValidationReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SkippedPerturbation {
    pub weight: String,
    pub delta: f64,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SensitivityArtifact {
    pub config_hash: String,
    pub method: Method,
    pub baseline_composite: f64,
    pub rows: Vec<SensitivityRow>,
    /// (weight, delta) pairs that would push a weight outside [0, 1].
    pub skipped: Vec<SkippedPerturbation>,
}
