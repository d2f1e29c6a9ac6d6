//! Clustering of topic embeddings and per-cluster representative selection.

mod kmeans;

pub use kmeans::{elbow_cluster, kmeans, kmeans_runs, ClusterResult, KMeansRun, MAX_ITER, TOLERANCE};

use std::fmt::Write as _;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::HeterogeneousGraph;
use crate::linalg::cosine;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Coherence,
    Centroid,
    Connectivity,
}

impl Method {
    /// Also the tie-break preference order.
    pub const ALL: [Method; 3] = [Method::Coherence, Method::Centroid, Method::Connectivity];

    pub fn name(self) -> &'static str {
        match self {
            Method::Coherence => "coherence",
            Method::Centroid => "centroid",
            Method::Connectivity => "connectivity",
        }
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::Config(format!("unknown extraction method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTopic {
    pub topic_id: usize,
    pub cluster: usize,
    pub score: f64,
    pub method: Method,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectedTopic {
    pub id: usize,
    pub phrase: String,
    pub cluster: usize,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicSet {
    pub method: Method,
    pub k: usize,
    pub topics: Vec<SelectedTopic>,
}

impl TopicSet {
    pub fn ids(&self) -> Vec<usize> {
        self.topics.iter().map(|t| t.id).collect()
    }

    pub fn phrases(&self) -> Vec<&str> {
        self.topics.iter().map(|t| t.phrase.as_str()).collect()
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec_pretty(self)?)
    }

    /// Numbered plain-text list, one phrase per line.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for (i, t) in self.topics.iter().enumerate() {
            let _ = writeln!(out, "{}. {}", i + 1, t.phrase);
        }
        out
    }
}

fn word_cosines(topic: usize, g: &HeterogeneousGraph, refined: &[Vec<f64>], word_hybrids: &[Vec<f64>]) -> Result<Vec<f64>> {
    let emb = refined
        .get(topic)
        .ok_or_else(|| Error::domain(format!("no refined embedding for topic {topic}")))?;
    g.topic_words(topic)
        .into_iter()
        .map(|w| {
            let h = word_hybrids
                .get(w)
                .ok_or_else(|| Error::domain(format!("no hybrid embedding for word {w}")))?;
            if h.len() != emb.len() {
                return Err(Error::domain("word hybrid and topic embedding dimensions differ"));
            }
            Ok(cosine(emb, h).unwrap_or(0.0))
        })
        .collect()
}

/// Mean cosine between the topic embedding and the hybrids of its words; 0 without words.
pub fn score_coherence(topic: usize, g: &HeterogeneousGraph, refined: &[Vec<f64>], word_hybrids: &[Vec<f64>]) -> Result<f64> {
    let c = word_cosines(topic, g, refined, word_hybrids)?;
    if c.is_empty() {
        return Ok(0.0);
    }
    Ok(c.iter().sum::<f64>() / c.len() as f64)
}

/// Cosine between the topic embedding and its cluster centroid.
pub fn score_centroid(topic: usize, clusters: &ClusterResult, refined: &[Vec<f64>]) -> Result<f64> {
    let emb = refined
        .get(topic)
        .ok_or_else(|| Error::domain(format!("no refined embedding for topic {topic}")))?;
    let label = *clusters
        .labels
        .get(topic)
        .ok_or_else(|| Error::domain(format!("topic {topic} is not clustered")))?;
    let centroid = clusters.centroids.row(label);
    if centroid.iter().all(|&v| v == 0.0) {
        return Err(Error::domain(format!("cluster {label} has a zero centroid")));
    }
    cosine(emb, centroid).ok_or_else(|| Error::domain(format!("topic {topic} has a zero embedding")))
}

/// Word-edge count times the mean word cosine, i.e. count × coherence.
pub fn score_connectivity(topic: usize, g: &HeterogeneousGraph, refined: &[Vec<f64>], word_hybrids: &[Vec<f64>]) -> Result<f64> {
    let c = word_cosines(topic, g, refined, word_hybrids)?;
    if c.is_empty() {
        return Ok(0.0);
    }
    Ok(c.len() as f64 * (c.iter().sum::<f64>() / c.len() as f64))
}

/// Scores every topic under one method.
pub fn score_all(
    method: Method,
    g: &HeterogeneousGraph,
    clusters: &ClusterResult,
    refined: &[Vec<f64>],
    word_hybrids: &[Vec<f64>],
) -> Result<Vec<ScoredTopic>> {
    (0..refined.len())
        .map(|t| {
            let score = match method {
                Method::Coherence => score_coherence(t, g, refined, word_hybrids)?,
                Method::Centroid => score_centroid(t, clusters, refined)?,
                Method::Connectivity => score_connectivity(t, g, refined, word_hybrids)?,
            };
            if !score.is_finite() {
                return Err(Error::Numeric(format!("non-finite {} score for topic {t}", method.name())));
            }
            Ok(ScoredTopic {
                topic_id: t,
                cluster: clusters.labels[t],
                score,
                method,
            })
        })
        .collect()
}

/// Highest-scoring topic of each cluster; ties go to the lexicographically
/// smallest phrase.
pub fn extract_top_k(clusters: &ClusterResult, scores: &[ScoredTopic], phrases: &[String]) -> Result<TopicSet> {
    let method = scores
        .first()
        .map(|s| s.method)
        .ok_or_else(|| Error::domain("no scores to extract from"))?;
    let mut best: Vec<Option<&ScoredTopic>> = vec![None; clusters.k];
    for s in scores {
        let phrase = phrases
            .get(s.topic_id)
            .ok_or_else(|| Error::domain(format!("no phrase for topic {}", s.topic_id)))?;
        let slot = best
            .get_mut(s.cluster)
            .ok_or_else(|| Error::domain(format!("cluster {} out of range", s.cluster)))?;
        let better = match slot {
            None => true,
            Some(cur) => {
                s.score > cur.score || (s.score == cur.score && phrase.as_str() < phrases[cur.topic_id].as_str())
            }
        };
        if better {
            *slot = Some(s);
        }
    }
    let topics = best
        .into_iter()
        .enumerate()
        .map(|(c, s)| {
            let s = s.ok_or_else(|| Error::domain(format!("cluster {c} has no scored topic")))?;
            Ok(SelectedTopic {
                id: s.topic_id,
                phrase: phrases[s.topic_id].clone(),
                cluster: c,
                score: s.score,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(TopicSet {
        method,
        k: clusters.k,
        topics,
    })
}

/// Picks the set with the highest composite; ties follow `Method::ALL` order.
pub fn select_best_method<F>(sets: &[TopicSet], mut evaluate: F) -> Result<(TopicSet, Vec<(Method, f64)>)>
where
    F: FnMut(&TopicSet) -> Result<f64>,
{
    if sets.is_empty() {
        return Err(Error::domain("no topic sets to choose from"));
    }
    let mut scored = Vec::new();
    for s in sets {
        scored.push((s, evaluate(s)?));
    }
    let rank = |m: Method| Method::ALL.iter().position(|&x| x == m).unwrap();
    let mut best = 0;
    for i in 1..scored.len() {
        let (s, c) = scored[i];
        let (b, bc) = scored[best];
        if c > bc || (c == bc && rank(s.method) < rank(b.method)) {
            best = i;
        }
    }
    let composites = scored.iter().map(|(s, c)| (s.method, *c)).collect();
    Ok((scored[best].0.clone(), composites))
}
