//! Heterogeneous document/topic/word graph.
//!
//! Nodes are numbered globally as documents, then topics, then words.
//! Edges are undirected and stored once with canonical endpoint order; the
//! adjacency lists hold both directions.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::backends::write_atomic;
use crate::corpus::{Document, TopicPhrase};
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::sgs::SimilarityMatrix;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NodeKind {
    Document,
    Topic,
    Word,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct NodeRef {
    pub kind: NodeKind,
    pub index: usize,
}

impl NodeRef {
    pub fn doc(index: usize) -> Self {
        NodeRef {
            kind: NodeKind::Document,
            index,
        }
    }

    pub fn topic(index: usize) -> Self {
        NodeRef {
            kind: NodeKind::Topic,
            index,
        }
    }

    pub fn word(index: usize) -> Self {
        NodeRef {
            kind: NodeKind::Word,
            index,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeKind {
    TopicAssignment,
    SimilarTopics,
    SimilarWords,
    WordInTopic,
}

impl EdgeKind {
    pub const ALL: [EdgeKind; 4] = [
        EdgeKind::TopicAssignment,
        EdgeKind::SimilarTopics,
        EdgeKind::SimilarWords,
        EdgeKind::WordInTopic,
    ];

    fn one_hot_index(self) -> usize {
        match self {
            EdgeKind::TopicAssignment => 0,
            EdgeKind::SimilarTopics => 1,
            EdgeKind::SimilarWords => 2,
            EdgeKind::WordInTopic => 3,
        }
    }

    fn endpoints(self) -> (NodeKind, NodeKind) {
        match self {
            EdgeKind::TopicAssignment => (NodeKind::Document, NodeKind::Topic),
            EdgeKind::SimilarTopics => (NodeKind::Topic, NodeKind::Topic),
            EdgeKind::SimilarWords => (NodeKind::Word, NodeKind::Word),
            EdgeKind::WordInTopic => (NodeKind::Topic, NodeKind::Word),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Edge {
    pub a: NodeRef,
    pub b: NodeRef,
    pub kind: EdgeKind,
    pub weight: f64,
}

impl Edge {
    fn new(x: NodeRef, y: NodeRef, kind: EdgeKind, weight: f64) -> Self {
        let (a, b) = if x <= y { (x, y) } else { (y, x) };
        Edge { a, b, kind, weight }
    }
}

pub const EDGE_FEATURE_DIM: usize = 5;

/// One-hot edge kind followed by the edge weight.
pub fn edge_feature(e: &Edge) -> [f64; EDGE_FEATURE_DIM] {
    let mut f = [0.0; EDGE_FEATURE_DIM];
    f[e.kind.one_hot_index()] = 1.0;
    f[4] = e.weight;
    f
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Thresholds {
    pub topic: Option<f64>,
    pub word: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeterogeneousGraph {
    pub doc_ids: Vec<String>,
    pub topic_phrases: Vec<String>,
    pub words: Vec<String>,
    pub doc_features: Matrix,
    pub topic_features: Matrix,
    pub word_features: Matrix,
    pub edges: Vec<Edge>,
    pub thresholds: Thresholds,
    /// Per global node: (neighbor global index, edge index).
    adjacency: Vec<Vec<(usize, usize)>>,
}

/// Nearest-rank percentile: the element at `ceil(p·n) − 1` of the sorted values.
pub fn percentile_threshold(values: &[f64], p: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::domain("percentile of an empty list"));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("percentile must lie in (0, 1), got {p}")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let rank = ((p * sorted.len() as f64) - 1e-9).ceil() as usize;
    Ok(sorted[rank.clamp(1, sorted.len()) - 1])
}

/// Everything needed to assemble the graph.
pub struct GraphInputs<'a> {
    /// Ingested documents, aligned with `doc_hybrids`.
    pub docs: &'a [Document],
    pub doc_hybrids: &'a [Vec<f64>],
    pub topics: &'a [TopicPhrase],
    pub topic_hybrids: &'a [Vec<f64>],
    /// Words that have vectors, aligned with `word_vectors`.
    pub words: &'a [String],
    pub word_vectors: &'a [Vec<f64>],
    /// Word feature width, kept even when there are no words.
    pub word_dim: usize,
    pub assignments: &'a BTreeMap<String, Vec<usize>>,
    pub topic_rel: &'a SimilarityMatrix,
    /// `None` when fewer than two words are available.
    pub word_rel: Option<&'a SimilarityMatrix>,
    pub percentile: f64,
}

fn similarity_edges(
    m: &SimilarityMatrix,
    p: f64,
    kind: EdgeKind,
    node: fn(usize) -> NodeRef,
    edges: &mut Vec<Edge>,
) -> Result<Option<f64>> {
    let upper = m.upper_triangle();
    if upper.is_empty() {
        return Ok(None);
    }
    let threshold = percentile_threshold(&upper, p)?;
    for i in 0..m.n {
        for j in i + 1..m.n {
            let s = m.get(i, j);
            if s > threshold {
                edges.push(Edge::new(node(i), node(j), kind, s));
            }
        }
    }
    Ok(Some(threshold))
}

fn rows_matrix(rows: &[Vec<f64>], cols: usize) -> Result<Matrix> {
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::domain("feature rows have inconsistent dimensions"));
    }
    let mut m = Matrix::zeros(rows.len(), cols);
    for (i, r) in rows.iter().enumerate() {
        m.row_mut(i).copy_from_slice(r);
    }
    Ok(m)
}

pub fn build_graph(inp: &GraphInputs<'_>) -> Result<HeterogeneousGraph> {
    if inp.topics.is_empty() {
        return Err(Error::domain("cannot build a graph without topics"));
    }
    if inp.topic_hybrids.len() != inp.topics.len() || inp.topic_rel.n != inp.topics.len() {
        return Err(Error::domain("topic features or similarities do not match the topic count"));
    }
    if inp.docs.len() != inp.doc_hybrids.len() || inp.words.len() != inp.word_vectors.len() {
        return Err(Error::domain("document or word features are misaligned"));
    }
    if let Some(w) = inp.word_rel {
        if w.n != inp.words.len() {
            return Err(Error::domain("word similarity matrix does not match the word count"));
        }
    }
    let hybrid_dim = inp.topic_hybrids[0].len();
    let word_dim = inp.word_dim;

    let mut doc_ids = Vec::new();
    let mut doc_rows = Vec::new();
    for (d, h) in inp.docs.iter().zip(inp.doc_hybrids) {
        if inp.assignments.get(&d.id).is_some_and(|a| !a.is_empty()) && !doc_ids.contains(&d.id) {
            doc_ids.push(d.id.clone());
            doc_rows.push(h.clone());
        }
    }

    let mut edges = Vec::new();
    for (di, id) in doc_ids.iter().enumerate() {
        let mut seen = BTreeSet::new();
        for &t in &inp.assignments[id] {
            if t >= inp.topics.len() {
                return Err(Error::domain(format!("assignment to unknown topic {t}")));
            }
            if seen.insert(t) {
                edges.push(Edge::new(NodeRef::doc(di), NodeRef::topic(t), EdgeKind::TopicAssignment, 1.0));
            }
        }
    }
    let topic_threshold = similarity_edges(
        inp.topic_rel,
        inp.percentile,
        EdgeKind::SimilarTopics,
        NodeRef::topic,
        &mut edges,
    )?;
    let word_index: BTreeMap<&str, usize> = inp
        .words
        .iter()
        .enumerate()
        .map(|(i, w)| (w.as_str(), i))
        .collect();
    for (ti, t) in inp.topics.iter().enumerate() {
        let mut seen = BTreeSet::new();
        for w in &t.words {
            if let Some(&wi) = word_index.get(w.as_str()) {
                if seen.insert(wi) {
                    edges.push(Edge::new(NodeRef::topic(ti), NodeRef::word(wi), EdgeKind::WordInTopic, 1.0));
                }
            }
        }
    }
    let word_threshold = match inp.word_rel {
        Some(m) => similarity_edges(m, inp.percentile, EdgeKind::SimilarWords, NodeRef::word, &mut edges)?,
        None => None,
    };

    let g = HeterogeneousGraph::from_parts(
        doc_ids,
        inp.topics.iter().map(|t| t.phrase.clone()).collect(),
        inp.words.to_vec(),
        rows_matrix(&doc_rows, hybrid_dim)?,
        rows_matrix(inp.topic_hybrids, hybrid_dim)?,
        rows_matrix(inp.word_vectors, word_dim)?,
        edges,
        Thresholds {
            topic: topic_threshold,
            word: word_threshold,
        },
    )?;
    Ok(g)
}

/// Per-kind node and edge counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GraphCounts {
    pub nodes: BTreeMap<String, usize>,
    pub edges: BTreeMap<String, usize>,
    pub total_nodes: usize,
    pub total_edges: usize,
}

#[derive(Serialize, Deserialize)]
struct TopicNode {
    index: usize,
    phrase: String,
}

#[derive(Serialize, Deserialize)]
struct GraphFile {
    nodes: NodeTables,
    edges: Vec<Edge>,
    thresholds: Thresholds,
    counts: GraphCounts,
    features: FeatureTables,
}

#[derive(Serialize, Deserialize)]
struct NodeTables {
    documents: Vec<String>,
    topics: Vec<TopicNode>,
    words: Vec<String>,
}

#[derive(Serialize, Deserialize)]
struct FeatureTables {
    documents: Matrix,
    topics: Matrix,
    words: Matrix,
}

impl HeterogeneousGraph {
    #[allow(clippy::too_many_arguments)]
    pub fn from_parts(
        doc_ids: Vec<String>,
        topic_phrases: Vec<String>,
        words: Vec<String>,
        doc_features: Matrix,
        topic_features: Matrix,
        word_features: Matrix,
        edges: Vec<Edge>,
        thresholds: Thresholds,
    ) -> Result<Self> {
        if doc_features.rows() != doc_ids.len()
            || topic_features.rows() != topic_phrases.len()
            || word_features.rows() != words.len()
        {
            return Err(Error::domain("feature matrices do not match node tables"));
        }
        let mut g = HeterogeneousGraph {
            doc_ids,
            topic_phrases,
            words,
            doc_features,
            topic_features,
            word_features,
            edges,
            thresholds,
            adjacency: Vec::new(),
        };
        g.validate_edges()?;
        g.rebuild_adjacency();
        Ok(g)
    }

    pub fn n_docs(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn n_topics(&self) -> usize {
        self.topic_phrases.len()
    }

    pub fn n_words(&self) -> usize {
        self.words.len()
    }

    pub fn n_nodes(&self) -> usize {
        self.n_docs() + self.n_topics() + self.n_words()
    }

    pub fn global_index(&self, n: NodeRef) -> usize {
        match n.kind {
            NodeKind::Document => n.index,
            NodeKind::Topic => self.n_docs() + n.index,
            NodeKind::Word => self.n_docs() + self.n_topics() + n.index,
        }
    }

    pub fn node_ref(&self, global: usize) -> NodeRef {
        if global < self.n_docs() {
            NodeRef::doc(global)
        } else if global < self.n_docs() + self.n_topics() {
            NodeRef::topic(global - self.n_docs())
        } else {
            NodeRef::word(global - self.n_docs() - self.n_topics())
        }
    }

    fn count(&self, kind: NodeKind) -> usize {
        match kind {
            NodeKind::Document => self.n_docs(),
            NodeKind::Topic => self.n_topics(),
            NodeKind::Word => self.n_words(),
        }
    }

    fn validate_edges(&self) -> Result<()> {
        let mut seen = BTreeSet::new();
        for e in &self.edges {
            let (ka, kb) = e.kind.endpoints();
            if (e.a.kind, e.b.kind) != (ka, kb) {
                return Err(Error::domain(format!("{:?} edge with endpoints {:?}/{:?}", e.kind, e.a, e.b)));
            }
            if e.a.index >= self.count(e.a.kind) || e.b.index >= self.count(e.b.kind) {
                return Err(Error::domain(format!("edge endpoint out of range: {e:?}")));
            }
            if e.a >= e.b {
                return Err(Error::domain(format!("self-loop or non-canonical edge {e:?}")));
            }
            if !(0.0..=1.0).contains(&e.weight) {
                return Err(Error::domain(format!("edge weight outside [0,1]: {e:?}")));
            }
            if !seen.insert((e.a, e.b)) {
                return Err(Error::domain(format!("duplicate edge {e:?}")));
            }
        }
        Ok(())
    }

    fn rebuild_adjacency(&mut self) {
        let mut adj = vec![Vec::new(); self.n_nodes()];
        for (k, e) in self.edges.iter().enumerate() {
            let a = self.global_index(e.a);
            let b = self.global_index(e.b);
            adj[a].push((b, k));
            adj[b].push((a, k));
        }
        self.adjacency = adj;
    }

    /// (neighbor global index, edge index) pairs of a global node.
    pub fn neighbors(&self, global: usize) -> &[(usize, usize)] {
        &self.adjacency[global]
    }

    /// Word indices linked to a topic by word-in-topic edges, in edge order.
    pub fn topic_words(&self, topic: usize) -> Vec<usize> {
        let g = self.global_index(NodeRef::topic(topic));
        self.adjacency[g]
            .iter()
            .filter(|&&(_, k)| self.edges[k].kind == EdgeKind::WordInTopic)
            .map(|&(nb, _)| self.node_ref(nb).index)
            .collect()
    }

    pub fn counts(&self) -> GraphCounts {
        let mut nodes = BTreeMap::new();
        nodes.insert("documents".to_string(), self.n_docs());
        nodes.insert("topics".to_string(), self.n_topics());
        nodes.insert("words".to_string(), self.n_words());
        let mut edges = BTreeMap::new();
        for kind in EdgeKind::ALL {
            let name = serde_json::to_value(kind).unwrap().as_str().unwrap().to_string();
            edges.insert(name, self.edges.iter().filter(|e| e.kind == kind).count());
        }
        GraphCounts {
            nodes,
            edges,
            total_nodes: self.n_nodes(),
            total_edges: self.edges.len(),
        }
    }

    pub fn to_json(&self) -> Result<Vec<u8>> {
        Ok(serde_json::to_vec_pretty(&self.to_json_value()?)?)
    }

    pub fn to_json_value(&self) -> Result<serde_json::Value> {
        let file = GraphFile {
            nodes: NodeTables {
                documents: self.doc_ids.clone(),
                topics: self
                    .topic_phrases
                    .iter()
                    .enumerate()
                    .map(|(index, phrase)| TopicNode {
                        index,
                        phrase: phrase.clone(),
                    })
                    .collect(),
                words: self.words.clone(),
            },
            edges: self.edges.clone(),
            thresholds: self.thresholds,
            counts: self.counts(),
            features: FeatureTables {
                documents: self.doc_features.clone(),
                topics: self.topic_features.clone(),
                words: self.word_features.clone(),
            },
        };
        Ok(serde_json::to_value(&file)?)
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        Self::from_json_value(serde_json::from_slice(bytes)?)
    }

    pub fn from_json_value(v: serde_json::Value) -> Result<Self> {
        let f: GraphFile = serde_json::from_value(v)?;
        let g = HeterogeneousGraph::from_parts(
            f.nodes.documents,
            f.nodes.topics.into_iter().map(|t| t.phrase).collect(),
            f.nodes.words,
            f.features.documents,
            f.features.topics,
            f.features.words,
            f.edges,
            f.thresholds,
        )?;
        if g.counts() != f.counts {
            return Err(Error::Schema("graph counts block disagrees with the edge list".into()));
        }
        Ok(g)
    }

    pub fn export(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_json()?)
    }

    pub fn import(path: &Path) -> Result<Self> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&bytes)
    }

    /// GraphViz `graph { ... }` edge list.
    pub fn to_dot(&self) -> String {
        let label = |n: NodeRef| match n.kind {
            NodeKind::Document => format!("d{}", n.index),
            NodeKind::Topic => format!("t{}", n.index),
            NodeKind::Word => format!("w{}", n.index),
        };
        let mut out = String::from("graph topics {\n");
        for e in &self.edges {
            let kind = serde_json::to_value(e.kind).unwrap();
            let _ = writeln!(
                out,
                "  {} -- {} [kind={}, weight={}];",
                label(e.a),
                label(e.b),
                kind,
                e.weight
            );
        }
        out.push_str("}\n");
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Language;
    use crate::sgs::Stage;

    #[test]
    fn nearest_rank_percentile() {
        let v: Vec<f64> = (1..=10).map(f64::from).collect();
        assert_eq!(percentile_threshold(&v, 0.9).unwrap(), 9.0);
        assert_eq!(percentile_threshold(&[3.5; 7], 0.9).unwrap(), 3.5);
        assert_eq!(percentile_threshold(&[42.0], 0.01).unwrap(), 42.0);
        assert!(percentile_threshold(&[], 0.9).is_err());
        assert!(percentile_threshold(&v, 1.0).is_err());
    }

    #[test]
    fn edge_features_encode_kind_and_weight() {
        let e = Edge::new(NodeRef::topic(0), NodeRef::topic(1), EdgeKind::SimilarTopics, 0.91);
        assert_eq!(edge_feature(&e), [0.0, 1.0, 0.0, 0.0, 0.91]);
        let e = Edge::new(NodeRef::topic(0), NodeRef::doc(1), EdgeKind::TopicAssignment, 1.0);
        assert_eq!(edge_feature(&e), [1.0, 0.0, 0.0, 0.0, 1.0]);
        assert_eq!(e.a, NodeRef::doc(1));
        let e = Edge::new(NodeRef::word(0), NodeRef::topic(1), EdgeKind::WordInTopic, 1.0);
        assert_eq!(edge_feature(&e), [0.0, 0.0, 0.0, 1.0, 1.0]);
    }

    fn tiny_inputs() -> (Vec<Document>, Vec<TopicPhrase>, BTreeMap<String, Vec<usize>>, SimilarityMatrix) {
        let docs = vec![
            Document::new("d", "the staff were rude", Language::En),
            Document::new("e", "fine", Language::En),
        ];
        let topics: Vec<TopicPhrase> = ["rude staff", "long wait", "parking"]
            .iter()
            .enumerate()
            .map(|(i, p)| TopicPhrase {
                id: i,
                phrase: p.to_string(),
                words: crate::corpus::tokenize(p),
                assigned_docs: Default::default(),
            })
            .collect();
        let mut assignments = BTreeMap::new();
        assignments.insert("d".to_string(), vec![0]);
        let mut values = Matrix::zeros(3, 3);
        for (i, j, v) in [(0, 1, 0.9), (0, 2, 0.2), (1, 2, 0.1)] {
            values.set(i, j, v);
            values.set(j, i, v);
        }
        for i in 0..3 {
            values.set(i, i, 1.0);
        }
        (docs, topics, assignments, SimilarityMatrix { n: 3, stage: Stage::Relative, values })
    }

    #[test]
    fn threshold_at_second_rank_keeps_one_topic_edge() {
        let (docs, topics, assignments, rel) = tiny_inputs();
        let hy = vec![vec![0.1, 0.2]; 3];
        let g = build_graph(&GraphInputs {
            docs: &docs,
            doc_hybrids: &[vec![1.0, 0.0], vec![0.0, 1.0]],
            topics: &topics,
            topic_hybrids: &hy,
            words: &[],
            word_vectors: &[],
            word_dim: 2,
            assignments: &assignments,
            topic_rel: &rel,
            word_rel: None,
            // nearest rank 2 of 3 needs p in (1/3, 2/3]
            percentile: 0.5,
        })
        .unwrap();
        assert_eq!(g.thresholds.topic, Some(0.2));
        let sim: Vec<_> = g.edges.iter().filter(|e| e.kind == EdgeKind::SimilarTopics).collect();
        assert_eq!(sim.len(), 1);
        assert_eq!((sim[0].a, sim[0].b, sim[0].weight), (NodeRef::topic(0), NodeRef::topic(1), 0.9));
        // only the assigned document becomes a node
        assert_eq!(g.doc_ids, vec!["d"]);
        let assign: Vec<_> = g.edges.iter().filter(|e| e.kind == EdgeKind::TopicAssignment).collect();
        assert_eq!(assign.len(), 1);
        assert_eq!((assign[0].a, assign[0].b, assign[0].weight), (NodeRef::doc(0), NodeRef::topic(0), 1.0));
        assert_eq!(g.n_words(), 0);
        assert_eq!(g.word_features.cols(), 2);
        let back = HeterogeneousGraph::from_json(&g.to_json().unwrap()).unwrap();
        assert_eq!(back, g);
    }

    #[test]
    fn rejects_bad_edges() {
        let bad = Edge {
            a: NodeRef::topic(0),
            b: NodeRef::topic(0),
            kind: EdgeKind::SimilarTopics,
            weight: 0.5,
        };
        let r = HeterogeneousGraph::from_parts(
            vec![],
            vec!["a".into()],
            vec![],
            Matrix::zeros(0, 2),
            Matrix::zeros(1, 2),
            Matrix::zeros(0, 1),
            vec![bad],
            Thresholds::default(),
        );
        assert!(r.is_err());
    }
}
