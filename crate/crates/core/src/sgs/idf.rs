use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::corpus::TopicPhrase;
use crate::error::{Error, Result};

/// Inverse topic frequency of each word across the topic pool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdfTable {
    pub n_topics: usize,
    pub scores: BTreeMap<String, f64>,
}

impl IdfTable {
    /// Unknown words get 0.
    pub fn get(&self, word: &str) -> f64 {
        self.scores.get(word).copied().unwrap_or(0.0)
    }
}

/// `ln(N / count(w))`, where `count(w)` is the number of topics containing `w`.
pub fn compute_idf(topics: &[TopicPhrase]) -> Result<IdfTable> {
    compute_idf_from_words(topics.iter().map(|t| t.words.as_slice()))
}

pub fn compute_idf_from_words<'a>(topics: impl IntoIterator<Item = &'a [String]>) -> Result<IdfTable> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let mut n = 0usize;
    for words in topics {
        n += 1;
        let unique: BTreeSet<&String> = words.iter().collect();
        for w in unique {
            *counts.entry(w.clone()).or_default() += 1;
        }
    }
    if n == 0 {
        return Err(Error::domain("IDF over an empty topic list"));
    }
    let scores = counts
        .into_iter()
        .map(|(w, c)| (w, (n as f64 / c as f64).ln()))
        .collect();
    Ok(IdfTable { n_topics: n, scores })
}
