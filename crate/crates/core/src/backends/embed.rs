use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{post_json_with_retry, sha256_hex, write_atomic, RetryPolicy};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Sentence-level vector plus per-token vectors for one text.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBundle {
    pub sentence_vector: Vec<f64>,
    pub token_matrix: Matrix,
    pub tokens: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WordVector {
    pub word: String,
    pub vector: Vec<f64>,
}

/// Checks a bundle against the configured dimensions.
pub fn validate_bundle(text: &str, b: &EmbeddingBundle, d_s: usize, d_b: usize) -> Result<()> {
    if b.sentence_vector.len() != d_s {
        return Err(Error::Schema(format!(
            "sentence vector for {text:?} has dimension {}, expected {d_s}",
            b.sentence_vector.len()
        )));
    }
    if b.token_matrix.rows() == 0 {
        return Err(Error::Schema(format!("no token vectors for {text:?}")));
    }
    if b.token_matrix.cols() != d_b {
        return Err(Error::Schema(format!(
            "token vectors for {text:?} have dimension {}, expected {d_b}",
            b.token_matrix.cols()
        )));
    }
    if b.tokens.len() != b.token_matrix.rows() {
        return Err(Error::Schema(format!(
            "{} tokens but {} token vectors for {text:?}",
            b.tokens.len(),
            b.token_matrix.rows()
        )));
    }
    if !b.sentence_vector.iter().all(|v| v.is_finite()) || !b.token_matrix.is_finite() {
        return Err(Error::Schema(format!("non-finite embedding for {text:?}")));
    }
    Ok(())
}

fn validate_word(w: &WordVector, d_b: usize) -> Result<()> {
    if w.vector.len() != d_b {
        return Err(Error::Schema(format!(
            "word vector for {:?} has dimension {}, expected {d_b}",
            w.word,
            w.vector.len()
        )));
    }
    if !w.vector.iter().all(|v| v.is_finite()) {
        return Err(Error::Schema(format!("non-finite word vector for {:?}", w.word)));
    }
    Ok(())
}

pub trait Embedder: Send + Sync {
    /// (sentence dimension, token dimension)
    fn dims(&self) -> (usize, usize);
    fn embed_text(&self, text: &str) -> Result<EmbeddingBundle>;
    fn embed_word(&self, word: &str) -> Result<WordVector>;
}

#[derive(Serialize, Deserialize)]
struct TextRecord {
    text: String,
    sentence: Vec<f64>,
    tokens: Vec<String>,
    token_vectors: Vec<Vec<f64>>,
}

/// Reads embeddings from `<dir>/text/<sha256>.json` and
/// `<dir>/word/<sha256>.json`.
#[derive(Debug, Clone)]
pub struct FixtureEmbedder {
    dir: PathBuf,
    d_s: usize,
    d_b: usize,
}

impl FixtureEmbedder {
    pub fn new(dir: impl Into<PathBuf>, d_s: usize, d_b: usize) -> Self {
        FixtureEmbedder {
            dir: dir.into(),
            d_s,
            d_b,
        }
    }

    fn text_path(dir: &Path, text: &str) -> PathBuf {
        dir.join("text").join(format!("{}.json", sha256_hex(text)))
    }

    fn word_path(dir: &Path, word: &str) -> PathBuf {
        dir.join("word").join(format!("{}.json", sha256_hex(word)))
    }

    pub fn write_text(dir: &Path, text: &str, bundle: &EmbeddingBundle) -> Result<()> {
        let rec = TextRecord {
            text: text.to_string(),
            sentence: bundle.sentence_vector.clone(),
            tokens: bundle.tokens.clone(),
            token_vectors: bundle.token_matrix.to_rows(),
        };
        write_atomic(&Self::text_path(dir, text), &serde_json::to_vec(&rec)?)
    }

    pub fn write_word(dir: &Path, word: &WordVector) -> Result<()> {
        write_atomic(&Self::word_path(dir, &word.word), &serde_json::to_vec(word)?)
    }

    fn read(path: &Path, key: &str) -> Result<String> {
        match fs::read_to_string(path) {
            Ok(s) => Ok(s),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                Err(Error::MissingEmbedding(key.to_string()))
            }
            Err(e) => Err(Error::io(path, e)),
        }
    }
}

fn rows_to_matrix(text: &str, rows: &[Vec<f64>]) -> Result<Matrix> {
    let cols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != cols) {
        return Err(Error::Schema(format!("ragged token vectors for {text:?}")));
    }
    Ok(Matrix::from_rows(rows))
}

impl Embedder for FixtureEmbedder {
    fn dims(&self) -> (usize, usize) {
        (self.d_s, self.d_b)
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingBundle> {
        let raw = Self::read(&Self::text_path(&self.dir, text), text)?;
        let rec: TextRecord = serde_json::from_str(&raw)?;
        let bundle = EmbeddingBundle {
            sentence_vector: rec.sentence,
            token_matrix: rows_to_matrix(text, &rec.token_vectors)?,
            tokens: rec.tokens,
        };
        validate_bundle(text, &bundle, self.d_s, self.d_b)?;
        Ok(bundle)
    }

    fn embed_word(&self, word: &str) -> Result<WordVector> {
        let raw = Self::read(&Self::word_path(&self.dir, word), word)?;
        let w: WordVector = serde_json::from_str(&raw)?;
        validate_word(&w, self.d_b)?;
        Ok(w)
    }
}

/// Embedding service client: POST `{texts, granularity}` returning one
/// object per text.
#[derive(Debug, Clone)]
pub struct HttpEmbedder {
    pub endpoint: String,
    pub api_key: Option<String>,
    pub policy: RetryPolicy,
    pub d_s: usize,
    pub d_b: usize,
}

impl HttpEmbedder {
    fn first_result(&self, text: &str, granularity: &str) -> Result<Value> {
        let body = json!({ "texts": [text], "granularity": granularity });
        let resp = post_json_with_retry(&self.endpoint, self.api_key.as_deref(), &body, &self.policy)?;
        let item = match resp {
            Value::Array(mut items) if !items.is_empty() => items.swap_remove(0),
            Value::Object(mut map) => match map.remove("results") {
                Some(Value::Array(mut items)) if !items.is_empty() => items.swap_remove(0),
                _ => Value::Null,
            },
            _ => Value::Null,
        };
        Ok(item)
    }
}

impl Embedder for HttpEmbedder {
    fn dims(&self) -> (usize, usize) {
        (self.d_s, self.d_b)
    }

    fn embed_text(&self, text: &str) -> Result<EmbeddingBundle> {
        let item = self.first_result(text, "sentence+tokens")?;
        if item.is_null() {
            return Err(Error::MissingEmbedding(text.to_string()));
        }
        #[derive(Deserialize)]
        struct Item {
            sentence: Vec<f64>,
            tokens: Vec<String>,
            token_vectors: Vec<Vec<f64>>,
        }
        let it: Item = serde_json::from_value(item)
            .map_err(|e| Error::Schema(format!("embedding response for {text:?}: {e}")))?;
        let bundle = EmbeddingBundle {
            sentence_vector: it.sentence,
            token_matrix: rows_to_matrix(text, &it.token_vectors)?,
            tokens: it.tokens,
        };
        validate_bundle(text, &bundle, self.d_s, self.d_b)?;
        Ok(bundle)
    }

    fn embed_word(&self, word: &str) -> Result<WordVector> {
        let item = self.first_result(word, "word")?;
        let vector: Vec<f64> = match item.get("vector") {
            Some(v) if !v.is_null() => serde_json::from_value(v.clone())
                .map_err(|e| Error::Schema(format!("word vector for {word:?}: {e}")))?,
            _ => return Err(Error::MissingEmbedding(word.to_string())),
        };
        let w = WordVector {
            word: word.to_string(),
            vector,
        };
        validate_word(&w, self.d_b)?;
        Ok(w)
    }
}
