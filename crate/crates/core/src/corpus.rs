//! Document ingestion, LLM topic-response parsing and topic-pool construction.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::path::Path;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};

/// Language of a corpus; selects prompt template and response keys.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Language {
    En,
    Fr,
}

impl Language {
    pub fn tag(self) -> &'static str {
        match self {
            Language::En => "en",
            Language::Fr => "fr",
        }
    }
}

impl std::str::FromStr for Language {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "en" => Ok(Language::En),
            "fr" => Ok(Language::Fr),
            other => Err(Error::Config(format!("unsupported language tag {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub text: String,
    pub language: Language,
    pub token_count: usize,
}

impl Document {
    pub fn new(id: impl Into<String>, text: impl Into<String>, language: Language) -> Self {
        let text = text.into();
        let token_count = text.split_whitespace().count();
        Document {
            id: id.into(),
            text,
            language,
            token_count,
        }
    }
}

/// Template-label stripping and response dropping.
///
/// Each `strip_phrases` entry is treated as a field label (`Liked:` etc.). The
/// text is split at labels, segments whose value is one of `drop_values`
/// (case-insensitive) are removed and the rest is re-joined with single spaces.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PreprocessRules {
    #[serde(default)]
    pub strip_phrases: Vec<String>,
    #[serde(default)]
    pub drop_values: Vec<String>,
}

impl PreprocessRules {
    /// Labels and placeholder answers used for English patient feedback.
    pub fn english_feedback() -> Self {
        PreprocessRules {
            strip_phrases: ["Comment Title", "Liked", "Disliked", "Advice"]
                .into_iter()
                .map(String::from)
                .collect(),
            drop_values: ["Nothing", "N/A"].into_iter().map(String::from).collect(),
        }
    }

    fn label_regex(&self) -> Option<Regex> {
        if self.strip_phrases.is_empty() {
            return None;
        }
        let alternatives: Vec<String> = self
            .strip_phrases
            .iter()
            .map(|p| {
                p.split_whitespace()
                    .map(regex::escape)
                    .collect::<Vec<_>>()
                    .join(r"\s+")
            })
            .collect();
        let pattern = format!(r"\b(?:{})\s*:", alternatives.join("|"));
        Some(Regex::new(&pattern).expect("escaped label pattern is valid"))
    }

    /// Applies the rules to a raw text. Returns `None` when nothing survives.
    pub fn apply(&self, text: &str) -> Option<String> {
        let segments: Vec<&str> = match self.label_regex() {
            Some(re) => re.split(text).collect(),
            None => vec![text],
        };
        let kept: Vec<String> = segments
            .into_iter()
            .map(|s| s.split_whitespace().collect::<Vec<_>>().join(" "))
            .filter(|s| !s.is_empty())
            .filter(|s| !self.drop_values.iter().any(|d| d.eq_ignore_ascii_case(s)))
            .collect();
        if kept.is_empty() {
            None
        } else {
            Some(kept.join(" "))
        }
    }
}

#[derive(Deserialize)]
struct RawDocument {
    id: Option<Value>,
    text: Option<Value>,
}

/// Reads a JSONL corpus (`{"id": ..., "text": ...}` per line).
///
/// Blank lines are skipped. Documents whose text is emptied by `rules` are
/// dropped; the rest keep input order.
pub fn ingest_documents(
    path: &Path,
    language: Language,
    rules: &PreprocessRules,
) -> Result<Vec<Document>> {
    let content = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    ingest_str(&content, path, language, rules)
}

pub(crate) fn ingest_str(
    content: &str,
    path: &Path,
    language: Language,
    rules: &PreprocessRules,
) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    for (i, line) in content.lines().enumerate() {
        let line_no = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawDocument = serde_json::from_str(line).map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: line_no,
            message: e.to_string(),
        })?;
        let id = match raw.id {
            Some(Value::String(s)) => s,
            Some(Value::Number(n)) => n.to_string(),
            Some(_) => {
                return Err(Error::Schema(format!(
                    "line {line_no}: field `id` must be a string"
                )))
            }
            None => return Err(Error::Schema(format!("line {line_no}: missing field `id`"))),
        };
        let text = match raw.text {
            Some(Value::String(s)) => s,
            Some(_) => {
                return Err(Error::Schema(format!(
                    "line {line_no}: field `text` must be a string"
                )))
            }
            None => {
                return Err(Error::Schema(format!(
                    "line {line_no}: missing field `text`"
                )))
            }
        };
        if let Some(clean) = rules.apply(&text) {
            docs.push(Document::new(id, clean, language));
        }
    }
    Ok(docs)
}

/// Serializes documents back to the JSONL input format.
pub fn documents_to_jsonl(docs: &[Document]) -> String {
    let mut out = String::new();
    for d in docs {
        let line = serde_json::json!({ "id": d.id, "text": d.text });
        out.push_str(&line.to_string());
        out.push('\n');
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Sentiment {
    Positive,
    Negative,
    Neutral,
    Mixed,
}

impl Sentiment {
    pub fn parse(s: &str) -> Option<Self> {
        let lower = s.trim().to_lowercase();
        match lower.as_str() {
            "positive" | "positif" => Some(Sentiment::Positive),
            "negative" | "négatif" | "negatif" => Some(Sentiment::Negative),
            "neutral" | "neutre" => Some(Sentiment::Neutral),
            "mixed" | "mitigé" | "mitige" => Some(Sentiment::Mixed),
            _ => None,
        }
    }
}

/// Key names expected in the LLM's JSON output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ResponseSchema {
    pub id_key: String,
    pub sentiment_key: String,
    pub topics_key: String,
}

impl ResponseSchema {
    pub fn for_language(language: Language) -> Self {
        let (id, topics) = match language {
            Language::En => ("Comment", "Topics"),
            Language::Fr => ("ID", "Sujets"),
        };
        ResponseSchema {
            id_key: id.into(),
            sentiment_key: "Sentiment".into(),
            topics_key: topics.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratedTopicRecord {
    /// Identifier as returned by the model; resolved against the batch by
    /// [`resolve_record_ids`].
    pub doc_id: String,
    pub sentiment: Option<Sentiment>,
    pub topic_phrases: Vec<String>,
}

fn fence_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"(?s)^```[A-Za-z0-9_-]*\s*\n?(.*?)\n?\s*```$").unwrap())
}

fn trailing_comma_regex() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r",(\s*[\]}])").unwrap())
}

fn strip_fence(raw: &str) -> &str {
    let trimmed = raw.trim();
    match fence_regex().captures(trimmed) {
        Some(c) => c.get(1).map_or("", |m| m.as_str()),
        None => trimmed,
    }
}

fn value_to_id(v: &Value) -> Option<String> {
    match v {
        Value::String(s) => Some(s.trim().to_string()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Parses the model's JSON array of per-document results.
pub fn parse_topic_response(raw: &str, schema: &ResponseSchema) -> Result<Vec<GeneratedTopicRecord>> {
    let body = strip_fence(raw);
    let parsed: Value = match serde_json::from_str(body) {
        Ok(v) => v,
        Err(_) => {
            let repaired = trailing_comma_regex().replace_all(body, "$1");
            serde_json::from_str(&repaired).map_err(|e| Error::ResponseFormat {
                reason: e.to_string(),
                raw: raw.to_string(),
            })?
        }
    };
    let format_err = |reason: String| Error::ResponseFormat {
        reason,
        raw: raw.to_string(),
    };
    let items = match parsed {
        Value::Array(items) => items,
        // Some responses wrap the array in a single-key object.
        Value::Object(map) if map.len() == 1 => match map.into_iter().next() {
            Some((_, Value::Array(items))) => items,
            _ => return Err(format_err("expected a JSON array".into())),
        },
        _ => return Err(format_err("expected a JSON array".into())),
    };
    let mut records = Vec::with_capacity(items.len());
    for (i, item) in items.iter().enumerate() {
        let obj = item
            .as_object()
            .ok_or_else(|| format_err(format!("element {i} is not an object")))?;
        let doc_id = obj
            .get(&schema.id_key)
            .and_then(value_to_id)
            .ok_or_else(|| format_err(format!("element {i} lacks key {:?}", schema.id_key)))?;
        let sentiment = obj
            .get(&schema.sentiment_key)
            .and_then(Value::as_str)
            .and_then(Sentiment::parse);
        let topic_phrases = match obj.get(&schema.topics_key) {
            None | Some(Value::Null) => Vec::new(),
            Some(Value::Array(ts)) => ts
                .iter()
                .filter_map(Value::as_str)
                .map(str::trim)
                .filter(|s| !s.is_empty())
                .map(String::from)
                .collect(),
            Some(Value::String(s)) if !s.trim().is_empty() => vec![s.trim().to_string()],
            Some(Value::String(_)) => Vec::new(),
            Some(_) => {
                return Err(format_err(format!(
                    "element {i}: {:?} is not a list",
                    schema.topics_key
                )))
            }
        };
        records.push(GeneratedTopicRecord {
            doc_id,
            sentiment,
            topic_phrases,
        });
    }
    Ok(records)
}

/// Maps model-returned identifiers onto the documents of the batch that was
/// sent. An identifier may be the document id, the document text, or a
/// 1-based position within the batch. Unresolvable records are dropped.
pub fn resolve_record_ids(
    records: Vec<GeneratedTopicRecord>,
    batch: &[Document],
) -> Vec<GeneratedTopicRecord> {
    let by_id: HashMap<&str, &str> = batch.iter().map(|d| (d.id.as_str(), d.id.as_str())).collect();
    let by_text: HashMap<&str, &str> = batch
        .iter()
        .map(|d| (d.text.trim(), d.id.as_str()))
        .collect();
    records
        .into_iter()
        .filter_map(|mut r| {
            let key = r.doc_id.trim().trim_matches('"');
            let resolved = by_id
                .get(key)
                .or_else(|| by_text.get(key))
                .map(|s| s.to_string())
                .or_else(|| {
                    key.parse::<usize>()
                        .ok()
                        .filter(|&p| p >= 1 && p <= batch.len())
                        .map(|p| batch[p - 1].id.clone())
                });
            match resolved {
                Some(id) => {
                    r.doc_id = id;
                    Some(r)
                }
                None => {
                    log::warn!("dropping topic record with unknown document key {key:?}");
                    None
                }
            }
        })
        .collect()
}

/// Lowercases, splits on whitespace and strips surrounding punctuation.
/// Internal hyphens and apostrophes survive.
pub fn tokenize(phrase: &str) -> Vec<String> {
    phrase
        .split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()).to_lowercase())
        .filter(|w| !w.is_empty())
        .collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicPhrase {
    pub id: usize,
    pub phrase: String,
    pub words: Vec<String>,
    #[serde(rename = "docs")]
    pub assigned_docs: BTreeSet<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicPool {
    pub topics: Vec<TopicPhrase>,
    pub assignments: BTreeMap<String, Vec<usize>>,
}

impl TopicPool {
    pub fn len(&self) -> usize {
        self.topics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.topics.is_empty()
    }

    /// Unique topic words in first-appearance order.
    pub fn vocabulary(&self) -> Vec<String> {
        let mut seen = BTreeSet::new();
        let mut out = Vec::new();
        for t in &self.topics {
            for w in &t.words {
                if seen.insert(w.clone()) {
                    out.push(w.clone());
                }
            }
        }
        out
    }
}

/// Deduplicates phrases by case-folded exact match and merges assignments.
/// Phrases with no word after tokenization are skipped.
pub fn build_topic_pool(records: &[GeneratedTopicRecord]) -> TopicPool {
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut pool = TopicPool::default();
    for rec in records {
        for phrase in &rec.topic_phrases {
            let phrase = phrase.trim();
            let key = phrase.to_lowercase();
            let id = match index.get(&key) {
                Some(&id) => id,
                None => {
                    let words = tokenize(phrase);
                    if words.is_empty() {
                        continue;
                    }
                    let id = pool.topics.len();
                    pool.topics.push(TopicPhrase {
                        id,
                        phrase: phrase.to_string(),
                        words,
                        assigned_docs: BTreeSet::new(),
                    });
                    index.insert(key, id);
                    id
                }
            };
            pool.topics[id].assigned_docs.insert(rec.doc_id.clone());
            let ids = pool.assignments.entry(rec.doc_id.clone()).or_default();
            if !ids.contains(&id) {
                ids.push(id);
            }
        }
    }
    pool
}
