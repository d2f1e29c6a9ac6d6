use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backends::sha256_hex;
use crate::corpus::{Language, PreprocessRules};
use crate::error::{Error, Result};
use crate::gnn::GnnConfig;
use crate::metrics::CompositeWeights;
use crate::sgs::SgsWeights;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub path: PathBuf,
    pub language: Language,
    /// Defaults to the English feedback labels for `en` and no rules otherwise.
    #[serde(default)]
    pub preprocess: Option<PreprocessRules>,
}

impl DatasetConfig {
    pub fn rules(&self) -> PreprocessRules {
        match (&self.preprocess, self.language) {
            (Some(r), _) => r.clone(),
            (None, Language::En) => PreprocessRules::english_feedback(),
            (None, Language::Fr) => PreprocessRules::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BackendKind {
    Http,
    Fixture,
}

impl std::str::FromStr for BackendKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "http" => Ok(BackendKind::Http),
            "fixture" => Ok(BackendKind::Fixture),
            other => Err(Error::Config(format!("unknown backend {other:?}"))),
        }
    }
}

fn default_model() -> String {
    "gpt-4o".into()
}

fn default_max_tokens() -> u32 {
    4096
}

fn default_batch() -> usize {
    20
}

fn default_retries() -> usize {
    2
}

fn default_timeout() -> u64 {
    60
}

fn default_key_env() -> String {
    "TOPICREFINE_API_KEY".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    pub kind: BackendKind,
    #[serde(default)]
    pub llm_fixture_dir: Option<PathBuf>,
    #[serde(default)]
    pub embed_fixture_dir: Option<PathBuf>,
    #[serde(default)]
    pub llm_endpoint: Option<String>,
    #[serde(default)]
    pub embed_endpoint: Option<String>,
    /// Environment variable holding the API key.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    /// LLM response cache for the HTTP backend.
    #[serde(default)]
    pub cache_dir: Option<PathBuf>,
    #[serde(default = "default_model")]
    pub model: String,
    #[serde(default)]
    pub temperature: f64,
    #[serde(default = "default_max_tokens")]
    pub max_tokens: u32,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_retries")]
    pub retries: usize,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmbeddingConfig {
    pub d_s: usize,
    pub d_b: usize,
    pub attention_seed: u64,
}

impl Default for EmbeddingConfig {
    fn default() -> Self {
        EmbeddingConfig {
            d_s: 768,
            d_b: 768,
            attention_seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SgsConfig {
    /// Grid-search the weights; otherwise use `weights`.
    pub optimize: bool,
    pub weights: SgsWeights,
    pub k_max: usize,
}

impl Default for SgsConfig {
    fn default() -> Self {
        SgsConfig {
            optimize: true,
            weights: SgsWeights::default(),
            k_max: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GraphConfig {
    pub percentile: f64,
}

impl Default for GraphConfig {
    fn default() -> Self {
        GraphConfig { percentile: 0.9 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionConfig {
    pub n_init: usize,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig { n_init: 10 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsConfig {
    pub weights: CompositeWeights,
    /// Upper bound for the elbow search used by silhouette and Davies-Bouldin.
    pub k_max: usize,
}

impl Default for MetricsConfig {
    fn default() -> Self {
        MetricsConfig {
            weights: CompositeWeights::default(),
            k_max: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ValidationConfig {
    pub replications: usize,
    pub deltas: Vec<f64>,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        ValidationConfig {
            replications: 5,
            deltas: (1..=10).map(|i| i as f64 / 100.0).collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub dir: PathBuf,
    /// Wall-clock stage times in the manifest; off keeps runs byte-identical.
    pub record_timestamps: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig {
            dir: PathBuf::from("runs"),
            record_timestamps: false,
        }
    }
}

fn default_k() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    /// Seed for training, clustering and weight search.
    #[serde(default)]
    pub seed: u64,
    /// Number of topics to extract.
    #[serde(default = "default_k")]
    pub k: usize,
    pub dataset: DatasetConfig,
    pub backend: BackendConfig,
    #[serde(default)]
    pub embedding: EmbeddingConfig,
    #[serde(default)]
    pub sgs: SgsConfig,
    #[serde(default)]
    pub graph: GraphConfig,
    /// `gnn.seed` is replaced by the top-level seed.
    #[serde(default)]
    pub gnn: GnnConfig,
    #[serde(default)]
    pub extraction: ExtractionConfig,
    #[serde(default)]
    pub metrics: MetricsConfig,
    #[serde(default)]
    pub validation: ValidationConfig,
    #[serde(default)]
    pub output: OutputConfig,
}

/// Command-line overrides applied before hashing.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub k: Option<usize>,
    pub backend: Option<BackendKind>,
    pub replications: Option<usize>,
    pub deltas: Option<Vec<f64>>,
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

impl PipelineConfig {
    pub fn from_toml_str(s: &str) -> Result<Self> {
        toml::from_str(s).map_err(|e| Error::Config(e.to_string()))
    }

    /// Parses, applies overrides and resolves relative paths against the
    /// directory of the config file.
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)?;
        cfg.apply(overrides);
        let base = path.parent().unwrap_or(Path::new("."));
        cfg.resolve_paths(base);
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if let Some(k) = o.k {
            self.k = k;
        }
        if let Some(b) = o.backend {
            self.backend.kind = b;
        }
        if let Some(r) = o.replications {
            self.validation.replications = r;
        }
        if let Some(d) = &o.deltas {
            self.validation.deltas = d.clone();
        }
        self.gnn.seed = self.seed;
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        self.dataset.path = resolve(base, &self.dataset.path);
        for p in [
            &mut self.backend.llm_fixture_dir,
            &mut self.backend.embed_fixture_dir,
            &mut self.backend.cache_dir,
        ]
        .into_iter()
        .flatten()
        {
            *p = resolve(base, p);
        }
        self.output.dir = resolve(base, &self.output.dir);
    }

    pub fn validate(&self) -> Result<()> {
        let cfg = |m: String| Err(Error::Config(m));
        if !self.dataset.path.is_file() {
            return cfg(format!("dataset file {} does not exist", self.dataset.path.display()));
        }
        if self.k == 0 {
            return cfg("k must be at least 1".into());
        }
        if self.embedding.d_s == 0 || self.embedding.d_b == 0 {
            return cfg("embedding dimensions must be positive".into());
        }
        let b = &self.backend;
        if b.batch_size == 0 {
            return cfg("backend.batch_size must be at least 1".into());
        }
        if !(b.temperature >= 0.0) {
            return cfg("backend.temperature must be >= 0".into());
        }
        match b.kind {
            BackendKind::Fixture => {
                for (name, dir) in [("llm_fixture_dir", &b.llm_fixture_dir), ("embed_fixture_dir", &b.embed_fixture_dir)] {
                    match dir {
                        Some(d) if d.is_dir() => {}
                        Some(d) => return cfg(format!("backend.{name} {} is not a directory", d.display())),
                        None => return cfg(format!("fixture backend needs backend.{name}")),
                    }
                }
            }
            BackendKind::Http => {
                if b.llm_endpoint.is_none() || b.embed_endpoint.is_none() {
                    return cfg("http backend needs backend.llm_endpoint and backend.embed_endpoint".into());
                }
            }
        }
        let w = self.sgs.weights;
        if !(0.0..=1.0).contains(&w.w_wmd) || !(w.w_idf >= 0.0) {
            return cfg("sgs.weights out of range".into());
        }
        if self.sgs.k_max < 2 || self.metrics.k_max < 2 {
            return cfg("k_max must be at least 2".into());
        }
        if !(self.graph.percentile > 0.0 && self.graph.percentile < 1.0) {
            return cfg("graph.percentile must lie in (0, 1)".into());
        }
        if self.extraction.n_init == 0 {
            return cfg("extraction.n_init must be at least 1".into());
        }
        self.gnn.validate()?;
        self.metrics.weights.validate()?;
        if self.validation.deltas.iter().any(|d| !d.is_finite() || *d < 0.0) {
            return cfg("validation.deltas must be non-negative".into());
        }
        Ok(())
    }

    /// The configuration as hashed: no filesystem locations, no output or
    /// validation section, plus the SHA-256 of the dataset contents. A
    /// project moved to another directory keeps its hash, and changing the
    /// replication count or deltas does not invalidate upstream artifacts.
    pub fn canonical_json(&self) -> Result<serde_json::Value> {
        let mut v = serde_json::to_value(self)?;
        let data = fs::read(&self.dataset.path).map_err(|e| Error::io(&self.dataset.path, e))?;
        let data_hash = hex::encode(Sha256::digest(&data));
        if let Some(map) = v.as_object_mut() {
            map.remove("output");
            map.remove("validation");
            if let Some(ds) = map.get_mut("dataset").and_then(|d| d.as_object_mut()) {
                ds.remove("path");
                ds.insert("sha256".into(), data_hash.into());
            }
            if let Some(b) = map.get_mut("backend").and_then(|d| d.as_object_mut()) {
                for k in ["llm_fixture_dir", "embed_fixture_dir", "cache_dir"] {
                    b.remove(k);
                }
            }
        }
        Ok(v)
    }

    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(&serde_json::to_string(&self.canonical_json()?)?))
    }
}

/// Parses `0.01,0.05`, `0.01..0.10` (step 0.01) or `0.01..0.10:0.02`.
pub fn parse_deltas(s: &str) -> Result<Vec<f64>> {
    let bad = || Error::Config(format!("cannot parse deltas {s:?}"));
    let num = |t: &str| t.trim().parse::<f64>().map_err(|_| bad());
    if let Some((a, rest)) = s.split_once("..") {
        let (b, step) = match rest.split_once(':') {
            Some((b, st)) => (num(b)?, num(st)?),
            None => (num(rest)?, 0.01),
        };
        let a = num(a)?;
        if !(step > 0.0) || b < a {
            return Err(bad());
        }
        let n = ((b - a) / step + 1e-9).floor() as usize;
        // round to the step's decimal grid so 0.01..0.10 yields 0.07, not 0.07000000000000001
        let scale = 1e9;
        return Ok((0..=n).map(|i| ((a + i as f64 * step) * scale).round() / scale).collect());
    }
    s.split(',').filter(|t| !t.trim().is_empty()).map(num).collect()
}
