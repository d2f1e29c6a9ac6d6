//! Stage orchestration over a run directory keyed by the configuration hash.
//!
//! Every stage reads its declared upstream artifacts, checks that they were
//! produced under the same configuration and have not changed since, and
//! records its inputs and outputs in `manifest.json`.

mod artifacts;
mod config;
mod manifest;
mod stages;

pub use artifacts::*;
pub use config::{
    parse_deltas, BackendConfig, BackendKind, DatasetConfig, EmbeddingConfig, ExtractionConfig, GraphConfig,
    MetricsConfig, OutputConfig, Overrides, PipelineConfig, SgsConfig, ValidationConfig,
};
pub use manifest::{file_sha256, FileRecord, RunManifest, StageRecord, StageStatus, MANIFEST_FILE};

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::backends::{
    write_atomic, CachedChat, ChatBackend, Embedder, FixtureChat, FixtureEmbedder, HttpChat, HttpEmbedder,
    RetryPolicy,
};
use crate::error::{Error, Result};
use crate::extraction::Method;

/// Which topic embeddings extraction and evaluation run on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Refined,
    Original,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Refined => "refined",
            Variant::Original => "original",
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "refined" => Ok(Variant::Refined),
            "original" => Ok(Variant::Original),
            other => Err(Error::Config(format!("unknown ablation variant {other:?}"))),
        }
    }
}

pub const TOPICS_FILE: &str = "generate-topics.json";
pub const EMBED_FILE: &str = "embed.json";
pub const SIMILARITY_FILE: &str = "similarity.json";
pub const GRAPH_FILE: &str = "build-graph.json";
pub const CHECKPOINT_FILE: &str = "train.ckpt";
pub const TRAIN_FILE: &str = "train.json";
pub const VALIDATE_FILE: &str = "validate.json";
pub const SENSITIVITY_FILE: &str = "sensitivity.json";
pub const ABLATION_FILE: &str = "ablation.csv";

pub fn extract_file(v: Variant) -> String {
    format!("extract.{}.json", v.name())
}

pub fn topic_set_file(v: Variant, m: Method, ext: &str) -> String {
    format!("extract.{}.{}.{ext}", v.name(), m.name())
}

pub fn evaluate_file(v: Variant, ext: &str) -> String {
    format!("evaluate.{}.{ext}", v.name())
}

/// Result of a full run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub dir: PathBuf,
    pub config_hash: String,
    pub selected: Method,
    pub composites: Vec<MethodComposite>,
    pub ablation: Option<Vec<MethodComposite>>,
}

pub struct Pipeline {
    pub cfg: PipelineConfig,
    pub hash: String,
    pub dir: PathBuf,
    /// Skip config-hash and checksum checks on upstream artifacts.
    pub force: bool,
}

/// Reads and writes artifacts for one stage and remembers what it touched.
pub struct StageIo<'a> {
    dir: &'a Path,
    hash: &'a str,
    force: bool,
    manifest: &'a RunManifest,
    inputs: Vec<FileRecord>,
    outputs: Vec<FileRecord>,
}

fn sha(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

impl StageIo<'_> {
    pub fn path(&self, rel: &str) -> PathBuf {
        self.dir.join(rel)
    }

    /// Upstream bytes, checked against the checksum the manifest recorded.
    pub fn read_bytes(&mut self, rel: &str) -> Result<Vec<u8>> {
        let path = self.dir.join(rel);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
                return Err(Error::Stale {
                    path,
                    reason: "missing; run the producing stage first".into(),
                })
            }
            Err(e) => return Err(Error::io(path, e)),
        };
        let digest = sha(&bytes);
        if !self.force {
            match self.manifest.recorded_output(rel) {
                Some(recorded) if recorded == digest => {}
                Some(_) => {
                    return Err(Error::Stale {
                        path,
                        reason: "checksum differs from the one recorded in the manifest".into(),
                    })
                }
                None => {
                    return Err(Error::Stale {
                        path,
                        reason: "not recorded by a successful stage in this run".into(),
                    })
                }
            }
        }
        self.inputs.push(FileRecord {
            path: rel.to_string(),
            sha256: digest,
        });
        Ok(bytes)
    }

    /// Upstream JSON artifact whose `config_hash` must match this run.
    pub fn read_json<T: DeserializeOwned>(&mut self, rel: &str) -> Result<T> {
        let bytes = self.read_bytes(rel)?;
        let value: serde_json::Value = serde_json::from_slice(&bytes)?;
        self.check_hash(rel, value.get("config_hash").and_then(|v| v.as_str()))?;
        Ok(serde_json::from_value(value)?)
    }

    pub fn check_hash(&self, rel: &str, found: Option<&str>) -> Result<()> {
        if self.force || found == Some(self.hash) {
            return Ok(());
        }
        Err(Error::Stale {
            path: self.dir.join(rel),
            reason: format!(
                "produced under config {}, current config is {}",
                found.unwrap_or("<none>"),
                self.hash
            ),
        })
    }

    /// Records a file outside the run directory (the dataset) as an input.
    pub fn note_external_input(&mut self, name: &str, path: &Path) -> Result<()> {
        self.inputs.push(FileRecord {
            path: name.to_string(),
            sha256: file_sha256(path)?,
        });
        Ok(())
    }

    pub fn write_bytes(&mut self, rel: &str, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.dir.join(rel), bytes)?;
        self.outputs.retain(|f| f.path != rel);
        self.outputs.push(FileRecord {
            path: rel.to_string(),
            sha256: sha(bytes),
        });
        Ok(())
    }

    pub fn write_json<T: Serialize>(&mut self, rel: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.write_bytes(rel, &bytes)
    }

    pub fn write_text(&mut self, rel: &str, text: &str) -> Result<()> {
        self.write_bytes(rel, text.as_bytes())
    }
}

fn now_secs() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

impl Pipeline {
    /// Prepares the run directory `<output.dir>/<first 16 hex of the hash>`.
    pub fn new(cfg: PipelineConfig, force: bool) -> Result<Self> {
        let hash = cfg.hash()?;
        let dir = cfg.output.dir.join(&hash[..16]);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        Ok(Pipeline { cfg, hash, dir, force })
    }

    pub fn manifest(&self) -> Result<RunManifest> {
        RunManifest::load_or_new(&self.dir, &self.hash)
    }

    /// Runs `body` as stage `name` and records the outcome, failed or not.
    pub fn stage<F>(&self, name: &str, body: F) -> Result<()>
    where
        F: FnOnce(&Pipeline, &mut StageIo<'_>) -> Result<()>,
    {
        let mut manifest = self.manifest()?;
        let stamps = self.cfg.output.record_timestamps;
        let started_at = stamps.then(now_secs);
        log::info!("stage {name}");
        let (result, inputs, outputs) = {
            let mut io = StageIo {
                dir: &self.dir,
                hash: &self.hash,
                force: self.force,
                manifest: &manifest,
                inputs: Vec::new(),
                outputs: Vec::new(),
            };
            let r = body(self, &mut io);
            (r, io.inputs, io.outputs)
        };
        manifest.record(StageRecord {
            name: name.to_string(),
            status: if result.is_ok() {
                StageStatus::Ok
            } else {
                StageStatus::Failed
            },
            inputs,
            outputs,
            error: result.as_ref().err().map(|e| e.to_string()),
            started_at,
            finished_at: stamps.then(now_secs),
        });
        manifest.save(&self.dir)?;
        result
    }

    pub(crate) fn chat_backend(&self) -> Result<Box<dyn ChatBackend>> {
        let b = &self.cfg.backend;
        match b.kind {
            crate::pipeline::BackendKind::Fixture => {
                let dir = b
                    .llm_fixture_dir
                    .clone()
                    .ok_or_else(|| Error::Config("fixture backend needs backend.llm_fixture_dir".into()))?;
                Ok(Box::new(FixtureChat::new(dir)))
            }
            crate::pipeline::BackendKind::Http => {
                let endpoint = b
                    .llm_endpoint
                    .clone()
                    .ok_or_else(|| Error::Config("http backend needs backend.llm_endpoint".into()))?;
                let cache = b
                    .cache_dir
                    .clone()
                    .unwrap_or_else(|| self.cfg.output.dir.join("llm-cache"));
                Ok(Box::new(CachedChat::new(
                    HttpChat::new(endpoint, self.api_key(), self.retry_policy()),
                    cache,
                )))
            }
        }
    }

    pub(crate) fn embedder(&self) -> Result<Box<dyn Embedder>> {
        let b = &self.cfg.backend;
        let (d_s, d_b) = (self.cfg.embedding.d_s, self.cfg.embedding.d_b);
        match b.kind {
            crate::pipeline::BackendKind::Fixture => {
                let dir = b
                    .embed_fixture_dir
                    .clone()
                    .ok_or_else(|| Error::Config("fixture backend needs backend.embed_fixture_dir".into()))?;
                Ok(Box::new(FixtureEmbedder::new(dir, d_s, d_b)))
            }
            crate::pipeline::BackendKind::Http => {
                let endpoint = b
                    .embed_endpoint
                    .clone()
                    .ok_or_else(|| Error::Config("http backend needs backend.embed_endpoint".into()))?;
                Ok(Box::new(HttpEmbedder {
                    endpoint,
                    api_key: self.api_key(),
                    policy: self.retry_policy(),
                    d_s,
                    d_b,
                }))
            }
        }
    }

    fn api_key(&self) -> Option<String> {
        std::env::var(&self.cfg.backend.api_key_env).ok().filter(|k| !k.is_empty())
    }

    fn retry_policy(&self) -> RetryPolicy {
        RetryPolicy {
            retries: self.cfg.backend.retries,
            timeout: Duration::from_secs(self.cfg.backend.timeout_secs),
            ..RetryPolicy::default()
        }
    }

    /// generate-topics through select-best. With `ablation = Some(Original)`
    /// the original embeddings are extracted and evaluated as well.
    pub fn run(&self, ablation: Option<Variant>) -> Result<RunSummary> {
        RunManifest::new(&self.hash).save(&self.dir)?;
        self.generate_topics()?;
        self.embed()?;
        self.similarity()?;
        self.build_graph()?;
        self.train()?;
        self.extract(Variant::Refined)?;
        let refined = self.evaluate(Variant::Refined)?;
        let ablation = match ablation {
            Some(Variant::Original) => {
                self.extract(Variant::Original)?;
                Some(self.evaluate(Variant::Original)?.composites)
            }
            _ => None,
        };
        Ok(RunSummary {
            dir: self.dir.clone(),
            config_hash: self.hash.clone(),
            selected: refined.selected,
            composites: refined.composites,
            ablation,
        })
    }
}
