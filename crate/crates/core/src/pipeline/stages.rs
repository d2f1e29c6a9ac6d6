use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;

use rayon::prelude::*;

use super::*;
use crate::backends::{render_prompt, LlmRequest, PromptTemplate};
use crate::corpus::{
    build_topic_pool, ingest_documents, parse_topic_response, resolve_record_ids, Document, ResponseSchema,
};
use crate::extraction::{extract_top_k, kmeans, score_all, score_coherence, select_best_method, TopicSet};
use crate::fusion::{fuse_hybrid, init_attention, SourceKind};
use crate::gnn::{decode_checkpoint, encode_checkpoint, forward_eval, train, Dims};
use crate::graph::{build_graph, GraphInputs, HeterogeneousGraph};
use crate::metrics::{composite, evaluate_topic_set, perturb_weights, MetricsReport, SensitivityRow, WEIGHT_NAMES};
use crate::sgs::{compute_idf, hybrid_matrix, optimize_weights, relative_transform, word_relative_matrix, WordVectors};
use crate::stats::{replicate, validation_report};

/// Approach used as the reference in validation t-tests.
pub const BASELINE_APPROACH: &str = "refined-coherence";

fn approach_name(v: Variant, m: Method) -> String {
    format!("{}-{}", v.name(), m.name())
}

/// Topic sets and per-topic coherence for one embedding space.
struct Extraction {
    k: usize,
    clusters: crate::extraction::ClusterResult,
    coherence: Vec<f64>,
    scores: BTreeMap<Method, Vec<f64>>,
    sets: Vec<TopicSet>,
}

fn run_extraction(
    g: &HeterogeneousGraph,
    embeddings: &[Vec<f64>],
    word_hybrids: &[Vec<f64>],
    k_requested: usize,
    n_init: usize,
    seed: u64,
) -> Result<Extraction> {
    let n = embeddings.len();
    let k = k_requested.min(n);
    if k < k_requested {
        log::warn!("k = {k_requested} exceeds the {n} available topics; using k = {k}");
    }
    let clusters = kmeans(embeddings, k, n_init, seed)?;
    let coherence = (0..n)
        .map(|t| score_coherence(t, g, embeddings, word_hybrids))
        .collect::<Result<Vec<_>>>()?;
    let mut scores = BTreeMap::new();
    let mut sets = Vec::new();
    for m in Method::ALL {
        let scored = score_all(m, g, &clusters, embeddings, word_hybrids)?;
        scores.insert(m, scored.iter().map(|s| s.score).collect());
        sets.push(extract_top_k(&clusters, &scored, &g.topic_phrases)?);
    }
    Ok(Extraction {
        k,
        clusters,
        coherence,
        scores,
        sets,
    })
}

fn evaluate_sets(
    sets: &[TopicSet],
    embeddings: &[Vec<f64>],
    coherence: &[f64],
    cfg: &PipelineConfig,
    seed: u64,
) -> Result<Vec<MetricsReport>> {
    sets.iter()
        .map(|s| evaluate_topic_set(s, embeddings, coherence, &cfg.metrics.weights, cfg.metrics.k_max, seed))
        .collect()
}

fn ablation_csv(refined: &EvaluateArtifact, original: &EvaluateArtifact) -> String {
    let mut out =
        String::from("variant,method,topic_diversity,jaccard,coherence,silhouette,davies_bouldin,composite,selected\n");
    for art in [refined, original] {
        for r in &art.reports {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{},{}",
                art.variant.name(),
                r.method,
                r.topic_diversity,
                r.jaccard_mean,
                r.coherence_mean,
                r.silhouette,
                r.davies_bouldin,
                r.composite,
                r.method == art.selected.name()
            );
        }
    }
    out
}

impl Pipeline {
    pub fn generate_topics(&self) -> Result<()> {
        self.stage("generate-topics", |p, io| {
            let cfg = &p.cfg;
            let ds = &cfg.dataset;
            let name = ds
                .path
                .file_name()
                .map_or_else(|| "dataset".to_string(), |n| n.to_string_lossy().into_owned());
            io.note_external_input(&name, &ds.path)?;
            let docs = ingest_documents(&ds.path, ds.language, &ds.rules())?;
            if docs.is_empty() {
                return Err(Error::domain("no documents survive preprocessing"));
            }
            let template = PromptTemplate::builtin(ds.language);
            let schema = ResponseSchema::for_language(ds.language);
            let chat = p.chat_backend()?;
            let batches: Vec<&[Document]> = docs.chunks(cfg.backend.batch_size).collect();
            let per_batch = batches
                .par_iter()
                .map(|batch| {
                    let request = LlmRequest {
                        prompt: render_prompt(batch, &template)?,
                        model: cfg.backend.model.clone(),
                        temperature: cfg.backend.temperature,
                        max_tokens: cfg.backend.max_tokens,
                    };
                    let raw = chat.chat_complete(&request)?;
                    Ok(resolve_record_ids(parse_topic_response(&raw, &schema)?, batch))
                })
                .collect::<Result<Vec<_>>>()?;
            let records: Vec<_> = per_batch.into_iter().flatten().collect();
            let pool = build_topic_pool(&records);
            if pool.is_empty() {
                return Err(Error::domain("the model returned no usable topic phrases"));
            }
            log::info!("{} documents, {} topics", docs.len(), pool.len());
            io.write_json("config.json", &cfg.canonical_json()?)?;
            io.write_json(
                TOPICS_FILE,
                &TopicsArtifact {
                    config_hash: p.hash.clone(),
                    language: ds.language,
                    documents: docs,
                    records,
                    pool,
                },
            )
        })
    }

    pub fn embed(&self) -> Result<()> {
        self.stage("embed", |p, io| {
            let topics: TopicsArtifact = io.read_json(TOPICS_FILE)?;
            let (d_s, d_b) = (p.cfg.embedding.d_s, p.cfg.embedding.d_b);
            let attention = init_attention(d_s, d_b, p.cfg.embedding.attention_seed);
            let embedder = p.embedder()?;
            let hybrid = |text: &str, kind: SourceKind| -> Result<Vec<f64>> {
                Ok(fuse_hybrid(&embedder.embed_text(text)?, &attention, kind)?.vector)
            };
            let assigned: Vec<&Document> = topics
                .documents
                .iter()
                .filter(|d| topics.pool.assignments.get(&d.id).is_some_and(|a| !a.is_empty()))
                .collect();
            let documents = assigned
                .par_iter()
                .map(|d| {
                    Ok(DocEmbedding {
                        id: d.id.clone(),
                        hybrid: hybrid(&d.text, SourceKind::Document)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let topic_vecs = topics
                .pool
                .topics
                .par_iter()
                .map(|t| hybrid(&t.phrase, SourceKind::Topic))
                .collect::<Result<Vec<_>>>()?;
            let vocab = topics.pool.vocabulary();
            let looked_up = vocab
                .par_iter()
                .map(|w| match embedder.embed_word(w) {
                    Ok(v) => Ok(Some(v.vector)),
                    Err(Error::MissingEmbedding(_)) => Ok(None),
                    Err(e) => Err(e),
                })
                .collect::<Result<Vec<_>>>()?;
            let mut missing_words = Vec::new();
            let mut with_vectors = Vec::new();
            for (w, v) in vocab.into_iter().zip(looked_up) {
                match v {
                    Some(v) => with_vectors.push((w, v)),
                    None => missing_words.push(w),
                }
            }
            if !missing_words.is_empty() {
                log::warn!("{} topic words have no vector and are filtered", missing_words.len());
            }
            let words = with_vectors
                .into_par_iter()
                .map(|(word, vector)| {
                    let h = hybrid(&word, SourceKind::Word)?;
                    Ok(WordEmbedding {
                        word,
                        vector,
                        hybrid: h,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            io.write_json(
                EMBED_FILE,
                &EmbedArtifact {
                    config_hash: p.hash.clone(),
                    d_s,
                    d_b,
                    attention,
                    documents,
                    topics: topic_vecs,
                    words,
                    missing_words,
                },
            )
        })
    }

    pub fn similarity(&self) -> Result<()> {
        self.stage("similarity", |p, io| {
            let topics: TopicsArtifact = io.read_json(TOPICS_FILE)?;
            let emb: EmbedArtifact = io.read_json(EMBED_FILE)?;
            let cfg = &p.cfg;
            let pool = &topics.pool.topics;
            if emb.topics.len() != pool.len() {
                return Err(Error::domain("embed.json does not cover the topic pool"));
            }
            let vectors: WordVectors = emb.words.iter().map(|w| (w.word.clone(), w.vector.clone())).collect();
            let idf = compute_idf(pool)?;
            let (weights, diagnostics, optimized) = if cfg.sgs.optimize && pool.len() >= 4 {
                let (w, d) = optimize_weights(pool, &emb.topics, &vectors, &idf, cfg.sgs.k_max, cfg.seed)?;
                let optimized = !d.degenerate;
                (w, Some(d), optimized)
            } else {
                if cfg.sgs.optimize {
                    log::warn!("weight search needs at least 4 topics; using the configured weights");
                }
                (cfg.sgs.weights, None, false)
            };
            let hybrid = hybrid_matrix(pool, &emb.topics, &vectors, &idf, weights)?;
            let (relative, params) = relative_transform(&hybrid)?;
            let words: Vec<String> = emb.words.iter().map(|w| w.word.clone()).collect();
            let word_relative = if words.len() >= 2 {
                Some(word_relative_matrix(&words, &vectors, weights)?)
            } else {
                None
            };
            io.write_text("similarity.topics.csv", &relative.to_csv())?;
            io.write_json(
                SIMILARITY_FILE,
                &SimilarityArtifact {
                    config_hash: p.hash.clone(),
                    weights,
                    optimized,
                    diagnostics,
                    topic_hybrid: hybrid,
                    topic_relative: relative,
                    topic_params: params,
                    word_relative,
                },
            )
        })
    }

    pub fn build_graph(&self) -> Result<()> {
        self.stage("build-graph", |p, io| {
            let topics: TopicsArtifact = io.read_json(TOPICS_FILE)?;
            let emb: EmbedArtifact = io.read_json(EMBED_FILE)?;
            let sim: SimilarityArtifact = io.read_json(SIMILARITY_FILE)?;
            let by_id: BTreeMap<&str, &Document> = topics.documents.iter().map(|d| (d.id.as_str(), d)).collect();
            let docs = emb
                .documents
                .iter()
                .map(|d| {
                    by_id
                        .get(d.id.as_str())
                        .map(|doc| (*doc).clone())
                        .ok_or_else(|| Error::domain(format!("embedded document {:?} is not in the corpus", d.id)))
                })
                .collect::<Result<Vec<_>>>()?;
            let doc_hybrids: Vec<Vec<f64>> = emb.documents.iter().map(|d| d.hybrid.clone()).collect();
            let words: Vec<String> = emb.words.iter().map(|w| w.word.clone()).collect();
            let word_vectors: Vec<Vec<f64>> = emb.words.iter().map(|w| w.vector.clone()).collect();
            let g = build_graph(&GraphInputs {
                docs: &docs,
                doc_hybrids: &doc_hybrids,
                topics: &topics.pool.topics,
                topic_hybrids: &emb.topics,
                words: &words,
                word_vectors: &word_vectors,
                word_dim: emb.d_b,
                assignments: &topics.pool.assignments,
                topic_rel: &sim.topic_relative,
                word_rel: sim.word_relative.as_ref(),
                percentile: p.cfg.graph.percentile,
            })?;
            io.write_text("graph.dot", &g.to_dot())?;
            io.write_json(
                GRAPH_FILE,
                &GraphArtifact {
                    config_hash: p.hash.clone(),
                    counts: g.counts(),
                    graph: g.to_json_value()?,
                },
            )
        })
    }

    fn load_graph(io: &mut StageIo<'_>) -> Result<HeterogeneousGraph> {
        let art: GraphArtifact = io.read_json(GRAPH_FILE)?;
        HeterogeneousGraph::from_json_value(art.graph)
    }

    pub fn train(&self) -> Result<()> {
        self.stage("train", |p, io| {
            let g = Self::load_graph(io)?;
            let gcfg = &p.cfg.gnn;
            let dims = Dims::for_graph(&g, gcfg);
            match train(&g, gcfg) {
                Ok((params, _, report)) => {
                    log::info!("training loss {} -> {}", report.initial_loss, report.final_loss);
                    io.write_bytes(CHECKPOINT_FILE, &encode_checkpoint(&params, gcfg, Some(&p.hash))?)?;
                    io.write_text("train.loss.csv", &report.loss_csv())?;
                    io.write_json(
                        TRAIN_FILE,
                        &TrainArtifact {
                            config_hash: p.hash.clone(),
                            dims,
                            n_params: params.len(),
                            report: Some(report),
                            error: None,
                        },
                    )
                }
                Err((e, report)) => {
                    io.write_json(
                        TRAIN_FILE,
                        &TrainArtifact {
                            config_hash: p.hash.clone(),
                            dims,
                            n_params: 0,
                            report,
                            error: Some(e.to_string()),
                        },
                    )?;
                    Err(e)
                }
            }
        })
    }

    /// Refined topic embeddings from the saved checkpoint.
    fn refined_embeddings(&self, io: &mut StageIo<'_>, g: &HeterogeneousGraph) -> Result<Vec<Vec<f64>>> {
        let bytes = io.read_bytes(CHECKPOINT_FILE)?;
        let (header, params) = decode_checkpoint(&bytes)?;
        io.check_hash(CHECKPOINT_FILE, header.config_hash.as_deref())?;
        if header.dims != Dims::for_graph(g, &header.config) {
            return Err(Error::Stale {
                path: io.path(CHECKPOINT_FILE),
                reason: "checkpoint shapes do not match the graph".into(),
            });
        }
        Ok(forward_eval(g, &params, &header.config)?.to_rows())
    }

    /// Graph, word hybrids aligned with the graph's words, and the topic
    /// embeddings of `variant`.
    fn extraction_inputs(
        &self,
        io: &mut StageIo<'_>,
        variant: Variant,
    ) -> Result<(HeterogeneousGraph, Vec<Vec<f64>>, Vec<Vec<f64>>)> {
        let g = Self::load_graph(io)?;
        let emb: EmbedArtifact = io.read_json(EMBED_FILE)?;
        let words: Vec<&str> = emb.words.iter().map(|w| w.word.as_str()).collect();
        if words != g.words.iter().map(String::as_str).collect::<Vec<_>>() {
            return Err(Error::domain("graph words and embedded words differ"));
        }
        let word_hybrids = emb.words.into_iter().map(|w| w.hybrid).collect();
        let embeddings = match variant {
            Variant::Refined => self.refined_embeddings(io, &g)?,
            Variant::Original => g.topic_features.to_rows(),
        };
        Ok((g, word_hybrids, embeddings))
    }

    pub fn extract(&self, variant: Variant) -> Result<()> {
        self.stage(&format!("extract.{}", variant.name()), |p, io| {
            let (g, word_hybrids, embeddings) = p.extraction_inputs(io, variant)?;
            let cfg = &p.cfg;
            let ex = run_extraction(&g, &embeddings, &word_hybrids, cfg.k, cfg.extraction.n_init, cfg.seed)?;
            for set in &ex.sets {
                io.write_json(
                    &topic_set_file(variant, set.method, "json"),
                    &TopicSetArtifact {
                        config_hash: p.hash.clone(),
                        set: set.clone(),
                    },
                )?;
                io.write_text(&topic_set_file(variant, set.method, "txt"), &set.to_text())?;
            }
            io.write_json(
                &extract_file(variant),
                &ExtractArtifact {
                    config_hash: p.hash.clone(),
                    variant,
                    k_requested: cfg.k,
                    k: ex.k,
                    clusters: ex.clusters,
                    embeddings,
                    coherence: ex.coherence,
                    scores: ex.scores,
                },
            )
        })
    }

    pub fn evaluate(&self, variant: Variant) -> Result<EvaluateArtifact> {
        let mut out = None;
        self.stage(&format!("evaluate.{}", variant.name()), |p, io| {
            let ex: ExtractArtifact = io.read_json(&extract_file(variant))?;
            let sets = Method::ALL
                .into_iter()
                .map(|m| Ok(io.read_json::<TopicSetArtifact>(&topic_set_file(variant, m, "json"))?.set))
                .collect::<Result<Vec<_>>>()?;
            let reports = evaluate_sets(&sets, &ex.embeddings, &ex.coherence, &p.cfg, p.cfg.seed)?;
            let by_method: BTreeMap<Method, f64> =
                sets.iter().zip(&reports).map(|(s, r)| (s.method, r.composite)).collect();
            let (best, composites) = select_best_method(&sets, |s| Ok(by_method[&s.method]))?;
            let art = EvaluateArtifact {
                config_hash: p.hash.clone(),
                variant,
                reports,
                composites: composites
                    .into_iter()
                    .map(|(method, composite)| MethodComposite { method, composite })
                    .collect(),
                selected: best.method,
                topics: best,
            };
            io.write_text(&evaluate_file(variant, "csv"), &crate::metrics::reports_csv(&art.reports))?;
            io.write_json(&evaluate_file(variant, "json"), &art)?;
            if variant == Variant::Original {
                let refined: EvaluateArtifact = io.read_json(&evaluate_file(Variant::Refined, "json"))?;
                io.write_text(ABLATION_FILE, &ablation_csv(&refined, &art))?;
            }
            out = Some(art);
            Ok(())
        })?;
        Ok(out.expect("stage body ran"))
    }

    /// Re-runs extraction and evaluation under seeds `seed..seed+n` for both
    /// embedding variants and all three methods.
    pub fn validate(&self) -> Result<ValidateArtifact> {
        let mut out = None;
        self.stage("validate", |p, io| {
            let cfg = &p.cfg;
            let n = cfg.validation.replications;
            if n < 2 {
                return Err(Error::Config("validation needs at least 2 replications".into()));
            }
            let (g, word_hybrids, refined) = p.extraction_inputs(io, Variant::Refined)?;
            let original = g.topic_features.to_rows();
            let spaces = [(Variant::Refined, &refined), (Variant::Original, &original)];
            let sets = replicate(n, cfg.seed, |seed| {
                let mut results = Vec::new();
                for (variant, emb) in spaces {
                    let ex = run_extraction(&g, emb, &word_hybrids, cfg.k, cfg.extraction.n_init, seed)?;
                    let reports = evaluate_sets(&ex.sets, emb, &ex.coherence, cfg, seed)?;
                    for (s, r) in ex.sets.iter().zip(reports) {
                        results.push((approach_name(variant, s.method), r.composite));
                    }
                }
                Ok(results)
            })
            .map_err(|(e, partial)| {
                log::error!("validation stopped after {} complete replication(s)", {
                    partial.values().map(|s| s.samples.len()).min().unwrap_or(0)
                });
                e
            })?;
            let report = validation_report(&sets, BASELINE_APPROACH)?;
            io.write_text("validate.descriptive.csv", &report.descriptive_csv())?;
            io.write_text("validate.ttests.csv", &report.t_test_csv())?;
            io.write_text("validate.anova.csv", &report.anova_csv())?;
            let art = ValidateArtifact {
                config_hash: p.hash.clone(),
                base_seed: cfg.seed,
                replications: n,
                baseline: BASELINE_APPROACH.to_string(),
                sets,
                report,
            };
            io.write_json(VALIDATE_FILE, &art)?;
            out = Some(art);
            Ok(())
        })?;
        Ok(out.expect("stage body ran"))
    }

    /// Weight perturbations around the selected refined report. Pairs that
    /// would push a weight outside [0, 1] are listed as skipped.
    pub fn sensitivity(&self) -> Result<SensitivityArtifact> {
        let mut out = None;
        self.stage("sensitivity", |p, io| {
            let ev: EvaluateArtifact = io.read_json(&evaluate_file(Variant::Refined, "json"))?;
            let report = ev
                .reports
                .iter()
                .find(|r| r.method == ev.selected.name())
                .ok_or_else(|| Error::domain("selected method has no report"))?;
            let raw = report.raw();
            let weights = p.cfg.metrics.weights;
            let mut rows = Vec::new();
            let mut skipped = Vec::new();
            let mut seen = HashSet::new();
            for (i, name) in WEIGHT_NAMES.iter().enumerate() {
                for &d in &p.cfg.validation.deltas {
                    let signed: &[f64] = if d == 0.0 { &[0.0] } else { &[-d, d] };
                    for &s in signed {
                        if !seen.insert((i, s.to_bits())) {
                            continue;
                        }
                        match perturb_weights(&weights, i, s) {
                            Ok(w) => rows.push(SensitivityRow {
                                weight: name.to_string(),
                                delta: s,
                                composite: composite(&raw, &w),
                            }),
                            Err(Error::Domain(reason)) => skipped.push(SkippedPerturbation {
                                weight: name.to_string(),
                                delta: s,
                                reason,
                            }),
                            Err(e) => return Err(e),
                        }
                    }
                }
            }
            if !skipped.is_empty() {
                log::warn!("{} infeasible weight perturbations skipped", skipped.len());
            }
            io.write_text("sensitivity.csv", &crate::metrics::sensitivity_csv(&rows))?;
            let art = SensitivityArtifact {
                config_hash: p.hash.clone(),
                method: ev.selected,
                baseline_composite: report.composite,
                rows,
                skipped,
            };
            io.write_json(SENSITIVITY_FILE, &art)?;
            out = Some(art);
            Ok(())
        })?;
        Ok(out.expect("stage body ran"))
    }
}
