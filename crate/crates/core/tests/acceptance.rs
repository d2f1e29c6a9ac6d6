//! Acceptance checks, one pass/fail line per criterion.
//!
//!     cargo test -p topic-refine --test acceptance

mod common;

use std::collections::BTreeSet;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::{Duration, Instant};

use rand::Rng;
use tempfile::TempDir;

use topic_refine::corpus::TopicPhrase;
use topic_refine::extraction::{elbow_cluster, kmeans, kmeans_runs, Method};
use topic_refine::gnn::{init_params, loss_and_grad, train, Dims, GnnConfig, Mode, ModelParams};
use topic_refine::graph::{build_graph, EdgeKind, GraphInputs, HeterogeneousGraph};
use topic_refine::linalg::{cosine, Matrix};
use topic_refine::metrics::{
    composite, davies_bouldin, mean_pairwise_jaccard, sensitivity, silhouette, topic_diversity, CompositeWeights,
    RawMetrics,
};
use topic_refine::pipeline::{
    evaluate_file, GraphArtifact, Pipeline, RunSummary, Variant, ABLATION_FILE, GRAPH_FILE,
};
use topic_refine::sgs::{
    compute_idf_from_words, hungarian, hybrid_matrix, optimize_weights, relative_for_weights,
    relative_transform, weight_grid, wmd_matrix, wmd_similarity, SimilarityMatrix, Stage, WordVectors,
};
use topic_refine::stats::{anova, t_cdf, t_test};

/// Pass detail or failure reason.
type Check = std::result::Result<String, String>;

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if $cond {
        } else {
            return Err(format!($($msg)+));
        }
    };
}

/// Two full fixture runs into separate output directories.
struct FixtureRuns {
    _dirs: (TempDir, TempDir),
    first: RunSummary,
    second: RunSummary,
}

fn fixture_runs() -> std::result::Result<FixtureRuns, String> {
    let a = TempDir::new().map_err(|e| e.to_string())?;
    let b = TempDir::new().map_err(|e| e.to_string())?;
    let run = |dir: &Path| -> std::result::Result<RunSummary, String> {
        let p = Pipeline::new(common::fixture_config(dir), false).map_err(|e| e.to_string())?;
        p.run(Some(Variant::Original)).map_err(|e| e.to_string())
    };
    let first = run(a.path())?;
    let second = run(b.path())?;
    Ok(FixtureRuns {
        _dirs: (a, b),
        first,
        second,
    })
}

fn fixture_graph(runs: &FixtureRuns) -> std::result::Result<HeterogeneousGraph, String> {
    let bytes = std::fs::read(runs.first.dir.join(GRAPH_FILE)).map_err(|e| e.to_string())?;
    let art: GraphArtifact = serde_json::from_slice(&bytes).map_err(|e| e.to_string())?;
    HeterogeneousGraph::from_json_value(art.graph).map_err(|e| e.to_string())
}

fn a1_assignment() -> Check {
    let mut r = common::rng(1);
    let mut spent = Duration::ZERO;
    for case in 0..500 {
        let (m, n) = (r.random_range(1..=6), r.random_range(1..=6));
        let rows: Vec<Vec<f64>> = (0..m).map(|_| (0..n).map(|_| r.random_range(0.0..1.0)).collect()).collect();
        let cost = Matrix::from_rows(&rows);
        let t = Instant::now();
        let got = hungarian(&cost).map_err(|e| e.to_string())?;
        spent += t.elapsed();
        let want = common::brute_assignment(&rows);
        ensure!(got.total_cost == want, "case {case} ({m}x{n}): hungarian {} vs exhaustive {want}", got.total_cost);
        ensure!(got.rows.len() == m.min(n), "case {case}: matching has {} pairs", got.rows.len());
    }
    ensure!(spent < Duration::from_secs(1), "500 assignments took {spent:?}");
    Ok("500 random cost matrices up to 6x6".into())
}

/// Unweighted assignment similarity written out from its definition.
fn unweighted_wmd(t1: &[String], t2: &[String], vectors: &WordVectors) -> Option<f64> {
    let keep = |t: &[String]| -> Vec<Vec<f64>> {
        t.iter()
            .filter_map(|w| vectors.get(w))
            .filter(|v| v.iter().any(|&x| x != 0.0))
            .cloned()
            .collect()
    };
    let (a, b) = (keep(t1), keep(t2));
    if a.is_empty() || b.is_empty() {
        return None;
    }
    let d: Vec<Vec<f64>> = a
        .iter()
        .map(|x| b.iter().map(|y| 1.0 - cosine(x, y).unwrap_or(0.0)).collect())
        .collect();
    Some(1.0 - common::brute_assignment(&d) / (2.0 * a.len().max(b.len()) as f64))
}

fn random_pool(r: &mut impl Rng, n: usize) -> (Vec<Vec<String>>, Vec<Vec<f64>>, WordVectors) {
    let vocab: Vec<String> = (0..15).map(|i| format!("w{i}")).collect();
    let mut vectors = WordVectors::new();
    for w in &vocab[..12] {
        // the last three words have no vector and get filtered
        vectors.insert(w.clone(), (0..6).map(|_| r.random_range(-1.0..1.0)).collect());
    }
    let topics: Vec<Vec<String>> = (0..n)
        .map(|_| {
            let len = r.random_range(1..=3);
            let mut ws = BTreeSet::new();
            while ws.len() < len {
                ws.insert(vocab[r.random_range(0..vocab.len())].clone());
            }
            ws.into_iter().collect()
        })
        .collect();
    let emb = (0..n)
        .map(|_| (0..8).map(|_| r.random_range(-1.0..1.0)).collect())
        .collect();
    (topics, emb, vectors)
}

fn a2_sgs_algebra() -> Check {
    let mut r = common::rng(2);
    for case in 0..100 {
        let n = r.random_range(2..=30);
        let (topics, emb, vectors) = random_pool(&mut r, n);
        let idf = compute_idf_from_words(topics.iter().map(Vec::as_slice)).map_err(|e| e.to_string())?;
        let weights = topic_refine::sgs::SgsWeights {
            w_wmd: r.random_range(0.0..=1.0),
            w_idf: r.random_range(0.0..=1.0),
        };
        let h = hybrid_matrix(&topics, &emb, &vectors, &idf, weights).map_err(|e| e.to_string())?;
        for i in 0..n {
            ensure!(h.get(i, i) == 1.0, "case {case}: diagonal {i} is {}", h.get(i, i));
            for j in 0..n {
                ensure!((h.get(i, j) - h.get(j, i)).abs() <= 1e-12, "case {case}: asymmetric at ({i},{j})");
            }
        }
        for t in &topics {
            if let Ok(s) = wmd_similarity(t, t, &vectors, &idf, weights.w_idf) {
                ensure!(s == 1.0, "case {case}: self similarity of {t:?} is {s}");
            }
        }
        let m = wmd_matrix(&topics, &vectors, &idf, 0.0).map_err(|e| e.to_string())?;
        for i in 0..n {
            for j in i + 1..n {
                let want = unweighted_wmd(&topics[i], &topics[j], &vectors).unwrap_or(0.0);
                ensure!(
                    m.get(i, j).to_bits() == want.to_bits(),
                    "case {case}: w_idf = 0 gives {} but unweighted is {want}",
                    m.get(i, j)
                );
            }
        }
    }
    Ok("100 random pools".into())
}

fn sym(n: usize, upper: &[f64]) -> SimilarityMatrix {
    let mut values = Matrix::zeros(n, n);
    let mut k = 0;
    for i in 0..n {
        values.set(i, i, 1.0);
        for j in i + 1..n {
            values.set(i, j, upper[k]);
            values.set(j, i, upper[k]);
            k += 1;
        }
    }
    SimilarityMatrix {
        n,
        stage: Stage::Hybrid,
        values,
    }
}

fn a3_relative_transform() -> Check {
    let mut r = common::rng(3);
    // n = 6 gives 15 pairs: seven mirrored pairs around a center plus the center
    for case in 0..100 {
        let center: f64 = r.random_range(0.2..0.8);
        let mut upper = vec![center];
        for _ in 0..7 {
            let d: f64 = r.random_range(0.001..0.2);
            upper.push(center + d);
            upper.push(center - d);
        }
        for i in (1..upper.len()).rev() {
            upper.swap(i, r.random_range(0..=i));
        }
        let at = upper.iter().position(|&v| v == center).unwrap();
        let (rel, params) = relative_transform(&sym(6, &upper)).map_err(|e| e.to_string())?;
        let mean = upper.iter().sum::<f64>() / upper.len() as f64;
        ensure!((params.mu - mean).abs() <= 1e-12, "case {case}: mu {} vs {mean}", params.mu);
        let got = rel.upper_triangle()[at];
        ensure!((got - 0.5).abs() <= 1e-9, "case {case}: mean entry maps to {got}");

        let mut order: Vec<usize> = (0..upper.len()).collect();
        order.sort_by(|&a, &b| upper[a].total_cmp(&upper[b]));
        let out = rel.upper_triangle();
        for w in order.windows(2) {
            if upper[w[0]] < upper[w[1]] {
                ensure!(out[w[0]] < out[w[1]], "case {case}: transform not strictly increasing");
            }
        }
    }
    let (rel, params) = relative_transform(&sym(4, &[0.37; 6])).map_err(|e| e.to_string())?;
    ensure!(params.sigma == 0.0, "constant input has sigma {}", params.sigma);
    ensure!(rel.upper_triangle().iter().all(|&v| v == 0.5), "constant input does not map to 0.5");
    Ok("100 random matrices plus the constant case".into())
}

/// Words carry a clean two-group structure while the topic embeddings are
/// unrelated noise, so silhouette rises with the word weight and the top of
/// the grid (w_wmd = 0.9) wins.
fn a4_weight_optimization() -> Check {
    let mut r = common::rng(4);
    let per = 8;
    let mut topics = Vec::new();
    let mut emb = Vec::new();
    let mut vectors = WordVectors::new();
    for i in 0..2 * per {
        let w = format!("w{i}");
        let mut v: Vec<f64> = (0..6).map(|_| r.random_range(-0.1..0.1)).collect();
        v[i / per] += 1.0;
        vectors.insert(w.clone(), v);
        topics.push(vec![w]);
        emb.push((0..6).map(|_| r.random_range(0.0..1.0)).collect::<Vec<f64>>());
    }
    let idf = compute_idf_from_words(topics.iter().map(Vec::as_slice)).map_err(|e| e.to_string())?;
    let (k_max, seed) = (10, 0);
    let (best, diag) = optimize_weights(&topics, &emb, &vectors, &idf, k_max, seed).map_err(|e| e.to_string())?;
    ensure!(!diag.degenerate, "grid search reported degeneracy");
    ensure!(best.w_wmd == 0.9, "optimizer picked w_wmd = {}", best.w_wmd);

    let k_hi = k_max.min(topics.len() - 1);
    let mut oracle_best = (f64::NEG_INFINITY, 0.0);
    for (w, point) in weight_grid().into_iter().zip(&diag.grid) {
        let (rel, _) = relative_for_weights(&topics, &emb, &vectors, &idf, w).map_err(|e| e.to_string())?;
        let rows = rel.values.to_rows();
        let (clusters, _) = elbow_cluster(&rows, 2, k_hi, 10, seed).map_err(|e| e.to_string())?;
        let s = common::silhouette_oracle(&rows, &clusters.labels);
        let reported = point.silhouette.ok_or("grid point without silhouette")?;
        ensure!((s - reported).abs() <= 1e-9, "w_wmd {}: oracle {s} vs reported {reported}", w.w_wmd);
        if s >= oracle_best.0 {
            oracle_best = (s, w.w_wmd);
        }
    }
    ensure!(oracle_best.1 == best.w_wmd, "brute force prefers w_wmd = {}", oracle_best.1);
    Ok(format!("w_wmd = {}, silhouette {:.4}", best.w_wmd, oracle_best.0))
}

fn threshold_graph(r: &mut impl Rng, n: usize) -> std::result::Result<HeterogeneousGraph, String> {
    let topics: Vec<TopicPhrase> = (0..n)
        .map(|i| TopicPhrase {
            id: i,
            phrase: format!("t{i}"),
            words: vec![format!("t{i}")],
            assigned_docs: Default::default(),
        })
        .collect();
    let hybrids: Vec<Vec<f64>> = (0..n).map(|_| vec![r.random_range(-1.0..1.0), 1.0]).collect();
    let pairs = n * (n - 1) / 2;
    // distinct by construction: a shuffled arithmetic sequence
    let mut upper: Vec<f64> = (0..pairs).map(|k| (k as f64 + 0.5) / pairs as f64).collect();
    for i in (1..pairs).rev() {
        upper.swap(i, r.random_range(0..=i));
    }
    let rel = sym(n, &upper);
    build_graph(&GraphInputs {
        docs: &[],
        doc_hybrids: &[],
        topics: &topics,
        topic_hybrids: &hybrids,
        words: &[],
        word_vectors: &[],
        word_dim: 1,
        assignments: &Default::default(),
        topic_rel: &rel,
        word_rel: None,
        percentile: 0.9,
    })
    .map_err(|e| e.to_string())
}

fn a5_graph(runs: &std::result::Result<FixtureRuns, String>) -> Check {
    let mut r = common::rng(5);
    for n in [2, 3, 5, 10, 17, 30, 45] {
        let g = threshold_graph(&mut r, n)?;
        let pairs = n * (n - 1) / 2;
        let want = pairs - (9 * pairs).div_ceil(10);
        let got = g.edges.iter().filter(|e| e.kind == EdgeKind::SimilarTopics).count();
        ensure!(got == want, "n = {n}: {got} similar-topic edges, expected {want}");
    }
    let runs = runs.as_ref().map_err(|e| format!("fixture run failed: {e}"))?;
    let g = fixture_graph(runs)?;
    for kind in EdgeKind::ALL {
        ensure!(g.edges.iter().any(|e| e.kind == kind), "fixture graph has no {kind:?} edge");
    }
    let dir = TempDir::new().map_err(|e| e.to_string())?;
    let path = dir.path().join("graph.json");
    g.export(&path).map_err(|e| e.to_string())?;
    let back = HeterogeneousGraph::import(&path).map_err(|e| e.to_string())?;
    ensure!(back == g, "export/import changed the graph");
    Ok(format!("fixture graph {:?}", g.counts()))
}

fn fd_check(g: &HeterogeneousGraph, cfg: &GnnConfig, mode: Mode, params: &ModelParams) -> std::result::Result<f64, String> {
    let loss = |p: &ModelParams| -> std::result::Result<(f64, Vec<f64>), String> {
        // same stream each call, so Train mode draws the same dropout masks
        let mut rng = common::rng(99);
        let (l, grad, _) = loss_and_grad(g, p, cfg, mode, &mut rng, 1).map_err(|e| e.to_string())?;
        Ok((l, grad))
    };
    let (_, grad) = loss(params)?;
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..params.len() {
        let mut plus = params.clone();
        plus.data[i] += h;
        let mut minus = params.clone();
        minus.data[i] -= h;
        let numeric = (loss(&plus)?.0 - loss(&minus)?.0) / (2.0 * h);
        let scale = grad[i].abs().max(numeric.abs());
        let err = if scale < 1e-8 { (grad[i] - numeric).abs() } else { (grad[i] - numeric).abs() / scale };
        worst = worst.max(err);
    }
    Ok(worst)
}

fn a6_gradients() -> Check {
    let g = common::tiny_graph(6);
    let cfg = GnnConfig {
        hidden_dim: 3,
        n_layers: 3,
        dropout: 0.2,
        lr: 0.001,
        epochs: 1,
        edge_mlp_hidden: 2,
        seed: 6,
    };
    let mut params = init_params(Dims::for_graph(&g, &cfg), cfg.seed);
    ensure!(params.len() <= 200, "fixture model has {} parameters", params.len());
    // move off the zero-bias, unit-gain initialization
    let mut r = common::rng(60);
    for v in params.data.iter_mut() {
        *v += r.random_range(-0.2..0.2);
    }
    let mut worst_all: f64 = 0.0;
    for mode in [Mode::Eval, Mode::Train] {
        let worst = fd_check(&g, &cfg, mode, &params)?;
        worst_all = worst_all.max(worst);
        ensure!(worst <= 1e-4, "{mode:?}: max relative error {worst:e} over {} parameters", params.len());
    }
    Ok(format!("{} parameters, max relative error {worst_all:.1e}", params.len()))
}

fn a7_training(runs: &std::result::Result<FixtureRuns, String>) -> Check {
    let runs = runs.as_ref().map_err(|e| format!("fixture run failed: {e}"))?;
    let g = fixture_graph(runs)?;
    ensure!(
        (g.n_docs(), g.n_topics(), g.n_words()) == (10, 30, 40),
        "fixture graph has {} docs, {} topics, {} words",
        g.n_docs(),
        g.n_topics(),
        g.n_words()
    );
    let cfg = common::fixture_config(Path::new("unused")).gnn;
    ensure!(cfg.hidden_dim == 16 && cfg.epochs == 100, "fixture GNN config changed");
    let t = Instant::now();
    let (_, _, first) = train(&g, &cfg).map_err(|(e, _)| e.to_string())?;
    let took = t.elapsed();
    ensure!(took < Duration::from_secs(60), "training took {took:?}");
    ensure!(
        first.final_loss < 0.5 * first.initial_loss,
        "loss {} -> {} is not below half",
        first.initial_loss,
        first.final_loss
    );
    let (_, _, second) = train(&g, &cfg).map_err(|(e, _)| e.to_string())?;
    ensure!(first == second, "same seed gave a different loss curve");
    Ok(format!("loss {:.4} -> {:.4} in {:.1}s", first.initial_loss, first.final_loss, took.as_secs_f64()))
}

fn a8_clustering() -> Check {
    let mut r = common::rng(8);
    for case in 0..100 {
        let n = r.random_range(3..=40);
        let dim = r.random_range(1..=4);
        let k = r.random_range(1..=n.min(6));
        let points = common::random_points(&mut r, n, dim);
        let runs = kmeans_runs(&points, k, 10, case).map_err(|e| e.to_string())?;
        for (i, run) in runs.iter().enumerate() {
            for w in run.inertia_history.windows(2) {
                ensure!(w[1] <= w[0], "case {case} run {i}: inertia rose from {} to {}", w[0], w[1]);
            }
        }
        let best = kmeans(&points, k, 10, case).map_err(|e| e.to_string())?;
        for run in &runs {
            ensure!(best.inertia <= run.result.inertia, "case {case}: best-of-10 worse than a run");
        }
    }
    let blobs = vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![10.0, 0.0], vec![10.0, 1.0]];
    let c = kmeans(&blobs, 2, 10, 0).map_err(|e| e.to_string())?;
    ensure!(c.inertia == 1.0, "two-blob inertia is {}", c.inertia);
    let mut cents = c.centroids.to_rows();
    cents.sort_by(|a, b| a[0].total_cmp(&b[0]));
    ensure!(cents == vec![vec![0.0, 0.5], vec![10.0, 0.5]], "two-blob centroids {cents:?}");
    Ok("100 random instances plus the two-blob fixture".into())
}

fn a9_metric_oracles() -> Check {
    let mut r = common::rng(9);
    for case in 0..20 {
        let dim = r.random_range(2..=5);
        let points = common::random_points(&mut r, 50, dim);
        let k = r.random_range(2..=5);
        let labels: Vec<usize> = (0..50).map(|i| if i < k { i } else { r.random_range(0..k) }).collect();
        let s = silhouette(&points, &labels).map_err(|e| e.to_string())?;
        let so = common::silhouette_oracle(&points, &labels);
        ensure!((s - so).abs() <= 1e-9, "case {case}: silhouette {s} vs oracle {so}");
        let d = davies_bouldin(&points, &labels).map_err(|e| e.to_string())?;
        let dor = common::davies_bouldin_oracle(&points, &labels);
        ensure!((d - dor).abs() <= 1e-9, "case {case}: Davies-Bouldin {d} vs oracle {dor}");
    }
    let td = |p: &[&str]| topic_diversity(p).map_err(|e| e.to_string());
    let jac = |p: &[&str]| mean_pairwise_jaccard(p).map_err(|e| e.to_string());
    ensure!(td(&["a b", "a c"])? == 0.75, "diversity of {{a b, a c}}");
    ensure!(td(&["a b", "c d"])? == 1.0, "diversity of distinct words");
    ensure!((jac(&["a b", "b c"])? - 1.0 / 3.0).abs() <= 1e-15, "jaccard of {{a b, b c}}");
    ensure!(jac(&["a b", "c d"])? == 0.0, "jaccard of disjoint sets");
    ensure!(jac(&["a b", "a b"])? == 1.0, "jaccard of identical topics");
    Ok("20 fixtures of 50 points".into())
}

fn a10_composite() -> Check {
    let w = CompositeWeights::default();
    let perfect = RawMetrics {
        topic_diversity: 1.0,
        jaccard_mean: 0.0,
        coherence_mean: 1.0,
        silhouette: 1.0,
        davies_bouldin: 0.0,
    };
    ensure!(composite(&perfect, &w) == 1.0, "perfect composite is {}", composite(&perfect, &w));
    let mut r = common::rng(10);
    for case in 0..1000 {
        let base = RawMetrics {
            topic_diversity: r.random_range(0.0..0.99),
            jaccard_mean: r.random_range(0.01..1.0),
            coherence_mean: r.random_range(-1.0..0.99),
            silhouette: r.random_range(-1.0..0.99),
            davies_bouldin: r.random_range(0.01..5.0),
        };
        let c0 = composite(&base, &w);
        let better = [
            RawMetrics { topic_diversity: r.random_range(base.topic_diversity + 1e-3..=1.0), ..base },
            RawMetrics { jaccard_mean: r.random_range(0.0..base.jaccard_mean - 1e-3), ..base },
            RawMetrics { coherence_mean: r.random_range(base.coherence_mean + 1e-3..=1.0), ..base },
            RawMetrics { silhouette: r.random_range(base.silhouette + 1e-3..=1.0), ..base },
            RawMetrics { davies_bouldin: r.random_range(0.0..base.davies_bouldin - 1e-3), ..base },
        ];
        for (i, b) in better.iter().enumerate() {
            ensure!(composite(b, &w) > c0, "case {case}: improving metric {i} did not raise the composite");
        }
        let rows = sensitivity(&base, &w, &[0.0]).map_err(|e| e.to_string())?;
        for row in rows {
            ensure!(row.composite.to_bits() == c0.to_bits(), "case {case}: delta 0 on {} changed the composite", row.weight);
        }
    }
    Ok("1000 random metric tuples".into())
}

fn a11_statistics() -> Check {
    let mut r = common::rng(11);
    for case in 0..100 {
        let na = r.random_range(2..=8);
        let nb = r.random_range(2..=8);
        let a: Vec<f64> = (0..na).map(|_| r.random_range(0.0..1.0)).collect();
        let b: Vec<f64> = (0..nb).map(|_| r.random_range(0.0..1.5)).collect();
        let t = t_test(&a, &b).map_err(|e| e.to_string())?;
        let f = anova(&[a, b]).map_err(|e| e.to_string())?;
        let t2 = t.t_statistic * t.t_statistic;
        ensure!(
            (f.f_statistic - t2).abs() <= 1e-9 * t2.max(1.0),
            "case {case}: F {} vs t^2 {t2}",
            f.f_statistic
        );
    }
    let got = t_cdf(2.306, 8.0).map_err(|e| e.to_string())?;
    let oracle = common::t_cdf_oracle(2.306, 8);
    ensure!((got - oracle).abs() <= 1e-4, "t_cdf(2.306, 8) = {got}, integration gives {oracle}");
    ensure!((got - 0.975).abs() <= 1e-4, "t_cdf(2.306, 8) = {got}");
    let same = [0.4, 0.7, 0.1, 0.9];
    let t = t_test(&same, &same).map_err(|e| e.to_string())?;
    ensure!(t.t_statistic == 0.0 && t.p_value == 1.0, "identical samples gave t = {}, p = {}", t.t_statistic, t.p_value);
    Ok(format!("t_cdf(2.306, 8) = {got:.6}, oracle {oracle:.6}"))
}

fn a12_end_to_end(runs: &std::result::Result<FixtureRuns, String>) -> Check {
    let runs = runs.as_ref().map_err(|e| format!("fixture run failed: {e}"))?;
    let (a, b) = (common::tree_bytes(&runs.first.dir), common::tree_bytes(&runs.second.dir));
    ensure!(a.keys().eq(b.keys()), "the two runs wrote different file sets");
    for (name, bytes) in &a {
        ensure!(b[name] == *bytes, "{name} differs between runs");
    }
    ensure!(runs.first == RunSummary { dir: runs.first.dir.clone(), ..runs.second.clone() }, "run summaries differ");

    let s = &runs.first;
    ensure!(s.composites.len() == 3, "{} composites emitted", s.composites.len());
    let top = s.composites.iter().map(|c| c.composite).fold(f64::NEG_INFINITY, f64::max);
    let argmax = s.composites.iter().find(|c| c.composite == top).unwrap().method;
    ensure!(s.selected == argmax, "selected {:?} but the argmax is {argmax:?}", s.selected);
    let emitted: topic_refine::pipeline::EvaluateArtifact =
        serde_json::from_slice(&a[&evaluate_file(Variant::Refined, "json")]).map_err(|e| e.to_string())?;
    ensure!(emitted.composites == s.composites, "evaluate.refined.json disagrees with the run summary");

    let original = s.ablation.as_ref().ok_or("ablation run emitted no original composites")?;
    ensure!(original.len() == 3, "{} original composites", original.len());
    ensure!(a.contains_key(&evaluate_file(Variant::Original, "json")), "evaluate.original.json missing");
    let table = String::from_utf8_lossy(&a[ABLATION_FILE]).into_owned();
    for m in [Method::Coherence, Method::Centroid, Method::Connectivity] {
        for v in ["refined", "original"] {
            ensure!(
                table.lines().any(|l| l.starts_with(v) && l.contains(m.name())),
                "ablation.csv lacks {v}/{}",
                m.name()
            );
        }
    }
    Ok(format!("selected {}, {} files identical", s.selected.name(), a.len()))
}

fn main() {
    let runs = fixture_runs();
    let checks: Vec<(&str, Box<dyn Fn() -> Check + '_>)> = vec![
        ("assignment matches exhaustive search", Box::new(a1_assignment)),
        ("similarity algebra", Box::new(a2_sgs_algebra)),
        ("relative transform", Box::new(a3_relative_transform)),
        ("weight grid search", Box::new(a4_weight_optimization)),
        ("graph thresholds and round trip", Box::new(|| a5_graph(&runs))),
        ("network gradients", Box::new(a6_gradients)),
        ("training progress and determinism", Box::new(|| a7_training(&runs))),
        ("clustering", Box::new(a8_clustering)),
        ("metric oracles", Box::new(a9_metric_oracles)),
        ("composite score", Box::new(a10_composite)),
        ("statistics", Box::new(a11_statistics)),
        ("end-to-end determinism and selection", Box::new(|| a12_end_to_end(&runs))),
    ];
    let mut failed = 0;
    for (i, (name, check)) in checks.iter().enumerate() {
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = t.elapsed().as_secs_f64();
        match outcome {
            Ok(detail) => println!("acceptance {:>2}: PASS  {name}: {detail} ({secs:.2}s)", i + 1),
            Err(e) => {
                failed += 1;
                println!("acceptance {:>2}: FAIL  {name}: {e}", i + 1);
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
