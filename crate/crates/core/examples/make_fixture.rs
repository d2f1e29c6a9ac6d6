//! Regenerates the bundled fixture corpus under `fixtures/`:
//! a 12-line feedback corpus, recorded LLM responses and synthetic
//! embeddings (d_s = d_b = 8) clustered by theme.
//!
//!     cargo run -p topic-refine --example make_fixture [-- <out-dir>]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;
use sha2::{Digest, Sha256};

use topic_refine::backends::{render_prompt, CacheEnvelope, EmbeddingBundle, FixtureEmbedder, LlmRequest, PromptTemplate, WordVector};
use topic_refine::corpus::{ingest_documents, tokenize, Language, PreprocessRules};
use topic_refine::linalg::Matrix;

const DIM: usize = 8;
const BATCH: usize = 5;
const MODEL: &str = "gpt-4o";
const MAX_TOKENS: u32 = 4096;

const THEMES: [&[&str]; 6] = [
    &["wait", "long", "waiting", "time", "delay", "appointment", "queue"],
    &["rude", "staff", "nurse", "doctor", "attitude", "unhelpful", "reception"],
    &["parking", "car", "park", "expensive", "fees", "spaces"],
    &["food", "cold", "meals", "poor", "quality", "hospital"],
    &["dirty", "ward", "toilets", "cleanliness", "bathroom", "hygiene"],
    &["communication", "information", "discharge", "calls", "results", "letters", "phone", "delayed"],
];

const CORPUS: [(&str, &str, &[&str]); 12] = [
    ("d01", "Comment Title: Long wait Liked: The nurse was kind Disliked: I had a long wait and the waiting time was four hours", &["long wait", "waiting time", "wait time"]),
    ("d02", "Disliked: Rude staff at reception and an unhelpful receptionist. Advice: Train the staff", &["rude staff", "unhelpful reception", "staff attitude", "Rude Staff"]),
    ("d03", "Disliked: Parking fees are expensive and there are no parking spaces", &["parking fees", "expensive parking", "parking spaces", "expensive fees"]),
    ("d04", "Disliked: The food was cold and the meals were poor quality", &["cold food", "poor food quality", "cold meals", "poor quality", "hospital meals"]),
    ("d05", "Disliked: The ward was dirty and the toilets were not cleaned. Liked: Nothing", &["dirty ward", "dirty toilets", "ward cleanliness"]),
    ("d06", "Disliked: Nobody explained my discharge and the results letters were delayed", &["discharge information", "delayed results", "delayed letters", "poor communication"]),
    ("d07", "Disliked: The appointment was delayed twice and the queue was long", &["appointment delay", "long queue", "long wait"]),
    ("d08", "Disliked: The doctor had a poor attitude and a nurse was rude", &["doctor attitude", "rude nurse", "poor communication"]),
    ("d09", "Disliked: Could not find a car park space and the bathroom hygiene was poor", &["car park spaces", "bathroom hygiene", "poor hygiene"]),
    ("d10", "Disliked: Nobody answered phone calls and the hospital meals were cold", &["phone calls", "hospital meals", "cold meals"]),
    ("d11", "Liked: Nothing Disliked: N/A", &[]),
    ("d12", "Comment Title: N/A Advice: Nothing", &[]),
];

fn rng_for(key: &str) -> ChaCha8Rng {
    let digest = Sha256::digest(key.as_bytes());
    ChaCha8Rng::seed_from_u64(u64::from_le_bytes(digest[..8].try_into().unwrap()))
}

fn word_vector(word: &str, theme_of: &BTreeMap<&str, usize>) -> Vec<f64> {
    let mut rng = rng_for(&format!("word:{word}"));
    match theme_of.get(word) {
        Some(&t) => (0..DIM)
            .map(|i| {
                let center = if i == t { 1.0 } else if i == (t + 1) % DIM { 0.3 } else { 0.0 };
                center + rng.random_range(-0.25..0.25)
            })
            .collect(),
        // words outside the topic vocabulary are weak background noise
        None => (0..DIM).map(|_| rng.random_range(-0.2..0.2)).collect(),
    }
}

fn text_bundle(text: &str, theme_of: &BTreeMap<&str, usize>) -> EmbeddingBundle {
    let tokens = tokenize(text);
    let rows: Vec<Vec<f64>> = tokens.iter().map(|t| word_vector(t, theme_of)).collect();
    let mut sentence = vec![0.0; DIM];
    for r in &rows {
        for (s, v) in sentence.iter_mut().zip(r) {
            *s += v / rows.len() as f64;
        }
    }
    let mut rng = rng_for(&format!("text:{text}"));
    for s in sentence.iter_mut() {
        *s += rng.random_range(-0.05..0.05);
    }
    EmbeddingBundle {
        sentence_vector: sentence,
        token_matrix: Matrix::from_rows(&rows),
        tokens,
    }
}

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let out: PathBuf = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fixtures"));
    for sub in ["llm", "embed"] {
        let d = out.join(sub);
        if d.exists() {
            fs::remove_dir_all(&d)?;
        }
    }
    fs::create_dir_all(&out)?;

    let corpus: String = CORPUS
        .iter()
        .map(|(id, text, _)| format!("{}\n", json!({ "id": id, "text": text })))
        .collect();
    let corpus_path = out.join("feedback.jsonl");
    fs::write(&corpus_path, corpus)?;

    let docs = ingest_documents(&corpus_path, Language::En, &PreprocessRules::english_feedback())?;
    assert_eq!(docs.len(), 10, "two template-only lines must be dropped");
    let topics_of: BTreeMap<&str, &[&str]> = CORPUS.iter().map(|(id, _, t)| (*id, *t)).collect();
    let template = PromptTemplate::builtin(Language::En);
    for (b, batch) in docs.chunks(BATCH).enumerate() {
        let items: Vec<_> = batch
            .iter()
            .enumerate()
            .map(|(i, d)| {
                // first batch answers with document ids, second with positions
                let key = if b == 0 { json!(d.id) } else { json!(i + 1) };
                json!({ "Comment": key, "Sentiment": "Negative", "Topics": topics_of[d.id.as_str()] })
            })
            .collect();
        let mut response = serde_json::to_string_pretty(&items)?;
        if b == 1 {
            response = format!("```json\n{response}\n```");
        }
        let request = LlmRequest {
            prompt: render_prompt(batch, &template)?,
            model: MODEL.into(),
            temperature: 0.0,
            max_tokens: MAX_TOKENS,
        };
        CacheEnvelope::store(&out.join("llm"), &request, &response, 0)?;
    }

    let theme_of: BTreeMap<&str, usize> = THEMES
        .iter()
        .enumerate()
        .flat_map(|(t, ws)| ws.iter().map(move |w| (*w, t)))
        .collect();
    assert_eq!(theme_of.len(), 40);
    let embed_dir = out.join("embed");
    let mut texts: Vec<String> = docs.iter().map(|d| d.text.clone()).collect();
    for (_, _, topics) in CORPUS {
        texts.extend(topics.iter().map(|t| t.to_string()));
    }
    texts.extend(theme_of.keys().map(|w| w.to_string()));
    texts.sort();
    texts.dedup();
    for text in &texts {
        FixtureEmbedder::write_text(&embed_dir, text, &text_bundle(text, &theme_of))?;
    }
    for word in theme_of.keys() {
        FixtureEmbedder::write_word(
            &embed_dir,
            &WordVector {
                word: word.to_string(),
                vector: word_vector(word, &theme_of),
            },
        )?;
    }
    println!("wrote fixture corpus to {}", out.display());
    Ok(())
}
