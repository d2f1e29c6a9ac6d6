//! Sentence/token embedding fusion through a single attention layer.
//!
//! The sentence vector is projected into token space, scored against every
//! token vector, and the softmax-weighted token average is appended to the
//! sentence vector.

use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::backends::{write_atomic, EmbeddingBundle};
use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionParams {
    /// d_s × d_b projection from sentence space to token space.
    pub weight: Matrix,
    pub bias: Vec<f64>,
    pub seed: u64,
}

impl AttentionParams {
    pub fn sentence_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn token_dim(&self) -> usize {
        self.weight.cols()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SourceKind {
    Document,
    Topic,
    Word,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HybridEmbedding {
    pub vector: Vec<f64>,
    pub source_kind: SourceKind,
}

/// Xavier-uniform fill from a seeded stream.
pub(crate) fn xavier_uniform(rows: usize, cols: usize, fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Matrix {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-a..a))
        .collect();
    Matrix::from_vec(rows, cols, data)
}

pub fn init_attention(d_s: usize, d_b: usize, seed: u64) -> AttentionParams {
    assert!(d_s >= 1 && d_b >= 1, "attention dimensions must be positive");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    AttentionParams {
        weight: xavier_uniform(d_s, d_b, d_s, d_b, &mut rng),
        bias: vec![0.0; d_b],
        seed,
    }
}

/// Numerically stable softmax (max-shifted).
pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

/// Returns the attention weights over tokens for a bundle.
pub fn attention_weights(bundle: &EmbeddingBundle, params: &AttentionParams) -> Result<Vec<f64>> {
    let d_s = params.sentence_dim();
    let d_b = params.token_dim();
    if bundle.token_matrix.rows() == 0 {
        return Err(Error::domain("cannot fuse an embedding with no tokens"));
    }
    if bundle.sentence_vector.len() != d_s || bundle.token_matrix.cols() != d_b {
        return Err(Error::Schema(format!(
            "bundle dims ({}, {}) do not match attention layer ({d_s}, {d_b})",
            bundle.sentence_vector.len(),
            bundle.token_matrix.cols()
        )));
    }
    // query = sentence · W + b
    let mut query = params.bias.clone();
    params.weight.matvec_t_acc(&bundle.sentence_vector, &mut query);
    let scores: Vec<f64> = (0..bundle.token_matrix.rows())
        .map(|t| dot(&query, bundle.token_matrix.row(t)))
        .collect();
    Ok(softmax(&scores))
}

pub fn fuse_hybrid(
    bundle: &EmbeddingBundle,
    params: &AttentionParams,
    kind: SourceKind,
) -> Result<HybridEmbedding> {
    let weights = attention_weights(bundle, params)?;
    let d_b = params.token_dim();
    let mut attended = vec![0.0; d_b];
    bundle.token_matrix.matvec_t_acc(&weights, &mut attended);
    let mut vector = bundle.sentence_vector.clone();
    vector.extend_from_slice(&attended);
    Ok(HybridEmbedding {
        vector,
        source_kind: kind,
    })
}

const STORE_MAGIC: &[u8; 4] = b"HYBV";
const STORE_VERSION: u32 = 1;

/// Writes hybrid vectors as: magic, version (u32), d_s (u32), d_b (u32),
/// count (u64), then per record id length (u32), id bytes and d_s + d_b
/// little-endian f64 values.
pub fn write_hybrid_store(path: &Path, d_s: usize, d_b: usize, entries: &[(String, Vec<f64>)]) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(STORE_MAGIC);
    buf.extend_from_slice(&STORE_VERSION.to_le_bytes());
    buf.extend_from_slice(&(d_s as u32).to_le_bytes());
    buf.extend_from_slice(&(d_b as u32).to_le_bytes());
    buf.extend_from_slice(&(entries.len() as u64).to_le_bytes());
    for (id, v) in entries {
        if v.len() != d_s + d_b {
            return Err(Error::Schema(format!(
                "vector {id:?} has length {}, expected {}",
                v.len(),
                d_s + d_b
            )));
        }
        buf.extend_from_slice(&(id.len() as u32).to_le_bytes());
        buf.extend_from_slice(id.as_bytes());
        for x in v {
            buf.extend_from_slice(&x.to_le_bytes());
        }
    }
    write_atomic(path, &buf)
}

/// Reads a store written by [`write_hybrid_store`]: returns (d_s, d_b, entries).
pub fn read_hybrid_store(path: &Path) -> Result<(usize, usize, Vec<(String, Vec<f64>)>)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let bad = |what: &str| Error::Schema(format!("{}: {what}", path.display()));
    let mut pos = 0usize;
    let mut take = |n: usize| -> Result<&[u8]> {
        let s = bytes.get(pos..pos + n).ok_or_else(|| bad("truncated hybrid store"))?;
        pos += n;
        Ok(s)
    };
    if take(4)? != STORE_MAGIC {
        return Err(bad("bad magic"));
    }
    let u32_at = |s: &[u8]| u32::from_le_bytes(s.try_into().unwrap());
    let version = u32_at(take(4)?);
    if version != STORE_VERSION {
        return Err(bad("unsupported version"));
    }
    let d_s = u32_at(take(4)?) as usize;
    let d_b = u32_at(take(4)?) as usize;
    let count = u64::from_le_bytes(take(8)?.try_into().unwrap()) as usize;
    let mut entries = Vec::with_capacity(count);
    for _ in 0..count {
        let len = u32_at(take(4)?) as usize;
        let id = String::from_utf8(take(len)?.to_vec()).map_err(|_| bad("id is not UTF-8"))?;
        let mut v = Vec::with_capacity(d_s + d_b);
        for _ in 0..d_s + d_b {
            v.push(f64::from_le_bytes(take(8)?.try_into().unwrap()));
        }
        entries.push((id, v));
    }
    Ok((d_s, d_b, entries))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bundle(sentence: Vec<f64>, tokens: Vec<Vec<f64>>) -> EmbeddingBundle {
        EmbeddingBundle {
            sentence_vector: sentence,
            tokens: (0..tokens.len()).map(|i| format!("t{i}")).collect(),
            token_matrix: Matrix::from_rows(&tokens),
        }
    }

    #[test]
    fn init_is_seeded_bounded_and_bias_free() {
        let a = init_attention(8, 8, 1);
        let b = init_attention(8, 8, 1);
        assert_eq!(a, b);
        assert!(a.bias.iter().all(|&x| x == 0.0));
        let bound = (6.0f64 / 16.0).sqrt();
        assert!((bound - 0.612).abs() < 1e-3);
        assert!(a.weight.as_slice().iter().all(|w| w.abs() <= bound));
        assert_ne!(init_attention(8, 8, 2), a);
    }

    #[test]
    fn single_token_passes_through() {
        let p = init_attention(3, 2, 7);
        let b = bundle(vec![0.1, -0.4, 2.0], vec![vec![0.5, -1.5]]);
        let h = fuse_hybrid(&b, &p, SourceKind::Topic).unwrap();
        assert_eq!(h.vector, vec![0.1, -0.4, 2.0, 0.5, -1.5]);
    }

    #[test]
    fn identical_tokens_give_that_token() {
        let p = init_attention(2, 3, 3);
        let row = vec![0.25, -2.0, 1.0];
        let b = bundle(vec![1.0, 1.0], vec![row.clone(), row.clone(), row.clone()]);
        let h = fuse_hybrid(&b, &p, SourceKind::Document).unwrap();
        for (x, y) in h.vector[2..].iter().zip(&row) {
            assert!((x - y).abs() < 1e-15);
        }
    }

    #[test]
    fn hand_computed_two_token_case() {
        let p = AttentionParams {
            weight: Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]),
            bias: vec![0.0, 0.0],
            seed: 0,
        };
        let b = bundle(vec![1.0, 0.0], vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        let h = fuse_hybrid(&b, &p, SourceKind::Topic).unwrap();
        let e = std::f64::consts::E;
        let expected = [1.0, 0.0, e / (e + 1.0), 1.0 / (e + 1.0)];
        for (x, y) in h.vector.iter().zip(expected) {
            assert!((x - y).abs() < 1e-12);
        }
        assert!((h.vector[2] - 0.7311).abs() < 1e-4);
    }

    #[test]
    fn empty_tokens_is_an_error() {
        let p = init_attention(2, 2, 0);
        let b = EmbeddingBundle {
            sentence_vector: vec![1.0, 0.0],
            token_matrix: Matrix::zeros(0, 2),
            tokens: vec![],
        };
        assert!(matches!(fuse_hybrid(&b, &p, SourceKind::Word), Err(Error::Domain(_))));
    }

    #[test]
    fn store_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("h.bin");
        let entries = vec![
            ("doc:1".to_string(), vec![1.0, -0.0, f64::MIN_POSITIVE]),
            ("topic:0".to_string(), vec![0.1, 0.2, 0.3]),
        ];
        write_hybrid_store(&path, 1, 2, &entries).unwrap();
        let (d_s, d_b, back) = read_hybrid_store(&path).unwrap();
        assert_eq!((d_s, d_b), (1, 2));
        assert_eq!(back, entries);
    }

    proptest! {
        #[test]
        fn weights_form_a_distribution(
            sentence in prop::collection::vec(-3.0f64..3.0, 4),
            tokens in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 3), 1..8),
            seed in 0u64..100,
        ) {
            let p = init_attention(4, 3, seed);
            let b = bundle(sentence, tokens);
            let w = attention_weights(&b, &p).unwrap();
            prop_assert!(w.iter().all(|&x| x >= 0.0));
            prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            let h = fuse_hybrid(&b, &p, SourceKind::Topic).unwrap();
            prop_assert_eq!(h.vector.len(), 7);
            prop_assert!(h.vector.iter().all(|x| x.is_finite()));
        }

        #[test]
        fn token_permutation_leaves_output_invariant(
            tokens in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 2..6),
            rot in 1usize..5,
        ) {
            let p = init_attention(3, 3, 11);
            let sentence = vec![0.3, -0.7, 1.1];
            let a = fuse_hybrid(&bundle(sentence.clone(), tokens.clone()), &p, SourceKind::Topic).unwrap();
            let mut permuted = tokens.clone();
            permuted.rotate_left(rot % tokens.len());
            let b = fuse_hybrid(&bundle(sentence, permuted), &p, SourceKind::Topic).unwrap();
            for (x, y) in a.vector.iter().zip(&b.vector) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
