//! Offline embedding providers: recorded-fixture replay and seeded synthetic
//! vectors.
//!
//! Fixture replay never fabricates: texts without a recorded vector are a
//! hard error. The scripted embedder, by contrast, derives a deterministic
//! unit vector from the text itself and is meant for fully synthetic runs.

use std::collections::HashMap;
use std::io::BufRead;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha12Rng;
use serde::{Deserialize, Serialize};

use super::{fnv1a64, EmbedBackend, EmbeddingBatch, EmbeddingVector, GatewayError};

/// One recorded embedding, as stored in fixture JSONL files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmbeddingRecord {
    pub text: String,
    pub model_id: String,
    pub vector: EmbeddingVector,
}

/// Replays embeddings recorded in a JSONL file, keyed by exact text.
pub struct FixtureEmbedder {
    model_id: String,
    dimension: usize,
    by_text: HashMap<String, EmbeddingVector>,
}

impl FixtureEmbedder {
    pub fn from_jsonl(path: &Path) -> Result<Self, GatewayError> {
        let file = std::fs::File::open(path).map_err(|e| {
            GatewayError::Configuration(format!("cannot open fixture {}: {e}", path.display()))
        })?;
        let mut by_text = HashMap::new();
        let mut model_id = String::new();
        let mut dimension = 0usize;
        for (lineno, line) in std::io::BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| GatewayError::Configuration(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: EmbeddingRecord = serde_json::from_str(&line).map_err(|e| {
                GatewayError::Configuration(format!(
                    "bad fixture line {} in {}: {e}",
                    lineno + 1,
                    path.display()
                ))
            })?;
            if dimension == 0 {
                dimension = record.vector.len();
                model_id = record.model_id.clone();
            } else if record.vector.len() != dimension {
                return Err(GatewayError::Configuration(format!(
                    "fixture dimension mismatch at line {}: {} vs {}",
                    lineno + 1,
                    record.vector.len(),
                    dimension
                )));
            }
            by_text.insert(record.text, record.vector);
        }
        if by_text.is_empty() {
            return Err(GatewayError::Configuration(format!(
                "fixture {} holds no embeddings",
                path.display()
            )));
        }
        Ok(Self {
            model_id,
            dimension,
            by_text,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn contains(&self, text: &str) -> bool {
        self.by_text.contains_key(text)
    }
}

impl EmbedBackend for FixtureEmbedder {
    fn embed(&self, texts: &[String]) -> Result<EmbeddingBatch, GatewayError> {
        if texts.is_empty() {
            return Err(GatewayError::InvalidRequest(
                "embedding batch must be non-empty".into(),
            ));
        }
        let vectors = texts
            .iter()
            .map(|t| {
                self.by_text
                    .get(t)
                    .cloned()
                    .ok_or_else(|| GatewayError::FixtureMiss(t.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(EmbeddingBatch {
            texts: texts.to_vec(),
            model_id: self.model_id.clone(),
            vectors,
        })
    }
}

/// Deterministic synthetic embeddings for scripted runs: a unit vector drawn
/// from a ChaCha stream seeded by the text hash.
pub struct ScriptedEmbedder {
    pub dimension: usize,
    pub seed: u64,
}

impl ScriptedEmbedder {
    pub fn new(dimension: usize, seed: u64) -> Self {
        Self { dimension, seed }
    }

    fn vector_for(&self, text: &str) -> EmbeddingVector {
        let mut rng = ChaCha12Rng::seed_from_u64(self.seed ^ fnv1a64(text.as_bytes()));
        let mut v: Vec<f64> = (0..self.dimension)
            .map(|_| {
                // Box-Muller from two uniform draws
                let u1: f64 = rand::Rng::random::<f64>(&mut rng).max(1e-12);
                let u2: f64 = rand::Rng::random(&mut rng);
                (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos()
            })
            .collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        for x in &mut v {
            *x /= norm;
        }
        v
    }
}

impl EmbedBackend for ScriptedEmbedder {
    fn embed(&self, texts: &[String]) -> Result<EmbeddingBatch, GatewayError> {
        if texts.is_empty() {
            return Err(GatewayError::InvalidRequest(
                "embedding batch must be non-empty".into(),
            ));
        }
        let vectors = texts.iter().map(|t| self.vector_for(t)).collect();
        Ok(EmbeddingBatch {
            texts: texts.to_vec(),
            model_id: format!("scripted-{}d", self.dimension),
            vectors,
        })
    }
}
