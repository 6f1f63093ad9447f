//! Textual-reasoning pipeline over agent plans: sentence extraction,
//! price-war semantic classification against reference vectors, PCA +
//! k-means clustering, cluster summarization, and prevalence statistics.

mod kmeans;
mod pca;

pub use kmeans::{kmeans, KmeansResult};
pub use pca::{pca_fit, PcaModel};

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::gateway::{ChatBackend, ChatRequest, EmbedBackend, EmbeddingVector, GatewayError};

#[derive(Debug, Error)]
pub enum TextlabError {
    #[error("{0}")]
    InvalidInput(String),
    #[error(transparent)]
    Gateway(#[from] GatewayError),
    #[error("classifier score undefined: {0}")]
    UndefinedScore(String),
}

/// One extracted sentence with full provenance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SentenceRecord {
    pub text: String,
    pub run_id: String,
    pub prefix_id: String,
    pub period: usize,
    pub agent: usize,
}

/// True when the trimmed line opens with a bullet or numbered-list marker;
/// returns the text after the marker.
fn strip_list_marker(line: &str) -> Option<&str> {
    let trimmed = line.trim_start();
    for bullet in ["- ", "* ", "\u{2022} "] {
        if let Some(rest) = trimmed.strip_prefix(bullet) {
            return Some(rest);
        }
    }
    let digits = trimmed.chars().take_while(|c| c.is_ascii_digit()).count();
    if digits > 0 {
        let rest = &trimmed[digits..];
        for marker in [". ", ") "] {
            if let Some(rest) = rest.strip_prefix(marker) {
                return Some(rest);
            }
        }
    }
    None
}

/// Split prose on sentence terminators (., !, ?) followed by whitespace.
/// Decimal points and figures like "$4.51" never split because their period
/// is not followed by whitespace.
fn split_prose(text: &str, out: &mut Vec<String>) {
    let bytes = text.as_bytes();
    let mut start = 0;
    let mut i = 0;
    while i < bytes.len() {
        if matches!(bytes[i], b'.' | b'!' | b'?') {
            // absorb a run of terminators ("?!", "...")
            let mut end = i + 1;
            while end < bytes.len() && matches!(bytes[end], b'.' | b'!' | b'?') {
                end += 1;
            }
            if end >= bytes.len() || bytes[end].is_ascii_whitespace() {
                let sentence = text[start..end].trim();
                if !sentence.is_empty() {
                    out.push(sentence.to_string());
                }
                start = end;
            }
            i = end;
        } else {
            i += 1;
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail.to_string());
    }
}

/// Split a plans text into sentences. Bulleted or numbered list items are
/// one sentence each with the marker removed; remaining prose splits on
/// sentence terminators followed by whitespace.
pub fn split_sentences(plans_text: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut prose = String::new();
    let flush = |prose: &mut String, out: &mut Vec<String>| {
        if !prose.trim().is_empty() {
            split_prose(prose, out);
        }
        prose.clear();
    };
    for line in plans_text.lines() {
        if let Some(item) = strip_list_marker(line) {
            flush(&mut prose, &mut out);
            let item = item.trim();
            if !item.is_empty() {
                out.push(item.to_string());
            }
        } else {
            if !prose.is_empty() {
                prose.push('\n');
            }
            prose.push_str(line);
        }
    }
    flush(&mut prose, &mut out);
    out
}

pub const PRICE_WAR_PHRASES: [&str; 2] = ["price war", "pricing war"];

/// Case-insensitive phrase filter, preserving provenance.
pub fn filter_phrase(records: &[SentenceRecord], phrases: &[&str]) -> Vec<SentenceRecord> {
    records
        .iter()
        .filter(|r| {
            let lower = r.text.to_lowercase();
            phrases.iter().any(|p| lower.contains(&p.to_lowercase()))
        })
        .cloned()
        .collect()
}

/// Semantic pole defined by the mean embedding of a few hand-written
/// sentences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceVector {
    pub label: String,
    pub sentences: Vec<String>,
    pub vector: EmbeddingVector,
}

/// Sentences defining the price-war-avoidance pole.
pub const AVOID_PRICE_WAR_SENTENCES: [&str; 4] = [
    "We should avoid a price war",
    "Avoid a price war",
    "A price war is a consequence we want to avoid",
    "A price war would be bad to bring about",
];

/// Sentences defining the price-war-seeking pole.
pub const START_PRICE_WAR_SENTENCES: [&str; 4] = [
    "We should start a price war",
    "Start a price war",
    "A price war is a consequence we want to achieve",
    "A price war would be good to bring about",
];

pub const LABEL_AVOID: &str = "AvoidPriceWar";
pub const LABEL_START: &str = "StartPriceWar";

/// Build a reference vector as the arithmetic mean of sentence embeddings.
pub fn build_reference(
    label: &str,
    sentences: &[String],
    embedder: &dyn EmbedBackend,
) -> Result<ReferenceVector, TextlabError> {
    if sentences.is_empty() {
        return Err(TextlabError::InvalidInput(
            "reference needs at least one sentence".into(),
        ));
    }
    let batch = embedder.embed(sentences)?;
    let dim = batch.dimension();
    let mut vector = vec![0.0; dim];
    for v in &batch.vectors {
        for (acc, x) in vector.iter_mut().zip(v) {
            *acc += x / batch.vectors.len() as f64;
        }
    }
    Ok(ReferenceVector {
        label: label.to_string(),
        sentences: sentences.to_vec(),
        vector,
    })
}

pub fn builtin_avoid_reference(
    embedder: &dyn EmbedBackend,
) -> Result<ReferenceVector, TextlabError> {
    let sentences: Vec<String> = AVOID_PRICE_WAR_SENTENCES
        .iter()
        .map(|s| s.to_string())
        .collect();
    build_reference(LABEL_AVOID, &sentences, embedder)
}

pub fn builtin_start_reference(
    embedder: &dyn EmbedBackend,
) -> Result<ReferenceVector, TextlabError> {
    let sentences: Vec<String> = START_PRICE_WAR_SENTENCES
        .iter()
        .map(|s| s.to_string())
        .collect();
    build_reference(LABEL_START, &sentences, embedder)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PriceWarLabel {
    Avoid,
    Start,
}

/// Classify a sentence vector by its dot product with the difference of the
/// two reference vectors: positive means closer to the avoidance pole. For
/// equal-norm inputs this is the same decision as comparing cosine
/// similarities against each pole.
pub fn classify_price_war(
    sentence_vector: &[f64],
    avoid: &ReferenceVector,
    start: &ReferenceVector,
) -> Result<(PriceWarLabel, f64), TextlabError> {
    if sentence_vector.len() != avoid.vector.len() || avoid.vector.len() != start.vector.len() {
        return Err(TextlabError::InvalidInput("dimension mismatch".into()));
    }
    let norm2 = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>();
    if norm2(sentence_vector) == 0.0 {
        return Err(TextlabError::UndefinedScore("zero sentence vector".into()));
    }
    let diff: Vec<f64> = avoid
        .vector
        .iter()
        .zip(&start.vector)
        .map(|(a, s)| a - s)
        .collect();
    if norm2(&diff) == 0.0 {
        return Err(TextlabError::UndefinedScore(
            "reference vectors coincide".into(),
        ));
    }
    let score: f64 = sentence_vector.iter().zip(&diff).map(|(v, d)| v * d).sum();
    let label = if score > 0.0 {
        PriceWarLabel::Avoid
    } else {
        PriceWarLabel::Start
    };
    Ok((label, score))
}

/// System instruction for cluster summarization, shipped verbatim as a
/// fixture.
pub const SUMMARIZE_INSTRUCTION: &str = include_str!("../../fixtures/summarize_instruction.txt");

/// Summarize one cluster: the 10 sentences whose reduced vectors are closest
/// to the centroid (ascending distance, index tie-break) go to the chat
/// backend as a bullet list under the fixed system instruction.
pub fn summarize_cluster(
    sentences: &[String],
    reduced: &[Vec<f64>],
    centroid: &[f64],
    backend: &dyn ChatBackend,
    model_id: &str,
) -> Result<String, TextlabError> {
    if sentences.is_empty() || sentences.len() != reduced.len() {
        return Err(TextlabError::InvalidInput(
            "cluster must be non-empty with one vector per sentence".into(),
        ));
    }
    let mut order: Vec<usize> = (0..sentences.len()).collect();
    let dist = |v: &[f64]| -> f64 { v.iter().zip(centroid).map(|(x, c)| (x - c) * (x - c)).sum() };
    order.sort_by(|&a, &b| {
        dist(&reduced[a])
            .total_cmp(&dist(&reduced[b]))
            .then(a.cmp(&b))
    });
    let bullet_list: String = order
        .iter()
        .take(10)
        .map(|&i| format!("- {}", sentences[i]))
        .collect::<Vec<_>>()
        .join("\n");
    let request = ChatRequest {
        system_text: Some(SUMMARIZE_INSTRUCTION.to_string()),
        user_text: bullet_list,
        model_id: model_id.to_string(),
        temperature: 1.0,
        max_output: 64,
        reasoning_effort: None,
    };
    Ok(backend.chat(&request)?.text)
}

/// Per-cluster prefix shares normalized by each prefix's corpus-wide
/// baseline share.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterPrevalence {
    pub cluster: usize,
    pub count: usize,
    /// prefix id -> (share within cluster) / (baseline share)
    pub relative: BTreeMap<String, f64>,
}

/// Compute relative prevalence per cluster. `baselines` defaults to the
/// corpus-wide prefix shares when not supplied.
pub fn relative_prevalence(
    records: &[SentenceRecord],
    assignments: &[usize],
    k: usize,
    baselines: Option<&BTreeMap<String, f64>>,
) -> Result<Vec<ClusterPrevalence>, TextlabError> {
    if records.len() != assignments.len() {
        return Err(TextlabError::InvalidInput(
            "one assignment per sentence record required".into(),
        ));
    }
    if records.is_empty() {
        return Ok(vec![]);
    }
    let mut corpus: BTreeMap<String, f64> = BTreeMap::new();
    for r in records {
        *corpus.entry(r.prefix_id.clone()).or_default() += 1.0;
    }
    for share in corpus.values_mut() {
        *share /= records.len() as f64;
    }
    let baselines = baselines.unwrap_or(&corpus);
    let mut out = Vec::with_capacity(k);
    for cluster in 0..k {
        let members: Vec<&SentenceRecord> = records
            .iter()
            .zip(assignments)
            .filter(|(_, a)| **a == cluster)
            .map(|(r, _)| r)
            .collect();
        let mut relative = BTreeMap::new();
        for (prefix, baseline) in baselines {
            let in_cluster = members.iter().filter(|r| &r.prefix_id == prefix).count() as f64;
            let share = if members.is_empty() {
                0.0
            } else {
                in_cluster / members.len() as f64
            };
            relative.insert(
                prefix.clone(),
                if *baseline > 0.0 {
                    share / baseline
                } else {
                    0.0
                },
            );
        }
        out.push(ClusterPrevalence {
            cluster,
            count: members.len(),
            relative,
        });
    }
    Ok(out)
}

/// Full clustering report for a sentence corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub pca: PcaModel,
    pub centroids: Vec<Vec<f64>>,
    pub assignments: Vec<usize>,
    pub summaries: Vec<String>,
    pub prevalence: Vec<ClusterPrevalence>,
    pub kmeans_seed: u64,
}

/// Knobs for the clustering pipeline.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterOptions {
    pub k: usize,
    pub variance_target: f64,
    pub max_components: usize,
    pub seed: u64,
    /// Model identifier sent with summary requests.
    pub summary_model: String,
}

impl Default for ClusterOptions {
    fn default() -> Self {
        Self {
            k: 20,
            variance_target: 0.5,
            max_components: 20,
            seed: 0,
            summary_model: "cluster-summary".into(),
        }
    }
}

/// End-to-end clustering: embed, reduce (PCA to the variance target with a
/// component cap), k-means, per-cluster summaries, and prevalence ratios.
pub fn cluster_corpus(
    records: &[SentenceRecord],
    embedder: &dyn EmbedBackend,
    chat: &dyn ChatBackend,
    options: &ClusterOptions,
) -> Result<ClusterModel, TextlabError> {
    let ClusterOptions {
        k,
        variance_target,
        max_components,
        seed,
        summary_model,
    } = options.clone();
    if records.len() < k {
        return Err(TextlabError::InvalidInput(format!(
            "{} sentences cannot fill {k} clusters",
            records.len()
        )));
    }
    let texts: Vec<String> = records.iter().map(|r| r.text.clone()).collect();
    let batch = embedder.embed(&texts)?;
    let pca = pca_fit(&batch.vectors, variance_target, max_components)?;
    let reduced = pca.transform(&batch.vectors);
    let clusters = kmeans(&reduced, k, seed, 500)?;
    let mut summaries = Vec::with_capacity(k);
    for c in 0..k {
        let member_idx: Vec<usize> = (0..records.len())
            .filter(|i| clusters.assignments[*i] == c)
            .collect();
        if member_idx.is_empty() {
            summaries.push(String::from("[empty cluster]"));
            continue;
        }
        let member_sentences: Vec<String> = member_idx.iter().map(|&i| texts[i].clone()).collect();
        let member_reduced: Vec<Vec<f64>> =
            member_idx.iter().map(|&i| reduced[i].clone()).collect();
        summaries.push(summarize_cluster(
            &member_sentences,
            &member_reduced,
            &clusters.centroids[c],
            chat,
            &summary_model,
        )?);
    }
    let prevalence = relative_prevalence(records, &clusters.assignments, k, None)?;
    Ok(ClusterModel {
        pca,
        centroids: clusters.centroids,
        assignments: clusters.assignments,
        summaries,
        prevalence,
        kmeans_seed: seed,
    })
}
