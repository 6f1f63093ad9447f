//! The full text pipeline on a synthetic corpus: sentence splitting, the
//! price-war phrase filter, semantic classification against the recorded
//! reference embeddings, then PCA + k-means clustering with prevalence
//! ratios per prompt prefix.
//!
//! Run with: cargo run --example text_pipeline

use collab::gateway::{
    EmbedBackend, FixtureEmbedder, ScriptedBackend, ScriptedEmbedder, ScriptedStrategy,
};
use collab::textlab::{self, SentenceRecord};

fn main() {
    // 1. sentence splitting
    let plans = "- Avoid drastic price cuts.\n- Hold at $2.05. Watch the competitor.\n\
                 We should test 1.95 next! If that fails, revert.";
    println!("split sentences:");
    for s in textlab::split_sentences(plans) {
        println!("  {s:?}");
    }

    // 2. classification of the validation sentences with recorded fixtures
    let fixtures = std::path::Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures/embeddings/price_war_reference.jsonl");
    let embedder = FixtureEmbedder::from_jsonl(&fixtures).expect("fixtures");
    let avoid = textlab::builtin_avoid_reference(&embedder).expect("avoid pole");
    let start = textlab::builtin_start_reference(&embedder).expect("start pole");
    println!("\nclassification of recorded sentences:");
    for text in [
        "We should avoid a price war",
        "Start a price war",
        "Price wars will hurt our profitability",
    ] {
        let batch = embedder.embed(&[text.to_string()]).expect("embed");
        let (label, score) =
            textlab::classify_price_war(&batch.vectors[0], &avoid, &start).expect("classify");
        println!("  {score:+.4} {label:?} {text:?}");
    }

    // 3. clustering a synthetic corpus with deterministic embeddings
    let topics = ["hold the price", "undercut the rival", "watch demand"];
    let corpus: Vec<SentenceRecord> = (0..90)
        .map(|i| SentenceRecord {
            text: format!("{} variant {}.", topics[i % 3], i / 3),
            run_id: format!("run-{}", i % 6),
            prefix_id: if i % 2 == 0 { "P1" } else { "P2" }.to_string(),
            period: 1 + i / 3,
            agent: i % 2,
        })
        .collect();
    let embedder = ScriptedEmbedder::new(48, 5);
    let chat = ScriptedBackend::new(ScriptedStrategy::FixedPrice { price: 1.0 }, 0);
    let options = textlab::ClusterOptions {
        k: 3,
        variance_target: 0.6,
        seed: 11,
        ..textlab::ClusterOptions::default()
    };
    let model = textlab::cluster_corpus(&corpus, &embedder, &chat, &options).expect("cluster");
    println!(
        "\nclusters: {} components capture {:.0}% of variance",
        model.pca.n_components(),
        100.0 * model.pca.explained_total()
    );
    for c in &model.prevalence {
        println!(
            "  cluster {} ({} sentences) {} P1 ratio {:.2}",
            c.cluster, c.count, model.summaries[c.cluster], c.relative["P1"]
        );
    }
}
