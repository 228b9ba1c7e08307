//! Pre-train a small transformer with the contrastive objective and with the
//! same-entity-pair baseline, then compare both on held-out relations.
//!
//!     cargo run --release --example contrastive_pretraining

use relcp::corpus::{build_bags, generate_synthetic, SyntheticSpec};
use relcp::encoder::{init_params, EncoderConfig};
use relcp::objectives::{pretrain, Objective, OptimizerConfig, PretrainConfig};
use relcp::sampler::SamplerConfig;
use relcp::tasks::{evaluate_fewshot, FewshotConfig};
use relcp::textproc::Vocab;

fn main() -> relcp::Result<()> {
    let (corpus, _) = generate_synthetic(&SyntheticSpec::toy(8, 8, 40, 1600), 7)?;
    let (seen, held): (Vec<_>, Vec<_>) = corpus.iter().cloned().partition(|s| {
        matches!(
            s.relation_id.as_deref(),
            Some("born_in" | "founded" | "headquartered_in" | "married")
        )
    });
    let vocab = Vocab::from_corpora([corpus.as_slice()]);
    let bags = build_bags(&seen)?;
    let encoder = EncoderConfig {
        vocab_size: vocab.len(),
        hidden_dim: 32,
        layers: 1,
        heads: 2,
        ffn_dim: 64,
        max_len: 32,
        ..Default::default()
    };
    let fewshot = FewshotConfig {
        n_way: 4,
        episodes: 1000,
        max_len: 32,
        ..Default::default()
    };
    let baseline = evaluate_fewshot(&encoder, &init_params(&encoder, 1)?, &vocab, &held, &fewshot)?;
    println!("random encoder: 4-way 1-shot {:.3}", baseline.median);

    for objective in [Objective::Cp, Objective::Mtb] {
        let cfg = PretrainConfig {
            objective,
            steps: 300,
            seed: 1,
            sampler: SamplerConfig {
                batch_pairs: 4,
                max_len: 32,
                ..Default::default()
            },
            encoder: encoder.clone(),
            optimizer: OptimizerConfig {
                lr: 1e-3,
                ..Default::default()
            },
            ..Default::default()
        };
        let out = pretrain(&seen, &bags, &vocab, &cfg)?;
        let mean = |r: &[relcp::objectives::LossBreakdown]| r.iter().map(|b| b.l_total).sum::<f64>() / r.len() as f64;
        let acc = evaluate_fewshot(&encoder, &out.params, &vocab, &held, &fewshot)?;
        println!(
            "{}: loss {:.3} -> {:.3}, 4-way 1-shot {:.3}",
            objective.name(),
            mean(&out.log[..30]),
            mean(&out.log[270..]),
            acc.median
        );
    }
    Ok(())
}
