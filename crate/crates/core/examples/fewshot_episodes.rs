//! Sample N-way K-shot episodes and classify queries by their dot product
//! with class prototypes.
//!
//!     cargo run --release --example fewshot_episodes

use relcp::corpus::{build_bags, generate_synthetic, SyntheticSpec};
use relcp::encoder::{init_params, EncoderConfig};
use relcp::rng::{self, tag};
use relcp::tasks::{evaluate_fewshot, represent_all, sample_episode, FewshotConfig};
use relcp::textproc::{InputSetting, Vocab};

fn main() -> relcp::Result<()> {
    let (corpus, _) = generate_synthetic(&SyntheticSpec::toy(8, 8, 40, 800), 5)?;
    let vocab = Vocab::from_corpora([corpus.as_slice()]);
    let bags = build_bags(&corpus)?;

    let ep = sample_episode(&bags, 5, 2, 3, &mut rng::stream(0, tag::EPISODE, 0))?;
    println!("relations {:?}", ep.relations);
    for (q, gold) in &ep.queries {
        println!("query {q} -> class {gold}");
    }

    let encoder = EncoderConfig {
        vocab_size: vocab.len(),
        hidden_dim: 32,
        layers: 1,
        heads: 2,
        ffn_dim: 64,
        max_len: 32,
        ..Default::default()
    };
    let params = init_params(&encoder, 0)?;
    let reprs = represent_all(&encoder, &params, &vocab, InputSetting::ContextMention, 32, &corpus)?;
    println!("representation width {}", reprs[0].len());
    for (n, k) in [(5, 1), (5, 5), (8, 1)] {
        let cfg = FewshotConfig {
            n_way: n,
            k_shot: k,
            episodes: 2000,
            max_len: 32,
            seeds: vec![42, 43, 44],
            ..Default::default()
        };
        let r = evaluate_fewshot(&encoder, &params, &vocab, &corpus, &cfg)?;
        println!(
            "{n}-way {k}-shot, untrained encoder: {:.3} (chance {:.3})",
            r.median,
            1.0 / n as f64
        );
    }
    Ok(())
}
