//! Fine-tune the same encoder under each input format: context plus
//! mentions, context plus types, context only, mentions only, types only.
//!
//!     cargo run --release --example input_ablation

use relcp::corpus::{generate_synthetic, SyntheticSpec};
use relcp::encoder::{init_params, EncoderConfig};
use relcp::objectives::OptimizerConfig;
use relcp::tasks::{finetune, FinetuneConfig};
use relcp::textproc::{InputSetting, Vocab};

fn main() -> relcp::Result<()> {
    let (train, _) = generate_synthetic(&SyntheticSpec::toy(8, 8, 40, 800), 3)?;
    let (test, _) = generate_synthetic(&SyntheticSpec::toy(8, 8, 40, 400), 4)?;
    let vocab = Vocab::from_corpora([train.as_slice(), test.as_slice()]);
    let encoder = EncoderConfig {
        vocab_size: vocab.len(),
        hidden_dim: 32,
        layers: 1,
        heads: 2,
        ffn_dim: 64,
        max_len: 32,
        ..Default::default()
    };
    let init = init_params(&encoder, 0)?;
    println!("{}", InputSetting::ContextMention.apply(&train[0])?.join(" "));
    for setting in InputSetting::ALL {
        println!("{:>6}: {}", setting.name(), setting.apply(&train[0])?.join(" "));
    }
    for setting in InputSetting::ALL {
        let cfg = FinetuneConfig {
            setting,
            epochs: 4,
            max_len: 32,
            optimizer: OptimizerConfig {
                lr: 1e-3,
                ..Default::default()
            },
            ..Default::default()
        };
        let out = finetune(&encoder, &init, &vocab, &train, &[], &cfg)?;
        let (acc, _) = out.classifier.evaluate(&vocab, &test, None)?;
        println!("{:>6} accuracy {acc:.3}", setting.name());
    }
    Ok(())
}
