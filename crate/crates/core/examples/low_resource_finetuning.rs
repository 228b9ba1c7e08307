//! Fine-tune on 1%, 10% and 100% of the training data per relation, five
//! seeds each, and report the median. The CNN baseline runs on the full set.
//!
//!     cargo run --release --example low_resource_finetuning

use relcp::corpus::{generate_synthetic, SyntheticSpec};
use relcp::encoder::{init_params, CnnConfig, EncoderConfig, EncoderKind};
use relcp::objectives::{Algorithm, OptimizerConfig};
use relcp::tasks::{evaluate_supervised, subsample_per_relation, FinetuneConfig};
use relcp::textproc::Vocab;

fn main() -> relcp::Result<()> {
    let (train, _) = generate_synthetic(&SyntheticSpec::toy(8, 8, 40, 1600), 3)?;
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
    let cfg = FinetuneConfig {
        epochs: 4,
        max_len: 32,
        optimizer: OptimizerConfig {
            lr: 1e-3,
            ..Default::default()
        },
        ..Default::default()
    };
    let seeds = [42, 43, 44, 45, 46];
    for fraction in [0.01, 0.1, 1.0] {
        let small = subsample_per_relation(&train, fraction, 0)?;
        let run = evaluate_supervised(&encoder, &init, &vocab, &small, &[], &test, &cfg, &seeds)?;
        println!(
            "{:>4}% ({:4} sentences): median {:.3} over {:?}",
            fraction * 100.0,
            small.len(),
            run.report.median,
            run.report.per_seed
        );
    }

    let cnn = EncoderConfig {
        kind: EncoderKind::Cnn,
        vocab_size: vocab.len(),
        max_len: 32,
        cnn: CnnConfig::default(),
        ..Default::default()
    };
    let sgd = FinetuneConfig {
        batch_size: 160,
        epochs: 20,
        optimizer: OptimizerConfig {
            algorithm: Algorithm::Sgd,
            lr: 0.5,
            weight_decay: 0.0,
            ..Default::default()
        },
        ..cfg
    };
    let run = evaluate_supervised(
        &cnn,
        &init_params(&cnn, 0)?,
        &vocab,
        &train,
        &[],
        &test,
        &sgd,
        &seeds[..1],
    )?;
    println!("cnn, full data: {:.3}", run.report.median);
    Ok(())
}
