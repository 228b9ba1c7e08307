//! The full small-scale study: masked-token stage, contrastive
//! pre-training on four relations, then few-shot transfer to the other four,
//! 1% fine-tuning and the context-versus-mentions comparison, each against a
//! randomly initialized encoder. About a minute per seed.
//!
//!     cargo run --release --example toy_reproduction -- 1 2 3

use relcp::tasks::{run_toy, ToyConfig};

fn main() -> relcp::Result<()> {
    let seeds: Vec<u64> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let seeds = if seeds.is_empty() { vec![1] } else { seeds };
    println!("seed  init    4-way-1-shot  1%-finetune  C+M    OnlyM");
    for seed in seeds {
        let r = run_toy(&ToyConfig {
            model_seed: seed,
            ..Default::default()
        })?;
        for (name, s) in [("cp", &r.cp), ("random", &r.random)] {
            println!(
                "{seed:<5} {name:<7} {:<13.3} {:<12.3} {:<6.3} {:.3}",
                s.fewshot, s.low_resource, s.context_mention, s.only_mention
            );
        }
        println!(
            "      MLM stage only: {:.3}; {} pre-training sentences ({} dropped for leakage); {:.0}s",
            r.mlm_stage_only_fewshot, r.pretrain_sentences, r.dropped_for_leakage, r.seconds
        );
    }
    Ok(())
}
