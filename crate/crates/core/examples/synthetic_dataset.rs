//! Generate a templated corpus, strip its labels, re-label it from the
//! triple store, hold out test entity pairs and index the result by relation.
//!
//!     cargo run --release --example synthetic_dataset

use std::collections::HashSet;

use relcp::corpus::{assign_relations, build_bags, corpus_stats, filter_leakage, generate_synthetic, SyntheticSpec};
use relcp::textproc::format_cm;

fn main() -> relcp::Result<()> {
    let (corpus, kg) = generate_synthetic(&SyntheticSpec::toy(6, 4, 20, 600), 1)?;
    println!("{} sentences, {} facts", corpus.len(), kg.len());
    println!("{}", format_cm(&corpus[0]).join(" "));

    let unlabeled: Vec<_> = corpus.iter().map(|s| s.with_relation(String::new())).collect();
    let (relabeled, counts) = assign_relations(&unlabeled, &kg);
    println!("relabeled {} ({counts:?})", relabeled.len());

    // every tenth pair goes to the test side
    let test: HashSet<(String, String)> = relabeled
        .iter()
        .step_by(10)
        .filter_map(|s| s.entity_pair())
        .map(|(h, t)| (h.to_owned(), t.to_owned()))
        .collect();
    let pretrain = filter_leakage(&relabeled, &test);
    let bags = build_bags(&pretrain)?;
    for r in bags.relations() {
        println!("{r:>18} {:4}", bags.get(r).len());
    }
    let stats = corpus_stats(&pretrain);
    println!(
        "{} sentences kept, {} distinct pairs",
        stats.num_sentences, stats.distinct_entity_pairs
    );
    Ok(())
}
