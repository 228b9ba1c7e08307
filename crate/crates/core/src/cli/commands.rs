use std::collections::{BTreeMap, HashSet};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::config::RunConfig;
use crate::corpus::{
    assign_relations, build_bags, corpus_stats, filter_leakage_with, generate_synthetic, load_corpus, load_test_pairs,
    save_corpus, CorpusSchema, CorpusStats, LabelingCounts, LinkedSentence, SyntheticSpec, TripleStore,
};
use crate::encoder::{Checkpoint, EncoderConfig};
use crate::error::{Error, Result};
use crate::objectives::{pretrain, pretrain_with_mlm_stage, write_loss_csv, PretrainConfig};
use crate::rng::{self, tag};
use crate::sampler::{build_cp_batch, SamplerConfig};
use crate::tasks::{
    encoder_init, evaluate_fewshot, evaluate_supervised, predictions_jsonl, subsample_per_relation, EvalReport,
    FewshotConfig, FinetuneConfig, Metric,
};
use crate::textproc::{InputSetting, Vocab};

pub const RESOLVED_CONFIG: &str = "config.resolved.toml";

fn write(path: &Path, contents: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, contents).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    write(path, serde_json::to_string_pretty(value)? + "\n")
}

/// Creates the output directory and snapshots the configuration before any
/// work starts.
fn prepare_output(cfg: &RunConfig) -> Result<PathBuf> {
    let dir = cfg.output_dir.clone();
    fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    write(&dir.join(RESOLVED_CONFIG), cfg.to_toml())?;
    Ok(dir)
}

fn load(path: &Path) -> Result<Vec<LinkedSentence>> {
    load_corpus(path, CorpusSchema::LinkedJsonl)
}

fn required<'a>(path: &'a Option<PathBuf>, key: &str) -> Result<&'a Path> {
    path.as_deref()
        .ok_or_else(|| Error::Config(format!("{key} is not set")))
}

fn load_optional(path: &Option<PathBuf>) -> Result<Vec<LinkedSentence>> {
    path.as_deref().map(load).transpose().map(Option::unwrap_or_default)
}

/// `data.vocab` when set, otherwise the vocabulary of every corpus named in
/// `[data]`.
fn resolve_vocab(cfg: &RunConfig) -> Result<Vocab> {
    if let Some(p) = &cfg.data.vocab {
        return Vocab::load(p);
    }
    let d = &cfg.data;
    let mut corpora = Vec::new();
    for p in [
        &d.corpus,
        &d.train,
        &d.dev,
        &d.test,
        &d.fewshot,
        &cfg.pretrain.mlm_stage_corpus,
    ]
    .into_iter()
    .flatten()
    {
        corpora.push(load(p)?);
    }
    if corpora.is_empty() {
        return Err(Error::Config("no vocabulary: set data.vocab or a corpus path".into()));
    }
    Ok(Vocab::from_corpora(corpora.iter().map(Vec::as_slice)))
}

fn encoder_config(cfg: &RunConfig, vocab: &Vocab) -> EncoderConfig {
    let mut e = cfg.encoder.clone();
    if e.vocab_size == 0 {
        e.vocab_size = vocab.len();
    }
    e
}

fn load_checkpoint(path: &Option<PathBuf>) -> Result<Option<Checkpoint>> {
    path.as_deref().map(Checkpoint::load).transpose()
}

#[derive(Serialize)]
struct DatasetStats {
    corpus: CorpusStats,
    labeling: LabelingCounts,
    leakage_dropped: usize,
    train: usize,
    dev: usize,
    test: usize,
}

pub fn build_dataset(cfg: &RunConfig) -> Result<()> {
    let d = &cfg.dataset;
    for f in [d.dev_fraction, d.test_fraction] {
        if !(0.0..1.0).contains(&f) {
            return Err(Error::Config(format!("split fraction {f} outside [0, 1)")));
        }
    }
    if d.dev_fraction + d.test_fraction >= 1.0 {
        return Err(Error::Config("dev and test fractions leave no training data".into()));
    }
    let (labeled, triples, labeling) = match (&d.synthetic, &d.corpus) {
        (Some(s), None) => {
            let spec = SyntheticSpec::toy(s.relations, s.templates, s.fillers, s.count);
            let (sentences, kg) = generate_synthetic(&spec, cfg.seed)?;
            (sentences, kg, LabelingCounts::default())
        }
        (None, Some(corpus)) => {
            let kg = TripleStore::load_tsv(required(&d.triples, "dataset.triples")?)?;
            let raw = load(corpus)?;
            let (sentences, counts) = assign_relations(&raw, &kg);
            (sentences, kg, counts)
        }
        _ => {
            return Err(Error::Config(
                "set exactly one of dataset.synthetic and dataset.corpus".into(),
            ))
        }
    };
    let mut leak = match &d.test_pairs {
        Some(p) => load_test_pairs(p)?,
        None => HashSet::new(),
    };
    let out = prepare_output(cfg)?;

    let mut order: Vec<usize> = (0..labeled.len()).collect();
    order.shuffle(&mut rng::stream(cfg.seed, tag::SPLIT, 0));
    let n_test = (d.test_fraction * labeled.len() as f64).round() as usize;
    let n_dev = (d.dev_fraction * labeled.len() as f64).round() as usize;
    let mut part = vec![0u8; labeled.len()];
    for &i in &order[..n_test] {
        part[i] = 2;
    }
    for &i in &order[n_test..n_test + n_dev] {
        part[i] = 1;
    }
    let pick = |k: u8| -> Vec<LinkedSentence> {
        labeled
            .iter()
            .zip(&part)
            .filter(|(_, &p)| p == k)
            .map(|(s, _)| s.clone())
            .collect()
    };
    let (train, dev, test) = (pick(0), pick(1), pick(2));
    for s in dev.iter().chain(&test) {
        if let Some((h, t)) = s.entity_pair() {
            leak.insert((h.to_owned(), t.to_owned()));
        }
    }
    let corpus = filter_leakage_with(&labeled, &leak, d.symmetric_leak);
    let dropped = labeled.len() - corpus.len();
    if corpus.is_empty() {
        eprintln!("warning: the pre-training corpus is empty after labeling and leakage filtering");
    }

    save_corpus(out.join("corpus.jsonl"), &corpus)?;
    save_corpus(out.join("train.jsonl"), &train)?;
    save_corpus(out.join("dev.jsonl"), &dev)?;
    save_corpus(out.join("test.jsonl"), &test)?;
    write(&out.join("triples.tsv"), triples.to_tsv())?;
    write_json(&out.join("bags.json"), &build_bags(&corpus)?.bags)?;
    Vocab::from_corpora([labeled.as_slice()]).save(out.join("vocab.txt"))?;
    let stats = DatasetStats {
        corpus: corpus_stats(&corpus),
        labeling,
        leakage_dropped: dropped,
        train: train.len(),
        dev: dev.len(),
        test: test.len(),
    };
    write_json(&out.join("stats.json"), &stats)?;
    println!(
        "{} sentences, {} relations in the pre-training corpus ({} dropped for leakage); splits {}/{}/{}",
        stats.corpus.num_sentences, stats.corpus.num_relations, dropped, stats.train, stats.dev, stats.test
    );
    Ok(())
}

fn pretrain_config(cfg: &RunConfig, vocab: &Vocab) -> PretrainConfig {
    let p = &cfg.pretrain;
    PretrainConfig {
        objective: p.objective,
        steps: p.steps,
        seed: cfg.seed,
        temperature: p.temperature,
        mtb_mlm: p.mtb_mlm,
        sampler: SamplerConfig {
            seed: cfg.seed,
            ..p.sampler.clone()
        },
        encoder: encoder_config(cfg, vocab),
        optimizer: p.optimizer.clone(),
        mlm_stage: p.mlm_stage.clone(),
    }
}

pub fn pretrain_cmd(cfg: &RunConfig) -> Result<()> {
    let corpus_path = required(&cfg.data.corpus, "data.corpus")?;
    let vocab = resolve_vocab(cfg)?;
    let pc = pretrain_config(cfg, &vocab);
    let out = prepare_output(cfg)?;
    let corpus = load(corpus_path)?;
    let bags = build_bags(&corpus)?;
    let run = match &cfg.pretrain.mlm_stage_corpus {
        Some(path) if pc.mlm_stage.steps > 0 => pretrain_with_mlm_stage(&corpus, &bags, &load(path)?, &vocab, &pc)?,
        _ => pretrain(&corpus, &bags, &vocab, &pc)?,
    };
    for w in &run.warnings {
        eprintln!("warning: {w}");
    }
    run.checkpoint(&pc, &vocab).save(out.join("checkpoint.bin"))?;
    write_loss_csv(out.join("loss.csv"), &run.log)?;
    vocab.save(out.join("vocab.txt"))?;
    if let (Some(first), Some(last)) = (run.log.first(), run.log.last()) {
        println!(
            "{} steps, loss {:.4} -> {:.4}",
            run.log.len(),
            first.l_total,
            last.l_total
        );
    }
    Ok(())
}

fn finetune_config(cfg: &RunConfig, setting: InputSetting) -> FinetuneConfig {
    let f = &cfg.finetune;
    FinetuneConfig {
        setting,
        epochs: f.epochs,
        batch_size: f.batch_size,
        max_len: f.max_len,
        seed: cfg.seed,
        na_label: f.na_label.clone(),
        optimizer: f.optimizer.clone(),
    }
}

struct Supervised {
    vocab: Vocab,
    train: Vec<LinkedSentence>,
    dev: Vec<LinkedSentence>,
    test: Vec<LinkedSentence>,
}

fn supervised_data(cfg: &RunConfig) -> Result<Supervised> {
    let train = load(required(&cfg.data.train, "data.train")?)?;
    let test = load(required(&cfg.data.test, "data.test")?)?;
    let dev = load_optional(&cfg.data.dev)?;
    let train = if cfg.finetune.subsample < 1.0 {
        subsample_per_relation(&train, cfg.finetune.subsample, cfg.seed)?
    } else {
        train
    };
    Ok(Supervised {
        vocab: resolve_vocab(cfg)?,
        train,
        dev,
        test,
    })
}

/// Encoder configuration and initial parameters for fine-tuning.
fn init_from(
    cfg: &RunConfig,
    vocab: &Vocab,
    checkpoint: Option<&Checkpoint>,
) -> Result<(EncoderConfig, crate::encoder::ParamSet)> {
    let enc = match checkpoint {
        Some(ck) => ck.meta.encoder.clone(),
        None => encoder_config(cfg, vocab),
    };
    let params = encoder_init(&enc, checkpoint, vocab, cfg.seed)?;
    Ok((enc, params))
}

pub fn finetune_cmd(cfg: &RunConfig) -> Result<()> {
    let data = supervised_data(cfg)?;
    let ck = load_checkpoint(&cfg.finetune.checkpoint)?;
    let out = prepare_output(cfg)?;
    let (enc, init) = init_from(cfg, &data.vocab, ck.as_ref())?;
    let fc = finetune_config(cfg, cfg.finetune.setting);
    let run = evaluate_supervised(
        &enc,
        &init,
        &data.vocab,
        &data.train,
        &data.dev,
        &data.test,
        &fc,
        &cfg.finetune.seeds,
    )?;
    run.report.save(out.join("report.json"))?;
    // the classifier and predictions of the first seed
    let clf = &run.classifiers[0];
    clf.to_checkpoint(&data.vocab).save(out.join("classifier.bin"))?;
    write(
        &out.join("predictions.jsonl"),
        predictions_jsonl(&data.test, &clf.labels, &run.predictions[0]),
    )?;
    println!(
        "{} median {:.4} over seeds {:?}",
        run.report.metric.name(),
        run.report.median,
        run.report.seeds
    );
    Ok(())
}

pub fn fewshot_cmd(cfg: &RunConfig) -> Result<()> {
    let data = load(required(&cfg.data.fewshot, "data.fewshot")?)?;
    let vocab = resolve_vocab(cfg)?;
    let ck = load_checkpoint(&cfg.fewshot.checkpoint)?;
    let f = &cfg.fewshot;
    let fc = FewshotConfig {
        n_way: f.n_way,
        k_shot: f.k_shot,
        queries: f.queries,
        episodes: f.episodes,
        setting: f.setting,
        max_len: f.max_len,
        seeds: f.seeds.clone().unwrap_or_else(|| vec![cfg.seed]),
    };
    let out = prepare_output(cfg)?;
    let (enc, params) = init_from(cfg, &vocab, ck.as_ref())?;
    let report = evaluate_fewshot(&enc, &params, &vocab, &data, &fc)?;
    report.save(out.join("report.json"))?;
    println!("{}-way {}-shot accuracy {:.4}", f.n_way, f.k_shot, report.median);
    Ok(())
}

#[derive(Debug, Serialize, Deserialize)]
pub struct AblationTable {
    pub metric: Metric,
    pub settings: Vec<InputSetting>,
    /// Initialization to setting to median metric.
    pub rows: BTreeMap<String, BTreeMap<InputSetting, f64>>,
    pub reports: BTreeMap<String, BTreeMap<InputSetting, EvalReport>>,
}

impl AblationTable {
    pub fn to_text(&self, inits: &[String]) -> String {
        let width = inits.iter().map(String::len).max().unwrap_or(0).max(4);
        let mut out = format!("{:width$}", "init");
        for s in &self.settings {
            write!(out, "  {:>7}", s.name()).expect("write to string");
        }
        out.push('\n');
        for init in inits {
            write!(out, "{init:width$}").expect("write to string");
            for s in &self.settings {
                write!(out, "  {:>7.4}", self.rows[init][s]).expect("write to string");
            }
            out.push('\n');
        }
        out
    }
}

pub fn ablate_cmd(cfg: &RunConfig) -> Result<()> {
    let a = &cfg.ablate;
    if a.settings.is_empty() || a.inits.is_empty() {
        return Err(Error::Config(
            "ablate.settings and ablate.inits must be non-empty".into(),
        ));
    }
    let mut checkpoints = BTreeMap::new();
    for init in &a.inits {
        let ck = match init.as_str() {
            "random" => None,
            "cp" => Some(Checkpoint::load(required(&a.cp_checkpoint, "ablate.cp_checkpoint")?)?),
            "mtb" => Some(Checkpoint::load(required(&a.mtb_checkpoint, "ablate.mtb_checkpoint")?)?),
            other => return Err(Error::Config(format!("unknown initialization {other:?}"))),
        };
        checkpoints.insert(init.clone(), ck);
    }
    let data = supervised_data(cfg)?;
    let out = prepare_output(cfg)?;
    let mut rows = BTreeMap::new();
    let mut reports = BTreeMap::new();
    for init in &a.inits {
        let (enc, params) = init_from(cfg, &data.vocab, checkpoints[init].as_ref())?;
        let mut row = BTreeMap::new();
        let mut rep = BTreeMap::new();
        for &setting in &a.settings {
            let fc = finetune_config(cfg, setting);
            let run = evaluate_supervised(
                &enc,
                &params,
                &data.vocab,
                &data.train,
                &data.dev,
                &data.test,
                &fc,
                &cfg.finetune.seeds,
            )?;
            row.insert(setting, run.report.median);
            rep.insert(setting, run.report);
        }
        rows.insert(init.clone(), row);
        reports.insert(init.clone(), rep);
    }
    let table = AblationTable {
        metric: if cfg.finetune.na_label.is_some() {
            Metric::MicroF1
        } else {
            Metric::Accuracy
        },
        settings: a.settings.clone(),
        rows,
        reports,
    };
    write_json(&out.join("ablation.json"), &table)?;
    let text = table.to_text(&a.inits);
    write(&out.join("ablation.txt"), &text)?;
    print!("{text}");
    Ok(())
}

#[derive(Debug, Serialize)]
struct ReportRow {
    run: String,
    metric: Metric,
    median: f64,
    per_seed: Vec<f64>,
    delta: Option<f64>,
}

/// Consolidates `report.json` of each run directory. Deltas are taken
/// against `baseline` (a run directory, compared by path) when given, else
/// the first run; a single run gets no delta column.
pub fn report_cmd(runs: &[PathBuf], baseline: Option<&Path>, out: Option<&Path>) -> Result<String> {
    if runs.is_empty() {
        return Err(Error::Config("no run directories".into()));
    }
    let reports = runs
        .iter()
        .map(|r| EvalReport::load(r.join("report.json")))
        .collect::<Result<Vec<_>>>()?;
    let metric = reports[0].metric;
    if reports.iter().any(|r| r.metric != metric) {
        return Err(Error::Config("runs report different metrics".into()));
    }
    let base = match baseline {
        Some(b) => Some(
            runs.iter()
                .position(|r| r == b)
                .ok_or_else(|| Error::Config(format!("baseline {} is not among the runs", b.display())))?,
        ),
        None if runs.len() > 1 => Some(0),
        None => None,
    };
    let rows: Vec<ReportRow> = runs
        .iter()
        .zip(&reports)
        .map(|(run, r)| ReportRow {
            run: run.display().to_string(),
            metric: r.metric,
            median: r.median,
            per_seed: r.per_seed.clone(),
            delta: base.map(|b| r.median - reports[b].median),
        })
        .collect();
    let mut md = String::new();
    if base.is_some() {
        md.push_str(&format!(
            "| run | {} (median) | delta |\n|---|---|---|\n",
            metric.name()
        ));
    } else {
        md.push_str(&format!("| run | {} (median) |\n|---|---|\n", metric.name()));
    }
    for r in &rows {
        match r.delta {
            Some(d) => writeln!(md, "| {} | {:.4} | {:+.4} |", r.run, r.median, d),
            None => writeln!(md, "| {} | {:.4} |", r.run, r.median),
        }
        .expect("write to string");
    }
    if let Some(dir) = out {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        write(&dir.join("report.md"), &md)?;
        write_json(&dir.join("report.json"), &rows)?;
    }
    Ok(md)
}

#[derive(Serialize)]
struct DumpedPair {
    batch: u64,
    relation: String,
    a: Vec<String>,
    b: Vec<String>,
}

/// Writes the first `dump.batches` contrastive batches as token strings.
pub fn dump_batches_cmd(cfg: &RunConfig) -> Result<()> {
    let corpus = load(required(&cfg.data.corpus, "data.corpus")?)?;
    let vocab = resolve_vocab(cfg)?;
    let pc = pretrain_config(cfg, &vocab);
    let out = prepare_output(cfg)?;
    let bags = build_bags(&corpus)?;
    let tokens = |ids: &[usize]| -> Vec<String> {
        ids.iter()
            .filter(|&&i| i != 0)
            .map(|&i| vocab.token(i).unwrap_or("[UNK]").to_owned())
            .collect()
    };
    let mut text = String::new();
    for b in 0..cfg.dump.batches {
        let batch = build_cp_batch(&corpus, &bags, &pc.sampler, &vocab, b)?;
        for ((a, bb), r) in batch.pairs.iter().zip(&batch.relation_ids) {
            let row = DumpedPair {
                batch: b,
                relation: r.clone(),
                a: tokens(&a.ids),
                b: tokens(&bb.ids),
            };
            writeln!(text, "{}", serde_json::to_string(&row)?).expect("write to string");
        }
    }
    write(&out.join("batches.jsonl"), text)
}
