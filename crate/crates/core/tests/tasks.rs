use std::collections::{BTreeMap, HashSet};

use ndarray::{array, Array1};
use rand::seq::SliceRandom;
use relcp::corpus::{build_bags, generate_synthetic, LinkedSentence, SyntheticSpec};
use relcp::encoder::{
    gradcheck, init_params, CnnConfig, Encoder, EncoderConfig, EncoderKind, GradcheckOptions, ParamSet,
};
use relcp::objectives::OptimizerConfig;
use relcp::rng;
use relcp::tasks::{
    classifier_loss, episode_accuracy, evaluate_fewshot, evaluate_supervised, finetune, model_inputs, proto_classify,
    sample_episode, subsample_per_relation, Classifier, FewshotConfig, FinetuneConfig, HEAD_B, HEAD_W,
};
use relcp::textproc::{InputSetting, Vocab};

fn corpus(relations: usize, count: usize, seed: u64) -> (Vec<LinkedSentence>, Vocab) {
    let (c, _) = generate_synthetic(&SyntheticSpec::toy(relations, 8, 40, count), seed).unwrap();
    let v = Vocab::from_corpora([c.as_slice()]);
    (c, v)
}

fn enc_cfg(v: &Vocab) -> EncoderConfig {
    EncoderConfig {
        vocab_size: v.len(),
        hidden_dim: 16,
        layers: 1,
        heads: 2,
        ffn_dim: 32,
        max_len: 24,
        ..Default::default()
    }
}

fn with_head(cfg: &EncoderConfig, classes: usize) -> ParamSet {
    let mut p = init_params(cfg, 1).unwrap();
    relcp::encoder::register_normal(&mut p, HEAD_W, (cfg.repr_dim(), classes), 1, 1);
    relcp::encoder::register_normal(&mut p, HEAD_B, (1, classes), 1, 2);
    p
}

fn head_gradcheck(cfg: &EncoderConfig, v: &Vocab, c: &[LinkedSentence]) {
    let inputs = model_inputs(cfg, InputSetting::ContextMention, cfg.max_len, v, &c[..3]).unwrap();
    let refs: Vec<_> = inputs.iter().collect();
    let enc = Encoder::new(cfg).unwrap();
    let p = with_head(cfg, 3);
    let report = gradcheck(
        &p,
        |p: &ParamSet| {
            let mut r = rng::stream(0, rng::tag::DROPOUT, 0);
            classifier_loss(&enc, p, &refs, &[0, 2, 1], Some(&mut r))
        },
        GradcheckOptions::default(),
    )
    .unwrap();
    assert!(report.passed && report.checked >= 200, "{report:?}");
}

#[test]
fn transformer_head_gradients() {
    let (c, v) = corpus(4, 40, 1);
    let mut cfg = enc_cfg(&v);
    cfg.dropout = 0.1;
    head_gradcheck(&cfg, &v, &c);
}

#[test]
fn cnn_head_gradients() {
    let (c, v) = corpus(4, 40, 1);
    let cfg = EncoderConfig {
        kind: EncoderKind::Cnn,
        vocab_size: v.len(),
        max_len: 24,
        cnn: CnnConfig {
            filters: 12,
            word_dim: 6,
            position_dim: 2,
            clip: 10,
            window: 3,
        },
        ..Default::default()
    };
    head_gradcheck(&cfg, &v, &c);
}

#[test]
fn subsampling_counts() {
    let (c, _) = corpus(4, 400, 2);
    let full = subsample_per_relation(&c, 1.0, 0).unwrap();
    assert_eq!(full, c);
    let one = subsample_per_relation(&c, 0.01, 0).unwrap();
    assert_eq!(one.len(), 4);
    let rels: HashSet<_> = one.iter().map(|s| s.relation_id.clone()).collect();
    assert_eq!(rels.len(), 4);

    let fifty: Vec<LinkedSentence> = c
        .iter()
        .filter(|s| s.relation_id == c[0].relation_id)
        .take(50)
        .cloned()
        .collect();
    assert_eq!(fifty.len(), 50);
    assert_eq!(subsample_per_relation(&fifty, 0.1, 3).unwrap().len(), 5);
    assert_eq!(
        subsample_per_relation(&c, 0.1, 9).unwrap(),
        subsample_per_relation(&c, 0.1, 9).unwrap()
    );
    assert!(subsample_per_relation(&c, 0.0, 0).is_err());
}

fn ft_cfg(epochs: usize) -> FinetuneConfig {
    FinetuneConfig {
        epochs,
        batch_size: 8,
        max_len: 24,
        optimizer: OptimizerConfig {
            lr: 1e-3,
            ..Default::default()
        },
        ..Default::default()
    }
}

#[test]
fn one_class_is_always_predicted() {
    let (c, v) = corpus(1, 20, 3);
    let cfg = enc_cfg(&v);
    let init = init_params(&cfg, 0).unwrap();
    let out = finetune(&cfg, &init, &v, &c, &[], &ft_cfg(1)).unwrap();
    let (acc, pred) = out.classifier.evaluate(&v, &c, None).unwrap();
    assert_eq!(acc, 1.0);
    assert!(pred.iter().all(|&p| p == 0));
}

#[test]
fn separable_two_relations() {
    let (c, v) = corpus(2, 240, 4);
    let (train, dev) = c.split_at(160);
    let cfg = enc_cfg(&v);
    let init = init_params(&cfg, 0).unwrap();
    let out = finetune(&cfg, &init, &v, train, dev, &ft_cfg(6)).unwrap();
    let best = out.dev_history.iter().cloned().fold(0.0, f64::max);
    assert!(best >= 0.95, "{:?}", out.dev_history);
    assert_eq!(out.dev_history[out.best_epoch - 1], best);
    let (acc, _) = out.classifier.evaluate(&v, dev, None).unwrap();
    assert_eq!(acc, best);

    let ck = out.classifier.to_checkpoint(&v);
    let back =
        Classifier::from_checkpoint(&relcp::encoder::Checkpoint::from_bytes(&ck.to_bytes().unwrap()).unwrap()).unwrap();
    assert_eq!(back, out.classifier);
}

#[test]
fn only_mention_inputs_hold_no_context() {
    let (c, _) = corpus(2, 10, 5);
    for s in &c {
        let toks = InputSetting::OnlyMention.apply(s).unwrap();
        let mentions: HashSet<&str> = s.tokens[s.head.start..s.head.end]
            .iter()
            .chain(&s.tokens[s.tail.start..s.tail.end])
            .map(String::as_str)
            .collect();
        for t in &toks {
            assert!(t.starts_with('[') || mentions.contains(t.as_str()), "{t}");
        }
    }
}

#[test]
fn types_required_for_type_settings() {
    let (c, v) = corpus(2, 10, 5);
    let untyped: Vec<LinkedSentence> = c
        .iter()
        .map(|s| {
            let mut s = s.clone();
            s.head.entity_type = None;
            s
        })
        .collect();
    let cfg = enc_cfg(&v);
    let init = init_params(&cfg, 0).unwrap();
    let ft = FinetuneConfig {
        setting: InputSetting::ContextType,
        ..ft_cfg(1)
    };
    assert!(finetune(&cfg, &init, &v, &untyped, &[], &ft).is_err());
}

fn split(c: &[LinkedSentence]) -> relcp::corpus::RelationBag {
    build_bags(c).unwrap()
}

#[test]
fn episodes_use_all_relations_and_keep_supports_apart() {
    let (c, _) = corpus(5, 200, 6);
    let bags = split(&c);
    for i in 0..10_000 {
        let mut r = rng::stream(1, rng::tag::EPISODE, i);
        let ep = sample_episode(&bags, 5, 1, 2, &mut r).unwrap();
        let rels: HashSet<_> = ep.relations.iter().collect();
        assert_eq!(rels.len(), 5);
        let sup: HashSet<usize> = ep.support.iter().flatten().copied().collect();
        assert_eq!(sup.len(), 5);
        for &(q, gold) in &ep.queries {
            assert!(!sup.contains(&q));
            assert_eq!(c[q].relation_id.as_deref(), Some(ep.relations[gold].as_str()));
        }
    }
}

#[test]
fn query_relations_are_uniform() {
    let (c, _) = corpus(8, 400, 7);
    let bags = split(&c);
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    let n = 50_000;
    for i in 0..n {
        let mut r = rng::stream(2, rng::tag::EPISODE, i);
        let ep = sample_episode(&bags, 4, 1, 1, &mut r).unwrap();
        *counts.entry(ep.relations[ep.queries[0].1].clone()).or_default() += 1;
    }
    assert_eq!(counts.len(), 8);
    for (r, k) in counts {
        let f = k as f64 / n as f64;
        assert!((f - 0.125).abs() < 0.02, "{r}: {f}");
    }
}

#[test]
fn insufficient_relation_is_named() {
    let (c, _) = corpus(3, 7, 8);
    let bags = split(&c);
    let err = sample_episode(&bags, 2, 5, 1, &mut rng::stream(0, 0, 0)).unwrap_err();
    assert!(
        err.to_string().contains("born_in")
            || err.to_string().contains("died_in")
            || err.to_string().contains("founded"),
        "{err}"
    );
}

#[test]
fn prototypes_ignore_support_order() {
    let support = vec![
        vec![array![1.0, 0.0], array![0.0, 0.5]],
        vec![array![-1.0, 1.0], array![0.2, 0.2]],
    ];
    let queries = vec![array![0.3, 0.9], array![-0.2, 0.1], array![1.0, -1.0]];
    let mut swapped = support.clone();
    for s in &mut swapped {
        s.reverse();
    }
    // dot-product table: prototypes (0.5, 0.25) and (-0.4, 0.6)
    let expected: Vec<usize> = queries
        .iter()
        .map(|q: &Array1<f64>| {
            let a = q[0] * 0.5 + q[1] * 0.25;
            let b = q[0] * -0.4 + q[1] * 0.6;
            usize::from(b > a)
        })
        .collect();
    assert_eq!(proto_classify(&support, &queries), expected);
    assert_eq!(proto_classify(&swapped, &queries), expected);
}

#[test]
fn one_way_episodes_are_trivial() {
    let (c, v) = corpus(2, 40, 9);
    let cfg = enc_cfg(&v);
    let p = init_params(&cfg, 0).unwrap();
    let fs = FewshotConfig {
        n_way: 1,
        episodes: 50,
        max_len: 24,
        ..Default::default()
    };
    let r = evaluate_fewshot(&cfg, &p, &v, &c, &fs).unwrap();
    assert_eq!(r.median, 1.0);
    assert_eq!(r.episodes, Some(50));
}

#[test]
fn random_encoder_on_shuffled_labels_is_at_chance() {
    let (mut c, v) = corpus(5, 250, 10);
    let mut labels: Vec<Option<String>> = c.iter().map(|s| s.relation_id.clone()).collect();
    labels.shuffle(&mut rng::stream(0, 99, 0));
    for (s, l) in c.iter_mut().zip(labels) {
        s.relation_id = l;
    }
    let cfg = enc_cfg(&v);
    let p = init_params(&cfg, 0).unwrap();
    let fs = FewshotConfig {
        n_way: 5,
        k_shot: 1,
        episodes: 10_000,
        max_len: 24,
        ..Default::default()
    };
    let r = evaluate_fewshot(&cfg, &p, &v, &c, &fs).unwrap();
    assert!((r.median - 0.2).abs() <= 0.02, "{}", r.median);
}

#[test]
fn constant_prediction_is_one_over_n() {
    // every representation identical: all prototypes tie and class 0 always wins,
    // and the gold class is uniform over 4
    let (c, _) = corpus(4, 200, 11);
    let bags = split(&c);
    let reprs = vec![array![1.0, 1.0]; c.len()];
    let fs = FewshotConfig {
        n_way: 4,
        episodes: 20_000,
        ..Default::default()
    };
    let acc = episode_accuracy(&reprs, &bags, &fs, 5).unwrap();
    // 99.9% binomial interval half-width: 3.29 * sqrt(0.25 * 0.75 / 20000)
    assert!((acc - 0.25).abs() < 3.29 * (0.25f64 * 0.75 / 20_000.0).sqrt(), "{acc}");
}

#[test]
fn five_seed_protocol() {
    let (c, v) = corpus(2, 60, 12);
    let (train, test) = c.split_at(40);
    let cfg = enc_cfg(&v);
    let init = init_params(&cfg, 0).unwrap();
    let seeds = [42, 43, 44, 45, 46];
    let run = evaluate_supervised(&cfg, &init, &v, train, &[], test, &ft_cfg(1), &seeds).unwrap();
    assert_eq!(run.report.per_seed.len(), 5);
    assert_eq!(run.report.seeds, seeds);
    let mut sorted = run.report.per_seed.clone();
    sorted.sort_by(f64::total_cmp);
    assert_eq!(run.report.median, sorted[2]);
    let json = run.report.to_json();
    assert!(json.contains("\"metric\": \"accuracy\""));
}
