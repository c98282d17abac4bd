//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
//!
//! Oracles here are deliberately naive re-implementations that share no code
//! with the library beyond the public types.

use std::collections::BTreeSet;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use twostage::decoder::rank_order;
use twostage::nn::{PassConfig, Tensor};
use twostage::objective::{filter_loss, FilterExample, PROB_EPS};
use twostage::span::offset_targets;
use twostage::targets::{assign_sentence, soft_weight};
use twostage::{
    adjust, build_vocab, iou, soft_nms, Checkpoint, DecodeOptions, Dims, EpochLog, HyperParams, LossWeights,
    NmsParams, ScoredSpan, Sentence, Span, SpanModel, SynthConfig, Trainer,
};

struct Check {
    id: &'static str,
    name: &'static str,
    limit: Duration,
    run: fn() -> Result<String, String>,
}

fn main() {
    let checks = [
        Check { id: "1", name: "IoU matches the token-set oracle", limit: secs(5), run: c1_iou },
        Check { id: "2", name: "offset targets round-trip through adjust", limit: secs(5), run: c2_offsets },
        Check { id: "3", name: "analytic gradients match central differences", limit: secs(60), run: c3_gradients },
        Check { id: "4", name: "focal loss with gamma=0 is weighted BCE", limit: secs(5), run: c4_focal },
        Check { id: "5", name: "Soft-NMS matches the naive reference", limit: secs(10), run: c5_soft_nms },
        Check { id: "6", name: "overfit on the synthetic corpus", limit: secs(600), run: c6_overfit },
        Check { id: "7", name: "regressor recovers unenumerated lengths", limit: secs(600), run: c7_extrapolation },
        Check { id: "8", name: "identical runs give identical checkpoints", limit: secs(600), run: c8_determinism },
        Check { id: "9", name: "proposal-to-entity ratio is finite and logged", limit: secs(600), run: c9_ratio },
        Check { id: "inv", name: "checkpoint reload preserves metrics", limit: secs(600), run: inv_reload },
        Check { id: "inv", name: "epoch loss decreases over the first 5 epochs", limit: secs(600), run: inv_loss },
    ];
    let mut failed = 0;
    for c in &checks {
        let t = Instant::now();
        let r = (c.run)();
        let el = t.elapsed();
        let (ok, detail) = match r {
            Ok(d) if el <= c.limit => (true, d),
            Ok(d) => (false, format!("{d}; took {:.1}s, limit {}s", el.as_secs_f64(), c.limit.as_secs())),
            Err(d) => (false, d),
        };
        failed += usize::from(!ok);
        println!(
            "{} [{:>3}] {:<48} {:>7.2}s  {}",
            if ok { "PASS" } else { "FAIL" },
            c.id,
            c.name,
            el.as_secs_f64(),
            detail
        );
    }
    println!("acceptance: {} passed, {} failed", checks.len() - failed, failed);
    if failed > 0 {
        std::process::exit(1);
    }
}

fn secs(s: u64) -> Duration {
    Duration::from_secs(s)
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

// ---- 1 -------------------------------------------------------------------

fn c1_iou() -> Result<String, String> {
    let mut pairs = 0;
    for n in 1..=12 {
        let spans: Vec<Span> = (0..n).flat_map(|s| (s..n).map(move |e| Span { start: s, end: e })).collect();
        for &a in &spans {
            for &b in &spans {
                let sa: BTreeSet<usize> = (a.start..=a.end).collect();
                let sb: BTreeSet<usize> = (b.start..=b.end).collect();
                let want = sa.intersection(&sb).count() as f64 / sa.union(&sb).count() as f64;
                let got = iou(a, b);
                ensure(got == want, || format!("iou({a}, {b}) = {got}, oracle {want}"))?;
                pairs += 1;
            }
        }
    }
    Ok(format!("{pairs} pairs exact"))
}

// ---- 2 -------------------------------------------------------------------

fn c2_offsets() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..10_000 {
        let n = rng.gen_range(1..=60);
        let mut span = || {
            let s = rng.gen_range(0..n);
            Span { start: s, end: rng.gen_range(s..n) }
        };
        let (seed, gold) = (span(), span());
        let got = adjust(seed, offset_targets(seed, gold), n);
        ensure(got == gold, || format!("seed {seed} gold {gold} n {n}: got {got}"))?;
    }
    Ok("10000 pairs exact".into())
}

// ---- 3 -------------------------------------------------------------------

const GRAD_STEP: f64 = 1e-4;
const GRAD_TOL: f64 = 1e-3;
/// Gradients smaller than this are compared absolutely.
const GRAD_FLOOR: f64 = 1e-6;

fn toy_batch() -> Vec<Sentence> {
    let s = |toks: &str, ents: &[(usize, usize, &str)]| Sentence {
        tokens: toks.split(' ').map(String::from).collect(),
        entities: ents.iter().map(|&(a, b, l)| twostage::Entity::new(a, b, l).unwrap()).collect(),
    };
    vec![
        s("the new york times said", &[(1, 3, "ORG"), (1, 2, "LOC")]),
        s("paris is big", &[(0, 0, "LOC")]),
    ]
}

fn flat_params(model: &mut SpanModel) -> (Vec<f64>, Vec<f64>) {
    let (mut v, mut g) = (Vec::new(), Vec::new());
    model.visit_mut(&mut |_, t: &mut Tensor| {
        v.extend_from_slice(t.values());
        g.extend_from_slice(t.grad_mut());
    });
    (v, g)
}

fn set_param(model: &mut SpanModel, flat: usize, value: f64) {
    let mut off = 0;
    model.visit_mut(&mut |_, t: &mut Tensor| {
        if flat >= off && flat < off + t.len() {
            t.values_mut()[flat - off] = value;
        }
        off += t.len();
    });
}

fn c3_gradients() -> Result<String, String> {
    let corpus = toy_batch();
    let vocab = build_vocab(&corpus, 1).map_err(|e| e.to_string())?;
    let data: Vec<_> = corpus.iter().map(|s| vocab.encode(s).unwrap()).collect();
    let dims = Dims {
        n_words: vocab.num_tokens(),
        n_chars: vocab.num_chars(),
        n_labels: vocab.num_labels(),
        word_dim: 4,
        char_dim: 4,
        hidden_dim: 8,
    };
    let windows = "1-3".parse().unwrap();
    let targets: Vec<_> = data.iter().map(|s| assign_sentence(s.len(), &s.gold, &windows, 0.5, 1.0)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let base = SpanModel::new(dims, &mut rng);

    let variants = [
        ("filter", LossWeights { filter: 1.0, regressor: 0.0, classifier: 0.0 }),
        ("regressor", LossWeights { filter: 0.0, regressor: 1.0, classifier: 0.0 }),
        ("classifier", LossWeights { filter: 0.0, regressor: 0.0, classifier: 1.0 }),
        ("joint", LossWeights { filter: 1.0, regressor: 0.1, classifier: 1.0 }),
    ];
    let mut worst = 0.0f64;
    let mut checked = 0;
    for (name, lambdas) in variants {
        let cfg = PassConfig { alpha2: 1.0, eta: 1.0, gamma: 2.0, lambdas, dropout: 0.0 };
        let loss = |m: &mut SpanModel, backward: bool| -> f64 {
            let mut total = 0.0;
            for (s, t) in data.iter().zip(&targets) {
                let p = m.train_pass::<ChaCha8Rng>(s, t, &cfg, None, backward).unwrap();
                total += p.total(&lambdas);
            }
            total
        };
        let mut model = base.clone();
        model.zero_grad();
        loss(&mut model, true);
        let (values, grads) = flat_params(&mut model);
        for i in 0..values.len() {
            let mut m = model.clone();
            set_param(&mut m, i, values[i] + GRAD_STEP);
            let up = loss(&mut m, false);
            set_param(&mut m, i, values[i] - GRAD_STEP);
            let down = loss(&mut m, false);
            let numeric = (up - down) / (2.0 * GRAD_STEP);
            let err = (grads[i] - numeric).abs() / grads[i].abs().max(numeric.abs()).max(GRAD_FLOOR);
            worst = worst.max(err);
            checked += 1;
            ensure(err <= GRAD_TOL, || {
                format!("{name}: parameter {i} analytic {:.6e} numeric {numeric:.6e} rel {err:.2e}", grads[i])
            })?;
        }
    }
    Ok(format!("{checked} parameter checks, worst relative error {worst:.2e}"))
}

// ---- 4 -------------------------------------------------------------------

fn c4_focal() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst = 0.0f64;
    for _ in 0..1000 {
        let ex: Vec<FilterExample> = (0..rng.gen_range(1..8))
            .map(|_| FilterExample { prob: rng.gen_range(0.0..1.0), positive: rng.gen_bool(0.5), weight: rng.gen_range(0.0..2.0) })
            .collect();
        let oracle: f64 = ex
            .iter()
            .map(|e| {
                let p = e.prob.clamp(PROB_EPS, 1.0 - PROB_EPS);
                -e.weight * if e.positive { p.ln() } else { (1.0 - p).ln() }
            })
            .sum();
        let got = filter_loss(&ex, 0.0);
        let err = (got - oracle).abs();
        worst = worst.max(err);
        ensure(err <= 1e-9, || format!("focal {got} vs bce {oracle}"))?;
    }
    for _ in 0..1000 {
        let (v, a) = (rng.gen_range(0.0..=1.0), rng.gen_range(0.0..=1.0));
        let w = soft_weight(v, a, 0.0);
        ensure(w == 1.0, || format!("soft_weight({v}, {a}, 0) = {w}"))?;
    }
    Ok(format!("1000 cases, worst abs error {worst:.1e}; eta=0 weights all 1"))
}

// ---- 5 -------------------------------------------------------------------

/// Textbook Soft-NMS: full re-sort every round.
fn naive_soft_nms(spans: &[ScoredSpan], p: &NmsParams) -> Vec<ScoredSpan> {
    let mut b = spans.to_vec();
    let mut d = Vec::new();
    while !b.is_empty() {
        b.sort_by(rank_order);
        let m = b.remove(0);
        for s in b.iter_mut() {
            if iou(m.span, s.span) >= p.iou_threshold {
                s.score *= p.decay;
            }
        }
        d.push(m);
    }
    d.into_iter().filter(|s| s.score > p.score_threshold).collect()
}

fn c5_soft_nms() -> Result<String, String> {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let key = |s: &ScoredSpan| (s.span.start, s.span.end, s.label, s.score.to_bits());
    for case in 0..1000 {
        let n = rng.gen_range(1..=20);
        let spans: Vec<ScoredSpan> = (0..rng.gen_range(0..=50))
            .map(|_| {
                let s = rng.gen_range(0..n);
                ScoredSpan {
                    span: Span { start: s, end: rng.gen_range(s..n.min(s + 6)) },
                    label: rng.gen_range(1..4),
                    score: rng.gen_range(0.0..1.0),
                }
            })
            .collect();
        let p = if case % 2 == 0 {
            NmsParams { decay: 0.9, iou_threshold: 0.6, score_threshold: 0.55 }
        } else {
            NmsParams {
                decay: rng.gen_range(0.0..=1.0),
                iou_threshold: rng.gen_range(0.0..=1.0),
                score_threshold: rng.gen_range(0.0..0.8),
            }
        };
        let mut got = soft_nms(&spans, &p);
        let mut want = naive_soft_nms(&spans, &p);
        got.sort_by_key(key);
        want.sort_by_key(key);
        ensure(got.len() == want.len(), || format!("case {case}: {} survivors vs {}", got.len(), want.len()))?;
        for (g, w) in got.iter().zip(&want) {
            ensure(g.span == w.span && g.label == w.label && (g.score - w.score).abs() <= 1e-12, || {
                format!("case {case}: {g:?} vs {w:?}")
            })?;
        }
    }
    Ok("1000 instances agree".into())
}

// ---- 6-9: integration ----------------------------------------------------

const TRAIN_SENTENCES: usize = 200;
const DEV_SENTENCES: usize = 100;
const CORPUS_SEED: u64 = 2024;

fn corpus() -> &'static (Vec<Sentence>, Vec<Sentence>) {
    static C: OnceLock<(Vec<Sentence>, Vec<Sentence>)> = OnceLock::new();
    C.get_or_init(|| {
        let cfg = SynthConfig {
            sentences: TRAIN_SENTENCES + DEV_SENTENCES,
            categories: 3,
            nest_prob: 0.4,
            ..SynthConfig::default()
        };
        let all = twostage::generate_synthetic(&cfg, CORPUS_SEED).unwrap();
        (all[..TRAIN_SENTENCES].to_vec(), all[TRAIN_SENTENCES..].to_vec())
    })
}

fn acceptance_hp() -> HyperParams {
    HyperParams { windows: "1-5,7".parse().unwrap(), ..HyperParams::default() }
}

struct Run {
    checkpoint: Checkpoint,
    json: String,
    logs: Vec<EpochLog>,
    log_lines: Vec<String>,
    train_f1: f64,
    dev_report: twostage::EvalReport,
}

fn run(hp: HyperParams) -> Result<Run, String> {
    let (train, dev) = corpus();
    let mut t = Trainer::new(hp, train, dev).map_err(|e| e.to_string())?;
    let mut log_lines = Vec::new();
    let logs = t.fit(&mut |l| log_lines.push(l.to_json())).map_err(|e| e.to_string())?;
    let checkpoint = Checkpoint::new(t.hp.clone(), t.vocab.clone(), t.best_model().clone());
    let train_f1 = checkpoint.evaluate(train).map_err(|e| e.to_string())?.overall.f1;
    let dev_report = checkpoint.evaluate(dev).map_err(|e| e.to_string())?;
    Ok(Run { json: checkpoint.to_json(), checkpoint, logs, log_lines, train_f1, dev_report })
}

fn main_run() -> Result<&'static Run, String> {
    static R: OnceLock<Result<Run, String>> = OnceLock::new();
    R.get_or_init(|| run(acceptance_hp())).as_ref().map_err(Clone::clone)
}

fn c6_overfit() -> Result<String, String> {
    let r = main_run()?;
    let dev = r.dev_report.overall.f1;
    let msg = format!("train F1 {:.4}, dev F1 {dev:.4} ({} epochs)", r.train_f1, r.logs.len());
    ensure(r.train_f1 >= 0.95 && dev >= 0.85, || msg.clone())?;
    Ok(msg)
}

fn length6(report: &twostage::EvalReport) -> (f64, usize) {
    report.per_length.get(&6).map_or((0.0, 0), |s| (s.f1, s.support))
}

fn c7_extrapolation() -> Result<String, String> {
    let r = main_run()?;
    let hp = acceptance_hp();
    ensure(!hp.windows.contains(6), || "length 6 is enumerated".into())?;
    let (f1, support) = length6(&r.dev_report);
    ensure(support > 0, || "no length-6 entities in the dev set".into())?;

    let ablated = run(HyperParams { lambdas: LossWeights { regressor: 0.0, ..hp.lambdas }, ..hp })?;
    let opts = DecodeOptions { use_offsets: false, ..ablated.checkpoint.decode_options() };
    let report = ablated.checkpoint.evaluate_with(&corpus().1, &opts).map_err(|e| e.to_string())?;
    let (f1_off, _) = length6(&report);
    let msg = format!("length-6 dev F1 {f1:.4} (support {support}); without regressor {f1_off:.4}");
    ensure(f1 >= 0.5 && f1_off < f1, || msg.clone())?;
    Ok(msg)
}

fn c8_determinism() -> Result<String, String> {
    let a = main_run()?;
    let b = run(acceptance_hp())?;
    ensure(a.json == b.json, || "checkpoints differ".into())?;
    ensure(a.log_lines == b.log_lines, || "training logs differ".into())?;
    ensure(a.dev_report == b.dev_report && a.train_f1 == b.train_f1, || "metrics differ".into())?;
    Ok(format!("checkpoints identical ({} bytes)", a.json.len()))
}

fn c9_ratio() -> Result<String, String> {
    let r = main_run()?;
    let ratio = r.dev_report.proposal_ratio;
    ensure(ratio.is_finite(), || format!("ratio {ratio}"))?;
    let logged = r.logs.iter().all(|l| l.dev_proposal_ratio.is_some_and(f64::is_finite))
        && r.log_lines.iter().all(|l| l.contains("dev_proposal_ratio"));
    ensure(logged, || "ratio missing from the training log".into())?;
    Ok(format!(
        "{ratio:.3} proposals per entity ({} proposals, {} entities)",
        r.dev_report.num_proposals, r.dev_report.num_gold
    ))
}

fn inv_reload() -> Result<String, String> {
    let r = main_run()?;
    let back = Checkpoint::from_json(&r.json).map_err(|e| e.to_string())?;
    let report = back.evaluate(&corpus().1).map_err(|e| e.to_string())?;
    ensure(report == r.dev_report, || "metrics changed after reload".into())?;
    Ok("identical dev report".into())
}

fn inv_loss() -> Result<String, String> {
    let r = main_run()?;
    let first: Vec<f64> = r.logs.iter().take(5).map(|l| l.total).collect();
    let msg = first.iter().map(|v| format!("{v:.2}")).collect::<Vec<_>>().join(" > ");
    ensure(first.windows(2).all(|w| w[1] < w[0]), || format!("not decreasing: {msg}"))?;
    Ok(msg)
}
