//! Acceptance criteria, one line each. Runs as a plain binary so the
//! verdicts are always printed; exits non-zero if any criterion fails.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use gapres_core::embedding_bank::tokenizer::{PieceTokenizer, Token};
use gapres_core::embedding_bank::{build_bundle, build_bundles, DeskEncoder, EmbeddingBundle, Encoder, EncoderProfile};
use gapres_core::ensemble::{blend, BlendWeights, PredictionTriple};
use gapres_core::features::FeatureVector;
use gapres_core::gap_data::{apply_corrections, load_gap_tsv, CorrectionsLedger, Label};
use gapres_core::metrics::{accuracy3, f1_pairs, logloss, EvalReport, GoldLabels, MetricSet, PredictionMatrix};
use gapres_core::models::{siamese_forward, FrozenInputs, FrozenModel, FrozenSpec, HeadKind, HeadSpec};
use gapres_core::nn::gradcheck::check_gradients;
use gapres_core::nn::{Activation, Mat};
use gapres_core::pipeline::{run, RunConfig, RunLayout};
use gapres_core::synth;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Outcome of one criterion.
enum Verdict {
    Pass(String),
    Fail(String),
    Skipped(String),
}

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Verdict::Pass(detail)
    } else {
        Verdict::Fail(detail)
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A point on the simplex; some components are exactly zero or tied so
/// clipping and tie-breaking are exercised.
fn random_triple(r: &mut ChaCha8Rng) -> [f64; 3] {
    match r.random_range(0..10) {
        0 => [1.0 / 3.0; 3],
        1 => {
            let mut t = [0.0; 3];
            t[r.random_range(0..3)] = 1.0;
            t
        }
        2 => [0.4, 0.4, 0.2],
        _ => {
            let raw: [f64; 3] = std::array::from_fn(|_| r.random::<f64>());
            let s: f64 = raw.iter().sum();
            raw.map(|v| v / s)
        }
    }
}

fn label_of(i: usize) -> Label {
    [Label::A, Label::B, Label::Neither][i]
}

// Independent oracles: plain loops over the raw arrays.

fn oracle_logloss(gold: &[usize], pred: &[[f64; 3]]) -> f64 {
    let mut total = 0.0;
    for (i, row) in pred.iter().enumerate() {
        for (j, &p) in row.iter().enumerate() {
            let y = if gold[i] == j { 1.0 } else { 0.0 };
            total += y * p.clamp(1e-15, 1.0 - 1e-15).ln();
        }
    }
    -total / gold.len() as f64
}

fn oracle_argmax(p: &[f64; 3]) -> usize {
    if p[0] >= p[1] && p[0] >= p[2] {
        0
    } else if p[1] >= p[2] {
        1
    } else {
        2
    }
}

fn oracle_accuracy(gold: &[usize], pred: &[[f64; 3]]) -> f64 {
    let hits = gold.iter().zip(pred).filter(|(g, p)| oracle_argmax(p) == **g).count();
    hits as f64 / gold.len() as f64
}

fn oracle_f1(gold: &[usize], pred: &[[f64; 3]]) -> f64 {
    // Expand every example into its (pronoun, A) and (pronoun, B) pairs.
    let mut pairs = Vec::new();
    for (g, p) in gold.iter().zip(pred) {
        let chosen = oracle_argmax(p);
        for cand in 0..2 {
            pairs.push((*g == cand, chosen == cand));
        }
    }
    let tp = pairs.iter().filter(|&&(g, p)| g && p).count();
    let fp = pairs.iter().filter(|&&(g, p)| !g && p).count();
    let fneg = pairs.iter().filter(|&&(g, p)| g && !p).count();
    if tp == 0 {
        return 0.0;
    }
    (2 * tp) as f64 / (2 * tp + fp + fneg) as f64
}

fn to_maps(gold: &[usize], pred: &[[f64; 3]]) -> (GoldLabels, PredictionMatrix) {
    let ids: Vec<String> = (0..gold.len()).map(|i| format!("ex{i:03}")).collect();
    let g = GoldLabels(ids.iter().cloned().zip(gold.iter().map(|&y| label_of(y))).collect());
    let p = ids
        .iter()
        .cloned()
        .zip(pred.iter().map(|&t| PredictionTriple::from_array(t)))
        .collect();
    (g, p)
}

fn metric_oracles() -> Verdict {
    let start = Instant::now();
    let mut r = rng(1);
    let (mut worst_ll, mut acc_bad, mut f1_bad) = (0.0f64, 0, 0);
    for _ in 0..1000 {
        let n = r.random_range(1..=50);
        let gold: Vec<usize> = (0..n).map(|_| r.random_range(0..3)).collect();
        let pred: Vec<[f64; 3]> = (0..n).map(|_| random_triple(&mut r)).collect();
        let (g, p) = to_maps(&gold, &pred);
        let ll = logloss(&g, &p).unwrap();
        let want = oracle_logloss(&gold, &pred);
        worst_ll = worst_ll.max((ll - want).abs() / want.abs().max(f64::MIN_POSITIVE));
        acc_bad += usize::from(accuracy3(&g, &p).unwrap() != oracle_accuracy(&gold, &pred));
        f1_bad += usize::from(f1_pairs(&g, &p).unwrap() != oracle_f1(&gold, &pred));
    }
    let elapsed = start.elapsed();
    check(
        worst_ll <= 1e-12 && acc_bad == 0 && f1_bad == 0 && elapsed < Duration::from_secs(10),
        format!(
            "1000 instances: max logloss rel err {worst_ll:.2e}, accuracy mismatches {acc_bad}, F1 mismatches {f1_bad}, {:.2}s",
            elapsed.as_secs_f64()
        ),
    )
}

fn analytic_fixtures() -> Verdict {
    let mut r = rng(2);
    let n = 37;
    let gold: Vec<usize> = (0..n).map(|_| r.random_range(0..3)).collect();
    let uniform = vec![[1.0 / 3.0; 3]; n];
    let perfect: Vec<[f64; 3]> = gold
        .iter()
        .map(|&g| {
            let mut t = [0.0; 3];
            t[g] = 1.0;
            t
        })
        .collect();
    let neither = vec![[0.0, 0.0, 1.0]; n];
    let (g, u) = to_maps(&gold, &uniform);
    let (_, pf) = to_maps(&gold, &perfect);
    let (_, ne) = to_maps(&gold, &neither);
    let ll_u = logloss(&g, &u).unwrap();
    let ll_p = logloss(&g, &pf).unwrap();
    let f1_n = f1_pairs(&g, &ne).unwrap();
    check(
        (ll_u - 3f64.ln()).abs() <= 1e-12 && ll_p <= 1e-14 && f1_n == 0.0,
        format!(
            "uniform logloss - ln3 = {:.1e}, perfect logloss = {ll_p:.1e}, all-NEITHER F1 = {f1_n}",
            ll_u - 3f64.ln()
        ),
    )
}

/// Published per-gender cells and bias column: (LL M, F, B), (Acc M, F, B), (F1 M, F, B).
type Row = (&'static str, [[f64; 3]; 3]);

const ORIGINAL_LABELS: [Row; 3] = [
    ("fine-tuned", [[0.294, 0.398, 0.738], [0.908, 0.884, 0.974], [0.927, 0.900, 0.971]]),
    ("frozen", [[0.308, 0.368, 0.837], [0.883, 0.866, 0.981], [0.904, 0.882, 0.976]]),
    ("blend", [[0.259, 0.338, 0.766], [0.907, 0.883, 0.974], [0.923, 0.898, 0.973]]),
];

const CORRECTED_LABELS: [Row; 3] = [
    ("fine-tuned", [[0.268, 0.311, 0.863], [0.914, 0.905, 0.990], [0.932, 0.919, 0.987]]),
    ("frozen", [[0.292, 0.306, 0.954], [0.886, 0.890, 1.005], [0.908, 0.906, 0.997]]),
    ("blend", [[0.241, 0.273, 0.882], [0.913, 0.908, 0.995], [0.928, 0.921, 0.992]]),
];

fn published_arithmetic() -> Verdict {
    let mut worst = (0.0f64, String::new());
    let mut headline = (f64::NAN, f64::NAN);
    for (table, rows) in [("original", &ORIGINAL_LABELS), ("corrected", &CORRECTED_LABELS)] {
        for (name, [ll, acc, f1]) in rows.iter() {
            let ms = |k: usize| MetricSet {
                logloss: ll[k],
                accuracy: acc[k],
                f1: f1[k],
            };
            let r = EvalReport::from_metrics(name, ms(0), ms(1), ms(1)).unwrap();
            for (metric, got, want) in [("LL", r.bias.logloss, ll[2]), ("Acc", r.bias.accuracy, acc[2]), ("F1", r.bias.f1, f1[2])] {
                let d = (got - want).abs();
                if d > worst.0 {
                    worst = (d, format!("{table} {name} {metric}: {got:.5} vs {want}"));
                }
            }
            if table == "original" && *name == "fine-tuned" {
                headline = (r.bias.f1, r.bias.logloss);
            }
        }
    }
    check(
        (headline.0 - 0.971).abs() <= 5e-4 && (headline.1 - 0.738).abs() <= 2e-3 && worst.0 <= 2e-3,
        format!(
            "fine-tuned B_F1 {:.5}, B_LL {:.5}; worst of 18 cells |Δ| = {:.2e} ({})",
            headline.0, headline.1, worst.0, worst.1
        ),
    )
}

/// Random contextual vectors under the large profile, for dimension checks
/// without a real pretrained model.
struct RandomLargeEncoder {
    profile: EncoderProfile,
    tokenizer: PieceTokenizer,
}

impl Encoder for RandomLargeEncoder {
    fn profile(&self) -> &EncoderProfile {
        &self.profile
    }
    fn window_tokens(&self) -> usize {
        510
    }
    fn tokenize(&self, text: &str) -> Vec<Token> {
        self.tokenizer.tokenize(text)
    }
    fn hidden_states(&self, ids: &[u32]) -> Vec<Mat> {
        let mut r = rng(ids.iter().map(|&i| u64::from(i)).sum());
        (0..self.profile.num_layers)
            .map(|_| Mat::from_shape_fn((ids.len(), self.profile.hidden_size), |_| r.random_range(-1.0..1.0)))
            .collect()
    }
}

fn embedding_algebra() -> Verdict {
    let mut r = rng(4);
    let mut identity_failures = 0;
    for i in 0..100 {
        let d = r.random_range(1..64);
        let mut v = || -> Vec<f32> { (0..d).map(|_| r.random_range(-3.0f32..3.0)).collect() };
        let (p, a, b) = (v(), v(), v());
        let bundle = EmbeddingBundle::new(format!("b{i}"), p.clone(), a.clone(), b.clone(), true);
        let dv = bundle.derived.as_ref().unwrap();
        for k in 0..d {
            let ok = dv.pa[k] == p[k] * a[k] && dv.pb[k] == p[k] * b[k] && dv.ab_minus_pp[k] == a[k] * b[k] - p[k] * p[k];
            identity_failures += usize::from(!ok);
        }
    }

    let data = synth::generate(20, 4);
    let desk = DeskEncoder::desk_tiny(false);
    let profile = desk.profile().clone();
    let law = build_bundles(&data, &desk, true)
        .unwrap()
        .iter()
        .all(|b| [b.p.len(), b.a.len(), b.b.len()].iter().all(|&n| n == profile.hidden_size * profile.layer_selection.len()));

    let large = RandomLargeEncoder {
        profile: EncoderProfile::large("cased"),
        tokenizer: PieceTokenizer::new(30_000, false),
    };
    let bundle = build_bundle(&data[0], &large, false).unwrap();
    let pab = bundle.concat_pab().len();
    let head = HeadSpec::default_for(HeadKind::MlpCased, bundle.span_dim(), 69).input_dim;
    check(
        identity_failures == 0 && law && pab == 9216 && head == 9216,
        format!(
            "100 random bundles, {identity_failures} identity failures; desk-tiny dimension law {law}; large profile [P|A|B] = {pab}, MLP input = {head}"
        ),
    )
}

fn random_inputs(r: &mut ChaCha8Rng, n: usize, span: usize, fdim: usize) -> FrozenInputs {
    let mut v = |d: usize| -> Vec<f32> { (0..d).map(|_| r.random_range(-1.0f32..1.0)).collect() };
    let ids: Vec<String> = (0..n).map(|i| format!("r{i}")).collect();
    let cased: Vec<_> = ids.iter().map(|id| EmbeddingBundle::new(id.clone(), v(span), v(span), v(span), false)).collect();
    let uncased: Vec<_> = ids.iter().map(|id| EmbeddingBundle::new(id.clone(), v(span), v(span), v(span), true)).collect();
    let feats: Vec<_> = ids
        .iter()
        .map(|id| FeatureVector {
            example_id: id.clone(),
            values: v(fdim).into_iter().map(f64::from).collect(),
        })
        .collect();
    FrozenInputs::build(&ids, &cased, &uncased, &feats).unwrap()
}

fn single_head_spec(kind: HeadKind, span: usize, fdim: usize, hidden: usize) -> FrozenSpec {
    let mut head = HeadSpec::default_for(kind, span, fdim);
    head.hidden = vec![hidden];
    if !kind.is_siamese() {
        head.output_dim = 4;
    }
    // Smooth activation so finite differences never straddle a kink.
    head.activation = Activation::Tanh;
    let mut spec = FrozenSpec::default_for(span, fdim);
    spec.heads = vec![head];
    spec
}

fn gradient_checks() -> Verdict {
    let mut r = rng(5);
    let mut per_kind = Vec::new();
    let mut all_ok = true;
    for kind in HeadKind::ALL {
        let mut worst = 0.0f64;
        for inst in 0..10 {
            let (span, fdim, n) = (r.random_range(1..4), r.random_range(2..5), r.random_range(2..6));
            let inputs = random_inputs(&mut r, n, span, fdim);
            let labels: Vec<usize> = (0..n).map(|_| r.random_range(0..3)).collect();
            let rows: Vec<usize> = (0..n).collect();
            let mut model = FrozenModel::new(single_head_spec(kind, span, fdim, r.random_range(2..5)), 100 + inst).unwrap();
            model.fit_standardiser(&inputs, &rows);
            let mut store = model.store.clone();
            let report = check_gradients(&mut store, 1e-6, |s| model.loss_with(s, &inputs, &rows, &labels, None));
            worst = worst.max(report.max_rel_error);
        }
        all_ok &= worst <= 1e-4;
        per_kind.push(format!("{kind:?} {worst:.1e}"));
    }
    check(all_ok, format!("max rel error over 10 instances: {}", per_kind.join(", ")))
}

fn desk_end_to_end() -> Verdict {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let cfg = RunConfig::desk(dir.path().join("first"), 42);
    let (trained, first) = match run(&cfg) {
        Ok(x) => x,
        Err(e) => return Verdict::Fail(format!("pipeline failed: {e}")),
    };
    let mut again_cfg = cfg.clone();
    again_cfg.out_dir = dir.path().join("second");
    if let Err(e) = run(&again_cfg) {
        return Verdict::Fail(format!("rerun failed: {e}"));
    }
    let elapsed = start.elapsed();
    let (a, b) = (RunLayout::new(&cfg.out_dir), RunLayout::new(&again_cfg.out_dir));
    let identical = ["finetuned", "frozen", "blend"]
        .iter()
        .all(|n| std::fs::read(a.predictions(n)).unwrap() == std::fs::read(b.predictions(n)).unwrap());
    let ll: BTreeMap<&str, f64> = first.reports.iter().map(|r| (r.name.as_str(), r.overall.logloss)).collect();
    let best_path = ll["finetuned"].min(ll["frozen"]);
    let ok = trained.finetuned_models == 2
        && (trained.train_examples, trained.test_examples) == (400, 100)
        && ll["blend"] < 0.9
        && ll["blend"] <= best_path + 0.05
        && identical
        && elapsed < Duration::from_secs(15 * 60);
    check(
        ok,
        format!(
            "held-out logloss fine-tuned {:.4}, frozen {:.4}, blend {:.4} (limit {:.4}); byte-identical rerun {identical}; two runs in {:.0}s",
            ll["finetuned"],
            ll["frozen"],
            ll["blend"],
            best_path + 0.05,
            elapsed.as_secs_f64()
        ),
    )
}

/// Needs the real GAP test file and the 66-entry ledger, supplied through
/// `GAPRES_GAP_TEST` and `GAPRES_GAP_CORRECTIONS`.
fn corrections() -> Verdict {
    let (Some(test), Some(ledger)) = (std::env::var_os("GAPRES_GAP_TEST"), std::env::var_os("GAPRES_GAP_CORRECTIONS")) else {
        return Verdict::Skipped("set GAPRES_GAP_TEST and GAPRES_GAP_CORRECTIONS to the GAP test file and its ledger".into());
    };
    let data = match load_gap_tsv(&PathBuf::from(test), true) {
        Ok(d) => d,
        Err(e) => return Verdict::Fail(format!("GAP test file: {e}")),
    };
    let ledger = match CorrectionsLedger::load(&PathBuf::from(ledger)) {
        Ok(l) => l,
        Err(e) => return Verdict::Fail(format!("ledger: {e}")),
    };
    match apply_corrections(&data, &ledger) {
        Ok((_, s)) => check(
            s.changed == 66 && s.changed_feminine == 39 && s.changed_masculine == 27,
            format!(
                "{} labels changed ({} feminine, {} masculine) from {} ledger entries",
                s.changed,
                s.changed_feminine,
                s.changed_masculine,
                ledger.len()
            ),
        ),
        Err(e) => Verdict::Fail(e.to_string()),
    }
}

fn property_suites() -> Verdict {
    let mut r = rng(8);
    // Siamese symmetry: 100 random networks × 100 random input pairs.
    let mut asym = 0;
    for net_seed in 0..100u64 {
        let span = r.random_range(1..6);
        let spec = single_head_spec(HeadKind::SiameseAB, span, 3, r.random_range(1..8));
        let mut spec = spec;
        spec.heads[0].activation = if net_seed % 2 == 0 { Activation::Relu } else { Activation::Tanh };
        let model = FrozenModel::new(spec, net_seed).unwrap();
        let net = model.head(HeadKind::SiameseAB).unwrap();
        for _ in 0..100 {
            let mut v = || -> Vec<f64> { (0..2 * span).map(|_| r.random_range(-2.0..2.0)).collect() };
            let (left, right) = (v(), v());
            let (sl, sr) = siamese_forward(&model.store, net, &left, &right).unwrap();
            let (tl, tr) = siamese_forward(&model.store, net, &right, &left).unwrap();
            asym += usize::from(sl != tr || sr != tl);
        }
    }

    // Blend convexity on 10,000 random triples and weights.
    let mut convex_bad = 0;
    let mut worst_excess = 0.0f64;
    for _ in 0..10_000 {
        let (ft, fr) = (random_triple(&mut r), random_triple(&mut r));
        let w = r.random::<f64>();
        let weights = BlendWeights::new(w, 1.0 - w).unwrap();
        let out = blend(PredictionTriple::from_array(ft), PredictionTriple::from_array(fr), weights)
            .unwrap()
            .to_array();
        let sum: f64 = out.iter().sum();
        let mut bad = (sum - 1.0).abs() > 1e-12 || out.iter().any(|&v| v < 0.0);
        for k in 0..3 {
            let excess = (ft[k].min(fr[k]) - out[k]).max(out[k] - ft[k].max(fr[k]));
            worst_excess = worst_excess.max(excess);
            bad |= excess > 1e-15;
        }
        let conf = |t: &[f64; 3]| t.iter().cloned().fold(f64::MIN, f64::max);
        bad |= conf(&out) > conf(&ft).max(conf(&fr)) + 1e-15;
        convex_bad += usize::from(bad);
    }
    check(
        asym == 0 && convex_bad == 0,
        format!(
            "siamese: {asym}/10000 asymmetric; blend: {convex_bad}/10000 violations (largest bound excess {worst_excess:.1e})"
        ),
    )
}

type Criterion = (&'static str, fn() -> Verdict);

fn main() {
    let criteria: [Criterion; 8] = [
        ("metric oracle suite", metric_oracles),
        ("analytic fixtures", analytic_fixtures),
        ("published bias arithmetic", published_arithmetic),
        ("embedding algebra", embedding_algebra),
        ("gradient checks", gradient_checks),
        ("desk-scale end-to-end", desk_end_to_end),
        ("label corrections", corrections),
        ("siamese symmetry and blend convexity", property_suites),
    ];
    let mut failed = 0;
    for (name, f) in criteria {
        match f() {
            Verdict::Pass(d) => println!("[PASS] {name}: {d}"),
            Verdict::Fail(d) => {
                failed += 1;
                println!("[FAIL] {name}: {d}");
            }
            Verdict::Skipped(d) => println!("[SKIPPED] {name}: {d}"),
        }
    }
    println!("acceptance: {} criteria, {failed} failed", criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
