//! One PASS/FAIL line per acceptance criterion.
//!
//! Criteria 1, 5, 6, 7 and 8 and the fixed examples of 9 check code and are
//! asserted. Criteria 2, 3, 4, 10 and the trace-log half of 9 depend on
//! trained runs (scripts/reproduce.sh) and external data; they print FAIL
//! when unmet or unverifiable and only fail the test when SACCADE_STRICT is
//! set.

#[path = "../../core/tests/common/mod.rs"]
mod core_common;
mod common;

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::Rng;
use saccade::config::RunConfig;
use saccade::run::{self, EvalReport, EvalTarget, TrainSummary};
use saccade::tracelog::{read_jsonl, TraceRecord};
use saccade_core::data::Split;
use saccade_core::glimpse::{build_retina, GlimpseConfig, GlimpseDims, GlimpseNet, ImageRef, Location};
use saccade_core::models::attention::loss_terms;
use saccade_core::models::{param_count, BaselineMode, ContextNet, LeNet, LossWeights, Model, ModelSpec, Sampling, Variant};
use saccade_core::nn::activation::{relu, relu_backward, tanh, tanh_backward};
use saccade_core::nn::conv::{adaptive_avg_pool, adaptive_avg_pool_backward, max_pool2, max_pool2_backward, Conv2d};
use saccade_core::nn::{cross_entropy, grad_check, Linear, LstmCell, LstmState, Parameters};
use saccade_core::rng::{stream, Domain, RunRng};
use saccade_core::scanpath::{analyze, kde, linspace, saccade_distances, segment_fixations, trapezoid, AnalyzeConfig, ScanPath};
use saccade_core::Tensor;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn data_root() -> PathBuf {
    std::env::var_os("SACCADE_DATA")
        .map(PathBuf::from)
        .unwrap_or_else(|| common::workspace_root().join("data"))
}

fn within(value: f64, target: f64, tol: f64) -> bool {
    (value - target).abs() <= tol * target
}

fn criterion_1() -> Verdict {
    let spec = |v: Variant, side: usize, classes: usize, ctx: bool| {
        let mut s = ModelSpec::new(v, side, classes);
        s.context_cnn = ctx;
        s
    };
    let ram = spec(Variant::Ram, 28, 10, false);
    let mram = spec(Variant::Mram, 28, 10, false);
    let dram_plain = spec(Variant::Dram, 28, 10, false);
    let dram_cnn = spec(Variant::Dram, 28, 10, true);
    let lenet28 = spec(Variant::Lenet, 28, 10, false);
    let lenet48 = spec(Variant::Lenet, 48, 7, false);
    let mut counts = Vec::new();
    for s in [&ram, &mram, &dram_plain, &dram_cnn, &lenet28, &lenet48] {
        let built = Model::<f32>::new(s.clone(), &mut stream(1, Domain::Init, 0, 0)).unwrap().num_params();
        assert_eq!(built, param_count(s), "{}", s.tag());
        counts.push(built as f64);
    }
    let checks = [
        within(counts[0], 0.637e6, 0.10),
        within(counts[1], 1.163e6, 0.10),
        counts[1] == counts[2],
        within(counts[3], 1.985e6, 0.15),
        within(counts[4], 0.061e6, 0.10),
        within(counts[5], 0.158e6, 0.10),
    ];
    verdict(
        checks.iter().all(|&c| c),
        format!(
            "RAM {} / MRAM {} / DRAM w/o CNN {} / DRAM {} / LeNet-5 28px {} / 48px {}",
            counts[0], counts[1], counts[2], counts[3], counts[4], counts[5]
        ),
    )
}

/// A configuration exactly as scripts/reproduce.sh trains it.
fn reproduced(pairs: &[&str], epochs_var: &str, default_epochs: usize) -> RunConfig {
    let mut c = RunConfig::default();
    c.apply(pairs.iter().copied()).unwrap();
    let epochs = std::env::var(epochs_var).ok().and_then(|v| v.parse().ok()).unwrap_or(default_epochs);
    c.train.max_epochs = epochs;
    c.output_dir = common::workspace_root().join("runs");
    c
}

struct Finished {
    summary: TrainSummary,
    test: EvalReport,
}

fn finished(cfg: &RunConfig) -> Result<Finished, String> {
    let dir = run::cached_run(cfg)
        .unwrap()
        .ok_or_else(|| format!("no finished run with hash {} under {}", cfg.hash().unwrap(), cfg.output_dir.display()))?;
    let summary: TrainSummary = serde_json::from_str(&std::fs::read_to_string(dir.join("summary.json")).unwrap())
        .map_err(|e| format!("{}: {e}", dir.display()))?;
    let target = EvalTarget {
        data_root: data_root(),
        split: Split::Test,
        limit: 0,
        batch_size: 128,
        train_limit: cfg.train_limit,
        val_fraction: cfg.train.val_fraction,
    };
    let test = run::eval(&dir.join("best.ckpt"), &target).map_err(|e| format!("re-evaluating {}: {e}", dir.display()))?;
    Ok(Finished { summary, test })
}

fn describe(f: &Finished) -> String {
    format!(
        "{} {:.2}% ({} epochs, best {})",
        f.test.model,
        100.0 * f.test.accuracy,
        f.summary.epochs,
        f.summary.best_epoch
    )
}

fn mnist_runs() -> [RunConfig; 2] {
    [
        reproduced(&["dataset=mnist", "model=mram", "glimpses=10"], "MNIST_EPOCHS", 150),
        reproduced(&["dataset=mnist", "model=ram", "glimpses=7"], "MNIST_EPOCHS", 150),
    ]
}

fn fashion_runs() -> [RunConfig; 3] {
    let f = |m: &[&str]| {
        let mut pairs = vec!["dataset=fashion_mnist", "glimpses=12"];
        pairs.extend_from_slice(m);
        reproduced(&pairs, "FASHION_EPOCHS", 30)
    };
    [f(&["model=mram"]), f(&["model=ram"]), f(&["model=dram", "context_cnn=false"])]
}

fn criterion_2() -> Verdict {
    let [mram, ram] = mnist_runs();
    match (finished(&mram), finished(&ram)) {
        (Ok(m), Ok(r)) => verdict(
            m.test.accuracy >= 0.988 && r.test.accuracy >= 0.985,
            format!("{} (need 98.80%), {} (need 98.50%)", describe(&m), describe(&r)),
        ),
        (m, r) => verdict(false, [m.err(), r.err()].into_iter().flatten().collect::<Vec<_>>().join("; ")),
    }
}

fn criterion_3() -> Verdict {
    let runs: Vec<_> = fashion_runs().iter().map(finished).collect();
    let errs: Vec<String> = runs.iter().filter_map(|r| r.as_ref().err().cloned()).collect();
    if !errs.is_empty() {
        return verdict(false, errs.join("; "));
    }
    let r: Vec<&Finished> = runs.iter().map(|r| r.as_ref().unwrap()).collect();
    let (m, ram, dram) = (r[0].test.accuracy, r[1].test.accuracy, r[2].test.accuracy);
    verdict(
        m > ram && m > dram,
        format!("{} vs {} / {}", describe(r[0]), describe(r[1]), describe(r[2])),
    )
}

fn criterion_4() -> Verdict {
    // The 2-scale retina on 48x48 faces, trained end to end on synthetic rows.
    let tmp = tempfile::tempdir().unwrap();
    common::write_fer(tmp.path(), 40);
    let mut cfg = RunConfig::default();
    let pairs = common::small_overrides(tmp.path(), &tmp.path().join("runs"));
    cfg.apply(pairs.iter().map(String::as_str)).unwrap();
    cfg.apply(["dataset=fer2013", "scales=2", "max_epochs=1"]).unwrap();
    let two_scale = run::train(&cfg, Some(tmp.path().join("run")), &mut std::io::sink());
    let two_scale = match two_scale {
        Ok(s) => format!("2-scale path ok ({} synthetic test faces)", s.test.images),
        Err(e) => return verdict(false, format!("2-scale path failed: {e}")),
    };
    let csv = data_root().join("fer2013/fer2013.csv");
    if !csv.is_file() {
        return verdict(false, format!("{} not present, MRAM accuracy unmeasured; {two_scale}", csv.display()));
    }
    let fer = reproduced(&["dataset=fer2013", "model=mram", "glimpses=12"], "FER_EPOCHS", 30);
    match finished(&fer) {
        Ok(f) => verdict(f.test.accuracy >= 0.46, format!("{} (need 46%); {two_scale}", describe(&f))),
        Err(e) => verdict(false, format!("{e}; {two_scale}")),
    }
}

trait Named: Clone {
    fn each(&self, f: &mut dyn FnMut(&Tensor<f64>));
    fn each_mut(&mut self, f: &mut dyn FnMut(&mut Tensor<f64>));
}

macro_rules! named {
    ($($t:ty),*) => {$(
        impl Named for $t {
            fn each(&self, f: &mut dyn FnMut(&Tensor<f64>)) {
                self.visit_named("m", &mut |_, t| f(t))
            }
            fn each_mut(&mut self, f: &mut dyn FnMut(&mut Tensor<f64>)) {
                self.visit_named_mut("m", &mut |_, t| f(t))
            }
        }
    )*};
}

named!(Linear<f64>, LstmCell<f64>, Conv2d<f64>, GlimpseNet<f64>, ContextNet<f64>, LeNet<f64>);

/// Max relative error of a module's accumulated parameter gradients against
/// central differences of `objective`, on every `stride`-th coordinate.
fn param_check<M: Named>(m: &M, stride: usize, objective: impl Fn(&M) -> f64) -> f64 {
    let (mut p, mut g) = (Vec::new(), Vec::new());
    m.each(&mut |t| {
        p.extend_from_slice(t.data());
        match t.grad() {
            Some(gr) => g.extend_from_slice(gr),
            None => g.extend(std::iter::repeat_n(0.0, t.len())),
        }
    });
    let idx: Vec<usize> = (0..p.len()).step_by(stride).collect();
    let mut probe = m.clone();
    grad_check(&p, &g, Some(&idx), |q| {
        let mut off = 0;
        probe.each_mut(&mut |t| {
            let n = t.len();
            t.data_mut().copy_from_slice(&q[off..off + n]);
            off += n;
        });
        objective(&probe)
    })
    .max_rel_error
}

fn input_check(x: &Tensor<f64>, dx: &Tensor<f64>, objective: impl Fn(&Tensor<f64>) -> f64) -> f64 {
    grad_check(x.data(), dx.data(), None, |q| objective(&Tensor::from_vec(x.shape(), q.to_vec()).unwrap())).max_rel_error
}

fn weights(shape: &[usize]) -> Tensor<f64> {
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|i| ((i * 13) % 7) as f64 * 0.3 - 0.9).collect()).unwrap()
}

fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

fn random_tensor(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut rng = stream(seed, Domain::Eval, 5, 5);
    let n: usize = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn single_ops() -> Vec<(&'static str, f64)> {
    let mut out = Vec::new();
    let mut rng = stream(40, Domain::Init, 0, 0);

    let mut lin = Linear::<f64>::new(4, 3, &mut rng);
    lin.bias = random_tensor(&[3], 1).requires_grad();
    let x = random_tensor(&[2, 4], 2);
    let w = weights(&[2, 3]);
    let dx = lin.backward(&x, &w, true).unwrap();
    out.push(("linear", param_check(&lin, 1, |m| dot(&m.forward(&x).unwrap(), &w))));
    out.push(("linear input", input_check(&x, &dx, |xi| dot(&lin.forward(xi).unwrap(), &w))));

    let mut cell = LstmCell::<f64>::new(8, 8, &mut rng);
    let xs = [random_tensor(&[1, 8], 3), random_tensor(&[1, 8], 4)];
    let s0 = LstmState {
        h: random_tensor(&[1, 8], 5).map(|v| v * 0.5),
        c: random_tensor(&[1, 8], 6),
    };
    let (s1, c1) = cell.step_cached(&xs[0], &s0).unwrap();
    let (_, c2) = cell.step_cached(&xs[1], &s1).unwrap();
    let (_, dh, dc) = cell.backward(&c2, &Tensor::full(&[1, 8], 1.0), &Tensor::zeros(&[1, 8]));
    cell.backward(&c1, &dh, &dc);
    out.push((
        "lstm, two steps",
        param_check(&cell, 1, |m| {
            let a = m.step(&xs[0], &s0).unwrap();
            m.step(&xs[1], &a).unwrap().h.data().iter().sum()
        }),
    ));

    let x = random_tensor(&[3, 5], 7).map(|v| 2.0 * v + 0.05);
    let w = weights(&[3, 5]);
    let mut d = w.clone();
    tanh_backward(&tanh(&x), &mut d);
    out.push(("tanh", input_check(&x, &d, |xi| dot(&tanh(xi), &w))));
    let mut d = w.clone();
    relu_backward(&relu(&x), &mut d);
    out.push(("relu", input_check(&x, &d, |xi| dot(&relu(xi), &w))));

    let logits = random_tensor(&[1, 10], 8).map(|v| 3.0 * v);
    let (_, g) = cross_entropy(logits.data(), 4).unwrap();
    let g = Tensor::from_vec(&[1, 10], g).unwrap();
    out.push(("cross entropy", input_check(&logits, &g, |l| cross_entropy(l.data(), 4).unwrap().0)));

    let mut conv = Conv2d::<f64>::new(2, 3, 3, 1, &mut rng);
    conv.bias = random_tensor(&[3], 9).requires_grad();
    let x = random_tensor(&[2, 2, 5, 4], 10);
    let (y, cache) = conv.forward(&x).unwrap();
    let w = weights(y.shape());
    let dx = conv.backward(&cache, &w);
    out.push(("conv2d", param_check(&conv, 1, |m| dot(&m.forward(&x).unwrap().0, &w))));
    out.push(("conv2d input", input_check(&x, &dx, |xi| dot(&conv.forward(xi).unwrap().0, &w))));

    let x = random_tensor(&[1, 2, 6, 4], 11);
    let (y, arg) = max_pool2(&x);
    let w = weights(y.shape());
    let dx = max_pool2_backward(x.shape(), &arg, &w);
    out.push(("max pool", input_check(&x, &dx, |xi| dot(&max_pool2(xi).0, &w))));
    let x = random_tensor(&[1, 2, 7, 5], 12);
    let w = weights(&[1, 2, 3, 2]);
    let dx = adaptive_avg_pool_backward(x.shape(), &w);
    out.push(("adaptive average pool", input_check(&x, &dx, |xi| dot(&adaptive_avg_pool(xi, 3, 2), &w))));
    out
}

fn composed_paths() -> Vec<(&'static str, f64)> {
    let mut out = Vec::new();
    let mut rng = stream(41, Domain::Init, 0, 0);

    let mut g = GlimpseNet::<f64>::new(32, GlimpseDims { what: 6, where_: 5, out: 7 }, &mut rng);
    g.each_mut(&mut |t| {
        for v in t.data_mut() {
            *v += 0.1;
        }
    });
    let retina = random_tensor(&[2, 32], 13);
    let loc = random_tensor(&[2, 2], 14);
    let (y, cache) = g.forward(&retina, &loc).unwrap();
    let w = weights(y.shape());
    g.backward(&cache, &w);
    out.push(("glimpse network", param_check(&g, 1, |m| dot(&m.forward(&retina, &loc).unwrap().0, &w))));

    let mut ctx = ContextNet::<f64>::new(6, &mut rng);
    let images = random_tensor(&[2 * 12 * 12], 15);
    let (y, cache) = ctx.forward(images.data(), 2, 12).unwrap();
    let w = weights(y.shape());
    ctx.backward(&cache, &w);
    out.push(("context network", param_check(&ctx, 7, |m| dot(&m.forward(images.data(), 2, 12).unwrap().0, &w))));

    let mut lenet = LeNet::<f64>::new(28, 10, &mut rng);
    let images = random_tensor(&[2 * 28 * 28], 16);
    let (y, cache) = lenet.forward(images.data(), 2).unwrap();
    let w = weights(y.shape());
    lenet.backward(&cache, &w);
    out.push(("LeNet-5", param_check(&lenet, 97, |m| dot(&m.forward(images.data(), 2).unwrap().0, &w))));

    let all = LossWeights {
        classification: 1.0,
        baseline: 1.0,
        reinforce: 0.37,
    };
    let configs = [
        ("RAM episode", Variant::Ram, BaselineMode::Single, false),
        ("MRAM episode, hybrid baseline", Variant::Mram, BaselineMode::Hybrid, false),
        ("MRAM episode, single baseline", Variant::Mram, BaselineMode::Single, false),
        ("DRAM episode with context", Variant::Dram, BaselineMode::Single, true),
        ("DRAM episode, hybrid baseline", Variant::Dram, BaselineMode::Hybrid, false),
    ];
    for (name, v, mode, context) in configs {
        let mut m = core_common::random_model(core_common::tiny_spec(v, mode, context), 11);
        let (images, labels) = core_common::random_batch(3, core_common::BATCH);
        let (analytic, ro) = core_common::analytic_and_numeric_setup(&mut m, &images, &labels, all);
        let (replay, frozen) = (ro.replay(), ro.frozen());
        let params = core_common::flat_params(&m);
        let names = core_common::flat_names(&m);
        let idx: Vec<usize> = (0..params.len())
            .filter(|&i| !names[i].starts_with("context.") || i % 29 == 0)
            .collect();
        let mut probe = m.clone();
        let r = grad_check(&params, &analytic, Some(&idx), |p| {
            core_common::set_params(&mut probe, p);
            let r = probe
                .rollout(&images, &labels, Sampling::<RunRng>::Replay(&replay), Some(&frozen), false)
                .unwrap();
            core_common::objective(&r, all)
        });
        out.push((name, r.max_rel_error));
    }
    out
}

fn criterion_5() -> Verdict {
    let start = Instant::now();
    let ops = single_ops();
    let paths = composed_paths();
    let secs = start.elapsed().as_secs_f64();
    fn worst(v: &[(&'static str, f64)]) -> (&'static str, f64) {
        v.iter().cloned().fold(("", 0.0), |a, b| if b.1 > a.1 { b } else { a })
    }
    let (wo, eo) = worst(&ops);
    let (wp, ep) = worst(&paths);
    for (n, e) in ops.iter().chain(&paths) {
        println!("    {n}: {e:.2e}");
    }
    verdict(
        eo < 1e-4 && ep < 1e-3 && secs < 60.0,
        format!(
            "{} ops worst {eo:.1e} ({wo}), {} composed worst {ep:.1e} ({wp}), {secs:.1}s",
            ops.len(),
            paths.len()
        ),
    )
}

const POLICY_ONLY: LossWeights = LossWeights {
    classification: 0.0,
    baseline: 0.0,
    reinforce: 1.0,
};

fn criterion_6() -> Verdict {
    let mut notes = Vec::new();
    let mut pass = true;
    for (v, mode) in [
        (Variant::Ram, BaselineMode::Single),
        (Variant::Mram, BaselineMode::Hybrid),
        (Variant::Dram, BaselineMode::Single),
    ] {
        let mut m = core_common::random_model(core_common::tiny_spec(v, mode, v == Variant::Dram), 42);
        let (images, _) = core_common::random_batch(43, core_common::BATCH);

        // Every answer right and b_t = R = 1 exactly.
        let mut sure = m.clone();
        sure.action.weight.data_mut().fill(0.0);
        sure.action.bias.data_mut().copy_from_slice(&[40.0, 0.0, 0.0]);
        sure.baseline.weight.data_mut().fill(0.0);
        sure.baseline.bias.data_mut()[0] = 1.0;
        let labels = vec![0; core_common::BATCH];
        let mut r = core_common::rngs(44, core_common::BATCH);
        let ro = sure.rollout(&images, &labels, Sampling::Random(&mut r), None, true).unwrap();
        let rl: f64 = loss_terms(&ro).unwrap().iter().map(|t| t.2.abs()).sum();
        sure.zero_grad();
        sure.backward(&ro, POLICY_ONLY).unwrap();
        let g_sure = core_common::flat_grads(&sure).iter().fold(0.0f64, |a, g| a.max(g.abs()));
        pass &= rl == 0.0 && g_sure == 0.0;

        // Generic episode: which parameters the policy term reaches.
        let (_, labels) = core_common::random_batch(45, core_common::BATCH);
        core_common::analytic_and_numeric_setup(&mut m, &images, &labels, POLICY_ONLY);
        let g = core_common::flat_grads(&m);
        let names = core_common::flat_names(&m);
        let reach = |prefix: &str| {
            g.iter()
                .zip(&names)
                .filter(|(_, n)| n.starts_with(prefix))
                .fold(0.0f64, |a, (g, _)| a.max(g.abs()))
        };
        let mut blocked = vec![reach("baseline"), reach("action")];
        if v == Variant::Mram {
            blocked.push(reach("core2"));
        }
        let leak = blocked.iter().cloned().fold(0.0, f64::max);
        let live = reach("location");
        pass &= leak == 0.0 && live > 0.0;
        notes.push(format!(
            "{}: |L|={rl} max|g| at b=R {g_sure}, leak into baseline/action{} {leak}",
            v.name(),
            if v == Variant::Mram { "/upper core" } else { "" }
        ));
    }
    verdict(pass, notes.join("; "))
}

fn first_epoch_line(root: &Path, mnist: bool, dir: &Path) -> String {
    let mut cfg = RunConfig::default();
    let mut pairs = vec![format!("data_root={}", root.display()), "max_epochs=1".to_string(), "trace=false".into()];
    if mnist {
        pairs.extend(["train_limit=1280".into(), "test_limit=100".into()]);
    } else {
        pairs.extend(common::small_overrides(root, dir).into_iter().filter(|p| !p.starts_with("max_epochs")));
    }
    cfg.apply(pairs.iter().map(String::as_str)).unwrap();
    run::train(&cfg, Some(dir.to_path_buf()), &mut std::io::sink()).unwrap();
    let text = std::fs::read_to_string(dir.join("metrics.tsv")).unwrap();
    text.lines().nth(1).unwrap().to_string()
}

fn criterion_7() -> Verdict {
    let tmp = tempfile::tempdir().unwrap();
    let real = data_root();
    let mnist = real.join("mnist/train-images-idx3-ubyte").is_file();
    let root = if mnist {
        real
    } else {
        common::write_idx_dataset(&tmp.path().join("data"), "mnist", 200, 40);
        tmp.path().join("data")
    };
    let a = first_epoch_line(&root, mnist, &tmp.path().join("a"));
    let b = first_epoch_line(&root, mnist, &tmp.path().join("b"));
    let strip = |l: &str| l.rsplit_once('\t').unwrap().0.to_string();
    let same = strip(&a) == strip(&b);
    let ck_same = std::fs::read(tmp.path().join("a/best.ckpt")).unwrap() == std::fs::read(tmp.path().join("b/best.ckpt")).unwrap();
    verdict(
        same && ck_same,
        format!(
            "{} seed 1: '{}' twice, wall-clock column excluded; checkpoints {}",
            if mnist { "MRAM-10 on 1280 MNIST images" } else { "synthetic digits" },
            strip(&a).replace('\t', " "),
            if ck_same { "identical" } else { "differ" }
        ),
    )
}

/// Pads by the largest window, slices each scale's window and averages it
/// down to the patch side.
fn oracle_retina(img: &[f64], side: usize, loc: Location, cfg: &GlimpseConfig) -> Vec<f64> {
    let pad = cfg.patch_size * cfg.scale_factor.pow(cfg.num_scales as u32 - 1);
    let ps = side + 2 * pad;
    let mut padded = vec![0.0; ps * ps];
    for r in 0..side {
        for c in 0..side {
            padded[(r + pad) * ps + c + pad] = img[r * side + c];
        }
    }
    let centre = |v: f64| ((v + 1.0) / 2.0 * (side as f64 - 1.0)).round() as i64;
    let (cx, cy) = (centre(loc.x), centre(loc.y));
    let mut out = Vec::new();
    for s in 0..cfg.num_scales {
        let size = cfg.patch_size * cfg.scale_factor.pow(s as u32);
        let k = size / cfg.patch_size;
        let left = (cx - (size / 2) as i64 + pad as i64) as usize;
        let top = (cy - (size / 2) as i64 + pad as i64) as usize;
        for i in 0..cfg.patch_size {
            for j in 0..cfg.patch_size {
                let mut sum = 0.0;
                for a in 0..k {
                    for b in 0..k {
                        sum += padded[(top + i * k + a) * ps + left + j * k + b];
                    }
                }
                out.push(sum / (k * k) as f64);
            }
        }
    }
    out
}

fn criterion_8() -> Verdict {
    let mut rng = stream(8, Domain::Eval, 8, 8);
    let corners = [(-1.0, -1.0), (-1.0, 1.0), (1.0, -1.0), (1.0, 1.0)];
    let mut worst = 0.0f64;
    let mut corner_cases = 0;
    for n in 0..1000 {
        let side = [12, 28, 48][n % 3];
        let cfg = GlimpseConfig {
            patch_size: [4, 8][n % 2],
            num_scales: 1 + n % 3,
            scale_factor: 2,
        };
        let img: Vec<f64> = (0..side * side).map(|_| rng.random_range(-2.0..2.0)).collect();
        let loc = if n % 10 < 4 {
            corner_cases += 1;
            let (x, y) = corners[n % 10];
            Location::new(x, y)
        } else {
            Location::new(rng.random_range(-1.0..=1.0), rng.random_range(-1.0..=1.0))
        };
        let got = build_retina(ImageRef::new(&img, side, side).unwrap(), loc, &cfg).unwrap();
        let want = oracle_retina(&img, side, loc, &cfg);
        assert_eq!(got.len(), want.len());
        for (g, w) in got.data().iter().zip(&want) {
            worst = worst.max((g - w).abs());
        }
    }
    verdict(worst <= 1e-12, format!("1000 pairs ({corner_cases} at corners), max |diff| {worst:e}"))
}

fn lens(points: &[(f64, f64)], threshold: f64) -> Vec<usize> {
    segment_fixations(points, threshold).unwrap().iter().map(|r| r.len).collect()
}

/// The fixed examples; panics on any mismatch.
fn scanpath_examples() -> usize {
    let mut n = 0;
    let mut check = |ok: bool, what: &str| {
        assert!(ok, "scanpath example: {what}");
        n += 1;
    };
    check(lens(&[(3.0, 3.0); 5], 6.0) == vec![5], "identical points");
    check(lens(&[(5.0, 5.0), (7.0, 5.0), (20.0, 20.0), (21.0, 21.0), (22.0, 22.0)], 6.0) == vec![2, 3], "gap split");
    let alt: Vec<(f64, f64)> = (0..6).map(|i| if i % 2 == 0 { (0.0, 0.0) } else { (27.0, 27.0) }).collect();
    check(lens(&alt, 6.0) == vec![1; 6], "alternating corners");
    check(saccade_distances(&[(0.0, 0.0), (3.0, 4.0)]) == vec![5.0], "3-4-5");
    check(saccade_distances(&[(2.0, 2.0); 4]) == vec![0.0; 3], "stationary distances");
    let f = kde(&[1.5], 1.0, &[1.5]).unwrap()[0];
    check((f - 1.0 / (2.0 * std::f64::consts::PI).sqrt()).abs() < 1e-12, "kde closed form");
    let s = [0.5, 2.0, 2.5, 7.0];
    let grid = linspace(0.5 - 5.0 * 0.8, 7.0 + 5.0 * 0.8, 2001);
    let mass = trapezoid(&grid, &kde(&s, 0.8, &grid).unwrap());
    check((mass - 1.0).abs() < 1e-3, "kde mass");
    let d = kde(&[1.0, 3.0], 0.7, &[1.2, 2.8]).unwrap();
    check((d[0] - d[1]).abs() < 1e-15, "kde symmetry");
    let still = ScanPath {
        image_id: 0,
        label: Some(0),
        model_tag: "t".into(),
        points: vec![(4.0, 4.0); 10],
    };
    let r = analyze(&[still], &AnalyzeConfig::default()).unwrap();
    check(r.durations == vec![10] && r.distances == vec![0.0; 9], "stationary report");

    // Pooled aggregation against per-path recomputation.
    let mut rng = stream(9, Domain::Eval, 9, 9);
    let paths: Vec<ScanPath> = (0..100)
        .map(|i| ScanPath {
            image_id: i,
            label: Some((i % 3) as usize),
            model_tag: "synthetic".into(),
            points: (0..1 + i as usize % 12)
                .map(|_| (rng.random_range(0.0..27.0), rng.random_range(0.0..27.0)))
                .collect(),
        })
        .collect();
    let r = analyze(&paths, &AnalyzeConfig::default()).unwrap();
    let mut durations = Vec::new();
    let mut distances = Vec::new();
    for p in &paths {
        let mut run = 1;
        for w in p.points.windows(2) {
            let d = ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt();
            if d < 6.0 {
                run += 1;
            } else {
                durations.push(run);
                run = 1;
            }
        }
        durations.push(run);
        for w in p.points.windows(2) {
            distances.push(((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt());
        }
    }
    let close = r.distances.len() == distances.len() && r.distances.iter().zip(&distances).all(|(a, b)| (a - b).abs() < 1e-12);
    check(r.durations == durations && close, "aggregate recomputation");
    n
}

/// Checks Σ durations = T and T-1 saccades on every path of a log.
fn log_invariants(records: &[TraceRecord]) -> Result<usize, String> {
    for rec in records {
        let p = rec.scan_path();
        let t = p.points.len();
        let total: usize = lens(&p.points, 6.0).iter().sum();
        if total != t || saccade_distances(&p.points).len() + 1 != t {
            return Err(format!("image {}: durations sum {total}, T {t}", rec.image_id));
        }
    }
    Ok(records.len())
}

fn criterion_9() -> Verdict {
    let examples = scanpath_examples();
    let mut parts = vec![format!("{examples} fixed examples exact")];
    let mut pass = true;
    for cfg in mnist_runs() {
        let log = run::cached_run(&cfg).unwrap().map(|d| d.join("traces.jsonl"));
        match log.as_deref().map(read_jsonl) {
            Some(Ok(recs)) => match log_invariants(&recs) {
                Ok(n) => parts.push(format!("{} paths of {} hold", n, cfg.model_spec().unwrap().tag())),
                Err(e) => {
                    pass = false;
                    parts.push(e);
                }
            },
            Some(Err(e)) => {
                pass = false;
                parts.push(e.to_string());
            }
            None => {
                pass = false;
                parts.push(format!("no trace log for {}", cfg.model_spec().unwrap().tag()));
            }
        }
    }
    verdict(pass, parts.join("; "))
}

fn emergence(records: &[TraceRecord]) -> f64 {
    let mixed = records
        .iter()
        .filter(|r| {
            let p = r.scan_path();
            lens(&p.points, 6.0).iter().any(|&l| l >= 2) && saccade_distances(&p.points).iter().any(|&d| d > 8.0)
        })
        .count();
    mixed as f64 / records.len().max(1) as f64
}

fn criterion_10() -> Verdict {
    let mut parts = Vec::new();
    let mut mram_fraction = None;
    for (i, cfg) in fashion_runs().iter().enumerate() {
        let tag = cfg.model_spec().unwrap().tag();
        let Some(dir) = run::cached_run(cfg).unwrap() else {
            parts.push(format!("{tag}: no finished run"));
            continue;
        };
        let log = dir.join("traces.jsonl");
        let records = match read_jsonl(&log) {
            Ok(r) => r,
            Err(e) => {
                parts.push(format!("{tag}: {e}"));
                continue;
            }
        };
        let report = run::analyze(&log, &AnalyzeConfig::default(), false, &dir.join("analysis")).unwrap();
        let frac = emergence(&records);
        if i == 0 {
            mram_fraction = Some(frac);
        }
        let s = &report.summary;
        let mut line = String::new();
        let _ = write!(
            line,
            "{tag}: {:.1}% mixed, mean fixation {:.2}, mean saccade {:.2} px",
            100.0 * frac,
            s.mean_duration,
            s.mean_distance
        );
        parts.push(line);
    }
    verdict(mram_fraction.is_some_and(|f| f >= 0.5), format!("{} (informational)", parts.join("; ")))
}

type Criterion = (u32, bool, fn() -> Verdict);

#[test]
fn acceptance_report() {
    let strict = std::env::var_os("SACCADE_STRICT").is_some();
    // (number, fails the test when unmet, check)
    let criteria: [Criterion; 10] = [
        (1, true, criterion_1),
        (2, false, criterion_2),
        (3, false, criterion_3),
        (4, false, criterion_4),
        (5, true, criterion_5),
        (6, true, criterion_6),
        (7, true, criterion_7),
        (8, true, criterion_8),
        (9, false, criterion_9),
        (10, false, criterion_10),
    ];
    println!();
    let mut failed_gates = Vec::new();
    let mut passed = 0;
    for (n, gate, f) in criteria {
        let v = f();
        println!("criterion {n:>2}: {}  {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        passed += v.pass as usize;
        if !v.pass && (gate || strict) {
            failed_gates.push(n);
        }
    }
    println!("{passed}/10 criteria pass");
    assert!(failed_gates.is_empty(), "failed: {failed_gates:?}");
}

