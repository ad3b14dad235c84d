use std::collections::BTreeSet;
use std::time::Instant;

use flowsr_core::data::procedural::degrade_for_corpus;
use flowsr_core::data::{procedural_face, write_corpus, CorpusSpec, DatasetIndex, ImageRecord};
use flowsr_core::degradation::{self as dg, FlowField};
use flowsr_core::imageops::warp::grid_sample_forward;
use flowsr_core::imageops::{self, resize_tensor, ConvSpec, ResizeKind, SamplingKernelConfig};
use flowsr_core::metrics::{psnr_from_mse, psnr_y, ssim_y};
use flowsr_core::pipeline::{self, RunConfig};
use flowsr_core::srnet::block::init_cond_branch;
use flowsr_core::srnet::{hinge_d_loss, normalize, r1_penalty, self_cond_norm, stage2_total};
use flowsr_core::trainer::{SrArch, Stage, Stage1Trainer, Stage2Trainer, TrainConfig};
use flowsr_core::{Axes, Binder, LossWeights, ParamStore, Shape, Tape, Tensor};

use crate::common::oracles::grid_sample_double_sum;
use crate::common::{fd_grad, gradsuite, max_abs_diff, max_rel_err, randn, rel_err, rng, uniform};
use crate::Outcome;

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn faces(n: usize, size: usize, seed0: u64) -> Vec<ImageRecord> {
    (0..n)
        .map(|i| {
            ImageRecord::new(
                format!("face_{i:03}"),
                procedural_face(size, seed0 + i as u64),
            )
        })
        .collect()
}

pub fn gradient_suite() -> Outcome {
    let start = Instant::now();
    let checks = gradsuite::run_suite();
    let secs = start.elapsed().as_secs_f64();
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.passed())
        .map(|c| format!("{}@{} ({:.2e})", c.op, c.seed, c.max_rel))
        .collect();
    let worst = checks.iter().map(|c| c.max_rel).fold(0.0, f64::max);
    let ops: BTreeSet<&str> = checks.iter().map(|c| c.op.as_str()).collect();
    let seeds: BTreeSet<u64> = checks.iter().map(|c| c.seed).collect();
    let pass = failed.is_empty() && secs < 120.0 && seeds.len() >= 5;
    Outcome::new(
        pass,
        format!(
            "{} checks over {} cases x {} seeds, eps {:.0e}, worst rel err {worst:.2e} (limit {:.0e}), {secs:.2}s{}",
            checks.len(),
            ops.len(),
            seeds.len(),
            gradsuite::EPS,
            gradsuite::TOL,
            if failed.is_empty() {
                String::new()
            } else {
                format!("; failed: {}", failed.join(", "))
            }
        ),
    )
}

pub fn warp_oracle() -> Outcome {
    use rand::Rng;
    let mut r = rng(4096);
    let mut worst: f64 = 0.0;
    for _ in 0..50 {
        let (h, w) = (r.random_range(1..12), r.random_range(1..12));
        let n = r.random_range(1..3);
        let span = r.random_range(0.1..6.0);
        let img = randn(Shape::new(n, 3, h, w), &mut r);
        let flow = uniform(Shape::new(n, 2, h, w), -span, span, &mut r);
        let fast = grid_sample_forward(&img, &flow, &SamplingKernelConfig::default()).unwrap();
        worst = worst.max(max_abs_diff(&fast, &grid_sample_double_sum(&img, &flow)));
    }
    let img = randn(Shape::new(2, 3, 9, 13), &mut r);
    let ident = grid_sample_forward(
        &img,
        &Tensor::zeros(Shape::new(2, 2, 9, 13)),
        &SamplingKernelConfig::default(),
    )
    .unwrap();
    let exact = ident.data() == img.data();
    Outcome::new(
        worst <= 1e-6 && exact,
        format!("50 cases, max |fast - double sum| = {worst:.2e}; identity flow exact: {exact}"),
    )
}

pub fn normalization_invariant() -> Outcome {
    let (n, c, h, w) = (2, 8, 16, 16);
    let f = randn(Shape::new(n, c, h, w), &mut rng(31));
    let cond = uniform(Shape::new(n, 3, h, w), -1.0, 1.0, &mut rng(32));
    let tape = Tape::<f64>::new();
    let fv = tape.constant(f).unwrap();
    let y = normalize(fv, 1e-5).unwrap().to_tensor();
    let hw = (h * w) as f64;
    let (mut worst_mean, mut worst_std): (f64, f64) = (0.0, 0.0);
    for i in 0..n {
        for ch in 0..c {
            let vals: Vec<f64> = (0..h * w).map(|p| y.at([i, ch, p / w, p % w])).collect();
            let m = vals.iter().sum::<f64>() / hw;
            let sd = (vals.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / hw).sqrt();
            worst_mean = worst_mean.max(m.abs());
            worst_std = worst_std.max((sd - 1.0).abs());
        }
    }
    // gamma = 1 everywhere: zero weights and unit bias on the last condition conv
    let mut store = ParamStore::<f64>::new();
    init_cond_branch(&mut store, "blk", c, &mut rng(33)).unwrap();
    let p = store.get_mut("blk.cond1.w").unwrap();
    p.value = Tensor::zeros(p.value.shape());
    let b = Binder::frozen(&tape, &store);
    let cv = tape.constant(cond).unwrap();
    let modulated = self_cond_norm(&b, "blk", fv, cv, 1e-5).unwrap().to_tensor();
    let pure = modulated.data() == y.data();
    Outcome::new(
        worst_mean <= 1e-5 && worst_std <= 1e-4 && pure,
        format!(
            "{} (n,c) planes: max |mean| {worst_mean:.2e}, max |std - 1| {worst_std:.2e}; gamma=1 gives pure normalization: {pure}",
            n * c
        ),
    )
}

pub fn loss_closed_forms() -> Outcome {
    let tape = Tape::<f64>::new();
    let col = |v: &[f64]| {
        tape.constant(Tensor::new(Shape::new(v.len(), 1, 1, 1), v.to_vec()).unwrap())
            .unwrap()
    };
    let mut notes = Vec::new();
    let mut ok = true;
    let check = |name: &str, got: f64, want: f64, tol: f64| {
        let good = (got - want).abs() <= tol;
        (
            good,
            format!("{name}={got}{}", if good { "" } else { " (wrong)" }),
        )
    };
    let mut record = |(good, note): (bool, String)| {
        ok &= good;
        notes.push(note);
    };

    record(check(
        "hinge@0",
        hinge_d_loss(col(&[0.0; 4]), col(&[0.0; 4])).unwrap().item(),
        2.0,
        0.0,
    ));
    let sat = hinge_d_loss(col(&[1.0, 1.5, 3.0]), col(&[-1.0, -2.0, -5.0]))
        .unwrap()
        .item();
    record(check("hinge@margin", sat, 0.0, 0.0));
    let two_ln2 = 2.0 * std::f64::consts::LN_2;
    let v = dg::vanilla_d_loss_from_probs(col(&[0.5; 3]), col(&[0.5; 3]))
        .unwrap()
        .item();
    record(check("vanilla@0.5", v, two_ln2, 1e-15));
    let v_raw = dg::vanilla_d_loss(col(&[0.0; 3]), col(&[0.0; 3]))
        .unwrap()
        .item();
    record(check("vanilla@logit0", v_raw, two_ln2, 1e-15));

    let flat = FlowField {
        offsets: tape
            .constant(Tensor::full(Shape::new(2, 2, 5, 5), 0.7))
            .unwrap(),
        max_disp: 2.0,
    };
    record(check(
        "tv@const",
        dg::loss_smooth(&flat).unwrap().item(),
        0.0,
        0.0,
    ));
    // dx channel [[0, 1], [2, 4]], dy channel zero:
    // width diffs {1, 2, 0, 0} -> 3/4, height diffs {2, 3, 0, 0} -> 5/4
    let hand = FlowField {
        offsets: tape
            .constant(
                Tensor::new(
                    Shape::new(1, 2, 2, 2),
                    vec![0.0, 1.0, 2.0, 4.0, 0.0, 0.0, 0.0, 0.0],
                )
                .unwrap(),
            )
            .unwrap(),
        max_disp: 2.0,
    };
    record(check(
        "tv@2x2",
        dg::loss_smooth(&hand).unwrap().item(),
        2.0,
        1e-15,
    ));

    let w = LossWeights::default();
    let want = LossWeights {
        idt: 10.0,
        smooth: 1.0,
        rec: 150.0,
        r1: 3.0,
        r1_gamma: 10.0,
    };
    let presets = [
        TrainConfig::full_degrade(),
        TrainConfig::full_paired_x8(),
        TrainConfig::full_unpaired_x8(),
        TrainConfig::full_real_x4(),
    ];
    let weights_ok = w == want && presets.iter().all(|p| p.weights == want);
    record((
        weights_ok,
        format!(
            "weights idt={} smooth={} rec={} r1={} r={}{}",
            w.idt,
            w.smooth,
            w.rec,
            w.r1,
            w.r1_gamma,
            if weights_ok { "" } else { " (wrong)" }
        ),
    ));
    let s1 = dg::stage1_total(col(&[0.3]), col(&[0.2]), col(&[0.1]), &w)
        .unwrap()
        .item();
    record(check("stage1_total", s1, 0.3 + 10.0 * 0.2 + 0.1, 1e-12));
    let s2 = stage2_total(col(&[0.5]), Some(col(&[0.01])), Some(col(&[0.2])), &w)
        .unwrap()
        .item();
    record(check(
        "stage2_total",
        s2,
        0.5 + 150.0 * 0.01 + 3.0 * 0.2,
        1e-12,
    ));
    Outcome::new(ok, notes.join(", "))
}

/// Toy D: 3x3 conv (1 -> 3), leaky ReLU, 1x1 conv (3 -> 1), spatial mean.
fn toy_d<'t>(
    x: flowsr_core::Var<'t, f64>,
    p: &[flowsr_core::Var<'t, f64>],
) -> flowsr_core::Result<flowsr_core::Var<'t, f64>> {
    let h = imageops::conv2d(x, p[0], Some(p[1]), ConvSpec::same(1, 3, 3))?.leaky_relu(0.2)?;
    imageops::conv2d(h, p[2], Some(p[3]), ConvSpec::same(3, 1, 1))?.mean(Axes::SPATIAL)
}

fn toy_scores(theta: &[Tensor<f64>], x: &Tensor<f64>) -> f64 {
    let tape = Tape::new();
    let p: Vec<_> = theta
        .iter()
        .map(|t| tape.constant(t.clone()).unwrap())
        .collect();
    toy_d(tape.constant(x.clone()).unwrap(), &p)
        .unwrap()
        .sum_all()
        .unwrap()
        .item()
}

pub fn r1_double_backprop() -> Outcome {
    let gamma = LossWeights::default().r1_gamma;

    // Linear critic D(x) = <w, x>: penalty (r/2)|w|^2, gradient r w.
    let mut r = rng(55);
    let wt = randn(Shape::new(1, 3, 4, 4), &mut r);
    let real = randn(Shape::new(5, 3, 4, 4), &mut r);
    let tape = Tape::<f64>::new();
    let w = tape.param(wt.clone()).unwrap();
    let (pen, _) = r1_penalty(&tape, &real, gamma, |x| {
        x.mul(w)?.sum(Axes::of(&[1, 2, 3])?)
    })
    .unwrap();
    let norm2: f64 = wt.data().iter().map(|v| v * v).sum();
    let pen_err = rel_err(pen.item(), gamma / 2.0 * norm2, 1e-12);
    let g = tape.grad(pen, &[w]).unwrap().remove(0);
    let want = wt.map(|v| gamma * v);
    let grad_err = max_rel_err(&g, &want, 1e-12);

    // Two-layer critic against double finite differences.
    let mut r = rng(56);
    let x = randn(Shape::new(2, 1, 5, 5), &mut r);
    let theta = vec![
        randn(Shape::new(3, 1, 3, 3), &mut r),
        randn(Shape::new(1, 3, 1, 1), &mut r),
        randn(Shape::new(1, 3, 1, 1), &mut r),
        randn(Shape::new(1, 1, 1, 1), &mut r),
    ];
    let margin = {
        let t = Tape::new();
        let z = imageops::conv2d(
            t.constant(x.clone()).unwrap(),
            t.constant(theta[0].clone()).unwrap(),
            Some(t.constant(theta[1].clone()).unwrap()),
            ConvSpec::same(1, 3, 3),
        )
        .unwrap()
        .to_tensor();
        z.data()
            .iter()
            .map(|v| v.abs())
            .fold(f64::INFINITY, f64::min)
    };
    let tape = Tape::<f64>::new();
    let p: Vec<_> = theta
        .iter()
        .map(|t| tape.param(t.clone()).unwrap())
        .collect();
    let (pen2, _) = r1_penalty(&tape, &x, gamma, |xv| toy_d(xv, &p)).unwrap();
    let analytic = tape.grad(pen2, &p).unwrap();
    let n = x.shape().n() as f64;
    let pen_fd = |th: &[Tensor<f64>]| -> f64 {
        let f = |xs: &[Tensor<f64>]| toy_scores(th, &xs[0]);
        let gx = fd_grad(&f, std::slice::from_ref(&x), 0, 1e-4);
        gamma / 2.0 / n * gx.data().iter().map(|v| v * v).sum::<f64>()
    };
    let value_err = rel_err(pen2.item(), pen_fd(&theta), 1e-2);
    let mut toy_err: f64 = 0.0;
    for (i, a) in analytic.iter().enumerate() {
        let fd = fd_grad(&pen_fd, &theta, i, 1e-4);
        toy_err = toy_err.max(max_rel_err(a, &fd, 1e-2));
    }
    // No single finite-difference step may push a pre-activation across the kink.
    let step = 1e-4 * theta[0].max_abs().max(x.max_abs()).max(1.0);
    let pass =
        pen_err < 1e-6 && grad_err < 1e-6 && toy_err < 1e-3 && value_err < 1e-3 && margin > step;
    Outcome::new(
        pass,
        format!(
            "linear D (r={gamma}): penalty rel err {pen_err:.2e}, grad rel err {grad_err:.2e}; \
             2-layer D vs double FD: penalty {value_err:.2e}, grads {toy_err:.2e} (pre-activation margin {margin:.3} > largest step {step:.1e})"
        ),
    )
}

struct SrRun {
    rec: Vec<f64>,
    all: Vec<Vec<(&'static str, f64)>>,
    ckpt: Vec<u8>,
    secs: f64,
}

fn run_sr(cfg: &TrainConfig, index: &DatasetIndex) -> flowsr_core::Result<SrRun> {
    let start = Instant::now();
    let mut t = Stage2Trainer::new(cfg.clone(), index.clone())?;
    let (mut rec, mut all) = (Vec::new(), Vec::new());
    while !t.done() {
        let l = t.step()?;
        rec.push(l.get("rec").unwrap_or(f64::NAN));
        all.push(l.values.into_iter().collect());
    }
    Ok(SrRun {
        rec,
        all,
        ckpt: t.checkpoint().to_bytes(),
        secs: start.elapsed().as_secs_f64(),
    })
}

pub fn sr_smoke_train() -> Outcome {
    let index = DatasetIndex::paired_synthetic(faces(16, 64, 0), 2).unwrap();
    let cfg = TrainConfig::desk_sr_x2();
    let a = match run_sr(&cfg, &index) {
        Ok(r) => r,
        Err(e) => return Outcome::new(false, format!("training failed: {e}")),
    };
    let b = match run_sr(&cfg, &index) {
        Ok(r) => r,
        Err(e) => return Outcome::new(false, format!("rerun failed: {e}")),
    };
    let finite = a.rec.iter().all(|v| v.is_finite());
    let first = mean(&a.rec[..50]);
    let last = mean(&a.rec[a.rec.len() - 50..]);
    let ratio = last / first;
    let identical = a.all == b.all && a.ckpt == b.ckpt;
    Outcome::new(
        finite && ratio <= 0.6 && identical && a.secs < 600.0 && a.rec.len() == 300,
        format!(
            "x2, 16 faces 32->64, batch {}, {} iters in {:.1}s: rec first-50 mean {first:.4}, last-50 mean {last:.4}, \
             ratio {ratio:.3} (limit 0.6); finite: {finite}; rerun bit-identical: {identical}",
            cfg.batch,
            a.rec.len(),
            a.secs
        ),
    )
}

pub fn degrade_smoke_train() -> Outcome {
    let hr = faces(16, 64, 0);
    let lr: Vec<ImageRecord> = (0..16u64)
        .map(|i| {
            let img = degrade_for_corpus(&procedural_face(64, 1000 + i), 4, 0.03, i).unwrap();
            ImageRecord::new(format!("real_{i:03}"), img)
        })
        .collect();
    let probe =
        Tensor::stack(&hr[..4].iter().map(|r| r.pixels.clone()).collect::<Vec<_>>()).unwrap();
    let clean = resize_tensor(&probe, (16, 16), ResizeKind::Bicubic).unwrap();
    let index = DatasetIndex::unpaired(hr, lr).unwrap();
    let cfg = TrainConfig::desk_degrade();
    let max_disp = cfg.degrade_net.max_disp;
    let start = Instant::now();
    let mut t = match Stage1Trainer::new(cfg, index) {
        Ok(t) => t,
        Err(e) => return Outcome::new(false, format!("setup failed: {e}")),
    };
    let snap = t.degrade(&clean).unwrap();
    let zero_init = snap.degraded.data() == snap.intermediate.data();
    let (mut idt, mut flow_max) = (Vec::new(), 0.0f64);
    while !t.done() {
        match t.step() {
            Ok(l) => {
                idt.push(l.get("idt").unwrap());
                flow_max = flow_max.max(l.get("flow_max").unwrap());
            }
            Err(e) => return Outcome::new(false, format!("training failed: {e}")),
        }
    }
    let windows: Vec<f64> = idt.chunks(50).map(mean).collect();
    let monotone = windows.windows(2).all(|p| p[1] < p[0]);
    let shown: Vec<String> = windows.iter().map(|v| format!("{v:.4}")).collect();
    Outcome::new(
        monotone && flow_max <= max_disp && zero_init && idt.len() == 300,
        format!(
            "{} iters in {:.1}s: identity window means [{}] decreasing: {monotone}; max |flow| {flow_max:.3} <= {max_disp}; \
             zero-init degraded == intermediate: {zero_init}",
            idt.len(),
            start.elapsed().as_secs_f64(),
            shown.join(", ")
        ),
    )
}

pub fn progressive_growth() -> Outcome {
    let index = DatasetIndex::paired_synthetic(faces(16, 64, 0), 4).unwrap();
    let grow_at = 20;
    let cfg = TrainConfig {
        scale_factor: 4,
        grow_steps: vec![grow_at],
        total_iters: 130,
        sr_net: SrArch {
            base_width: 8,
            ..SrArch::default()
        },
        ..TrainConfig::desk_sr_x2()
    };
    let probe = index.lr[0].pixels.clone();
    let mut t = match Stage2Trainer::new(cfg, index) {
        Ok(t) => t,
        Err(e) => return Outcome::new(false, format!("setup failed: {e}")),
    };
    while t.iter < grow_at {
        if let Err(e) = t.step() {
            return Outcome::new(false, format!("pre-grow training failed: {e}"));
        }
    }
    let before_params = t.params.clone();
    let before = t.superresolve(&probe).unwrap().shape().hw();
    let grown = t.maybe_grow().unwrap();
    let after = t.superresolve(&probe).unwrap().shape().hw();
    let unchanged = before_params.iter().all(|(name, p)| {
        t.params
            .get(name)
            .is_ok_and(|q| q.value.data() == p.value.data() && q.scale == p.scale)
    });
    let added = t.params.len() - before_params.len();
    let doubled = after == (before.0 * 2, before.1 * 2);
    let mut post = 0;
    while !t.done() {
        match t.step() {
            Ok(_) => post += 1,
            Err(e) => {
                return Outcome::new(
                    false,
                    format!("post-grow training failed after {post} iters: {e}"),
                )
            }
        }
    }
    Outcome::new(
        grown == 1 && doubled && unchanged && added > 0 && post >= 100,
        format!(
            "grow at iter {grow_at}: output {}x{} -> {}x{}; {} existing params bit-unchanged: {unchanged}; \
             {added} params added; {post} finite iterations after growth",
            before.0,
            before.1,
            after.0,
            after.1,
            before_params.len()
        ),
    )
}

pub fn metric_oracles() -> Outcome {
    let mut r = rng(90);
    let x = uniform(Shape::new(1, 3, 24, 24), 0.0, 1.0, &mut r);
    let y = uniform(Shape::new(1, 3, 24, 24), 0.0, 1.0, &mut r);
    let ssim_self = ssim_y(&x, &x).unwrap();
    let psnr_self = psnr_y(&x, &x).unwrap();
    // a uniform RGB offset d moves luma by d * 219 / 255
    let base = Tensor::full(Shape::new(1, 3, 16, 16), 0.4f64);
    let d = 1e-3f64.sqrt() * 255.0 / 219.0;
    let shifted = base.map(|v| v + d);
    let p30 = psnr_y(&base, &shifted).unwrap();
    let p30_direct = psnr_from_mse(1e-3);
    let sym_psnr = (psnr_y(&x, &y).unwrap() - psnr_y(&y, &x).unwrap()).abs();
    let sym_ssim = (ssim_y(&x, &y).unwrap() - ssim_y(&y, &x).unwrap()).abs();
    let pass = ssim_self == 1.0
        && psnr_self == f64::INFINITY
        && (p30 - 30.0).abs() <= 1e-9
        && (p30_direct - 30.0).abs() <= 1e-9
        && sym_psnr <= 1e-12
        && sym_ssim <= 1e-12;
    Outcome::new(
        pass,
        format!(
            "SSIM(x,x)={ssim_self}, PSNR(x,x)={psnr_self}; PSNR at Y-MSE 1e-3 = {p30:.12} dB \
             (|err| {:.1e}); asymmetry psnr {sym_psnr:.1e}, ssim {sym_ssim:.1e}",
            (p30 - 30.0).abs()
        ),
    )
}

pub fn end_to_end_pipeline() -> Outcome {
    match run_pipeline() {
        Ok(o) => o,
        Err(e) => Outcome::new(false, format!("pipeline error: {e}")),
    }
}

fn run_pipeline() -> flowsr_core::Result<Outcome> {
    let tmp = tempfile::tempdir()?;
    let root = tmp.path().join("corpus");
    write_corpus(&root, &CorpusSpec::default())?;
    let degrade = RunConfig {
        corpus: root.clone(),
        lr_dir: None,
        output_dir: tmp.path().join("degrade"),
        pairing: None,
        train: TrainConfig {
            total_iters: 40,
            checkpoint_every: 20,
            ..TrainConfig::desk_degrade()
        },
    };
    let d = pipeline::train(&degrade, &[Stage::Degrade])?;
    let pseudo = tmp.path().join("pseudo_lr");
    let n_deg = pipeline::degrade_dir(&d.checkpoint, &root.join("hr"), &pseudo, Some(4), None)?;
    let sr = RunConfig {
        corpus: root.clone(),
        lr_dir: Some(pseudo.clone()),
        output_dir: tmp.path().join("sr"),
        pairing: None,
        train: TrainConfig {
            scale_factor: 4,
            grow_steps: vec![20],
            total_iters: 40,
            sr_net: SrArch {
                base_width: 8,
                ..SrArch::default()
            },
            ..TrainConfig::desk_sr_x2()
        },
    };
    let s = pipeline::train(&sr, &[Stage::Sr, Stage::SrUnpaired])?;
    let out = tmp.path().join("sr_out");
    let n_sr = pipeline::superres_dir(&s.checkpoint, &pseudo, &out, Some(4))?;
    let sample = flowsr_core::data::read_png(&out.join("face_000.png"), "face_000")?;
    let report_dir = tmp.path().join("report");
    let report = pipeline::eval(&out, &root.join("hr"), &report_dir, 0)?;
    let tsv = std::fs::read_to_string(report_dir.join("report.tsv"))?;
    let json: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(report_dir.join("report.json"))?)
            .map_err(|e| flowsr_core::Error::Data(e.to_string()))?;
    let well_formed = report.count == 16
        && report.mean_psnr_db.is_finite()
        && tsv.lines().count() == 18
        && tsv.starts_with("id\tpsnr_db\tssim\n")
        && json["per_image"].as_array().is_some_and(|a| a.len() == 16);
    let selfrep = pipeline::eval(
        &root.join("hr"),
        &root.join("hr"),
        &tmp.path().join("self"),
        0,
    )?;
    let self_ok =
        selfrep.mean_ssim == 1.0 && selfrep.per_image.iter().all(|s| s.psnr_db.is_infinite());
    let ckpts = std::fs::read_dir(degrade.checkpoint_dir())?.count();
    Ok(Outcome::new(
        well_formed && self_ok && n_deg == 16 && n_sr == 16 && sample.dims() == (64, 64) && ckpts >= 2,
        format!(
            "degrade {} iters ({ckpts} checkpoints) -> {n_deg} pseudo LR; sr {} iters -> {n_sr} images at {}x{}; \
             report: {} rows, mean PSNR {:.2} dB, SSIM {:.4}; ground truth vs itself: SSIM {}, PSNR inf: {}",
            d.iterations,
            s.iterations,
            sample.dims().0,
            sample.dims().1,
            report.count,
            report.mean_psnr_db,
            report.mean_ssim,
            selfrep.mean_ssim,
            selfrep.per_image.iter().all(|s| s.psnr_db.is_infinite())
        ),
    ))
}
