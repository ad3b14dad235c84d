//! Finite-difference checks for every differentiable op.
//!
//! Each case projects the op output onto a fixed random tensor `r` so the
//! scalar `sum(r * y)` exercises every output element.

use std::rc::Rc;

use flowsr_core::imageops::{self, ConvSpec, ResizeKind, SamplingKernelConfig};
use flowsr_core::srnet::normalize;
use flowsr_core::{Axes, Result, Shape, Tape, Tensor, Var};

use super::{fd_grad, max_rel_err, randn, randn_off_zero, rng, uniform};

pub const EPS: f64 = 1e-5;
/// Denominator floor of the relative error.
pub const FLOOR: f64 = 1e-2;
pub const TOL: f64 = 1e-4;
pub const TOL_SMOOTH: f64 = 1e-6;
pub const SEEDS: [u64; 5] = [11, 23, 37, 41, 59];

type Build = Box<dyn for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>>>;

pub struct Case {
    pub op: String,
    pub inputs: Vec<Tensor<f64>>,
    /// Checked at `TOL_SMOOTH` instead of `TOL`.
    pub smooth: bool,
    build: Build,
}

fn case(
    op: impl Into<String>,
    inputs: Vec<Tensor<f64>>,
    smooth: bool,
    build: impl for<'t> Fn(&'t Tape<f64>, &[Var<'t, f64>]) -> Result<Var<'t, f64>> + 'static,
) -> Case {
    Case {
        op: op.into(),
        inputs,
        smooth,
        build: Box::new(build),
    }
}

#[derive(Clone, Debug)]
pub struct Check {
    pub op: String,
    pub seed: u64,
    pub max_rel: f64,
    pub tol: f64,
}

impl Check {
    pub fn passed(&self) -> bool {
        self.max_rel.is_finite() && self.max_rel < self.tol
    }
}

fn s(n: usize, c: usize, h: usize, w: usize) -> Shape {
    Shape::new(n, c, h, w)
}

/// Flow values whose fractional part stays in [0.1, 0.9], so no sample
/// position lands on a grid line or the clamp boundary.
fn flow_off_grid(shape: Shape, seed: u64) -> Tensor<f64> {
    use rand::Rng;
    let mut r = rng(seed);
    Tensor::from_fn(shape, |_| {
        let k: i32 = r.random_range(-3..3);
        k as f64 + r.random_range(0.1..0.9)
    })
}

/// Values in [lo, hi] kept `margin` away from `avoid`.
fn uniform_avoiding(
    shape: Shape,
    lo: f64,
    hi: f64,
    avoid: f64,
    margin: f64,
    seed: u64,
) -> Tensor<f64> {
    let mut t = uniform(shape, lo, hi, &mut rng(seed));
    for v in t.data_mut() {
        if (*v - avoid).abs() < margin {
            *v = avoid + 2.0 * margin * (*v - avoid).signum();
        }
    }
    t
}

pub fn first_order_cases(seed: u64) -> Vec<Case> {
    let mut r = rng(seed);
    let base = s(2, 3, 4, 5);
    let x = randn(base, &mut r);
    let mut v = Vec::new();

    v.push(case(
        "add",
        vec![x.clone(), randn(base, &mut r)],
        true,
        |_, a| a[0].add(a[1]),
    ));
    v.push(case(
        "add_broadcast",
        vec![x.clone(), randn(s(1, 3, 1, 1), &mut r)],
        true,
        |_, a| a[0].add(a[1]),
    ));
    v.push(case(
        "sub_broadcast",
        vec![x.clone(), randn(s(2, 1, 4, 5), &mut r)],
        true,
        |_, a| a[0].sub(a[1]),
    ));
    v.push(case(
        "mul",
        vec![x.clone(), randn(base, &mut r)],
        true,
        |_, a| a[0].mul(a[1]),
    ));
    v.push(case(
        "mul_broadcast",
        vec![x.clone(), randn(s(1, 3, 1, 5), &mut r)],
        true,
        |_, a| a[1].mul(a[0]),
    ));
    v.push(case("square", vec![x.clone()], true, |_, a| a[0].square()));
    v.push(case("scale", vec![x.clone()], true, |_, a| {
        a[0].scale(-1.7)
    }));
    v.push(case("neg", vec![x.clone()], true, |_, a| a[0].neg()));
    v.push(case("add_scalar", vec![x.clone()], true, |_, a| {
        a[0].add_scalar(0.3)
    }));
    v.push(case("sum_axes", vec![x.clone()], true, |_, a| {
        a[0].sum(Axes::of(&[1, 3])?)
    }));
    v.push(case("mean_spatial", vec![x.clone()], true, |_, a| {
        a[0].mean(Axes::SPATIAL)
    }));
    v.push(case("mean_batch", vec![x.clone()], true, |_, a| {
        a[0].mean(Axes::of(&[0])?)
    }));
    v.push(case("sum_all", vec![x.clone()], true, |_, a| {
        a[0].sum_all()
    }));
    v.push(case("mean_all", vec![x.clone()], true, |_, a| {
        a[0].mean_all()
    }));
    v.push(case(
        "expand",
        vec![randn(s(1, 3, 1, 1), &mut r)],
        true,
        |_, a| a[0].expand(Shape::new(2, 3, 4, 5)),
    ));
    let mask = Rc::new(randn(base, &mut r));
    v.push(case("mul_const", vec![x.clone()], true, move |_, a| {
        a[0].mul_const(Rc::clone(&mask))
    }));
    let xk = randn_off_zero(base, 0.05, &mut r);
    v.push(case("leaky_relu", vec![xk.clone()], false, |_, a| {
        a[0].leaky_relu(0.2)
    }));
    v.push(case("relu", vec![xk.clone()], false, |_, a| a[0].relu()));
    v.push(case("abs", vec![xk], false, |_, a| a[0].abs()));
    v.push(case("tanh", vec![x.clone()], true, |_, a| a[0].tanh()));
    v.push(case("sigmoid", vec![x.scale_by(3.0)], true, |_, a| {
        a[0].sigmoid()
    }));
    v.push(case(
        "rsqrt",
        vec![uniform(base, 0.5, 2.0, &mut r)],
        true,
        |_, a| a[0].rsqrt(),
    ));
    v.push(case(
        "log_clamped",
        vec![uniform(base, 0.5, 2.0, &mut r)],
        true,
        |_, a| a[0].log_clamped(1e-8),
    ));
    v.push(case(
        "log_clamped_floor_active",
        vec![uniform_avoiding(base, 0.05, 1.0, 0.3, 0.02, seed ^ 0x51)],
        false,
        |_, a| a[0].log_clamped(0.3),
    ));
    v.push(case("forward_diff_h", vec![x.clone()], true, |_, a| {
        a[0].forward_diff(2)
    }));
    v.push(case("forward_diff_w", vec![x.clone()], true, |_, a| {
        a[0].forward_diff(3)
    }));

    for (name, spec, hw) in [
        ("conv_k3_s1", ConvSpec::same(3, 4, 3), (6, 5)),
        ("conv_k3_s2", ConvSpec::new(3, 4, 3, 2).unwrap(), (6, 6)),
        ("conv_k1_s1", ConvSpec::same(3, 4, 1), (4, 5)),
        ("conv_k3_s2_odd", ConvSpec::new(3, 2, 3, 2).unwrap(), (5, 7)),
    ] {
        let xi = randn(s(2, 3, hw.0, hw.1), &mut r);
        let w = randn(spec.weight_shape(), &mut r);
        let b = randn(spec.bias_shape(), &mut r);
        v.push(case(
            name,
            vec![xi.clone(), w.clone(), b],
            true,
            move |_, a| imageops::conv2d(a[0], a[1], Some(a[2]), spec),
        ));
        v.push(case(
            format!("{name}_nobias"),
            vec![xi, w],
            true,
            move |_, a| imageops::conv2d(a[0], a[1], None, spec),
        ));
    }

    for kind in [
        ResizeKind::Nearest,
        ResizeKind::Bilinear,
        ResizeKind::Bicubic,
    ] {
        for (dir, ins, out) in [
            ("up", s(2, 3, 4, 5), (8, 10)),
            ("down", s(1, 2, 8, 8), (4, 4)),
            ("uneven", s(1, 2, 5, 6), (7, 4)),
        ] {
            let xi = randn(ins, &mut r);
            v.push(case(
                format!("resize_{kind:?}_{dir}").to_lowercase(),
                vec![xi],
                true,
                move |_, a| imageops::resize(a[0], out, kind),
            ));
        }
    }

    let img = randn(s(2, 3, 5, 6), &mut r);
    let flow = flow_off_grid(s(2, 2, 5, 6), seed ^ 0xf10);
    v.push(case("grid_sample", vec![img, flow], false, |_, a| {
        imageops::grid_sample(a[0], a[1], SamplingKernelConfig::default())
    }));
    v.push(case("normalize", vec![x.clone()], true, |_, a| {
        normalize(a[0], 1e-5)
    }));
    v.push(case(
        "normalize_low_variance",
        vec![x.scale_by(0.01)],
        false,
        |_, a| normalize(a[0], 1e-5),
    ));
    v
}

trait ScaleBy {
    fn scale_by(&self, c: f64) -> Self;
}

impl ScaleBy for Tensor<f64> {
    fn scale_by(&self, c: f64) -> Self {
        self.map(|v| v * c)
    }
}

fn projection(shape: Shape, seed: u64) -> Rc<Tensor<f64>> {
    Rc::new(randn(shape, &mut rng(seed ^ 0x9e37_79b9)))
}

fn projected_value(build: &Build, inputs: &[Tensor<f64>], r: &Rc<Tensor<f64>>) -> f64 {
    let tape = Tape::new();
    let vars: Vec<_> = inputs
        .iter()
        .map(|t| tape.constant(t.clone()).unwrap())
        .collect();
    let y = build(&tape, &vars).unwrap();
    y.mul_const(Rc::clone(r)).unwrap().sum_all().unwrap().item()
}

pub fn check_first_order(c: &Case, seed: u64) -> Check {
    let tape = Tape::new();
    let vars: Vec<_> = c
        .inputs
        .iter()
        .map(|t| tape.param(t.clone()).unwrap())
        .collect();
    let y = (c.build)(&tape, &vars).unwrap();
    let r = projection(y.shape(), seed);
    let loss = y.mul_const(Rc::clone(&r)).unwrap().sum_all().unwrap();
    let grads = tape.grad(loss, &vars).unwrap();
    let f = |ins: &[Tensor<f64>]| projected_value(&c.build, ins, &r);
    let mut worst: f64 = 0.0;
    for (i, g) in grads.iter().enumerate() {
        let fd = fd_grad(&f, &c.inputs, i, EPS);
        worst = worst.max(max_rel_err(g, &fd, FLOOR));
    }
    Check {
        op: c.op.clone(),
        seed,
        max_rel: worst,
        tol: if c.smooth { TOL_SMOOTH } else { TOL },
    }
}

/// Second-order cases: ops that must stay differentiable inside a gradient.
pub fn second_order_cases(seed: u64) -> Vec<Case> {
    let mut r = rng(seed ^ 0x2);
    let base = s(1, 2, 4, 4);
    let x = randn(base, &mut r);
    let mut v = Vec::new();
    v.push(case(
        "mul",
        vec![x.clone(), randn(base, &mut r)],
        false,
        |_, a| a[0].mul(a[1]),
    ));
    v.push(case("square_chain", vec![x.clone()], false, |_, a| {
        a[0].square()?.scale(0.5)?.add_scalar(1.0)?.square()
    }));
    v.push(case(
        "sub_broadcast",
        vec![x.clone(), randn(s(1, 2, 1, 1), &mut r)],
        false,
        |_, a| a[0].sub(a[1])?.square(),
    ));
    v.push(case("reductions", vec![x.clone()], false, |_, a| {
        let m = a[0].mean(Axes::SPATIAL)?;
        let e = m.expand(Shape::new(1, 2, 4, 4))?;
        a[0].mul(e)?.sum(Axes::of(&[1])?)
    }));
    let mask = Rc::new(randn(base, &mut r));
    v.push(case("mul_const", vec![x.clone()], false, move |_, a| {
        a[0].mul_const(Rc::clone(&mask))?.square()
    }));
    v.push(case(
        "leaky_relu",
        vec![randn_off_zero(base, 0.05, &mut r), randn(base, &mut r)],
        false,
        |_, a| a[0].leaky_relu(0.2)?.mul(a[1]),
    ));
    for (name, spec, hw) in [
        ("conv_k3_s1", ConvSpec::same(2, 3, 3), (4, 4)),
        ("conv_k3_s2", ConvSpec::new(2, 3, 3, 2).unwrap(), (5, 5)),
        ("conv_k1_s1", ConvSpec::same(2, 3, 1), (3, 4)),
    ] {
        let xi = randn(s(2, 2, hw.0, hw.1), &mut r);
        let w = randn(spec.weight_shape(), &mut r);
        let b = randn(spec.bias_shape(), &mut r);
        v.push(case(name, vec![xi, w, b], false, move |_, a| {
            imageops::conv2d(a[0], a[1], Some(a[2]), spec)?.square()
        }));
    }
    v
}

/// `h = sum_i <r_i, d loss / d input_i>` via a differentiable gradient;
/// checks `grad h` against central differences of `h`.
pub fn check_second_order(c: &Case, seed: u64) -> Check {
    let h_value = |ins: &[Tensor<f64>]| -> (f64, Vec<Tensor<f64>>) {
        let tape = Tape::new();
        let vars: Vec<_> = ins.iter().map(|t| tape.param(t.clone()).unwrap()).collect();
        let y = (c.build)(&tape, &vars).unwrap();
        let r = projection(y.shape(), seed);
        let loss = y.mul_const(r).unwrap().sum_all().unwrap();
        let gs = tape.grad_graph(loss, &vars).unwrap();
        let mut h: Option<Var<'_, f64>> = None;
        for (i, g) in gs.iter().enumerate() {
            let ri = projection(g.shape(), seed.wrapping_add(101 + i as u64));
            let term = g.mul_const(ri).unwrap().sum_all().unwrap();
            h = Some(match h {
                None => term,
                Some(acc) => acc.add(term).unwrap(),
            });
        }
        let h = h.unwrap();
        let grads = tape.grad(h, &vars).unwrap();
        (h.item(), grads)
    };
    let (_, analytic) = h_value(&c.inputs);
    let f = |ins: &[Tensor<f64>]| h_value(ins).0;
    let mut worst: f64 = 0.0;
    for (i, g) in analytic.iter().enumerate() {
        let fd = fd_grad(&f, &c.inputs, i, EPS);
        worst = worst.max(max_rel_err(g, &fd, FLOOR));
    }
    Check {
        op: format!("second_order_{}", c.op),
        seed,
        max_rel: worst,
        tol: TOL,
    }
}

/// Every case at every seed, first and second order.
pub fn run_suite() -> Vec<Check> {
    let mut out = Vec::new();
    for &seed in &SEEDS {
        for c in first_order_cases(seed) {
            out.push(check_first_order(&c, seed));
        }
        for c in second_order_cases(seed) {
            out.push(check_second_order(&c, seed));
        }
    }
    out
}
