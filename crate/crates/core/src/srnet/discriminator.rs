//! HR discriminator, grown in mirror image of the generator: each level
//! adds a 3x3 conv and a stride-2 conv in front of a fixed base block, and
//! the input enters through a 1x1 `from_rgb` of the newest level.

use crate::autodiff::Var;
use crate::error::Result;
use crate::imageops::{ConvSpec, DEFAULT_LEAKY_SLOPE};
use crate::params::{rng_for, Binder, ParamStore, WeightInit, CONV_GAIN, HEAD_GAIN};
use crate::tensor::{Axes, Scalar};

use super::SrNetConfig;

fn level_specs(cfg: &SrNetConfig, level: u32) -> [(String, ConvSpec, f64); 3] {
    let w = cfg.width(level);
    [
        (
            format!("d.l{level}.from_rgb"),
            ConvSpec::same(3, w, 1),
            CONV_GAIN,
        ),
        (
            format!("d.l{level}.conv"),
            ConvSpec::same(w, w, 3),
            CONV_GAIN,
        ),
        (
            format!("d.l{level}.down"),
            ConvSpec::down(w, cfg.width(level - 1)),
            CONV_GAIN,
        ),
    ]
}

fn base_specs(cfg: &SrNetConfig) -> [(&'static str, ConvSpec, f64); 2] {
    let w = cfg.base_width;
    [
        ("d.base.conv", ConvSpec::same(w, w, 3), CONV_GAIN),
        ("d.base.out", ConvSpec::same(w, 1, 1), HEAD_GAIN),
    ]
}

pub(crate) fn init_base<T: Scalar>(store: &mut ParamStore<T>, cfg: &SrNetConfig, seed: u64) {
    let mut rng = rng_for(seed, "sr.d.base");
    for (name, spec, gain) in base_specs(cfg) {
        store.add_conv(name, spec, gain, WeightInit::Normal, &mut rng);
    }
}

pub(crate) fn add_level<T: Scalar>(
    store: &mut ParamStore<T>,
    cfg: &SrNetConfig,
    level: u32,
    seed: u64,
) {
    let mut rng = rng_for(seed, &format!("sr.d.level{level}"));
    for (name, spec, gain) in level_specs(cfg, level) {
        store.add_conv(&name, spec, gain, WeightInit::Normal, &mut rng);
    }
}

/// Raw scores `(n, 1, 1, 1)` for images at the resolution of `levels`.
pub fn discriminate<'t, T: Scalar>(
    b: &Binder<'t, T>,
    cfg: &SrNetConfig,
    levels: u32,
    x: Var<'t, T>,
) -> Result<Var<'t, T>> {
    let act = |v: Var<'t, T>| v.leaky_relu(DEFAULT_LEAKY_SLOPE);
    let [from_rgb, ..] = level_specs(cfg, levels);
    let mut h = act(b.conv(&from_rgb.0, x, from_rgb.1)?)?;
    for level in (1..=levels).rev() {
        let [_, conv, down] = level_specs(cfg, level);
        h = act(b.conv(&conv.0, h, conv.1)?)?;
        h = act(b.conv(&down.0, h, down.1)?)?;
    }
    let [conv, out] = base_specs(cfg);
    h = act(b.conv(conv.0, h, conv.1)?)?;
    b.conv(out.0, h, out.1)?.mean(Axes::SPATIAL)
}
