//! Self-conditioned normalization: per-(sample, channel) standardization
//! followed by a purely multiplicative, spatially varying modulation whose
//! factor is computed from the LR input image.

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::imageops::{ConvSpec, DEFAULT_LEAKY_SLOPE};
use crate::params::{Binder, ParamStore, WeightInit, CONV_GAIN};
use crate::tensor::{Axes, Scalar};

/// Standardize `f` over its spatial dims with `eps` inside the root.
pub fn normalize<'t, T: Scalar>(f: Var<'t, T>, eps: f64) -> Result<Var<'t, T>> {
    let mu = f.mean(Axes::SPATIAL)?;
    let d = f.sub(mu)?;
    let var = d.square()?.mean(Axes::SPATIAL)?;
    d.mul(var.add_scalar(eps)?.rsqrt()?)
}

/// Register the two condition convs of block `name` (image -> width).
pub fn init_cond_branch<T: Scalar>(
    store: &mut ParamStore<T>,
    name: &str,
    width: usize,
    rng: &mut impl rand::Rng,
) -> Result<()> {
    store.add_conv(
        &format!("{name}.cond0"),
        ConvSpec::same(3, width, 3),
        CONV_GAIN,
        WeightInit::Normal,
        rng,
    );
    store.add_conv(
        &format!("{name}.cond1"),
        ConvSpec::same(width, width, 3),
        CONV_GAIN,
        WeightInit::Normal,
        rng,
    );
    // Start near unit modulation.
    store.fill_bias(&format!("{name}.cond1"), 1.0)
}

/// The modulation factor `gamma`, shape `(n, width, h, w)`.
pub fn cond_gamma<'t, T: Scalar>(
    b: &Binder<'t, T>,
    name: &str,
    cond_img: Var<'t, T>,
    width: usize,
) -> Result<Var<'t, T>> {
    let h = b
        .conv(
            &format!("{name}.cond0"),
            cond_img,
            ConvSpec::same(3, width, 3),
        )?
        .leaky_relu(DEFAULT_LEAKY_SLOPE)?;
    b.conv(&format!("{name}.cond1"), h, ConvSpec::same(width, width, 3))
}

/// `gamma * normalize(f)` with `gamma = cond_gamma(cond_img)`.
pub fn self_cond_norm<'t, T: Scalar>(
    b: &Binder<'t, T>,
    name: &str,
    f: Var<'t, T>,
    cond_img: Var<'t, T>,
    eps: f64,
) -> Result<Var<'t, T>> {
    let (fs, cs) = (f.shape(), cond_img.shape());
    if fs.hw() != cs.hw() || fs.n() != cs.n() {
        return Err(Error::ShapeMismatch {
            op: "self_cond_norm",
            lhs: fs,
            rhs: cs,
        });
    }
    let gamma = cond_gamma(b, name, cond_img, fs.c())?;
    modulate(normalize(f, eps)?, gamma)
}

/// Multiplicative modulation only; there is no additive shift.
pub fn modulate<'t, T: Scalar>(normalized: Var<'t, T>, gamma: Var<'t, T>) -> Result<Var<'t, T>> {
    normalized.mul(gamma)
}
