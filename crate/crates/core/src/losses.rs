//! Loss weights and the shared L1 term.

use serde::{Deserialize, Serialize};

use crate::autodiff::Var;
use crate::error::{Error, Result};
use crate::tensor::Scalar;

/// Trade-off weights for both stages.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    /// Identity term of the degradation stage.
    pub idt: f64,
    /// Flow smoothness term of the degradation stage.
    pub smooth: f64,
    /// Reconstruction term of the SR stage.
    pub rec: f64,
    /// Weight on the R1 penalty in the SR stage.
    pub r1: f64,
    /// R1 coefficient `r` inside the penalty `(r/2) E||grad D||^2`.
    pub r1_gamma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            idt: 10.0,
            smooth: 1.0,
            rec: 150.0,
            r1: 3.0,
            r1_gamma: 10.0,
        }
    }
}

/// Mean absolute difference of two same-shaped tensors.
pub fn l1<'t, T: Scalar>(a: Var<'t, T>, b: Var<'t, T>) -> Result<Var<'t, T>> {
    let (sa, sb) = (a.shape(), b.shape());
    if sa != sb {
        return Err(Error::ShapeMismatch {
            op: "l1",
            lhs: sa,
            rhs: sb,
        });
    }
    a.sub(b)?.abs()?.mean_all()
}
