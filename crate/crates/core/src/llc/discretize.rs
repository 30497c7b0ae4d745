use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::statespace::StateSpace;

/// Zero-order-hold discretization `x⁺ = A_d x + B_d u`, `y = C x + D u`.
#[derive(Clone, Debug, PartialEq)]
pub struct DiscreteModel {
    pub a_d: DMatrix<f64>,
    pub b_d: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub d: DMatrix<f64>,
    pub dt: f64,
}

/// Exact ZOH through the exponential of `[[A, B], [0, 0]]·dt`.
pub fn discretize<S: StateSpace + ?Sized>(model: &S, dt: f64) -> Result<DiscreteModel> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidParam(format!("dt must be > 0, got {dt}")));
    }
    let (a, b) = (model.a(), model.b());
    let (n, m) = (a.nrows(), b.ncols());
    let mut aug = DMatrix::zeros(n + m, n + m);
    aug.view_mut((0, 0), (n, n)).copy_from(&(a * dt));
    aug.view_mut((0, n), (n, m)).copy_from(&(b * dt));
    let e = aug.exp();
    Ok(DiscreteModel {
        a_d: e.view((0, 0), (n, n)).into_owned(),
        b_d: e.view((0, n), (n, m)).into_owned(),
        c: model.c().clone(),
        d: model.d().clone(),
        dt,
    })
}
