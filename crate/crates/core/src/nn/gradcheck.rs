//! Central finite-difference oracle used by the unit tests.

use super::Parameters;
use crate::tensor::Tensor;

pub const STEP: f64 = 1e-5;
pub const TOLERANCE: f64 = 1e-4;

/// Relative error with an absolute floor: central differences carry ~1e-10
/// of rounding/truncation noise, which swamps gradients near zero.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-5)
}

fn objective(out: &Tensor, probe: &Tensor) -> f64 {
    out.data().iter().zip(probe.data()).map(|(a, b)| a * b).sum()
}

/// Checks `analytic` against d/dx of `sum(f(model, x) * probe)`.
pub fn check_input_gradient<M>(
    model: &M,
    x: &Tensor,
    probe: &Tensor,
    analytic: &Tensor,
    f: impl Fn(&M, &Tensor) -> Tensor,
) {
    assert_eq!(analytic.shape(), x.shape());
    let mut x = x.clone();
    for i in 0..x.len() {
        let orig = x.data()[i];
        x.data_mut()[i] = orig + STEP;
        let up = objective(&f(model, &x), probe);
        x.data_mut()[i] = orig - STEP;
        let down = objective(&f(model, &x), probe);
        x.data_mut()[i] = orig;
        let numeric = (up - down) / (2.0 * STEP);
        let err = relative_error(analytic.data()[i], numeric);
        assert!(
            err < TOLERANCE,
            "input grad {i}: analytic {} numeric {numeric} (rel {err})",
            analytic.data()[i]
        );
    }
}

/// Checks every parameter gradient against finite differences.
pub fn check_parameter_gradients<M: Parameters>(
    model: &mut M,
    x: &Tensor,
    probe: &Tensor,
    analytic: &[Tensor],
    f: impl Fn(&M, &Tensor) -> Tensor,
) {
    let count = model.parameters().len();
    assert_eq!(count, analytic.len());
    for (p, grad) in analytic.iter().enumerate() {
        assert_eq!(model.parameters()[p].shape(), grad.shape(), "param {p}");
        for i in 0..grad.len() {
            let orig = model.parameters()[p].data()[i];
            model.parameters_mut()[p].data_mut()[i] = orig + STEP;
            let up = objective(&f(model, x), probe);
            model.parameters_mut()[p].data_mut()[i] = orig - STEP;
            let down = objective(&f(model, x), probe);
            model.parameters_mut()[p].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * STEP);
            let err = relative_error(grad.data()[i], numeric);
            assert!(
                err < TOLERANCE,
                "param {p}[{i}]: analytic {} numeric {numeric} (rel {err})",
                grad.data()[i]
            );
        }
    }
}
