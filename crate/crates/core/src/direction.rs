//! Normalization of filtration direction vectors and its Jacobian.

use ndarray::Array2;

use crate::error::{EmphError, Result};

fn norm(a: &[f64]) -> f64 {
    a.iter().map(|v| v * v).sum::<f64>().sqrt()
}

/// `ρ(a) = a / ‖a‖`.
pub fn rho(a: &[f64]) -> Result<Vec<f64>> {
    let n = norm(a);
    if !(n > 0.0 && n.is_finite()) {
        return Err(EmphError::domain(format!(
            "direction vector {a:?} has no defined normalization"
        )));
    }
    Ok(a.iter().map(|v| v / n).collect())
}

/// `∂ρ/∂a = I/‖a‖ − a aᵀ/‖a‖³`; symmetric, with `a` in its null space.
pub fn rho_jacobian(a: &[f64]) -> Result<Array2<f64>> {
    let n = norm(a);
    if !(n > 0.0 && n.is_finite()) {
        return Err(EmphError::domain(format!(
            "direction vector {a:?} has no defined normalization"
        )));
    }
    let dim = a.len();
    let n3 = n * n * n;
    Ok(Array2::from_shape_fn((dim, dim), |(i, j)| {
        let diag = if i == j { 1.0 / n } else { 0.0 };
        diag - a[i] * a[j] / n3
    }))
}

/// Checks that a direction has `dim` strictly positive finite components.
pub(crate) fn validate_direction(a: &[f64], dim: usize) -> Result<()> {
    if a.len() != dim {
        return Err(EmphError::input(format!(
            "direction has {} components, expected {dim}",
            a.len()
        )));
    }
    if let Some(v) = a.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
        return Err(EmphError::domain(format!(
            "direction components must be strictly positive, got {v}"
        )));
    }
    Ok(())
}
