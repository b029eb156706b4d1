use nalgebra::{Cholesky, DMatrix, DVector};

use crate::error::{Error, Result};

/// Removes the part of `y` explained by the first-stage errors `eta` under the
/// joint error covariance `sigma` (index 0 = outcome error).
///
/// Returns `ỹ = y - η·Σ22⁻¹Σ21` and the conditional variance `σ11 - Σ12·Σ22⁻¹·Σ21`.
pub fn condition_outcome(
    y: &DVector<f64>,
    eta: &DMatrix<f64>,
    sigma: &DMatrix<f64>,
) -> Result<(DVector<f64>, f64)> {
    let p = eta.ncols();
    if sigma.nrows() != p + 1 || sigma.ncols() != p + 1 {
        return Err(Error::Dimension(format!(
            "sigma is {}x{} but {} first-stage residual columns need {}x{}",
            sigma.nrows(),
            sigma.ncols(),
            p,
            p + 1,
            p + 1
        )));
    }
    if eta.nrows() != y.len() {
        return Err(Error::Dimension(format!(
            "eta has {} rows, y has {}",
            eta.nrows(),
            y.len()
        )));
    }
    let s11 = sigma[(0, 0)];
    if p == 0 {
        if !(s11 > 0.0) {
            return Err(Error::StateCorruption(format!(
                "outcome error variance {s11} is not positive"
            )));
        }
        return Ok((y.clone(), s11));
    }
    let s22 = sigma.view((1, 1), (p, p)).into_owned();
    let s21 = sigma.view((1, 0), (p, 1)).column(0).into_owned();
    let chol = Cholesky::new(s22).ok_or_else(|| {
        Error::StateCorruption("first-stage error covariance is not positive definite".into())
    })?;
    let b = chol.solve(&s21);
    let var = s11 - s21.dot(&b);
    if !(var > 0.0) {
        return Err(Error::StateCorruption(format!(
            "conditional outcome variance {var} is not positive"
        )));
    }
    Ok((y - eta * b, var))
}

/// Regression of each error component on all the others, read off the precision matrix.
///
/// Row `j` of `weights` holds `E[r_j | r_-j] = Σ_o weights[(j, o)]·r_o` (zero on the diagonal);
/// `variances[j]` is the matching conditional variance.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorConditionals {
    pub weights: DMatrix<f64>,
    pub variances: DVector<f64>,
}

impl ErrorConditionals {
    pub fn from_sigma(sigma: &DMatrix<f64>) -> Result<Self> {
        let d = sigma.nrows();
        let precision = Cholesky::new(sigma.clone())
            .ok_or_else(|| Error::StateCorruption("error covariance is not positive definite".into()))?
            .inverse();
        let mut weights = DMatrix::zeros(d, d);
        let mut variances = DVector::zeros(d);
        for j in 0..d {
            let pjj = precision[(j, j)];
            if !(pjj > 0.0) {
                return Err(Error::StateCorruption(format!(
                    "non-positive conditional precision at component {j}"
                )));
            }
            variances[j] = 1.0 / pjj;
            for o in 0..d {
                if o != j {
                    weights[(j, o)] = -precision[(j, o)] / pjj;
                }
            }
        }
        Ok(Self { weights, variances })
    }
}
