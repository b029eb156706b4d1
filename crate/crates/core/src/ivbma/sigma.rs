use nalgebra::{Cholesky, DMatrix};
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::linalg::{is_positive_definite, symmetrize};

/// Inverse-Wishart law with `dof` degrees of freedom and scale matrix `scale`.
#[derive(Debug, Clone, PartialEq)]
pub struct InverseWishart {
    dof: f64,
    scale: DMatrix<f64>,
}

impl InverseWishart {
    pub fn new(dof: f64, scale: DMatrix<f64>) -> Result<Self> {
        let d = scale.nrows();
        if !scale.is_square() || !is_positive_definite(&scale) {
            return Err(Error::Config("inverse-Wishart scale must be symmetric positive definite".into()));
        }
        if !(dof > d as f64 - 1.0) {
            return Err(Error::Config(format!(
                "inverse-Wishart needs more than {} degrees of freedom, got {dof}",
                d as f64 - 1.0
            )));
        }
        Ok(Self { dof, scale })
    }

    /// Default error-covariance prior for `p` endogenous regressors: `ν0 = p + 3`, `S0 = I`.
    pub fn default_for(p: usize) -> Self {
        Self {
            dof: p as f64 + 3.0,
            scale: DMatrix::identity(p + 1, p + 1),
        }
    }

    pub fn dim(&self) -> usize {
        self.scale.nrows()
    }

    pub fn dof(&self) -> f64 {
        self.dof
    }

    pub fn scale(&self) -> &DMatrix<f64> {
        &self.scale
    }

    /// `S / (ν - d - 1)`; `None` when the mean does not exist.
    pub fn mean(&self) -> Option<DMatrix<f64>> {
        let denom = self.dof - self.dim() as f64 - 1.0;
        (denom > 0.0).then(|| &self.scale / denom)
    }

    /// Conjugate update with `n` rows of zero-mean residuals whose cross-product is `crossprod`.
    pub fn posterior(&self, n: usize, crossprod: &DMatrix<f64>) -> Result<Self> {
        Self::new(self.dof + n as f64, &self.scale + crossprod)
    }

    /// Bartlett draw: with `S = L Lᵀ` and `A` the Bartlett factor of a
    /// `Wishart(ν, I)`, `Σ = (L A⁻ᵀ)(L A⁻ᵀ)ᵀ`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DMatrix<f64>> {
        let d = self.dim();
        let l = Cholesky::new(self.scale.clone())
            .ok_or_else(|| Error::StateCorruption("inverse-Wishart scale lost definiteness".into()))?
            .unpack();
        let mut a = DMatrix::<f64>::zeros(d, d);
        for i in 0..d {
            let chi = ChiSquared::new(self.dof - i as f64)
                .map_err(|e| Error::StateCorruption(format!("chi-square parameter: {e}")))?;
            a[(i, i)] = chi.sample(rng).sqrt();
            for j in 0..i {
                a[(i, j)] = StandardNormal.sample(rng);
            }
        }
        let a_inv = a
            .solve_lower_triangular(&DMatrix::identity(d, d))
            .ok_or_else(|| Error::StateCorruption("singular Bartlett factor".into()))?;
        let b = l * a_inv.transpose();
        let mut sigma = &b * b.transpose();
        symmetrize(&mut sigma);
        Ok(sigma)
    }
}

/// Draws the joint error covariance from `IW(ν0 + n, S0 + RᵀR)` given the
/// `n × (p+1)` residual matrix `R = [ε | η]`.
pub fn draw_sigma<R: Rng + ?Sized>(
    residuals: &DMatrix<f64>,
    prior: &InverseWishart,
    rng: &mut R,
) -> Result<DMatrix<f64>> {
    if residuals.ncols() != prior.dim() {
        return Err(Error::Dimension(format!(
            "residual matrix has {} columns, prior is {}-dimensional",
            residuals.ncols(),
            prior.dim()
        )));
    }
    let post = prior.posterior(residuals.nrows(), &residuals.tr_mul(residuals))?;
    let sigma = post.sample(rng)?;
    if !is_positive_definite(&sigma) {
        return Err(Error::StateCorruption("sigma draw is not positive definite".into()));
    }
    Ok(sigma)
}
