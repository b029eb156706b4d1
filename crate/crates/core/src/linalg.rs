use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

/// A Cholesky pivot smaller than this fraction of its diagonal entry means the
/// column is (numerically) a linear combination of the earlier ones.
pub(crate) const RANK_TOLERANCE: f64 = 1e-10;

/// Column means and the mean-centred copy of `m`.
pub(crate) fn center_columns(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let means = DVector::from_iterator(
        m.ncols(),
        m.column_iter().map(|c| if n == 0 { 0.0 } else { c.sum() / n as f64 }),
    );
    let mut centered = m.clone();
    for (j, mut col) in centered.column_iter_mut().enumerate() {
        col.add_scalar_mut(-means[j]);
    }
    (means, centered)
}

pub(crate) fn center_vector(v: &DVector<f64>) -> (f64, DVector<f64>) {
    let mean = if v.is_empty() { 0.0 } else { v.mean() };
    (mean, v.add_scalar(-mean))
}

/// Cholesky factor of a Gram matrix, or `None` when it is not numerically of full rank.
pub(crate) fn checked_cholesky(gram: DMatrix<f64>) -> Option<Cholesky<f64, Dyn>> {
    let diag: Vec<f64> = gram.diagonal().iter().copied().collect();
    if diag.iter().any(|&d| !(d > 0.0)) {
        return None;
    }
    let chol = Cholesky::new(gram)?;
    let l = chol.l_dirty();
    for (j, &d) in diag.iter().enumerate() {
        let pivot = l[(j, j)];
        if !(pivot * pivot > RANK_TOLERANCE * d) {
            return None;
        }
    }
    Some(chol)
}

pub(crate) fn sub_gram(gram: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(idx.len(), idx.len(), |a, b| gram[(idx[a], idx[b])])
}

pub(crate) fn sub_vector(v: &DVector<f64>, idx: &[usize]) -> DVector<f64> {
    DVector::from_iterator(idx.len(), idx.iter().map(|&i| v[i]))
}

#[cfg(test)]
pub(crate) fn select_columns(m: &DMatrix<f64>, idx: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(m.nrows(), idx.len(), |r, c| m[(r, idx[c])])
}

/// Horizontal concatenation of two blocks with the same number of rows.
pub(crate) fn hstack(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    assert_eq!(a.nrows(), b.nrows());
    let n = a.nrows();
    let mut out = DMatrix::zeros(n, a.ncols() + b.ncols());
    out.columns_mut(0, a.ncols()).copy_from(a);
    out.columns_mut(a.ncols(), b.ncols()).copy_from(b);
    out
}

pub(crate) fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    m.is_square()
        && (0..m.nrows()).all(|i| (0..i).all(|j| (m[(i, j)] - m[(j, i)]).abs() <= tol))
}

pub(crate) fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for i in 0..n {
        for j in 0..i {
            let avg = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = avg;
            m[(j, i)] = avg;
        }
    }
}

/// Symmetric with a Cholesky factorisation (hence strictly positive eigenvalues).
pub(crate) fn is_positive_definite(m: &DMatrix<f64>) -> bool {
    is_symmetric(m, 1e-10 * (1.0 + m.amax())) && Cholesky::new(m.clone()).is_some()
}
