//! Small dense linear-algebra helpers shared by the model, simulation and
//! filtering code. Everything here works on `nalgebra` dynamic matrices.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// `(M + Mᵀ) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// Largest absolute entry of `a - b`.
pub fn max_abs_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Symmetric eigen-decomposition of the symmetrized input, eigenvalues ascending.
pub fn sym_eigen_sorted(m: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(symmetrize(m));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut vectors = DMatrix::zeros(n, n);
    for (col, &i) in order.iter().enumerate() {
        vectors.set_column(col, &eig.eigenvectors.column(i));
    }
    (values, vectors)
}

pub fn min_sym_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m))
        .eigenvalues
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

/// Principal square root of a symmetric positive semi-definite matrix.
/// Eigenvalues below zero (rounding) are clamped to zero.
pub fn sym_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let roots = eig.eigenvalues.map(|v| v.max(0.0).sqrt());
    let scaled = &eig.eigenvectors * DMatrix::from_diagonal(&roots);
    symmetrize(&(scaled * eig.eigenvectors.transpose()))
}

/// Numerical rank with singular-value threshold `scale · ε · σ_max`.
pub fn numerical_rank(m: &DMatrix<f64>, scale: f64) -> usize {
    if m.is_empty() {
        return 0;
    }
    let sv = m.singular_values();
    let smax = sv.iter().copied().fold(0.0, f64::max);
    if smax == 0.0 {
        return 0;
    }
    let tol = scale * f64::EPSILON * smax;
    sv.iter().filter(|&&s| s > tol).count()
}

/// Eigenvalues of a general real square matrix as `(re, im)` pairs.
pub fn eigenvalues(m: &DMatrix<f64>) -> Vec<(f64, f64)> {
    m.complex_eigenvalues()
        .iter()
        .map(|z| (z.re, z.im))
        .collect()
}

pub fn spectral_radius(m: &DMatrix<f64>) -> f64 {
    eigenvalues(m)
        .into_iter()
        .map(|(re, im)| re.hypot(im))
        .fold(0.0, f64::max)
}

/// Solves `A X + X Aᵀ + Q = 0` by vectorization. Intended for state
/// dimensions up to a few dozen.
pub fn solve_continuous_lyapunov(a: &DMatrix<f64>, q: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    if a.ncols() != n || q.shape() != (n, n) {
        return Err(Error::InvalidInput(format!(
            "Lyapunov equation needs square matrices of equal size, got {:?} and {:?}",
            a.shape(),
            q.shape()
        )));
    }
    let eye = DMatrix::<f64>::identity(n, n);
    // vec(AX) = (I ⊗ A) vec X, vec(X Aᵀ) = (A ⊗ I) vec X
    let lhs = eye.kronecker(a) + a.kronecker(&eye);
    let rhs = DVector::from_iterator(n * n, q.iter().map(|v| -v));
    let sol = lhs
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InvalidInput("Lyapunov operator is singular".into()))?;
    Ok(symmetrize(&DMatrix::from_vec(n, n, sol.as_slice().to_vec())))
}

/// Lower-triangular Cholesky factor of an SPD matrix.
pub fn cholesky_lower(m: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    nalgebra::Cholesky::new(symmetrize(m)).map(|c| c.l())
}

/// Row-major nested representation, used by the JSON schemas.
pub fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows())
        .map(|i| m.row(i).iter().copied().collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Result<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, Vec::len);
    if rows.iter().any(|r| r.len() != ncols) {
        return Err(Error::InvalidInput("ragged matrix rows".into()));
    }
    Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lyapunov_scalar() {
        let a = DMatrix::from_element(1, 1, -2.0);
        let q = DMatrix::from_element(1, 1, 1.0);
        let x = solve_continuous_lyapunov(&a, &q).unwrap();
        assert!((x[(0, 0)] - 0.25).abs() < 1e-15);
    }

    #[test]
    fn lyapunov_residual() {
        let a = DMatrix::from_row_slice(3, 3, &[-1.0, 0.5, 0.0, -0.3, -2.0, 0.2, 0.1, 0.0, -0.7]);
        let b = DMatrix::from_row_slice(3, 2, &[1.0, 0.0, 0.3, 1.0, -0.5, 0.2]);
        let q = &b * b.transpose();
        let x = solve_continuous_lyapunov(&a, &q).unwrap();
        let res = &a * &x + &x * a.transpose() + q;
        assert!(res.norm() < 1e-12);
    }

    #[test]
    fn sqrt_squares_back() {
        let m = DMatrix::from_row_slice(2, 2, &[1.25, -0.5, -0.5, 1.0]);
        let r = sym_sqrt(&m);
        assert!(max_abs_diff(&(&r * &r), &m) < 1e-14);
        assert!(max_abs_diff(&r, &r.transpose()) == 0.0);
    }

    #[test]
    fn rank_of_rank_one() {
        let v = DMatrix::from_row_slice(3, 1, &[1.0, 2.0, 3.0]);
        assert_eq!(numerical_rank(&(&v * v.transpose()), 3.0), 1);
        assert_eq!(numerical_rank(&DMatrix::zeros(2, 2), 2.0), 0);
    }
}
