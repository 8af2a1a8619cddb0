//! MCARMA models: polynomial pairs, continuous-time state-space triples,
//! Echelon-form parameter spaces and the nesting maps between them.

use std::fmt;

use nalgebra::{Complex, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;

type CMatrix = DMatrix<Complex<f64>>;

/// Autoregressive and moving-average coefficients of
/// `P(z) = I z^p + A₁ z^{p-1} + … + A_p` and `Q(z) = B₀ z^q + … + B_q`.
#[derive(Debug, Clone, PartialEq)]
pub struct PolynomialPair {
    ar: Vec<DMatrix<f64>>,
    ma: Vec<DMatrix<f64>>,
}

impl PolynomialPair {
    /// `ar = [A₁, …, A_p]`, `ma = [B₀, …, B_q]`.
    pub fn new(ar: Vec<DMatrix<f64>>, ma: Vec<DMatrix<f64>>) -> Result<Self> {
        if ar.is_empty() {
            return Err(Error::InvalidInput("AR degree p must be at least 1".into()));
        }
        if ma.is_empty() {
            return Err(Error::InvalidInput("MA polynomial needs B₀".into()));
        }
        if ma.len() > ar.len() {
            return Err(Error::InvalidInput(format!(
                "MA degree {} must be below AR degree {}",
                ma.len() - 1,
                ar.len()
            )));
        }
        let d = ar[0].nrows();
        let s = ma[0].ncols();
        if let Some(bad) = ar.iter().position(|m| m.shape() != (d, d)) {
            return Err(Error::InvalidInput(format!(
                "A_{} has shape {:?}, expected ({d}, {d})",
                bad + 1,
                ar[bad].shape()
            )));
        }
        if let Some(bad) = ma.iter().position(|m| m.shape() != (d, s)) {
            return Err(Error::InvalidInput(format!(
                "B_{bad} has shape {:?}, expected ({d}, {s})",
                ma[bad].shape()
            )));
        }
        if ma[0].iter().all(|&v| v == 0.0) {
            return Err(Error::InvalidInput("leading MA coefficient B₀ is zero".into()));
        }
        Ok(Self { ar, ma })
    }

    pub fn ar_degree(&self) -> usize {
        self.ar.len()
    }

    pub fn ma_degree(&self) -> usize {
        self.ma.len() - 1
    }

    pub fn dim(&self) -> usize {
        self.ar[0].nrows()
    }

    pub fn driver_dim(&self) -> usize {
        self.ma[0].ncols()
    }

    pub fn ar_coeffs(&self) -> &[DMatrix<f64>] {
        &self.ar
    }

    pub fn ma_coeffs(&self) -> &[DMatrix<f64>] {
        &self.ma
    }

    /// `P(z)⁻¹ Q(z)`; `None` when `P(z)` is singular.
    pub fn transfer_function(&self, z: Complex<f64>) -> Option<CMatrix> {
        let d = self.dim();
        let p = self.ar_degree();
        let q = self.ma_degree();
        let mut pz = CMatrix::identity(d, d) * z.powu(p as u32);
        for (i, a) in self.ar.iter().enumerate() {
            pz += a.map(Complex::from) * z.powu((p - 1 - i) as u32);
        }
        let mut qz = CMatrix::zeros(d, self.driver_dim());
        for (j, b) in self.ma.iter().enumerate() {
            qz += b.map(Complex::from) * z.powu((q - j) as u32);
        }
        pz.lu().solve(&qz)
    }
}

/// Continuous-time state-space triple `(A, B, C)` with driver covariance Σᴸ.
#[derive(Debug, Clone, PartialEq)]
pub struct StateSpaceModel {
    a: DMatrix<f64>,
    b: DMatrix<f64>,
    c: DMatrix<f64>,
    sigma_l: DMatrix<f64>,
}

impl StateSpaceModel {
    /// Validates shapes, symmetry and positive definiteness of Σᴸ and the rank
    /// of `C`. Stability of `A` is not required here; see [`is_stable_minimal`].
    pub fn new(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        sigma_l: DMatrix<f64>,
    ) -> Result<Self> {
        let n = a.nrows();
        if n == 0 || a.ncols() != n {
            return Err(Error::InvalidInput(format!("A must be square, got {:?}", a.shape())));
        }
        if b.nrows() != n {
            return Err(Error::InvalidInput(format!("B has {} rows, expected {n}", b.nrows())));
        }
        if c.ncols() != n {
            return Err(Error::InvalidInput(format!("C has {} columns, expected {n}", c.ncols())));
        }
        let s = b.ncols();
        if sigma_l.shape() != (s, s) {
            return Err(Error::InvalidInput(format!(
                "driver covariance has shape {:?}, expected ({s}, {s})",
                sigma_l.shape()
            )));
        }
        if linalg::max_abs_diff(&sigma_l, &sigma_l.transpose()) > 1e-12 {
            return Err(Error::InvalidInput("driver covariance is not symmetric".into()));
        }
        if linalg::min_sym_eigenvalue(&sigma_l) <= 0.0 {
            return Err(Error::InvalidInput("driver covariance is not positive definite".into()));
        }
        if linalg::numerical_rank(&c, n as f64) < c.nrows() {
            return Err(Error::InvalidInput("C does not have full row rank".into()));
        }
        if [&a, &b, &c, &sigma_l].iter().any(|m| m.iter().any(|v| !v.is_finite())) {
            return Err(Error::InvalidInput("model matrices contain non-finite entries".into()));
        }
        Ok(Self { a, b, c, sigma_l })
    }

    pub(crate) fn from_parts_unchecked(
        a: DMatrix<f64>,
        b: DMatrix<f64>,
        c: DMatrix<f64>,
        sigma_l: DMatrix<f64>,
    ) -> Self {
        Self { a, b, c, sigma_l }
    }

    pub fn a(&self) -> &DMatrix<f64> {
        &self.a
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn c(&self) -> &DMatrix<f64> {
        &self.c
    }

    pub fn sigma_l(&self) -> &DMatrix<f64> {
        &self.sigma_l
    }

    pub fn state_dim(&self) -> usize {
        self.a.nrows()
    }

    pub fn output_dim(&self) -> usize {
        self.c.nrows()
    }

    pub fn driver_dim(&self) -> usize {
        self.b.ncols()
    }

    pub fn with_sigma_l(self, sigma_l: DMatrix<f64>) -> Result<Self> {
        Self::new(self.a, self.b, self.c, sigma_l)
    }

    /// `C (zI − A)⁻¹ B`; `None` when `z` is an eigenvalue of `A`.
    pub fn transfer_function(&self, z: Complex<f64>) -> Option<CMatrix> {
        let n = self.state_dim();
        let lhs = CMatrix::identity(n, n) * z - self.a.map(Complex::from);
        let x = lhs.lu().solve(&self.b.map(Complex::from))?;
        Some(self.c.map(Complex::from) * x)
    }

    /// All eigenvalues of `A` have strictly negative real part.
    pub fn is_stable(&self) -> bool {
        linalg::eigenvalues(&self.a).iter().all(|&(re, _)| re < 0.0)
    }
}

/// Block companion realization of a polynomial pair, with Σᴸ = I.
///
/// `A` has identity blocks on the first block super-diagonal and
/// `(−A_p, …, −A₁)` as last block row, `C = (I, 0, …, 0)`, and `B` stacks
/// `β₁ … β_p` where `β₁ = … = β_{p−q−1} = 0` and
/// `β_{p−j} = −Σ_{i=1}^{p−j−1} A_i β_{p−j−i} + B_{q−j}` for `j = q, …, 0`.
pub fn companion_realization(poly: &PolynomialPair) -> StateSpaceModel {
    let d = poly.dim();
    let s = poly.driver_dim();
    let p = poly.ar_degree();
    let q = poly.ma_degree();
    let n = p * d;

    let mut a = DMatrix::zeros(n, n);
    for blk in 0..p - 1 {
        for r in 0..d {
            a[(blk * d + r, (blk + 1) * d + r)] = 1.0;
        }
    }
    for (i, ai) in poly.ar_coeffs().iter().enumerate() {
        // A_{i+1} sits in block column p-1-i of the last block row
        let col = (p - 1 - i) * d;
        a.view_mut(((p - 1) * d, col), (d, d)).copy_from(&(-ai));
    }

    // betas[k] holds β_{k+1}
    let mut betas = vec![DMatrix::<f64>::zeros(d, s); p];
    for j in (0..=q).rev() {
        let idx = p - j; // 1-based index of β being computed
        let mut beta = poly.ma_coeffs()[q - j].clone();
        for i in 1..idx {
            beta -= &poly.ar_coeffs()[i - 1] * &betas[idx - i - 1];
        }
        betas[idx - 1] = beta;
    }
    let mut b = DMatrix::zeros(n, s);
    for (k, beta) in betas.iter().enumerate() {
        b.view_mut((k * d, 0), (d, s)).copy_from(beta);
    }

    let mut c = DMatrix::zeros(d, n);
    for r in 0..d {
        c[(r, r)] = 1.0;
    }
    StateSpaceModel::from_parts_unchecked(a, b, c, DMatrix::identity(s, s))
}

/// Kronecker index `(m₁, …, m_d)` fixing the Echelon row degrees.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct KroneckerIndex(Vec<usize>);

impl KroneckerIndex {
    pub fn new(m: Vec<usize>) -> Result<Self> {
        if m.is_empty() || m.contains(&0) {
            return Err(Error::InvalidInput(format!(
                "Kronecker index entries must be positive, got {m:?}"
            )));
        }
        Ok(Self(m))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    /// Output dimension `d`.
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    /// McMillan degree `N = Σ m_i`.
    pub fn state_dim(&self) -> usize {
        self.0.iter().sum()
    }

    /// `p = max m_i`.
    pub fn ar_degree(&self) -> usize {
        self.0.iter().copied().max().unwrap_or(0)
    }

    /// First state index of block `i`.
    pub fn offset(&self, i: usize) -> usize {
        self.0[..i].iter().sum()
    }

    /// Number of free α entries in block `(i, j)`: `min(m_i + 1{i>j}, m_j)`.
    pub fn width(&self, i: usize, j: usize) -> usize {
        (self.0[i] + usize::from(i > j)).min(self.0[j])
    }
}

impl TryFrom<Vec<usize>> for KroneckerIndex {
    type Error = Error;
    fn try_from(v: Vec<usize>) -> Result<Self> {
        Self::new(v)
    }
}

impl From<KroneckerIndex> for Vec<usize> {
    fn from(k: KroneckerIndex) -> Self {
        k.0
    }
}

impl fmt::Display for KroneckerIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(ToString::to_string).collect();
        write!(f, "({})", parts.join(","))
    }
}

/// Meaning of one coordinate of a parameter vector. Indices are 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Coordinate {
    /// `α_{ij,k+1}`: bottom row of block `A_ij`, column `k`.
    Alpha { row_block: usize, col_block: usize, lag: usize },
    /// Entry of `K = T B` (`row` is a global state index).
    Kappa { row: usize, col: usize },
    /// Entry of the lower Cholesky factor of Σᴸ.
    Chol { row: usize, col: usize },
}

/// Echelon matrices generated by one parameter vector.
#[derive(Debug, Clone)]
pub struct EchelonMatrices {
    pub a: DMatrix<f64>,
    pub b: DMatrix<f64>,
    pub c: DMatrix<f64>,
    pub t: DMatrix<f64>,
    pub k: DMatrix<f64>,
    pub chol: DMatrix<f64>,
}

/// An Echelon-form candidate parameter space with MA-degree cap and box bounds.
///
/// Coordinates are ordered as: α entries (block row, block column, lag),
/// free `K` entries (row, column) for lags `1..=ma_cap` of each block, and
/// the lower triangle of the Cholesky factor of Σᴸ row by row. The lag-0
/// row of each block of `K` is tied to the α's (`κ_{first row of i, j} =
/// α_{ij,1}`), which fixes the scale left free by Σᴸ; this requires `s = d`.
#[derive(Debug, Clone, PartialEq)]
pub struct ParameterSpace {
    kronecker: KroneckerIndex,
    ma_cap: usize,
    coords: Vec<Coordinate>,
    lower: DVector<f64>,
    upper: DVector<f64>,
}

impl ParameterSpace {
    pub const DEFAULT_BOUND: f64 = 10.0;
    pub const CHOL_DIAG_LOWER: f64 = 1e-4;

    pub fn new(kronecker: KroneckerIndex, ma_cap: usize) -> Result<Self> {
        let p = kronecker.ar_degree();
        if ma_cap >= p {
            return Err(Error::InvalidInput(format!(
                "MA cap {ma_cap} must be below the AR degree {p}"
            )));
        }
        let d = kronecker.dim();
        let mut coords = Vec::new();
        for i in 0..d {
            for j in 0..d {
                for lag in 0..kronecker.width(i, j) {
                    coords.push(Coordinate::Alpha { row_block: i, col_block: j, lag });
                }
            }
        }
        for i in 0..d {
            let mi = kronecker.indices()[i];
            for r in 1..=ma_cap.min(mi - 1) {
                for col in 0..d {
                    coords.push(Coordinate::Kappa { row: kronecker.offset(i) + r, col });
                }
            }
        }
        for row in 0..d {
            for col in 0..=row {
                coords.push(Coordinate::Chol { row, col });
            }
        }
        let lower = DVector::from_iterator(
            coords.len(),
            coords.iter().map(|c| match c {
                Coordinate::Chol { row, col } if row == col => Self::CHOL_DIAG_LOWER,
                _ => -Self::DEFAULT_BOUND,
            }),
        );
        let upper = DVector::from_element(coords.len(), Self::DEFAULT_BOUND);
        Ok(Self { kronecker, ma_cap, coords, lower, upper })
    }

    /// Replaces the default box. Cholesky diagonal lower bounds must stay positive.
    pub fn with_bounds(mut self, lower: DVector<f64>, upper: DVector<f64>) -> Result<Self> {
        let n = self.n_params();
        if lower.len() != n || upper.len() != n {
            return Err(Error::InvalidInput(format!("bounds must have length {n}")));
        }
        for (idx, coord) in self.coords.iter().enumerate() {
            if !(lower[idx] < upper[idx]) {
                return Err(Error::InvalidInput(format!(
                    "lower bound {} not below upper bound {} at coordinate {idx}",
                    lower[idx], upper[idx]
                )));
            }
            if matches!(coord, Coordinate::Chol { row, col } if row == col) && lower[idx] <= 0.0 {
                return Err(Error::InvalidInput(
                    "Cholesky diagonal lower bounds must be positive".into(),
                ));
            }
        }
        self.lower = lower;
        self.upper = upper;
        Ok(self)
    }

    pub fn kronecker(&self) -> &KroneckerIndex {
        &self.kronecker
    }

    pub fn ma_cap(&self) -> usize {
        self.ma_cap
    }

    /// `N(Θ)`.
    pub fn n_params(&self) -> usize {
        self.coords.len()
    }

    pub fn coordinates(&self) -> &[Coordinate] {
        &self.coords
    }

    pub fn n_chol(&self) -> usize {
        let d = self.kronecker.dim();
        d * (d + 1) / 2
    }

    pub fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    pub fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    pub fn dim(&self) -> usize {
        self.kronecker.dim()
    }

    pub fn center(&self) -> DVector<f64> {
        (&self.lower + &self.upper) * 0.5
    }

    pub fn contains(&self, theta: &DVector<f64>) -> bool {
        theta.len() == self.n_params()
            && theta
                .iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .all(|(&v, (&lo, &hi))| v >= lo && v <= hi)
    }

    /// Total distance by which `theta` lies outside the box.
    pub fn box_violation(&self, theta: &DVector<f64>) -> f64 {
        theta
            .iter()
            .zip(self.lower.iter().zip(self.upper.iter()))
            .map(|(&v, (&lo, &hi))| (lo - v).max(0.0) + (v - hi).max(0.0))
            .sum()
    }

    pub fn project(&self, theta: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            theta.len(),
            theta
                .iter()
                .zip(self.lower.iter().zip(self.upper.iter()))
                .map(|(&v, (&lo, &hi))| v.clamp(lo, hi)),
        )
    }

    fn check_len(&self, theta: &DVector<f64>) -> Result<()> {
        if theta.len() != self.n_params() {
            return Err(Error::InvalidInput(format!(
                "parameter vector has length {}, space needs {}",
                theta.len(),
                self.n_params()
            )));
        }
        Ok(())
    }

    /// Builds every Echelon matrix for `theta` without the box check.
    pub fn echelon_matrices(&self, theta: &DVector<f64>) -> Result<EchelonMatrices> {
        self.check_len(theta)?;
        let m = &self.kronecker;
        let d = m.dim();
        let n = m.state_dim();

        let mut alpha = vec![vec![Vec::new(); d]; d];
        let mut k = DMatrix::zeros(n, d);
        let mut chol = DMatrix::zeros(d, d);
        for (coord, &v) in self.coords.iter().zip(theta.iter()) {
            match *coord {
                Coordinate::Alpha { row_block, col_block, .. } => alpha[row_block][col_block].push(v),
                Coordinate::Kappa { row, col } => k[(row, col)] = v,
                Coordinate::Chol { row, col } => chol[(row, col)] = v,
            }
        }
        for i in 0..d {
            for j in 0..d {
                k[(m.offset(i), j)] = alpha[i][j][0];
            }
        }
        let a = echelon_a(m, &alpha);
        let t = echelon_t(m, &alpha);
        let c = echelon_c(m);
        let b = t
            .clone()
            .lu()
            .solve(&k)
            .ok_or_else(|| Error::InvalidParameter("Echelon matrix T is singular".into()))?;
        Ok(EchelonMatrices { a, b, c, t, k, chol })
    }

    /// The map θ ↦ (A_θ, B_θ, C_θ, Σᴸ_θ). Fails only outside the box.
    pub fn build(&self, theta: &DVector<f64>) -> Result<StateSpaceModel> {
        self.check_len(theta)?;
        if !self.contains(theta) {
            return Err(Error::InvalidParameter(format!(
                "parameter lies outside the box (violation {:e})",
                self.box_violation(theta)
            )));
        }
        self.build_unchecked(theta)
    }

    pub(crate) fn build_unchecked(&self, theta: &DVector<f64>) -> Result<StateSpaceModel> {
        let e = self.echelon_matrices(theta)?;
        let sigma_l = &e.chol * e.chol.transpose();
        Ok(StateSpaceModel::from_parts_unchecked(e.a, e.b, e.c, sigma_l))
    }

    /// Copies shared coordinates of `theta` (from `from`) into this space;
    /// coordinates missing in `from` are set to zero when they are `K`
    /// entries. Returns `None` when the Kronecker indices differ.
    pub fn transfer_from(&self, from: &ParameterSpace, theta: &DVector<f64>) -> Option<DVector<f64>> {
        if from.kronecker != self.kronecker || theta.len() != from.n_params() {
            return None;
        }
        let mut out = DVector::zeros(self.n_params());
        for (idx, coord) in self.coords.iter().enumerate() {
            match from.coords.iter().position(|c| c == coord) {
                Some(src) => out[idx] = theta[src],
                None if matches!(coord, Coordinate::Kappa { .. }) => out[idx] = 0.0,
                None => return None,
            }
        }
        Some(self.project(&out))
    }

    /// Splits θ into the structural part and the Cholesky part.
    pub fn split(&self, theta: &DVector<f64>) -> (Vec<f64>, Vec<f64>) {
        let cut = self.n_params() - self.n_chol();
        (theta.as_slice()[..cut].to_vec(), theta.as_slice()[cut..].to_vec())
    }
}

fn echelon_a(m: &KroneckerIndex, alpha: &[Vec<Vec<f64>>]) -> DMatrix<f64> {
    let d = m.dim();
    let n = m.state_dim();
    let mut a = DMatrix::zeros(n, n);
    for i in 0..d {
        let mi = m.indices()[i];
        let oi = m.offset(i);
        for r in 0..mi - 1 {
            a[(oi + r, oi + r + 1)] = 1.0;
        }
        for j in 0..d {
            let oj = m.offset(j);
            for (lag, &v) in alpha[i][j].iter().enumerate() {
                a[(oi + mi - 1, oj + lag)] = v;
            }
        }
    }
    a
}

fn echelon_t(m: &KroneckerIndex, alpha: &[Vec<Vec<f64>>]) -> DMatrix<f64> {
    let d = m.dim();
    let n = m.state_dim();
    let mut t = DMatrix::zeros(n, n);
    for i in 0..d {
        let mi = m.indices()[i];
        let oi = m.offset(i);
        for j in 0..d {
            let mj = m.indices()[j];
            let oj = m.offset(j);
            let w = m.width(i, j);
            for r in 0..mi {
                for c in 0..mj {
                    // Hankel part: entry (r, c) is -α_{ij, r+c+2} (1-based lag)
                    let lag = r + c + 1;
                    if lag < w {
                        t[(oi + r, oj + c)] = -alpha[i][j][lag];
                    }
                }
            }
            if i == j {
                for r in 0..mi {
                    t[(oi + r, oi + mi - 1 - r)] += 1.0;
                }
            }
        }
    }
    t
}

fn echelon_c(m: &KroneckerIndex) -> DMatrix<f64> {
    let d = m.dim();
    let mut c = DMatrix::zeros(d, m.state_dim());
    for i in 0..d {
        c[(i, m.offset(i))] = 1.0;
    }
    c
}

/// Echelon polynomials `p_ij(z)`, `q_ij(z)` read off a model, stored as
/// coefficient matrices in ascending powers of `z`.
#[derive(Debug, Clone)]
pub struct EchelonPolynomials {
    kronecker: KroneckerIndex,
    /// `ar[k]` is the coefficient of `z^k`, `k = 0..=p`.
    pub ar: Vec<DMatrix<f64>>,
    /// `ma[k]` is the coefficient of `z^k`, `k = 0..p`.
    pub ma: Vec<DMatrix<f64>>,
}

impl EchelonPolynomials {
    pub fn kronecker(&self) -> &KroneckerIndex {
        &self.kronecker
    }

    /// Highest power of `z` in `Q` with an entry above `tol` in absolute value.
    pub fn ma_degree(&self, tol: f64) -> usize {
        self.ma
            .iter()
            .rposition(|m| m.iter().any(|v| v.abs() > tol))
            .unwrap_or(0)
    }

    /// `P(z)⁻¹ Q(z)`.
    pub fn transfer_function(&self, z: Complex<f64>) -> Option<CMatrix> {
        let eval = |coeffs: &[DMatrix<f64>]| {
            let (r, c) = coeffs[0].shape();
            let mut acc = CMatrix::zeros(r, c);
            for (k, m) in coeffs.iter().enumerate() {
                acc += m.map(Complex::from) * z.powu(k as u32);
            }
            acc
        };
        eval(&self.ar).lu().solve(&eval(&self.ma))
    }

    /// Monic normalization `P̂ = L₀⁻¹ D(z) P(z)`, `Q̂ = L₀⁻¹ D(z) Q(z)` with
    /// `D(z) = diag(z^{p−m_i})` and `L₀` the (unit lower-triangular) leading
    /// coefficient of `D P`. The transfer function is unchanged.
    pub fn to_polynomial_pair(&self, tol: f64) -> Result<PolynomialPair> {
        let m = &self.kronecker;
        let d = m.dim();
        let p = m.ar_degree();
        let shift = |coeffs: &[DMatrix<f64>], len: usize| {
            let cols = coeffs[0].ncols();
            let mut out = vec![DMatrix::<f64>::zeros(d, cols); len];
            for (k, mat) in coeffs.iter().enumerate() {
                for i in 0..d {
                    let kk = k + p - m.indices()[i];
                    // row i has degree at most m_i, so the skipped entries are zero
                    if kk >= len {
                        continue;
                    }
                    for j in 0..cols {
                        out[kk][(i, j)] = mat[(i, j)];
                    }
                }
            }
            out
        };
        let dp = shift(&self.ar, p + 1);
        let dq = shift(&self.ma, p);
        let lead_inv = dp[p]
            .clone()
            .try_inverse()
            .ok_or_else(|| Error::InvalidInput("leading AR coefficient is singular".into()))?;
        let ar: Vec<_> = (1..=p).map(|i| &lead_inv * &dp[p - i]).collect();
        let q_top = dq
            .iter()
            .rposition(|mat| mat.iter().any(|v| v.abs() > tol))
            .ok_or_else(|| Error::InvalidInput("MA polynomial is identically zero".into()))?;
        let ma: Vec<_> = (0..=q_top).rev().map(|k| &lead_inv * &dq[k]).collect();
        PolynomialPair::new(ar, ma)
    }
}

/// Reads `p_ij(z) = δ_ij z^{m_i} − Σ_k α_{ij,k} z^{k−1}` and
/// `q_ij(z) = Σ_k κ_{ν_i + k, j} z^{k−1}` (with `K = T B`) off an Echelon model.
pub fn echelon_polynomials(model: &StateSpaceModel, m: &KroneckerIndex) -> Result<EchelonPolynomials> {
    let n = m.state_dim();
    let d = m.dim();
    if model.state_dim() != n || model.output_dim() != d {
        return Err(Error::InvalidInput(format!(
            "Kronecker index {m} implies N={n}, d={d}; model has N={}, d={}",
            model.state_dim(),
            model.output_dim()
        )));
    }
    let p = m.ar_degree();
    let a = model.a();
    let mut alpha = vec![vec![Vec::new(); d]; d];
    for i in 0..d {
        let row = m.offset(i) + m.indices()[i] - 1;
        for j in 0..d {
            let oj = m.offset(j);
            alpha[i][j] = (0..m.width(i, j)).map(|lag| a[(row, oj + lag)]).collect();
        }
    }
    let t = echelon_t(m, &alpha);
    let k = &t * model.b();
    let s = model.driver_dim();

    let mut ar = vec![DMatrix::zeros(d, d); p + 1];
    for i in 0..d {
        ar[m.indices()[i]][(i, i)] = 1.0;
        for j in 0..d {
            for (lag, &v) in alpha[i][j].iter().enumerate() {
                ar[lag][(i, j)] -= v;
            }
        }
    }
    let mut ma = vec![DMatrix::zeros(d, s); p];
    for i in 0..d {
        for lag in 0..m.indices()[i] {
            for j in 0..s {
                ma[lag][(i, j)] = k[(m.offset(i) + lag, j)];
            }
        }
    }
    Ok(EchelonPolynomials { kronecker: m.clone(), ar, ma })
}

/// Outcome of the stability and minimality predicate.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StabilityReport {
    pub max_real_part: f64,
    pub max_abs_imag: f64,
    pub controllability_rank: usize,
    pub observability_rank: usize,
    pub state_dim: usize,
    /// Nonnegative measure of how far the model is from satisfying the
    /// eigenvalue conditions (0 when they hold).
    pub violation: f64,
    pub stable: bool,
    pub minimal: bool,
}

impl StabilityReport {
    pub fn ok(&self) -> bool {
        self.stable && self.minimal
    }
}

/// Eigenvalues in the open left half plane with `|Im λ| < π/h`, and
/// controllability and observability matrices of full numerical rank
/// (threshold `N · ε · σ_max`).
pub fn is_stable_minimal(model: &StateSpaceModel, h: f64) -> StabilityReport {
    let n = model.state_dim();
    let band = std::f64::consts::PI / h;
    let eig = linalg::eigenvalues(model.a());
    let max_real_part = eig.iter().map(|e| e.0).fold(f64::NEG_INFINITY, f64::max);
    let max_abs_imag = eig.iter().map(|e| e.1.abs()).fold(0.0, f64::max);
    let violation: f64 = eig
        .iter()
        .map(|&(re, im)| re.max(0.0) + (im.abs() - band).max(0.0))
        .sum();
    let stable = eig.iter().all(|&(re, im)| re < 0.0 && im.abs() < band);

    let a = model.a();
    let s = model.driver_dim();
    let d = model.output_dim();
    let mut ctrb = DMatrix::zeros(n, n * s);
    let mut block = model.b().clone();
    for k in 0..n {
        ctrb.view_mut((0, k * s), (n, s)).copy_from(&block);
        block = a * block;
    }
    let mut obsv = DMatrix::zeros(n * d, n);
    let mut block = model.c().clone();
    for k in 0..n {
        obsv.view_mut((k * d, 0), (d, n)).copy_from(&block);
        block *= a;
    }
    let controllability_rank = linalg::numerical_rank(&ctrb, n as f64);
    let observability_rank = linalg::numerical_rank(&obsv, n as f64);
    StabilityReport {
        max_real_part,
        max_abs_imag,
        controllability_rank,
        observability_rank,
        state_dim: n,
        violation,
        stable,
        minimal: controllability_rank == n && observability_rank == n,
    }
}

/// Affine embedding `θ₀ ↦ F θ₀ + c` of a nested space into an enclosing one.
#[derive(Debug, Clone, PartialEq)]
pub struct NestingMap {
    f: DMatrix<f64>,
    offset: DVector<f64>,
}

impl NestingMap {
    /// Requires `FᵀF = I` within 1e-12 and strictly fewer inner coordinates.
    pub fn new(f: DMatrix<f64>, offset: DVector<f64>) -> Result<Self> {
        let (outer, inner) = f.shape();
        if offset.len() != outer {
            return Err(Error::InvalidInput("offset length must match rows of F".into()));
        }
        if inner >= outer {
            return Err(Error::NotNested(format!(
                "inner space has {inner} parameters, enclosing space {outer}"
            )));
        }
        let gram = f.transpose() * &f;
        if linalg::max_abs_diff(&gram, &DMatrix::identity(inner, inner)) > 1e-12 {
            return Err(Error::InvalidInput("FᵀF is not the identity".into()));
        }
        Ok(Self { f, offset })
    }

    pub fn f(&self) -> &DMatrix<f64> {
        &self.f
    }

    pub fn offset(&self) -> &DVector<f64> {
        &self.offset
    }

    pub fn inner_dim(&self) -> usize {
        self.f.ncols()
    }

    pub fn outer_dim(&self) -> usize {
        self.f.nrows()
    }

    pub fn embed(&self, theta0: &DVector<f64>) -> DVector<f64> {
        &self.f * theta0 + &self.offset
    }
}

/// Coordinate-inclusion map from `inner` into `outer` (same Kronecker index,
/// smaller MA cap).
pub fn nesting_map(inner: &ParameterSpace, outer: &ParameterSpace) -> Result<NestingMap> {
    if inner.kronecker() != outer.kronecker() {
        return Err(Error::NotNested(format!(
            "Kronecker indices differ: {} vs {}",
            inner.kronecker(),
            outer.kronecker()
        )));
    }
    if inner.ma_cap() >= outer.ma_cap() {
        return Err(Error::NotNested(format!(
            "inner MA cap {} is not below outer MA cap {}",
            inner.ma_cap(),
            outer.ma_cap()
        )));
    }
    let mut f = DMatrix::zeros(outer.n_params(), inner.n_params());
    for (col, coord) in inner.coordinates().iter().enumerate() {
        let row = outer
            .coordinates()
            .iter()
            .position(|c| c == coord)
            .ok_or_else(|| Error::NotNested(format!("coordinate {coord:?} missing in outer space")))?;
        f[(row, col)] = 1.0;
    }
    NestingMap::new(f, DVector::zeros(outer.n_params()))
}

/// On-disk model description: `{kronecker, ma_cap, theta, sigma_chol}` with
/// optional bounds and, on output, the generated matrices (row-major).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub kronecker: Vec<usize>,
    pub ma_cap: usize,
    /// Structural coordinates (α and free K entries).
    #[serde(default)]
    pub theta: Vec<f64>,
    /// Lower triangle of the Cholesky factor of Σᴸ, row by row.
    #[serde(default)]
    pub sigma_chol: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lower: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub upper: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub matrices: Option<ModelMatrices>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelMatrices {
    pub a: Vec<Vec<f64>>,
    pub b: Vec<Vec<f64>>,
    pub c: Vec<Vec<f64>>,
    pub sigma_l: Vec<Vec<f64>>,
}

impl ModelMatrices {
    pub fn from_model(model: &StateSpaceModel) -> Self {
        Self {
            a: linalg::to_rows(model.a()),
            b: linalg::to_rows(model.b()),
            c: linalg::to_rows(model.c()),
            sigma_l: linalg::to_rows(model.sigma_l()),
        }
    }
}

impl ModelFile {
    pub fn space(&self) -> Result<ParameterSpace> {
        let space = ParameterSpace::new(KroneckerIndex::new(self.kronecker.clone())?, self.ma_cap)?;
        match (&self.lower, &self.upper) {
            (Some(lo), Some(hi)) => space.with_bounds(
                DVector::from_vec(lo.clone()),
                DVector::from_vec(hi.clone()),
            ),
            (None, None) => Ok(space),
            _ => Err(Error::InvalidInput("give both lower and upper bounds or neither".into())),
        }
    }

    /// Full parameter vector, or `None` when the file carries no parameter.
    pub fn parameter(&self) -> Result<Option<DVector<f64>>> {
        if self.theta.is_empty() && self.sigma_chol.is_empty() {
            return Ok(None);
        }
        let space = self.space()?;
        let theta: Vec<f64> = self.theta.iter().chain(&self.sigma_chol).copied().collect();
        if theta.len() != space.n_params() {
            return Err(Error::InvalidInput(format!(
                "model file has {} structural and {} Cholesky values; space {} with MA cap {} needs {} and {}",
                self.theta.len(),
                self.sigma_chol.len(),
                space.kronecker(),
                space.ma_cap(),
                space.n_params() - space.n_chol(),
                space.n_chol()
            )));
        }
        Ok(Some(DVector::from_vec(theta)))
    }

    pub fn from_parameter(space: &ParameterSpace, theta: &DVector<f64>) -> Result<Self> {
        let model = space.build(theta)?;
        let (structural, chol) = space.split(theta);
        Ok(Self {
            id: None,
            kronecker: space.kronecker().indices().to_vec(),
            ma_cap: space.ma_cap(),
            theta: structural,
            sigma_chol: chol,
            lower: None,
            upper: None,
            matrices: Some(ModelMatrices::from_model(&model)),
        })
    }
}
