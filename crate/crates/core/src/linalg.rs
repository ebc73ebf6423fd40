//! Dense vectors, small row-major matrices and the subspace operations built
//! on them: orthogonal projection, Gram-Schmidt, one-sided Jacobi SVD and
//! principal angles.
//!
//! Everything is `f64`. None of this aims at BLAS-level throughput; the
//! matrices involved are embedding-sized vectors and probes of rank ≤ 256.

use std::fmt;
use std::ops::{Deref, Index, IndexMut};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Norms below this are treated as zero by [`normalize`] and [`cosine`].
pub const MIN_NORM: f64 = 1e-12;

/// Tolerance of the orthonormality invariant on [`SubspaceBasis`].
pub const ORTHONORMAL_TOL: f64 = 1e-8;

/// Largest side accepted by [`svd_small`].
pub const SVD_MAX_DIM: usize = 256;

const JACOBI_TOL: f64 = 1e-12;
const JACOBI_MAX_SWEEPS: usize = 60;
const RANK_TOL: f64 = 1e-10;

/// A dense vector of finite `f64` values.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vector(Vec<f64>);

impl Vector {
    /// Wraps `values`, rejecting empty input and non-finite entries.
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidInput("vector must have at least one entry".into()));
        }
        if values.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("vector"));
        }
        Ok(Vector(values))
    }

    pub fn zeros(dim: usize) -> Self {
        Vector(vec![0.0; dim])
    }

    /// The `i`-th standard basis vector of length `dim`.
    pub fn basis(dim: usize, i: usize) -> Self {
        let mut v = vec![0.0; dim];
        v[i] = 1.0;
        Vector(v)
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm_slice(&self.0)
    }

    pub fn norm_squared(&self) -> f64 {
        dot_slice(&self.0, &self.0)
    }

    /// True when `|‖v‖ - 1| ≤ tol`.
    pub fn is_unit(&self, tol: f64) -> bool {
        (self.norm() - 1.0).abs() <= tol
    }

    pub fn scaled(&self, c: f64) -> Vector {
        Vector(self.0.iter().map(|x| x * c).collect())
    }

    pub fn add(&self, other: &Vector) -> Result<Vector> {
        check_dims(self.dim(), other.dim())?;
        Ok(Vector(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect()))
    }

    pub fn sub(&self, other: &Vector) -> Result<Vector> {
        check_dims(self.dim(), other.dim())?;
        Ok(Vector(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect()))
    }

    /// `self += c * other`
    pub fn axpy(&mut self, c: f64, other: &Vector) -> Result<()> {
        check_dims(self.dim(), other.dim())?;
        axpy_slice(&mut self.0, c, &other.0);
        Ok(())
    }

    pub fn max_abs(&self) -> f64 {
        self.0.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }
}

impl From<Vec<f64>> for Vector {
    /// Unchecked conversion; callers guarantee finiteness.
    fn from(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|x| x.is_finite()));
        Vector(values)
    }
}

impl Deref for Vector {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl fmt::Debug for Vector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.0.iter()).finish()
    }
}

/// A dense row-major matrix of finite `f64` values.
#[derive(Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawMatrix", into = "RawMatrix")]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct RawMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl TryFrom<RawMatrix> for Matrix {
    type Error = Error;

    fn try_from(raw: RawMatrix) -> Result<Self> {
        Matrix::new(raw.rows, raw.cols, raw.data)
    }
}

impl From<Matrix> for RawMatrix {
    fn from(m: Matrix) -> Self {
        RawMatrix { rows: m.rows, cols: m.cols, data: m.data }
    }
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput(format!("matrix shape {rows}x{cols} must be positive")));
        }
        if data.len() != rows * cols {
            return Err(Error::DimensionMismatch { expected: rows * cols, found: data.len() });
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite("matrix"));
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a `dim × cols.len()` matrix whose columns are `cols`.
    pub fn from_columns(cols: &[Vector]) -> Result<Self> {
        let first = cols.first().ok_or_else(|| Error::InvalidInput("no columns".into()))?;
        let rows = first.dim();
        let mut m = Matrix::zeros(rows, cols.len());
        for (j, c) in cols.iter().enumerate() {
            check_dims(rows, c.dim())?;
            for i in 0..rows {
                m[(i, j)] = c[i];
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    /// Row-major payload.
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn column(&self, j: usize) -> Vector {
        Vector((0..self.rows).map(|i| self[(i, j)]).collect())
    }

    pub fn transpose(&self) -> Matrix {
        let mut t = Matrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn matmul(&self, other: &Matrix) -> Result<Matrix> {
        check_dims(self.cols, other.rows)?;
        let mut out = Matrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for (k, &a) in self.row(i).iter().enumerate() {
                if a != 0.0 {
                    axpy_slice(out_row, a, other.row(k));
                }
            }
        }
        Ok(out)
    }

    /// `M x`
    pub fn mul_vec(&self, x: &[f64]) -> Result<Vector> {
        check_dims(self.cols, x.len())?;
        Ok(Vector((0..self.rows).map(|i| dot_slice(self.row(i), x)).collect()))
    }

    /// `Mᵀ x`
    pub fn tmul_vec(&self, x: &[f64]) -> Result<Vector> {
        check_dims(self.rows, x.len())?;
        let mut out = vec![0.0; self.cols];
        self.tmul_into(x, &mut out);
        Ok(Vector(out))
    }

    /// `out = Mᵀ x` without shape checks; used on hot training paths.
    pub(crate) fn tmul_into(&self, x: &[f64], out: &mut [f64]) {
        out.iter_mut().for_each(|o| *o = 0.0);
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                axpy_slice(out, xi, self.row(i));
            }
        }
    }

    pub fn scaled(&self, c: f64) -> Matrix {
        Matrix { rows: self.rows, cols: self.cols, data: self.data.iter().map(|x| x * c).collect() }
    }

    pub fn sub(&self, other: &Matrix) -> Result<Matrix> {
        if self.shape() != other.shape() {
            return Err(Error::DimensionMismatch { expected: self.data.len(), found: other.data.len() });
        }
        Ok(Matrix {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().zip(&other.data).map(|(a, b)| a - b).collect(),
        })
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
    }

    pub fn is_symmetric(&self, tol: f64) -> bool {
        self.rows == self.cols && (0..self.rows).all(|i| (0..i).all(|j| (self[(i, j)] - self[(j, i)]).abs() <= tol))
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

impl fmt::Debug for Matrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "Matrix {}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            writeln!(f, "  {:?}", self.row(i))?;
        }
        write!(f, "]")
    }
}

/// An orthonormal basis `Q` (`d × k`) of a subspace `S`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Matrix", into = "Matrix")]
pub struct SubspaceBasis {
    q: Matrix,
}

impl TryFrom<Matrix> for SubspaceBasis {
    type Error = Error;

    fn try_from(q: Matrix) -> Result<Self> {
        SubspaceBasis::new(q)
    }
}

impl From<SubspaceBasis> for Matrix {
    fn from(b: SubspaceBasis) -> Self {
        b.q
    }
}

impl SubspaceBasis {
    /// Wraps `q` after checking `‖QᵀQ − I‖_max ≤ 1e-8`.
    pub fn new(q: Matrix) -> Result<Self> {
        if q.cols() > q.rows() {
            return Err(Error::InvalidInput(format!(
                "basis has {} columns in ambient dimension {}",
                q.cols(),
                q.rows()
            )));
        }
        let deviation = orthonormality_deviation(&q);
        if deviation > ORTHONORMAL_TOL {
            return Err(Error::NotOrthonormal { deviation });
        }
        Ok(SubspaceBasis { q })
    }

    pub fn matrix(&self) -> &Matrix {
        &self.q
    }

    pub fn ambient_dim(&self) -> usize {
        self.q.rows()
    }

    pub fn dim(&self) -> usize {
        self.q.cols()
    }

    /// Coordinates `Qᵀv` of the projection of `v` in the basis.
    pub fn coords(&self, v: &[f64]) -> Result<Vector> {
        self.q.tmul_vec(v)
    }

    /// `Q c` for subspace coordinates `c`.
    pub fn embed(&self, c: &[f64]) -> Result<Vector> {
        self.q.mul_vec(c)
    }

    /// `P_S v = QQᵀv`
    pub fn project(&self, v: &[f64]) -> Result<Vector> {
        let c = self.coords(v)?;
        self.embed(&c)
    }
}

pub(crate) fn dot_slice(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

pub(crate) fn norm_slice(u: &[f64]) -> f64 {
    dot_slice(u, u).sqrt()
}

pub(crate) fn axpy_slice(y: &mut [f64], c: f64, x: &[f64]) {
    for (yi, xi) in y.iter_mut().zip(x) {
        *yi += c * xi;
    }
}

pub(crate) fn check_dims(expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, found })
    }
}

/// Inner product `Σ uᵢvᵢ`.
pub fn dot(u: &[f64], v: &[f64]) -> Result<f64> {
    check_dims(u.len(), v.len())?;
    Ok(dot_slice(u, v))
}

/// Cosine similarity, clamped to `[-1, 1]`.
pub fn cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    check_dims(u.len(), v.len())?;
    let (nu, nv) = (norm_slice(u), norm_slice(v));
    if nu <= MIN_NORM {
        return Err(Error::ZeroNorm { norm: nu });
    }
    if nv <= MIN_NORM {
        return Err(Error::ZeroNorm { norm: nv });
    }
    Ok((dot_slice(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// Rescales `v` to unit norm.
pub fn normalize(v: &[f64]) -> Result<Vector> {
    let n = norm_slice(v);
    if n.is_nan() || n <= MIN_NORM {
        return Err(Error::ZeroNorm { norm: n });
    }
    Ok(Vector(v.iter().map(|x| x / n).collect()))
}

/// Splits `v` into its component in `S` and the orthogonal remainder.
pub fn project_split(v: &[f64], basis: &SubspaceBasis) -> Result<(Vector, Vector)> {
    check_dims(basis.ambient_dim(), v.len())?;
    let in_s = basis.project(v)?;
    let perp = Vector(v.iter().zip(in_s.iter()).map(|(a, b)| a - b).collect());
    Ok((in_s, perp))
}

/// `‖QᵀQ − I‖_max`
pub fn orthonormality_deviation(q: &Matrix) -> f64 {
    let cols: Vec<Vector> = (0..q.cols()).map(|j| q.column(j)).collect();
    let mut worst = 0.0_f64;
    for i in 0..cols.len() {
        for j in 0..=i {
            let target = if i == j { 1.0 } else { 0.0 };
            worst = worst.max((dot_slice(&cols[i], &cols[j]) - target).abs());
        }
    }
    worst
}

/// Orthonormal basis of the column span of `m` by modified Gram-Schmidt with
/// a second reorthogonalization pass.
///
/// A column whose residual after both passes falls below `1e-10` of its
/// original norm makes the input rank deficient.
pub fn orthonormalize(m: &Matrix) -> Result<SubspaceBasis> {
    if m.cols() > m.rows() {
        return Err(Error::RankDeficient { column: m.rows() });
    }
    let mut q: Vec<Vector> = Vec::with_capacity(m.cols());
    for j in 0..m.cols() {
        let mut v = m.column(j);
        let original = v.norm();
        for _pass in 0..2 {
            for qi in &q {
                let c = dot_slice(qi, &v);
                axpy_slice(v.as_mut_slice(), -c, qi);
            }
        }
        let residual = v.norm();
        if original == 0.0 || residual <= RANK_TOL * original {
            return Err(Error::RankDeficient { column: j });
        }
        q.push(v.scaled(1.0 / residual));
    }
    SubspaceBasis::new(Matrix::from_columns(&q)?)
}

/// Thin singular value decomposition `M = U diag(σ) Vᵀ`.
#[derive(Clone, Debug)]
pub struct Svd {
    /// `rows × p` with orthonormal columns, `p = min(rows, cols)`.
    pub u: Matrix,
    /// Descending, non-negative.
    pub sigma: Vec<f64>,
    /// `cols × p` with orthonormal columns.
    pub v: Matrix,
    pub sweeps: usize,
}

/// One-sided (Hestenes) Jacobi SVD for matrices with both sides ≤ 256.
pub fn svd_small(m: &Matrix) -> Result<Svd> {
    if m.rows() > SVD_MAX_DIM || m.cols() > SVD_MAX_DIM {
        return Err(Error::InvalidInput(format!(
            "svd_small supports at most {SVD_MAX_DIM}x{SVD_MAX_DIM}, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    if m.rows() < m.cols() {
        let t = svd_tall(&m.transpose());
        return Ok(Svd { u: t.v, sigma: t.sigma, v: t.u, sweeps: t.sweeps });
    }
    Ok(svd_tall(m))
}

fn svd_tall(m: &Matrix) -> Svd {
    let (rows, n) = m.shape();
    // Work on columns: a[j] is column j of the running A·V.
    let mut a: Vec<Vec<f64>> = (0..n).map(|j| m.column(j).into_inner()).collect();
    let mut v: Vec<Vec<f64>> = (0..n).map(|j| Vector::basis(n, j).into_inner()).collect();

    let mut sweeps = 0;
    for _ in 0..JACOBI_MAX_SWEEPS {
        sweeps += 1;
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot_slice(&a[p], &a[p]);
                let beta = dot_slice(&a[q], &a[q]);
                let gamma = dot_slice(&a[p], &a[q]);
                if gamma == 0.0 || gamma.abs() <= JACOBI_TOL * (alpha * beta).sqrt() {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = zeta.signum() / (zeta.abs() + (1.0 + zeta * zeta).sqrt());
                let c = 1.0 / (1.0 + t * t).sqrt();
                let s = c * t;
                rotate(&mut a, p, q, c, s);
                rotate(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }
    if sweeps == JACOBI_MAX_SWEEPS {
        log::warn!("jacobi svd hit the sweep limit ({JACOBI_MAX_SWEEPS})");
    }

    let mut order: Vec<(usize, f64)> = a.iter().map(|c| norm_slice(c)).enumerate().collect();
    order.sort_by(|x, y| y.1.total_cmp(&x.1).then(x.0.cmp(&y.0)));
    let sigma_max = order.first().map_or(0.0, |o| o.1);

    let mut u_cols: Vec<Vector> = Vec::with_capacity(n);
    let mut sigma = Vec::with_capacity(n);
    let mut v_cols = Vec::with_capacity(n);
    let mut pending_null = Vec::new();
    for (slot, &(j, s)) in order.iter().enumerate() {
        sigma.push(s);
        v_cols.push(Vector(v[j].clone()));
        if s > 0.0 && s > 1e-14 * sigma_max {
            u_cols.push(Vector(a[j].iter().map(|x| x / s).collect()));
        } else {
            pending_null.push(slot);
            u_cols.push(Vector::zeros(rows));
        }
    }
    // Null singular directions: complete U to an orthonormal set.
    for slot in pending_null {
        sigma[slot] = 0.0;
        u_cols[slot] = complete_orthonormal(&u_cols, rows);
    }
    Svd {
        u: Matrix::from_columns(&u_cols).expect("non-empty"),
        sigma,
        v: Matrix::from_columns(&v_cols).expect("non-empty"),
        sweeps,
    }
}

fn rotate(cols: &mut [Vec<f64>], p: usize, q: usize, c: f64, s: f64) {
    let (left, right) = cols.split_at_mut(q);
    let (cp, cq) = (&mut left[p], &mut right[0]);
    for (x, y) in cp.iter_mut().zip(cq.iter_mut()) {
        let (xp, xq) = (*x, *y);
        *x = c * xp - s * xq;
        *y = s * xp + c * xq;
    }
}

/// A unit vector orthogonal to every nonzero column in `existing`.
fn complete_orthonormal(existing: &[Vector], dim: usize) -> Vector {
    for i in 0..dim {
        let mut e = Vector::basis(dim, i);
        for _pass in 0..2 {
            for q in existing.iter().filter(|q| q.norm_squared() > 0.5) {
                let c = dot_slice(q, &e);
                axpy_slice(e.as_mut_slice(), -c, q);
            }
        }
        let n = e.norm();
        if n > 1e-6 {
            return e.scaled(1.0 / n);
        }
    }
    unreachable!("fewer than `dim` orthonormal columns always leave a free direction")
}

/// Cosines of the principal angles between `span(Q1)` and `span(Q2)`, in
/// descending order; the singular values of `Q1ᵀQ2`.
pub fn principal_angle_cosines(q1: &SubspaceBasis, q2: &SubspaceBasis) -> Result<Vec<f64>> {
    check_dims(q1.ambient_dim(), q2.ambient_dim())?;
    let cross = q1.matrix().transpose().matmul(q2.matrix())?;
    let svd = svd_small(&cross)?;
    Ok(svd.sigma.into_iter().map(|s| s.clamp(0.0, 1.0)).collect())
}
