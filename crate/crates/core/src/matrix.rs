//! Small dense matrices in row-major `f64` storage.
//!
//! Everything here is sized for the handful of matrices the adaptive
//! pipeline manipulates (at most `n² × n²` with `n ≤ 4`). Determinants and
//! adjugates are computed without pivoted LU for sizes up to six so that the
//! very small values produced by the regressor chain keep their relative
//! accuracy.

use std::fmt;
use std::ops::{Add, Index, IndexMut, Mul, Neg, Sub};

use crate::error::{Error, Result};

#[derive(Clone, PartialEq)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl fmt::Debug for Mat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Mat{}x{} [", self.rows, self.cols)?;
        for i in 0..self.rows {
            if i > 0 {
                write!(f, "; ")?;
            }
            for j in 0..self.cols {
                if j > 0 {
                    write!(f, ", ")?;
                }
                write!(f, "{}", self[(i, j)])?;
            }
        }
        write!(f, "]")
    }
}

impl Mat {
    /// Builds a matrix from row-major data, rejecting empty shapes and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::dim("Mat::new", format!("empty shape {rows}x{cols}")));
        }
        if data.len() != rows * cols {
            return Err(Error::dim(
                "Mat::new",
                format!("{} entries for shape {rows}x{cols}", data.len()),
            ));
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("Mat::new"));
        }
        Ok(Self { rows, cols, data })
    }

    /// Internal constructor for results of arithmetic on valid matrices.
    /// Skips the finiteness check: products of tiny and huge intermediates are
    /// allowed to saturate and are caught by the simulator instead.
    pub(crate) fn raw(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        debug_assert_eq!(data.len(), rows * cols);
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "empty matrix shape");
        Self::raw(rows, cols, vec![0.0; rows * cols])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::dim("Mat::from_rows", "ragged rows"));
        }
        Self::new(r, c, rows.concat())
    }

    pub fn col_vec(v: &[f64]) -> Self {
        assert!(!v.is_empty(), "empty column vector");
        Self::raw(v.len(), 1, v.to_vec())
    }

    pub fn row_vec(v: &[f64]) -> Self {
        assert!(!v.is_empty(), "empty row vector");
        Self::raw(1, v.len(), v.to_vec())
    }

    pub fn diag(d: &[f64]) -> Self {
        let mut m = Self::zeros(d.len(), d.len());
        for (i, &v) in d.iter().enumerate() {
            m[(i, i)] = v;
        }
        m
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

    pub fn is_square(&self) -> bool {
        self.rows == self.cols
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        self.data.chunks(self.cols).map(<[f64]>::to_vec).collect()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.data[i * self.cols..(i + 1) * self.cols].to_vec()
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self[(i, j)]).collect()
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    pub fn transpose(&self) -> Self {
        let mut t = Self::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t[(j, i)] = self[(i, j)];
            }
        }
        t
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::raw(
            self.rows,
            self.cols,
            self.data.iter().map(|v| v * s).collect(),
        )
    }

    pub fn trace(&self) -> f64 {
        (0..self.rows.min(self.cols)).map(|i| self[(i, i)]).sum()
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Maximum absolute row sum.
    pub fn norm_inf(&self) -> f64 {
        self.data
            .chunks(self.cols)
            .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
            .fold(0.0, f64::max)
    }

    pub fn try_mul(&self, rhs: &Mat) -> Result<Mat> {
        if self.cols != rhs.rows {
            return Err(Error::dim(
                "mul",
                format!("{}x{} * {}x{}", self.rows, self.cols, rhs.rows, rhs.cols),
            ));
        }
        let mut out = vec![0.0; self.rows * rhs.cols];
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let rrow = &rhs.data[k * rhs.cols..(k + 1) * rhs.cols];
                let orow = &mut out[i * rhs.cols..(i + 1) * rhs.cols];
                for (o, b) in orow.iter_mut().zip(rrow) {
                    *o += a * b;
                }
            }
        }
        Ok(Mat::raw(self.rows, rhs.cols, out))
    }

    /// Matrix-vector product with a plain slice.
    pub fn mul_vec(&self, v: &[f64]) -> Result<Vec<f64>> {
        if self.cols != v.len() {
            return Err(Error::dim(
                "mul_vec",
                format!("{}x{} * {}", self.rows, self.cols, v.len()),
            ));
        }
        Ok(self
            .data
            .chunks(self.cols)
            .map(|r| r.iter().zip(v).map(|(a, b)| a * b).sum())
            .collect())
    }

    fn zip_with(&self, rhs: &Mat, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Mat> {
        if self.shape() != rhs.shape() {
            return Err(Error::dim(
                op,
                format!("{:?} vs {:?}", self.shape(), rhs.shape()),
            ));
        }
        Ok(Mat::raw(
            self.rows,
            self.cols,
            self.data
                .iter()
                .zip(&rhs.data)
                .map(|(a, b)| f(*a, *b))
                .collect(),
        ))
    }

    pub fn try_add(&self, rhs: &Mat) -> Result<Mat> {
        self.zip_with(rhs, "add", |a, b| a + b)
    }

    pub fn try_sub(&self, rhs: &Mat) -> Result<Mat> {
        self.zip_with(rhs, "sub", |a, b| a - b)
    }

    /// Copy of `self` with row `skip_r` and column `skip_c` removed.
    pub fn minor(&self, skip_r: usize, skip_c: usize) -> Mat {
        let mut out = Vec::with_capacity((self.rows - 1) * (self.cols - 1));
        for i in (0..self.rows).filter(|&i| i != skip_r) {
            for j in (0..self.cols).filter(|&j| j != skip_c) {
                out.push(self[(i, j)]);
            }
        }
        Mat::raw(self.rows - 1, self.cols - 1, out)
    }

    pub(crate) fn require_square(&self, op: &'static str) -> Result<()> {
        if self.is_square() {
            Ok(())
        } else {
            Err(Error::dim(
                op,
                format!("{}x{} is not square", self.rows, self.cols),
            ))
        }
    }
}

impl Index<(usize, usize)> for Mat {
    type Output = f64;
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Mat {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

// Operator impls panic on shape mismatch; use the `try_*` forms when the
// shapes come from user input.
impl Mul for &Mat {
    type Output = Mat;
    fn mul(self, rhs: &Mat) -> Mat {
        self.try_mul(rhs).expect("matrix product shape mismatch")
    }
}

impl Add for &Mat {
    type Output = Mat;
    fn add(self, rhs: &Mat) -> Mat {
        self.try_add(rhs).expect("matrix sum shape mismatch")
    }
}

impl Sub for &Mat {
    type Output = Mat;
    fn sub(self, rhs: &Mat) -> Mat {
        self.try_sub(rhs).expect("matrix difference shape mismatch")
    }
}

impl Neg for &Mat {
    type Output = Mat;
    fn neg(self) -> Mat {
        self.scale(-1.0)
    }
}

/// Determinant. Closed form up to 3×3, Laplace expansion up to 6×6,
/// fraction-free (Bareiss) elimination beyond.
pub fn det(m: &Mat) -> Result<f64> {
    m.require_square("det")?;
    Ok(det_unchecked(m))
}

fn det_unchecked(m: &Mat) -> f64 {
    let a = &m.data;
    match m.rows {
        1 => a[0],
        2 => a[0] * a[3] - a[1] * a[2],
        3 => {
            a[0] * (a[4] * a[8] - a[5] * a[7]) - a[1] * (a[3] * a[8] - a[5] * a[6])
                + a[2] * (a[3] * a[7] - a[4] * a[6])
        }
        4..=6 => laplace(m),
        _ => bareiss(m),
    }
}

fn laplace(m: &Mat) -> f64 {
    // expand along the row with the most zeros
    let n = m.rows;
    let row = (0..n)
        .max_by_key(|&i| (0..n).filter(|&j| m[(i, j)] == 0.0).count())
        .unwrap_or(0);
    let mut acc = 0.0;
    for j in 0..n {
        let a = m[(row, j)];
        if a == 0.0 {
            continue;
        }
        let sign = if (row + j) % 2 == 0 { 1.0 } else { -1.0 };
        acc += sign * a * det_unchecked(&m.minor(row, j));
    }
    acc
}

fn bareiss(m: &Mat) -> f64 {
    let n = m.rows;
    let mut a = m.data.clone();
    let mut sign = 1.0;
    let mut prev = 1.0;
    for k in 0..n - 1 {
        let p = (k..n)
            .max_by(|&i, &j| a[i * n + k].abs().total_cmp(&a[j * n + k].abs()))
            .unwrap_or(k);
        if a[p * n + k] == 0.0 {
            return 0.0;
        }
        if p != k {
            for j in 0..n {
                a.swap(k * n + j, p * n + j);
            }
            sign = -sign;
        }
        let pivot = a[k * n + k];
        for i in k + 1..n {
            for j in k + 1..n {
                a[i * n + j] = (a[i * n + j] * pivot - a[i * n + k] * a[k * n + j]) / prev;
            }
            a[i * n + k] = 0.0;
        }
        prev = pivot;
    }
    sign * a[n * n - 1]
}

/// Classical adjoint: transpose of the cofactor matrix. Defined for singular
/// input, and `adjugate([[a]]) = [[1]]`.
pub fn adjugate(m: &Mat) -> Result<Mat> {
    m.require_square("adjugate")?;
    let n = m.rows;
    if n == 1 {
        return Ok(Mat::raw(1, 1, vec![1.0]));
    }
    if n == 2 {
        let a = &m.data;
        return Ok(Mat::raw(2, 2, vec![a[3], -a[1], -a[2], a[0]]));
    }
    let mut adj = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let sign = if (i + j) % 2 == 0 { 1.0 } else { -1.0 };
            adj[(j, i)] = sign * det_unchecked(&m.minor(i, j));
        }
    }
    Ok(adj)
}

/// Kronecker product; block `(i, j)` equals `a[i, j] * b`.
pub fn kron(a: &Mat, b: &Mat) -> Mat {
    let (ar, ac) = a.shape();
    let (br, bc) = b.shape();
    let mut out = Mat::zeros(ar * br, ac * bc);
    for i in 0..ar {
        for j in 0..ac {
            let s = a[(i, j)];
            if s == 0.0 {
                continue;
            }
            for p in 0..br {
                for q in 0..bc {
                    out[(i * br + p, j * bc + q)] = s * b[(p, q)];
                }
            }
        }
    }
    out
}

/// Column-major stacking into a column vector.
pub fn vec(m: &Mat) -> Mat {
    let mut out = Vec::with_capacity(m.rows * m.cols);
    for j in 0..m.cols {
        for i in 0..m.rows {
            out.push(m[(i, j)]);
        }
    }
    Mat::raw(out.len(), 1, out)
}

/// Inverse of [`vec()`].
pub fn unvec(v: &Mat, rows: usize, cols: usize) -> Result<Mat> {
    if v.cols != 1 && v.rows != 1 {
        return Err(Error::dim("unvec", "input is not a vector"));
    }
    if rows == 0 || cols == 0 || v.data.len() != rows * cols {
        return Err(Error::dim(
            "unvec",
            format!("length {} into {rows}x{cols}", v.data.len()),
        ));
    }
    let mut out = Mat::zeros(rows, cols);
    for j in 0..cols {
        for i in 0..rows {
            out[(i, j)] = v.data[j * rows + i];
        }
    }
    Ok(out)
}

/// Monic characteristic polynomial `det(λI − m)` in descending powers,
/// via the Faddeev–LeVerrier recursion.
pub fn char_poly(m: &Mat) -> Result<Vec<f64>> {
    m.require_square("char_poly")?;
    let n = m.rows;
    let mut coeffs = vec![0.0; n + 1];
    coeffs[0] = 1.0;
    let ident = Mat::identity(n);
    let mut mk = Mat::zeros(n, n);
    for k in 1..=n {
        // M_k = A M_{k-1} + c_{k-1} I,   c_k = -tr(A M_k) / k
        mk = &(m * &mk) + &ident.scale(coeffs[k - 1]);
        coeffs[k] = -(m * &mk).trace() / k as f64;
    }
    Ok(coeffs)
}

/// Solves `a x = b` by Gaussian elimination with partial pivoting.
///
/// `a` is rejected as singular when `|det a| < 1e-12 · ‖a‖∞^size`.
pub fn solve_linear(a: &Mat, b: &Mat) -> Result<Mat> {
    a.require_square("solve_linear")?;
    let n = a.rows;
    if b.rows != n {
        return Err(Error::dim(
            "solve_linear",
            format!("{n}x{n} system with {}-row right-hand side", b.rows),
        ));
    }
    let m = b.cols;
    // a pivot at rounding level relative to the entries means numerically singular
    let tiny = n as f64 * f64::EPSILON * a.max_abs();
    let mut lu = a.data.clone();
    let mut x = b.data.clone();
    let mut det_acc = 1.0;
    for k in 0..n {
        let p = (k..n)
            .max_by(|&i, &j| lu[i * n + k].abs().total_cmp(&lu[j * n + k].abs()))
            .unwrap_or(k);
        if p != k {
            for j in 0..n {
                lu.swap(k * n + j, p * n + j);
            }
            for j in 0..m {
                x.swap(k * m + j, p * m + j);
            }
            det_acc = -det_acc;
        }
        let pivot = lu[k * n + k];
        det_acc *= pivot;
        if pivot.abs() <= tiny {
            return Err(Error::Singular { det: det_acc.abs() });
        }
        for i in k + 1..n {
            let f = lu[i * n + k] / pivot;
            if f == 0.0 {
                continue;
            }
            for j in k..n {
                lu[i * n + j] -= f * lu[k * n + j];
            }
            for j in 0..m {
                x[i * m + j] -= f * x[k * m + j];
            }
        }
    }
    for k in (0..n).rev() {
        for j in 0..m {
            let mut s = x[k * m + j];
            for c in k + 1..n {
                s -= lu[k * n + c] * x[c * m + j];
            }
            x[k * m + j] = s / lu[k * n + k];
        }
    }
    Ok(Mat::raw(n, m, x))
}

pub fn inverse(a: &Mat) -> Result<Mat> {
    solve_linear(a, &Mat::identity(a.rows()))
}

/// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations, sorted
/// ascending. Only the upper triangle is read.
pub fn symmetric_eigenvalues(m: &Mat) -> Result<Vec<f64>> {
    m.require_square("symmetric_eigenvalues")?;
    let n = m.rows;
    let mut a = m.clone();
    for i in 0..n {
        for j in 0..i {
            a[(i, j)] = a[(j, i)];
        }
    }
    let scale = a.norm().max(f64::MIN_POSITIVE);
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[(i, j)] * a[(i, j)])
            .sum::<f64>()
            .sqrt();
        if off <= 1e-15 * scale {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                let apq = a[(p, q)];
                if apq == 0.0 {
                    continue;
                }
                let theta = (a[(q, q)] - a[(p, p)]) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[(k, p)];
                    let akq = a[(k, q)];
                    a[(k, p)] = c * akp - s * akq;
                    a[(k, q)] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[(p, k)];
                    let aqk = a[(q, k)];
                    a[(p, k)] = c * apk - s * aqk;
                    a[(q, k)] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[(i, i)]).collect();
    eig.sort_by(f64::total_cmp);
    Ok(eig)
}
