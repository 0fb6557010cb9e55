//! Small dense symmetric positive-definite linear algebra.
//!
//! Everything here works on row-major `Vec<f64>` storage and targets the
//! low dimensions used by the bandit estimators (d up to a few dozen).
//! [`SpdState`] maintains a regularized Gram matrix `λI + Σ w·x·xᵀ` together
//! with its inverse, updated by the Sherman–Morrison identity and refreshed
//! from a Cholesky factorization every `refresh_every` updates.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Default number of rank-1 updates between full inverse recomputations.
pub const DEFAULT_REFRESH_EVERY: usize = 4096;

const REFRESH_TOL: f64 = 1e-6;
const SOLVE_TOL: f64 = 1e-8;

/// Dense row-major matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mat {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Mat {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::scaled_identity(n, 1.0)
    }

    pub fn scaled_identity(n: usize, s: f64) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = s;
        }
        m
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(invalid(format!(
                "matrix data has {} entries, expected {}x{}",
                data.len(),
                rows,
                cols
            )));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        let mut data = Vec::with_capacity(r * c);
        for (i, row) in rows.iter().enumerate() {
            if row.len() != c {
                return Err(invalid(format!(
                    "row {i} has {} columns, expected {c}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        Ok(Self {
            rows: r,
            cols: c,
            data,
        })
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.data[i * self.cols + j] = v;
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.rows).map(|i| self.get(i, j)).collect()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn to_rows(&self) -> Vec<Vec<f64>> {
        (0..self.rows).map(|i| self.row(i).to_vec()).collect()
    }

    pub fn transpose(&self) -> Mat {
        let mut t = Mat::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                t.set(j, i, self.get(i, j));
            }
        }
        t
    }

    pub fn matmul(&self, other: &Mat) -> Mat {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let mut out = Mat::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            let out_row = &mut out.data[i * other.cols..(i + 1) * other.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == 0.0 {
                    continue;
                }
                let b_row = &other.data[k * other.cols..(k + 1) * other.cols];
                for (o, b) in out_row.iter_mut().zip(b_row) {
                    *o += a * b;
                }
            }
        }
        out
    }

    pub fn mat_vec(&self, x: &[f64]) -> Vec<f64> {
        debug_assert_eq!(x.len(), self.cols);
        (0..self.rows).map(|i| dot(self.row(i), x)).collect()
    }

    /// `xᵀ·A·x` for square `A`.
    pub fn quad_form(&self, x: &[f64]) -> f64 {
        debug_assert_eq!(self.rows, self.cols);
        let mut acc = 0.0;
        for i in 0..self.rows {
            acc += x[i] * dot(self.row(i), x);
        }
        acc
    }

    pub fn max_abs_diff(&self, other: &Mat) -> f64 {
        self.data
            .iter()
            .zip(&other.data)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).fold(0.0, f64::max)
    }

    pub fn frobenius(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }

    /// Largest componentwise asymmetry `|a_ij − a_ji|`.
    pub fn asymmetry(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for i in 0..self.rows {
            for j in (i + 1)..self.cols {
                worst = worst.max((self.get(i, j) - self.get(j, i)).abs());
            }
        }
        worst
    }

    pub fn symmetrize(&mut self) {
        let n = self.rows;
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (self.get(i, j) + self.get(j, i));
                self.set(i, j, v);
                self.set(j, i, v);
            }
        }
    }

    /// `self += s·x·xᵀ`.
    pub fn add_outer(&mut self, x: &[f64], s: f64) {
        let n = self.rows;
        for i in 0..n {
            let xi = s * x[i];
            if xi == 0.0 {
                continue;
            }
            for j in i..n {
                let v = xi * x[j];
                self.data[i * n + j] += v;
                if j != i {
                    self.data[j * n + i] += v;
                }
            }
        }
    }

    pub fn add_assign(&mut self, other: &Mat) {
        for (a, b) in self.data.iter_mut().zip(&other.data) {
            *a += b;
        }
    }

    pub fn add_diag(&mut self, s: f64) {
        let n = self.rows.min(self.cols);
        for i in 0..n {
            self.data[i * self.cols + i] += s;
        }
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

#[inline]
pub fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn dist2(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

/// Lower Cholesky factor `L` with `A = L·Lᵀ`.
pub fn cholesky(a: &Mat) -> Result<Mat> {
    let n = a.rows();
    if n != a.cols() {
        return Err(invalid("cholesky needs a square matrix"));
    }
    let mut l = Mat::zeros(n, n);
    for j in 0..n {
        let mut diag = a.get(j, j);
        for k in 0..j {
            diag -= l.get(j, k) * l.get(j, k);
        }
        if !(diag > 0.0) || !diag.is_finite() {
            return Err(Error::Numeric(format!(
                "matrix not positive definite (pivot {j} = {diag:e})"
            )));
        }
        let ljj = diag.sqrt();
        l.set(j, j, ljj);
        for i in (j + 1)..n {
            let mut s = a.get(i, j);
            for k in 0..j {
                s -= l.get(i, k) * l.get(j, k);
            }
            l.set(i, j, s / ljj);
        }
    }
    Ok(l)
}

/// Solves `L·Lᵀ·x = b` given the lower Cholesky factor.
pub fn cholesky_solve(l: &Mat, b: &[f64]) -> Vec<f64> {
    let n = l.rows();
    let mut y = vec![0.0; n];
    for i in 0..n {
        let mut s = b[i];
        for k in 0..i {
            s -= l.get(i, k) * y[k];
        }
        y[i] = s / l.get(i, i);
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = y[i];
        for k in (i + 1)..n {
            s -= l.get(k, i) * x[k];
        }
        x[i] = s / l.get(i, i);
    }
    x
}

/// Inverse of a symmetric positive-definite matrix via Cholesky.
pub fn spd_inverse(a: &Mat) -> Result<Mat> {
    let n = a.rows();
    let l = cholesky(a)?;
    let mut inv = Mat::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e.iter_mut().for_each(|v| *v = 0.0);
        e[j] = 1.0;
        let col = cholesky_solve(&l, &e);
        for i in 0..n {
            inv.set(i, j, col[i]);
        }
    }
    inv.symmetrize();
    Ok(inv)
}

/// Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.
///
/// Returns eigenvalues in ascending order and the matching eigenvectors as
/// the columns of the returned matrix.
pub fn sym_eigen(m: &Mat) -> Result<(Vec<f64>, Mat)> {
    let n = m.rows();
    if n != m.cols() {
        return Err(invalid("eigen-decomposition needs a square matrix"));
    }
    let scale = 1.0 + m.max_abs();
    if m.asymmetry() > 1e-8 * scale {
        return Err(invalid(format!(
            "matrix is not symmetric (asymmetry {:e})",
            m.asymmetry()
        )));
    }
    let mut a = m.clone();
    a.symmetrize();
    let mut v = Mat::identity(n);
    let norm = a.frobenius();

    for _sweep in 0..100 {
        let mut off = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                off += a.get(i, j) * a.get(i, j);
            }
        }
        if off.sqrt() <= 1e-15 * norm || off == 0.0 {
            break;
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a.get(p, q);
                if apq == 0.0 {
                    continue;
                }
                let app = a.get(p, p);
                let aqq = a.get(q, q);
                let theta = (aqq - app) / (2.0 * apq);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a.get(k, p);
                    let akq = a.get(k, q);
                    a.set(k, p, c * akp - s * akq);
                    a.set(k, q, s * akp + c * akq);
                }
                for k in 0..n {
                    let apk = a.get(p, k);
                    let aqk = a.get(q, k);
                    a.set(p, k, c * apk - s * aqk);
                    a.set(q, k, s * apk + c * aqk);
                }
                a.set(p, q, 0.0);
                a.set(q, p, 0.0);
                for k in 0..n {
                    let vkp = v.get(k, p);
                    let vkq = v.get(k, q);
                    v.set(k, p, c * vkp - s * vkq);
                    v.set(k, q, s * vkp + c * vkq);
                }
            }
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a.get(i, i).total_cmp(&a.get(j, j)));
    let values = order.iter().map(|&i| a.get(i, i)).collect();
    let mut vectors = Mat::zeros(n, n);
    for (new_j, &old_j) in order.iter().enumerate() {
        for k in 0..n {
            vectors.set(k, new_j, v.get(k, old_j));
        }
    }
    Ok((values, vectors))
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &Mat) -> Result<f64> {
    if m.rows() == 0 {
        return Err(invalid("empty matrix"));
    }
    let (values, _) = sym_eigen(m)?;
    Ok(values[0])
}

/// Regularized Gram matrix `λI + Σ w·x·xᵀ` with a maintained inverse.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpdState {
    reg: f64,
    gram: Mat,
    inv: Mat,
    update_count: usize,
    refresh_every: usize,
}

impl SpdState {
    pub fn new(dim: usize, reg: f64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("dimension must be positive"));
        }
        if !(reg > 0.0) || !reg.is_finite() {
            return Err(invalid(format!("regularizer must be positive, got {reg}")));
        }
        Ok(Self {
            reg,
            gram: Mat::scaled_identity(dim, reg),
            inv: Mat::scaled_identity(dim, 1.0 / reg),
            update_count: 0,
            refresh_every: DEFAULT_REFRESH_EVERY,
        })
    }

    pub fn with_refresh_every(mut self, every: usize) -> Self {
        self.refresh_every = every.max(1);
        self
    }

    /// Builds `λI + Σ parts` with the inverse computed by factorization.
    pub fn from_gram_part(part: &Mat, reg: f64) -> Result<Self> {
        let mut s = Self::new(part.rows(), reg)?;
        if part.rows() != part.cols() {
            return Err(invalid("gram part must be square"));
        }
        s.gram.add_assign(part);
        s.refresh()?;
        Ok(s)
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.gram.rows()
    }

    #[inline]
    pub fn reg(&self) -> f64 {
        self.reg
    }

    pub fn gram(&self) -> &Mat {
        &self.gram
    }

    pub fn inv(&self) -> &Mat {
        &self.inv
    }

    /// Updates applied since the last refresh.
    pub fn update_count(&self) -> usize {
        self.update_count
    }

    /// `gram − λI`: the data part of the matrix.
    pub fn gram_part(&self) -> Mat {
        let mut m = self.gram.clone();
        m.add_diag(-self.reg);
        m
    }

    /// `gram += w·x·xᵀ` with a Sherman–Morrison update of the inverse.
    pub fn rank1_update(&mut self, x: &[f64], w: f64) -> Result<()> {
        if x.len() != self.dim() {
            return Err(invalid(format!(
                "vector has length {}, expected {}",
                x.len(),
                self.dim()
            )));
        }
        if !(w >= 0.0) || !w.is_finite() {
            return Err(invalid(format!("weight must be nonnegative, got {w}")));
        }
        if w == 0.0 {
            return Ok(());
        }
        self.gram.add_outer(x, w);
        let ax = self.inv.mat_vec(x);
        let denom = 1.0 + w * dot(x, &ax);
        self.inv.add_outer(&ax, -w / denom);
        self.update_count += 1;
        if self.update_count >= self.refresh_every {
            self.refresh()?;
        }
        Ok(())
    }

    /// Recomputes the inverse from the Gram matrix.
    pub fn refresh(&mut self) -> Result<()> {
        self.inv = spd_inverse(&self.gram)?;
        self.update_count = 0;
        let drift = self.inverse_residual();
        if drift > REFRESH_TOL {
            return Err(Error::Numeric(format!(
                "inverse residual {drift:e} after refresh"
            )));
        }
        Ok(())
    }

    /// `‖gram·inv − I‖_max`.
    pub fn inverse_residual(&self) -> f64 {
        let mut prod = self.gram.matmul(&self.inv);
        prod.add_diag(-1.0);
        prod.max_abs()
    }

    /// `‖x‖_{gram⁻¹} = √(xᵀ·inv·x)`.
    pub fn mahalanobis(&self, x: &[f64]) -> f64 {
        self.inv.quad_form(x).max(0.0).sqrt()
    }

    /// `gram⁻¹·b`, residual-checked; refreshes and retries once on failure.
    pub fn solve(&mut self, b: &[f64]) -> Result<Vec<f64>> {
        let x = self.inv.mat_vec(b);
        if self.residual_ok(&x, b) {
            return Ok(x);
        }
        self.refresh()?;
        let x = self.inv.mat_vec(b);
        if self.residual_ok(&x, b) {
            Ok(x)
        } else {
            Err(Error::Numeric(
                "solve residual too large after refresh".into(),
            ))
        }
    }

    fn residual_ok(&self, x: &[f64], b: &[f64]) -> bool {
        let gx = self.gram.mat_vec(x);
        let r = dist2(&gx, b);
        r <= SOLVE_TOL * (1.0 + norm2(b))
    }

    /// Minimum eigenvalue of the full (regularized) Gram matrix.
    pub fn min_eigenvalue(&self) -> Result<f64> {
        min_eigenvalue(&self.gram)
    }
}

/// `λI + Σᵢ (gramᵢ − λᵢI)` with a freshly factorized inverse.
pub fn aggregate<'a, I>(states: I, reg: f64) -> Result<SpdState>
where
    I: IntoIterator<Item = &'a SpdState>,
{
    let mut iter = states.into_iter().peekable();
    let dim = match iter.peek() {
        Some(s) => s.dim(),
        None => return Err(invalid("aggregate needs at least one state")),
    };
    let mut sum = Mat::zeros(dim, dim);
    for s in iter {
        if s.dim() != dim {
            return Err(invalid(format!(
                "dimension mismatch in aggregate: {} vs {dim}",
                s.dim()
            )));
        }
        sum.add_assign(&s.gram);
        sum.add_diag(-s.reg);
    }
    SpdState::from_gram_part(&sum, reg)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag(v: &[f64]) -> Mat {
        let mut m = Mat::zeros(v.len(), v.len());
        for (i, x) in v.iter().enumerate() {
            m.set(i, i, *x);
        }
        m
    }

    #[test]
    fn new_state_is_scaled_identity() {
        let s = SpdState::new(2, 1.0).unwrap();
        assert_eq!(s.gram(), &Mat::identity(2));
        assert_eq!(s.inv(), &Mat::identity(2));
        let s = SpdState::new(3, 2.0).unwrap();
        assert_eq!(s.gram(), &Mat::scaled_identity(3, 2.0));
        assert_eq!(s.inv(), &Mat::scaled_identity(3, 0.5));
        let s = SpdState::new(1, 0.25).unwrap();
        assert_eq!(s.inv().get(0, 0), 4.0);
        assert_eq!(s.update_count(), 0);
    }

    #[test]
    fn new_rejects_bad_args() {
        assert!(matches!(
            SpdState::new(0, 1.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            SpdState::new(2, 0.0),
            Err(Error::InvalidArgument(_))
        ));
        assert!(matches!(
            SpdState::new(2, -1.0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn unit_update_along_axis() {
        let mut s = SpdState::new(2, 1.0).unwrap();
        s.rank1_update(&[1.0, 0.0], 1.0).unwrap();
        assert_eq!(s.gram(), &diag(&[2.0, 1.0]));
        assert!(s.inv().max_abs_diff(&diag(&[0.5, 1.0])) < 1e-15);
    }

    #[test]
    fn zero_weight_is_noop() {
        let mut s = SpdState::new(3, 1.0).unwrap();
        s.rank1_update(&[0.6, 0.0, 0.8], 0.3).unwrap();
        let before = s.clone();
        s.rank1_update(&[0.0, 1.0, 0.0], 0.0).unwrap();
        assert_eq!(s, before);
    }

    #[test]
    fn negative_weight_rejected() {
        let mut s = SpdState::new(2, 1.0).unwrap();
        assert!(matches!(
            s.rank1_update(&[1.0, 0.0], -0.1),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn mahalanobis_examples() {
        let s = SpdState::new(3, 1.0).unwrap();
        let x = [0.3, -0.4, 1.2];
        assert!((s.mahalanobis(&x) - norm2(&x)).abs() < 1e-15);

        let s = SpdState::from_gram_part(&diag(&[3.0, 0.0]), 1.0).unwrap();
        assert!((s.mahalanobis(&[1.0, 0.0]) - 0.5).abs() < 1e-15);

        let s = SpdState::new(2, 2.0).unwrap();
        assert!((s.mahalanobis(&[1.0, 1.0]) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn solve_examples() {
        let mut s = SpdState::new(3, 4.0).unwrap();
        let x = s.solve(&[4.0, -8.0, 2.0]).unwrap();
        assert_eq!(x, vec![1.0, -2.0, 0.5]);

        let mut s = SpdState::from_gram_part(&diag(&[1.0, 3.0]), 1.0).unwrap();
        let x = s.solve(&[2.0, 4.0]).unwrap();
        assert!((x[0] - 1.0).abs() < 1e-15 && (x[1] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn min_eigenvalue_examples() {
        assert!((min_eigenvalue(&Mat::identity(3)).unwrap() - 1.0).abs() < 1e-15);
        assert!((min_eigenvalue(&diag(&[3.0, 1.0, 2.0])).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn min_eigenvalue_rejects_asymmetric() {
        let m = Mat::from_rows(&[vec![1.0, 0.5], vec![0.0, 1.0]]).unwrap();
        assert!(matches!(min_eigenvalue(&m), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn eigenvectors_reconstruct() {
        let m = Mat::from_rows(&[
            vec![4.0, 1.0, -0.5],
            vec![1.0, 3.0, 0.25],
            vec![-0.5, 0.25, 2.0],
        ])
        .unwrap();
        let (vals, vecs) = sym_eigen(&m).unwrap();
        for j in 0..3 {
            let v = vecs.col(j);
            let mv = m.mat_vec(&v);
            for k in 0..3 {
                assert!((mv[k] - vals[j] * v[k]).abs() < 1e-12);
            }
        }
        assert!(vals.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn aggregate_examples() {
        let mut a = SpdState::new(2, 1.0).unwrap();
        a.rank1_update(&[0.6, 0.8], 0.5).unwrap();
        let agg = aggregate([&a], 2.0).unwrap();
        let mut expect = a.gram_part();
        expect.add_diag(2.0);
        assert!(agg.gram().max_abs_diff(&expect) < 1e-15);

        let e1 = SpdState::new(3, 1.0).unwrap();
        let e2 = SpdState::new(3, 0.5).unwrap();
        let agg = aggregate([&e1, &e2], 1.5).unwrap();
        assert!(agg.gram().max_abs_diff(&Mat::scaled_identity(3, 1.5)) < 1e-15);
    }

    #[test]
    fn aggregate_dim_mismatch() {
        let a = SpdState::new(2, 1.0).unwrap();
        let b = SpdState::new(3, 1.0).unwrap();
        assert!(matches!(
            aggregate([&a, &b], 1.0),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn refresh_cadence_resets_counter() {
        let mut s = SpdState::new(2, 1.0).unwrap().with_refresh_every(3);
        for _ in 0..3 {
            s.rank1_update(&[0.6, 0.8], 1.0).unwrap();
        }
        assert_eq!(s.update_count(), 0);
        s.rank1_update(&[1.0, 0.0], 1.0).unwrap();
        assert_eq!(s.update_count(), 1);
    }
}
