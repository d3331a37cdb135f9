//! Small dense square matrices of dimension 1, 2 or 3 and rotation helpers.

use nalgebra::Matrix3;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use crate::error::{Error, Result};

pub const MAX_DIM: usize = 3;

/// Row-major square matrix with `dim <= 3`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SqMat {
    dim: usize,
    a: [[f64; MAX_DIM]; MAX_DIM],
}

impl SqMat {
    pub fn zeros(dim: usize) -> Self {
        assert!((1..=MAX_DIM).contains(&dim), "dimension must be 1, 2 or 3");
        SqMat { dim, a: [[0.0; MAX_DIM]; MAX_DIM] }
    }

    pub fn identity(dim: usize) -> Self {
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            m.a[i][i] = 1.0;
        }
        m
    }

    pub fn diag(entries: &[f64]) -> Self {
        let mut m = Self::zeros(entries.len());
        for (i, &v) in entries.iter().enumerate() {
            m.a[i][i] = v;
        }
        m
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        let d = rows.len();
        let mut m = Self::zeros(d);
        for (i, r) in rows.iter().enumerate() {
            assert_eq!(r.len(), d, "matrix must be square");
            m.a[i][..d].copy_from_slice(r);
        }
        m
    }

    /// Builds a matrix from `dim*dim` row-major entries.
    pub fn from_row_slice(dim: usize, v: &[f64]) -> Self {
        assert_eq!(v.len(), dim * dim);
        let mut m = Self::zeros(dim);
        for i in 0..dim {
            for j in 0..dim {
                m.a[i][j] = v[i * dim + j];
            }
        }
        m
    }

    pub fn to_row_vec(&self) -> Vec<f64> {
        let d = self.dim;
        (0..d * d).map(|k| self.a[k / d][k % d]).collect()
    }

    /// Rotation in the (i, j) coordinate plane by angle `theta`.
    pub fn plane_rotation(dim: usize, i: usize, j: usize, theta: f64) -> Self {
        let mut m = Self::identity(dim);
        let (s, c) = theta.sin_cos();
        m.a[i][i] = c;
        m.a[j][j] = c;
        m.a[i][j] = -s;
        m.a[j][i] = s;
        m
    }

    #[inline]
    pub fn dim(&self) -> usize {
        self.dim
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.a[i][j]
    }

    #[inline]
    pub fn set(&mut self, i: usize, j: usize, v: f64) {
        self.a[i][j] = v;
    }

    #[inline]
    pub fn add_to(&mut self, i: usize, j: usize, v: f64) {
        self.a[i][j] += v;
    }

    pub fn transpose(&self) -> Self {
        let mut m = Self::zeros(self.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                m.a[i][j] = self.a[j][i];
            }
        }
        m
    }

    pub fn scale(&self, s: f64) -> Self {
        let mut m = *self;
        for i in 0..self.dim {
            for j in 0..self.dim {
                m.a[i][j] *= s;
            }
        }
        m
    }

    /// Frobenius inner product.
    pub fn dot(&self, o: &Self) -> f64 {
        let mut s = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                s += self.a[i][j] * o.a[i][j];
            }
        }
        s
    }

    pub fn norm_sq(&self) -> f64 {
        self.dot(self)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn max_abs(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.dim {
            for j in 0..self.dim {
                m = m.max(self.a[i][j].abs());
            }
        }
        m
    }

    pub fn trace(&self) -> f64 {
        (0..self.dim).map(|i| self.a[i][i]).sum()
    }

    pub fn det(&self) -> f64 {
        let a = &self.a;
        match self.dim {
            1 => a[0][0],
            2 => a[0][0] * a[1][1] - a[0][1] * a[1][0],
            _ => {
                a[0][0] * (a[1][1] * a[2][2] - a[1][2] * a[2][1]) - a[0][1] * (a[1][0] * a[2][2] - a[1][2] * a[2][0])
                    + a[0][2] * (a[1][0] * a[2][1] - a[1][1] * a[2][0])
            }
        }
    }

    pub fn sym(&self) -> Self {
        (*self + self.transpose()).scale(0.5)
    }

    pub fn skew(&self) -> Self {
        (*self - self.transpose()).scale(0.5)
    }

    pub fn mul_vec(&self, v: &[f64]) -> Vec<f64> {
        (0..self.dim).map(|i| (0..self.dim).map(|j| self.a[i][j] * v[j]).sum()).collect()
    }

    pub fn col(&self, j: usize) -> Vec<f64> {
        (0..self.dim).map(|i| self.a[i][j]).collect()
    }

    pub fn is_finite(&self) -> bool {
        (0..self.dim).all(|i| (0..self.dim).all(|j| self.a[i][j].is_finite()))
    }

    /// True when `RᵀR = Id` and `det R = 1` up to `tol`.
    pub fn is_rotation(&self, tol: f64) -> bool {
        let rtr = self.transpose() * *self;
        (rtr - Self::identity(self.dim)).max_abs() <= tol && (self.det() - 1.0).abs() <= tol
    }

    fn to_na3(self) -> Matrix3<f64> {
        let mut m = Matrix3::zeros();
        for i in 0..3 {
            for j in 0..3 {
                m[(i, j)] = self.a[i][j];
            }
        }
        m
    }

    fn from_na3(m: &Matrix3<f64>) -> Self {
        let mut s = Self::zeros(3);
        for i in 0..3 {
            for j in 0..3 {
                s.a[i][j] = m[(i, j)];
            }
        }
        s
    }

    /// Singular values in non-increasing order.
    pub fn singular_values(&self) -> Vec<f64> {
        match self.dim {
            1 => vec![self.a[0][0].abs()],
            2 => {
                let a = &self.a;
                let e = (a[0][0] + a[1][1]) / 2.0;
                let f = (a[0][0] - a[1][1]) / 2.0;
                let g = (a[1][0] + a[0][1]) / 2.0;
                let h = (a[1][0] - a[0][1]) / 2.0;
                let q = (e * e + h * h).sqrt();
                let r = (f * f + g * g).sqrt();
                vec![q + r, (q - r).abs()]
            }
            _ => {
                let mut s: Vec<f64> = self.to_na3().singular_values().iter().copied().collect();
                s.sort_by(|x, y| y.total_cmp(x));
                s
            }
        }
    }
}

impl Add for SqMat {
    type Output = SqMat;
    fn add(mut self, o: SqMat) -> SqMat {
        self += o;
        self
    }
}

impl AddAssign for SqMat {
    fn add_assign(&mut self, o: SqMat) {
        debug_assert_eq!(self.dim, o.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                self.a[i][j] += o.a[i][j];
            }
        }
    }
}

impl Sub for SqMat {
    type Output = SqMat;
    fn sub(mut self, o: SqMat) -> SqMat {
        self -= o;
        self
    }
}

impl SubAssign for SqMat {
    fn sub_assign(&mut self, o: SqMat) {
        debug_assert_eq!(self.dim, o.dim);
        for i in 0..self.dim {
            for j in 0..self.dim {
                self.a[i][j] -= o.a[i][j];
            }
        }
    }
}

impl Neg for SqMat {
    type Output = SqMat;
    fn neg(self) -> SqMat {
        self.scale(-1.0)
    }
}

impl Mul for SqMat {
    type Output = SqMat;
    fn mul(self, o: SqMat) -> SqMat {
        debug_assert_eq!(self.dim, o.dim);
        let d = self.dim;
        let mut m = SqMat::zeros(d);
        for i in 0..d {
            for j in 0..d {
                let mut s = 0.0;
                for k in 0..d {
                    s += self.a[i][k] * o.a[k][j];
                }
                m.a[i][j] = s;
            }
        }
        m
    }
}

/// Rotation `R` maximising `tr(Rᵀ X)` over SO(d), together with that maximum.
///
/// Returns an error when `X` is numerically zero.
pub fn procrustes(x: &SqMat) -> Result<(SqMat, f64)> {
    if x.singular_values()[0] <= 1e-14 {
        return Err(Error::Degenerate("cross-covariance has no nonzero singular value".into()));
    }
    Ok(procrustes_unchecked(x))
}

/// Same as [`procrustes`] but never fails; for a zero input the identity is returned.
pub fn procrustes_unchecked(x: &SqMat) -> (SqMat, f64) {
    let d = x.dim();
    match d {
        1 => (SqMat::identity(1), x.get(0, 0)),
        2 => {
            let num = x.get(1, 0) - x.get(0, 1);
            let den = x.get(0, 0) + x.get(1, 1);
            let theta = num.atan2(den);
            let r = SqMat::plane_rotation(2, 0, 1, theta);
            (r, (num * num + den * den).sqrt())
        }
        _ => {
            let svd = x.to_na3().svd(true, true);
            let u = svd.u.expect("u requested");
            let vt = svd.v_t.expect("v_t requested");
            let mut s = svd.singular_values;
            let mut idx = [0usize, 1, 2];
            idx.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
            let sign = if (u * vt).determinant() < 0.0 { -1.0 } else { 1.0 };
            let mut dmat = Matrix3::identity();
            dmat[(idx[2], idx[2])] = sign;
            let r = u * dmat * vt;
            s[idx[2]] *= sign;
            (SqMat::from_na3(&r), s.sum())
        }
    }
}

/// Closest rotation to `x` in Frobenius norm.
pub fn nearest_rotation(x: &SqMat) -> SqMat {
    procrustes_unchecked(x).0
}

/// Rotation drawn from the Haar measure on SO(d).
pub fn random_rotation<R: Rng + ?Sized>(dim: usize, rng: &mut R) -> SqMat {
    match dim {
        1 => SqMat::identity(1),
        2 => SqMat::plane_rotation(2, 0, 1, rng.random_range(-std::f64::consts::PI..std::f64::consts::PI)),
        _ => {
            // uniform unit quaternion
            let mut q = [0.0f64; 4];
            loop {
                let mut n2 = 0.0;
                for v in q.iter_mut() {
                    *v = standard_normal(rng);
                    n2 += *v * *v;
                }
                if n2 > 1e-12 {
                    let n = n2.sqrt();
                    for v in q.iter_mut() {
                        *v /= n;
                    }
                    break;
                }
            }
            let [w, x, y, z] = q;
            SqMat::from_rows(&[
                &[1.0 - 2.0 * (y * y + z * z), 2.0 * (x * y - z * w), 2.0 * (x * z + y * w)],
                &[2.0 * (x * y + z * w), 1.0 - 2.0 * (x * x + z * z), 2.0 * (y * z - x * w)],
                &[2.0 * (x * z - y * w), 2.0 * (y * z + x * w), 1.0 - 2.0 * (x * x + y * y)],
            ])
        }
    }
}

pub(crate) fn standard_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let u1: f64 = rng.random_range(f64::MIN_POSITIVE..1.0);
    let u2: f64 = rng.random();
    (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos()
}

/// Deterministic pairwise summation.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    const LEAF: usize = 64;
    if v.len() <= LEAF {
        let mut s = 0.0;
        for x in v {
            s += x;
        }
        return s;
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}
