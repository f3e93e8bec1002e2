//! Symmetric 3×3 tensors stored by their six independent entries.

use std::ops::{Add, Mul, Sub};

use serde::{Deserialize, Serialize};

/// Symmetric 3×3 tensor. Symmetry is structural: only the upper triangle is stored.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct SymTensor3 {
    pub a11: f64,
    pub a22: f64,
    pub a33: f64,
    pub a12: f64,
    pub a13: f64,
    pub a23: f64,
}

impl SymTensor3 {
    pub const ZERO: Self = Self::new(0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    pub const IDENTITY: Self = Self::new(1.0, 1.0, 1.0, 0.0, 0.0, 0.0);

    pub const fn new(a11: f64, a22: f64, a33: f64, a12: f64, a13: f64, a23: f64) -> Self {
        Self {
            a11,
            a22,
            a33,
            a12,
            a13,
            a23,
        }
    }

    pub const fn diag(d1: f64, d2: f64, d3: f64) -> Self {
        Self::new(d1, d2, d3, 0.0, 0.0, 0.0)
    }

    pub const fn scaled_identity(s: f64) -> Self {
        Self::diag(s, s, s)
    }

    /// `a ⊗ a`.
    pub fn outer(a: [f64; 3]) -> Self {
        Self::new(
            a[0] * a[0],
            a[1] * a[1],
            a[2] * a[2],
            a[0] * a[1],
            a[0] * a[2],
            a[1] * a[2],
        )
    }

    pub fn from_matrix(m: [[f64; 3]; 3]) -> Self {
        Self::new(m[0][0], m[1][1], m[2][2], m[0][1], m[0][2], m[1][2])
    }

    pub fn to_matrix(&self) -> [[f64; 3]; 3] {
        [
            [self.a11, self.a12, self.a13],
            [self.a12, self.a22, self.a23],
            [self.a13, self.a23, self.a33],
        ]
    }

    pub fn trace(&self) -> f64 {
        self.a11 + self.a22 + self.a33
    }

    pub fn det(&self) -> f64 {
        let c11 = self.a22 * self.a33 - self.a23 * self.a23;
        let c12 = self.a13 * self.a23 - self.a12 * self.a33;
        let c13 = self.a12 * self.a23 - self.a13 * self.a22;
        self.a11 * c11 + self.a12 * c12 + self.a13 * c13
    }

    /// Cofactor matrix (equal to the adjugate for symmetric input).
    pub fn adjugate(&self) -> Self {
        Self::new(
            self.a22 * self.a33 - self.a23 * self.a23,
            self.a11 * self.a33 - self.a13 * self.a13,
            self.a11 * self.a22 - self.a12 * self.a12,
            self.a13 * self.a23 - self.a12 * self.a33,
            self.a12 * self.a23 - self.a13 * self.a22,
            self.a12 * self.a13 - self.a11 * self.a23,
        )
    }

    /// Inverse via adjugate over determinant; `None` for a zero or non-finite determinant.
    pub fn inverse(&self) -> Option<Self> {
        let det = self.det();
        if det == 0.0 || !det.is_finite() {
            return None;
        }
        Some(self.adjugate() * (1.0 / det))
    }

    /// `dᵀ A d`.
    pub fn quad_form(&self, d: [f64; 3]) -> f64 {
        self.a11 * d[0] * d[0]
            + self.a22 * d[1] * d[1]
            + self.a33 * d[2] * d[2]
            + 2.0 * (self.a12 * d[0] * d[1] + self.a13 * d[0] * d[2] + self.a23 * d[1] * d[2])
    }

    pub fn mul_vec(&self, d: [f64; 3]) -> [f64; 3] {
        [
            self.a11 * d[0] + self.a12 * d[1] + self.a13 * d[2],
            self.a12 * d[0] + self.a22 * d[1] + self.a23 * d[2],
            self.a13 * d[0] + self.a23 * d[1] + self.a33 * d[2],
        ]
    }

    /// Full (generally non-symmetric) product `A·B`.
    pub fn matmul(&self, other: &Self) -> [[f64; 3]; 3] {
        let a = self.to_matrix();
        let b = other.to_matrix();
        let mut out = [[0.0; 3]; 3];
        for (r, row) in out.iter_mut().enumerate() {
            for (c, entry) in row.iter_mut().enumerate() {
                *entry = (0..3).map(|k| a[r][k] * b[k][c]).sum();
            }
        }
        out
    }

    /// Largest entry magnitude.
    pub fn max_abs(&self) -> f64 {
        [self.a11, self.a22, self.a33, self.a12, self.a13, self.a23]
            .iter()
            .fold(0.0_f64, |m, v| m.max(v.abs()))
    }

    /// Eigenvalues in ascending order, by the closed-form trigonometric method.
    pub fn eigenvalues(&self) -> [f64; 3] {
        let off = self.a12 * self.a12 + self.a13 * self.a13 + self.a23 * self.a23;
        if off == 0.0 {
            let mut d = [self.a11, self.a22, self.a33];
            d.sort_by(f64::total_cmp);
            return d;
        }
        let mean = self.trace() / 3.0;
        let (b11, b22, b33) = (self.a11 - mean, self.a22 - mean, self.a33 - mean);
        let p2 = b11 * b11 + b22 * b22 + b33 * b33 + 2.0 * off;
        let p = (p2 / 6.0).sqrt();
        let shifted = Self::new(b11, b22, b33, self.a12, self.a13, self.a23) * (1.0 / p);
        let r = (shifted.det() / 2.0).clamp(-1.0, 1.0);
        let phi = r.acos() / 3.0;
        let largest = mean + 2.0 * p * phi.cos();
        let smallest = mean + 2.0 * p * (phi + 2.0 * std::f64::consts::FRAC_PI_3).cos();
        let middle = 3.0 * mean - largest - smallest;
        let mut e = [smallest, middle, largest];
        e.sort_by(f64::total_cmp);
        e
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.eigenvalues()[0]
    }
}

impl Add for SymTensor3 {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(
            self.a11 + o.a11,
            self.a22 + o.a22,
            self.a33 + o.a33,
            self.a12 + o.a12,
            self.a13 + o.a13,
            self.a23 + o.a23,
        )
    }
}

impl Sub for SymTensor3 {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self::new(
            self.a11 - o.a11,
            self.a22 - o.a22,
            self.a33 - o.a33,
            self.a12 - o.a12,
            self.a13 - o.a13,
            self.a23 - o.a23,
        )
    }
}

impl Mul<f64> for SymTensor3 {
    type Output = Self;
    fn mul(self, s: f64) -> Self {
        Self::new(
            self.a11 * s,
            self.a22 * s,
            self.a33 * s,
            self.a12 * s,
            self.a13 * s,
            self.a23 * s,
        )
    }
}
