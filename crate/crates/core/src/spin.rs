//! Half-integer spin bookkeeping and Wigner rotation matrices.
//!
//! Spins and projections are stored as doubled integers (`2j`, `2m`) so that
//! half-integers stay exact. Matrix rows/columns are ordered by descending
//! projection: index `a` corresponds to `m = j - a`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};

/// A spin (or projection) stored as twice its value, so `Spin(1)` is spin 1/2.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Spin(pub i32);

impl Spin {
    /// Spin zero.
    pub const ZERO: Spin = Spin(0);

    /// Construct from an integer spin value.
    pub fn from_int(j: i32) -> Spin {
        Spin(2 * j)
    }

    /// Twice the spin value.
    pub fn doubled(self) -> i32 {
        self.0
    }

    /// The spin as a float.
    pub fn value(self) -> f64 {
        self.0 as f64 / 2.0
    }

    /// Multiplicity `2j + 1`.
    pub fn dim(self) -> usize {
        (self.0 + 1) as usize
    }

    /// Projections in descending order, as doubled integers: `2j, 2j-2, ..., -2j`.
    pub fn projections(self) -> impl Iterator<Item = i32> {
        let top = self.0;
        (0..self.dim()).map(move |a| top - 2 * a as i32)
    }

    /// Row/column index of projection `2m` under descending ordering.
    pub fn index_of(self, m2: i32) -> Option<usize> {
        if m2.abs() > self.0 || (self.0 - m2) % 2 != 0 {
            return None;
        }
        Some(((self.0 - m2) / 2) as usize)
    }
}

/// n! as f64; exact for n <= 22 and amply accurate for the small spins used here.
pub fn factorial(n: i32) -> f64 {
    assert!(n >= 0, "factorial of negative integer");
    (1..=n as i64).map(|v| v as f64).product()
}

/// Wigner small-d matrix `d^j_{m'm}(beta)`; row index is `m'` descending,
/// column index `m` descending.
pub fn wigner_small_d(j: Spin, beta: f64) -> DMatrix<f64> {
    let dim = j.dim();
    let j2 = j.doubled();
    let ch = (beta / 2.0).cos();
    let sh = (beta / 2.0).sin();
    let mut d = DMatrix::zeros(dim, dim);
    for (r, mp2) in j.projections().enumerate() {
        for (c, m2) in j.projections().enumerate() {
            // all combinations below are integers when the projections differ
            // from j by integers, which Spin guarantees
            let a = (j2 + mp2) / 2; // j + m'
            let b = (j2 - mp2) / 2; // j - m'
            let p = (j2 + m2) / 2; // j + m
            let q = (j2 - m2) / 2; // j - m
            let pref = (factorial(a) * factorial(b) * factorial(p) * factorial(q)).sqrt();
            let s_min = 0.max((m2 - mp2) / 2);
            let s_max = p.min(b);
            let mut sum = 0.0;
            for s in s_min..=s_max {
                let denom = factorial(p - s)
                    * factorial(s)
                    * factorial((mp2 - m2) / 2 + s)
                    * factorial(b - s);
                let sign = if ((mp2 - m2) / 2 + s) % 2 == 0 { 1.0 } else { -1.0 };
                // cos exponent 2j + m - m' - 2s, sin exponent m' - m + 2s
                let c_exp = (2 * j2 + m2 - mp2) / 2 - 2 * s;
                let s_exp = (mp2 - m2) / 2 + 2 * s;
                sum += sign * ch.powi(c_exp) * sh.powi(s_exp) / denom;
            }
            d[(r, c)] = pref * sum;
        }
    }
    d
}

/// Full Wigner D matrix for z-y-z Euler angles:
/// `D^j_{m'm}(phi, theta, psi) = exp(-i m' phi) d^j_{m'm}(theta) exp(-i m psi)`.
pub fn wigner_d_euler(j: Spin, phi: f64, theta: f64, psi: f64) -> DMatrix<Complex64> {
    let small = wigner_small_d(j, theta);
    let dim = j.dim();
    let mut d = DMatrix::zeros(dim, dim);
    for (r, mp2) in j.projections().enumerate() {
        for (c, m2) in j.projections().enumerate() {
            let phase = Complex64::from_polar(
                1.0,
                -(mp2 as f64 / 2.0) * phi - (m2 as f64 / 2.0) * psi,
            );
            d[(r, c)] = phase * small[(r, c)];
        }
    }
    d
}

/// A spin-j rotation matrix together with its spin label.
#[derive(Debug, Clone)]
pub struct SpinRotation {
    pub j: Spin,
    pub d_matrix: DMatrix<Complex64>,
}

impl SpinRotation {
    /// Build from Euler angles.
    pub fn from_euler(j: Spin, phi: f64, theta: f64, psi: f64) -> SpinRotation {
        SpinRotation {
            j,
            d_matrix: wigner_d_euler(j, phi, theta, psi),
        }
    }

    /// Unitarity defect `|| D D^H - 1 ||_max`.
    pub fn unitarity_defect(&self) -> f64 {
        let dim = self.j.dim();
        let prod = &self.d_matrix * self.d_matrix.adjoint();
        let mut worst = 0.0f64;
        for r in 0..dim {
            for c in 0..dim {
                let want = if r == c { 1.0 } else { 0.0 };
                worst = worst.max((prod[(r, c)] - want).norm());
            }
        }
        worst
    }

    /// Composition defect `|| D_a D_b - D_ab ||_max`.
    ///
    /// Half-integer spins form a true representation of the covering group
    /// SU(2), not of the rotation matrices themselves; principal-branch D
    /// matrices then compose only up to a global sign. The defect resolves
    /// that sign (taking whichever of +-D_ab is closer); for integer spins
    /// both choices coincide with the strict comparison because the minus
    /// sign can never win against a unitary at distance < 2.
    pub fn composition_defect(a: &SpinRotation, b: &SpinRotation, ab: &SpinRotation) -> f64 {
        let prod = &a.d_matrix * &b.d_matrix;
        let half_integer = a.j.doubled() % 2 != 0;
        let mut plus = 0.0f64;
        let mut minus = 0.0f64;
        for r in 0..prod.nrows() {
            for c in 0..prod.ncols() {
                plus = plus.max((prod[(r, c)] - ab.d_matrix[(r, c)]).norm());
                minus = minus.max((prod[(r, c)] + ab.d_matrix[(r, c)]).norm());
            }
        }
        if half_integer {
            plus.min(minus)
        } else {
            plus
        }
    }

    /// Matrix element `D^j_{m' m}` addressed by doubled projections.
    pub fn element(&self, mp2: i32, m2: i32) -> Result<Complex64> {
        let r = self
            .j
            .index_of(mp2)
            .ok_or_else(|| Error::invalid(format!("projection 2m'={mp2} invalid for 2j={}", self.j.0)))?;
        let c = self
            .j
            .index_of(m2)
            .ok_or_else(|| Error::invalid(format!("projection 2m={m2} invalid for 2j={}", self.j.0)))?;
        Ok(self.d_matrix[(r, c)])
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn projections_descend() {
        let j = Spin(3); // j = 3/2
        let ms: Vec<i32> = j.projections().collect();
        assert_eq!(ms, vec![3, 1, -1, -3]);
        assert_eq!(j.index_of(-1), Some(2));
        assert_eq!(j.index_of(0), None);
    }

    #[test]
    fn spin_half_small_d_closed_form() {
        let beta = 0.7318;
        let d = wigner_small_d(Spin(1), beta);
        let (c, s) = ((beta / 2.0).cos(), (beta / 2.0).sin());
        assert_abs_diff_eq!(d[(0, 0)], c, epsilon = 1e-15);
        assert_abs_diff_eq!(d[(0, 1)], -s, epsilon = 1e-15);
        assert_abs_diff_eq!(d[(1, 0)], s, epsilon = 1e-15);
        assert_abs_diff_eq!(d[(1, 1)], c, epsilon = 1e-15);
    }

    #[test]
    fn spin_one_small_d_closed_form() {
        // d^1 at beta: rows m'=1,0,-1. Standard closed form.
        let beta = 1.234;
        let d = wigner_small_d(Spin::from_int(1), beta);
        let (c, s) = (beta.cos(), beta.sin());
        let r2 = std::f64::consts::SQRT_2;
        assert_abs_diff_eq!(d[(0, 0)], (1.0 + c) / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d[(0, 1)], -s / r2, epsilon = 1e-15);
        assert_abs_diff_eq!(d[(0, 2)], (1.0 - c) / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d[(1, 0)], s / r2, epsilon = 1e-15);
        assert_abs_diff_eq!(d[(1, 1)], c, epsilon = 1e-15);
        assert_abs_diff_eq!(d[(1, 2)], -s / r2, epsilon = 1e-15);
        assert_abs_diff_eq!(d[(2, 0)], (1.0 - c) / 2.0, epsilon = 1e-15);
        assert_abs_diff_eq!(d[(2, 1)], s / r2, epsilon = 1e-15);
        assert_abs_diff_eq!(d[(2, 2)], (1.0 + c) / 2.0, epsilon = 1e-15);
    }

    #[test]
    fn z_rotation_is_diagonal_phase() {
        // Rotation about z by angle t has Euler angles (t, 0, 0); for j=1/2 the
        // representation matrix is diag(exp(-it/2), exp(+it/2)).
        let t = 0.9341;
        let d = wigner_d_euler(Spin(1), t, 0.0, 0.0);
        assert_abs_diff_eq!(d[(0, 0)].re, (t / 2.0).cos(), epsilon = 1e-15);
        assert_abs_diff_eq!(d[(0, 0)].im, -(t / 2.0).sin(), epsilon = 1e-15);
        assert_abs_diff_eq!(d[(1, 1)].im, (t / 2.0).sin(), epsilon = 1e-15);
        assert_abs_diff_eq!(d[(0, 1)].norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn small_d_orthogonal() {
        for &j2 in &[1, 2, 3, 4] {
            let d = wigner_small_d(Spin(j2), 2.0411);
            let prod = &d * d.transpose();
            for r in 0..d.nrows() {
                for c in 0..d.ncols() {
                    let want = if r == c { 1.0 } else { 0.0 };
                    assert_abs_diff_eq!(prod[(r, c)], want, epsilon = 1e-13);
                }
            }
        }
    }
}
