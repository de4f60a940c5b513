//! Deterministic linear-algebra wrappers.
//!
//! Everything downstream assumes eigensolves return ascending eigenvalues
//! with a fixed sign/phase convention, so results are reproducible across
//! runs and thread counts. Symmetric/hermitian eigensolves go through
//! nalgebra's symmetric eigendecomposition; this module adds ordering,
//! sign fixing, residual checks, the logarithm/exponential of unitaries,
//! and a natural cubic spline whose evaluation is linear in the data.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// Max-norm of the hermiticity defect `A - A^H`.
pub fn hermiticity_residual(a: &DMatrix<f64>) -> f64 {
    let mut worst = 0.0f64;
    for r in 0..a.nrows() {
        for c in 0..a.ncols() {
            worst = worst.max((a[(r, c)] - a[(c, r)]).abs());
        }
    }
    worst
}

/// Max-norm of the hermiticity defect for complex matrices.
pub fn hermiticity_residual_complex(a: &DMatrix<Complex64>) -> f64 {
    let mut worst = 0.0f64;
    for r in 0..a.nrows() {
        for c in 0..a.ncols() {
            worst = worst.max((a[(r, c)] - a[(c, r)].conj()).norm());
        }
    }
    worst
}

/// Max-norm unitarity defect `|| U^H U - 1 ||_max`.
pub fn unitarity_defect(u: &DMatrix<Complex64>) -> f64 {
    let prod = u.adjoint() * u;
    let mut worst = 0.0f64;
    for r in 0..prod.nrows() {
        for c in 0..prod.ncols() {
            let want = if r == c { 1.0 } else { 0.0 };
            worst = worst.max((prod[(r, c)] - want).norm());
        }
    }
    worst
}

/// Max-norm orthogonality defect for real matrices.
pub fn orthogonality_defect(u: &DMatrix<f64>) -> f64 {
    let prod = u.transpose() * u;
    let mut worst = 0.0f64;
    for r in 0..prod.nrows() {
        for c in 0..prod.ncols() {
            let want = if r == c { 1.0 } else { 0.0 };
            worst = worst.max((prod[(r, c)] - want).abs());
        }
    }
    worst
}

fn sort_ascending_real(
    vals: DVector<f64>,
    vecs: DMatrix<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let n = vals.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| vals[a].partial_cmp(&vals[b]).expect("non-NaN eigenvalues"));
    let mut sv = DVector::zeros(n);
    let mut sm = DMatrix::zeros(vecs.nrows(), n);
    for (dst, &src) in order.iter().enumerate() {
        sv[dst] = vals[src];
        let mut col = vecs.column(src).clone_owned();
        // sign convention: the largest-magnitude component (first on ties)
        // is made positive, so eigenvectors are reproducible
        let mut imax = 0;
        for i in 0..col.len() {
            if col[i].abs() > col[imax].abs() {
                imax = i;
            }
        }
        if col[imax] < 0.0 {
            col.neg_mut();
        }
        sm.set_column(dst, &col);
    }
    (sv, sm)
}

/// Eigendecomposition of a real symmetric matrix: ascending eigenvalues,
/// orthonormal columns, deterministic signs. The hermiticity residual is
/// checked against `tol` first.
pub fn eigh(a: &DMatrix<f64>, tol: f64, context: &str) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let residual = hermiticity_residual(a);
    if residual > tol {
        return Err(Error::NotHermitian {
            residual,
            tol,
            context: context.to_string(),
        });
    }
    // symmetrize so the eigensolver sees an exactly symmetric matrix
    let sym = (a + a.transpose()) * 0.5;
    let decomp = sym.symmetric_eigen();
    Ok(sort_ascending_real(decomp.eigenvalues, decomp.eigenvectors))
}

/// Hermitian complex eigendecomposition with ascending eigenvalues and the
/// largest-magnitude component of each eigenvector rotated to the positive
/// real axis.
pub fn eigh_complex(
    a: &DMatrix<Complex64>,
    tol: f64,
    context: &str,
) -> Result<(DVector<f64>, DMatrix<Complex64>)> {
    let residual = hermiticity_residual_complex(a);
    if residual > tol {
        return Err(Error::NotHermitian {
            residual,
            tol,
            context: context.to_string(),
        });
    }
    let sym = (a + a.adjoint()) * Complex64::new(0.5, 0.0);
    let decomp = sym.symmetric_eigen();
    let vals = decomp.eigenvalues;
    let vecs = decomp.eigenvectors;
    let n = vals.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| vals[x].partial_cmp(&vals[y]).expect("non-NaN eigenvalues"));
    let mut sv = DVector::zeros(n);
    let mut sm = DMatrix::zeros(vecs.nrows(), n);
    for (dst, &src) in order.iter().enumerate() {
        sv[dst] = vals[src];
        let mut col = vecs.column(src).clone_owned();
        let mut imax = 0;
        for i in 0..col.len() {
            if col[i].norm() > col[imax].norm() {
                imax = i;
            }
        }
        if col[imax].norm() > 0.0 {
            let phase = col[imax] / col[imax].norm();
            col *= phase.conj();
        }
        sm.set_column(dst, &col);
    }
    Ok((sv, sm))
}

/// Solve `A X = B` for complex square `A` by LU with partial pivoting.
pub fn solve_complex(a: DMatrix<Complex64>, b: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let lu = a.lu();
    lu.solve(b)
        .ok_or_else(|| Error::Linalg("complex LU solve failed (singular matrix)".into()))
}

/// Result of taking the logarithm of a unitary matrix.
#[derive(Debug, Clone)]
pub struct UnitaryLog {
    /// Skew-hermitian logarithm; `exp_skew(&log)` reconstructs the input.
    pub log: DMatrix<Complex64>,
    /// `|| exp(log) - W ||_max` measured after reconstruction.
    pub reconstruction_residual: f64,
    /// Smallest distance of any eigenvalue of `W` from -1 on the unit circle
    /// (radians); the principal branch degrades as this approaches 0.
    pub branch_margin: f64,
}

/// Principal logarithm of a unitary matrix via joint diagonalization of its
/// hermitian and antihermitian parts (which commute for normal `W`).
///
/// Eigenvalues `e^{i theta}` map to `i theta` with `theta` in (-pi, pi).
/// If any eigenvalue sits within `margin` (radians) of -1 the principal
/// branch is ill-defined and an error is returned instead of picking a side.
pub fn log_unitary(w: &DMatrix<Complex64>, margin: f64, context: &str) -> Result<UnitaryLog> {
    let n = w.nrows();
    if n != w.ncols() {
        return Err(Error::DimensionMismatch(format!(
            "log_unitary needs square input, got {}x{}",
            n,
            w.ncols()
        )));
    }
    let defect = unitarity_defect(w);
    if defect > 1e-8 {
        return Err(Error::UnitarityDefect {
            defect,
            tol: 1e-8,
            context: format!("log_unitary({context})"),
        });
    }
    let half = Complex64::new(0.5, 0.0);
    let c_part = (w + w.adjoint()) * half; // hermitian, eigenvalues cos(theta)
    let s_part = (w - w.adjoint()) * Complex64::new(0.0, -0.5); // hermitian, sin(theta)
    let (cvals, cvecs) = eigh_complex(&c_part, 1e-8, "log_unitary cos part")?;

    // Block-diagonalize the sin part inside each (near-)degenerate cos
    // eigenspace; outside degeneracies the cos basis already diagonalizes it.
    let mut basis = cvecs;
    let gap_tol = 1e-7;
    let mut start = 0;
    while start < n {
        let mut end = start + 1;
        while end < n && (cvals[end] - cvals[start]).abs() < gap_tol {
            end += 1;
        }
        if end - start > 1 {
            let block = basis.columns(start, end - start).clone_owned();
            let s_block = block.adjoint() * &s_part * &block;
            let (_, svecs) = eigh_complex(&s_block, 1e-7, "log_unitary sin block")?;
            let rotated = block * svecs;
            for (j, col) in rotated.column_iter().enumerate() {
                basis.set_column(start + j, &col.clone_owned());
            }
        }
        start = end;
    }

    let mut thetas = DVector::zeros(n);
    let mut branch_margin = f64::INFINITY;
    for j in 0..n {
        let v = basis.column(j);
        let cv = (v.adjoint() * &c_part * v)[(0, 0)].re;
        let sv = (v.adjoint() * &s_part * v)[(0, 0)].re;
        let theta = sv.atan2(cv);
        branch_margin = branch_margin.min(std::f64::consts::PI - theta.abs());
        thetas[j] = theta;
    }
    if branch_margin < margin {
        return Err(Error::LogBranchCut {
            margin: branch_margin,
            context: context.to_string(),
        });
    }

    let mut log = DMatrix::zeros(n, n);
    for j in 0..n {
        let col = basis.column(j).clone_owned();
        let scale = Complex64::new(0.0, thetas[j]);
        log += (&col * col.adjoint()) * scale;
    }

    let recon = exp_skew(&log)?;
    let mut reconstruction_residual = 0.0f64;
    for r in 0..n {
        for c in 0..n {
            reconstruction_residual = reconstruction_residual.max((recon[(r, c)] - w[(r, c)]).norm());
        }
    }
    Ok(UnitaryLog {
        log,
        reconstruction_residual,
        branch_margin,
    })
}

/// Exponential of a skew-hermitian matrix (so the result is unitary), via
/// the hermitian eigendecomposition of `-i A`.
pub fn exp_skew(a: &DMatrix<Complex64>) -> Result<DMatrix<Complex64>> {
    let h = a * Complex64::new(0.0, -1.0);
    let (vals, vecs) = eigh_complex(&h, 1e-7, "exp_skew generator")?;
    let n = vals.len();
    let mut out = DMatrix::zeros(n, n);
    for j in 0..n {
        let col = vecs.column(j).clone_owned();
        let phase = Complex64::from_polar(1.0, vals[j]);
        out += (&col * col.adjoint()) * phase;
    }
    Ok(out)
}

/// Natural cubic spline through `(x_i, y_i)`; evaluation is linear in `y`
/// and refuses to extrapolate beyond the node hull.
#[derive(Debug, Clone)]
pub struct CubicSpline {
    x: Vec<f64>,
    y: Vec<f64>,
    second: Vec<f64>,
}

impl CubicSpline {
    pub fn new(x: &[f64], y: &[f64]) -> Result<CubicSpline> {
        let op = SplineOperator::new(x)?;
        let second = op.second_derivatives(y)?;
        Ok(CubicSpline {
            x: x.to_vec(),
            y: y.to_vec(),
            second,
        })
    }

    /// Value at `t`; `Err(OutsideGridHull)` if `t` is outside `[x_0, x_last]`.
    pub fn eval(&self, t: f64) -> Result<f64> {
        let i = locate(&self.x, t)?;
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        Ok(a * self.y[i]
            + b * self.y[i + 1]
            + ((a * a * a - a) * self.second[i] + (b * b * b - b) * self.second[i + 1]) * h * h
                / 6.0)
    }

    /// Value at `t`, treating points beyond the hull as exactly zero.
    /// Returns the value and whether `t` was outside.
    pub fn eval_outside_zero(&self, t: f64) -> (f64, bool) {
        match self.eval(t) {
            Ok(v) => (v, false),
            Err(_) => (0.0, true),
        }
    }
}

fn locate(x: &[f64], t: f64) -> Result<usize> {
    let n = x.len();
    if n < 2 {
        return Err(Error::invalid("spline needs at least two nodes"));
    }
    if t < x[0] || t > x[n - 1] {
        return Err(Error::OutsideGridHull(format!(
            "spline evaluation at {t:.6e} outside [{:.6e}, {:.6e}]",
            x[0],
            x[n - 1]
        )));
    }
    // binary search for the interval containing t
    let mut lo = 0usize;
    let mut hi = n - 1;
    while hi - lo > 1 {
        let mid = (lo + hi) / 2;
        if x[mid] <= t {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(lo)
}

/// Reusable natural-spline factorization for a fixed set of nodes; produces
/// evaluation *weights* so that boost/interpolation matrices stay linear.
#[derive(Debug, Clone)]
pub struct SplineOperator {
    x: Vec<f64>,
    /// Dense inverse of the tridiagonal system mapping data differences to
    /// second derivatives at interior nodes.
    m_of_y: DMatrix<f64>,
}

impl SplineOperator {
    pub fn new(x: &[f64]) -> Result<SplineOperator> {
        let n = x.len();
        if n < 3 {
            return Err(Error::invalid("spline operator needs at least three nodes"));
        }
        for i in 1..n {
            if x[i] <= x[i - 1] {
                return Err(Error::invalid("spline nodes must be strictly increasing"));
            }
        }
        // natural spline: second derivatives at the two end nodes are zero;
        // interior ones solve a tridiagonal system linear in y
        let m = n - 2;
        let mut tri = DMatrix::zeros(m, m);
        let mut rhs_of_y = DMatrix::zeros(m, n);
        for i in 1..=m {
            let h0 = x[i] - x[i - 1];
            let h1 = x[i + 1] - x[i];
            tri[(i - 1, i - 1)] = (h0 + h1) / 3.0;
            if i > 1 {
                tri[(i - 1, i - 2)] = h0 / 6.0;
            }
            if i < m {
                tri[(i - 1, i)] = h1 / 6.0;
            }
            rhs_of_y[(i - 1, i + 1)] += 1.0 / h1;
            rhs_of_y[(i - 1, i)] += -1.0 / h1 - 1.0 / h0;
            rhs_of_y[(i - 1, i - 1)] += 1.0 / h0;
        }
        let inv = tri
            .lu()
            .solve(&rhs_of_y)
            .ok_or_else(|| Error::Linalg("spline tridiagonal solve failed".into()))?;
        let mut m_of_y = DMatrix::zeros(n, n);
        for i in 1..=m {
            for j in 0..n {
                m_of_y[(i, j)] = inv[(i - 1, j)];
            }
        }
        Ok(SplineOperator {
            x: x.to_vec(),
            m_of_y,
        })
    }

    fn second_derivatives(&self, y: &[f64]) -> Result<Vec<f64>> {
        let n = self.x.len();
        if y.len() != n {
            return Err(Error::DimensionMismatch(format!(
                "spline data length {} vs {} nodes",
                y.len(),
                n
            )));
        }
        let yv = DVector::from_column_slice(y);
        let m = &self.m_of_y * yv;
        Ok(m.iter().copied().collect())
    }

    /// Weight row `w` with `S(t) = sum_j w_j y_j` for data on the nodes.
    /// Errors outside the hull.
    pub fn weights_at(&self, t: f64) -> Result<Vec<f64>> {
        let i = locate(&self.x, t)?;
        let n = self.x.len();
        let h = self.x[i + 1] - self.x[i];
        let a = (self.x[i + 1] - t) / h;
        let b = (t - self.x[i]) / h;
        let ca = (a * a * a - a) * h * h / 6.0;
        let cb = (b * b * b - b) * h * h / 6.0;
        let mut w = vec![0.0; n];
        w[i] += a;
        w[i + 1] += b;
        for j in 0..n {
            w[j] += ca * self.m_of_y[(i, j)] + cb * self.m_of_y[(i + 1, j)];
        }
        Ok(w)
    }

    /// Like `weights_at` but beyond-hull points give an all-zero row; the
    /// boolean flags that truncation happened so callers can account for it.
    pub fn weights_or_zero(&self, t: f64) -> (Vec<f64>, bool) {
        match self.weights_at(t) {
            Ok(w) => (w, false),
            Err(_) => (vec![0.0; self.x.len()], true),
        }
    }

    /// Row of weights such that `row · y` is the spline's first derivative
    /// at node `j`.
    pub fn derivative_weights_at_node(&self, j: usize) -> Result<Vec<f64>> {
        let n = self.x.len();
        if j >= n {
            return Err(Error::invalid("derivative node index out of range"));
        }
        // evaluate on the piece left of the last node, right of the others
        let (i, at_right) = if j == n - 1 { (n - 2, true) } else { (j, false) };
        let h = self.x[i + 1] - self.x[i];
        let mut w = vec![0.0; n];
        w[i] -= 1.0 / h;
        w[i + 1] += 1.0 / h;
        // s'(t) = dy/h - (3a^2-1)h/6 m_i + (3b^2-1)h/6 m_{i+1} with
        // a = (x_{i+1}-t)/h, b = (t-x_i)/h
        let (ca, cb) = if at_right {
            (h / 6.0, 2.0 * h / 6.0)
        } else {
            (-2.0 * h / 6.0, -h / 6.0)
        };
        for l in 0..n {
            w[l] += ca * self.m_of_y[(i, l)] + cb * self.m_of_y[(i + 1, l)];
        }
        Ok(w)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn rand_sym(n: usize, seed: u64) -> DMatrix<f64> {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let a = DMatrix::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        &a + a.transpose()
    }

    #[test]
    fn eigh_reconstructs_and_sorts() {
        let a = rand_sym(12, 7);
        let (vals, vecs) = eigh(&a, 1e-12, "test").unwrap();
        for i in 1..vals.len() {
            assert!(vals[i] >= vals[i - 1]);
        }
        let recon = &vecs * DMatrix::from_diagonal(&vals) * vecs.transpose();
        assert_abs_diff_eq!((recon - &a).norm(), 0.0, epsilon = 1e-10);
        assert!(orthogonality_defect(&vecs) < 1e-12);
    }

    #[test]
    fn eigh_rejects_asymmetric() {
        let mut a = rand_sym(4, 1);
        a[(0, 1)] += 1e-3;
        assert!(matches!(
            eigh(&a, 1e-10, "test"),
            Err(Error::NotHermitian { .. })
        ));
    }

    #[test]
    fn eigh_sign_convention_is_deterministic() {
        let a = rand_sym(9, 3);
        let (_, v1) = eigh(&a, 1e-12, "t").unwrap();
        let (_, v2) = eigh(&(a.clone() * 1.0), 1e-12, "t").unwrap();
        assert_abs_diff_eq!((v1 - v2).norm(), 0.0, epsilon = 0.0);
    }

    #[test]
    fn log_unitary_roundtrip_small_rotation() {
        // orthogonal 2x2 rotation by 0.3: log should be skew with +-0.3
        let th: f64 = 0.3;
        let w = DMatrix::from_row_slice(2, 2, &[th.cos(), -th.sin(), th.sin(), th.cos()])
            .map(|v| Complex64::new(v, 0.0));
        let l = log_unitary(&w, 1e-6, "rot2").unwrap();
        assert!(l.reconstruction_residual < 1e-12);
        assert_abs_diff_eq!(l.log[(0, 1)].im, 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(l.log[(0, 1)].re, -0.3, epsilon = 1e-12);
        assert!(l.branch_margin > 2.8);
    }

    #[test]
    fn log_unitary_rejects_half_turn() {
        let w = DMatrix::from_row_slice(2, 2, &[-1.0, 0.0, 0.0, -1.0]).map(|v| Complex64::new(v, 0.0));
        assert!(matches!(
            log_unitary(&w, 1e-6, "pi"),
            Err(Error::LogBranchCut { .. })
        ));
    }

    #[test]
    fn log_unitary_handles_degenerate_rotations() {
        // block diag of two equal-angle rotations: cos part is degenerate
        let th: f64 = 0.5;
        let mut w = DMatrix::zeros(4, 4);
        for b in 0..2 {
            w[(2 * b, 2 * b)] = Complex64::new(th.cos(), 0.0);
            w[(2 * b, 2 * b + 1)] = Complex64::new(-th.sin(), 0.0);
            w[(2 * b + 1, 2 * b)] = Complex64::new(th.sin(), 0.0);
            w[(2 * b + 1, 2 * b + 1)] = Complex64::new(th.cos(), 0.0);
        }
        let l = log_unitary(&w, 1e-6, "deg").unwrap();
        assert!(l.reconstruction_residual < 1e-10, "residual {}", l.reconstruction_residual);
    }

    #[test]
    fn spline_reproduces_cubics_inside() {
        let x: Vec<f64> = (0..20).map(|i| i as f64 * 0.3).collect();
        // natural spline is exact for linear data, close for smooth data
        let y: Vec<f64> = x.iter().map(|&t| 2.0 * t + 1.0).collect();
        let s = CubicSpline::new(&x, &y).unwrap();
        assert_abs_diff_eq!(s.eval(2.71).unwrap(), 2.0 * 2.71 + 1.0, epsilon = 1e-12);
    }

    #[test]
    fn spline_interpolates_smooth_function() {
        let x: Vec<f64> = (0..40).map(|i| i as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|&t| (t).sin()).collect();
        let s = CubicSpline::new(&x, &y).unwrap();
        assert_abs_diff_eq!(s.eval(1.234).unwrap(), 1.234f64.sin(), epsilon = 1e-5);
    }

    #[test]
    fn spline_refuses_extrapolation() {
        let x = [0.0, 1.0, 2.0, 3.0];
        let y = [0.0, 1.0, 4.0, 9.0];
        let s = CubicSpline::new(&x, &y).unwrap();
        assert!(matches!(s.eval(3.5), Err(Error::OutsideGridHull(_))));
        assert!(matches!(s.eval(-0.1), Err(Error::OutsideGridHull(_))));
    }

    #[test]
    fn spline_weights_match_direct_eval() {
        let x: Vec<f64> = (0..15).map(|i| (i as f64).sqrt() + i as f64 * 0.2).collect();
        let y: Vec<f64> = x.iter().map(|&t| (0.3 * t).cos() * t).collect();
        let s = CubicSpline::new(&x, &y).unwrap();
        let op = SplineOperator::new(&x).unwrap();
        for &t in &[0.5, 1.7, 3.9] {
            let w = op.weights_at(t).unwrap();
            let via_weights: f64 = w.iter().zip(&y).map(|(a, b)| a * b).sum();
            assert_abs_diff_eq!(via_weights, s.eval(t).unwrap(), epsilon = 1e-12);
        }
    }
}

#[cfg(test)]
mod derivative_tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn spline_derivative_weights_match_dense_difference() {
        // smooth function on an uneven grid: spline derivative at nodes is
        // accurate to the natural-spline truncation level
        let x: Vec<f64> = (0..25).map(|i| (i as f64 / 24.0).powi(2) * 3.0).collect();
        let op = SplineOperator::new(&x).unwrap();
        let y: Vec<f64> = x.iter().map(|&t| (0.8 * t).sin() + 0.1 * t * t).collect();
        for j in [3usize, 10, 17, 23] {
            let w = op.derivative_weights_at_node(j).unwrap();
            let got: f64 = w.iter().zip(&y).map(|(a, b)| a * b).sum();
            let want = 0.8 * (0.8 * x[j]).cos() + 0.2 * x[j];
            assert_abs_diff_eq!(got, want, epsilon = 5e-3);
        }
        // exactness on data a natural cubic represents exactly: linear data
        let lin: Vec<f64> = x.iter().map(|&t| 2.0 - 0.5 * t).collect();
        for j in 0..x.len() {
            let w = op.derivative_weights_at_node(j).unwrap();
            let got: f64 = w.iter().zip(&lin).map(|(a, b)| a * b).sum();
            assert_abs_diff_eq!(got, -0.5, epsilon = 1e-10);
        }
    }
}
