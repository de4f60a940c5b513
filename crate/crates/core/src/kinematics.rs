//! Special-relativistic kinematics: four-momenta, Lorentz transforms,
//! canonical boosts, Wigner rotations, and the matrix elements of the
//! one-particle unitary representation.
//!
//! Conventions:
//! - metric signature (+, -, -, -), index 0 is time;
//! - transforms act actively on column four-vectors;
//! - delta functions are never materialized: representation matrix elements
//!   are returned as (image momentum, coefficient) pairs;
//! - Euler angles are z-y-z with `theta` in [0, pi] and `phi`, `psi` in
//!   (-pi, pi]; at the gimbal points `psi` is set to 0.

use nalgebra::{Matrix3, Matrix4, Vector3, Vector4};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::spin::{Spin, SpinRotation};

/// Relativistic energy of a particle of mass `m` with three-momentum `p`.
pub fn omega(m: f64, p: &[f64; 3]) -> f64 {
    (m * m + p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt()
}

/// A four-momentum in (+,-,-,-) signature.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FourMomentum {
    pub e: f64,
    pub px: f64,
    pub py: f64,
    pub pz: f64,
}

impl FourMomentum {
    pub fn new(e: f64, px: f64, py: f64, pz: f64) -> FourMomentum {
        FourMomentum { e, px, py, pz }
    }

    /// On-shell four-momentum for mass `m` and three-momentum `p`.
    pub fn on_shell(m: f64, p: &[f64; 3]) -> FourMomentum {
        FourMomentum {
            e: omega(m, p),
            px: p[0],
            py: p[1],
            pz: p[2],
        }
    }

    pub fn spatial(&self) -> [f64; 3] {
        [self.px, self.py, self.pz]
    }

    pub fn spatial_norm(&self) -> f64 {
        (self.px * self.px + self.py * self.py + self.pz * self.pz).sqrt()
    }

    /// Minkowski square `e^2 - |p|^2`.
    pub fn mass_squared(&self) -> f64 {
        self.dot(self)
    }

    /// Invariant mass; error when the vector is spacelike beyond roundoff.
    pub fn mass(&self) -> Result<f64> {
        let m2 = self.mass_squared();
        if m2 < 0.0 {
            if m2 > -1e-9 * self.e * self.e {
                return Ok(0.0);
            }
            return Err(Error::invalid(format!(
                "four-momentum is spacelike: m^2 = {m2:.6e}"
            )));
        }
        Ok(m2.sqrt())
    }

    /// Minkowski product `e e' - p . p'`.
    pub fn dot(&self, other: &FourMomentum) -> f64 {
        self.e * other.e - self.px * other.px - self.py * other.py - self.pz * other.pz
    }

    fn as_vector(&self) -> Vector4<f64> {
        Vector4::new(self.e, self.px, self.py, self.pz)
    }

    fn from_vector(v: &Vector4<f64>) -> FourMomentum {
        FourMomentum::new(v[0], v[1], v[2], v[3])
    }
}

impl std::ops::Add for FourMomentum {
    type Output = FourMomentum;
    fn add(self, o: FourMomentum) -> FourMomentum {
        FourMomentum::new(self.e + o.e, self.px + o.px, self.py + o.py, self.pz + o.pz)
    }
}

impl std::ops::Sub for FourMomentum {
    type Output = FourMomentum;
    fn sub(self, o: FourMomentum) -> FourMomentum {
        FourMomentum::new(self.e - o.e, self.px - o.px, self.py - o.py, self.pz - o.pz)
    }
}

fn metric() -> Matrix4<f64> {
    Matrix4::from_diagonal(&Vector4::new(1.0, -1.0, -1.0, -1.0))
}

/// A proper orthochronous Lorentz transform as an explicit 4x4 matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LorentzTransform {
    m: Matrix4<f64>,
}

impl LorentzTransform {
    pub fn identity() -> LorentzTransform {
        LorentzTransform {
            m: Matrix4::identity(),
        }
    }

    /// Wrap a raw matrix, enforcing the metric-preservation residual bound.
    pub fn from_matrix(m: Matrix4<f64>, tol: f64) -> Result<LorentzTransform> {
        let lt = LorentzTransform { m };
        let r = lt.metric_residual();
        if r > tol {
            return Err(Error::invalid(format!(
                "matrix does not preserve the metric: residual {r:.3e} > {tol:.3e}"
            )));
        }
        if m[(0, 0)] < 0.0 {
            return Err(Error::invalid("transform is not orthochronous"));
        }
        Ok(lt)
    }

    pub fn matrix(&self) -> &Matrix4<f64> {
        &self.m
    }

    pub fn entry(&self, row: usize, col: usize) -> f64 {
        self.m[(row, col)]
    }

    /// Max-norm of `L^T g L - g`; zero for an exact Lorentz transform.
    pub fn metric_residual(&self) -> f64 {
        let g = metric();
        let d = self.m.transpose() * g * self.m - g;
        d.iter().fold(0.0f64, |acc, v| acc.max(v.abs()))
    }

    /// Inverse via the metric: `L^{-1} = g L^T g` (exact, no linear solve).
    pub fn inverse(&self) -> LorentzTransform {
        let g = metric();
        LorentzTransform {
            m: g * self.m.transpose() * g,
        }
    }

    pub fn compose(&self, other: &LorentzTransform) -> LorentzTransform {
        LorentzTransform { m: self.m * other.m }
    }

    pub fn apply(&self, p: &FourMomentum) -> FourMomentum {
        FourMomentum::from_vector(&(self.m * p.as_vector()))
    }

    /// Apply only to the spatial part of an on-shell momentum of mass `m`,
    /// returning the on-shell image (energy recomputed, guards roundoff).
    pub fn apply_on_shell(&self, m: f64, p: &[f64; 3]) -> FourMomentum {
        let image = self.apply(&FourMomentum::on_shell(m, p));
        FourMomentum::on_shell(m, &image.spatial())
    }

    /// True when the transform leaves time untouched (pure rotation).
    pub fn is_rotation(&self, tol: f64) -> bool {
        let mut worst = (self.m[(0, 0)] - 1.0).abs();
        for i in 1..4 {
            worst = worst.max(self.m[(0, i)].abs()).max(self.m[(i, 0)].abs());
        }
        worst <= tol
    }

    /// Rotation about an axis by `angle` (Rodrigues formula on the spatial block).
    pub fn rotation_about(axis: &[f64; 3], angle: f64) -> Result<LorentzTransform> {
        let n = (axis[0] * axis[0] + axis[1] * axis[1] + axis[2] * axis[2]).sqrt();
        if n == 0.0 || !n.is_finite() {
            return Err(Error::invalid("rotation axis must be nonzero and finite"));
        }
        let u = Vector3::new(axis[0] / n, axis[1] / n, axis[2] / n);
        let k = Matrix3::new(0.0, -u[2], u[1], u[2], 0.0, -u[0], -u[1], u[0], 0.0);
        let r = Matrix3::identity() + k * angle.sin() + k * k * (1.0 - angle.cos());
        let mut m = Matrix4::identity();
        for i in 0..3 {
            for j in 0..3 {
                m[(i + 1, j + 1)] = r[(i, j)];
            }
        }
        Ok(LorentzTransform { m })
    }

    pub fn rotation_z(angle: f64) -> LorentzTransform {
        LorentzTransform::rotation_about(&[0.0, 0.0, 1.0], angle).expect("fixed axis")
    }

    pub fn rotation_y(angle: f64) -> LorentzTransform {
        LorentzTransform::rotation_about(&[0.0, 1.0, 0.0], angle).expect("fixed axis")
    }

    /// Boost along +z with the given rapidity.
    pub fn boost_z(rapidity: f64) -> LorentzTransform {
        let (ch, sh) = (rapidity.cosh(), rapidity.sinh());
        let mut m = Matrix4::identity();
        m[(0, 0)] = ch;
        m[(0, 3)] = sh;
        m[(3, 0)] = sh;
        m[(3, 3)] = ch;
        LorentzTransform { m }
    }

    /// z-y-z Euler angles of the rotation part; errors if the transform is
    /// not a pure rotation to within `tol`.
    pub fn euler_angles(&self, tol: f64) -> Result<(f64, f64, f64)> {
        if !self.is_rotation(tol) {
            return Err(Error::invalid(format!(
                "euler_angles on non-rotation (time-row residual exceeds {tol:.1e})"
            )));
        }
        let r = |i: usize, j: usize| self.m[(i + 1, j + 1)];
        let c = r(2, 2).clamp(-1.0, 1.0);
        // sin(theta) from the third column, so near-gimbal roundoff noise
        // (entries ~1e-16) is distinguishable from a genuinely small angle
        let s = r(0, 2).hypot(r(1, 2));
        let theta = s.atan2(c);
        let (phi, psi) = if s > 1e-12 {
            (
                r(1, 2).atan2(r(0, 2)),
                r(2, 1).atan2(-r(2, 0)),
            )
        } else if c > 0.0 {
            // theta ~ 0: only phi + psi is defined; fix psi = 0
            (r(1, 0).atan2(r(0, 0)), 0.0)
        } else {
            // theta ~ pi: only phi - psi is defined; fix psi = 0
            ((-r(1, 0)).atan2(-r(0, 0)), 0.0)
        };
        Ok((normalize_half_open(phi), theta, normalize_half_open(psi)))
    }
}

/// Map an angle to (-pi, pi].
fn normalize_half_open(a: f64) -> f64 {
    let two_pi = 2.0 * std::f64::consts::PI;
    let mut v = a % two_pi;
    if v <= -std::f64::consts::PI {
        v += two_pi;
    } else if v > std::f64::consts::PI {
        v -= two_pi;
    }
    v
}

impl std::ops::Mul for &LorentzTransform {
    type Output = LorentzTransform;
    fn mul(self, rhs: &LorentzTransform) -> LorentzTransform {
        self.compose(rhs)
    }
}

/// A Poincare-group element `(Lambda, a)` acting as `x -> Lambda x + a`.
#[derive(Debug, Clone)]
pub struct PoincareTransform {
    pub lambda: LorentzTransform,
    /// Spacetime displacement `(a^0, a^1, a^2, a^3)`.
    pub a: [f64; 4],
}

impl PoincareTransform {
    pub fn identity() -> PoincareTransform {
        PoincareTransform {
            lambda: LorentzTransform::identity(),
            a: [0.0; 4],
        }
    }

    pub fn translation(a: [f64; 4]) -> PoincareTransform {
        PoincareTransform {
            lambda: LorentzTransform::identity(),
            a,
        }
    }

    pub fn from_lorentz(lambda: LorentzTransform) -> PoincareTransform {
        PoincareTransform { lambda, a: [0.0; 4] }
    }

    /// Group product: `(L1, a1)(L2, a2) = (L1 L2, a1 + L1 a2)`.
    pub fn compose(&self, other: &PoincareTransform) -> PoincareTransform {
        let rotated = self.lambda.apply(&FourMomentum::new(
            other.a[0], other.a[1], other.a[2], other.a[3],
        ));
        PoincareTransform {
            lambda: self.lambda.compose(&other.lambda),
            a: [
                self.a[0] + rotated.e,
                self.a[1] + rotated.px,
                self.a[2] + rotated.py,
                self.a[3] + rotated.pz,
            ],
        }
    }
}

/// Rotationless (canonical) boost taking the rest vector `(m, 0)` to
/// `(omega(m,p), p)`.
pub fn canonical_boost(m: f64, p: &[f64; 3]) -> Result<LorentzTransform> {
    if !(m > 0.0) || !m.is_finite() {
        return Err(Error::invalid(format!("canonical boost needs m > 0, got {m}")));
    }
    let w = omega(m, p);
    let mut mat = Matrix4::identity();
    mat[(0, 0)] = w / m;
    for i in 0..3 {
        mat[(0, i + 1)] = p[i] / m;
        mat[(i + 1, 0)] = p[i] / m;
        for j in 0..3 {
            mat[(i + 1, j + 1)] = (i == j) as u8 as f64 + p[i] * p[j] / (m * (w + m));
        }
    }
    Ok(LorentzTransform { m: mat })
}

/// Wigner rotation `B^{-1}(Lp/m) L B(p/m)` for a particle of mass `m` at
/// three-momentum `p`; always a pure rotation for timelike momenta.
pub fn wigner_rotation(
    lambda: &LorentzTransform,
    m: f64,
    p: &[f64; 3],
) -> Result<LorentzTransform> {
    let b_in = canonical_boost(m, p)?;
    let image = lambda.apply(&FourMomentum::on_shell(m, p));
    let b_out = canonical_boost(m, &image.spatial())?;
    let w = b_out.inverse().compose(lambda).compose(&b_in);
    Ok(w)
}

/// One basis state's image under the one-particle representation
/// `U(Lambda, a)`: the delta is factored out and returned as `p_out`, the
/// remaining coefficient is `phase * sqrt_factor * D^j_{mu' mu}`.
#[derive(Debug, Clone)]
pub struct WignerAction {
    /// Image momentum `Lambda p` (on shell).
    pub p_out: FourMomentum,
    /// `sqrt(omega(p_out)/omega(p_in))`.
    pub sqrt_factor: f64,
    /// Translation phase `exp(i p_out . a)` with the Minkowski product.
    pub phase: Complex64,
    /// Wigner-rotation matrix for spin `j`.
    pub spin: SpinRotation,
}

impl WignerAction {
    /// Full coefficient multiplying `delta^3(p' - Lambda p)` for projections
    /// `2mu_out`, `2mu_in` (doubled).
    pub fn coefficient(&self, mu_out2: i32, mu_in2: i32) -> Result<Complex64> {
        Ok(self.phase * self.sqrt_factor * self.spin.element(mu_out2, mu_in2)?)
    }
}

/// Spin-`j` Wigner D matrix of a rotation (given as a Lorentz transform
/// whose time row/column must be trivial).
pub fn wigner_d(j: Spin, rotation: &LorentzTransform) -> Result<SpinRotation> {
    let (phi, theta, psi) = rotation.euler_angles(1e-9)?;
    Ok(SpinRotation::from_euler(j, phi, theta, psi))
}

/// Matrix element data of `U(Lambda, a)` on the state `|p, mu>` of a
/// mass-`m`, spin-`j` particle: `a` is the spacetime displacement
/// `(a^0, a^1, a^2, a^3)`; the translation phase uses the *image* momentum,
/// i.e. the element is `exp(i p_out . a) sqrt(omega_out/omega_in) D^j[R_W]`
/// attached to the image point.
pub fn single_particle_wigner_function(
    m: f64,
    j: Spin,
    lambda: &LorentzTransform,
    a: &[f64; 4],
    p_in: &[f64; 3],
) -> Result<WignerAction> {
    let w_in = omega(m, p_in);
    let p_out = lambda.apply_on_shell(m, p_in);
    let rot = wigner_rotation(lambda, m, p_in)?;
    let (phi, theta, psi) = rot.euler_angles(1e-9)?;
    let spin = SpinRotation::from_euler(j, phi, theta, psi);
    let minkowski = p_out.e * a[0] - p_out.px * a[1] - p_out.py * a[2] - p_out.pz * a[3];
    Ok(WignerAction {
        p_out,
        sqrt_factor: (p_out.e / w_in).sqrt(),
        phase: Complex64::from_polar(1.0, minkowski),
        spin,
    })
}
