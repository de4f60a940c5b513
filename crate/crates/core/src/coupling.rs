//! Reduction of multi-particle product bases to mass/spin irreducible
//! bases: SU(2) Clebsch-Gordan coefficients, spherical harmonics, the
//! two-particle invariant-mass relations, and the canonical-spin coupling
//! coefficients in partial-wave form.
//!
//! Three-particle bases are built stepwise: the interacting pair is reduced
//! first, the resulting (mass, spin) composite is then coupled to the
//! spectator with the same machinery. The degeneracy label records that
//! order, which puts the pair's internal relative momentum directly among
//! the basis variables — exactly where two-body kernels need it.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kinematics::{canonical_boost, wigner_rotation, FourMomentum};
use crate::spin::{factorial, Spin};

/// `sqrt(m1^2 + k^2) + sqrt(m2^2 + k^2)`: the invariant mass of a pair with
/// relative momentum `k` in its rest frame.
pub fn invariant_mass(m1: f64, m2: f64, k: f64) -> f64 {
    (m1 * m1 + k * k).sqrt() + (m2 * m2 + k * k).sqrt()
}

/// Invert `invariant_mass` in closed form via the triangle (Kallen)
/// function: `k = sqrt(lambda(m3^2, m1^2, m2^2)) / (2 m3)`.
pub fn rel_momentum_from_mass(m1: f64, m2: f64, m3: f64) -> Result<f64> {
    if m3 < m1 + m2 {
        return Err(Error::EnergyOutOfRange(format!(
            "invariant mass {m3} below threshold {}",
            m1 + m2
        )));
    }
    let (a, b, c) = (m3 * m3, m1 * m1, m2 * m2);
    let lam = a * a + b * b + c * c - 2.0 * (a * b + a * c + b * c);
    Ok(lam.max(0.0).sqrt() / (2.0 * m3))
}

/// SU(2) Clebsch-Gordan coefficient `<j1 m1 j2 m2 | j m>` with all spins
/// and projections doubled. Triangle-rule or projection violations give an
/// exact zero.
pub fn clebsch_gordan(j1: Spin, m1: i32, j2: Spin, m2: i32, j: Spin, m: i32) -> f64 {
    let (j1, j2, jj) = (j1.doubled(), j2.doubled(), j.doubled());
    if m1 + m2 != m
        || m1.abs() > j1
        || m2.abs() > j2
        || m.abs() > jj
        || jj > j1 + j2
        || jj < (j1 - j2).abs()
        || (j1 + j2 + jj) % 2 != 0
        || (j1 + m1) % 2 != 0
        || (j2 + m2) % 2 != 0
    {
        return 0.0;
    }
    // all the following are integers (halves of even doubled sums)
    let f = |x: i32| factorial(x / 2);
    let pref = ((jj + 1) as f64 * f(j1 + j2 - jj) * f(j1 - j2 + jj) * f(-j1 + j2 + jj)
        / f(j1 + j2 + jj + 2))
    .sqrt()
        * (f(j1 + m1) * f(j1 - m1) * f(j2 + m2) * f(j2 - m2) * f(jj + m) * f(jj - m)).sqrt();
    // summation index z (doubled) over all values keeping factorials valid
    let z_min = 0.max(j2 - jj - m1).max(j1 - jj + m2);
    let z_max = (j1 + j2 - jj).min(j1 - m1).min(j2 + m2);
    let mut sum = 0.0;
    let mut z = z_min;
    while z <= z_max {
        let sign = if (z / 2) % 2 == 0 { 1.0 } else { -1.0 };
        sum += sign
            / (f(z)
                * f(j1 + j2 - jj - z)
                * f(j1 - m1 - z)
                * f(j2 + m2 - z)
                * f(jj - j2 + m1 + z)
                * f(jj - j1 - m2 + z));
        z += 2;
    }
    pref * sum
}

/// Associated Legendre `P_l^m(x)` for `m >= 0`, Condon-Shortley phase
/// included.
fn assoc_legendre(l: i32, m: i32, x: f64) -> f64 {
    debug_assert!(m >= 0 && l >= m);
    let somx2 = ((1.0 - x) * (1.0 + x)).max(0.0).sqrt();
    let mut pmm = 1.0;
    for i in 1..=m {
        pmm *= -((2 * i - 1) as f64) * somx2;
    }
    if l == m {
        return pmm;
    }
    let mut pmmp1 = x * (2 * m + 1) as f64 * pmm;
    if l == m + 1 {
        return pmmp1;
    }
    let mut pll = 0.0;
    for ll in (m + 2)..=l {
        pll = (x * ((2 * ll - 1) as f64) * pmmp1 - ((ll + m - 1) as f64) * pmm)
            / ((ll - m) as f64);
        pmm = pmmp1;
        pmmp1 = pll;
    }
    pll
}

/// Spherical harmonic `Y_l^m(theta, phi)` (physics normalization,
/// Condon-Shortley phase).
pub fn ylm(l: i32, m: i32, theta: f64, phi: f64) -> Complex64 {
    if m.abs() > l {
        return Complex64::new(0.0, 0.0);
    }
    let mm = m.abs();
    let norm = (((2 * l + 1) as f64) / (4.0 * std::f64::consts::PI) * factorial(l - mm)
        / factorial(l + mm))
    .sqrt();
    let p = assoc_legendre(l, mm, theta.cos());
    let base = norm * p;
    if m >= 0 {
        Complex64::from_polar(1.0, m as f64 * phi) * base
    } else {
        // Y_{l,-m} = (-1)^m conj(Y_{l,m})
        let sign = if mm % 2 == 0 { 1.0 } else { -1.0 };
        Complex64::from_polar(1.0, m as f64 * phi) * base * sign
    }
}

/// `Y_l^m` of a direction given as a (not necessarily normalized) vector.
pub fn ylm_dir(l: i32, m: i32, dir: &[f64; 3]) -> Complex64 {
    let r = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
    if r == 0.0 {
        // direction undefined: only l=0 survives on a zero vector
        return if l == 0 {
            Complex64::new(1.0 / (4.0 * std::f64::consts::PI).sqrt(), 0.0)
        } else {
            Complex64::new(0.0, 0.0)
        };
    }
    let theta = (dir[2] / r).clamp(-1.0, 1.0).acos();
    let phi = dir[1].atan2(dir[0]);
    ylm(l, m, theta, phi)
}

/// How a three-particle irreducible basis was built.
#[derive(Debug, Clone, PartialEq)]
pub enum CouplingStage {
    /// Direct two-particle reduction.
    TwoBody,
    /// A pair was reduced first (its internal labels recorded here), then
    /// coupled to the spectator.
    PairFirst {
        pair_k: f64,
        pair_j: Spin,
        pair_l: i32,
        pair_s: Spin,
    },
}

/// Orbital/spin degeneracy labels of an irreducible basis point.
#[derive(Debug, Clone, PartialEq)]
pub struct DegeneracyLabel {
    pub l: i32,
    pub s: Spin,
    pub stage: CouplingStage,
}

impl DegeneracyLabel {
    pub fn two_body(l: i32, s: Spin) -> DegeneracyLabel {
        DegeneracyLabel {
            l,
            s,
            stage: CouplingStage::TwoBody,
        }
    }

    /// Triangle rule `|l - s| <= j <= l + s`.
    pub fn allows(&self, j: Spin) -> bool {
        let l2 = 2 * self.l;
        let s2 = self.s.doubled();
        let j2 = j.doubled();
        j2 >= (l2 - s2).abs() && j2 <= l2 + s2 && (l2 + s2 + j2) % 2 == 0
    }
}

/// A point of the (mass, spin) irreducible basis: relative momentum
/// magnitude, total spin and projection (doubled), total three-momentum,
/// degeneracy labels.
#[derive(Debug, Clone, PartialEq)]
pub struct IrrepPoint {
    pub k: f64,
    pub j: Spin,
    pub mu: i32,
    pub p: [f64; 3],
    pub d: DegeneracyLabel,
}

/// Kinematic part of a two-particle reduction: total momentum, relative
/// momentum in the pair rest frame, and the square root of the Jacobian
/// `d(p1 p2) / d(P k)` that makes the change of variables unitary.
#[derive(Debug, Clone)]
pub struct PairKinematics {
    pub p_total: [f64; 3],
    pub k_vec: [f64; 3],
    pub k: f64,
    pub jacobian_sqrt: f64,
    pub invariant_mass: f64,
}

/// Reduce two on-shell momenta to total/relative variables; the relative
/// momentum is the canonical-boost image of particle 1 in the pair rest
/// frame.
pub fn pair_kinematics(m1: f64, m2: f64, p1: &[f64; 3], p2: &[f64; 3]) -> Result<PairKinematics> {
    let q1 = FourMomentum::on_shell(m1, p1);
    let q2 = FourMomentum::on_shell(m2, p2);
    let total = q1 + q2;
    let m12 = total.mass()?;
    let boost = canonical_boost(m12, &total.spatial())?;
    let k4 = boost.inverse().apply(&q1);
    let k_vec = k4.spatial();
    let k = k4.spatial_norm();
    // density Jacobian d(P k)/d(p1 p2) =
    //   [omega1(k) omega2(k) omega_m12(P)] / [m12 omega1(p1) omega2(p2)];
    // equals 1 at P = 0 and is fixed away from it by requiring the reduction
    // to intertwine the product representation with the mass-m12 one
    let jac = ((m1 * m1 + k * k).sqrt() * (m2 * m2 + k * k).sqrt() * total.e)
        / (m12 * q1.e * q2.e);
    Ok(PairKinematics {
        p_total: total.spatial(),
        k_vec,
        k,
        jacobian_sqrt: jac.sqrt(),
        invariant_mass: m12,
    })
}

/// Result of projecting a two-particle product plane wave onto an
/// irreducible basis point: the delta-function images plus the remaining
/// coefficient density.
#[derive(Debug, Clone)]
pub struct IrrepProjection {
    /// Total-momentum image (the factored `delta^3(P - p1 - p2)`).
    pub p_total: [f64; 3],
    /// Relative-momentum image (the factored radial delta).
    pub k: f64,
    pub value: Complex64,
}

/// Canonical-spin Poincare Clebsch-Ordan coefficient density
/// `<p1 mu1, p2 mu2 | k j mu P (l s)>` with both deltas factored out.
///
/// `value = sqrt(J) * sum_{ml ms mu1' mu2'} Y*_{l ml}(khat)
///   <l ml s ms | j mu> <j1 mu1' j2 mu2' | s ms>
///   D^{j1}_{mu1' mu1}(Rw1) D^{j2}_{mu2' mu2}(Rw2)`
/// where `Rw_i` are the Wigner rotations of the boost to the pair frame.
/// For scalar pairs this collapses to `sqrt(J) * Y*_{l mu}(khat)`.
pub fn pair_to_irrep(
    m1: f64,
    j1: Spin,
    p1: &[f64; 3],
    mu1: i32,
    m2: f64,
    j2: Spin,
    p2: &[f64; 3],
    mu2: i32,
    target: &IrrepPoint,
) -> Result<IrrepProjection> {
    let kin = pair_kinematics(m1, m2, p1, p2)?;
    let l = target.d.l;
    let s = target.d.s;
    if !target.d.allows(target.j) {
        return Ok(IrrepProjection {
            p_total: kin.p_total,
            k: kin.k,
            value: Complex64::new(0.0, 0.0),
        });
    }
    // spin rotations induced by the boost from the lab to the pair frame
    let boost_inv = canonical_boost(kin.invariant_mass, &kin.p_total)?.inverse();
    let d1 = if j1.doubled() > 0 {
        Some(crate::kinematics::wigner_d(j1, &wigner_rotation(&boost_inv, m1, p1)?)?)
    } else {
        None
    };
    let d2 = if j2.doubled() > 0 {
        Some(crate::kinematics::wigner_d(j2, &wigner_rotation(&boost_inv, m2, p2)?)?)
    } else {
        None
    };

    let mut value = Complex64::new(0.0, 0.0);
    for ml in -l..=l {
        let ml2 = 2 * ml;
        for ms in s.projections() {
            let cg_ls = clebsch_gordan(Spin(2 * l), ml2, s, ms, target.j, target.mu);
            if cg_ls == 0.0 {
                continue;
            }
            let y = ylm_dir(l, ml, &kin.k_vec).conj();
            if y.norm() == 0.0 && cg_ls != 0.0 && l > 0 {
                continue;
            }
            for mu1p in j1.projections() {
                for mu2p in j2.projections() {
                    let cg_ss = clebsch_gordan(j1, mu1p, j2, mu2p, s, ms);
                    if cg_ss == 0.0 {
                        continue;
                    }
                    let rot1 = match &d1 {
                        Some(d) => d.element(mu1p, mu1)?,
                        None => Complex64::new(1.0, 0.0),
                    };
                    let rot2 = match &d2 {
                        Some(d) => d.element(mu2p, mu2)?,
                        None => Complex64::new(1.0, 0.0),
                    };
                    value += y * cg_ls * cg_ss * rot1 * rot2;
                }
            }
        }
    }
    Ok(IrrepProjection {
        p_total: kin.p_total,
        k: kin.k,
        value: value * kin.jacobian_sqrt,
    })
}

/// Second-stage coupling: treat an already-reduced pair as a particle of
/// mass `m3(pair_k)` and spin `pair_j`, and couple it to the spectator.
/// The result's degeneracy stage records the coupling order.
#[allow(clippy::too_many_arguments)]
pub fn three_body_coupling(
    pair: &IrrepPoint,
    pair_m1: f64,
    pair_m2: f64,
    spectator_mass: f64,
    spectator_j: Spin,
    p_spectator: &[f64; 3],
    mu_pair: i32,
    mu_spectator: i32,
    target: &IrrepPoint,
) -> Result<IrrepProjection> {
    let pair_mass = invariant_mass(pair_m1, pair_m2, pair.k);
    pair_to_irrep(
        pair_mass,
        pair.j,
        &pair.p,
        mu_pair,
        spectator_mass,
        spectator_j,
        p_spectator,
        mu_spectator,
        target,
    )
}
