//! Quadrature rules and momentum grids.
//!
//! All radial integrals in the engine use Gauss-Legendre nodes mapped from
//! (-1, 1) to (0, inf) by `k = s * tan(pi (x + 1) / 4)`, where the scale `s`
//! sets the momentum at which half the nodes lie below and half above. The
//! same nodes and weights are shared by kernels, free mass operators, and
//! integral-equation solves so that discretized operators stay consistent.

use crate::error::{Error, Result};

/// Gauss-Legendre rule on (-1, 1).
#[derive(Debug, Clone)]
pub struct QuadRule {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

/// Compute the n-point Gauss-Legendre rule by Newton iteration on the
/// Legendre recurrence. Nodes are ascending and exactly symmetric about 0.
pub fn gauss_legendre(n: usize) -> Result<QuadRule> {
    if n == 0 {
        return Err(Error::invalid("quadrature order must be positive"));
    }
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi-style initial guess for the i-th root (descending order).
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_and_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-15 {
                let (_, d2) = legendre_and_derivative(n, x);
                dp = d2;
                break;
            }
        }
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        // mirror to enforce exact symmetry
        nodes[n - 1 - i] = x;
        weights[n - 1 - i] = w;
        nodes[i] = -x;
        weights[i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
        let (_, d) = legendre_and_derivative(n, 0.0);
        weights[n / 2] = 2.0 / (d * d);
    }
    Ok(QuadRule { nodes, weights })
}

/// Legendre polynomial P_n and derivative P_n' at x via the three-term
/// recurrence and the standard derivative identity.
fn legendre_and_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = if (1.0 - x * x).abs() > 1e-300 {
        n as f64 * (x * p1 - p0) / (x * x - 1.0)
    } else {
        0.0
    };
    (p1, d)
}

/// Gauss-Legendre nodes mapped to a semi-infinite radial momentum grid.
///
/// `k_i = scale * tan(pi (x_i + 1) / 4)` with weights carrying the Jacobian,
/// so `sum_i w_i f(k_i)` approximates the integral of `f` over `(0, inf)`.
/// Weights do NOT include the `k^2` measure factor; operator code applies
/// `k^2` explicitly where the spherical measure calls for it.
#[derive(Debug, Clone, PartialEq)]
pub struct RadialGrid {
    pub k: Vec<f64>,
    pub w: Vec<f64>,
    pub scale: f64,
}

impl RadialGrid {
    /// Build an `n`-point grid with mapping scale `scale` (same units as k).
    pub fn new(n: usize, scale: f64) -> Result<RadialGrid> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(Error::invalid(format!("grid scale must be positive, got {scale}")));
        }
        let rule = gauss_legendre(n)?;
        let quarter_pi = std::f64::consts::FRAC_PI_4;
        let mut k = Vec::with_capacity(n);
        let mut w = Vec::with_capacity(n);
        for (&x, &wx) in rule.nodes.iter().zip(&rule.weights) {
            let u = quarter_pi * (x + 1.0);
            let c = u.cos();
            k.push(scale * u.tan());
            w.push(wx * scale * quarter_pi / (c * c));
        }
        Ok(RadialGrid { k, w, scale })
    }

    pub fn len(&self) -> usize {
        self.k.len()
    }

    pub fn is_empty(&self) -> bool {
        self.k.is_empty()
    }

    /// Largest node; momenta beyond this are outside the grid hull.
    pub fn k_max(&self) -> f64 {
        *self.k.last().expect("nonempty grid")
    }

    /// Integrate `f(k) k^2 dk` over the half line with this rule.
    pub fn integrate_radial(&self, mut f: impl FnMut(f64) -> f64) -> f64 {
        self.k
            .iter()
            .zip(&self.w)
            .map(|(&k, &w)| w * k * k * f(k))
            .sum()
    }
}
