//! Discretized invariant-mass operators.
//!
//! A model is a direct sum of channels: two-body channels carry one radial
//! grid in the pair relative momentum `k`; three-body channels carry the
//! pair grid plus a spectator grid in `q` (pair coupled first, spectator
//! second). Operators are stored in the *symmetrized* basis: basis vectors
//! absorb `sqrt(w k^2)` (and `sqrt(w_q q^2)` for spectator variables), so
//! hermitian kernels become symmetric matrices and eigenvectors come out
//! orthonormal in the plain Euclidean inner product, which equals the
//! quadrature inner product in the density convention.
//!
//! Interactions never depend on the total momentum or the spin projection;
//! blocks are built per total spin `j` and carry no such labels by
//! construction.

use nalgebra::{DMatrix, DVector};

use crate::coupling::{invariant_mass, DegeneracyLabel};
use crate::error::{Error, Result};
use crate::grid::RadialGrid;
use crate::sectors::SectorLabel;
use crate::spin::Spin;

/// Momentum-space content of a channel.
#[derive(Debug, Clone, PartialEq)]
pub enum ChannelKind {
    /// One relative momentum; masses of the two constituents.
    TwoBody { grid: RadialGrid, masses: (f64, f64) },
    /// Pair momentum `k` plus spectator momentum `q`; pair is coupled first.
    ThreeBody {
        pair_grid: RadialGrid,
        pair_masses: (f64, f64),
        q_grid: RadialGrid,
        spectator_mass: f64,
    },
}

/// A partial-wave channel of the model space.
#[derive(Debug, Clone, PartialEq)]
pub struct Channel {
    pub sector: SectorLabel,
    pub j: Spin,
    pub d: DegeneracyLabel,
    pub kind: ChannelKind,
}

impl Channel {
    pub fn dim(&self) -> usize {
        match &self.kind {
            ChannelKind::TwoBody { grid, .. } => grid.len(),
            ChannelKind::ThreeBody {
                pair_grid, q_grid, ..
            } => pair_grid.len() * q_grid.len(),
        }
    }

    /// Number of pair-momentum nodes (the fast index for three-body).
    pub fn pair_len(&self) -> usize {
        match &self.kind {
            ChannelKind::TwoBody { grid, .. } => grid.len(),
            ChannelKind::ThreeBody { pair_grid, .. } => pair_grid.len(),
        }
    }

    /// Free invariant mass at a flattened index: `m3(k)` for two-body,
    /// nested `invariant_mass(m3(k), m_spectator, q)` for three-body.
    pub fn free_mass(&self, flat: usize) -> f64 {
        match &self.kind {
            ChannelKind::TwoBody { grid, masses } => {
                invariant_mass(masses.0, masses.1, grid.k[flat])
            }
            ChannelKind::ThreeBody {
                pair_grid,
                pair_masses,
                q_grid,
                spectator_mass,
            } => {
                let i = flat % pair_grid.len();
                let a = flat / pair_grid.len();
                let m_pair = invariant_mass(pair_masses.0, pair_masses.1, pair_grid.k[i]);
                invariant_mass(m_pair, *spectator_mass, q_grid.k[a])
            }
        }
    }

    /// Rest-mass threshold: the channel's free mass at vanishing momenta.
    pub fn threshold(&self) -> f64 {
        match &self.kind {
            ChannelKind::TwoBody { masses, .. } => masses.0 + masses.1,
            ChannelKind::ThreeBody {
                pair_masses,
                spectator_mass,
                ..
            } => pair_masses.0 + pair_masses.1 + spectator_mass,
        }
    }

    /// Symmetrization weight at a flattened index: `sqrt(w k^2)` with the
    /// spectator factor included for three-body channels.
    pub fn sym_weight(&self, flat: usize) -> f64 {
        match &self.kind {
            ChannelKind::TwoBody { grid, .. } => {
                (grid.w[flat] * grid.k[flat] * grid.k[flat]).sqrt()
            }
            ChannelKind::ThreeBody {
                pair_grid, q_grid, ..
            } => {
                let i = flat % pair_grid.len();
                let a = flat / pair_grid.len();
                ((pair_grid.w[i] * pair_grid.k[i] * pair_grid.k[i])
                    * (q_grid.w[a] * q_grid.k[a] * q_grid.k[a]))
                    .sqrt()
            }
        }
    }
}

/// Direct sum of channels with flattened offsets.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelBasis {
    channels: Vec<Channel>,
    offsets: Vec<usize>,
    dim: usize,
}

impl ChannelBasis {
    pub fn new(channels: Vec<Channel>) -> Result<ChannelBasis> {
        if channels.is_empty() {
            return Err(Error::invalid("channel basis must be nonempty"));
        }
        let mut offsets = Vec::with_capacity(channels.len());
        let mut dim = 0;
        for c in &channels {
            offsets.push(dim);
            dim += c.dim();
        }
        Ok(ChannelBasis {
            channels,
            offsets,
            dim,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.channels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.channels.is_empty()
    }

    pub fn channel(&self, idx: usize) -> &Channel {
        &self.channels[idx]
    }

    pub fn channels(&self) -> &[Channel] {
        &self.channels
    }

    pub fn offset(&self, idx: usize) -> usize {
        self.offsets[idx]
    }

    /// Channel indices supported on a sector.
    pub fn sector_channels(&self, sector: &SectorLabel) -> Vec<usize> {
        self.channels
            .iter()
            .enumerate()
            .filter(|(_, c)| &c.sector == sector)
            .map(|(i, _)| i)
            .collect()
    }

    /// Free-mass diagonal over the whole basis.
    pub fn free_masses(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim);
        for (ci, c) in self.channels.iter().enumerate() {
            for f in 0..c.dim() {
                v[self.offsets[ci] + f] = c.free_mass(f);
            }
        }
        v
    }

    /// Symmetrization weights over the whole basis.
    pub fn sym_weights(&self) -> DVector<f64> {
        let mut v = DVector::zeros(self.dim);
        for (ci, c) in self.channels.iter().enumerate() {
            for f in 0..c.dim() {
                v[self.offsets[ci] + f] = c.sym_weight(f);
            }
        }
        v
    }
}

/// A raw kernel block in the density convention: `values[(i, j)]` is
/// `<point_i(row channel) | v | point_j(col channel)>` *without* quadrature
/// weights. Symmetrization happens at assembly.
#[derive(Debug, Clone)]
pub struct KernelBlock {
    pub row: usize,
    pub col: usize,
    pub values: DMatrix<f64>,
}

/// Free (non-interacting) mass operator: diagonal in the channel basis.
pub fn build_m0(basis: &ChannelBasis) -> MassOperator {
    MassOperator {
        basis: basis.clone(),
        m0: basis.free_masses(),
        v: DMatrix::zeros(basis.dim(), basis.dim()),
    }
}

/// Yamaguchi form factor `g(k) = 1/(k^2 + beta^2)`.
pub fn yamaguchi(k: f64, beta: f64) -> f64 {
    1.0 / (k * k + beta * beta)
}

/// Separable multichannel two-body model: per-channel form-factor ranges
/// and a symmetric strength matrix, giving kernels
/// `v_ab(k', k) = lambda_ab g_a(k') g_b(k)`.
#[derive(Debug, Clone)]
pub struct SeparableModel {
    pub betas: Vec<f64>,
    pub lambda: DMatrix<f64>,
}

impl SeparableModel {
    pub fn new(betas: Vec<f64>, lambda: DMatrix<f64>) -> Result<SeparableModel> {
        let n = betas.len();
        if lambda.nrows() != n || lambda.ncols() != n {
            return Err(Error::DimensionMismatch(format!(
                "strength matrix {}x{} vs {} channels",
                lambda.nrows(),
                lambda.ncols(),
                n
            )));
        }
        for b in &betas {
            if !(*b > 0.0) {
                return Err(Error::invalid("form-factor range must be positive"));
            }
        }
        let asym = crate::linalg::hermiticity_residual(&lambda);
        if asym > 0.0 {
            return Err(Error::NotHermitian {
                residual: asym,
                tol: 0.0,
                context: "separable strength matrix must be exactly symmetric".into(),
            });
        }
        Ok(SeparableModel { betas, lambda })
    }

    /// Kernel density between channel `a` at `k_row` and channel `b` at `k_col`.
    pub fn kernel(&self, a: usize, k_row: f64, b: usize, k_col: f64) -> f64 {
        self.lambda[(a, b)] * yamaguchi(k_row, self.betas[a]) * yamaguchi(k_col, self.betas[b])
    }
}

/// Evaluate a separable model on two-body channels of a basis.
///
/// `channel_map[i]` gives, for each model channel, the basis channel index
/// it lives on. Emits one block per (model-channel, model-channel) pair
/// with nonzero strength.
pub fn build_two_body_kernel(
    basis: &ChannelBasis,
    model: &SeparableModel,
    channel_map: &[usize],
) -> Result<Vec<KernelBlock>> {
    if channel_map.len() != model.betas.len() {
        return Err(Error::DimensionMismatch(
            "channel map length != model channels".into(),
        ));
    }
    let mut blocks = Vec::new();
    for (a, &ca) in channel_map.iter().enumerate() {
        for (b, &cb) in channel_map.iter().enumerate() {
            if model.lambda[(a, b)] == 0.0 {
                continue;
            }
            let ga = match &basis.channel(ca).kind {
                ChannelKind::TwoBody { grid, .. } => grid,
                _ => {
                    return Err(Error::invalid(
                        "two-body kernel requested on a three-body channel",
                    ))
                }
            };
            let gb = match &basis.channel(cb).kind {
                ChannelKind::TwoBody { grid, .. } => grid,
                _ => {
                    return Err(Error::invalid(
                        "two-body kernel requested on a three-body channel",
                    ))
                }
            };
            let mut vals = DMatrix::zeros(ga.len(), gb.len());
            for i in 0..ga.len() {
                for jj in 0..gb.len() {
                    vals[(i, jj)] = model.kernel(a, ga.k[i], b, gb.k[jj]);
                }
            }
            blocks.push(KernelBlock {
                row: ca,
                col: cb,
                values: vals,
            });
        }
    }
    Ok(blocks)
}

/// Connected interaction terms beyond the embedded pair dynamics:
/// two-body-sector kernels acting inside the production window, sector
/// couplings, particle-number-changing vertices, and fully connected
/// three-body terms. All form factors are short-ranged.
#[derive(Debug, Clone)]
pub enum V3Term {
    /// Separable Yamaguchi kernel between two two-body channels.
    TwoBodySector {
        row: usize,
        col: usize,
        strength: f64,
        beta_row: f64,
        beta_col: f64,
    },
    /// Production vertex between a two-body channel (k') and a three-body
    /// channel (k, q): Gaussian form factors in every momentum.
    TwoToThree {
        two: usize,
        three: usize,
        strength: f64,
        beta_two: f64,
        beta_pair: f64,
        beta_spectator: f64,
    },
    /// Rank-1 Gaussian kernel between three-body channels.
    ThreeBodyConnected {
        row: usize,
        col: usize,
        strength: f64,
        beta_pair: f64,
        beta_spectator: f64,
    },
}

fn gauss_ff(k: f64, beta: f64) -> f64 {
    (-(k * k) / (beta * beta)).exp()
}

/// Build the connected blocks; number-changing terms are mirrored so the
/// assembled operator is symmetric.
pub fn build_v3(basis: &ChannelBasis, terms: &[V3Term]) -> Result<Vec<KernelBlock>> {
    let mut blocks = Vec::new();
    for term in terms {
        match *term {
            V3Term::TwoBodySector {
                row,
                col,
                strength,
                beta_row,
                beta_col,
            } => {
                if strength == 0.0 {
                    continue;
                }
                let (gr, gc) = match (&basis.channel(row).kind, &basis.channel(col).kind) {
                    (
                        ChannelKind::TwoBody { grid: gr, .. },
                        ChannelKind::TwoBody { grid: gc, .. },
                    ) => (gr, gc),
                    _ => return Err(Error::invalid("TwoBodySector term needs two-body channels")),
                };
                let mut vals = DMatrix::zeros(gr.len(), gc.len());
                for i in 0..gr.len() {
                    for j in 0..gc.len() {
                        vals[(i, j)] =
                            strength * yamaguchi(gr.k[i], beta_row) * yamaguchi(gc.k[j], beta_col);
                    }
                }
                blocks.push(KernelBlock {
                    row,
                    col,
                    values: vals.clone(),
                });
                if row != col {
                    blocks.push(KernelBlock {
                        row: col,
                        col: row,
                        values: vals.transpose(),
                    });
                }
            }
            V3Term::TwoToThree {
                two,
                three,
                strength,
                beta_two,
                beta_pair,
                beta_spectator,
            } => {
                if strength == 0.0 {
                    continue;
                }
                let g2 = match &basis.channel(two).kind {
                    ChannelKind::TwoBody { grid, .. } => grid,
                    _ => return Err(Error::invalid("TwoToThree: first channel must be two-body")),
                };
                let (gp, gq) = match &basis.channel(three).kind {
                    ChannelKind::ThreeBody {
                        pair_grid, q_grid, ..
                    } => (pair_grid, q_grid),
                    _ => {
                        return Err(Error::invalid(
                            "TwoToThree: second channel must be three-body",
                        ))
                    }
                };
                let mut vals = DMatrix::zeros(g2.len(), gp.len() * gq.len());
                for i in 0..g2.len() {
                    for a in 0..gq.len() {
                        for jp in 0..gp.len() {
                            vals[(i, a * gp.len() + jp)] = strength
                                * gauss_ff(g2.k[i], beta_two)
                                * gauss_ff(gp.k[jp], beta_pair)
                                * gauss_ff(gq.k[a], beta_spectator);
                        }
                    }
                }
                blocks.push(KernelBlock {
                    row: two,
                    col: three,
                    values: vals.clone(),
                });
                blocks.push(KernelBlock {
                    row: three,
                    col: two,
                    values: vals.transpose(),
                });
            }
            V3Term::ThreeBodyConnected {
                row,
                col,
                strength,
                beta_pair,
                beta_spectator,
            } => {
                if strength == 0.0 {
                    continue;
                }
                let (grp, grq) = match &basis.channel(row).kind {
                    ChannelKind::ThreeBody {
                        pair_grid, q_grid, ..
                    } => (pair_grid, q_grid),
                    _ => {
                        return Err(Error::invalid(
                            "ThreeBodyConnected term needs three-body channels",
                        ))
                    }
                };
                let (gcp, gcq) = match &basis.channel(col).kind {
                    ChannelKind::ThreeBody {
                        pair_grid, q_grid, ..
                    } => (pair_grid, q_grid),
                    _ => {
                        return Err(Error::invalid(
                            "ThreeBodyConnected term needs three-body channels",
                        ))
                    }
                };
                let form = |gp: &RadialGrid, gq: &RadialGrid, flat: usize| {
                    let i = flat % gp.len();
                    let a = flat / gp.len();
                    gauss_ff(gp.k[i], beta_pair) * gauss_ff(gq.k[a], beta_spectator)
                };
                let (nr, nc) = (grp.len() * grq.len(), gcp.len() * gcq.len());
                let mut vals = DMatrix::zeros(nr, nc);
                for r in 0..nr {
                    for c in 0..nc {
                        vals[(r, c)] = strength * form(grp, grq, r) * form(gcp, gcq, c);
                    }
                }
                blocks.push(KernelBlock {
                    row,
                    col,
                    values: vals.clone(),
                });
                if row != col {
                    blocks.push(KernelBlock {
                        row: col,
                        col: row,
                        values: vals.transpose(),
                    });
                }
            }
        }
    }
    Ok(blocks)
}

/// Embedded pair dynamics on a group of three-body channels sharing a
/// spectator grid.
///
/// For each spectator node `q_a` the caller supplies the tensor-product
/// pair-spectator mass matrix `M_TP(q_a)` and the unitary `W(q_a)`, both on
/// the stacked pair basis of `row_channels` (already symmetrized). The
/// embedded interaction is `W^T M_TP W - M_0` per slice, which vanishes
/// identically when the pair interaction does (then `M_TP = M_0` and
/// `W = 1`). The result is a symmetric contribution on the full basis,
/// supported only on the listed channels.
pub fn embed_v2(
    basis: &ChannelBasis,
    row_channels: &[usize],
    m_tp_per_q: &[DMatrix<f64>],
    w_per_q: &[DMatrix<f64>],
) -> Result<DMatrix<f64>> {
    if row_channels.is_empty() {
        return Err(Error::invalid("embed_v2 needs at least one target channel"));
    }
    // all targets must be three-body with a common q-grid
    let mut q_grid: Option<&RadialGrid> = None;
    let mut pair_lens = Vec::new();
    for &ci in row_channels {
        match &basis.channel(ci).kind {
            ChannelKind::ThreeBody {
                pair_grid, q_grid: qg, ..
            } => {
                if let Some(q0) = q_grid {
                    if q0 != qg {
                        return Err(Error::DimensionMismatch(
                            "embed_v2 channels must share the spectator grid".into(),
                        ));
                    }
                } else {
                    q_grid = Some(qg);
                }
                pair_lens.push(pair_grid.len());
            }
            _ => {
                return Err(Error::invalid(
                    "embed_v2 targets must be three-body channels",
                ))
            }
        }
    }
    let nq = q_grid.expect("nonempty").len();
    let stacked: usize = pair_lens.iter().sum();
    if m_tp_per_q.len() != nq || w_per_q.len() != nq {
        return Err(Error::DimensionMismatch(format!(
            "need {nq} per-spectator-node matrices, got {} and {}",
            m_tp_per_q.len(),
            w_per_q.len()
        )));
    }
    let m0 = basis.free_masses();
    let mut out = DMatrix::zeros(basis.dim(), basis.dim());
    for a in 0..nq {
        let m_tp = &m_tp_per_q[a];
        let w = &w_per_q[a];
        if m_tp.nrows() != stacked || w.nrows() != stacked {
            return Err(Error::DimensionMismatch(format!(
                "slice {a}: expected {stacked}x{stacked} matrices"
            )));
        }
        let embedded = w.transpose() * m_tp * w;
        // scatter the slice into the global basis and subtract the free mass
        let global_index = |s: usize| -> usize {
            let mut acc = 0;
            for (pos, &ci) in row_channels.iter().enumerate() {
                if s < acc + pair_lens[pos] {
                    let i = s - acc;
                    return basis.offset(ci) + a * pair_lens[pos] + i;
                }
                acc += pair_lens[pos];
            }
            unreachable!("stacked index in range")
        };
        for s in 0..stacked {
            let gs = global_index(s);
            for t in 0..stacked {
                let gt = global_index(t);
                out[(gs, gt)] += embedded[(s, t)];
            }
            out[(gs, gs)] -= m0[gs];
        }
    }
    Ok(out)
}

/// A mass operator `M = M_0 + V` in the symmetrized channel basis.
#[derive(Debug, Clone)]
pub struct MassOperator {
    pub basis: ChannelBasis,
    /// Free diagonal (exact, never touched by interactions).
    pub m0: DVector<f64>,
    /// Symmetrized interaction matrix.
    pub v: DMatrix<f64>,
}

impl MassOperator {
    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    /// Dense `M_0 + V`.
    pub fn full_matrix(&self) -> DMatrix<f64> {
        let mut m = self.v.clone();
        for i in 0..self.dim() {
            m[(i, i)] += self.m0[i];
        }
        m
    }

    pub fn hermiticity_residual(&self) -> f64 {
        crate::linalg::hermiticity_residual(&self.v)
    }
}

/// Assemble `M_BT = M_0 + V_2 + V_3`: symmetrize the raw kernel blocks
/// with the quadrature weights, add pre-symmetrized contributions (the
/// embedded pair dynamics), and enforce hermiticity to `1e-12` relative to
/// the operator scale.
pub fn assemble_mbt(
    basis: &ChannelBasis,
    kernel_blocks: &[KernelBlock],
    symmetrized_contributions: &[DMatrix<f64>],
) -> Result<MassOperator> {
    let dim = basis.dim();
    let weights = basis.sym_weights();
    let mut v = DMatrix::zeros(dim, dim);
    for b in kernel_blocks {
        if b.row >= basis.len() || b.col >= basis.len() {
            return Err(Error::UnknownChannel(format!(
                "kernel block references channel {}/{}",
                b.row, b.col
            )));
        }
        let (ro, co) = (basis.offset(b.row), basis.offset(b.col));
        let (nr, nc) = (basis.channel(b.row).dim(), basis.channel(b.col).dim());
        if b.values.nrows() != nr || b.values.ncols() != nc {
            return Err(Error::DimensionMismatch(format!(
                "block ({},{}) is {}x{}, channel dims {}x{}",
                b.row,
                b.col,
                b.values.nrows(),
                b.values.ncols(),
                nr,
                nc
            )));
        }
        for i in 0..nr {
            for j in 0..nc {
                v[(ro + i, co + j)] += weights[ro + i] * b.values[(i, j)] * weights[co + j];
            }
        }
    }
    for extra in symmetrized_contributions {
        if extra.nrows() != dim || extra.ncols() != dim {
            return Err(Error::DimensionMismatch(
                "symmetrized contribution has wrong dimension".into(),
            ));
        }
        v += extra;
    }
    let scale = v.iter().fold(1.0f64, |a, x| a.max(x.abs()));
    let residual = crate::linalg::hermiticity_residual(&v);
    if residual > 1e-12 * scale {
        return Err(Error::NotHermitian {
            residual,
            tol: 1e-12 * scale,
            context: "assembled mass operator".into(),
        });
    }
    // exact symmetrization so eigensolves see a symmetric matrix
    let v = (&v + v.transpose()) * 0.5;
    Ok(MassOperator {
        basis: basis.clone(),
        m0: basis.free_masses(),
        v,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn two_body_channel(name1: &str, name2: &str, m1: f64, m2: f64, n: usize) -> Channel {
        Channel {
            sector: SectorLabel::new(&[name1, name2]),
            j: Spin(0),
            d: DegeneracyLabel::two_body(0, Spin(0)),
            kind: ChannelKind::TwoBody {
                grid: RadialGrid::new(n, 140.0).unwrap(),
                masses: (m1, m2),
            },
        }
    }

    fn three_body_channel(n_k: usize, n_q: usize) -> Channel {
        Channel {
            sector: SectorLabel::new(&["N", "N'", "pi"]),
            j: Spin(0),
            d: DegeneracyLabel::two_body(0, Spin(0)),
            kind: ChannelKind::ThreeBody {
                pair_grid: RadialGrid::new(n_k, 140.0).unwrap(),
                pair_masses: (940.0, 940.0),
                q_grid: RadialGrid::new(n_q, 140.0).unwrap(),
                spectator_mass: 140.0,
            },
        }
    }

    #[test]
    fn free_masses_match_closed_forms() {
        let basis = ChannelBasis::new(vec![
            two_body_channel("N", "N'", 940.0, 940.0, 8),
            two_body_channel("D", "pi", 1900.0, 140.0, 8),
            three_body_channel(6, 5),
        ])
        .unwrap();
        let m0 = basis.free_masses();
        // NN channel: m3(k) = 2 sqrt(k^2 + mN^2); at the smallest node this
        // is slightly above 2 mN and every entry is above threshold
        let nn = match &basis.channel(0).kind {
            ChannelKind::TwoBody { grid, .. } => grid.clone(),
            _ => unreachable!(),
        };
        for i in 0..nn.len() {
            let want = 2.0 * (nn.k[i] * nn.k[i] + 940.0f64 * 940.0).sqrt();
            assert_abs_diff_eq!(m0[i], want, epsilon = 1e-9);
            assert!(m0[i] >= 2.0 * 940.0);
        }
        // D pi channel formula
        let dpi = match &basis.channel(1).kind {
            ChannelKind::TwoBody { grid, .. } => grid.clone(),
            _ => unreachable!(),
        };
        for i in 0..dpi.len() {
            let k = dpi.k[i];
            let want = (k * k + 1900.0f64 * 1900.0).sqrt() + (k * k + 140.0f64 * 140.0).sqrt();
            assert_abs_diff_eq!(m0[basis.offset(1) + i], want, epsilon = 1e-9);
        }
        // three-body: nested invariant mass, above threshold
        let c3 = basis.channel(2);
        for f in 0..c3.dim() {
            let v = m0[basis.offset(2) + f];
            assert!(v >= 2.0 * 940.0 + 140.0);
        }
        // check one nested value explicitly
        if let ChannelKind::ThreeBody {
            pair_grid, q_grid, ..
        } = &c3.kind
        {
            let (i, a) = (2, 3);
            let m_pair = 2.0 * (pair_grid.k[i].powi(2) + 940.0f64.powi(2)).sqrt();
            let want = (m_pair * m_pair + q_grid.k[a].powi(2)).sqrt()
                + (140.0f64.powi(2) + q_grid.k[a].powi(2)).sqrt();
            assert_abs_diff_eq!(m0[basis.offset(2) + a * pair_grid.len() + i], want, epsilon = 1e-9);
        }
    }

    #[test]
    fn at_zero_momentum_nn_mass_is_twice_nucleon_mass() {
        // the grid never contains k = 0 exactly; evaluate the formula
        assert_abs_diff_eq!(invariant_mass(940.0, 940.0, 0.0), 1880.0, epsilon = 1e-12);
    }

    #[test]
    fn separable_kernel_values_and_symmetry() {
        let beta = 300.0;
        let lam = -4.0e4;
        let model = SeparableModel::new(
            vec![beta, beta],
            DMatrix::from_row_slice(2, 2, &[lam, 0.3 * lam, 0.3 * lam, 0.8 * lam]),
        )
        .unwrap();
        // v(beta, beta) = lambda / (2 beta^2)^2 for equal ranges
        assert_abs_diff_eq!(
            model.kernel(0, beta, 0, beta),
            lam / (2.0 * beta * beta).powi(2),
            epsilon = 1e-18
        );
        let basis = ChannelBasis::new(vec![
            two_body_channel("N", "N'", 940.0, 940.0, 10),
            two_body_channel("D", "pi", 1900.0, 140.0, 10),
        ])
        .unwrap();
        let blocks = build_two_body_kernel(&basis, &model, &[0, 1]).unwrap();
        assert_eq!(blocks.len(), 4);
        let m = assemble_mbt(&basis, &blocks, &[]).unwrap();
        assert!(m.hermiticity_residual() <= 1e-12 * 1.0_f64.max(m.v.amax()));
        // off-diagonal blocks are transposes of each other
        let b01 = blocks.iter().find(|b| b.row == 0 && b.col == 1).unwrap();
        let b10 = blocks.iter().find(|b| b.row == 1 && b.col == 0).unwrap();
        let defect = (&b01.values - b10.values.transpose()).amax();
        assert!(defect <= 1e-15 * b01.values.amax());
    }

    #[test]
    fn asymmetric_strengths_rejected() {
        let bad = SeparableModel::new(
            vec![300.0, 300.0],
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.4, 1.0]),
        );
        assert!(matches!(bad, Err(Error::NotHermitian { .. })));
    }

    #[test]
    fn zero_interactions_reproduce_m0_exactly() {
        let basis =
            ChannelBasis::new(vec![two_body_channel("N", "N'", 940.0, 940.0, 12)]).unwrap();
        let m = assemble_mbt(&basis, &[], &[]).unwrap();
        let m0 = build_m0(&basis);
        assert_eq!(m.m0, m0.m0); // bitwise
        assert_eq!(m.v.amax(), 0.0);
    }

    #[test]
    fn v3_zero_params_give_empty_or_zero_blocks() {
        let basis = ChannelBasis::new(vec![
            two_body_channel("N", "N'", 940.0, 940.0, 6),
            three_body_channel(5, 4),
        ])
        .unwrap();
        let blocks = build_v3(
            &basis,
            &[V3Term::TwoToThree {
                two: 0,
                three: 1,
                strength: 0.0,
                beta_two: 200.0,
                beta_pair: 200.0,
                beta_spectator: 200.0,
            }],
        )
        .unwrap();
        assert!(blocks.is_empty());
    }

    #[test]
    fn v3_production_vertex_is_short_ranged_and_symmetric() {
        let basis = ChannelBasis::new(vec![
            two_body_channel("N", "N'", 940.0, 940.0, 24),
            three_body_channel(16, 8),
        ])
        .unwrap();
        let beta = 150.0;
        let blocks = build_v3(
            &basis,
            &[V3Term::TwoToThree {
                two: 0,
                three: 1,
                strength: 2.5,
                beta_two: beta,
                beta_pair: beta,
                beta_spectator: beta,
            }],
        )
        .unwrap();
        assert_eq!(blocks.len(), 2);
        let b = &blocks[0];
        let peak = b.values.amax();
        // short-range: values at k' >= 10 beta are tiny relative to peak
        let g2 = match &basis.channel(0).kind {
            ChannelKind::TwoBody { grid, .. } => grid,
            _ => unreachable!(),
        };
        for i in 0..g2.len() {
            if g2.k[i] >= 10.0 * beta {
                for j in 0..b.values.ncols() {
                    assert!(b.values[(i, j)].abs() < 1e-6 * peak);
                }
            }
        }
        // assembles to a hermitian operator
        let m = assemble_mbt(&basis, &blocks, &[]).unwrap();
        assert!(m.hermiticity_residual() <= 1e-12);
    }

    #[test]
    fn embed_v2_identity_w_is_direct_embedding_and_stays_off_two_body() {
        let basis = ChannelBasis::new(vec![
            two_body_channel("N", "N'", 940.0, 940.0, 6),
            three_body_channel(5, 4),
        ])
        .unwrap();
        let (n_k, n_q) = (5, 4);
        // toy symmetric pair matrices per spectator node
        let mut m_tp = Vec::new();
        let mut ws = Vec::new();
        for a in 0..n_q {
            let mut m = DMatrix::zeros(n_k, n_k);
            for i in 0..n_k {
                for j in 0..n_k {
                    m[(i, j)] = 1.0 / (1.0 + (i as f64 - j as f64).powi(2)) + a as f64;
                }
            }
            m_tp.push((&m + m.transpose()) * 0.5);
            ws.push(DMatrix::identity(n_k, n_k));
        }
        let v2 = embed_v2(&basis, &[1], &m_tp, &ws).unwrap();
        // two-body channel rows/cols are exactly zero
        for i in 0..basis.channel(0).dim() {
            for j in 0..basis.dim() {
                assert_eq!(v2[(i, j)], 0.0);
                assert_eq!(v2[(j, i)], 0.0);
            }
        }
        // with W = 1 the embedded block is M_TP - M0 slicewise
        let off = basis.offset(1);
        let m0 = basis.free_masses();
        for a in 0..n_q {
            for i in 0..n_k {
                for j in 0..n_k {
                    let gi = off + a * n_k + i;
                    let gj = off + a * n_k + j;
                    let want = m_tp[a][(i, j)] - if i == j { m0[gi] } else { 0.0 };
                    assert_abs_diff_eq!(v2[(gi, gj)], want, epsilon = 1e-12);
                }
            }
        }
        // symmetric contribution assembles cleanly
        let m = assemble_mbt(&basis, &[], &[v2]).unwrap();
        assert!(m.hermiticity_residual() <= 1e-10);
    }
}
