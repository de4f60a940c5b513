//! Particle-content bookkeeping: sector labels, doublet products, the
//! six-sector two-nucleon/heavy-pair model space, and the kinematic
//! (non-interacting) unitary representation on multi-component states.
//!
//! A "doublet" here is the two-summand space (one-particle states) ⊕
//! (no-particle slot) attached to each species that can be produced;
//! tensor products of doublets expand into direct sums over all subsets of
//! the species list. Physical model spaces keep an explicit allowlist of
//! those sectors.
//!
//! States carried by this module are finite superpositions of product
//! plane waves with explicit amplitudes. Delta normalization is never
//! materialized: transforms move the support points and multiply
//! amplitudes, which keeps phases, square-root measure factors, and spin
//! rotations exact. A state may declare the momentum hull of the grid it
//! was sampled from; transporting any support point beyond that hull is an
//! error rather than a silent clamp, because downstream grid
//! representations could not hold the result.

use std::collections::BTreeMap;
use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::kinematics::{single_particle_wigner_function, PoincareTransform};
use crate::spin::Spin;

/// A particle species: display name, mass (MeV), spin.
#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSpecies {
    pub name: String,
    pub mass: f64,
    pub spin: Spin,
}

impl ParticleSpecies {
    pub fn new(name: &str, mass: f64, spin: Spin) -> Result<ParticleSpecies> {
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::invalid(format!(
                "species {name}: mass must be positive, got {mass}"
            )));
        }
        if !matches!(spin.doubled(), 0 | 1 | 2) {
            return Err(Error::invalid(format!(
                "species {name}: spin must be 0, 1/2 or 1"
            )));
        }
        Ok(ParticleSpecies {
            name: name.to_string(),
            mass,
            spin,
        })
    }

    /// Scalar species shorthand.
    pub fn scalar(name: &str, mass: f64) -> Result<ParticleSpecies> {
        ParticleSpecies::new(name, mass, Spin(0))
    }
}

/// A sector: the multiset of species names present, sorted lexicographically
/// so equal content always compares equal. The empty label is the
/// no-particle slot produced by doublet algebra.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SectorLabel {
    content: Vec<String>,
}

impl SectorLabel {
    pub fn new(names: &[&str]) -> SectorLabel {
        let mut content: Vec<String> = names.iter().map(|s| s.to_string()).collect();
        content.sort();
        SectorLabel { content }
    }

    pub fn empty() -> SectorLabel {
        SectorLabel { content: vec![] }
    }

    pub fn members(&self) -> &[String] {
        &self.content
    }

    pub fn len(&self) -> usize {
        self.content.len()
    }

    pub fn is_empty(&self) -> bool {
        self.content.is_empty()
    }
}

impl fmt::Display for SectorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.content.is_empty() {
            write!(f, "none")
        } else {
            write!(f, "{}", self.content.join("+"))
        }
    }
}

/// All `2^n` sectors generated by the tensor product of `n` doublets,
/// ordered by descending particle count and then by the positions of the
/// included species in the input list (so three species `b, c, d` give
/// `bcd, bc, bd, cd, b, c, d, none`).
pub fn expand_doublet_product(species: &[ParticleSpecies]) -> Vec<SectorLabel> {
    let n = species.len();
    let mut subsets: Vec<Vec<usize>> = (0..(1u32 << n))
        .map(|mask| (0..n).filter(|i| mask & (1 << i) != 0).collect())
        .collect();
    subsets.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
    subsets
        .into_iter()
        .map(|idx| {
            let names: Vec<&str> = idx.iter().map(|&i| species[i].name.as_str()).collect();
            SectorLabel::new(&names)
        })
        .collect()
}

/// An ordered collection of allowed sectors over a species table.
#[derive(Debug, Clone)]
pub struct ModelSpace {
    sectors: Vec<SectorLabel>,
    species: BTreeMap<String, ParticleSpecies>,
    /// Energy window metadata (MeV): interactions embedded from below the
    /// window are cluster-expanded; production physics lives inside it.
    pub window: (f64, f64),
}

impl ModelSpace {
    pub fn new(
        sectors: Vec<SectorLabel>,
        species: Vec<ParticleSpecies>,
        window: (f64, f64),
    ) -> Result<ModelSpace> {
        let mut map = BTreeMap::new();
        for s in species {
            if map.insert(s.name.clone(), s).is_some() {
                return Err(Error::invalid("duplicate species name"));
            }
        }
        let mut seen = std::collections::HashSet::new();
        for sec in &sectors {
            if sec.is_empty() {
                return Err(Error::invalid("model space sectors must be nonempty"));
            }
            if !seen.insert(sec.clone()) {
                return Err(Error::invalid(format!("duplicate sector {sec}")));
            }
            for name in sec.members() {
                if !map.contains_key(name) {
                    return Err(Error::UnknownChannel(format!(
                        "sector {sec} references unknown species {name}"
                    )));
                }
            }
        }
        Ok(ModelSpace {
            sectors,
            species: map,
            window,
        })
    }

    pub fn sectors(&self) -> &[SectorLabel] {
        &self.sectors
    }

    pub fn species(&self, name: &str) -> Result<&ParticleSpecies> {
        self.species
            .get(name)
            .ok_or_else(|| Error::UnknownChannel(format!("unknown species {name}")))
    }

    pub fn sector_index(&self, label: &SectorLabel) -> Result<usize> {
        self.sectors
            .iter()
            .position(|s| s == label)
            .ok_or_else(|| Error::UnknownChannel(format!("sector {label} not in model space")))
    }

    /// Species list of a sector, in label order.
    pub fn sector_species(&self, label: &SectorLabel) -> Result<Vec<&ParticleSpecies>> {
        label.members().iter().map(|n| self.species(n)).collect()
    }

    /// Sum of rest masses in a sector (threshold energy).
    pub fn sector_threshold(&self, label: &SectorLabel) -> Result<f64> {
        Ok(self.sector_species(label)?.iter().map(|s| s.mass).sum())
    }
}

/// Masses for the two-nucleon model space.
#[derive(Debug, Clone, Copy)]
pub struct NnModelMasses {
    pub m_n: f64,
    pub m_d: f64,
    pub m_pi: f64,
}

/// Build the six-sector model space: `{N,N'}, {D,pi}, {D,pi'}, {N,N',pi},
/// {N,N',pi'}, {D,pi,pi'}`, with the production window
/// `[2 m_N + m_pi, 2 m_N + 2 m_pi]` attached. All species are scalars here;
/// spin assignments ride on configuration at the operator-build level.
pub fn build_nn_model_space(masses: NnModelMasses) -> Result<ModelSpace> {
    let NnModelMasses { m_n, m_d, m_pi } = masses;
    let species = vec![
        ParticleSpecies::scalar("N", m_n)?,
        ParticleSpecies::scalar("N'", m_n)?,
        ParticleSpecies::scalar("D", m_d)?,
        ParticleSpecies::scalar("pi", m_pi)?,
        ParticleSpecies::scalar("pi'", m_pi)?,
    ];
    let sectors = vec![
        SectorLabel::new(&["N", "N'"]),
        SectorLabel::new(&["D", "pi"]),
        SectorLabel::new(&["D", "pi'"]),
        SectorLabel::new(&["N", "N'", "pi"]),
        SectorLabel::new(&["N", "N'", "pi'"]),
        SectorLabel::new(&["D", "pi", "pi'"]),
    ];
    ModelSpace::new(sectors, species, (2.0 * m_n + m_pi, 2.0 * m_n + 2.0 * m_pi))
}

/// One product-plane-wave component: per-particle momenta and (doubled)
/// spin projections in sector-label order, with a complex amplitude.
#[derive(Debug, Clone)]
pub struct PlaneWaveComponent {
    pub momenta: Vec<[f64; 3]>,
    pub projections: Vec<i32>,
    pub amplitude: Complex64,
}

/// Components supported on one sector.
#[derive(Debug, Clone)]
pub struct SectorWave {
    pub sector: SectorLabel,
    pub components: Vec<PlaneWaveComponent>,
}

/// A finite-superposition state over several sectors.
#[derive(Debug, Clone)]
pub struct MultiComponentState {
    pub waves: Vec<SectorWave>,
    /// Largest per-particle momentum magnitude a downstream grid can hold;
    /// `None` disables the hull check.
    pub hull_k_max: Option<f64>,
}

impl MultiComponentState {
    pub fn new(waves: Vec<SectorWave>) -> MultiComponentState {
        MultiComponentState {
            waves,
            hull_k_max: None,
        }
    }

    pub fn with_hull(mut self, k_max: f64) -> MultiComponentState {
        self.hull_k_max = Some(k_max);
        self
    }

    /// Norm squared, treating distinct support points as orthonormal.
    /// Callers must merge coincident components first (see `merged`).
    pub fn norm_squared(&self) -> f64 {
        self.waves
            .iter()
            .flat_map(|w| &w.components)
            .map(|c| c.amplitude.norm_sqr())
            .sum()
    }

    /// Combine components whose support points and projections agree to
    /// within `tol` on every momentum component.
    pub fn merged(&self, tol: f64) -> MultiComponentState {
        let mut waves = Vec::with_capacity(self.waves.len());
        for w in &self.waves {
            let mut merged: Vec<PlaneWaveComponent> = Vec::new();
            'outer: for c in &w.components {
                for m in merged.iter_mut() {
                    if m.projections == c.projections
                        && m.momenta.len() == c.momenta.len()
                        && m.momenta
                            .iter()
                            .zip(&c.momenta)
                            .all(|(a, b)| {
                                (a[0] - b[0]).abs() <= tol
                                    && (a[1] - b[1]).abs() <= tol
                                    && (a[2] - b[2]).abs() <= tol
                            })
                    {
                        m.amplitude += c.amplitude;
                        continue 'outer;
                    }
                }
                merged.push(c.clone());
            }
            waves.push(SectorWave {
                sector: w.sector.clone(),
                components: merged,
            });
        }
        MultiComponentState {
            waves,
            hull_k_max: self.hull_k_max,
        }
    }

    /// Inner product `<self|other>` with support points matched to `tol`.
    pub fn inner(&self, other: &MultiComponentState, tol: f64) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for wa in &self.waves {
            for wb in &other.waves {
                if wa.sector != wb.sector {
                    continue;
                }
                for ca in &wa.components {
                    for cb in &wb.components {
                        if ca.projections == cb.projections
                            && ca.momenta.len() == cb.momenta.len()
                            && ca
                                .momenta
                                .iter()
                                .zip(&cb.momenta)
                                .all(|(x, y)| {
                                    (x[0] - y[0]).abs() <= tol
                                        && (x[1] - y[1]).abs() <= tol
                                        && (x[2] - y[2]).abs() <= tol
                                })
                        {
                            acc += ca.amplitude.conj() * cb.amplitude;
                        }
                    }
                }
            }
        }
        acc
    }

    /// Distance `|| self - other ||` with matched support points, after
    /// merging both sides. Amplitudes are subtracted pointwise (not via
    /// inner products, which would lose half the digits to cancellation).
    pub fn distance(&self, other: &MultiComponentState, tol: f64) -> f64 {
        let a = self.merged(tol);
        let mut b = other.merged(tol);
        let mut acc = 0.0f64;
        for wa in &a.waves {
            for ca in &wa.components {
                let mut matched = false;
                for wb in b.waves.iter_mut() {
                    if wa.sector != wb.sector {
                        continue;
                    }
                    if let Some(pos) = wb.components.iter().position(|cb| {
                        cb.projections == ca.projections
                            && cb.momenta.len() == ca.momenta.len()
                            && cb.momenta.iter().zip(&ca.momenta).all(|(x, y)| {
                                (x[0] - y[0]).abs() <= tol
                                    && (x[1] - y[1]).abs() <= tol
                                    && (x[2] - y[2]).abs() <= tol
                            })
                    }) {
                        let cb = wb.components.remove(pos);
                        acc += (ca.amplitude - cb.amplitude).norm_sqr();
                        matched = true;
                        break;
                    }
                }
                if !matched {
                    acc += ca.amplitude.norm_sqr();
                }
            }
        }
        // leftovers in b have no partner in a
        for wb in &b.waves {
            for cb in &wb.components {
                acc += cb.amplitude.norm_sqr();
            }
        }
        acc.sqrt()
    }
}

/// Apply the kinematic representation `U_0(Lambda, a)` — the tensor product
/// of one-particle representations, sector by sector, identity on the
/// no-particle slot.
///
/// Spins fan each component into a superposition over outgoing projections
/// with the one-particle Wigner-rotation matrix elements of each particle.
pub fn apply_u0(
    space: &ModelSpace,
    state: &MultiComponentState,
    g: &PoincareTransform,
) -> Result<MultiComponentState> {
    let mut waves = Vec::with_capacity(state.waves.len());
    for wave in &state.waves {
        let mut out = Vec::new();
        if wave.sector.is_empty() {
            // vacuum slot: identity
            out.extend(wave.components.iter().cloned());
        } else {
            let parts = space.sector_species(&wave.sector)?;
            for comp in &wave.components {
                if comp.momenta.len() != parts.len() || comp.projections.len() != parts.len() {
                    return Err(Error::DimensionMismatch(format!(
                        "component has {} momenta for sector {}",
                        comp.momenta.len(),
                        wave.sector
                    )));
                }
                // per-particle actions
                let mut actions = Vec::with_capacity(parts.len());
                for (i, sp) in parts.iter().enumerate() {
                    let act = single_particle_wigner_function(
                        sp.mass,
                        sp.spin,
                        &g.lambda,
                        &g.a,
                        &comp.momenta[i],
                    )?;
                    if let Some(k_max) = state.hull_k_max {
                        let kn = act.p_out.spatial_norm();
                        if kn > k_max {
                            return Err(Error::OutsideGridHull(format!(
                                "particle {} of sector {} mapped to |p| = {kn:.6e} > hull {k_max:.6e}",
                                sp.name, wave.sector
                            )));
                        }
                    }
                    actions.push(act);
                }
                // fan out over outgoing spin projections
                let dims: Vec<Vec<i32>> =
                    parts.iter().map(|sp| sp.spin.projections().collect()).collect();
                let mut stack: Vec<(usize, Vec<i32>, Complex64)> =
                    vec![(0, Vec::new(), comp.amplitude)];
                while let Some((depth, mus, amp)) = stack.pop() {
                    if depth == parts.len() {
                        out.push(PlaneWaveComponent {
                            momenta: actions.iter().map(|a| a.p_out.spatial()).collect(),
                            projections: mus,
                            amplitude: amp,
                        });
                        continue;
                    }
                    for &mu_out in &dims[depth] {
                        let c = actions[depth].coefficient(mu_out, comp.projections[depth])?;
                        if c.norm() == 0.0 {
                            continue;
                        }
                        let mut next = mus.clone();
                        next.push(mu_out);
                        stack.push((depth + 1, next, amp * c));
                    }
                }
            }
        }
        waves.push(SectorWave {
            sector: wave.sector.clone(),
            components: out,
        });
    }
    Ok(MultiComponentState {
        waves,
        hull_k_max: state.hull_k_max,
    }
    .merged(1e-9))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kinematics::{canonical_boost, LorentzTransform};
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};

    fn toy_species(names: &[&str]) -> Vec<ParticleSpecies> {
        names
            .iter()
            .map(|n| ParticleSpecies::scalar(n, 1.0).unwrap())
            .collect()
    }

    #[test]
    fn three_doublets_expand_to_eight_summands() {
        let sp = toy_species(&["b", "c", "d"]);
        let got = expand_doublet_product(&sp);
        let want = vec![
            SectorLabel::new(&["b", "c", "d"]),
            SectorLabel::new(&["b", "c"]),
            SectorLabel::new(&["b", "d"]),
            SectorLabel::new(&["c", "d"]),
            SectorLabel::new(&["b"]),
            SectorLabel::new(&["c"]),
            SectorLabel::new(&["d"]),
            SectorLabel::empty(),
        ];
        assert_eq!(got, want);
    }

    #[test]
    fn single_doublet_and_empty_product() {
        let sp = toy_species(&["b"]);
        assert_eq!(
            expand_doublet_product(&sp),
            vec![SectorLabel::new(&["b"]), SectorLabel::empty()]
        );
        assert_eq!(expand_doublet_product(&[]), vec![SectorLabel::empty()]);
    }

    #[test]
    fn expansion_length_is_two_to_the_n() {
        for n in 0..=8 {
            let names: Vec<String> = (0..n).map(|i| format!("s{i}")).collect();
            let refs: Vec<&str> = names.iter().map(|s| s.as_str()).collect();
            let sp = toy_species(&refs);
            assert_eq!(expand_doublet_product(&sp).len(), 1 << n);
        }
    }

    #[test]
    fn nn_model_space_has_the_six_sectors_and_window() {
        let ms = build_nn_model_space(NnModelMasses {
            m_n: 1.0,
            m_d: 1.9,
            m_pi: 0.2,
        })
        .unwrap();
        let want = [
            SectorLabel::new(&["N", "N'"]),
            SectorLabel::new(&["D", "pi"]),
            SectorLabel::new(&["D", "pi'"]),
            SectorLabel::new(&["N", "N'", "pi"]),
            SectorLabel::new(&["N", "N'", "pi'"]),
            SectorLabel::new(&["D", "pi", "pi'"]),
        ];
        assert_eq!(ms.sectors(), &want[..]);
        assert_abs_diff_eq!(ms.window.0, 2.2, epsilon = 1e-12);
        assert_abs_diff_eq!(ms.window.1, 2.4, epsilon = 1e-12);
        assert_abs_diff_eq!(
            ms.sector_threshold(&SectorLabel::new(&["D", "pi"])).unwrap(),
            2.1,
            epsilon = 1e-12
        );
    }

    #[test]
    fn model_space_rejects_bad_input() {
        assert!(build_nn_model_space(NnModelMasses {
            m_n: -1.0,
            m_d: 1.9,
            m_pi: 0.2
        })
        .is_err());
        let sp = toy_species(&["a"]);
        let dup = ModelSpace::new(
            vec![SectorLabel::new(&["a"]), SectorLabel::new(&["a"])],
            sp,
            (0.0, 1.0),
        );
        assert!(dup.is_err());
    }

    fn two_particle_state(space: &ModelSpace, hull: Option<f64>) -> MultiComponentState {
        let sector = SectorLabel::new(&["N", "N'"]);
        let mut comps = Vec::new();
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(40);
        for _ in 0..6 {
            comps.push(PlaneWaveComponent {
                momenta: vec![
                    [r.gen_range(-0.3..0.3), r.gen_range(-0.3..0.3), r.gen_range(-0.3..0.3)],
                    [r.gen_range(-0.3..0.3), r.gen_range(-0.3..0.3), r.gen_range(-0.3..0.3)],
                ],
                projections: vec![0, 0],
                amplitude: Complex64::new(r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)),
            });
        }
        let _ = space;
        let mut st = MultiComponentState::new(vec![SectorWave {
            sector,
            components: comps,
        }]);
        st.hull_k_max = hull;
        st
    }

    fn toy_space() -> ModelSpace {
        build_nn_model_space(NnModelMasses {
            m_n: 1.0,
            m_d: 1.9,
            m_pi: 0.2,
        })
        .unwrap()
    }

    #[test]
    fn identity_leaves_state_unchanged() {
        let space = toy_space();
        let st = two_particle_state(&space, None);
        let out = apply_u0(&space, &st, &PoincareTransform::identity()).unwrap();
        assert_abs_diff_eq!(st.distance(&out, 1e-9), 0.0, epsilon = 1e-14);
    }

    #[test]
    fn translation_is_pure_phase_and_preserves_norm() {
        let space = toy_space();
        let st = two_particle_state(&space, None);
        let g = PoincareTransform::translation([0.7, -0.2, 0.4, 1.1]);
        let out = apply_u0(&space, &st, &g).unwrap();
        assert_abs_diff_eq!(out.norm_squared(), st.norm_squared(), epsilon = 1e-12);
        // support unchanged
        for (wa, wb) in st.waves.iter().zip(&out.waves) {
            for (ca, cb) in wa.components.iter().zip(&wb.components) {
                for (x, y) in ca.momenta.iter().zip(&cb.momenta) {
                    assert_abs_diff_eq!(x[0], y[0], epsilon = 1e-14);
                }
                assert_abs_diff_eq!(ca.amplitude.norm(), cb.amplitude.norm(), epsilon = 1e-13);
            }
        }
    }

    #[test]
    fn rotation_preserves_norm_exactly() {
        let space = toy_space();
        let st = two_particle_state(&space, None);
        let g = PoincareTransform::from_lorentz(
            LorentzTransform::rotation_about(&[1.0, 2.0, -0.5], 1.234).unwrap(),
        );
        let out = apply_u0(&space, &st, &g).unwrap();
        assert_abs_diff_eq!(out.norm_squared(), st.norm_squared(), epsilon = 1e-13);
    }

    #[test]
    fn group_law_on_test_states() {
        let space = toy_space();
        let st = two_particle_state(&space, None);
        let mut r = rand_chacha::ChaCha8Rng::seed_from_u64(91);
        for _ in 0..5 {
            let g1 = PoincareTransform {
                lambda: LorentzTransform::rotation_about(
                    &[r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), 1.0],
                    r.gen_range(-2.0..2.0),
                )
                .unwrap()
                .compose(&canonical_boost(1.0, &[0.0, 0.0, r.gen_range(-0.4..0.4)]).unwrap()),
                a: [r.gen_range(-1.0..1.0), 0.0, 0.0, r.gen_range(-1.0..1.0)],
            };
            let g2 = PoincareTransform {
                lambda: LorentzTransform::rotation_about(
                    &[1.0, r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0)],
                    r.gen_range(-2.0..2.0),
                )
                .unwrap(),
                a: [r.gen_range(-1.0..1.0), r.gen_range(-1.0..1.0), 0.0, 0.0],
            };
            let seq = apply_u0(&space, &apply_u0(&space, &st, &g2).unwrap(), &g1).unwrap();
            let combined = apply_u0(&space, &st, &g1.compose(&g2)).unwrap();
            let d = seq.distance(&combined, 1e-7);
            assert!(d < 1e-10, "group-law defect {d}");
        }
    }

    #[test]
    fn hull_violation_is_reported() {
        let space = toy_space();
        let st = two_particle_state(&space, Some(0.5));
        // strong z-boost pushes images past |p| = 0.5
        let g = PoincareTransform::from_lorentz(LorentzTransform::boost_z(1.5));
        let err = apply_u0(&space, &st, &g);
        assert!(matches!(err, Err(Error::OutsideGridHull(_))));
    }
}
