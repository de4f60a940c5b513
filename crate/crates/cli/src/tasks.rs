//! The four batch tasks: spectrum, scatter, cluster-check, rep-check.
//!
//! Each task builds its operators from the validated configuration,
//! writes CSV tables plus the run manifest through [`RunWriter`], and
//! reports numerical diagnostic failures (exit code 3) only after all
//! artifacts are on disk, so a failed run is still inspectable.

use crate::config::{ConfigError, ResolvedModel, RunConfig};
use crate::output::{CsvTable, RunWriter, SectorLayout};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use relqm::cluster::{
    check_poincare_algebra, cluster_limit_check, dynamical_u, poincare_ensemble,
    w_relation_check, BranchState, ClusterAssembly, TwoPlusOneModel,
};
use relqm::coupling::DegeneracyLabel;
use relqm::grid::RadialGrid;
use relqm::kinematics::PoincareTransform;
use relqm::massop::{
    assemble_mbt, build_two_body_kernel, yamaguchi, Channel, ChannelBasis, ChannelKind,
    SeparableModel,
};
use relqm::sectors::SectorLabel;
use relqm::solver::{
    phase_shift_degrees, smatrix, solve_spectrum, solve_tmatrix, Dispersion, ScatteringChannel,
    ScatteringProblem, SeparableKernel, SpectrumResult,
};
use relqm::spin::Spin;
use std::path::Path;

/// Task-level failure. `Config` exits 2, `Numerical` exits 3.
#[derive(Debug)]
pub enum TaskError {
    Config(ConfigError),
    Numerical(String),
    Io(std::io::Error),
}

impl From<ConfigError> for TaskError {
    fn from(e: ConfigError) -> Self {
        TaskError::Config(e)
    }
}

impl From<relqm::Error> for TaskError {
    fn from(e: relqm::Error) -> Self {
        TaskError::Numerical(e.to_string())
    }
}

impl From<std::io::Error> for TaskError {
    fn from(e: std::io::Error) -> Self {
        TaskError::Io(e)
    }
}

type TaskResult = Result<(), TaskError>;

fn fmt17(x: f64) -> String {
    crate::output::fmt17(x)
}

/// Per-sector layout rows for the manifest.
fn sector_layout(cfg: &RunConfig) -> Vec<SectorLayout> {
    cfg.model
        .sectors
        .iter()
        .map(|s| SectorLayout {
            label: crate::config::sector_label(s),
            members: s.clone(),
            threshold_mev: s
                .iter()
                .map(|n| cfg.particle(n).expect("validated").mass)
                .sum(),
        })
        .collect()
}

/// Evenly spaced scan energies, endpoints included.
fn scan_energies(e_min: f64, e_max: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![e_min];
    }
    (0..count)
        .map(|i| e_min + (e_max - e_min) * i as f64 / (count - 1) as f64)
        .collect()
}

/// The separable interaction over the resolved channel table.
fn separable_model(resolved: &ResolvedModel) -> Result<SeparableModel, TaskError> {
    let betas: Vec<f64> = resolved.channels.iter().map(|c| c.beta).collect();
    let nc = betas.len();
    let lambda =
        DMatrix::from_fn(nc, nc, |i, j| resolved.lambda[i][j]);
    Ok(SeparableModel::new(betas, lambda)?)
}

/// The stacked two-body channel basis for spectrum solves.
fn channel_basis(cfg: &RunConfig, resolved: &ResolvedModel) -> Result<ChannelBasis, TaskError> {
    let mut channels = Vec::new();
    for c in &resolved.channels {
        channels.push(Channel {
            sector: SectorLabel::new(&[&c.names[0], &c.names[1]]),
            j: Spin(0),
            d: DegeneracyLabel::two_body(0, Spin(0)),
            kind: ChannelKind::TwoBody {
                grid: RadialGrid::new(cfg.grid.n, cfg.grid.k_scale)?,
                masses: c.masses,
            },
        });
    }
    Ok(ChannelBasis::new(channels)?)
}

/// Solve the configured model's mass spectrum.
fn solve_configured_spectrum(
    cfg: &RunConfig,
    resolved: &ResolvedModel,
) -> Result<SpectrumResult, TaskError> {
    if resolved.channels.is_empty() {
        return Err(TaskError::Config(ConfigError(
            "this task needs at least one two-member sector".into(),
        )));
    }
    let basis = channel_basis(cfg, resolved)?;
    let model = separable_model(resolved)?;
    let map: Vec<usize> = (0..resolved.channels.len()).collect();
    let blocks = build_two_body_kernel(&basis, &model, &map)?;
    let m = assemble_mbt(&basis, &blocks, &[])?;
    Ok(solve_spectrum(&m)?)
}

pub fn cmd_spectrum(cfg: &RunConfig, resolved: &ResolvedModel, out_dir: &Path) -> TaskResult {
    let mut writer = RunWriter::new(out_dir, "spectrum");
    writer.sector_layout = sector_layout(cfg);
    let solve_grid = RadialGrid::new(cfg.grid.n, cfg.grid.k_scale)?;
    writer.record_grid("radial_solve", &solve_grid.k, &solve_grid.w);

    let spec = solve_configured_spectrum(cfg, resolved)?;
    let basis = channel_basis(cfg, resolved)?;

    // dominant channel per eigenvector, for the sector-set column
    let mut table = CsvTable::new(
        "spectrum.csv",
        "spectrum-v1",
        &["sector_set", "j", "index", "eigenvalue_mev", "below_threshold"],
    );
    for idx in 0..spec.eigenvalues.len() {
        let col = spec.eigenvectors.column(idx);
        let mut best = (0usize, -1.0f64);
        for c in 0..basis.len() {
            let off = basis.offset(c);
            let dim = basis.channel(c).dim();
            let weight: f64 = (off..off + dim).map(|r| col[r] * col[r]).sum();
            if weight > best.1 {
                best = (c, weight);
            }
        }
        let label = resolved.channels[best.0].label.clone();
        let below = spec.bound_states.contains(&idx);
        table.push(&[
            label,
            "0".to_string(),
            idx.to_string(),
            fmt17(spec.eigenvalues[idx]),
            if below { "1".into() } else { "0".into() },
        ]);
    }
    writer.add_table(table);
    writer.record_residual("bound_state_count", spec.bound_states.len() as f64);
    writer.record_residual("lowest_threshold_mev", spec.threshold);
    writer.finish(cfg)?;
    Ok(())
}

pub fn cmd_scatter(cfg: &RunConfig, resolved: &ResolvedModel, out_dir: &Path) -> TaskResult {
    let scan = cfg.scan.as_ref().ok_or_else(|| {
        TaskError::Config(ConfigError("scatter needs a [scan] section".into()))
    })?;
    if resolved.channels.is_empty() {
        return Err(TaskError::Config(ConfigError(
            "scatter needs at least one two-member sector".into(),
        )));
    }
    let mut writer = RunWriter::new(out_dir, "scatter");
    writer.sector_layout = sector_layout(cfg);
    let model = separable_model(resolved)?;
    let kernel = SeparableKernel(model);
    let mut channels = Vec::new();
    for c in &resolved.channels {
        let grid = RadialGrid::new(cfg.grid.n, cfg.grid.k_scale)?;
        writer.record_grid(&format!("radial_{}", c.label), &grid.k, &grid.w);
        channels.push(ScatteringChannel {
            label: c.label.clone(),
            grid,
            dispersion: Dispersion::PairMass {
                m1: c.masses.0,
                m2: c.masses.1,
            },
        });
    }
    let problem = ScatteringProblem {
        channels,
        kernel: &kernel,
    };

    let mut table = CsvTable::new(
        "scatter.csv",
        "scatter-v1",
        &[
            "e_cm_mev",
            "channel_pair",
            "re_s",
            "im_s",
            "abs_s",
            "phase_shift_deg",
            "unitarity_defect",
        ],
    );
    let mut worst_defect = 0.0f64;
    for z in scan_energies(scan.e_min, scan.e_max, scan.count) {
        let t = solve_tmatrix(&problem, z)?;
        let s = smatrix(&t);
        let n = s.nrows();
        let id = DMatrix::from_diagonal_element(n, n, Complex64::new(1.0, 0.0));
        let defect = (s.adjoint() * &s - id).camax();
        worst_defect = worst_defect.max(defect);
        for (ri, &ci) in t.open.iter().enumerate() {
            for (rj, &cj) in t.open.iter().enumerate() {
                let e = s[(ri, rj)];
                table.push(&[
                    fmt17(z),
                    format!(
                        "{}->{}",
                        resolved.channels[ci].label, resolved.channels[cj].label
                    ),
                    fmt17(e.re),
                    fmt17(e.im),
                    fmt17(e.norm()),
                    fmt17(phase_shift_degrees(e)),
                    fmt17(defect),
                ]);
            }
        }
    }
    writer.add_table(table);
    writer.record_residual("unitarity_defect_max", worst_defect);
    writer.finish(cfg)?;
    if worst_defect > 1e-8 {
        return Err(TaskError::Numerical(format!(
            "S-matrix unitarity defect {worst_defect:.3e} exceeds 1e-8"
        )));
    }
    Ok(())
}

pub fn cmd_cluster_check(cfg: &RunConfig, resolved: &ResolvedModel, out_dir: &Path) -> TaskResult {
    let (pair_chan, spectator) = cfg.cluster_roles(resolved)?;
    let mut writer = RunWriter::new(out_dir, "cluster-check");
    writer.sector_layout = sector_layout(cfg);

    let pair_grid = RadialGrid::new(cfg.cluster.pair_n, cfg.grid.k_scale)?;
    let q_grid = RadialGrid::new(cfg.cluster.q_n, cfg.cluster.q_scale)?;
    writer.record_grid("pair", &pair_grid.k, &pair_grid.w);
    writer.record_grid("spectator", &q_grid.k, &q_grid.w);

    let pair_idx = resolved
        .channels
        .iter()
        .position(|c| c.label == pair_chan.label)
        .expect("validated");
    let lam = resolved.lambda[pair_idx][pair_idx];
    let beta = pair_chan.beta;
    let kernel = DMatrix::from_fn(pair_grid.len(), pair_grid.len(), |i, j| {
        lam * yamaguchi(pair_grid.k[i], beta) * yamaguchi(pair_grid.k[j], beta)
    });
    let model = TwoPlusOneModel::new(
        pair_grid,
        q_grid,
        pair_chan.masses,
        spectator.mass,
        kernel,
    )?;
    let assembly = ClusterAssembly::new(model, cfg.cluster.c3)?;

    let mut etas: Vec<f64> = cfg.cluster.etas.clone();
    etas.sort_by(f64::total_cmp);
    let mut all = vec![0.0];
    all.extend(etas);
    let points = cluster_limit_check(&assembly, &all, cfg.seed, cfg.cluster.transforms)?;
    let wrel = w_relation_check(&assembly, cfg.cluster.transforms, cfg.seed)?;

    let partition = format!("({})({})", pair_chan.label, spectator.name);
    let mut table = CsvTable::new(
        "cluster.csv",
        "cluster-v1",
        &["partition", "eta", "delta", "delta_plain"],
    );
    let mut delta_zero = f64::NAN;
    for p in &points {
        if p.eta == 0.0 {
            delta_zero = p.clustered;
        }
        table.push(&[
            partition.clone(),
            fmt17(p.eta),
            fmt17(p.clustered),
            fmt17(p.plain),
        ]);
    }
    writer.add_table(table);
    writer.record_residual("delta_at_zero", delta_zero);
    writer.record_residual("w_unitarity_defect", wrel.w_unitarity);
    writer.record_residual("w_conjugated_residual", wrel.conjugated_residual);
    writer.record_residual("w_plain_residual", wrel.plain_residual);
    writer.finish(cfg)?;

    if wrel.w_unitarity > 1e-8 {
        return Err(TaskError::Numerical(format!(
            "intertwiner unitarity defect {:.3e} exceeds 1e-8",
            wrel.w_unitarity
        )));
    }
    if !(delta_zero <= 1e-10) {
        return Err(TaskError::Numerical(format!(
            "cluster deviation at eta = 0 is {delta_zero:.3e}, above the 1e-10 gate"
        )));
    }
    Ok(())
}

/// Mass branches for the algebra check: every bound state, then evenly
/// sampled remaining levels up to the cap.
fn select_masses(spec: &SpectrumResult, cap: usize) -> Vec<f64> {
    let n = spec.eigenvalues.len();
    let mut masses: Vec<f64> = spec
        .bound_states
        .iter()
        .map(|&i| spec.eigenvalues[i])
        .collect();
    let rest: Vec<f64> = (0..n)
        .filter(|i| !spec.bound_states.contains(i))
        .map(|i| spec.eigenvalues[i])
        .collect();
    let room = cap.saturating_sub(masses.len());
    if room >= rest.len() {
        masses.extend(rest);
    } else if room > 0 {
        for t in 0..room {
            let pos = if room == 1 {
                0
            } else {
                (t * (rest.len() - 1)) / (room - 1)
            };
            masses.push(rest[pos]);
        }
        masses.dedup();
    }
    masses
}

/// Seeded sharp-momentum test states over the spectrum's branches.
fn grouplaw_states(spec: &SpectrumResult, count: usize, seed: u64) -> Vec<BranchState> {
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let n = spec.eigenvalues.len();
    (0..count)
        .map(|_| {
            let momenta = (0..n)
                .map(|_| {
                    [
                        rng.gen_range(-300.0..300.0),
                        rng.gen_range(-300.0..300.0),
                        rng.gen_range(-300.0..300.0),
                    ]
                })
                .collect();
            let amps = DVector::from_iterator(
                n,
                (0..n).map(|_| {
                    Complex64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
                }),
            );
            BranchState::new(momenta, amps).expect("positive dimensions")
        })
        .collect()
}

/// Composition defect of the dynamical representation on one state:
/// invariant-norm amplitude mismatch plus the worst relative momentum
/// mismatch between the two evaluation orders.
fn composition_residual(
    spec: &SpectrumResult,
    first: &PoincareTransform,
    second: &PoincareTransform,
    state: &BranchState,
) -> Result<f64, TaskError> {
    let step = dynamical_u(spec, &first.lambda, &first.a, state)?;
    let two_step = dynamical_u(spec, &second.lambda, &second.a, &step)?;
    let composed = second.compose(first);
    let direct = dynamical_u(spec, &composed.lambda, &composed.a, state)?;
    let mut num = 0.0;
    let mut den = 0.0;
    let mut pdef = 0.0f64;
    for b in 0..spec.eigenvalues.len() {
        let m = spec.eigenvalues[b];
        let pd = direct.momenta[b];
        let pt = two_step.momenta[b];
        let p2 = pd[0] * pd[0] + pd[1] * pd[1] + pd[2] * pd[2];
        let w = (m * m + p2).sqrt();
        num += (two_step.amps[b] - direct.amps[b]).norm_sqr() / w;
        den += direct.amps[b].norm_sqr() / w;
        let dp = ((pt[0] - pd[0]).powi(2) + (pt[1] - pd[1]).powi(2) + (pt[2] - pd[2]).powi(2))
            .sqrt();
        pdef = pdef.max(dp / (1.0 + p2.sqrt()));
    }
    Ok((num / den).sqrt().max(pdef))
}

pub fn cmd_rep_check(cfg: &RunConfig, resolved: &ResolvedModel, out_dir: &Path) -> TaskResult {
    if cfg.partial_waves.l_max < 1 {
        return Err(TaskError::Config(ConfigError(
            "rep-check needs partial_waves.l_max >= 1 (the test states keep the top angular layer empty)".into(),
        )));
    }
    let mut writer = RunWriter::new(out_dir, "rep-check");
    writer.sector_layout = sector_layout(cfg);
    let solve_grid = RadialGrid::new(cfg.grid.n, cfg.grid.k_scale)?;
    writer.record_grid("radial_solve", &solve_grid.k, &solve_grid.w);

    let spec = solve_configured_spectrum(cfg, resolved)?;
    let masses = select_masses(&spec, cfg.rep.masses_cap);
    let report = check_poincare_algebra(
        &masses,
        cfg.grid.n,
        cfg.rep.k_cut,
        cfg.partial_waves.l_max,
        cfg.rep.h,
        cfg.seed,
    )?;

    const NAMES: [&str; 10] = ["H", "Px", "Py", "Pz", "Jx", "Jy", "Jz", "Kx", "Ky", "Kz"];
    let mut table = CsvTable::new(
        "rep_algebra.csv",
        "rep-algebra-v1",
        &["generator_a", "generator_b", "residual"],
    );
    for a in 0..10 {
        for b in (a + 1)..10 {
            table.push(&[
                NAMES[a].to_string(),
                NAMES[b].to_string(),
                fmt17(report.residuals[(a, b)]),
            ]);
        }
    }
    writer.add_table(table);

    let mut glaw = CsvTable::new(
        "rep_grouplaw.csv",
        "rep-grouplaw-v1",
        &["sample", "kind", "residual"],
    );
    let states = grouplaw_states(&spec, cfg.rep.grouplaw_states, cfg.seed ^ 0x5eed);
    // identity row: applying the trivial transformation must reproduce
    // the state exactly
    let identity = PoincareTransform::identity();
    let mut ident_worst = 0.0f64;
    for st in &states {
        let back = dynamical_u(&spec, &identity.lambda, &identity.a, st)?;
        let mut diff = 0.0;
        for b in 0..spec.eigenvalues.len() {
            diff += (back.amps[b] - st.amps[b]).norm_sqr();
        }
        ident_worst = ident_worst.max(diff.sqrt());
    }
    glaw.push(&["0".into(), "identity".into(), fmt17(ident_worst)]);

    let samples = poincare_ensemble(2 * cfg.rep.grouplaw_pairs, cfg.seed, 1e-3, true)?;
    let mut comp_worst = 0.0f64;
    for i in 0..cfg.rep.grouplaw_pairs {
        let first = PoincareTransform {
            lambda: samples[2 * i].lambda.clone(),
            a: samples[2 * i].a,
        };
        let second = PoincareTransform {
            lambda: samples[2 * i + 1].lambda.clone(),
            a: samples[2 * i + 1].a,
        };
        let mut worst = 0.0f64;
        for st in &states {
            worst = worst.max(composition_residual(&spec, &first, &second, st)?);
        }
        comp_worst = comp_worst.max(worst);
        glaw.push(&[(i + 1).to_string(), "composition".into(), fmt17(worst)]);
    }
    writer.add_table(glaw);
    writer.record_residual("algebra_max_residual", report.max_residual);
    writer.record_residual("grouplaw_identity_residual", ident_worst);
    writer.record_residual("grouplaw_max_residual", comp_worst);
    writer.finish(cfg)?;
    Ok(())
}
