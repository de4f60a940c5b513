//! Run configuration: strict TOML schema, validation, and the resolved
//! echo that run manifests embed.
//!
//! Parsing is strict — unknown keys anywhere in the file are fatal —
//! because silent typos in physics parameters are the dominant user
//! error. Every optional field has an explicit default that the resolved
//! echo materializes, so a manifest always shows the exact values a run
//! used.

use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;

/// A configuration problem: bad file, bad syntax, or a validation
/// failure. Maps to exit code 2.
#[derive(Debug)]
pub struct ConfigError(pub String);

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "configuration error: {}", self.0)
    }
}

impl std::error::Error for ConfigError {}

fn err<T>(msg: impl Into<String>) -> Result<T, ConfigError> {
    Err(ConfigError(msg.into()))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParticleEntry {
    pub name: String,
    /// rest mass in MeV
    pub mass: f64,
    /// spin as an integer or half-integer (0, 0.5, 1, ...)
    #[serde(default)]
    pub spin: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    pub particles: Vec<ParticleEntry>,
    /// allowed sectors, each a list of particle names; two-member sectors
    /// become scattering/spectrum channels in declaration order
    pub sectors: Vec<Vec<String>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GridSection {
    /// radial nodes per channel
    pub n: usize,
    /// momentum scale of the tangent-mapped radial grid, MeV
    pub k_scale: f64,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            n: 48,
            k_scale: 140.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PartialWaveSection {
    /// total angular momentum cap for the solve verbs; only 0 (the
    /// scalar s-wave mode) is implemented
    pub j_max: u32,
    /// angular cutoff of the gridded one-particle representation used by
    /// rep-check; must be >= 1 there
    pub l_max: i32,
}

impl Default for PartialWaveSection {
    fn default() -> Self {
        PartialWaveSection { j_max: 0, l_max: 2 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InteractionEntry {
    /// pair of channel labels; a channel label is its sector's particle
    /// names joined with '+' in declaration order (e.g. "N+N'")
    pub channels: [String; 2],
    /// separable strength, MeV^5-scaled per the kernel convention
    pub lambda: f64,
    /// form-factor range in MeV; required on diagonal entries (it fixes
    /// that channel's form factor), forbidden off-diagonal
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    /// form-factor family; only "yamaguchi" is implemented
    #[serde(default = "default_form")]
    pub form: String,
}

fn default_form() -> String {
    "yamaguchi".to_string()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScanSection {
    /// scan start, MeV (must lie above the lowest channel threshold)
    pub e_min: f64,
    /// scan end, MeV
    pub e_max: f64,
    /// number of evenly spaced energies, endpoints included
    pub count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ClusterSection {
    /// pair-channel label to embed; defaults to the first two-member
    /// sector
    pub pair: Option<String>,
    /// spectator particle name; defaults to the third member of the
    /// unique three-member sector when one exists
    pub spectator: Option<String>,
    /// pair-momentum nodes of the embedding
    pub pair_n: usize,
    /// spectator-momentum nodes of the embedding
    pub q_n: usize,
    /// spectator momentum scale, MeV
    pub q_scale: f64,
    /// operator norm of the connected three-body probe term, MeV
    pub c3: f64,
    /// connected-term strengths to scan (an eta = 0 row is always
    /// emitted first)
    pub etas: Vec<f64>,
    /// number of seeded Poincare transforms per point
    pub transforms: usize,
}

impl Default for ClusterSection {
    fn default() -> Self {
        ClusterSection {
            pair: None,
            spectator: None,
            pair_n: 16,
            q_n: 10,
            q_scale: 120.0,
            c3: 25.0,
            etas: vec![0.01, 0.1, 1.0],
            transforms: 20,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RepSection {
    /// momentum window of the gridded representation, MeV
    pub k_cut: f64,
    /// dimensionless finite-difference step
    pub h: f64,
    /// at most this many mass branches from the solved spectrum feed the
    /// algebra check (bound states first, then evenly sampled levels)
    pub masses_cap: usize,
    /// seeded transform pairs for the group-law table
    pub grouplaw_pairs: usize,
    /// seeded test states for the group-law table
    pub grouplaw_states: usize,
}

impl Default for RepSection {
    fn default() -> Self {
        RepSection {
            k_cut: 500.0,
            h: 1e-3,
            masses_cap: 6,
            grouplaw_pairs: 20,
            grouplaw_states: 9,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Task {
    Spectrum,
    Scatter,
    ClusterCheck,
    RepCheck,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Task::Spectrum => "spectrum",
            Task::Scatter => "scatter",
            Task::ClusterCheck => "cluster-check",
            Task::RepCheck => "rep-check",
        };
        write!(f, "{s}")
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub partial_waves: PartialWaveSection,
    #[serde(default)]
    pub interactions: Vec<InteractionEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scan: Option<ScanSection>,
    #[serde(default)]
    pub cluster: ClusterSection,
    #[serde(default)]
    pub rep: RepSection,
    /// default task for the `run` verb; explicit verbs ignore it
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub task: Option<Task>,
    #[serde(default = "default_out_dir")]
    pub out_dir: String,
    #[serde(default = "default_seed")]
    pub seed: u64,
}

fn default_out_dir() -> String {
    "out".to_string()
}

fn default_seed() -> u64 {
    7
}

/// A resolved two-body channel: label plus constituent masses.
#[derive(Debug, Clone)]
pub struct ResolvedChannel {
    pub label: String,
    pub names: [String; 2],
    pub masses: (f64, f64),
    /// form-factor range; 1.0 placeholder when the channel has no
    /// interactions (its kernel rows are zero, so the value is inert)
    pub beta: f64,
}

/// Validated view of the configuration: channels in declaration order
/// and the symmetric strength matrix between them.
#[derive(Debug, Clone)]
pub struct ResolvedModel {
    pub channels: Vec<ResolvedChannel>,
    /// strengths, indexed like `channels`
    pub lambda: Vec<Vec<f64>>,
}

pub fn sector_label(names: &[String]) -> String {
    names.join("+")
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig, ConfigError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ConfigError(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig =
            toml::from_str(&text).map_err(|e| ConfigError(format!("{}: {e}", path.display())))?;
        Ok(cfg)
    }

    /// Validate everything that does not require running the engine and
    /// resolve the channel table.
    pub fn validate(&self) -> Result<ResolvedModel, ConfigError> {
        if self.model.particles.is_empty() {
            return err("the particle table is empty");
        }
        let mut seen = BTreeSet::new();
        for p in &self.model.particles {
            if p.name.trim().is_empty() {
                return err("a particle has an empty name");
            }
            if !seen.insert(p.name.clone()) {
                return err(format!("duplicate particle name {:?}", p.name));
            }
            if !(p.mass > 0.0) || !p.mass.is_finite() {
                return err(format!("particle {:?} needs a positive mass", p.name));
            }
            let twice = 2.0 * p.spin;
            if p.spin < 0.0 || (twice - twice.round()).abs() > 1e-9 {
                return err(format!(
                    "particle {:?} spin must be a non-negative integer or half-integer",
                    p.name
                ));
            }
        }
        if self.model.sectors.is_empty() {
            return err("the sector allowlist is empty");
        }
        let mut labels = BTreeSet::new();
        for s in &self.model.sectors {
            if s.is_empty() {
                return err("a sector in the allowlist is empty");
            }
            for name in s {
                if self.particle(name).is_none() {
                    return err(format!(
                        "sector [{}] references unknown particle {:?}",
                        s.join(", "),
                        name
                    ));
                }
            }
            if !labels.insert(sector_label(s)) {
                return err(format!("duplicate sector {:?}", sector_label(s)));
            }
        }
        if self.grid.n < 4 {
            return err(format!("grid.n must be at least 4, got {}", self.grid.n));
        }
        if !(self.grid.k_scale > 0.0) {
            return err("grid.k_scale must be positive");
        }
        if self.partial_waves.j_max != 0 {
            return err(format!(
                "partial_waves.j_max = {} is not supported: only the scalar s-wave mode (j_max = 0) is implemented",
                self.partial_waves.j_max
            ));
        }
        if self.partial_waves.l_max < 0 {
            return err("partial_waves.l_max must be non-negative");
        }

        // channel table: two-member sectors in declaration order
        let mut channels: Vec<ResolvedChannel> = Vec::new();
        for s in &self.model.sectors {
            if s.len() == 2 {
                let m0 = self.particle(&s[0]).expect("validated above").mass;
                let m1 = self.particle(&s[1]).expect("validated above").mass;
                channels.push(ResolvedChannel {
                    label: sector_label(s),
                    names: [s[0].clone(), s[1].clone()],
                    masses: (m0, m1),
                    beta: 1.0,
                });
            }
        }

        let labels_in_order: Vec<String> = channels.iter().map(|c| c.label.clone()).collect();
        let find = |label: &str| labels_in_order.iter().position(|l| l == label);
        let nc = channels.len();
        let mut lambda = vec![vec![0.0f64; nc]; nc];
        let mut have_diag = vec![false; nc];
        let mut seen_pairs = BTreeSet::new();
        for entry in &self.interactions {
            if entry.form != "yamaguchi" {
                return err(format!(
                    "interaction form {:?} is not implemented (only \"yamaguchi\")",
                    entry.form
                ));
            }
            let a = find(&entry.channels[0]).ok_or_else(|| {
                ConfigError(format!(
                    "interaction references unknown channel {:?} (labels are two-member sectors joined with '+')",
                    entry.channels[0]
                ))
            })?;
            let b = find(&entry.channels[1]).ok_or_else(|| {
                ConfigError(format!(
                    "interaction references unknown channel {:?}",
                    entry.channels[1]
                ))
            })?;
            let key = (a.min(b), a.max(b));
            if !seen_pairs.insert(key) {
                return err(format!(
                    "duplicate interaction entry for channels {:?} and {:?}",
                    entry.channels[0], entry.channels[1]
                ));
            }
            if !entry.lambda.is_finite() {
                return err("interaction lambda must be finite");
            }
            if a == b {
                let beta = entry.beta.ok_or_else(|| {
                    ConfigError(format!(
                        "diagonal interaction for {:?} needs a beta (it fixes the channel form factor)",
                        entry.channels[0]
                    ))
                })?;
                if !(beta > 0.0) || !beta.is_finite() {
                    return err("interaction beta must be positive");
                }
                channels[a].beta = beta;
                have_diag[a] = true;
            } else if entry.beta.is_some() {
                return err(format!(
                    "off-diagonal interaction {:?}-{:?} must not carry a beta: the form factors are fixed by the diagonal entries",
                    entry.channels[0], entry.channels[1]
                ));
            }
            lambda[a][b] = entry.lambda;
            lambda[b][a] = entry.lambda;
        }
        for (i, c) in channels.iter().enumerate() {
            let touched = (0..nc).any(|j| lambda[i][j] != 0.0);
            if touched && !have_diag[i] {
                return err(format!(
                    "channel {:?} appears in an interaction but has no diagonal entry defining its beta",
                    c.label
                ));
            }
        }

        if let Some(scan) = &self.scan {
            if scan.count == 0 {
                return err("scan.count must be at least 1");
            }
            if !(scan.e_min.is_finite() && scan.e_max.is_finite()) || scan.e_max < scan.e_min {
                return err("scan window must satisfy e_min <= e_max");
            }
            if !channels.is_empty() {
                let lowest = channels
                    .iter()
                    .map(|c| c.masses.0 + c.masses.1)
                    .fold(f64::INFINITY, f64::min);
                if scan.e_min <= lowest {
                    return err(format!(
                        "scan.e_min = {} MeV lies at or below the lowest channel threshold ({lowest} MeV): every scan energy would have all channels closed",
                        scan.e_min
                    ));
                }
            }
        }

        let cl = &self.cluster;
        if cl.pair_n < 4 || cl.q_n < 2 {
            return err("cluster.pair_n must be >= 4 and cluster.q_n >= 2");
        }
        if !(cl.q_scale > 0.0) || !(cl.c3 >= 0.0) {
            return err("cluster.q_scale must be positive and cluster.c3 non-negative");
        }
        if cl.etas.iter().any(|&e| !(e > 0.0) || !e.is_finite()) {
            return err("cluster.etas must all be positive (the eta = 0 row is implicit)");
        }
        if cl.transforms == 0 {
            return err("cluster.transforms must be at least 1");
        }
        if let Some(pair) = &cl.pair {
            if find(pair).is_none() {
                return err(format!("cluster.pair references unknown channel {pair:?}"));
            }
        }
        if let Some(sp) = &cl.spectator {
            if self.particle(sp).is_none() {
                return err(format!("cluster.spectator references unknown particle {sp:?}"));
            }
        }

        let rep = &self.rep;
        if !(rep.k_cut > 0.0) || !(rep.h > 0.0) {
            return err("rep.k_cut and rep.h must be positive");
        }
        if rep.masses_cap == 0 || rep.grouplaw_states == 0 {
            return err("rep.masses_cap and rep.grouplaw_states must be at least 1");
        }

        Ok(ResolvedModel { channels, lambda })
    }

    pub fn particle(&self, name: &str) -> Option<&ParticleEntry> {
        self.model.particles.iter().find(|p| p.name == name)
    }

    /// Pair channel and spectator particle of the cluster embedding.
    pub fn cluster_roles(
        &self,
        resolved: &ResolvedModel,
    ) -> Result<(ResolvedChannel, ParticleEntry), ConfigError> {
        let chan = match &self.cluster.pair {
            Some(label) => resolved
                .channels
                .iter()
                .find(|c| &c.label == label)
                .cloned()
                .expect("validated"),
            None => match resolved.channels.first() {
                Some(c) => c.clone(),
                None => return err("cluster-check needs at least one two-member sector"),
            },
        };
        let spectator = match &self.cluster.spectator {
            Some(name) => self.particle(name).expect("validated").clone(),
            None => {
                let mut candidates = self
                    .model
                    .sectors
                    .iter()
                    .filter(|s| s.len() == 3)
                    .filter_map(|s| {
                        let pair: [&String; 2] = [&chan.names[0], &chan.names[1]];
                        let rest: Vec<&String> =
                            s.iter().filter(|n| !pair.contains(n)).collect();
                        if rest.len() == 1 {
                            Some(rest[0].clone())
                        } else {
                            None
                        }
                    })
                    .collect::<BTreeSet<_>>();
                match (candidates.len(), candidates.pop_first()) {
                    (1, Some(name)) => self.particle(&name).expect("validated").clone(),
                    _ => {
                        return err(
                            "cluster.spectator is required: no unique three-member sector extends the pair channel",
                        )
                    }
                }
            }
        };
        Ok((chan, spectator))
    }
}
