//! Deterministic artifact writing: fixed-format CSV tables, content
//! checksums, and the atomically written run manifest.

use crate::config::RunConfig;
use serde::Serialize;
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

/// 17-significant-digit scientific notation: enough to round-trip any
/// f64, so reruns are byte-identical.
pub fn fmt17(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    let digest = h.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

/// Checksum of a radial grid: the little-endian bytes of all nodes then
/// all weights.
pub fn grid_checksum(nodes: &[f64], weights: &[f64]) -> String {
    let mut bytes = Vec::with_capacity(16 * nodes.len());
    for x in nodes.iter().chain(weights.iter()) {
        bytes.extend_from_slice(&x.to_le_bytes());
    }
    sha256_hex(&bytes)
}

/// One CSV table staged for the manifest.
pub struct CsvTable {
    pub file_name: String,
    pub schema: String,
    header: String,
    rows: Vec<String>,
}

impl CsvTable {
    pub fn new(file_name: &str, schema: &str, columns: &[&str]) -> CsvTable {
        CsvTable {
            file_name: file_name.to_string(),
            schema: schema.to_string(),
            header: columns.join(","),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, cells: &[String]) {
        self.rows.push(cells.join(","));
    }

    pub fn contents(&self) -> String {
        let mut s = String::new();
        s.push_str(&self.header);
        s.push('\n');
        for r in &self.rows {
            s.push_str(r);
            s.push('\n');
        }
        s
    }

    pub fn row_count(&self) -> usize {
        self.rows.len()
    }
}

#[derive(Serialize)]
pub struct OutputFile {
    pub file: String,
    pub schema: String,
    pub sha256: String,
    pub rows: usize,
}

#[derive(Serialize)]
pub struct SectorLayout {
    pub label: String,
    pub members: Vec<String>,
    pub threshold_mev: f64,
}

/// The run manifest: everything needed to trace any CSV row back to the
/// exact configuration and code that produced it. Deliberately carries
/// no timestamp so identical runs produce identical bytes.
#[derive(Serialize)]
pub struct RunManifest {
    pub schema: String,
    pub code_version: String,
    pub task: String,
    pub seed: u64,
    pub config: RunConfig,
    pub sector_layout: Vec<SectorLayout>,
    pub grid_checksums: BTreeMap<String, String>,
    pub outputs: Vec<OutputFile>,
    pub residual_summary: BTreeMap<String, f64>,
}

/// Collects tables and summary figures during a task, then writes
/// everything at the end (manifest last, atomically).
pub struct RunWriter {
    out_dir: PathBuf,
    task: String,
    tables: Vec<CsvTable>,
    pub grid_checksums: BTreeMap<String, String>,
    pub residual_summary: BTreeMap<String, f64>,
    pub sector_layout: Vec<SectorLayout>,
}

impl RunWriter {
    pub fn new(out_dir: &Path, task: &str) -> RunWriter {
        RunWriter {
            out_dir: out_dir.to_path_buf(),
            task: task.to_string(),
            tables: Vec::new(),
            grid_checksums: BTreeMap::new(),
            residual_summary: BTreeMap::new(),
            sector_layout: Vec::new(),
        }
    }

    pub fn add_table(&mut self, table: CsvTable) {
        self.tables.push(table);
    }

    pub fn record_grid(&mut self, name: &str, nodes: &[f64], weights: &[f64]) {
        self.grid_checksums
            .insert(name.to_string(), grid_checksum(nodes, weights));
    }

    pub fn record_residual(&mut self, key: &str, value: f64) {
        self.residual_summary.insert(key.to_string(), value);
    }

    /// Write every table, then the manifest. The manifest goes through a
    /// temporary file plus rename so a crash can never leave a manifest
    /// that lists missing outputs.
    pub fn finish(self, config: &RunConfig) -> std::io::Result<PathBuf> {
        fs::create_dir_all(&self.out_dir)?;
        let mut outputs = Vec::new();
        for t in &self.tables {
            let contents = t.contents();
            let path = self.out_dir.join(&t.file_name);
            fs::write(&path, contents.as_bytes())?;
            outputs.push(OutputFile {
                file: t.file_name.clone(),
                schema: t.schema.clone(),
                sha256: sha256_hex(contents.as_bytes()),
                rows: t.row_count(),
            });
        }
        let manifest = RunManifest {
            schema: "run-manifest-v1".to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            task: self.task.clone(),
            seed: config.seed,
            config: config.clone(),
            sector_layout: self.sector_layout,
            grid_checksums: self.grid_checksums,
            outputs,
            residual_summary: self.residual_summary,
        };
        let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
        let final_path = self.out_dir.join("run_manifest.json");
        let tmp_path = self.out_dir.join(".run_manifest.json.tmp");
        {
            let mut f = fs::File::create(&tmp_path)?;
            f.write_all(json.as_bytes())?;
            f.write_all(b"\n")?;
            f.sync_all()?;
        }
        fs::rename(&tmp_path, &final_path)?;
        Ok(final_path)
    }
}
