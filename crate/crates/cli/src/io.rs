//! File formats: data CSV, truth and report JSON, JSON-lines chains and
//! run manifests. Every writer goes through a temp file and a rename.

use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector};
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use sggmdar::numerics::SymMatrix;
use sggmdar::sampler::{Chain, MoveCounts, Snapshot};
use sggmdar::simulation::{adjacency_of, SimDataset};
use sggmdar::Dataset;

use crate::config::{sha256_hex, ResolvedHyperparameters, ResolvedSampler, SimulationSection};
use crate::error::{CliError, CliResult};

pub fn write_atomic(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| CliError::io(&tmp, e))?;
    f.write_all(bytes).and_then(|_| f.sync_all()).map_err(|e| CliError::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(|e| CliError::Data(e.to_string()))?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
}

pub fn file_sha256(path: &Path) -> CliResult<String> {
    Ok(sha256_hex(&fs::read(path).map_err(|e| CliError::io(path, e))?))
}

/// `<path><suffix>` without touching the existing extension.
pub fn with_suffix(path: &Path, suffix: &str) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// Strips a trailing extension such as `.json` or `.jsonl`.
pub fn stem_path(path: &Path) -> PathBuf {
    path.with_extension("")
}

// ---------------------------------------------------------------- data CSV

pub fn format_real(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn dataset_to_csv(data: &Dataset) -> String {
    let d = data.dim();
    let mut s = (1..=d).map(|i| format!("y{i}")).collect::<Vec<_>>().join(",");
    s.push('\n');
    for t in 0..data.len() {
        let row = data.obs(t);
        let cells: Vec<String> = row.iter().map(|&x| format_real(x)).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

pub fn write_dataset(path: &Path, data: &Dataset) -> CliResult<()> {
    write_atomic(path, dataset_to_csv(data).as_bytes())
}

/// Parses a header row plus `T` rows of `D` reals. Errors name the
/// 1-based line and column.
pub fn parse_dataset(text: &str) -> CliResult<Dataset> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| CliError::Data("empty CSV".into()))?;
    let d = header.split(',').count();
    let mut rows = Vec::new();
    for (i, line) in lines {
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != d {
            return Err(CliError::Data(format!(
                "line {}: expected {d} columns, found {}",
                i + 1,
                cells.len()
            )));
        }
        let row = cells
            .iter()
            .enumerate()
            .map(|(c, cell)| {
                let v: f64 = cell.trim().parse().map_err(|_| {
                    CliError::Data(format!("line {}, column {}: cannot parse `{}`", i + 1, c + 1, cell.trim()))
                })?;
                if v.is_finite() {
                    Ok(v)
                } else {
                    Err(CliError::Data(format!("line {}, column {}: non-finite value", i + 1, c + 1)))
                }
            })
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(row);
    }
    if rows.is_empty() {
        return Err(CliError::Data("CSV has a header but no rows".into()));
    }
    Dataset::from_rows(&rows).map_err(|e| CliError::Data(e.to_string()))
}

pub fn read_dataset(path: &Path) -> CliResult<Dataset> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_dataset(&text).map_err(|e| match e {
        CliError::Data(m) => CliError::Data(format!("{}: {m}", path.display())),
        other => other,
    })
}

// ---------------------------------------------------------------- manifest

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileRef {
    pub path: String,
    pub sha256: String,
}

impl FileRef {
    pub fn of(path: &Path) -> CliResult<Self> {
        Ok(Self {
            path: path.display().to_string(),
            sha256: file_sha256(path)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timestamps {
    pub started: String,
    pub finished: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunManifest {
    pub command: String,
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub inputs: Vec<FileRef>,
    pub outputs: Vec<String>,
    pub timestamps: Timestamps,
}

pub fn now() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn new(command: &str, config_hash: String, seed: u64, started: String) -> Self {
        Self {
            command: command.to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash,
            seed,
            inputs: Vec::new(),
            outputs: Vec::new(),
            timestamps: Timestamps {
                started,
                finished: String::new(),
            },
        }
    }

    /// Stamps the finish time and writes `<first output>.manifest.json`.
    pub fn finish(mut self) -> CliResult<Self> {
        self.timestamps.finished = now();
        let first = self.outputs.first().expect("manifest without outputs");
        write_json(&with_suffix(Path::new(first), ".manifest.json"), &self)?;
        Ok(self)
    }
}

// ---------------------------------------------------------------- truth

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthFile {
    pub simulation: SimulationSection,
    pub gamma: Vec<usize>,
    pub phi: Vec<f64>,
    pub pi: Vec<f64>,
    pub mu: Vec<Vec<f64>>,
    /// Upper triangles, row-major, diagonal included, in generating units.
    pub omega: Vec<Vec<f64>>,
    pub graph_kinds: Vec<String>,
    /// Column SDs divided out of the stored data (ones when unscaled).
    pub scales: Vec<f64>,
}

impl TruthFile {
    pub fn from_sim(cfg: SimulationSection, sim: &SimDataset) -> Self {
        Self {
            simulation: cfg,
            gamma: sim.gamma.clone(),
            phi: sim.phi.clone(),
            pi: sim.pi.clone(),
            mu: sim.mu.iter().map(|m| m.iter().copied().collect()).collect(),
            omega: sim.omega.iter().map(|o| o.upper_triangle()).collect(),
            graph_kinds: sim.graph_kinds.iter().map(|k| k.name().to_string()).collect(),
            scales: sim.scales.clone(),
        }
    }

    pub fn dim(&self) -> usize {
        self.scales.len()
    }

    pub fn omega(&self, j: usize) -> CliResult<SymMatrix> {
        SymMatrix::from_upper_triangle(self.dim(), &self.omega[j]).map_err(|e| CliError::Data(format!("truth omega[{j}]: {e}")))
    }

    /// Precision in the coordinates of the stored (scaled) data.
    pub fn omega_scaled(&self, j: usize) -> CliResult<DMatrix<f64>> {
        let s = DMatrix::from_diagonal(&DVector::from_vec(self.scales.clone()));
        Ok(&s * self.omega(j)?.as_matrix() * &s)
    }

    pub fn adjacency(&self, j: usize) -> CliResult<DMatrix<bool>> {
        Ok(adjacency_of(&self.omega(j)?))
    }
}

// ---------------------------------------------------------------- chains

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChainHeader {
    pub dim: usize,
    pub n_obs: usize,
    pub data: FileRef,
    pub hyperparameters: ResolvedHyperparameters,
    pub sampler: ResolvedSampler,
    pub manifest: RunManifest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotRecord {
    pub chain: usize,
    pub iteration: usize,
    pub m_active: usize,
    pub p_order: usize,
    pub v: Vec<f64>,
    pub z: Vec<u8>,
    pub pi: Vec<f64>,
    pub mu: Vec<Vec<f64>>,
    pub omega: Vec<Vec<f64>>,
    pub tau: Vec<f64>,
    pub loglik: f64,
    pub gamma: Vec<usize>,
}

impl SnapshotRecord {
    pub fn from_snapshot(chain: usize, s: &Snapshot) -> Self {
        Self {
            chain,
            iteration: s.iteration,
            m_active: s.m_active,
            p_order: s.p_order,
            v: s.v.clone(),
            z: s.z.clone(),
            pi: s.pi.clone(),
            mu: s.mu.iter().map(|m| m.iter().copied().collect()).collect(),
            omega: s.omega.iter().map(|o| o.upper_triangle()).collect(),
            tau: s.tau.clone(),
            loglik: s.loglik,
            gamma: s.gamma.clone(),
        }
    }

    pub fn to_snapshot(&self, d: usize) -> CliResult<Snapshot> {
        let omega = self
            .omega
            .iter()
            .map(|u| SymMatrix::from_upper_triangle(d, u))
            .collect::<Result<Vec<_>, _>>()
            .map_err(|e| CliError::Data(format!("snapshot {}: {e}", self.iteration)))?;
        if self.mu.iter().any(|m| m.len() != d) {
            return Err(CliError::Data(format!("snapshot {}: mean of wrong dimension", self.iteration)));
        }
        Ok(Snapshot {
            iteration: self.iteration,
            m_active: self.m_active,
            p_order: self.p_order,
            v: self.v.clone(),
            z: self.z.clone(),
            pi: self.pi.clone(),
            mu: self.mu.iter().map(|m| DVector::from_vec(m.clone())).collect(),
            omega,
            tau: self.tau.clone(),
            loglik: self.loglik,
            gamma: self.gamma.clone(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MoveRecord {
    pub birth_proposed: usize,
    pub birth_accepted: usize,
    pub death_proposed: usize,
    pub death_accepted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TraceRecord {
    pub chain: usize,
    pub loglik: Vec<f64>,
    pub m: Vec<usize>,
    pub p: Vec<usize>,
    pub moves: MoveRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "record", rename_all = "lowercase")]
pub enum ChainRecord {
    Header(Box<ChainHeader>),
    Snapshot(Box<SnapshotRecord>),
    Trace(TraceRecord),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChainFile {
    pub header: ChainHeader,
    pub chains: Vec<Chain>,
}

/// One header line, then each chain's snapshots followed by its traces.
pub fn chains_to_jsonl(header: &ChainHeader, chains: &[Chain]) -> String {
    let mut out = String::new();
    let mut push = |r: &ChainRecord| {
        out.push_str(&serde_json::to_string(r).expect("serializable record"));
        out.push('\n');
    };
    push(&ChainRecord::Header(Box::new(header.clone())));
    for (c, chain) in chains.iter().enumerate() {
        for s in &chain.snapshots {
            push(&ChainRecord::Snapshot(Box::new(SnapshotRecord::from_snapshot(c, s))));
        }
        push(&ChainRecord::Trace(TraceRecord {
            chain: c,
            loglik: chain.loglik_trace.clone(),
            m: chain.m_trace.clone(),
            p: chain.p_trace.clone(),
            moves: MoveRecord {
                birth_proposed: chain.moves.birth_proposed,
                birth_accepted: chain.moves.birth_accepted,
                death_proposed: chain.moves.death_proposed,
                death_accepted: chain.moves.death_accepted,
            },
        }));
    }
    out
}

pub fn write_chains(path: &Path, header: &ChainHeader, chains: &[Chain]) -> CliResult<()> {
    write_atomic(path, chains_to_jsonl(header, chains).as_bytes())
}

pub fn read_chains(path: &Path) -> CliResult<ChainFile> {
    let f = fs::File::open(path).map_err(|e| CliError::io(path, e))?;
    let err = |line: usize, m: String| CliError::Data(format!("{}: line {line}: {m}", path.display()));
    let mut header: Option<ChainHeader> = None;
    let mut chains: Vec<Chain> = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: ChainRecord = serde_json::from_str(&line).map_err(|e| err(i + 1, e.to_string()))?;
        let slot = |chains: &mut Vec<Chain>, c: usize| -> usize {
            while chains.len() <= c {
                chains.push(Chain {
                    snapshots: Vec::new(),
                    loglik_trace: Vec::new(),
                    m_trace: Vec::new(),
                    p_trace: Vec::new(),
                    moves: MoveCounts::default(),
                });
            }
            c
        };
        match rec {
            ChainRecord::Header(h) => {
                if header.is_some() {
                    return Err(err(i + 1, "second header record".into()));
                }
                header = Some(*h);
            }
            ChainRecord::Snapshot(s) => {
                let d = header.as_ref().ok_or_else(|| err(i + 1, "snapshot before header".into()))?.dim;
                let c = slot(&mut chains, s.chain);
                chains[c].snapshots.push(s.to_snapshot(d).map_err(|e| err(i + 1, e.to_string()))?);
            }
            ChainRecord::Trace(t) => {
                let c = slot(&mut chains, t.chain);
                let ch = &mut chains[c];
                ch.loglik_trace = t.loglik;
                ch.m_trace = t.m;
                ch.p_trace = t.p;
                ch.moves = MoveCounts {
                    birth_proposed: t.moves.birth_proposed,
                    birth_accepted: t.moves.birth_accepted,
                    death_proposed: t.moves.death_proposed,
                    death_accepted: t.moves.death_accepted,
                };
            }
        }
    }
    let header = header.ok_or_else(|| CliError::Data(format!("{}: no header record", path.display())))?;
    Ok(ChainFile { header, chains })
}

// ---------------------------------------------------------------- report

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Diagnostic {
    pub chain: usize,
    pub error: Option<String>,
    pub stationary: Option<bool>,
    pub start: Option<usize>,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub halfwidth_passed: Option<bool>,
    pub mean: Option<f64>,
    pub halfwidth: Option<f64>,
}

pub type Matrix = Vec<Vec<f64>>;

pub fn matrix_rows(m: &DMatrix<f64>) -> Matrix {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

pub fn rows_matrix(rows: &Matrix) -> DMatrix<f64> {
    let n = rows.len();
    let k = rows.first().map_or(0, Vec::len);
    DMatrix::from_fn(n, k, |i, j| rows[i][j])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Report {
    pub level: f64,
    pub m_hat: usize,
    pub p_hat: usize,
    /// `[value, posterior mass]` pairs.
    pub m_mass: Vec<(usize, f64)>,
    pub p_mass: Vec<(usize, f64)>,
    pub n_snapshots: usize,
    /// Sampler labels of the reported states, in report order.
    pub labels: Vec<usize>,
    pub phi: Vec<f64>,
    pub pi: Vec<f64>,
    pub mu: Vec<Vec<f64>>,
    pub omega: Vec<Matrix>,
    pub partial_correlations: Vec<Matrix>,
    pub adjacency: Vec<Vec<Vec<u8>>>,
    pub ci_lower: Vec<Matrix>,
    pub ci_upper: Vec<Matrix>,
    pub global_decode: Vec<usize>,
    pub diagnostics: Vec<Diagnostic>,
    pub manifest: RunManifest,
}

impl Report {
    pub fn n_states(&self) -> usize {
        self.labels.len()
    }

    pub fn adjacency_matrix(&self, j: usize) -> DMatrix<bool> {
        let a = &self.adjacency[j];
        DMatrix::from_fn(a.len(), a.len(), |i, l| a[i][l] != 0)
    }

    pub fn omega_matrix(&self, j: usize) -> DMatrix<f64> {
        rows_matrix(&self.omega[j])
    }
}

/// `t,p1..pM` rows of local-decode probabilities.
pub fn local_decode_csv(probs: &[Vec<f64>]) -> String {
    let m = probs.first().map_or(0, Vec::len);
    let mut s = String::from("t");
    for j in 1..=m {
        s.push_str(&format!(",p{j}"));
    }
    s.push('\n');
    for (t, row) in probs.iter().enumerate() {
        s.push_str(&t.to_string());
        for &p in row {
            s.push(',');
            s.push_str(&format_real(p));
        }
        s.push('\n');
    }
    s
}
