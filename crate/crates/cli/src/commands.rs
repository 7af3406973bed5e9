//! The four pipeline stages behind the `sggmdar` subcommands.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use sggmdar::inference::{ecr_relabel, map_pivot, modal_counts, occupied_labels, summarize, SummaryOptions};
use sggmdar::metrics::{confusion, format_mean_sd, max_weight_assignment, rmse_offdiag, scores, state_accuracy};
use sggmdar::numerics::derive_seed;
use sggmdar::sampler::{run_mcmc, Chain, Snapshot};
use sggmdar::simulation::{simulate_dataset, SimConfig};
use sggmdar::Dataset;

use crate::config::{config_hash, load_config, RunConfig, SimulationSection};
use crate::error::{CliError, CliResult};
use crate::io::{
    format_real, local_decode_csv, matrix_rows, now, read_chains, read_dataset, read_json, stem_path, with_suffix,
    write_atomic, write_chains, write_dataset, write_json, ChainHeader, Diagnostic, FileRef, Report, RunManifest,
    TruthFile,
};

pub const HISTOGRAM_BINS: usize = 20;

// ---------------------------------------------------------------- simulate

#[derive(Debug, Clone)]
pub struct SimulateArgs {
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub replicates: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulateOutput {
    pub data: PathBuf,
    pub truth: PathBuf,
    pub seed: u64,
}

fn simulation_section(cfg: &RunConfig, seed: Option<u64>) -> SimulationSection {
    let mut s = cfg
        .simulation
        .clone()
        .unwrap_or_else(|| SimulationSection::from_sim(&SimConfig::five_state_study(0)));
    if let Some(seed) = seed {
        s.seed = seed;
    }
    s
}

/// Writes `<out>.csv` and `<out>.truth.json`, or `<out>_rNN.*` per
/// replicate with seeds split from the base seed.
pub fn cmd_simulate(args: &SimulateArgs) -> CliResult<Vec<SimulateOutput>> {
    if args.replicates == 0 {
        return Err(CliError::Config("--replicates: must be positive".into()));
    }
    let cfg = load_config(args.config.as_deref())?;
    let base = simulation_section(&cfg, args.seed);
    base.resolve()?;
    let width = (args.replicates - 1).to_string().len().max(2);
    (0..args.replicates)
        .into_par_iter()
        .map(|r| {
            let mut section = base.clone();
            let prefix = if args.replicates == 1 {
                args.out.clone()
            } else {
                section.seed = derive_seed(base.seed, r as u64);
                with_suffix(&args.out, &format!("_r{r:0width$}"))
            };
            simulate_one(&section, &prefix)
        })
        .collect()
}

fn simulate_one(section: &SimulationSection, prefix: &Path) -> CliResult<SimulateOutput> {
    let started = now();
    let sim = simulate_dataset(&section.resolve()?)?;
    let data = with_suffix(prefix, ".csv");
    let truth = with_suffix(prefix, ".truth.json");
    write_dataset(&data, &sim.data)?;
    write_json(&truth, &TruthFile::from_sim(section.clone(), &sim))?;
    let mut m = RunManifest::new("simulate", config_hash(section), section.seed, started);
    m.outputs = vec![data.display().to_string(), truth.display().to_string()];
    m.finish()?;
    Ok(SimulateOutput {
        data,
        truth,
        seed: section.seed,
    })
}

// ---------------------------------------------------------------- fit

#[derive(Debug, Clone)]
pub struct FitArgs {
    pub data: PathBuf,
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub chains: Option<usize>,
    pub thin: Option<usize>,
}

#[derive(Serialize)]
struct FitConfigHash<'a> {
    hyperparameters: &'a crate::config::ResolvedHyperparameters,
    sampler: &'a crate::config::ResolvedSampler,
}

pub fn cmd_fit(args: &FitArgs) -> CliResult<ChainHeader> {
    let started = now();
    let cfg = load_config(args.config.as_deref())?;
    let data = read_dataset(&args.data)?;
    let mut sampler = cfg.sampler.clone();
    sampler.seed = args.seed.or(sampler.seed);
    sampler.chains = args.chains.or(sampler.chains);
    sampler.thin = args.thin.or(sampler.thin);
    let sampler = sampler.resolve()?;
    let hyper = cfg.hyperparameters.resolve(data.dim())?;
    if data.len() <= hyper.p_max {
        return Err(CliError::Data(format!(
            "{}: {} observations, need more than p_max = {}",
            args.data.display(),
            data.len(),
            hyper.p_max
        )));
    }
    let chains = run_mcmc(&sampler.to_config(), &data, &hyper.to_model()?)?;
    let mut manifest = RunManifest::new(
        "fit",
        config_hash(&FitConfigHash {
            hyperparameters: &hyper,
            sampler: &sampler,
        }),
        sampler.seed,
        started,
    );
    let data_ref = FileRef::of(&args.data)?;
    manifest.inputs = vec![data_ref.clone()];
    manifest.outputs = vec![args.out.display().to_string()];
    manifest.timestamps.finished = now();
    let header = ChainHeader {
        dim: data.dim(),
        n_obs: data.len(),
        data: data_ref,
        hyperparameters: hyper,
        sampler,
        manifest,
    };
    write_chains(&args.out, &header, &chains)?;
    header.manifest.clone().finish()?;
    Ok(header)
}

// ---------------------------------------------------------------- summarize

#[derive(Debug, Clone)]
pub struct SummarizeArgs {
    pub chain: PathBuf,
    pub out: PathBuf,
    pub level: f64,
    /// Overrides the data path recorded in the chain header.
    pub data: Option<PathBuf>,
}

#[derive(Serialize)]
struct SummarizeConfigHash<'a> {
    chain: &'a str,
    level: f64,
}

fn hw_diagnostics(s: &sggmdar::inference::PosteriorSummary) -> Vec<Diagnostic> {
    s.diagnostics
        .iter()
        .enumerate()
        .map(|(c, r)| match r {
            Ok(h) => Diagnostic {
                chain: c,
                error: None,
                stationary: Some(h.stationary),
                start: h.start,
                statistic: h.statistic.is_finite().then_some(h.statistic),
                p_value: Some(h.p_value),
                halfwidth_passed: h.halfwidth_passed,
                mean: h.mean,
                halfwidth: h.halfwidth,
            },
            Err(e) => Diagnostic {
                chain: c,
                error: Some(e.to_string()),
                stationary: None,
                start: None,
                statistic: None,
                p_value: None,
                halfwidth_passed: None,
                mean: None,
                halfwidth: None,
            },
        })
        .collect()
}

/// Relabeled snapshots at the modal model, with π restricted to `labels`.
fn modal_draws(chains: &[Chain], m_hat: usize, p_hat: usize, labels: &[usize]) -> CliResult<Vec<(Vec<f64>, Vec<f64>)>> {
    let snapshots: Vec<Snapshot> = chains.iter().flat_map(|c| c.snapshots.iter().cloned()).collect();
    let pivot = map_pivot(&snapshots, m_hat, p_hat)?.gamma.clone();
    Ok(ecr_relabel(&snapshots, &pivot)?
        .into_iter()
        .filter(|s| s.m_active == m_hat && s.p_order == p_hat)
        .map(|s| {
            let phi = s.phi()[..=p_hat].to_vec();
            let pi: Vec<f64> = labels.iter().map(|&l| s.pi[l]).collect();
            let z: f64 = pi.iter().sum();
            (phi, pi.into_iter().map(|p| p / z).collect())
        })
        .collect())
}

pub fn histogram_csv(draws: &[(Vec<f64>, Vec<f64>)]) -> String {
    let mut s = String::from("parameter,bin_lower,bin_upper,count\n");
    let Some((phi0, pi0)) = draws.first() else {
        return s;
    };
    let mut emit = |name: String, values: Vec<f64>| {
        let mut counts = [0usize; HISTOGRAM_BINS];
        for v in values {
            let b = ((v * HISTOGRAM_BINS as f64) as usize).min(HISTOGRAM_BINS - 1);
            counts[b] += 1;
        }
        for (b, c) in counts.iter().enumerate() {
            let lo = b as f64 / HISTOGRAM_BINS as f64;
            let hi = (b + 1) as f64 / HISTOGRAM_BINS as f64;
            s.push_str(&format!("{name},{lo},{hi},{c}\n"));
        }
    };
    for k in 0..phi0.len() {
        emit(format!("phi{k}"), draws.iter().map(|d| d.0[k]).collect());
    }
    for j in 0..pi0.len() {
        emit(format!("pi{}", j + 1), draws.iter().map(|d| d.1[j]).collect());
    }
    s
}

pub fn trace_csv(chains: &[Chain]) -> String {
    let mut s = String::from("chain,iteration,loglik,m,p\n");
    for (c, ch) in chains.iter().enumerate() {
        for (i, (&m, &p)) in ch.m_trace.iter().zip(&ch.p_trace).enumerate() {
            let ll = ch.loglik_trace.get(i).map_or(String::new(), |&x| format_real(x));
            s.push_str(&format!("{c},{},{ll},{m},{p}\n", i + 1));
        }
    }
    s
}

/// Report JSON at `out`, plus `<stem>.local.csv`, `<stem>.hist.csv` and
/// `<stem>.trace.csv`.
pub fn cmd_summarize(args: &SummarizeArgs) -> CliResult<Report> {
    let started = now();
    if !(args.level > 0.0 && args.level < 1.0) {
        return Err(CliError::Config(format!("--level: {} is not in (0, 1)", args.level)));
    }
    let file = read_chains(&args.chain)?;
    let data_path = args.data.clone().unwrap_or_else(|| PathBuf::from(&file.header.data.path));
    let data_ref = FileRef::of(&data_path)?;
    if args.data.is_none() && data_ref.sha256 != file.header.data.sha256 {
        return Err(CliError::Data(format!("{}: contents changed since the fit", data_path.display())));
    }
    let data: Dataset = read_dataset(&data_path)?;
    if data.dim() != file.header.dim || data.len() != file.header.n_obs {
        return Err(CliError::Data(format!(
            "{}: {}x{} data, chain expects {}x{}",
            data_path.display(),
            data.len(),
            data.dim(),
            file.header.n_obs,
            file.header.dim
        )));
    }
    let opts = SummaryOptions {
        level: args.level,
        ..Default::default()
    };
    let snapshots: Vec<Snapshot> = file.chains.iter().flat_map(|c| c.snapshots.iter().cloned()).collect();
    let s = summarize(&file.chains, &data, &opts).map_err(|e| match e {
        sggmdar::Error::NoMatchingSnapshots { .. } => {
            let mc = modal_counts(&snapshots).ok();
            CliError::Data(format!(
                "{e}; m mass {:?}, p mass {:?}",
                mc.as_ref().map(|m| &m.m_mass),
                mc.as_ref().map(|m| &m.p_mass)
            ))
        }
        other => other.into(),
    })?;
    let labels = occupied_labels(&map_pivot(&snapshots, s.m_hat, s.p_hat)?.gamma);
    debug_assert_eq!(labels, s.params.labels);
    let draws = modal_draws(&file.chains, s.m_hat, s.p_hat, &s.params.labels)?;

    let stem = stem_path(&args.out);
    let local = with_suffix(&stem, ".local.csv");
    let hist = with_suffix(&stem, ".hist.csv");
    let trace = with_suffix(&stem, ".trace.csv");
    let mut manifest = RunManifest::new(
        "summarize",
        config_hash(&SummarizeConfigHash {
            chain: &file.header.manifest.config_hash,
            level: args.level,
        }),
        file.header.sampler.seed,
        started,
    );
    manifest.inputs = vec![FileRef::of(&args.chain)?, data_ref];
    manifest.outputs = [&args.out, &local, &hist, &trace].iter().map(|p| p.display().to_string()).collect();
    manifest.timestamps.finished = now();

    let to_u8 = |a: &nalgebra::DMatrix<bool>| -> Vec<Vec<u8>> {
        (0..a.nrows()).map(|i| (0..a.ncols()).map(|l| a[(i, l)] as u8).collect()).collect()
    };
    let report = Report {
        level: args.level,
        m_hat: s.m_hat,
        p_hat: s.p_hat,
        m_mass: s.m_mass.clone(),
        p_mass: s.p_mass.clone(),
        n_snapshots: s.params.n_snapshots,
        labels: s.params.labels.clone(),
        phi: s.params.phi.clone(),
        pi: s.params.pi.clone(),
        mu: s.params.mu.iter().map(|m| m.iter().copied().collect()).collect(),
        omega: s.params.omega.iter().map(|o| matrix_rows(o.as_matrix())).collect(),
        partial_correlations: s.partial_correlations.iter().map(matrix_rows).collect(),
        adjacency: s.edges.adjacency.iter().map(to_u8).collect(),
        ci_lower: s.edges.lower.iter().map(matrix_rows).collect(),
        ci_upper: s.edges.upper.iter().map(matrix_rows).collect(),
        global_decode: s.global_decode.clone(),
        diagnostics: hw_diagnostics(&s),
        manifest,
    };
    write_atomic(&local, local_decode_csv(&s.local_decode).as_bytes())?;
    write_atomic(&hist, histogram_csv(&draws).as_bytes())?;
    write_atomic(&trace, trace_csv(&file.chains).as_bytes())?;
    write_json(&args.out, &report)?;
    report.manifest.clone().finish()?;
    Ok(report)
}

// ---------------------------------------------------------------- metrics

#[derive(Debug, Clone)]
pub struct MetricsArgs {
    pub truth: Vec<PathBuf>,
    pub report: Vec<PathBuf>,
    pub out: PathBuf,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateMetrics {
    pub replicate: usize,
    /// True state index.
    pub state: usize,
    pub graph: String,
    /// Report state matched to it, if any.
    pub matched: Option<usize>,
    pub acc: Option<f64>,
    pub spec: Option<f64>,
    pub mcc: Option<f64>,
    pub f1: Option<f64>,
    pub sens: Option<f64>,
    pub rmse: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateMetrics {
    pub truth: String,
    pub report: String,
    pub m_hat: usize,
    pub p_hat: usize,
    pub state_accuracy: f64,
    pub states: Vec<StateMetrics>,
}

/// Matches each true state to a reported state by maximum overlap of the
/// true and globally decoded sequences.
pub fn align_states(truth: &[usize], decoded: &[usize], m_true: usize, m_est: usize) -> CliResult<Vec<Option<usize>>> {
    if truth.len() != decoded.len() {
        return Err(CliError::Data(format!(
            "truth has {} time points, report {}",
            truth.len(),
            decoded.len()
        )));
    }
    let k = m_true.max(m_est);
    let mut w = vec![vec![0i64; k]; k];
    for (&a, &b) in truth.iter().zip(decoded) {
        if a >= m_true || b >= m_est {
            return Err(CliError::Data(format!("state label out of range ({a} or {b})")));
        }
        w[a][b] += 1;
    }
    let (_, assign) = max_weight_assignment(&w);
    Ok((0..m_true).map(|j| Some(assign[j]).filter(|&b| b < m_est)).collect())
}

pub fn replicate_metrics(replicate: usize, truth: &TruthFile, report: &Report) -> CliResult<Vec<StateMetrics>> {
    let d = truth.dim();
    if report.omega.first().is_some_and(|o| o.len() != d) {
        return Err(CliError::Data(format!(
            "truth has dimension {d}, report {}",
            report.omega[0].len()
        )));
    }
    let m_true = truth.omega.len();
    let aligned = align_states(&truth.gamma, &report.global_decode, m_true, report.n_states())?;
    (0..m_true)
        .map(|j| {
            let mut row = StateMetrics {
                replicate,
                state: j,
                graph: truth.graph_kinds[j].clone(),
                matched: aligned[j],
                acc: None,
                spec: None,
                mcc: None,
                f1: None,
                sens: None,
                rmse: None,
            };
            if let Some(b) = aligned[j] {
                let c = confusion(&truth.adjacency(j)?, &report.adjacency_matrix(b))?;
                let sc = scores(&c);
                row.acc = sc.acc;
                row.spec = sc.spec;
                row.mcc = sc.mcc;
                row.f1 = sc.f1;
                row.sens = sc.sens;
                row.rmse = Some(rmse_offdiag(&truth.omega_scaled(j)?, &report.omega_matrix(b))?);
            }
            Ok(row)
        })
        .collect()
}

fn cell(x: Option<f64>) -> String {
    x.map_or("null".to_string(), format_real)
}

pub const METRIC_COLUMNS: [&str; 6] = ["acc", "spec", "mcc", "f1", "sens", "rmse"];

fn metric_values(r: &StateMetrics) -> [Option<f64>; 6] {
    [r.acc, r.spec, r.mcc, r.f1, r.sens, r.rmse]
}

/// Per-state rows, then `mean (sd)` rows per true state when more than one
/// replicate is given.
pub fn metrics_csv(reps: &[ReplicateMetrics]) -> String {
    let mut s = format!("replicate,state,graph,matched,{}\n", METRIC_COLUMNS.join(","));
    for rep in reps {
        for r in &rep.states {
            let vals: Vec<String> = metric_values(r).iter().map(|&v| cell(v)).collect();
            let matched = r.matched.map_or("null".to_string(), |b| b.to_string());
            s.push_str(&format!("{},{},{},{matched},{}\n", r.replicate, r.state, r.graph, vals.join(",")));
        }
    }
    if reps.len() > 1 {
        for row in aggregate_rows(reps) {
            s.push_str(&format!("mean (sd),{},{},,{}\n", row.0, row.1, row.2.iter().map(|c| format!("\"{c}\"")).collect::<Vec<_>>().join(",")));
        }
    }
    s
}

/// `(state, graph, cells)` with one `mean (sd)` cell per metric column.
pub fn aggregate_rows(reps: &[ReplicateMetrics]) -> Vec<(usize, String, Vec<String>)> {
    let n_states = reps.iter().map(|r| r.states.len()).max().unwrap_or(0);
    (0..n_states)
        .map(|j| {
            let rows: Vec<&StateMetrics> = reps.iter().filter_map(|r| r.states.get(j)).collect();
            let cells = (0..METRIC_COLUMNS.len())
                .map(|k| format_mean_sd(&rows.iter().map(|r| metric_values(r)[k]).collect::<Vec<_>>()))
                .collect();
            (j, rows[0].graph.clone(), cells)
        })
        .collect()
}

#[derive(Serialize)]
struct MetricsConfigHash<'a> {
    truth: &'a [FileRef],
    report: &'a [FileRef],
}

/// Writes the CSV at `out` and the same rows as `<stem>.json`.
pub fn cmd_metrics(args: &MetricsArgs) -> CliResult<Vec<ReplicateMetrics>> {
    let started = now();
    if args.truth.is_empty() || args.truth.len() != args.report.len() {
        return Err(CliError::Config(format!(
            "--truth and --report: need matching non-empty lists, got {} and {}",
            args.truth.len(),
            args.report.len()
        )));
    }
    let reps = args
        .truth
        .iter()
        .zip(&args.report)
        .enumerate()
        .map(|(i, (tp, rp))| {
            let truth: TruthFile = read_json(tp)?;
            let report: Report = read_json(rp)?;
            let states = replicate_metrics(i, &truth, &report)?;
            let acc = state_accuracy(&truth.gamma, &report.global_decode)?;
            Ok(ReplicateMetrics {
                truth: tp.display().to_string(),
                report: rp.display().to_string(),
                m_hat: report.m_hat,
                p_hat: report.p_hat,
                state_accuracy: acc,
                states,
            })
        })
        .collect::<CliResult<Vec<_>>>()?;
    let json = with_suffix(&stem_path(&args.out), ".json");
    write_atomic(&args.out, metrics_csv(&reps).as_bytes())?;
    write_json(&json, &reps)?;
    let truth_refs = args.truth.iter().map(|p| FileRef::of(p)).collect::<CliResult<Vec<_>>>()?;
    let report_refs = args.report.iter().map(|p| FileRef::of(p)).collect::<CliResult<Vec<_>>>()?;
    let mut m = RunManifest::new(
        "metrics",
        config_hash(&MetricsConfigHash {
            truth: &truth_refs,
            report: &report_refs,
        }),
        0,
        started,
    );
    m.inputs = truth_refs.into_iter().chain(report_refs).collect();
    m.outputs = vec![args.out.display().to_string(), json.display().to_string()];
    m.finish()?;
    Ok(reps)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn alignment_recovers_swap() {
        let truth = [0, 0, 1, 1, 2, 2];
        let dec = [2, 2, 0, 0, 1, 1];
        assert_eq!(align_states(&truth, &dec, 3, 3).unwrap(), vec![Some(2), Some(0), Some(1)]);
        // fewer estimated states leaves one true state unmatched
        let dec = [1, 1, 0, 0, 0, 0];
        let a = align_states(&truth, &dec, 3, 2).unwrap();
        assert_eq!(a[0], Some(1));
        assert_eq!(a.iter().filter(|x| x.is_none()).count(), 1);
        assert!(align_states(&truth, &dec[..3], 3, 2).is_err());
    }

    #[test]
    fn histogram_counts_every_draw() {
        let draws = vec![(vec![0.1, 0.9], vec![0.0, 1.0]), (vec![0.12, 0.88], vec![0.5, 0.5])];
        let s = histogram_csv(&draws);
        let total: usize = s
            .lines()
            .skip(1)
            .filter(|l| l.starts_with("phi0,"))
            .map(|l| l.rsplit(',').next().unwrap().parse::<usize>().unwrap())
            .sum();
        assert_eq!(total, 2);
        assert!(s.contains("pi2,0.95,1,1") && s.contains("pi2,0.5,0.55,1"), "{s}");
        assert!(s.contains("phi0,0.1,0.15,2"));
    }

    fn row(replicate: usize, mcc: Option<f64>) -> StateMetrics {
        StateMetrics {
            replicate,
            state: 0,
            graph: "hub".into(),
            matched: Some(0),
            acc: Some(1.0),
            spec: Some(1.0),
            mcc,
            f1: None,
            sens: None,
            rmse: Some(0.05),
        }
    }

    #[test]
    fn aggregate_formatting() {
        let reps: Vec<ReplicateMetrics> = [Some(0.9), Some(1.0)]
            .iter()
            .enumerate()
            .map(|(i, &m)| ReplicateMetrics {
                truth: String::new(),
                report: String::new(),
                m_hat: 1,
                p_hat: 1,
                state_accuracy: 1.0,
                states: vec![row(i, m)],
            })
            .collect();
        let agg = aggregate_rows(&reps);
        assert_eq!(agg[0].2[0], "1.0 (0.0)");
        assert_eq!(agg[0].2[2], "0.95 (0.071)");
        assert_eq!(agg[0].2[3], "-");
        let csv = metrics_csv(&reps);
        assert!(csv.lines().nth(1).unwrap().contains(",null,"));
        assert!(csv.contains("mean (sd),0,hub,,\"1.0 (0.0)\""));
    }
}
