//! Ensembles of trajectories: parallel execution, statistics, steady-state
//! detection and on-disk records.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dynamics::{DynamicsError, TrajectoryConfig, TrajectoryRecord, TrajectoryRunner, TrajectorySetup, TrajectoryStatus};

pub const FORMAT_VERSION: u32 = 1;
/// Runs with a larger fraction of failed paths are marked invalid.
pub const MAX_FAILURE_FRACTION: f64 = 0.10;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("invalid ensemble configuration: {0}")]
    Config(String),
    #[error("only {completed} of {paths} paths completed; first failure: {}", first_failure.as_deref().unwrap_or("none"))]
    TooFewCompleted {
        completed: usize,
        paths: usize,
        first_failure: Option<String>,
    },
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
    #[error("{path}: line {line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },
    #[error("{path}: unsupported format version {found} (expected {FORMAT_VERSION})")]
    Version { path: PathBuf, found: u32 },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EnsembleError + '_ {
    move |source| EnsembleError::Io {
        path: path.to_path_buf(),
        source,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SteadyStateConfig {
    /// Width of the fitting windows, in `tau`.
    pub window_width: f64,
    /// Largest accepted `|slope| / mean` per unit `tau`.
    pub slope_tol: f64,
    /// Windows the plateau must persist before an ensemble stops early.
    pub persist_windows: usize,
    pub early_stop: bool,
    /// Trailing fraction of the plateau used for the steady-state mean.
    pub tail_fraction: f64,
}

impl Default for SteadyStateConfig {
    fn default() -> Self {
        SteadyStateConfig {
            window_width: 2.0,
            slope_tol: 0.02,
            persist_windows: 3,
            early_stop: true,
            tail_fraction: 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleConfig {
    pub trajectory: TrajectoryConfig,
    pub paths: usize,
    /// Worker threads; 0 uses the rayon default.
    pub workers: usize,
    pub steady_state: SteadyStateConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnsembleStats {
    pub tau: Vec<f64>,
    pub mean_energy: Vec<f64>,
    pub stderr: Vec<f64>,
    /// Completed paths contributing to the statistics.
    pub n_paths: usize,
    pub failures: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateSummary {
    pub reached: bool,
    pub tau_ss: Option<f64>,
    pub e_ss: Option<f64>,
    pub e_ss_stderr: Option<f64>,
    pub window_width: f64,
    pub slope_tol: f64,
}

impl SteadyStateSummary {
    fn not_reached(window_width: f64, slope_tol: f64) -> Self {
        SteadyStateSummary {
            reached: false,
            tau_ss: None,
            e_ss: None,
            e_ss_stderr: None,
            window_width,
            slope_tol,
        }
    }
}

#[derive(Debug, Clone)]
pub struct EnsembleRun {
    pub stats: EnsembleStats,
    pub records: Vec<TrajectoryRecord>,
    pub steady_state: SteadyStateSummary,
    /// More than [`MAX_FAILURE_FRACTION`] of the paths failed.
    pub invalid: bool,
    /// Final time actually simulated (shorter than `tau_max` after an early stop).
    pub tau_end: f64,
}

/// Mean and standard error over completed records, in index order.
pub fn aggregate(records: &[TrajectoryRecord], n_samples: usize) -> Result<EnsembleStats, EnsembleError> {
    let done: Vec<&TrajectoryRecord> = records
        .iter()
        .filter(|r| r.status == TrajectoryStatus::Completed)
        .collect();
    let failures = records.len() - done.len();
    if done.len() < 2 {
        return Err(EnsembleError::TooFewCompleted {
            completed: done.len(),
            paths: records.len(),
            first_failure: records.iter().find_map(|r| r.failure.clone()),
        });
    }
    let n = done.len() as f64;
    let mut mean_energy = vec![0.0; n_samples];
    let mut stderr = vec![0.0; n_samples];
    for k in 0..n_samples {
        let mean = done.iter().map(|r| r.energy[k]).sum::<f64>() / n;
        let var = done.iter().map(|r| (r.energy[k] - mean).powi(2)).sum::<f64>() / (n - 1.0);
        mean_energy[k] = mean;
        stderr[k] = (var / n).sqrt();
    }
    Ok(EnsembleStats {
        tau: done[0].tau[..n_samples].to_vec(),
        mean_energy,
        stderr,
        n_paths: done.len(),
        failures,
    })
}

fn linear_slope(t: &[f64], y: &[f64]) -> f64 {
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let (mut num, mut den) = (0.0, 0.0);
    for (a, b) in t.iter().zip(y) {
        num += (a - tm) * (b - ym);
        den += (a - tm) * (a - tm);
    }
    num / den
}

/// Plateau detection on the mean energy.
///
/// The series is cut into consecutive windows of `window_width`; the plateau
/// starts at the earliest window from which every window has a fitted slope
/// below `slope_tol` times its mean. `e_ss_stderr` here is the average
/// standard error over the plateau, an upper bound for the error of the
/// plateau mean. [`plateau_stderr`] refines it from the individual paths.
pub fn steady_state(stats: &EnsembleStats, window_width: f64, slope_tol: f64) -> SteadyStateSummary {
    let none = SteadyStateSummary::not_reached(window_width, slope_tol);
    let Some(start) = plateau_start(&stats.tau, &stats.mean_energy, window_width, slope_tol) else {
        return none;
    };
    let n = (stats.tau.len() - start) as f64;
    SteadyStateSummary {
        reached: true,
        tau_ss: Some(stats.tau[start]),
        e_ss: Some(stats.mean_energy[start..].iter().sum::<f64>() / n),
        e_ss_stderr: Some(stats.stderr[start..].iter().sum::<f64>() / n),
        window_width,
        slope_tol,
    }
}

fn window_len(tau: &[f64], window_width: f64) -> Option<usize> {
    if tau.len() < 2 {
        return None;
    }
    let dtau = tau[1] - tau[0];
    Some(((window_width / dtau).round() as usize).max(2))
}

fn plateau_start(tau: &[f64], e: &[f64], window_width: f64, slope_tol: f64) -> Option<usize> {
    let w = window_len(tau, window_width)?;
    let n_windows = (tau.len() - 1) / w;
    if n_windows < 2 {
        return None;
    }
    let mut start = None;
    for k in (0..n_windows).rev() {
        let r = k * w..=(k + 1) * w;
        let slope = linear_slope(&tau[r.clone()], &e[r.clone()]);
        let mean = e[r].iter().sum::<f64>() / (w + 1) as f64;
        if slope.abs() < slope_tol * mean.abs() {
            start = Some(k * w);
        } else {
            break;
        }
    }
    start
}

/// Standard error of the plateau mean from per-path time averages over
/// samples `start..`.
pub fn plateau_stderr(records: &[TrajectoryRecord], start: usize) -> Option<f64> {
    let avgs: Vec<f64> = records
        .iter()
        .filter(|r| r.status == TrajectoryStatus::Completed && r.len() > start)
        .map(|r| r.energy[start..].iter().sum::<f64>() / (r.len() - start) as f64)
        .collect();
    if avgs.len() < 2 {
        return None;
    }
    let n = avgs.len() as f64;
    let m = avgs.iter().sum::<f64>() / n;
    let var = avgs.iter().map(|a| (a - m).powi(2)).sum::<f64>() / (n - 1.0);
    Some((var / n).sqrt())
}

fn summarize(stats: &EnsembleStats, records: &[TrajectoryRecord], cfg: &SteadyStateConfig) -> SteadyStateSummary {
    let mut s = steady_state(stats, cfg.window_width, cfg.slope_tol);
    if let Some(tau_ss) = s.tau_ss {
        let plateau = stats.tau.iter().position(|&t| t >= tau_ss).unwrap_or(0);
        let len = stats.tau.len() - plateau;
        let keep = ((cfg.tail_fraction * len as f64).round() as usize).clamp(1, len);
        let start = stats.tau.len() - keep;
        s.e_ss = Some(stats.mean_energy[start..].iter().sum::<f64>() / keep as f64);
        s.e_ss_stderr = Some(stats.stderr[start..].iter().sum::<f64>() / keep as f64);
        if let Some(se) = plateau_stderr(records, start) {
            s.e_ss_stderr = Some(se);
        }
    }
    s
}

pub fn run_ensemble(config: &EnsembleConfig) -> Result<EnsembleRun, EnsembleError> {
    if config.paths < 2 {
        return Err(EnsembleError::Config(format!("need at least 2 paths, got {}", config.paths)));
    }
    let ss = config.steady_state;
    if !(ss.window_width > 0.0 && ss.slope_tol > 0.0) {
        return Err(EnsembleError::Config("window_width and slope_tol must be positive".into()));
    }
    if !(ss.tail_fraction > 0.0 && ss.tail_fraction <= 1.0) {
        return Err(EnsembleError::Config(format!(
            "tail_fraction must lie in (0, 1], got {}",
            ss.tail_fraction
        )));
    }
    let setup = TrajectorySetup::new(config.trajectory.clone())?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(config.workers)
        .build()
        .map_err(|e| EnsembleError::Config(format!("worker pool: {e}")))?;
    let mut runners = (0..config.paths as u64)
        .map(|i| TrajectoryRunner::new(setup.clone(), i))
        .collect::<Result<Vec<_>, _>>()?;
    let total = setup.n_samples();
    let stride = config.trajectory.sample_stride;
    let segment = ((ss.window_width / stride).round() as usize).max(1);
    let mut reached = 1;
    while reached < total {
        let target = (reached + segment).min(total);
        pool.install(|| runners.par_iter_mut().for_each(|r| r.advance_to(target)));
        reached = target;
        if ss.early_stop && reached < total {
            let records: Vec<TrajectoryRecord> = runners.iter().map(|r| r.record().clone()).collect();
            if let Ok(stats) = aggregate(&records, reached) {
                let s = steady_state(&stats, ss.window_width, ss.slope_tol);
                if let Some(tau_ss) = s.tau_ss {
                    let now = stats.tau[reached - 1];
                    if now - tau_ss >= ss.persist_windows as f64 * ss.window_width - 1e-9 {
                        break;
                    }
                }
            }
        }
    }
    let records: Vec<TrajectoryRecord> = runners.into_iter().map(|r| r.into_record()).collect();
    let stats = aggregate(&records, reached)?;
    let steady_state = summarize(&stats, &records, &ss);
    let failed = stats.failures as f64 / config.paths as f64;
    Ok(EnsembleRun {
        tau_end: stats.tau[reached - 1],
        invalid: failed > MAX_FAILURE_FRACTION,
        stats,
        records,
        steady_state,
    })
}

/// Per-path metadata stored in the manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathEntry {
    pub index: u64,
    pub seed: u64,
    pub status: TrajectoryStatus,
    pub failure: Option<String>,
    pub n_samples: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordsManifest {
    pub format_version: u32,
    pub n_paths: usize,
    pub failures: usize,
    pub paths: Vec<PathEntry>,
    /// Free-form run description (resolved configuration, tool version, ...).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub run: Option<serde_json::Value>,
}

pub fn path_file(dir: &Path, index: u64) -> PathBuf {
    dir.join("paths").join(format!("{index:04}.csv"))
}

fn write_csv(path: &Path, header: &str, columns: &[&[f64]]) -> Result<(), EnsembleError> {
    let file = fs::File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    let n = columns.first().map_or(0, |c| c.len());
    let mut body = String::with_capacity(n * columns.len() * 24 + header.len() + 1);
    body.push_str(header);
    body.push('\n');
    for k in 0..n {
        for (j, c) in columns.iter().enumerate() {
            if j > 0 {
                body.push(',');
            }
            body.push_str(&format!("{:.16e}", c[k]));
        }
        body.push('\n');
    }
    out.write_all(body.as_bytes()).map_err(io_err(path))?;
    out.flush().map_err(io_err(path))
}

fn read_csv(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>, EnsembleError> {
    let parse = |line: u64, message: String| EnsembleError::Parse {
        path: path.to_path_buf(),
        line,
        message,
    };
    let file = fs::File::open(path).map_err(io_err(path))?;
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).flexible(true).from_reader(file);
    let found = rdr.headers().map_err(|e| parse(1, e.to_string()))?.clone();
    if found.iter().collect::<Vec<_>>() != header {
        return Err(parse(1, format!("expected header `{}`, found `{}`", header.join(","), found.iter().collect::<Vec<_>>().join(","))));
    }
    let mut cols = vec![Vec::new(); header.len()];
    for rec in rdr.records() {
        let rec = rec.map_err(|e| parse(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = rec.position().map_or(0, |p| p.line());
        if rec.len() != header.len() {
            return Err(parse(line, format!("expected {} fields, found {}", header.len(), rec.len())));
        }
        for (j, field) in rec.iter().enumerate() {
            let v: f64 = field
                .parse()
                .map_err(|_| parse(line, format!("field `{}`: cannot parse `{field}` as a number", header[j])))?;
            cols[j].push(v);
        }
    }
    Ok(cols)
}

pub const STATS_HEADER: [&str; 3] = ["tau", "mean_energy", "stderr"];
pub const PATH_HEADER: [&str; 5] = ["tau", "energy", "x", "p", "norm_deficit"];

pub fn write_stats_csv(path: &Path, stats: &EnsembleStats) -> Result<(), EnsembleError> {
    write_csv(path, &STATS_HEADER.join(","), &[&stats.tau, &stats.mean_energy, &stats.stderr])
}

/// Writes `manifest.json`, `stats.csv` and `paths/NNNN.csv` under `dir`.
pub fn write_records(
    dir: &Path,
    stats: &EnsembleStats,
    records: &[TrajectoryRecord],
    run: Option<serde_json::Value>,
) -> Result<(), EnsembleError> {
    let paths_dir = dir.join("paths");
    fs::create_dir_all(&paths_dir).map_err(io_err(&paths_dir))?;
    write_stats_csv(&dir.join("stats.csv"), stats)?;
    for r in records {
        write_csv(
            &path_file(dir, r.index),
            &PATH_HEADER.join(","),
            &[&r.tau, &r.energy, &r.x, &r.p, &r.norm_deficit],
        )?;
    }
    let manifest = RecordsManifest {
        format_version: FORMAT_VERSION,
        n_paths: stats.n_paths,
        failures: stats.failures,
        paths: records
            .iter()
            .map(|r| PathEntry {
                index: r.index,
                seed: r.seed,
                status: r.status,
                failure: r.failure.clone(),
                n_samples: r.len(),
            })
            .collect(),
        run,
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(io_err(&path))
}

pub fn read_manifest(dir: &Path) -> Result<RecordsManifest, EnsembleError> {
    let path = dir.join("manifest.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    let value: serde_json::Value = serde_json::from_str(&text).map_err(|e| EnsembleError::Parse {
        path: path.clone(),
        line: e.line() as u64,
        message: e.to_string(),
    })?;
    let found = value.get("format_version").and_then(|v| v.as_u64()).ok_or_else(|| EnsembleError::Parse {
        path: path.clone(),
        line: 0,
        message: "missing field `format_version`".into(),
    })?;
    if found != FORMAT_VERSION as u64 {
        return Err(EnsembleError::Version {
            path,
            found: found as u32,
        });
    }
    serde_json::from_value(value).map_err(|e| EnsembleError::Parse {
        path,
        line: 0,
        message: e.to_string(),
    })
}

pub fn read_records(dir: &Path) -> Result<(EnsembleStats, Vec<TrajectoryRecord>), EnsembleError> {
    let manifest = read_manifest(dir)?;
    let stats_path = dir.join("stats.csv");
    let mut cols = read_csv(&stats_path, &STATS_HEADER)?.into_iter();
    let stats = EnsembleStats {
        tau: cols.next().unwrap(),
        mean_energy: cols.next().unwrap(),
        stderr: cols.next().unwrap(),
        n_paths: manifest.n_paths,
        failures: manifest.failures,
    };
    let mut records = Vec::with_capacity(manifest.paths.len());
    for entry in &manifest.paths {
        let path = path_file(dir, entry.index);
        let mut c = read_csv(&path, &PATH_HEADER)?.into_iter();
        let rec = TrajectoryRecord {
            index: entry.index,
            seed: entry.seed,
            tau: c.next().unwrap(),
            energy: c.next().unwrap(),
            x: c.next().unwrap(),
            p: c.next().unwrap(),
            norm_deficit: c.next().unwrap(),
            status: entry.status,
            failure: entry.failure.clone(),
        };
        if rec.len() != entry.n_samples {
            return Err(EnsembleError::Parse {
                path,
                line: rec.len() as u64 + 1,
                message: format!("expected {} samples, found {} (truncated file?)", entry.n_samples, rec.len()),
            });
        }
        records.push(rec);
    }
    let completed = records.iter().filter(|r| r.status == TrajectoryStatus::Completed).count();
    if completed != stats.n_paths {
        return Err(EnsembleError::Parse {
            path: dir.join("manifest.json"),
            line: 0,
            message: format!("n_paths = {} but {completed} paths are completed", stats.n_paths),
        });
    }
    Ok((stats, records))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{DynamicsParams, InitialState, MeasurementRep};
    use crate::feedback::ControlLaw;
    use crate::kernels::{tabulate_kernel, KernelConfig};
    use crate::state::GridSpec;

    fn stats_from(tau: Vec<f64>, e: Vec<f64>) -> EnsembleStats {
        let n = tau.len();
        EnsembleStats {
            tau,
            mean_energy: e,
            stderr: vec![0.01; n],
            n_paths: 10,
            failures: 0,
        }
    }

    fn grid_tau(n: usize) -> Vec<f64> {
        (0..n).map(|k| k as f64 * 0.05).collect()
    }

    #[test]
    fn plateau_of_relaxing_series() {
        let tau = grid_tau(1001);
        let e: Vec<f64> = tau.iter().map(|t| 0.5 + 2.0 * (-t).exp()).collect();
        let s = steady_state(&stats_from(tau, e), 2.0, 0.02);
        assert!(s.reached);
        let tau_ss = s.tau_ss.unwrap();
        // The window starting at tau_ss is the first whose slope drops below
        // 2% of the mean: |d/dtau| ~ 2 e^-t vs 0.02 * 0.5 puts it near t = 5.
        assert!((4.0..=8.0).contains(&tau_ss), "tau_ss = {tau_ss}");
        assert!((s.e_ss.unwrap() - 0.5).abs() < 0.01);
    }

    #[test]
    fn growing_series_never_settles() {
        let tau = grid_tau(1001);
        let e: Vec<f64> = tau.iter().map(|t| 1.0 + t).collect();
        assert!(!steady_state(&stats_from(tau, e), 2.0, 0.02).reached);
    }

    #[test]
    fn constant_series_settles_immediately() {
        let tau = grid_tau(201);
        let s = steady_state(&stats_from(tau, vec![1.5; 201]), 2.0, 0.02);
        assert_eq!(s.tau_ss, Some(0.0));
        assert_eq!(s.e_ss, Some(1.5));
    }

    #[test]
    fn tail_fraction_skips_slow_drift() {
        let tau = grid_tau(1001);
        let e: Vec<f64> = tau.iter().map(|t| 0.5 + 0.001 * t).collect();
        let stats = stats_from(tau, e);
        let full = summarize(&stats, &[], &SteadyStateConfig::default());
        assert_eq!(full.tau_ss, Some(0.0));
        assert!((full.e_ss.unwrap() - 0.525).abs() < 1e-9);
        let cfg = SteadyStateConfig {
            tail_fraction: 0.5,
            ..Default::default()
        };
        let tail = summarize(&stats, &[], &cfg);
        assert_eq!(tail.tau_ss, Some(0.0));
        assert!((tail.e_ss.unwrap() - 0.5375).abs() < 1e-4, "{:?}", tail.e_ss);
    }

    fn small_config(alpha: f64, paths: usize) -> EnsembleConfig {
        EnsembleConfig {
            trajectory: TrajectoryConfig {
                grid: GridSpec { n_points: 128, length: 24.0 },
                dynamics: DynamicsParams {
                    alpha_tilde: alpha,
                    eta: 4.0,
                    kernel: std::sync::Arc::new(tabulate_kernel(&KernelConfig::default()).unwrap()),
                    dt: 1e-3,
                    measurement_rep: MeasurementRep::Fourier,
                },
                control: ControlLaw::linear(2.0),
                tau_max: 1.0,
                sample_stride: 0.05,
                initial: InitialState::default(),
                seed: 5,
            },
            paths,
            workers: 1,
            steady_state: SteadyStateConfig {
                early_stop: false,
                ..Default::default()
            },
        }
    }

    #[test]
    fn closed_system_has_no_spread() {
        let run = run_ensemble(&small_config(0.0, 4)).unwrap();
        for (e, s) in run.stats.mean_energy.iter().zip(&run.stats.stderr) {
            assert!(*s < 1e-12);
            assert!(*e <= 2.5 + 1e-9);
        }
        assert_eq!(run.stats.n_paths, 4);
    }

    #[test]
    fn worker_count_does_not_change_results() {
        let mut a = small_config(5.0, 6);
        let one = run_ensemble(&a).unwrap();
        a.workers = 3;
        let three = run_ensemble(&a).unwrap();
        assert_eq!(one.stats, three.stats);
        assert_eq!(one.records, three.records);
    }

    #[test]
    fn records_round_trip() {
        let run = run_ensemble(&small_config(5.0, 3)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_records(dir.path(), &run.stats, &run.records, None).unwrap();
        let (stats, records) = read_records(dir.path()).unwrap();
        assert_eq!(stats, run.stats);
        assert_eq!(records, run.records);
    }

    #[test]
    fn truncated_and_versioned_files_are_rejected() {
        let run = run_ensemble(&small_config(5.0, 2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_records(dir.path(), &run.stats, &run.records, None).unwrap();
        let p = path_file(dir.path(), 1);
        let text = fs::read_to_string(&p).unwrap();
        let cut: String = text.lines().take(5).map(|l| format!("{l}\n")).collect();
        fs::write(&p, cut + "1.0,2.0\n").unwrap();
        let err = read_records(dir.path()).unwrap_err().to_string();
        assert!(err.contains("line 6"), "{err}");

        let m = dir.path().join("manifest.json");
        let text = fs::read_to_string(&m).unwrap();
        fs::write(&m, text.replace("\"format_version\": 1", "\"format_version\": 99")).unwrap();
        assert!(matches!(read_records(dir.path()), Err(EnsembleError::Version { found: 99, .. })));
    }

    #[test]
    fn bad_number_names_the_field() {
        let run = run_ensemble(&small_config(5.0, 2)).unwrap();
        let dir = tempfile::tempdir().unwrap();
        write_records(dir.path(), &run.stats, &run.records, None).unwrap();
        let p = dir.path().join("stats.csv");
        let text = fs::read_to_string(&p).unwrap();
        let mut lines: Vec<String> = text.lines().map(String::from).collect();
        lines[1] = "0.0,abc,0.0".into();
        fs::write(&p, lines.join("\n") + "\n").unwrap();
        let err = read_records(dir.path()).unwrap_err().to_string();
        assert!(err.contains("line 2") && err.contains("mean_energy"), "{err}");
    }
}
