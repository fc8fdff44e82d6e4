use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use phasecool::config::{ConfigError, ResolvedConfig, RunConfig, RunManifest};
use phasecool::dynamics::run_trajectory;
use phasecool::ensemble::{run_ensemble, write_records};
use phasecool::figures::{figure_plan, run_figure, Preset, Scale};
use phasecool::kernels::kernel_moment;
use phasecool::meanfield::{convergence_probe, NoisePrefactor, ProbeTarget};
use phasecool::validate::{run_validation, ValidateOptions};

#[derive(Parser)]
#[command(name = "phasecool", version, about = "Feedback cooling of a continuously imaged trapped atom")]
struct Cli {
    /// JSON run configuration, or the manifest.json of an earlier run to replay it.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed; overrides ensemble.seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; 0 uses every core. Results do not depend on it.
    #[arg(long, global = true, env = "PHASECOOL_WORKERS", default_value_t = 0)]
    workers: usize,
    /// Output directory (or file, for `kernel`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the dimensionless parameters and regime warnings.
    Params,
    /// Tabulate the recoil kernel.
    Kernel,
    /// Integrate a single trajectory.
    Trajectory {
        #[arg(long, default_value_t = 0)]
        index: u64,
    },
    /// Integrate an ensemble and write per-path records.
    Ensemble {
        /// Overrides ensemble.paths.
        #[arg(long)]
        paths: Option<usize>,
        /// Overrides integration.tau_max.
        #[arg(long)]
        tau_max: Option<f64>,
    },
    /// Run the built-in self-checks.
    Validate,
    /// Step-halving convergence probe.
    Meanfield {
        /// mean_field or sse.
        #[arg(long)]
        target: Option<String>,
        /// alpha or sqrt_alpha.
        #[arg(long)]
        prefactor: Option<String>,
    },
    /// Regenerate one of the energy figures.
    Figure {
        /// fig2, fig3 or fig4.
        #[arg(long)]
        preset: String,
        /// full or desk.
        #[arg(long, default_value = "desk")]
        scale: String,
        /// Skip the plot.
        #[arg(long)]
        data_only: bool,
    },
}

enum Failure {
    Validation,
    Config(String),
    Runtime(String),
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.to_string())
    }
}

fn runtime(e: impl std::fmt::Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn snake<T: serde::de::DeserializeOwned>(what: &str, s: &str) -> Result<T, Failure> {
    serde_json::from_value(json!(s)).map_err(|_| Failure::Config(format!("unknown {what} `{s}`")))
}

fn resolve(cli: &Cli) -> Result<ResolvedConfig, Failure> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        config.ensemble.seed = seed;
    }
    if let Command::Ensemble { paths, tau_max } = &cli.command {
        if let Some(p) = paths {
            config.ensemble.paths = *p;
        }
        if let Some(t) = tau_max {
            config.integration.tau_max = *t;
        }
    }
    if let Command::Meanfield { target, prefactor } = &cli.command {
        if let Some(t) = target {
            config.meanfield.target = snake::<ProbeTarget>("target", t)?;
        }
        if let Some(p) = prefactor {
            config.meanfield.prefactor = snake::<NoisePrefactor>("prefactor", p)?;
        }
    }
    let resolved = config.resolve()?;
    for w in &resolved.warnings {
        eprintln!("warning: {w}");
    }
    Ok(resolved)
}

fn out_dir(cli: &Cli, default: &str) -> PathBuf {
    cli.out.clone().unwrap_or_else(|| PathBuf::from(default))
}

fn write_json(path: &Path, value: &serde_json::Value) -> Result<(), Failure> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(runtime)?;
    }
    let text = serde_json::to_string_pretty(value).map_err(runtime)?;
    fs::write(path, text).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))
}

fn run(cli: &Cli) -> Result<(), Failure> {
    match &cli.command {
        Command::Params => {
            let r = resolve(cli)?;
            let warnings: Vec<String> = r.warnings.iter().map(|w| w.to_string()).collect();
            let value = json!({ "physics": r.physics, "derived": r.derived, "warnings": warnings });
            println!("{}", serde_json::to_string_pretty(&value).map_err(runtime)?);
        }
        Command::Kernel => {
            let r = resolve(cli)?;
            let table = r.kernel_table()?;
            let path = out_dir(cli, "kernel.csv");
            let file = fs::File::create(&path).map_err(|e| Failure::Runtime(format!("{}: {e}", path.display())))?;
            table.write_csv(std::io::BufWriter::new(file)).map_err(runtime)?;
            let m0 = kernel_moment(&table, 0).map_err(runtime)?;
            let m2 = kernel_moment(&table, 2).map_err(runtime)?;
            println!("kernel {} points, M0 = {m0:.6e}, M2 = {m2:.6e} -> {}", table.kappa().len(), path.display());
        }
        Command::Trajectory { index } => {
            let r = resolve(cli)?;
            let mut manifest = RunManifest::new("trajectory", &r);
            let rec = run_trajectory(&r.trajectory(r.kernel_table()?), *index).map_err(runtime)?;
            let dir = out_dir(cli, "trajectory");
            manifest.failures = usize::from(rec.failure.is_some());
            manifest.outputs.push("trajectory.json".into());
            manifest.finish();
            write_json(&dir.join("trajectory.json"), &serde_json::to_value(&rec).map_err(runtime)?)?;
            write_json(&dir.join("manifest.json"), &manifest.to_value())?;
            println!(
                "trajectory {index}: {:?}, {} samples, final energy {:.6}",
                rec.status,
                rec.energy.len(),
                rec.energy.last().copied().unwrap_or(f64::NAN)
            );
        }
        Command::Ensemble { .. } => {
            let r = resolve(cli)?;
            let mut manifest = RunManifest::new("ensemble", &r);
            let run = run_ensemble(&r.ensemble(r.kernel_table()?, cli.workers)).map_err(runtime)?;
            let dir = out_dir(cli, "ensemble");
            manifest.failures = run.stats.failures;
            manifest.outputs = vec!["stats.csv".into(), "manifest.json".into(), "paths/".into()];
            manifest.summary = Some(json!({
                "steady_state": run.steady_state,
                "invalid": run.invalid,
                "tau_end": run.tau_end,
            }));
            manifest.finish();
            write_records(&dir, &run.stats, &run.records, Some(manifest.to_value())).map_err(runtime)?;
            let ss = &run.steady_state;
            println!(
                "ensemble: {} paths, {} failures, tau_end {:.2}, E_ss {} +- {} -> {}",
                run.stats.n_paths,
                run.stats.failures,
                run.tau_end,
                ss.e_ss.map_or("n/a".into(), |e| format!("{e:.5}")),
                ss.e_ss_stderr.map_or("n/a".into(), |e| format!("{e:.5}")),
                dir.display()
            );
            if run.invalid {
                return Err(Failure::Runtime("ensemble invalid: too many failed paths".into()));
            }
        }
        Command::Validate => {
            let opts = ValidateOptions {
                seed: cli.seed.unwrap_or(0),
                workers: cli.workers,
            };
            let results = run_validation(&opts);
            for c in &results {
                println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            }
            if let Some(dir) = &cli.out {
                write_json(&dir.join("validation.json"), &serde_json::to_value(&results).map_err(runtime)?)?;
            }
            if results.iter().any(|c| !c.passed) {
                return Err(Failure::Validation);
            }
        }
        Command::Meanfield { .. } => {
            let r = resolve(cli)?;
            let report = convergence_probe(&r.probe(r.kernel_table()?)).map_err(runtime)?;
            let value = serde_json::to_value(&report).map_err(runtime)?;
            if let Some(dir) = &cli.out {
                let mut manifest = RunManifest::new("meanfield", &r);
                manifest.outputs.push("convergence.json".into());
                manifest.summary = Some(value.clone());
                manifest.finish();
                write_json(&dir.join("convergence.json"), &value)?;
                write_json(&dir.join("manifest.json"), &manifest.to_value())?;
            }
            let ratios: Vec<String> = report.ratios.iter().map(|x| format!("{x:.3}")).collect();
            println!("{:?}: ratios [{}], mean {:.3}", report.verdict, ratios.join(", "), report.mean_ratio);
        }
        Command::Figure { preset, scale, data_only } => {
            let preset: Preset = preset.parse().map_err(|e: phasecool::figures::FigureError| Failure::Config(e.to_string()))?;
            let scale: Scale = scale.parse().map_err(|e: phasecool::figures::FigureError| Failure::Config(e.to_string()))?;
            let base = resolve(cli)?;
            let plan = figure_plan(preset, scale, &base.config);
            let dir = out_dir(cli, &preset.to_string());
            let report = run_figure(&plan, &dir, cli.workers, *data_only, |series, summary| {
                let meta = series.config.resolve().map(|r| {
                    let mut m = RunManifest::new(&format!("figure {preset}"), &r);
                    m.failures = summary.failures;
                    m.summary = serde_json::to_value(summary).ok();
                    m.finish();
                    m.to_value()
                });
                meta.unwrap_or(serde_json::Value::Null)
            })
            .map_err(runtime)?;
            for s in &report.series {
                match (&s.error, &s.steady_state) {
                    (Some(e), _) => println!("{}: {e}", s.label),
                    (None, Some(ss)) => println!(
                        "{}: E_ss {} +- {} ({} failures)",
                        s.label,
                        ss.e_ss.map_or("n/a".into(), |e| format!("{e:.5}")),
                        ss.e_ss_stderr.map_or("n/a".into(), |e| format!("{e:.5}")),
                        s.failures
                    ),
                    (None, None) => println!("{}: no summary", s.label),
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if cli.workers > 0 {
        // Ignore the error if a pool already exists.
        let _ = rayon::ThreadPoolBuilder::new().num_threads(cli.workers).build_global();
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Validation) => ExitCode::from(1),
        Err(Failure::Config(m)) => {
            eprintln!("config error: {m}");
            ExitCode::from(2)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(3)
        }
    }
}
