//! Presets for the energy-versus-time figures and their SVG rendering.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use plotters::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, PhysicsBlock, RunConfig};
use crate::ensemble::{run_ensemble, write_records, EnsembleError, EnsembleRun, SteadyStateSummary};
use crate::feedback::ControlLaw;
use crate::state::GridSpec;

/// Horizon floor for figure runs.
pub const MIN_TAU_MAX: f64 = 50.0;
/// `tau_max >= RELAXATION_SCALE / alpha_tilde`, so weak measurements get time
/// to settle.
pub const RELAXATION_SCALE: f64 = 400.0;
/// Trailing fraction of the plateau averaged for figure summaries.
pub const FIGURE_TAIL_FRACTION: f64 = 0.5;
/// Steady-state window for figure runs. Strong measurement makes the mean
/// energy wander by 10-20% over several tau, which shorter windows read as
/// drift.
pub const FIGURE_WINDOW_WIDTH: f64 = 20.0;

#[derive(Debug, Error)]
pub enum FigureError {
    #[error("unknown preset `{0}` (expected fig2, fig3 or fig4)")]
    UnknownPreset(String),
    #[error("unknown scale `{0}` (expected full or desk)")]
    UnknownScale(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Ensemble(#[from] EnsembleError),
    #[error("plot: {0}")]
    Plot(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    Fig2,
    Fig3,
    Fig4,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scale {
    Full,
    Desk,
}

impl FromStr for Preset {
    type Err = FigureError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "fig2" => Ok(Preset::Fig2),
            "fig3" => Ok(Preset::Fig3),
            "fig4" => Ok(Preset::Fig4),
            other => Err(FigureError::UnknownPreset(other.into())),
        }
    }
}

impl FromStr for Scale {
    type Err = FigureError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "full" => Ok(Scale::Full),
            "desk" => Ok(Scale::Desk),
            other => Err(FigureError::UnknownScale(other.into())),
        }
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Preset::Fig2 => "fig2",
            Preset::Fig3 => "fig3",
            Preset::Fig4 => "fig4",
        })
    }
}

/// One curve of a figure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Series {
    pub label: String,
    /// Directory name under the figure output.
    pub slug: String,
    pub config: RunConfig,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigurePlan {
    pub preset: Preset,
    pub scale: Scale,
    pub series: Vec<Series>,
}

fn horizon(alpha_tilde: f64) -> f64 {
    MIN_TAU_MAX.max(RELAXATION_SCALE / alpha_tilde)
}

fn series_config(base: &RunConfig, alpha_tilde: f64, eta: f64, control: ControlLaw, paths: usize) -> RunConfig {
    let mut c = base.clone();
    c.physics = Some(PhysicsBlock {
        alpha_tilde,
        eta,
        w: 3000.0,
    });
    c.physical = None;
    c.control = control;
    c.ensemble.paths = paths;
    c.integration.tau_max = horizon(alpha_tilde);
    c.initial_state.center = 2.0;
    c.steady_state.early_stop = false;
    c.steady_state.tail_fraction = FIGURE_TAIL_FRACTION;
    c.steady_state.window_width = FIGURE_WINDOW_WIDTH;
    c
}

/// Builds the series of a preset. `base` supplies everything the preset
/// does not fix (seed, grid, step, kernel settings).
pub fn figure_plan(preset: Preset, scale: Scale, base: &RunConfig) -> FigurePlan {
    let desk = scale == Scale::Desk;
    let series = match preset {
        Preset::Fig2 => {
            let alphas: &[f64] = if desk { &[2.0, 20.0, 160.0] } else { &[2.0, 10.0, 20.0, 40.0, 80.0, 160.0] };
            let paths = if desk { 100 } else { 500 };
            alphas
                .iter()
                .map(|&a| Series {
                    label: format!("alpha = {a}"),
                    slug: format!("alpha_{a}"),
                    config: series_config(base, a, 6.0, ControlLaw::linear(2.0), paths),
                })
                .collect()
        }
        Preset::Fig3 => {
            let etas: &[f64] = if desk { &[4.0, 8.0] } else { &[4.0, 6.0, 8.0, 10.0] };
            let paths = if desk { 100 } else { 500 };
            etas.iter()
                .map(|&e| Series {
                    label: format!("eta = {e}"),
                    slug: format!("eta_{e}"),
                    config: series_config(base, 10.0, e, ControlLaw::linear(2.0), paths),
                })
                .collect()
        }
        Preset::Fig4 => {
            let paths = if desk { 50 } else { 100 };
            let sets: [(&str, &str, [f64; 4]); 3] = [
                ("{x}", "x1", [2.0, 0.0, 0.0, 0.0]),
                ("{x, x^2}", "x2", [2.0, 2.0, 0.0, 0.0]),
                ("{x, x^2, x^3}", "x3", [2.0, 2.0, 2.0, 0.0]),
            ];
            sets.iter()
                .map(|(label, slug, c)| {
                    let law = ControlLaw::from_coefficients(*c).expect("preset coefficients are valid");
                    let mut config = series_config(base, 2.0, 8.0, law, paths);
                    // Nonlinear feedback transiently softens the trap.
                    config.grid = GridSpec {
                        n_points: 2 * base.grid.n_points,
                        length: 2.0 * base.grid.length,
                    };
                    Series {
                        label: label.to_string(),
                        slug: slug.to_string(),
                        config,
                    }
                })
                .collect()
        }
    };
    FigurePlan { preset, scale, series }
}

/// Outcome of one series.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeriesSummary {
    pub label: String,
    pub slug: String,
    pub paths: usize,
    pub failures: usize,
    pub invalid: bool,
    pub tau_end: f64,
    pub steady_state: Option<SteadyStateSummary>,
    /// Why the series has no statistics, if it has none.
    pub error: Option<String>,
}

pub struct SeriesOutcome {
    pub summary: SeriesSummary,
    pub run: Option<EnsembleRun>,
}

/// Runs one series. A series whose paths all fail is reported, not raised.
pub fn run_series(series: &Series, workers: usize) -> Result<SeriesOutcome, FigureError> {
    let resolved = series.config.resolve()?;
    let kernel = resolved.kernel_table()?;
    let cfg = resolved.ensemble(kernel, workers);
    let mut summary = SeriesSummary {
        label: series.label.clone(),
        slug: series.slug.clone(),
        paths: cfg.paths,
        failures: cfg.paths,
        invalid: true,
        tau_end: 0.0,
        steady_state: None,
        error: None,
    };
    match run_ensemble(&cfg) {
        Ok(run) => {
            summary.failures = run.stats.failures;
            summary.invalid = run.invalid;
            summary.tau_end = run.tau_end;
            summary.steady_state = Some(run.steady_state.clone());
            Ok(SeriesOutcome {
                summary,
                run: Some(run),
            })
        }
        Err(e @ EnsembleError::TooFewCompleted { .. }) => {
            summary.error = Some(e.to_string());
            Ok(SeriesOutcome { summary, run: None })
        }
        Err(e) => Err(e.into()),
    }
}

/// A curve to draw: `(tau, mean, stderr)`.
pub struct Curve<'a> {
    pub label: &'a str,
    pub tau: &'a [f64],
    pub mean: &'a [f64],
    pub stderr: &'a [f64],
}

/// Mean energy against time with dotted one-standard-error bands.
pub fn plot_energy(path: &Path, title: &str, curves: &[Curve<'_>]) -> Result<(), FigureError> {
    let plot_err = |e: &dyn fmt::Display| FigureError::Plot(e.to_string());
    let t_max = curves.iter().filter_map(|c| c.tau.last().copied()).fold(1.0, f64::max);
    let e_max = curves
        .iter()
        .flat_map(|c| c.mean.iter().zip(c.stderr).map(|(m, s)| m + s))
        .filter(|v| v.is_finite())
        .fold(1.0, f64::max);
    let root = SVGBackend::new(path, (900, 600)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| plot_err(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 22))
        .margin(15)
        .x_label_area_size(45)
        .y_label_area_size(60)
        .build_cartesian_2d(0.0..t_max, 0.0..e_max * 1.05)
        .map_err(|e| plot_err(&e))?;
    chart
        .configure_mesh()
        .x_desc("tau")
        .y_desc("mean energy")
        .draw()
        .map_err(|e| plot_err(&e))?;
    for (i, c) in curves.iter().enumerate() {
        let color = Palette99::pick(i).to_rgba();
        let line = c.tau.iter().zip(c.mean).map(|(t, m)| (*t, *m));
        chart
            .draw_series(LineSeries::new(line, color.stroke_width(2)))
            .map_err(|e| plot_err(&e))?
            .label(c.label)
            .legend(move |(x, y)| PathElement::new([(x, y), (x + 20, y)], color.stroke_width(2)));
        for sign in [-1.0, 1.0] {
            let band: Vec<(f64, f64)> = c
                .tau
                .iter()
                .zip(c.mean.iter().zip(c.stderr))
                .map(|(t, (m, s))| (*t, m + sign * s))
                .collect();
            chart
                .draw_series(DottedLineSeries::new(band, 0, 4, move |p| Circle::new(p, 1, color.filled())))
                .map_err(|e| plot_err(&e))?;
        }
    }
    chart
        .configure_series_labels()
        .background_style(WHITE.mix(0.8))
        .border_style(BLACK)
        .draw()
        .map_err(|e| plot_err(&e))?;
    root.present().map_err(|e| plot_err(&e))?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureReport {
    pub preset: Preset,
    pub scale: Scale,
    pub series: Vec<SeriesSummary>,
    pub plot: Option<String>,
}

/// Runs every series of `plan` into `out`, one subdirectory per series, and
/// draws `energy.svg` unless `data_only`.
pub fn run_figure(
    plan: &FigurePlan,
    out: &Path,
    workers: usize,
    data_only: bool,
    run_meta: impl Fn(&Series, &SeriesSummary) -> serde_json::Value,
) -> Result<FigureReport, FigureError> {
    fs::create_dir_all(out).map_err(|source| FigureError::Io {
        path: out.to_path_buf(),
        source,
    })?;
    let mut summaries = Vec::new();
    let mut runs = Vec::new();
    for series in &plan.series {
        let outcome = run_series(series, workers)?;
        if let Some(run) = &outcome.run {
            let meta = run_meta(series, &outcome.summary);
            write_records(&out.join(&series.slug), &run.stats, &run.records, Some(meta))?;
        }
        summaries.push(outcome.summary);
        runs.push(outcome.run);
    }
    let plot = if data_only {
        None
    } else {
        let curves: Vec<Curve<'_>> = plan
            .series
            .iter()
            .zip(&runs)
            .filter_map(|(s, r)| {
                r.as_ref().map(|r| Curve {
                    label: &s.label,
                    tau: &r.stats.tau,
                    mean: &r.stats.mean_energy,
                    stderr: &r.stats.stderr,
                })
            })
            .collect();
        let path = out.join("energy.svg");
        plot_energy(&path, &format!("{} ({:?})", plan.preset, plan.scale), &curves)?;
        Some(path.display().to_string())
    };
    let report = FigureReport {
        preset: plan.preset,
        scale: plan.scale,
        series: summaries,
        plot,
    };
    let summary_path = out.join("summary.json");
    let text = serde_json::to_string_pretty(&report).expect("report is plain data");
    fs::write(&summary_path, text).map_err(|source| FigureError::Io {
        path: summary_path,
        source,
    })?;
    Ok(report)
}
