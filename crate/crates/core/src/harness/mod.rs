//! Experiment orchestration: configuration, independent repeats, and the
//! CSV/JSON outputs behind every table and figure.

pub mod config;
pub mod output;
pub mod sw_twin;

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::exec::{map_indexed, thread_count, Execution};
use crate::linear::{benchmark_run, bench_data, collect_repeats, smcmc_config, BenchOutput, LinearBenchConfig};
use crate::model::StateVector;
use crate::rng::repeat_rng;
use crate::smcmc::{run_filter, ChainDiagnostics, FilterStep};
use config::{ExperimentKind, RunConfig};
use output::{
    emit_histogram, emit_snapshot, track_rows, write_json, write_rows, write_series_csv, DiagRow, HistBin, SeriesRow,
    TableRow, TimingRow,
};
use sw_twin::{run_sw_experiment, SwOutcome, SwSummary};

/// Mean absolute error of one method at one time, split by observed and
/// unobserved coordinates.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartialErrorRow {
    pub method: String,
    pub d: usize,
    pub k: usize,
    pub observed_vs_kf: f64,
    pub unobserved_vs_kf: f64,
    pub observed_vs_truth: f64,
    pub unobserved_vs_truth: f64,
}

/// What a run produced. Everything except `timing` is a deterministic
/// function of the configuration.
#[derive(Clone, Debug)]
pub struct RunReport {
    pub experiment: ExperimentKind,
    pub out: PathBuf,
    pub files: Vec<PathBuf>,
    pub table: Vec<TableRow>,
    pub partial_errors: Vec<PartialErrorRow>,
    pub sw: Option<SwSummary>,
    /// Filter means averaged over repeats (shallow-water runs), `k = 0..=n`.
    pub means: Vec<StateVector>,
    /// Averaged predicted drifter tracks (unknown-location runs).
    pub predicted_tracks: Option<Vec<Vec<crate::drifters::Position>>>,
    pub histogram: Vec<HistBin>,
    pub timing: Vec<TimingRow>,
}

struct Writer {
    dir: PathBuf,
    files: Vec<PathBuf>,
}

impl Writer {
    fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir)?;
        Ok(Writer {
            dir: dir.to_path_buf(),
            files: Vec::new(),
        })
    }

    fn path(&mut self, name: &str) -> Result<PathBuf> {
        let p = self.dir.join(name);
        if let Some(parent) = p.parent() {
            fs::create_dir_all(parent)?;
        }
        self.files.push(p.clone());
        Ok(p)
    }

    fn rows<T: Serialize>(&mut self, name: &str, rows: &[T]) -> Result<()> {
        let p = self.path(name)?;
        write_rows(&p, rows)
    }

    fn series(&mut self, name: &str, series: &[StateVector], times: &[f64]) -> Result<()> {
        let rows: Vec<SeriesRow> = series
            .iter()
            .enumerate()
            .map(|(k, v)| SeriesRow {
                k,
                t: times[k],
                values: v.clone(),
            })
            .collect();
        let p = self.path(name)?;
        write_series_csv(&p, &rows)
    }
}

/// Applies the run-level seed and repeat count to the benchmark settings.
/// Data come from the data seed; SMCMC repeats `m` use `seed + m`.
pub fn linear_settings(cfg: &RunConfig) -> Result<LinearBenchConfig> {
    let mut lin = cfg.linear()?.clone();
    lin.seed = cfg.data_seed();
    if let Some(s) = lin.smcmc.as_mut() {
        s.repeats = cfg.repeats;
        s.repeat_seed = Some(cfg.seed);
    }
    Ok(lin)
}

fn mean_abs(a: &DVector<f64>, b: &DVector<f64>, mask: &[bool], want: bool) -> f64 {
    let (sum, count) = a
        .iter()
        .zip(b.iter())
        .zip(mask)
        .filter(|(_, &m)| m == want)
        .fold((0.0, 0usize), |(s, c), ((x, y), _)| (s + (x - y).abs(), c + 1));
    if count == 0 {
        0.0
    } else {
        sum / count as f64
    }
}

/// Per-time errors on observed and unobserved coordinates for every
/// method of a benchmark output.
pub fn partial_errors(lin: &LinearBenchConfig, out: &BenchOutput) -> Result<Vec<PartialErrorRow>> {
    let mut rows = Vec::new();
    for s in &out.series {
        let mask = lin.model(s.d)?.selector.is_observed();
        let mut all = vec![("KF".to_string(), &s.kf)];
        all.extend(s.methods.iter().map(|(m, v)| (m.clone(), v)));
        for (method, means) in all {
            for (k, m) in means.iter().enumerate() {
                rows.push(PartialErrorRow {
                    method: method.clone(),
                    d: s.d,
                    k: k + 1,
                    observed_vs_kf: mean_abs(m, &s.kf[k], &mask, true),
                    unobserved_vs_kf: mean_abs(m, &s.kf[k], &mask, false),
                    observed_vs_truth: mean_abs(m, &s.truth[k], &mask, true),
                    unobserved_vs_truth: mean_abs(m, &s.truth[k], &mask, false),
                });
            }
        }
    }
    Ok(rows)
}

fn run_linear(cfg: &RunConfig, w: &mut Writer) -> Result<RunReport> {
    let lin = linear_settings(cfg)?;
    let out = benchmark_run(&lin, cfg.execution)?;
    let table: Vec<TableRow> = out
        .rows
        .iter()
        .map(|r| TableRow {
            method: r.method.clone(),
            d: r.d,
            size: r.size.clone(),
            repeats: r.repeats,
            fraction: r.fraction,
        })
        .collect();
    let timing: Vec<TimingRow> = out
        .rows
        .iter()
        .map(|r| TimingRow {
            phase: format!("{} d={}", r.method, r.d),
            seconds: r.seconds,
            threads: r.threads,
        })
        .collect();
    w.rows("table.csv", &table)?;
    let mut histogram = Vec::new();
    for s in &out.series {
        let times: Vec<f64> = (1..=s.kf.len()).map(|k| k as f64).collect();
        let shifted = |v: &[StateVector]| -> Vec<SeriesRow> {
            v.iter()
                .enumerate()
                .map(|(i, z)| SeriesRow {
                    k: i + 1,
                    t: times[i],
                    values: z.clone(),
                })
                .collect()
        };
        let p = w.path(&format!("d{}/truth.csv", s.d))?;
        write_series_csv(&p, &shifted(&s.truth))?;
        let p = w.path(&format!("d{}/kf.csv", s.d))?;
        write_series_csv(&p, &shifted(&s.kf))?;
        for (method, means) in &s.methods {
            let p = w.path(&format!("d{}/{}.csv", s.d, method.to_lowercase()))?;
            write_series_csv(&p, &shifted(means))?;
            let errors: Vec<f64> = means
                .iter()
                .zip(&s.kf)
                .flat_map(|(a, b)| (a - b).abs().iter().copied().collect::<Vec<_>>())
                .collect();
            let hist = emit_histogram(&errors, 40)?;
            w.rows(&format!("d{}/hist_{}.csv", s.d, method.to_lowercase()), &hist)?;
            if method == "SMCMC" {
                histogram = hist;
            }
        }
    }
    let partial = if cfg.experiment == ExperimentKind::LinearPartial {
        let rows = partial_errors(&lin, &out)?;
        w.rows("partial_errors.csv", &rows)?;
        rows
    } else {
        Vec::new()
    };
    w.rows("timing.csv", &timing)?;
    Ok(RunReport {
        experiment: cfg.experiment,
        out: cfg.out.clone(),
        files: Vec::new(),
        table,
        partial_errors: partial,
        sw: None,
        means: Vec::new(),
        predicted_tracks: None,
        histogram,
        timing,
    })
}

fn diag_rows(repeat: usize, steps: &[FilterStep]) -> Vec<DiagRow> {
    steps
        .iter()
        .map(|s| diag_row(repeat, s.k, &s.diagnostics))
        .collect()
}

fn diag_row(repeat: usize, k: usize, d: &ChainDiagnostics) -> DiagRow {
    DiagRow {
        repeat,
        k,
        acceptance: d.acceptance_rate,
        mean_lag1: d.mean_lag1(),
        unique_ancestors: d.unique_ancestors,
        flow_evaluations: d.flow_evaluations,
        index_moves: d.index_moves,
        zero_acceptance: d.zero_acceptance,
    }
}

fn write_sw(cfg: &RunConfig, outcome: &SwOutcome, w: &mut Writer) -> Result<(SwSummary, Vec<HistBin>)> {
    let sw = cfg.sw()?;
    let times = outcome.setup.model.times().times().to_vec();
    let grid = outcome.setup.grid;
    w.series("filter_mean.csv", &outcome.mean, &times)?;
    w.series("free_run.csv", &outcome.free_run, &times)?;
    if let Some(t) = &outcome.data.truth {
        w.series("truth.csv", t, &times)?;
    }
    if let Some(r) = &outcome.prior_reference {
        w.series("reference.csv", r, &times)?;
    }
    for (m, r) in outcome.repeats.iter().enumerate() {
        let mut means = vec![outcome.setup.z0.clone()];
        means.extend(r.steps.iter().map(|s| s.mean.clone()));
        w.series(&format!("repeats/repeat_{m:03}.csv"), &means, &times)?;
    }
    let n = times.len() - 1;
    let true_kind = if outcome.data.truth.is_some() { "true" } else { "observed" };
    let mut tracks = track_rows(true_kind, &outcome.data.tracks, n);
    if let Some(p) = &outcome.predicted_tracks {
        tracks.extend(track_rows("predicted", p, n));
    }
    w.rows("tracks.csv", &tracks)?;
    let (_, reference) = outcome.reference();
    for &k in &sw.snapshots {
        let rows = emit_snapshot(&grid, &reference[k], &outcome.mean[k])?;
        w.rows(&format!("snapshot_k{k:04}.csv"), &rows)?;
        let mut t = track_rows(true_kind, &outcome.data.tracks, k);
        if let Some(p) = &outcome.predicted_tracks {
            t.extend(track_rows("predicted", p, k));
        }
        w.rows(&format!("snapshot_tracks_k{k:04}.csv"), &t)?;
    }
    let diag: Vec<DiagRow> = outcome
        .repeats
        .iter()
        .enumerate()
        .flat_map(|(m, r)| diag_rows(m, &r.steps))
        .collect();
    w.rows("diagnostics.csv", &diag)?;
    let hist = emit_histogram(&outcome.abs_errors(), sw.histogram_bins)?;
    w.rows("errors_histogram.csv", &hist)?;
    let summary = outcome.summary(cfg.experiment, sw, cfg.seed);
    let p = w.path("summary.json")?;
    write_json(&p, &summary)?;
    Ok((summary, hist))
}

fn run_sw(cfg: &RunConfig, w: &mut Writer) -> Result<RunReport> {
    let start = Instant::now();
    let outcome = run_sw_experiment(cfg.experiment, cfg.sw()?, cfg.seed, cfg.data_seed(), cfg.repeats, cfg.execution)?;
    let threads = if cfg.execution.is_parallel() { thread_count() } else { 1 };
    let timing = vec![TimingRow {
        phase: format!("{} M={}", cfg.experiment.name(), cfg.repeats),
        seconds: start.elapsed().as_secs_f64(),
        threads,
    }];
    let (summary, histogram) = write_sw(cfg, &outcome, w)?;
    w.rows("timing.csv", &timing)?;
    info!(
        "{}: {:.1}% within threshold, mean acceptance {:.3}",
        cfg.experiment.name(),
        100.0 * summary.fraction_within,
        summary.mean_acceptance
    );
    Ok(RunReport {
        experiment: cfg.experiment,
        out: cfg.out.clone(),
        files: Vec::new(),
        table: Vec::new(),
        partial_errors: Vec::new(),
        sw: Some(summary),
        means: outcome.mean,
        predicted_tracks: outcome.predicted_tracks,
        histogram,
        timing,
    })
}

/// Runs the configured experiment and writes its outputs under `cfg.out`.
pub fn run_experiment(cfg: &RunConfig) -> Result<RunReport> {
    cfg.validate()?;
    let mut w = Writer::new(&cfg.out)?;
    let mut report = if cfg.experiment.is_linear() {
        run_linear(cfg, &mut w)?
    } else {
        run_sw(cfg, &mut w)?
    };
    report.files = w.files;
    Ok(report)
}

/// Chain health over one short run per repeat.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnoseSummary {
    pub experiment: String,
    pub steps: usize,
    pub mean_acceptance: f64,
    pub min_acceptance: f64,
    pub zero_acceptance_steps: usize,
    pub mean_lag1: f64,
    pub mean_unique_ancestors: f64,
    pub mean_flow_evaluations: f64,
}

fn summarize(experiment: ExperimentKind, rows: &[DiagRow]) -> DiagnoseSummary {
    let n = rows.len().max(1) as f64;
    let mean = |f: &dyn Fn(&DiagRow) -> f64| rows.iter().map(f).sum::<f64>() / n;
    DiagnoseSummary {
        experiment: experiment.name().into(),
        steps: rows.len(),
        mean_acceptance: mean(&|r| r.acceptance),
        min_acceptance: rows.iter().map(|r| r.acceptance).fold(f64::INFINITY, f64::min),
        zero_acceptance_steps: rows.iter().filter(|r| r.zero_acceptance).count(),
        mean_lag1: mean(&|r| r.mean_lag1),
        mean_unique_ancestors: mean(&|r| r.unique_ancestors as f64),
        mean_flow_evaluations: mean(&|r| r.flow_evaluations as f64),
    }
}

/// Runs only the SMCMC chains of an experiment and writes
/// `diagnostics.csv` and `diagnose.json` (acceptance, lag-1
/// autocorrelation, ancestor use, flow evaluations per step).
pub fn diagnose(cfg: &RunConfig) -> Result<DiagnoseSummary> {
    cfg.validate()?;
    let mut w = Writer::new(&cfg.out)?;
    let rows = if cfg.experiment.is_linear() {
        let lin = linear_settings(cfg)?;
        let spec = lin
            .smcmc
            .clone()
            .ok_or_else(|| crate::Error::InvalidConfig("diagnose needs an [linear.smcmc] section".into()))?;
        let mut rows = Vec::new();
        for &d in &lin.dims {
            let (model, z0, tr) = bench_data(&lin, d)?;
            let (rwm, _) = smcmc_config(&lin, &spec, &model, &z0, &tr.observations[0])?;
            let runs = map_indexed(cfg.execution, cfg.repeats, |m| {
                run_filter(&model, &model, &z0, &tr.observations, &rwm, &mut repeat_rng(cfg.seed, m))
            });
            for (m, steps) in collect_repeats(runs)?.iter().enumerate() {
                rows.extend(diag_rows(m, steps));
            }
        }
        rows
    } else {
        let outcome = run_sw_experiment(cfg.experiment, cfg.sw()?, cfg.seed, cfg.data_seed(), cfg.repeats, Execution::Sequential)?;
        outcome
            .repeats
            .iter()
            .enumerate()
            .flat_map(|(m, r)| diag_rows(m, &r.steps))
            .collect()
    };
    w.rows("diagnostics.csv", &rows)?;
    let summary = summarize(cfg.experiment, &rows);
    let p = w.path("diagnose.json")?;
    write_json(&p, &summary)?;
    Ok(summary)
}
