//! Experiment orchestration: figure sweeps, per-run CSVs and summaries.
//!
//! Every run writes one metrics CSV. Summaries are computed by reading those
//! files back, so they can always be regenerated from the raw runs.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{ExperimentKind, ExperimentSpec, Mode, SimConfig};
use crate::dqn::{self, TraceRow};
use crate::energy::ChannelKind;
use crate::error::{Error, Result};
use crate::federation::{self, BudgetRow, ClusterEnv, FederationOutcome, LedgerRow, MetricsRow};
use crate::scenario::init_scenario;

pub const METRICS_HEADER: [&str; 10] = [
    "round",
    "simulated_time",
    "cluster_id",
    "a_i",
    "local_loss",
    "global_accuracy",
    "Q",
    "E_cmp",
    "E_com",
    "channel_state",
];
pub const TRACE_HEADER: [&str; 5] = ["episode", "step", "epsilon", "td_loss", "reward"];
pub const SUMMARY_HEADER: [&str; 7] = ["figure", "point", "metric", "count", "median", "q1", "q3"];
const LEDGER_HEADER: [&str; 9] = ["round", "curator", "node", "alpha", "beta", "b", "u", "q", "T"];
const BUDGET_HEADER: [&str; 6] = ["round", "cluster_id", "Q", "consumed", "budget_rate", "penalty_value"];
const CHANNEL_HEADER: [&str; 5] = ["round", "cluster_id", "channel_state", "E_cmp_total", "E_com_total"];

/// Learning steps at which the smoothed TD loss is compared.
pub const TD_EARLY: usize = 200;
pub const TD_LATE: usize = 1200;
pub const TD_WINDOW: usize = 100;

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            line: 0,
            msg: format!("{}: {other:?}", path.display()),
        },
    }
}

fn write_csv(path: &Path, header: &[&str], records: impl Iterator<Item = Vec<String>>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for r in records {
        w.write_record(&r).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn read_csv(path: &Path, header: &[&str]) -> Result<Vec<csv::StringRecord>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let got = r.headers().map_err(|e| csv_err(path, e))?.clone();
    if got.iter().ne(header.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            msg: format!("{}: unexpected header", path.display()),
        });
    }
    r.records().map(|rec| rec.map_err(|e| csv_err(path, e))).collect()
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
    rec.get(i).and_then(|s| s.parse().ok()).ok_or_else(|| Error::Parse {
        line,
        msg: format!("bad value in column {i}"),
    })
}

pub fn write_metrics_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    write_csv(
        path,
        &METRICS_HEADER,
        rows.iter().map(|r| {
            vec![
                r.round.to_string(),
                r.simulated_time.to_string(),
                r.cluster_id.to_string(),
                r.a.to_string(),
                r.local_loss.to_string(),
                r.global_accuracy.to_string(),
                r.q.to_string(),
                r.e_cmp.to_string(),
                r.e_com.to_string(),
                r.channel.name().to_string(),
            ]
        }),
    )
}

pub fn read_metrics_csv(path: &Path) -> Result<Vec<MetricsRow>> {
    read_csv(path, &METRICS_HEADER)?
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let line = i + 2;
            let channel = rec.get(9).and_then(ChannelKind::parse).ok_or_else(|| Error::Parse {
                line,
                msg: "bad channel_state".into(),
            })?;
            Ok(MetricsRow {
                round: field(rec, 0, line)?,
                simulated_time: field(rec, 1, line)?,
                cluster_id: field(rec, 2, line)?,
                a: field(rec, 3, line)?,
                local_loss: field(rec, 4, line)?,
                global_accuracy: field(rec, 5, line)?,
                q: field(rec, 6, line)?,
                e_cmp: field(rec, 7, line)?,
                e_com: field(rec, 8, line)?,
                channel,
            })
        })
        .collect()
}

pub fn write_trace_csv(path: &Path, trace: &[TraceRow]) -> Result<()> {
    write_csv(
        path,
        &TRACE_HEADER,
        trace.iter().map(|r| {
            vec![
                r.episode.to_string(),
                r.step.to_string(),
                r.epsilon.to_string(),
                r.td_loss.map(|v| v.to_string()).unwrap_or_default(),
                r.reward.to_string(),
            ]
        }),
    )
}

pub fn read_trace_csv(path: &Path) -> Result<Vec<TraceRow>> {
    read_csv(path, &TRACE_HEADER)?
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let line = i + 2;
            let td = match rec.get(3) {
                Some("") | None => None,
                Some(_) => Some(field(rec, 3, line)?),
            };
            Ok(TraceRow {
                episode: field(rec, 0, line)?,
                step: field(rec, 1, line)?,
                epsilon: field(rec, 2, line)?,
                td_loss: td,
                reward: field(rec, 4, line)?,
            })
        })
        .collect()
}

fn write_ledger_csv(path: &Path, rows: &[LedgerRow]) -> Result<()> {
    write_csv(
        path,
        &LEDGER_HEADER,
        rows.iter().map(|r| {
            let e = &r.entry;
            vec![
                r.round.to_string(),
                r.curator.to_string(),
                e.node.to_string(),
                e.alpha.to_string(),
                e.beta.to_string(),
                e.belief.to_string(),
                e.failure_prob.to_string(),
                e.quality.to_string(),
                e.reputation.to_string(),
            ]
        }),
    )
}

fn write_budget_csv(path: &Path, rows: &[BudgetRow]) -> Result<()> {
    write_csv(
        path,
        &BUDGET_HEADER,
        rows.iter().map(|r| {
            vec![
                r.round.to_string(),
                r.cluster_id.to_string(),
                r.q.to_string(),
                r.consumed.to_string(),
                r.budget_rate.to_string(),
                r.penalty_value.to_string(),
            ]
        }),
    )
}

fn write_channel_csv(path: &Path, rows: &[MetricsRow]) -> Result<()> {
    write_csv(
        path,
        &CHANNEL_HEADER,
        rows.iter().map(|r| {
            vec![
                r.round.to_string(),
                r.cluster_id.to_string(),
                r.channel.name().to_string(),
                r.e_cmp.to_string(),
                r.e_com.to_string(),
            ]
        }),
    )
}

/// Quantile with linear interpolation between order statistics.
pub fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = p * (sorted.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    if lo == hi || sorted[hi] == sorted[lo] {
        return sorted[lo];
    }
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub count: usize,
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
}

pub fn summarize(values: &[f64]) -> Summary {
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    Summary {
        count: v.len(),
        median: quantile(&v, 0.5),
        q1: quantile(&v, 0.25),
        q3: quantile(&v, 0.75),
    }
}

/// Global accuracy at the end of the run.
pub fn final_accuracy(rows: &[MetricsRow]) -> f64 {
    rows.last().map_or(f64::NAN, |r| r.global_accuracy)
}

/// Accounted energy over all rounds.
pub fn total_energy(rows: &[MetricsRow]) -> f64 {
    rows.iter().map(|r| r.e_cmp + r.e_com).sum()
}

/// Fraction of aggregations uploaded in the good channel state.
pub fn good_fraction(rows: &[MetricsRow]) -> f64 {
    if rows.is_empty() {
        return f64::NAN;
    }
    rows.iter().filter(|r| r.channel == ChannelKind::Good).count() as f64 / rows.len() as f64
}

/// First simulated time with global accuracy at least `target`; infinite if never.
pub fn time_to_accuracy(rows: &[MetricsRow], target: f64) -> f64 {
    rows.iter()
        .find(|r| r.global_accuracy >= target)
        .map_or(f64::INFINITY, |r| r.simulated_time)
}

/// Mean TD loss over the `window` learning steps ending at learning step `step`.
pub fn smoothed_td_loss(trace: &[TraceRow], step: usize, window: usize) -> f64 {
    let losses: Vec<f64> = trace.iter().filter_map(|r| r.td_loss).collect();
    if step < window || step > losses.len() {
        return f64::NAN;
    }
    losses[step - window..step].iter().sum::<f64>() / window as f64
}

/// One emitted summary line.
#[derive(Debug, Clone, PartialEq)]
pub struct SummaryRow {
    pub figure: String,
    pub point: String,
    pub metric: String,
    pub summary: Summary,
}

fn write_summary_csv(path: &Path, rows: &[SummaryRow]) -> Result<()> {
    write_csv(
        path,
        &SUMMARY_HEADER,
        rows.iter().map(|r| {
            vec![
                r.figure.clone(),
                r.point.clone(),
                r.metric.clone(),
                r.summary.count.to_string(),
                r.summary.median.to_string(),
                r.summary.q1.to_string(),
                r.summary.q3.to_string(),
            ]
        }),
    )
}

pub fn read_summary_csv(path: &Path) -> Result<Vec<SummaryRow>> {
    read_csv(path, &SUMMARY_HEADER)?
        .iter()
        .enumerate()
        .map(|(i, rec)| {
            let line = i + 2;
            Ok(SummaryRow {
                figure: rec.get(0).unwrap_or_default().to_string(),
                point: rec.get(1).unwrap_or_default().to_string(),
                metric: rec.get(2).unwrap_or_default().to_string(),
                summary: Summary {
                    count: field(rec, 3, line)?,
                    median: field(rec, 4, line)?,
                    q1: field(rec, 5, line)?,
                    q3: field(rec, 6, line)?,
                },
            })
        })
        .collect()
}

/// What a job produces and which metrics summarise it.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum JobKind {
    /// Federation run; metrics read from the metrics CSV.
    Federation,
    /// Agent training on cluster 0; metrics read from the trace CSV.
    DqnTrace,
}

#[derive(Debug, Clone)]
struct Job {
    figure: &'static str,
    point: String,
    seed: u64,
    sim: SimConfig,
    mode: Mode,
    kind: JobKind,
}

enum JobOutput {
    Federation(FederationOutcome),
    Trace(Vec<TraceRow>),
}

fn point_label(prefix: &str, value: impl std::fmt::Display) -> String {
    format!("{prefix}{value}")
}

fn seeds(spec: &ExperimentSpec) -> Vec<u64> {
    (0..spec.experiment.repeats as u64).map(|r| spec.sim.scenario.seed + r).collect()
}

fn jobs_for(kind: ExperimentKind, spec: &ExperimentSpec) -> Vec<Job> {
    let base = &spec.sim;
    let mut jobs = Vec::new();
    let mut push = |figure: &'static str, point: String, sim: SimConfig, mode: Mode, kind: JobKind| {
        for seed in seeds(spec) {
            let mut sim = sim.clone();
            sim.scenario.seed = seed;
            jobs.push(Job {
                figure,
                point: point.clone(),
                seed,
                sim,
                mode,
                kind,
            });
        }
    };
    match kind {
        ExperimentKind::Run => {
            let mode = base.federation.run_mode();
            push("run", mode.label(), base.clone(), mode, JobKind::Federation);
        }
        ExperimentKind::Fig2 => push("fig2_dqn_loss", "cluster0".into(), base.clone(), Mode::AsyncDqn, JobKind::DqnTrace),
        ExperimentKind::Fig3 => {
            for calibrated in [true, false] {
                let mut sim = base.clone();
                sim.federation.calibrated = calibrated;
                let label = if calibrated { "calibrated" } else { "uncalibrated" };
                push("fig3_dt_calibration", label.into(), sim, Mode::AsyncDqn, JobKind::Federation);
            }
        }
        ExperimentKind::Fig4 => {
            for &p in &spec.experiment.p_good_sweep {
                let mut sim = base.clone();
                sim.scenario.num_clusters = 1;
                sim.channel.p_good = p;
                sim.channel.fixed_state = None;
                push("fig4_channel_aggregations", point_label("p_good_", p), sim, Mode::AsyncDqn, JobKind::Federation);
            }
        }
        ExperimentKind::Fig5 => {
            for state in ChannelKind::ALL {
                let mut sim = base.clone();
                sim.channel.fixed_state = Some(state);
                push("fig5_energy", state.name().into(), sim, Mode::AsyncDqn, JobKind::Federation);
            }
        }
        ExperimentKind::Fig6 | ExperimentKind::Fig7 => {
            let figure = if kind == ExperimentKind::Fig6 {
                "fig6_accuracy_vs_clusters"
            } else {
                "fig7_time_to_accuracy"
            };
            for &k in &spec.experiment.cluster_sweep {
                let mut sim = base.clone();
                sim.scenario.num_clusters = k;
                push(figure, point_label("k_", k), sim, Mode::AsyncDqn, JobKind::Federation);
            }
        }
        ExperimentKind::Fig8 => {
            push("fig8_adaptive_vs_fixed", "async_dqn".into(), base.clone(), Mode::AsyncDqn, JobKind::Federation);
            for &t in &spec.experiment.fixed_sweep {
                let mode = Mode::AsyncFixed(t);
                push("fig8_adaptive_vs_fixed", mode.label(), base.clone(), mode, JobKind::Federation);
            }
        }
        ExperimentKind::All => {
            for k in [
                ExperimentKind::Fig2,
                ExperimentKind::Fig3,
                ExperimentKind::Fig4,
                ExperimentKind::Fig5,
                ExperimentKind::Fig6,
                ExperimentKind::Fig7,
                ExperimentKind::Fig8,
            ] {
                jobs.extend(jobs_for(k, spec));
            }
        }
    }
    jobs
}

fn run_job(job: &Job) -> Result<JobOutput> {
    let scenario = init_scenario(&job.sim.scenario)?;
    match job.kind {
        JobKind::Federation => Ok(JobOutput::Federation(federation::run_federation(
            &scenario,
            &job.sim,
            job.mode,
            job.sim.rounds(),
            None,
        )?)),
        JobKind::DqnTrace => {
            let k = job.sim.scenario.num_clusters;
            let clusters = federation::cluster_nodes(&scenario, k, job.sim.federation.calibrated)?;
            let mut env = ClusterEnv::new(&scenario, &job.sim, 0, clusters[0].clone(), federation::budget_share(&job.sim, k));
            let out = dqn::run_dqn_training(&mut env, &job.sim.dqn, scenario.config.seed, 0)?;
            Ok(JobOutput::Trace(out.trace))
        }
    }
}

fn metrics_for(figure: &str, rows: &[MetricsRow], target: f64) -> Vec<(&'static str, f64)> {
    let mut m = vec![("final_accuracy", final_accuracy(rows)), ("total_energy", total_energy(rows))];
    match figure {
        "fig4_channel_aggregations" => {
            m.push(("good_fraction", good_fraction(rows)));
            m.push(("aggregations", rows.len() as f64));
        }
        "fig7_time_to_accuracy" | "run" => m.push(("time_to_accuracy", time_to_accuracy(rows, target))),
        _ => {}
    }
    m
}

fn trace_metrics(trace: &[TraceRow]) -> Vec<(&'static str, f64)> {
    let early = smoothed_td_loss(trace, TD_EARLY, TD_WINDOW);
    let late = smoothed_td_loss(trace, TD_LATE, TD_WINDOW);
    vec![
        ("td_loss_early", early),
        ("td_loss_late", late),
        ("td_loss_ratio", late / early),
        ("learning_steps", trace.iter().filter(|r| r.td_loss.is_some()).count() as f64),
    ]
}

/// Files written by [`run_experiment`] and the summary rows.
#[derive(Debug, Clone, Default)]
pub struct ExperimentReport {
    pub run_files: Vec<PathBuf>,
    pub summary_files: Vec<PathBuf>,
    pub summaries: Vec<SummaryRow>,
}

/// Runs every job of the spec, writes per-run CSVs and one summary CSV per
/// figure. On failure every file written so far is removed.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentReport> {
    spec.validate()?;
    let mut written = Vec::new();
    let result = run_experiment_inner(spec, &mut written);
    if result.is_err() {
        for f in written.iter().rev() {
            let _ = fs::remove_file(f);
        }
    }
    result
}

fn run_file_name(job: &Job) -> String {
    let suffix = if job.kind == JobKind::DqnTrace { "trace" } else { "metrics" };
    format!("{}_seed{}_{suffix}.csv", job.point, job.seed)
}

fn run_experiment_inner(spec: &ExperimentSpec, written: &mut Vec<PathBuf>) -> Result<ExperimentReport> {
    let out_dir = &spec.experiment.output_dir;
    let jobs = jobs_for(spec.experiment.kind, spec);
    let outputs: Vec<Result<JobOutput>> = jobs.par_iter().map(run_job).collect();

    let mut report = ExperimentReport::default();
    let mut figures: Vec<&'static str> = Vec::new();
    for (job, output) in jobs.iter().zip(outputs) {
        let output = output?;
        let dir = out_dir.join(job.figure);
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        if !figures.contains(&job.figure) {
            figures.push(job.figure);
        }
        let path = dir.join(run_file_name(job));
        written.push(path.clone());
        match &output {
            JobOutput::Federation(out) => {
                write_metrics_csv(&path, &out.rows)?;
                if spec.experiment.detail_csvs {
                    let stem = format!("{}_seed{}", job.point, job.seed);
                    for (name, res) in [
                        ("ledger", dir.join(format!("{stem}_ledger.csv"))),
                        ("budget", dir.join(format!("{stem}_budget.csv"))),
                        ("channel", dir.join(format!("{stem}_channel.csv"))),
                    ] {
                        written.push(res.clone());
                        match name {
                            "ledger" => write_ledger_csv(&res, &out.ledger)?,
                            "budget" => write_budget_csv(&res, &out.budget)?,
                            _ => write_channel_csv(&res, &out.rows)?,
                        }
                    }
                    for (c, agent) in out.agents.iter().enumerate() {
                        let wpath = dir.join(format!("{stem}_agent{c}.dqn"));
                        written.push(wpath.clone());
                        dqn::weights::save(&agent.eval, &wpath)?;
                    }
                }
            }
            JobOutput::Trace(trace) => write_trace_csv(&path, trace)?,
        }
        report.run_files.push(path);
    }

    for figure in figures {
        let rows = summarize_figure(out_dir, figure, &jobs, spec.experiment.accuracy_target)?;
        let path = out_dir.join(figure).join("summary.csv");
        written.push(path.clone());
        write_summary_csv(&path, &rows)?;
        report.summary_files.push(path);
        report.summaries.extend(rows);
    }
    Ok(report)
}

/// Recomputes a figure's summary from its run CSVs.
fn summarize_figure(out_dir: &Path, figure: &str, jobs: &[Job], target: f64) -> Result<Vec<SummaryRow>> {
    let mut points: Vec<&str> = Vec::new();
    for j in jobs.iter().filter(|j| j.figure == figure) {
        if !points.contains(&j.point.as_str()) {
            points.push(&j.point);
        }
    }
    let mut out = Vec::new();
    for point in points {
        let mut per_metric: Vec<(&'static str, Vec<f64>)> = Vec::new();
        for job in jobs.iter().filter(|j| j.figure == figure && j.point == point) {
            let path = out_dir.join(figure).join(run_file_name(job));
            let metrics = match job.kind {
                JobKind::Federation => metrics_for(figure, &read_metrics_csv(&path)?, target),
                JobKind::DqnTrace => trace_metrics(&read_trace_csv(&path)?),
            };
            for (name, v) in metrics {
                match per_metric.iter_mut().find(|(n, _)| *n == name) {
                    Some((_, vals)) => vals.push(v),
                    None => per_metric.push((name, vec![v])),
                }
            }
        }
        for (metric, values) in per_metric {
            out.push(SummaryRow {
                figure: figure.to_string(),
                point: point.to_string(),
                metric: metric.to_string(),
                summary: summarize(&values),
            });
        }
    }
    Ok(out)
}

/// Summary rows of `figure` recomputed from the run CSVs in `out_dir`.
pub fn recompute_summary(out_dir: &Path, spec: &ExperimentSpec, figure: &str) -> Result<Vec<SummaryRow>> {
    let jobs = jobs_for(spec.experiment.kind, spec);
    summarize_figure(out_dir, figure, &jobs, spec.experiment.accuracy_target)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_interpolate() {
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5), 2.5);
        assert_eq!(quantile(&v, 0.25), 1.75);
        assert_eq!(quantile(&v, 0.75), 3.25);
        assert_eq!(quantile(&[5.0], 0.3), 5.0);
        let s = summarize(&[3.0, 1.0, 2.0]);
        assert_eq!((s.count, s.median, s.q1, s.q3), (3, 2.0, 1.5, 2.5));
        assert_eq!(summarize(&[1.0, f64::INFINITY, f64::INFINITY]).median, f64::INFINITY);
    }

    fn row(round: usize, acc: f64, channel: ChannelKind) -> MetricsRow {
        MetricsRow {
            round,
            simulated_time: round as f64 * 1.5,
            cluster_id: 0,
            a: 2,
            local_loss: 0.5,
            global_accuracy: acc,
            q: 0.0,
            e_cmp: 1.0,
            e_com: 0.25,
            channel,
        }
    }

    #[test]
    fn run_metrics() {
        let rows = vec![
            row(0, 0.5, ChannelKind::Good),
            row(1, 0.86, ChannelKind::Bad),
            row(2, 0.9, ChannelKind::Good),
            row(3, 0.88, ChannelKind::Medium),
        ];
        assert_eq!(final_accuracy(&rows), 0.88);
        assert_eq!(total_energy(&rows), 5.0);
        assert_eq!(good_fraction(&rows), 0.5);
        assert_eq!(time_to_accuracy(&rows, 0.85), 1.5);
        assert_eq!(time_to_accuracy(&rows, 0.95), f64::INFINITY);
    }

    #[test]
    fn csv_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.csv");
        let rows = vec![row(0, 0.1, ChannelKind::Medium), row(1, 1.0 / 3.0, ChannelKind::Bad)];
        write_metrics_csv(&path, &rows).unwrap();
        assert_eq!(read_metrics_csv(&path).unwrap(), rows);
        let text = fs::read_to_string(&path).unwrap();
        assert_eq!(
            text.lines().next().unwrap(),
            "round,simulated_time,cluster_id,a_i,local_loss,global_accuracy,Q,E_cmp,E_com,channel_state"
        );

        let trace = vec![
            TraceRow {
                episode: 0,
                step: 0,
                epsilon: 0.1,
                td_loss: None,
                reward: -1.5,
            },
            TraceRow {
                episode: 0,
                step: 1,
                epsilon: 0.1,
                td_loss: Some(0.25),
                reward: 2.0,
            },
        ];
        let tpath = dir.path().join("t.csv");
        write_trace_csv(&tpath, &trace).unwrap();
        assert_eq!(read_trace_csv(&tpath).unwrap(), trace);
        let text = fs::read_to_string(&tpath).unwrap();
        assert_eq!(text.lines().next().unwrap(), "episode,step,epsilon,td_loss,reward");
        assert_eq!(text.lines().nth(1).unwrap(), "0,0,0.1,,-1.5");
    }

    #[test]
    fn smoothing_window() {
        let trace: Vec<TraceRow> = (0..300)
            .map(|i| TraceRow {
                episode: 0,
                step: i,
                epsilon: 0.5,
                td_loss: (i >= 50).then(|| (i - 50) as f64),
                reward: 0.0,
            })
            .collect();
        // Learning steps 100..200 carry losses 100..199.
        assert_eq!(smoothed_td_loss(&trace, 200, 100), 149.5);
        assert!(smoothed_td_loss(&trace, 251, 100).is_nan());
    }
}
