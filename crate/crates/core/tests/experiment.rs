//! Experiment outputs: cardinality, headers, summaries and cleanup.

use std::fs;
use std::path::Path;

use dtfl::config::{parse_config_str, ExperimentSpec};
use dtfl::experiment::{self, read_metrics_csv, read_summary_csv, recompute_summary};

/// A fast experiment on a tiny scenario.
fn tiny(kind: &str, out: &Path, extra: &str) -> ExperimentSpec {
    let text = format!(
        "experiment.kind = {kind}\n\
         experiment.repeats = 1\n\
         scenario.num_nodes = 6\n\
         scenario.num_clusters = 2\n\
         scenario.rounds_max = 6\n\
         scenario.hidden_dim = 8\n\
         scenario.samples_per_node = 40\n\
         scenario.test_samples = 60\n\
         dqn.capacity = 16\n\
         dqn.batch_size = 8\n\
         dqn.hidden = 8\n\
         dqn.max_env_steps = 30\n\
         {extra}"
    );
    let mut spec = parse_config_str(&text).unwrap();
    spec.experiment.output_dir = out.to_path_buf();
    spec
}

fn files_under(dir: &Path) -> Vec<String> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                out.push(path.strip_prefix(dir).unwrap().to_string_lossy().into_owned());
            }
        }
    }
    out.sort();
    out
}

#[test]
fn one_seed_one_point_gives_one_run_and_one_summary() {
    let dir = tempfile::tempdir().unwrap();
    let spec = tiny("fig4", dir.path(), "experiment.p_good_sweep = 0.5\n");
    let report = experiment::run_experiment(&spec).unwrap();
    assert_eq!(report.run_files.len(), 1);
    assert_eq!(report.summary_files.len(), 1);
    let csvs: Vec<String> = files_under(dir.path()).into_iter().filter(|f| f.ends_with(".csv")).collect();
    assert_eq!(csvs.len(), 2, "{csvs:?}");
}

#[test]
fn certain_good_channel_aggregates_only_in_good_state() {
    let dir = tempfile::tempdir().unwrap();
    let spec = tiny("fig4", dir.path(), "experiment.p_good_sweep = 1\n");
    let report = experiment::run_experiment(&spec).unwrap();
    let rows = read_metrics_csv(&report.run_files[0]).unwrap();
    assert!(!rows.is_empty());
    assert_eq!(experiment::good_fraction(&rows), 1.0);
}

#[test]
fn summaries_match_recomputation_from_run_files() {
    let dir = tempfile::tempdir().unwrap();
    let mut spec = tiny("fig8", dir.path(), "experiment.fixed_sweep = 1, 3\n");
    spec.experiment.repeats = 2;
    let report = experiment::run_experiment(&spec).unwrap();
    assert_eq!(report.run_files.len(), 6);
    let emitted = read_summary_csv(&report.summary_files[0]).unwrap();
    let recomputed = recompute_summary(dir.path(), &spec, "fig8_adaptive_vs_fixed").unwrap();
    assert_eq!(emitted, recomputed);
    assert_eq!(emitted, report.summaries);

    // Independent check of one median from the raw rows.
    let finals: Vec<f64> = report
        .run_files
        .iter()
        .filter(|p| p.file_name().unwrap().to_string_lossy().starts_with("async_fixed_3"))
        .map(|p| experiment::final_accuracy(&read_metrics_csv(p).unwrap()))
        .collect();
    let row = emitted
        .iter()
        .find(|r| r.point == "async_fixed_3" && r.metric == "final_accuracy")
        .unwrap();
    assert_eq!(row.summary.median, (finals[0] + finals[1]) / 2.0);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    for dir in [&a, &b] {
        let spec = tiny("fig3", dir.path(), "experiment.detail_csvs = true\n");
        experiment::run_experiment(&spec).unwrap();
    }
    let names = files_under(a.path());
    assert_eq!(names, files_under(b.path()));
    assert!(names.iter().any(|n| n.ends_with("_ledger.csv")));
    assert!(names.iter().any(|n| n.ends_with(".dqn")));
    for name in names {
        assert_eq!(fs::read(a.path().join(&name)).unwrap(), fs::read(b.path().join(&name)).unwrap(), "{name}");
    }
}

#[test]
fn golden_headers() {
    let dir = tempfile::tempdir().unwrap();
    let spec = tiny("run", dir.path(), "experiment.detail_csvs = true\n");
    let report = experiment::run_experiment(&spec).unwrap();
    let header = |path: &Path| fs::read_to_string(path).unwrap().lines().next().unwrap().to_string();
    assert_eq!(
        header(&report.run_files[0]),
        "round,simulated_time,cluster_id,a_i,local_loss,global_accuracy,Q,E_cmp,E_com,channel_state"
    );
    assert_eq!(header(&report.summary_files[0]), "figure,point,metric,count,median,q1,q3");
    let run_dir = report.run_files[0].parent().unwrap();
    let find = |suffix: &str| {
        let name = files_under(run_dir).into_iter().find(|n| n.ends_with(suffix)).unwrap();
        header(&run_dir.join(name))
    };
    assert_eq!(find("_ledger.csv"), "round,curator,node,alpha,beta,b,u,q,T");
    assert_eq!(find("_budget.csv"), "round,cluster_id,Q,consumed,budget_rate,penalty_value");
    assert_eq!(find("_channel.csv"), "round,cluster_id,channel_state,E_cmp_total,E_com_total");

    let spec = tiny("fig2", dir.path(), "");
    let report = experiment::run_experiment(&spec).unwrap();
    assert_eq!(header(&report.run_files[0]), "episode,step,epsilon,td_loss,reward");
}

#[test]
fn failure_removes_partial_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let spec = tiny("fig8", dir.path(), "experiment.fixed_sweep = 1, 3\n");
    // A directory squatting on the last run file's path makes that write fail
    // after earlier files were written.
    let blocker = dir.path().join("fig8_adaptive_vs_fixed/async_fixed_3_seed0_metrics.csv");
    fs::create_dir_all(&blocker).unwrap();
    assert!(experiment::run_experiment(&spec).is_err());
    let left: Vec<String> = files_under(dir.path());
    assert!(left.is_empty(), "{left:?}");
}
