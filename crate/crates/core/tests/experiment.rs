use rayon::ThreadPoolBuilder;
use sxmc::experiment::{
    aggregate, generate_dataset, mean_stderr, run_scenario, runtime_probe, write_metrics_csv, write_runtime_csv,
    Method, ScenarioSpec,
};
use sxmc::io::{read_bundle, write_bundle};

fn small(base: ScenarioSpec, grid: Vec<f64>, trials: usize) -> ScenarioSpec {
    ScenarioSpec { grid, trials, ..base }
}

#[test]
fn records_do_not_depend_on_thread_count() {
    let spec = small(ScenarioSpec::scenario3(), vec![3.0, 2.0], 2);
    let run = |threads| {
        let pool = ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let recs = pool.install(|| run_scenario(&spec).unwrap());
        let mut buf = Vec::new();
        write_metrics_csv(&mut buf, &recs).unwrap();
        (recs, buf)
    };
    let (recs, a) = run(1);
    let (_, b) = run(4);
    assert_eq!(a, b);
    let order: Vec<(f64, usize, Method)> = recs.iter().map(|r| (r.value, r.trial, r.method)).collect();
    let mut sorted = order.clone();
    sorted.sort_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)).then(x.2.cmp(&y.2)));
    assert_eq!(order, sorted);
}

#[test]
fn aggregates_recompute_from_records() {
    let spec = small(ScenarioSpec::scenario1(), vec![0.9], 3);
    let recs = run_scenario(&spec).unwrap();
    let agg = aggregate(&recs);
    for a in &agg {
        let xs: Vec<f64> = recs
            .iter()
            .filter(|r| r.method.to_string() == a.method && r.value == a.value)
            .map(|r| r.nmse)
            .collect();
        let (mean, se) = mean_stderr(&xs);
        assert_eq!((a.mean_nmse, a.stderr_nmse, a.trials), (mean, se, 3));
    }
    assert!(recs.iter().all(|r| r.nmse >= 0.0 && r.rnmse >= 0.0));
}

#[test]
fn trial_failures_are_recorded_not_raised() {
    let spec = small(ScenarioSpec::scenario1(), vec![0.0, 0.9], 1);
    let recs = run_scenario(&spec).unwrap();
    assert_eq!(recs.len(), 4);
    assert!(recs.iter().filter(|r| r.value == 0.0).all(|r| r.failed()));
    assert!(recs.iter().filter(|r| r.value == 0.9).all(|r| !r.failed()));
    let agg = aggregate(&recs);
    assert_eq!(agg.iter().filter(|a| a.failures == 1).count(), 2);
}

#[test]
fn dataset_bundle_round_trips() {
    let spec = ScenarioSpec { noisy: true, ..ScenarioSpec::scenario3() };
    let bundle = generate_dataset(&spec, 4, 1).unwrap();
    assert_eq!(bundle.manifest.counts, vec![9, 9, 9, 10, 13, 14]);
    let dir = tempfile::tempdir().unwrap();
    write_bundle(dir.path(), &bundle).unwrap();
    let back = read_bundle(dir.path()).unwrap();
    assert_eq!(back.observed, bundle.observed);
    assert_eq!(back.pattern, bundle.pattern);
    assert_eq!(back.bprime, bundle.bprime);
    assert_eq!(back.truth.m, bundle.truth.m);
    assert_eq!(back.manifest, bundle.manifest);
    assert_eq!(generate_dataset(&spec, 4, 1).unwrap(), bundle);
}

#[test]
fn runtime_probe_reports_one_column_per_method() {
    let spec = small(ScenarioSpec::scenario1(), vec![0.5, 0.9], 2);
    let rows = runtime_probe(&spec).unwrap();
    assert_eq!(rows.len(), 4);
    let mut buf = Vec::new();
    write_runtime_csv(&mut buf, &rows).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(
        text.lines().next().unwrap(),
        "value,trial,proposedSecondsPerIter,baselineSecondsPerIter"
    );
    for r in &rows {
        assert!(r.proposed_seconds_per_iter.unwrap() > 0.0);
        assert!(r.baseline_seconds_per_iter.unwrap() > 0.0);
    }
    let only = ScenarioSpec { run_baseline: false, ..spec };
    assert!(runtime_probe(&only).unwrap().iter().all(|r| r.baseline_seconds_per_iter.is_none()));
}

#[test]
fn runtime_is_repeatable_within_a_factor_of_two() {
    let spec = small(ScenarioSpec::scenario1(), vec![0.6], 4);
    let total = |spec: &ScenarioSpec| -> f64 {
        runtime_probe(spec)
            .unwrap()
            .iter()
            .map(|r| r.proposed_seconds_per_iter.unwrap() + r.baseline_seconds_per_iter.unwrap())
            .sum()
    };
    let (a, b) = (total(&spec), total(&spec));
    assert!(a / b <= 2.0 && b / a <= 2.0, "{a} vs {b}");
}
