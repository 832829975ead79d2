mod common;

use std::fs;
use std::path::Path;

use common::{interval_dataset, small_train_config, synthetic};
use ivreg::harness::{
    aggregate, apply_scale, ensemble_reduced_intervals, evaluate_mae, load_csv, load_csv_auto,
    load_uci_abalone, read_aggregate_csv, read_results_csv, render_svg, rescale_targets,
    run_and_write, run_experiment, split, std_dev, write_interval_csv, write_labeled_csv,
    CsvSchema, ExperimentConfig, Split, SplitSpec, AGGREGATE_COLUMNS, RESULTS_COLUMNS,
};
use ivreg::intervalgen::IntervalGenConfig;
use ivreg::model::{Mlp, MlpConfig};
use ivreg::objectives::train;
use ivreg::{
    Error, Interval, IntervalDataset, IntervalSample, LossFamily, ObjectiveKind, ObjectiveSpec,
    TrainedModel,
};
use proptest::prelude::*;

fn write(dir: &Path, name: &str, body: &str) -> std::path::PathBuf {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path
}

/// A trained-model wrapper around a network whose output is the constant `c`.
fn constant_model(dim: usize, c: f64) -> TrainedModel {
    let mut mlp = Mlp::zeros(MlpConfig::standard(dim)).unwrap();
    *mlp.layers.last_mut().unwrap().bias.last_mut().unwrap() = c;
    TrainedModel {
        model: mlp,
        objective: ObjectiveSpec::new(ObjectiveKind::Projection),
        config: small_train_config(dim, 1, 1, 0),
        loss_trace: vec![0.0],
        mae_trace: None,
    }
}

fn labeled_points(ys: &[f64]) -> IntervalDataset {
    let xs: Vec<Vec<f64>> = (0..ys.len()).map(|i| vec![i as f64, 1.0]).collect();
    IntervalDataset::from_exact(&xs, ys).unwrap()
}

#[test]
fn load_labeled_csv() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(dir.path(), "a.csv", "f1,f2,y\n1,2,3\n4,5,6\n7,8,9\n");
    let ds = load_csv(&path, &CsvSchema::labeled()).unwrap();
    assert_eq!(ds.len(), 3);
    assert_eq!(ds.feature_dim(), 2);
    assert_eq!(ds.samples()[1].features, vec![4.0, 5.0]);
    assert_eq!(ds.samples()[2].true_y, Some(9.0));
    assert_eq!(ds.samples()[2].interval, Interval::point(9.0).unwrap());
}

#[test]
fn load_interval_csv_with_and_without_truth() {
    let dir = tempfile::tempdir().unwrap();
    let with = write(dir.path(), "i.csv", "f1,l,u,y\n0.5,1,3,2\n1.5,-1,0,-0.5\n");
    let ds = load_csv_auto(&with).unwrap();
    assert_eq!(ds.samples()[0].interval, Interval::new(1.0, 3.0).unwrap());
    assert!(ds.has_truth());
    let without = write(dir.path(), "j.csv", "f1,l,u\n0.5,1,3\n");
    let ds = load_csv_auto(&without).unwrap();
    assert!(!ds.has_truth());
}

#[test]
fn load_errors_name_the_problem() {
    let dir = tempfile::tempdir().unwrap();
    let swapped = write(dir.path(), "s.csv", "f1,l,u\n0,1,2\n0,5,4\n");
    match load_csv(&swapped, &CsvSchema::interval()) {
        Err(Error::Data { row, .. }) => assert_eq!(row, 2),
        other => panic!("expected a row error, got {other:?}"),
    }
    let text = write(dir.path(), "t.csv", "f1,y\n1,2\nabc,3\n");
    match load_csv(&text, &CsvSchema::labeled()) {
        Err(Error::Data { row, .. }) => assert_eq!(row, 2),
        other => panic!("expected a row error, got {other:?}"),
    }
    let missing = write(dir.path(), "m.csv", "f1,f2\n1,2\n");
    let err = load_csv(&missing, &CsvSchema::labeled()).unwrap_err();
    assert!(err.to_string().contains('y'), "{err}");
    let empty = write(dir.path(), "e.csv", "f1,y\n");
    let err = load_csv(&empty, &CsvSchema::labeled()).unwrap_err();
    assert!(err.to_string().contains("empty dataset"), "{err}");
    let nan = write(dir.path(), "n.csv", "f1,y\n1,NaN\n");
    assert!(load_csv(&nan, &CsvSchema::labeled()).is_err());
    assert!(load_csv(dir.path().join("absent.csv"), &CsvSchema::labeled()).is_err());
}

#[test]
fn csv_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let ds = interval_dataset(25, 3, 2.0, 1);
    let path = dir.path().join("out.csv");
    write_interval_csv(&ds, &path).unwrap();
    assert_eq!(load_csv_auto(&path).unwrap(), ds);
    let labeled = labeled_points(&[1.0, -2.5, 3.25]);
    write_labeled_csv(&labeled, &path).unwrap();
    assert_eq!(load_csv_auto(&path).unwrap(), labeled);
}

#[test]
fn abalone_raw_format() {
    let dir = tempfile::tempdir().unwrap();
    let path = write(
        dir.path(),
        "abalone.data",
        "M,0.455,0.365,0.095,0.514,0.2245,0.101,0.15,15\nI,0.33,0.255,0.08,0.205,0.0895,0.0395,0.055,7\n",
    );
    let ds = load_uci_abalone(&path).unwrap();
    assert_eq!(ds.feature_dim(), 10);
    assert_eq!(ds.true_targets().unwrap(), vec![15.0, 7.0]);
    assert_eq!(&ds.samples()[0].features[..3], &[1.0, 0.0, 0.0]);
    assert_eq!(&ds.samples()[1].features[..3], &[0.0, 0.0, 1.0]);
}

#[test]
fn rescale_examples() {
    // population std of {0, 100} is 50
    let train_ds = labeled_points(&[0.0, 100.0]);
    let (out, params) = rescale_targets(&train_ds, &[], 100.0).unwrap();
    assert_eq!(params.scale, 2.0);
    assert_eq!(out[0].true_targets().unwrap(), vec![0.0, 200.0]);

    let already = labeled_points(&[-100.0, 100.0]);
    let (out, params) = rescale_targets(&already, &[], 100.0).unwrap();
    assert_eq!(params.scale, 1.0);
    assert_eq!(out[0], already);

    let y = 3.0;
    let iv = IntervalDataset::new(vec![IntervalSample::new(
        vec![0.0],
        Interval::new(y - 1.0, y + 2.0).unwrap(),
        Some(y),
    )
    .unwrap()])
    .unwrap();
    let scaled = apply_scale(&iv, 2.0).unwrap();
    let s = &scaled.samples()[0];
    assert_eq!(
        s.interval,
        Interval::new(2.0 * y - 2.0, 2.0 * y + 4.0).unwrap()
    );
    assert!(s.interval.contains(s.true_y.unwrap()));

    assert!(rescale_targets(&labeled_points(&[4.0, 4.0]), &[], 100.0).is_err());
}

#[test]
fn rescale_uses_training_split_only() {
    let train_ds = labeled_points(&[1.0, 2.0, 3.0, 4.0]);
    let other = labeled_points(&[100.0, -300.0]);
    let (out, params) = rescale_targets(&train_ds, &[&other], 100.0).unwrap();
    assert!((std_dev(&out[0].true_targets().unwrap()) - 100.0).abs() <= 1e-6 * 100.0);
    assert_eq!(
        out[1].true_targets().unwrap(),
        vec![100.0 * params.scale, -300.0 * params.scale]
    );
}

#[test]
fn split_examples() {
    let ds = labeled_points(&(0..10).map(f64::from).collect::<Vec<_>>());
    let spec = SplitSpec::default();
    let (a, b, c) = split(&ds, &spec).unwrap();
    assert_eq!((a.len(), b.len(), c.len()), (7, 1, 2));
    assert_eq!(split(&ds, &spec).unwrap(), (a, b, c));
    let bad = SplitSpec {
        train_frac: 0.5,
        val_frac: 0.5,
        test_frac: 0.0,
        seed: 0,
    };
    assert!(split(&ds, &bad).is_err());
    assert!(split(&labeled_points(&[1.0, 2.0]), &spec).is_err());
}

#[test]
fn mae_examples() {
    let ds = labeled_points(&[1.0, -1.0]);
    assert_eq!(evaluate_mae(&constant_model(2, 0.0), &ds).unwrap(), 1.0);
    let exact = labeled_points(&[2.5, 2.5, 2.5]);
    assert_eq!(evaluate_mae(&constant_model(2, 2.5), &exact).unwrap(), 0.0);
    let no_truth = IntervalDataset::new(vec![IntervalSample::new(
        vec![0.0, 0.0],
        Interval::new(0.0, 1.0).unwrap(),
        None,
    )
    .unwrap()])
    .unwrap();
    assert!(evaluate_mae(&constant_model(2, 0.0), &no_truth).is_err());
}

#[test]
fn ensemble_examples() {
    let xs = vec![vec![0.0, 1.0], vec![2.0, -1.0], vec![5.0, 5.0]];
    let (ivs, width) =
        ensemble_reduced_intervals(&[constant_model(2, 0.0), constant_model(2, 3.0)], &xs).unwrap();
    assert_eq!(width, 3.0);
    assert!(ivs.iter().all(|iv| *iv == Interval::new(0.0, 3.0).unwrap()));

    let ds = interval_dataset(40, 2, 1.0, 3);
    let t = train(
        &ObjectiveSpec::new(ObjectiveKind::Projection),
        &small_train_config(2, 2, 16, 1),
        &ds,
    )
    .unwrap();
    let (_, width) = ensemble_reduced_intervals(&[t.clone(), t.clone()], &ds.features()).unwrap();
    assert_eq!(width, 0.0);

    assert!(ensemble_reduced_intervals(std::slice::from_ref(&t), &xs).is_err());
    assert!(ensemble_reduced_intervals(&[t.clone(), t], &[vec![1.0]]).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn split_is_a_partition(n in 3usize..300, seed in any::<u64>(), fr in (0.2f64..0.8, 0.05f64..0.4)) {
        let (train_frac, val_frac) = fr;
        prop_assume!(train_frac + val_frac < 0.95);
        let spec = SplitSpec { train_frac, val_frac, test_frac: 1.0 - train_frac - val_frac, seed };
        let Ok(idx) = spec.indices(n) else { return Ok(()) };
        let mut all: Vec<usize> = idx.iter().flatten().copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
        prop_assert_eq!(idx[0].len(), (n as f64 * train_frac + 1e-9).floor() as usize);
        prop_assert_eq!(spec.indices(n).unwrap(), idx);
    }

    #[test]
    fn rescale_is_invertible(ys in prop::collection::vec(-1e4f64..1e4, 2..50), target in 1.0f64..500.0) {
        let ds = labeled_points(&ys);
        prop_assume!(std_dev(&ys) > 1e-6);
        let (out, params) = rescale_targets(&ds, &[], target).unwrap();
        for (y, s) in ys.iter().zip(out[0].samples()) {
            let back = s.true_y.unwrap() / params.scale;
            prop_assert!((back - y).abs() <= 1e-12 * y.abs().max(1e-300));
        }
        prop_assert!((std_dev(&out[0].true_targets().unwrap()) - target).abs() <= 1e-6 * target);
    }
}

fn experiment_dir() -> (tempfile::TempDir, ExperimentConfig) {
    let dir = tempfile::tempdir().unwrap();
    let (xs, ys) = synthetic(90, 3, 42);
    let data = labeled_points(&ys);
    let data = IntervalDataset::new(
        data.into_samples()
            .into_iter()
            .zip(xs)
            .map(|(s, x)| IntervalSample { features: x, ..s })
            .collect(),
    )
    .unwrap();
    let path = dir.path().join("synth.csv");
    write_labeled_csv(&data, &path).unwrap();
    let mut train = small_train_config(0, 3, 16, 0);
    train.model.layer_sizes[0] = 0;
    let cfg = ExperimentConfig {
        dataset: path,
        dataset_name: None,
        split: SplitSpec::default(),
        interval_gen: IntervalGenConfig::uniform(2.0, 0),
        objectives: vec![ObjectiveSpec::new(ObjectiveKind::Projection)],
        train,
        seeds: vec![1],
        lipschitz_grid: None,
        output_dir: dir.path().join("out"),
        rescale_target_std: None,
        hyper_search: None,
        record_runtime: false,
    };
    (dir, cfg)
}

#[test]
fn one_objective_one_seed_gives_three_rows() {
    let (_dir, cfg) = experiment_dir();
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.rows.len(), 3);
    let splits: Vec<Split> = report.rows.iter().map(|r| r.split).collect();
    assert_eq!(splits, vec![Split::Train, Split::Val, Split::Test]);
    assert!(report.rows.iter().all(|r| r.mae.unwrap() >= 0.0));
    assert_eq!(report.failures, 0);
    assert_eq!(report.rows[0].dataset, "synth");
}

#[test]
fn two_seeds_give_nonzero_standard_error() {
    let (_dir, mut cfg) = experiment_dir();
    cfg.seeds = vec![1, 2];
    let report = run_experiment(&cfg).unwrap();
    let test: Vec<f64> = report
        .rows
        .iter()
        .filter(|r| r.split == Split::Test)
        .map(|r| r.mae.unwrap())
        .collect();
    assert_ne!(test[0], test[1]);
    let agg = report
        .aggregates
        .iter()
        .find(|a| a.split == Split::Test)
        .unwrap();
    assert!(agg.mae_ste > 0.0);
}

#[test]
fn aggregates_match_definition() {
    let (_dir, mut cfg) = experiment_dir();
    cfg.seeds = vec![3, 1, 2];
    cfg.objectives
        .push(ObjectiveSpec::new(ObjectiveKind::Minmax).with_exponent(LossFamily::L2));
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.rows.len(), 18);
    for agg in &report.aggregates {
        let maes: Vec<f64> = report
            .rows
            .iter()
            .filter(|r| r.objective == agg.objective && r.split == agg.split && r.m == agg.m)
            .map(|r| r.mae.unwrap())
            .collect();
        let n = maes.len() as f64;
        let mean = maes.iter().sum::<f64>() / n;
        let sd = (maes.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert_eq!(agg.n_seeds, 3);
        assert!((agg.mae_mean - mean).abs() <= 1e-12 * mean.max(1.0));
        assert!((agg.mae_ste - sd / n.sqrt()).abs() <= 1e-12 * agg.mae_ste.max(1.0));
    }
    assert_eq!(aggregate(&report.rows), report.aggregates);
    let seeds: Vec<u64> = report.rows.iter().map(|r| r.seed).collect();
    assert_eq!(&seeds[..9], &[1, 1, 1, 2, 2, 2, 3, 3, 3]);
}

#[test]
fn reruns_write_identical_files() {
    let (dir, mut cfg) = experiment_dir();
    cfg.seeds = vec![1, 2];
    cfg.lipschitz_grid = Some(vec![2.0, 8.0]);
    run_and_write(&cfg).unwrap();
    let first = fs::read(cfg.output_dir.join("results.csv")).unwrap();
    let first_agg = fs::read(cfg.output_dir.join("aggregate.csv")).unwrap();
    cfg.output_dir = dir.path().join("again");
    run_and_write(&cfg).unwrap();
    assert_eq!(first, fs::read(cfg.output_dir.join("results.csv")).unwrap());
    assert_eq!(
        first_agg,
        fs::read(cfg.output_dir.join("aggregate.csv")).unwrap()
    );
}

#[test]
fn results_files_have_versioned_fixed_columns() {
    let (_dir, cfg) = experiment_dir();
    let report = run_and_write(&cfg).unwrap();
    let text = fs::read_to_string(cfg.output_dir.join("results.csv")).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "# format_version=1");
    assert_eq!(lines.next().unwrap(), RESULTS_COLUMNS.join(","));
    let agg_text = fs::read_to_string(cfg.output_dir.join("aggregate.csv")).unwrap();
    assert!(agg_text.lines().any(|l| l == AGGREGATE_COLUMNS.join(",")));
    assert_eq!(
        read_results_csv(cfg.output_dir.join("results.csv")).unwrap(),
        report.rows
    );
    let aggs = read_aggregate_csv(cfg.output_dir.join("aggregate.csv")).unwrap();
    assert_eq!(aggs.len(), report.aggregates.len());
    let svg = render_svg(&aggs, "synthetic").unwrap();
    assert!(svg.starts_with("<svg") && svg.trim_end().ends_with("</svg>"));
}

#[test]
fn test_split_is_scored_against_truth() {
    let (_dir, mut cfg) = experiment_dir();
    cfg.interval_gen = IntervalGenConfig::uniform(50.0, 0);
    let report = run_experiment(&cfg).unwrap();

    // recompute the cell by hand: intervals over the full data from the run seed,
    // training on the train rows, scoring test rows against their exact targets
    let data = load_csv_auto(&cfg.dataset).unwrap();
    let idx = cfg.split.indices(data.len()).unwrap();
    let gen = IntervalGenConfig {
        seed: 1,
        ..cfg.interval_gen.clone()
    };
    let noisy = ivreg::intervalgen::regenerate(&data, &gen).unwrap();
    let mut tc = cfg.train.clone();
    tc.seed = 1;
    tc.model.init_seed = 1;
    tc.model.layer_sizes[0] = data.feature_dim();
    let model = train(&cfg.objectives[0], &tc, &noisy.select(&idx[0]).unwrap()).unwrap();
    let test = data.select(&idx[2]).unwrap();
    let expected = evaluate_mae(&model, &test).unwrap();
    let row = report.rows.iter().find(|r| r.split == Split::Test).unwrap();
    assert_eq!(row.mae.unwrap(), expected);
}

#[test]
fn failing_cells_are_recorded_not_fatal() {
    let (_dir, mut cfg) = experiment_dir();
    cfg.objectives
        .push(ObjectiveSpec::new(ObjectiveKind::Minmax));
    cfg.train.model.layer_sizes[0] = 7;
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.failures, 2);
    assert!(report
        .rows
        .iter()
        .all(|r| r.error.is_some() && r.mae.is_none()));
    assert!(report.aggregates.iter().all(|a| a.n_failed == 1));
}

#[test]
fn hyper_search_picks_by_validation() {
    let (_dir, mut cfg) = experiment_dir();
    cfg.hyper_search = Some(ivreg::harness::HyperSearch {
        lr_grid: vec![1e-2, 1e-4],
        m_grid: Some(vec![1.0, 16.0]),
    });
    let report = run_experiment(&cfg).unwrap();
    assert_eq!(report.rows.len(), 3);
    assert!(report.rows[0].setting.contains("lr="));
    assert!(report.rows[0].m.is_some());
}

#[test]
fn config_json_rejects_unknown_keys() {
    let (_dir, cfg) = experiment_dir();
    let json = serde_json::to_value(&cfg).unwrap();
    let text = json.to_string();
    assert_eq!(ExperimentConfig::from_json(&text).unwrap(), cfg);
    let mut typo = json.clone();
    typo.as_object_mut()
        .unwrap()
        .insert("seed".into(), 3.into());
    assert!(ExperimentConfig::from_json(&typo.to_string()).is_err());
}
