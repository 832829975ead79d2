use std::fmt;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::data::{apply_scale, evaluate_mae, load_csv_auto, std_dev, SplitSpec};
use crate::error::{Error, Result};
use crate::interval::IntervalDataset;
use crate::intervalgen::{regenerate, IntervalGenConfig};
use crate::objectives::{train, ObjectiveSpec, TrainConfig, TrainedModel};

/// Written as `# format_version=N` above the header of results and aggregate CSVs.
pub const RESULTS_FORMAT_VERSION: u32 = 1;

pub const RESULTS_COLUMNS: [&str; 9] = [
    "dataset",
    "objective",
    "setting",
    "m",
    "seed",
    "split",
    "mae",
    "runtime_seconds",
    "error",
];

pub const AGGREGATE_COLUMNS: [&str; 9] = [
    "dataset",
    "objective",
    "setting",
    "m",
    "split",
    "n_seeds",
    "mae_mean",
    "mae_ste",
    "n_failed",
];

/// Grid search by validation MAE, run separately for every objective and seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HyperSearch {
    pub lr_grid: Vec<f64>,
    /// Lipschitz constants to try; omitted means unconstrained models only.
    #[serde(default)]
    pub m_grid: Option<Vec<f64>>,
}

impl HyperSearch {
    /// Learning rates {1e-2, ..., 1e-5} and m in {1, 4, ..., 1024}.
    pub fn standard() -> Self {
        Self {
            lr_grid: vec![1e-2, 1e-3, 1e-4, 1e-5],
            m_grid: Some(vec![1.0, 4.0, 16.0, 64.0, 256.0, 1024.0]),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Labeled (`f1..fd, y`) or interval (`f1..fd, l, u, y`) CSV.
    pub dataset: PathBuf,
    /// Name in the results; defaults to the file stem.
    #[serde(default)]
    pub dataset_name: Option<String>,
    #[serde(default)]
    pub split: SplitSpec,
    /// Ignored for interval CSVs. Its `seed` is replaced by the run seed.
    pub interval_gen: IntervalGenConfig,
    pub objectives: Vec<ObjectiveSpec>,
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub lipschitz_grid: Option<Vec<f64>>,
    pub output_dir: PathBuf,
    /// Rescale targets so the training split has this standard deviation.
    #[serde(default)]
    pub rescale_target_std: Option<f64>,
    #[serde(default)]
    pub hyper_search: Option<HyperSearch>,
    /// When false, `runtime_seconds` is written as 0 so reruns give identical files.
    #[serde(default = "default_true")]
    pub record_runtime: bool,
}

fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self =
            serde_json::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.seeds.is_empty() {
            return bad("seeds must be nonempty");
        }
        if self.objectives.is_empty() {
            return bad("objectives must be nonempty");
        }
        let positive = |v: &f64| v.is_finite() && *v > 0.0;
        if let Some(grid) = &self.lipschitz_grid {
            if grid.is_empty() || !grid.iter().all(positive) {
                return bad("lipschitz_grid must be nonempty and positive");
            }
        }
        if let Some(h) = &self.hyper_search {
            if h.lr_grid.is_empty() || !h.lr_grid.iter().all(positive) {
                return bad("hyper_search.lr_grid must be nonempty and positive");
            }
            if let Some(grid) = &h.m_grid {
                if grid.is_empty() || !grid.iter().all(positive) {
                    return bad("hyper_search.m_grid must be nonempty and positive");
                }
            }
        }
        if let Some(s) = self.rescale_target_std {
            if !positive(&s) {
                return bad("rescale_target_std must be > 0");
            }
        }
        self.split.validate()?;
        self.interval_gen.validate()?;
        for spec in &self.objectives {
            spec.validate()?;
        }
        let mut tc = self.train.clone();
        if tc.model.layer_sizes.first() == Some(&0) {
            tc.model.layer_sizes[0] = 1;
        }
        tc.validate()
    }

    pub fn dataset_label(&self) -> String {
        self.dataset_name.clone().unwrap_or_else(|| {
            self.dataset
                .file_stem()
                .map(|s| s.to_string_lossy().into_owned())
                .unwrap_or_else(|| "dataset".into())
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Val,
    Test,
}

impl Split {
    pub const ALL: [Split; 3] = [Split::Train, Split::Val, Split::Test];
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ResultsRow {
    pub dataset: String,
    pub objective: String,
    pub setting: String,
    pub m: Option<f64>,
    pub seed: u64,
    pub split: Split,
    /// `None` when the cell failed.
    pub mae: Option<f64>,
    pub runtime_seconds: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AggregateRow {
    pub dataset: String,
    pub objective: String,
    pub setting: String,
    pub m: Option<f64>,
    pub split: Split,
    pub n_seeds: usize,
    pub mae_mean: f64,
    /// Sample standard deviation over seeds divided by sqrt(seeds); 0 for one seed.
    pub mae_ste: f64,
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentReport {
    pub rows: Vec<ResultsRow>,
    pub aggregates: Vec<AggregateRow>,
    pub failures: usize,
}

/// The loaded data, rescaled and with split indices fixed.
struct Prepared {
    full: IntervalDataset,
    given_intervals: bool,
    splits: [Vec<usize>; 3],
}

fn prepare(cfg: &ExperimentConfig) -> Result<Prepared> {
    let mut full = load_csv_auto(&cfg.dataset)?;
    let given_intervals = full.samples().iter().any(|s| s.interval.width() > 0.0);
    if !full.has_truth() {
        return Err(Error::MissingTruth(
            "benchmark data needs a target column `y` for evaluation".into(),
        ));
    }
    let splits = cfg.split.indices(full.len())?;
    if let Some(target_std) = cfg.rescale_target_std {
        let train = full.select(&splits[0])?;
        let sd = std_dev(&train.true_targets()?);
        if sd.is_nan() || sd <= 0.0 {
            return Err(Error::Degenerate(
                "training targets have zero standard deviation".into(),
            ));
        }
        full = apply_scale(&full, target_std / sd)?;
    }
    Ok(Prepared {
        full,
        given_intervals,
        splits,
    })
}

/// One (objective, m, seed) cell.
#[derive(Debug, Clone, PartialEq)]
struct Cell {
    objective: usize,
    m: Option<f64>,
    seed: u64,
}

struct CellOutcome {
    cell: Cell,
    setting: String,
    chosen_m: Option<f64>,
    maes: Result<[f64; 3]>,
    runtime: f64,
}

fn cell_train_config(
    cfg: &ExperimentConfig,
    seed: u64,
    m: Option<f64>,
    lr: f64,
    dim: usize,
) -> TrainConfig {
    let mut tc = cfg.train.clone();
    tc.seed = seed;
    tc.lr = lr;
    tc.model.init_seed = seed;
    tc.model.lipschitz = m;
    if tc.model.layer_sizes.first() == Some(&0) {
        tc.model.layer_sizes[0] = dim;
    }
    tc
}

fn fit_and_score(
    spec: &ObjectiveSpec,
    tc: &TrainConfig,
    train_ds: &IntervalDataset,
    eval: &[IntervalDataset; 3],
) -> Result<(TrainedModel, [f64; 3])> {
    let model = train(spec, tc, train_ds)?;
    let mut maes = [0.0; 3];
    for (slot, ds) in maes.iter_mut().zip(eval) {
        *slot = evaluate_mae(&model, ds)?;
    }
    Ok((model, maes))
}

fn run_cell(cfg: &ExperimentConfig, prep: &Prepared, cell: &Cell) -> CellOutcome {
    let start = Instant::now();
    let mut setting = if prep.given_intervals {
        "given intervals".to_string()
    } else {
        cfg.interval_gen.describe()
    };
    let mut chosen_m = cell.m;
    let maes = (|| {
        let data = if prep.given_intervals {
            prep.full.clone()
        } else {
            let gen = IntervalGenConfig {
                seed: cell.seed,
                ..cfg.interval_gen.clone()
            };
            regenerate(&prep.full, &gen)?
        };
        let train_ds = data.select(&prep.splits[0])?;
        // evaluation always compares against the true targets, so test intervals never matter
        let eval = [
            train_ds.clone(),
            data.select(&prep.splits[1])?,
            data.select(&prep.splits[2])?,
        ];
        let spec = &cfg.objectives[cell.objective];
        let dim = data.feature_dim();
        match &cfg.hyper_search {
            None => {
                let tc = cell_train_config(cfg, cell.seed, cell.m, cfg.train.lr, dim);
                Ok(fit_and_score(spec, &tc, &train_ds, &eval)?.1)
            }
            Some(h) => {
                let ms: Vec<Option<f64>> = match &h.m_grid {
                    Some(grid) => grid.iter().copied().map(Some).collect(),
                    None => vec![cell.m],
                };
                let mut best: Option<(f64, Option<f64>, [f64; 3])> = None;
                for &lr in &h.lr_grid {
                    for &m in &ms {
                        let tc = cell_train_config(cfg, cell.seed, m, lr, dim);
                        let (_, maes) = fit_and_score(spec, &tc, &train_ds, &eval)?;
                        if best.as_ref().is_none_or(|b| maes[1] < b.2[1]) {
                            best = Some((lr, m, maes));
                        }
                    }
                }
                let (lr, m, maes) = best.expect("grids are nonempty");
                setting.push_str(&format!(" lr={lr}"));
                chosen_m = m;
                Ok(maes)
            }
        }
    })();
    CellOutcome {
        cell: cell.clone(),
        setting,
        chosen_m,
        maes,
        runtime: start.elapsed().as_secs_f64(),
    }
}

fn cells(cfg: &ExperimentConfig) -> Vec<Cell> {
    let ms: Vec<Option<f64>> = match (&cfg.hyper_search, &cfg.lipschitz_grid) {
        (None, Some(grid)) => grid.iter().copied().map(Some).collect(),
        _ => vec![None],
    };
    let mut seeds = cfg.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    let mut out = Vec::new();
    for objective in 0..cfg.objectives.len() {
        for &m in &ms {
            for &seed in &seeds {
                out.push(Cell { objective, m, seed });
            }
        }
    }
    out
}

/// Runs every cell in parallel and returns rows sorted by objective, m, seed and split.
///
/// Failed cells are reported in their rows; they never stop the other cells.
/// A dataset that cannot be loaded is an error for the whole run.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let prep = prepare(cfg)?;
    let dataset = cfg.dataset_label();
    let outcomes: Vec<CellOutcome> = cells(cfg)
        .par_iter()
        .map(|c| run_cell(cfg, &prep, c))
        .collect();

    let mut rows = Vec::with_capacity(outcomes.len() * 3);
    let mut failures = 0;
    for o in &outcomes {
        if o.maes.is_err() {
            failures += 1;
        }
        for (k, split) in Split::ALL.into_iter().enumerate() {
            let (mae, error) = match &o.maes {
                Ok(v) => (Some(v[k]), None),
                Err(e) => (None, Some(e.to_string())),
            };
            rows.push(ResultsRow {
                dataset: dataset.clone(),
                objective: cfg.objectives[o.cell.objective].label(),
                setting: o.setting.clone(),
                m: o.chosen_m,
                seed: o.cell.seed,
                split,
                mae,
                runtime_seconds: if cfg.record_runtime { o.runtime } else { 0.0 },
                error,
            });
        }
    }
    let rank: Vec<(usize, Option<f64>, u64)> = outcomes
        .iter()
        .flat_map(|o| std::iter::repeat_n((o.cell.objective, o.cell.m, o.cell.seed), 3))
        .collect();
    let mut order: Vec<usize> = (0..rows.len()).collect();
    order.sort_by(|&a, &b| {
        let (oa, ma, sa) = rank[a];
        let (ob, mb, sb) = rank[b];
        oa.cmp(&ob)
            .then(cmp_m(ma, mb))
            .then(sa.cmp(&sb))
            .then(rows[a].split.cmp(&rows[b].split))
    });
    let rows: Vec<ResultsRow> = order.into_iter().map(|i| rows[i].clone()).collect();
    let aggregates = aggregate(&rows);
    Ok(ExperimentReport {
        rows,
        aggregates,
        failures,
    })
}

fn cmp_m(a: Option<f64>, b: Option<f64>) -> std::cmp::Ordering {
    match (a, b) {
        (None, None) => std::cmp::Ordering::Equal,
        (None, Some(_)) => std::cmp::Ordering::Less,
        (Some(_), None) => std::cmp::Ordering::Greater,
        (Some(x), Some(y)) => x.total_cmp(&y),
    }
}

/// Mean and standard error over seeds for each (objective, setting, m, split), in first-seen order.
///
/// Under hyperparameter search the chosen `m` can differ between seeds; rows are then
/// grouped by the chosen value.
pub fn aggregate(rows: &[ResultsRow]) -> Vec<AggregateRow> {
    let key = |r: &ResultsRow| {
        (
            r.dataset.clone(),
            r.objective.clone(),
            r.setting.clone(),
            r.m.map(f64::to_bits),
            r.split,
        )
    };
    let mut keys = Vec::new();
    for r in rows {
        let k = key(r);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|k| {
            let group: Vec<&ResultsRow> = rows.iter().filter(|r| key(r) == k).collect();
            let maes: Vec<f64> = group.iter().filter_map(|r| r.mae).collect();
            let (mean, ste) = mean_ste(&maes);
            AggregateRow {
                dataset: k.0,
                objective: k.1,
                setting: k.2,
                m: k.3.map(f64::from_bits),
                split: k.4,
                n_seeds: maes.len(),
                mae_mean: mean,
                mae_ste: ste,
                n_failed: group.len() - maes.len(),
            }
        })
        .collect()
}

/// Mean and `sd / sqrt(n)` with the n-1 sample standard deviation. NaN mean for no values.
pub fn mean_ste(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn versioned_writer(path: &Path) -> Result<csv::Writer<std::fs::File>> {
    use std::io::Write;
    let mut file = std::fs::File::create(path)?;
    writeln!(file, "# format_version={RESULTS_FORMAT_VERSION}")?;
    Ok(csv::Writer::from_writer(file))
}

pub fn write_results_csv(rows: &[ResultsRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = versioned_writer(path.as_ref())?;
    w.write_record(RESULTS_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.dataset.clone(),
            r.objective.clone(),
            r.setting.clone(),
            opt(r.m),
            r.seed.to_string(),
            r.split.to_string(),
            opt(r.mae),
            r.runtime_seconds.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_aggregate_csv(rows: &[AggregateRow], path: impl AsRef<Path>) -> Result<()> {
    let mut w = versioned_writer(path.as_ref())?;
    w.write_record(AGGREGATE_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.dataset.clone(),
            r.objective.clone(),
            r.setting.clone(),
            opt(r.m),
            r.split.to_string(),
            r.n_seeds.to_string(),
            r.mae_mean.to_string(),
            r.mae_ste.to_string(),
            r.n_failed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

fn field<'a>(rec: &'a csv::StringRecord, header: &[String], name: &str) -> Result<&'a str> {
    let idx = header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| Error::MissingColumn(name.to_string()))?;
    Ok(rec.get(idx).unwrap_or(""))
}

fn parse_num<T: std::str::FromStr>(raw: &str, row: usize, name: &str) -> Result<T> {
    raw.parse().map_err(|_| Error::Data {
        row,
        message: format!("column `{name}`: `{raw}` is not a number"),
    })
}

fn parse_opt(raw: &str, row: usize, name: &str) -> Result<Option<f64>> {
    if raw.is_empty() {
        Ok(None)
    } else {
        parse_num(raw, row, name).map(Some)
    }
}

fn parse_split(raw: &str, row: usize) -> Result<Split> {
    match raw {
        "train" => Ok(Split::Train),
        "val" => Ok(Split::Val),
        "test" => Ok(Split::Test),
        other => Err(Error::Data {
            row,
            message: format!("unknown split `{other}`"),
        }),
    }
}

pub fn read_aggregate_csv(path: impl AsRef<Path>) -> Result<Vec<AggregateRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let f = |name| field(&rec, &header, name);
        out.push(AggregateRow {
            dataset: f("dataset")?.to_string(),
            objective: f("objective")?.to_string(),
            setting: f("setting")?.to_string(),
            m: parse_opt(f("m")?, row, "m")?,
            split: parse_split(f("split")?, row)?,
            n_seeds: parse_num(f("n_seeds")?, row, "n_seeds")?,
            mae_mean: parse_num(f("mae_mean")?, row, "mae_mean")?,
            mae_ste: parse_num(f("mae_ste")?, row, "mae_ste")?,
            n_failed: parse_num(f("n_failed")?, row, "n_failed")?,
        });
    }
    Ok(out)
}

pub fn read_results_csv(path: impl AsRef<Path>) -> Result<Vec<ResultsRow>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    let mut out = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        let row = i + 1;
        let rec = rec?;
        let f = |name| field(&rec, &header, name);
        let error = f("error")?;
        out.push(ResultsRow {
            dataset: f("dataset")?.to_string(),
            objective: f("objective")?.to_string(),
            setting: f("setting")?.to_string(),
            m: parse_opt(f("m")?, row, "m")?,
            seed: parse_num(f("seed")?, row, "seed")?,
            split: parse_split(f("split")?, row)?,
            mae: parse_opt(f("mae")?, row, "mae")?,
            runtime_seconds: parse_num(f("runtime_seconds")?, row, "runtime_seconds")?,
            error: (!error.is_empty()).then(|| error.to_string()),
        });
    }
    Ok(out)
}

/// Runs the experiment and writes `results.csv` and `aggregate.csv` into `cfg.output_dir`.
pub fn run_and_write(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    let report = run_experiment(cfg)?;
    std::fs::create_dir_all(&cfg.output_dir)?;
    write_results_csv(&report.rows, cfg.output_dir.join("results.csv"))?;
    write_aggregate_csv(&report.aggregates, cfg.output_dir.join("aggregate.csv"))?;
    Ok(report)
}
