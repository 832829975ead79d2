use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interval::{Interval, IntervalDataset, IntervalSample};
use crate::model::Mlp;
use crate::objectives::TrainedModel;
use crate::rng::{stream, Purpose};

/// Which columns of a CSV hold the targets.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetColumns {
    /// One exact target column; rows become point intervals with a true target.
    Labeled { target: String },
    /// Interval bounds plus an optional hidden target used only for evaluation.
    Interval {
        lower: String,
        upper: String,
        truth: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CsvSchema {
    /// Feature columns in order. `None` takes every non-target column.
    pub features: Option<Vec<String>>,
    pub targets: TargetColumns,
}

impl CsvSchema {
    /// `f1..fd, y`
    pub fn labeled() -> Self {
        Self {
            features: None,
            targets: TargetColumns::Labeled { target: "y".into() },
        }
    }

    /// `f1..fd, l, u[, y]`; `y` is read when present.
    pub fn interval() -> Self {
        Self {
            features: None,
            targets: TargetColumns::Interval {
                lower: "l".into(),
                upper: "u".into(),
                truth: Some("y".into()),
            },
        }
    }

    /// The interval schema when the header has `l` and `u`, the labeled one otherwise.
    pub fn detect(header: &[String]) -> Self {
        let has = |name: &str| header.iter().any(|h| h == name);
        if has("l") && has("u") {
            Self::interval()
        } else {
            Self::labeled()
        }
    }
}

fn parse_cell(record: &csv::StringRecord, col: usize, name: &str, row: usize) -> Result<f64> {
    let raw = record.get(col).unwrap_or("").trim();
    let v: f64 = raw.parse().map_err(|_| Error::Data {
        row,
        message: format!("column `{name}`: `{raw}` is not a number"),
    })?;
    if !v.is_finite() {
        return Err(Error::Data {
            row,
            message: format!("column `{name}`: non-finite value `{raw}`"),
        });
    }
    Ok(v)
}

pub fn read_header(path: impl AsRef<Path>) -> Result<Vec<String>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    Ok(reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect())
}

/// Loads `path` with the schema detected from its header.
pub fn load_csv_auto(path: impl AsRef<Path>) -> Result<IntervalDataset> {
    let schema = CsvSchema::detect(&read_header(path.as_ref())?);
    load_csv(path, &schema)
}

/// Reads a dataset, preserving row order.
///
/// Row numbers in errors count data rows from 1. Lines starting with `#` are skipped.
pub fn load_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<IntervalDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path.as_ref())?;
    let header: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let find = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn(name.to_string()))
    };

    let (target_cols, optional_truth) = match &schema.targets {
        TargetColumns::Labeled { target } => (vec![find(target)?], None),
        TargetColumns::Interval {
            lower,
            upper,
            truth,
        } => {
            let truth_col = truth
                .as_ref()
                .and_then(|t| header.iter().position(|h| h == t));
            (vec![find(lower)?, find(upper)?], truth_col)
        }
    };
    let reserved: Vec<&str> = match &schema.targets {
        TargetColumns::Labeled { target } => vec![target.as_str()],
        TargetColumns::Interval {
            lower,
            upper,
            truth,
        } => {
            let mut v = vec![lower.as_str(), upper.as_str()];
            v.extend(truth.as_deref());
            v
        }
    };
    let feature_cols: Vec<usize> = match &schema.features {
        Some(names) => names.iter().map(|n| find(n)).collect::<Result<_>>()?,
        None => (0..header.len())
            .filter(|&i| !reserved.contains(&header[i].as_str()))
            .collect(),
    };
    if feature_cols.is_empty() {
        return Err(Error::InvalidConfig("no feature columns".into()));
    }

    let mut samples = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let features = feature_cols
            .iter()
            .map(|&c| parse_cell(&record, c, &header[c], row))
            .collect::<Result<Vec<_>>>()?;
        let sample = match &schema.targets {
            TargetColumns::Labeled { .. } => {
                let y = parse_cell(&record, target_cols[0], &header[target_cols[0]], row)?;
                IntervalSample {
                    features,
                    interval: Interval::from_raw(y, y),
                    true_y: Some(y),
                }
            }
            TargetColumns::Interval { .. } => {
                let l = parse_cell(&record, target_cols[0], &header[target_cols[0]], row)?;
                let u = parse_cell(&record, target_cols[1], &header[target_cols[1]], row)?;
                if l > u {
                    return Err(Error::Data {
                        row,
                        message: format!("lower bound {l} exceeds upper bound {u}"),
                    });
                }
                let true_y = optional_truth
                    .map(|c| parse_cell(&record, c, &header[c], row))
                    .transpose()?;
                if let Some(y) = true_y {
                    if !(l <= y && y <= u) {
                        return Err(Error::Data {
                            row,
                            message: format!("target {y} lies outside [{l}, {u}]"),
                        });
                    }
                }
                IntervalSample {
                    features,
                    interval: Interval::from_raw(l, u),
                    true_y,
                }
            }
        };
        samples.push(sample);
    }
    IntervalDataset::new(samples)
}

/// Feature rows of a CSV: every column except `l`, `u` and `y`.
pub fn load_features(path: impl AsRef<Path>) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_path(path)?;
    let header: Vec<String> = reader
        .headers()?
        .iter()
        .map(|h| h.trim().to_string())
        .collect();
    let cols: Vec<usize> = (0..header.len())
        .filter(|&i| !["l", "u", "y"].contains(&header[i].as_str()))
        .collect();
    if cols.is_empty() {
        return Err(Error::InvalidConfig("no feature columns".into()));
    }
    let mut rows = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let record = record?;
        rows.push(
            cols.iter()
                .map(|&c| parse_cell(&record, c, &header[c], i + 1))
                .collect::<Result<Vec<_>>>()?,
        );
    }
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    Ok(rows)
}

/// Reads the raw UCI `abalone.data` file (no header; sex letter, seven
/// measurements, ring count). Sex becomes three one-hot columns in the order
/// M, F, I, giving 10 features; the ring count is the target.
pub fn load_uci_abalone(path: impl AsRef<Path>) -> Result<IntervalDataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .from_path(path)?;
    let mut samples = Vec::new();
    for (i, record) in reader.records().enumerate() {
        let row = i + 1;
        let record = record?;
        if record.len() != 9 {
            return Err(Error::Data {
                row,
                message: format!("expected 9 fields, found {}", record.len()),
            });
        }
        let mut features = match record[0].trim() {
            "M" => vec![1.0, 0.0, 0.0],
            "F" => vec![0.0, 1.0, 0.0],
            "I" => vec![0.0, 0.0, 1.0],
            other => {
                return Err(Error::Data {
                    row,
                    message: format!("unknown sex code `{other}`"),
                })
            }
        };
        for c in 1..8 {
            features.push(parse_cell(&record, c, &format!("field{}", c + 1), row)?);
        }
        let y = parse_cell(&record, 8, "rings", row)?;
        samples.push(IntervalSample {
            features,
            interval: Interval::from_raw(y, y),
            true_y: Some(y),
        });
    }
    IntervalDataset::new(samples)
}

fn feature_header(d: usize) -> Vec<String> {
    (1..=d).map(|i| format!("f{i}")).collect()
}

/// Writes `f1..fd, y`. Every row needs a true target.
pub fn write_labeled_csv(ds: &IntervalDataset, path: impl AsRef<Path>) -> Result<()> {
    let ys = ds.true_targets()?;
    let mut w = csv::Writer::from_path(path)?;
    let mut header = feature_header(ds.feature_dim());
    header.push("y".into());
    w.write_record(&header)?;
    for (s, y) in ds.samples().iter().zip(ys) {
        let mut rec: Vec<String> = s.features.iter().map(f64::to_string).collect();
        rec.push(y.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes `f1..fd, l, u[, y]`, with `y` only when every row has one.
pub fn write_interval_csv(ds: &IntervalDataset, path: impl AsRef<Path>) -> Result<()> {
    let with_y = ds.has_truth();
    let mut w = csv::Writer::from_path(path)?;
    let mut header = feature_header(ds.feature_dim());
    header.extend(["l".to_string(), "u".to_string()]);
    if with_y {
        header.push("y".into());
    }
    w.write_record(&header)?;
    for s in ds.samples() {
        let mut rec: Vec<String> = s.features.iter().map(f64::to_string).collect();
        rec.push(s.interval.lower().to_string());
        rec.push(s.interval.upper().to_string());
        if let (true, Some(y)) = (with_y, s.true_y) {
            rec.push(y.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RescaleParams {
    pub scale: f64,
    pub applied_to: String,
}

/// Population standard deviation.
pub fn std_dev(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n).sqrt()
}

/// Multiplies targets and interval bounds of one dataset by `scale`.
pub fn apply_scale(ds: &IntervalDataset, scale: f64) -> Result<IntervalDataset> {
    if !(scale.is_finite() && scale > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "scale must be > 0, got {scale}"
        )));
    }
    let samples = ds
        .samples()
        .iter()
        .map(|s| IntervalSample {
            features: s.features.clone(),
            interval: s.interval.scaled(scale),
            true_y: s.true_y.map(|y| y * scale),
        })
        .collect();
    IntervalDataset::new(samples)
}

/// Rescales every split so the training targets have standard deviation `target_std`.
///
/// Returns the training split first, then `others` in order.
pub fn rescale_targets(
    train: &IntervalDataset,
    others: &[&IntervalDataset],
    target_std: f64,
) -> Result<(Vec<IntervalDataset>, RescaleParams)> {
    if !(target_std.is_finite() && target_std > 0.0) {
        return Err(Error::InvalidConfig(format!(
            "target_std must be > 0, got {target_std}"
        )));
    }
    let sd = std_dev(&train.true_targets()?);
    if sd.is_nan() || sd <= 0.0 {
        return Err(Error::Degenerate(
            "training targets have zero standard deviation".into(),
        ));
    }
    let scale = target_std / sd;
    let out = std::iter::once(train)
        .chain(others.iter().copied())
        .map(|ds| apply_scale(ds, scale))
        .collect::<Result<Vec<_>>>()?;
    Ok((
        out,
        RescaleParams {
            scale,
            applied_to: "y".into(),
        },
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train_frac: f64,
    pub val_frac: f64,
    pub test_frac: f64,
    #[serde(default)]
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self {
            train_frac: 0.7,
            val_frac: 0.15,
            test_frac: 0.15,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let fracs = [self.train_frac, self.val_frac, self.test_frac];
        if fracs.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::InvalidConfig(format!(
                "split fractions must lie in [0, 1], got {fracs:?}"
            )));
        }
        if (fracs.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "split fractions must sum to 1, got {fracs:?}"
            )));
        }
        Ok(())
    }

    /// Sizes by flooring train and val; the remainder goes to test.
    pub fn sizes(&self, n: usize) -> Result<[usize; 3]> {
        self.validate()?;
        // the small slack keeps e.g. 0.7 * 10 from flooring to 6
        let floor = |f: f64| ((n as f64) * f + 1e-9).floor() as usize;
        let train = floor(self.train_frac).min(n);
        let val = floor(self.val_frac).min(n - train);
        let sizes = [train, val, n - train - val];
        for (name, &size) in ["train", "val", "test"].iter().zip(&sizes) {
            if size == 0 {
                return Err(Error::InvalidConfig(format!(
                    "{name} split is empty for {n} rows"
                )));
            }
        }
        Ok(sizes)
    }

    /// Row indices of train, val and test.
    pub fn indices(&self, n: usize) -> Result<[Vec<usize>; 3]> {
        let [a, b, _] = self.sizes(n)?;
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut stream(self.seed, Purpose::Split));
        let test = order.split_off(a + b);
        let val = order.split_off(a);
        Ok([order, val, test])
    }
}

pub fn split(
    ds: &IntervalDataset,
    spec: &SplitSpec,
) -> Result<(IntervalDataset, IntervalDataset, IntervalDataset)> {
    let [train, val, test] = spec.indices(ds.len())?;
    Ok((ds.select(&train)?, ds.select(&val)?, ds.select(&test)?))
}

pub fn evaluate_mae(model: &TrainedModel, ds: &IntervalDataset) -> Result<f64> {
    network_mae(&model.model, ds)
}

/// MAE of a bare network against the true targets.
pub fn network_mae(mlp: &Mlp, ds: &IntervalDataset) -> Result<f64> {
    let ys = ds.true_targets()?;
    let preds = mlp.predict_many(&ds.features())?;
    Ok(preds
        .iter()
        .zip(&ys)
        .map(|(p, y)| (p - y).abs())
        .sum::<f64>()
        / ys.len() as f64)
}

/// Per-row `[min_i f_i(x), max_i f_i(x)]` over an ensemble, with the mean width.
pub fn ensemble_reduced_intervals(
    models: &[TrainedModel],
    xs: &[Vec<f64>],
) -> Result<(Vec<Interval>, f64)> {
    if models.len() < 2 {
        return Err(Error::InvalidConfig(
            "an ensemble needs at least 2 models".into(),
        ));
    }
    if xs.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let preds = models
        .iter()
        .map(|m| m.predict_many(xs))
        .collect::<Result<Vec<_>>>()?;
    let intervals: Vec<Interval> = (0..xs.len())
        .map(|i| {
            let (lo, hi) = preds
                .iter()
                .map(|p| p[i])
                .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                    (lo.min(v), hi.max(v))
                });
            Interval::from_raw(lo, hi)
        })
        .collect();
    let mean = intervals.iter().map(Interval::width).sum::<f64>() / intervals.len() as f64;
    Ok((intervals, mean))
}

/// Writes `epoch, train_objective_loss[, train_mae]`, epochs counted from 1.
pub fn write_trace_csv(model: &TrainedModel, path: impl AsRef<Path>) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let mae = model.mae_trace.as_ref();
    if mae.is_some() {
        w.write_record(["epoch", "train_objective_loss", "train_mae"])?;
    } else {
        w.write_record(["epoch", "train_objective_loss"])?;
    }
    for (i, loss) in model.loss_trace.iter().enumerate() {
        let mut rec = vec![(i + 1).to_string(), loss.to_string()];
        if let Some(m) = mae {
            rec.push(m[i].to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_sizes_floor_then_remainder() {
        assert_eq!(SplitSpec::default().sizes(10).unwrap(), [7, 1, 2]);
        let bad = SplitSpec {
            train_frac: 0.5,
            val_frac: 0.5,
            test_frac: 0.0,
            seed: 0,
        };
        assert!(bad.sizes(10).is_err());
        let off = SplitSpec {
            train_frac: 0.5,
            val_frac: 0.2,
            test_frac: 0.2,
            seed: 0,
        };
        assert!(off.validate().is_err());
    }

    #[test]
    fn split_partitions_rows() {
        let spec = SplitSpec {
            seed: 9,
            ..SplitSpec::default()
        };
        let [a, b, c] = spec.indices(37).unwrap();
        let mut all: Vec<usize> = a.iter().chain(&b).chain(&c).copied().collect();
        all.sort();
        assert_eq!(all, (0..37).collect::<Vec<_>>());
        assert_eq!(spec.indices(37).unwrap(), [a, b, c]);
    }

    #[test]
    fn std_dev_population() {
        assert_eq!(std_dev(&[1.0, 3.0]), 1.0);
        assert_eq!(std_dev(&[2.0, 2.0, 2.0]), 0.0);
    }
}
