//! Tabular data: CSV ingestion, z-score scaling, train/test splitting,
//! augmentation with synthetic rows, and the JSON model file.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::NoiseModel;
use crate::nn::{Activation, Dense, Mlp};
use crate::rng::{substream, RNG_ALGORITHM};
use crate::schedule::ScheduleParams;
use crate::trainer::TrainConfig;

/// Auxiliary column marking rows that came from a generator.
pub const PROVENANCE_COLUMN: &str = "synthetic";

/// Named integer label column.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Labels {
    pub name: String,
    pub values: Vec<i64>,
}

/// Rows of real features, optionally with labels and per-row provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleMatrix {
    pub columns: Vec<String>,
    pub features: Array2<f64>,
    pub labels: Option<Labels>,
    /// `true` for synthetic rows.
    pub synthetic: Option<Vec<bool>>,
}

impl SampleMatrix {
    pub fn new(columns: Vec<String>, features: Array2<f64>) -> Result<Self> {
        if columns.len() != features.ncols() {
            return Err(Error::SchemaMismatch(format!(
                "{} column names for {} feature columns",
                columns.len(),
                features.ncols()
            )));
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("sample matrix".into()));
        }
        Ok(Self {
            columns,
            features,
            labels: None,
            synthetic: None,
        })
    }

    /// Features only, with default names `x1..xd`.
    pub fn from_features(features: Array2<f64>) -> Result<Self> {
        let columns = (1..=features.ncols()).map(|j| format!("x{j}")).collect();
        Self::new(columns, features)
    }

    pub fn with_labels(mut self, name: impl Into<String>, values: Vec<i64>) -> Result<Self> {
        if values.len() != self.n_rows() {
            return Err(Error::SchemaMismatch(format!(
                "{} labels for {} rows",
                values.len(),
                self.n_rows()
            )));
        }
        self.labels = Some(Labels {
            name: name.into(),
            values,
        });
        Ok(self)
    }

    pub fn n_rows(&self) -> usize {
        self.features.nrows()
    }

    pub fn dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows() == 0
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.features.row(i).to_vec()
    }

    /// Rows at `indices`, in that order, carrying labels and provenance along.
    pub fn select(&self, indices: &[usize]) -> SampleMatrix {
        SampleMatrix {
            columns: self.columns.clone(),
            features: self.features.select(Axis(0), indices),
            labels: self.labels.as_ref().map(|l| Labels {
                name: l.name.clone(),
                values: indices.iter().map(|&i| l.values[i]).collect(),
            }),
            synthetic: self.synthetic.as_ref().map(|s| indices.iter().map(|&i| s[i]).collect()),
        }
    }

    /// Rows whose label equals `class`.
    pub fn filter_class(&self, class: i64) -> Result<SampleMatrix> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("no label column to filter on".into()))?;
        let idx: Vec<usize> = (0..self.n_rows()).filter(|&i| labels.values[i] == class).collect();
        Ok(self.select(&idx))
    }

    /// Number of rows per label value.
    pub fn label_counts(&self) -> BTreeMap<i64, usize> {
        let mut counts = BTreeMap::new();
        if let Some(l) = &self.labels {
            for &v in &l.values {
                *counts.entry(v).or_insert(0) += 1;
            }
        }
        counts
    }
}

fn parse_number(cell: &str) -> Option<f64> {
    cell.trim().parse::<f64>().ok().filter(|v| v.is_finite())
}

fn parse_label(cell: &str) -> Option<i64> {
    let v = parse_number(cell)?;
    (v.fract() == 0.0 && v.abs() < 9.0e15).then_some(v as i64)
}

/// Reads a headed, comma-separated numeric table. `label_column`, when
/// given, is split off as integer labels; a `synthetic` column, when present,
/// is read back as provenance.
pub fn load_csv(path: impl AsRef<Path>, label_column: Option<&str>) -> Result<SampleMatrix> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let csv_err = |line: u64, msg: String| Error::Csv {
        path: shown.clone(),
        line,
        msg,
    };

    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => csv_err(1, format!("{other:?}")),
        })?;

    let header: Vec<String> = reader
        .headers()
        .map_err(|e| csv_err(1, e.to_string()))?
        .iter()
        .map(str::to_string)
        .collect();
    if header.is_empty() || header.iter().all(|h| h.is_empty()) {
        return Err(csv_err(1, "missing header row".into()));
    }
    if header.iter().all(|h| parse_number(h).is_some()) {
        return Err(csv_err(1, "missing header row (first row is numeric)".into()));
    }

    let label_idx = match label_column {
        Some(name) => Some(
            header
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| csv_err(1, format!("label column '{name}' not found")))?,
        ),
        None => None,
    };
    let prov_idx = header.iter().position(|h| h == PROVENANCE_COLUMN);
    let feature_idx: Vec<usize> = (0..header.len())
        .filter(|&j| Some(j) != label_idx && Some(j) != prov_idx)
        .collect();

    let mut values = Vec::new();
    let mut labels = Vec::new();
    let mut synthetic = Vec::new();
    let mut n_rows = 0usize;
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            csv_err(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != header.len() {
            return Err(csv_err(
                line,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        for &j in &feature_idx {
            let v = parse_number(&record[j]).ok_or_else(|| {
                csv_err(
                    line,
                    format!("non-numeric value '{}' in column '{}'", &record[j], header[j]),
                )
            })?;
            values.push(v);
        }
        if let Some(j) = label_idx {
            labels.push(
                parse_label(&record[j])
                    .ok_or_else(|| csv_err(line, format!("label '{}' is not an integer", &record[j])))?,
            );
        }
        if let Some(j) = prov_idx {
            synthetic.push(match &record[j] {
                "1" | "true" => true,
                "0" | "false" => false,
                other => {
                    return Err(csv_err(line, format!("bad provenance flag '{other}'")));
                }
            });
        }
        n_rows += 1;
    }

    let columns: Vec<String> = feature_idx.iter().map(|&j| header[j].clone()).collect();
    let features = Array2::from_shape_vec((n_rows, columns.len()), values).expect("row-major buffer matches shape");
    let mut m = SampleMatrix::new(columns, features)?;
    if let (Some(j), Some(_)) = (label_idx, label_column) {
        m = m.with_labels(header[j].clone(), labels)?;
    }
    if prov_idx.is_some() {
        m.synthetic = Some(synthetic);
    }
    Ok(m)
}

/// Reads one integer column from a headed CSV file; the last column when
/// `column` is `None`.
pub fn load_labels(path: impl AsRef<Path>, column: Option<&str>) -> Result<Vec<i64>> {
    let path = path.as_ref();
    let shown = path.display().to_string();
    let csv_err = |line: u64, msg: String| Error::Csv {
        path: shown.clone(),
        line,
        msg,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::Io(io),
            other => csv_err(1, format!("{other:?}")),
        })?;
    let header = reader.headers().map_err(|e| csv_err(1, e.to_string()))?.clone();
    if header.is_empty() || header.iter().all(|h| parse_number(h).is_some()) {
        return Err(csv_err(1, "missing header row".into()));
    }
    let idx = match column {
        Some(name) => header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| csv_err(1, format!("column '{name}' not found")))?,
        None => header.len() - 1,
    };
    let mut out = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| csv_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() == 1 && record[0].is_empty() {
            continue;
        }
        if record.len() != header.len() {
            return Err(csv_err(
                line,
                format!("expected {} fields, found {}", header.len(), record.len()),
            ));
        }
        out.push(
            parse_label(&record[idx])
                .ok_or_else(|| csv_err(line, format!("label '{}' is not an integer", &record[idx])))?,
        );
    }
    Ok(out)
}

/// Writes the matrix with a header row; floats use the shortest
/// representation that round-trips exactly.
pub fn write_csv(path: impl AsRef<Path>, m: &SampleMatrix) -> Result<()> {
    let mut out = String::new();
    let mut header = m.columns.clone();
    if let Some(l) = &m.labels {
        header.push(l.name.clone());
    }
    if m.synthetic.is_some() {
        header.push(PROVENANCE_COLUMN.into());
    }
    out.push_str(&header.join(","));
    out.push('\n');
    for i in 0..m.n_rows() {
        let mut fields: Vec<String> = m.features.row(i).iter().map(|v| v.to_string()).collect();
        if let Some(l) = &m.labels {
            fields.push(l.values[i].to_string());
        }
        if let Some(s) = &m.synthetic {
            fields.push(if s[i] { "1" } else { "0" }.into());
        }
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    let mut f = File::create(path)?;
    f.write_all(out.as_bytes())?;
    Ok(())
}

/// Per-feature z-score transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Scaler {
    /// Fits mean and population standard deviation per column. Constant
    /// columns are rejected.
    pub fn fit(data: &SampleMatrix) -> Result<Self> {
        if data.is_empty() {
            return Err(Error::Empty("data"));
        }
        let n = data.n_rows() as f64;
        let mut mean = Vec::with_capacity(data.dim());
        let mut std = Vec::with_capacity(data.dim());
        for (j, col) in data.features.columns().into_iter().enumerate() {
            let mu = col.sum() / n;
            let var = col.iter().map(|v| (v - mu) * (v - mu)).sum::<f64>() / n;
            let sd = var.sqrt();
            if sd <= 1e-12 * (1.0 + mu.abs()) {
                return Err(Error::ConstantFeature(data.columns[j].clone()));
            }
            mean.push(mu);
            std.push(sd);
        }
        Ok(Self { mean, std })
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, data: &SampleMatrix) -> Result<SampleMatrix> {
        let mut out = data.clone();
        out.features = self.apply_array(&data.features)?;
        Ok(out)
    }

    pub fn invert(&self, data: &SampleMatrix) -> Result<SampleMatrix> {
        let mut out = data.clone();
        out.features = self.invert_array(&data.features)?;
        Ok(out)
    }

    pub fn apply_array(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        crate::error::check_dim(self.dim(), x.ncols())?;
        let mut out = x.clone();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|v| (v - self.mean[j]) / self.std[j]);
        }
        Ok(out)
    }

    pub fn invert_array(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        crate::error::check_dim(self.dim(), x.ncols())?;
        let mut out = x.clone();
        for (j, mut col) in out.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|v| v * self.std[j] + self.mean[j]);
        }
        Ok(out)
    }
}

const SPLIT_STREAM: u64 = 0x5_1177;

/// Random train/test split. With `stratify`, each label value contributes
/// `round(test_fraction * count)` rows to the test side. Both sides keep the
/// original row order.
pub fn split(
    data: &SampleMatrix,
    test_fraction: f64,
    seed: u64,
    stratify: bool,
) -> Result<(SampleMatrix, SampleMatrix)> {
    if !(test_fraction > 0.0 && test_fraction < 1.0) {
        return Err(Error::InvalidArgument(format!(
            "test fraction must be in (0, 1), got {test_fraction}"
        )));
    }
    let mut rng = substream(seed, SPLIT_STREAM);
    let groups: Vec<Vec<usize>> = if stratify {
        let labels = data
            .labels
            .as_ref()
            .ok_or_else(|| Error::InvalidArgument("stratified split needs labels".into()))?;
        let mut by_label: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
        for (i, &v) in labels.values.iter().enumerate() {
            by_label.entry(v).or_default().push(i);
        }
        by_label.into_values().collect()
    } else {
        vec![(0..data.n_rows()).collect()]
    };

    let mut is_test = vec![false; data.n_rows()];
    for mut group in groups {
        let k = (test_fraction * group.len() as f64).round() as usize;
        group.shuffle(&mut rng);
        for &i in &group[..k] {
            is_test[i] = true;
        }
    }
    let test_idx: Vec<usize> = (0..data.n_rows()).filter(|&i| is_test[i]).collect();
    let train_idx: Vec<usize> = (0..data.n_rows()).filter(|&i| !is_test[i]).collect();
    if test_idx.is_empty() || train_idx.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "split of {} rows at fraction {test_fraction} leaves an empty side",
            data.n_rows()
        )));
    }
    Ok((data.select(&train_idx), data.select(&test_idx)))
}

/// Appends `synthetic` rows to `train`, labelled `label_value` and flagged
/// in the provenance column.
pub fn augment(train: &SampleMatrix, synthetic: &SampleMatrix, label_value: i64) -> Result<SampleMatrix> {
    if train.columns != synthetic.columns {
        return Err(Error::SchemaMismatch(format!(
            "training columns {:?} differ from synthetic columns {:?}",
            train.columns, synthetic.columns
        )));
    }
    let labels = train
        .labels
        .as_ref()
        .ok_or_else(|| Error::SchemaMismatch("training data has no label column".into()))?;
    if synthetic.synthetic.as_ref().is_some_and(|s| s.iter().any(|f| !f)) {
        return Err(Error::SchemaMismatch(
            "synthetic input contains non-synthetic rows".into(),
        ));
    }
    let features = ndarray::concatenate(Axis(0), &[train.features.view(), synthetic.features.view()])
        .expect("column counts already checked");
    let mut values = labels.values.clone();
    values.extend(std::iter::repeat_n(label_value, synthetic.n_rows()));
    let mut provenance = train.synthetic.clone().unwrap_or_else(|| vec![false; train.n_rows()]);
    provenance.extend(std::iter::repeat_n(true, synthetic.n_rows()));
    Ok(SampleMatrix {
        columns: train.columns.clone(),
        features,
        labels: Some(Labels {
            name: labels.name.clone(),
            values,
        }),
        synthetic: Some(provenance),
    })
}

pub const MODEL_FORMAT: &str = "ou-diffuse-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerFile {
    pub fan_in: usize,
    pub fan_out: usize,
    /// Row-major `(fan_in, fan_out)`.
    pub weight: Vec<f64>,
    pub bias: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NetworkFile {
    pub activation: Activation,
    pub layer_dims: Vec<usize>,
    pub layers: Vec<LayerFile>,
}

/// On-disk form of a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelFile {
    pub format: String,
    pub version: u32,
    pub rng: String,
    pub feature_columns: Vec<String>,
    pub schedule: ScheduleParams,
    pub network: NetworkFile,
    pub scaler: Scaler,
    pub training: TrainConfig,
}

impl ModelFile {
    pub fn from_model(m: &NoiseModel) -> Self {
        let net = &m.network;
        Self {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            rng: RNG_ALGORITHM.into(),
            feature_columns: m.feature_columns.clone(),
            schedule: m.schedule.params(),
            network: NetworkFile {
                activation: net.activation(),
                layer_dims: net.layer_dims(),
                layers: net
                    .layers()
                    .iter()
                    .map(|l| LayerFile {
                        fan_in: l.fan_in(),
                        fan_out: l.fan_out(),
                        weight: l.weight.iter().copied().collect(),
                        bias: l.bias.to_vec(),
                    })
                    .collect(),
            },
            scaler: m.scaler.clone(),
            training: m.config.clone(),
        }
    }

    pub fn into_model(self) -> Result<NoiseModel> {
        let corrupt = |msg: String| Error::CorruptedModel(msg);
        let layers = self
            .network
            .layers
            .into_iter()
            .map(|l| {
                let weight = Array2::from_shape_vec((l.fan_in, l.fan_out), l.weight)
                    .map_err(|e| corrupt(format!("weight shape: {e}")))?;
                if l.bias.len() != l.fan_out {
                    return Err(corrupt("bias length".into()));
                }
                Ok(Dense {
                    weight,
                    bias: l.bias.into(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let network = Mlp::from_layers(layers, self.network.activation).map_err(|e| corrupt(e.to_string()))?;
        if network.layer_dims() != self.network.layer_dims {
            return Err(corrupt("layer_dims disagree with stored layers".into()));
        }
        let schedule = self.schedule.build().map_err(|e| corrupt(e.to_string()))?;
        NoiseModel::new(network, schedule, self.scaler, self.training, self.feature_columns)
            .map_err(|e| corrupt(e.to_string()))
    }
}

pub fn model_to_json(m: &NoiseModel) -> Result<String> {
    let mut s = serde_json::to_string_pretty(&ModelFile::from_model(m))?;
    s.push('\n');
    Ok(s)
}

pub fn model_from_json(text: &str) -> Result<NoiseModel> {
    let value: serde_json::Value = serde_json::from_str(text).map_err(|e| Error::CorruptedModel(e.to_string()))?;
    if value.get("format").and_then(|v| v.as_str()) != Some(MODEL_FORMAT) {
        return Err(Error::CorruptedModel("not an ou-diffuse model file".into()));
    }
    let version = value
        .get("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| Error::CorruptedModel("missing version".into()))?;
    if version != MODEL_VERSION as u64 {
        return Err(Error::UnsupportedVersion {
            found: version as u32,
            expected: MODEL_VERSION,
        });
    }
    let file: ModelFile = serde_json::from_value(value).map_err(|e| Error::CorruptedModel(e.to_string()))?;
    if file.rng != RNG_ALGORITHM {
        log::warn!(
            "model was trained with RNG '{}', this build uses '{RNG_ALGORITHM}'",
            file.rng
        );
    }
    file.into_model()
}

pub fn save_model(m: &NoiseModel, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model_to_json(m)?)?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<NoiseModel> {
    model_from_json(&std::fs::read_to_string(path)?)
}
