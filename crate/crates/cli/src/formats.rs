//! On-disk formats: trajectory JSONL, window CSV, model checkpoints.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use qsta_core::data::{Dataset, Trajectory};
use qsta_core::model::{Model, ModelConfig, Normalizer};
use qsta_core::tensor::Tensor;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

/// Version of the checkpoint layout.
pub const CHECKPOINT_VERSION: u32 = 1;

/// Where a data file came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub schema_version: u32,
    pub stage: String,
    pub seed: u64,
    pub config_hash: String,
    pub records: usize,
    pub tool_version: String,
}

/// One trajectory per line.
pub fn write_trajectories(path: &Path, trajs: &[Trajectory]) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for t in trajs {
        serde_json::to_writer(&mut w, t)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trajectories(path: &Path) -> CliResult<Vec<Trajectory>> {
    let f = File::open(path).map_err(|e| missing(path, e))?;
    let mut out = Vec::new();
    for (i, line) in BufReader::new(f).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| CliError::Runtime(format!("{}:{}: bad trajectory record: {e}", path.display(), i + 1)))?,
        );
    }
    Ok(out)
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer_pretty(&mut w, value)?;
    w.write_all(b"\n")?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> CliResult<T> {
    let f = File::open(path).map_err(|e| missing(path, e))?;
    serde_json::from_reader(BufReader::new(f)).map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))
}

fn missing(path: &Path, e: std::io::Error) -> CliError {
    CliError::Runtime(format!("cannot open {}: {e}", path.display()))
}

/// Column names `t{step}_{channel}`; channels are `p{bus}`, `q{bus}`, `u{bus}`
/// when the width is a multiple of three, `f{index}` otherwise.
pub fn window_header(seq_len: usize, feature_dim: usize) -> Vec<String> {
    let mut h = vec!["label".to_string()];
    for t in 0..seq_len {
        for j in 0..feature_dim {
            let ch = if feature_dim % 3 == 0 { format!("{}{}", ["p", "q", "u"][j % 3], j / 3) } else { format!("f{j}") };
            h.push(format!("t{t}_{ch}"));
        }
    }
    h
}

/// Header row, then one row per window: label followed by the values in
/// time-major order.
pub fn write_dataset(path: &Path, d: &Dataset) -> CliResult<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(window_header(d.seq_len, d.feature_dim))?;
    for i in 0..d.len() {
        let mut row = Vec::with_capacity(1 + d.sample_len());
        row.push(d.labels[i].to_string());
        row.extend(d.sample(i).iter().map(|v| v.to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> CliResult<Dataset> {
    let mut r = csv::Reader::from_path(path).map_err(|e| CliError::Runtime(format!("cannot open {}: {e}", path.display())))?;
    let header = r.headers()?.clone();
    let bad = |m: String| CliError::Runtime(format!("{}: {m}", path.display()));
    if header.get(0) != Some("label") || header.len() < 2 {
        return Err(bad("first column must be 'label'".into()));
    }
    let steps = header.iter().skip(1).filter_map(|c| c.split('_').next()).collect::<std::collections::BTreeSet<_>>().len();
    let width = header.len() - 1;
    if steps == 0 || width % steps != 0 {
        return Err(bad("columns do not form a [steps x features] grid".into()));
    }
    let f = width / steps;
    if header.iter().skip(1).ne(window_header(steps, f).iter().skip(1).map(String::as_str)) {
        return Err(bad("unexpected column names".into()));
    }
    let mut xs = Vec::new();
    let mut labels = Vec::new();
    for (i, rec) in r.records().enumerate() {
        let rec = rec?;
        let row = i + 2;
        labels.push(rec[0].parse::<usize>().map_err(|e| bad(format!("row {row}: label: {e}")))?);
        for v in rec.iter().skip(1) {
            xs.push(v.parse::<f64>().map_err(|e| bad(format!("row {row}: {e}")))?);
        }
    }
    Ok(Dataset::new(steps, f, xs, labels)?)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SavedParam {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Everything needed to rebuild a trained model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub format_version: u32,
    pub config: ModelConfig,
    pub normalizer: Normalizer,
    pub params: Vec<SavedParam>,
}

impl Checkpoint {
    pub fn from_model(m: &Model) -> Self {
        Self {
            format_version: CHECKPOINT_VERSION,
            config: m.config.clone(),
            normalizer: m.normalizer.clone(),
            params: m
                .params
                .iter()
                .map(|p| SavedParam { name: p.name.clone(), shape: p.value.shape().to_vec(), data: p.value.data().to_vec() })
                .collect(),
        }
    }

    pub fn to_model(&self) -> CliResult<Model> {
        if self.format_version != CHECKPOINT_VERSION {
            return Err(CliError::Runtime(format!(
                "checkpoint format {} is not supported (expected {})",
                self.format_version, CHECKPOINT_VERSION
            )));
        }
        let weights = self
            .params
            .iter()
            .map(|p| Ok((p.name.clone(), Tensor::new(p.shape.clone(), p.data.clone())?)))
            .collect::<Result<Vec<_>, qsta_core::Error>>()?;
        Ok(Model::from_weights(self.config.clone(), self.normalizer.clone(), weights)?)
    }

    pub fn save(&self, path: &Path) -> CliResult<()> {
        write_json(path, self)
    }

    pub fn load(path: &Path) -> CliResult<Self> {
        read_json(path)
    }
}
