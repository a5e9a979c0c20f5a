use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::data::{PreparedData, Samples};
use super::train::{Model, TrainingLog};
use crate::error::{Error, Result};
use crate::featurize::{NormalizationStats, Timesteps};
use crate::metrics::{accuracy, auc, confusion, Confusion, DEFAULT_THRESHOLD};

pub const ARTIFACT_FORMAT: &str = "fbt-model-1";

/// Everything needed to score new episodes: config, schema columns,
/// normalization and parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelArtifact {
    pub format: String,
    pub config: ExperimentConfig,
    pub columns: Vec<String>,
    pub timesteps: Option<usize>,
    pub normalization: NormalizationStats,
    pub dataset_fingerprint: String,
    pub training: TrainingLog,
    pub model: Model,
}

impl ModelArtifact {
    pub fn new(config: &ExperimentConfig, data: &PreparedData, model: Model, training: TrainingLog) -> Self {
        ModelArtifact {
            format: ARTIFACT_FORMAT.into(),
            config: config.clone(),
            columns: data.columns.clone(),
            timesteps: data.timesteps,
            normalization: data.stats.clone(),
            dataset_fingerprint: data.fingerprint(),
            training,
            model,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let a: ModelArtifact = serde_json::from_str(text)?;
        if a.format != ARTIFACT_FORMAT {
            return Err(Error::Invalid(format!(
                "unsupported model format `{}` (expected {ARTIFACT_FORMAT})",
                a.format
            )));
        }
        Ok(a)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRow {
    pub patient_id: String,
    pub label: bool,
    pub probability: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitMetrics {
    pub accuracy: f64,
    pub auc: f64,
}

/// Test-set evaluation; validation metrics are carried for the log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub config: ExperimentConfig,
    pub seed: u64,
    pub dataset_fingerprint: String,
    pub threshold: f64,
    pub n_test: usize,
    pub accuracy: f64,
    pub auc: f64,
    pub confusion: Confusion,
    pub validation: SplitMetrics,
    pub predictions: Vec<PredictionRow>,
    /// Wall-clock seconds; kept out of the serialized form so reports are
    /// byte-identical across runs.
    #[serde(skip)]
    pub runtime_seconds: f64,
}

pub fn split_metrics(model: &Model, s: &Samples) -> Result<(SplitMetrics, Vec<f64>)> {
    let p = model.predict_all(&s.x);
    Ok((
        SplitMetrics {
            accuracy: accuracy(&p, &s.y)?,
            auc: auc(&p, &s.y)?,
        },
        p,
    ))
}

pub fn evaluate(artifact: &ModelArtifact, data: &PreparedData) -> Result<EvalReport> {
    if artifact.columns != data.columns || artifact.timesteps != data.timesteps {
        return Err(Error::Shape(
            "model and feature table disagree on columns or timesteps".into(),
        ));
    }
    let model = &artifact.model;
    let (test, probs) = split_metrics(model, &data.test)?;
    let (validation, _) = split_metrics(model, &data.val)?;
    Ok(EvalReport {
        config: artifact.config.clone(),
        seed: artifact.config.seed,
        dataset_fingerprint: data.fingerprint(),
        threshold: DEFAULT_THRESHOLD,
        n_test: data.test.len(),
        accuracy: test.accuracy,
        auc: test.auc,
        confusion: confusion(&probs, &data.test.y, DEFAULT_THRESHOLD)?,
        validation,
        predictions: data
            .test
            .ids
            .iter()
            .zip(&data.test.y)
            .zip(&probs)
            .map(|((id, y), p)| PredictionRow {
                patient_id: id.clone(),
                label: *y,
                probability: *p,
            })
            .collect(),
        runtime_seconds: 0.0,
    })
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn predictions_csv(&self) -> String {
        let mut s = String::from("patient_id,label,probability\n");
        for p in &self.predictions {
            let _ = writeln!(s, "{},{},{}", p.patient_id, u8::from(p.label), p.probability);
        }
        s
    }
}

/// Mean attention weight per timestep over a sample of cases.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionReport {
    pub timesteps: usize,
    pub cases: usize,
    /// Start of each bin, in minutes before FBT.
    pub minutes_before_fbt: Vec<i64>,
    pub mean_weight: Vec<f64>,
}

/// Default number of cases averaged in an attention report.
pub const ATTENTION_SAMPLE: usize = 300;

/// Averages attention over `sample` test cases drawn with `seed`, or over
/// all of them when there are fewer.
pub fn attention_report(
    model: &Model,
    test: &Samples,
    timesteps: Timesteps,
    sample: usize,
    seed: u64,
) -> Result<AttentionReport> {
    if !model.has_attention() {
        return Err(Error::NoAttention);
    }
    if test.is_empty() {
        return Err(Error::Invalid("no test cases for the attention report".into()));
    }
    let mut idx: Vec<usize> = (0..test.len()).collect();
    if idx.len() > sample {
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        idx.truncate(sample);
        idx.sort_unstable();
    }
    let t = timesteps.get();
    let mut mean = vec![0.0; t];
    for &i in &idx {
        let w = model.attention(&test.x[i]).ok_or(Error::NoAttention)?;
        if w.len() != t {
            return Err(Error::Shape(format!("attention has {} weights, expected {t}", w.len())));
        }
        for (m, v) in mean.iter_mut().zip(w) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= idx.len() as f64);
    Ok(AttentionReport {
        timesteps: t,
        cases: idx.len(),
        minutes_before_fbt: (0..t).map(|k| timesteps.minutes_before_fbt(k)).collect(),
        mean_weight: mean,
    })
}

impl AttentionReport {
    /// Two columns for plotting.
    pub fn to_tsv(&self) -> String {
        let mut s = String::from("minutes_before_fbt\tmean_weight\n");
        for (m, w) in self.minutes_before_fbt.iter().zip(&self.mean_weight) {
            let _ = writeln!(s, "{m}\t{w}");
        }
        s
    }

    /// Share of attention mass on the last `fraction` of timesteps.
    pub fn tail_mass(&self, fraction: f64) -> f64 {
        let k = ((self.timesteps as f64) * fraction).round() as usize;
        self.mean_weight[self.timesteps - k..].iter().sum()
    }
}
