use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::featurize::{
    apply_normalization, fit_normalization, FeatureTable, NormalizationStats, Partition, SplitAssignment,
};

/// Normalized samples of one partition. Series samples are flattened
/// `T × F` row-major.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Samples {
    pub ids: Vec<String>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<bool>,
}

impl Samples {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn pairs(&self) -> Vec<(&[f64], bool)> {
        self.x.iter().map(Vec::as_slice).zip(self.y.iter().copied()).collect()
    }
}

/// Train / validation / test matrices with normalization fitted on train.
#[derive(Debug, Clone, PartialEq)]
pub struct PreparedData {
    pub columns: Vec<String>,
    pub timesteps: Option<usize>,
    pub stats: NormalizationStats,
    pub train: Samples,
    pub val: Samples,
    pub test: Samples,
}

impl PreparedData {
    /// Fits normalization on the training partition and applies it to all.
    pub fn new(table: &FeatureTable, split: &SplitAssignment) -> Result<Self> {
        let in_train = |id: &str| split.get(id) == Some(Partition::Train);
        let stats = fit_normalization(&table.columns, table.rows_where(in_train))?;
        Self::with_stats(table, split, stats)
    }

    /// Applies previously fitted statistics.
    pub fn with_stats(table: &FeatureTable, split: &SplitAssignment, stats: NormalizationStats) -> Result<Self> {
        if stats.columns != table.columns {
            return Err(Error::Shape(
                "normalization columns do not match the feature table".into(),
            ));
        }
        let mut out = PreparedData {
            columns: table.columns.clone(),
            timesteps: table.timesteps,
            stats,
            train: Samples::default(),
            val: Samples::default(),
            test: Samples::default(),
        };
        for ((id, label), values) in table.ids.iter().zip(&table.labels).zip(&table.values) {
            let part = match split.get(id) {
                Some(Partition::Train) => &mut out.train,
                Some(Partition::Val) => &mut out.val,
                Some(Partition::Test) => &mut out.test,
                None => return Err(Error::Invalid(format!("episode `{id}` has no split assignment"))),
            };
            part.ids.push(id.clone());
            part.y.push(*label);
            part.x.push(apply_normalization(values, &out.stats));
        }
        for (name, part) in [("train", &out.train), ("val", &out.val), ("test", &out.test)] {
            if part.is_empty() {
                return Err(Error::Invalid(format!("{name} partition is empty")));
            }
        }
        Ok(out)
    }

    /// Width of one input row.
    pub fn width(&self) -> usize {
        self.columns.len()
    }

    pub fn rows(&self) -> usize {
        self.timesteps.unwrap_or(1)
    }

    /// SHA-256 over columns, ids, labels and normalized values.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        for c in &self.columns {
            h.update(c.as_bytes());
            h.update([0]);
        }
        for part in [&self.train, &self.val, &self.test] {
            for ((id, y), x) in part.ids.iter().zip(&part.y).zip(&part.x) {
                h.update(id.as_bytes());
                h.update([u8::from(*y)]);
                for v in x {
                    h.update(v.to_le_bytes());
                }
            }
        }
        hex::encode(h.finalize())
    }
}
