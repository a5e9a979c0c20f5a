//! Time-aggregated vectors and equal-interval time series built from an
//! episode's event stream, plus normalization, imputation and splitting.

mod io;
mod normalize;
mod split;

pub use io::{read_features, write_features, FeatureTable};
pub use normalize::{apply_normalization, fit_normalization, NormalizationStats};
pub use split::{split, Partition, SplitAssignment};

use serde::{Deserialize, Serialize};

use crate::cohort::{FbtEpisode, Outcome};
use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::schema::{EventKind, EventStream, FeatureSchema, Minute, PatientRecord, ANCHORS};

/// Statistic used inside aggregation windows and resampling bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Aggregator {
    #[default]
    Mean,
    Last,
}

impl std::str::FromStr for Aggregator {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "mean" => Ok(Aggregator::Mean),
            "last" => Ok(Aggregator::Last),
            _ => Err(format!("unknown aggregator `{s}`")),
        }
    }
}

impl Aggregator {
    pub fn as_str(self) -> &'static str {
        match self {
            Aggregator::Mean => "mean",
            Aggregator::Last => "last",
        }
    }

    fn reduce(self, values: impl Iterator<Item = f64>) -> Option<f64> {
        match self {
            Aggregator::Mean => {
                let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
                (n > 0).then(|| sum / n as f64)
            }
            Aggregator::Last => values.last(),
        }
    }
}

/// Half width of the ±30 minute windows around each anchor.
pub const ANCHOR_HALF_WINDOW: Minute = 30;
/// Length of the pre-FBT period covered by the time series.
pub const SERIES_LOOKBACK: Minute = 360;

/// Number of equal-interval timesteps in the pre-FBT series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "usize", into = "usize")]
pub struct Timesteps(usize);

impl Timesteps {
    pub const ALLOWED: [usize; 3] = [12, 36, 72];

    pub fn new(t: usize) -> Result<Self> {
        if Self::ALLOWED.contains(&t) {
            Ok(Timesteps(t))
        } else {
            Err(Error::Config(format!("timesteps must be one of 12, 36, 72 (got {t})")))
        }
    }

    pub fn get(self) -> usize {
        self.0
    }

    pub fn bin_minutes(self) -> Minute {
        SERIES_LOOKBACK / self.0 as Minute
    }

    /// Minutes before FBT start at which bin `t` begins.
    pub fn minutes_before_fbt(self, t: usize) -> Minute {
        SERIES_LOOKBACK - t as Minute * self.bin_minutes()
    }
}

impl TryFrom<usize> for Timesteps {
    type Error = Error;

    fn try_from(t: usize) -> Result<Self> {
        Timesteps::new(t)
    }
}

impl From<Timesteps> for usize {
    fn from(t: Timesteps) -> usize {
        t.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub aggregator: Aggregator,
}

/// Encoded static block: numeric passthrough, one-hot categories, flags.
pub fn static_block(schema: &FeatureSchema, p: &PatientRecord) -> Vec<Option<f64>> {
    let mut out = Vec::with_capacity(schema.static_width());
    for col in &schema.static_columns {
        let v = match col.name.as_str() {
            "age" => Some(p.age),
            "weight" => p.weight,
            "height" => p.height,
            "sofa" => p.sofa.map(f64::from),
            name => {
                if let Some(g) = name.strip_prefix("gender_") {
                    Some(f64::from(u8::from(p.gender.as_str() == g)))
                } else if let Some(e) = name.strip_prefix("ethnicity_") {
                    Some(f64::from(u8::from(p.ethnicity.as_str() == e)))
                } else if let Some(c) = name.strip_prefix("comorbidity_") {
                    crate::schema::COMORBIDITIES
                        .iter()
                        .position(|x| *x == c)
                        .map(|i| f64::from(u8::from(p.comorbidities[i])))
                } else {
                    None
                }
            }
        };
        out.push(v);
    }
    out
}

/// Fixed-length vector for the time-aggregated setting.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregatedFeatures {
    pub patient_id: String,
    pub values: Vec<Option<f64>>,
}

impl AggregatedFeatures {
    pub fn missing_mask(&self) -> Vec<bool> {
        self.values.iter().map(Option::is_none).collect()
    }
}

/// Static block followed by, for each anchor at FBT−360, FBT−120 and FBT,
/// the window statistic of every time-varying feature except MAP over
/// `[anchor−30, anchor+30]`. Empty windows are missing, except vasopressor
/// rates which default to 0.
pub fn aggregate_features(
    schema: &FeatureSchema,
    patient: &PatientRecord,
    stream: &EventStream,
    fbt_start: Minute,
    cfg: &FeatureConfig,
) -> AggregatedFeatures {
    let mut values = static_block(schema, patient);
    let kinds = schema.aggregated_kinds();
    for anchor in ANCHORS {
        let center = fbt_start + anchor;
        let window = stream.between(center - ANCHOR_HALF_WINDOW, center + ANCHOR_HALF_WINDOW);
        for &kind in &kinds {
            let v = cfg
                .aggregator
                .reduce(window.iter().filter(|e| e.kind == kind).map(|e| e.value));
            values.push(match v {
                None if kind.is_vasopressor() => Some(0.0),
                v => v,
            });
        }
    }
    AggregatedFeatures {
        patient_id: patient.patient_id.clone(),
        values,
    }
}

/// Row-major `T × F` matrix for the time-series setting.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesFeatures {
    pub patient_id: String,
    pub timesteps: Timesteps,
    pub width: usize,
    pub values: Vec<Option<f64>>,
}

impl SeriesFeatures {
    pub fn row(&self, t: usize) -> &[Option<f64>] {
        &self.values[t * self.width..(t + 1) * self.width]
    }

    pub fn missing_mask(&self) -> Vec<bool> {
        self.values.iter().map(Option::is_none).collect()
    }
}

/// Split `[fbt−360, fbt)` into `T` equal bins. Each time-varying cell is the
/// bin statistic; empty bins carry the latest earlier bin forward; leading
/// empty bins stay missing (vasopressors: 0). Static columns repeat on every
/// row.
pub fn resample_series(
    schema: &FeatureSchema,
    patient: &PatientRecord,
    stream: &EventStream,
    fbt_start: Minute,
    timesteps: Timesteps,
    cfg: &FeatureConfig,
) -> SeriesFeatures {
    let statics = static_block(schema, patient);
    let n_tv = schema.time_varying.len();
    let width = statics.len() + n_tv;
    let t_count = timesteps.get();
    let bin = timesteps.bin_minutes();
    let start = fbt_start - SERIES_LOOKBACK;
    let mut bins: Vec<Vec<Vec<f64>>> = vec![vec![Vec::new(); n_tv]; t_count];
    let column_of: Vec<Option<usize>> = {
        let mut m = vec![None; EventKind::TIME_VARYING.len() + 1];
        for (c, k) in schema.time_varying.iter().enumerate() {
            m[*k as usize] = Some(c);
        }
        m
    };
    for e in stream.between(start, fbt_start - 1) {
        let Some(col) = column_of[e.kind as usize] else {
            continue;
        };
        let b = ((e.time - start) / bin) as usize;
        bins[b.min(t_count - 1)][col].push(e.value);
    }
    let mut values = Vec::with_capacity(t_count * width);
    let mut carried: Vec<Option<f64>> = schema
        .time_varying
        .iter()
        .map(|k| if k.is_vasopressor() { Some(0.0) } else { None })
        .collect();
    for row in bins {
        values.extend(statics.iter().copied());
        for (col, obs) in row.into_iter().enumerate() {
            if let Some(v) = cfg.aggregator.reduce(obs.into_iter()) {
                carried[col] = Some(v);
            }
            values.push(carried[col]);
        }
    }
    SeriesFeatures {
        patient_id: patient.patient_id.clone(),
        timesteps,
        width,
        values,
    }
}

/// Feature rows for every included episode, in episode order. `timesteps`
/// selects the series setting; `None` gives aggregated vectors.
pub fn build_table(
    ds: &Dataset,
    episodes: &[FbtEpisode],
    schema: &FeatureSchema,
    timesteps: Option<Timesteps>,
    cfg: &FeatureConfig,
) -> Result<FeatureTable> {
    let columns = match timesteps {
        None => schema.aggregated_columns(),
        Some(_) => schema.series_columns(),
    };
    let mut table = FeatureTable {
        columns,
        timesteps: timesteps.map(Timesteps::get),
        ids: Vec::new(),
        labels: Vec::new(),
        values: Vec::new(),
    };
    for ep in episodes {
        let (Some(outcome), Some(start)) = (ep.label(), ep.fbt_start()) else {
            continue;
        };
        let patient = ds
            .patients
            .get(&ep.patient_id)
            .ok_or_else(|| Error::Invalid(format!("episode for unknown patient `{}`", ep.patient_id)))?;
        let empty = EventStream::new(ep.patient_id.clone(), Vec::new());
        let stream = ds.stream(&ep.patient_id).unwrap_or(&empty);
        let values = match timesteps {
            None => aggregate_features(schema, patient, stream, start, cfg).values,
            Some(t) => resample_series(schema, patient, stream, start, t, cfg).values,
        };
        table.ids.push(ep.patient_id.clone());
        table.labels.push(outcome == Outcome::Success);
        table.values.push(values);
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::schema::{Ethnicity, Event, Gender, COMORBIDITIES};

    fn patient() -> PatientRecord {
        PatientRecord {
            patient_id: "p".into(),
            age: 70.0,
            gender: Gender::Male,
            ethnicity: Ethnicity::Asian,
            weight: None,
            height: Some(170.0),
            sofa: Some(5),
            comorbidities: (0..COMORBIDITIES.len()).map(|i| i == 2).collect(),
            icu_admit: 0,
            icu_discharge: 5000,
        }
    }

    fn col(schema: &FeatureSchema, name: &str) -> usize {
        schema.aggregated_columns().iter().position(|c| c == name).unwrap()
    }

    #[test]
    fn window_mean_at_anchor() {
        let schema = FeatureSchema::default();
        let fbt = 1000;
        let s = EventStream::new(
            "p",
            vec![
                Event::measurement(fbt - 390, EventKind::HeartRate, 80.0),
                Event::measurement(fbt - 360, EventKind::HeartRate, 84.0),
                Event::measurement(fbt - 329, EventKind::HeartRate, 500.0),
            ],
        );
        let f = aggregate_features(&schema, &patient(), &s, fbt, &FeatureConfig::default());
        assert_eq!(f.values[col(&schema, "heart_rate@t-360")], Some(82.0));
        assert_eq!(f.values[col(&schema, "lactate@t-120")], None);
        assert_eq!(f.values.len(), schema.aggregated_columns().len());
    }

    #[test]
    fn static_block_encoding() {
        let schema = FeatureSchema::default();
        let f = static_block(&schema, &patient());
        assert_eq!(f[0], Some(70.0));
        assert_eq!(f[1], None);
        let names = schema.aggregated_columns();
        let idx = |n: &str| names.iter().position(|c| c == n).unwrap();
        assert_eq!(f[idx("gender_male")], Some(1.0));
        assert_eq!(f[idx("gender_female")], Some(0.0));
        assert_eq!(f[idx("ethnicity_asian")], Some(1.0));
        assert_eq!(f[idx("comorbidity_valvular_disease")], Some(1.0));
        assert_eq!(f[idx("comorbidity_aids")], Some(0.0));
    }

    #[test]
    fn map_is_not_an_aggregated_feature() {
        let schema = FeatureSchema::default();
        let s = EventStream::new(
            "p",
            vec![Event::measurement(1000, EventKind::MeanArterialPressure, 55.0)],
        );
        let f = aggregate_features(&schema, &patient(), &s, 1000, &FeatureConfig::default());
        assert!(!schema.aggregated_columns().iter().any(|c| c.contains("mean_arterial")));
        assert!(!f.values.contains(&Some(55.0)));
    }

    #[test]
    fn vasopressor_window_defaults_to_zero() {
        let schema = FeatureSchema::default();
        let s = EventStream::new("p", vec![]);
        let f = aggregate_features(&schema, &patient(), &s, 1000, &FeatureConfig::default());
        assert_eq!(f.values[col(&schema, "norepinephrine_rate@t0")], Some(0.0));
        assert_eq!(f.values[col(&schema, "heart_rate@t0")], None);
    }

    #[test]
    fn bin_widths() {
        assert_eq!(Timesteps::new(12).unwrap().bin_minutes(), 30);
        assert_eq!(Timesteps::new(36).unwrap().bin_minutes(), 10);
        assert_eq!(Timesteps::new(72).unwrap().bin_minutes(), 5);
        assert!(matches!(Timesteps::new(24), Err(Error::Config(_))));
    }

    #[test]
    fn forward_fill_between_bins() {
        let schema = FeatureSchema::default();
        let fbt = 1000;
        let t = Timesteps::new(12).unwrap();
        let s = EventStream::new(
            "p",
            vec![
                Event::measurement(fbt - 360, EventKind::HeartRate, 70.0),
                Event::measurement(fbt - 300, EventKind::HeartRate, 74.0),
                // at FBT start: excluded from the half-open window
                Event::measurement(fbt, EventKind::HeartRate, 1.0),
            ],
        );
        let f = resample_series(&schema, &patient(), &s, fbt, t, &FeatureConfig::default());
        let hr = schema.static_width();
        assert_eq!(f.row(0)[hr], Some(70.0));
        assert_eq!(f.row(1)[hr], Some(70.0));
        assert_eq!(f.row(2)[hr], Some(74.0));
        assert_eq!(f.row(11)[hr], Some(74.0));
        // static columns replicated
        for r in 0..12 {
            assert_eq!(f.row(r)[0], Some(70.0));
        }
    }

    #[test]
    fn leading_empty_bins_missing_and_vasopressor_zero() {
        let schema = FeatureSchema::default();
        let t = Timesteps::new(36).unwrap();
        let s = EventStream::new("p", vec![Event::measurement(995, EventKind::Lactate, 2.0)]);
        let f = resample_series(&schema, &patient(), &s, 1000, t, &FeatureConfig::default());
        assert_eq!(f.values.len(), 36 * f.width);
        let lactate = schema.static_width() + EventKind::Lactate.feature_index().unwrap();
        let norepi = schema.static_width() + EventKind::NorepinephrineRate.feature_index().unwrap();
        assert_eq!(f.row(0)[lactate], None);
        assert_eq!(f.row(35)[lactate], Some(2.0));
        assert!((0..36).all(|r| f.row(r)[norepi] == Some(0.0)));
    }

    #[test]
    fn last_aggregator() {
        let schema = FeatureSchema::default();
        let s = EventStream::new(
            "p",
            vec![
                Event::measurement(-10, EventKind::HeartRate, 80.0),
                Event::measurement(10, EventKind::HeartRate, 90.0),
            ],
        );
        let cfg = FeatureConfig {
            aggregator: Aggregator::Last,
        };
        let f = aggregate_features(&schema, &patient(), &s, 0, &cfg);
        assert_eq!(f.values[col(&schema, "heart_rate@t0")], Some(90.0));
    }
}
