//! Cohort selection, first-FBT detection and blood-pressure response labels.

use std::collections::BTreeMap;
use std::fmt::{self, Write as _};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::schema::{EventKind, EventStream, FluidClass, Minute, PatientRecord};

/// Thresholds and windows of the cohort rules. All comparisons against
/// thresholds are strict except the hypotension bound (`<=`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CohortConfig {
    pub min_age: f64,
    pub min_stay_minutes: Minute,
    pub fbt_search_minutes: Minute,
    pub fbt_min_rate: f64,
    pub fbt_min_volume: f64,
    pub hypotension_map: f64,
    /// Maximum age of the MAP reading carried forward to FBT start.
    pub map_lookback_minutes: Minute,
    pub response_ratio: f64,
    pub response_window_minutes: Minute,
    pub baseline_before_minutes: Minute,
    pub baseline_after_minutes: Minute,
}

impl Default for CohortConfig {
    fn default() -> Self {
        CohortConfig {
            min_age: 18.0,
            min_stay_minutes: 12 * 60,
            fbt_search_minutes: 24 * 60,
            fbt_min_rate: 248.0,
            fbt_min_volume: 248.0,
            hypotension_map: 65.0,
            map_lookback_minutes: 60,
            response_ratio: 1.15,
            response_window_minutes: 120,
            baseline_before_minutes: 30,
            baseline_after_minutes: 10,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    Under18,
    StayLt12h,
    NoFbtIn24h,
    NotHypotensive,
    InsufficientMapData,
}

impl ExclusionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ExclusionReason::Under18 => "under_18",
            ExclusionReason::StayLt12h => "stay_lt_12h",
            ExclusionReason::NoFbtIn24h => "no_fbt_in_24h",
            ExclusionReason::NotHypotensive => "not_hypotensive",
            ExclusionReason::InsufficientMapData => "insufficient_map_data",
        }
    }

    pub const ALL: [ExclusionReason; 5] = [
        ExclusionReason::Under18,
        ExclusionReason::StayLt12h,
        ExclusionReason::NoFbtIn24h,
        ExclusionReason::NotHypotensive,
        ExclusionReason::InsufficientMapData,
    ];
}

impl fmt::Display for ExclusionReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExclusionReason {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        ExclusionReason::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown exclusion reason `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Success,
    Failure,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Success => "success",
            Outcome::Failure => "failure",
        }
    }

    /// 1.0 for success, 0.0 for failure.
    pub fn as_target(self) -> f64 {
        match self {
            Outcome::Success => 1.0,
            Outcome::Failure => 0.0,
        }
    }
}

impl FromStr for Outcome {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "success" => Ok(Outcome::Success),
            "failure" => Ok(Outcome::Failure),
            _ => Err(format!("unknown outcome `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DetectedFbt {
    pub start: Minute,
    pub rate: f64,
    pub volume: f64,
}

/// Either a label or an exclusion reason, never both.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeStatus {
    Included(Outcome),
    Excluded(ExclusionReason),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FbtEpisode {
    pub patient_id: String,
    pub fbt: Option<DetectedFbt>,
    pub map_at_start: Option<f64>,
    pub status: EpisodeStatus,
}

impl FbtEpisode {
    pub fn label(&self) -> Option<Outcome> {
        match self.status {
            EpisodeStatus::Included(o) => Some(o),
            EpisodeStatus::Excluded(_) => None,
        }
    }

    pub fn exclusion_reason(&self) -> Option<ExclusionReason> {
        match self.status {
            EpisodeStatus::Included(_) => None,
            EpisodeStatus::Excluded(r) => Some(r),
        }
    }

    pub fn is_included(&self) -> bool {
        matches!(self.status, EpisodeStatus::Included(_))
    }

    /// FBT start of an included episode.
    pub fn fbt_start(&self) -> Option<Minute> {
        self.fbt.map(|f| f.start)
    }
}

/// Earliest crystalloid infusion with rate and volume both above threshold,
/// starting within the search window after ICU admission.
pub fn detect_first_fbt(stream: &EventStream, icu_admit: Minute, cfg: &CohortConfig) -> Option<DetectedFbt> {
    stream
        .between(icu_admit, icu_admit + cfg.fbt_search_minutes)
        .iter()
        .filter(|e| e.kind == EventKind::FluidInfusion)
        .filter_map(|e| e.infusion.map(|i| (e.time, i)))
        .find(|(_, i)| {
            i.fluid_class == FluidClass::Crystalloid && i.rate > cfg.fbt_min_rate && i.volume > cfg.fbt_min_volume
        })
        .map(|(start, i)| DetectedFbt {
            start,
            rate: i.rate,
            volume: i.volume,
        })
}

/// Most recent MAP at or before `at`, no older than the lookback cap.
pub fn map_at(stream: &EventStream, at: Minute, lookback: Minute) -> Option<f64> {
    stream
        .observations(EventKind::MeanArterialPressure, at - lookback, at)
        .last()
        .map(|(_, v)| v)
}

/// Result of [`label_episode`] when both windows have data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelDetail {
    pub outcome: Outcome,
    pub max_after: f64,
    pub baseline_mean: f64,
}

/// Success iff the maximum MAP in `[start, start+120]` exceeds 1.15 times
/// the mean MAP in `[start-30, start+10]`. Both windows are closed. Returns
/// `None` when either window has no MAP observation.
pub fn label_episode(stream: &EventStream, fbt_start: Minute, cfg: &CohortConfig) -> Option<LabelDetail> {
    let max_after = stream
        .observations(
            EventKind::MeanArterialPressure,
            fbt_start,
            fbt_start + cfg.response_window_minutes,
        )
        .map(|(_, v)| v)
        .fold(None, |acc: Option<f64>, v| Some(acc.map_or(v, |a| a.max(v))))?;
    let (sum, count) = stream
        .observations(
            EventKind::MeanArterialPressure,
            fbt_start - cfg.baseline_before_minutes,
            fbt_start + cfg.baseline_after_minutes,
        )
        .fold((0.0, 0usize), |(s, n), (_, v)| (s + v, n + 1));
    if count == 0 {
        return None;
    }
    let baseline_mean = sum / count as f64;
    let outcome = if max_after > cfg.response_ratio * baseline_mean {
        Outcome::Success
    } else {
        Outcome::Failure
    };
    Some(LabelDetail {
        outcome,
        max_after,
        baseline_mean,
    })
}

/// Apply the inclusion rules in order to one patient.
pub fn evaluate_patient(patient: &PatientRecord, stream: &EventStream, cfg: &CohortConfig) -> FbtEpisode {
    let excluded = |reason, fbt, map| FbtEpisode {
        patient_id: patient.patient_id.clone(),
        fbt,
        map_at_start: map,
        status: EpisodeStatus::Excluded(reason),
    };
    if patient.age <= cfg.min_age {
        return excluded(ExclusionReason::Under18, None, None);
    }
    if patient.stay_minutes() <= cfg.min_stay_minutes {
        return excluded(ExclusionReason::StayLt12h, None, None);
    }
    let Some(fbt) = detect_first_fbt(stream, patient.icu_admit, cfg) else {
        return excluded(ExclusionReason::NoFbtIn24h, None, None);
    };
    let map = map_at(stream, fbt.start, cfg.map_lookback_minutes);
    match map {
        None => return excluded(ExclusionReason::InsufficientMapData, Some(fbt), None),
        Some(m) if m > cfg.hypotension_map => return excluded(ExclusionReason::NotHypotensive, Some(fbt), map),
        Some(_) => {}
    }
    match label_episode(stream, fbt.start, cfg) {
        Some(detail) => FbtEpisode {
            patient_id: patient.patient_id.clone(),
            fbt: Some(fbt),
            map_at_start: map,
            status: EpisodeStatus::Included(detail.outcome),
        },
        None => excluded(ExclusionReason::InsufficientMapData, Some(fbt), map),
    }
}

/// One episode per patient, ordered by patient id.
pub fn select_cohort(ds: &Dataset, cfg: &CohortConfig) -> Vec<FbtEpisode> {
    ds.patients
        .values()
        .map(|p| {
            let empty;
            let stream = match ds.stream(&p.patient_id) {
                Some(s) => s,
                None => {
                    empty = EventStream::new(p.patient_id.clone(), Vec::new());
                    &empty
                }
            };
            evaluate_patient(p, stream, cfg)
        })
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CohortSummary {
    pub total: usize,
    pub included: usize,
    pub success: usize,
    pub failure: usize,
    pub exclusions: BTreeMap<ExclusionReason, usize>,
    pub fbt_rate_mean: f64,
    pub fbt_volume_mean: f64,
    pub fbt_start_mean: f64,
    pub map_at_start_mean: f64,
}

pub fn summarize(episodes: &[FbtEpisode]) -> CohortSummary {
    let mut s = CohortSummary {
        total: episodes.len(),
        ..Default::default()
    };
    let mut sums = [0.0f64; 4];
    for e in episodes {
        match e.status {
            EpisodeStatus::Included(o) => {
                s.included += 1;
                match o {
                    Outcome::Success => s.success += 1,
                    Outcome::Failure => s.failure += 1,
                }
                let fbt = e.fbt.expect("included episode has an FBT");
                sums[0] += fbt.rate;
                sums[1] += fbt.volume;
                sums[2] += fbt.start as f64;
                sums[3] += e.map_at_start.unwrap_or(f64::NAN);
            }
            EpisodeStatus::Excluded(r) => *s.exclusions.entry(r).or_default() += 1,
        }
    }
    if s.included > 0 {
        let n = s.included as f64;
        s.fbt_rate_mean = sums[0] / n;
        s.fbt_volume_mean = sums[1] / n;
        s.fbt_start_mean = sums[2] / n;
        s.map_at_start_mean = sums[3] / n;
    }
    s
}

impl CohortSummary {
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "patients\t{}", self.total);
        let _ = writeln!(out, "included\t{}", self.included);
        let _ = writeln!(out, "label_success\t{}", self.success);
        let _ = writeln!(out, "label_failure\t{}", self.failure);
        for r in ExclusionReason::ALL {
            let _ = writeln!(out, "excluded:{}\t{}", r, self.exclusions.get(&r).copied().unwrap_or(0));
        }
        let _ = writeln!(out, "fbt_rate_mean_ml_hr\t{:.3}", self.fbt_rate_mean);
        let _ = writeln!(out, "fbt_volume_mean_ml\t{:.3}", self.fbt_volume_mean);
        let _ = writeln!(out, "fbt_start_mean_min\t{:.3}", self.fbt_start_mean);
        let _ = writeln!(out, "map_at_start_mean\t{:.3}", self.map_at_start_mean);
        out
    }
}

const COHORT_COLUMNS: [&str; 8] = [
    "patient_id",
    "status",
    "label",
    "exclusion_reason",
    "fbt_start",
    "fbt_rate",
    "fbt_volume",
    "map_at_start",
];

/// Per-patient inclusion/exclusion table.
pub fn write_cohort<W: std::io::Write>(episodes: &[FbtEpisode], w: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    writer.write_record(COHORT_COLUMNS)?;
    for e in episodes {
        let (status, label, reason) = match e.status {
            EpisodeStatus::Included(o) => ("included", o.as_str(), ""),
            EpisodeStatus::Excluded(r) => ("excluded", "", r.as_str()),
        };
        let (start, rate, volume) = match e.fbt {
            Some(f) => (f.start.to_string(), f.rate.to_string(), f.volume.to_string()),
            None => Default::default(),
        };
        writer.write_record([
            e.patient_id.as_str(),
            status,
            label,
            reason,
            &start,
            &rate,
            &volume,
            &e.map_at_start.map(|m| m.to_string()).unwrap_or_default(),
        ])?;
    }
    writer.flush().map_err(|e| Error::io("<cohort writer>", e))?;
    Ok(())
}

pub fn read_cohort<R: std::io::Read>(input: R, file: &str) -> Result<Vec<FbtEpisode>> {
    let mut reader = csv::Reader::from_reader(input);
    let headers: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if headers != COHORT_COLUMNS {
        return Err(Error::Header {
            file: file.to_string(),
            expected: COHORT_COLUMNS.join(","),
            found: headers.join(","),
        });
    }
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let num = |i: usize| -> Result<Option<f64>> {
            match row[i].trim() {
                "" => Ok(None),
                s => s
                    .parse::<f64>()
                    .map(Some)
                    .map_err(|_| Error::parse(file, line, format!("bad number `{s}`"))),
            }
        };
        let status = match &row[1] {
            "included" => EpisodeStatus::Included(row[2].parse().map_err(|e: String| Error::parse(file, line, e))?),
            "excluded" => EpisodeStatus::Excluded(row[3].parse().map_err(|e: String| Error::parse(file, line, e))?),
            other => return Err(Error::parse(file, line, format!("unknown status `{other}`"))),
        };
        let fbt = match row[4].trim() {
            "" => None,
            s => Some(DetectedFbt {
                start: s
                    .parse()
                    .map_err(|_| Error::parse(file, line, format!("bad fbt_start `{s}`")))?,
                rate: num(5)?.unwrap_or(0.0),
                volume: num(6)?.unwrap_or(0.0),
            }),
        };
        if matches!(status, EpisodeStatus::Included(_)) && fbt.is_none() {
            return Err(Error::parse(file, line, "included episode without fbt_start"));
        }
        out.push(FbtEpisode {
            patient_id: row[0].to_string(),
            fbt,
            map_at_start: num(7)?,
            status,
        });
    }
    Ok(out)
}
