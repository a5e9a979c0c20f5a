//! Synthetic cohorts with a planted, configurable predictive signal.
//!
//! Every patient gets one qualifying crystalloid bolus in the first day and
//! a MAP trajectory built backward from the response rule, so the labeler
//! reproduces the manifest label exactly.

use std::fmt;
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::cohort::{label_episode, CohortConfig, ExclusionReason, Outcome};
use crate::error::{Error, Result};
use crate::ingest::Dataset;
use crate::schema::{
    Ethnicity, Event, EventKind, EventStream, FluidClass, Gender, Minute, PatientRecord, COMORBIDITIES,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignalMode {
    None,
    StaticSparse,
    TemporalLate,
}

impl SignalMode {
    pub fn as_str(self) -> &'static str {
        match self {
            SignalMode::None => "none",
            SignalMode::StaticSparse => "static_sparse",
            SignalMode::TemporalLate => "temporal_late",
        }
    }
}

impl FromStr for SignalMode {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(SignalMode::None),
            "static_sparse" => Ok(SignalMode::StaticSparse),
            "temporal_late" => Ok(SignalMode::TemporalLate),
            _ => Err(Error::Config(format!(
                "unknown signal mode `{s}` (expected none, static_sparse or temporal_late)"
            ))),
        }
    }
}

impl fmt::Display for SignalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n_patients: usize,
    pub seed: u64,
    pub signal_mode: SignalMode,
    /// Scales every planted effect; 0 disables it.
    pub signal_strength: f64,
    /// Probability of dropping an observation.
    pub missingness: f64,
    pub prevalence: f64,
    /// Fraction of patients built to fail one inclusion rule.
    pub edge_case_rate: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_patients: 500,
            seed: 0,
            signal_mode: SignalMode::TemporalLate,
            signal_strength: 1.0,
            missingness: 0.1,
            prevalence: 0.5,
            edge_case_rate: 0.0,
        }
    }
}

/// Minutes before FBT over which `temporal_late` drifts are planted.
pub const LATE_WINDOW: Minute = 90;

/// The five aggregated columns `static_sparse` makes informative, with the
/// shift applied to successes (failures get the negated shift).
pub const SPARSE_SHIFTS: [(EventKind, f64); 5] = [
    (EventKind::RespiratoryRate, -1.6),
    (EventKind::DiastolicBp, 2.8),
    (EventKind::Temperature, -0.3),
    (EventKind::Bicarbonate, 2.8),
    (EventKind::BaseExcess, 2.6),
];

/// Names of the planted features for a mode, in the aggregated column
/// naming for `static_sparse`.
pub fn planted_features(mode: SignalMode) -> Vec<String> {
    match mode {
        SignalMode::None => Vec::new(),
        SignalMode::StaticSparse => SPARSE_SHIFTS.iter().map(|(k, _)| format!("{}@t0", k.name())).collect(),
        SignalMode::TemporalLate => vec![
            format!("{}@-{LATE_WINDOW}..0", EventKind::MeanArterialPressure.name()),
            format!("{}@-{LATE_WINDOW}..-30", EventKind::HeartRate.name()),
        ],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRow {
    pub patient_id: String,
    /// `None` for injected edge cases.
    pub label: Option<Outcome>,
    pub fbt_start: Minute,
    pub edge_case: Option<ExclusionReason>,
    /// Per-patient planted effect, e.g. `map_decline=7.2;hr_rise=3.9`.
    pub signal: String,
}

#[derive(Debug, Clone)]
pub struct SynthCohort {
    pub config: SynthConfig,
    pub patients: Vec<PatientRecord>,
    pub streams: Vec<EventStream>,
    pub manifest: Vec<ManifestRow>,
}

impl SynthCohort {
    pub fn dataset(&self) -> Result<Dataset> {
        Dataset::new(self.patients.clone(), self.streams.clone())
    }

    pub fn write_patients<W: Write>(&self, w: W) -> Result<()> {
        crate::ingest::write_patients(&self.patients, w)
    }

    pub fn write_events<W: Write>(&self, w: W) -> Result<()> {
        crate::ingest::write_events(&self.streams, w)
    }

    pub fn write_manifest<W: Write>(&self, w: W) -> Result<()> {
        let planted = planted_features(self.config.signal_mode).join(";");
        let mut writer = csv::Writer::from_writer(w);
        writer.write_record([
            "patient_id",
            "true_label",
            "fbt_start",
            "edge_case",
            "signal",
            "planted",
        ])?;
        for m in &self.manifest {
            writer.write_record([
                m.patient_id.as_str(),
                m.label.map(Outcome::as_str).unwrap_or(""),
                &m.fbt_start.to_string(),
                m.edge_case.map(ExclusionReason::as_str).unwrap_or(""),
                &m.signal,
                &planted,
            ])?;
        }
        writer.flush().map_err(|e| Error::io("<manifest writer>", e))?;
        Ok(())
    }
}

/// Reads `patient_id,true_label` pairs back from a manifest.
pub fn read_manifest_labels<R: std::io::Read>(input: R) -> Result<Vec<(String, Option<Outcome>)>> {
    let mut reader = csv::Reader::from_reader(input);
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let label = match &row[1] {
            "" => None,
            s => Some(s.parse().map_err(|e: String| Error::parse("manifest", line, e))?),
        };
        out.push((row[0].to_string(), label));
    }
    Ok(out)
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

fn round2(x: f64) -> f64 {
    (x * 100.0).round() / 100.0
}

/// Ornstein–Uhlenbeck deviation sampled at `times`, stationary sd `sd`,
/// mean-reversion time `tau` minutes.
fn ou_path(rng: &mut ChaCha8Rng, times: &[Minute], sd: f64, tau: f64) -> Vec<f64> {
    let std_normal = Normal::new(0.0, 1.0).unwrap();
    let mut x = sd * std_normal.sample(rng);
    let mut prev = times.first().copied().unwrap_or(0);
    times
        .iter()
        .map(|&t| {
            let a = (-((t - prev) as f64) / tau).exp();
            x = a * x + sd * (1.0 - a * a).sqrt() * std_normal.sample(rng);
            prev = t;
            x
        })
        .collect()
}

fn grid(from: Minute, to: Minute, step: Minute) -> Vec<Minute> {
    (0..).map(|i| from + i * step).take_while(|t| *t <= to).collect()
}

struct VitalSpec {
    kind: EventKind,
    step: Minute,
    mean: (f64, f64),
    sd: f64,
    noise: f64,
}

const VITALS: [VitalSpec; 7] = [
    VitalSpec {
        kind: EventKind::HeartRate,
        step: 10,
        mean: (75.0, 110.0),
        sd: 5.0,
        noise: 2.0,
    },
    VitalSpec {
        kind: EventKind::RespiratoryRate,
        step: 10,
        mean: (14.0, 24.0),
        sd: 2.0,
        noise: 1.0,
    },
    VitalSpec {
        kind: EventKind::OxygenSaturation,
        step: 10,
        mean: (93.0, 99.0),
        sd: 1.0,
        noise: 0.5,
    },
    VitalSpec {
        kind: EventKind::SystolicBp,
        step: 10,
        mean: (85.0, 105.0),
        sd: 5.0,
        noise: 3.0,
    },
    VitalSpec {
        kind: EventKind::DiastolicBp,
        step: 10,
        mean: (40.0, 55.0),
        sd: 4.0,
        noise: 2.0,
    },
    VitalSpec {
        kind: EventKind::Temperature,
        step: 60,
        mean: (36.5, 38.3),
        sd: 0.3,
        noise: 0.1,
    },
    VitalSpec {
        kind: EventKind::UrineOutput,
        step: 60,
        mean: (30.0, 90.0),
        sd: 15.0,
        noise: 10.0,
    },
];

struct LabSpec {
    kind: EventKind,
    mean: (f64, f64),
    within_sd: f64,
}

const LABS: [LabSpec; 9] = [
    LabSpec {
        kind: EventKind::Ph,
        mean: (7.25, 7.45),
        within_sd: 0.03,
    },
    LabSpec {
        kind: EventKind::Pao2,
        mean: (70.0, 140.0),
        within_sd: 10.0,
    },
    LabSpec {
        kind: EventKind::Paco2,
        mean: (32.0, 48.0),
        within_sd: 3.0,
    },
    LabSpec {
        kind: EventKind::Bicarbonate,
        mean: (18.0, 28.0),
        within_sd: 1.0,
    },
    LabSpec {
        kind: EventKind::BaseExcess,
        mean: (-6.0, 3.0),
        within_sd: 1.0,
    },
    LabSpec {
        kind: EventKind::Lactate,
        mean: (1.0, 5.0),
        within_sd: 0.4,
    },
    LabSpec {
        kind: EventKind::Sodium,
        mean: (134.0, 146.0),
        within_sd: 1.5,
    },
    LabSpec {
        kind: EventKind::Potassium,
        mean: (3.4, 5.0),
        within_sd: 0.2,
    },
    LabSpec {
        kind: EventKind::Chloride,
        mean: (98.0, 110.0),
        within_sd: 2.0,
    },
];

const VASOPRESSORS: [(EventKind, f64); 5] = [
    (EventKind::NorepinephrineRate, 0.3),
    (EventKind::EpinephrineRate, 0.2),
    (EventKind::PhenylephrineRate, 2.0),
    (EventKind::VasopressinRate, 0.04),
    (EventKind::DopamineRate, 10.0),
];

/// Bump inside `[fbt - LATE_WINDOW, fbt - 30]`: up over 20 minutes, held,
/// back down over the last 20.
fn transient(t: Minute, fbt: Minute, amount: f64) -> f64 {
    let (lo, hi) = (fbt - LATE_WINDOW, fbt - 30);
    if t <= lo || t >= hi {
        return 0.0;
    }
    amount * (((t - lo) as f64 / 20.0).min((hi - t) as f64 / 20.0)).min(1.0)
}

/// Drift starting `LATE_WINDOW` minutes before FBT, reaching `amount`
/// after `onset` minutes and decaying after FBT.
fn late_ramp(t: Minute, fbt: Minute, amount: f64, onset: Minute) -> f64 {
    if t <= fbt {
        amount * ((t - (fbt - LATE_WINDOW)) as f64 / onset as f64).clamp(0.0, 1.0)
    } else {
        amount * (-((t - fbt) as f64) / 60.0).exp()
    }
}

struct PatientPlan {
    id: String,
    label: Option<Outcome>,
    edge: Option<ExclusionReason>,
}

pub fn generate(cfg: &SynthConfig) -> Result<SynthCohort> {
    if cfg.n_patients < 10 {
        return Err(Error::Config(format!(
            "n_patients must be ≥ 10, got {}",
            cfg.n_patients
        )));
    }
    if !(0.0..=1.0).contains(&cfg.signal_strength) {
        return Err(Error::Config("signal_strength must lie in [0, 1]".into()));
    }
    if !(0.0..1.0).contains(&cfg.missingness) {
        return Err(Error::Config("missingness must lie in [0, 1)".into()));
    }
    if !(0.0..=0.5).contains(&cfg.edge_case_rate) {
        return Err(Error::Config("edge_case_rate must lie in [0, 0.5]".into()));
    }
    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_patients;
    let n_edge = (n as f64 * cfg.edge_case_rate).round() as usize;
    let n_included = n - n_edge;
    let n_success = (n_included as f64 * cfg.prevalence).round() as usize;
    if !(cfg.prevalence > 0.0 && cfg.prevalence < 1.0) || n_success == 0 || n_success == n_included {
        return Err(Error::Infeasible(format!(
            "prevalence {} leaves one class empty among {n_included} included patients",
            cfg.prevalence
        )));
    }
    let width = n.to_string().len().max(5);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut master);
    let mut plans: Vec<PatientPlan> = (0..n)
        .map(|i| PatientPlan {
            id: format!("P{i:0width$}"),
            label: None,
            edge: None,
        })
        .collect();
    for (rank, &i) in order.iter().enumerate() {
        if rank < n_edge {
            plans[i].edge = Some(ExclusionReason::ALL[rank % ExclusionReason::ALL.len()]);
        } else if rank < n_edge + n_success {
            plans[i].label = Some(Outcome::Success);
        } else {
            plans[i].label = Some(Outcome::Failure);
        }
    }

    let cohort_cfg = CohortConfig::default();
    let mut patients = Vec::with_capacity(n);
    let mut streams = Vec::with_capacity(n);
    let mut manifest = Vec::with_capacity(n);
    for (i, plan) in plans.iter().enumerate() {
        let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(cfg.seed ^ splitmix64(i as u64)));
        let (patient, stream, row) = generate_patient(cfg, plan, &mut rng);
        if let Some(label) = row.label {
            let got = label_episode(&stream, row.fbt_start, &cohort_cfg).map(|d| d.outcome);
            if got != Some(label) {
                return Err(Error::Invalid(format!(
                    "generated trajectory for {} does not reproduce its label",
                    plan.id
                )));
            }
        }
        patients.push(patient);
        streams.push(stream);
        manifest.push(row);
    }
    Ok(SynthCohort {
        config: cfg.clone(),
        patients,
        streams,
        manifest,
    })
}

fn generate_patient(
    cfg: &SynthConfig,
    plan: &PatientPlan,
    rng: &mut ChaCha8Rng,
) -> (PatientRecord, EventStream, ManifestRow) {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let s = cfg.signal_strength;
    let success = plan.label == Some(Outcome::Success);
    let sign = if success { 1.0 } else { -1.0 };

    let fbt: Minute = rng.random_range(420..=1300);
    let start = fbt - 420;
    let end = fbt + 180;
    let mut discharge = (fbt + 240 + rng.random_range(0..2000)).max(800);
    let mut age = rng.random_range(19.0..90.0f64).round();
    match plan.edge {
        Some(ExclusionReason::Under18) => age = 16.0,
        Some(ExclusionReason::StayLt12h) => discharge = 700,
        _ => {}
    }
    let patient = PatientRecord {
        patient_id: plan.id.clone(),
        age,
        gender: Gender::ALL[rng.random_range(0..2)],
        ethnicity: Ethnicity::ALL[rng.random_range(0..Ethnicity::ALL.len())],
        weight: (!rng.random_bool(0.05)).then(|| round2(80.0 + 15.0 * normal.sample(rng)).max(35.0)),
        height: (!rng.random_bool(0.1)).then(|| round2(170.0 + 10.0 * normal.sample(rng))),
        sofa: (!rng.random_bool(0.05)).then(|| rng.random_range(0..=15)),
        comorbidities: (0..COMORBIDITIES.len()).map(|_| rng.random_bool(0.1)).collect(),
        icu_admit: 0,
        icu_discharge: discharge,
    };

    let mut events: Vec<Event> = Vec::new();
    let mut signal = String::new();
    let keep = |rng: &mut ChaCha8Rng| !rng.random_bool(cfg.missingness);
    let sparse_shift = |kind: EventKind, t: Minute| -> f64 {
        if cfg.signal_mode != SignalMode::StaticSparse || !(fbt - 30..=fbt + 30).contains(&t) {
            return 0.0;
        }
        SPARSE_SHIFTS
            .iter()
            .find(|(k, _)| *k == kind)
            .map(|(_, d)| sign * d * s)
            .unwrap_or(0.0)
    };
    let hr_rise = if cfg.signal_mode == SignalMode::TemporalLate && success {
        20.0 * s * rng.random_range(0.8..1.2)
    } else {
        0.0
    };

    for v in &VITALS {
        let times = grid(start, end, v.step);
        let mean = rng.random_range(v.mean.0..v.mean.1);
        let path = ou_path(rng, &times, v.sd, 90.0);
        for (&t, dev) in times.iter().zip(path) {
            let mut x = mean + dev + v.noise * normal.sample(rng) + sparse_shift(v.kind, t);
            if v.kind == EventKind::HeartRate {
                x += transient(t, fbt, hr_rise);
            }
            let (lo, hi) = v.kind.plausible_range();
            let x = round2(x.clamp(lo, hi));
            if keep(rng) {
                events.push(Event::measurement(t, v.kind, x));
            }
        }
    }

    let mut draws = vec![fbt - 15];
    for _ in 0..rng.random_range(1..=3) {
        draws.push(rng.random_range(start..fbt - 60));
    }
    if rng.random_bool(0.5) {
        draws.push(rng.random_range(fbt + 30..end));
    }
    draws.sort_unstable();
    for l in &LABS {
        let mean = rng.random_range(l.mean.0..l.mean.1);
        for &t in &draws {
            let x = mean + l.within_sd * normal.sample(rng) + sparse_shift(l.kind, t);
            let (lo, hi) = l.kind.plausible_range();
            let x = round2(x.clamp(lo, hi));
            if keep(rng) {
                events.push(Event::measurement(t, l.kind, x));
            }
        }
    }

    if rng.random_bool(0.25) {
        let (kind, scale) = VASOPRESSORS[rng.random_range(0..VASOPRESSORS.len())];
        let on = rng.random_range(start..fbt - 60);
        let mut rate = scale * rng.random_range(0.2..1.0);
        for t in grid(on, end, 60) {
            rate = (rate * (1.0 + 0.15 * normal.sample(rng))).max(0.0);
            if keep(rng) {
                events.push(Event::measurement(t, kind, round2(rate.max(0.01))));
            }
        }
    }

    // background fluids that never qualify as a bolus
    for _ in 0..rng.random_range(0..3) {
        let t = rng.random_range(start..fbt);
        if rng.random_bool(0.5) {
            events.push(Event::fluid(t, 100.0, 100.0, FluidClass::Crystalloid));
        } else {
            events.push(Event::fluid(t, 500.0, 500.0, FluidClass::Other));
        }
    }
    let (rate, volume) = if plan.edge == Some(ExclusionReason::NoFbtIn24h) {
        (200.0, 200.0)
    } else {
        (
            round2(rng.random_range(500.0..2000.0)),
            rng.random_range(3..=10) as f64 * 100.0,
        )
    };
    events.push(Event::fluid(fbt, rate, volume, FluidClass::Crystalloid));

    let (map_events, detail) = map_trajectory(cfg, plan, fbt, start, rng);
    if !detail.is_empty() || hr_rise > 0.0 {
        signal = if hr_rise > 0.0 {
            format!("{detail};hr_rise={}", round2(hr_rise))
        } else {
            detail
        };
    }
    if cfg.signal_mode == SignalMode::StaticSparse {
        signal = format!("shift={}", if success { "+1" } else { "-1" });
    }
    events.extend(map_events);

    let row = ManifestRow {
        patient_id: plan.id.clone(),
        label: plan.label,
        fbt_start: fbt,
        edge_case: plan.edge,
        signal,
    };
    (patient, EventStream::new(plan.id.clone(), events), row)
}

/// MAP every 5 minutes: hypotensive before FBT, then a response whose peak
/// is placed relative to the baseline mean so the label comes out as
/// planned.
fn map_trajectory(
    cfg: &SynthConfig,
    plan: &PatientPlan,
    fbt: Minute,
    start: Minute,
    rng: &mut ChaCha8Rng,
) -> (Vec<Event>, String) {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let kind = EventKind::MeanArterialPressure;
    let success = plan.label == Some(Outcome::Success);
    let base = rng.random_range(52.0..60.0);
    let decline = if cfg.signal_mode == SignalMode::TemporalLate && success {
        -30.0 * cfg.signal_strength * rng.random_range(0.8..1.2)
    } else {
        0.0
    };
    let pre_times = grid(start, fbt, 5);
    let path = ou_path(rng, &pre_times, 2.5, 60.0);
    let mut values: Vec<(Minute, f64)> = pre_times
        .iter()
        .zip(path)
        .map(|(&t, dev)| (t, base + dev + normal.sample(rng) + late_ramp(t, fbt, decline, 30)))
        .collect();
    let at_start = values.last().unwrap().1;
    let at_start = if plan.edge == Some(ExclusionReason::NotHypotensive) {
        75.0
    } else {
        at_start.min(64.0)
    };
    values.last_mut().unwrap().1 = at_start;
    for t in [fbt + 5, fbt + 10] {
        values.push((t, at_start + 0.5 * normal.sample(rng)));
    }
    let mut values: Vec<(Minute, f64)> = values.into_iter().map(|(t, v)| (t, round2(v.max(20.0)))).collect();

    // mean over [fbt-30, fbt+10], accumulated in time order like the labeler
    let (sum, count) = values
        .iter()
        .filter(|(t, _)| (fbt - 30..=fbt + 10).contains(t))
        .fold((0.0, 0usize), |(s, c), (_, v)| (s + v, c + 1));
    let threshold = 1.15 * (sum / count as f64);
    let peak = match plan.label {
        Some(Outcome::Success) => threshold * (1.0 + rng.random_range(0.02..0.15)),
        _ => threshold * (1.0 - rng.random_range(0.02..0.12)),
    };
    let peak = round2(peak);
    let peak_at = fbt + 5 * rng.random_range(4..=22);
    let level = values.last().unwrap().1;
    for t in grid(fbt + 15, fbt + 180, 5) {
        let v = if t == peak_at {
            peak
        } else if t <= fbt + 120 {
            let frac = if t < peak_at {
                (t - fbt) as f64 / (peak_at - fbt) as f64
            } else {
                (1.0 - (t - peak_at) as f64 / 120.0).max(0.3)
            };
            (level + (peak - level) * frac * 0.97 + normal.sample(rng)).min(peak - 0.5)
        } else {
            level + (peak - level) * 0.4 + 2.0 * normal.sample(rng)
        };
        values.push((t, round2(v)));
    }

    let mut events = Vec::with_capacity(values.len());
    for (t, v) in values {
        let protected = (fbt - 60..=fbt + 120).contains(&t);
        let insufficient =
            plan.edge == Some(ExclusionReason::InsufficientMapData) && (fbt - 60..=fbt + 120).contains(&t);
        if insufficient || (!protected && rng.random_bool(cfg.missingness)) {
            continue;
        }
        events.push(Event::measurement(t, kind, v));
    }
    let detail = if decline != 0.0 {
        format!("map_decline={}", round2(-decline))
    } else {
        String::new()
    };
    (events, detail)
}
