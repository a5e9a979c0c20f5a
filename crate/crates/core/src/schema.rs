//! Domain types shared across the pipeline: patient records, the event
//! vocabulary, event streams and the versioned feature schema.
//!
//! All times are integer minutes on a per-patient clock. ICU admission is
//! usually minute 0, and event offsets are on the same clock.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minute-resolution timestamp relative to the patient's clock origin.
pub type Minute = i64;

pub const SCHEMA_VERSION: &str = "fbt-schema-1";

/// Closed vocabulary of timestamped measurements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    HeartRate,
    RespiratoryRate,
    Temperature,
    OxygenSaturation,
    SystolicBp,
    DiastolicBp,
    MeanArterialPressure,
    UrineOutput,
    Ph,
    Pao2,
    Paco2,
    Bicarbonate,
    BaseExcess,
    Lactate,
    Sodium,
    Potassium,
    Chloride,
    NorepinephrineRate,
    EpinephrineRate,
    PhenylephrineRate,
    VasopressinRate,
    DopamineRate,
    FluidInfusion,
}

struct KindInfo {
    kind: EventKind,
    name: &'static str,
    unit: &'static str,
    min: f64,
    max: f64,
}

const KINDS: [KindInfo; 23] = [
    KindInfo {
        kind: EventKind::HeartRate,
        name: "heart_rate",
        unit: "bpm",
        min: 0.0,
        max: 300.0,
    },
    KindInfo {
        kind: EventKind::RespiratoryRate,
        name: "respiratory_rate",
        unit: "breaths/min",
        min: 0.0,
        max: 80.0,
    },
    KindInfo {
        kind: EventKind::Temperature,
        name: "temperature",
        unit: "degC",
        min: 25.0,
        max: 45.0,
    },
    KindInfo {
        kind: EventKind::OxygenSaturation,
        name: "oxygen_saturation",
        unit: "%",
        min: 0.0,
        max: 100.0,
    },
    KindInfo {
        kind: EventKind::SystolicBp,
        name: "systolic_bp",
        unit: "mmHg",
        min: 0.0,
        max: 300.0,
    },
    KindInfo {
        kind: EventKind::DiastolicBp,
        name: "diastolic_bp",
        unit: "mmHg",
        min: 0.0,
        max: 200.0,
    },
    KindInfo {
        kind: EventKind::MeanArterialPressure,
        name: "mean_arterial_pressure",
        unit: "mmHg",
        min: 0.0,
        max: 250.0,
    },
    KindInfo {
        kind: EventKind::UrineOutput,
        name: "urine_output",
        unit: "ml",
        min: 0.0,
        max: 2000.0,
    },
    KindInfo {
        kind: EventKind::Ph,
        name: "ph",
        unit: "pH",
        min: 6.5,
        max: 8.0,
    },
    KindInfo {
        kind: EventKind::Pao2,
        name: "pao2",
        unit: "mmHg",
        min: 0.0,
        max: 800.0,
    },
    KindInfo {
        kind: EventKind::Paco2,
        name: "paco2",
        unit: "mmHg",
        min: 0.0,
        max: 200.0,
    },
    KindInfo {
        kind: EventKind::Bicarbonate,
        name: "bicarbonate",
        unit: "mEq/L",
        min: 0.0,
        max: 60.0,
    },
    KindInfo {
        kind: EventKind::BaseExcess,
        name: "base_excess",
        unit: "mEq/L",
        min: -40.0,
        max: 40.0,
    },
    KindInfo {
        kind: EventKind::Lactate,
        name: "lactate",
        unit: "mmol/L",
        min: 0.0,
        max: 30.0,
    },
    KindInfo {
        kind: EventKind::Sodium,
        name: "sodium",
        unit: "mEq/L",
        min: 100.0,
        max: 180.0,
    },
    KindInfo {
        kind: EventKind::Potassium,
        name: "potassium",
        unit: "mEq/L",
        min: 1.0,
        max: 10.0,
    },
    KindInfo {
        kind: EventKind::Chloride,
        name: "chloride",
        unit: "mEq/L",
        min: 60.0,
        max: 150.0,
    },
    KindInfo {
        kind: EventKind::NorepinephrineRate,
        name: "norepinephrine_rate",
        unit: "mcg/kg/min",
        min: 0.0,
        max: 5.0,
    },
    KindInfo {
        kind: EventKind::EpinephrineRate,
        name: "epinephrine_rate",
        unit: "mcg/kg/min",
        min: 0.0,
        max: 5.0,
    },
    KindInfo {
        kind: EventKind::PhenylephrineRate,
        name: "phenylephrine_rate",
        unit: "mcg/kg/min",
        min: 0.0,
        max: 20.0,
    },
    KindInfo {
        kind: EventKind::VasopressinRate,
        name: "vasopressin_rate",
        unit: "units/min",
        min: 0.0,
        max: 1.0,
    },
    KindInfo {
        kind: EventKind::DopamineRate,
        name: "dopamine_rate",
        unit: "mcg/kg/min",
        min: 0.0,
        max: 50.0,
    },
    KindInfo {
        kind: EventKind::FluidInfusion,
        name: "fluid_infusion",
        unit: "ml",
        min: 0.0,
        max: 10000.0,
    },
];

impl EventKind {
    /// The 22 time-varying feature kinds, in schema order.
    pub const TIME_VARYING: [EventKind; 22] = [
        EventKind::HeartRate,
        EventKind::RespiratoryRate,
        EventKind::Temperature,
        EventKind::OxygenSaturation,
        EventKind::SystolicBp,
        EventKind::DiastolicBp,
        EventKind::MeanArterialPressure,
        EventKind::UrineOutput,
        EventKind::Ph,
        EventKind::Pao2,
        EventKind::Paco2,
        EventKind::Bicarbonate,
        EventKind::BaseExcess,
        EventKind::Lactate,
        EventKind::Sodium,
        EventKind::Potassium,
        EventKind::Chloride,
        EventKind::NorepinephrineRate,
        EventKind::EpinephrineRate,
        EventKind::PhenylephrineRate,
        EventKind::VasopressinRate,
        EventKind::DopamineRate,
    ];

    fn info(self) -> &'static KindInfo {
        &KINDS[self as usize]
    }

    pub fn name(self) -> &'static str {
        self.info().name
    }

    pub fn unit(self) -> &'static str {
        self.info().unit
    }

    /// Plausible value range used for validation warnings only.
    pub fn plausible_range(self) -> (f64, f64) {
        let info = self.info();
        (info.min, info.max)
    }

    pub fn is_vasopressor(self) -> bool {
        matches!(
            self,
            EventKind::NorepinephrineRate
                | EventKind::EpinephrineRate
                | EventKind::PhenylephrineRate
                | EventKind::VasopressinRate
                | EventKind::DopamineRate
        )
    }

    /// Position in [`EventKind::TIME_VARYING`], if the kind is a feature.
    pub fn feature_index(self) -> Option<usize> {
        match self {
            EventKind::FluidInfusion => None,
            k => Some(k as usize),
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        KINDS
            .iter()
            .find(|k| k.name == s)
            .map(|k| k.kind)
            .ok_or_else(|| format!("unknown kind `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FluidClass {
    Crystalloid,
    Other,
}

impl FluidClass {
    pub fn as_str(self) -> &'static str {
        match self {
            FluidClass::Crystalloid => "crystalloid",
            FluidClass::Other => "other",
        }
    }
}

impl FromStr for FluidClass {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "crystalloid" => Ok(FluidClass::Crystalloid),
            "other" => Ok(FluidClass::Other),
            _ => Err(format!("unknown fluid class `{s}`")),
        }
    }
}

/// Rate, volume and class of a fluid infusion event.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Infusion {
    /// ml/hr
    pub rate: f64,
    /// ml
    pub volume: f64,
    pub fluid_class: FluidClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub time: Minute,
    pub kind: EventKind,
    pub value: f64,
    /// Present exactly for `fluid_infusion` events.
    pub infusion: Option<Infusion>,
}

impl Event {
    pub fn measurement(time: Minute, kind: EventKind, value: f64) -> Self {
        Event {
            time,
            kind,
            value,
            infusion: None,
        }
    }

    /// A fluid infusion; `value` carries the volume.
    pub fn fluid(time: Minute, rate: f64, volume: f64, fluid_class: FluidClass) -> Self {
        Event {
            time,
            kind: EventKind::FluidInfusion,
            value: volume,
            infusion: Some(Infusion {
                rate,
                volume,
                fluid_class,
            }),
        }
    }
}

/// An event as read from text, before the kind is checked against the
/// vocabulary.
#[derive(Debug, Clone, PartialEq)]
pub struct RawEvent {
    pub time: Minute,
    pub kind: String,
    pub value: f64,
    pub rate: Option<f64>,
    pub volume: Option<f64>,
    pub fluid_class: Option<String>,
}

impl From<&Event> for RawEvent {
    fn from(e: &Event) -> Self {
        RawEvent {
            time: e.time,
            kind: e.kind.name().to_string(),
            value: e.value,
            rate: e.infusion.map(|i| i.rate),
            volume: e.infusion.map(|i| i.volume),
            fluid_class: e.infusion.map(|i| i.fluid_class.as_str().to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    UnknownKind(String),
    BelowRange { kind: EventKind, value: f64, min: f64 },
    AboveRange { kind: EventKind, value: f64, max: f64 },
    NegativeRate(f64),
    NegativeVolume(f64),
    MissingInfusionFields,
    UnknownFluidClass(String),
    NonFinite,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownKind(k) => write!(f, "unknown kind `{k}`"),
            Violation::BelowRange { kind, value, min } => {
                write!(f, "{kind}={value} below plausible range (min {min})")
            }
            Violation::AboveRange { kind, value, max } => {
                write!(f, "{kind}={value} above plausible range (max {max})")
            }
            Violation::NegativeRate(r) => write!(f, "negative infusion rate {r}"),
            Violation::NegativeVolume(v) => write!(f, "negative infusion volume {v}"),
            Violation::MissingInfusionFields => f.write_str("fluid_infusion without rate/volume/class"),
            Violation::UnknownFluidClass(c) => write!(f, "unknown fluid class `{c}`"),
            Violation::NonFinite => f.write_str("non-finite value"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationResult {
    pub violations: Vec<Violation>,
}

impl ValidationResult {
    pub fn is_pass(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Check an event against the vocabulary and the plausible ranges.
/// Violations are reported, never corrected.
pub fn validate_event(e: &RawEvent) -> ValidationResult {
    let mut violations = Vec::new();
    let kind = match e.kind.parse::<EventKind>() {
        Ok(k) => k,
        Err(_) => {
            violations.push(Violation::UnknownKind(e.kind.clone()));
            return ValidationResult { violations };
        }
    };
    if !e.value.is_finite() {
        violations.push(Violation::NonFinite);
    } else {
        let (min, max) = kind.plausible_range();
        if e.value < min {
            violations.push(Violation::BelowRange {
                kind,
                value: e.value,
                min,
            });
        } else if e.value > max {
            violations.push(Violation::AboveRange {
                kind,
                value: e.value,
                max,
            });
        }
    }
    if kind == EventKind::FluidInfusion {
        match (e.rate, e.volume, e.fluid_class.as_deref()) {
            (Some(rate), Some(volume), Some(class)) => {
                if rate < 0.0 {
                    violations.push(Violation::NegativeRate(rate));
                }
                if volume < 0.0 {
                    violations.push(Violation::NegativeVolume(volume));
                }
                if class.parse::<FluidClass>().is_err() {
                    violations.push(Violation::UnknownFluidClass(class.to_string()));
                }
            }
            _ => violations.push(Violation::MissingInfusionFields),
        }
    }
    ValidationResult { violations }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gender {
    Male,
    Female,
}

impl Gender {
    pub const ALL: [Gender; 2] = [Gender::Male, Gender::Female];

    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
        }
    }
}

impl FromStr for Gender {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        match s {
            "male" | "M" => Ok(Gender::Male),
            "female" | "F" => Ok(Gender::Female),
            _ => Err(format!("unknown gender `{s}`")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ethnicity {
    White,
    Black,
    Hispanic,
    Asian,
    Other,
}

impl Ethnicity {
    pub const ALL: [Ethnicity; 5] = [
        Ethnicity::White,
        Ethnicity::Black,
        Ethnicity::Hispanic,
        Ethnicity::Asian,
        Ethnicity::Other,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Ethnicity::White => "white",
            Ethnicity::Black => "black",
            Ethnicity::Hispanic => "hispanic",
            Ethnicity::Asian => "asian",
            Ethnicity::Other => "other",
        }
    }
}

impl FromStr for Ethnicity {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ethnicity::ALL
            .iter()
            .copied()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| format!("unknown ethnicity `{s}`"))
    }
}

/// Elixhauser comorbidity categories, in flag order.
pub const COMORBIDITIES: [&str; 30] = [
    "congestive_heart_failure",
    "cardiac_arrhythmias",
    "valvular_disease",
    "pulmonary_circulation",
    "peripheral_vascular",
    "hypertension",
    "paralysis",
    "other_neurological",
    "chronic_pulmonary",
    "diabetes_uncomplicated",
    "diabetes_complicated",
    "hypothyroidism",
    "renal_failure",
    "liver_disease",
    "peptic_ulcer",
    "aids",
    "lymphoma",
    "metastatic_cancer",
    "solid_tumor",
    "rheumatoid_arthritis",
    "coagulopathy",
    "obesity",
    "weight_loss",
    "fluid_electrolyte",
    "blood_loss_anemia",
    "deficiency_anemias",
    "alcohol_abuse",
    "drug_abuse",
    "psychoses",
    "depression",
];

/// Static data for one ICU stay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientRecord {
    pub patient_id: String,
    /// years
    pub age: f64,
    pub gender: Gender,
    pub ethnicity: Ethnicity,
    /// kg
    pub weight: Option<f64>,
    /// cm
    pub height: Option<f64>,
    pub sofa: Option<u32>,
    /// One flag per entry of [`COMORBIDITIES`].
    pub comorbidities: Vec<bool>,
    pub icu_admit: Minute,
    pub icu_discharge: Minute,
}

impl PatientRecord {
    pub fn check(&self) -> std::result::Result<(), String> {
        if self.icu_discharge <= self.icu_admit {
            return Err("icu_discharge must be after icu_admit".into());
        }
        if !(self.age.is_finite() && self.age >= 0.0) {
            return Err(format!("invalid age {}", self.age));
        }
        for (name, v) in [("weight", self.weight), ("height", self.height)] {
            if let Some(v) = v {
                if !(v.is_finite() && v >= 0.0) {
                    return Err(format!("invalid {name} {v}"));
                }
            }
        }
        if self.comorbidities.len() != COMORBIDITIES.len() {
            return Err(format!(
                "expected {} comorbidity flags, found {}",
                COMORBIDITIES.len(),
                self.comorbidities.len()
            ));
        }
        Ok(())
    }

    pub fn stay_minutes(&self) -> Minute {
        self.icu_discharge - self.icu_admit
    }
}

/// Time-ordered measurements for one stay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EventStream {
    pub patient_id: String,
    events: Vec<Event>,
}

impl EventStream {
    /// Sorts by time; equal times keep their input order.
    pub fn new(patient_id: impl Into<String>, mut events: Vec<Event>) -> Self {
        events.sort_by_key(|e| e.time);
        EventStream {
            patient_id: patient_id.into(),
            events,
        }
    }

    pub fn events(&self) -> &[Event] {
        &self.events
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    /// Events whose time lies in the closed interval `[from, to]`.
    pub fn between(&self, from: Minute, to: Minute) -> &[Event] {
        let lo = self.events.partition_point(|e| e.time < from);
        let hi = self.events.partition_point(|e| e.time <= to);
        if lo >= hi {
            &[]
        } else {
            &self.events[lo..hi]
        }
    }

    /// `(time, value)` for every observation of `kind` in `[from, to]`.
    pub fn observations(&self, kind: EventKind, from: Minute, to: Minute) -> impl Iterator<Item = (Minute, f64)> + '_ {
        self.between(from, to)
            .iter()
            .filter(move |e| e.kind == kind)
            .map(|e| (e.time, e.value))
    }
}

/// One encoded input column and the logical feature it belongs to.
#[derive(Debug, Clone, PartialEq)]
pub struct StaticColumn {
    pub name: String,
    pub group: &'static str,
    pub unit: &'static str,
    pub min: f64,
    pub max: f64,
}

/// Ordered, versioned description of the model inputs.
///
/// There are 29 logical features: six demographic/severity features (age,
/// gender, ethnicity, weight, height, SOFA), the comorbidity block counted
/// as one feature, and 22 time-varying measurements. Encoded, the static
/// part expands to 41 columns (4 numeric, 2 gender and 5 ethnicity one-hot,
/// 30 comorbidity flags).
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSchema {
    pub version: String,
    pub static_columns: Vec<StaticColumn>,
    pub time_varying: Vec<EventKind>,
}

pub const LOGICAL_STATIC: [&str; 7] = ["age", "gender", "ethnicity", "weight", "height", "sofa", "comorbidity"];

/// Anchors of the time-aggregated windows, in minutes relative to FBT start.
pub const ANCHORS: [Minute; 3] = [-360, -120, 0];

pub fn anchor_label(anchor: Minute) -> String {
    if anchor == 0 {
        "t0".to_string()
    } else {
        format!("t{anchor}")
    }
}

impl Default for FeatureSchema {
    fn default() -> Self {
        let mut cols = vec![
            StaticColumn {
                name: "age".into(),
                group: "age",
                unit: "years",
                min: 0.0,
                max: 130.0,
            },
            StaticColumn {
                name: "weight".into(),
                group: "weight",
                unit: "kg",
                min: 0.0,
                max: 400.0,
            },
            StaticColumn {
                name: "height".into(),
                group: "height",
                unit: "cm",
                min: 0.0,
                max: 250.0,
            },
            StaticColumn {
                name: "sofa".into(),
                group: "sofa",
                unit: "points",
                min: 0.0,
                max: 24.0,
            },
        ];
        for g in Gender::ALL {
            cols.push(StaticColumn {
                name: format!("gender_{}", g.as_str()),
                group: "gender",
                unit: "indicator",
                min: 0.0,
                max: 1.0,
            });
        }
        for e in Ethnicity::ALL {
            cols.push(StaticColumn {
                name: format!("ethnicity_{}", e.as_str()),
                group: "ethnicity",
                unit: "indicator",
                min: 0.0,
                max: 1.0,
            });
        }
        for c in COMORBIDITIES {
            cols.push(StaticColumn {
                name: format!("comorbidity_{c}"),
                group: "comorbidity",
                unit: "indicator",
                min: 0.0,
                max: 1.0,
            });
        }
        FeatureSchema {
            version: SCHEMA_VERSION.to_string(),
            static_columns: cols,
            time_varying: EventKind::TIME_VARYING.to_vec(),
        }
    }
}

fn static_group(name: &str) -> Option<&'static str> {
    LOGICAL_STATIC.iter().copied().find(|g| *g == name)
}

fn static_unit(unit: &str) -> &'static str {
    ["years", "kg", "cm", "points", "indicator"]
        .into_iter()
        .find(|u| *u == unit)
        .unwrap_or("unknown")
}

impl FeatureSchema {
    /// Logical feature names (static groups then time-varying kinds).
    pub fn logical_features(&self) -> Vec<String> {
        let mut out: Vec<String> = Vec::new();
        for c in &self.static_columns {
            if !out.iter().any(|n| n == c.group) {
                out.push(c.group.to_string());
            }
        }
        out.extend(self.time_varying.iter().map(|k| k.name().to_string()));
        out
    }

    pub fn static_width(&self) -> usize {
        self.static_columns.len()
    }

    /// Time-varying kinds used by the aggregated setting (MAP excluded).
    pub fn aggregated_kinds(&self) -> Vec<EventKind> {
        self.time_varying
            .iter()
            .copied()
            .filter(|k| *k != EventKind::MeanArterialPressure)
            .collect()
    }

    /// Column names of the time-aggregated vector.
    pub fn aggregated_columns(&self) -> Vec<String> {
        let mut names: Vec<String> = self.static_columns.iter().map(|c| c.name.clone()).collect();
        let kinds = self.aggregated_kinds();
        for anchor in ANCHORS {
            for k in &kinds {
                names.push(format!("{}@{}", k.name(), anchor_label(anchor)));
            }
        }
        names
    }

    /// Column names of one time-series row.
    pub fn series_columns(&self) -> Vec<String> {
        let mut names: Vec<String> = self.static_columns.iter().map(|c| c.name.clone()).collect();
        names.extend(self.time_varying.iter().map(|k| k.name().to_string()));
        names
    }

    /// Logical feature of an encoded column name.
    pub fn group_of(&self, column: &str) -> Option<String> {
        if let Some(c) = self.static_columns.iter().find(|c| c.name == column) {
            return Some(c.group.to_string());
        }
        let base = column.split('@').next().unwrap_or(column);
        self.time_varying
            .iter()
            .find(|k| k.name() == base)
            .map(|k| k.name().to_string())
    }

    /// Render as the documented key-value text file.
    pub fn to_text(&self) -> String {
        let logical = self.logical_features();
        let mut s = String::new();
        s.push_str("# Feature schema. One `key = value` per line; order is significant.\n");
        s.push_str("# Logical features: 6 demographic/severity features, the comorbidity block\n");
        s.push_str("# (one feature, one flag column per category) and 22 time-varying kinds.\n");
        s.push_str(&format!("version = {}\n", self.version));
        s.push_str(&format!("logical_features = {}\n", logical.len()));
        for (i, name) in logical.iter().enumerate() {
            s.push_str(&format!("logical.{i} = {name}\n"));
        }
        s.push_str(&format!("static_columns = {}\n", self.static_columns.len()));
        for (i, c) in self.static_columns.iter().enumerate() {
            s.push_str(&format!(
                "static.{i} = {} | group={} | unit={} | range={}..{}\n",
                c.name, c.group, c.unit, c.min, c.max
            ));
        }
        s.push_str(&format!("time_varying = {}\n", self.time_varying.len()));
        for (i, k) in self.time_varying.iter().enumerate() {
            let (min, max) = k.plausible_range();
            s.push_str(&format!(
                "timevarying.{i} = {} | unit={} | range={}..{}\n",
                k.name(),
                k.unit(),
                min,
                max
            ));
        }
        s
    }

    /// Parse the key-value text produced by [`FeatureSchema::to_text`].
    pub fn from_text(text: &str) -> Result<Self> {
        let file = "feature schema";
        let mut version = None;
        let mut statics: Vec<(usize, StaticColumn)> = Vec::new();
        let mut kinds: Vec<(usize, EventKind)> = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line_no = lineno as u64 + 1;
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::parse(file, line_no, "expected `key = value`"))?;
            let key = key.trim();
            let value = value.trim();
            let mut parts = value.split('|').map(str::trim);
            let head = parts.next().unwrap_or_default();
            let mut attrs = std::collections::BTreeMap::new();
            for p in parts {
                if let Some((k, v)) = p.split_once('=') {
                    attrs.insert(k.trim(), v.trim());
                }
            }
            let index = |prefix: &str| -> Result<Option<usize>> {
                match key.strip_prefix(prefix) {
                    Some(rest) => rest
                        .parse::<usize>()
                        .map(Some)
                        .map_err(|_| Error::parse(file, line_no, format!("bad index in `{key}`"))),
                    None => Ok(None),
                }
            };
            let range = |attrs: &std::collections::BTreeMap<&str, &str>| -> Result<(f64, f64)> {
                let r = attrs
                    .get("range")
                    .ok_or_else(|| Error::parse(file, line_no, "missing range"))?;
                let (a, b) = r
                    .split_once("..")
                    .ok_or_else(|| Error::parse(file, line_no, "range must be `min..max`"))?;
                let a = a
                    .parse::<f64>()
                    .map_err(|e| Error::parse(file, line_no, e.to_string()))?;
                let b = b
                    .parse::<f64>()
                    .map_err(|e| Error::parse(file, line_no, e.to_string()))?;
                Ok((a, b))
            };
            if key == "version" {
                version = Some(value.to_string());
            } else if let Some(i) = index("static.")? {
                let group = attrs
                    .get("group")
                    .and_then(|g| static_group(g))
                    .ok_or_else(|| Error::parse(file, line_no, "unknown or missing group"))?;
                let unit = static_unit(attrs.get("unit").copied().unwrap_or(""));
                let (min, max) = range(&attrs)?;
                statics.push((
                    i,
                    StaticColumn {
                        name: head.to_string(),
                        group,
                        unit,
                        min,
                        max,
                    },
                ));
            } else if let Some(i) = index("timevarying.")? {
                let kind = head.parse::<EventKind>().map_err(|e| Error::parse(file, line_no, e))?;
                kinds.push((i, kind));
            }
        }
        let version = version.ok_or_else(|| Error::parse(file, 0, "missing version"))?;
        statics.sort_by_key(|(i, _)| *i);
        kinds.sort_by_key(|(i, _)| *i);
        for (expected, (i, _)) in statics.iter().enumerate() {
            if *i != expected {
                return Err(Error::parse(file, 0, format!("static index {expected} missing")));
            }
        }
        for (expected, (i, _)) in kinds.iter().enumerate() {
            if *i != expected {
                return Err(Error::parse(file, 0, format!("time-varying index {expected} missing")));
            }
        }
        let schema = FeatureSchema {
            version,
            static_columns: statics.into_iter().map(|(_, c)| c).collect(),
            time_varying: kinds.into_iter().map(|(_, k)| k).collect(),
        };
        let mut seen = std::collections::BTreeSet::new();
        for n in schema.series_columns() {
            if !seen.insert(n.clone()) {
                return Err(Error::parse(file, 0, format!("duplicate column `{n}`")));
            }
        }
        Ok(schema)
    }
}
