//! Two-file text ingestion: a patients table and a long-format events table.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::schema::{
    validate_event, Event, EventKind, EventStream, FluidClass, PatientRecord, RawEvent, Violation, COMORBIDITIES,
};

pub const EVENT_COLUMNS: [&str; 7] = [
    "patient_id",
    "minute_offset",
    "kind",
    "value",
    "rate",
    "volume",
    "fluid_class",
];

pub fn patient_columns() -> Vec<String> {
    let mut cols: Vec<String> = ["patient_id", "age", "gender", "ethnicity", "weight", "height", "sofa"]
        .iter()
        .map(|s| s.to_string())
        .collect();
    cols.extend(COMORBIDITIES.iter().map(|c| format!("comorbidity_{c}")));
    cols.push("icu_admit".into());
    cols.push("icu_discharge".into());
    cols
}

/// Patients and their event streams, keyed and ordered by patient id.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    pub patients: BTreeMap<String, PatientRecord>,
    pub streams: BTreeMap<String, EventStream>,
}

impl Dataset {
    /// Builds a dataset, giving every patient a (possibly empty) stream.
    pub fn new(patients: Vec<PatientRecord>, streams: Vec<EventStream>) -> Result<Self> {
        let mut map = BTreeMap::new();
        for p in patients {
            if map.contains_key(&p.patient_id) {
                return Err(Error::DuplicatePatient(p.patient_id));
            }
            map.insert(p.patient_id.clone(), p);
        }
        let mut stream_map = BTreeMap::new();
        for s in streams {
            if !map.contains_key(&s.patient_id) {
                return Err(Error::Invalid(format!("stream for unknown patient `{}`", s.patient_id)));
            }
            stream_map.insert(s.patient_id.clone(), s);
        }
        for id in map.keys() {
            stream_map
                .entry(id.clone())
                .or_insert_with(|| EventStream::new(id.clone(), Vec::new()));
        }
        Ok(Dataset {
            patients: map,
            streams: stream_map,
        })
    }

    pub fn stream(&self, patient_id: &str) -> Option<&EventStream> {
        self.streams.get(patient_id)
    }

    pub fn write_patients<W: Write>(&self, w: W) -> Result<()> {
        write_patients(self.patients.values(), w)
    }

    pub fn write_events<W: Write>(&self, w: W) -> Result<()> {
        write_events(self.streams.values(), w)
    }
}

/// Counts gathered while reading the two files.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct IngestReport {
    pub patient_rows: usize,
    pub event_rows: usize,
    pub events_kept: usize,
    pub rejected_unknown_patient: usize,
    pub rejected_unknown_kind: BTreeMap<String, usize>,
    pub rejected_invalid_infusion: usize,
    pub range_warnings: BTreeMap<String, usize>,
    /// Missing cells per patients-file column.
    pub missing_by_column: BTreeMap<String, usize>,
    pub empty_streams: usize,
}

impl IngestReport {
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "patient_rows\t{}", self.patient_rows);
        let _ = writeln!(s, "event_rows\t{}", self.event_rows);
        let _ = writeln!(s, "events_kept\t{}", self.events_kept);
        let _ = writeln!(s, "rejected_unknown_patient\t{}", self.rejected_unknown_patient);
        let unknown: usize = self.rejected_unknown_kind.values().sum();
        let _ = writeln!(s, "rejected_unknown_kind\t{unknown}");
        for (k, n) in &self.rejected_unknown_kind {
            let _ = writeln!(s, "  unknown_kind:{k}\t{n}");
        }
        let _ = writeln!(s, "rejected_invalid_infusion\t{}", self.rejected_invalid_infusion);
        let _ = writeln!(s, "empty_streams\t{}", self.empty_streams);
        for (k, n) in &self.range_warnings {
            let _ = writeln!(s, "range_warning:{k}\t{n}");
        }
        for (c, n) in &self.missing_by_column {
            let _ = writeln!(s, "missing:{c}\t{n}");
        }
        s
    }
}

fn open(path: &Path) -> Result<std::fs::File> {
    std::fs::File::open(path).map_err(|e| Error::io(path, e))
}

fn file_label(path: &Path) -> String {
    path.display().to_string()
}

fn optional_f64(cell: &str, file: &str, line: u64, column: &str) -> Result<Option<f64>> {
    if cell.trim().is_empty() {
        return Ok(None);
    }
    cell.trim().parse::<f64>().map(Some).map_err(|_| {
        Error::parse(
            file,
            line,
            format!("column {column}: cannot parse `{cell}` as a number"),
        )
    })
}

fn required_f64(cell: &str, file: &str, line: u64, column: &str) -> Result<f64> {
    optional_f64(cell, file, line, column)?
        .ok_or_else(|| Error::parse(file, line, format!("column {column}: value required")))
}

fn minute(cell: &str, file: &str, line: u64, column: &str) -> Result<i64> {
    cell.trim().parse::<i64>().map_err(|_| {
        Error::parse(
            file,
            line,
            format!("column {column}: cannot parse `{cell}` as integer minutes"),
        )
    })
}

fn check_header(reader_headers: &csv::StringRecord, expected: &[String], file: &str) -> Result<()> {
    let found: Vec<&str> = reader_headers.iter().collect();
    if found.len() != expected.len() || found.iter().zip(expected).any(|(a, b)| a.trim() != b) {
        return Err(Error::Header {
            file: file.to_string(),
            expected: expected.join(","),
            found: found.join(","),
        });
    }
    Ok(())
}

pub fn load_patients(path: &Path) -> Result<(Vec<PatientRecord>, IngestReport)> {
    read_patients(open(path)?, &file_label(path))
}

/// Parse a patients table. Empty numeric cells become `None`; age is
/// required.
pub fn read_patients<R: Read>(input: R, file: &str) -> Result<(Vec<PatientRecord>, IngestReport)> {
    let columns = patient_columns();
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    check_header(reader.headers()?, &columns, file)?;
    let mut report = IngestReport::default();
    let mut seen = std::collections::BTreeSet::new();
    let mut out = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::parse(file, line, e.to_string())
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() != columns.len() {
            return Err(Error::parse(
                file,
                line,
                format!("expected {} cells, found {}", columns.len(), row.len()),
            ));
        }
        for (i, cell) in row.iter().enumerate() {
            if cell.trim().is_empty() {
                *report.missing_by_column.entry(columns[i].clone()).or_default() += 1;
            }
        }
        let id = row[0].trim().to_string();
        if id.is_empty() {
            return Err(Error::parse(file, line, "empty patient_id"));
        }
        if !seen.insert(id.clone()) {
            return Err(Error::DuplicatePatient(id));
        }
        let age = required_f64(&row[1], file, line, "age")?;
        let gender = row[2].trim().parse().map_err(|e: String| Error::parse(file, line, e))?;
        let ethnicity = row[3].trim().parse().map_err(|e: String| Error::parse(file, line, e))?;
        let weight = optional_f64(&row[4], file, line, "weight")?;
        let height = optional_f64(&row[5], file, line, "height")?;
        let sofa = match row[6].trim() {
            "" => None,
            s => Some(
                s.parse::<u32>()
                    .map_err(|_| Error::parse(file, line, format!("column sofa: cannot parse `{s}`")))?,
            ),
        };
        let mut comorbidities = Vec::with_capacity(COMORBIDITIES.len());
        for (j, cell) in row.iter().skip(7).take(COMORBIDITIES.len()).enumerate() {
            let flag = match cell.trim() {
                "1" | "true" => true,
                "0" | "false" | "" => false,
                other => {
                    return Err(Error::parse(
                        file,
                        line,
                        format!("column {}: expected 0/1, found `{other}`", columns[7 + j]),
                    ))
                }
            };
            comorbidities.push(flag);
        }
        let n = columns.len();
        let icu_admit = minute(&row[n - 2], file, line, "icu_admit")?;
        let icu_discharge = minute(&row[n - 1], file, line, "icu_discharge")?;
        let record = PatientRecord {
            patient_id: id,
            age,
            gender,
            ethnicity,
            weight,
            height,
            sofa,
            comorbidities,
            icu_admit,
            icu_discharge,
        };
        record.check().map_err(|m| Error::parse(file, line, m))?;
        out.push(record);
    }
    report.patient_rows = out.len();
    Ok((out, report))
}

pub fn load_events(path: &Path, patients: &[PatientRecord], report: &mut IngestReport) -> Result<Vec<EventStream>> {
    read_events(open(path)?, &file_label(path), patients, report)
}

/// Parse a long-format events table into per-patient streams. Rows for
/// unknown patients or unknown kinds are dropped and counted in `report`.
pub fn read_events<R: Read>(
    input: R,
    file: &str,
    patients: &[PatientRecord],
    report: &mut IngestReport,
) -> Result<Vec<EventStream>> {
    let columns: Vec<String> = EVENT_COLUMNS.iter().map(|s| s.to_string()).collect();
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(false)
        .from_reader(input);
    check_header(reader.headers()?, &columns, file)?;
    let mut by_patient: BTreeMap<String, Vec<Event>> =
        patients.iter().map(|p| (p.patient_id.clone(), Vec::new())).collect();
    for row in reader.records() {
        let row = row.map_err(|e| {
            let line = e.position().map(|p| p.line()).unwrap_or(0);
            Error::parse(file, line, e.to_string())
        })?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        report.event_rows += 1;
        let time = minute(&row[1], file, line, "minute_offset")?;
        let value = required_f64(&row[3], file, line, "value")?;
        let raw = RawEvent {
            time,
            kind: row[2].trim().to_string(),
            value,
            rate: optional_f64(&row[4], file, line, "rate")?,
            volume: optional_f64(&row[5], file, line, "volume")?,
            fluid_class: match row[6].trim() {
                "" => None,
                s => Some(s.to_string()),
            },
        };
        let id = row[0].trim();
        let Some(events) = by_patient.get_mut(id) else {
            report.rejected_unknown_patient += 1;
            continue;
        };
        let validation = validate_event(&raw);
        let mut reject = false;
        for v in &validation.violations {
            match v {
                Violation::UnknownKind(k) => {
                    *report.rejected_unknown_kind.entry(k.clone()).or_default() += 1;
                    reject = true;
                }
                Violation::NegativeRate(_)
                | Violation::NegativeVolume(_)
                | Violation::MissingInfusionFields
                | Violation::UnknownFluidClass(_) => {
                    report.rejected_invalid_infusion += 1;
                    reject = true;
                }
                Violation::BelowRange { kind, .. } | Violation::AboveRange { kind, .. } => {
                    *report.range_warnings.entry(kind.name().to_string()).or_default() += 1;
                }
                Violation::NonFinite => {
                    return Err(Error::parse(file, line, "non-finite value"));
                }
            }
        }
        if reject {
            continue;
        }
        let kind: EventKind = raw.kind.parse().expect("validated kind");
        let event = if kind == EventKind::FluidInfusion {
            let class: FluidClass = raw
                .fluid_class
                .as_deref()
                .unwrap_or("")
                .parse()
                .expect("validated class");
            let mut e = Event::fluid(time, raw.rate.unwrap_or(0.0), raw.volume.unwrap_or(0.0), class);
            e.value = value;
            e
        } else {
            Event::measurement(time, kind, value)
        };
        events.push(event);
        report.events_kept += 1;
    }
    let streams: Vec<EventStream> = by_patient
        .into_iter()
        .map(|(id, events)| EventStream::new(id, events))
        .collect();
    report.empty_streams = streams.iter().filter(|s| s.is_empty()).count();
    Ok(streams)
}

/// Load both files into a [`Dataset`].
pub fn load_dataset(patients_path: &Path, events_path: &Path) -> Result<(Dataset, IngestReport)> {
    let (patients, mut report) = load_patients(patients_path)?;
    let streams = load_events(events_path, &patients, &mut report)?;
    Ok((Dataset::new(patients, streams)?, report))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn write_patients<'a, W: Write>(patients: impl IntoIterator<Item = &'a PatientRecord>, w: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    writer.write_record(patient_columns())?;
    for p in patients {
        let mut row = vec![
            p.patient_id.clone(),
            p.age.to_string(),
            p.gender.as_str().to_string(),
            p.ethnicity.as_str().to_string(),
            fmt_opt(p.weight),
            fmt_opt(p.height),
            p.sofa.map(|s| s.to_string()).unwrap_or_default(),
        ];
        row.extend(p.comorbidities.iter().map(|&f| if f { "1" } else { "0" }.to_string()));
        row.push(p.icu_admit.to_string());
        row.push(p.icu_discharge.to_string());
        writer.write_record(&row)?;
    }
    writer.flush().map_err(|e| Error::io("<patients writer>", e))?;
    Ok(())
}

pub fn write_events<'a, W: Write>(streams: impl IntoIterator<Item = &'a EventStream>, w: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    writer.write_record(EVENT_COLUMNS)?;
    for s in streams {
        for e in s.events() {
            let (rate, volume, class) = match e.infusion {
                Some(i) => (
                    i.rate.to_string(),
                    i.volume.to_string(),
                    i.fluid_class.as_str().to_string(),
                ),
                None => (String::new(), String::new(), String::new()),
            };
            writer.write_record([
                s.patient_id.as_str(),
                &e.time.to_string(),
                e.kind.name(),
                &e.value.to_string(),
                &rate,
                &volume,
                &class,
            ])?;
        }
    }
    writer.flush().map_err(|e| Error::io("<events writer>", e))?;
    Ok(())
}
