use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Raw (unnormalized) features for a set of episodes, with missing cells
/// kept as `None`. Series tables stack `timesteps` rows per episode.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub columns: Vec<String>,
    pub timesteps: Option<usize>,
    pub ids: Vec<String>,
    pub labels: Vec<bool>,
    /// One entry per episode; `timesteps × columns` values for series.
    pub values: Vec<Vec<Option<f64>>>,
}

impl FeatureTable {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn rows_per_episode(&self) -> usize {
        self.timesteps.unwrap_or(1)
    }

    /// All rows of the episodes for which `keep(id)` is true.
    pub fn rows_where<'a>(&'a self, keep: impl Fn(&str) -> bool + 'a) -> impl Iterator<Item = &'a [Option<f64>]> + 'a {
        let width = self.columns.len();
        self.ids
            .iter()
            .zip(&self.values)
            .filter(move |(id, _)| keep(id))
            .flat_map(move |(_, v)| v.chunks(width))
    }
}

/// Columnar text: header `patient_id,label[,timestep],<columns>`, empty
/// cells for missing values.
pub fn write_features<W: Write>(table: &FeatureTable, w: W) -> Result<()> {
    let mut writer = csv::Writer::from_writer(w);
    let mut header = vec!["patient_id".to_string(), "label".to_string()];
    if table.timesteps.is_some() {
        header.push("timestep".into());
    }
    header.extend(table.columns.iter().cloned());
    writer.write_record(&header)?;
    let width = table.columns.len();
    for ((id, label), values) in table.ids.iter().zip(&table.labels).zip(&table.values) {
        for (t, row) in values.chunks(width).enumerate() {
            let mut rec = vec![id.clone(), if *label { "1" } else { "0" }.to_string()];
            if table.timesteps.is_some() {
                rec.push(t.to_string());
            }
            rec.extend(row.iter().map(|v| v.map(|x| x.to_string()).unwrap_or_default()));
            writer.write_record(&rec)?;
        }
    }
    writer.flush().map_err(|e| Error::io("<features writer>", e))?;
    Ok(())
}

pub fn read_features<R: Read>(input: R, file: &str) -> Result<FeatureTable> {
    let mut reader = csv::Reader::from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.len() < 2 || header[0] != "patient_id" || header[1] != "label" {
        return Err(Error::Header {
            file: file.into(),
            expected: "patient_id,label,...".into(),
            found: header.join(","),
        });
    }
    let series = header.get(2).map(|h| h == "timestep").unwrap_or(false);
    let first = if series { 3 } else { 2 };
    let columns: Vec<String> = header[first..].to_vec();
    let mut table = FeatureTable {
        columns,
        timesteps: None,
        ids: Vec::new(),
        labels: Vec::new(),
        values: Vec::new(),
    };
    let mut expected_t = 0usize;
    let mut max_t: Option<usize> = None;
    for row in reader.records() {
        let row = row?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let label = match &row[1] {
            "1" => true,
            "0" => false,
            other => return Err(Error::parse(file, line, format!("label must be 0/1, found `{other}`"))),
        };
        let mut cells = Vec::with_capacity(row.len() - first);
        for c in row.iter().skip(first) {
            cells.push(match c {
                "" => None,
                s => Some(
                    s.parse::<f64>()
                        .map_err(|_| Error::parse(file, line, format!("bad number `{s}`")))?,
                ),
            });
        }
        let id = row[0].to_string();
        if series {
            let t: usize = row[2].parse().map_err(|_| Error::parse(file, line, "bad timestep"))?;
            if t == 0 {
                if let Some(prev) = table.values.last() {
                    let rows = prev.len() / table.columns.len();
                    match max_t {
                        None => max_t = Some(rows),
                        Some(m) if m != rows => {
                            return Err(Error::parse(file, line, "episodes have different timestep counts"))
                        }
                        _ => {}
                    }
                }
                table.ids.push(id);
                table.labels.push(label);
                table.values.push(cells);
                expected_t = 1;
            } else {
                if t != expected_t || table.ids.last() != Some(&id) {
                    return Err(Error::parse(
                        file,
                        line,
                        "timesteps must be contiguous from 0 per episode",
                    ));
                }
                table.values.last_mut().expect("episode started").extend(cells);
                expected_t += 1;
            }
        } else {
            table.ids.push(id);
            table.labels.push(label);
            table.values.push(cells);
        }
    }
    if series {
        let rows = table
            .values
            .last()
            .map(|v| v.len() / table.columns.len().max(1))
            .unwrap_or(0);
        if let Some(m) = max_t {
            if m != rows {
                return Err(Error::parse(file, 0, "episodes have different timestep counts"));
            }
        }
        table.timesteps = Some(rows);
    }
    Ok(table)
}
