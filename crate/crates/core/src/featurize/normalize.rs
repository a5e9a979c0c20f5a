use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-column min, max and median over observed training values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizationStats {
    pub columns: Vec<String>,
    pub min: Vec<f64>,
    pub max: Vec<f64>,
    pub median: Vec<f64>,
    /// Columns with no observed training value; their stats fall back to 0.
    pub unobserved: Vec<usize>,
}

fn median_of(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

/// Fit on training rows only. Traversal order is the row order given, so
/// the result is deterministic.
pub fn fit_normalization<'a>(
    columns: &[String],
    rows: impl IntoIterator<Item = &'a [Option<f64>]>,
) -> Result<NormalizationStats> {
    let width = columns.len();
    let mut observed: Vec<Vec<f64>> = vec![Vec::new(); width];
    let mut n_rows = 0usize;
    for row in rows {
        if row.len() != width {
            return Err(Error::Shape(format!("row has {} values, expected {width}", row.len())));
        }
        n_rows += 1;
        for (c, v) in row.iter().enumerate() {
            if let Some(v) = v {
                observed[c].push(*v);
            }
        }
    }
    if n_rows == 0 {
        return Err(Error::Invalid(
            "cannot fit normalization on an empty training split".into(),
        ));
    }
    let mut stats = NormalizationStats {
        columns: columns.to_vec(),
        min: vec![0.0; width],
        max: vec![0.0; width],
        median: vec![0.0; width],
        unobserved: Vec::new(),
    };
    for (c, values) in observed.iter_mut().enumerate() {
        if values.is_empty() {
            stats.unobserved.push(c);
            continue;
        }
        stats.min[c] = values.iter().copied().fold(f64::INFINITY, f64::min);
        stats.max[c] = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        stats.median[c] = median_of(values);
    }
    Ok(stats)
}

impl NormalizationStats {
    pub fn width(&self) -> usize {
        self.columns.len()
    }

    /// Min-max scale of one column, clamped to `[0, 1]`; constant columns map to 0.
    pub fn scale(&self, column: usize, v: f64) -> f64 {
        let (lo, hi) = (self.min[column], self.max[column]);
        if hi <= lo {
            0.0
        } else {
            ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
        }
    }

    pub fn warnings(&self) -> Vec<String> {
        self.unobserved
            .iter()
            .map(|&c| {
                format!(
                    "column `{}` never observed in training split; median falls back to 0",
                    self.columns[c]
                )
            })
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("column,min,max,median,observed\n");
        for c in 0..self.width() {
            let obs = if self.unobserved.contains(&c) { 0 } else { 1 };
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                self.columns[c], self.min[c], self.max[c], self.median[c], obs
            ));
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let file = "normalization stats";
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let mut stats = NormalizationStats {
            columns: Vec::new(),
            min: Vec::new(),
            max: Vec::new(),
            median: Vec::new(),
            unobserved: Vec::new(),
        };
        for row in reader.records() {
            let row = row?;
            let line = row.position().map(|p| p.line()).unwrap_or(0);
            if row.len() != 5 {
                return Err(Error::parse(file, line, "expected 5 cells"));
            }
            let num = |i: usize| {
                row[i]
                    .parse::<f64>()
                    .map_err(|_| Error::parse(file, line, format!("bad number `{}`", &row[i])))
            };
            stats.columns.push(row[0].to_string());
            stats.min.push(num(1)?);
            stats.max.push(num(2)?);
            stats.median.push(num(3)?);
            if &row[4] == "0" {
                stats.unobserved.push(stats.columns.len() - 1);
            }
        }
        Ok(stats)
    }
}

/// Impute missing cells with the column median, then min-max scale.
/// `row` may hold several stacked rows of `stats.width()` values.
pub fn apply_normalization(row: &[Option<f64>], stats: &NormalizationStats) -> Vec<f64> {
    let width = stats.width();
    assert_eq!(
        row.len() % width,
        0,
        "row length must be a multiple of the column count"
    );
    row.iter()
        .enumerate()
        .map(|(i, v)| {
            let c = i % width;
            stats.scale(c, v.unwrap_or(stats.median[c]))
        })
        .collect()
}
