use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::{Algorithm, ExperimentConfig, Representation, Setting, TrainConfig};
use super::data::PreparedData;
use super::report::{split_metrics, SplitMetrics};
use super::train::train;
use crate::error::Result;
use crate::featurize::Timesteps;

/// One config per algorithm and timestep count for each representation:
/// 3 aggregated and 12 series cells per representation.
pub fn default_grid(representations: &[Representation], seed: u64, train: &TrainConfig) -> Vec<ExperimentConfig> {
    let mut out = Vec::new();
    for &representation in representations {
        for &algorithm in Algorithm::ALL {
            let steps: Vec<Option<usize>> = match algorithm.setting() {
                Setting::TimeAggregated => vec![None],
                Setting::TimeSeries => Timesteps::ALLOWED.iter().map(|t| Some(*t)).collect(),
            };
            for t in steps {
                let mut cfg =
                    ExperimentConfig::new(algorithm, representation, t, seed).expect("grid configs are valid");
                cfg.train = train.clone();
                out.push(cfg);
            }
        }
    }
    out.sort_by_key(|c| {
        (
            c.representation,
            c.setting,
            c.timesteps.map(Timesteps::get),
            c.algorithm,
        )
    });
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub config: ExperimentConfig,
    /// Test metrics, or the failure message.
    pub result: std::result::Result<SplitMetrics, String>,
    pub best_accuracy: bool,
    pub best_auc: bool,
}

impl GridRow {
    /// Rows sharing setting, timesteps and representation are compared.
    pub fn group(&self) -> (Setting, Option<usize>, Representation) {
        (
            self.config.setting,
            self.config.timesteps.map(Timesteps::get),
            self.config.representation,
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridTable {
    pub rows: Vec<GridRow>,
}

/// Trains and scores every config on the test split. `data_for` builds the
/// prepared data for a timestep count (`None` for aggregated) and is called
/// once per distinct value. A failing cell is recorded and the grid goes on.
pub fn run_grid(
    configs: &[ExperimentConfig],
    mut data_for: impl FnMut(Option<Timesteps>) -> Result<PreparedData>,
    mut progress: impl FnMut(&GridRow),
) -> GridTable {
    let mut cache: BTreeMap<Option<usize>, std::result::Result<PreparedData, String>> = BTreeMap::new();
    let mut rows = Vec::with_capacity(configs.len());
    for cfg in configs {
        let key = cfg.timesteps.map(Timesteps::get);
        let data = cache
            .entry(key)
            .or_insert_with(|| data_for(cfg.timesteps).map_err(|e| e.to_string()));
        let result = match data {
            Err(e) => Err(e.clone()),
            Ok(d) => train(cfg, d)
                .and_then(|(model, _)| split_metrics(&model, &d.test).map(|m| m.0))
                .map_err(|e| e.to_string()),
        };
        let row = GridRow {
            config: cfg.clone(),
            result,
            best_accuracy: false,
            best_auc: false,
        };
        progress(&row);
        rows.push(row);
    }
    mark_best(&mut rows);
    GridTable { rows }
}

fn mark_best(rows: &mut [GridRow]) {
    let mut best: BTreeMap<_, (f64, f64)> = BTreeMap::new();
    for r in rows.iter() {
        if let Ok(m) = &r.result {
            let e = best.entry(r.group()).or_insert((f64::NEG_INFINITY, f64::NEG_INFINITY));
            e.0 = e.0.max(m.accuracy);
            e.1 = e.1.max(m.auc);
        }
    }
    for r in rows.iter_mut() {
        if let (Ok(m), Some(b)) = (&r.result, best.get(&r.group())) {
            r.best_accuracy = m.accuracy == b.0;
            r.best_auc = m.auc == b.1;
        }
    }
}

impl GridTable {
    pub fn to_csv(&self) -> String {
        let mut s = String::from(
            "setting,timesteps,representation,algorithm,status,accuracy,auc,best_accuracy,best_auc,error\n",
        );
        for r in &self.rows {
            let c = &r.config;
            let t = c.timesteps.map(|t| t.get().to_string()).unwrap_or_default();
            let (status, acc, auc, err) = match &r.result {
                Ok(m) => (
                    "ok",
                    format!("{:.6}", m.accuracy),
                    format!("{:.6}", m.auc),
                    String::new(),
                ),
                Err(e) => ("failed", String::new(), String::new(), e.replace([',', '\n'], ";")),
            };
            let _ = writeln!(
                s,
                "{},{t},{},{},{status},{acc},{auc},{},{},{err}",
                c.setting,
                c.representation,
                c.algorithm,
                u8::from(r.best_accuracy),
                u8::from(r.best_auc)
            );
        }
        s
    }

    /// Human-readable layout with one block per group; `*` marks the best
    /// value in its group.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let mut current = None;
        for r in &self.rows {
            let g = r.group();
            if current != Some(g) {
                let title = match g.1 {
                    None => format!("Time-aggregated, {} features", g.2),
                    Some(t) => format!("Time-series, {t} timesteps, {} features", g.2),
                };
                let _ = writeln!(s, "\n{title}\n{:<18} {:>10} {:>10}", "model", "accuracy", "AUC");
                current = Some(g);
            }
            match &r.result {
                Ok(m) => {
                    let mark = |v: f64, best: bool| format!("{v:.3}{}", if best { "*" } else { " " });
                    let _ = writeln!(
                        s,
                        "{:<18} {:>10} {:>10}",
                        r.config.algorithm.label(),
                        mark(m.accuracy, r.best_accuracy),
                        mark(m.auc, r.best_auc)
                    );
                }
                Err(e) => {
                    let _ = writeln!(s, "{:<18} failed: {e}", r.config.algorithm.label());
                }
            }
        }
        s.trim_start().to_string()
    }

    pub fn auc_of(
        &self,
        algorithm: Algorithm,
        timesteps: Option<usize>,
        representation: Representation,
    ) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| {
                r.config.algorithm == algorithm
                    && r.config.timesteps.map(Timesteps::get) == timesteps
                    && r.config.representation == representation
            })
            .and_then(|r| r.result.as_ref().ok().map(|m| m.auc))
    }
}
