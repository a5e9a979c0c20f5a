//! Shared fixtures for the benchmarks.

use fbt_core::cohort::{select_cohort, CohortConfig};
use fbt_core::experiment::PreparedData;
use fbt_core::featurize::{build_table, split, FeatureConfig, Timesteps};
use fbt_core::ingest::Dataset;
use fbt_core::schema::FeatureSchema;
use fbt_core::synth::{generate, SignalMode, SynthConfig};

pub fn synthetic(n: usize, seed: u64) -> Dataset {
    let cfg = SynthConfig {
        n_patients: n,
        seed,
        signal_mode: SignalMode::TemporalLate,
        ..Default::default()
    };
    generate(&cfg)
        .expect("valid generator config")
        .dataset()
        .expect("consistent dataset")
}

/// Normalized train/val/test data for `timesteps` (`None` for aggregated).
pub fn prepared(ds: &Dataset, timesteps: Option<usize>) -> PreparedData {
    let eps = select_cohort(ds, &CohortConfig::default());
    let t = timesteps.map(|t| Timesteps::new(t).expect("allowed timesteps"));
    let table = build_table(ds, &eps, &FeatureSchema::default(), t, &FeatureConfig::default()).expect("table");
    let pairs: Vec<(String, bool)> = table.ids.iter().cloned().zip(table.labels.iter().copied()).collect();
    PreparedData::new(&table, &split(&pairs, 0).expect("split")).expect("prepared data")
}
