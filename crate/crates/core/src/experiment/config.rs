use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::featurize::Timesteps;
use crate::linear::{Penalty, LAMBDA_GRID};
use crate::nn::NetworkKind;

macro_rules! named_enum {
    ($name:ident, $what:literal, { $($variant:ident => $text:literal),+ $(,)? }) => {
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl FromStr for $name {
            type Err = Error;
            fn from_str(s: &str) -> Result<Self> {
                $name::ALL
                    .iter()
                    .copied()
                    .find(|v| v.as_str() == s)
                    .ok_or_else(|| {
                        let names: Vec<&str> = $name::ALL.iter().map(|v| v.as_str()).collect();
                        Error::Config(format!(concat!("unknown ", $what, " `{}` (expected one of {})"), s, names.join(", ")))
                    })
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }
    };
}

named_enum!(Setting, "setting", {
    TimeAggregated => "time_aggregated",
    TimeSeries => "time_series",
});

named_enum!(Algorithm, "algorithm", {
    Lasso => "lasso",
    Ridge => "ridge",
    Mlp => "mlp",
    Lstm => "lstm",
    Gru => "gru",
    LstmAttn => "lstm_attn",
    GruAttn => "gru_attn",
});

named_enum!(Representation, "representation", {
    Raw => "raw",
    Distributed => "distributed",
});

impl Algorithm {
    pub fn setting(self) -> Setting {
        match self {
            Algorithm::Lasso | Algorithm::Ridge | Algorithm::Mlp => Setting::TimeAggregated,
            _ => Setting::TimeSeries,
        }
    }

    pub fn penalty(self) -> Option<Penalty> {
        match self {
            Algorithm::Lasso => Some(Penalty::L1),
            Algorithm::Ridge => Some(Penalty::L2),
            _ => None,
        }
    }

    pub fn network_kind(self) -> Option<NetworkKind> {
        match self {
            Algorithm::Mlp => Some(NetworkKind::Mlp),
            Algorithm::Lstm | Algorithm::LstmAttn => Some(NetworkKind::Lstm),
            Algorithm::Gru | Algorithm::GruAttn => Some(NetworkKind::Gru),
            _ => None,
        }
    }

    pub fn has_attention(self) -> bool {
        matches!(self, Algorithm::LstmAttn | Algorithm::GruAttn)
    }

    /// Display name used in result tables.
    pub fn label(self) -> &'static str {
        match self {
            Algorithm::Lasso => "LASSO",
            Algorithm::Ridge => "Ridge",
            Algorithm::Mlp => "MLP",
            Algorithm::Lstm => "LSTM",
            Algorithm::Gru => "GRU",
            Algorithm::LstmAttn => "LSTM+Attention",
            Algorithm::GruAttn => "GRU+Attention",
        }
    }
}

/// Optimizer and schedule settings. None of these are fixed by the model
/// family; the defaults are documented choices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub autoencoder_learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub mlp_dropout: f64,
    pub recurrent_dropout: f64,
    pub reconstruction_weight: f64,
    pub hidden: usize,
    pub layers: usize,
    pub attention_dim: usize,
    pub lambda_grid: Vec<f64>,
    pub linear_tol: f64,
    pub linear_max_iter: usize,
    /// Reconstruction-only epochs for the autoencoder feeding a linear model.
    pub autoencoder_epochs: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            autoencoder_learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 100,
            patience: 5,
            mlp_dropout: 0.5,
            recurrent_dropout: 0.0,
            reconstruction_weight: 1.0,
            hidden: 32,
            layers: 3,
            attention_dim: 32,
            lambda_grid: LAMBDA_GRID.to_vec(),
            linear_tol: 1e-7,
            linear_max_iter: 20_000,
            autoencoder_epochs: 30,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub setting: Setting,
    pub algorithm: Algorithm,
    pub representation: Representation,
    pub timesteps: Option<Timesteps>,
    pub seed: u64,
    pub train: TrainConfig,
}

impl ExperimentConfig {
    pub fn new(
        algorithm: Algorithm,
        representation: Representation,
        timesteps: Option<usize>,
        seed: u64,
    ) -> Result<Self> {
        let cfg = ExperimentConfig {
            setting: algorithm.setting(),
            algorithm,
            representation,
            timesteps: timesteps.map(Timesteps::new).transpose()?,
            seed,
            train: TrainConfig::default(),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        match (self.setting, self.timesteps) {
            (Setting::TimeAggregated, Some(t)) => {
                return Err(Error::Config(format!(
                    "timesteps ({}) cannot be combined with the time_aggregated setting",
                    t.get()
                )))
            }
            (Setting::TimeSeries, None) => {
                return Err(Error::Config(
                    "the time_series setting requires timesteps (12, 36 or 72)".into(),
                ))
            }
            _ => {}
        }
        if self.algorithm.setting() != self.setting {
            return Err(Error::Config(format!(
                "algorithm {} belongs to the {} setting, not {}",
                self.algorithm,
                self.algorithm.setting(),
                self.setting
            )));
        }
        let t = &self.train;
        if t.batch_size == 0 || t.max_epochs == 0 || t.hidden == 0 || t.layers == 0 || t.attention_dim == 0 {
            return Err(Error::Config(
                "batch_size, max_epochs, hidden, layers and attention_dim must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&t.mlp_dropout) || !(0.0..1.0).contains(&t.recurrent_dropout) {
            return Err(Error::Config("dropout rates must lie in [0, 1)".into()));
        }
        if !(t.learning_rate > 0.0 && t.autoencoder_learning_rate > 0.0) {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if t.lambda_grid.is_empty() || t.lambda_grid.iter().any(|l| l.is_nan() || *l < 0.0) {
            return Err(Error::Config(
                "lambda_grid must be a nonempty list of non-negative values".into(),
            ));
        }
        Ok(())
    }

    /// Short identifier, e.g. `lstm_attn-t36-raw`.
    pub fn tag(&self) -> String {
        match self.timesteps {
            Some(t) => format!("{}-t{}-{}", self.algorithm, t.get(), self.representation),
            None => format!("{}-{}", self.algorithm, self.representation),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn setting_and_timesteps_must_agree() {
        assert!(ExperimentConfig::new(Algorithm::Lasso, Representation::Raw, Some(36), 0).is_err());
        assert!(ExperimentConfig::new(Algorithm::Lstm, Representation::Raw, None, 0).is_err());
        assert!(ExperimentConfig::new(Algorithm::Gru, Representation::Raw, Some(24), 0).is_err());
        assert!(ExperimentConfig::new(Algorithm::GruAttn, Representation::Distributed, Some(72), 0).is_ok());
    }

    #[test]
    fn algorithm_must_match_setting() {
        let mut c = ExperimentConfig::new(Algorithm::Mlp, Representation::Raw, None, 0).unwrap();
        c.setting = Setting::TimeSeries;
        c.timesteps = Some(Timesteps::new(12).unwrap());
        assert!(c.validate().is_err());
    }

    #[test]
    fn names_round_trip() {
        for a in Algorithm::ALL {
            assert_eq!(a.as_str().parse::<Algorithm>().unwrap(), *a);
        }
        assert!("svm".parse::<Algorithm>().is_err());
    }
}
