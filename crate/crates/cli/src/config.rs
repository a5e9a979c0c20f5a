//! Run configuration: a flat `key = value` file, overridden by `--set`
//! pairs and then by dedicated flags.

use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{anyhow, bail, Context, Result};
use fbt_core::cohort::CohortConfig;
use fbt_core::experiment::{Algorithm, ExperimentConfig, Representation, Setting, TrainConfig, ATTENTION_SAMPLE};
use fbt_core::featurize::{Aggregator, FeatureConfig, Timesteps};
use fbt_core::synth::{SignalMode, SynthConfig};

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub patients: Option<PathBuf>,
    pub events: Option<PathBuf>,
    pub cohort_file: Option<PathBuf>,
    pub features: Option<PathBuf>,
    pub split: Option<PathBuf>,
    pub model: Option<PathBuf>,
    pub algorithm: Option<Algorithm>,
    pub representation: Representation,
    pub setting: Option<Setting>,
    pub timesteps: Option<usize>,
    pub synth: SynthConfig,
    pub cohort: CohortConfig,
    pub features_cfg: FeatureConfig,
    pub train: TrainConfig,
    pub attention_sample: usize,
    pub grid_algorithms: Vec<Algorithm>,
    pub grid_representations: Vec<Representation>,
    pub grid_timesteps: Vec<usize>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            out_dir: PathBuf::from("out"),
            patients: None,
            events: None,
            cohort_file: None,
            features: None,
            split: None,
            model: None,
            algorithm: None,
            representation: Representation::Raw,
            setting: None,
            timesteps: None,
            synth: SynthConfig::default(),
            cohort: CohortConfig::default(),
            features_cfg: FeatureConfig::default(),
            train: TrainConfig::default(),
            attention_sample: ATTENTION_SAMPLE,
            grid_algorithms: Algorithm::ALL.to_vec(),
            grid_representations: Representation::ALL.to_vec(),
            grid_timesteps: Timesteps::ALLOWED.to_vec(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: Display,
{
    value
        .trim()
        .parse()
        .map_err(|e| anyhow!("invalid value `{value}` for `{key}`: {e}"))
}

fn parse_list<T: FromStr>(key: &str, value: &str) -> Result<Vec<T>>
where
    T::Err: Display,
{
    let items = value
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(|s| parse(key, s))
        .collect::<Result<Vec<T>>>()?;
    if items.is_empty() {
        bail!("`{key}` needs at least one value");
    }
    Ok(items)
}

fn join<T: Display>(items: &[T]) -> String {
    items.iter().map(|v| v.to_string()).collect::<Vec<_>>().join(",")
}

fn opt_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

fn opt<T: Display>(v: &Option<T>) -> String {
    v.as_ref().map(|v| v.to_string()).unwrap_or_default()
}

impl RunConfig {
    /// Applies one `key = value` setting. An empty value clears optional keys.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        let path = || (!v.is_empty()).then(|| PathBuf::from(v));
        let t = &mut self.train;
        let s = &mut self.synth;
        let c = &mut self.cohort;
        match key.trim() {
            "seed" => self.seed = parse(key, v)?,
            "out_dir" => self.out_dir = PathBuf::from(v),
            "patients" => self.patients = path(),
            "events" => self.events = path(),
            "cohort" => self.cohort_file = path(),
            "features" => self.features = path(),
            "split" => self.split = path(),
            "model" => self.model = path(),
            "algorithm" => self.algorithm = if v.is_empty() { None } else { Some(parse(key, v)?) },
            "representation" => self.representation = parse(key, v)?,
            "setting" => self.setting = if v.is_empty() { None } else { Some(parse(key, v)?) },
            "timesteps" => self.timesteps = if v.is_empty() { None } else { Some(parse(key, v)?) },

            "n_patients" => s.n_patients = parse(key, v)?,
            "signal_mode" => s.signal_mode = parse::<SignalMode>(key, v)?,
            "signal_strength" => s.signal_strength = parse(key, v)?,
            "missingness" => s.missingness = parse(key, v)?,
            "prevalence" => s.prevalence = parse(key, v)?,
            "edge_case_rate" => s.edge_case_rate = parse(key, v)?,

            "min_age" => c.min_age = parse(key, v)?,
            "min_stay_minutes" => c.min_stay_minutes = parse(key, v)?,
            "fbt_search_minutes" => c.fbt_search_minutes = parse(key, v)?,
            "fbt_min_rate" => c.fbt_min_rate = parse(key, v)?,
            "fbt_min_volume" => c.fbt_min_volume = parse(key, v)?,
            "hypotension_map" => c.hypotension_map = parse(key, v)?,
            "map_lookback_minutes" => c.map_lookback_minutes = parse(key, v)?,
            "response_ratio" => c.response_ratio = parse(key, v)?,
            "response_window_minutes" => c.response_window_minutes = parse(key, v)?,
            "baseline_before_minutes" => c.baseline_before_minutes = parse(key, v)?,
            "baseline_after_minutes" => c.baseline_after_minutes = parse(key, v)?,

            "aggregator" => self.features_cfg.aggregator = parse::<Aggregator>(key, v)?,

            "learning_rate" => t.learning_rate = parse(key, v)?,
            "autoencoder_learning_rate" => t.autoencoder_learning_rate = parse(key, v)?,
            "batch_size" => t.batch_size = parse(key, v)?,
            "max_epochs" => t.max_epochs = parse(key, v)?,
            "patience" => t.patience = parse(key, v)?,
            "mlp_dropout" => t.mlp_dropout = parse(key, v)?,
            "recurrent_dropout" => t.recurrent_dropout = parse(key, v)?,
            "reconstruction_weight" => t.reconstruction_weight = parse(key, v)?,
            "hidden" => t.hidden = parse(key, v)?,
            "layers" => t.layers = parse(key, v)?,
            "attention_dim" => t.attention_dim = parse(key, v)?,
            "lambda_grid" => t.lambda_grid = parse_list(key, v)?,
            "linear_tol" => t.linear_tol = parse(key, v)?,
            "linear_max_iter" => t.linear_max_iter = parse(key, v)?,
            "autoencoder_epochs" => t.autoencoder_epochs = parse(key, v)?,

            "attention_sample" => self.attention_sample = parse(key, v)?,
            "grid_algorithms" => self.grid_algorithms = parse_list(key, v)?,
            "grid_representations" => self.grid_representations = parse_list(key, v)?,
            "grid_timesteps" => self.grid_timesteps = parse_list(key, v)?,
            other => bail!("unknown config key `{other}`"),
        }
        Ok(())
    }

    /// Parses `key = value` lines; `#` starts a comment.
    pub fn apply_text(&mut self, text: &str, source: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("{source}, line {}: expected `key = value`, found `{raw}`", i + 1))?;
            self.set(k, v).with_context(|| format!("{source}, line {}", i + 1))?;
        }
        Ok(())
    }

    pub fn apply_file(&mut self, path: &Path) -> Result<()> {
        let text =
            std::fs::read_to_string(path).with_context(|| format!("cannot read config file {}", path.display()))?;
        self.apply_text(&text, &path.display().to_string())
    }

    /// Every key with its resolved value, in a fixed order. Fed back through
    /// [`RunConfig::apply_text`] it reproduces the same configuration.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let t = &self.train;
        let s = &self.synth;
        let c = &self.cohort;
        vec![
            ("seed", self.seed.to_string()),
            ("out_dir", self.out_dir.display().to_string()),
            ("patients", opt_path(&self.patients)),
            ("events", opt_path(&self.events)),
            ("cohort", opt_path(&self.cohort_file)),
            ("features", opt_path(&self.features)),
            ("split", opt_path(&self.split)),
            ("model", opt_path(&self.model)),
            ("algorithm", opt(&self.algorithm)),
            ("representation", self.representation.to_string()),
            ("setting", opt(&self.setting)),
            ("timesteps", opt(&self.timesteps)),
            ("n_patients", s.n_patients.to_string()),
            ("signal_mode", s.signal_mode.to_string()),
            ("signal_strength", s.signal_strength.to_string()),
            ("missingness", s.missingness.to_string()),
            ("prevalence", s.prevalence.to_string()),
            ("edge_case_rate", s.edge_case_rate.to_string()),
            ("min_age", c.min_age.to_string()),
            ("min_stay_minutes", c.min_stay_minutes.to_string()),
            ("fbt_search_minutes", c.fbt_search_minutes.to_string()),
            ("fbt_min_rate", c.fbt_min_rate.to_string()),
            ("fbt_min_volume", c.fbt_min_volume.to_string()),
            ("hypotension_map", c.hypotension_map.to_string()),
            ("map_lookback_minutes", c.map_lookback_minutes.to_string()),
            ("response_ratio", c.response_ratio.to_string()),
            ("response_window_minutes", c.response_window_minutes.to_string()),
            ("baseline_before_minutes", c.baseline_before_minutes.to_string()),
            ("baseline_after_minutes", c.baseline_after_minutes.to_string()),
            ("aggregator", self.features_cfg.aggregator.as_str().to_string()),
            ("learning_rate", t.learning_rate.to_string()),
            ("autoencoder_learning_rate", t.autoencoder_learning_rate.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("max_epochs", t.max_epochs.to_string()),
            ("patience", t.patience.to_string()),
            ("mlp_dropout", t.mlp_dropout.to_string()),
            ("recurrent_dropout", t.recurrent_dropout.to_string()),
            ("reconstruction_weight", t.reconstruction_weight.to_string()),
            ("hidden", t.hidden.to_string()),
            ("layers", t.layers.to_string()),
            ("attention_dim", t.attention_dim.to_string()),
            ("lambda_grid", join(&t.lambda_grid)),
            ("linear_tol", t.linear_tol.to_string()),
            ("linear_max_iter", t.linear_max_iter.to_string()),
            ("autoencoder_epochs", t.autoencoder_epochs.to_string()),
            ("attention_sample", self.attention_sample.to_string()),
            ("grid_algorithms", join(&self.grid_algorithms)),
            ("grid_representations", join(&self.grid_representations)),
            ("grid_timesteps", join(&self.grid_timesteps)),
        ]
    }

    pub fn to_text(&self) -> String {
        self.entries().iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// The experiment implied by algorithm, setting and timesteps. A missing
    /// setting follows from the algorithm or from whether timesteps are set.
    /// A missing algorithm defaults to LASSO (aggregated) or LSTM+attention
    /// (series), and missing series timesteps default to 36.
    pub fn experiment(&self) -> Result<ExperimentConfig> {
        let setting = self.setting.or(self.algorithm.map(Algorithm::setting)).unwrap_or(
            if self.timesteps.is_some() || self.algorithm.is_none() {
                Setting::TimeSeries
            } else {
                Setting::TimeAggregated
            },
        );
        let algorithm = self.algorithm.unwrap_or(match setting {
            Setting::TimeAggregated => Algorithm::Lasso,
            Setting::TimeSeries => Algorithm::LstmAttn,
        });
        if algorithm.setting() != setting {
            bail!(
                "algorithm {algorithm} belongs to the {} setting, not {setting}",
                algorithm.setting()
            );
        }
        let timesteps = match (setting, self.timesteps) {
            (Setting::TimeAggregated, Some(t)) => {
                bail!("timesteps ({t}) cannot be combined with the time_aggregated setting")
            }
            (Setting::TimeAggregated, None) => None,
            (Setting::TimeSeries, t) => Some(t.unwrap_or(36)),
        };
        let mut cfg = ExperimentConfig::new(algorithm, self.representation, timesteps, self.seed)?;
        cfg.train = self.train.clone();
        cfg.validate()?;
        Ok(cfg)
    }

    /// Checks everything that can be checked before a stage reads input.
    pub fn validate(&self) -> Result<()> {
        self.experiment()?;
        for t in &self.grid_timesteps {
            Timesteps::new(*t)?;
        }
        if self.attention_sample == 0 {
            bail!("attention_sample must be positive");
        }
        Ok(())
    }

    fn in_out(&self, name: &str) -> PathBuf {
        self.out_dir.join(name)
    }

    pub fn patients_path(&self) -> PathBuf {
        self.patients.clone().unwrap_or_else(|| self.in_out("patients.csv"))
    }

    pub fn events_path(&self) -> PathBuf {
        self.events.clone().unwrap_or_else(|| self.in_out("events.csv"))
    }

    pub fn cohort_path(&self) -> PathBuf {
        self.cohort_file.clone().unwrap_or_else(|| self.in_out("cohort.csv"))
    }

    pub fn split_path(&self) -> PathBuf {
        self.split.clone().unwrap_or_else(|| self.in_out("split.csv"))
    }

    pub fn features_path(&self, timesteps: Option<Timesteps>) -> PathBuf {
        self.features
            .clone()
            .unwrap_or_else(|| self.in_out(&format!("features_{}.csv", table_tag(timesteps))))
    }

    pub fn model_path(&self, exp: &ExperimentConfig) -> PathBuf {
        self.model
            .clone()
            .unwrap_or_else(|| self.in_out(&format!("model_{}.json", exp.tag())))
    }

    pub fn output(&self, name: &str) -> PathBuf {
        self.in_out(name)
    }
}

/// `aggregated` or `t36`.
pub fn table_tag(timesteps: Option<Timesteps>) -> String {
    match timesteps {
        None => "aggregated".into(),
        Some(t) => format!("t{}", t.get()),
    }
}
