use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Representation};
use super::data::{PreparedData, Samples};
use crate::error::{Error, Result};
use crate::linear::{select_lambda, FitOptions, LinearModel};
use crate::metrics::auc;
use crate::nn::{
    bce_probability, mse, Adam, Architecture, Autoencoder, Network, Params, RmsProp, AGGREGATED_CODE_DIM,
    SERIES_CODE_DIM,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
#[allow(clippy::large_enum_variant)]
pub enum Model {
    Linear {
        model: LinearModel,
        /// Frozen encoder producing the linear model's inputs.
        encoder: Option<Autoencoder>,
    },
    Network(Network),
}

impl Model {
    pub fn predict(&self, x: &[f64]) -> f64 {
        match self {
            Model::Linear { model, encoder: None } => model.predict_proba(x),
            Model::Linear {
                model,
                encoder: Some(ae),
            } => model.predict_proba(&ae.encode(x)),
            Model::Network(net) => net.predict(x).probability,
        }
    }

    pub fn predict_all(&self, xs: &[Vec<f64>]) -> Vec<f64> {
        xs.iter().map(|x| self.predict(x)).collect()
    }

    pub fn has_attention(&self) -> bool {
        matches!(self, Model::Network(n) if n.classifier.attention.is_some())
    }

    /// Attention weights for one sample, if the model has attention.
    pub fn attention(&self, x: &[f64]) -> Option<Vec<f64>> {
        match self {
            Model::Network(n) => n.predict(x).attention,
            Model::Linear { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_auc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingLog {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
    /// `(λ, validation log-loss)` for linear models.
    pub lambda_scores: Vec<(f64, f64)>,
    pub selected_lambda: Option<f64>,
    pub warnings: Vec<String>,
}

fn val_metrics(p: &[f64], val: &Samples) -> (f64, Option<f64>) {
    let loss = p.iter().zip(&val.y).map(|(p, y)| bce_probability(*p, *y)).sum::<f64>() / p.len() as f64;
    (loss, auc(p, &val.y).ok())
}

/// Trains the configured model. Deterministic given the config seed.
pub fn train(cfg: &ExperimentConfig, data: &PreparedData) -> Result<(Model, TrainingLog)> {
    cfg.validate()?;
    let expected_rows = cfg.timesteps.map(|t| t.get());
    if expected_rows != data.timesteps {
        return Err(Error::Config(format!(
            "features were built for timesteps {:?} but the experiment expects {:?}",
            data.timesteps, expected_rows
        )));
    }
    match cfg.algorithm.penalty() {
        Some(_) => train_linear(cfg, data),
        None => train_network(cfg, data),
    }
}

fn train_linear(cfg: &ExperimentConfig, data: &PreparedData) -> Result<(Model, TrainingLog)> {
    let penalty = cfg.algorithm.penalty().expect("linear algorithm");
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = TrainingLog::default();
    let encoder = match cfg.representation {
        Representation::Raw => None,
        Representation::Distributed => Some(pretrain_autoencoder(cfg, data, &mut rng, &mut log)?),
    };
    let encode = |s: &Samples| -> Vec<Vec<f64>> {
        match &encoder {
            None => s.x.clone(),
            Some(ae) => s.x.iter().map(|x| ae.encode(x)).collect(),
        }
    };
    let (xt, xv) = (encode(&data.train), encode(&data.val));
    let opts = FitOptions {
        tol: cfg.train.linear_tol,
        max_iter: cfg.train.linear_max_iter,
        record_history: false,
    };
    let (model, scores) = select_lambda(
        (&xt, &data.train.y),
        (&xv, &data.val.y),
        penalty,
        &cfg.train.lambda_grid,
        &opts,
    )?;
    if !model.converged {
        log.warnings.push(format!(
            "{penalty} solver stopped at max_iter {} before converging (λ = {})",
            opts.max_iter, model.lambda
        ));
    }
    log.selected_lambda = Some(model.lambda);
    log.best_val_loss = scores
        .iter()
        .find(|(l, _)| *l == model.lambda)
        .map(|s| s.1)
        .unwrap_or(f64::NAN);
    log.lambda_scores = scores;
    Ok((Model::Linear { model, encoder }, log))
}

/// Reconstruction-only training with Adam, early stopped on validation MSE.
fn pretrain_autoencoder(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    rng: &mut ChaCha8Rng,
    log: &mut TrainingLog,
) -> Result<Autoencoder> {
    let t = &cfg.train;
    let mut ae = Autoencoder::aggregated(data.width(), rng);
    let mut opt = Adam::new(ae.num_params(), t.autoencoder_learning_rate);
    let val_mse = |ae: &Autoencoder| {
        data.val.x.iter().map(|x| mse(&ae.autoencode(x).1, x).0).sum::<f64>() / data.val.len() as f64
    };
    let mut best = (val_mse(&ae), ae.clone());
    let mut order: Vec<usize> = (0..data.train.len()).collect();
    for epoch in 1..=t.autoencoder_epochs {
        order.shuffle(rng);
        let mut train_loss = 0.0;
        for (b, chunk) in order.chunks(t.batch_size).enumerate() {
            let mut grad = ae.zeros_like();
            let scale = 1.0 / chunk.len() as f64;
            let mut loss = 0.0;
            for &i in chunk {
                let x = &data.train.x[i];
                let tr = ae.trace(x);
                let (l, dr) = mse(tr.reconstruction(), x);
                loss += l * scale;
                let dr: Vec<f64> = dr.iter().map(|g| g * scale).collect();
                ae.backward(x, &tr, &vec![0.0; ae.code_dim()], &dr, &mut grad);
            }
            if !loss.is_finite() || !grad.all_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    batch: b,
                    detail: format!("autoencoder reconstruction loss {loss}"),
                });
            }
            train_loss += loss * chunk.len() as f64 / order.len() as f64;
            let mut flat = ae.to_flat();
            opt.step(&mut flat, &grad.to_flat());
            ae.set_flat(&flat);
        }
        let v = val_mse(&ae);
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss: v,
            val_auc: None,
        });
        if v < best.0 {
            best = (v, ae.clone());
        }
    }
    Ok(best.1)
}

pub fn architecture(cfg: &ExperimentConfig, data: &PreparedData) -> Architecture {
    let t = &cfg.train;
    let kind = cfg.algorithm.network_kind().expect("neural algorithm");
    let mut arch = match data.timesteps {
        None => Architecture::mlp(data.width()),
        Some(steps) => {
            let mut a = Architecture::recurrent(kind, data.width(), steps, cfg.algorithm.has_attention());
            a.hidden = t.hidden;
            a.layers = t.layers;
            a.attention_dim = cfg.algorithm.has_attention().then_some(t.attention_dim);
            a
        }
    };
    arch.dropout = if data.timesteps.is_none() { t.mlp_dropout } else { 0.0 };
    arch.recurrent_dropout = t.recurrent_dropout;
    arch.reconstruction_weight = t.reconstruction_weight;
    if cfg.representation == Representation::Distributed {
        arch.autoencoder = Some(match data.timesteps {
            None => (AGGREGATED_CODE_DIM, 64),
            Some(_) => (SERIES_CODE_DIM, 48),
        });
    }
    arch
}

/// Mini-batch training: RMSprop on classifier parameters, Adam on the
/// autoencoder (joint loss), early stopping on validation BCE.
fn train_network(cfg: &ExperimentConfig, data: &PreparedData) -> Result<(Model, TrainingLog)> {
    let t = &cfg.train;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut net = Network::new(architecture(cfg, data), &mut rng);
    let mut rms = RmsProp::new(net.classifier.num_params(), t.learning_rate);
    let mut adam = Adam::new(net.autoencoder.num_params(), t.autoencoder_learning_rate);
    let train = data.train.pairs();
    let mut log = TrainingLog {
        best_val_loss: f64::INFINITY,
        ..Default::default()
    };
    let mut best = net.clone();
    let mut since_best = 0;
    let mut order: Vec<usize> = (0..train.len()).collect();
    for epoch in 1..=t.max_epochs {
        order.shuffle(&mut rng);
        let mut train_loss = 0.0;
        for (b, chunk) in order.chunks(t.batch_size).enumerate() {
            let batch: Vec<(&[f64], bool)> = chunk.iter().map(|&i| train[i]).collect();
            let (loss, grad) = net.batch_gradient(&batch, Some(&mut rng));
            if !loss.total.is_finite() || !grad.all_finite() {
                return Err(Error::NonFinite {
                    epoch,
                    batch: b,
                    detail: format!("bce {} reconstruction {}", loss.bce, loss.reconstruction),
                });
            }
            train_loss += loss.total * chunk.len() as f64 / train.len() as f64;
            let mut flat = net.classifier.to_flat();
            rms.step(&mut flat, &grad.classifier.to_flat());
            net.classifier.set_flat(&flat);
            if let (Some(ae), Some(g)) = (net.autoencoder.as_mut(), grad.autoencoder.as_ref()) {
                let mut flat = ae.to_flat();
                adam.step(&mut flat, &g.to_flat());
                ae.set_flat(&flat);
            }
        }
        let probs: Vec<f64> = data.val.x.iter().map(|x| net.predict(x).probability).collect();
        let (val_loss, val_auc) = val_metrics(&probs, &data.val);
        log.epochs.push(EpochRecord {
            epoch,
            train_loss,
            val_loss,
            val_auc,
        });
        if val_loss < log.best_val_loss {
            log.best_val_loss = val_loss;
            log.best_epoch = epoch;
            best = net.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= t.patience {
                log.stopped_early = epoch < t.max_epochs;
                break;
            }
        }
    }
    Ok((Model::Network(best), log))
}
