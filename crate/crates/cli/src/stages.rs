//! One function per pipeline stage. Each reads files, writes its artifacts
//! into the output directory and leaves a `<stage>.log` beside them.

use anyhow::{bail, Context, Result};
use fbt_core::cohort::{read_cohort, select_cohort, summarize, write_cohort, FbtEpisode};
use fbt_core::experiment::{
    attention_report, default_grid, evaluate, run_grid, train, ExperimentConfig, Model, ModelArtifact, PreparedData,
};
use fbt_core::featurize::{
    build_table, read_features, split, write_features, FeatureTable, SplitAssignment, Timesteps,
};
use fbt_core::ingest::{load_dataset, Dataset};
use fbt_core::linear::coefficient_report;
use fbt_core::schema::FeatureSchema;
use fbt_core::synth::generate;

use crate::config::{table_tag, RunConfig};
use crate::log::{require, StageLog};

fn load_inputs(cfg: &RunConfig, log: &mut StageLog) -> Result<Dataset> {
    let (p, e) = (cfg.patients_path(), cfg.events_path());
    require(&p, "run `fbt generate` or pass --patients")?;
    require(&e, "run `fbt generate` or pass --events")?;
    log.input(&p)?;
    log.input(&e)?;
    let (ds, report) = load_dataset(&p, &e)?;
    log.note(format!(
        "loaded {} patients, {} of {} event rows kept",
        ds.patients.len(),
        report.events_kept,
        report.event_rows
    ));
    Ok(ds)
}

fn load_episodes(cfg: &RunConfig, log: &mut StageLog) -> Result<Vec<FbtEpisode>> {
    let path = cfg.cohort_path();
    require(&path, "run `fbt cohort` or pass --cohort")?;
    log.input(&path)?;
    let file = std::fs::File::open(&path)?;
    Ok(read_cohort(file, &path.display().to_string())?)
}

fn split_for(table: &FeatureTable, seed: u64) -> Result<SplitAssignment> {
    let pairs: Vec<(String, bool)> = table.ids.iter().cloned().zip(table.labels.iter().copied()).collect();
    Ok(split(&pairs, seed)?)
}

/// Raw feature table plus split, read from the featurize outputs.
fn load_table(
    cfg: &RunConfig,
    timesteps: Option<Timesteps>,
    log: &mut StageLog,
) -> Result<(FeatureTable, SplitAssignment)> {
    let fpath = cfg.features_path(timesteps);
    let hint = match timesteps {
        None => "run `fbt featurize --setting time_aggregated` or pass --features".to_string(),
        Some(t) => format!("run `fbt featurize --timesteps {}` or pass --features", t.get()),
    };
    require(&fpath, &hint)?;
    let spath = cfg.split_path();
    require(&spath, "run `fbt featurize` or pass --split")?;
    log.input(&fpath)?;
    log.input(&spath)?;
    let table = read_features(std::fs::File::open(&fpath)?, &fpath.display().to_string())?;
    if table.timesteps != timesteps.map(Timesteps::get) {
        bail!(
            "{} holds {} features but {} are needed",
            fpath.display(),
            table_tag(table.timesteps.map(Timesteps::new).transpose()?),
            table_tag(timesteps)
        );
    }
    let split = SplitAssignment::from_text(&std::fs::read_to_string(&spath)?)
        .with_context(|| format!("reading {}", spath.display()))?;
    Ok((table, split))
}

fn load_model(cfg: &RunConfig, log: &mut StageLog) -> Result<ModelArtifact> {
    let exp = cfg.experiment()?;
    let path = cfg.model_path(&exp);
    require(
        &path,
        "run `fbt train` with the same algorithm and timesteps, or pass --model",
    )?;
    log.input(&path)?;
    let artifact = ModelArtifact::load(&path).with_context(|| format!("loading {}", path.display()))?;
    log.note(format!("model {} ({})", artifact.config.tag(), path.display()));
    Ok(artifact)
}

pub fn generate_cmd(cfg: &RunConfig) -> Result<()> {
    let mut log = StageLog::start("generate", cfg)?;
    let mut synth = cfg.synth.clone();
    synth.seed = cfg.seed;
    let cohort = generate(&synth)?;
    let mut patients = Vec::new();
    cohort.write_patients(&mut patients)?;
    let mut events = Vec::new();
    cohort.write_events(&mut events)?;
    let mut manifest = Vec::new();
    cohort.write_manifest(&mut manifest)?;
    log.write(&cfg.output("patients.csv"), patients)?;
    log.write(&cfg.output("events.csv"), events)?;
    log.write(&cfg.output("manifest.csv"), manifest)?;
    log.note(format!(
        "{} patients, signal {}, {} labelled successes",
        cohort.patients.len(),
        synth.signal_mode,
        cohort
            .manifest
            .iter()
            .filter(|m| m.label == Some(fbt_core::cohort::Outcome::Success))
            .count()
    ));
    log.finish()
}

pub fn ingest_cmd(cfg: &RunConfig) -> Result<()> {
    let mut log = StageLog::start("ingest", cfg)?;
    let (p, e) = (cfg.patients_path(), cfg.events_path());
    require(&p, "run `fbt generate` or pass --patients")?;
    require(&e, "run `fbt generate` or pass --events")?;
    log.input(&p)?;
    log.input(&e)?;
    let (ds, report) = load_dataset(&p, &e)?;
    log.write(&cfg.output("ingest_report.txt"), report.to_text())?;
    log.note(format!("{} patients, {} streams", ds.patients.len(), ds.streams.len()));
    log.finish()
}

pub fn cohort_cmd(cfg: &RunConfig) -> Result<()> {
    let mut log = StageLog::start("cohort", cfg)?;
    let ds = load_inputs(cfg, &mut log)?;
    let episodes = select_cohort(&ds, &cfg.cohort);
    let mut table = Vec::new();
    write_cohort(&episodes, &mut table)?;
    let summary = summarize(&episodes);
    log.write(&cfg.output("cohort.csv"), table)?;
    log.write(&cfg.output("cohort_summary.txt"), summary.to_text())?;
    log.note(format!(
        "{} of {} included ({} success, {} failure)",
        summary.included, summary.total, summary.success, summary.failure
    ));
    log.finish()
}

pub fn featurize_cmd(cfg: &RunConfig) -> Result<()> {
    let exp = cfg.experiment()?;
    let mut log = StageLog::start("featurize", cfg)?;
    let ds = load_inputs(cfg, &mut log)?;
    let episodes = load_episodes(cfg, &mut log)?;
    let table = build_table(
        &ds,
        &episodes,
        &FeatureSchema::default(),
        exp.timesteps,
        &cfg.features_cfg,
    )?;
    let split = split_for(&table, cfg.seed)?;
    let data = PreparedData::new(&table, &split)?;
    for w in data.stats.warnings() {
        log.note(format!("warning: {w}"));
    }
    let tag = table_tag(exp.timesteps);
    let mut text = Vec::new();
    write_features(&table, &mut text)?;
    log.write(&cfg.output(&format!("features_{tag}.csv")), text)?;
    log.write(&cfg.output("split.csv"), split.to_text())?;
    log.write(&cfg.output(&format!("normalization_{tag}.csv")), data.stats.to_csv())?;
    log.note(format!(
        "{tag}: {} episodes × {} columns; train/val/test {}/{}/{}",
        table.len(),
        table.columns.len(),
        data.train.len(),
        data.val.len(),
        data.test.len()
    ));
    log.finish()
}

pub fn train_cmd(cfg: &RunConfig) -> Result<()> {
    let exp = cfg.experiment()?;
    let mut log = StageLog::start("train", cfg)?;
    let (table, split) = load_table(cfg, exp.timesteps, &mut log)?;
    let data = PreparedData::new(&table, &split)?;
    log.note(format!("training {} on {} episodes", exp.tag(), data.train.len()));
    let (model, training) = train(&exp, &data)?;
    for e in &training.epochs {
        log.note(format!(
            "epoch {:>3} train_loss {:.5} val_loss {:.5} val_auc {}",
            e.epoch,
            e.train_loss,
            e.val_loss,
            e.val_auc.map(|a| format!("{a:.4}")).unwrap_or_else(|| "-".into())
        ));
    }
    if let Some(l) = training.selected_lambda {
        log.note(format!("selected lambda {l}"));
    } else {
        log.note(format!(
            "best epoch {} (val loss {:.5})",
            training.best_epoch, training.best_val_loss
        ));
    }
    for w in training.warnings.iter().chain(&data.stats.warnings()) {
        log.note(format!("warning: {w}"));
    }
    if let Model::Linear {
        model: lm,
        encoder: None,
    } = &model
    {
        log.write(
            &cfg.output(&format!("coefficients_{}.csv", exp.tag())),
            coefficient_report(lm, &data.columns),
        )?;
    }
    let artifact = ModelArtifact::new(&exp, &data, model, training);
    log.write(&cfg.output(&format!("model_{}.json", exp.tag())), artifact.to_json()?)?;
    log.finish()
}

fn artifact_data(cfg: &RunConfig, artifact: &ModelArtifact, log: &mut StageLog) -> Result<PreparedData> {
    let timesteps = artifact.config.timesteps;
    let (table, split) = load_table(cfg, timesteps, log)?;
    if table.columns != artifact.columns {
        bail!("feature columns differ from the ones the model was trained on");
    }
    Ok(PreparedData::with_stats(
        &table,
        &split,
        artifact.normalization.clone(),
    )?)
}

pub fn eval_cmd(cfg: &RunConfig) -> Result<()> {
    cfg.experiment()?;
    let mut log = StageLog::start("eval", cfg)?;
    let artifact = load_model(cfg, &mut log)?;
    let data = artifact_data(cfg, &artifact, &mut log)?;
    let report = evaluate(&artifact, &data)?;
    let tag = artifact.config.tag();
    log.write(&cfg.output(&format!("eval_{tag}.json")), report.to_json()?)?;
    log.write(&cfg.output(&format!("predictions_{tag}.csv")), report.predictions_csv())?;
    log.note(format!(
        "test n={} accuracy {:.4} auc {:.4}; validation accuracy {:.4} auc {:.4}",
        report.n_test, report.accuracy, report.auc, report.validation.accuracy, report.validation.auc
    ));
    if artifact.dataset_fingerprint != report.dataset_fingerprint {
        log.note("warning: evaluation data differs from the training data fingerprint");
    }
    log.finish()
}

pub fn attention_cmd(cfg: &RunConfig) -> Result<()> {
    cfg.experiment()?;
    let mut log = StageLog::start("attention", cfg)?;
    let artifact = load_model(cfg, &mut log)?;
    let Some(timesteps) = artifact.config.timesteps else {
        bail!(
            "model {} is time-aggregated and has no attention",
            artifact.config.tag()
        );
    };
    let data = artifact_data(cfg, &artifact, &mut log)?;
    let report = attention_report(&artifact.model, &data.test, timesteps, cfg.attention_sample, cfg.seed)?;
    let tag = artifact.config.tag();
    log.write(&cfg.output(&format!("attention_{tag}.tsv")), report.to_tsv())?;
    log.write(
        &cfg.output(&format!("attention_{tag}.json")),
        serde_json::to_string_pretty(&report)?,
    )?;
    log.note(format!(
        "{} cases; final-quarter attention mass {:.3}",
        report.cases,
        report.tail_mass(0.25)
    ));
    log.finish()
}

pub fn grid_cmd(cfg: &RunConfig) -> Result<()> {
    cfg.validate()?;
    let mut log = StageLog::start("grid", cfg)?;
    let ds = load_inputs(cfg, &mut log)?;
    let episodes = load_episodes(cfg, &mut log)?;
    let schema = FeatureSchema::default();
    let configs: Vec<ExperimentConfig> = default_grid(&cfg.grid_representations, cfg.seed, &cfg.train)
        .into_iter()
        .filter(|c| cfg.grid_algorithms.contains(&c.algorithm))
        .filter(|c| c.timesteps.is_none_or(|t| cfg.grid_timesteps.contains(&t.get())))
        .collect();
    if configs.is_empty() {
        bail!("grid_algorithms and grid_timesteps select no cells");
    }
    let aggregated = build_table(&ds, &episodes, &schema, None, &cfg.features_cfg)?;
    let split = split_for(&aggregated, cfg.seed)?;
    log.note(format!("{} cells", configs.len()));
    let mut progress = Vec::new();
    let table = run_grid(
        &configs,
        |t| match t {
            None => PreparedData::new(&aggregated, &split),
            Some(_) => PreparedData::new(&build_table(&ds, &episodes, &schema, t, &cfg.features_cfg)?, &split),
        },
        |row| {
            let line = match &row.result {
                Ok(m) => format!("{}: accuracy {:.4} auc {:.4}", row.config.tag(), m.accuracy, m.auc),
                Err(e) => format!("{}: failed: {e}", row.config.tag()),
            };
            eprintln!("[grid] {line}");
            progress.push(line);
        },
    );
    for line in progress {
        log.record(line);
    }
    log.write(&cfg.output("results.csv"), table.to_csv())?;
    log.write(&cfg.output("results.txt"), table.to_text())?;
    let failed = table.rows.iter().filter(|r| r.result.is_err()).count();
    if failed > 0 {
        log.note(format!("warning: {failed} cell(s) failed; see results.csv"));
    }
    log.finish()
}
