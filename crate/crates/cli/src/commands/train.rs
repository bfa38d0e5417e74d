use std::path::{Path, PathBuf};
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sphereflow::training::{self, mean_nll};
use sphereflow::FlowModel;

use super::ARTIFACT_SCHEMA_VERSION;
use crate::checkpoint;
use crate::config::ExperimentConfig;
use crate::dataset::InputFile;
use crate::error::{CliError, Result};
use crate::output::{atomic_write, blob_hash, create_dir, read};

pub const CHECKPOINT_FILE: &str = "model.sflw";
pub const LOSS_FILE: &str = "loss.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Serialize)]
pub struct DatasetSummary {
    pub provenance: String,
    pub rows: usize,
    pub dim: usize,
    pub value_range: (f64, f64),
    pub labeled: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub schema_version: u32,
    pub command: &'static str,
    pub config: ExperimentConfig,
    pub inputs: Vec<InputFile>,
    pub dataset: DatasetSummary,
    pub base: &'static str,
    pub num_params: usize,
    pub epochs: usize,
    /// Mean NLL of the data under the base distribution and manifold map alone.
    pub base_only_nll: f64,
    /// Mean NLL of the data under the trained model.
    pub final_nll: f64,
    /// For a Dirichlet base, training rows whose simplex encoding has a
    /// coordinate that underflowed to zero.
    pub simplex_underflow_rows: Option<usize>,
    pub wall_time_secs: f64,
    pub checkpoint: PathBuf,
    pub loss_trace: PathBuf,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: FlowModel,
    pub manifest: RunManifest,
    pub manifest_path: PathBuf,
}

/// Initial model for data of dimension `d`, seeded from the config.
pub fn build_model(cfg: &ExperimentConfig, d: usize) -> Result<FlowModel> {
    let base = cfg.base_distribution(d)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(FlowModel::build(&cfg.arch_config(), base, &mut rng)?)
}

pub fn train(config_path: &Path) -> Result<TrainOutcome> {
    let started = Instant::now();
    let raw = read(config_path)?;
    let text = std::str::from_utf8(&raw).map_err(|_| {
        CliError::Config(vec![format!(
            "{} is not valid UTF-8",
            config_path.display()
        )])
    })?;
    let cfg = ExperimentConfig::from_json(text)?;

    let data = cfg.dataset_source()?.load()?;
    if data.data.nrows() < 2 {
        return Err(CliError::Validation(format!(
            "{}: need at least 2 rows",
            data.provenance
        )));
    }
    let mut inputs = vec![InputFile {
        path: config_path.display().to_string(),
        hash: blob_hash(&raw),
    }];
    inputs.extend(data.inputs.iter().cloned());

    let mut model = build_model(&cfg, data.dim())?;
    let base_only = FlowModel::new(Vec::new(), model.base().clone())?;
    let base_only_nll = mean_nll(&base_only, &data.data)?;
    log::info!(
        "training {} parameters on {} ({} x {}), base-only NLL {base_only_nll:.4}",
        model.num_params(),
        data.provenance,
        data.data.nrows(),
        data.dim()
    );

    let trace = training::train(&mut model, &data.data, &cfg.train_config())?;
    let final_nll = mean_nll(&model, &data.data)?;
    let simplex_underflow_rows = match model.manifold() {
        sphereflow::ManifoldKind::Simplex => {
            let enc = model.encode(&data.data)?;
            let rows = enc
                .points
                .rows()
                .into_iter()
                .filter(|r| r.iter().any(|&c| c == 0.0))
                .count();
            if rows > 0 {
                log::warn!("{rows} training rows underflow to the simplex boundary");
            }
            Some(rows)
        }
        _ => None,
    };

    create_dir(&cfg.output_dir)?;
    let ckpt = cfg.output_dir.join(CHECKPOINT_FILE);
    let loss = cfg.output_dir.join(LOSS_FILE);
    checkpoint::save(&model, &ckpt)?;
    atomic_write(&loss, trace.to_csv().as_bytes())?;

    let manifest = RunManifest {
        schema_version: ARTIFACT_SCHEMA_VERSION,
        command: "train",
        inputs,
        dataset: DatasetSummary {
            provenance: data.provenance.clone(),
            rows: data.data.nrows(),
            dim: data.dim(),
            value_range: data.value_range,
            labeled: data.labels.is_some(),
        },
        base: model.base().kind_name(),
        num_params: model.num_params(),
        epochs: cfg.epochs,
        base_only_nll,
        final_nll,
        simplex_underflow_rows,
        wall_time_secs: started.elapsed().as_secs_f64(),
        checkpoint: ckpt,
        loss_trace: loss,
        config: cfg,
    };
    let manifest_path = manifest.config.output_dir.join(MANIFEST_FILE);
    atomic_write(
        &manifest_path,
        serde_json::to_string_pretty(&manifest)?.as_bytes(),
    )?;
    Ok(TrainOutcome {
        model,
        manifest,
        manifest_path,
    })
}
