use std::path::PathBuf;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sphereflow::evaluation::{self, EvalOptions, FeatureExtractor, KidConfig, MetricReport};
use sphereflow::flow::DataKind;
use sphereflow::interpolation::Rule;

use super::interpolate::{check_data, pair_mode, resolve_rule};
use crate::checkpoint;
use crate::dataset::DatasetSource;
use crate::error::{CliError, Result};
use crate::output::atomic_write;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FeatureChoice {
    Identity,
    /// Standardize coordinates with training-set statistics.
    Whitened,
}

impl FromStr for FeatureChoice {
    type Err = CliError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(FeatureChoice::Identity),
            "whitened" => Ok(FeatureChoice::Whitened),
            _ => Err(CliError::Validation(format!(
                "unknown feature extractor {s:?} (identity, whitened)"
            ))),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvaluateArgs {
    pub checkpoint: PathBuf,
    pub train: DatasetSource,
    pub test: DatasetSource,
    pub seed: u64,
    pub k: usize,
    pub within_class: bool,
    pub rule: Option<Rule>,
    pub features: FeatureChoice,
    /// Treat data as quantized to this many bits when computing BPD.
    pub bit_depth: Option<u32>,
    pub out: PathBuf,
}

pub fn evaluate(args: &EvaluateArgs) -> Result<MetricReport> {
    let model = checkpoint::load(&args.checkpoint)?;
    let rule = resolve_rule(&model, args.rule)?;
    let train = args.train.load()?;
    let test = args.test.load()?;
    check_data(&model, &train)?;
    check_data(&model, &test)?;
    let mode = pair_mode(args.within_class, &train)?;

    let features = match args.features {
        FeatureChoice::Identity => FeatureExtractor::Identity,
        FeatureChoice::Whitened => FeatureExtractor::fit_whitened(&train.data)?,
    };
    let opts = EvalOptions {
        k: args.k,
        mode,
        rule: Some(rule),
        features,
        data_kind: match args.bit_depth {
            Some(bit_depth) => DataKind::Quantized { bit_depth },
            None => DataKind::Continuous,
        },
        kid: KidConfig {
            seed: args.seed,
            ..KidConfig::default()
        },
        seed: args.seed,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let report = evaluation::evaluate(
        &model,
        &train.data,
        train.labels.as_deref(),
        &test.data,
        &opts,
        &mut rng,
    )?;
    atomic_write(&args.out, serde_json::to_string_pretty(&report)?.as_bytes())?;
    log::info!(
        "bpd test {:.4}, interpolated {:.4}; wrote {}",
        report.bpd_test,
        report.bpd_interpolated,
        args.out.display()
    );
    Ok(report)
}
