//! Experiment configuration: a flat JSON object with a schema version.
//! Unknown keys are rejected so that a misspelled hyperparameter cannot
//! silently fall back to its default.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use sphereflow::flow::ArchConfig;
use sphereflow::training::TrainConfig;
use sphereflow::{BaseDistribution, DirichletBase, GaussianBase, VmfBase};

use crate::dataset::{Builtin, BuiltinSpec, DatasetSource, Format};
use crate::error::{CliError, Result};

pub const CONFIG_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema_version: u32,

    /// Builtin generator name; exclusive with `dataset_path`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_builtin: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_noise: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_radii: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_centers: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_path: Option<PathBuf>,
    /// `auto`, `csv` or `idx`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_format: Option<String>,
    /// IDX label file accompanying an IDX image file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset_labels_path: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub csv_label_column: Option<bool>,

    #[serde(default = "default_levels")]
    pub levels: usize,
    #[serde(default = "default_steps")]
    pub steps: usize,
    #[serde(default = "default_hidden_width")]
    pub hidden_width: usize,
    #[serde(default = "default_hidden_layers")]
    pub hidden_layers: usize,
    #[serde(default = "yes")]
    pub actnorm: bool,
    #[serde(default = "yes")]
    pub permute: bool,

    /// `gaussian`, `vmf` or `dirichlet`.
    pub base: String,
    /// vMF concentration as a multiple of the data dimension.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub vmf_kappa_multiplier: Option<f64>,
    /// Symmetric Dirichlet concentration.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dirichlet_alpha: Option<f64>,

    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_clip_norm")]
    pub clip_norm: f64,
    #[serde(default = "default_warmup")]
    pub warmup_epochs: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,

    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

pub const DEFAULT_KAPPA_MULTIPLIER: f64 = 2.0;
pub const DEFAULT_DIRICHLET_ALPHA: f64 = 2.0;

fn default_levels() -> usize {
    1
}
fn default_steps() -> usize {
    8
}
fn default_hidden_width() -> usize {
    64
}
fn default_hidden_layers() -> usize {
    2
}
fn yes() -> bool {
    true
}
fn default_learning_rate() -> f64 {
    TrainConfig::default().learning_rate
}
fn default_clip_norm() -> f64 {
    TrainConfig::default().clip_norm
}
fn default_warmup() -> usize {
    TrainConfig::default().warmup_epochs
}
fn default_epochs() -> usize {
    TrainConfig::default().epochs
}
fn default_batch_size() -> usize {
    TrainConfig::default().batch_size
}

impl ExperimentConfig {
    /// Parses and validates; every problem found is reported at once.
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| CliError::Config(vec![e.to_string()]))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn violations(&self) -> Vec<String> {
        let mut v = Vec::new();
        if self.schema_version != CONFIG_SCHEMA_VERSION {
            v.push(format!(
                "schema_version: {} is not supported (expected {CONFIG_SCHEMA_VERSION})",
                self.schema_version
            ));
        }

        match (&self.dataset_builtin, &self.dataset_path) {
            (Some(_), Some(_)) => {
                v.push("dataset: set exactly one of dataset_builtin and dataset_path".into())
            }
            (None, None) => {
                v.push("dataset: one of dataset_builtin or dataset_path is required".into())
            }
            (Some(name), None) => {
                match BuiltinSpec::default_for(name) {
                    None => v.push(format!(
                        "dataset_builtin: unknown generator {name:?} (expected one of {:?})",
                        BuiltinSpec::NAMES
                    )),
                    Some(Builtin::Rings { .. }) if self.dataset_centers.is_some() => {
                        v.push("dataset_centers: only applies to gaussian_mixture".into())
                    }
                    Some(Builtin::GaussianMixture { .. }) if self.dataset_radii.is_some() => {
                        v.push("dataset_radii: only applies to rings".into())
                    }
                    Some(Builtin::TwoMoons)
                        if self.dataset_radii.is_some() || self.dataset_centers.is_some() =>
                    {
                        v.push("dataset_radii/dataset_centers: do not apply to two_moons".into())
                    }
                    _ => {}
                }
                if let Some(n) = self.dataset_n {
                    if n < 2 {
                        v.push(format!("dataset_n: need at least 2 points, got {n}"));
                    }
                }
                if let Some(s) = self.dataset_noise {
                    if !(s >= 0.0) || !s.is_finite() {
                        v.push(format!("dataset_noise: must be finite and >= 0, got {s}"));
                    }
                }
                for (key, set) in [
                    ("dataset_format", self.dataset_format.is_some()),
                    ("dataset_labels_path", self.dataset_labels_path.is_some()),
                    ("csv_label_column", self.csv_label_column.is_some()),
                ] {
                    if set {
                        v.push(format!("{key}: only applies to dataset_path"));
                    }
                }
            }
            (None, Some(_)) => {
                if let Some(f) = &self.dataset_format {
                    if f.parse::<Format>().is_err() {
                        v.push(format!(
                            "dataset_format: unknown format {f:?} (auto, csv, idx)"
                        ));
                    }
                }
                for (key, set) in [
                    ("dataset_n", self.dataset_n.is_some()),
                    ("dataset_noise", self.dataset_noise.is_some()),
                    ("dataset_radii", self.dataset_radii.is_some()),
                    ("dataset_centers", self.dataset_centers.is_some()),
                ] {
                    if set {
                        v.push(format!("{key}: only applies to dataset_builtin"));
                    }
                }
            }
        }

        for (key, val) in [
            ("levels", self.levels),
            ("steps", self.steps),
            ("hidden_width", self.hidden_width),
        ] {
            if val == 0 {
                v.push(format!("{key}: must be at least 1"));
            }
        }

        match self.base.as_str() {
            "gaussian" => {
                if self.vmf_kappa_multiplier.is_some() || self.dirichlet_alpha.is_some() {
                    v.push("base: exactly one base spec; gaussian takes no vmf_kappa_multiplier or dirichlet_alpha".into());
                }
            }
            "vmf" => {
                if self.dirichlet_alpha.is_some() {
                    v.push("base: exactly one base spec; vmf does not take dirichlet_alpha".into());
                }
            }
            "dirichlet" => {
                if self.vmf_kappa_multiplier.is_some() {
                    v.push(
                        "base: exactly one base spec; dirichlet does not take vmf_kappa_multiplier"
                            .into(),
                    );
                }
            }
            other => v.push(format!(
                "base: unknown base {other:?} (gaussian, vmf, dirichlet)"
            )),
        }
        if let Some(m) = self.vmf_kappa_multiplier {
            if !(m > 0.0) || !m.is_finite() {
                v.push(format!(
                    "vmf_kappa_multiplier: must be finite and > 0, got {m}"
                ));
            }
        }
        if let Some(a) = self.dirichlet_alpha {
            if !(a > 0.0) || !a.is_finite() {
                v.push(format!("dirichlet_alpha: must be finite and > 0, got {a}"));
            }
        }

        v.extend(self.train_config().violations());
        if self.output_dir.as_os_str().is_empty() {
            v.push("output_dir: must not be empty".into());
        }
        v
    }

    pub fn validate(&self) -> Result<()> {
        let v = self.violations();
        if v.is_empty() {
            Ok(())
        } else {
            Err(CliError::Config(v))
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        TrainConfig {
            learning_rate: self.learning_rate,
            clip_norm: self.clip_norm,
            warmup_epochs: self.warmup_epochs,
            epochs: self.epochs,
            batch_size: self.batch_size,
            seed: self.seed,
            ..TrainConfig::default()
        }
    }

    pub fn arch_config(&self) -> ArchConfig {
        ArchConfig {
            levels: self.levels,
            steps: self.steps,
            hidden: vec![self.hidden_width; self.hidden_layers],
            actnorm: self.actnorm,
            permute: self.permute,
        }
    }

    /// Base distribution for data of dimension `d`. The vMF mean direction is
    /// the south pole, away from the stereographic singularity.
    pub fn base_distribution(&self, d: usize) -> Result<BaseDistribution> {
        Ok(match self.base.as_str() {
            "gaussian" => BaseDistribution::Gaussian(GaussianBase::standard(d)?),
            "vmf" => {
                let m = self
                    .vmf_kappa_multiplier
                    .unwrap_or(DEFAULT_KAPPA_MULTIPLIER);
                BaseDistribution::Vmf(VmfBase::south_pole(d, m * d as f64)?)
            }
            "dirichlet" => BaseDistribution::Dirichlet(DirichletBase::symmetric(
                d,
                self.dirichlet_alpha.unwrap_or(DEFAULT_DIRICHLET_ALPHA),
            )?),
            other => return Err(CliError::Validation(format!("unknown base {other:?}"))),
        })
    }

    pub fn dataset_source(&self) -> Result<DatasetSource> {
        if let Some(name) = &self.dataset_builtin {
            let mut kind = BuiltinSpec::default_for(name)
                .ok_or_else(|| CliError::Validation(format!("unknown builtin dataset {name:?}")))?;
            match &mut kind {
                Builtin::Rings { radii } => {
                    if let Some(r) = &self.dataset_radii {
                        *radii = r.clone();
                    }
                }
                Builtin::GaussianMixture { centers } => {
                    if let Some(c) = &self.dataset_centers {
                        *centers = c.clone();
                    }
                }
                Builtin::TwoMoons => {}
            }
            return Ok(DatasetSource::Builtin(BuiltinSpec {
                kind,
                n: self.dataset_n.unwrap_or(2000),
                noise: self.dataset_noise.unwrap_or(0.05),
                seed: self.seed,
            }));
        }
        let path = self
            .dataset_path
            .clone()
            .ok_or_else(|| CliError::Validation("no dataset configured".into()))?;
        Ok(DatasetSource::File {
            path,
            format: self.dataset_format.as_deref().unwrap_or("auto").parse()?,
            labels: self.dataset_labels_path.clone(),
            label_column: self.csv_label_column,
        })
    }
}
