use std::path::PathBuf;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sphereflow::evaluation::{interpolation_protocol, PairMode, ProtocolOutput};
use sphereflow::interpolation::Rule;
use sphereflow::FlowModel;

use super::ARTIFACT_SCHEMA_VERSION;
use crate::checkpoint;
use crate::dataset::{DatasetHandle, DatasetSource, InputFile};
use crate::error::{CliError, Result};
use crate::output::{atomic_write, coord_header, create_dir, pgm_grid};

#[derive(Debug, Clone)]
pub struct InterpolateArgs {
    pub checkpoint: PathBuf,
    pub data: DatasetSource,
    pub k: usize,
    pub within_class: bool,
    pub rule: Option<Rule>,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Also write a PGM grid; IDX image datasets supply their own shape.
    pub image_shape: Option<(usize, usize)>,
}

#[derive(Debug, Clone, Serialize)]
pub struct InterpolateSummary {
    pub schema_version: u32,
    pub command: &'static str,
    pub base: &'static str,
    pub rule: Rule,
    pub mode: PairMode,
    pub k: usize,
    pub seed: u64,
    pub dataset: String,
    pub inputs: Vec<InputFile>,
    pub data_rows: usize,
    pub pairs: usize,
    pub interpolants: usize,
    pub mean_spacing_cv: f64,
    pub max_spacing_cv: f64,
    /// Mean squared norm of the interior path points on the base support.
    pub mean_squared_norm: f64,
    pub artifacts: Vec<PathBuf>,
}

/// Resolves the rule, rejecting overrides that do not fit the base.
pub(crate) fn resolve_rule(model: &FlowModel, rule: Option<Rule>) -> Result<Rule> {
    match rule {
        Some(r) if !r.compatible_with(model.base()) => Err(CliError::Validation(format!(
            "rule {} cannot be used with a {} base (default for this base: {})",
            r.name(),
            model.base().kind_name(),
            Rule::default_for(model.base()).name()
        ))),
        Some(r) => Ok(r),
        None => Ok(Rule::default_for(model.base())),
    }
}

pub(crate) fn check_data(model: &FlowModel, data: &DatasetHandle) -> Result<()> {
    if data.dim() != model.dim() {
        return Err(CliError::Validation(format!(
            "{} has dimension {}, the model expects {}",
            data.provenance,
            data.dim(),
            model.dim()
        )));
    }
    Ok(())
}

pub(crate) fn pair_mode(within_class: bool, data: &DatasetHandle) -> Result<PairMode> {
    if !within_class {
        return Ok(PairMode::Across);
    }
    if data.labels.is_none() {
        return Err(CliError::Validation(format!(
            "--within-class needs labels, {} has none",
            data.provenance
        )));
    }
    Ok(PairMode::WithinClass)
}

pub fn interpolate(args: &InterpolateArgs) -> Result<(InterpolateSummary, ProtocolOutput)> {
    let model = checkpoint::load(&args.checkpoint)?;
    let rule = resolve_rule(&model, args.rule)?;
    let data = args.data.load()?;
    check_data(&model, &data)?;
    let mode = pair_mode(args.within_class, &data)?;

    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let out = interpolation_protocol(
        &model,
        &data.data,
        data.labels.as_deref(),
        args.k,
        mode,
        Some(rule),
        &mut rng,
    )?;

    create_dir(&args.out_dir)?;
    let mut artifacts = Vec::new();
    let mut emit = |name: &str, bytes: &[u8]| -> Result<()> {
        let p = args.out_dir.join(name);
        atomic_write(&p, bytes)?;
        artifacts.push(p);
        Ok(())
    };

    let mut csv = format!("pair,{}\n", coord_header("x", model.dim()).join(","));
    for (i, row) in out.interpolants.rows().into_iter().enumerate() {
        let vals: Vec<String> = row.iter().map(|v| v.to_string()).collect();
        csv.push_str(&format!("{},{}\n", i / args.k, vals.join(",")));
    }
    emit("interpolants.csv", csv.as_bytes())?;

    let point_dim = model.base().point_dim();
    let mut paths = format!(
        "pair,lambda,{},norm\n",
        coord_header("c", point_dim).join(",")
    );
    for (p, path) in out.paths.iter().enumerate() {
        for line in path.to_csv().lines().skip(1) {
            paths.push_str(&format!("{p},{line}\n"));
        }
    }
    emit("paths.csv", paths.as_bytes())?;

    let mut diag =
        String::from("pair,index_a,index_b,spacing_cv,min_step,max_step,min_norm,max_norm\n");
    for (p, (d, &(a, b))) in out.diagnostics.iter().zip(&out.pairs).enumerate() {
        let min = |v: &[f64]| v.iter().copied().fold(f64::INFINITY, f64::min);
        let max = |v: &[f64]| v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        diag.push_str(&format!(
            "{p},{a},{b},{},{},{},{},{}\n",
            d.spacing_cv,
            min(&d.step_lengths),
            max(&d.step_lengths),
            min(&d.norms),
            max(&d.norms)
        ));
    }
    emit("diagnostics.csv", diag.as_bytes())?;

    if let Some((h, w)) = args.image_shape.or(data.image_shape) {
        emit(
            "interpolants.pgm",
            &pgm_grid(&out.interpolants, h, w, args.k)?,
        )?;
    }

    let cvs: Vec<f64> = out.diagnostics.iter().map(|d| d.spacing_cv).collect();
    let interior_sq: Vec<f64> = out
        .paths
        .iter()
        .flat_map(|p| {
            p.interior()
                .rows()
                .into_iter()
                .map(|r| r.dot(&r))
                .collect::<Vec<_>>()
        })
        .collect();
    let mean = |v: &[f64]| {
        if v.is_empty() {
            0.0
        } else {
            v.iter().sum::<f64>() / v.len() as f64
        }
    };
    let summary_path = args.out_dir.join("summary.json");
    artifacts.push(summary_path.clone());
    let summary = InterpolateSummary {
        schema_version: ARTIFACT_SCHEMA_VERSION,
        command: "interpolate",
        base: model.base().kind_name(),
        rule,
        mode,
        k: args.k,
        seed: args.seed,
        dataset: data.provenance.clone(),
        inputs: data.inputs.clone(),
        data_rows: data.data.nrows(),
        pairs: out.pairs.len(),
        interpolants: out.interpolants.nrows(),
        mean_spacing_cv: mean(&cvs),
        max_spacing_cv: cvs.iter().copied().fold(0.0, f64::max),
        mean_squared_norm: mean(&interior_sq),
        artifacts,
    };
    atomic_write(
        &summary_path,
        serde_json::to_string_pretty(&summary)?.as_bytes(),
    )?;
    Ok((summary, out))
}
