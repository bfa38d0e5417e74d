use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sphereflow::interpolation::Rule;
use sphereflow_cli::commands::{self, EvaluateArgs, FeatureChoice, InterpolateArgs, SampleArgs};
use sphereflow_cli::dataset::DatasetSource;
use sphereflow_cli::output::parse_image_shape;
use sphereflow_cli::{CliError, Result};

/// Train, sample, interpolate and evaluate normalizing flows with Gaussian,
/// von Mises-Fisher or Dirichlet base distributions.
#[derive(Parser)]
#[command(name = "sphereflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a JSON experiment config.
    Train {
        #[arg(long)]
        config: PathBuf,
    },
    /// Draw samples from a checkpoint.
    Sample {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 1.0)]
        temperature: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output file; defaults to samples.csv, or samples.pgm with --image-shape.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Write a PGM grid of HxW images instead of CSV.
        #[arg(long)]
        image_shape: Option<String>,
        #[arg(long, default_value_t = 10)]
        grid_cols: usize,
    },
    /// Interpolate between random data pairs in the latent space.
    Interpolate {
        #[arg(long)]
        checkpoint: PathBuf,
        /// CSV or IDX file, or builtin:<name>[:key=value,...].
        #[arg(long)]
        data: String,
        /// IDX label file for an IDX image file.
        #[arg(long)]
        labels: Option<PathBuf>,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long)]
        within_class: bool,
        /// lerp, nclerp, slerp or simplex_lerp; defaults to the base's rule.
        #[arg(long)]
        rule: Option<String>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "interpolation")]
        out_dir: PathBuf,
        #[arg(long)]
        image_shape: Option<String>,
    },
    /// Compute likelihood and sample-quality metrics.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        train: String,
        #[arg(long)]
        train_labels: Option<PathBuf>,
        #[arg(long)]
        test: String,
        #[arg(long)]
        test_labels: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 5)]
        k: usize,
        #[arg(long)]
        within_class: bool,
        #[arg(long)]
        rule: Option<String>,
        /// identity or whitened.
        #[arg(long, default_value = "identity")]
        features: String,
        /// Treat data as quantized to this many bits for bits per dimension.
        #[arg(long)]
        bit_depth: Option<u32>,
        #[arg(long, default_value = "report.json")]
        out: PathBuf,
    },
}

fn parse_rule(s: Option<&str>) -> Result<Option<Rule>> {
    s.map(|r| {
        r.parse::<Rule>()
            .map_err(|e| CliError::Validation(e.to_string()))
    })
    .transpose()
}

fn shape(s: Option<&str>) -> Result<Option<(usize, usize)>> {
    s.map(parse_image_shape).transpose()
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Train { config } => {
            let out = commands::train(&config)?;
            println!(
                "final NLL {:.4} (base only {:.4}); manifest {}",
                out.manifest.final_nll,
                out.manifest.base_only_nll,
                out.manifest_path.display()
            );
        }
        Command::Sample {
            checkpoint,
            n,
            temperature,
            seed,
            out,
            image_shape,
            grid_cols,
        } => {
            let image_shape = shape(image_shape.as_deref())?;
            let default = if image_shape.is_some() {
                "samples.pgm"
            } else {
                "samples.csv"
            };
            let out = out.unwrap_or_else(|| Path::new(default).to_path_buf());
            commands::sample(&SampleArgs {
                checkpoint,
                n,
                temperature,
                seed,
                out: out.clone(),
                image_shape,
                grid_cols,
            })?;
            println!("{}", out.display());
        }
        Command::Interpolate {
            checkpoint,
            data,
            labels,
            k,
            within_class,
            rule,
            seed,
            out_dir,
            image_shape,
        } => {
            let (summary, _) = commands::interpolate(&InterpolateArgs {
                checkpoint,
                data: DatasetSource::from_arg(&data, labels.as_deref())?,
                k,
                within_class,
                rule: parse_rule(rule.as_deref())?,
                seed,
                out_dir: out_dir.clone(),
                image_shape: shape(image_shape.as_deref())?,
            })?;
            println!(
                "{} interpolants from {} pairs ({}); wrote {}",
                summary.interpolants,
                summary.pairs,
                summary.rule,
                out_dir.display()
            );
        }
        Command::Evaluate {
            checkpoint,
            train,
            train_labels,
            test,
            test_labels,
            seed,
            k,
            within_class,
            rule,
            features,
            bit_depth,
            out,
        } => {
            let report = commands::evaluate(&EvaluateArgs {
                checkpoint,
                train: DatasetSource::from_arg(&train, train_labels.as_deref())?,
                test: DatasetSource::from_arg(&test, test_labels.as_deref())?,
                seed,
                k,
                within_class,
                rule: parse_rule(rule.as_deref())?,
                features: features.parse::<FeatureChoice>()?,
                bit_depth,
                out: out.clone(),
            })?;
            println!(
                "bpd test {:.4}, interpolated {:.4}; wrote {}",
                report.bpd_test,
                report.bpd_interpolated,
                out.display()
            );
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    // Usage errors are validation errors (exit 1), not clap's default 2.
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
