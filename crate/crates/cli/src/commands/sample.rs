use std::path::PathBuf;

use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use sphereflow::Temperature;

use crate::checkpoint;
use crate::error::Result;
use crate::output::{atomic_write, coord_header, matrix_csv, pgm_grid};

#[derive(Debug, Clone)]
pub struct SampleArgs {
    pub checkpoint: PathBuf,
    pub n: usize,
    pub temperature: f64,
    pub seed: u64,
    pub out: PathBuf,
    /// Write a PGM grid of `height x width` images instead of CSV.
    pub image_shape: Option<(usize, usize)>,
    pub grid_cols: usize,
}

/// Draws `n` samples at the given temperature and writes them to `out`.
pub fn sample(args: &SampleArgs) -> Result<Array2<f64>> {
    let model = checkpoint::load(&args.checkpoint)?;
    let temp = Temperature::new(args.temperature)?;
    // Surfaces an unsupported temperature even when nothing is drawn.
    model.base().with_temperature(temp)?;
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    let x = model.sample(args.n, temp, &mut rng)?;
    let bytes = match args.image_shape {
        Some((h, w)) => pgm_grid(&x, h, w, args.grid_cols)?,
        None => matrix_csv(&coord_header("x", model.dim()), &x).into_bytes(),
    };
    atomic_write(&args.out, &bytes)?;
    log::info!("wrote {} samples to {}", args.n, args.out.display());
    Ok(x)
}
