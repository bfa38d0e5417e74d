//! Seeded synthetic 2-D datasets for experiments and tests.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// A data matrix with one label per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Labeled {
    pub data: Array2<f64>,
    pub labels: Vec<usize>,
}

fn noise(std: f64) -> Result<Normal<f64>> {
    let bad = || Error::InvalidParameter(format!("noise must be finite and >= 0, got {std}"));
    if !(std >= 0.0) || !std.is_finite() {
        return Err(bad());
    }
    Normal::new(0.0, std).map_err(|_| bad())
}

/// Two interleaved half circles. The upper moon gets `ceil(n/2)` points at
/// evenly spaced angles, the lower one the rest; Gaussian noise of standard
/// deviation `noise_std` is added to every coordinate.
pub fn two_moons(n: usize, noise_std: f64, seed: u64) -> Result<Labeled> {
    let eps = noise(noise_std)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let upper = n.div_ceil(2);
    let lower = n - upper;
    let mut data = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    let angle = |i: usize, m: usize| {
        if m > 1 {
            std::f64::consts::PI * i as f64 / (m - 1) as f64
        } else {
            0.0
        }
    };
    for i in 0..upper {
        let t = angle(i, upper);
        data[[i, 0]] = t.cos();
        data[[i, 1]] = t.sin();
        labels.push(0);
    }
    for i in 0..lower {
        let t = angle(i, lower);
        data[[upper + i, 0]] = 1.0 - t.cos();
        data[[upper + i, 1]] = 0.5 - t.sin();
        labels.push(1);
    }
    data.mapv_inplace(|v| v + eps.sample(&mut rng));
    Ok(Labeled { data, labels })
}

/// Concentric circles, points assigned to rings in turn with uniform angles.
pub fn rings(n: usize, radii: &[f64], noise_std: f64, seed: u64) -> Result<Labeled> {
    if radii.is_empty() || radii.iter().any(|r| !(*r > 0.0) || !r.is_finite()) {
        return Err(Error::InvalidParameter(
            "rings need at least one positive radius".into(),
        ));
    }
    let eps = noise(noise_std)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Array2::zeros((n, 2));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = i % radii.len();
        let t = rng.random::<f64>() * std::f64::consts::TAU;
        data[[i, 0]] = radii[k] * t.cos() + eps.sample(&mut rng);
        data[[i, 1]] = radii[k] * t.sin() + eps.sample(&mut rng);
        labels.push(k);
    }
    Ok(Labeled { data, labels })
}

/// Isotropic Gaussian blobs with a uniformly chosen center per point.
pub fn gaussian_mixture(n: usize, centers: &[Vec<f64>], std: f64, seed: u64) -> Result<Labeled> {
    let d = centers.first().map(Vec::len).unwrap_or(0);
    if d == 0 || centers.iter().any(|c| c.len() != d) {
        return Err(Error::InvalidParameter(
            "mixture centers must be nonempty and share one dimension".into(),
        ));
    }
    let eps = noise(std)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut data = Array2::zeros((n, d));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let k = rng.random_range(0..centers.len());
        for j in 0..d {
            data[[i, j]] = centers[k][j] + eps.sample(&mut rng);
        }
        labels.push(k);
    }
    Ok(Labeled { data, labels })
}
