//! Parameter-free bijections from `R^d` onto the unit p-norm spheres.
//!
//! * `p = 1`: the stick-breaking map onto the open simplex `Delta^d`. The
//!   `(d+1)`-th coordinate is implicit, `s_{d+1} = 1 - sum s_k`.
//! * `p = 2`: the stereographic projection onto `S^d` minus the north pole,
//!   with `z = 0` sent to the south pole.
//!
//! Both maps report the log density-change term. For the simplex map this is
//! `log|det J|` of the square map `z -> s_{1..d}`; for the sphere it is
//! `log sqrt(det J^T J) = d log rho(z)`.
//!
//! The stick-breaking map is evaluated entirely in the log domain: the
//! remaining stick length is carried as `ln(1 - sum_{l<k} s_l)` and updated
//! with `ln(1 - v_k)`, so no partial sums are ever subtracted.

use crate::error::{Error, Result};
use crate::special::{log_sigmoid, sigmoid};

/// A point of the open simplex, `d + 1` coordinates in `(0, 1)` summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexPoint(Vec<f64>);

impl SimplexPoint {
    /// Validates `coords`. Points within `1e-8` of the simplex are
    /// re-normalized; boundary points are rejected.
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        let coords = crate::base::project_to_simplex(&coords)?;
        if coords.len() < 2 {
            return Err(Error::domain("simplex", "need at least two coordinates"));
        }
        if let Some((k, v)) = coords
            .iter()
            .enumerate()
            .find(|(_, v)| !(**v > 0.0 && **v < 1.0))
        {
            return Err(Error::domain(
                "simplex",
                format!("coordinate {k} = {v} lies on the boundary of the simplex"),
            ));
        }
        Ok(SimplexPoint(coords))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Dimension `d` of the simplex (one less than the coordinate count).
    pub fn dim(&self) -> usize {
        self.0.len() - 1
    }
}

/// A point of the unit sphere other than the north pole.
#[derive(Debug, Clone, PartialEq)]
pub struct SpherePoint(Vec<f64>);

impl SpherePoint {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        let coords = crate::base::project_to_sphere(&coords)?;
        if coords.len() < 2 {
            return Err(Error::domain("sphere", "need at least two coordinates"));
        }
        if *coords.last().expect("nonempty") >= 1.0 {
            return Err(Error::Singularity { gap: 0.0 });
        }
        Ok(SpherePoint(coords))
    }

    pub fn coords(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len() - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimplexMapResult {
    pub point: SimplexPoint,
    /// `ln s_k` for all `d + 1` coordinates, accurate even where `s_k`
    /// itself underflows.
    pub log_coords: Vec<f64>,
    pub log_det: f64,
    /// Set when some coordinate underflowed to zero in linear scale. The
    /// log-domain quantities stay valid; the linear point does not.
    pub underflow: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SphereMapResult {
    pub point: SpherePoint,
    pub log_det: f64,
}

/// `ln(d + 1 - k)` for the 1-based index `k`, i.e. `ln(d - i)` for 0-based `i`.
fn stick_offset(d: usize, i: usize) -> f64 {
    ((d - i) as f64).ln()
}

/// Stick-breaking map `R^d -> Delta^d`.
pub fn simplex_forward(z: &[f64]) -> SimplexMapResult {
    let d = z.len();
    let mut log_coords = Vec::with_capacity(d + 1);
    let mut log_rem = 0.0;
    let mut log_det = 0.0;
    for (i, &zi) in z.iter().enumerate() {
        let a = zi - stick_offset(d, i);
        let log_v = log_sigmoid(a);
        let log_1mv = log_sigmoid(-a);
        log_coords.push(log_rem + log_v);
        log_det += log_v + log_1mv + log_rem;
        log_rem += log_1mv;
    }
    log_coords.push(log_rem);
    let coords: Vec<f64> = log_coords.iter().map(|l| l.exp()).collect();
    let underflow = coords.contains(&0.0);
    if underflow {
        log::debug!("stick-breaking remainder underflowed (min log coordinate {log_rem:e})");
    }
    SimplexMapResult {
        point: SimplexPoint(coords),
        log_coords,
        log_det,
        underflow,
    }
}

/// Inverse stick-breaking map `Delta^d -> R^d`.
///
/// Remaining stick lengths are suffix sums of the coordinates (including the
/// implicit last one) rather than `1 - prefix sum`.
pub fn simplex_inverse(s: &SimplexPoint) -> Vec<f64> {
    let c = s.coords();
    let d = c.len() - 1;
    let mut suffix = vec![0.0; d + 2];
    for i in (0..=d).rev() {
        suffix[i] = suffix[i + 1] + c[i];
    }
    (0..d)
        .map(|i| c[i].ln() - suffix[i + 1].ln() + stick_offset(d, i))
        .collect()
}

/// Convenience wrapper validating raw coordinates first.
pub fn simplex_inverse_coords(coords: &[f64]) -> Result<Vec<f64>> {
    Ok(simplex_inverse(&SimplexPoint::new(coords.to_vec())?))
}

/// Back-propagates through [`simplex_forward`]: given `dL/d ln s` (length
/// `d + 1`) and `dL/d log_det`, writes `dL/dz`.
pub fn simplex_backward(z: &[f64], grad_log_coords: &[f64], grad_log_det: f64, grad_z: &mut [f64]) {
    let d = z.len();
    let mut carry = grad_log_coords[d];
    for i in (0..d).rev() {
        let a = z[i] - stick_offset(d, i);
        let sp = sigmoid(a);
        let sn = sigmoid(-a);
        grad_z[i] = grad_log_coords[i] * sn + grad_log_det * (sn - sp) - carry * sp;
        carry += grad_log_coords[i] + grad_log_det;
    }
}

/// Stereographic projection `R^d -> S^d`, `s = (rho z, 1 - rho)` with
/// `rho = 2 / (1 + ||z||^2)`.
pub fn sphere_forward(z: &[f64]) -> SphereMapResult {
    let d = z.len();
    let r2: f64 = z.iter().map(|v| v * v).sum();
    let rho = 2.0 / (1.0 + r2);
    let mut coords: Vec<f64> = z.iter().map(|v| v * rho).collect();
    coords.push((r2 - 1.0) / (r2 + 1.0));
    let log_det = d as f64 * (std::f64::consts::LN_2 - r2.ln_1p());
    SphereMapResult {
        point: SpherePoint(coords),
        log_det,
    }
}

/// Smallest admissible `1 - s_{d+1}`; closer to the north pole the inverse
/// projection reports a singularity.
pub const NORTH_POLE_CUTOFF: f64 = 1e-12;

/// Inverse stereographic projection `z = s_{1:d} / (1 - s_{d+1})`.
pub fn sphere_inverse(s: &SpherePoint) -> Result<Vec<f64>> {
    let c = s.coords();
    let d = c.len() - 1;
    let last = c[d];
    let head = &c[..d];
    // 1 - last without cancellation near the north pole, using ||s|| = 1
    let gap = if last > 0.0 {
        head.iter().map(|v| v * v).sum::<f64>() / (1.0 + last)
    } else {
        1.0 - last
    };
    if gap < NORTH_POLE_CUTOFF {
        return Err(Error::Singularity { gap });
    }
    Ok(head.iter().map(|v| v / gap).collect())
}

pub fn sphere_inverse_coords(coords: &[f64]) -> Result<Vec<f64>> {
    sphere_inverse(&SpherePoint::new(coords.to_vec())?)
}

/// Back-propagates through [`sphere_forward`]: given `dL/ds` (length `d + 1`)
/// and `dL/d log_det`, writes `dL/dz`.
pub fn sphere_backward(z: &[f64], grad_point: &[f64], grad_log_det: f64, grad_z: &mut [f64]) {
    let d = z.len();
    let r2: f64 = z.iter().map(|v| v * v).sum();
    let rho = 2.0 / (1.0 + r2);
    let rho2 = rho * rho;
    let gz_dot: f64 = grad_point[..d].iter().zip(z).map(|(g, v)| g * v).sum();
    let radial = -rho2 * gz_dot + rho2 * grad_point[d] - grad_log_det * d as f64 * rho;
    for j in 0..d {
        grad_z[j] = rho * grad_point[j] + radial * z[j];
    }
}
