//! Base distributions: standard Gaussian on `R^d`, von Mises-Fisher on the
//! unit sphere in `R^{d+1}`, and Dirichlet on the `d`-simplex.
//!
//! Temperature sampling draws from `p(z)^(1/T^2)`. For the Gaussian this is
//! a Gaussian with standard deviation `T`; for the vMF it is a vMF with
//! concentration `kappa / T^2`. There is no closed-form rule for the
//! Dirichlet, so tempering it is reported as unsupported.

use ndarray::Array2;
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::special::{ln_gamma_pos, log_bessel_i, LN_2PI};

/// Tolerance on `||s||_2 = 1` and `sum(s) = 1` before a point is rejected.
/// Points inside the tolerance are re-normalized.
pub const SUPPORT_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Temperature(f64);

impl Temperature {
    pub const ONE: Temperature = Temperature(1.0);

    pub fn new(t: f64) -> Result<Self> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "temperature must be positive and finite, got {t}"
            )));
        }
        Ok(Temperature(t))
    }

    pub fn value(self) -> f64 {
        self.0
    }

    pub fn is_identity(self) -> bool {
        self.0 == 1.0
    }
}

/// Zero-mean isotropic Gaussian. `std` is 1 for the base distribution of a
/// flow and becomes `T` after tempering.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianBase {
    dim: usize,
    std: f64,
}

impl GaussianBase {
    pub fn standard(dim: usize) -> Result<Self> {
        Self::with_std(dim, 1.0)
    }

    pub fn with_std(dim: usize, std: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        if !(std > 0.0) || !std.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "std must be positive, got {std}"
            )));
        }
        Ok(GaussianBase { dim, std })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn std(&self) -> f64 {
        self.std
    }

    pub fn log_density(&self, z: &[f64]) -> Result<f64> {
        check_len(self.dim, z.len())?;
        if z.iter().any(|v| !v.is_finite()) {
            return Err(Error::support("Gaussian", "non-finite coordinate"));
        }
        let sq: f64 = z.iter().map(|v| v * v).sum();
        let d = self.dim as f64;
        Ok(-0.5 * sq / (self.std * self.std) - d * self.std.ln() - 0.5 * d * LN_2PI)
    }

    /// Gradient of the log-density with respect to `z`.
    pub fn grad_log_density(&self, z: &[f64], out: &mut [f64]) {
        let inv_var = 1.0 / (self.std * self.std);
        for (o, v) in out.iter_mut().zip(z) {
            *o = -v * inv_var;
        }
    }

    fn sample_into<R: Rng + ?Sized>(&self, out: &mut [f64], rng: &mut R) {
        for v in out.iter_mut() {
            let n: f64 = StandardNormal.sample(rng);
            *v = self.std * n;
        }
    }
}

/// von Mises-Fisher distribution on the unit sphere `S^d` embedded in `R^{d+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct VmfBase {
    dim: usize,
    mu: Vec<f64>,
    kappa: f64,
    log_norm: f64,
}

impl VmfBase {
    pub fn new(dim: usize, mu: Vec<f64>, kappa: f64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("dimension must be >= 1".into()));
        }
        check_len(dim + 1, mu.len())?;
        let norm = mu.iter().map(|v| v * v).sum::<f64>().sqrt();
        if (norm - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidParameter(format!(
                "mean direction must have unit norm, got {norm}"
            )));
        }
        if !(kappa > 0.0) || !kappa.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "concentration must be positive and finite, got {kappa}"
            )));
        }
        let log_norm = vmf_log_normalizer(dim + 1, kappa)?;
        Ok(VmfBase {
            dim,
            mu,
            kappa,
            log_norm,
        })
    }

    /// vMF whose mean direction is the south pole `(0, ..., 0, -1)`, the image
    /// of the origin under the stereographic projection.
    pub fn south_pole(dim: usize, kappa: f64) -> Result<Self> {
        let mut mu = vec![0.0; dim + 1];
        mu[dim] = -1.0;
        Self::new(dim, mu, kappa)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn mu(&self) -> &[f64] {
        &self.mu
    }

    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    /// `ln C_{d+1}(kappa)`.
    pub fn log_normalizer(&self) -> f64 {
        self.log_norm
    }

    pub fn log_density(&self, s: &[f64]) -> Result<f64> {
        check_len(self.dim + 1, s.len())?;
        let s = project_to_sphere(s)?;
        Ok(self.log_norm + self.kappa * dot(&self.mu, &s))
    }

    /// Log-density of a point already known to have unit norm.
    pub(crate) fn log_density_unchecked(&self, s: &[f64]) -> f64 {
        self.log_norm + self.kappa * dot(&self.mu, s)
    }

    /// Gradient of the log-density with respect to the ambient coordinates.
    pub fn grad_log_density(&self, out: &mut [f64]) {
        for (o, m) in out.iter_mut().zip(&self.mu) {
            *o = self.kappa * m;
        }
    }

    /// `E[mu^T s] = I_{m/2}(kappa) / I_{m/2 - 1}(kappa)` with `m = d + 1`.
    pub fn mean_resultant_length(&self) -> f64 {
        let half = 0.5 * (self.dim + 1) as f64;
        // both orders are valid, the constructor already evaluated one of them
        let num = log_bessel_i(half, self.kappa).expect("valid order");
        let den = log_bessel_i(half - 1.0, self.kappa).expect("valid order");
        (num - den).exp()
    }

    /// Wood's rejection sampler for the cosine `w = mu^T s`, a uniform
    /// tangent direction, and a Householder reflection taking the north pole
    /// `e_{d+1}` to `mu`.
    fn sample_into<R: Rng + ?Sized>(&self, out: &mut [f64], rng: &mut R) {
        let m = self.dim + 1;
        let w = self.sample_cosine(rng);

        // uniform direction on S^{m-2}
        let tangent = &mut out[..m - 1];
        loop {
            for v in tangent.iter_mut() {
                *v = StandardNormal.sample(rng);
            }
            let n = tangent.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 1e-300 {
                let scale = (1.0 - w * w).max(0.0).sqrt() / n;
                tangent.iter_mut().for_each(|v| *v *= scale);
                break;
            }
        }
        out[m - 1] = w;

        // reflect along u = e_m - mu
        let mut u: Vec<f64> = self.mu.iter().map(|v| -v).collect();
        u[m - 1] += 1.0;
        let uu = dot(&u, &u);
        if uu > 1e-30 {
            let c = 2.0 * dot(&u, out) / uu;
            for (o, ui) in out.iter_mut().zip(&u) {
                *o -= c * ui;
            }
        }
        let n = dot(out, out).sqrt();
        out.iter_mut().for_each(|v| *v /= n);
    }

    fn sample_cosine<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let m1 = self.dim as f64; // ambient dimension minus one
        let kappa = self.kappa;
        // b = (-2k + sqrt(4k^2 + (m-1)^2)) / (m-1), rationalized
        let b = m1 / (2.0 * kappa + (4.0 * kappa * kappa + m1 * m1).sqrt());
        let x0 = (1.0 - b) / (1.0 + b);
        let c = kappa * x0 + m1 * (1.0 - x0 * x0).ln();
        let beta = Beta::new(0.5 * m1, 0.5 * m1).expect("positive shape");
        loop {
            let z: f64 = beta.sample(rng);
            let w = (1.0 - (1.0 + b) * z) / (1.0 - (1.0 - b) * z);
            let u: f64 = rng.random();
            if kappa * w + m1 * (1.0 - x0 * w).ln() - c >= u.ln() {
                return w.clamp(-1.0, 1.0);
            }
        }
    }
}

/// `ln C_m(kappa) = (m/2 - 1) ln kappa - (m/2) ln 2 pi - ln I_{m/2-1}(kappa)`.
pub fn vmf_log_normalizer(ambient_dim: usize, kappa: f64) -> Result<f64> {
    let half = 0.5 * ambient_dim as f64;
    Ok((half - 1.0) * kappa.ln() - half * LN_2PI - log_bessel_i(half - 1.0, kappa)?)
}

/// Dirichlet distribution on the simplex `Delta^d` in `R^{d+1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct DirichletBase {
    dim: usize,
    alpha: Vec<f64>,
    log_norm: f64,
}

impl DirichletBase {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.len() < 2 {
            return Err(Error::InvalidParameter(
                "Dirichlet needs at least two concentration parameters".into(),
            ));
        }
        if let Some(a) = alpha.iter().find(|a| !(**a > 0.0) || !a.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "Dirichlet parameters must be positive, got {a}"
            )));
        }
        let total: f64 = alpha.iter().sum();
        let log_norm = alpha.iter().map(|&a| ln_gamma_pos(a)).sum::<f64>() - ln_gamma_pos(total);
        Ok(DirichletBase {
            dim: alpha.len() - 1,
            alpha,
            log_norm,
        })
    }

    /// `Dirichlet(a, ..., a)` on `Delta^dim`.
    pub fn symmetric(dim: usize, alpha: f64) -> Result<Self> {
        Self::new(vec![alpha; dim + 1])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// `ln Z(alpha)`.
    pub fn log_normalizer(&self) -> f64 {
        self.log_norm
    }

    pub fn log_density(&self, s: &[f64]) -> Result<f64> {
        check_len(self.dim + 1, s.len())?;
        let s = project_to_simplex(s)?;
        let mut acc = -self.log_norm;
        for (k, (&sk, &a)) in s.iter().zip(&self.alpha).enumerate() {
            if sk == 0.0 {
                if a < 1.0 {
                    return Err(Error::support(
                        "Dirichlet",
                        format!("component {k} is zero with alpha = {a} < 1"),
                    ));
                }
                if a > 1.0 {
                    return Ok(f64::NEG_INFINITY);
                }
                continue;
            }
            acc += (a - 1.0) * sk.ln();
        }
        Ok(acc)
    }

    /// Log-density from `ln s`, avoiding the underflow of small coordinates.
    pub fn log_density_from_log_coords(&self, log_s: &[f64]) -> f64 {
        log_s
            .iter()
            .zip(&self.alpha)
            .map(|(l, a)| (a - 1.0) * l)
            .sum::<f64>()
            - self.log_norm
    }

    /// Gradient of the log-density with respect to `ln s`.
    pub fn grad_log_density_log_coords(&self, out: &mut [f64]) {
        for (o, a) in out.iter_mut().zip(&self.alpha) {
            *o = a - 1.0;
        }
    }

    fn sample_into<R: Rng + ?Sized>(&self, out: &mut [f64], rng: &mut R) -> Result<()> {
        for _ in 0..1000 {
            let mut total = 0.0;
            for (o, &a) in out.iter_mut().zip(&self.alpha) {
                let g = Gamma::new(a, 1.0).expect("positive shape");
                *o = g.sample(rng);
                total += *o;
            }
            if total > 0.0 && total.is_finite() {
                out.iter_mut().for_each(|v| *v /= total);
                return Ok(());
            }
        }
        Err(Error::NonFinite {
            layer: None,
            msg: "all Gamma draws underflowed while sampling the Dirichlet".into(),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BaseDistribution {
    Gaussian(GaussianBase),
    Vmf(VmfBase),
    Dirichlet(DirichletBase),
}

impl BaseDistribution {
    pub fn kind_name(&self) -> &'static str {
        match self {
            BaseDistribution::Gaussian(_) => "gaussian",
            BaseDistribution::Vmf(_) => "vmf",
            BaseDistribution::Dirichlet(_) => "dirichlet",
        }
    }

    /// Dimension `d` of the unconstrained latent space.
    pub fn dim(&self) -> usize {
        match self {
            BaseDistribution::Gaussian(g) => g.dim,
            BaseDistribution::Vmf(v) => v.dim,
            BaseDistribution::Dirichlet(b) => b.dim,
        }
    }

    /// Length of a support point: `d` for the Gaussian, `d + 1` otherwise.
    pub fn point_dim(&self) -> usize {
        match self {
            BaseDistribution::Gaussian(g) => g.dim,
            BaseDistribution::Vmf(v) => v.dim + 1,
            BaseDistribution::Dirichlet(b) => b.dim + 1,
        }
    }

    pub fn log_density(&self, point: &[f64]) -> Result<f64> {
        match self {
            BaseDistribution::Gaussian(g) => g.log_density(point),
            BaseDistribution::Vmf(v) => v.log_density(point),
            BaseDistribution::Dirichlet(b) => b.log_density(point),
        }
    }

    pub fn with_temperature(&self, temp: Temperature) -> Result<BaseDistribution> {
        let t = temp.value();
        match self {
            BaseDistribution::Gaussian(g) => Ok(BaseDistribution::Gaussian(
                GaussianBase::with_std(g.dim, g.std * t)?,
            )),
            BaseDistribution::Vmf(v) => Ok(BaseDistribution::Vmf(VmfBase::new(
                v.dim,
                v.mu.clone(),
                v.kappa / (t * t),
            )?)),
            BaseDistribution::Dirichlet(_) if temp.is_identity() => Ok(self.clone()),
            BaseDistribution::Dirichlet(_) => Err(Error::Unsupported(format!(
                "temperature {t} for a Dirichlet base has no defined tempering rule"
            ))),
        }
    }

    /// `n` i.i.d. draws from the tempered distribution, one per row.
    pub fn sample<R: Rng + ?Sized>(
        &self,
        n: usize,
        temp: Temperature,
        rng: &mut R,
    ) -> Result<Array2<f64>> {
        let tempered;
        let dist = if temp.is_identity() {
            self
        } else {
            tempered = self.with_temperature(temp)?;
            &tempered
        };
        let cols = dist.point_dim();
        let mut out = Array2::zeros((n, cols));
        for mut row in out.rows_mut() {
            let row = row.as_slice_mut().expect("standard layout");
            match dist {
                BaseDistribution::Gaussian(g) => g.sample_into(row, rng),
                BaseDistribution::Vmf(v) => v.sample_into(row, rng),
                BaseDistribution::Dirichlet(b) => b.sample_into(row, rng)?,
            }
        }
        Ok(out)
    }
}

impl From<GaussianBase> for BaseDistribution {
    fn from(g: GaussianBase) -> Self {
        BaseDistribution::Gaussian(g)
    }
}

impl From<VmfBase> for BaseDistribution {
    fn from(v: VmfBase) -> Self {
        BaseDistribution::Vmf(v)
    }
}

impl From<DirichletBase> for BaseDistribution {
    fn from(d: DirichletBase) -> Self {
        BaseDistribution::Dirichlet(d)
    }
}

fn check_len(expected: usize, got: usize) -> Result<()> {
    if expected != got {
        return Err(Error::DimensionMismatch { expected, got });
    }
    Ok(())
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Re-normalizes a point within [`SUPPORT_TOL`] of the unit sphere.
pub fn project_to_sphere(s: &[f64]) -> Result<Vec<f64>> {
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::support("vMF", "non-finite coordinate"));
    }
    let norm = dot(s, s).sqrt();
    if (norm - 1.0).abs() > SUPPORT_TOL {
        return Err(Error::support("vMF", format!("||s|| = {norm}, expected 1")));
    }
    Ok(s.iter().map(|v| v / norm).collect())
}

/// Clamps tiny negative coordinates and re-normalizes a point within
/// [`SUPPORT_TOL`] of the simplex.
pub fn project_to_simplex(s: &[f64]) -> Result<Vec<f64>> {
    if s.iter().any(|v| !v.is_finite()) {
        return Err(Error::support("Dirichlet", "non-finite coordinate"));
    }
    if let Some((k, v)) = s.iter().enumerate().find(|(_, v)| **v < -SUPPORT_TOL) {
        return Err(Error::support(
            "Dirichlet",
            format!("component {k} is negative ({v})"),
        ));
    }
    let clamped: Vec<f64> = s.iter().map(|v| v.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    if (total - 1.0).abs() > SUPPORT_TOL {
        return Err(Error::support(
            "Dirichlet",
            format!("coordinates sum to {total}, expected 1"),
        ));
    }
    Ok(clamped.into_iter().map(|v| v / total).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, SymmetricEigen};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(seed: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(seed)
    }

    /// Gauss-Hermite nodes and weights (weight function e^{-x^2}) from the
    /// eigen-decomposition of the Jacobi matrix.
    fn gauss_hermite(n: usize) -> Vec<(f64, f64)> {
        let j = DMatrix::from_fn(n, n, |i, k| {
            if i + 1 == k || k + 1 == i {
                (i.max(k) as f64 / 2.0).sqrt()
            } else {
                0.0
            }
        });
        let eig = SymmetricEigen::new(j);
        let sqrt_pi = std::f64::consts::PI.sqrt();
        (0..n)
            .map(|i| {
                let v0 = eig.eigenvectors[(0, i)];
                (eig.eigenvalues[i], sqrt_pi * v0 * v0)
            })
            .collect()
    }

    #[test]
    fn log_density_examples() {
        let g = GaussianBase::standard(1).unwrap();
        assert!((g.log_density(&[0.0]).unwrap() + 0.5 * LN_2PI).abs() < 1e-15);

        let dir = DirichletBase::symmetric(2, 2.0).unwrap();
        let third = 1.0 / 3.0;
        let got = dir.log_density(&[third, third, third]).unwrap();
        // Z = Γ(2)^3 / Γ(6) = 1/120 and the product term is (1/3)^3
        assert!((got - (120.0f64 / 27.0).ln()).abs() < 1e-12);

        let vmf = VmfBase::new(1, vec![0.0, -1.0], 1.0).unwrap();
        let got = vmf.log_density(&[0.0, -1.0]).unwrap();
        let i0_1 = 1.266_065_877_752_008_4; // I_0(1)
        assert!((got - (1.0 - (2.0 * std::f64::consts::PI * i0_1).ln())).abs() < 1e-12);
    }

    #[test]
    fn support_errors() {
        let vmf = VmfBase::south_pole(2, 3.0).unwrap();
        assert!(matches!(
            vmf.log_density(&[0.0, 0.0, 0.9]),
            Err(Error::Support { .. })
        ));
        // within tolerance: re-normalized, not rejected
        assert!(vmf.log_density(&[0.0, 0.0, -1.0 - 5e-9]).is_ok());

        let dir = DirichletBase::new(vec![0.5, 2.0, 1.0]).unwrap();
        assert!(matches!(
            dir.log_density(&[0.0, 0.5, 0.5]),
            Err(Error::Support { .. })
        ));
        assert!(matches!(
            dir.log_density(&[0.2, 0.2, 0.2]),
            Err(Error::Support { .. })
        ));
        assert_eq!(
            dir.log_density(&[0.5, 0.0, 0.5]).unwrap(),
            f64::NEG_INFINITY
        );
        assert!(dir.log_density(&[0.5, 0.5, 0.0]).unwrap().is_finite());
        assert!(matches!(
            dir.log_density(&[0.5, 0.5]),
            Err(Error::DimensionMismatch {
                expected: 3,
                got: 2
            })
        ));
    }

    #[test]
    fn invalid_parameters() {
        assert!(VmfBase::south_pole(2, 0.0).is_err());
        assert!(VmfBase::new(1, vec![1.0, 1.0], 1.0).is_err());
        assert!(DirichletBase::new(vec![1.0, 0.0]).is_err());
        assert!(GaussianBase::standard(0).is_err());
        assert!(Temperature::new(0.0).is_err());
    }

    #[test]
    fn gaussian_normalizes_by_gauss_hermite() {
        let nodes = gauss_hermite(40);
        let g1 = GaussianBase::standard(1).unwrap();
        let s2 = 2f64.sqrt();
        let total: f64 = nodes
            .iter()
            .map(|&(t, w)| w * (g1.log_density(&[s2 * t]).unwrap() + t * t).exp() * s2)
            .sum();
        assert!((total - 1.0).abs() < 1e-3, "{total}");

        let g2 = GaussianBase::standard(2).unwrap();
        let mut total = 0.0;
        for &(t1, w1) in &nodes {
            for &(t2, w2) in &nodes {
                let lp = g2.log_density(&[s2 * t1, s2 * t2]).unwrap();
                total += w1 * w2 * (lp + t1 * t1 + t2 * t2).exp() * 2.0;
            }
        }
        assert!((total - 1.0).abs() < 1e-3, "{total}");
    }

    #[test]
    fn vmf_circle_normalizes_on_angular_grid() {
        for kappa in [0.5, 5.0, 40.0] {
            let vmf = VmfBase::new(1, vec![0.6, 0.8], kappa).unwrap();
            let n = 4000;
            let h = 2.0 * std::f64::consts::PI / n as f64;
            let total: f64 = (0..n)
                .map(|j| {
                    let th = j as f64 * h;
                    vmf.log_density(&[th.cos(), th.sin()]).unwrap().exp() * h
                })
                .sum();
            assert!((total - 1.0).abs() < 1e-3, "kappa={kappa}: {total}");
        }
    }

    #[test]
    fn dirichlet_normalizes_on_barycentric_grid() {
        for alpha in [vec![2.0, 2.0, 2.0], vec![1.5, 3.0, 2.5]] {
            let dir = DirichletBase::new(alpha).unwrap();
            // centroids of an n x n subdivision of the triangle, area 1/(2 n^2) each
            let n = 300;
            let h = 1.0 / n as f64;
            let area = 0.5 * h * h;
            let mut total = 0.0;
            for i in 0..n {
                for j in 0..(n - i) {
                    let (a, b) = (i as f64 * h, j as f64 * h);
                    for (s1, s2) in [
                        (a + h / 3.0, b + h / 3.0),
                        (a + 2.0 * h / 3.0, b + 2.0 * h / 3.0),
                    ] {
                        if s1 + s2 < 1.0 {
                            let p = dir.log_density(&[s1, s2, 1.0 - s1 - s2]).unwrap().exp();
                            total += p * area;
                        }
                    }
                }
            }
            assert!((total - 1.0).abs() < 1e-3, "{total}");
        }
    }

    #[test]
    fn gaussian_temperature_law() {
        let g: BaseDistribution = GaussianBase::standard(100).unwrap().into();
        for (t, want) in [(1.0, 100.0), (0.5, 25.0)] {
            let x = g
                .sample(100_000, Temperature::new(t).unwrap(), &mut rng(3))
                .unwrap();
            let mean_sq = x.rows().into_iter().map(|r| r.dot(&r)).sum::<f64>() / 1e5;
            assert!((mean_sq / want - 1.0).abs() < 0.02, "T={t}: {mean_sq}");
        }
    }

    #[test]
    fn vmf_samples_are_unit_norm_and_match_bessel_ratio() {
        for (d, kappa) in [(2usize, 5.0), (9, 20.0), (1, 2.0)] {
            let mut mu: Vec<f64> = (0..=d).map(|i| (i as f64 + 1.0).sin()).collect();
            let n = dot(&mu, &mu).sqrt();
            mu.iter_mut().for_each(|v| *v /= n);
            let vmf = VmfBase::new(d, mu.clone(), kappa).unwrap();
            let want = vmf.mean_resultant_length();
            let x = BaseDistribution::Vmf(vmf)
                .sample(100_000, Temperature::ONE, &mut rng(11))
                .unwrap();
            for r in x.rows() {
                assert!((r.dot(&r).sqrt() - 1.0).abs() < 1e-10);
            }
            let mean = x.mean_axis(ndarray::Axis(0)).unwrap();
            let len = mean.dot(&mean).sqrt();
            assert!(
                (len / want - 1.0).abs() < 0.01,
                "d={d} kappa={kappa}: {len} vs {want}"
            );
            // and the mean points at mu
            let cos = mean.iter().zip(&mu).map(|(a, b)| a * b).sum::<f64>() / len;
            assert!(cos > 0.999);
        }
    }

    #[test]
    fn dirichlet_sample_moments() {
        let alpha = vec![0.5, 2.0, 4.0, 1.5];
        let total: f64 = alpha.iter().sum();
        let dir: BaseDistribution = DirichletBase::new(alpha.clone()).unwrap().into();
        let x = dir.sample(100_000, Temperature::ONE, &mut rng(5)).unwrap();
        for r in x.rows() {
            assert!(r.iter().all(|v| *v >= 0.0));
            assert!((r.sum() - 1.0).abs() < 1e-10);
        }
        let mean = x.mean_axis(ndarray::Axis(0)).unwrap();
        for (m, a) in mean.iter().zip(&alpha) {
            assert!((m / (a / total) - 1.0).abs() < 0.01, "{m} vs {}", a / total);
        }
    }

    #[test]
    fn temperature_rules() {
        let vmf: BaseDistribution = VmfBase::south_pole(3, 100.0).unwrap().into();
        match vmf
            .with_temperature(Temperature::new(2.0).unwrap())
            .unwrap()
        {
            BaseDistribution::Vmf(v) => assert_eq!(v.kappa(), 25.0),
            other => panic!("unexpected {other:?}"),
        }
        let g: BaseDistribution = GaussianBase::standard(4).unwrap().into();
        assert_eq!(g.with_temperature(Temperature::ONE).unwrap(), g);
        let a = g.sample(10, Temperature::ONE, &mut rng(1)).unwrap();
        let b = g.sample(10, Temperature::ONE, &mut rng(1)).unwrap();
        assert_eq!(a, b);

        let dir: BaseDistribution = DirichletBase::symmetric(2, 2.0).unwrap().into();
        assert!(dir.with_temperature(Temperature::ONE).is_ok());
        assert!(matches!(
            dir.with_temperature(Temperature::new(0.5).unwrap()),
            Err(Error::Unsupported(_))
        ));
        assert!(dir
            .sample(3, Temperature::new(0.5).unwrap(), &mut rng(1))
            .is_err());
    }

    #[test]
    fn vmf_low_temperature_concentrates_at_mean() {
        let vmf: BaseDistribution = VmfBase::south_pole(4, 10.0).unwrap().into();
        let mut prev = 0.0;
        for t in [1.0, 0.3, 0.1, 0.01] {
            let x = vmf
                .sample(5_000, Temperature::new(t).unwrap(), &mut rng(9))
                .unwrap();
            let mean = x.mean_axis(ndarray::Axis(0)).unwrap();
            let len = mean.dot(&mean).sqrt();
            assert!(len > prev);
            prev = len;
        }
        assert!(prev > 0.999);
    }

    #[test]
    fn tempered_vmf_keeps_argmax() {
        let base = VmfBase::new(2, vec![0.0, 0.6, 0.8], 3.0).unwrap();
        let hot = match BaseDistribution::Vmf(base.clone())
            .with_temperature(Temperature::new(1.7).unwrap())
            .unwrap()
        {
            BaseDistribution::Vmf(v) => v,
            _ => unreachable!(),
        };
        let grid: Vec<[f64; 3]> = (0..40)
            .flat_map(|i| {
                (0..80).map(move |j| {
                    let th = (i as f64 + 0.5) * std::f64::consts::PI / 40.0;
                    let ph = j as f64 * std::f64::consts::PI / 40.0;
                    [th.sin() * ph.cos(), th.sin() * ph.sin(), th.cos()]
                })
            })
            .chain(std::iter::once([0.0, 0.6, 0.8]))
            .collect();
        let argmax = |v: &VmfBase| {
            grid.iter()
                .enumerate()
                .max_by(|a, b| {
                    v.log_density(a.1)
                        .unwrap()
                        .total_cmp(&v.log_density(b.1).unwrap())
                })
                .unwrap()
                .0
        };
        assert_eq!(argmax(&base), grid.len() - 1);
        assert_eq!(argmax(&hot), grid.len() - 1);
    }
}
