//! Interpolation rules between latent points, and spacing diagnostics for
//! the resulting paths.
//!
//! * `lerp`: plain linear interpolation in `R^d`.
//! * `nclerp`: linear interpolation rescaled so that the norm moves linearly
//!   from `||a||` to `||b||`.
//! * `slerp`: constant-speed great-circle interpolation on the unit sphere.
//! * `simplex_lerp`: coordinatewise linear interpolation, which never leaves
//!   the simplex.
//!
//! Every rule uses equally spaced `lambda`. nclerp's uneven spatial spacing
//! is reported by [`path_diagnostics`], not corrected.

use std::fmt;
use std::str::FromStr;

use ndarray::{Array2, ArrayView1};
use serde::{Deserialize, Serialize};

use crate::base::{project_to_sphere, BaseDistribution};
use crate::error::{Error, Result};
use crate::flow::{row_vec, FlowModel};
use crate::maps::SimplexPoint;

/// Below this norm the nclerp direction is undefined.
pub const NCLERP_MIN_NORM: f64 = 1e-12;
/// Endpoints further apart than `pi - ANTIPODAL_MARGIN` have no unique geodesic.
pub const ANTIPODAL_MARGIN: f64 = 1e-6;
/// Endpoints closer than this angle give the constant path.
pub const SLERP_MIN_ANGLE: f64 = 1e-9;
/// Tolerance on `decode(encode(x)) = x` for path endpoints.
pub const ENDPOINT_TOL: f64 = 1e-5;

fn check_dims(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            got: b.len(),
        });
    }
    Ok(())
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        .sqrt()
}

pub fn lerp(a: &[f64], b: &[f64], lambda: f64) -> Result<Vec<f64>> {
    check_dims(a, b)?;
    Ok(a.iter()
        .zip(b)
        .map(|(x, y)| (1.0 - lambda) * x + lambda * y)
        .collect())
}

/// Linear interpolation rescaled to norm `(1 - lambda)||a|| + lambda||b||`.
pub fn nclerp(a: &[f64], b: &[f64], lambda: f64) -> Result<Vec<f64>> {
    check_dims(a, b)?;
    if lambda == 0.0 {
        return Ok(a.to_vec());
    }
    if lambda == 1.0 {
        return Ok(b.to_vec());
    }
    let l = lerp(a, b, lambda)?;
    let n = norm(&l);
    if n < NCLERP_MIN_NORM {
        return Err(Error::DegeneratePath { norm: n, lambda });
    }
    let target = (1.0 - lambda) * norm(a) + lambda * norm(b);
    let s = target / n;
    Ok(l.into_iter().map(|v| v * s).collect())
}

/// Angle between two unit vectors, accurate near 0 and near `pi`.
pub fn great_circle_angle(a: &[f64], b: &[f64]) -> f64 {
    let diff = dist(a, b);
    let sum = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x + y) * (x + y))
        .sum::<f64>()
        .sqrt();
    2.0 * diff.atan2(sum)
}

/// Great-circle interpolation between unit vectors.
pub fn slerp(a: &[f64], b: &[f64], lambda: f64) -> Result<Vec<f64>> {
    check_dims(a, b)?;
    let a = project_to_sphere(a)?;
    let b = project_to_sphere(b)?;
    let omega = great_circle_angle(&a, &b);
    if omega > std::f64::consts::PI - ANTIPODAL_MARGIN {
        return Err(Error::UndefinedGeodesic { angle: omega });
    }
    if omega < SLERP_MIN_ANGLE || lambda == 0.0 {
        return Ok(a);
    }
    if lambda == 1.0 {
        return Ok(b);
    }
    let so = omega.sin();
    let wa = ((1.0 - lambda) * omega).sin() / so;
    let wb = (lambda * omega).sin() / so;
    let out: Vec<f64> = a.iter().zip(&b).map(|(x, y)| wa * x + wb * y).collect();
    let n = norm(&out);
    Ok(out.into_iter().map(|v| v / n).collect())
}

pub fn simplex_lerp(a: &SimplexPoint, b: &SimplexPoint, lambda: f64) -> Result<SimplexPoint> {
    check_dims(a.coords(), b.coords())?;
    if lambda == 0.0 {
        return Ok(a.clone());
    }
    if lambda == 1.0 {
        return Ok(b.clone());
    }
    SimplexPoint::new(lerp(a.coords(), b.coords(), lambda)?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Rule {
    Lerp,
    Nclerp,
    Slerp,
    SimplexLerp,
}

impl Rule {
    pub const ALL: [Rule; 4] = [Rule::Lerp, Rule::Nclerp, Rule::Slerp, Rule::SimplexLerp];

    pub fn name(self) -> &'static str {
        match self {
            Rule::Lerp => "lerp",
            Rule::Nclerp => "nclerp",
            Rule::Slerp => "slerp",
            Rule::SimplexLerp => "simplex_lerp",
        }
    }

    /// Linear interpolation for the Gaussian, slerp for the vMF and
    /// simplex lerp for the Dirichlet.
    pub fn default_for(base: &BaseDistribution) -> Rule {
        match base {
            BaseDistribution::Gaussian(_) => Rule::Lerp,
            BaseDistribution::Vmf(_) => Rule::Slerp,
            BaseDistribution::Dirichlet(_) => Rule::SimplexLerp,
        }
    }

    pub fn compatible_with(self, base: &BaseDistribution) -> bool {
        matches!(
            (self, base),
            (Rule::Lerp | Rule::Nclerp, BaseDistribution::Gaussian(_))
                | (Rule::Slerp, BaseDistribution::Vmf(_))
                | (Rule::SimplexLerp, BaseDistribution::Dirichlet(_))
        )
    }

    pub fn check_compatible(self, base: &BaseDistribution) -> Result<()> {
        if self.compatible_with(base) {
            Ok(())
        } else {
            Err(Error::InvalidParameter(format!(
                "rule {} cannot be used with a {} base",
                self.name(),
                base.kind_name()
            )))
        }
    }

    /// Applies the rule to raw coordinate vectors.
    pub fn apply(self, a: &[f64], b: &[f64], lambda: f64) -> Result<Vec<f64>> {
        match self {
            Rule::Lerp => lerp(a, b, lambda),
            Rule::Nclerp => nclerp(a, b, lambda),
            Rule::Slerp => slerp(a, b, lambda),
            Rule::SimplexLerp => {
                let a = SimplexPoint::new(a.to_vec())?;
                let b = SimplexPoint::new(b.to_vec())?;
                Ok(simplex_lerp(&a, &b, lambda)?.into_inner())
            }
        }
    }
}

impl fmt::Display for Rule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Rule {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Rule::ALL
            .into_iter()
            .find(|r| r.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown interpolation rule {s:?}")))
    }
}

/// `k + 2` equally spaced values `j / (k + 1)`, endpoints included.
pub fn uniform_lambdas(k: usize) -> Vec<f64> {
    let m = (k + 1) as f64;
    (0..=k + 1).map(|j| j as f64 / m).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct InterpolationPath {
    pub rule: Rule,
    pub lambdas: Vec<f64>,
    /// One row per lambda.
    pub points: Array2<f64>,
}

impl InterpolationPath {
    pub fn new(rule: Rule, a: &[f64], b: &[f64], lambdas: &[f64]) -> Result<Self> {
        check_dims(a, b)?;
        if lambdas.is_empty() {
            return Err(Error::Empty(
                "interpolation path needs at least one lambda".into(),
            ));
        }
        if let Some(l) = lambdas.iter().find(|l| !(0.0..=1.0).contains(*l)) {
            return Err(Error::InvalidParameter(format!(
                "lambda {l} outside [0, 1]"
            )));
        }
        if lambdas.windows(2).any(|w| w[1] < w[0]) {
            return Err(Error::InvalidParameter("lambdas must be ascending".into()));
        }
        let mut points = Array2::zeros((lambdas.len(), a.len()));
        for (i, &l) in lambdas.iter().enumerate() {
            let p = rule.apply(a, b, l)?;
            points.row_mut(i).assign(&ArrayView1::from(&p));
        }
        Ok(InterpolationPath {
            rule,
            lambdas: lambdas.to_vec(),
            points,
        })
    }

    /// Path with `k` interior points plus both endpoints.
    pub fn uniform(rule: Rule, a: &[f64], b: &[f64], k: usize) -> Result<Self> {
        Self::new(rule, a, b, &uniform_lambdas(k))
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    /// Rows strictly between the endpoints, assuming the path has both.
    pub fn interior(&self) -> Array2<f64> {
        let n = self.points.nrows();
        self.points
            .slice(ndarray::s![1..n.saturating_sub(1).max(1), ..])
            .to_owned()
    }

    /// `lambda, c0, c1, ..., norm` per row.
    pub fn to_csv(&self) -> String {
        let d = self.points.ncols();
        let mut s = String::from("lambda");
        for j in 0..d {
            s.push_str(&format!(",c{j}"));
        }
        s.push_str(",norm\n");
        for (l, row) in self.lambdas.iter().zip(self.points.rows()) {
            s.push_str(&l.to_string());
            for v in row {
                s.push_str(&format!(",{v}"));
            }
            s.push_str(&format!(",{}\n", norm(&row_vec(row))));
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathDiagnostics {
    pub norms: Vec<f64>,
    pub step_lengths: Vec<f64>,
    /// Coefficient of variation (population std / mean) of the step lengths.
    pub spacing_cv: f64,
}

pub fn path_diagnostics(path: &InterpolationPath) -> Result<PathDiagnostics> {
    if path.len() < 3 {
        return Err(Error::InvalidParameter(format!(
            "path diagnostics need at least 3 points, got {}",
            path.len()
        )));
    }
    let rows: Vec<Vec<f64>> = path.points.rows().into_iter().map(row_vec).collect();
    let norms = rows.iter().map(|r| norm(r)).collect();
    let step_lengths: Vec<f64> = rows.windows(2).map(|w| dist(&w[0], &w[1])).collect();
    let m = step_lengths.len() as f64;
    let mean = step_lengths.iter().sum::<f64>() / m;
    let spacing_cv = if mean > 0.0 {
        let var = step_lengths.iter().map(|s| (s - mean).powi(2)).sum::<f64>() / m;
        var.sqrt() / mean
    } else {
        0.0
    };
    Ok(PathDiagnostics {
        norms,
        step_lengths,
        spacing_cv,
    })
}

/// A path between two data points, interpolated on the base distribution's
/// support and decoded back to data space.
#[derive(Debug, Clone, PartialEq)]
pub struct DataPath {
    /// Path on the support of the base, endpoints included.
    pub latent: InterpolationPath,
    /// Decoded interior points, `k x d`.
    pub decoded: Array2<f64>,
}

/// Encodes `xa` and `xb`, interpolates with `rule` (or the base's default)
/// and decodes the `k` interior points.
pub fn data_interpolate(
    model: &FlowModel,
    xa: &[f64],
    xb: &[f64],
    k: usize,
    rule: Option<Rule>,
) -> Result<DataPath> {
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    check_dims(xa, xb)?;
    let rule = rule.unwrap_or_else(|| Rule::default_for(model.base()));
    rule.check_compatible(model.base())?;

    let mut x = Array2::zeros((2, xa.len()));
    x.row_mut(0).assign(&ArrayView1::from(xa));
    x.row_mut(1).assign(&ArrayView1::from(xb));
    let enc = model.encode(&x)?;

    let back = model.decode(&enc.points)?;
    let err = (&back - &x).iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if err > ENDPOINT_TOL {
        return Err(Error::RoundTrip {
            err,
            tol: ENDPOINT_TOL,
        });
    }

    let pa = row_vec(enc.points.row(0));
    let pb = row_vec(enc.points.row(1));
    let latent = InterpolationPath::uniform(rule, &pa, &pb, k)?;
    let decoded = model.decode(&latent.interior())?;
    Ok(DataPath { latent, decoded })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::base::{DirichletBase, GaussianBase, VmfBase};
    use crate::flow::ArchConfig;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn randn(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        (0..d)
            .map(|_| {
                let v: f64 = StandardNormal.sample(rng);
                v
            })
            .collect()
    }

    fn unit(d: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let v = randn(d, rng);
        let n = norm(&v);
        v.into_iter().map(|x| x / n).collect()
    }

    fn softmax(v: &[f64]) -> Vec<f64> {
        let e: Vec<f64> = v.iter().map(|x| x.exp()).collect();
        let t: f64 = e.iter().sum();
        e.into_iter().map(|x| x / t).collect()
    }

    fn close(a: &[f64], b: &[f64], tol: f64) -> bool {
        a.iter().zip(b).all(|(x, y)| (x - y).abs() <= tol)
    }

    #[test]
    fn lerp_examples() {
        assert_eq!(lerp(&[2.0, 0.0], &[0.0, 2.0], 0.5).unwrap(), vec![1.0, 1.0]);
        assert_eq!(
            lerp(&[3.0, -1.0], &[0.0, 2.0], 0.0).unwrap(),
            vec![3.0, -1.0]
        );
        assert!(lerp(&[1.0], &[1.0, 2.0], 0.5).is_err());
    }

    #[test]
    fn lerp_midpoints_of_gaussian_pairs_shrink_to_half_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let d = 512;
        let n = 10_000;
        let mut acc = 0.0;
        for _ in 0..n {
            let m = lerp(&randn(d, &mut rng), &randn(d, &mut rng), 0.5).unwrap();
            acc += m.iter().map(|v| v * v).sum::<f64>();
        }
        let mean = acc / n as f64;
        assert!((mean / 256.0 - 1.0).abs() < 0.05, "{mean}");
    }

    #[test]
    fn nclerp_examples() {
        let s = std::f64::consts::SQRT_2;
        let m = nclerp(&[2.0, 0.0], &[0.0, 2.0], 0.5).unwrap();
        assert!(close(&m, &[s, s], 1e-15));
        assert!((norm(&m) - 2.0).abs() < 1e-15);
        assert_eq!(
            nclerp(&[2.0, 0.0], &[0.0, 2.0], 0.0).unwrap(),
            vec![2.0, 0.0]
        );
        assert!(matches!(
            nclerp(&[1.0, 0.0], &[-1.0, 0.0], 0.5),
            Err(Error::DegeneratePath { .. })
        ));
    }

    #[test]
    fn nclerp_norm_is_linear_in_lambda() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for i in 0..100 {
            let a = randn(64, &mut rng);
            let b = randn(64, &mut rng);
            let l = (i as f64 + 0.5) / 100.0;
            let p = nclerp(&a, &b, l).unwrap();
            let target = (1.0 - l) * norm(&a) + l * norm(&b);
            assert!((norm(&p) - target).abs() < 1e-10);
        }
    }

    #[test]
    fn slerp_examples() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let m = slerp(&[1.0, 0.0], &[0.0, 1.0], 0.5).unwrap();
        assert!(close(&m, &[h, h], 1e-15));
        assert_eq!(
            slerp(&[1.0, 0.0], &[0.0, 1.0], 0.0).unwrap(),
            vec![1.0, 0.0]
        );
        assert!(matches!(
            slerp(&[1.0, 0.0], &[-1.0, 0.0], 0.3),
            Err(Error::UndefinedGeodesic { .. })
        ));
        // nearly identical endpoints give the constant path
        let b = [1.0, 1e-12];
        assert_eq!(slerp(&[1.0, 0.0], &b, 0.7).unwrap(), vec![1.0, 0.0]);
        assert!(slerp(&[2.0, 0.0], &[0.0, 1.0], 0.5).is_err());
    }

    #[test]
    fn slerp_outputs_are_unit_vectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let a = unit(128, &mut rng);
            let b = unit(128, &mut rng);
            for l in uniform_lambdas(9) {
                assert!((norm(&slerp(&a, &b, l).unwrap()) - 1.0).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn simplex_lerp_examples() {
        let a = SimplexPoint::new(vec![0.6, 0.2, 0.2]).unwrap();
        let b = SimplexPoint::new(vec![0.2, 0.6, 0.2]).unwrap();
        let m = simplex_lerp(&a, &b, 0.5).unwrap();
        assert!(close(m.coords(), &[0.4, 0.4, 0.2], 1e-15));
        assert_eq!(simplex_lerp(&a, &b, 0.0).unwrap(), a);
        let c = SimplexPoint::new(vec![1.0 / 3.0; 3]).unwrap();
        for l in uniform_lambdas(4) {
            assert!(close(
                simplex_lerp(&c, &c, l).unwrap().coords(),
                c.coords(),
                1e-15
            ));
        }
    }

    #[test]
    fn rule_names_round_trip_and_defaults_follow_the_base() {
        for r in Rule::ALL {
            assert_eq!(r.name().parse::<Rule>().unwrap(), r);
        }
        assert!("cubic".parse::<Rule>().is_err());
        let g: BaseDistribution = GaussianBase::standard(2).unwrap().into();
        let v: BaseDistribution = VmfBase::south_pole(2, 4.0).unwrap().into();
        let s: BaseDistribution = DirichletBase::symmetric(2, 2.0).unwrap().into();
        assert_eq!(Rule::default_for(&g), Rule::Lerp);
        assert_eq!(Rule::default_for(&v), Rule::Slerp);
        assert_eq!(Rule::default_for(&s), Rule::SimplexLerp);
        assert!(!Rule::Nclerp.compatible_with(&v));
        assert!(!Rule::Slerp.compatible_with(&g));
        assert!(Rule::Nclerp.compatible_with(&g));
    }

    #[test]
    fn path_diagnostics_spacing() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let a = randn(16, &mut rng);
        let b = randn(16, &mut rng);
        let p = InterpolationPath::uniform(Rule::Lerp, &a, &b, 5).unwrap();
        assert_eq!(p.len(), 7);
        assert!(path_diagnostics(&p).unwrap().spacing_cv < 1e-10);

        let ua = unit(16, &mut rng);
        let ub = unit(16, &mut rng);
        let p = InterpolationPath::uniform(Rule::Slerp, &ua, &ub, 5).unwrap();
        assert!(path_diagnostics(&p).unwrap().spacing_cv < 1e-10);

        let short = InterpolationPath::new(Rule::Lerp, &a, &b, &[0.0, 1.0]).unwrap();
        assert!(path_diagnostics(&short).is_err());
    }

    #[test]
    fn nclerp_paths_are_unevenly_spaced() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let trials = 1000;
        let uneven = (0..trials)
            .filter(|_| {
                let a = randn(512, &mut rng);
                let b = randn(512, &mut rng);
                let p = InterpolationPath::uniform(Rule::Nclerp, &a, &b, 5).unwrap();
                path_diagnostics(&p).unwrap().spacing_cv > 0.05
            })
            .count();
        assert!(uneven * 2 > trials, "{uneven}");
    }

    #[test]
    fn path_csv_has_header_and_rows() {
        let p = InterpolationPath::uniform(Rule::Lerp, &[0.0, 0.0], &[1.0, 1.0], 1).unwrap();
        let csv = p.to_csv();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], "lambda,c0,c1,norm");
        assert_eq!(lines.len(), 4);
        assert_eq!(p.interior().nrows(), 1);
    }

    fn trained_like(base: BaseDistribution, rng: &mut ChaCha8Rng) -> FlowModel {
        let cfg = ArchConfig {
            levels: 1,
            steps: 2,
            hidden: vec![8],
            actnorm: true,
            permute: true,
        };
        let mut m = FlowModel::build(&cfg, base, rng).unwrap();
        let p: Vec<f64> = m
            .params()
            .iter()
            .map(|v| {
                let n: f64 = StandardNormal.sample(rng);
                v + 0.1 * n
            })
            .collect();
        m.set_params(&p).unwrap();
        m
    }

    #[test]
    fn data_interpolation_for_each_base() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let d = 3;
        let bases: Vec<BaseDistribution> = vec![
            GaussianBase::standard(d).unwrap().into(),
            VmfBase::south_pole(d, 6.0).unwrap().into(),
            DirichletBase::symmetric(d, 2.0).unwrap().into(),
        ];
        for base in bases {
            let m = trained_like(base, &mut rng);
            let xa = randn(d, &mut rng);
            let xb = randn(d, &mut rng);
            let path = data_interpolate(&m, &xa, &xb, 5, None).unwrap();
            assert_eq!(path.decoded.nrows(), 5);
            assert_eq!(path.latent.len(), 7);
            for row in path.latent.points.rows() {
                let r = row_vec(row);
                match m.base() {
                    BaseDistribution::Vmf(_) => {
                        assert!(crate::maps::SpherePoint::new(r.clone()).is_ok());
                        assert!((norm(&r) - 1.0).abs() < 1e-10);
                    }
                    BaseDistribution::Dirichlet(_) => assert!(SimplexPoint::new(r).is_ok()),
                    BaseDistribution::Gaussian(_) => {}
                }
            }
        }
    }

    #[test]
    fn data_interpolation_with_nclerp_interpolates_latent_norms() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let m = trained_like(GaussianBase::standard(4).unwrap().into(), &mut rng);
        let xa = randn(4, &mut rng);
        let xb = randn(4, &mut rng);
        let path = data_interpolate(&m, &xa, &xb, 5, Some(Rule::Nclerp)).unwrap();
        let (z, _) = m.forward(&path.decoded).unwrap();
        let na = norm(&row_vec(path.latent.points.row(0)));
        let nb = norm(&row_vec(path.latent.points.row(6)));
        for (j, row) in z.rows().into_iter().enumerate() {
            let l = (j + 1) as f64 / 6.0;
            let want = (1.0 - l) * na + l * nb;
            assert!((norm(&row_vec(row)) - want).abs() < 1e-6);
        }
        assert!(data_interpolate(&m, &xa, &xb, 5, Some(Rule::Slerp)).is_err());
        assert!(data_interpolate(&m, &xa, &xb, 0, None).is_err());
    }

    proptest! {
        #[test]
        fn rules_reproduce_endpoints_and_are_symmetric(
            seed in 0u64..1000,
            d in 1usize..12,
            lambda in 0.0f64..=1.0,
        ) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = randn(d + 1, &mut rng);
            let b = randn(d + 1, &mut rng);
            let ua = unit(d + 1, &mut rng);
            let ub = unit(d + 1, &mut rng);
            let sa = softmax(&a);
            let sb = softmax(&b);
            let cases = [
                (Rule::Lerp, &a, &b),
                (Rule::Nclerp, &a, &b),
                (Rule::Slerp, &ua, &ub),
                (Rule::SimplexLerp, &sa, &sb),
            ];
            for (rule, x, y) in cases {
                let p0 = rule.apply(x, y, 0.0).unwrap();
                let p1 = rule.apply(x, y, 1.0).unwrap();
                prop_assert!(close(&p0, x, 1e-10), "{rule} start");
                prop_assert!(close(&p1, y, 1e-10), "{rule} end");
                match (rule.apply(x, y, lambda), rule.apply(y, x, 1.0 - lambda)) {
                    (Ok(f), Ok(r)) => prop_assert!(close(&f, &r, 1e-10), "{rule} symmetry"),
                    (Err(_), Err(_)) => {}
                    (f, r) => prop_assert!(false, "{rule}: {f:?} vs {r:?}"),
                }
            }
        }

        #[test]
        fn slerp_angle_is_linear_in_lambda(seed in 0u64..1000, d in 1usize..40, lambda in 0.0f64..=1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = unit(d + 1, &mut rng);
            let b = unit(d + 1, &mut rng);
            let omega = great_circle_angle(&a, &b);
            prop_assume!(omega < std::f64::consts::PI - 1e-3);
            let g = slerp(&a, &b, lambda).unwrap();
            prop_assert!((great_circle_angle(&a, &g) - lambda * omega).abs() < 1e-8);
        }

        #[test]
        fn simplex_lerp_stays_on_the_simplex(seed in 0u64..1000, d in 1usize..20, lambda in 0.0f64..=1.0) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = SimplexPoint::new(softmax(&randn(d + 1, &mut rng))).unwrap();
            let b = SimplexPoint::new(softmax(&randn(d + 1, &mut rng))).unwrap();
            let p = simplex_lerp(&a, &b, lambda).unwrap();
            prop_assert!((p.coords().iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.coords().iter().all(|v| *v >= 0.0));
        }
    }
}
