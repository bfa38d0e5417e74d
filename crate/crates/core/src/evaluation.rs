//! Sample-quality and likelihood metrics: bits per dimension on test and
//! interpolated data, FID, KID, and squared-norm diagnostics of latents.
//!
//! FID and KID are computed on features from a [`FeatureExtractor`]. No
//! pretrained image network is involved, so the values are only comparable
//! between models evaluated with the same extractor.

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::base::BaseDistribution;
use crate::error::{Error, Result};
use crate::flow::{row_vec, DataKind, FlowModel};
use crate::interpolation::{
    data_interpolate, path_diagnostics, InterpolationPath, PathDiagnostics, Rule,
};
use crate::special::{ln_gamma_pos, matrix_sqrt_psd};
use crate::Temperature;

pub const REPORT_SCHEMA_VERSION: u32 = 1;

pub const FEATURE_NOTE: &str = "FID/KID use the stated feature extractor, not Inception features; \
values are only comparable between runs that share the extractor";

/// Negative FID values down to this are rounding noise and reported as 0.
pub const FID_NEGATIVE_FLOOR: f64 = -1e-6;

fn check_pair(a: &Array2<f64>, b: &Array2<f64>, what: &str) -> Result<()> {
    if a.ncols() != b.ncols() {
        return Err(Error::DimensionMismatch {
            expected: a.ncols(),
            got: b.ncols(),
        });
    }
    if a.nrows() < 2 || b.nrows() < 2 {
        return Err(Error::InvalidParameter(format!(
            "{what} needs at least 2 rows per set, got {} and {}",
            a.nrows(),
            b.nrows()
        )));
    }
    Ok(())
}

/// Sample mean and unbiased (`n - 1`) covariance of the rows of `x`.
pub fn mean_and_cov(x: &Array2<f64>) -> Result<(Array1<f64>, Array2<f64>)> {
    if x.nrows() < 2 {
        return Err(Error::InvalidParameter(
            "covariance needs at least 2 rows".into(),
        ));
    }
    let mean = x.mean_axis(Axis(0)).expect("nonempty");
    let c = x - &mean;
    let cov = c.t().dot(&c) / (x.nrows() - 1) as f64;
    Ok((mean, cov))
}

/// Frechet distance between two Gaussians.
///
/// The cross term `Tr (S1 S2)^{1/2}` is evaluated as the average of
/// `Tr (A1 S2 A1)^{1/2}` and `Tr (A2 S1 A2)^{1/2}` with `Ai = Si^{1/2}`, which
/// are equal in exact arithmetic; averaging makes the result exactly
/// symmetric in its arguments.
pub fn fid_from_stats(
    mu1: &Array1<f64>,
    s1: &Array2<f64>,
    mu2: &Array1<f64>,
    s2: &Array2<f64>,
) -> Result<f64> {
    let d = mu1.len();
    for got in [mu2.len(), s1.nrows(), s1.ncols(), s2.nrows(), s2.ncols()] {
        if got != d {
            return Err(Error::DimensionMismatch { expected: d, got });
        }
    }
    let diff = mu1 - mu2;
    let a1 = matrix_sqrt_psd(s1)?;
    let a2 = matrix_sqrt_psd(s2)?;
    let t1 = matrix_sqrt_psd(&a1.dot(s2).dot(&a1))?.diag().sum();
    let t2 = matrix_sqrt_psd(&a2.dot(s1).dot(&a2))?.diag().sum();
    let v = diff.dot(&diff) + s1.diag().sum() + s2.diag().sum() - (t1 + t2);
    if v < FID_NEGATIVE_FLOOR {
        log::warn!("FID evaluated to {v:e}, below the rounding floor; clamping to 0");
    }
    Ok(v.max(0.0))
}

pub fn fid(reference: &Array2<f64>, generated: &Array2<f64>) -> Result<f64> {
    check_pair(reference, generated, "FID")?;
    let (m1, s1) = mean_and_cov(reference)?;
    let (m2, s2) = mean_and_cov(generated)?;
    fid_from_stats(&m1, &s1, &m2, &s2)
}

/// Polynomial kernel `(gamma x.y + coef0)^degree`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KernelConfig {
    pub degree: i32,
    /// `None` means `1 / feature_dim`.
    pub gamma: Option<f64>,
    pub coef0: f64,
}

impl Default for KernelConfig {
    fn default() -> Self {
        KernelConfig {
            degree: 3,
            gamma: None,
            coef0: 1.0,
        }
    }
}

impl KernelConfig {
    fn eval(&self, gamma: f64, x: ArrayView1<f64>, y: ArrayView1<f64>) -> f64 {
        (gamma * x.dot(&y) + self.coef0).powi(self.degree)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KidConfig {
    pub kernel: KernelConfig,
    pub blocks: usize,
    /// Seeds the random assignment of rows to blocks.
    pub seed: u64,
}

impl Default for KidConfig {
    fn default() -> Self {
        KidConfig {
            kernel: KernelConfig::default(),
            blocks: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KidEstimate {
    /// Mean of the per-block unbiased MMD^2 estimates.
    pub value: f64,
    /// Standard error of that mean; 0 when only one block fits.
    pub stderr: f64,
    pub blocks: usize,
}

/// Unbiased MMD^2 between the rows of `x` and `y` (each at least 2 rows).
pub fn mmd2_unbiased(x: &Array2<f64>, y: &Array2<f64>, kernel: &KernelConfig) -> f64 {
    let gamma = kernel.gamma.unwrap_or(1.0 / x.ncols() as f64);
    let within = |a: &Array2<f64>| {
        let n = a.nrows();
        let mut s = 0.0;
        for i in 0..n {
            for j in i + 1..n {
                s += kernel.eval(gamma, a.row(i), a.row(j));
            }
        }
        2.0 * s / (n * (n - 1)) as f64
    };
    let mut cross = 0.0;
    for xi in x.rows() {
        for yj in y.rows() {
            cross += kernel.eval(gamma, xi, yj);
        }
    }
    within(x) + within(y) - 2.0 * cross / (x.nrows() * y.nrows()) as f64
}

pub fn kid(reference: &Array2<f64>, generated: &Array2<f64>) -> Result<KidEstimate> {
    kid_with(reference, generated, &KidConfig::default())
}

/// KID over disjoint random blocks of both sets. Rows are shuffled before
/// blocking because data files are often sorted by class, and a block made of
/// one class says nothing about the whole set. The block count is reduced
/// when a set is too small to give every block two rows.
pub fn kid_with(
    reference: &Array2<f64>,
    generated: &Array2<f64>,
    cfg: &KidConfig,
) -> Result<KidEstimate> {
    check_pair(reference, generated, "KID")?;
    if cfg.blocks == 0 {
        return Err(Error::InvalidParameter(
            "KID needs at least one block".into(),
        ));
    }
    let blocks = cfg
        .blocks
        .min(reference.nrows() / 2)
        .min(generated.nrows() / 2)
        .max(1);
    // A fresh stream per set keeps the estimate symmetric in its arguments.
    let shuffled = |n: usize| {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(cfg.seed));
        idx
    };
    let (ref_idx, gen_idx) = (shuffled(reference.nrows()), shuffled(generated.nrows()));
    let block = |a: &Array2<f64>, idx: &[usize], b: usize| {
        let n = idx.len();
        a.select(Axis(0), &idx[b * n / blocks..(b + 1) * n / blocks])
    };
    let mut est = Vec::with_capacity(blocks);
    for b in 0..blocks {
        let x = block(reference, &ref_idx, b);
        let y = block(generated, &gen_idx, b);
        est.push(mmd2_unbiased(&x, &y, &cfg.kernel));
    }
    let m = blocks as f64;
    let value = est.iter().sum::<f64>() / m;
    let stderr = if blocks > 1 {
        let var = est.iter().map(|e| (e - value).powi(2)).sum::<f64>() / (m - 1.0);
        (var / m).sqrt()
    } else {
        0.0
    };
    Ok(KidEstimate {
        value,
        stderr,
        blocks,
    })
}

/// Maps data rows to the feature space used by FID and KID.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureExtractor {
    Identity,
    /// Per-coordinate standardization with statistics fitted on a reference set.
    WhitenedPixels {
        mean: Array1<f64>,
        std: Array1<f64>,
    },
    /// Fixed linear projection `x -> x W`, e.g. loaded from a file.
    Projection {
        weights: Array2<f64>,
    },
}

impl FeatureExtractor {
    pub fn fit_whitened(reference: &Array2<f64>) -> Result<Self> {
        if reference.nrows() < 2 {
            return Err(Error::InvalidParameter(
                "whitening needs at least 2 rows".into(),
            ));
        }
        let mean = reference.mean_axis(Axis(0)).expect("nonempty");
        let std = reference.std_axis(Axis(0), 1.0).mapv(|s| s.max(1e-6));
        Ok(FeatureExtractor::WhitenedPixels { mean, std })
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            FeatureExtractor::Identity => "identity",
            FeatureExtractor::WhitenedPixels { .. } => "whitened_pixels",
            FeatureExtractor::Projection { .. } => "projection",
        }
    }

    pub fn apply(&self, x: &Array2<f64>) -> Result<Array2<f64>> {
        match self {
            FeatureExtractor::Identity => Ok(x.clone()),
            FeatureExtractor::WhitenedPixels { mean, std } => {
                if x.ncols() != mean.len() {
                    return Err(Error::DimensionMismatch {
                        expected: mean.len(),
                        got: x.ncols(),
                    });
                }
                Ok((x - mean) / std)
            }
            FeatureExtractor::Projection { weights } => {
                if x.ncols() != weights.nrows() {
                    return Err(Error::DimensionMismatch {
                        expected: weights.nrows(),
                        got: x.ncols(),
                    });
                }
                Ok(x.dot(weights))
            }
        }
    }
}

/// `(test BPD, interpolation BPD)`.
pub fn bpd_suite<R: Rng + ?Sized>(
    model: &FlowModel,
    test: &Array2<f64>,
    interpolated: &Array2<f64>,
    kind: DataKind,
    rng: &mut R,
) -> Result<(f64, f64)> {
    Ok((
        model.bits_per_dim(test, kind, rng)?,
        model.bits_per_dim(interpolated, kind, rng)?,
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PairMode {
    /// Pairs drawn uniformly from the whole set.
    Across,
    /// Both members of a pair share a label.
    WithinClass,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolOutput {
    pub pairs: Vec<(usize, usize)>,
    /// Decoded interior points of every path, `pairs * k` rows.
    pub interpolants: Array2<f64>,
    /// Paths on the base support, endpoints included, one per pair.
    pub paths: Vec<InterpolationPath>,
    pub diagnostics: Vec<PathDiagnostics>,
}

/// Draws `n / k` pairs and decodes `k` equally spaced interior points per
/// pair, so the output has (about) as many rows as the input. Endpoints are
/// not included.
pub fn interpolation_protocol<R: Rng + ?Sized>(
    model: &FlowModel,
    data: &Array2<f64>,
    labels: Option<&[usize]>,
    k: usize,
    mode: PairMode,
    rule: Option<Rule>,
    rng: &mut R,
) -> Result<ProtocolOutput> {
    let n = data.nrows();
    if k == 0 {
        return Err(Error::InvalidParameter("k must be >= 1".into()));
    }
    if n < 2 || n / k == 0 {
        return Err(Error::InvalidParameter(format!(
            "need at least max(2, k) = {} examples, got {n}",
            k.max(2)
        )));
    }
    let pools: Vec<Vec<usize>> = match mode {
        PairMode::Across => vec![(0..n).collect()],
        PairMode::WithinClass => {
            let labels = labels
                .ok_or_else(|| Error::InvalidParameter("within-class pairs need labels".into()))?;
            if labels.len() != n {
                return Err(Error::DimensionMismatch {
                    expected: n,
                    got: labels.len(),
                });
            }
            let mut by_class: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
            for (i, &l) in labels.iter().enumerate() {
                by_class.entry(l).or_default().push(i);
            }
            by_class
                .into_iter()
                .filter_map(|(label, members)| {
                    if members.len() < 2 {
                        log::warn!("class {label} has fewer than 2 members; skipped");
                        None
                    } else {
                        Some(members)
                    }
                })
                .collect()
        }
    };
    // anchor drawn uniformly over eligible examples, partner within its pool
    let eligible: Vec<(usize, usize)> = pools
        .iter()
        .enumerate()
        .flat_map(|(p, m)| m.iter().map(move |&i| (p, i)))
        .collect();
    if eligible.is_empty() {
        return Err(Error::Empty("no class has at least 2 members".into()));
    }

    let num_pairs = n / k;
    let d = data.ncols();
    let mut pairs = Vec::with_capacity(num_pairs);
    let mut interpolants = Array2::zeros((num_pairs * k, d));
    let mut diagnostics = Vec::with_capacity(num_pairs);
    let mut paths = Vec::with_capacity(num_pairs);
    for p in 0..num_pairs {
        let (i, j) = draw_pair(data, &pools, &eligible, rng)?;
        let xa = row_vec(data.row(i));
        let xb = row_vec(data.row(j));
        let path = data_interpolate(model, &xa, &xb, k, rule)?;
        diagnostics.push(path_diagnostics(&path.latent)?);
        interpolants
            .slice_mut(ndarray::s![p * k..(p + 1) * k, ..])
            .assign(&path.decoded);
        paths.push(path.latent);
        pairs.push((i, j));
    }
    Ok(ProtocolOutput {
        pairs,
        interpolants,
        paths,
        diagnostics,
    })
}

fn draw_pair<R: Rng + ?Sized>(
    data: &Array2<f64>,
    pools: &[Vec<usize>],
    eligible: &[(usize, usize)],
    rng: &mut R,
) -> Result<(usize, usize)> {
    // identical rows would put an endpoint back into the output
    for _ in 0..1000 {
        let &(p, i) = eligible.choose(rng).expect("nonempty");
        let &j = pools[p].choose(rng).expect("pool has 2 members");
        if i != j && data.row(i) != data.row(j) {
            return Ok((i, j));
        }
    }
    Err(Error::InvalidParameter(
        "could not find a pair of distinct examples in 1000 draws".into(),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum NormReference {
    /// Squared norms of standard Gaussian latents, `chi^2_d`.
    ChiSquared { dof: usize },
    /// Unit vectors: every squared norm is 1.
    Unit,
    /// No reference distribution (e.g. simplex points).
    None,
}

impl NormReference {
    pub fn for_base(base: &BaseDistribution) -> Self {
        match base {
            BaseDistribution::Gaussian(g) => NormReference::ChiSquared { dof: g.dim() },
            BaseDistribution::Vmf(_) => NormReference::Unit,
            BaseDistribution::Dirichlet(_) => NormReference::None,
        }
    }

    /// `(mean, variance)` of the reference squared norm.
    pub fn moments(&self) -> Option<(f64, f64)> {
        match *self {
            NormReference::ChiSquared { dof } => Some((dof as f64, 2.0 * dof as f64)),
            NormReference::Unit => Some((1.0, 0.0)),
            NormReference::None => None,
        }
    }

    fn density(&self, x: f64) -> Option<f64> {
        match *self {
            NormReference::ChiSquared { dof } if x > 0.0 => {
                let k = 0.5 * dof as f64;
                Some(
                    ((k - 1.0) * x.ln() - 0.5 * x - k * std::f64::consts::LN_2 - ln_gamma_pos(k))
                        .exp(),
                )
            }
            NormReference::ChiSquared { .. } => Some(0.0),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormHistogram {
    pub squared_norms: Vec<f64>,
    pub reference: NormReference,
    pub mean: f64,
    pub variance: f64,
    /// `(mean - ref_mean) / sqrt(ref_var / n)`; `None` without a reference
    /// or when the reference variance is 0.
    pub mean_z: Option<f64>,
    /// Whether the mean agrees with the reference: `|z| < 3`, or within
    /// `1e-10` for the unit reference.
    pub mean_consistent: Option<bool>,
}

/// Squared norms of the rows of `points`, compared with `reference`.
pub fn norm_diagnostics(points: &Array2<f64>, reference: NormReference) -> Result<NormHistogram> {
    if points.nrows() == 0 {
        return Err(Error::Empty(
            "norm diagnostics need at least one point".into(),
        ));
    }
    let sq: Vec<f64> = points.rows().into_iter().map(|r| r.dot(&r)).collect();
    let n = sq.len() as f64;
    let mean = sq.iter().sum::<f64>() / n;
    let variance = sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let (mean_z, mean_consistent) = match reference.moments() {
        Some((m, v)) if v > 0.0 => {
            let z = (mean - m) / (v / n).sqrt();
            (Some(z), Some(z.abs() < 3.0))
        }
        Some((m, _)) => (None, Some(sq.iter().all(|s| (s - m).abs() < 1e-10))),
        None => (None, None),
    };
    Ok(NormHistogram {
        squared_norms: sq,
        reference,
        mean,
        variance,
        mean_z,
        mean_consistent,
    })
}

impl NormHistogram {
    /// `bins` equal-width bins over the observed range, as
    /// `(lo, hi, count, expected count under the reference)`.
    pub fn bins(&self, bins: usize) -> Vec<(f64, f64, usize, Option<f64>)> {
        let bins = bins.max(1);
        let lo = self
            .squared_norms
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let hi = self
            .squared_norms
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let width = if hi > lo {
            (hi - lo) / bins as f64
        } else {
            1.0
        };
        let mut counts = vec![0usize; bins];
        for &s in &self.squared_norms {
            let b = (((s - lo) / width) as usize).min(bins - 1);
            counts[b] += 1;
        }
        let n = self.squared_norms.len() as f64;
        counts
            .into_iter()
            .enumerate()
            .map(|(b, c)| {
                let a = lo + b as f64 * width;
                let expected = self
                    .reference
                    .density(a + 0.5 * width)
                    .map(|p| p * width * n);
                (a, a + width, c, expected)
            })
            .collect()
    }

    pub fn to_csv(&self, bins: usize) -> String {
        let mut s = String::from("bin_lo,bin_hi,count,expected\n");
        for (lo, hi, c, e) in self.bins(bins) {
            let e = e.map(|v| v.to_string()).unwrap_or_default();
            s.push_str(&format!("{lo},{hi},{c},{e}\n"));
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SampleMetrics {
    pub count: usize,
    pub fid: f64,
    pub kid: f64,
    pub kid_stderr: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormSummary {
    pub reference: NormReference,
    pub mean: f64,
    pub variance: f64,
    pub mean_consistent: Option<bool>,
}

impl From<&NormHistogram> for NormSummary {
    fn from(h: &NormHistogram) -> Self {
        NormSummary {
            reference: h.reference,
            mean: h.mean,
            variance: h.variance,
            mean_consistent: h.mean_consistent,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub schema_version: u32,
    pub note: String,
    pub seed: u64,
    pub base: String,
    pub feature_kind: String,
    pub train_count: usize,
    pub test_count: usize,
    pub bpd_test: f64,
    pub bpd_interpolated: f64,
    pub generated: SampleMetrics,
    pub interpolated: SampleMetrics,
    pub interpolation_rule: Rule,
    pub interpolation_pairs: usize,
    pub mean_spacing_cv: f64,
    /// Squared norms of the encoded test set on the base support.
    pub test_norms: NormSummary,
    /// Squared norms of the interpolated points on the base support.
    pub interpolated_norms: NormSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalOptions {
    pub k: usize,
    pub mode: PairMode,
    pub rule: Option<Rule>,
    pub features: FeatureExtractor,
    pub kid: KidConfig,
    pub data_kind: DataKind,
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            k: 5,
            mode: PairMode::Across,
            rule: None,
            features: FeatureExtractor::Identity,
            kid: KidConfig::default(),
            data_kind: DataKind::Continuous,
            seed: 0,
        }
    }
}

/// Full metric suite. Generated samples match the training set in number;
/// interpolants come from [`interpolation_protocol`] on the training set and
/// are compared with it.
pub fn evaluate<R: Rng + ?Sized>(
    model: &FlowModel,
    train: &Array2<f64>,
    train_labels: Option<&[usize]>,
    test: &Array2<f64>,
    opts: &EvalOptions,
    rng: &mut R,
) -> Result<MetricReport> {
    let rule = opts.rule.unwrap_or_else(|| Rule::default_for(model.base()));
    let protocol = interpolation_protocol(
        model,
        train,
        train_labels,
        opts.k,
        opts.mode,
        Some(rule),
        rng,
    )?;
    let (bpd_test, bpd_interpolated) =
        bpd_suite(model, test, &protocol.interpolants, opts.data_kind, rng)?;

    let generated = model.sample(train.nrows(), Temperature::ONE, rng)?;
    let ref_f = opts.features.apply(train)?;
    let sample_metrics = |x: &Array2<f64>| -> Result<SampleMetrics> {
        let f = opts.features.apply(x)?;
        let k = kid_with(&ref_f, &f, &opts.kid)?;
        Ok(SampleMetrics {
            count: x.nrows(),
            fid: fid(&ref_f, &f)?,
            kid: k.value,
            kid_stderr: k.stderr,
        })
    };
    let gen_m = sample_metrics(&generated)?;
    let int_m = sample_metrics(&protocol.interpolants)?;

    let reference = NormReference::for_base(model.base());
    let test_norms = norm_diagnostics(&model.encode(test)?.points, reference)?;
    let int_norms = norm_diagnostics(&model.encode(&protocol.interpolants)?.points, reference)?;
    let cvs: Vec<f64> = protocol.diagnostics.iter().map(|d| d.spacing_cv).collect();

    Ok(MetricReport {
        schema_version: REPORT_SCHEMA_VERSION,
        note: FEATURE_NOTE.to_string(),
        seed: opts.seed,
        base: model.base().kind_name().to_string(),
        feature_kind: opts.features.kind_name().to_string(),
        train_count: train.nrows(),
        test_count: test.nrows(),
        bpd_test,
        bpd_interpolated,
        generated: gen_m,
        interpolated: int_m,
        interpolation_rule: rule,
        interpolation_pairs: protocol.pairs.len(),
        mean_spacing_cv: cvs.iter().sum::<f64>() / cvs.len().max(1) as f64,
        test_norms: (&test_norms).into(),
        interpolated_norms: (&int_norms).into(),
    })
}
