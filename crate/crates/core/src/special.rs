//! Scalar and matrix special functions used by the densities and metrics.
//!
//! Everything here is pure and deterministic. The Bessel function is only
//! ever exposed in the log domain: the von Mises-Fisher normalizer needs
//! `I_{(d+1)/2 - 1}(kappa)` for `d` in the hundreds, far past the range
//! where the linear-domain value fits in an `f64`.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::Array2;

use crate::error::{Error, Result};

pub const LN_2PI: f64 = 1.837_877_066_409_345_5;
const HALF_LN_2PI: f64 = 0.918_938_533_204_672_8;

/// Truncation controls for the series expansions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpecialFnConfig {
    pub series_tol: f64,
    pub max_terms: usize,
}

impl Default for SpecialFnConfig {
    fn default() -> Self {
        SpecialFnConfig {
            series_tol: 1e-12,
            max_terms: 500,
        }
    }
}

impl SpecialFnConfig {
    pub fn new(series_tol: f64, max_terms: usize) -> Result<Self> {
        if !(series_tol > 0.0) || !series_tol.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "series_tol must be positive, got {series_tol}"
            )));
        }
        if max_terms == 0 {
            return Err(Error::InvalidParameter("max_terms must be >= 1".into()));
        }
        Ok(SpecialFnConfig {
            series_tol,
            max_terms,
        })
    }
}

const LANCZOS_G: f64 = 7.0;
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_9,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_1,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_572e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for `x > 0`.
pub fn log_gamma(x: f64) -> Result<f64> {
    if !x.is_finite() || x <= 0.0 {
        return Err(Error::domain(
            "log_gamma",
            format!("x must be positive and finite, got {x}"),
        ));
    }
    Ok(ln_gamma_pos(x))
}

pub(crate) fn ln_gamma_pos(x: f64) -> f64 {
    if x < 0.5 {
        // ln Γ(x) = ln Γ(x + 1) - ln x
        return ln_gamma_pos(x + 1.0) - x.ln();
    }
    if x >= 10.0 {
        return stirling(x);
    }
    let xm1 = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (xm1 + i as f64);
    }
    let t = xm1 + LANCZOS_G + 0.5;
    HALF_LN_2PI + (xm1 + 0.5) * t.ln() - t + acc.ln()
}

fn stirling(x: f64) -> f64 {
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // Bernoulli-number tail, Horner form in 1/x^2.
    let tail = inv
        * (1.0 / 12.0
            + inv2
                * (-1.0 / 360.0
                    + inv2 * (1.0 / 1260.0 + inv2 * (-1.0 / 1680.0 + inv2 * (1.0 / 1188.0)))));
    (x - 0.5) * x.ln() - x + HALF_LN_2PI + tail
}

/// `ln I_order(arg)`, the log of the modified Bessel function of the first kind.
pub fn log_bessel_i(order: f64, arg: f64) -> Result<f64> {
    log_bessel_i_with(&SpecialFnConfig::default(), order, arg)
}

pub fn log_bessel_i_with(cfg: &SpecialFnConfig, order: f64, arg: f64) -> Result<f64> {
    if !(order >= 0.0) || !order.is_finite() {
        return Err(Error::domain(
            "log_bessel_i",
            format!("order must be >= 0, got {order}"),
        ));
    }
    if !(arg >= 0.0) || !arg.is_finite() {
        return Err(Error::domain(
            "log_bessel_i",
            format!("argument must be >= 0, got {arg}"),
        ));
    }
    if arg == 0.0 {
        return Ok(if order == 0.0 { 0.0 } else { f64::NEG_INFINITY });
    }
    if let Some(v) = bessel_series(cfg, order, arg) {
        return Ok(v);
    }
    if arg > order * order {
        if let Some(v) = bessel_hankel(order, arg) {
            return Ok(v);
        }
    }
    Ok(bessel_debye(order, arg))
}

/// Ascending power series, summed outward from its largest term so that the
/// number of terms grows like `sqrt(arg)` rather than `arg`. All terms are
/// positive, so there is no cancellation. Returns `None` if `max_terms` is
/// not enough to reach `series_tol`.
fn bessel_series(cfg: &SpecialFnConfig, nu: f64, x: f64) -> Option<f64> {
    let half = 0.5 * x;
    let q = half * half;
    // ratio t_{k+1}/t_k = q / ((k+1)(k+1+nu)) crosses 1 near the peak
    let kp = ((-nu + (nu * nu + x * x).sqrt()) * 0.5 - 1.0)
        .ceil()
        .max(0.0);
    let log_peak =
        (2.0 * kp + nu) * half.ln() - ln_gamma_pos(kp + 1.0) - ln_gamma_pos(kp + nu + 1.0);

    let tol = cfg.series_tol;
    let mut sum = 1.0;
    let mut terms = 1usize;

    let mut r = 1.0;
    let mut k = kp;
    loop {
        let ratio = q / ((k + 1.0) * (k + 1.0 + nu));
        r *= ratio;
        sum += r;
        terms += 1;
        k += 1.0;
        if ratio < 1.0 && r / (1.0 - ratio) < tol * sum {
            break;
        }
        if terms > cfg.max_terms {
            return None;
        }
    }

    let mut r = 1.0;
    let mut k = kp;
    while k >= 1.0 {
        let ratio = k * (k + nu) / q;
        r *= ratio;
        sum += r;
        terms += 1;
        k -= 1.0;
        if ratio < 1.0 && r / (1.0 - ratio) < tol * sum {
            break;
        }
        if terms > cfg.max_terms {
            return None;
        }
    }
    Some(log_peak + sum.ln())
}

/// Large-argument expansion `e^x / sqrt(2 pi x) * sum (-1)^k a_k(nu) / x^k`.
/// Returns `None` when the asymptotic series stops shrinking before it
/// reaches double precision.
fn bessel_hankel(nu: f64, x: f64) -> Option<f64> {
    let mu = 4.0 * nu * nu;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..60 {
        let odd = (2 * k - 1) as f64;
        let next = -term * (mu - odd * odd) / (8.0 * k as f64 * x);
        if next.abs() > term.abs() {
            return None;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            return Some(x - 0.5 * (2.0 * std::f64::consts::PI * x).ln() + sum.ln());
        }
    }
    None
}

/// Debye's uniform asymptotic expansion in the order, through `u_5`.
fn bessel_debye(nu: f64, x: f64) -> f64 {
    let root = (nu * nu + x * x).sqrt();
    let t = nu / root;
    let t2 = t * t;
    let u1 = t * (3.0 - 5.0 * t2) / 24.0;
    let u2 = t2 * (81.0 + t2 * (-462.0 + t2 * 385.0)) / 1152.0;
    let u3 = t * t2 * (30375.0 + t2 * (-369603.0 + t2 * (765765.0 - t2 * 425425.0))) / 414720.0;
    let u4 = t2
        * t2
        * (4465125.0
            + t2 * (-94121676.0 + t2 * (349922430.0 + t2 * (-446185740.0 + t2 * 185910725.0))))
        / 39813120.0;
    let u5 = t2
        * t2
        * t
        * (1519035525.0
            + t2 * (-49286948607.0
                + t2 * (284499769554.0
                    + t2 * (-614135872350.0 + t2 * (566098157625.0 - t2 * 188699385875.0)))))
        / 6688604160.0;
    let inv = 1.0 / nu;
    let series = 1.0 + inv * (u1 + inv * (u2 + inv * (u3 + inv * (u4 + inv * u5))));
    let eta = root + nu * (x / (nu + root)).ln();
    // (1 + z^2)^(1/4) with z = x/nu is sqrt(root/nu)
    eta - 0.5 * (2.0 * std::f64::consts::PI * nu).ln() - 0.5 * (root / nu).ln() + series.ln()
}

/// Logistic sigmoid, evaluated without overflow for every finite input.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

/// `ln sigmoid(x)`, finite for every finite `x`.
pub fn log_sigmoid(x: f64) -> f64 {
    -softplus(-x)
}

pub fn logit(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(
            "logit",
            format!("p must lie strictly inside (0, 1), got {p}"),
        ));
    }
    Ok(p.ln() - (-p).ln_1p())
}

/// Square root of a symmetric positive semi-definite matrix via a symmetric
/// eigendecomposition. Eigenvalues down to `-1e-8` (relative to the largest
/// magnitude entry) are treated as roundoff and clamped to zero.
pub fn matrix_sqrt_psd(m: &Array2<f64>) -> Result<Array2<f64>> {
    let (rows, cols) = m.dim();
    if rows != cols {
        return Err(Error::domain(
            "matrix_sqrt_psd",
            format!("matrix is {rows}x{cols}, not square"),
        ));
    }
    if rows == 0 {
        return Ok(Array2::zeros((0, 0)));
    }
    let scale = m.iter().fold(1.0f64, |acc, v| acc.max(v.abs()));
    for i in 0..rows {
        for j in (i + 1)..rows {
            if (m[[i, j]] - m[[j, i]]).abs() > 1e-8 * scale {
                return Err(Error::domain(
                    "matrix_sqrt_psd",
                    format!("matrix is not symmetric at ({i}, {j})"),
                ));
            }
        }
    }
    let dm = DMatrix::from_fn(rows, cols, |i, j| 0.5 * (m[[i, j]] + m[[j, i]]));
    let eig = SymmetricEigen::new(dm);
    let mut roots = eig.eigenvalues.clone();
    for v in roots.iter_mut() {
        if *v < -1e-8 * scale {
            return Err(Error::domain(
                "matrix_sqrt_psd",
                format!("matrix is indefinite (eigenvalue {v:e})"),
            ));
        }
        *v = v.max(0.0).sqrt();
    }
    let q = &eig.eigenvectors;
    let s = q * DMatrix::from_diagonal(&roots) * q.transpose();
    Ok(Array2::from_shape_fn((rows, cols), |(i, j)| {
        0.5 * (s[(i, j)] + s[(j, i)])
    }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx_eq::close;
    use ndarray::array;
    use proptest::prelude::*;

    mod approx_eq {
        pub fn close(a: f64, b: f64, tol: f64) -> bool {
            (a - b).abs() <= tol * b.abs().max(1.0)
        }
    }

    #[test]
    fn log_gamma_small_integers() {
        assert!(log_gamma(1.0).unwrap().abs() < 1e-14);
        assert!(log_gamma(2.0).unwrap().abs() < 1e-14);
        // 5! by direct product
        let fact5: f64 = (1..=5).map(|k| k as f64).product();
        assert!((log_gamma(6.0).unwrap() - fact5.ln()).abs() < 1e-13);
    }

    #[test]
    fn log_gamma_matches_factorials_and_half_integers() {
        let mut ln_fact = 0.0f64;
        for n in 1..170u32 {
            // Γ(n + 1) = n!
            ln_fact += (n as f64).ln();
            let got = log_gamma(n as f64 + 1.0).unwrap();
            assert!(
                (got - ln_fact).abs() <= 1e-10 * ln_fact.abs().max(1.0),
                "n = {n}"
            );
        }
        // Γ(n + 1/2) = sqrt(pi) (2n)! / (4^n n!)
        let half_pi = std::f64::consts::PI.sqrt().ln();
        for n in 0..60u32 {
            let ln2n: f64 = (1..=2 * n).map(|k| (k as f64).ln()).sum();
            let lnn: f64 = (1..=n).map(|k| (k as f64).ln()).sum();
            let want = half_pi + ln2n - n as f64 * 4f64.ln() - lnn;
            let got = log_gamma(n as f64 + 0.5).unwrap();
            assert!((got - want).abs() <= 1e-10 * want.abs().max(1.0), "n = {n}");
        }
    }

    #[test]
    fn log_gamma_extremes() {
        // Γ(x) ~ 1/x - euler_gamma for small x
        let x: f64 = 1e-3;
        let want = (1.0 / x - 0.577_215_664_901_532_9 + 0.989_055_995_327_972_6 * x).ln();
        assert!((log_gamma(x).unwrap() - want).abs() < 1e-9 * want);
        let big = log_gamma(1e6).unwrap();
        let stirling = (1e6 - 0.5) * 1e6f64.ln() - 1e6 + HALF_LN_2PI + 1.0 / 12e6;
        assert!((big - stirling).abs() <= 1e-10 * big);
    }

    #[test]
    fn log_gamma_rejects_bad_input() {
        for x in [0.0, -1.0, f64::NAN, f64::INFINITY] {
            assert!(matches!(log_gamma(x), Err(Error::Domain { .. })));
        }
    }

    // Independent oracle: plain ascending series summed term by term from
    // k = 0, accumulated with compensated (Kahan) summation.
    fn bessel_naive(nu: f64, x: f64) -> f64 {
        let mut term = (0.5 * x).powf(nu) / ln_gamma_pos(nu + 1.0).exp();
        let mut sum = 0.0f64;
        let mut comp = 0.0f64;
        for k in 0..2000 {
            let y = term - comp;
            let t = sum + y;
            comp = (t - sum) - y;
            sum = t;
            let kf = k as f64;
            term *= 0.25 * x * x / ((kf + 1.0) * (kf + 1.0 + nu));
            if term < 1e-20 * sum {
                break;
            }
        }
        sum
    }

    #[test]
    fn log_bessel_reference_values() {
        assert_eq!(log_bessel_i(0.0, 0.0).unwrap(), 0.0);
        assert_eq!(log_bessel_i(1.5, 0.0).unwrap(), f64::NEG_INFINITY);
        // I_{1/2}(k) = sqrt(2/(pi k)) sinh k
        let want = ((2.0 / std::f64::consts::PI).sqrt() * 1f64.sinh()).ln();
        assert!((log_bessel_i(0.5, 1.0).unwrap() - want).abs() < 1e-13);
        assert!((want + 0.064_351_991_073_531_8).abs() < 1e-14);
        let got = log_bessel_i(0.0, 10.0).unwrap();
        assert!((got - bessel_naive(0.0, 10.0).ln()).abs() < 1e-13);
        // mpmath, 40 digits
        assert!((got - 7.942_972_083_118_696).abs() < 1e-12);
    }

    #[test]
    fn log_bessel_matches_naive_series() {
        for &nu in &[0.0, 0.5, 1.0, 2.5, 7.0, 15.5, 40.0] {
            for &x in &[1e-3, 0.1, 1.0, 5.0, 20.0, 60.0] {
                let want = bessel_naive(nu, x).ln();
                let got = log_bessel_i(nu, x).unwrap();
                assert!(close(got, want, 1e-12), "nu={nu} x={x}: {got} vs {want}");
            }
        }
    }

    #[test]
    fn log_bessel_half_integer_closed_forms_at_large_argument() {
        let ln_sinh = |x: f64| x + (-(-2.0 * x).exp()).ln_1p() - 2f64.ln();
        for &x in &[50.0, 700.0, 5_000.0, 1e5] {
            let want = 0.5 * (2.0 / (std::f64::consts::PI * x)).ln() + ln_sinh(x);
            let got = log_bessel_i(0.5, x).unwrap();
            assert!(close(got, want, 1e-12), "x={x}: {got} vs {want}");
            // I_{3/2}(x) = sqrt(2/(pi x)) (cosh x - sinh x / x)
            let ln_cosh = x + (-2.0 * x).exp().ln_1p() - 2f64.ln();
            let want32 = 0.5 * (2.0 / (std::f64::consts::PI * x)).ln()
                + ln_cosh
                + (-(ln_sinh(x) - ln_cosh).exp() / x).ln_1p();
            let got32 = log_bessel_i(1.5, x).unwrap();
            assert!(close(got32, want32, 1e-12), "x={x}: {got32} vs {want32}");
        }
    }

    #[test]
    fn asymptotic_branches_agree_with_long_series() {
        let long = SpecialFnConfig::new(1e-15, 1_000_000).unwrap();
        let default = SpecialFnConfig::default();
        for &(nu, x) in &[
            (391.0, 1568.0),
            (50.0, 3000.0),
            (300.0, 10_000.0),
            (2.0, 20_000.0),
            (1000.0, 100.0),
            (25.0, 1200.0),
        ] {
            let reference = log_bessel_i_with(&long, nu, x).unwrap();
            let got = log_bessel_i_with(&default, nu, x).unwrap();
            assert!(
                close(got, reference, 1e-10),
                "nu={nu} x={x}: {got} vs {reference}"
            );
        }
    }

    #[test]
    fn log_bessel_no_overflow_at_vmf_scale() {
        // d = 3072 (CIFAR-sized), kappa = 2d
        let v = log_bessel_i(1535.5, 6144.0).unwrap();
        assert!(v.is_finite() && v > 700.0);
    }

    #[test]
    fn log_bessel_rejects_negative_inputs() {
        assert!(log_bessel_i(-1.0, 1.0).is_err());
        assert!(log_bessel_i(1.0, -1.0).is_err());
    }

    proptest! {
        #[test]
        fn log_gamma_recurrence(x in 1e-3f64..100.0) {
            let lhs = log_gamma(x + 1.0).unwrap();
            let rhs = log_gamma(x).unwrap() + x.ln();
            prop_assert!((lhs - rhs).abs() <= 1e-10 * lhs.abs().max(1.0));
        }

        #[test]
        fn bessel_three_term_recurrence(nu in 1.0f64..10.0, k in 0.1f64..20.0) {
            let lower = log_bessel_i(nu - 1.0, k).unwrap().exp();
            let upper = log_bessel_i(nu + 1.0, k).unwrap().exp();
            let mid = log_bessel_i(nu, k).unwrap().exp();
            let lhs = lower - upper;
            let rhs = 2.0 * nu / k * mid;
            prop_assert!((lhs - rhs).abs() <= 1e-8 * rhs.abs());
        }

        #[test]
        fn logit_inverts_sigmoid(x in -30.0f64..30.0) {
            let back = logit(sigmoid(x)).unwrap();
            // sigmoid(x) for large positive x sits within e^-x of 1, where the
            // f64 grid spacing alone costs about eps * e^x in the round trip.
            let representable = 2.0 * f64::EPSILON * (1.0 + x.exp());
            prop_assert!((back - x).abs() <= 1e-12_f64.max(representable));
        }

        #[test]
        fn logit_inverts_sigmoid_tightly_below_nine(x in -30.0f64..9.0) {
            prop_assert!((logit(sigmoid(x)).unwrap() - x).abs() <= 1e-12);
        }
    }

    #[test]
    fn sigmoid_and_logit_values() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert_eq!(logit(0.5).unwrap(), 0.0);
        assert!((sigmoid(-(2f64.ln())) - 1.0 / 3.0).abs() < 1e-16);
        assert_eq!(sigmoid(1e308), 1.0);
        assert_eq!(sigmoid(-1e308), 0.0);
        assert!((log_sigmoid(-800.0) + 800.0).abs() < 1e-12);
        assert!(logit(0.0).is_err());
        assert!(logit(1.0).is_err());
    }

    #[test]
    fn matrix_sqrt_examples() {
        let id = Array2::<f64>::eye(3);
        let s = matrix_sqrt_psd(&id).unwrap();
        assert!((&s - &id).iter().all(|v| v.abs() < 1e-14));

        let d = array![[4.0, 0.0], [0.0, 9.0]];
        let s = matrix_sqrt_psd(&d).unwrap();
        assert!((&s - &array![[2.0, 0.0], [0.0, 3.0]])
            .iter()
            .all(|v| v.abs() < 1e-14));

        // eigenvalues 1 and 3 along (1,-1)/sqrt2 and (1,1)/sqrt2
        let m = array![[2.0, 1.0], [1.0, 2.0]];
        let s = matrix_sqrt_psd(&m).unwrap();
        let a = (1.0 + 3f64.sqrt()) / 2.0;
        let b = (3f64.sqrt() - 1.0) / 2.0;
        let want = array![[a, b], [b, a]];
        assert!((&s - &want).iter().all(|v| v.abs() < 1e-12));
        let sq = s.dot(&s);
        assert!((&sq - &m).iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn matrix_sqrt_rejects_bad_matrices() {
        assert!(matrix_sqrt_psd(&array![[1.0, 2.0], [0.0, 1.0]]).is_err());
        assert!(matrix_sqrt_psd(&array![[1.0, 0.0], [0.0, -1.0]]).is_err());
        // tiny negative eigenvalue from roundoff is clamped
        let s = matrix_sqrt_psd(&array![[1.0, 0.0], [0.0, -1e-12]]).unwrap();
        assert_eq!(s[[1, 1]], 0.0);
    }

    proptest! {
        #[test]
        fn matrix_sqrt_of_gram_matrix(vals in proptest::collection::vec(-3.0f64..3.0, 12)) {
            let a = Array2::from_shape_vec((3, 4), vals).unwrap();
            let m = a.dot(&a.t());
            let s = matrix_sqrt_psd(&m).unwrap();
            let norm = m.iter().map(|v| v * v).sum::<f64>().sqrt();
            let err = (&s.dot(&s) - &m).iter().map(|v| v * v).sum::<f64>().sqrt();
            prop_assert!(err <= 1e-6 * norm.max(1e-12));
            for i in 0..3 { for j in 0..3 { prop_assert_eq!(s[[i, j]], s[[j, i]]); } }
            let eig = SymmetricEigen::new(DMatrix::from_fn(3, 3, |i, j| s[[i, j]]));
            prop_assert!(eig.eigenvalues.iter().all(|&v| v >= -1e-7));
        }
    }
}
