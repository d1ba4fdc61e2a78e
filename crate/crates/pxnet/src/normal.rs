//! Scalar and bivariate Gaussian kernels.
//!
//! Everything the estimator needs from the normal distribution lives here:
//! pdf/cdf/quantile, the bivariate CDF, truncated first and second moments,
//! and the closed-form pairwise conditional expectations (including their
//! perfect-correlation limit) that drive the correlation update.
//!
//! Mills-ratio terms are evaluated in log domain so truncated moments stay
//! finite over the whole guarded range `|eta| <= ETA_GUARD`.

use crate::error::{PxError, Result};
use std::f64::consts::PI;
use std::sync::OnceLock;

const SQRT_2: f64 = std::f64::consts::SQRT_2;
const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8; // ln(sqrt(2*pi))
const SQRT_2PI: f64 = 2.506_628_274_631_000_7;

/// Linear predictors beyond this magnitude are clamped before computing
/// truncated moments; the normal CDF is still representable here but the
/// conditioning event has probability near the f64 floor.
pub const ETA_GUARD: f64 = 37.0;

/// Standard normal density.
#[inline]
pub fn std_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() / SQRT_2PI
}

#[inline]
fn log_std_pdf(x: f64) -> f64 {
    -0.5 * x * x - LN_SQRT_2PI
}

/// Standard normal CDF, accurate to a few ulps over the full double range.
#[inline]
pub fn std_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// `ln Phi(x)`, using the tail asymptotic once the CDF itself would lose
/// relative accuracy.
pub fn log_std_cdf(x: f64) -> f64 {
    if x > -36.0 {
        let p = std_cdf(x);
        if p > 0.0 {
            return p.ln();
        }
    }
    // Phi(x) = phi(x)/|x| * (1 - 1/x^2 + 3/x^4 - 15/x^6 + ...), x << 0
    let inv2 = 1.0 / (x * x);
    let series = 1.0 - inv2 * (1.0 - 3.0 * inv2 * (1.0 - 5.0 * inv2));
    log_std_pdf(x) - (-x).ln() + series.ln()
}

/// Inverse standard normal CDF.
///
/// Rational initial guess (relative error ~1e-9) followed by one Halley step
/// against [`std_cdf`]; the refinement is skipped where the density
/// underflows, which only happens deeper in the tail than any caller goes.
pub fn std_quantile(p: f64) -> f64 {
    assert!(p > 0.0 && p < 1.0, "quantile needs p in (0,1), got {p}");

    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    const P_LOW: f64 = 0.02425;

    let mut x = if p < P_LOW {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p <= 1.0 - P_LOW {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    };

    if x.abs() < 37.5 {
        let density = std_pdf(x);
        if density > 0.0 {
            let err = std_cdf(x) - p;
            let u = err / density;
            x -= u / (1.0 + 0.5 * x * u);
        }
    }
    x
}

// ----------------------------------------------------------------------------
// Gauss-Legendre rule
// ----------------------------------------------------------------------------

const GL_ORDER: usize = 32;

fn gauss_legendre_rule() -> &'static [(f64, f64); GL_ORDER] {
    static RULE: OnceLock<[(f64, f64); GL_ORDER]> = OnceLock::new();
    RULE.get_or_init(|| {
        let n = GL_ORDER;
        let mut rule = [(0.0f64, 0.0f64); GL_ORDER];
        for (i, slot) in rule.iter_mut().enumerate() {
            // Newton on P_n from the Chebyshev-like initial guess.
            let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..64 {
                let (mut p0, mut p1) = (1.0f64, x);
                for k in 2..=n {
                    let kf = k as f64;
                    let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
                    p0 = p1;
                    p1 = p2;
                }
                dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
                let dx = p1 / dp;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            *slot = (x, 2.0 / ((1.0 - x * x) * dp * dp));
        }
        rule
    })
}

// ----------------------------------------------------------------------------
// Bivariate CDF
// ----------------------------------------------------------------------------

/// `P(Z1 <= h, Z2 <= k)` for standard normals with correlation `r`, `|r| < 1`.
///
/// Evaluates the single-integral reduction over the correlation parameter with
/// a fixed 32-point Gauss-Legendre rule; a change of variables handles
/// `|r| > 0.925`, where the direct reduction loses accuracy.
pub fn bivariate_cdf(h: f64, k: f64, r: f64) -> Result<f64> {
    if !(r.abs() < 1.0) {
        return Err(PxError::Domain(format!("correlation {r} outside (-1, 1)")));
    }
    if h.is_nan() || k.is_nan() {
        return Err(PxError::Domain("NaN bound in bivariate cdf".into()));
    }
    Ok(bvn_upper(-h, -k, r))
}

/// `P(X > h, Y > k)` for standard normals with correlation `r`.
fn bvn_upper(dh: f64, dk: f64, r: f64) -> f64 {
    if dh == f64::INFINITY || dk == f64::INFINITY {
        return 0.0;
    }
    if dh == f64::NEG_INFINITY {
        return if dk == f64::NEG_INFINITY { 1.0 } else { std_cdf(-dk) };
    }
    if dk == f64::NEG_INFINITY {
        return std_cdf(-dh);
    }

    let rule = gauss_legendre_rule();
    let h = dh;
    let mut k = dk;
    let mut hk = h * k;
    let mut bvn = 0.0;

    if r.abs() <= 0.925 {
        if r.abs() > 0.0 {
            let hs = 0.5 * (h * h + k * k);
            let asr = r.asin();
            for &(x, w) in rule.iter() {
                let sn = (0.5 * asr * (x + 1.0)).sin();
                bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
            }
            bvn *= asr / (4.0 * PI);
        }
        bvn + std_cdf(-h) * std_cdf(-k)
    } else {
        if r < 0.0 {
            k = -k;
            hk = -hk;
        }
        if r.abs() < 1.0 {
            let a_sq = (1.0 - r) * (1.0 + r);
            let mut a = a_sq.sqrt();
            let b_sq = (h - k) * (h - k);
            let c = (4.0 - hk) / 8.0;
            let d = (12.0 - hk) / 16.0;
            let asr = -0.5 * (b_sq / a_sq + hk);
            if asr > -100.0 {
                bvn = a
                    * asr.exp()
                    * (1.0 - c * (b_sq - a_sq) * (1.0 - d * b_sq / 5.0) / 3.0
                        + c * d * a_sq * a_sq / 5.0);
            }
            if -hk < 100.0 {
                let b = b_sq.sqrt();
                bvn -= (-0.5 * hk).exp()
                    * SQRT_2PI
                    * std_cdf(-b / a)
                    * b
                    * (1.0 - c * b_sq * (1.0 - d * b_sq / 5.0) / 3.0);
            }
            a *= 0.5;
            for &(x, w) in rule.iter() {
                let xs = (a * (x + 1.0)) * (a * (x + 1.0));
                let rs = (1.0 - xs).sqrt();
                let asr = -0.5 * (b_sq / xs + hk);
                if asr > -100.0 {
                    bvn += a
                        * w
                        * asr.exp()
                        * ((-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs
                            - (1.0 + c * xs * (1.0 + d * xs)));
                }
            }
            bvn = -bvn / (2.0 * PI);
        }
        if r > 0.0 {
            bvn += std_cdf(-h.max(k));
        } else {
            bvn = -bvn;
            if k > h {
                bvn += std_cdf(k) - std_cdf(h);
            }
        }
        bvn.clamp(0.0, 1.0)
    }
}

// ----------------------------------------------------------------------------
// Truncated moments
// ----------------------------------------------------------------------------

/// First and second moments of a standard normal conditioned on the sign
/// event `y = 1[eps > -eta]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TruncatedMoments {
    /// `E[eps | y]`
    pub mean: f64,
    /// `E[eps^2 | y]`
    pub second_moment: f64,
    /// Set when `|eta|` exceeded the overflow guard and was clamped.
    pub clamped: bool,
}

/// Conditional moments of `eps ~ N(0,1)` given the binary outcome of
/// `1[eps > -eta]`.
///
/// `mean = phi(eta) (y - Phi(eta)) / (Phi(eta)(1 - Phi(eta)))` and
/// `second = 1 - eta * mean`, evaluated through log-domain Mills ratios.
pub fn trunc_moments(eta: f64, y: bool) -> TruncatedMoments {
    let clamped = eta.abs() > ETA_GUARD;
    let eta = eta.clamp(-ETA_GUARD, ETA_GUARD);
    let sign = if y { 1.0 } else { -1.0 };
    // mean = sign * phi(eta) / Phi(sign * eta)
    let mean = sign * (log_std_pdf(eta) - log_std_cdf(sign * eta)).exp();
    TruncatedMoments {
        mean,
        second_moment: 1.0 - eta * mean,
        clamped,
    }
}

/// `E[eps^2 | a < eps < b]` for a standard normal; either bound may be
/// infinite.
pub fn interval_second_moment(a: f64, b: f64) -> Result<f64> {
    if !(a < b) {
        return Err(PxError::Domain(format!("need a < b, got [{a}, {b}]")));
    }
    // Evaluate the interval mass in whichever tail keeps both CDFs small.
    let mass = if b == f64::INFINITY {
        std_cdf(-a)
    } else if a == f64::NEG_INFINITY {
        std_cdf(b)
    } else if a + b > 0.0 {
        std_cdf(-a) - std_cdf(-b)
    } else {
        std_cdf(b) - std_cdf(a)
    };
    if !(mass > 1e-300) {
        return Err(PxError::Degenerate(format!(
            "interval [{a}, {b}] has vanishing mass"
        )));
    }
    let lo = if a.is_finite() { a * std_pdf(a) } else { 0.0 };
    let hi = if b.is_finite() { b * std_pdf(b) } else { 0.0 };
    Ok(1.0 + (lo - hi) / mass)
}

// ----------------------------------------------------------------------------
// Pairwise conditional expectations
// ----------------------------------------------------------------------------

/// A pair of relations with their linear predictors, binary outcomes and the
/// latent correlation between their errors.
#[derive(Debug, Clone, Copy)]
pub struct PairObservation {
    pub eta1: f64,
    pub eta2: f64,
    pub y1: bool,
    pub y2: bool,
    pub rho: f64,
}

impl PairObservation {
    fn signs(&self) -> (f64, f64) {
        (
            if self.y1 { 1.0 } else { -1.0 },
            if self.y2 { 1.0 } else { -1.0 },
        )
    }
}

/// `E[eps1 eps2 | y1, y2]` for bivariate standard normal errors with
/// correlation `rho`, conditioning on the two sign events only.
///
/// At `rho = 0` this reduces exactly to the product of the univariate
/// truncated means. The closed form follows from integrating the doubly
/// truncated bivariate normal; the sign-flip convention folds all four
/// outcome combinations into one orthant, and the cross-density term carries
/// the outcome product sign back out.
pub fn pair_expectation(obs: &PairObservation) -> Result<f64> {
    let rho = obs.rho;
    if !(rho.abs() < 1.0) {
        return Err(PxError::Domain(format!("correlation {rho} outside (-1, 1)")));
    }
    let eta1 = obs.eta1.clamp(-ETA_GUARD, ETA_GUARD);
    let eta2 = obs.eta2.clamp(-ETA_GUARD, ETA_GUARD);
    if rho == 0.0 {
        return Ok(trunc_moments(eta1, obs.y1).mean * trunc_moments(eta2, obs.y2).mean);
    }
    let (s1, s2) = obs.signs();
    let eb1 = s1 * eta1;
    let eb2 = s2 * eta2;
    let rb = s1 * s2 * rho;

    // Orthant mass of the sign-flipped pair.
    let mass = bivariate_cdf(eb1, eb2, rb)?;
    if !(mass > 1e-300) {
        return Err(PxError::Degenerate(format!(
            "joint outcome has vanishing probability (eta = ({}, {}), y = ({}, {}), rho = {rho})",
            obs.eta1, obs.eta2, obs.y1, obs.y2
        )));
    }

    let s = (1.0 - rho * rho).sqrt();
    let t1 = eb1 * std_pdf(eta1) * std_cdf((eb2 - rb * eb1) / s);
    let t2 = eb2 * std_pdf(eta2) * std_cdf((eb1 - rb * eb2) / s);
    let q = ((eta1 * eta1 + eta2 * eta2 - 2.0 * rho * eta1 * eta2) / (s * s)).max(0.0);
    let cross = s / SQRT_2PI * std_pdf(q.sqrt());
    Ok(rho * (1.0 - (t1 + t2) / mass) + s1 * s2 * cross / mass)
}

/// The `rho -> 1` limit of [`pair_expectation`], used as the upper anchor of
/// the linearization in the correlation update.
///
/// With perfectly correlated errors the pair collapses to a single variable;
/// the conditioning event becomes an interval (or, for incompatible outcomes,
/// a union handled by probability weighting).
pub fn pair_expectation_rho_one(obs: &PairObservation) -> f64 {
    let eta1 = obs.eta1.clamp(-ETA_GUARD, ETA_GUARD);
    let eta2 = obs.eta2.clamp(-ETA_GUARD, ETA_GUARD);
    match (obs.y1, obs.y2) {
        (true, true) => interval_second_moment((-eta1).max(-eta2), f64::INFINITY)
            .expect("one-sided interval within guard has positive mass"),
        (false, false) => interval_second_moment(f64::NEG_INFINITY, (-eta1).min(-eta2))
            .expect("one-sided interval within guard has positive mass"),
        _ => {
            // ep: predictor of the y=1 relation, em: of the y=0 relation.
            let (ep, em) = if obs.y1 { (eta1, eta2) } else { (eta2, eta1) };
            // Domains (-ep, inf) and (-inf, -em) overlap iff em < ep.
            if em < ep {
                match interval_second_moment(-ep, -em) {
                    Ok(v) => v,
                    Err(_) => disjoint_union_second_moment(ep, em),
                }
            } else {
                disjoint_union_second_moment(ep, em)
            }
        }
    }
}

/// Probability-weighted second moments over the union of the two one-sided
/// domains `(-ep, inf)` and `(-inf, -em)`.
fn disjoint_union_second_moment(ep: f64, em: f64) -> f64 {
    let upper = interval_second_moment(-ep, f64::INFINITY)
        .expect("one-sided interval within guard has positive mass");
    let lower = interval_second_moment(f64::NEG_INFINITY, -em)
        .expect("one-sided interval within guard has positive mass");
    upper * std_cdf(ep) + lower * std_cdf(-em)
}

/// Covariance between two binary outcomes whose latent errors share an actor:
/// `cov[y1, y2] = P(eps1 > -mu1, eps2 > -mu2; rho) - Phi(mu1) Phi(mu2)`.
pub fn observed_covariance(mu1: f64, mu2: f64, rho: f64) -> f64 {
    let joint = bivariate_cdf(mu1, mu2, rho).expect("|rho| < 1 by model constraint");
    joint - std_cdf(mu1) * std_cdf(mu2)
}
