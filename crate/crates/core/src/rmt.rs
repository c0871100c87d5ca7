//! Closed-form random-matrix laws for the standard Fisher matrix.
//!
//! Covers the limiting spectral distribution (density, CDF, support edges),
//! the centering and scaling constants of the CLT for tr{(F − I)²}, the
//! standardized statistic L, Gaussian quantiles for its rejection region, and
//! the Marčenko–Pastur upper edge used by the baseline detector.

use std::f64::consts::{PI, SQRT_2};

use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::quad;
use crate::specstats::FisherSpectrum;

/// Absolute tolerance for CDF quadrature.
const CDF_TOLERANCE: f64 = 1e-9;

/// Parameters of the Fisher LSD F_{y1,y2}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LsdParams {
    pub y1: f64,
    pub y2: f64,
    /// sqrt(y1 + y2 − y1·y2)
    pub h: f64,
    /// Lower support edge (1 − h)²/(1 − y2)².
    pub a: f64,
    /// Upper support edge (1 + h)²/(1 − y2)².
    pub b: f64,
    /// Atom at the origin, 1 − 1/y1 when y1 > 1, else 0.
    pub point_mass: f64,
}

/// Support edges and shape parameters of the Fisher LSD.
pub fn support_edges(y1: f64, y2: f64) -> Result<LsdParams> {
    if !(y1 > 0.0 && y1.is_finite()) {
        return Err(Error::Domain(format!("y1 must be positive, got {y1}")));
    }
    if !(y2 > 0.0 && y2 < 1.0) {
        return Err(Error::Domain(format!("y2 must lie in (0, 1), got {y2}")));
    }
    let h = (y1 + y2 - y1 * y2).sqrt();
    let denom = (1.0 - y2) * (1.0 - y2);
    Ok(LsdParams {
        y1,
        y2,
        h,
        a: (1.0 - h) * (1.0 - h) / denom,
        b: (1.0 + h) * (1.0 + h) / denom,
        point_mass: if y1 > 1.0 { 1.0 - 1.0 / y1 } else { 0.0 },
    })
}

/// Density of the continuous part of the LSD.
pub fn lsd_density(x: f64, params: &LsdParams) -> f64 {
    let LsdParams { y1, y2, a, b, .. } = *params;
    if !(x >= a && x <= b) || x <= 0.0 {
        return 0.0;
    }
    (1.0 - y2) * ((b - x) * (x - a)).sqrt() / (2.0 * PI * x * (y1 + y2 * x))
}

/// LSD cumulative distribution, including the atom at 0 when y1 > 1.
///
/// The continuous part is integrated after substituting x = a + (b − a)·sin²θ,
/// which removes the square-root behaviour at both edges.
pub fn lsd_cdf(x: f64, params: &LsdParams) -> f64 {
    if x < 0.0 {
        return 0.0;
    }
    if x >= params.b {
        return 1.0;
    }
    if x <= params.a {
        return params.point_mass;
    }
    let theta = ((x - params.a) / (params.b - params.a)).sqrt().asin();
    let continuous = quad::integrate(&|t| substituted_density(t, params), 0.0, theta, CDF_TOLERANCE);
    (params.point_mass + continuous).clamp(0.0, 1.0)
}

/// Density times dx/dθ under x = a + (b − a)·sin²θ.
fn substituted_density(theta: f64, params: &LsdParams) -> f64 {
    let LsdParams { y1, y2, a, b, .. } = *params;
    let (s, c) = theta.sin_cos();
    let x = a + (b - a) * s * s;
    let w = b - a;
    (1.0 - y2) * w * w * s * s * c * c / (PI * x * (y1 + y2 * x))
}

/// Centering and scaling constants for the CLT of tr{(F − I)²}.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CltConstants {
    /// F_{yτ,yT}(g) for g(x) = (x − 1)².
    pub fg: f64,
    pub mu_g: f64,
    pub nu_g: f64,
    pub y_tau: f64,
    pub y_t: f64,
    pub kappa: u8,
    pub beta1: f64,
    pub beta2: f64,
}

/// Evaluates F(g), μ_g and ν_g at the finite-sample ratios (yτ, yT).
pub fn clt_constants(y_tau: f64, y_t: f64, kappa: u8, beta1: f64, beta2: f64) -> Result<CltConstants> {
    if !(y_tau > 0.0 && y_tau.is_finite()) {
        return Err(Error::Domain(format!("y_tau must be positive, got {y_tau}")));
    }
    if !(y_t > 0.0 && y_t < 1.0) {
        return Err(Error::Domain(format!("y_T must lie in (0, 1), got {y_t}")));
    }
    if kappa != 1 && kappa != 2 {
        return Err(Error::Domain(format!("kappa must be 1 or 2, got {kappa}")));
    }
    let (y1, y2) = (y_tau, y_t);
    let k = f64::from(kappa);
    let h2 = y1 + y2 - y1 * y2;
    let q = 1.0 - y2;

    let fg = (y1 + y2 - y1 * y2 + y2 * y2 - y2.powi(3)) / q.powi(3);

    let mu_g = (k - 1.0) * (2.0 * h2 * y2 + h2 - 2.0 * y2.powi(3) + 3.0 * y2 * y2) / q.powi(4)
        + beta1 * y1 / q.powi(2)
        + beta2 * (-2.0 * y1 * y2 * y2 + 2.0 * y1 * y2 - 2.0 * y2.powi(3) + 3.0 * y2 * y2 + y2)
            / q.powi(3);

    let nu_g = k * (2.0 * h2 * h2 + 4.0 * h2 * (h2 - y2 * y2 + 2.0 * y2).powi(2)) / q.powi(8)
        + 4.0 * (beta1 * y1 + beta2 * y2) * (h2 - y2 * y2 + y2).powi(2) / q.powi(6);

    if !(nu_g > 0.0 && nu_g.is_finite()) {
        return Err(Error::Domain(format!(
            "limiting variance is not positive ({nu_g}) for beta1={beta1}, beta2={beta2}"
        )));
    }
    Ok(CltConstants {
        fg,
        mu_g,
        nu_g,
        y_tau,
        y_t,
        kappa,
        beta1,
        beta2,
    })
}

/// L = ν_g^{−1/2}·(tr{(F − I)²} − p·F(g) − μ_g).
pub fn statistic_l(spec: &FisherSpectrum, consts: &CltConstants) -> f64 {
    statistic_from_trace(spec.trace_sq_dev, spec.p(), consts)
}

/// L computed from a precomputed tr{(F − I)²}.
pub fn statistic_from_trace(trace_sq_dev: f64, p: usize, consts: &CltConstants) -> f64 {
    (trace_sq_dev - p as f64 * consts.fg - consts.mu_g) / consts.nu_g.sqrt()
}

/// Result of one two-sample covariance test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestOutcome {
    #[serde(rename = "L")]
    pub statistic: f64,
    pub threshold: f64,
    pub reject: bool,
    /// Sample index the test is attached to (1-based).
    pub position: usize,
}

impl TestOutcome {
    /// Rejects when |L| falls in the closed region |L| ≥ threshold.
    pub fn evaluate(statistic: f64, threshold: f64, position: usize) -> Self {
        Self {
            statistic,
            threshold,
            reject: statistic.abs() >= threshold,
            position,
        }
    }
}

/// Standard normal CDF.
pub fn gaussian_cdf(x: f64) -> f64 {
    0.5 * erfc(-x / SQRT_2)
}

/// Φ⁻¹(q): Acklam's rational approximation refined with one Halley step.
pub fn gaussian_quantile(q: f64) -> Result<f64> {
    if !(q > 0.0 && q < 1.0) {
        return Err(Error::Domain(format!("quantile level must lie in (0, 1), got {q}")));
    }
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_690e2,
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

    let tail = |r: f64| {
        let t = (-2.0 * r.ln()).sqrt();
        (((((C[0] * t + C[1]) * t + C[2]) * t + C[3]) * t + C[4]) * t + C[5])
            / ((((D[0] * t + D[1]) * t + D[2]) * t + D[3]) * t + 1.0)
    };
    let mut x = if q < P_LOW {
        tail(q)
    } else if q <= 1.0 - P_LOW {
        let u = q - 0.5;
        let r = u * u;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * u
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    } else {
        -tail(1.0 - q)
    };

    let e = gaussian_cdf(x) - q;
    let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    x -= u / (1.0 + 0.5 * x * u);
    Ok(x)
}

/// Upper edge (1 + √y)² of the Marčenko–Pastur law with unit variance.
pub fn mp_upper_edge(y: f64) -> f64 {
    debug_assert!(y >= 0.0);
    let r = 1.0 + y.sqrt();
    r * r
}
