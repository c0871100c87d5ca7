//! Monte Carlo checks of the null distribution and the spectral law.

use fisherwatch::rmt::{clt_constants, gaussian_cdf, gaussian_quantile, lsd_cdf, statistic_from_trace, support_edges};
use fisherwatch::specstats::{dimension_ratios, fisher_eigenvalues, normalize_rows, sample_covariance};
use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::artifacts::SCHEMA_VERSION;
use crate::failure::Failure;

pub const MIN_REPS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NullSetup {
    pub p: usize,
    pub n1: usize,
    pub n2: usize,
    pub reps: usize,
    pub alpha: f64,
    pub kappa: u8,
    pub beta1: f64,
    pub beta2: f64,
    pub esd_p: usize,
    pub esd_n1: usize,
    pub esd_n2: usize,
}

impl Default for NullSetup {
    fn default() -> Self {
        Self {
            p: 80,
            n1: 240,
            n2: 240,
            reps: 2000,
            alpha: 0.01,
            kappa: 2,
            beta1: 0.0,
            beta2: 0.0,
            esd_p: 200,
            esd_n1: 1000,
            esd_n2: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Moments {
    pub mean: f64,
    pub sd: f64,
    pub size: f64,
    pub ks_gaussian: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EdgeRates {
    pub b: f64,
    pub exceed_b: f64,
    pub exceed_1_05b: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EsdCheck {
    pub p: usize,
    pub n1: usize,
    pub n2: usize,
    pub y1: f64,
    pub y2: f64,
    pub ks: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub schema_version: String,
    pub seed: u64,
    pub setup: NullSetup,
    pub threshold: f64,
    /// L from raw sample covariances (equivalently, after whole-record
    /// standardization, which leaves Fisher spectra unchanged).
    pub statistic: Moments,
    /// L after standardizing each sub-sample with its own row statistics.
    pub statistic_window_normalized: Moments,
    pub largest_eigenvalue: EdgeRates,
    pub esd: EsdCheck,
}

fn gaussian(p: usize, n: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    DMatrix::from_fn(p, n, |_, _| StandardNormal.sample(rng))
}

/// Kolmogorov–Smirnov distance between a sample and a continuous CDF.
pub fn ks_distance(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut sorted = sample.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max)
}

fn moments(ls: &[f64], threshold: f64) -> Moments {
    let n = ls.len() as f64;
    let mean = ls.iter().sum::<f64>() / n;
    let sd = (ls.iter().map(|l| (l - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    Moments {
        mean,
        sd,
        size: ls.iter().filter(|l| l.abs() >= threshold).count() as f64 / n,
        ks_gaussian: ks_distance(ls, gaussian_cdf),
    }
}

struct Rep {
    l: f64,
    l_window: f64,
    largest: f64,
}

/// Independent RNG stream for replicate `rep` under `seed`.
pub fn rep_rng(seed: u64, rep: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    rng
}

pub fn null_calibration(setup: &NullSetup, seed: u64) -> Result<Calibration, Failure> {
    if setup.reps < MIN_REPS {
        return Err(Failure::input(
            "reps",
            format!("--reps must be at least {MIN_REPS}, got {}", setup.reps),
        ));
    }
    let (p, n1, n2) = (setup.p, setup.n1, setup.n2);
    let (y1, y2) = dimension_ratios(p, n1, n2)?;
    let consts = clt_constants(y1, y2, setup.kappa, setup.beta1, setup.beta2)?;
    let threshold = gaussian_quantile(1.0 - setup.alpha / 2.0)?;
    let b = support_edges(y1, y2)?.b;

    let reps = (0..setup.reps)
        .into_par_iter()
        .map(|rep| -> Result<Rep, Failure> {
            let mut rng = rep_rng(seed, rep as u64);
            let x1 = gaussian(p, n1, &mut rng);
            let x2 = gaussian(p, n2, &mut rng);
            let s1 = sample_covariance(x1.as_view())?;
            let s2 = sample_covariance(x2.as_view())?;
            let spec = fisher_eigenvalues(&s1, &s2, n1, n2)?;
            let w1 = sample_covariance(normalize_rows(x1.as_view())?.as_view())?;
            let w2 = sample_covariance(normalize_rows(x2.as_view())?.as_view())?;
            let window = fisher_eigenvalues(&w1, &w2, n1, n2)?;
            Ok(Rep {
                l: statistic_from_trace(spec.trace_sq_dev, p, &consts),
                l_window: statistic_from_trace(window.trace_sq_dev, p, &consts),
                largest: spec.largest(),
            })
        })
        .collect::<Vec<_>>()
        .into_iter()
        .collect::<Result<Vec<_>, _>>()?;

    let ls: Vec<f64> = reps.iter().map(|r| r.l).collect();
    let lw: Vec<f64> = reps.iter().map(|r| r.l_window).collect();
    let rate = |cut: f64| reps.iter().filter(|r| r.largest > cut).count() as f64 / reps.len() as f64;

    Ok(Calibration {
        schema_version: SCHEMA_VERSION.to_string(),
        seed,
        setup: *setup,
        threshold,
        statistic: moments(&ls, threshold),
        statistic_window_normalized: moments(&lw, threshold),
        largest_eigenvalue: EdgeRates {
            b,
            exceed_b: rate(b),
            exceed_1_05b: rate(1.05 * b),
        },
        esd: esd_check(setup.esd_p, setup.esd_n1, setup.esd_n2, seed)?,
    })
}

/// KS distance between one simulated Fisher ESD and the limiting CDF.
pub fn esd_check(p: usize, n1: usize, n2: usize, seed: u64) -> Result<EsdCheck, Failure> {
    let mut rng = rep_rng(seed, u64::MAX);
    let x1 = gaussian(p, n1, &mut rng);
    let x2 = gaussian(p, n2, &mut rng);
    let s1 = sample_covariance(x1.as_view())?;
    let s2 = sample_covariance(x2.as_view())?;
    let spec = fisher_eigenvalues(&s1, &s2, n1, n2)?;
    let params = support_edges(spec.y_tau, spec.y_t)?;
    Ok(EsdCheck {
        p,
        n1,
        n2,
        y1: spec.y_tau,
        y2: spec.y_t,
        ks: ks_distance(&spec.eigenvalues, |x| lsd_cdf(x, &params)),
    })
}
