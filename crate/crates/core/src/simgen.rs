//! Seeded synthetic streams with injected covariance changes.
//!
//! Column t is drawn as x_t = A_t z_t + σ ε_t, where A_t A_tᵀ is the
//! covariance in force at t and z_t, ε_t are unit-variance innovations. An
//! event with change time τ is active for τ < t ≤ end. Active events are
//! applied in listed order, each one transforming the covariance left by the
//! previous ones.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::state::StateMatrix;

/// Smallest eigenvalue accepted for a covariance specification.
pub const SPD_TOLERANCE: f64 = 1e-10;

pub const DEFAULT_NOISE_SIGMA: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CovSpec {
    Identity,
    Toeplitz { rho: f64 },
    Matrix { values: Vec<Vec<f64>> },
}

impl Default for CovSpec {
    fn default() -> Self {
        CovSpec::Identity
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    /// Multiplies the listed channels (1-based) by `factor`, so their
    /// variances grow by factor².
    ScaleSubset { channels: Vec<usize>, factor: f64 },
    /// Stretches the covariance along `direction`: for an identity base the
    /// result is I + strength·vvᵀ with v the normalized direction.
    Spike { direction: Vec<f64>, strength: f64 },
    /// Replaces the covariance outright.
    FullReplace { matrix: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub tau: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub end: Option<usize>,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl Event {
    pub fn is_active(&self, t: usize, total: usize) -> bool {
        t > self.tau && t <= self.end.unwrap_or(total)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Marginal {
    #[default]
    Gaussian,
    /// Uniform on [−√3, √3]: unit variance, fourth moment 9/5.
    Uniform,
}

fn default_noise() -> f64 {
    DEFAULT_NOISE_SIGMA
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub p: usize,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(default)]
    pub base_cov: CovSpec,
    #[serde(default)]
    pub events: Vec<Event>,
    #[serde(default = "default_noise")]
    pub noise_sigma: f64,
    pub seed: u64,
    #[serde(default)]
    pub marginal: Marginal,
    /// AR(1) coefficient of the innovations across columns; 0 gives i.i.d.
    #[serde(default)]
    pub ar_phi: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub channel_ids: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sample_rate_hz: Option<f64>,
}

impl Scenario {
    /// Identity base, no events, default noise.
    pub fn null(p: usize, t: usize, seed: u64) -> Self {
        Self {
            p,
            t,
            base_cov: CovSpec::Identity,
            events: Vec::new(),
            noise_sigma: DEFAULT_NOISE_SIGMA,
            seed,
            marginal: Marginal::Gaussian,
            ar_phi: 0.0,
            channel_ids: None,
            sample_rate_hz: None,
        }
    }

    pub fn with_event(mut self, event: Event) -> Self {
        self.events.push(event);
        self
    }

    pub fn validate(&self) -> Result<()> {
        let (p, t) = (self.p, self.t);
        if p < 2 || t < 2 {
            return Err(Error::Scenario(format!("need p ≥ 2 and T ≥ 2, got p={p}, T={t}")));
        }
        if !(self.noise_sigma.is_finite() && self.noise_sigma >= 0.0) {
            return Err(Error::Scenario(format!("noise_sigma must be non-negative, got {}", self.noise_sigma)));
        }
        if !(self.ar_phi.is_finite() && self.ar_phi.abs() < 1.0) {
            return Err(Error::Scenario(format!("ar_phi must lie in (-1, 1), got {}", self.ar_phi)));
        }
        if let Some(ids) = &self.channel_ids {
            if ids.len() != p {
                return Err(Error::Scenario(format!("{} channel ids for p={p}", ids.len())));
            }
        }
        if let Some(hz) = self.sample_rate_hz {
            if !(hz.is_finite() && hz > 0.0) {
                return Err(Error::Scenario(format!("sample_rate_hz must be positive, got {hz}")));
            }
        }
        for (n, e) in self.events.iter().enumerate() {
            let n = n + 1;
            if e.tau < 1 || e.tau >= t {
                return Err(Error::Scenario(format!("event {n}: tau={} outside [1, T)", e.tau)));
            }
            if let Some(end) = e.end {
                if end <= e.tau || end > t {
                    return Err(Error::Scenario(format!("event {n}: end={end} outside (tau, T]")));
                }
            }
            match &e.kind {
                EventKind::ScaleSubset { channels, factor } => {
                    if !(factor.is_finite() && *factor > 0.0) {
                        return Err(Error::Scenario(format!("event {n}: factor must be positive")));
                    }
                    if let Some(c) = channels.iter().find(|&&c| c < 1 || c > p) {
                        return Err(Error::Scenario(format!("event {n}: channel {c} outside 1..={p}")));
                    }
                }
                EventKind::Spike { direction, strength } => {
                    if direction.len() != p {
                        return Err(Error::Scenario(format!("event {n}: direction has length {}", direction.len())));
                    }
                    let norm = direction.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if !(norm.is_finite() && norm > 0.0) {
                        return Err(Error::Scenario(format!("event {n}: direction must be non-zero")));
                    }
                    if !(strength.is_finite() && *strength > -1.0) {
                        return Err(Error::Scenario(format!("event {n}: strength must exceed -1")));
                    }
                }
                EventKind::FullReplace { matrix } => {
                    check_spd(&matrix_from_rows(matrix, p)?)
                        .map_err(|e| Error::Scenario(format!("event {n}: {}", message(e))))?;
                }
            }
        }
        Ok(())
    }

    /// Sorted sample indices where the active event set changes. A regime
    /// starting at change c covers columns c+1 onwards.
    fn regime_starts(&self) -> Vec<usize> {
        let mut cuts: Vec<usize> = self
            .events
            .iter()
            .flat_map(|e| std::iter::once(e.tau).chain(e.end.filter(|&end| end < self.t)))
            .collect();
        cuts.push(0);
        cuts.sort_unstable();
        cuts.dedup();
        cuts
    }

    /// Covariance in force at sample t (1-based).
    pub fn covariance_at(&self, t: usize) -> Result<DMatrix<f64>> {
        let mut cov = sample_spd(&self.base_cov, self.p)?;
        for e in self.events.iter().filter(|e| e.is_active(t, self.t)) {
            cov = apply_event(&cov, &e.kind, self.p)?;
        }
        Ok(cov)
    }
}

/// Change times of a generated record, in the order the events were listed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub change_times: Vec<usize>,
    pub cutoff_times: Vec<Option<usize>>,
    pub events: Vec<Event>,
}

fn message(e: Error) -> String {
    match e {
        Error::Scenario(m) => m,
        other => other.to_string(),
    }
}

fn matrix_from_rows(rows: &[Vec<f64>], p: usize) -> Result<DMatrix<f64>> {
    if rows.len() != p || rows.iter().any(|r| r.len() != p) {
        return Err(Error::Scenario(format!("covariance matrix must be {p}×{p}")));
    }
    Ok(DMatrix::from_fn(p, p, |i, j| rows[i][j]))
}

fn check_spd(m: &DMatrix<f64>) -> Result<()> {
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::Scenario("covariance has non-finite entries".into()));
    }
    let scale = m.iter().fold(0.0f64, |a, v| a.max(v.abs())).max(1.0);
    let asym = (m - m.transpose()).amax();
    if asym > 1e-12 * scale {
        return Err(Error::Scenario(format!("covariance is not symmetric (max asymmetry {asym:.3e})")));
    }
    let min = m.clone().symmetric_eigenvalues().min();
    if min <= SPD_TOLERANCE {
        return Err(Error::Scenario(format!(
            "covariance is not positive definite (min eigenvalue {min:.3e})"
        )));
    }
    Ok(())
}

/// Builds and checks a covariance specification.
pub fn sample_spd(spec: &CovSpec, p: usize) -> Result<DMatrix<f64>> {
    let m = match spec {
        CovSpec::Identity => DMatrix::identity(p, p),
        CovSpec::Toeplitz { rho } => {
            if !(rho.is_finite() && rho.abs() < 1.0) {
                return Err(Error::Scenario(format!("Toeplitz rho must lie in (-1, 1), got {rho}")));
            }
            DMatrix::from_fn(p, p, |i, j| rho.powi(i.abs_diff(j) as i32))
        }
        CovSpec::Matrix { values } => matrix_from_rows(values, p)?,
    };
    check_spd(&m)?;
    Ok(m)
}

fn apply_event(cov: &DMatrix<f64>, kind: &EventKind, p: usize) -> Result<DMatrix<f64>> {
    Ok(match kind {
        EventKind::ScaleSubset { channels, factor } => {
            let mut d = DVector::from_element(p, 1.0);
            for &c in channels {
                d[c - 1] = *factor;
            }
            DMatrix::from_fn(p, p, |i, j| d[i] * cov[(i, j)] * d[j])
        }
        EventKind::Spike { direction, strength } => {
            let v = DVector::from_column_slice(direction).normalize();
            let a = DMatrix::identity(p, p) + (v.clone() * v.transpose()) * ((1.0 + strength).sqrt() - 1.0);
            &a * cov * a.transpose()
        }
        EventKind::FullReplace { matrix } => matrix_from_rows(matrix, p)?,
    })
}

fn innovation(rng: &mut ChaCha8Rng, marginal: Marginal) -> f64 {
    match marginal {
        Marginal::Gaussian => StandardNormal.sample(rng),
        Marginal::Uniform => 3f64.sqrt() * rng.random_range(-1.0..1.0),
    }
}

/// Draws the record and its ground truth. One RNG stream per scenario; per
/// column the p innovations are drawn first, then the p noise terms.
pub fn generate(scenario: &Scenario) -> Result<(StateMatrix, GroundTruth)> {
    scenario.validate()?;
    let (p, total) = (scenario.p, scenario.t);
    let starts = scenario.regime_starts();
    let factors = starts
        .iter()
        .map(|&c| {
            let cov = scenario.covariance_at(c + 1)?;
            check_spd(&cov).map_err(|e| Error::Scenario(format!("regime after t={c}: {}", message(e))))?;
            cov.cholesky()
                .map(|ch| ch.l())
                .ok_or_else(|| Error::Scenario(format!("regime after t={c}: Cholesky failed")))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut rng = ChaCha8Rng::seed_from_u64(scenario.seed);
    let phi = scenario.ar_phi;
    let innovation_scale = (1.0 - phi * phi).sqrt();
    let mut z = DVector::<f64>::zeros(p);
    let mut values = DMatrix::<f64>::zeros(p, total);
    let mut regime = 0;
    for j in 0..total {
        let t = j + 1;
        while regime + 1 < starts.len() && t > starts[regime + 1] {
            regime += 1;
        }
        for i in 0..p {
            let e = innovation(&mut rng, scenario.marginal);
            z[i] = if j == 0 { e } else { phi * z[i] + innovation_scale * e };
        }
        let x = &factors[regime] * &z;
        for i in 0..p {
            let noise: f64 = StandardNormal.sample(&mut rng);
            values[(i, j)] = x[i] + scenario.noise_sigma * noise;
        }
    }

    let mut state = StateMatrix::from_matrix(values)?;
    if let Some(ids) = &scenario.channel_ids {
        state = state.with_channel_ids(ids.clone())?;
    }
    if let Some(hz) = scenario.sample_rate_hz {
        state = state.with_sample_rate(hz)?;
    }
    let truth = GroundTruth {
        change_times: scenario.events.iter().map(|e| e.tau).collect(),
        cutoff_times: scenario.events.iter().map(|e| e.end).collect(),
        events: scenario.events.clone(),
    };
    Ok((state, truth))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::specstats::sample_covariance;

    fn scale_event(tau: usize, channels: Vec<usize>, factor: f64) -> Event {
        Event {
            tau,
            end: None,
            kind: EventKind::ScaleSubset { channels, factor },
        }
    }

    #[test]
    fn identity_and_toeplitz() {
        assert_eq!(sample_spd(&CovSpec::Identity, 5).unwrap(), DMatrix::identity(5, 5));
        assert_eq!(sample_spd(&CovSpec::Toeplitz { rho: 0.0 }, 4).unwrap(), DMatrix::identity(4, 4));
        let t = sample_spd(&CovSpec::Toeplitz { rho: 0.5 }, 3).unwrap();
        let expected = DMatrix::from_row_slice(3, 3, &[1.0, 0.5, 0.25, 0.5, 1.0, 0.5, 0.25, 0.5, 1.0]);
        assert_eq!(t, expected);
        assert_eq!(sample_spd(&CovSpec::Toeplitz { rho: 1.0 }, 3).unwrap_err().code(), "scenario");
    }

    #[test]
    fn rejects_non_spd_matrix() {
        let spec = CovSpec::Matrix {
            values: vec![vec![1.0, 2.0], vec![2.0, 1.0]],
        };
        assert_eq!(sample_spd(&spec, 2).unwrap_err().code(), "scenario");
        let spec = CovSpec::Matrix {
            values: vec![vec![1.0, 0.1], vec![0.0, 1.0]],
        };
        assert!(sample_spd(&spec, 2).unwrap_err().to_string().contains("symmetric"));
    }

    #[test]
    fn identity_moments() {
        let (x, _) = generate(&Scenario::null(20, 10_000, 11)).unwrap();
        let s = sample_covariance(x.values().as_view()).unwrap();
        let dev = (s - DMatrix::<f64>::identity(20, 20)).amax();
        assert!(dev < 0.1, "max deviation {dev}");
    }

    #[test]
    fn deterministic_per_seed() {
        let sc = Scenario::null(4, 300, 7).with_event(scale_event(150, vec![1, 2], 3.0));
        let (a, ta) = generate(&sc).unwrap();
        let (b, tb) = generate(&sc).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let (c, _) = generate(&Scenario { seed: 8, ..sc }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn change_times_match_events() {
        let sc = Scenario::null(4, 1000, 1)
            .with_event(scale_event(600, vec![3], 2.0))
            .with_event(Event {
                tau: 250,
                end: Some(450),
                kind: EventKind::Spike {
                    direction: vec![1.0; 4],
                    strength: 3.0,
                },
            });
        let (_, truth) = generate(&sc).unwrap();
        assert_eq!(truth.change_times, vec![600, 250]);
        assert_eq!(truth.cutoff_times, vec![None, Some(450)]);
    }

    #[test]
    fn event_activity_window() {
        let e = Event {
            tau: 10,
            end: Some(20),
            kind: EventKind::ScaleSubset {
                channels: vec![1],
                factor: 2.0,
            },
        };
        assert!(!e.is_active(10, 100));
        assert!(e.is_active(11, 100));
        assert!(e.is_active(20, 100));
        assert!(!e.is_active(21, 100));
    }

    #[test]
    fn events_compose_in_order() {
        let sc = Scenario::null(3, 100, 0)
            .with_event(scale_event(10, vec![1], 2.0))
            .with_event(scale_event(20, vec![1, 2], 3.0));
        let c = sc.covariance_at(50).unwrap();
        assert_eq!(c[(0, 0)], 36.0);
        assert_eq!(c[(1, 1)], 9.0);
        assert_eq!(c[(2, 2)], 1.0);
        assert_eq!(sc.covariance_at(15).unwrap()[(0, 0)], 4.0);
        assert_eq!(sc.covariance_at(10).unwrap(), DMatrix::identity(3, 3));
    }

    #[test]
    fn spike_on_identity() {
        let sc = Scenario::null(2, 10, 0).with_event(Event {
            tau: 1,
            end: None,
            kind: EventKind::Spike {
                direction: vec![1.0, 1.0],
                strength: 4.0,
            },
        });
        let c = sc.covariance_at(5).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[3.0, 2.0, 2.0, 3.0]);
        assert!((c - expected).amax() < 1e-12);
    }

    #[test]
    fn scaled_regime_variance() {
        let sc = Scenario::null(3, 20_000, 5).with_event(scale_event(10_000, vec![2], 3.0));
        let (x, _) = generate(&sc).unwrap();
        let after = sample_covariance(x.columns(10_001, 20_000)).unwrap();
        let before = sample_covariance(x.columns(1, 10_000)).unwrap();
        assert!((after[(1, 1)] - 9.0).abs() < 0.5);
        assert!((before[(1, 1)] - 1.0).abs() < 0.06);
        assert!((after[(0, 0)] - 1.0).abs() < 0.06);
    }

    #[test]
    fn uniform_and_ar_have_unit_variance() {
        let sc = Scenario {
            marginal: Marginal::Uniform,
            ar_phi: 0.5,
            ..Scenario::null(3, 40_000, 9)
        };
        let (x, _) = generate(&sc).unwrap();
        let s = sample_covariance(x.values().as_view()).unwrap();
        for i in 0..3 {
            assert!((s[(i, i)] - 1.0).abs() < 0.05, "{}", s[(i, i)]);
        }
        let r = x.row(0);
        let lag1 = r.windows(2).map(|w| w[0] * w[1]).sum::<f64>() / (r.len() - 1) as f64;
        assert!((lag1 - 0.5).abs() < 0.05, "lag-1 {lag1}");
    }

    #[test]
    fn validation_errors() {
        let bad = [
            Scenario::null(4, 100, 0).with_event(scale_event(0, vec![1], 2.0)),
            Scenario::null(4, 100, 0).with_event(scale_event(100, vec![1], 2.0)),
            Scenario::null(4, 100, 0).with_event(scale_event(50, vec![5], 2.0)),
            Scenario::null(4, 100, 0).with_event(scale_event(50, vec![1], 0.0)),
            Scenario {
                ar_phi: 1.0,
                ..Scenario::null(4, 100, 0)
            },
            Scenario::null(1, 100, 0),
        ];
        for sc in &bad {
            assert_eq!(generate(sc).unwrap_err().code(), "scenario", "{sc:?}");
        }
    }

    #[test]
    fn json_shape() {
        let json = r#"{
            "p": 3, "T": 50, "seed": 4,
            "base_cov": {"kind": "toeplitz", "rho": 0.3},
            "events": [{"tau": 20, "end": 30, "kind": "scale_subset", "channels": [1, 3], "factor": 3.0}]
        }"#;
        let sc: Scenario = serde_json::from_str(json).unwrap();
        assert_eq!(sc.noise_sigma, DEFAULT_NOISE_SIGMA);
        assert_eq!(sc.events[0].end, Some(30));
        let back: Scenario = serde_json::from_str(&serde_json::to_string(&sc).unwrap()).unwrap();
        assert_eq!(back, sc);
        assert!(serde_json::from_str::<Scenario>(r#"{"p":3,"T":50,"seed":1,"bogus":1}"#).is_err());
    }
}
