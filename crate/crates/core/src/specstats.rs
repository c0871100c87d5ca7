//! Per-window spectral computations: row normalization, unbiased sample
//! covariances, and the spectrum of the Fisher matrix F = S1·S2⁻¹.
//!
//! F is never formed explicitly. With S2 = LLᵀ, F is similar to the
//! symmetric matrix C = L⁻¹·S1·L⁻ᵀ, so its eigenvalues are those of C and
//! tr{(F − I)²} = ‖C − I‖²_F.

use nalgebra::{Cholesky, DMatrix, DMatrixView, Dyn};

use crate::config::Normalization;
use crate::error::{Error, Result};
use crate::state::StateMatrix;

/// Relative tolerance on Cholesky pivots of S2 (against its largest diagonal entry).
pub const PIVOT_TOLERANCE: f64 = 1e-10;

/// Standardizes each row to sample mean 0 and unbiased sample variance 1.
pub fn normalize_rows(segment: DMatrixView<'_, f64>) -> Result<DMatrix<f64>> {
    let (p, n) = segment.shape();
    if n < 2 {
        return Err(Error::Shape(format!("normalization needs at least 2 samples, got {n}")));
    }
    let mut out = DMatrix::zeros(p, n);
    for i in 0..p {
        let row = segment.row(i);
        let mean = row.iter().sum::<f64>() / n as f64;
        let ss: f64 = row.iter().map(|v| (v - mean) * (v - mean)).sum();
        let var = ss / (n - 1) as f64;
        let scale = row.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if var <= 0.0 || var.sqrt() <= 1e-13 * scale {
            return Err(Error::DegenerateChannel {
                row: i + 1,
                context: None,
            });
        }
        let sd = var.sqrt();
        for j in 0..n {
            out[(i, j)] = (segment[(i, j)] - mean) / sd;
        }
    }
    Ok(out)
}

/// Standardizes every channel over the whole record.
pub fn normalize_record(x: &StateMatrix) -> Result<StateMatrix> {
    let values = normalize_rows(x.values().as_view())?;
    Ok(x.replace_values(values))
}

/// Unbiased sample covariance (divisor n − 1) with the sample mean removed.
/// The result is exactly symmetric.
pub fn sample_covariance(x: DMatrixView<'_, f64>) -> Result<DMatrix<f64>> {
    let (p, n) = x.shape();
    if n < 2 {
        return Err(Error::Shape(format!("covariance needs at least 2 samples, got {n}")));
    }
    let mean = x.column_mean();
    let mut centered = x.into_owned();
    for mut col in centered.column_iter_mut() {
        col -= &mean;
    }
    let mut s = &centered * centered.transpose();
    s /= (n - 1) as f64;
    for j in 0..p {
        for i in (j + 1)..p {
            s[(j, i)] = s[(i, j)];
        }
    }
    Ok(s)
}

/// Eigenvalues of F = S1·S2⁻¹ for one window, with its dimension ratios.
#[derive(Debug, Clone, PartialEq)]
pub struct FisherSpectrum {
    /// Sorted descending; all ≥ 0.
    pub eigenvalues: Vec<f64>,
    /// p / (n1 − 1)
    pub y_tau: f64,
    /// p / (n2 − 1), in (0, 1)
    pub y_t: f64,
    /// tr{(F − I)²} = Σ(λᵢ − 1)²
    pub trace_sq_dev: f64,
}

impl FisherSpectrum {
    pub fn p(&self) -> usize {
        self.eigenvalues.len()
    }

    /// λ₁, the largest eigenvalue.
    pub fn largest(&self) -> f64 {
        self.eigenvalues[0]
    }
}

/// Largest eigenvalue of a Fisher spectrum.
pub fn largest_eigenvalue(spec: &FisherSpectrum) -> f64 {
    spec.largest()
}

/// Dimension ratios (p/(n1−1), p/(n2−1)), requiring the second to be below 1.
pub fn dimension_ratios(p: usize, n1: usize, n2: usize) -> Result<(f64, f64)> {
    if n1 < 2 || n2 < 2 {
        return Err(Error::Shape(format!("sub-sample sizes must be at least 2, got ({n1}, {n2})")));
    }
    let y_tau = p as f64 / (n1 - 1) as f64;
    let y_t = p as f64 / (n2 - 1) as f64;
    if y_t >= 1.0 {
        return Err(Error::Domain(format!(
            "p/(n2-1) = {y_t} must be < 1 (n2={n2}, p={p})"
        )));
    }
    Ok((y_tau, y_t))
}

/// Spectrum of S1·S2⁻¹ via the generalized symmetric-definite problem
/// S1·v = λ·S2·v. `n1` and `n2` are the sub-sample sizes behind S1 and S2.
pub fn fisher_eigenvalues(
    s1: &DMatrix<f64>,
    s2: &DMatrix<f64>,
    n1: usize,
    n2: usize,
) -> Result<FisherSpectrum> {
    let p = check_pair(s1, s2)?;
    let (y_tau, y_t) = dimension_ratios(p, n1, n2)?;
    let c = reduced_matrix(s1, s2)?;
    let mut eigenvalues: Vec<f64> = c
        .symmetric_eigenvalues()
        .iter()
        .map(|&l| l.max(0.0))
        .collect();
    eigenvalues.sort_by(|a, b| b.total_cmp(a));
    let trace_sq_dev = eigenvalues.iter().map(|l| (l - 1.0) * (l - 1.0)).sum();
    Ok(FisherSpectrum {
        eigenvalues,
        y_tau,
        y_t,
        trace_sq_dev,
    })
}

/// tr{(F − I)²} without an eigendecomposition: one Cholesky factorization and
/// two triangular solves.
pub fn fisher_trace_sq_dev(s1: &DMatrix<f64>, s2: &DMatrix<f64>) -> Result<f64> {
    check_pair(s1, s2)?;
    let mut c = reduced_matrix(s1, s2)?;
    for i in 0..c.nrows() {
        c[(i, i)] -= 1.0;
    }
    Ok(c.norm_squared())
}

fn check_pair(s1: &DMatrix<f64>, s2: &DMatrix<f64>) -> Result<usize> {
    let p = s1.nrows();
    if p == 0 || !s1.is_square() || s2.shape() != s1.shape() {
        return Err(Error::Shape(format!(
            "covariances must be square and equal-sized, got {:?} and {:?}",
            s1.shape(),
            s2.shape()
        )));
    }
    Ok(p)
}

/// C = L⁻¹·S1·L⁻ᵀ with S2 = LLᵀ, symmetrized.
fn reduced_matrix(s1: &DMatrix<f64>, s2: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let l = checked_cholesky(s2)?.unpack();
    let left = l
        .solve_lower_triangular(s1)
        .ok_or_else(|| singular(0.0))?;
    let mut c = l
        .solve_lower_triangular(&left.transpose())
        .ok_or_else(|| singular(0.0))?;
    let p = c.nrows();
    for j in 0..p {
        for i in (j + 1)..p {
            let v = 0.5 * (c[(i, j)] + c[(j, i)]);
            c[(i, j)] = v;
            c[(j, i)] = v;
        }
    }
    Ok(c)
}

fn checked_cholesky(s2: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    let max_diag = s2.diagonal().iter().fold(0.0f64, |m, v| m.max(*v));
    if !(max_diag > 0.0) {
        return Err(singular(0.0));
    }
    let chol = Cholesky::new(s2.clone()).ok_or_else(|| singular(0.0))?;
    let min_pivot = chol
        .l_dirty()
        .diagonal()
        .iter()
        .fold(f64::INFINITY, |m, v| m.min(v * v));
    let ratio = min_pivot / max_diag;
    if ratio < PIVOT_TOLERANCE {
        return Err(singular(ratio));
    }
    Ok(chol)
}

fn singular(pivot_ratio: f64) -> Error {
    Error::Singular {
        pivot_ratio,
        context: None,
    }
}

/// One sliding-window position split into two consecutive sub-samples.
#[derive(Debug, Clone)]
pub struct WindowSplit<'a> {
    /// 1-based position of the window's first column within its source.
    pub start: usize,
    pub n1: usize,
    pub n2: usize,
    first: DMatrixView<'a, f64>,
    second: DMatrixView<'a, f64>,
}

impl<'a> WindowSplit<'a> {
    /// The window of `n1 + n2` columns of `source` starting at 0-based column
    /// `offset`, split after its first `n1` columns.
    pub fn new(source: &'a DMatrixView<'_, f64>, offset: usize, n1: usize, n2: usize) -> Result<Self> {
        let p = source.nrows();
        if n1 < 2 {
            return Err(Error::Config(format!("first sub-sample needs at least 2 columns, got {n1}")));
        }
        if offset + n1 + n2 > source.ncols() {
            return Err(Error::Shape(format!(
                "window at column {} of width {} exceeds {} columns",
                offset + 1,
                n1 + n2,
                source.ncols()
            )));
        }
        if n2 < p + 1 {
            return Err(Error::Singular {
                pivot_ratio: 0.0,
                context: Some(format!("second sub-sample has {n2} columns for p={p}")),
            });
        }
        Ok(Self {
            start: offset + 1,
            n1,
            n2,
            first: source.columns(offset, n1),
            second: source.columns(offset + n1, n2),
        })
    }

    pub fn p(&self) -> usize {
        self.first.nrows()
    }

    pub fn first(&self) -> DMatrixView<'a, f64> {
        self.first
    }

    pub fn second(&self) -> DMatrixView<'a, f64> {
        self.second
    }

    /// The two sub-samples after optional window-local normalization.
    pub fn prepared(&self, mode: Normalization) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        Ok(match mode {
            Normalization::Window => (normalize_rows(self.first())?, normalize_rows(self.second())?),
            Normalization::Record => (self.first().into_owned(), self.second().into_owned()),
        })
    }

    /// Sample covariances (S1, S2) of the two prepared sub-samples.
    pub fn covariances(&self, mode: Normalization) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let (a, b) = self.prepared(mode)?;
        Ok((sample_covariance(a.as_view())?, sample_covariance(b.as_view())?))
    }

    pub fn spectrum(&self, mode: Normalization) -> Result<FisherSpectrum> {
        let (s1, s2) = self.covariances(mode)?;
        fisher_eigenvalues(&s1, &s2, self.n1, self.n2)
    }

    pub fn trace_sq_dev(&self, mode: Normalization) -> Result<f64> {
        let (s1, s2) = self.covariances(mode)?;
        fisher_trace_sq_dev(&s1, &s2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(p: usize, n: usize, seed: u64) -> DMatrix<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        DMatrix::from_fn(p, n, |_, _| StandardNormal.sample(&mut rng))
    }

    fn random_spd(p: usize, seed: u64) -> DMatrix<f64> {
        let x = gaussian(p, 3 * p, seed);
        sample_covariance(x.as_view()).unwrap()
    }

    /// Double-loop covariance, independent of the matrix-product path.
    fn brute_covariance(x: &DMatrix<f64>) -> DMatrix<f64> {
        let (p, n) = x.shape();
        let means: Vec<f64> = (0..p).map(|i| (0..n).map(|k| x[(i, k)]).sum::<f64>() / n as f64).collect();
        DMatrix::from_fn(p, p, |i, j| {
            (0..n).map(|k| (x[(i, k)] - means[i]) * (x[(j, k)] - means[j])).sum::<f64>() / (n - 1) as f64
        })
    }

    /// Real parts of the eigenvalues of the explicitly formed S1·S2⁻¹, descending.
    fn explicit_product_eigenvalues(s1: &DMatrix<f64>, s2: &DMatrix<f64>) -> Vec<f64> {
        let f = s1 * s2.clone().try_inverse().unwrap();
        let mut ev: Vec<f64> = f.complex_eigenvalues().iter().map(|z| z.re).collect();
        ev.sort_by(|a, b| b.total_cmp(a));
        ev
    }

    fn explicit_trace_sq_dev(s1: &DMatrix<f64>, s2: &DMatrix<f64>) -> f64 {
        let p = s1.nrows();
        let f = s1 * s2.clone().try_inverse().unwrap() - DMatrix::<f64>::identity(p, p);
        (&f * &f).trace()
    }

    #[test]
    fn normalize_simple_row() {
        let x = DMatrix::from_row_slice(1, 3, &[1.0, 2.0, 3.0]);
        let z = normalize_rows(x.as_view()).unwrap();
        assert_eq!(z.as_slice(), &[-1.0, 0.0, 1.0]);
    }

    #[test]
    fn normalize_constant_row_is_degenerate() {
        let x = DMatrix::from_row_slice(2, 3, &[1.0, 2.0, 4.0, 5.0, 5.0, 5.0]);
        let err = normalize_rows(x.as_view()).unwrap_err();
        assert_eq!(err, Error::DegenerateChannel { row: 2, context: None });
    }

    #[test]
    fn normalized_gaussian_moments() {
        let x = gaussian(3, 100, 11);
        let z = normalize_rows(x.as_view()).unwrap();
        for i in 0..3 {
            let r: Vec<f64> = z.row(i).iter().copied().collect();
            let mean = r.iter().sum::<f64>() / 100.0;
            let var = r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 99.0;
            assert!(mean.abs() < 1e-12);
            assert!((var - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn covariance_of_single_channel() {
        let x = DMatrix::from_row_slice(1, 3, &[-1.0, 0.0, 1.0]);
        let s = sample_covariance(x.as_view()).unwrap();
        assert_eq!(s[(0, 0)], 1.0);
    }

    #[test]
    fn covariance_matches_double_loop_oracle() {
        let x = gaussian(2, 200, 3);
        let s = sample_covariance(x.as_view()).unwrap();
        let oracle = brute_covariance(&x);
        assert!((&s - &oracle).amax() < 1e-12);
        assert!((&s - DMatrix::<f64>::identity(2, 2)).amax() < 0.5);
        let x = gaussian(7, 30, 4);
        let s = sample_covariance(x.as_view()).unwrap();
        assert!((&s - brute_covariance(&x)).amax() < 1e-12);
        assert_eq!((&s - s.transpose()).amax(), 0.0);
    }

    #[test]
    fn equal_matrices_give_unit_spectrum() {
        let s = random_spd(6, 1);
        let spec = fisher_eigenvalues(&s, &s, 50, 50).unwrap();
        for l in &spec.eigenvalues {
            assert!((l - 1.0).abs() < 1e-10);
        }
        assert!(spec.trace_sq_dev < 1e-18);
    }

    #[test]
    fn diagonal_pair() {
        let s1 = DMatrix::from_diagonal(&nalgebra::dvector![1.0, 2.0]);
        let s2 = DMatrix::identity(2, 2);
        let spec = fisher_eigenvalues(&s1, &s2, 100, 100).unwrap();
        assert!((spec.eigenvalues[0] - 2.0).abs() < 1e-14);
        assert!((spec.eigenvalues[1] - 1.0).abs() < 1e-14);
        assert!((spec.trace_sq_dev - 1.0).abs() < 1e-14);
        assert_eq!(largest_eigenvalue(&spec), spec.eigenvalues[0]);
    }

    #[test]
    fn largest_of_flat_spectrum() {
        let s = DMatrix::<f64>::identity(3, 3);
        let spec = fisher_eigenvalues(&s, &s, 10, 10).unwrap();
        assert!((spec.largest() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn generalized_route_matches_explicit_product() {
        for seed in 0..10 {
            let s1 = random_spd(20, 2 * seed);
            let s2 = random_spd(20, 2 * seed + 1);
            let spec = fisher_eigenvalues(&s1, &s2, 60, 60).unwrap();
            let oracle = explicit_product_eigenvalues(&s1, &s2);
            for (a, b) in spec.eigenvalues.iter().zip(&oracle) {
                assert!((a - b).abs() <= 1e-6 * b.abs().max(1e-12), "{a} vs {b}");
            }
            let direct = explicit_trace_sq_dev(&s1, &s2);
            assert!((spec.trace_sq_dev - direct).abs() <= 1e-8 * direct);
            let fast = fisher_trace_sq_dev(&s1, &s2).unwrap();
            assert!((fast - direct).abs() <= 1e-8 * direct);
        }
    }

    #[test]
    fn scale_equivariance() {
        let s1 = random_spd(8, 5);
        let s2 = random_spd(8, 6);
        let base = fisher_eigenvalues(&s1, &s2, 30, 30).unwrap();
        for c in [1e-3, 0.5, 7.0, 1e4] {
            let scaled = fisher_eigenvalues(&(&s1 * c), &(&s2 * c), 30, 30).unwrap();
            for (a, b) in base.eigenvalues.iter().zip(&scaled.eigenvalues) {
                assert!((a - b).abs() < 1e-10 * a.max(1.0));
            }
        }
    }

    #[test]
    fn rank_deficient_first_sample_has_zero_eigenvalues() {
        let (p, n1, n2) = (12, 8, 30);
        let s1 = sample_covariance(gaussian(p, n1, 21).as_view()).unwrap();
        let s2 = sample_covariance(gaussian(p, n2, 22).as_view()).unwrap();
        let spec = fisher_eigenvalues(&s1, &s2, n1, n2).unwrap();
        let zeros = spec.eigenvalues.iter().filter(|l| l.abs() < 1e-8).count();
        assert_eq!(zeros, p - (n1 - 1));
        assert!(spec.eigenvalues.iter().all(|l| *l >= 0.0));
    }

    #[test]
    fn singular_second_sample() {
        let s1 = DMatrix::<f64>::identity(3, 3);
        let s2 = sample_covariance(gaussian(3, 3, 9).as_view()).unwrap();
        let err = fisher_eigenvalues(&s1, &s2, 10, 10).unwrap_err();
        assert_eq!(err.code(), "singular-covariance");
        assert!(err.to_string().contains("larger d2"));
    }

    #[test]
    fn second_ratio_must_be_below_one() {
        let s = DMatrix::<f64>::identity(4, 4);
        assert_eq!(fisher_eigenvalues(&s, &s, 10, 5).unwrap_err().code(), "domain");
        let spec = fisher_eigenvalues(&s, &s, 5, 6).unwrap();
        assert_eq!((spec.y_tau, spec.y_t), (1.0, 0.8));
    }

    #[test]
    fn window_split_halves() {
        let x = gaussian(3, 12, 1);
        let v = x.columns(0, 12);
        let w = WindowSplit::new(&v, 0, 5, 7).unwrap();
        assert_eq!((w.n1, w.n2, w.start), (5, 7, 1));
        assert_eq!(w.first()[(0, 4)], x[(0, 4)]);
        assert_eq!(w.second()[(0, 0)], x[(0, 5)]);
        assert_eq!(WindowSplit::new(&v, 0, 1, 11).unwrap_err().code(), "config");
        assert_eq!(WindowSplit::new(&v, 0, 10, 2).unwrap_err().code(), "singular-covariance");
        assert_eq!(WindowSplit::new(&v, 1, 5, 7).unwrap_err().code(), "shape");
    }

    #[test]
    fn record_normalization_leaves_spectrum_unchanged() {
        let x = gaussian(5, 60, 8);
        let scaled = DMatrix::from_fn(5, 60, |i, j| x[(i, j)] * (i as f64 + 1.0) * 3.0 + 10.0);
        let sv = scaled.columns(0, 60);
        let raw = WindowSplit::new(&sv, 0, 25, 35).unwrap().spectrum(Normalization::Record).unwrap();
        let z = normalize_rows(sv).unwrap();
        let zv = z.columns(0, 60);
        let normed = WindowSplit::new(&zv, 0, 25, 35).unwrap().spectrum(Normalization::Record).unwrap();
        for (a, b) in raw.eigenvalues.iter().zip(&normed.eigenvalues) {
            assert!((a - b).abs() < 1e-9 * a.max(1.0));
        }
    }
}
