//! Large-sample behaviour of the observed score statistic under the
//! alternative.
//!
//! Under a true `θ_T` outside the null, the null MLE converges to the
//! pseudo-true `θ'_S` solving `Mᵀ E_{θ_T}[S(Mθ'_S)] = 0`. Around that point the
//! statistic behaves like `Sᵀ B S` with
//! `B = J⁻¹ − M(MᵀJM)⁻¹Mᵀ` and `S ~ N(μ, Σ)`. `B` always has rank one (it
//! annihilates the three columns of `JM`), so everything hinges on the sign of
//! the single nonzero eigenvalue of `BΣ`, which flips when the expected
//! information at `Mθ'_S` stops being positive definite.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::inference::{self, DetectionVarianceTerm, Survey, ThetaFull, ThetaNull, CONSTRAINT_MAP};
use crate::linalg::{self, Matrix, Vector};
use crate::model::{RegionDesign, Scenario};
use crate::{Error, Result};

const PSEUDO_TRUE_TOL: f64 = 1e-10;
const PSEUDO_TRUE_MAX_ITER: usize = 200;
/// Eigenvalues of `BΣ` above this magnitude count as nonzero.
pub const NONZERO_EIGENVALUE: f64 = 1e-8;
/// Resolution of sign-change localisation in `R`.
pub const SIGN_CHANGE_TOL: f64 = 1e-4;

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct PseudoTrue {
    pub theta_null_star: ThetaNull,
    /// Max-norm of `Mᵀμ` at the solution.
    pub residual: f64,
    pub iterations: usize,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Expected null score `Mᵀ E_{θ_T}[S(Mθ')]`.
pub fn expected_null_score(truth: &ThetaFull, at: &ThetaNull, designs: [RegionDesign; 2]) -> Result<Vector<3>> {
    let m = inference::moments(truth, at, designs, DetectionVarianceTerm::Truth)?;
    Ok(inference::project_vector(&m.mu))
}

/// Newton root-finding on the logit scale for `Mᵀμ(θ_T, θ') = 0`, started from
/// the null fit to expected counts.
///
/// The Jacobian is `−MᵀE_{θ_T}[J(Mθ')]M` because `μ` is the score evaluated
/// at expected counts.
pub fn solve_pseudo_true(truth: &ThetaFull, designs: [RegionDesign; 2]) -> Result<PseudoTrue> {
    let (n1, n2) = (designs[0].sites(), designs[1].sites());
    let fit = crate::estimation::fit_null(&Survey::expected(truth, designs));
    let start = if fit.converged() {
        fit.estimate
    } else {
        [(truth.psi1 * n1 + truth.psi2 * n2) / (n1 + n2), truth.p1, truth.p2]
    };
    let mut eta = start.map(logit);
    let mut x = start;
    let mut f = expected_null_score(truth, &ThetaNull::from_array(x), designs)?;
    let mut res = linalg::max_norm(&f);
    let mut iterations = 0;

    while res >= PSEUDO_TRUE_TOL * 1e-2 && iterations < PSEUDO_TRUE_MAX_ITER {
        iterations += 1;
        let at = ThetaNull::from_array(x);
        let info = inference::project_matrix(&inference::expected_info(truth, &at.embed(), designs)?);
        // dF/dη = −MᵀE[J]M · diag(x(1−x))
        let mut jac = [[0.0; 3]; 3];
        for i in 0..3 {
            for j in 0..3 {
                jac[i][j] = -info[i][j] * x[j] * (1.0 - x[j]);
            }
        }
        let step = match linalg::solve(&jac, &f) {
            Ok(s) => s,
            Err(_) => break,
        };
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..50 {
            let trial_eta = [0, 1, 2].map(|i| eta[i] - t * step[i]);
            let trial = trial_eta.map(sigmoid);
            if let Ok(tf) = expected_null_score(truth, &ThetaNull::from_array(trial), designs) {
                let tr = linalg::max_norm(&tf);
                if tr < res {
                    eta = trial_eta;
                    x = trial;
                    f = tf;
                    res = tr;
                    improved = true;
                    break;
                }
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
    }
    if !(res < PSEUDO_TRUE_TOL) {
        return Err(Error::NotConverged(iterations));
    }
    Ok(PseudoTrue { theta_null_star: ThetaNull::from_array(x), residual: res, iterations })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum MatrixKind {
    ExpectedInfo,
    ObservedInfo,
    ProjectedTimesSigma,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SpectralReport {
    /// Descending.
    pub eigenvalues: Vec<f64>,
    pub matrix_kind: MatrixKind,
    pub r: Option<f64>,
}

impl SpectralReport {
    pub fn smallest(&self) -> f64 {
        *self.eigenvalues.last().expect("non-empty spectrum")
    }

    /// Eigenvalue of largest magnitude.
    pub fn leading(&self) -> f64 {
        self.eigenvalues.iter().copied().fold(0.0, |m, v| if v.abs() > m.abs() { v } else { m })
    }

    pub fn count_nonzero(&self, threshold: f64) -> usize {
        self.eigenvalues.iter().filter(|v| v.abs() > threshold).count()
    }
}

/// Spectrum of a symmetric information matrix.
pub fn info_spectrum(j: &Matrix<4>, kind: MatrixKind, r: Option<f64>) -> Result<SpectralReport> {
    let e = linalg::sym_eigen(j)?;
    Ok(SpectralReport { eigenvalues: e.values.to_vec(), matrix_kind: kind, r })
}

/// One point of the expected-information eigenvalue curve.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct CurvePoint {
    pub r: f64,
    pub pseudo_true: PseudoTrue,
    pub expected_info: SpectralReport,
    /// Nonzero eigenvalue of `BΣ` with `J = E[J(Mθ'_S)]` and analytic `Σ`.
    pub projected: SpectralReport,
}

/// `E_{θ_T}[J(Mθ'_S)]` and the analytic score covariance at `Mθ'_S`.
pub fn expected_matrices(truth: &ThetaFull, designs: [RegionDesign; 2]) -> Result<(PseudoTrue, Matrix<4>, Matrix<4>)> {
    let pt = solve_pseudo_true(truth, designs)?;
    let at = pt.theta_null_star;
    let j = inference::expected_info(truth, &at.embed(), designs)?;
    let sigma = inference::moments(truth, &at, designs, DetectionVarianceTerm::Truth)?.sigma;
    Ok((pt, j, sigma))
}

pub fn curve_point(scenario: &Scenario, r: f64) -> Result<CurvePoint> {
    let truth = scenario.truth(r)?;
    let (pt, j, sigma) = expected_matrices(&truth, scenario.designs)?;
    Ok(CurvePoint {
        r,
        pseudo_true: pt,
        expected_info: info_spectrum(&j, MatrixKind::ExpectedInfo, Some(r))?,
        projected: SpectralReport { r: Some(r), ..projected_spectrum(&j, &sigma)? },
    })
}

/// Eigenvalues of `E_{θ_T}[J(Mθ'_S)]` over a grid of effect sizes.
pub fn expected_info_eigen_curve(scenario: &Scenario, r_grid: &[f64]) -> Result<Vec<SpectralReport>> {
    r_grid
        .iter()
        .map(|&r| {
            let truth = scenario.truth(r)?;
            let (_, j, _) = expected_matrices(&truth, scenario.designs)?;
            info_spectrum(&j, MatrixKind::ExpectedInfo, Some(r))
        })
        .collect()
}

/// `B = J⁻¹ − M(MᵀJM)⁻¹Mᵀ`.
pub fn projection_matrix(j: &Matrix<4>) -> Result<Matrix<4>> {
    let j_inv = linalg::inverse(j)?;
    let j0_inv = linalg::inverse(&inference::project_matrix(j))?;
    let m_j0_mt = linalg::mat_mul(&linalg::mat_mul(&CONSTRAINT_MAP, &j0_inv), &linalg::transpose(&CONSTRAINT_MAP));
    Ok(linalg::symmetrize(&linalg::sub(&j_inv, &m_j0_mt)))
}

/// Spectrum of `BΣ`, computed through the similar symmetric matrix
/// `Σ^{1/2} B Σ^{1/2}`. Fails unless exactly one eigenvalue is nonzero.
pub fn projected_spectrum(j: &Matrix<4>, sigma: &Matrix<4>) -> Result<SpectralReport> {
    let (_, c) = congruence(j, sigma)?;
    let e = linalg::sym_eigen(&c)?;
    let report = SpectralReport { eigenvalues: e.values.to_vec(), matrix_kind: MatrixKind::ProjectedTimesSigma, r: None };
    let rank = report.count_nonzero(NONZERO_EIGENVALUE);
    if rank != 1 {
        return Err(Error::RankMismatch(rank));
    }
    Ok(report)
}

/// `(Σ^{1/2}, Σ^{1/2} B Σ^{1/2})`
fn congruence(j: &Matrix<4>, sigma: &Matrix<4>) -> Result<(linalg::SymRoots<4>, Matrix<4>)> {
    let b = projection_matrix(j)?;
    let roots = linalg::sym_sqrt_and_inv(sigma)?;
    let c = linalg::mat_mul(&linalg::mat_mul(&roots.sqrt, &b), &roots.sqrt);
    Ok((roots, linalg::symmetrize(&c)))
}

/// `Sᵀ B S = Σ λ_j (b_j + U_j)²` with `S = μ + Σ^{1/2} Z`, `U = PᵀZ`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Decomposition {
    pub lambda: Vector<4>,
    /// Columns are the eigenvectors `P` of `Σ^{1/2} B Σ^{1/2}`.
    pub p: Matrix<4>,
    /// `PᵀΣ^{−1/2}μ`
    pub b: Vector<4>,
    inverse_sqrt_sigma: Matrix<4>,
    mu: Vector<4>,
}

impl Decomposition {
    /// `Σ λ_j (b_j + u_j)²`
    pub fn statistic(&self, u: &Vector<4>) -> f64 {
        (0..4).map(|j| self.lambda[j] * (self.b[j] + u[j]).powi(2)).sum()
    }

    /// `U = PᵀΣ^{−1/2}(S − μ)` for a given score vector.
    pub fn standardize(&self, score: &Vector<4>) -> Vector<4> {
        let centred = [0, 1, 2, 3].map(|i| score[i] - self.mu[i]);
        let z = linalg::mat_vec(&self.inverse_sqrt_sigma, &centred);
        linalg::mat_vec(&linalg::transpose(&self.p), &z)
    }

    /// `E = Σ λ_j (b_j² + 1)`
    pub fn mean(&self) -> f64 {
        (0..4).map(|j| self.lambda[j] * (self.b[j] * self.b[j] + 1.0)).sum()
    }

    /// Draws the statistic with `U ~ N₄(0, I)`.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let u: Vector<4> = core::array::from_fn(|_| rng.sample::<f64, _>(StandardNormal));
        self.statistic(&u)
    }
}

pub fn score_decomposition(j: &Matrix<4>, sigma: &Matrix<4>, mu: &Vector<4>) -> Result<Decomposition> {
    let (roots, c) = congruence(j, sigma)?;
    let inverse_sqrt_sigma = roots.inverse_sqrt.ok_or(Error::Singular(f64::INFINITY))?;
    let e = linalg::sym_eigen(&c)?;
    let b = linalg::mat_vec(&linalg::transpose(&e.vectors), &linalg::mat_vec(&inverse_sqrt_sigma, mu));
    Ok(Decomposition { lambda: e.values, p: e.vectors, b, inverse_sqrt_sigma, mu: *mu })
}

/// Large-sample surrogate of the observed score statistic at effect size `r`
/// with `J = E[J(Mθ'_S)]`, analytic `Σ` and `μ`.
pub fn decomposition_at(scenario: &Scenario, r: f64) -> Result<Decomposition> {
    let truth = scenario.truth(r)?;
    let (pt, j, sigma) = expected_matrices(&truth, scenario.designs)?;
    let mu = inference::moments(&truth, &pt.theta_null_star, scenario.designs, DetectionVarianceTerm::Truth)?.mu;
    score_decomposition(&j, &sigma, &mu)
}

/// Finds where `f` changes sign: scans `grid` for the first bracketing pair
/// and bisects it to [`SIGN_CHANGE_TOL`].
pub fn locate_sign_change(grid: &[f64], f: impl Fn(f64) -> Result<f64>) -> Result<Option<f64>> {
    let mut prev: Option<(f64, f64)> = None;
    for &r in grid {
        let v = f(r)?;
        if let Some((pr, pv)) = prev {
            if (pv > 0.0) != (v > 0.0) {
                let (mut lo, mut hi, lo_pos) = (pr, r, pv > 0.0);
                while hi - lo > SIGN_CHANGE_TOL {
                    let mid = 0.5 * (lo + hi);
                    if (f(mid)? > 0.0) == lo_pos {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                return Ok(Some(0.5 * (lo + hi)));
            }
        }
        prev = Some((r, v));
    }
    Ok(None)
}

/// Effect size at which the smallest eigenvalue of `E[J(Mθ'_S)]` crosses zero.
pub fn expected_info_sign_change(scenario: &Scenario, grid: &[f64]) -> Result<Option<f64>> {
    locate_sign_change(grid, |r| {
        let (_, j, _) = expected_matrices(&scenario.truth(r)?, scenario.designs)?;
        Ok(linalg::sym_eigen(&j)?.smallest())
    })
}

/// Effect size at which the reciprocal of the nonzero eigenvalue of `BΣ`
/// crosses zero.
pub fn projected_sign_change(scenario: &Scenario, grid: &[f64]) -> Result<Option<f64>> {
    locate_sign_change(grid, |r| Ok(1.0 / curve_point(scenario, r)?.projected.leading()))
}

/// Empirical covariance of score vectors (divisor `n − 1`).
pub fn sample_covariance(scores: &[Vector<4>]) -> Matrix<4> {
    let n = scores.len() as f64;
    let mut mean = [0.0; 4];
    for s in scores {
        for i in 0..4 {
            mean[i] += s[i] / n;
        }
    }
    let mut cov = [[0.0; 4]; 4];
    for s in scores {
        for i in 0..4 {
            for j in 0..4 {
                cov[i][j] += (s[i] - mean[i]) * (s[j] - mean[j]) / (n - 1.0);
            }
        }
    }
    cov
}

/// Score vector and observed information at a fixed evaluation point.
pub fn score_and_info(survey: &Survey, at: &ThetaFull) -> Result<(Vector<4>, Matrix<4>)> {
    Ok((
        inference::full_score(survey, at)?,
        inference::observed_info(survey, at, inference::InfoMethod::Analytic)?,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::derive_stream;

    fn grid(step: f64, max: f64) -> Vec<f64> {
        let n = (max / step).round() as usize;
        (0..=n).map(|i| i as f64 * step).collect()
    }

    #[test]
    fn pseudo_true_is_truth_under_null() {
        let s = Scenario::standard(0.8);
        let truth = s.truth(0.0).unwrap();
        let pt = solve_pseudo_true(&truth, s.designs).unwrap();
        let want = [0.8, 0.5, 0.5];
        for (a, b) in pt.theta_null_star.to_array().iter().zip(want) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn pseudo_true_standard_configuration() {
        // frozen from an independent numerical maximisation of the expected
        // null log-likelihood
        let s = Scenario::standard(0.8);
        let cases = [(0.25, [0.712726, 0.524027, 0.453082]), (0.5, [0.673327, 0.531606, 0.336577])];
        for (r, want) in cases {
            let pt = solve_pseudo_true(&s.truth(r).unwrap(), s.designs).unwrap();
            for (a, b) in pt.theta_null_star.to_array().iter().zip(want) {
                assert!((a - b).abs() < 2e-6, "R={r}: {:?}", pt.theta_null_star);
            }
            assert!(pt.residual < 1e-10);
        }
    }

    // θ'_S maximises the expected null log-likelihood, so fitting the null
    // model to expected counts is a second route to the same point.
    #[test]
    fn pseudo_true_matches_null_fit_on_expected_counts() {
        let s = Scenario::standard(0.8);
        for r in [0.1, 0.5, 0.75] {
            let truth = s.truth(r).unwrap();
            let pt = solve_pseudo_true(&truth, s.designs).unwrap();
            let fit = crate::estimation::fit_null(&Survey::expected(&truth, s.designs));
            for (a, b) in pt.theta_null_star.to_array().iter().zip(fit.estimate) {
                assert!((a - b).abs() < 1e-7, "R={r}");
            }
        }
    }

    #[test]
    fn null_projection_is_idempotent_trace_one() {
        let s = Scenario::standard(0.8);
        let truth = s.truth(0.0).unwrap();
        let j = inference::expected_info(&truth, &truth, s.designs).unwrap();
        let (_, c) = congruence(&j, &j).unwrap();
        let c2 = linalg::mat_mul(&c, &c);
        assert!(linalg::max_abs(&linalg::sub(&c2, &c)) < 1e-8);
        assert!((linalg::trace(&c) - 1.0).abs() < 1e-8);
        let rep = projected_spectrum(&j, &j).unwrap();
        assert!((rep.eigenvalues[0] - 1.0).abs() < 1e-8);
        assert!(rep.eigenvalues[1..].iter().all(|v| v.abs() < 1e-8));
    }

    #[test]
    fn congruence_preserves_spectrum_of_product() {
        // eigenvalues of BΣ via its characteristic polynomial vs the congruence
        let s = Scenario::standard(0.8);
        for r in [0.2, 0.45, 0.7] {
            let (_, j, sigma) = expected_matrices(&s.truth(r).unwrap(), s.designs).unwrap();
            let b = projection_matrix(&j).unwrap();
            let bs = linalg::mat_mul(&b, &sigma);
            let rep = projected_spectrum(&j, &sigma).unwrap();
            // rank one: the nonzero eigenvalue equals the trace of BΣ
            assert!((rep.leading() - linalg::trace(&bs)).abs() < 1e-8 * rep.leading().abs().max(1.0));
            for z in [-0.7, 0.3, 1.9] {
                let det = linalg::determinant(&linalg::sub(&bs, &linalg::scale(&linalg::identity::<4>(), z)));
                let poly: f64 = rep.eigenvalues.iter().map(|l| l - z).product();
                assert!((det - poly).abs() < 1e-8 * (1.0 + det.abs()));
            }
        }
    }

    #[test]
    fn decomposition_reproduces_quadratic_form() {
        let s = Scenario::standard(0.8);
        let truth = s.truth(0.3).unwrap();
        let (pt, j, sigma) = expected_matrices(&truth, s.designs).unwrap();
        let mu = inference::moments(&truth, &pt.theta_null_star, s.designs, DetectionVarianceTerm::Truth).unwrap().mu;
        let d = score_decomposition(&j, &sigma, &mu).unwrap();
        let b = projection_matrix(&j).unwrap();
        let mut rng = derive_stream(1, 2, 3);
        for _ in 0..20 {
            let score: Vector<4> = core::array::from_fn(|i| mu[i] + 5.0 * rng.sample::<f64, _>(StandardNormal));
            let direct = linalg::dot(&score, &linalg::mat_vec(&b, &score));
            let via = d.statistic(&d.standardize(&score));
            assert!((direct - via).abs() < 1e-8 * direct.abs().max(1.0), "{direct} vs {via}");
        }
    }

    #[test]
    fn sign_change_locator() {
        let g = grid(0.1, 1.0);
        let x = locate_sign_change(&g, |r| Ok(0.537 - r)).unwrap().unwrap();
        assert!((x - 0.537).abs() < 1e-4);
        assert_eq!(locate_sign_change(&g, |r| Ok(1.0 + r)).unwrap(), None);
    }

    #[test]
    fn expected_info_positive_definite_at_null() {
        let s = Scenario::standard(0.8);
        let rep = &expected_info_eigen_curve(&s, &[0.0]).unwrap()[0];
        assert!(rep.smallest() > 0.0);
    }
}
