//! Maximum-likelihood fits of the single-region, full and null-constrained
//! models.
//!
//! All fits run Newton's method on the logit scale with a backtracking line
//! search. Failures are reported through [`FitStatus`] and never as errors.

use crate::inference::{self, InfoMethod, Survey, ThetaFull, ThetaNull};
use crate::linalg::{self, Matrix, Vector};
use crate::model::{Counts, RegionDesign, RegionParams};
use crate::Result;

/// Outcome of a fit, ordered from best to worst.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum FitStatus {
    Converged,
    NoConvergence,
    NonInvertibleInformation,
    BoundaryEstimate,
    DegenerateData,
}

impl FitStatus {
    pub fn is_converged(self) -> bool {
        self == FitStatus::Converged
    }

    pub fn worst(self, other: Self) -> Self {
        self.max(other)
    }
}

/// Probability-scale estimates outside `[BOUNDARY_EPS, 1 − BOUNDARY_EPS]` are
/// reported as [`FitStatus::BoundaryEstimate`].
pub const BOUNDARY_EPS: f64 = 1e-6;
/// Gradient tolerance per site: converged when `|score|∞ < 1e-8 · N`.
pub const GRADIENT_TOL_PER_SITE: f64 = 1e-8;
pub const STEP_TOL: f64 = 1e-10;
pub const MAX_ITERATIONS: usize = 200;

const MAX_HALVINGS: usize = 60;
const ROUNDING: f64 = 1e-13;
const MAX_LOGIT_STEP: f64 = 5.0;
const MAX_LOGIT: f64 = 30.0;
const START_CLAMP: (f64, f64) = (0.05, 0.95);

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct FitResult<const D: usize> {
    /// Probability-scale estimate.
    #[cfg_attr(feature = "serde", serde(with = "serde_array"))]
    pub estimate: Vector<D>,
    pub loglik: f64,
    /// `−∂²ℓ` at the estimate (the null fit reports `MᵀJM`).
    #[cfg_attr(feature = "serde", serde(with = "serde_array"))]
    pub observed_info: Matrix<D>,
    pub status: FitStatus,
    pub iterations: usize,
}

pub type RegionFit = FitResult<2>;
pub type NullFit = FitResult<3>;
pub type FullFit = FitResult<4>;

impl<const D: usize> FitResult<D> {
    pub fn converged(&self) -> bool {
        self.status.is_converged()
    }

    fn degenerate(estimate: Vector<D>) -> Self {
        Self {
            estimate,
            loglik: f64::NAN,
            observed_info: [[f64::NAN; D]; D],
            status: FitStatus::DegenerateData,
            iterations: 0,
        }
    }
}

impl FitResult<2> {
    pub fn params(&self) -> RegionParams {
        RegionParams { psi: self.estimate[0], p: self.estimate[1] }
    }
}

impl FitResult<3> {
    pub fn theta(&self) -> ThetaNull {
        ThetaNull::from_array(self.estimate)
    }
}

impl FitResult<4> {
    pub fn theta(&self) -> ThetaFull {
        ThetaFull::from_array(self.estimate)
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// What the maximiser needs at a probability-scale point: log-likelihood,
/// gradient and Hessian (`∂²ℓ`, i.e. minus the observed information).
pub struct Evaluation<const D: usize> {
    pub loglik: f64,
    pub gradient: Vector<D>,
    pub hessian: Matrix<D>,
}

/// Raw result of [`maximize`].
#[derive(Debug, Clone, Copy)]
pub struct Maximum<const D: usize> {
    pub estimate: Vector<D>,
    pub loglik: f64,
    pub gradient: Vector<D>,
    pub hessian: Matrix<D>,
    pub iterations: usize,
}

/// Maximises a log-likelihood over `(0, 1)^D` by Newton steps on the logit
/// scale.
///
/// Each step halves until the log-likelihood does not decrease. When the
/// logit-scale Hessian is not negative definite, or the Newton direction is
/// not an ascent direction, the step falls back to steepest ascent. Close to
/// the optimum, where ℓ no longer resolves the predicted gain of a Newton
/// step, the full step is taken if it reduces the gradient. Stops when
/// the gradient max-norm drops below `grad_tol`, the step max-norm below
/// [`STEP_TOL`], a coordinate runs off to the boundary, or after
/// [`MAX_ITERATIONS`].
pub fn maximize<const D: usize>(
    start: Vector<D>,
    grad_tol: f64,
    eval: impl Fn(&Vector<D>) -> Result<Evaluation<D>>,
    loglik: impl Fn(&Vector<D>) -> Result<f64>,
) -> Result<Maximum<D>> {
    let mut eta = start.map(logit);
    let mut x = start;
    let mut cur = eval(&x)?;
    let mut iterations = 0;

    while iterations < MAX_ITERATIONS {
        if linalg::max_norm(&cur.gradient) < grad_tol {
            break;
        }
        iterations += 1;

        // chain rule through x = σ(η): w = x(1−x)
        let w = x.map(|v| v * (1.0 - v));
        let mut g_eta = [0.0; D];
        let mut neg_h_eta = [[0.0; D]; D];
        for i in 0..D {
            g_eta[i] = cur.gradient[i] * w[i];
            for j in 0..D {
                neg_h_eta[i][j] = -w[i] * cur.hessian[i][j] * w[j];
            }
            neg_h_eta[i][i] -= cur.gradient[i] * w[i] * (1.0 - 2.0 * x[i]);
        }

        let newton = if linalg::is_positive_definite(&neg_h_eta) {
            linalg::solve(&neg_h_eta, &g_eta).ok()
        } else {
            None
        };
        let (mut dir, is_newton) = match newton {
            Some(d) if linalg::dot(&d, &g_eta) > 0.0 => (d, true),
            _ => (g_eta, false),
        };
        let len = linalg::max_norm(&dir);
        if len > MAX_LOGIT_STEP {
            dir = dir.map(|v| v * MAX_LOGIT_STEP / len);
        }

        let mut accepted = None;
        let mut next_eval = None;
        // Below this predicted gain ℓ cannot resolve the step, so a Newton
        // step is judged by the gradient it leaves behind.
        let flat = is_newton && 0.5 * linalg::dot(&dir, &g_eta) < ROUNDING * (1.0 + cur.loglik.abs());
        if flat {
            let trial = core::array::from_fn(|i| (eta[i] + dir[i]).clamp(-MAX_LOGIT, MAX_LOGIT));
            let tx = trial.map(sigmoid);
            if let Ok(e) = eval(&tx) {
                if e.loglik.is_finite() && linalg::max_norm(&e.gradient) < linalg::max_norm(&cur.gradient) {
                    accepted = Some((trial, tx));
                    next_eval = Some(e);
                }
            }
        } else {
            let mut t = 1.0;
            for _ in 0..MAX_HALVINGS {
                let trial = core::array::from_fn(|i| (eta[i] + t * dir[i]).clamp(-MAX_LOGIT, MAX_LOGIT));
                let tx = trial.map(sigmoid);
                if let Ok(l) = loglik(&tx) {
                    if l >= cur.loglik {
                        accepted = Some((trial, tx));
                        break;
                    }
                }
                t *= 0.5;
            }
        }
        let Some((next_eta, next_x)) = accepted else { break };
        let mut step: f64 = 0.0;
        for i in 0..D {
            step = step.max((next_eta[i] - eta[i]).abs());
        }
        eta = next_eta;
        x = next_x;
        cur = match next_eval {
            Some(e) => e,
            None => eval(&x)?,
        };
        if step < STEP_TOL || eta.iter().any(|e| e.abs() >= MAX_LOGIT) {
            break;
        }
    }

    Ok(Maximum { estimate: x, loglik: cur.loglik, gradient: cur.gradient, hessian: cur.hessian, iterations })
}

fn classify<const D: usize>(m: &Maximum<D>, grad_tol: f64) -> FitStatus {
    if m.estimate.iter().any(|&v| !(BOUNDARY_EPS..=1.0 - BOUNDARY_EPS).contains(&v)) {
        return FitStatus::BoundaryEstimate;
    }
    if !(linalg::max_norm(&m.gradient) < grad_tol) {
        return FitStatus::NoConvergence;
    }
    let info = linalg::scale(&m.hessian, -1.0);
    if linalg::factor_checked(&info).is_err() {
        return FitStatus::NonInvertibleInformation;
    }
    FitStatus::Converged
}

fn finish<const D: usize>(m: Result<Maximum<D>>, grad_tol: f64, start: Vector<D>) -> FitResult<D> {
    match m {
        Ok(m) => FitResult {
            estimate: m.estimate,
            loglik: m.loglik,
            observed_info: linalg::scale(&m.hessian, -1.0),
            status: classify(&m, grad_tol),
            iterations: m.iterations,
        },
        // only reachable when an iterate lands exactly on the boundary
        Err(_) => FitResult {
            estimate: start,
            loglik: f64::NAN,
            observed_info: [[f64::NAN; D]; D],
            status: FitStatus::BoundaryEstimate,
            iterations: MAX_ITERATIONS,
        },
    }
}

/// Moment-style starting values: `ψ₀θ₀ = s/N`, `p₀ = d/(sK)`, both clamped
/// to `[0.05, 0.95]`.
pub fn starting_values(counts: &Counts, design: &RegionDesign) -> RegionParams {
    let (lo, hi) = START_CLAMP;
    let s = counts.detected_sites;
    let p0 = if s > 0.0 { counts.detections / (s * design.visits()) } else { lo };
    let p0 = p0.clamp(lo, hi);
    let theta0 = 1.0 - (1.0 - p0).powi(design.n_visits as i32);
    let psi0 = (s / design.sites() / theta0).clamp(lo, hi);
    RegionParams { psi: psi0, p: p0 }
}

fn region_evaluation(counts: &Counts, design: &RegionDesign, x: &Vector<2>) -> Result<Evaluation<2>> {
    let params = RegionParams { psi: x[0], p: x[1] };
    let info = inference::region_observed_info(counts, design, &params)?;
    Ok(Evaluation {
        loglik: inference::region_loglik(counts, design, &params)?,
        gradient: inference::region_score(counts, design, &params)?,
        hessian: linalg::scale(&info, -1.0),
    })
}

/// Single-region MLE of `(ψ, p)`.
pub fn fit_region(counts: &Counts, design: &RegionDesign) -> RegionFit {
    let start = starting_values(counts, design);
    let start = [start.psi, start.p];
    if counts.detected_sites <= 0.0 {
        return FitResult::degenerate(start);
    }
    let tol = GRADIENT_TOL_PER_SITE * design.sites();
    let m = maximize(
        start,
        tol,
        |x| region_evaluation(counts, design, x),
        |x| inference::region_loglik(counts, design, &RegionParams { psi: x[0], p: x[1] }),
    );
    finish(m, tol, start)
}

/// Full-model MLE. The likelihood factorises over regions, so this is two
/// independent region fits; the status is the worse of the two.
pub fn fit_full(survey: &Survey) -> FullFit {
    let a = fit_region(&survey.counts[0], &survey.designs[0]);
    let b = fit_region(&survey.counts[1], &survey.designs[1]);
    let mut info = [[0.0; 4]; 4];
    for i in 0..2 {
        for j in 0..2 {
            info[i][j] = a.observed_info[i][j];
            info[i + 2][j + 2] = b.observed_info[i][j];
        }
    }
    FitResult {
        estimate: [a.estimate[0], a.estimate[1], b.estimate[0], b.estimate[1]],
        loglik: a.loglik + b.loglik,
        observed_info: info,
        status: a.status.worst(b.status),
        iterations: a.iterations.max(b.iterations),
    }
}

/// Detection probability that makes `ψθ = s/N` for a given `ψ`.
fn matching_detection(counts: &Counts, design: &RegionDesign, psi: f64) -> f64 {
    let (lo, hi) = START_CLAMP;
    let theta = (counts.detected_sites / (design.sites() * psi)).min(1.0);
    (1.0 - (1.0 - theta).powf(1.0 / design.visits())).clamp(lo, hi)
}

/// Starting points for the null fit: the pooled moment start, and one start
/// anchored at each region's moment estimate of `ψ`.
///
/// The constrained likelihood can have two modes when the regions disagree:
/// one compromises on `ψ`, the other keeps `ψ` and explains the sparser
/// region with a small detection probability.
pub fn null_starts(survey: &Survey) -> [ThetaNull; 3] {
    let [c1, c2] = &survey.counts;
    let [g1, g2] = &survey.designs;
    let a = starting_values(c1, g1);
    let b = starting_values(c2, g2);
    let (n1, n2) = (g1.sites(), g2.sites());
    [
        ThetaNull { psi: (a.psi * n1 + b.psi * n2) / (n1 + n2), p1: a.p, p2: b.p },
        ThetaNull { psi: a.psi, p1: a.p, p2: matching_detection(c2, g2, a.psi) },
        ThetaNull { psi: b.psi, p1: matching_detection(c1, g1, b.psi), p2: b.p },
    ]
}

/// Null-model MLE of `(ψ, p₁, p₂)` under `ψ₁ = ψ₂`: the best of the fits
/// from [`null_starts`].
pub fn fit_null(survey: &Survey) -> NullFit {
    let fits = null_starts(survey).map(|start| fit_null_from(survey, &start));
    if fits[0].status == FitStatus::DegenerateData {
        return fits[0];
    }
    let top = fits.iter().map(|f| f.loglik).filter(|l| l.is_finite()).fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return fits[0];
    }
    // fits within rounding of the best log-likelihood sit on the same mode
    let slack = 1e-9 * (1.0 + top.abs());
    *fits
        .iter()
        .filter(|f| f.loglik >= top - slack)
        .min_by_key(|f| f.status)
        .expect("the best fit qualifies")
}

/// [`fit_null`] from a caller-chosen starting point.
pub fn fit_null_from(survey: &Survey, start: &ThetaNull) -> NullFit {
    let start = start.to_array();
    if survey.counts.iter().any(|c| c.detected_sites <= 0.0) {
        return FitResult::degenerate(start);
    }
    let tol = GRADIENT_TOL_PER_SITE * survey.total_sites();
    let eval = |x: &Vector<3>| -> Result<Evaluation<3>> {
        let t = ThetaNull::from_array(*x);
        let full = t.embed();
        let j = inference::observed_info(survey, &full, InfoMethod::Analytic)?;
        Ok(Evaluation {
            loglik: inference::full_loglik(survey, &full)?,
            gradient: inference::null_score(survey, &t)?,
            hessian: linalg::scale(&inference::project_matrix(&j), -1.0),
        })
    };
    let m = maximize(start, tol, eval, |x| inference::null_loglik(survey, &ThetaNull::from_array(*x)));
    finish(m, tol, start)
}

#[cfg(feature = "serde")]
mod serde_array {
    //! serde's derive only covers arrays up to 32 and not const-generic ones.
    use alloc::vec::Vec;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub trait Flat: Sized {
        fn flatten(&self) -> Vec<f64>;
        fn unflatten(v: &[f64]) -> Option<Self>;
    }

    impl<const N: usize> Flat for [f64; N] {
        fn flatten(&self) -> Vec<f64> {
            self.to_vec()
        }
        fn unflatten(v: &[f64]) -> Option<Self> {
            v.try_into().ok()
        }
    }

    impl<const N: usize> Flat for [[f64; N]; N] {
        fn flatten(&self) -> Vec<f64> {
            self.iter().flatten().copied().collect()
        }
        fn unflatten(v: &[f64]) -> Option<Self> {
            if v.len() != N * N {
                return None;
            }
            let mut m = [[0.0; N]; N];
            for (i, row) in m.iter_mut().enumerate() {
                row.copy_from_slice(&v[i * N..(i + 1) * N]);
            }
            Some(m)
        }
    }

    pub fn serialize<T: Flat, S: Serializer>(v: &T, s: S) -> Result<S::Ok, S::Error> {
        v.flatten().serialize(s)
    }

    pub fn deserialize<'de, T: Flat, D: Deserializer<'de>>(d: D) -> Result<T, D::Error> {
        let v = Vec::<f64>::deserialize(d)?;
        T::unflatten(&v).ok_or_else(|| D::Error::custom("wrong number of entries"))
    }
}
