//! Log-likelihood, score, observed and expected information of the
//! two-sample occupancy model, and the analytic mean and covariance of the
//! score under an arbitrary true parameter.
//!
//! Parameters are ordered `(ψ₁, p₁, ψ₂, p₂)`; the null model `ψ₁ = ψ₂ = ψ`
//! has parameters `(ψ, p₁, p₂)` and is embedded through [`CONSTRAINT_MAP`].
//! Information matrices use the sign convention `J = −∂²ℓ/∂θ∂θᵀ`.

use crate::linalg::{self, Matrix, Vector};
use crate::model::{open_unit, Counts, RegionDesign, RegionParams, RegionSummary};
use crate::{Error, Result};

/// The constraint map `M` with `M·(ψ, p₁, p₂) = (ψ, p₁, ψ, p₂)`.
pub const CONSTRAINT_MAP: Matrix<4, 3> = [
    [1.0, 0.0, 0.0],
    [0.0, 1.0, 0.0],
    [1.0, 0.0, 0.0],
    [0.0, 0.0, 1.0],
];

pub type ScoreVector = Vector<4>;
pub type InfoMatrix = Matrix<4>;

/// Unconstrained parameters `(ψ₁, p₁, ψ₂, p₂)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ThetaFull {
    pub psi1: f64,
    pub p1: f64,
    pub psi2: f64,
    pub p2: f64,
}

impl ThetaFull {
    pub fn new(psi1: f64, p1: f64, psi2: f64, p2: f64) -> Result<Self> {
        Ok(Self {
            psi1: open_unit("psi1", psi1)?,
            p1: open_unit("p1", p1)?,
            psi2: open_unit("psi2", psi2)?,
            p2: open_unit("p2", p2)?,
        })
    }

    pub fn from_array(a: Vector<4>) -> Self {
        Self { psi1: a[0], p1: a[1], psi2: a[2], p2: a[3] }
    }

    pub fn to_array(&self) -> Vector<4> {
        [self.psi1, self.p1, self.psi2, self.p2]
    }

    pub fn region(&self, j: usize) -> RegionParams {
        match j {
            0 => RegionParams { psi: self.psi1, p: self.p1 },
            1 => RegionParams { psi: self.psi2, p: self.p2 },
            _ => panic!("region index {j} out of range"),
        }
    }

    pub fn from_regions(r1: RegionParams, r2: RegionParams) -> Self {
        Self { psi1: r1.psi, p1: r1.p, psi2: r2.psi, p2: r2.p }
    }

    pub(crate) fn check(&self) -> Result<()> {
        self.region(0).check()?;
        self.region(1).check()
    }
}

/// Null-constrained parameters `(ψ, p₁, p₂)`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ThetaNull {
    pub psi: f64,
    pub p1: f64,
    pub p2: f64,
}

impl ThetaNull {
    pub fn new(psi: f64, p1: f64, p2: f64) -> Result<Self> {
        Ok(Self { psi: open_unit("psi", psi)?, p1: open_unit("p1", p1)?, p2: open_unit("p2", p2)? })
    }

    pub fn from_array(a: Vector<3>) -> Self {
        Self { psi: a[0], p1: a[1], p2: a[2] }
    }

    pub fn to_array(&self) -> Vector<3> {
        [self.psi, self.p1, self.p2]
    }

    /// `M·θ'`
    pub fn embed(&self) -> ThetaFull {
        ThetaFull { psi1: self.psi, p1: self.p1, psi2: self.psi, p2: self.p2 }
    }
}

/// `Mᵀ v`
pub fn project_vector(v: &Vector<4>) -> Vector<3> {
    [v[0] + v[2], v[1], v[3]]
}

/// `Mᵀ A M`
pub fn project_matrix(a: &Matrix<4>) -> Matrix<3> {
    let mt = linalg::transpose(&CONSTRAINT_MAP);
    linalg::mat_mul(&linalg::mat_mul(&mt, a), &CONSTRAINT_MAP)
}

/// Designs and (possibly real-valued) sufficient statistics for both regions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Survey {
    pub designs: [RegionDesign; 2],
    pub counts: [Counts; 2],
}

impl Survey {
    pub fn from_summaries(designs: [RegionDesign; 2], summaries: [RegionSummary; 2]) -> Result<Self> {
        summaries[0].validate(&designs[0])?;
        summaries[1].validate(&designs[1])?;
        Ok(Self { designs, counts: [summaries[0].counts(), summaries[1].counts()] })
    }

    /// Expected sufficient statistics under `truth`:
    /// `E(s_d) = Nψθ`, `E(d) = KNψp`.
    pub fn expected(truth: &ThetaFull, designs: [RegionDesign; 2]) -> Self {
        let counts = [0, 1].map(|j| expected_counts(&designs[j], &truth.region(j)));
        Self { designs, counts }
    }

    pub fn total_sites(&self) -> f64 {
        self.designs[0].sites() + self.designs[1].sites()
    }
}

pub fn expected_counts(design: &RegionDesign, truth: &RegionParams) -> Counts {
    let theta = 1.0 - (1.0 - truth.p).powi(design.n_visits as i32);
    Counts {
        detected_sites: design.sites() * truth.psi * theta,
        detections: design.visits() * design.sites() * truth.psi * truth.p,
    }
}

/// Quantities shared by the region-level formulas.
struct RegionTerms {
    n: f64,
    k: f64,
    s: f64,
    d: f64,
    psi: f64,
    p: f64,
    /// 1 − p
    q: f64,
    theta: f64,
    /// dθ/dp = K(1−p)^{K−1}
    dtheta: f64,
    /// d²θ/dp² = −K(K−1)(1−p)^{K−2}
    d2theta: f64,
    /// 1 − ψθ, computed as (1−ψ) + ψ(1−p)^K
    miss: f64,
}

impl RegionTerms {
    fn new(counts: &Counts, design: &RegionDesign, params: &RegionParams) -> Result<Self> {
        params.check()?;
        let k = design.n_visits as i32;
        let RegionParams { psi, p } = *params;
        let q = 1.0 - p;
        let qk = q.powi(k);
        let kf = f64::from(k);
        Ok(Self {
            n: design.sites(),
            k: kf,
            s: counts.detected_sites,
            d: counts.detections,
            psi,
            p,
            q,
            theta: 1.0 - qk,
            dtheta: kf * q.powi(k - 1),
            d2theta: if k >= 2 { -kf * (kf - 1.0) * q.powi(k - 2) } else { 0.0 },
            miss: (1.0 - psi) + psi * qk,
        })
    }
}

/// `log L_j = s log ψ + d log p + (Ks − d) log(1−p) + (N − s) log(1 − ψθ)`.
pub fn region_loglik(counts: &Counts, design: &RegionDesign, params: &RegionParams) -> Result<f64> {
    let t = RegionTerms::new(counts, design, params)?;
    // 0·log(x) terms are dropped so that boundary counts stay finite
    let xlogy = |x: f64, y: f64| if x == 0.0 { 0.0 } else { x * y.ln() };
    Ok(xlogy(t.s, t.psi) + xlogy(t.d, t.p) + xlogy(t.k * t.s - t.d, t.q) + xlogy(t.n - t.s, t.miss))
}

/// Region score `(∂ℓ/∂ψ, ∂ℓ/∂p)`.
pub fn region_score(counts: &Counts, design: &RegionDesign, params: &RegionParams) -> Result<Vector<2>> {
    let t = RegionTerms::new(counts, design, params)?;
    let s1 = t.s / t.psi - (t.n - t.s) * t.theta / t.miss;
    let s2 = t.d / t.p - (t.s * t.k - t.d) / t.q - (t.n - t.s) * t.psi * t.dtheta / t.miss;
    Ok([s1, s2])
}

/// The same score written in centred form:
/// `S₁ = (s − ψθN) / (ψ(1−ψθ))`,
/// `S₂ = (d − sKp)/(p(1−p)) − (N−s)ψK(1−θ)/((1−ψθ)(1−p))`.
pub fn region_score_centred(
    counts: &Counts,
    design: &RegionDesign,
    params: &RegionParams,
) -> Result<Vector<2>> {
    let t = RegionTerms::new(counts, design, params)?;
    let s1 = (t.s - t.psi * t.theta * t.n) / (t.psi * t.miss);
    let s2 = (t.d - t.s * t.k * t.p) / (t.p * t.q)
        - (t.n - t.s) * t.psi * t.k * (1.0 - t.theta) / (t.miss * t.q);
    Ok([s1, s2])
}

/// Analytic observed information `−∂²ℓ_j/∂(ψ,p)²` of one region.
pub fn region_observed_info(
    counts: &Counts,
    design: &RegionDesign,
    params: &RegionParams,
) -> Result<Matrix<2>> {
    let t = RegionTerms::new(counts, design, params)?;
    let m2 = t.miss * t.miss;
    let rest = t.n - t.s;
    let h11 = -t.s / (t.psi * t.psi) - rest * t.theta * t.theta / m2;
    let h12 = -rest * t.dtheta / m2;
    let h22 = -t.d / (t.p * t.p)
        - (t.k * t.s - t.d) / (t.q * t.q)
        - rest * t.psi * (t.d2theta * t.miss + t.psi * t.dtheta * t.dtheta) / m2;
    Ok([[-h11, -h12], [-h12, -h22]])
}

pub fn full_loglik(survey: &Survey, theta: &ThetaFull) -> Result<f64> {
    Ok(region_loglik(&survey.counts[0], &survey.designs[0], &theta.region(0))?
        + region_loglik(&survey.counts[1], &survey.designs[1], &theta.region(1))?)
}

pub fn null_loglik(survey: &Survey, theta: &ThetaNull) -> Result<f64> {
    full_loglik(survey, &theta.embed())
}

/// `S(θ) = (S₁₁, S₁₂, S₂₁, S₂₂)`.
pub fn full_score(survey: &Survey, theta: &ThetaFull) -> Result<ScoreVector> {
    let a = region_score(&survey.counts[0], &survey.designs[0], &theta.region(0))?;
    let b = region_score(&survey.counts[1], &survey.designs[1], &theta.region(1))?;
    Ok([a[0], a[1], b[0], b[1]])
}

/// `S₀(θ') = Mᵀ S(Mθ')`.
pub fn null_score(survey: &Survey, theta: &ThetaNull) -> Result<Vector<3>> {
    Ok(project_vector(&full_score(survey, &theta.embed())?))
}

/// How [`observed_info`] differentiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum InfoMethod {
    #[default]
    Analytic,
    /// Central differences of the score, symmetrised.
    FiniteDifference,
}

const FD_RELATIVE_STEP: f64 = 1e-5;
const FD_MIN_STEP: f64 = 1e-10;

/// Observed information `J(θ) = −∂²ℓ/∂θ∂θᵀ` (4×4, block diagonal over regions).
pub fn observed_info(survey: &Survey, theta: &ThetaFull, method: InfoMethod) -> Result<InfoMatrix> {
    match method {
        InfoMethod::Analytic => {
            let a = region_observed_info(&survey.counts[0], &survey.designs[0], &theta.region(0))?;
            let b = region_observed_info(&survey.counts[1], &survey.designs[1], &theta.region(1))?;
            Ok([
                [a[0][0], a[0][1], 0.0, 0.0],
                [a[1][0], a[1][1], 0.0, 0.0],
                [0.0, 0.0, b[0][0], b[0][1]],
                [0.0, 0.0, b[1][0], b[1][1]],
            ])
        }
        InfoMethod::FiniteDifference => finite_difference_info(survey, theta),
    }
}

fn finite_difference_info(survey: &Survey, theta: &ThetaFull) -> Result<InfoMatrix> {
    theta.check()?;
    let x = theta.to_array();
    let mut jac = [[0.0; 4]; 4];
    for k in 0..4 {
        let mut h = FD_RELATIVE_STEP * x[k].abs().max(1.0);
        while x[k] - h <= 0.0 || x[k] + h >= 1.0 {
            h *= 0.5;
            if h < FD_MIN_STEP {
                return Err(Error::StepUnderflow(FD_MIN_STEP));
            }
        }
        let mut up = x;
        let mut down = x;
        up[k] += h;
        down[k] -= h;
        let su = full_score(survey, &ThetaFull::from_array(up))?;
        let sd = full_score(survey, &ThetaFull::from_array(down))?;
        for i in 0..4 {
            jac[i][k] = -(su[i] - sd[i]) / (2.0 * h);
        }
    }
    Ok(linalg::symmetrize(&jac))
}

/// `J₀(θ') = Mᵀ J(Mθ') M`, the observed information of the null model.
pub fn null_observed_info(survey: &Survey, theta: &ThetaNull) -> Result<Matrix<3>> {
    Ok(project_matrix(&observed_info(survey, &theta.embed(), InfoMethod::Analytic)?))
}

/// `E_{θ_T}[J(θ_eval)]`.
///
/// The log-likelihood is linear in the sufficient statistics, so this is the
/// observed information evaluated at the expected counts under `truth`.
pub fn expected_info(truth: &ThetaFull, eval: &ThetaFull, designs: [RegionDesign; 2]) -> Result<InfoMatrix> {
    truth.check()?;
    observed_info(&Survey::expected(truth, designs), eval, InfoMethod::Analytic)
}

/// Which detection probability enters the `+K·p` term of `Var(d | s_d)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum DetectionVarianceTerm {
    /// `K p_T`: the variance of a zero-truncated Binomial(K, p_T) count.
    #[default]
    Truth,
    /// `K p` with `p` taken at the evaluation point, as literally printed.
    Evaluation,
}

/// Mean and covariance of the score `S(Mθ')` when data follow `θ_T`.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct MomentSet {
    pub mu: Vector<4>,
    /// Block diagonal; the cross-region blocks are exactly zero.
    pub sigma: Matrix<4>,
}

/// Score moments of one region: `(μ₁, μ₂)` and the 2×2 covariance.
pub fn region_moments(
    design: &RegionDesign,
    truth: &RegionParams,
    eval: &RegionParams,
    term: DetectionVarianceTerm,
) -> Result<(Vector<2>, Matrix<2>)> {
    truth.check()?;
    eval.check()?;
    let n = design.sites();
    let k = design.visits();
    let kk = design.n_visits as i32;
    let (psi_t, p_t) = (truth.psi, truth.p);
    let theta_t = 1.0 - (1.0 - p_t).powi(kk);
    let (psi, p) = (eval.psi, eval.p);
    let q = 1.0 - p;
    let theta = 1.0 - q.powi(kk);
    let miss = (1.0 - psi) + psi * q.powi(kk);
    let occ_t = psi_t * theta_t;

    let e_s = n * occ_t;
    let var_s = n * occ_t * (1.0 - occ_t);
    let e_s2 = var_s + e_s * e_s;
    let kp_term = match term {
        DetectionVarianceTerm::Truth => k * p_t,
        DetectionVarianceTerm::Evaluation => k * p,
    };
    // Var(d | s_d) = s_d · per_site
    let per_site = (k * k * p_t * p_t - k * p_t * p_t + kp_term) / theta_t
        - k * k * p_t * p_t / (theta_t * theta_t);
    let e_var_d = e_s * per_site;

    let mu1 = n * (occ_t - psi * theta) / (psi * miss);
    let mu2 = n * psi_t * k * (p_t - p * theta_t) / (p * q)
        - n * (1.0 - occ_t) * psi * k * (1.0 - theta) / (miss * q);

    let c = psi * k * (1.0 - theta) / (miss * q);
    let slope = (k * p_t - k * p * theta_t) / (theta_t * p * q) + c;
    let sigma11 = var_s / (psi * psi * miss * miss);
    let sigma22 = e_var_d / (p * p * q * q) + var_s * slope * slope;
    let e_s1s2 = (e_s2 - psi * theta * n * e_s) * (k * p_t / theta_t - k * p) / (psi * miss * p * q)
        - (n * (e_s - psi * theta * n) - e_s2 + psi * theta * n * e_s) * psi * k * (1.0 - theta)
            / (psi * miss * miss * q);
    let sigma12 = e_s1s2 - mu1 * mu2;
    Ok(([mu1, mu2], [[sigma11, sigma12], [sigma12, sigma22]]))
}

/// `μ = E_{θ_T}[S(Mθ')]` and `Σ = Cov_{θ_T}[S(Mθ')]`.
pub fn moments(
    truth: &ThetaFull,
    eval: &ThetaNull,
    designs: [RegionDesign; 2],
    term: DetectionVarianceTerm,
) -> Result<MomentSet> {
    let at = eval.embed();
    let (m1, s1) = region_moments(&designs[0], &truth.region(0), &at.region(0), term)?;
    let (m2, s2) = region_moments(&designs[1], &truth.region(1), &at.region(1), term)?;
    Ok(MomentSet {
        mu: [m1[0], m1[1], m2[0], m2[1]],
        sigma: [
            [s1[0][0], s1[0][1], 0.0, 0.0],
            [s1[1][0], s1[1][1], 0.0, 0.0],
            [0.0, 0.0, s2[0][0], s2[0][1]],
            [0.0, 0.0, s2[1][0], s2[1][1]],
        ],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn design(n: u32, k: u32) -> RegionDesign {
        RegionDesign::new(n, k).unwrap()
    }

    fn counts(s: f64, d: f64) -> Counts {
        Counts { detected_sites: s, detections: d }
    }

    #[test]
    fn all_zero_data() {
        let des = design(50, 3);
        let par = RegionParams::new(0.6, 0.4).unwrap();
        let theta = 1.0 - 0.6f64.powi(3);
        assert_relative_eq!(
            region_loglik(&counts(0.0, 0.0), &des, &par).unwrap(),
            50.0 * (1.0 - 0.6 * theta).ln(),
            max_relative = 1e-14
        );
    }

    #[test]
    fn full_occupancy_reduces_to_binomial() {
        // ψ → 1 with every site detected leaves Π p^y(1−p)^{K−y}
        let des = design(20, 4);
        let par = RegionParams { psi: 1.0 - 1e-15, p: 0.3 };
        let ll = region_loglik(&counts(20.0, 31.0), &des, &par).unwrap();
        let want = 31.0 * 0.3f64.ln() + (80.0 - 31.0) * 0.7f64.ln();
        assert_relative_eq!(ll, want, max_relative = 1e-12);
    }

    #[test]
    fn boundary_params_rejected() {
        let des = design(10, 2);
        assert!(region_loglik(&counts(1.0, 1.0), &des, &RegionParams { psi: 1.0, p: 0.5 }).is_err());
        assert!(region_score(&counts(1.0, 1.0), &des, &RegionParams { psi: 0.5, p: 0.0 }).is_err());
    }

    #[test]
    fn score_vanishes_at_expected_data() {
        let des = design(50, 3);
        let par = RegionParams::new(0.8, 0.5).unwrap();
        let c = expected_counts(&des, &par);
        let s = region_score(&c, &des, &par).unwrap();
        assert!(s[0].abs() < 1e-12 && s[1].abs() < 1e-12, "{s:?}");
    }

    #[test]
    fn constraint_map_embeds() {
        let t = ThetaNull::new(0.3, 0.4, 0.5).unwrap();
        let m = linalg::mat_vec(&CONSTRAINT_MAP, &t.to_array());
        assert_eq!(m, t.embed().to_array());
        let mtm = project_matrix(&linalg::identity());
        assert!(linalg::determinant(&mtm).abs() > 0.5);
    }

    #[test]
    fn region_two_score_ignores_region_one_data() {
        let designs = [design(30, 3), design(40, 2)];
        let theta = ThetaFull::new(0.7, 0.4, 0.5, 0.6).unwrap();
        let a = Survey { designs, counts: [counts(10.0, 14.0), counts(12.0, 17.0)] };
        let b = Survey { designs, counts: [counts(25.0, 60.0), counts(12.0, 17.0)] };
        let sa = full_score(&a, &theta).unwrap();
        let sb = full_score(&b, &theta).unwrap();
        assert_eq!(sa[2..], sb[2..]);
    }

    #[test]
    fn null_score_is_projected_full_score() {
        let designs = [design(30, 3), design(40, 2)];
        let survey = Survey { designs, counts: [counts(10.0, 14.0), counts(12.0, 17.0)] };
        let t = ThetaNull::new(0.55, 0.4, 0.6).unwrap();
        let s = full_score(&survey, &t.embed()).unwrap();
        let s0 = null_score(&survey, &t).unwrap();
        assert_eq!(s0, [s[0] + s[2], s[1], s[3]]);
    }

    #[test]
    fn analytic_info_has_zero_cross_blocks() {
        let designs = [design(30, 3), design(40, 2)];
        let survey = Survey { designs, counts: [counts(10.0, 14.0), counts(12.0, 17.0)] };
        let j = observed_info(&survey, &ThetaFull::new(0.6, 0.4, 0.5, 0.6).unwrap(), InfoMethod::Analytic).unwrap();
        for i in 0..2 {
            for k in 2..4 {
                assert_eq!(j[i][k], 0.0);
                assert_eq!(j[k][i], 0.0);
            }
        }
    }

    #[test]
    fn null_true_information_is_positive_definite() {
        let designs = [design(500, 3), design(500, 3)];
        let truth = ThetaNull::new(0.7, 0.5, 0.4).unwrap().embed();
        let j = expected_info(&truth, &truth, designs).unwrap();
        assert!(linalg::sym_eigen(&j).unwrap().smallest() > 0.0);
    }

    #[test]
    fn moments_vanish_under_null() {
        let designs = [design(50, 3), design(50, 3)];
        let t = ThetaNull::new(0.8, 0.5, 0.5).unwrap();
        let m = moments(&t.embed(), &t, designs, DetectionVarianceTerm::Truth).unwrap();
        for v in m.mu {
            assert!(v.abs() < 1e-12, "{:?}", m.mu);
        }
    }

    // Σ under the null equals the Fisher information; an independent identity.
    #[test]
    fn sigma_equals_fisher_information_under_null() {
        let designs = [design(50, 3), design(80, 4)];
        let t = ThetaNull::new(0.65, 0.45, 0.3).unwrap();
        let m = moments(&t.embed(), &t, designs, DetectionVarianceTerm::Truth).unwrap();
        let fisher = expected_info(&t.embed(), &t.embed(), designs).unwrap();
        for i in 0..4 {
            for j in 0..4 {
                assert!((m.sigma[i][j] - fisher[i][j]).abs() <= 1e-9 * (1.0 + fisher[i][j].abs()));
            }
        }
    }

    fn fd_gradient(f: impl Fn(&[f64; 4]) -> f64, x: [f64; 4]) -> [f64; 4] {
        let mut g = [0.0; 4];
        for k in 0..4 {
            let h = 1e-6;
            let (mut a, mut b) = (x, x);
            a[k] += h;
            b[k] -= h;
            g[k] = (f(&a) - f(&b)) / (2.0 * h);
        }
        g
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(1.0)
    }

    prop_compose! {
        fn interior()(x in 0.05f64..0.95) -> f64 { x }
    }

    prop_compose! {
        fn survey_strategy()(n1 in 5u32..120, n2 in 5u32..120, k1 in 1u32..6, k2 in 1u32..6,
                            f in prop::array::uniform4(0.0f64..1.0)) -> Survey {
            let s1 = (f[0] * f64::from(n1)).floor();
            let s2 = (f[1] * f64::from(n2)).floor();
            let d1 = s1 + (f[2] * s1 * f64::from(k1 - 1)).floor();
            let d2 = s2 + (f[3] * s2 * f64::from(k2 - 1)).floor();
            Survey { designs: [design(n1, k1), design(n2, k2)], counts: [counts(s1, d1), counts(s2, d2)] }
        }
    }

    proptest! {
        #[test]
        fn region_loglik_matches_product_form(survey in survey_strategy(), psi in interior(), p in interior()) {
            let des = survey.designs[0];
            let c = survey.counts[0];
            let par = RegionParams::new(psi, p).unwrap();
            let theta = 1.0 - (1.0 - p).powi(des.n_visits as i32);
            let k = des.visits();
            let product = psi.powf(c.detected_sites) * p.powf(c.detections)
                * (1.0 - p).powf(k * c.detected_sites - c.detections)
                * (1.0 - psi * theta).powf(des.sites() - c.detected_sites);
            let ll = region_loglik(&c, &des, &par).unwrap();
            prop_assume!(product > 1e-300);
            prop_assert!((ll.exp() - product).abs() <= 1e-9 * product);
        }

        #[test]
        fn score_forms_agree(survey in survey_strategy(), psi in interior(), p in interior()) {
            let par = RegionParams::new(psi, p).unwrap();
            let a = region_score(&survey.counts[1], &survey.designs[1], &par).unwrap();
            let b = region_score_centred(&survey.counts[1], &survey.designs[1], &par).unwrap();
            prop_assert!((a[0] - b[0]).abs() <= 1e-10 * (1.0 + a[0].abs()));
            prop_assert!((a[1] - b[1]).abs() <= 1e-10 * (1.0 + a[1].abs()));
        }

        #[test]
        fn score_is_loglik_gradient(survey in survey_strategy(), x in prop::array::uniform4(0.05f64..0.95)) {
            let s = full_score(&survey, &ThetaFull::from_array(x)).unwrap();
            let g = fd_gradient(|y| full_loglik(&survey, &ThetaFull::from_array(*y)).unwrap(), x);
            for i in 0..4 {
                prop_assert!(rel_err(s[i], g[i]) < 1e-6, "{i}: {} vs {}", s[i], g[i]);
            }
        }

        #[test]
        fn null_score_is_constrained_gradient(survey in survey_strategy(), x in prop::array::uniform3(0.05f64..0.95)) {
            let s = null_score(&survey, &ThetaNull::from_array(x)).unwrap();
            let f = |y: &[f64; 4]| null_loglik(&survey, &ThetaNull::from_array([y[0], y[1], y[2]])).unwrap();
            let g = fd_gradient(f, [x[0], x[1], x[2], 0.0]);
            for i in 0..3 {
                prop_assert!(rel_err(s[i], g[i]) < 1e-6);
            }
        }

        #[test]
        fn analytic_info_matches_finite_difference(survey in survey_strategy(), x in prop::array::uniform4(0.05f64..0.95)) {
            let theta = ThetaFull::from_array(x);
            let a = observed_info(&survey, &theta, InfoMethod::Analytic).unwrap();
            let f = observed_info(&survey, &theta, InfoMethod::FiniteDifference).unwrap();
            let err = linalg::frobenius(&linalg::sub(&a, &f)) / linalg::frobenius(&a).max(1.0);
            prop_assert!(err < 1e-5, "relative Frobenius error {err}");
            prop_assert!(linalg::asymmetry(&f) == 0.0);
        }

        #[test]
        fn sigma_is_psd(x in prop::array::uniform4(0.05f64..0.95), y in prop::array::uniform3(0.05f64..0.95)) {
            let designs = [design(50, 3), design(70, 5)];
            for term in [DetectionVarianceTerm::Truth, DetectionVarianceTerm::Evaluation] {
                let m = moments(&ThetaFull::from_array(x), &ThetaNull::from_array(y), designs, term).unwrap();
                let e = linalg::sym_eigen(&m.sigma).unwrap();
                if term == DetectionVarianceTerm::Truth {
                    prop_assert!(e.smallest() >= -1e-10);
                }
            }
        }
    }
}
