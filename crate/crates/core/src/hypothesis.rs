//! Tests of `H₀: ψ₁ = ψ₂`: Wald, likelihood ratio, and the score test with
//! expected or observed information.
//!
//! The observed-information score statistic can be negative when the
//! information matrix at the null fit is indefinite. [`Rule::ModifiedNegative`]
//! rejects in that case as well as above the χ²₁ critical value.

use thiserror::Error;

use crate::estimation::{FitStatus, FullFit, NullFit};
use crate::inference::{self, InfoMethod, Survey};
use crate::linalg;
use crate::special::{chi2_1_quantile, chi2_1_sf};
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum TestKind {
    Wald,
    Lrt,
    ScoreExpected,
    ScoreObserved,
}

impl TestKind {
    pub fn label(self) -> &'static str {
        match self {
            TestKind::Wald => "Wald",
            TestKind::Lrt => "LRT",
            TestKind::ScoreExpected => "T_E",
            TestKind::ScoreObserved => "T_O",
        }
    }
}

/// Rejection rule applied to a statistic.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum Rule {
    /// Reject when the statistic exceeds the χ²₁ critical value.
    #[default]
    Standard,
    /// Reject when the statistic exceeds the critical value or is negative.
    ModifiedNegative,
}

/// Significance level with its χ²₁ critical value.
#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct SignificanceLevel {
    pub alpha: f64,
    pub critical: f64,
}

impl SignificanceLevel {
    pub fn new(alpha: f64) -> Result<Self> {
        Ok(Self { alpha, critical: chi2_1_quantile(alpha)? })
    }

    pub fn rejects(&self, statistic: f64, rule: Rule) -> bool {
        match rule {
            Rule::Standard => statistic > self.critical,
            Rule::ModifiedNegative => statistic > self.critical || statistic < 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct TestOutcome {
    pub kind: TestKind,
    pub statistic: f64,
    pub df: u32,
    /// `None` for negative statistics, where only the rejection rule applies.
    pub p_value: Option<f64>,
    pub reject: bool,
    pub rule: Rule,
}

impl TestOutcome {
    pub fn new(kind: TestKind, statistic: f64, level: &SignificanceLevel, rule: Rule) -> Self {
        let p_value = if statistic >= 0.0 { chi2_1_sf(statistic).ok() } else { None };
        Self { kind, statistic, df: 1, p_value, reject: level.rejects(statistic, rule), rule }
    }

    /// Same statistic judged under another rule.
    pub fn with_rule(&self, level: &SignificanceLevel, rule: Rule) -> Self {
        Self::new(self.kind, self.statistic, level, rule)
    }
}

/// Why a statistic could not be computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum TestError {
    #[error("required fit failed: {0:?}")]
    FitFailed(FitStatus),
    #[error("information matrix is not invertible")]
    NonInvertibleInformation,
    #[error("variance of ψ̂₁ − ψ̂₂ is not positive")]
    NonPositiveVariance,
}

impl From<crate::Error> for TestError {
    fn from(_: crate::Error) -> Self {
        TestError::NonInvertibleInformation
    }
}

/// Information used for the Wald variance.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub enum WaldVariance {
    #[default]
    Observed,
    Expected,
}

/// Wald test on the probability scale:
/// `W = (ψ̂₁ − ψ̂₂)² / (v₁₁ + v₂₂ − 2v₁₂)` with `v` from the inverse
/// information at the full fit.
pub fn wald_test(
    full: &FullFit,
    survey: &Survey,
    level: &SignificanceLevel,
    variance: WaldVariance,
) -> Result<TestOutcome, TestError> {
    if !full.converged() {
        return Err(TestError::FitFailed(full.status));
    }
    let info = match variance {
        WaldVariance::Observed => full.observed_info,
        WaldVariance::Expected => {
            let theta = full.theta();
            inference::expected_info(&theta, &theta, survey.designs)?
        }
    };
    let cov = linalg::inverse(&info)?;
    let var = cov[0][0] + cov[2][2] - 2.0 * cov[0][2];
    if !(var > 0.0) {
        return Err(TestError::NonPositiveVariance);
    }
    let diff = full.estimate[0] - full.estimate[2];
    Ok(TestOutcome::new(TestKind::Wald, diff * diff / var, level, Rule::Standard))
}

/// Likelihood-ratio test `2(ℓ_full − ℓ_null)`.
///
/// Rounding can leave the difference a hair below zero when both fits sit
/// on the same point; such values are reported as zero.
pub fn lr_test(full: &FullFit, null: &NullFit, level: &SignificanceLevel) -> Result<TestOutcome, TestError> {
    if !full.converged() {
        return Err(TestError::FitFailed(full.status));
    }
    if !null.converged() {
        return Err(TestError::FitFailed(null.status));
    }
    let stat = (2.0 * (full.loglik - null.loglik)).max(0.0);
    Ok(TestOutcome::new(TestKind::Lrt, stat, level, Rule::Standard))
}

/// Observed-information score statistic `S(Mθ̂')ᵀ J(Mθ̂')⁻¹ S(Mθ̂')` with the
/// full 4×4 observed information at the null fit. May be negative.
pub fn score_test_observed(
    survey: &Survey,
    null: &NullFit,
    level: &SignificanceLevel,
    rule: Rule,
) -> Result<TestOutcome, TestError> {
    if !null.converged() {
        return Err(TestError::FitFailed(null.status));
    }
    let at = null.theta().embed();
    let score = inference::full_score(survey, &at)?;
    let info = inference::observed_info(survey, &at, InfoMethod::Analytic)?;
    let stat = linalg::inverse_quadratic_form(&info, &score)?;
    Ok(TestOutcome::new(TestKind::ScoreObserved, stat, level, rule))
}

/// Expected-information score statistic, with the expectation taken under
/// the fitted null `Mθ̂'`.
pub fn score_test_expected(
    survey: &Survey,
    null: &NullFit,
    level: &SignificanceLevel,
) -> Result<TestOutcome, TestError> {
    if !null.converged() {
        return Err(TestError::FitFailed(null.status));
    }
    let at = null.theta().embed();
    let score = inference::full_score(survey, &at)?;
    let info = inference::expected_info(&at, &at, survey.designs)?;
    let stat = linalg::inverse_quadratic_form(&info, &score)?;
    Ok(TestOutcome::new(TestKind::ScoreExpected, stat, level, Rule::Standard))
}

/// Both fits and all four tests for one dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Analysis {
    pub null_fit: NullFit,
    pub full_fit: FullFit,
    pub wald: Result<TestOutcome, TestError>,
    pub lrt: Result<TestOutcome, TestError>,
    pub score_expected: Result<TestOutcome, TestError>,
    /// Judged under [`Rule::Standard`]; use [`TestOutcome::with_rule`] for the
    /// modified rule.
    pub score_observed: Result<TestOutcome, TestError>,
}

pub fn analyze(survey: &Survey, level: &SignificanceLevel, wald_variance: WaldVariance) -> Analysis {
    let null_fit = crate::estimation::fit_null(survey);
    let full_fit = crate::estimation::fit_full(survey);
    Analysis {
        wald: wald_test(&full_fit, survey, level, wald_variance),
        lrt: lr_test(&full_fit, &null_fit, level),
        score_expected: score_test_expected(survey, &null_fit, level),
        score_observed: score_test_observed(survey, &null_fit, level, Rule::Standard),
        null_fit,
        full_fit,
    }
}
