//! Analysis of one user dataset, as printed by `occscore test`.

use std::fmt;

use occscore_core::estimation::{FitResult, FitStatus};
use occscore_core::hypothesis::{analyze, Rule, SignificanceLevel, TestError, TestOutcome, WaldVariance};
use occscore_core::inference::{self, InfoMethod};
use occscore_core::linalg;
use serde::{Deserialize, Serialize};

use crate::dataset::Dataset;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSummary {
    pub estimate: Vec<f64>,
    /// `None` when the fit has no likelihood value (degenerate data).
    pub loglik: Option<f64>,
    pub status: FitStatus,
    pub iterations: usize,
}

impl<const D: usize> From<&FitResult<D>> for FitSummary {
    fn from(f: &FitResult<D>) -> Self {
        Self {
            estimate: f.estimate.to_vec(),
            loglik: f.loglik.is_finite().then_some(f.loglik),
            status: f.status,
            iterations: f.iterations,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestLine {
    pub test: String,
    pub statistic: Option<f64>,
    pub p_value: Option<f64>,
    pub reject_standard: Option<bool>,
    pub reject_modified: Option<bool>,
    /// Decision under the report's rule.
    pub reject: Option<bool>,
    /// Why the statistic is missing.
    pub error: Option<String>,
}

impl TestLine {
    fn new(label: &str, outcome: &Result<TestOutcome, TestError>, level: &SignificanceLevel, rule: Rule) -> Self {
        match outcome {
            Ok(o) => Self {
                test: label.to_owned(),
                statistic: Some(o.statistic),
                p_value: o.p_value,
                reject_standard: Some(o.with_rule(level, Rule::Standard).reject),
                reject_modified: Some(o.with_rule(level, Rule::ModifiedNegative).reject),
                reject: Some(o.with_rule(level, rule).reject),
                error: None,
            },
            Err(e) => Self {
                test: label.to_owned(),
                statistic: None,
                p_value: None,
                reject_standard: None,
                reject_modified: None,
                reject: None,
                error: Some(e.to_string()),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TestReport {
    pub dataset: Dataset,
    pub alpha: f64,
    pub critical_value: f64,
    pub wald_variance: WaldVariance,
    pub rule: Rule,
    /// `(ψ, p₁, p₂)`.
    pub null_fit: FitSummary,
    /// `(ψ₁, p₁, ψ₂, p₂)`.
    pub full_fit: FitSummary,
    pub tests: Vec<TestLine>,
    /// Eigenvalues of the 4×4 observed information at the null fit, descending.
    pub null_info_eigenvalues: Option<Vec<f64>>,
}

pub fn test_report(dataset: &Dataset, level: &SignificanceLevel, wald_variance: WaldVariance, rule: Rule) -> TestReport {
    let survey = dataset.survey();
    let a = analyze(&survey, level, wald_variance);
    let null_info_eigenvalues = (a.null_fit.status != FitStatus::DegenerateData)
        .then(|| inference::observed_info(&survey, &a.null_fit.theta().embed(), InfoMethod::Analytic).ok())
        .flatten()
        .and_then(|j| linalg::sym_eigen(&j).ok())
        .map(|e| e.values.to_vec());
    TestReport {
        dataset: *dataset,
        alpha: level.alpha,
        critical_value: level.critical,
        wald_variance,
        rule,
        null_fit: (&a.null_fit).into(),
        full_fit: (&a.full_fit).into(),
        tests: vec![
            TestLine::new("Wald", &a.wald, level, rule),
            TestLine::new("LRT", &a.lrt, level, rule),
            TestLine::new("T_E", &a.score_expected, level, rule),
            TestLine::new("T_O", &a.score_observed, level, rule),
        ],
        null_info_eigenvalues,
    }
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".into(), |v| format!("{v:.6}"))
}

fn decision(x: Option<bool>) -> &'static str {
    match x {
        Some(true) => "reject",
        Some(false) => "retain",
        None => "-",
    }
}

fn list(v: &[f64]) -> String {
    v.iter().map(|x| format!("{x:.6}")).collect::<Vec<_>>().join(", ")
}

impl fmt::Display for TestReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let d = &self.dataset;
        for j in 0..2 {
            writeln!(
                f,
                "region {}: N = {}, K = {}, s_d = {}, d = {}",
                j + 1,
                d.designs[j].n_sites,
                d.designs[j].n_visits,
                d.summaries[j].detected_sites,
                d.summaries[j].detections
            )?;
        }
        writeln!(f, "alpha = {}, critical value = {:.6}, rule = {:?}", self.alpha, self.critical_value, self.rule)?;
        writeln!(f)?;
        for (name, fit) in [("null fit (psi, p1, p2)", &self.null_fit), ("full fit (psi1, p1, psi2, p2)", &self.full_fit)] {
            writeln!(
                f,
                "{name}: [{}], loglik = {}, status = {:?}, iterations = {}",
                list(&fit.estimate),
                opt(fit.loglik),
                fit.status,
                fit.iterations
            )?;
        }
        writeln!(f)?;
        writeln!(f, "{:<6}{:>14}{:>12}{:>10}{:>10}  note", "test", "statistic", "p-value", "standard", "modified")?;
        for t in &self.tests {
            writeln!(
                f,
                "{:<6}{:>14}{:>12}{:>10}{:>10}  {}",
                t.test,
                opt(t.statistic),
                t.p_value.map_or_else(|| "-".into(), crate::output::format_sig6),
                decision(t.reject_standard),
                decision(t.reject_modified),
                t.error.as_deref().unwrap_or("")
            )?;
        }
        writeln!(f)?;
        match &self.null_info_eigenvalues {
            Some(v) => writeln!(f, "observed information eigenvalues at the null fit: [{}]", list(v)),
            None => writeln!(f, "observed information eigenvalues at the null fit: unavailable"),
        }
    }
}
