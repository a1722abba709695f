//! Monte Carlo studies over a grid of effect sizes `R`, with `ψ₂ = (1 − R)ψ₁`.
//!
//! Every replicate draws from its own stream `(seed, grid index, replicate)`,
//! so results do not depend on how rayon schedules the work. Each study is a
//! reduction over the same per-replicate records.

use occscore_core::asymptotics::{self, PseudoTrue};
use occscore_core::estimation::{fit_full, fit_null, FitStatus};
use occscore_core::hypothesis::{
    lr_test, score_test_expected, score_test_observed, wald_test, Rule, SignificanceLevel, WaldVariance,
};
use occscore_core::inference::{self, InfoMethod, Survey, ThetaFull};
use occscore_core::linalg::{self, Matrix};
use occscore_core::model::{derive_stream, simulate_region, RegionSummary, Scenario};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Model(#[from] occscore_core::Error),
}

pub type Result<T, E = HarnessError> = std::result::Result<T, E>;

/// Everything needed to reproduce a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepConfig {
    pub scenario: Scenario,
    pub r_grid: Vec<f64>,
    pub replicates: u64,
    pub alpha: f64,
    pub base_seed: u64,
    #[serde(default)]
    pub wald_variance: WaldVariance,
    #[serde(default)]
    pub filtering: Filtering,
}

/// Which replicates enter a test's denominator in the power study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Filtering {
    /// A replicate counts for a test when the fits that test needs succeeded.
    #[default]
    PerTest,
    /// A replicate counts only when both fits succeeded and every statistic
    /// was computed, so all tests share one denominator.
    Common,
}

impl SweepConfig {
    pub fn new(scenario: Scenario, r_grid: Vec<f64>, replicates: u64, alpha: f64, base_seed: u64) -> Result<Self> {
        let config = Self { scenario, r_grid, replicates, alpha, base_seed, wald_variance: WaldVariance::Observed, filtering: Filtering::PerTest };
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.r_grid.is_empty() {
            return bad("R grid is empty".into());
        }
        if let Some(r) = self.r_grid.iter().find(|r| !(0.0..1.0).contains(*r)) {
            return bad(format!("R = {r} outside [0, 1)"));
        }
        if self.r_grid.windows(2).any(|w| w[0] >= w[1]) {
            return bad("R grid must be strictly increasing".into());
        }
        if self.replicates == 0 {
            return bad("replicates must be at least 1".into());
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return bad(format!("alpha = {} outside (0, 1)", self.alpha));
        }
        self.scenario.truth(self.r_grid[0])?;
        for d in self.scenario.designs {
            if d.n_sites == 0 || d.n_visits == 0 {
                return bad("designs need at least one site and one visit".into());
            }
        }
        Ok(())
    }

    pub fn level(&self) -> Result<SignificanceLevel> {
        Ok(SignificanceLevel::new(self.alpha)?)
    }

    pub fn truth(&self, r_index: usize) -> Result<ThetaFull> {
        Ok(self.scenario.truth(self.r_grid[r_index])?)
    }
}

/// `r_min, r_min + step, …` up to `r_max` inclusive, rounded to 1e-9 so that
/// grid points print cleanly.
pub fn r_grid(r_min: f64, r_max: f64, step: f64) -> Result<Vec<f64>> {
    if !(step > 0.0) || !(r_min <= r_max) {
        return Err(HarnessError::Config(format!("bad grid {r_min}..{r_max} step {step}")));
    }
    let n = ((r_max - r_min) / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|i| ((r_min + i as f64 * step) * 1e9).round() / 1e9).collect())
}

/// What one simulated dataset contributes to every study.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReplicateRecord {
    pub summaries: [RegionSummary; 2],
    pub null_status: FitStatus,
    pub full_status: FitStatus,
    pub wald: Option<f64>,
    pub lrt: Option<f64>,
    pub t_e: Option<f64>,
    pub t_o: Option<f64>,
    /// Eigenvalues of the 4×4 observed information at `Mθ̂'`, descending.
    pub null_info_eigenvalues: Option<[f64; 4]>,
}

pub fn simulate_survey(config: &SweepConfig, truth: &ThetaFull, r_index: usize, replicate: u64) -> Result<(Survey, [RegionSummary; 2])> {
    let mut rng = derive_stream(config.base_seed, r_index as u64, replicate);
    let designs = config.scenario.designs;
    let a = simulate_region(&designs[0], &truth.region(0), &mut rng);
    let b = simulate_region(&designs[1], &truth.region(1), &mut rng);
    Ok((Survey::from_summaries(designs, [a, b])?, [a, b]))
}

fn analyse_replicate(survey: &Survey, summaries: [RegionSummary; 2], config: &SweepConfig, level: &SignificanceLevel) -> ReplicateRecord {
    let null = fit_null(survey);
    let full = fit_full(survey);
    let stat = |r: std::result::Result<occscore_core::hypothesis::TestOutcome, _>| r.ok().map(|o| o.statistic);
    let null_info_eigenvalues = null
        .converged()
        .then(|| inference::observed_info(survey, &null.theta().embed(), InfoMethod::Analytic).ok())
        .flatten()
        .and_then(|j| linalg::sym_eigen(&j).ok())
        .map(|e| e.values);
    ReplicateRecord {
        summaries,
        null_status: null.status,
        full_status: full.status,
        wald: stat(wald_test(&full, survey, level, config.wald_variance)),
        lrt: stat(lr_test(&full, &null, level)),
        t_e: stat(score_test_expected(survey, &null, level)),
        t_o: stat(score_test_observed(survey, &null, level, Rule::Standard)),
        null_info_eigenvalues,
    }
}

/// All replicates at one grid point.
#[derive(Debug, Clone, PartialEq)]
pub struct GridRecords {
    pub r: f64,
    pub records: Vec<ReplicateRecord>,
}

/// Simulates and analyses every replicate at every grid point.
pub fn run_sweep(config: &SweepConfig) -> Result<Vec<GridRecords>> {
    config.validate()?;
    let level = config.level()?;
    let truths = (0..config.r_grid.len()).map(|i| config.truth(i)).collect::<Result<Vec<_>>>()?;
    let reps = config.replicates;
    let total = config.r_grid.len() as u64 * reps;
    let flat = (0..total)
        .into_par_iter()
        .map(|k| {
            let (i, rep) = ((k / reps) as usize, k % reps);
            let (survey, summaries) = simulate_survey(config, &truths[i], i, rep)?;
            Ok(analyse_replicate(&survey, summaries, config, &level))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(flat
        .chunks(reps as usize)
        .zip(&config.r_grid)
        .map(|(c, &r)| GridRecords { r, records: c.to_vec() })
        .collect())
}

/// The six decision procedures compared in the power study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PowerTest {
    Wald,
    Lrt,
    ScoreExpected,
    ScoreObserved,
    /// `T_O` under the modified rule.
    ScoreObservedModified,
    /// `T_O` under the standard rule, among positive statistics only.
    ScoreObservedPositive,
}

impl PowerTest {
    pub const ALL: [PowerTest; 6] = [
        PowerTest::Wald,
        PowerTest::Lrt,
        PowerTest::ScoreExpected,
        PowerTest::ScoreObserved,
        PowerTest::ScoreObservedModified,
        PowerTest::ScoreObservedPositive,
    ];

    pub fn label(self) -> &'static str {
        match self {
            PowerTest::Wald => "Wald",
            PowerTest::Lrt => "LRT",
            PowerTest::ScoreExpected => "T_E",
            PowerTest::ScoreObserved => "T_O",
            PowerTest::ScoreObservedModified => "T_O*",
            PowerTest::ScoreObservedPositive => "T_O+",
        }
    }

    /// `Some(reject)` when the replicate counts towards this test.
    pub fn decide(self, rec: &ReplicateRecord, level: &SignificanceLevel) -> Option<bool> {
        let std = |x: Option<f64>| x.map(|t| level.rejects(t, Rule::Standard));
        match self {
            PowerTest::Wald => std(rec.wald),
            PowerTest::Lrt => std(rec.lrt),
            PowerTest::ScoreExpected => std(rec.t_e),
            PowerTest::ScoreObserved => std(rec.t_o),
            PowerTest::ScoreObservedModified => rec.t_o.map(|t| level.rejects(t, Rule::ModifiedNegative)),
            PowerTest::ScoreObservedPositive => std(rec.t_o.filter(|&t| t > 0.0)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestRate {
    pub test: PowerTest,
    pub rejections: u64,
    pub n_valid: u64,
    /// `rejections / n_valid`; NaN when nothing was valid.
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerPoint {
    pub r: f64,
    pub replicates: u64,
    pub tests: Vec<TestRate>,
    pub n_positive_t_o: u64,
    /// Failed fits by status, `(status, null-fit count, full-fit count)`.
    pub failures: Vec<(FitStatus, u64, u64)>,
}

impl PowerPoint {
    pub fn rate(&self, test: PowerTest) -> &TestRate {
        self.tests.iter().find(|t| t.test == test).expect("every test is reported")
    }
}

const FAILURE_STATUSES: [FitStatus; 4] = [
    FitStatus::NoConvergence,
    FitStatus::NonInvertibleInformation,
    FitStatus::BoundaryEstimate,
    FitStatus::DegenerateData,
];

impl ReplicateRecord {
    /// Both fits converged and all four statistics exist.
    pub fn complete(&self) -> bool {
        self.null_status.is_converged()
            && self.full_status.is_converged()
            && [self.wald, self.lrt, self.t_e, self.t_o].iter().all(Option::is_some)
    }
}

pub fn power_point(grid: &GridRecords, level: &SignificanceLevel, filtering: Filtering) -> PowerPoint {
    let kept = |r: &&ReplicateRecord| filtering == Filtering::PerTest || r.complete();
    let tests = PowerTest::ALL
        .iter()
        .map(|&test| {
            let (mut rejections, mut n_valid) = (0, 0);
            for d in grid.records.iter().filter(kept).filter_map(|r| test.decide(r, level)) {
                n_valid += 1;
                rejections += u64::from(d);
            }
            TestRate { test, rejections, n_valid, rate: rejections as f64 / n_valid as f64 }
        })
        .collect();
    let failures = FAILURE_STATUSES
        .iter()
        .map(|&s| {
            let null = grid.records.iter().filter(|r| r.null_status == s).count() as u64;
            let full = grid.records.iter().filter(|r| r.full_status == s).count() as u64;
            (s, null, full)
        })
        .collect();
    PowerPoint {
        r: grid.r,
        replicates: grid.records.len() as u64,
        tests,
        n_positive_t_o: grid.records.iter().filter(|r| r.t_o.is_some_and(|t| t > 0.0)).count() as u64,
        failures,
    }
}

pub fn run_power_sweep(config: &SweepConfig) -> Result<Vec<PowerPoint>> {
    let level = config.level()?;
    Ok(run_sweep(config)?.iter().map(|g| power_point(g, &level, config.filtering)).collect())
}

/// Lower median by exact selection; `None` for an empty sample.
pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let k = (values.len() - 1) / 2;
    let (_, m, _) = values.select_nth_unstable_by(k, f64::total_cmp);
    Some(*m)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MedianRow {
    pub r: f64,
    /// Replicates where both `T_E` and `T_O` were computed.
    pub n: u64,
    pub t_e: Option<f64>,
    pub t_o: Option<f64>,
    /// Median of the per-replicate ratio `T_E / T_O`.
    pub ratio: Option<f64>,
    pub n_positive: u64,
    pub t_o_positive: Option<f64>,
    pub n_negative: u64,
    pub t_o_negative: Option<f64>,
}

pub fn median_row(grid: &GridRecords) -> MedianRow {
    let pairs: Vec<(f64, f64)> = grid.records.iter().filter_map(|r| Some((r.t_e?, r.t_o?))).collect();
    let mut t_e: Vec<f64> = pairs.iter().map(|p| p.0).collect();
    let mut t_o: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let mut ratio: Vec<f64> = pairs.iter().map(|p| p.0 / p.1).collect();
    let mut pos: Vec<f64> = t_o.iter().copied().filter(|&t| t > 0.0).collect();
    let mut neg: Vec<f64> = t_o.iter().copied().filter(|&t| t < 0.0).collect();
    MedianRow {
        r: grid.r,
        n: pairs.len() as u64,
        t_e: median(&mut t_e),
        t_o: median(&mut t_o),
        ratio: median(&mut ratio),
        n_positive: pos.len() as u64,
        t_o_positive: median(&mut pos),
        n_negative: neg.len() as u64,
        t_o_negative: median(&mut neg),
    }
}

pub fn run_median_curves(config: &SweepConfig) -> Result<Vec<MedianRow>> {
    Ok(run_sweep(config)?.iter().map(median_row).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgreementVariant {
    /// `T_E` against `T_O` under the standard rule, among `T_O > 0`.
    PositiveOnly,
    /// `T_E` against `T_O` under the modified rule, all valid replicates.
    Modified,
}

impl AgreementVariant {
    pub fn label(self) -> &'static str {
        match self {
            AgreementVariant::PositiveOnly => "positive_only",
            AgreementVariant::Modified => "modified",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgreementRow {
    pub r: f64,
    pub variant: AgreementVariant,
    /// Fraction of considered replicates where both tests decide alike.
    pub agreement: f64,
    /// Replicates considered.
    pub n: u64,
    pub replicates: u64,
}

pub fn agreement_row(grid: &GridRecords, level: &SignificanceLevel, variant: AgreementVariant) -> AgreementRow {
    let (mut agree, mut n) = (0u64, 0u64);
    for rec in &grid.records {
        let (Some(t_e), Some(t_o)) = (rec.t_e, rec.t_o) else { continue };
        let rule = match variant {
            AgreementVariant::PositiveOnly if t_o <= 0.0 => continue,
            AgreementVariant::PositiveOnly => Rule::Standard,
            AgreementVariant::Modified => Rule::ModifiedNegative,
        };
        n += 1;
        agree += u64::from(level.rejects(t_e, Rule::Standard) == level.rejects(t_o, rule));
    }
    AgreementRow { r: grid.r, variant, agreement: agree as f64 / n as f64, n, replicates: grid.records.len() as u64 }
}

pub fn run_agreement(config: &SweepConfig, variant: AgreementVariant) -> Result<Vec<AgreementRow>> {
    let level = config.level()?;
    Ok(run_sweep(config)?.iter().map(|g| agreement_row(g, &level, variant)).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EigenMedianRow {
    pub r: f64,
    pub n: u64,
    /// Median of the i-th largest eigenvalue, taken index by index.
    pub medians: [f64; 4],
}

pub fn eigen_median_row(grid: &GridRecords) -> EigenMedianRow {
    let spectra: Vec<[f64; 4]> = grid.records.iter().filter_map(|r| r.null_info_eigenvalues).collect();
    let medians = std::array::from_fn(|i| {
        let mut v: Vec<f64> = spectra.iter().map(|s| s[i]).collect();
        median(&mut v).unwrap_or(f64::NAN)
    });
    EigenMedianRow { r: grid.r, n: spectra.len() as u64, medians }
}

pub fn run_eigen_median_curves(config: &SweepConfig) -> Result<Vec<EigenMedianRow>> {
    Ok(run_sweep(config)?.iter().map(eigen_median_row).collect())
}

/// Per-replicate statistic pairs for a scatter plot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScatterPoint {
    pub r: f64,
    pub replicate: u64,
    pub t_e: f64,
    pub t_o: f64,
}

pub fn scatter(grids: &[GridRecords]) -> Vec<ScatterPoint> {
    grids
        .iter()
        .flat_map(|g| {
            g.records.iter().enumerate().filter_map(move |(i, rec)| {
                Some(ScatterPoint { r: g.r, replicate: i as u64, t_e: rec.t_e?, t_o: rec.t_o? })
            })
        })
        .collect()
}

/// Result of the reciprocal-eigenvalue experiment at one effect size.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Fig6Result {
    pub r: f64,
    pub pseudo_true: PseudoTrue,
    /// Sample covariance of the simulated scores at `Mθ'_S`.
    pub sigma: Matrix<4>,
    /// `(replicate, 1/λ)` for every replicate whose spectrum was computable.
    pub reciprocals: Vec<(u64, f64)>,
    pub failures: u64,
}

/// Simulates datasets at `config.r_grid[0]`, estimates `Σ` from their scores
/// at the pseudo-true point `Mθ'_S`, then reports for each dataset the
/// reciprocal of the nonzero eigenvalue of `BΣ` with `B` built from that
/// dataset's observed information at `Mθ'_S`.
pub fn run_fig6_experiment(config: &SweepConfig) -> Result<Fig6Result> {
    config.validate()?;
    let truth = config.truth(0)?;
    let pseudo_true = asymptotics::solve_pseudo_true(&truth, config.scenario.designs)?;
    let at = pseudo_true.theta_null_star.embed();
    let draws = (0..config.replicates)
        .into_par_iter()
        .map(|rep| {
            let (survey, _) = simulate_survey(config, &truth, 0, rep)?;
            Ok(asymptotics::score_and_info(&survey, &at)?)
        })
        .collect::<Result<Vec<_>>>()?;
    let scores: Vec<_> = draws.iter().map(|d| d.0).collect();
    let sigma = asymptotics::sample_covariance(&scores);
    let spectra: Vec<Option<f64>> = draws
        .par_iter()
        .map(|(_, j)| asymptotics::projected_spectrum(j, &sigma).ok().map(|s| 1.0 / s.leading()))
        .collect();
    let reciprocals: Vec<(u64, f64)> =
        spectra.iter().enumerate().filter_map(|(i, v)| v.map(|v| (i as u64, v))).collect();
    let failures = config.replicates - reciprocals.len() as u64;
    Ok(Fig6Result { r: config.r_grid[0], pseudo_true, sigma, reciprocals, failures })
}
