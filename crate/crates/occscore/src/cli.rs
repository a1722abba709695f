//! `occscore` command line.
//!
//! Exit status: 0 on success (fit failures and non-rejections are results, not
//! errors), 2 for usage errors, 3 for I/O and parse errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use occscore_core::asymptotics;
use occscore_core::hypothesis::{Rule, SignificanceLevel, WaldVariance};
use occscore_core::model::{RegionDesign, Scenario};
use serde::Serialize;

use crate::dataset::read_dataset;
use crate::harness::{
    self, agreement_row, eigen_median_row, median_row, power_point, run_sweep, AgreementVariant, Filtering, SweepConfig,
};
use crate::output::{self, write_file, Format, Table};
use crate::report::test_report;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_IO: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "occscore", version, about = "Score, Wald and likelihood-ratio tests for equal occupancy in two regions")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Analyse a two-region dataset.
    Test(TestArgs),
    /// Rejection rates of every test over the R grid.
    Power(PowerArgs),
    /// Medians of T_E and T_O over the R grid.
    Medians(StudyArgs),
    /// Agreement of T_E and T_O decisions over the R grid.
    Agreement(StudyArgs),
    /// Medians of the observed-information eigenvalues at the null fit, with the analytic curve.
    Eigen(StudyArgs),
    /// Pseudo-true null parameters and expected-information spectra (no simulation).
    Asymptotics(StudyArgs),
    /// Reciprocal nonzero eigenvalue of the projected matrix, one per replicate.
    Fig6(Fig6Args),
    /// Per-replicate (T_E, T_O) pairs.
    Scatter(StudyArgs),
    /// Every simulation table from a single sweep, plus the asymptotic curve.
    All(PowerArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RuleArg {
    #[default]
    Standard,
    Modified,
}

impl From<RuleArg> for Rule {
    fn from(r: RuleArg) -> Self {
        match r {
            RuleArg::Standard => Rule::Standard,
            RuleArg::Modified => Rule::ModifiedNegative,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum)]
pub enum ReportFormat {
    #[default]
    Text,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum WaldArg {
    #[default]
    Observed,
    Expected,
}

impl From<WaldArg> for WaldVariance {
    fn from(w: WaldArg) -> Self {
        match w {
            WaldArg::Observed => WaldVariance::Observed,
            WaldArg::Expected => WaldVariance::Expected,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilteringArg {
    #[default]
    PerTest,
    Common,
}

impl From<FilteringArg> for Filtering {
    fn from(f: FilteringArg) -> Self {
        match f {
            FilteringArg::PerTest => Filtering::PerTest,
            FilteringArg::Common => Filtering::Common,
        }
    }
}

fn open_unit(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if v > 0.0 && v < 1.0 {
        Ok(v)
    } else {
        Err(format!("{v} must lie strictly inside (0, 1)"))
    }
}

fn effect_size(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if (0.0..1.0).contains(&v) {
        Ok(v)
    } else {
        Err(format!("{v} must lie in [0, 1)"))
    }
}

fn positive_real(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(format!("{v} must be positive"))
    }
}

fn positive_count(s: &str) -> Result<u64, String> {
    match s.parse::<u64>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(format!("{s:?} must be an integer of at least 1")),
    }
}

fn positive_u32(s: &str) -> Result<u32, String> {
    match s.parse::<u32>() {
        Ok(v) if v >= 1 => Ok(v),
        _ => Err(format!("{s:?} must be an integer of at least 1")),
    }
}

#[derive(Debug, Clone, Args)]
pub struct TestArgs {
    /// Dataset in the summary (region,N,K,s_d,d) or site (region,site,K,y) layout.
    pub input: PathBuf,
    #[arg(long, default_value = "0.05", value_parser = open_unit)]
    pub alpha: f64,
    /// Rule behind the `reject` field; both rules are always reported.
    #[arg(long, value_enum, default_value_t)]
    pub rule: RuleArg,
    #[arg(long, value_enum, default_value_t)]
    pub wald_variance: WaldArg,
    #[arg(long, value_enum, default_value_t)]
    pub format: ReportFormat,
}

#[derive(Debug, Clone, Args)]
pub struct ScenarioArgs {
    /// Occupancy in region 1.
    #[arg(long, default_value = "0.8", value_parser = open_unit)]
    pub psi1: f64,
    /// Occupancy in region 2; replaces the R grid by the single point R = 1 − psi2/psi1.
    #[arg(long, value_parser = open_unit)]
    pub psi2: Option<f64>,
    #[arg(long, default_value = "0.5", value_parser = open_unit)]
    pub p1: f64,
    #[arg(long, default_value = "0.5", value_parser = open_unit)]
    pub p2: f64,
    /// Visits per site in both regions.
    #[arg(long = "K", default_value = "3", value_parser = positive_u32)]
    pub k: u32,
    #[arg(long = "N1", default_value = "50", value_parser = positive_u32)]
    pub n1: u32,
    #[arg(long = "N2", default_value = "50", value_parser = positive_u32)]
    pub n2: u32,
    #[arg(long, default_value = "0.05", value_parser = open_unit)]
    pub alpha: f64,
    #[arg(long, default_value = "1")]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t)]
    pub wald_variance: WaldArg,
    #[arg(long, default_value = ".")]
    pub out_dir: PathBuf,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    #[arg(long, default_value = "0", value_parser = effect_size)]
    pub r_min: f64,
    #[arg(long, default_value = "0.9", value_parser = effect_size)]
    pub r_max: f64,
    #[arg(long, default_value = "0.025", value_parser = positive_real)]
    pub r_step: f64,
}

#[derive(Debug, Clone, Args)]
pub struct StudyArgs {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    /// Replicates per grid point.
    #[arg(long, default_value = "10000", value_parser = positive_count)]
    pub reps: u64,
    /// Kept in the resolved configuration; `test` is where it changes decisions.
    #[arg(long, value_enum, default_value_t)]
    pub rule: RuleArg,
}

#[derive(Debug, Clone, Args)]
pub struct PowerArgs {
    #[command(flatten)]
    pub study: StudyArgs,
    /// Per-test denominators, or one denominator of fully successful replicates.
    #[arg(long, value_enum, default_value_t)]
    pub filtering: FilteringArg,
}

#[derive(Debug, Clone, Args)]
pub struct Fig6Args {
    #[command(flatten)]
    pub scenario: ScenarioArgs,
    /// Effect size of the single grid point.
    #[arg(long, default_value = "0.6", value_parser = effect_size)]
    pub r: f64,
    #[arg(long, default_value = "1000", value_parser = positive_count)]
    pub reps: u64,
    #[arg(long, value_enum, default_value_t)]
    pub rule: RuleArg,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    Io(String),
}

impl From<output::OutputError> for Failure {
    fn from(e: output::OutputError) -> Self {
        Failure::Io(e.to_string())
    }
}

impl From<harness::HarnessError> for Failure {
    fn from(e: harness::HarnessError) -> Self {
        match e {
            harness::HarnessError::Config(m) => Failure::Usage(m),
            harness::HarnessError::Model(e) => Failure::Usage(e.to_string()),
        }
    }
}

impl From<occscore_core::Error> for Failure {
    fn from(e: occscore_core::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

/// Resolved configuration, echoed on stdout and saved as `config.json`.
#[derive(Debug, Serialize)]
struct Resolved<'a> {
    command: &'static str,
    version: &'static str,
    sweep: &'a SweepConfig,
    format: Format,
    rule: RuleArg,
}

impl ScenarioArgs {
    fn scenario(&self) -> Result<Scenario, Failure> {
        let design = |n| RegionDesign::new(n, self.k);
        Ok(Scenario { psi1: self.psi1, p1: self.p1, p2: self.p2, designs: [design(self.n1)?, design(self.n2)?] })
    }

    /// `R` implied by `--psi2`, if given.
    fn psi2_point(&self) -> Result<Option<f64>, Failure> {
        let Some(psi2) = self.psi2 else { return Ok(None) };
        if psi2 > self.psi1 {
            return Err(Failure::Usage(format!("--psi2 {psi2} exceeds --psi1 {}; R = 1 - psi2/psi1 must lie in [0, 1)", self.psi1)));
        }
        Ok(Some(1.0 - psi2 / self.psi1))
    }

    fn sweep(&self, r_grid: Vec<f64>, replicates: u64, filtering: Filtering) -> Result<SweepConfig, Failure> {
        let mut config = SweepConfig::new(self.scenario()?, r_grid, replicates, self.alpha, self.seed)?;
        config.wald_variance = self.wald_variance.into();
        config.filtering = filtering;
        Ok(config)
    }
}

impl StudyArgs {
    fn sweep(&self, filtering: Filtering) -> Result<SweepConfig, Failure> {
        let grid = match self.scenario.psi2_point()? {
            Some(r) => vec![r],
            None => {
                if self.grid.r_min > self.grid.r_max {
                    return Err(Failure::Usage(format!(
                        "--r-min {} exceeds --r-max {}",
                        self.grid.r_min, self.grid.r_max
                    )));
                }
                harness::r_grid(self.grid.r_min, self.grid.r_max, self.grid.r_step)?
            }
        };
        self.scenario.sweep(grid, self.reps, filtering)
    }
}

fn announce(out: &mut dyn Write, resolved: &Resolved<'_>, dir: &Path) -> Result<(), Failure> {
    let mut json = serde_json::to_vec_pretty(resolved).expect("configuration serialises");
    json.push(b'\n');
    out.write_all(&json).map_err(|e| Failure::Io(format!("stdout: {e}")))?;
    write_file(&dir.join("config.json"), &json)?;
    Ok(())
}

fn write_tables(out: &mut dyn Write, tables: &[Table], dir: &Path, format: Format) -> Result<(), Failure> {
    for t in tables {
        let path = t.write(dir, format)?;
        writeln!(out, "wrote {}", path.display()).map_err(|e| Failure::Io(format!("stdout: {e}")))?;
    }
    Ok(())
}

fn study(
    out: &mut dyn Write,
    command: &'static str,
    args: &StudyArgs,
    filtering: Option<FilteringArg>,
    tables: impl FnOnce(&SweepConfig) -> Result<Vec<Table>, Failure>,
) -> Result<(), Failure> {
    let config = args.sweep(filtering.unwrap_or_default().into())?;
    let s = &args.scenario;
    announce(out, &Resolved { command, version: env!("CARGO_PKG_VERSION"), sweep: &config, format: s.format, rule: args.rule }, &s.out_dir)?;
    let tables = tables(&config)?;
    write_tables(out, &tables, &s.out_dir, s.format)
}

fn power_tables(config: &SweepConfig, level: &SignificanceLevel) -> Result<Vec<Table>, Failure> {
    let points: Vec<_> = run_sweep(config)?.iter().map(|g| power_point(g, level, config.filtering)).collect();
    Ok(vec![output::power_table(&points), output::failures_table(&points)])
}

fn analytic_curve(config: &SweepConfig) -> Result<Vec<asymptotics::CurvePoint>, Failure> {
    Ok(config.r_grid.iter().map(|&r| asymptotics::curve_point(&config.scenario, r)).collect::<Result<_, _>>()?)
}

fn dispatch(cli: Cli, out: &mut dyn Write) -> Result<(), Failure> {
    match cli.command {
        Command::Test(a) => {
            let dataset = read_dataset(&a.input).map_err(|e| match e {
                crate::dataset::DatasetError::Io { .. } => Failure::Io(e.to_string()),
                _ => Failure::Io(format!("{}: {e}", a.input.display())),
            })?;
            let level = SignificanceLevel::new(a.alpha)?;
            let report = test_report(&dataset, &level, a.wald_variance.into(), a.rule.into());
            let text = match a.format {
                ReportFormat::Text => report.to_string(),
                ReportFormat::Json => serde_json::to_string_pretty(&report).expect("report serialises") + "\n",
            };
            out.write_all(text.as_bytes()).map_err(|e| Failure::Io(format!("stdout: {e}")))
        }
        Command::Power(a) => study(out, "power", &a.study, Some(a.filtering), |c| power_tables(c, &c.level()?)),
        Command::Medians(a) => study(out, "medians", &a, None, |c| {
            let rows: Vec<_> = run_sweep(c)?.iter().map(median_row).collect();
            Ok(vec![output::medians_table(&rows)])
        }),
        Command::Agreement(a) => study(out, "agreement", &a, None, |c| {
            let level = c.level()?;
            let grids = run_sweep(c)?;
            let rows: Vec<_> = [AgreementVariant::PositiveOnly, AgreementVariant::Modified]
                .iter()
                .flat_map(|&v| grids.iter().map(move |g| (g, v)))
                .map(|(g, v)| agreement_row(g, &level, v))
                .collect();
            Ok(vec![output::agreement_table(&rows)])
        }),
        Command::Eigen(a) => study(out, "eigen", &a, None, |c| {
            let rows: Vec<_> = run_sweep(c)?.iter().map(eigen_median_row).collect();
            Ok(vec![output::eigen_table(&rows, &analytic_curve(c)?)])
        }),
        Command::Asymptotics(a) => study(out, "asymptotics", &a, None, |c| Ok(vec![output::asymptotics_table(&analytic_curve(c)?)])),
        Command::Scatter(a) => study(out, "scatter", &a, None, |c| Ok(vec![output::scatter_table(&harness::scatter(&run_sweep(c)?))])),
        Command::All(a) => study(out, "all", &a.study, Some(a.filtering), |c| {
            let level = c.level()?;
            let grids = run_sweep(c)?;
            let points: Vec<_> = grids.iter().map(|g| power_point(g, &level, c.filtering)).collect();
            let medians: Vec<_> = grids.iter().map(median_row).collect();
            let agreement: Vec<_> = [AgreementVariant::PositiveOnly, AgreementVariant::Modified]
                .iter()
                .flat_map(|&v| grids.iter().map(move |g| agreement_row(g, &level, v)))
                .collect();
            let eigen: Vec<_> = grids.iter().map(eigen_median_row).collect();
            let curve = analytic_curve(c)?;
            Ok(vec![
                output::power_table(&points),
                output::failures_table(&points),
                output::medians_table(&medians),
                output::agreement_table(&agreement),
                output::eigen_table(&eigen, &curve),
                output::asymptotics_table(&curve),
                output::scatter_table(&harness::scatter(&grids)),
            ])
        }),
        Command::Fig6(a) => {
            let r = a.scenario.psi2_point()?.unwrap_or(a.r);
            let config = a.scenario.sweep(vec![r], a.reps, Filtering::PerTest)?;
            let s = &a.scenario;
            announce(
                out,
                &Resolved { command: "fig6", version: env!("CARGO_PKG_VERSION"), sweep: &config, format: s.format, rule: a.rule },
                &s.out_dir,
            )?;
            let result = harness::run_fig6_experiment(&config)?;
            write_tables(out, &[output::fig6_table(&result)], &s.out_dir, s.format)
        }
    }
}

/// Runs the command line and returns the exit status.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = e.exit_code();
            let rendered = e.render().to_string();
            let _ = if code == 0 { out.write_all(rendered.as_bytes()) } else { err.write_all(rendered.as_bytes()) };
            return if code == 0 { EXIT_OK } else { EXIT_USAGE };
        }
    };
    match dispatch(cli, out) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_USAGE
        }
        Err(Failure::Io(m)) => {
            let _ = writeln!(err, "error: {m}");
            EXIT_IO
        }
    }
}
