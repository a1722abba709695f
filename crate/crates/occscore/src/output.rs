//! Tables written as CSV or JSON, one file per study.
//!
//! Real numbers are rounded to six significant digits in both formats, so the
//! two carry the same information and repeated runs are byte-identical.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use occscore_core::asymptotics::CurvePoint;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use crate::harness::{AgreementRow, EigenMedianRow, Fig6Result, MedianRow, PowerPoint, ScatterPoint};

#[derive(Debug, Error)]
pub enum OutputError {
    #[error("cannot write {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cannot encode {path}: {source}")]
    Csv { path: PathBuf, source: csv::Error },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    #[default]
    Csv,
    Json,
}

impl Format {
    pub fn extension(self) -> &'static str {
        match self {
            Format::Csv => "csv",
            Format::Json => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Int(u64),
    Real(f64),
    Text(String),
    Missing,
}

impl From<u64> for Cell {
    fn from(v: u64) -> Self {
        Cell::Int(v)
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Missing, Cell::Real)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_owned())
    }
}

/// Rounds to six significant digits; non-finite values pass through.
pub fn round_sig6(x: f64) -> f64 {
    if !x.is_finite() || x == 0.0 {
        return x;
    }
    format!("{x:.5e}").parse().expect("formatted float parses")
}

/// Six significant digits without trailing zeros or exponent noise.
pub fn format_sig6(x: f64) -> String {
    if x.is_nan() {
        return "NaN".into();
    }
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    let r = round_sig6(x);
    if r != 0.0 && (r.abs() < 1e-4 || r.abs() >= 1e15) {
        format!("{r:e}")
    } else {
        format!("{r}")
    }
}

impl Cell {
    fn to_text(&self) -> String {
        match self {
            Cell::Int(v) => v.to_string(),
            Cell::Real(v) => format_sig6(*v),
            Cell::Text(s) => s.clone(),
            Cell::Missing => String::new(),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Int(v) => Value::from(*v),
            Cell::Real(v) if v.is_finite() => Value::from(round_sig6(*v)),
            Cell::Real(_) | Cell::Missing => Value::Null,
            Cell::Text(s) => Value::from(s.as_str()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: &'static str,
    pub headers: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &'static str, headers: &[&'static str]) -> Self {
        Self { name, headers: headers.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.headers.len(), "row width of {}", self.name);
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> Result<Vec<u8>, csv::Error> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.headers)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::to_text))?;
        }
        w.into_inner().map_err(|e| e.into_error().into())
    }

    pub fn to_json(&self) -> Vec<u8> {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let obj: Map<String, Value> =
                    self.headers.iter().zip(row).map(|(h, c)| ((*h).to_owned(), c.to_json())).collect();
                Value::Object(obj)
            })
            .collect();
        let mut out = serde_json::to_vec_pretty(&rows).expect("JSON values serialise");
        out.push(b'\n');
        out
    }

    /// Writes `<dir>/<name>.<ext>` and returns the path.
    pub fn write(&self, dir: &Path, format: Format) -> Result<PathBuf, OutputError> {
        let path = dir.join(format!("{}.{}", self.name, format.extension()));
        let bytes = match format {
            Format::Csv => self.to_csv().map_err(|source| OutputError::Csv { path: path.clone(), source })?,
            Format::Json => self.to_json(),
        };
        write_file(&path, &bytes)?;
        Ok(path)
    }
}

pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), OutputError> {
    let io = |source| OutputError::Io { path: path.to_owned(), source };
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir).map_err(io)?;
    }
    let mut f = fs::File::create(path).map_err(io)?;
    f.write_all(bytes).map_err(io)
}

pub fn power_table(points: &[PowerPoint]) -> Table {
    let mut t = Table::new("power", &["R", "test", "rate", "n_valid", "rejections", "replicates"]);
    for p in points {
        for r in &p.tests {
            t.push(vec![p.r.into(), r.test.label().into(), r.rate.into(), r.n_valid.into(), r.rejections.into(), p.replicates.into()]);
        }
    }
    t
}

/// Failed fits per grid point and status.
pub fn failures_table(points: &[PowerPoint]) -> Table {
    let mut t = Table::new("failures", &["R", "status", "null_fit", "full_fit", "replicates"]);
    for p in points {
        for (status, null, full) in &p.failures {
            t.push(vec![
                p.r.into(),
                format!("{status:?}").as_str().into(),
                (*null).into(),
                (*full).into(),
                p.replicates.into(),
            ]);
        }
    }
    t
}

pub fn medians_table(rows: &[MedianRow]) -> Table {
    let mut t = Table::new(
        "medians",
        &["R", "n", "T_E", "T_O", "T_E_over_T_O", "n_positive", "T_O_positive", "n_negative", "T_O_negative"],
    );
    for m in rows {
        t.push(vec![
            m.r.into(),
            m.n.into(),
            m.t_e.into(),
            m.t_o.into(),
            m.ratio.into(),
            m.n_positive.into(),
            m.t_o_positive.into(),
            m.n_negative.into(),
            m.t_o_negative.into(),
        ]);
    }
    t
}

pub fn agreement_table(rows: &[AgreementRow]) -> Table {
    let mut t = Table::new("agreement", &["R", "variant", "agreement", "n", "replicates", "considered_fraction"]);
    for a in rows {
        t.push(vec![
            a.r.into(),
            a.variant.label().into(),
            a.agreement.into(),
            a.n.into(),
            a.replicates.into(),
            (a.n as f64 / a.replicates as f64).into(),
        ]);
    }
    t
}

/// Simulated medians next to the analytic expected-information curve.
pub fn eigen_table(simulated: &[EigenMedianRow], analytic: &[CurvePoint]) -> Table {
    let mut t = Table::new("eigen", &["R", "source", "n", "eig1", "eig2", "eig3", "eig4"]);
    for e in simulated {
        let mut row = vec![e.r.into(), "simulated".into(), e.n.into()];
        row.extend(e.medians.iter().map(|&v| Cell::from(v)));
        t.push(row);
    }
    for c in analytic {
        let mut row = vec![c.r.into(), "analytic".into(), Cell::Missing];
        row.extend(c.expected_info.eigenvalues.iter().map(|&v| Cell::from(v)));
        t.push(row);
    }
    t
}

pub fn asymptotics_table(points: &[CurvePoint]) -> Table {
    let mut t = Table::new(
        "asymptotics",
        &["R", "psi_star", "p1_star", "p2_star", "residual", "eig1", "eig2", "eig3", "eig4", "projected_eigenvalue", "reciprocal"],
    );
    for c in points {
        let th = c.pseudo_true.theta_null_star;
        let lambda = c.projected.leading();
        let mut row = vec![c.r.into(), th.psi.into(), th.p1.into(), th.p2.into(), c.pseudo_true.residual.into()];
        row.extend(c.expected_info.eigenvalues.iter().map(|&v| Cell::from(v)));
        row.push(lambda.into());
        row.push((1.0 / lambda).into());
        t.push(row);
    }
    t
}

pub fn fig6_table(result: &Fig6Result) -> Table {
    let mut t = Table::new("fig6", &["R", "replicate", "reciprocal_eigenvalue"]);
    for &(rep, v) in &result.reciprocals {
        t.push(vec![result.r.into(), rep.into(), v.into()]);
    }
    t
}

pub fn scatter_table(points: &[ScatterPoint]) -> Table {
    let mut t = Table::new("scatter", &["R", "replicate", "T_E", "T_O"]);
    for p in points {
        t.push(vec![p.r.into(), p.replicate.into(), p.t_e.into(), p.t_o.into()]);
    }
    t
}
