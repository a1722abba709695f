//! Two-region survey files.
//!
//! Two CSV layouts are accepted, told apart by the header row:
//!
//! ```text
//! region,N,K,s_d,d
//! 1,50,3,37,59
//! 2,50,3,30,44
//! ```
//!
//! ```text
//! region,site,K,y
//! 1,a01,3,2
//! 1,a02,3,0
//! 2,b01,3,1
//! ```
//!
//! Site-level records are aggregated: `N` is the number of sites listed for the
//! region, `s_d` the number with `y > 0` and `d` the sum of `y`. Lines starting
//! with `#` and blank lines are ignored.

use std::collections::BTreeSet;
use std::fs;
use std::path::Path;

use occscore_core::inference::Survey;
use occscore_core::model::{RegionDesign, RegionSummary};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot read {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("{0}")]
    Invalid(String),
}

fn parse_err(line: u64, message: impl Into<String>) -> DatasetError {
    DatasetError::Parse { line, message: message.into() }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Layout {
    Summary,
    Site,
}

/// A parsed survey: one design and one summary per region.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Dataset {
    pub layout: Layout,
    pub designs: [RegionDesign; 2],
    pub summaries: [RegionSummary; 2],
}

impl Dataset {
    pub fn survey(&self) -> Survey {
        Survey::from_summaries(self.designs, self.summaries).expect("summaries validated on load")
    }
}

pub fn read_dataset(path: &Path) -> Result<Dataset, DatasetError> {
    let text = fs::read_to_string(path).map_err(|source| DatasetError::Io { path: path.display().to_string(), source })?;
    parse_dataset(&text)
}

pub fn parse_dataset(text: &str) -> Result<Dataset, DatasetError> {
    let mut records = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i as u64 + 1, l))
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(line, l)| parse_line(line, l).map(|rec| (line, rec)));
    let (header_line, header) = records.next().ok_or_else(|| DatasetError::Invalid("empty dataset".into()))??;
    let columns: Vec<String> = header.iter().map(|c| c.to_ascii_lowercase()).collect();
    let layout = match columns.iter().map(String::as_str).collect::<Vec<_>>().as_slice() {
        ["region", "n", "k", "s_d", "d"] => Layout::Summary,
        ["region", "site", "k", "y"] => Layout::Site,
        _ => {
            return Err(parse_err(
                header_line,
                format!("unrecognised header {:?}; expected region,N,K,s_d,d or region,site,K,y", header.iter().collect::<Vec<_>>()),
            ))
        }
    };
    let mut rows = Vec::new();
    for rec in records {
        let (line, rec) = rec?;
        if rec.len() != columns.len() {
            return Err(parse_err(line, format!("expected {} fields, found {}", columns.len(), rec.len())));
        }
        rows.push((line, rec));
    }
    match layout {
        Layout::Summary => summary_layout(&rows),
        Layout::Site => site_layout(&rows),
    }
}

fn parse_line(line: u64, text: &str) -> Result<csv::StringRecord, DatasetError> {
    let mut reader = csv::ReaderBuilder::new().has_headers(false).trim(csv::Trim::All).from_reader(text.as_bytes());
    let mut rec = csv::StringRecord::new();
    match reader.read_record(&mut rec) {
        Ok(true) => Ok(rec),
        Ok(false) => Err(parse_err(line, "empty record")),
        Err(e) => Err(parse_err(line, e.to_string())),
    }
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, idx: usize, name: &str, line: u64) -> Result<T, DatasetError> {
    let raw = &rec[idx];
    raw.parse().map_err(|_| parse_err(line, format!("{name} = {raw:?} is not a non-negative integer")))
}

fn region_index(rec: &csv::StringRecord, line: u64) -> Result<usize, DatasetError> {
    match &rec[0] {
        "1" => Ok(0),
        "2" => Ok(1),
        other => Err(parse_err(line, format!("region = {other:?} must be 1 or 2"))),
    }
}

fn summary_layout(rows: &[(u64, csv::StringRecord)]) -> Result<Dataset, DatasetError> {
    let mut found: [Option<(RegionDesign, RegionSummary)>; 2] = [None, None];
    for (line, rec) in rows {
        let line = *line;
        let j = region_index(rec, line)?;
        if found[j].is_some() {
            return Err(parse_err(line, format!("region {} appears twice", j + 1)));
        }
        let n: u32 = field(rec, 1, "N", line)?;
        let k: u32 = field(rec, 2, "K", line)?;
        let s: u32 = field(rec, 3, "s_d", line)?;
        let d: u64 = field(rec, 4, "d", line)?;
        let design = RegionDesign::new(n, k).map_err(|e| parse_err(line, e.to_string()))?;
        let summary = RegionSummary::new(s, d, &design).map_err(|e| parse_err(line, e.to_string()))?;
        found[j] = Some((design, summary));
    }
    finish(Layout::Summary, found)
}

fn site_layout(rows: &[(u64, csv::StringRecord)]) -> Result<Dataset, DatasetError> {
    let mut visits: [Option<u32>; 2] = [None, None];
    let mut sites: [BTreeSet<String>; 2] = Default::default();
    let mut detected = [0u32; 2];
    let mut detections = [0u64; 2];
    for (line, rec) in rows {
        let line = *line;
        let j = region_index(rec, line)?;
        let site = rec[1].to_owned();
        if site.is_empty() {
            return Err(parse_err(line, "empty site id"));
        }
        let k: u32 = field(rec, 2, "K", line)?;
        let y: u32 = field(rec, 3, "y", line)?;
        if k == 0 {
            return Err(parse_err(line, "K must be at least 1"));
        }
        match visits[j] {
            Some(k0) if k0 != k => {
                return Err(parse_err(line, format!("K = {k} differs from K = {k0} earlier in region {}", j + 1)))
            }
            _ => visits[j] = Some(k),
        }
        if y > k {
            return Err(parse_err(line, format!("y = {y} exceeds K = {k}")));
        }
        if !sites[j].insert(site.clone()) {
            return Err(parse_err(line, format!("site {site:?} appears twice in region {}", j + 1)));
        }
        if y > 0 {
            detected[j] += 1;
        }
        detections[j] += u64::from(y);
    }
    let mut found: [Option<(RegionDesign, RegionSummary)>; 2] = [None, None];
    for j in 0..2 {
        if let Some(k) = visits[j] {
            let n = u32::try_from(sites[j].len()).map_err(|_| DatasetError::Invalid("too many sites".into()))?;
            let design = RegionDesign::new(n, k).map_err(|e| DatasetError::Invalid(e.to_string()))?;
            let summary =
                RegionSummary::new(detected[j], detections[j], &design).map_err(|e| DatasetError::Invalid(e.to_string()))?;
            found[j] = Some((design, summary));
        }
    }
    finish(Layout::Site, found)
}

fn finish(layout: Layout, found: [Option<(RegionDesign, RegionSummary)>; 2]) -> Result<Dataset, DatasetError> {
    match found {
        [Some((d1, s1)), Some((d2, s2))] => Ok(Dataset { layout, designs: [d1, d2], summaries: [s1, s2] }),
        [None, _] => Err(DatasetError::Invalid("region 1 is missing".into())),
        [_, None] => Err(DatasetError::Invalid("region 2 is missing".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn summary_layout_with_comments() {
        let text = "# survey\nregion,N,K,s_d,d\n\n1, 50, 3, 37, 59\n2,40,4,30,44\n";
        let ds = parse_dataset(text).unwrap();
        assert_eq!(ds.layout, Layout::Summary);
        assert_eq!(ds.designs[1], RegionDesign { n_sites: 40, n_visits: 4 });
        assert_eq!(ds.summaries[0], RegionSummary { detected_sites: 37, detections: 59 });
    }

    #[test]
    fn site_layout_aggregates() {
        let text = "region,site,K,y\n1,a,3,2\n1,b,3,0\n1,c,3,3\n2,a,2,1\n2,b,2,0\n";
        let ds = parse_dataset(text).unwrap();
        assert_eq!(ds.layout, Layout::Site);
        assert_eq!(ds.designs, [RegionDesign { n_sites: 3, n_visits: 3 }, RegionDesign { n_sites: 2, n_visits: 2 }]);
        assert_eq!(
            ds.summaries,
            [RegionSummary { detected_sites: 2, detections: 5 }, RegionSummary { detected_sites: 1, detections: 1 }]
        );
    }

    fn line_of_error(text: &str) -> u64 {
        match parse_dataset(text) {
            Err(DatasetError::Parse { line, .. }) => line,
            other => panic!("expected a parse error, got {other:?}"),
        }
    }

    #[test]
    fn errors_carry_line_numbers() {
        assert_eq!(line_of_error("region,N,K,s_d,d\n1,50,3,37,59\n2,50,3,x,4\n"), 3);
        assert_eq!(line_of_error("region,N,K,s_d,d\n1,50,3,37,59\n3,50,3,1,1\n"), 3);
        assert_eq!(line_of_error("region,N,K,s_d,d\n1,50,3,37,20\n2,50,3,1,1\n"), 2);
        assert_eq!(line_of_error("# c\nregion,N,K,s_d,d\n1,50,3,37,59\n1,50,3,1,1\n"), 4);
        assert_eq!(line_of_error("region,N,K,s_d,d\n1,50,3,37\n"), 2);
        assert_eq!(line_of_error("region,site,K,y\n1,a,3,4\n"), 2);
        assert_eq!(line_of_error("region,site,K,y\n1,a,3,1\n1,b,2,1\n"), 3);
        assert_eq!(line_of_error("region,site,K,y\n1,a,3,1\n1,a,3,1\n"), 3);
        assert_eq!(line_of_error("\nregion,visits\n"), 2);
        assert_eq!(line_of_error("# c\n\nregion\n"), 3);
        assert_eq!(line_of_error("region,N,K,s_d,d\n\n  \n1,50,3,37,59\n\n# c\n2,50,3,x,4\n"), 7);
    }

    #[test]
    fn missing_region() {
        assert!(matches!(parse_dataset("region,N,K,s_d,d\n1,50,3,37,59\n"), Err(DatasetError::Invalid(_))));
        assert!(matches!(parse_dataset(""), Err(DatasetError::Invalid(_))));
    }
}
