//! Study records, registry datasets and CSV ingestion.
//!
//! A published study carries `(effect, se, n_total)`; a study found only in a
//! trial registry carries `n_total` alone. The split is structural: the
//! published variant is the only one that owns an effect estimate.

use std::collections::HashSet;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::DataError;

/// Effect estimate and its standard error for a published study.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub effect: f64,
    pub se: f64,
}

/// One trial, either published with an estimate or registered only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyRecord {
    id: String,
    n_total: u64,
    estimate: Option<Estimate>,
}

impl StudyRecord {
    pub fn published(
        id: impl Into<String>,
        effect: f64,
        se: f64,
        n_total: u64,
    ) -> Result<Self, DataError> {
        let id = id.into();
        if !effect.is_finite() {
            return Err(DataError::InvalidRecord {
                id,
                reason: format!("effect must be finite, got {effect}"),
            });
        }
        if !(se.is_finite() && se > 0.0) {
            return Err(DataError::InvalidRecord {
                id,
                reason: format!("se must be positive and finite, got {se}"),
            });
        }
        Self::check_n(&id, n_total)?;
        Ok(Self {
            id,
            n_total,
            estimate: Some(Estimate { effect, se }),
        })
    }

    pub fn unpublished(id: impl Into<String>, n_total: u64) -> Result<Self, DataError> {
        let id = id.into();
        Self::check_n(&id, n_total)?;
        Ok(Self {
            id,
            n_total,
            estimate: None,
        })
    }

    fn check_n(id: &str, n_total: u64) -> Result<(), DataError> {
        if n_total == 0 {
            return Err(DataError::InvalidRecord {
                id: id.to_string(),
                reason: "n_total must be at least 1".into(),
            });
        }
        Ok(())
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn n_total(&self) -> u64 {
        self.n_total
    }

    pub fn is_published(&self) -> bool {
        self.estimate.is_some()
    }

    pub fn estimate(&self) -> Option<Estimate> {
        self.estimate
    }

    pub fn effect(&self) -> Option<f64> {
        self.estimate.map(|e| e.effect)
    }

    pub fn se(&self) -> Option<f64> {
        self.estimate.map(|e| e.se)
    }

    /// Copy of this record with the estimate replaced. Used by the bootstrap,
    /// which redraws effects while keeping standard errors and sizes.
    pub(crate) fn with_effect(&self, effect: f64) -> Self {
        let mut out = self.clone();
        if let Some(est) = out.estimate.as_mut() {
            est.effect = effect;
        }
        out
    }

    /// Drop the estimate, keeping what a registry would still reveal.
    pub fn suppressed(&self) -> Self {
        Self {
            id: self.id.clone(),
            n_total: self.n_total,
            estimate: None,
        }
    }
}

/// Validated collection of published and registry-only studies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<StudyRecord>", into = "Vec<StudyRecord>")]
pub struct MetaDataset {
    studies: Vec<StudyRecord>,
    n_published: usize,
}

impl TryFrom<Vec<StudyRecord>> for MetaDataset {
    type Error = DataError;

    fn try_from(studies: Vec<StudyRecord>) -> Result<Self, DataError> {
        Self::new(studies)
    }
}

impl From<MetaDataset> for Vec<StudyRecord> {
    fn from(ds: MetaDataset) -> Self {
        ds.studies
    }
}

impl MetaDataset {
    pub fn new(studies: Vec<StudyRecord>) -> Result<Self, DataError> {
        let mut seen = HashSet::with_capacity(studies.len());
        for s in &studies {
            if !seen.insert(s.id.as_str()) {
                return Err(DataError::DuplicateId(s.id.clone()));
            }
        }
        let n_published = studies.iter().filter(|s| s.is_published()).count();
        if n_published < 2 {
            return Err(DataError::TooFewPublished(n_published));
        }
        Ok(Self {
            studies,
            n_published,
        })
    }

    pub fn studies(&self) -> &[StudyRecord] {
        &self.studies
    }

    /// N, the number of published studies.
    pub fn n_published(&self) -> usize {
        self.n_published
    }

    /// M, the number of registry-only studies.
    pub fn n_unpublished(&self) -> usize {
        self.studies.len() - self.n_published
    }

    /// S = N + M.
    pub fn s_total(&self) -> usize {
        self.studies.len()
    }

    pub fn published(&self) -> impl Iterator<Item = (&StudyRecord, Estimate)> + '_ {
        self.studies
            .iter()
            .filter_map(|s| s.estimate.map(|e| (s, e)))
    }

    /// Sum of sqrt(n_i) over all S studies; the scale used by solver tolerances.
    pub fn sum_sqrt_n(&self) -> f64 {
        self.studies.iter().map(|s| (s.n_total as f64).sqrt()).sum()
    }

    /// Only the published rows, as a dataset with M = 0.
    pub fn published_only(&self) -> MetaDataset {
        let studies: Vec<_> = self
            .studies
            .iter()
            .filter(|s| s.is_published())
            .cloned()
            .collect();
        MetaDataset {
            n_published: studies.len(),
            studies,
        }
    }

    /// Replace the published effects in order, keeping everything else.
    pub(crate) fn with_published_effects(&self, effects: &[f64]) -> MetaDataset {
        debug_assert_eq!(effects.len(), self.n_published);
        let mut it = effects.iter();
        let studies = self
            .studies
            .iter()
            .map(|s| match s.estimate {
                Some(_) => s.with_effect(*it.next().expect("one effect per published study")),
                None => s.clone(),
            })
            .collect();
        MetaDataset {
            studies,
            n_published: self.n_published,
        }
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self, DataError> {
        let path = path.as_ref();
        let file = File::open(path).map_err(|e| DataError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        Self::read_csv(file)
    }

    /// Parse either the summary schema or the raw-count schema, chosen by header.
    pub fn read_csv<R: Read>(reader: R) -> Result<Self, DataError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .trim(csv::Trim::All)
            .from_reader(reader);
        let header: Vec<String> = rdr
            .headers()
            .map_err(|e| DataError::Malformed {
                line: 1,
                reason: e.to_string(),
            })?
            .iter()
            .map(str::to_string)
            .collect();
        let schema = Schema::detect(&header)?;
        let mut studies = Vec::new();
        for (idx, row) in rdr.records().enumerate() {
            let line = idx + 2;
            let row = row.map_err(|e| DataError::Malformed {
                line,
                reason: e.to_string(),
            })?;
            studies.push(schema.parse_row(&row, line)?);
        }
        Self::new(studies)
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<(), DataError> {
        let path = path.as_ref();
        let file = File::create(path).map_err(|e| DataError::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        self.write_csv(file)
    }

    /// Write the summary schema. Floats use shortest round-trip formatting.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), DataError> {
        let mut wtr = csv::Writer::from_writer(writer);
        let io = |e: csv::Error| DataError::Malformed {
            line: 0,
            reason: e.to_string(),
        };
        wtr.write_record(SUMMARY_HEADER).map_err(io)?;
        for s in &self.studies {
            let (effect, se) = match s.estimate {
                Some(e) => (e.effect.to_string(), e.se.to_string()),
                None => (String::new(), String::new()),
            };
            let published = if s.is_published() { "1" } else { "0" };
            wtr.write_record([
                s.id.as_str(),
                &effect,
                &se,
                &s.n_total.to_string(),
                published,
            ])
            .map_err(io)?;
        }
        wtr.flush().map_err(|e| DataError::Malformed {
            line: 0,
            reason: e.to_string(),
        })?;
        Ok(())
    }
}

const SUMMARY_HEADER: [&str; 5] = ["id", "effect", "se", "n_total", "published"];
const COUNTS_HEADER: [&str; 7] = [
    "id",
    "events_trt",
    "total_trt",
    "events_ctl",
    "total_ctl",
    "n_total",
    "published",
];

#[derive(Debug, Clone, Copy)]
enum Schema {
    Summary,
    Counts,
}

impl Schema {
    fn detect(header: &[String]) -> Result<Self, DataError> {
        let h: Vec<&str> = header.iter().map(String::as_str).collect();
        if h == SUMMARY_HEADER {
            Ok(Schema::Summary)
        } else if h == COUNTS_HEADER {
            Ok(Schema::Counts)
        } else {
            Err(DataError::Header(header.join(",")))
        }
    }

    fn parse_row(self, row: &csv::StringRecord, line: usize) -> Result<StudyRecord, DataError> {
        let malformed = |reason: String| DataError::Malformed { line, reason };
        let cell = |i: usize| row.get(i).unwrap_or("");
        let width = match self {
            Schema::Summary => SUMMARY_HEADER.len(),
            Schema::Counts => COUNTS_HEADER.len(),
        };
        if row.len() != width {
            return Err(malformed(format!(
                "expected {width} fields, found {}",
                row.len()
            )));
        }
        let id = cell(0).to_string();
        if id.is_empty() {
            return Err(malformed("empty id".into()));
        }
        let n_total: u64 = parse_num(cell(width - 2), "n_total", line)?;
        let published = match cell(width - 1) {
            "1" => true,
            "0" => false,
            other => {
                return Err(malformed(format!(
                    "published must be 0 or 1, got {other:?}"
                )))
            }
        };
        let payload: Vec<&str> = (1..width - 2).map(cell).collect();
        let all_empty = payload.iter().all(|c| c.is_empty());
        let any_empty = payload.iter().any(|c| c.is_empty());
        if !published {
            if !all_empty {
                return Err(DataError::InvalidRecord {
                    id,
                    reason: "unpublished row must leave effect cells empty".into(),
                });
            }
            return StudyRecord::unpublished(id, n_total);
        }
        if any_empty {
            return Err(DataError::InvalidRecord {
                id,
                reason: "published row is missing effect cells".into(),
            });
        }
        match self {
            Schema::Summary => {
                let effect: f64 = parse_num(payload[0], "effect", line)?;
                let se: f64 = parse_num(payload[1], "se", line)?;
                StudyRecord::published(id, effect, se, n_total)
            }
            Schema::Counts => {
                let counts = TwoByTwoCounts {
                    events_trt: parse_num(payload[0], "events_trt", line)?,
                    total_trt: parse_num(payload[1], "total_trt", line)?,
                    events_ctl: parse_num(payload[2], "events_ctl", line)?,
                    total_ctl: parse_num(payload[3], "total_ctl", line)?,
                };
                let (effect, se) =
                    effect_from_counts(&counts).map_err(|e| DataError::InvalidRecord {
                        id: id.clone(),
                        reason: e.to_string(),
                    })?;
                StudyRecord::published(id, effect, se, n_total)
            }
        }
    }
}

fn parse_num<T: std::str::FromStr>(s: &str, field: &str, line: usize) -> Result<T, DataError>
where
    T::Err: std::fmt::Display,
{
    s.parse().map_err(|e: T::Err| DataError::Malformed {
        line,
        reason: format!("{field}: {e} ({s:?})"),
    })
}

/// Raw 2x2 event counts for one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TwoByTwoCounts {
    pub events_trt: u64,
    pub total_trt: u64,
    pub events_ctl: u64,
    pub total_ctl: u64,
}

impl TwoByTwoCounts {
    fn validate(&self) -> Result<(), DataError> {
        if self.total_trt == 0 || self.total_ctl == 0 {
            return Err(DataError::InvalidCounts(
                "arm total must be at least 1".into(),
            ));
        }
        if self.events_trt > self.total_trt || self.events_ctl > self.total_ctl {
            return Err(DataError::InvalidCounts("events exceed arm total".into()));
        }
        Ok(())
    }

    /// Log odds ratio with 0.5 added to every cell when any cell is zero.
    /// Never fails once the margins are valid, including double-zero tables.
    pub(crate) fn corrected_log_odds_ratio(&self) -> (f64, f64) {
        let a = self.events_trt as f64;
        let b = (self.total_trt - self.events_trt) as f64;
        let c = self.events_ctl as f64;
        let d = (self.total_ctl - self.events_ctl) as f64;
        let corr = if a == 0.0 || b == 0.0 || c == 0.0 || d == 0.0 {
            0.5
        } else {
            0.0
        };
        let (a, b, c, d) = (a + corr, b + corr, c + corr, d + corr);
        let y = (a * d / (b * c)).ln();
        let se = (1.0 / a + 1.0 / b + 1.0 / c + 1.0 / d).sqrt();
        (y, se)
    }
}

/// Empirical log odds ratio (treatment vs control) and its standard error.
///
/// Tables with no events in either arm, or only events in both arms, carry no
/// information on the odds ratio and are rejected.
pub fn effect_from_counts(c: &TwoByTwoCounts) -> Result<(f64, f64), DataError> {
    c.validate()?;
    if c.events_trt == 0 && c.events_ctl == 0 {
        return Err(DataError::InvalidCounts("no events in either arm".into()));
    }
    if c.events_trt == c.total_trt && c.events_ctl == c.total_ctl {
        return Err(DataError::InvalidCounts(
            "all subjects had events in both arms".into(),
        ));
    }
    Ok(c.corrected_log_odds_ratio())
}

#[cfg(test)]
mod tests {
    use super::*;

    const CLOPIDOGREL: &str = include_str!("../../../data/clopidogrel.csv");

    #[test]
    fn loads_summary_fixture() {
        let ds = MetaDataset::read_csv(CLOPIDOGREL.as_bytes()).unwrap();
        assert_eq!(ds.n_published(), 12);
        assert_eq!(ds.n_unpublished(), 3);
        assert_eq!(ds.s_total(), 15);
        let row13 = &ds.studies()[12];
        assert_eq!(row13.id(), "NCT01069302");
        assert_eq!(row13.n_total(), 106);
        assert!(!row13.is_published());
    }

    #[test]
    fn only_published_rows() {
        let csv = "id,effect,se,n_total,published\na,0.1,0.2,10,1\nb,-0.3,0.5,20,1\n";
        let ds = MetaDataset::read_csv(csv.as_bytes()).unwrap();
        assert_eq!(ds.n_unpublished(), 0);
        assert_eq!(ds.s_total(), ds.n_published());
    }

    #[test]
    fn unpublished_row_parses() {
        let csv = "id,effect,se,n_total,published\na,0.1,0.2,10,1\nb,-0.3,0.5,20,1\nNCT01069302,,,106,0\n";
        let ds = MetaDataset::read_csv(csv.as_bytes()).unwrap();
        let r = &ds.studies()[2];
        assert_eq!(r.n_total(), 106);
        assert_eq!(r.effect(), None);
    }

    #[test]
    fn rejects_bad_rows() {
        let base = "id,effect,se,n_total,published\na,0.1,0.2,10,1\nb,-0.3,0.5,20,1\n";
        let cases = [
            ("c,0.1,,10,1\n", "missing se"),
            ("c,0.1,0.2,10,0\n", "unpublished with effect"),
            ("a,0.1,0.2,10,1\n", "duplicate id"),
            ("c,abc,0.2,10,1\n", "non-numeric"),
            ("c,0.1,0.2,10\n", "short row"),
            ("c,0.1,-0.2,10,1\n", "negative se"),
            ("c,0.1,0.2,0,1\n", "zero n"),
            ("c,0.1,0.2,10,2\n", "bad flag"),
        ];
        for (row, why) in cases {
            let text = format!("{base}{row}");
            assert!(MetaDataset::read_csv(text.as_bytes()).is_err(), "{why}");
        }
    }

    #[test]
    fn rejects_single_published() {
        let csv = "id,effect,se,n_total,published\na,0.1,0.2,10,1\nb,,,20,0\n";
        assert!(matches!(
            MetaDataset::read_csv(csv.as_bytes()),
            Err(DataError::TooFewPublished(1))
        ));
    }

    #[test]
    fn rejects_unknown_header() {
        let csv = "id,y,se,n,published\na,0.1,0.2,10,1\n";
        assert!(matches!(
            MetaDataset::read_csv(csv.as_bytes()),
            Err(DataError::Header(_))
        ));
    }

    #[test]
    fn zero_event_arm_matches_table() {
        let c = TwoByTwoCounts {
            events_trt: 0,
            total_trt: 24,
            events_ctl: 1,
            total_ctl: 24,
        };
        let (y, se) = effect_from_counts(&c).unwrap();
        assert!((y - (-1.14)).abs() < 0.005, "{y}");
        assert!((se - 1.66).abs() < 0.005, "{se}");
    }

    #[test]
    fn balanced_large_trial_is_null() {
        let c = TwoByTwoCounts {
            events_trt: 25,
            total_trt: 1109,
            events_ctl: 25,
            total_ctl: 1105,
        };
        let (y, _) = effect_from_counts(&c).unwrap();
        assert!(y.abs() < 0.005);
    }

    #[test]
    fn symmetric_table_is_exactly_zero() {
        let c = TwoByTwoCounts {
            events_trt: 5,
            total_trt: 10,
            events_ctl: 5,
            total_ctl: 10,
        };
        assert_eq!(effect_from_counts(&c).unwrap().0, 0.0);
    }

    #[test]
    fn rejects_uninformative_tables() {
        let none = TwoByTwoCounts {
            events_trt: 0,
            total_trt: 10,
            events_ctl: 0,
            total_ctl: 12,
        };
        assert!(effect_from_counts(&none).is_err());
        let all = TwoByTwoCounts {
            events_trt: 10,
            total_trt: 10,
            events_ctl: 12,
            total_ctl: 12,
        };
        assert!(effect_from_counts(&all).is_err());
        let empty_arm = TwoByTwoCounts {
            events_trt: 0,
            total_trt: 0,
            events_ctl: 1,
            total_ctl: 12,
        };
        assert!(effect_from_counts(&empty_arm).is_err());
        let overflow = TwoByTwoCounts {
            events_trt: 11,
            total_trt: 10,
            events_ctl: 1,
            total_ctl: 12,
        };
        assert!(effect_from_counts(&overflow).is_err());
    }
}
