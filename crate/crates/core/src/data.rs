//! Survival data model: subjects, covariate paths, validation and CSV I/O.

use std::fmt;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A subject's covariate vector as a function of (original-scale) time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariatePath {
    /// Time-invariant covariates.
    Fixed(Vec<f64>),
    /// Right-continuous step function given as `(breakpoint, value)` pairs
    /// with strictly increasing breakpoints. Times before the first
    /// breakpoint take the first value.
    Step(Vec<(f64, Vec<f64>)>),
}

impl CovariatePath {
    pub fn dim(&self) -> usize {
        match self {
            CovariatePath::Fixed(v) => v.len(),
            CovariatePath::Step(steps) => steps.first().map_or(0, |(_, v)| v.len()),
        }
    }

    pub fn is_fixed(&self) -> bool {
        matches!(self, CovariatePath::Fixed(_))
    }

    /// Covariate vector in force at time `t`.
    pub fn at(&self, t: f64) -> &[f64] {
        match self {
            CovariatePath::Fixed(v) => v,
            CovariatePath::Step(steps) => {
                let idx = steps.partition_point(|(b, _)| *b <= t);
                &steps[idx.saturating_sub(1)].1
            }
        }
    }

    fn problems(&self) -> Vec<String> {
        let mut out = Vec::new();
        match self {
            CovariatePath::Fixed(v) => {
                if v.iter().any(|x| !x.is_finite()) {
                    out.push("non-finite covariate".to_string());
                }
            }
            CovariatePath::Step(steps) => {
                if steps.is_empty() {
                    out.push("empty step covariate path".to_string());
                }
                let p = self.dim();
                for w in steps.windows(2) {
                    if !(w[0].0 < w[1].0) {
                        out.push("step breakpoints not strictly increasing".to_string());
                        break;
                    }
                }
                if steps.iter().any(|(b, v)| !b.is_finite() || v.len() != p || v.iter().any(|x| !x.is_finite())) {
                    out.push("malformed step covariate piece".to_string());
                }
            }
        }
        out
    }
}

/// One observation: observed time `min(T, C)`, failure flag and covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Subject {
    pub id: String,
    pub time: f64,
    pub failed: bool,
    pub covariates: CovariatePath,
}

impl Subject {
    pub fn fixed(id: impl Into<String>, time: f64, failed: bool, z: Vec<f64>) -> Self {
        Subject { id: id.into(), time, failed, covariates: CovariatePath::Fixed(z) }
    }
}

/// A right-censored sample with `p`-dimensional covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SurvivalDataset {
    subjects: Vec<Subject>,
    dim: usize,
}

impl SurvivalDataset {
    /// Wraps subjects without checking them; use [`validate`] before analysis.
    /// The dimension is taken from the first subject.
    pub fn new(subjects: Vec<Subject>) -> Self {
        let dim = subjects.first().map_or(0, |s| s.covariates.dim());
        SurvivalDataset { subjects, dim }
    }

    /// Builds a dataset of fixed-covariate subjects with ids `"1"`, `"2"`, ...
    pub fn from_columns(times: &[f64], failed: &[bool], covariates: &[Vec<f64>]) -> Self {
        let subjects = times
            .iter()
            .zip(failed)
            .zip(covariates)
            .enumerate()
            .map(|(i, ((&t, &d), z))| Subject::fixed((i + 1).to_string(), t, d, z.clone()))
            .collect();
        Self::new(subjects)
    }

    pub fn subjects(&self) -> &[Subject] {
        &self.subjects
    }

    pub fn len(&self) -> usize {
        self.subjects.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn failures(&self) -> usize {
        self.subjects.iter().filter(|s| s.failed).count()
    }

    pub fn all_fixed(&self) -> bool {
        self.subjects.iter().all(|s| s.covariates.is_fixed())
    }

    /// Applies `g` to every observed time (used to check rank invariance).
    pub fn map_times(&self, g: impl Fn(f64) -> f64) -> Self {
        let subjects = self
            .subjects
            .iter()
            .map(|s| {
                let covariates = match &s.covariates {
                    CovariatePath::Fixed(z) => CovariatePath::Fixed(z.clone()),
                    CovariatePath::Step(steps) => {
                        CovariatePath::Step(steps.iter().map(|(b, v)| (g(*b), v.clone())).collect())
                    }
                };
                Subject { id: s.id.clone(), time: g(s.time), failed: s.failed, covariates }
            })
            .collect();
        SurvivalDataset { subjects, dim: self.dim }
    }
}

/// One reason a dataset is unusable.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Violation {
    Empty,
    ZeroDimension,
    NegativeTime { id: String },
    NonFiniteTime { id: String },
    DimensionMismatch { id: String, expected: usize, found: usize },
    BadCovariates { id: String, reason: String },
    NoFailures,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Empty => write!(f, "empty dataset"),
            Violation::ZeroDimension => write!(f, "covariate dimension is zero"),
            Violation::NegativeTime { id } => write!(f, "negative time (subject {id})"),
            Violation::NonFiniteTime { id } => write!(f, "non-finite time (subject {id})"),
            Violation::DimensionMismatch { id, expected, found } => {
                write!(f, "dimension mismatch (subject {id}: expected {expected}, found {found})")
            }
            Violation::BadCovariates { id, reason } => write!(f, "{reason} (subject {id})"),
            Violation::NoFailures => write!(f, "no failures"),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }

    pub fn into_result(self) -> Result<()> {
        if self.is_ok() {
            Ok(())
        } else {
            let msg: Vec<String> = self.violations.iter().map(|v| v.to_string()).collect();
            Err(Error::InvalidData(msg.join("; ")))
        }
    }
}

/// Lists every invariant violation; an empty report means the dataset is usable.
pub fn validate(dataset: &SurvivalDataset) -> ValidationReport {
    let mut violations = Vec::new();
    if dataset.is_empty() {
        violations.push(Violation::Empty);
        return ValidationReport { violations };
    }
    if dataset.dim == 0 {
        violations.push(Violation::ZeroDimension);
    }
    for s in &dataset.subjects {
        if !s.time.is_finite() {
            violations.push(Violation::NonFiniteTime { id: s.id.clone() });
        } else if s.time < 0.0 {
            violations.push(Violation::NegativeTime { id: s.id.clone() });
        }
        let found = s.covariates.dim();
        if found != dataset.dim {
            violations.push(Violation::DimensionMismatch { id: s.id.clone(), expected: dataset.dim, found });
        }
        for reason in s.covariates.problems() {
            violations.push(Violation::BadCovariates { id: s.id.clone(), reason });
        }
    }
    if dataset.failures() == 0 {
        violations.push(Violation::NoFailures);
    }
    ValidationReport { violations }
}

/// Reads the `id,time,status,z1,...,zp` CSV format. A header row is required.
pub fn read_csv<R: Read>(reader: R) -> Result<SurvivalDataset> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| Error::Parse { line: 1, message: e.to_string() })?.clone();
    let names: Vec<&str> = headers.iter().collect();
    if names.len() < 4 || names[0] != "id" || names[1] != "time" || names[2] != "status" {
        return Err(Error::Parse {
            line: 1,
            message: "header must be id,time,status,z1,...,zp with at least one covariate".into(),
        });
    }
    let p = names.len() - 3;
    let mut subjects = Vec::new();
    for rec in rdr.records() {
        let rec =
            rec.map_err(|e| Error::Parse { line: e.position().map_or(0, |p| p.line()), message: e.to_string() })?;
        let line = rec.position().map_or(0, |p| p.line());
        let field = |i: usize| -> Result<f64> {
            rec[i].parse::<f64>().map_err(|_| Error::Parse {
                line,
                message: format!("column '{}': cannot parse '{}' as a number", names[i], &rec[i]),
            })
        };
        let time = field(1)?;
        let failed = match &rec[2] {
            "0" => false,
            "1" => true,
            other => return Err(Error::Parse { line, message: format!("status must be 0 or 1, got '{other}'") }),
        };
        let z = (0..p).map(|j| field(3 + j)).collect::<Result<Vec<_>>>()?;
        subjects.push(Subject::fixed(rec[0].to_string(), time, failed, z));
    }
    Ok(SurvivalDataset::new(subjects))
}

/// Writes fixed-covariate datasets in the CSV format accepted by [`read_csv`].
pub fn write_csv<W: Write>(dataset: &SurvivalDataset, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["id".to_string(), "time".to_string(), "status".to_string()];
    header.extend((1..=dataset.dim()).map(|j| format!("z{j}")));
    w.write_record(&header).map_err(csv_io)?;
    for s in dataset.subjects() {
        let CovariatePath::Fixed(z) = &s.covariates else {
            return Err(Error::InvalidData(format!("subject {}: step covariates cannot be written to CSV", s.id)));
        };
        let mut row = vec![s.id.clone(), format!("{:.17e}", s.time), if s.failed { "1" } else { "0" }.to_string()];
        row.extend(z.iter().map(|x| format!("{x:.17e}")));
        w.write_record(&row).map_err(csv_io)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_io(e: csv::Error) -> Error {
    Error::Io(std::io::Error::other(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn three() -> SurvivalDataset {
        SurvivalDataset::from_columns(&[1.0, 2.0, 3.0], &[true, true, true], &[vec![2.0], vec![1.0], vec![0.0]])
    }

    #[test]
    fn well_formed_dataset_has_empty_report() {
        assert!(validate(&three()).is_ok());
    }

    #[test]
    fn negative_time_is_reported() {
        let mut subjects = three().subjects().to_vec();
        subjects[1].time = -1.0;
        let report = validate(&SurvivalDataset::new(subjects));
        assert_eq!(report.violations, vec![Violation::NegativeTime { id: "2".into() }]);
        assert!(report.violations[0].to_string().contains("negative time"));
    }

    #[test]
    fn all_censored_is_reported() {
        let ds = SurvivalDataset::from_columns(&[1.0, 2.0], &[false, false], &[vec![0.0], vec![1.0]]);
        let report = validate(&ds);
        assert_eq!(report.violations, vec![Violation::NoFailures]);
        assert_eq!(report.violations[0].to_string(), "no failures");
    }

    #[test]
    fn dimension_mismatch_is_reported() {
        let ds = SurvivalDataset::from_columns(&[1.0, 2.0], &[true, true], &[vec![0.0], vec![1.0, 2.0]]);
        assert!(matches!(validate(&ds).violations[0], Violation::DimensionMismatch { expected: 1, found: 2, .. }));
    }

    #[test]
    fn step_path_is_right_continuous() {
        let path = CovariatePath::Step(vec![(0.0, vec![1.0]), (2.0, vec![5.0])]);
        assert_eq!(path.at(-1.0), &[1.0]);
        assert_eq!(path.at(1.999), &[1.0]);
        assert_eq!(path.at(2.0), &[5.0]);
        assert_eq!(path.at(10.0), &[5.0]);
    }

    #[test]
    fn unordered_breakpoints_are_reported() {
        let s = Subject {
            id: "a".into(),
            time: 1.0,
            failed: true,
            covariates: CovariatePath::Step(vec![(1.0, vec![1.0]), (1.0, vec![2.0])]),
        };
        let report = validate(&SurvivalDataset::new(vec![s]));
        assert!(matches!(&report.violations[0], Violation::BadCovariates { .. }));
    }

    #[test]
    fn csv_round_trip() {
        let text = "id,time,status,z1,z2\na,10,1,2,0.5\nb,15,0,1,-1\nc,20,1,0,3\n";
        let ds = read_csv(text.as_bytes()).unwrap();
        assert_eq!(ds.dim(), 2);
        assert_eq!(ds.len(), 3);
        assert!(!ds.subjects()[1].failed);
        let mut buf = Vec::new();
        write_csv(&ds, &mut buf).unwrap();
        assert_eq!(read_csv(buf.as_slice()).unwrap(), ds);
    }

    #[test]
    fn csv_rejects_bad_status_and_header() {
        assert!(matches!(read_csv("id,time,status,z1\na,1,2,0\n".as_bytes()), Err(Error::Parse { .. })));
        assert!(matches!(read_csv("id,t,status,z1\na,1,1,0\n".as_bytes()), Err(Error::Parse { line: 1, .. })));
        assert!(matches!(read_csv("id,time,status,z1\na,x,1,0\n".as_bytes()), Err(Error::Parse { .. })));
    }
}
