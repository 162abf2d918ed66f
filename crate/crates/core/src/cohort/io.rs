//! Long-format CSV: one row per subject-month, static fields repeated.

use std::collections::BTreeMap;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::snapshot::binarize_adherence;
use crate::domain::{
    validate_dataset, Formulation, RiskScores, StaticCovariates, SubgroupLabels, SubjectRecord,
    MAX_MONTHS, RISK_SCORE_NAMES,
};
use crate::error::{Error, Result};

/// Header of the longitudinal file, in order.
pub const LONGITUDINAL_HEADER: [&str; 16] = [
    "subject_id",
    "month",
    "coverage_days",
    "risk_mortality",
    "risk_jail",
    "risk_shelter",
    "risk_hospitalization",
    "risk_overdose",
    "age",
    "race",
    "gender",
    "education",
    "formulation",
    "drug_name",
    "observed_time",
    "event_flag",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IngestOptions {
    /// Coverage days at or below which a month counts as non-adherent.
    pub threshold_days: u8,
    /// Fail when the risk-score columns are absent.
    pub require_risk_scores: bool,
}

impl Default for IngestOptions {
    fn default() -> Self {
        IngestOptions {
            threshold_days: 10,
            require_risk_scores: true,
        }
    }
}

struct Columns {
    index: BTreeMap<&'static str, usize>,
    has_risk: bool,
}

impl Columns {
    fn from_header(header: &csv::StringRecord, require_risk: bool) -> Result<Self> {
        let mut index = BTreeMap::new();
        let mut missing = Vec::new();
        for name in LONGITUDINAL_HEADER {
            match header.iter().position(|h| h.trim() == name) {
                Some(j) => {
                    index.insert(name, j);
                }
                None => missing.push(name),
            }
        }
        let risk_missing = missing.iter().filter(|m| RISK_SCORE_NAMES.contains(m)).count();
        if risk_missing > 0 && risk_missing < RISK_SCORE_NAMES.len() {
            return Err(Error::Schema(format!(
                "incomplete risk-score columns; missing {missing:?}"
            )));
        }
        let has_risk = risk_missing == 0;
        if !has_risk && require_risk {
            return Err(Error::Schema(
                "risk-score columns are missing but risk scores are required".into(),
            ));
        }
        missing.retain(|m| !RISK_SCORE_NAMES.contains(m));
        if !missing.is_empty() {
            return Err(Error::Schema(format!("missing columns {missing:?}")));
        }
        Ok(Columns { index, has_risk })
    }

    fn get<'r>(&self, record: &'r csv::StringRecord, name: &str) -> &'r str {
        record.get(self.index[name]).unwrap_or("").trim()
    }
}

#[derive(PartialEq)]
struct SubjectFields {
    statics: StaticCovariates,
    subgroups: SubgroupLabels,
    observed_time: u32,
    event: bool,
}

struct MonthRow {
    coverage: u8,
    risk: Option<RiskScores>,
}

/// Reads and validates a longitudinal CSV file.
pub fn ingest_longitudinal(path: &Path, options: &IngestOptions) -> Result<Vec<SubjectRecord>> {
    let file = std::fs::File::open(path)?;
    read_longitudinal(file, path, options)
}

/// As [`ingest_longitudinal`] from any reader; `path` only labels errors.
pub fn read_longitudinal<R: Read>(
    reader: R,
    path: &Path,
    options: &IngestOptions,
) -> Result<Vec<SubjectRecord>> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let columns = Columns::from_header(rdr.headers()?, options.require_risk_scores)?;
    let n_cols = rdr.headers()?.len();

    let mut order: Vec<String> = Vec::new();
    let mut subjects: BTreeMap<String, (SubjectFields, BTreeMap<u32, MonthRow>)> = BTreeMap::new();
    for result in rdr.records() {
        let record = result?;
        let line = record.position().map_or(0, |p| p.line());
        let fail = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        if record.len() != n_cols {
            return Err(fail(format!(
                "expected {n_cols} fields, found {}",
                record.len()
            )));
        }
        let id = columns.get(&record, "subject_id").to_string();
        if id.is_empty() {
            return Err(fail("empty subject_id".into()));
        }
        let month: u32 = parse_field(&columns, &record, "month").map_err(fail)?;
        if month == 0 || month > MAX_MONTHS {
            return Err(fail(format!("month out of range: {month}")));
        }
        let coverage: u8 = parse_field(&columns, &record, "coverage_days").map_err(fail)?;
        if coverage > 31 {
            return Err(fail(format!("coverage_days out of range: {coverage}")));
        }
        let risk = if columns.has_risk {
            parse_risk(&columns, &record).map_err(fail)?
        } else {
            None
        };
        let formulation_raw = columns.get(&record, "formulation");
        let formulation = Formulation::parse(formulation_raw)
            .ok_or_else(|| fail(format!("unknown formulation {formulation_raw:?}")))?;
        let drug = columns.get(&record, "drug_name");
        let event_raw = columns.get(&record, "event_flag");
        let event = match event_raw {
            "1" => true,
            "0" => false,
            other => return Err(fail(format!("event_flag must be 0 or 1, got {other:?}"))),
        };
        let fields = SubjectFields {
            statics: StaticCovariates {
                age: parse_field(&columns, &record, "age").map_err(fail)?,
                race: columns.get(&record, "race").to_string(),
                gender: columns.get(&record, "gender").to_string(),
                education: columns.get(&record, "education").to_string(),
            },
            subgroups: SubgroupLabels {
                formulation,
                drug_name: (!drug.is_empty()).then(|| drug.to_string()),
            },
            observed_time: parse_field(&columns, &record, "observed_time").map_err(fail)?,
            event,
        };

        let entry = match subjects.get_mut(&id) {
            Some(entry) => {
                if entry.0 != fields {
                    return Err(fail(format!(
                        "static fields of subject {id} differ from its earlier rows"
                    )));
                }
                entry
            }
            None => {
                order.push(id.clone());
                subjects.entry(id.clone()).or_insert((fields, BTreeMap::new()))
            }
        };
        if entry.1.insert(month, MonthRow { coverage, risk }).is_some() {
            return Err(fail(format!("duplicate month {month} for subject {id}")));
        }
    }

    let mut records = Vec::with_capacity(order.len());
    for id in order {
        let (fields, months) = subjects.remove(&id).expect("subject recorded");
        let n = months.len() as u32;
        if months.keys().copied().ne(1..=n) {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line: 0,
                message: format!("subject {id} does not cover months 1..={n} contiguously"),
            });
        }
        let coverage_days: Vec<u8> = months.values().map(|m| m.coverage).collect();
        let adherence = coverage_days
            .iter()
            .map(|&d| binarize_adherence(d, options.threshold_days))
            .collect::<Result<Vec<u8>>>()?;
        records.push(SubjectRecord {
            id,
            observed_time: fields.observed_time,
            event: fields.event,
            adherence,
            coverage_days,
            statics: fields.statics,
            risk_scores: months.values().map(|m| m.risk).collect(),
            subgroups: fields.subgroups,
        });
    }
    let violations = validate_dataset(&records);
    if !violations.is_empty() {
        return Err(Error::Validation(violations));
    }
    Ok(records)
}

fn parse_field<T: std::str::FromStr>(
    columns: &Columns,
    record: &csv::StringRecord,
    name: &str,
) -> std::result::Result<T, String> {
    let raw = columns.get(record, name);
    raw.parse()
        .map_err(|_| format!("cannot parse {name} from {raw:?}"))
}

/// All five cells empty means the scores are missing that month.
fn parse_risk(
    columns: &Columns,
    record: &csv::StringRecord,
) -> std::result::Result<Option<RiskScores>, String> {
    let cells: Vec<&str> = RISK_SCORE_NAMES
        .iter()
        .map(|n| columns.get(record, n))
        .collect();
    if cells.iter().all(|c| c.is_empty()) {
        return Ok(None);
    }
    let mut out = [0.0; 5];
    for (k, cell) in cells.iter().enumerate() {
        let v: f64 = cell
            .parse()
            .map_err(|_| format!("cannot parse {} from {cell:?}", RISK_SCORE_NAMES[k]))?;
        if !v.is_finite() {
            return Err(format!("{} is not finite", RISK_SCORE_NAMES[k]));
        }
        out[k] = v;
    }
    Ok(Some(out))
}

/// Writes records in the long format read by [`ingest_longitudinal`].
pub fn write_longitudinal<W: Write>(writer: W, records: &[SubjectRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(LONGITUDINAL_HEADER)?;
    for r in records {
        for m in 0..r.months() as usize {
            let mut row: Vec<String> = vec![
                r.id.clone(),
                (m + 1).to_string(),
                r.coverage_days[m].to_string(),
            ];
            match r.risk_scores.get(m).copied().flatten() {
                Some(scores) => row.extend(scores.iter().map(|v| v.to_string())),
                None => row.extend(std::iter::repeat_n(String::new(), 5)),
            }
            row.extend([
                r.statics.age.to_string(),
                r.statics.race.clone(),
                r.statics.gender.clone(),
                r.statics.education.clone(),
                r.subgroups.formulation.to_string(),
                r.subgroups.drug_name.clone().unwrap_or_default(),
                r.observed_time.to_string(),
                (r.event as u8).to_string(),
            ]);
            w.write_record(&row)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_longitudinal_file(path: &Path, records: &[SubjectRecord]) -> Result<()> {
    let file = std::fs::File::create(path)?;
    write_longitudinal(std::io::BufWriter::new(file), records)
}
