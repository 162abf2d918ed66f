//! From longitudinal records to encoded snapshot cohorts.

mod encode;
mod io;
mod snapshot;
mod split;

use std::io::Write;

pub use encode::{encode_and_normalize, ColumnStats, NormalizationStats};
pub use io::{
    ingest_longitudinal, read_longitudinal, write_longitudinal, write_longitudinal_file,
    IngestOptions, LONGITUDINAL_HEADER,
};
pub use snapshot::{binarize_adherence, build_snapshot, trim, PreprocessConfig};
pub use split::{split, split_indices};

use crate::domain::SnapshotCohort;
use crate::error::Result;

/// Writes a cohort as CSV: identifiers and outcome first, then one column
/// per schema feature in schema order.
pub fn write_cohort_csv<W: Write>(writer: W, cohort: &SnapshotCohort) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec![
        "subject_id".to_string(),
        "tau".into(),
        "treatment".into(),
        "residual_time".into(),
        "event_flag".into(),
        "formulation".into(),
        "drug_name".into(),
    ];
    header.extend(cohort.schema.names().map(|n| format!("z:{n}")));
    w.write_record(&header)?;
    for row in &cohort.rows {
        let mut rec = vec![
            row.id.clone(),
            cohort.tau.to_string(),
            (row.treated as u8).to_string(),
            row.residual_time.to_string(),
            (row.event as u8).to_string(),
            row.subgroups.formulation.to_string(),
            row.subgroups.drug_name.clone().unwrap_or_default(),
        ];
        rec.extend(row.features.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}
