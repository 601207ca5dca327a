use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::ingest::{IngestError, PatientRecord, RawRecord, SmokingStatus, NUMERIC_COUNT};

/// Result of [`clean`] with each removal cause counted separately.
#[derive(Debug, Clone, PartialEq)]
pub struct CleanOutcome {
    pub records: Vec<PatientRecord>,
    pub rows_with_nulls: usize,
    pub duplicates_removed: usize,
}

type RowKey = ([u64; NUMERIC_COUNT], u8, u8, u8);

fn row_key(r: &PatientRecord) -> RowKey {
    // -0.0 and 0.0 compare equal, so normalise before taking bits
    let numeric = r.numeric().map(|v| if v == 0.0 { 0u64 } else { v.to_bits() });
    (
        numeric,
        r.residence_type as u8,
        r.smoking_status as u8,
        r.label.map_or(u8::MAX, |l| l as u8),
    )
}

/// Drops rows with any missing field, then exact duplicates (first kept).
pub fn clean(records: Vec<RawRecord>) -> CleanOutcome {
    let mut rows_with_nulls = 0;
    let mut duplicates_removed = 0;
    let mut seen: HashSet<RowKey> = HashSet::new();
    let mut out = Vec::with_capacity(records.len());
    for raw in records {
        let Some(rec) = raw.complete() else {
            rows_with_nulls += 1;
            continue;
        };
        if seen.insert(row_key(&rec)) {
            out.push(rec);
        } else {
            duplicates_removed += 1;
        }
    }
    CleanOutcome {
        records: out,
        rows_with_nulls,
        duplicates_removed,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Imputation {
    pub replaced: usize,
    pub fill: SmokingStatus,
}

/// Replaces `Unknown` smoking status by the mode of the known values.
///
/// Ties go to the lexicographically smallest value string.
pub fn impute_smoking_unknown(
    mut records: Vec<PatientRecord>,
) -> Result<(Vec<PatientRecord>, Imputation), IngestError> {
    let mut counts: BTreeMap<&'static str, (usize, SmokingStatus)> = BTreeMap::new();
    for r in &records {
        if r.smoking_status != SmokingStatus::Unknown {
            counts
                .entry(r.smoking_status.as_str())
                .or_insert((0, r.smoking_status))
                .0 += 1;
        }
    }
    let mut best: Option<(usize, SmokingStatus)> = None;
    for &(count, status) in counts.values() {
        if best.is_none_or(|(c, _)| count > c) {
            best = Some((count, status));
        }
    }
    let Some((_, fill)) = best else {
        if records.is_empty() {
            return Ok((
                records,
                Imputation {
                    replaced: 0,
                    fill: SmokingStatus::NeverSmoked,
                },
            ));
        }
        return Err(IngestError::ModeUndefined);
    };
    let mut replaced = 0;
    for r in &mut records {
        if r.smoking_status == SmokingStatus::Unknown {
            r.smoking_status = fill;
            replaced += 1;
        }
    }
    Ok((records, Imputation { replaced, fill }))
}
