//! Aggregate tables over experiment rows, and CSV (de)serialization.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{ExperimentRow, Mode};

#[derive(Debug, Error)]
pub enum ReportError {
    #[error("no rows to report")]
    Empty,
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

type CellKey = (Mode, Option<usize>, Option<usize>, Option<usize>);

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SufficiencyCell {
    pub mode: Mode,
    pub s: Option<usize>,
    pub k: Option<usize>,
    pub k_final: Option<usize>,
    pub questions: usize,
    pub sufficient: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferCell {
    pub mode: Mode,
    pub s: Option<usize>,
    pub k: Option<usize>,
    pub k_final: Option<usize>,
    pub rows: usize,
    pub median: Option<f64>,
    pub q1: Option<f64>,
    pub q3: Option<f64>,
    pub iqr: Option<f64>,
}

/// Per-question categories. A question is counted once, in the first of
/// decomposed, rephrased, unchanged that applies; PII is counted apart.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QueryProcessingCounts {
    pub questions: usize,
    pub decomposed: usize,
    pub rephrased: usize,
    pub unchanged: usize,
    pub pii_removed: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub sufficiency: Vec<SufficiencyCell>,
    pub transfer: Vec<TransferCell>,
    pub query_processing: QueryProcessingCounts,
}

/// Quantile of sorted data by linear interpolation between closest ranks.
fn quantile(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64))
}

pub fn report(rows: &[ExperimentRow]) -> Result<Report, ReportError> {
    if rows.is_empty() {
        return Err(ReportError::Empty);
    }
    let mut cells: BTreeMap<CellKey, Vec<&ExperimentRow>> = BTreeMap::new();
    for row in rows {
        cells.entry((row.mode, row.s, row.k, row.k_final)).or_default().push(row);
    }

    let mut sufficiency = Vec::with_capacity(cells.len());
    let mut transfer = Vec::with_capacity(cells.len());
    for (&(mode, s, k, k_final), members) in &cells {
        sufficiency.push(SufficiencyCell {
            mode,
            s,
            k,
            k_final,
            questions: members.len(),
            sufficient: members.iter().filter(|r| r.sufficient).count(),
        });
        let mut fractions: Vec<f64> = members.iter().filter_map(|r| r.transfer_fraction).collect();
        fractions.sort_by(f64::total_cmp);
        let q1 = quantile(&fractions, 0.25);
        let q3 = quantile(&fractions, 0.75);
        transfer.push(TransferCell {
            mode,
            s,
            k,
            k_final,
            rows: members.len(),
            median: quantile(&fractions, 0.5),
            q1,
            q3,
            iqr: q1.zip(q3).map(|(a, b)| b - a),
        });
    }

    let mut seen = BTreeSet::new();
    let mut qp = QueryProcessingCounts::default();
    for row in rows {
        if !seen.insert(row.qid.as_str()) {
            continue;
        }
        qp.questions += 1;
        if row.was_decomposed {
            qp.decomposed += 1;
        } else if row.was_rephrased {
            qp.rephrased += 1;
        } else {
            qp.unchanged += 1;
        }
        if row.pii_removed {
            qp.pii_removed += 1;
        }
    }

    Ok(Report {
        sufficiency,
        transfer,
        query_processing: qp,
    })
}

fn to_csv<T: Serialize>(records: impl IntoIterator<Item = T>) -> Result<String, ReportError> {
    let mut writer = csv::Writer::from_writer(Vec::new());
    for record in records {
        writer.serialize(record)?;
    }
    let bytes = writer.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
}

pub fn rows_to_csv(rows: &[ExperimentRow]) -> Result<String, ReportError> {
    to_csv(rows)
}

pub fn read_rows_csv(reader: impl std::io::Read) -> Result<Vec<ExperimentRow>, ReportError> {
    let mut rdr = csv::Reader::from_reader(reader);
    Ok(rdr.deserialize().collect::<Result<Vec<_>, _>>()?)
}

impl Report {
    pub fn sufficiency_csv(&self) -> Result<String, ReportError> {
        to_csv(&self.sufficiency)
    }

    pub fn transfer_csv(&self) -> Result<String, ReportError> {
        to_csv(&self.transfer)
    }

    pub fn query_processing_csv(&self) -> Result<String, ReportError> {
        to_csv([&self.query_processing])
    }

    pub fn cell(&self, mode: Mode, s: Option<usize>, k: Option<usize>) -> Option<&TransferCell> {
        self.transfer.iter().find(|c| c.mode == mode && c.s == s && c.k == k)
    }
}
