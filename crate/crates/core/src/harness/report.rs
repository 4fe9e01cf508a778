//! Result rows, their CSV files and the per-cell JSON summary.
//!
//! `results.csv` holds only values that are a pure function of the
//! configuration, so two runs with the same seed produce identical bytes.
//! Wall-clock times go to the `timings.csv` sidecar.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{median_aggregate, EvalResult, MetricSummary};
use crate::separation::ModelKind;

pub const RESULTS_FILE: &str = "results.csv";
pub const TIMINGS_FILE: &str = "timings.csv";
pub const SUMMARY_FILE: &str = "summary.json";
pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// One separated source of one mixture under one method and rank.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub mixture_id: usize,
    pub speaker_a: String,
    pub speaker_b: String,
    pub method: ModelKind,
    pub rank: usize,
    /// Decoder depth: 0 for NMF, 1 for the shallow NAE.
    pub depth: usize,
    /// 0 for `speaker_a`, 1 for `speaker_b`.
    pub source: usize,
    pub speaker: String,
    pub sdr: f64,
    pub sir: f64,
    pub sar: f64,
    /// Seed of the mixture fit for this cell.
    pub seed: u64,
}

/// Identifies one experiment cell. Orders canonically: mixture, then
/// method in [`ModelKind::ALL`] order, then rank.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellKey {
    pub mixture_id: usize,
    pub method: ModelKind,
    pub rank: usize,
}

impl ResultRow {
    pub fn cell(&self) -> CellKey {
        CellKey {
            mixture_id: self.mixture_id,
            method: self.method,
            rank: self.rank,
        }
    }

    fn sort_key(&self) -> (CellKey, usize) {
        (self.cell(), self.source)
    }
}

pub fn sort_rows(rows: &mut [ResultRow]) {
    rows.sort_by_key(ResultRow::sort_key);
}

pub fn read_rows(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_path(path)?;
    reader.deserialize().map(|r| r.map_err(Error::from)).collect()
}

/// Writes `rows` with a header, replacing `path` atomically.
pub fn write_rows(path: impl AsRef<Path>, rows: &[ResultRow]) -> Result<()> {
    let path = path.as_ref();
    let tmp = path.with_extension("csv.tmp");
    {
        let mut writer = csv::Writer::from_path(&tmp)?;
        for row in rows {
            writer.serialize(row)?;
        }
        writer.flush()?;
    }
    fs::rename(tmp, path)?;
    Ok(())
}

/// Appends rows to a CSV file, writing the header only if the file is new
/// or empty.
pub struct RowAppender {
    writer: csv::Writer<File>,
}

impl RowAppender {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        let fresh = file.metadata()?.len() == 0;
        let writer = csv::WriterBuilder::new().has_headers(fresh).from_writer(file);
        Ok(Self { writer })
    }

    pub fn append<T: Serialize>(&mut self, rows: &[T]) -> Result<()> {
        for row in rows {
            self.writer.serialize(row)?;
        }
        self.writer.flush()?;
        Ok(())
    }
}

/// Wall-clock cost of one cell, kept apart from the deterministic rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRow {
    pub mixture_id: usize,
    pub method: ModelKind,
    pub rank: usize,
    /// Separation and evaluation time; model training is not included.
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellSummary {
    pub method: ModelKind,
    pub rank: usize,
    pub depth: usize,
    pub mixtures: usize,
    #[serde(flatten)]
    pub metrics: MetricSummary,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSummary {
    pub schema_version: u32,
    pub master_seed: u64,
    pub cells: Vec<CellSummary>,
}

/// Groups rows by (method, rank) and pools both sources of every mixture
/// with [`median_aggregate`].
pub fn summarize(rows: &[ResultRow], master_seed: u64) -> Result<ExperimentSummary> {
    let mut groups: BTreeMap<(ModelKind, usize), BTreeMap<usize, Vec<&ResultRow>>> = BTreeMap::new();
    for row in rows {
        groups
            .entry((row.method, row.rank))
            .or_default()
            .entry(row.mixture_id)
            .or_default()
            .push(row);
    }
    let cells = groups
        .into_iter()
        .map(|((method, rank), mixtures)| {
            let results: Vec<EvalResult> = mixtures.values().map(|rs| rows_to_eval(rs)).collect();
            let depth = mixtures
                .values()
                .next()
                .and_then(|rs| rs.first())
                .map_or(0, |r| r.depth);
            Ok(CellSummary {
                method,
                rank,
                depth,
                mixtures: mixtures.len(),
                metrics: median_aggregate(&results)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(ExperimentSummary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        master_seed,
        cells,
    })
}

fn rows_to_eval(rows: &[&ResultRow]) -> EvalResult {
    let mut sorted = rows.to_vec();
    sorted.sort_by_key(|r| r.source);
    EvalResult {
        sdr: sorted.iter().map(|r| r.sdr).collect(),
        sir: sorted.iter().map(|r| r.sir).collect(),
        sar: sorted.iter().map(|r| r.sar).collect(),
        mapping: (0..sorted.len()).collect(),
    }
}

pub fn write_summary(path: impl AsRef<Path>, summary: &ExperimentSummary) -> Result<()> {
    let mut file = File::create(path)?;
    serde_json::to_writer_pretty(&mut file, summary)?;
    file.write_all(b"\n")?;
    Ok(())
}
