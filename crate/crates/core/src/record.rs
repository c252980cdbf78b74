//! On-disk form of run records: a JSON metadata file plus a CSV time
//! series. Both carry the config hash; the CSV carries it on a leading
//! `# config_hash=<hex>` line.

use std::io::{BufRead, BufReader, Read, Write};

use serde::{Deserialize, Serialize};

use crate::engine::{NetworkState, RunRecord, Snapshot};
use crate::error::{Error, Result};
use crate::metrics::MetricRow;

/// At most this many network-average coordinates go into the CSV.
pub const MAX_CSV_COORDS: usize = 4;

const BASE_COLUMNS: [&str; 5] = [
    "t",
    "consensus_error",
    "scaled_consensus_error",
    "dist_to_minima",
    "U_of_mean",
];

pub fn series_header(dim: usize) -> Vec<String> {
    let mut h: Vec<String> = BASE_COLUMNS.iter().map(|s| s.to_string()).collect();
    h.extend((0..dim.min(MAX_CSV_COORDS)).map(|k| format!("x_bar_{k}")));
    h
}

/// Writes the time series with full round-trip precision.
pub fn write_series_csv<W: Write>(
    mut out: W,
    config_hash: &str,
    dim: usize,
    rows: &[MetricRow],
) -> Result<()> {
    writeln!(out, "# config_hash={config_hash}")?;
    let mut w = csv::Writer::from_writer(out);
    w.write_record(series_header(dim))?;
    let k = dim.min(MAX_CSV_COORDS);
    for r in rows {
        let mut fields = vec![
            r.t.to_string(),
            r.consensus_error.to_string(),
            r.scaled_consensus_error.to_string(),
            r.dist_to_minima.to_string(),
            r.u_of_mean.to_string(),
        ];
        fields.extend(r.x_bar.iter().take(k).map(|v| v.to_string()));
        w.write_record(&fields)?;
    }
    w.flush()?;
    Ok(())
}

/// A time series read back from CSV. `x_bar` holds at most
/// [`MAX_CSV_COORDS`] coordinates.
#[derive(Debug, Clone, PartialEq)]
pub struct SeriesTable {
    pub config_hash: String,
    pub coords: usize,
    pub rows: Vec<MetricRow>,
}

/// Parses a series CSV written by [`write_series_csv`].
pub fn read_series_csv<R: Read>(input: R) -> Result<SeriesTable> {
    let mut reader = BufReader::new(input);
    let mut first = String::new();
    reader.read_line(&mut first)?;
    let config_hash = first
        .trim_end()
        .strip_prefix("# config_hash=")
        .ok_or_else(|| Error::Record("series CSV must start with '# config_hash=<hex>'".into()))?
        .to_string();
    if config_hash.is_empty() || !config_hash.chars().all(|c| c.is_ascii_hexdigit()) {
        return Err(Error::Record(format!(
            "malformed config hash {config_hash:?}"
        )));
    }
    let mut csv_reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let header: Vec<String> = csv_reader.headers()?.iter().map(str::to_string).collect();
    if header.len() < BASE_COLUMNS.len() || header[..BASE_COLUMNS.len()] != BASE_COLUMNS {
        return Err(Error::Record(format!(
            "unexpected series header {header:?}"
        )));
    }
    let coords = header.len() - BASE_COLUMNS.len();
    if coords > MAX_CSV_COORDS || header != series_header(coords) {
        return Err(Error::Record(format!(
            "unexpected series header {header:?}"
        )));
    }
    let mut rows = Vec::new();
    for (i, rec) in csv_reader.records().enumerate() {
        let rec = rec?;
        if rec.len() != header.len() {
            return Err(Error::Record(format!(
                "row {} has {} fields, expected {}",
                i + 1,
                rec.len(),
                header.len()
            )));
        }
        let num = |j: usize| -> Result<f64> {
            rec[j]
                .parse::<f64>()
                .map_err(|_| Error::Record(format!("row {}: bad number {:?}", i + 1, &rec[j])))
        };
        let t = rec[0]
            .parse::<u64>()
            .map_err(|_| Error::Record(format!("row {}: bad time {:?}", i + 1, &rec[0])))?;
        rows.push(MetricRow {
            t,
            consensus_error: num(1)?,
            scaled_consensus_error: num(2)?,
            dist_to_minima: num(3)?,
            u_of_mean: num(4)?,
            x_bar: (0..coords).map(|k| num(5 + k)).collect::<Result<_>>()?,
        });
    }
    Ok(SeriesTable {
        config_hash,
        coords,
        rows,
    })
}

/// JSON metadata of a run. Wall time is kept out so that reruns produce
/// identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunMeta {
    pub config_hash: String,
    pub master_seed: u64,
    pub run_index: u64,
    pub stream_seeds: [u64; 3],
    pub n_agents: usize,
    pub dim: usize,
    pub steps: u64,
    pub diverged_at: Option<u64>,
    pub final_state: NetworkState,
    pub snapshots: Vec<Snapshot>,
}

impl RunMeta {
    pub fn of(record: &RunRecord) -> Self {
        RunMeta {
            config_hash: record.config_hash.clone(),
            master_seed: record.master_seed,
            run_index: record.run_index,
            stream_seeds: record.stream_seeds,
            n_agents: record.n_agents,
            dim: record.dim,
            steps: record.steps,
            diverged_at: record.diverged_at,
            final_state: record.final_state.clone(),
            snapshots: record.snapshots.clone(),
        }
    }

    /// Reassembles a record from metadata and a series read from CSV.
    pub fn into_record(self, series: SeriesTable) -> Result<RunRecord> {
        if series.config_hash != self.config_hash {
            return Err(Error::Record(format!(
                "series hash {} does not match metadata hash {}",
                series.config_hash, self.config_hash
            )));
        }
        Ok(RunRecord {
            config_hash: self.config_hash,
            master_seed: self.master_seed,
            run_index: self.run_index,
            stream_seeds: self.stream_seeds,
            n_agents: self.n_agents,
            dim: self.dim,
            steps: self.steps,
            rows: series.rows,
            snapshots: self.snapshots,
            final_state: self.final_state,
            diverged_at: self.diverged_at,
            wall_time_secs: 0.0,
        })
    }
}
