//! Tabular dataset container and the plain-text CSV artifact formats.
//!
//! All floating-point CSV values are serialized with 9 significant digits
//! (`{:.8e}`), which keeps artifacts byte-stable across runs and platforms.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::adversary::LabeledSample;
use crate::emulator::{ChannelRecord, LosState};
use crate::features::{self, RECORD_COLUMNS};
use crate::rng::seeded_rng;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("bad header: expected `{expected}`, got `{got}`")]
    Header { expected: String, got: String },
    #[error("{0}")]
    Invalid(String),
    #[error("need at least {needed} rows, got {got}")]
    Insufficient { needed: usize, got: usize },
}

/// Feature matrix plus regression target.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub feature_names: Vec<String>,
    pub xs: Vec<Vec<f64>>,
    pub ys: Vec<f64>,
}

impl Dataset {
    pub fn new(feature_names: Vec<String>, xs: Vec<Vec<f64>>, ys: Vec<f64>) -> Self {
        Self {
            feature_names,
            xs,
            ys,
        }
    }

    /// Builds the regression dataset (11 inputs, pathloss target) from records.
    pub fn from_records(records: &[ChannelRecord]) -> Self {
        let mut xs = Vec::with_capacity(records.len());
        let mut ys = Vec::with_capacity(records.len());
        for r in records {
            let (x, y) = features::split_row(&r.to_row());
            xs.push(x);
            ys.push(y);
        }
        Self {
            feature_names: features::input_feature_names(),
            xs,
            ys,
        }
    }

    pub fn len(&self) -> usize {
        self.xs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xs.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.feature_names.len()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            feature_names: self.feature_names.clone(),
            xs: indices.iter().map(|&i| self.xs[i].clone()).collect(),
            ys: indices.iter().map(|&i| self.ys[i]).collect(),
        }
    }

    pub fn validate(&self) -> Result<(), DatasetError> {
        if self.xs.len() != self.ys.len() {
            return Err(DatasetError::Invalid(
                "feature and target row counts differ".into(),
            ));
        }
        for (i, x) in self.xs.iter().enumerate() {
            if x.len() != self.dim() {
                return Err(DatasetError::Invalid(format!(
                    "row {i} has {} features, expected {}",
                    x.len(),
                    self.dim()
                )));
            }
            if !x.iter().all(|v| v.is_finite()) || !self.ys[i].is_finite() {
                return Err(DatasetError::Invalid(format!("row {i} has non-finite value")));
            }
        }
        Ok(())
    }
}

/// 9-significant-digit float rendering used in every CSV artifact.
pub fn fmt_sig9(v: f64) -> String {
    format!("{v:.8e}")
}

fn parse_f64(s: &str, line: usize) -> Result<f64, DatasetError> {
    s.trim().parse::<f64>().map_err(|_| DatasetError::Parse {
        line,
        msg: format!("bad float `{s}`"),
    })
}

fn records_header() -> String {
    RECORD_COLUMNS.join(",")
}

/// Writes the emulator CSV: fixed 12-column header, `los` as an integer.
pub fn write_records_csv(path: &Path, records: &[ChannelRecord]) -> Result<(), DatasetError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", records_header())?;
    for r in records {
        let row = r.to_row();
        let mut cells: Vec<String> = row[..11].iter().map(|v| fmt_sig9(*v)).collect();
        cells.push(format!("{}", row[11] as i64));
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_records_csv(path: &Path) -> Result<Vec<ChannelRecord>, DatasetError> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines.next().ok_or(DatasetError::Header {
        expected: records_header(),
        got: "<empty file>".into(),
    })?;
    let header = header?;
    if header.trim() != records_header() {
        return Err(DatasetError::Header {
            expected: records_header(),
            got: header,
        });
    }
    let mut records = Vec::new();
    for (lineno, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 12 {
            return Err(DatasetError::Parse {
                line: lineno + 1,
                msg: format!("expected 12 columns, got {}", cells.len()),
            });
        }
        let mut row = [0.0; 12];
        for (i, c) in cells.iter().enumerate() {
            row[i] = parse_f64(c, lineno + 1)?;
        }
        let los = LosState::from_f64(row[11]).ok_or(DatasetError::Parse {
            line: lineno + 1,
            msg: format!("los must be -1, 0 or 1, got {}", row[11]),
        })?;
        records.push(ChannelRecord {
            x_coord: row[0],
            y_coord: row[1],
            distance: row[2],
            pathloss: row[3],
            doa_phi: row[4],
            doa_theta: row[5],
            dod_phi: row[6],
            dod_theta: row[7],
            phase: row[8],
            power: row[9],
            time_of_arrival: row[10],
            los,
        });
    }
    Ok(records)
}

fn labeled_header() -> String {
    format!("{},label,applied_epsilon", records_header())
}

/// Writes the attack output CSV: the 12 original columns (features possibly
/// perturbed, `los` as a float) plus `label` and `applied_epsilon`.
pub fn write_labeled_csv(path: &Path, samples: &[LabeledSample]) -> Result<(), DatasetError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", labeled_header())?;
    for s in samples {
        let row = features::assemble_row(&s.x, s.y);
        let mut cells: Vec<String> = row.iter().map(|v| fmt_sig9(*v)).collect();
        cells.push(format!("{}", s.label));
        cells.push(fmt_sig9(s.applied_epsilon));
        writeln!(w, "{}", cells.join(","))?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labeled_csv(path: &Path) -> Result<Vec<LabeledSample>, DatasetError> {
    let reader = BufReader::new(File::open(path)?);
    let mut lines = reader.lines().enumerate();
    let (_, header) = lines.next().ok_or(DatasetError::Header {
        expected: labeled_header(),
        got: "<empty file>".into(),
    })?;
    let header = header?;
    if header.trim() != labeled_header() {
        return Err(DatasetError::Header {
            expected: labeled_header(),
            got: header,
        });
    }
    let mut samples = Vec::new();
    for (lineno, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != 14 {
            return Err(DatasetError::Parse {
                line: lineno + 1,
                msg: format!("expected 14 columns, got {}", cells.len()),
            });
        }
        let mut row = [0.0; 12];
        for (i, c) in cells[..12].iter().enumerate() {
            row[i] = parse_f64(c, lineno + 1)?;
        }
        let label: u8 = cells[12].trim().parse().map_err(|_| DatasetError::Parse {
            line: lineno + 1,
            msg: format!("bad label `{}`", cells[12]),
        })?;
        if label > 1 {
            return Err(DatasetError::Parse {
                line: lineno + 1,
                msg: format!("label must be 0 or 1, got {label}"),
            });
        }
        let applied_epsilon = parse_f64(cells[13], lineno + 1)?;
        let (x, y) = features::split_row(&row);
        samples.push(LabeledSample {
            x,
            y,
            label,
            source_index: samples.len(),
            applied_epsilon,
        });
    }
    Ok(samples)
}

/// Seeded uniform split without replacement: exactly `test_count` test rows,
/// the remainder is the training set. Disjoint and exhaustive.
pub fn seeded_split<T: Clone>(
    items: &[T],
    test_count: usize,
    seed: u64,
) -> Result<(Vec<T>, Vec<T>), DatasetError> {
    if items.len() < test_count + 2 {
        return Err(DatasetError::Insufficient {
            needed: test_count + 2,
            got: items.len(),
        });
    }
    let mut rng = seeded_rng(seed);
    let test_idx = rand::seq::index::sample(&mut rng, items.len(), test_count).into_vec();
    let mut in_test = vec![false; items.len()];
    for &i in &test_idx {
        in_test[i] = true;
    }
    let test: Vec<T> = test_idx.iter().map(|&i| items[i].clone()).collect();
    let train: Vec<T> = items
        .iter()
        .enumerate()
        .filter(|(i, _)| !in_test[*i])
        .map(|(_, t)| t.clone())
        .collect();
    Ok((train, test))
}
