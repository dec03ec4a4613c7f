use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;
use thiserror::Error;

use crate::density::{DensityError, DensityEstimate};
use crate::math::fmt_g17;
use crate::network::{Labels, NetworkError, WeightedNetwork};

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    File { path: PathBuf, source: std::io::Error },
    #[error("{path}, line {line}: {message}")]
    MalformedEdgeList { path: PathBuf, line: u64, message: String },
    #[error("{path}, line {line}: {message}")]
    MalformedTable { path: PathBuf, line: u64, message: String },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {source}")]
    Network { path: PathBuf, source: NetworkError },
    #[error("{path}: {source}")]
    Density { path: PathBuf, source: DensityError },
}

fn file_err(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
    move |source| IoError::File { path: path.to_path_buf(), source }
}

fn csv_reader(path: &Path) -> Result<csv::Reader<File>, IoError> {
    let file = File::open(path).map_err(file_err(path))?;
    Ok(csv::ReaderBuilder::new().has_headers(true).trim(csv::Trim::All).from_reader(file))
}

fn check_header(reader: &mut csv::Reader<File>, path: &Path, expected: &[&str]) -> Result<(), IoError> {
    let header = reader.headers().map_err(|e| IoError::MalformedTable {
        path: path.to_path_buf(),
        line: 1,
        message: e.to_string(),
    })?;
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(IoError::MalformedTable {
            path: path.to_path_buf(),
            line: 1,
            message: format!("expected header '{}'", expected.join(",")),
        });
    }
    Ok(())
}

/// Parses `i,j,w` rows. Returns the triples and one more than the largest index.
pub fn read_edge_triples(path: &Path) -> Result<(Vec<(usize, usize, f64)>, usize), IoError> {
    let mut reader = csv_reader(path)?;
    check_header(&mut reader, path, &["i", "j", "w"]).map_err(|e| match e {
        IoError::MalformedTable { path, line, message } => IoError::MalformedEdgeList { path, line, message },
        other => other,
    })?;
    let mut triples = Vec::new();
    let mut max_index = None;
    for record in reader.records() {
        let malformed =
            |line: u64, message: String| IoError::MalformedEdgeList { path: path.to_path_buf(), line, message };
        let record = record.map_err(|e| {
            let line = e.position().map_or(0, |p| p.line());
            malformed(line, e.to_string())
        })?;
        let line = record.position().map_or(0, |p| p.line());
        if record.len() != 3 {
            return Err(malformed(line, format!("expected 3 fields, found {}", record.len())));
        }
        let i: usize = record[0].parse().map_err(|_| malformed(line, format!("bad node index '{}'", &record[0])))?;
        let j: usize = record[1].parse().map_err(|_| malformed(line, format!("bad node index '{}'", &record[1])))?;
        let w: f64 = record[2].parse().map_err(|_| malformed(line, format!("bad weight '{}'", &record[2])))?;
        if !w.is_finite() {
            return Err(malformed(line, format!("non-finite weight '{}'", &record[2])));
        }
        max_index = Some(max_index.map_or(i.max(j), |m: usize| m.max(i).max(j)));
        triples.push((i, j, w));
    }
    Ok((triples, max_index.map_or(0, |m| m + 1)))
}

/// Reads an edge list; `n` defaults to one more than the largest node index.
pub fn read_edge_list(path: &Path, n: Option<usize>) -> Result<WeightedNetwork, IoError> {
    let (triples, inferred) = read_edge_triples(path)?;
    WeightedNetwork::new(n.unwrap_or(inferred), triples)
        .map_err(|source| IoError::Network { path: path.to_path_buf(), source })
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    Ok(BufWriter::new(File::create(path).map_err(file_err(path))?))
}

fn write_lines(path: &Path, header: &str, rows: impl Iterator<Item = String>) -> Result<(), IoError> {
    let mut out = create(path)?;
    let io = file_err(path);
    let result = (|| {
        writeln!(out, "{header}")?;
        for row in rows {
            writeln!(out, "{row}")?;
        }
        out.flush()
    })();
    result.map_err(io)
}

pub fn write_edge_list(path: &Path, net: &WeightedNetwork) -> Result<(), IoError> {
    write_lines(path, "i,j,w", net.edges().iter().map(|e| format!("{},{},{}", e.i, e.j, fmt_g17(e.w))))
}

pub fn write_labels(path: &Path, labels: &Labels) -> Result<(), IoError> {
    write_lines(path, "node,cluster", labels.as_slice().iter().enumerate().map(|(i, z)| format!("{i},{z}")))
}

/// Reads `node,cluster` rows; nodes must be listed as `0..n` in order.
pub fn read_labels(path: &Path) -> Result<Labels, IoError> {
    let mut reader = csv_reader(path)?;
    check_header(&mut reader, path, &["node", "cluster"])?;
    let mut z = Vec::new();
    for record in reader.records() {
        let malformed =
            |line: u64, message: String| IoError::MalformedTable { path: path.to_path_buf(), line, message };
        let record = record.map_err(|e| malformed(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let parse = |s: &str| s.parse::<usize>().map_err(|_| malformed(line, format!("bad integer '{s}'")));
        if record.len() != 2 {
            return Err(malformed(line, "expected 2 fields".into()));
        }
        let node = parse(&record[0])?;
        if node != z.len() {
            return Err(malformed(line, format!("expected node {}, found {node}", z.len())));
        }
        z.push(parse(&record[1])?);
    }
    Ok(Labels::from_assignments(z))
}

pub fn write_density(path: &Path, est: &DensityEstimate) -> Result<(), IoError> {
    write_lines(
        path,
        "w,log_f,f",
        est.grid
            .iter()
            .zip(&est.log_density)
            .map(|(w, l)| format!("{},{},{}", fmt_g17(*w), fmt_g17(*l), fmt_g17(l.exp()))),
    )
}

pub fn read_density(path: &Path, bandwidth: f64, degree: usize) -> Result<DensityEstimate, IoError> {
    let mut reader = csv_reader(path)?;
    check_header(&mut reader, path, &["w", "log_f", "f"])?;
    let (mut grid, mut logs) = (Vec::new(), Vec::new());
    for record in reader.records() {
        let malformed =
            |line: u64, message: String| IoError::MalformedTable { path: path.to_path_buf(), line, message };
        let record = record.map_err(|e| malformed(e.position().map_or(0, |p| p.line()), e.to_string()))?;
        let line = record.position().map_or(0, |p| p.line());
        let parse = |s: &str| s.parse::<f64>().map_err(|_| malformed(line, format!("bad number '{s}'")));
        grid.push(parse(&record[0])?);
        logs.push(parse(&record[1])?);
    }
    DensityEstimate::from_table(grid, logs, bandwidth, degree)
        .map_err(|source| IoError::Density { path: path.to_path_buf(), source })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), IoError> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)
        .map_err(|source| IoError::Json { path: path.to_path_buf(), source })?;
    writeln!(out).and_then(|_| out.flush()).map_err(file_err(path))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, IoError> {
    let file = File::open(path).map_err(file_err(path))?;
    serde_json::from_reader(std::io::BufReader::new(file))
        .map_err(|source| IoError::Json { path: path.to_path_buf(), source })
}

pub fn write_csv_rows(path: &Path, header: &str, rows: Vec<String>) -> Result<(), IoError> {
    write_lines(path, header, rows.into_iter())
}

pub fn ensure_dir(path: &Path) -> Result<(), IoError> {
    std::fs::create_dir_all(path).map_err(file_err(path))
}
