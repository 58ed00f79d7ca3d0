//! Dataset files.
//!
//! A dataset named `name` in directory `dir` is stored as
//!
//! - `name.meta.json`: every [`DatasetMeta`] field, schema-versioned;
//! - `name.features.csv` / `name.labels.csv`: a header row, then one sample
//!   per line with 17 significant digits;
//! - optionally `name.bin`: the magic `PAPRDS1`, then row-major
//!   little-endian `f64`, the feature block followed by the label block.

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use crate::dataset::{DatasetMeta, PaprDataset};
use crate::error::{Error, Result};

pub const BIN_MAGIC: &[u8; 7] = b"PAPRDS1";

/// Paths of the files that make up one dataset.
#[derive(Debug, Clone)]
pub struct DatasetPaths {
    pub meta: PathBuf,
    pub features: PathBuf,
    pub labels: PathBuf,
    pub binary: PathBuf,
}

impl DatasetPaths {
    pub fn new(dir: &Path, name: &str) -> Self {
        DatasetPaths {
            meta: dir.join(format!("{name}.meta.json")),
            features: dir.join(format!("{name}.features.csv")),
            labels: dir.join(format!("{name}.labels.csv")),
            binary: dir.join(format!("{name}.bin")),
        }
    }
}

/// Formats a float with 17 significant digits, enough to round-trip.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

fn feature_header(meta: &DatasetMeta) -> Vec<String> {
    (0..meta.k)
        .filter(|i| !meta.pilot_indices.contains(i))
        .flat_map(|i| [format!("sc{i}_re"), format!("sc{i}_im")])
        .collect()
}

fn label_header(meta: &DatasetMeta) -> Vec<String> {
    meta.pilot_indices
        .iter()
        .map(|i| format!("pilot_sc{i}"))
        .collect()
}

fn write_matrix(path: &Path, header: &[String], data: &[f64], width: usize) -> Result<()> {
    let mut w = csv::Writer::from_writer(BufWriter::new(File::create(path)?));
    w.write_record(header).map_err(csv_err)?;
    for row in data.chunks(width) {
        w.write_record(row.iter().map(|&v| fmt_f64(v)))
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Parse(format!("{other:?}")),
    }
}

fn read_matrix(path: &Path, header: &[String], rows: usize, width: usize) -> Result<Vec<f64>> {
    let file = path.display().to_string();
    let mut r = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(BufReader::new(File::open(path)?));
    let found: Vec<String> = r
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();
    if found != header {
        return Err(Error::Parse(format!(
            "{file}: header {found:?} does not match expected {header:?}"
        )));
    }
    let mut out = Vec::with_capacity(rows * width);
    let mut count = 0;
    for (row, record) in r.records().enumerate() {
        let record = record.map_err(|e| Error::Parse(format!("{file}: row {row}: {e}")))?;
        if record.len() != width {
            return Err(Error::Parse(format!(
                "{file}: row {row} has {} fields, expected {width}",
                record.len()
            )));
        }
        for (col, field) in record.iter().enumerate() {
            let v: f64 = field.trim().parse().map_err(|_| {
                Error::Parse(format!(
                    "{file}: row {row}, column {}: invalid number `{field}`",
                    header[col]
                ))
            })?;
            out.push(v);
        }
        count += 1;
    }
    if count != rows {
        return Err(Error::Parse(format!(
            "{file}: truncated at row {count}, expected {rows} rows"
        )));
    }
    Ok(out)
}

pub fn save_meta(meta: &DatasetMeta, path: &Path) -> Result<()> {
    let json = serde_json::to_string_pretty(meta).expect("meta serializes");
    fs::write(path, json + "\n")?;
    Ok(())
}

pub fn load_meta(path: &Path) -> Result<DatasetMeta> {
    let text = fs::read_to_string(path)?;
    let meta: DatasetMeta = serde_json::from_str(&text)
        .map_err(|e| Error::Parse(format!("{}: {e}", path.display())))?;
    meta.validate()?;
    Ok(meta)
}

/// Writes the metadata and both CSV matrices.
pub fn save(dataset: &PaprDataset, dir: &Path, name: &str) -> Result<DatasetPaths> {
    fs::create_dir_all(dir)?;
    let paths = DatasetPaths::new(dir, name);
    let meta = dataset.meta();
    save_meta(meta, &paths.meta)?;
    write_matrix(
        &paths.features,
        &feature_header(meta),
        dataset.features(),
        meta.feature_width(),
    )?;
    write_matrix(
        &paths.labels,
        &label_header(meta),
        dataset.labels(),
        meta.label_width(),
    )?;
    Ok(paths)
}

/// Loads a dataset written by [`save`], validating every invariant.
pub fn load(dir: &Path, name: &str) -> Result<PaprDataset> {
    let paths = DatasetPaths::new(dir, name);
    let meta = load_meta(&paths.meta)?;
    let n = meta.num_samples;
    let features = read_matrix(
        &paths.features,
        &feature_header(&meta),
        n,
        meta.feature_width(),
    )?;
    let labels = read_matrix(&paths.labels, &label_header(&meta), n, meta.label_width())?;
    PaprDataset::from_parts(meta, features, labels)
}

pub(crate) fn write_f64_block(w: &mut impl Write, values: &[f64]) -> Result<()> {
    for v in values {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

pub(crate) fn read_f64_block(bytes: &[u8], what: &str) -> Result<Vec<f64>> {
    if !bytes.len().is_multiple_of(8) {
        return Err(Error::Parse(format!(
            "{what}: {} bytes is not a whole number of f64",
            bytes.len()
        )));
    }
    Ok(bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
        .collect())
}

/// Writes the packed binary form next to the metadata.
pub fn save_binary(dataset: &PaprDataset, dir: &Path, name: &str) -> Result<DatasetPaths> {
    fs::create_dir_all(dir)?;
    let paths = DatasetPaths::new(dir, name);
    save_meta(dataset.meta(), &paths.meta)?;
    let mut w = BufWriter::new(File::create(&paths.binary)?);
    w.write_all(BIN_MAGIC)?;
    write_f64_block(&mut w, dataset.features())?;
    write_f64_block(&mut w, dataset.labels())?;
    w.flush()?;
    Ok(paths)
}

pub fn load_binary(dir: &Path, name: &str) -> Result<PaprDataset> {
    let paths = DatasetPaths::new(dir, name);
    let meta = load_meta(&paths.meta)?;
    let mut bytes = Vec::new();
    BufReader::new(File::open(&paths.binary)?).read_to_end(&mut bytes)?;
    let file = paths.binary.display().to_string();
    if !bytes.starts_with(BIN_MAGIC) {
        return Err(Error::Parse(format!("{file}: missing PAPRDS1 magic")));
    }
    let values = read_f64_block(&bytes[BIN_MAGIC.len()..], &file)?;
    let nf = meta.num_samples * meta.feature_width();
    let nl = meta.num_samples * meta.label_width();
    if values.len() != nf + nl {
        return Err(Error::Parse(format!(
            "{file}: {} values, expected {} features + {} labels",
            values.len(),
            nf,
            nl
        )));
    }
    let labels = values[nf..].to_vec();
    let mut features = values;
    features.truncate(nf);
    PaprDataset::from_parts(meta, features, labels)
}
