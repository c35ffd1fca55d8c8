//! CSV formats: tabulated spectra, per-channel loss profiles, attenuation
//! datasets, and the writer used for every output table.

use std::fmt;
use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::Deserialize;
use wdmpairs_core::estimate::FitRow;
use wdmpairs_core::wss::{Band, LossProfile};

use crate::error::{Error, Result};

pub const SPECTRUM_HEADER: [&str; 2] = ["detuning_thz", "power"];
pub const LOSS_HEADER: [&str; 3] = ["band", "channel", "loss_db"];
pub const DATASET_HEADER: [&str; 5] = ["att_db", "gates", "clicks1", "clicks2", "coincidences"];

/// Fixed scientific notation with nine significant digits.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.8e}")
}

/// A single output cell.
#[derive(Debug, Clone, PartialEq)]
pub enum Field {
    Int(i64),
    Count(u64),
    Float(f64),
    Text(String),
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Field::Int(v) => write!(f, "{v}"),
            Field::Count(v) => write!(f, "{v}"),
            Field::Float(v) => f.write_str(&fmt_float(*v)),
            Field::Text(s) => f.write_str(s),
        }
    }
}

impl From<f64> for Field {
    fn from(v: f64) -> Self {
        Field::Float(v)
    }
}

impl From<u64> for Field {
    fn from(v: u64) -> Self {
        Field::Count(v)
    }
}

impl From<i32> for Field {
    fn from(v: i32) -> Self {
        Field::Int(v.into())
    }
}

impl From<&str> for Field {
    fn from(v: &str) -> Self {
        Field::Text(v.to_owned())
    }
}

/// Header plus rows, rendered with `,` separators and LF line endings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Field>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Self {
        Table {
            header: header.iter().map(|s| s.as_ref().to_owned()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Field>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_to<W: Write>(&self, out: W) -> std::io::Result<()> {
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(out);
        w.write_record(&self.header)?;
        for row in &self.rows {
            w.write_record(row.iter().map(|f| f.to_string()))?;
        }
        w.flush()
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_to(&mut buf).expect("writing to memory cannot fail");
        String::from_utf8(buf).expect("csv output is UTF-8")
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_to(std::io::BufWriter::new(file))
            .map_err(|e| Error::io(path, e))
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

fn input_error(path: &Path, message: impl Into<String>) -> Error {
    Error::Input {
        path: path.to_owned(),
        message: message.into(),
    }
}

fn records<T, R>(reader: R, header: &[&str], path: &Path) -> Result<Vec<T>>
where
    T: for<'de> Deserialize<'de>,
    R: Read,
{
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .comment(Some(b'#'))
        .from_reader(reader);
    let found = rdr
        .headers()
        .map_err(|e| input_error(path, e.to_string()))?
        .clone();
    if found.iter().ne(header.iter().copied()) {
        return Err(input_error(
            path,
            format!("expected header `{}`, found `{}`", header.join(","), found.iter().collect::<Vec<_>>().join(",")),
        ));
    }
    let mut out = Vec::new();
    for rec in rdr.deserialize() {
        out.push(rec.map_err(|e: csv::Error| input_error(path, e.to_string()))?);
    }
    Ok(out)
}

/// Parses a tabulated spectrum; detunings must be strictly ascending.
pub fn parse_spectrum<R: Read>(reader: R, path: &Path) -> Result<Vec<(f64, f64)>> {
    let rows: Vec<(f64, f64)> = records(reader, &SPECTRUM_HEADER, path)?;
    if rows.is_empty() {
        return Err(input_error(path, "no spectrum samples"));
    }
    for (i, w) in rows.windows(2).enumerate() {
        if !(w[1].0 > w[0].0) {
            return Err(input_error(
                path,
                format!("row {}: detuning {} does not exceed {}", i + 3, w[1].0, w[0].0),
            ));
        }
    }
    Ok(rows)
}

pub fn read_spectrum(path: &Path) -> Result<Vec<(f64, f64)>> {
    parse_spectrum(open(path)?, path)
}

#[derive(Deserialize)]
struct LossRecord {
    band: String,
    channel: i32,
    loss_db: f64,
}

/// Parses a per-channel loss profile. Each (band, channel) may appear once.
pub fn parse_loss_profile<R: Read>(reader: R, path: &Path) -> Result<LossProfile> {
    let mut profile = LossProfile::new();
    for (i, rec) in records::<LossRecord, _>(reader, &LOSS_HEADER, path)?.into_iter().enumerate() {
        let row = i + 2;
        let band: Band = rec
            .band
            .parse()
            .map_err(|e| input_error(path, format!("row {row}: {e}")))?;
        if profile.get(band, rec.channel).is_some() {
            return Err(input_error(
                path,
                format!("row {row}: duplicate entry for {band}{}", rec.channel),
            ));
        }
        profile
            .insert(band, rec.channel, rec.loss_db)
            .map_err(|e| input_error(path, format!("row {row}: {e}")))?;
    }
    Ok(profile)
}

pub fn read_loss_profile(path: &Path) -> Result<LossProfile> {
    parse_loss_profile(open(path)?, path)
}

#[derive(Deserialize)]
struct DatasetRecord {
    att_db: f64,
    gates: u64,
    clicks1: u64,
    clicks2: u64,
    coincidences: u64,
}

/// Parses an attenuation dataset. Row consistency (counts not exceeding
/// gates, non-negative attenuation) is checked when the fit dataset is built.
pub fn parse_dataset<R: Read>(reader: R, path: &Path) -> Result<Vec<FitRow>> {
    let rows: Vec<DatasetRecord> = records(reader, &DATASET_HEADER, path)?;
    if rows.is_empty() {
        return Err(input_error(path, "no data rows"));
    }
    Ok(rows
        .into_iter()
        .map(|r| FitRow {
            att_db: r.att_db,
            gates: r.gates,
            clicks1: r.clicks1,
            clicks2: r.clicks2,
            coincidences: r.coincidences,
        })
        .collect())
}

pub fn read_dataset(path: &Path) -> Result<Vec<FitRow>> {
    parse_dataset(open(path)?, path)
}

pub fn dataset_table(rows: &[FitRow]) -> Table {
    let mut t = Table::new(&DATASET_HEADER);
    for r in rows {
        t.push(vec![
            r.att_db.into(),
            r.gates.into(),
            r.clicks1.into(),
            r.clicks2.into(),
            r.coincidences.into(),
        ]);
    }
    t
}
