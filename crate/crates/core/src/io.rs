//! CSV reading and writing of evaluation logs.
//!
//! Single-classifier files have header `x0,…,x{d-1},r,s` with an optional
//! trailing `e` column of expert scores; paired files have
//! `x0,…,x{d-1},r_a,s_a,r_b,s_b`. Abstained rows leave the score empty.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::model::{
    validate_dataset, validate_paired, Arm, EvalDataset, PairedDataset, RawPairedRow, RawRow, ScoreRange,
};

/// A single-classifier log plus its optional expert column.
#[derive(Debug, Clone, PartialEq)]
pub struct SingleLog {
    pub data: EvalDataset<f64>,
    pub expert: Option<Vec<Option<f64>>>,
}

fn feature_count(headers: &csv::StringRecord, tail: &[&str]) -> Result<usize> {
    let fields: Vec<&str> = headers.iter().map(str::trim).collect();
    let d = fields
        .len()
        .checked_sub(tail.len())
        .filter(|&d| d > 0)
        .ok_or_else(|| Error::Csv(format!("header needs at least one feature column before {}", tail.join(","))))?;
    for (i, name) in fields[..d].iter().enumerate() {
        if *name != format!("x{i}") {
            return Err(Error::Csv(format!("header column {i} is {name:?}, expected \"x{i}\"")));
        }
    }
    if fields[d..] != *tail {
        return Err(Error::Csv(format!("header must end with {}, found {}", tail.join(","), fields[d..].join(","))));
    }
    Ok(d)
}

fn parse_f64(row: usize, column: &str, v: &str) -> Result<f64> {
    v.trim()
        .parse::<f64>()
        .map_err(|_| Error::Csv(format!("row {row}: column {column}: cannot parse {v:?} as a number")))
}

fn parse_opt(row: usize, column: &str, v: &str) -> Result<Option<f64>> {
    if v.trim().is_empty() {
        Ok(None)
    } else {
        parse_f64(row, column, v).map(Some)
    }
}

fn parse_flag(row: usize, column: &str, v: &str) -> Result<i64> {
    v.trim().parse::<i64>().map_err(|_| Error::Csv(format!("row {row}: column {column}: cannot parse {v:?} as 0 or 1")))
}

fn parse_features(row: usize, rec: &csv::StringRecord, d: usize) -> Result<Vec<f64>> {
    (0..d).map(|j| parse_f64(row, &format!("x{j}"), &rec[j])).collect()
}

fn reader<R: Read>(input: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().has_headers(true).flexible(false).from_reader(input)
}

fn records<R: Read>(rdr: &mut csv::Reader<R>) -> impl Iterator<Item = (usize, Result<csv::StringRecord>)> + '_ {
    rdr.records().enumerate().map(|(row, r)| {
        (
            row,
            r.map_err(|e| match e.kind() {
                csv::ErrorKind::Io(_) => Error::from(e),
                _ => Error::Csv(format!("row {row}: {e}")),
            }),
        )
    })
}

pub fn read_single<R: Read>(input: R, range: ScoreRange<f64>) -> Result<SingleLog> {
    let mut rdr = reader(input);
    let headers = rdr.headers()?.clone();
    let has_expert = headers.iter().next_back().map(str::trim) == Some("e");
    let d = if has_expert { feature_count(&headers, &["r", "s", "e"])? } else { feature_count(&headers, &["r", "s"])? };
    let mut rows = Vec::new();
    let mut expert = Vec::new();
    for (row, rec) in records(&mut rdr) {
        let rec = rec?;
        let x = parse_features(row, &rec, d)?;
        let r = parse_flag(row, "r", &rec[d])?;
        let s = parse_opt(row, "s", &rec[d + 1])?;
        if has_expert {
            expert.push(parse_opt(row, "e", &rec[d + 2])?);
        }
        rows.push(RawRow::new(x, r, s));
    }
    let data = validate_dataset(rows, range)?;
    Ok(SingleLog { data, expert: has_expert.then_some(expert) })
}

pub fn read_paired<R: Read>(input: R, range: ScoreRange<f64>) -> Result<PairedDataset<f64>> {
    let mut rdr = reader(input);
    let headers = rdr.headers()?.clone();
    let d = feature_count(&headers, &["r_a", "s_a", "r_b", "s_b"])?;
    let mut rows = Vec::new();
    for (row, rec) in records(&mut rdr) {
        let rec = rec?;
        rows.push(RawPairedRow {
            x: parse_features(row, &rec, d)?,
            r_a: parse_flag(row, "r_a", &rec[d])?,
            s_a: parse_opt(row, "s_a", &rec[d + 1])?,
            r_b: parse_flag(row, "r_b", &rec[d + 2])?,
            s_b: parse_opt(row, "s_b", &rec[d + 3])?,
        });
    }
    validate_paired(rows, range)
}

pub fn read_single_path(path: &Path, range: ScoreRange<f64>) -> Result<SingleLog> {
    read_single(std::fs::File::open(path)?, range)
}

pub fn read_paired_path(path: &Path, range: ScoreRange<f64>) -> Result<PairedDataset<f64>> {
    read_paired(std::fs::File::open(path)?, range)
}

fn opt(v: Option<f64>) -> String {
    v.map(|s| s.to_string()).unwrap_or_default()
}

fn feature_header(d: usize) -> Vec<String> {
    (0..d).map(|j| format!("x{j}")).collect()
}

pub fn write_single<W: Write>(out: W, ds: &EvalDataset<f64>, expert: Option<&[Option<f64>]>) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let mut header = feature_header(ds.dim());
    header.extend(["r".to_string(), "s".to_string()]);
    if expert.is_some() {
        header.push("e".to_string());
    }
    wtr.write_record(&header)?;
    for (i, rec) in ds.iter().enumerate() {
        let mut fields: Vec<String> = rec.x.iter().map(f64::to_string).collect();
        fields.push(rec.r().to_string());
        fields.push(opt(rec.score));
        if let Some(e) = expert {
            fields.push(opt(e.get(i).copied().flatten()));
        }
        wtr.write_record(&fields)?;
    }
    wtr.flush()?;
    Ok(())
}

pub fn write_paired<W: Write>(out: W, pds: &PairedDataset<f64>) -> Result<()> {
    let mut wtr = csv::WriterBuilder::new().terminator(csv::Terminator::Any(b'\n')).from_writer(out);
    let mut header = feature_header(pds.dim());
    header.extend(["r_a", "s_a", "r_b", "s_b"].map(String::from));
    wtr.write_record(&header)?;
    let (a, b) = (pds.observations(Arm::A), pds.observations(Arm::B));
    for (i, x) in pds.features().iter().enumerate() {
        let mut fields: Vec<String> = x.iter().map(f64::to_string).collect();
        fields.push((a[i].abstained as u8).to_string());
        fields.push(opt(a[i].score));
        fields.push((b[i].abstained as u8).to_string());
        fields.push(opt(b[i].score));
        wtr.write_record(&fields)?;
    }
    wtr.flush()?;
    Ok(())
}
