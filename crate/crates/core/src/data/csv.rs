//! Numeric CSV tables.
//!
//! ```text
//! # split: outlier          optional metadata lines, before the header
//! # shape: 28 28            optional (height width)
//! x0,x1,...,x{d-1}[,label]  header; a final column named `label` holds 0/1
//! 0.25,1.5,...[,0]
//! ```
//!
//! Values are written with Rust's shortest round-trip formatting, so
//! save-then-load reproduces every `f64` exactly.

use std::fmt::Write as _;
use std::path::Path;

use super::{DatasetTable, Label, Split};
use crate::error::{Error, Result};
use crate::numerics::Mat64;

pub fn load_csv(path: &Path) -> Result<DatasetTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_csv(&text, path)
}

fn parse_csv(text: &str, path: &Path) -> Result<DatasetTable> {
    let mut split = Split::TrainNormal;
    let mut shape = None;
    let mut rest = text;
    let mut meta_lines = 0;

    // Metadata comments precede the header and are not part of the CSV body.
    while let Some(meta) = rest.trim_start_matches([' ', '\t']).strip_prefix('#') {
        let (line, tail) = meta.split_once('\n').unwrap_or((meta, ""));
        rest = tail;
        meta_lines += 1;
        let at = |msg: &str| Error::parse(path, format!("line {meta_lines}: {msg}"));
        let Some((key, value)) = line.split_once(':') else {
            continue;
        };
        match key.trim() {
            "split" => {
                split = value
                    .trim()
                    .parse()
                    .map_err(|e: Error| at(&e.to_string()))?
            }
            "shape" => {
                let dims: Vec<usize> = value
                    .split_whitespace()
                    .map(str::parse)
                    .collect::<std::result::Result<_, _>>()
                    .map_err(|_| at("bad shape"))?;
                if dims.len() != 2 {
                    return Err(at("shape needs height and width"));
                }
                shape = Some((dims[0], dims[1]));
            }
            _ => {}
        }
    }

    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .flexible(true)
        .from_reader(rest.as_bytes());
    let header = reader
        .headers()
        .map_err(|e| Error::parse(path, e.to_string()))?
        .clone();
    if header.is_empty() {
        return Err(Error::parse(path, "missing header row"));
    }
    let has_label = header.iter().next_back() == Some("label");
    let width = header.len();
    let dim = width - usize::from(has_label);

    let mut data = Vec::new();
    let mut labels: Vec<Label> = Vec::new();
    let mut rows = 0;
    for record in reader.records() {
        let record = record.map_err(|e| Error::parse(path, e.to_string()))?;
        let row_no = record.position().map_or(0, |p| p.line() as usize) + meta_lines;
        if record.len() != width {
            return Err(Error::parse(
                path,
                format!(
                    "row {row_no}: expected {width} cells, found {} (header on line {})",
                    record.len(),
                    meta_lines + 1
                ),
            ));
        }
        for (c, cell) in record.iter().take(dim).enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                Error::parse(
                    path,
                    format!("row {row_no}, column {}: `{cell}` is not a number", c + 1),
                )
            })?;
            if !v.is_finite() {
                return Err(Error::parse(
                    path,
                    format!("row {row_no}, column {}: non-finite value", c + 1),
                ));
            }
            data.push(v);
        }
        if has_label {
            let cell = &record[dim];
            let l: Label = cell.parse().ok().filter(|l| *l <= 1).ok_or_else(|| {
                Error::parse(
                    path,
                    format!(
                        "row {row_no}, column {}: label `{cell}` is not 0 or 1",
                        dim + 1
                    ),
                )
            })?;
            labels.push(l);
        }
        rows += 1;
    }

    let mut table = DatasetTable::new(Mat64::new(rows, dim, data)?, split);
    if has_label {
        table = table.with_labels(labels)?;
    }
    if let Some((h, w)) = shape {
        table = table
            .with_shape(h, w)
            .map_err(|e| Error::parse(path, e.to_string()))?;
    }
    Ok(table)
}

pub fn write_csv_string(table: &DatasetTable) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# split: {}", table.split);
    if let Some((h, w)) = table.shape_hint {
        let _ = writeln!(out, "# shape: {h} {w}");
    }
    let mut writer = csv::Writer::from_writer(Vec::new());
    let mut header: Vec<String> = (0..table.dim()).map(|i| format!("x{i}")).collect();
    if table.labels.is_some() {
        header.push("label".into());
    }
    // Writing to a Vec cannot fail.
    writer.write_record(&header).expect("in-memory write");
    for (r, row) in table.samples.iter_rows().enumerate() {
        let mut cells: Vec<String> = row.iter().map(f64::to_string).collect();
        if let Some(labels) = &table.labels {
            cells.push(labels[r].to_string());
        }
        writer.write_record(&cells).expect("in-memory write");
    }
    let body = writer.into_inner().expect("in-memory flush");
    out.push_str(&String::from_utf8(body).expect("ascii output"));
    out
}

pub fn save_csv(table: &DatasetTable, path: &Path) -> Result<()> {
    std::fs::write(path, write_csv_string(table)).map_err(|e| Error::io(path, e))
}
