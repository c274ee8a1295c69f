use std::io::{Read, Write};
use std::path::Path;

use serde::Deserialize;

use crate::error::{Error, Result};

pub const CSV_HEADER: &str = "model,noise,samples,iteration,seed,class,metric,value";

/// Prefix of metric names that flag a configuration adjustment rather than a score.
pub const WARNING_PREFIX: &str = "warning_";

/// One measured value of one sweep cell.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ResultRow {
    pub model: String,
    pub noise: f64,
    pub samples: usize,
    pub iteration: usize,
    /// Seed index within the cell, `0..seeds`.
    pub seed: usize,
    /// A class label, or `all` for aggregates.
    pub class: String,
    pub metric: String,
    pub value: f64,
}

impl ResultRow {
    pub fn is_warning(&self) -> bool {
        self.metric.starts_with(WARNING_PREFIX)
    }
}

/// `value` with nine significant digits, formatted like C's `%.9g`.
pub fn format_sig9(value: f64) -> String {
    if value == 0.0 {
        return "0".into();
    }
    if !value.is_finite() {
        return value.to_string();
    }
    let sci = format!("{value:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-4..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(format!("{value:.decimals$}"))
    } else {
        format!("{}e{}{:02}", trim_zeros(mantissa.to_string()), if exp < 0 { '-' } else { '+' }, exp.abs())
    }
}

fn trim_zeros(s: String) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s
    }
}

pub fn write_rows(rows: &[ResultRow], mut out: impl Write) -> Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for r in rows {
        if !r.value.is_finite() {
            return Err(Error::invalid(format!("non-finite {} for model {}", r.metric, r.model)));
        }
        writeln!(
            out,
            "{},{},{},{},{},{},{},{}",
            r.model,
            format_sig9(r.noise),
            r.samples,
            r.iteration,
            r.seed,
            r.class,
            r.metric,
            format_sig9(r.value)
        )?;
    }
    Ok(())
}

pub fn rows_to_csv(rows: &[ResultRow]) -> Result<String> {
    let mut buf = Vec::new();
    write_rows(rows, &mut buf)?;
    Ok(String::from_utf8(buf).expect("ascii output"))
}

pub fn save_rows(rows: &[ResultRow], path: impl AsRef<Path>) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    write_rows(rows, &mut f)?;
    f.flush()?;
    Ok(())
}

pub fn read_rows(input: impl Read) -> Result<Vec<ResultRow>> {
    let mut reader = csv::Reader::from_reader(input);
    let header: Vec<String> = reader.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(Error::Format(format!("unexpected header {:?}", header.join(","))));
    }
    reader.deserialize().map(|r| r.map_err(Error::from)).collect()
}

pub fn load_rows(path: impl AsRef<Path>) -> Result<Vec<ResultRow>> {
    read_rows(std::fs::File::open(path)?)
}
