use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{BenchError, BerReport};

pub const CSV_HEADER: &str = "decoder,n,k,ebno_db,bits,bit_errors,block_errors,ber,bler,seconds,config_hash";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Format {
    Csv,
    Json,
}

impl FromStr for Format {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            other => Err(BenchError::Config(format!("unknown format `{other}`"))),
        }
    }
}

/// `x` with 9 significant digits, in the shorter of fixed or exponent form,
/// trailing zeros removed.
pub fn format_sig9(x: f64) -> String {
    if x == 0.0 || !x.is_finite() {
        return if x == 0.0 { "0".to_string() } else { x.to_string() };
    }
    let sci = format!("{x:.8e}");
    let (mantissa, exp) = sci.split_once('e').expect("exponent form");
    let exp: i32 = exp.parse().expect("integer exponent");
    if (-5..9).contains(&exp) {
        let decimals = (8 - exp).max(0) as usize;
        trim_zeros(&format!("{x:.decimals$}"))
    } else {
        format!("{}e{exp}", trim_zeros(mantissa))
    }
}

fn trim_zeros(s: &str) -> String {
    if s.contains('.') {
        s.trim_end_matches('0').trim_end_matches('.').to_string()
    } else {
        s.to_string()
    }
}

/// Rounds through the 9-digit text form.
fn sig9(x: f64) -> f64 {
    format_sig9(x).parse().unwrap_or(x)
}

/// One CSV data row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BerRow {
    pub decoder: String,
    pub n: usize,
    pub k: usize,
    pub ebno_db: f64,
    pub bits: u64,
    pub bit_errors: u64,
    pub block_errors: u64,
    pub ber: f64,
    pub bler: f64,
    pub seconds: f64,
    pub config_hash: String,
}

impl BerRow {
    pub fn from_report(report: &BerReport) -> Vec<BerRow> {
        report
            .points
            .iter()
            .map(|p| BerRow {
                decoder: report.decoder.clone(),
                n: report.n,
                k: report.k,
                ebno_db: p.ebno_db,
                bits: p.bits,
                bit_errors: p.bit_errors,
                block_errors: p.block_errors,
                ber: p.ber(),
                bler: p.bler(),
                seconds: p.seconds,
                config_hash: report.config_hash.clone(),
            })
            .collect()
    }

    fn record(&self) -> [String; 11] {
        [
            self.decoder.clone(),
            self.n.to_string(),
            self.k.to_string(),
            format_sig9(self.ebno_db),
            self.bits.to_string(),
            self.bit_errors.to_string(),
            self.block_errors.to_string(),
            format_sig9(self.ber),
            format_sig9(self.bler),
            format_sig9(self.seconds),
            self.config_hash.clone(),
        ]
    }
}

pub fn write_csv<W: Write>(out: W, rows: &[BerRow]) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER.split(','))?;
    for r in rows {
        w.write_record(r.record())?;
    }
    w.flush()?;
    Ok(())
}

pub fn parse_csv(text: &str) -> Result<Vec<BerRow>, BenchError> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header.join(",") != CSV_HEADER {
        return Err(BenchError::Config(format!(
            "unexpected CSV header `{}`",
            header.join(",")
        )));
    }
    Ok(r.deserialize().collect::<Result<Vec<BerRow>, _>>()?)
}

pub fn write_json<W: Write>(mut out: W, report: &BerReport) -> Result<(), BenchError> {
    let points: Vec<_> = report
        .points
        .iter()
        .map(|p| {
            json!({
                "ebno_db": sig9(p.ebno_db),
                "bits": p.bits,
                "bit_errors": p.bit_errors,
                "block_errors": p.block_errors,
                "blocks": p.blocks,
                "ber": sig9(p.ber()),
                "ber_std_error": sig9(p.ber_std_error()),
                "bler": sig9(p.bler()),
                "seconds": sig9(p.seconds),
            })
        })
        .collect();
    let config: serde_json::Map<String, serde_json::Value> =
        report.config.iter().map(|(k, v)| (k.clone(), json!(v))).collect();
    let calibration = report.calibration.as_ref().map(|c| {
        json!({
            "valid": c.valid,
            "tolerance": c.tolerance,
            "points": c.points.iter().map(|p| json!({
                "ebno_db": sig9(p.ebno_db),
                "ber": sig9(p.ber),
                "theory": sig9(p.theory),
                "bit_errors": p.bit_errors,
                "relative_error": sig9(p.relative_error),
            })).collect::<Vec<_>>(),
        })
    });
    let doc = json!({
        "decoder": report.decoder,
        "n": report.n,
        "k": report.k,
        "config_hash": report.config_hash,
        "config": config,
        "points": points,
        "metadata": {
            "comparisons_valid": report.comparisons_valid(),
            "calibration": calibration,
            "monotonicity_violations": report.monotonicity_violations.iter().map(|&e| sig9(e)).collect::<Vec<_>>(),
        },
    });
    serde_json::to_writer_pretty(&mut out, &doc).map_err(|e| BenchError::Io(e.to_string()))?;
    out.write_all(b"\n")?;
    Ok(())
}

/// Writes to `path`, or to standard output when `path` is `None`.
pub fn emit(report: &BerReport, format: Format, path: Option<&Path>) -> Result<(), BenchError> {
    let mut buf = Vec::new();
    match format {
        Format::Csv => write_csv(&mut buf, &BerRow::from_report(report))?,
        Format::Json => write_json(&mut buf, report)?,
    }
    match path {
        Some(p) => std::fs::write(p, buf).map_err(|e| BenchError::Io(format!("{}: {e}", p.display()))),
        None => Ok(std::io::stdout().write_all(&buf)?),
    }
}
