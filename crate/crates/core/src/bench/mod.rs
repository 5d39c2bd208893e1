//! Monte Carlo BER sweeps, decoder timing and report emission.

mod ber;
mod report;
mod timing;

use std::fmt;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::bp::{BpDecoder, BpError};
use crate::channel::{build_decoder_input, ChannelError, LlrVector};
use crate::codes::{CodeError, LinearCode};
use crate::transformer::{load_model, Model, TransformerError};

pub use ber::{calibrate, run_ber, BerConfig, BerPoint, BerReport, Calibration, CalibrationPoint, StopRule};
pub use report::{emit, format_sig9, parse_csv, write_csv, write_json, BerRow, Format, CSV_HEADER};
pub use timing::{
    fit_loglog_slope, run_attention_timing, run_timing, TimingCell, TimingDecoder, TimingReport, MIN_REPETITIONS,
};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("decoder expects n = {decoder}, code has n = {code}")]
    Dimension { decoder: usize, code: usize },
    #[error("empty Eb/N0 list")]
    EmptySweep,
    #[error("invalid benchmark setting: {0}")]
    Config(String),
    #[error(transparent)]
    Code(#[from] CodeError),
    #[error(transparent)]
    Channel(#[from] ChannelError),
    #[error(transparent)]
    Bp(#[from] BpError),
    #[error(transparent)]
    Model(#[from] TransformerError),
    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for BenchError {
    fn from(e: std::io::Error) -> Self {
        BenchError::Io(e.to_string())
    }
}

impl From<csv::Error> for BenchError {
    fn from(e: csv::Error) -> Self {
        BenchError::Io(e.to_string())
    }
}

/// A decoder under test.
#[derive(Clone, Debug)]
pub enum Decoder {
    /// Hard decisions on raw channel LLRs; random words at rate 1.
    Uncoded,
    Bp(BpDecoder),
    Transformer(Box<Model<f32>>),
}

impl Decoder {
    /// `uncoded`, `bp:ITERS` or a checkpoint path.
    pub fn from_spec(spec: &str, code: &LinearCode) -> Result<Self, BenchError> {
        if spec == "uncoded" {
            return Ok(Decoder::Uncoded);
        }
        if let Some(iters) = spec.strip_prefix("bp:") {
            let iters: usize = iters
                .parse()
                .map_err(|_| BenchError::Config(format!("bad BP iteration count in `{spec}`")))?;
            if iters == 0 {
                return Err(BenchError::Config("BP needs at least one iteration".into()));
            }
            return Ok(Decoder::Bp(BpDecoder::new(code.pcm(), iters)));
        }
        let model = load_model(Path::new(spec))?;
        let decoder = Decoder::Transformer(Box::new(model));
        decoder.check_code(code)?;
        Ok(decoder)
    }

    pub fn name(&self) -> String {
        match self {
            Decoder::Uncoded => "uncoded".to_string(),
            Decoder::Bp(bp) => format!("bp:{}", bp.iterations()),
            Decoder::Transformer(m) => format!("transformer-{}", m.config().attention.name()),
        }
    }

    /// Decoder settings that enter the configuration hash.
    pub fn provenance(&self) -> Vec<(String, String)> {
        match self {
            Decoder::Uncoded => vec![],
            Decoder::Bp(bp) => vec![
                ("bp.iterations".into(), bp.iterations().to_string()),
                ("bp.variant".into(), "sum-product".into()),
                ("bp.schedule".into(), "flooding".into()),
            ],
            Decoder::Transformer(m) => {
                let mut pairs: Vec<(String, String)> = m
                    .config()
                    .to_pairs()
                    .into_iter()
                    .map(|(k, v)| (format!("model.{k}"), v))
                    .collect();
                let mut h = Sha256::new();
                for (name, t) in m.params().names().iter().zip(m.params().tensors()) {
                    h.update(name.as_bytes());
                    for v in t.data() {
                        h.update(v.to_le_bytes());
                    }
                }
                pairs.push(("model.params_sha256".into(), hex::encode(h.finalize())));
                pairs
            }
        }
    }

    pub fn check_code(&self, code: &LinearCode) -> Result<(), BenchError> {
        let n = match self {
            Decoder::Uncoded => return Ok(()),
            Decoder::Bp(bp) => bp.n(),
            Decoder::Transformer(m) => m.config().n,
        };
        if n != code.n() {
            return Err(BenchError::Dimension {
                decoder: n,
                code: code.n(),
            });
        }
        if let Decoder::Transformer(m) = self {
            if m.code() != code.pcm() {
                return Err(BenchError::Config(
                    "checkpoint was trained on a different parity-check matrix".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn decode_batch(&self, llrs: &[LlrVector], code: &LinearCode) -> Result<Vec<Vec<u8>>, BenchError> {
        match self {
            Decoder::Uncoded => Ok(llrs.iter().map(LlrVector::hard_decision).collect()),
            Decoder::Bp(bp) => Ok(bp.decode_batch(llrs)?.into_iter().map(|o| o.hard).collect()),
            Decoder::Transformer(m) => {
                let inputs = llrs
                    .iter()
                    .map(|l| build_decoder_input(l, code.pcm()))
                    .collect::<Result<Vec<_>, _>>()?;
                Ok(m.decode(&inputs)?)
            }
        }
    }
}

impl fmt::Display for Decoder {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

/// First 16 hex digits of SHA-256 over `key=value` lines.
pub fn config_hash(pairs: &[(String, String)]) -> String {
    let mut h = Sha256::new();
    for (k, v) in pairs {
        h.update(k.as_bytes());
        h.update(b"=");
        h.update(v.as_bytes());
        h.update(b"\n");
    }
    hex::encode(h.finalize())[..16].to_string()
}

/// Eb/N0 points of a `start:step:stop` range, inclusive of `stop`.
pub fn parse_ebno_range(text: &str) -> Result<Vec<f64>, BenchError> {
    let bad = || BenchError::Config(format!("Eb/N0 range `{text}` is not start:step:stop"));
    let parts: Vec<f64> = text
        .split(':')
        .map(|p| p.trim().parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    match parts.as_slice() {
        [single] => Ok(vec![*single]),
        [start, step, stop] => {
            if !(*step > 0.0) || stop < start {
                return Err(bad());
            }
            let count = ((stop - start) / step + 1e-9).floor() as usize + 1;
            Ok((0..count).map(|i| start + i as f64 * step).collect())
        }
        _ => Err(bad()),
    }
}
