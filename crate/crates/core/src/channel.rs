//! Modulation, AWGN and LLR demapping.
//!
//! LLRs follow the channel convention `ln p(y | c=0) - ln p(y | c=1)`, so a
//! positive value favours bit 0. Complex symbols get noise of variance
//! `N0/2` on each of I and Q; real (BPSK) symbols get `N0/2` on their single
//! dimension, which makes uncoded BPSK follow `Q(sqrt(2 Eb/N0))`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use thiserror::Error;

use crate::codes::ParityCheckMatrix;

/// Magnitude bound of every channel LLR.
pub const LLR_CLIP: f64 = 20.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ChannelError {
    #[error("{what} must be positive, got {value}")]
    NonPositive { what: &'static str, value: f64 },
    #[error("{what}: expected length {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("unknown modulation `{0}` (expected bpsk, qpsk or 16qam)")]
    UnknownModulation(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Modulation {
    Bpsk,
    Qpsk,
    Qam16,
}

impl Modulation {
    pub fn bits_per_symbol(self) -> usize {
        match self {
            Modulation::Bpsk => 1,
            Modulation::Qpsk => 2,
            Modulation::Qam16 => 4,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Modulation::Bpsk => "bpsk",
            Modulation::Qpsk => "qpsk",
            Modulation::Qam16 => "16qam",
        }
    }

    /// Constellation points indexed by their bit label (first bit is the MSB).
    pub fn points(self) -> Vec<Complex64> {
        match self {
            Modulation::Bpsk => vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)],
            Modulation::Qpsk => {
                let a = std::f64::consts::FRAC_1_SQRT_2;
                (0..4u32)
                    .map(|l| Complex64::new(pam2(l >> 1) * a, pam2(l & 1) * a))
                    .collect()
            }
            Modulation::Qam16 => {
                let a = 1.0 / 10f64.sqrt();
                (0..16u32)
                    .map(|l| Complex64::new(pam4_gray(l >> 2) * a, pam4_gray(l & 3) * a))
                    .collect()
            }
        }
    }
}

impl std::str::FromStr for Modulation {
    type Err = ChannelError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "bpsk" => Ok(Modulation::Bpsk),
            "qpsk" => Ok(Modulation::Qpsk),
            "16qam" | "qam16" => Ok(Modulation::Qam16),
            _ => Err(ChannelError::UnknownModulation(s.to_string())),
        }
    }
}

fn pam2(bit: u32) -> f64 {
    if bit == 0 {
        1.0
    } else {
        -1.0
    }
}

fn pam4_gray(bits: u32) -> f64 {
    match bits {
        0b00 => 3.0,
        0b01 => 1.0,
        0b11 => -1.0,
        _ => -3.0,
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ChannelConfig {
    pub modulation: Modulation,
    /// Code rate used to convert Eb/N0 into N0; 1 for uncoded transmission.
    pub coderate: f64,
    /// Average symbol energy of the constellation.
    pub es: f64,
    pub llr_clip: f64,
}

impl ChannelConfig {
    pub fn new(modulation: Modulation, coderate: f64) -> Result<Self, ChannelError> {
        if !(coderate > 0.0 && coderate <= 1.0) {
            return Err(ChannelError::NonPositive {
                what: "coderate in (0, 1]",
                value: coderate,
            });
        }
        Ok(ChannelConfig {
            modulation,
            coderate,
            es: 1.0,
            llr_clip: LLR_CLIP,
        })
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.modulation.bits_per_symbol()
    }

    pub fn n0(&self, ebno_db: f64) -> Result<f64, ChannelError> {
        ebno_to_n0(ebno_db, self.coderate, self.bits_per_symbol() as f64, self.es)
    }
}

/// `N0 = (10^(EbN0/10) * r * M / Es)^-1`
pub fn ebno_to_n0(ebno_db: f64, rate: f64, bits_per_symbol: f64, es: f64) -> Result<f64, ChannelError> {
    for (what, value) in [("coderate", rate), ("bits per symbol", bits_per_symbol), ("Es", es)] {
        if value.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
            return Err(ChannelError::NonPositive { what, value });
        }
    }
    Ok(1.0 / (10f64.powf(ebno_db / 10.0) * rate * bits_per_symbol / es))
}

/// Gaussian tail probability `Q(x) = P(Z > x)`.
pub fn q_function(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(x / std::f64::consts::SQRT_2)
}

#[derive(Clone, Debug, PartialEq)]
pub enum Symbols {
    Real(Vec<f64>),
    Complex(Vec<Complex64>),
}

impl Symbols {
    pub fn len(&self) -> usize {
        match self {
            Symbols::Real(v) => v.len(),
            Symbols::Complex(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Modulated block together with the number of zero pad bits appended.
#[derive(Clone, Debug, PartialEq)]
pub struct Modulated {
    pub symbols: Symbols,
    pub pad: usize,
}

pub fn map_bits(bits: &[u8], config: &ChannelConfig) -> Modulated {
    let m = config.bits_per_symbol();
    if config.modulation == Modulation::Bpsk {
        return Modulated {
            symbols: Symbols::Real(bits.iter().map(|&b| pam2(b as u32 & 1)).collect()),
            pad: 0,
        };
    }
    let pad = (m - bits.len() % m) % m;
    let points = config.modulation.points();
    let symbols = bits
        .chunks(m)
        .map(|chunk| {
            let label = (0..m).fold(0usize, |acc, i| (acc << 1) | (*chunk.get(i).unwrap_or(&0) & 1) as usize);
            points[label]
        })
        .collect();
    Modulated {
        symbols: Symbols::Complex(symbols),
        pad,
    }
}

pub fn apply_awgn<R: Rng + ?Sized>(x: &Modulated, n0: f64, rng: &mut R) -> Result<Modulated, ChannelError> {
    if n0.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(ChannelError::NonPositive { what: "N0", value: n0 });
    }
    let sigma = (n0 / 2.0).sqrt();
    let mut noise = || -> f64 { sigma * rng.sample::<f64, _>(StandardNormal) };
    let symbols = match &x.symbols {
        Symbols::Real(v) => Symbols::Real(v.iter().map(|&s| s + noise()).collect()),
        Symbols::Complex(v) => Symbols::Complex(
            v.iter()
                .map(|&s| {
                    let re = noise();
                    let im = noise();
                    s + Complex64::new(re, im)
                })
                .collect(),
        ),
    };
    Ok(Modulated { symbols, pad: x.pad })
}

/// Channel LLRs, each clipped to `[-clip, clip]`.
#[derive(Clone, Debug, PartialEq)]
pub struct LlrVector(Vec<f64>);

impl LlrVector {
    pub fn clipped(values: Vec<f64>, clip: f64) -> Self {
        LlrVector(values.into_iter().map(|x| x.clamp(-clip, clip)).collect())
    }

    pub fn new(values: Vec<f64>) -> Self {
        Self::clipped(values, LLR_CLIP)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Bit 1 where the LLR is negative.
    pub fn hard_decision(&self) -> Vec<u8> {
        hard_decision(&self.0)
    }
}

pub fn hard_decision(llr: &[f64]) -> Vec<u8> {
    llr.iter().map(|&l| (l < 0.0) as u8).collect()
}

fn log_sum_exp(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let max = values.clone().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.map(|v| (v - max).exp()).sum::<f64>().ln()
}

/// Exact (full-log) per-bit LLRs; pad bits are dropped.
pub fn demap_llr(y: &Modulated, n0: f64, config: &ChannelConfig) -> Result<LlrVector, ChannelError> {
    if n0.partial_cmp(&0.0) != Some(std::cmp::Ordering::Greater) {
        return Err(ChannelError::NonPositive { what: "N0", value: n0 });
    }
    let clip = config.llr_clip;
    match &y.symbols {
        Symbols::Real(v) => Ok(LlrVector::clipped(v.iter().map(|&s| 4.0 * s / n0).collect(), clip)),
        Symbols::Complex(v) => {
            let m = config.bits_per_symbol();
            let points = config.modulation.points();
            let mut out = Vec::with_capacity(v.len() * m);
            let mut metric = vec![0.0; points.len()];
            for &s in v {
                for (d, p) in metric.iter_mut().zip(&points) {
                    *d = -(s - p).norm_sqr() / n0;
                }
                for bit in 0..m {
                    let shift = m - 1 - bit;
                    let with = |value: usize| {
                        metric
                            .iter()
                            .enumerate()
                            .filter(move |(label, _)| (label >> shift) & 1 == value)
                            .map(|(_, &d)| d)
                    };
                    out.push(log_sum_exp(with(0)) - log_sum_exp(with(1)));
                }
            }
            out.truncate(out.len() - y.pad);
            Ok(LlrVector::clipped(out, clip))
        }
    }
}

/// Encoded block as seen by a decoder: channel LLRs followed by the syndrome
/// of their hard decision, as reals.
#[derive(Clone, Debug, PartialEq)]
pub struct DecoderInput {
    values: Vec<f64>,
    n: usize,
}

impl DecoderInput {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn llr(&self) -> &[f64] {
        &self.values[..self.n]
    }

    pub fn syndrome(&self) -> &[f64] {
        &self.values[self.n..]
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn build_decoder_input(llr: &LlrVector, h: &ParityCheckMatrix) -> Result<DecoderInput, ChannelError> {
    if llr.len() != h.n() {
        return Err(ChannelError::Shape {
            what: "LLR vector",
            expected: h.n(),
            got: llr.len(),
        });
    }
    let hard = llr.hard_decision();
    let syndrome = h.syndrome(&hard).expect("length checked");
    let mut values = llr.as_slice().to_vec();
    values.extend(syndrome.iter().map(|&s| s as f64));
    Ok(DecoderInput { values, n: h.n() })
}

/// Modulate, add noise at `ebno_db` and demap.
pub fn transmit<R: Rng + ?Sized>(
    bits: &[u8],
    config: &ChannelConfig,
    ebno_db: f64,
    rng: &mut R,
) -> Result<LlrVector, ChannelError> {
    let n0 = config.n0(ebno_db)?;
    let x = map_bits(bits, config);
    let y = apply_awgn(&x, n0, rng)?;
    demap_llr(&y, n0, config)
}
