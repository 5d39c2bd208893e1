//! Linear binary block codes: construction, encoding, syndromes, rate
//! matching and alist I/O.

mod alist;
mod generator;
pub mod gf2;
mod lift;
mod pcm;
mod rate_match;
mod regular;

use thiserror::Error;

pub use alist::{load_alist, save_alist};
pub use generator::{derive_generator, GeneratorMatrix};
pub use lift::{lift_base_graph, Protograph};
pub use pcm::ParityCheckMatrix;
pub use rate_match::{depuncture, puncture, reinsert_shortened, shorten, Rate};
pub use regular::build_regular_ldpc;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum CodeError {
    #[error("invalid code parameters: {0}")]
    Parameter(String),
    #[error("construction failed: {0}")]
    Construction(String),
    #[error("{what}: expected length {expected}, got {got}")]
    Shape {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("rank {rank} equals code length {n}: no information bits")]
    DegenerateCode { n: usize, rank: usize },
    #[error("index {index} out of range (bound {bound})")]
    IndexOutOfRange { index: usize, bound: usize },
    #[error("entry ({row}, {col}) is {value}, not a bit")]
    NonBinary { row: usize, col: usize, value: u8 },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Construction {
    Regular { v: usize, c: usize, seed: u64 },
    Lifted { base: Protograph, z: usize },
    Imported,
}

impl Construction {
    pub fn kind(&self) -> &'static str {
        match self {
            Construction::Regular { .. } => "regular",
            Construction::Lifted { .. } => "lifted",
            Construction::Imported => "imported",
        }
    }
}

/// Summary of a code: dimensions, how it was built and its exact rate.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CodeSpec {
    pub construction: Construction,
    pub n: usize,
    pub k: usize,
    pub m: usize,
    pub rate: Rate,
}

impl CodeSpec {
    /// Human-readable identity, stable across runs.
    pub fn describe(&self) -> String {
        match &self.construction {
            Construction::Regular { v, c, seed } => {
                format!("regular(n={},v={v},c={c},seed={seed})", self.n)
            }
            Construction::Lifted { base, z } => format!(
                "lifted({}x{},z={z},shifts={:?})",
                base.rows(),
                base.cols(),
                base.shifts()
            ),
            Construction::Imported => format!("imported(n={},m={},k={})", self.n, self.m, self.k),
        }
    }
}

/// Parity-check matrix, generator and spec bundled together.
#[derive(Clone, Debug)]
pub struct LinearCode {
    spec: CodeSpec,
    pcm: ParityCheckMatrix,
    generator: GeneratorMatrix,
}

impl LinearCode {
    pub fn from_pcm(pcm: ParityCheckMatrix, construction: Construction) -> Result<Self, CodeError> {
        let generator = derive_generator(&pcm)?;
        let (n, k) = (pcm.n(), generator.k());
        Ok(LinearCode {
            spec: CodeSpec {
                construction,
                n,
                k,
                m: pcm.m(),
                rate: Rate::new(k as u64, n as u64),
            },
            pcm,
            generator,
        })
    }

    pub fn regular(n: usize, v: usize, c: usize, seed: u64) -> Result<Self, CodeError> {
        let pcm = build_regular_ldpc(n, v, c, seed)?;
        Self::from_pcm(pcm, Construction::Regular { v, c, seed })
    }

    pub fn lifted(base: &Protograph, z: usize) -> Result<Self, CodeError> {
        let pcm = lift_base_graph(base, z)?;
        Self::from_pcm(pcm, Construction::Lifted { base: base.clone(), z })
    }

    pub fn hamming_7_4() -> Self {
        Self::from_pcm(ParityCheckMatrix::hamming_7_4(), Construction::Imported).expect("Hamming code is well formed")
    }

    pub fn spec(&self) -> &CodeSpec {
        &self.spec
    }

    pub fn pcm(&self) -> &ParityCheckMatrix {
        &self.pcm
    }

    pub fn generator(&self) -> &GeneratorMatrix {
        &self.generator
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn k(&self) -> usize {
        self.spec.k
    }

    pub fn m(&self) -> usize {
        self.spec.m
    }

    pub fn rate(&self) -> Rate {
        self.spec.rate
    }

    pub fn encode(&self, info: &[u8]) -> Result<Vec<u8>, CodeError> {
        self.generator.encode(info)
    }
}
