use super::gf2::BitMatrix;
use super::{CodeError, ParityCheckMatrix};

/// `k x n` generator whose rows span the null space of a parity-check matrix.
///
/// Column `info_positions[j]` of row `i` is the Kronecker delta `i == j`,
/// so the information bits appear verbatim at those codeword positions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratorMatrix {
    bits: BitMatrix,
    info_positions: Vec<usize>,
}

impl GeneratorMatrix {
    pub fn k(&self) -> usize {
        self.bits.rows()
    }

    pub fn n(&self) -> usize {
        self.bits.cols()
    }

    pub fn bits(&self) -> &BitMatrix {
        &self.bits
    }

    pub fn row(&self, i: usize) -> Vec<u8> {
        self.bits.row_bits(i)
    }

    /// Codeword positions carrying the information bits, in order.
    pub fn info_positions(&self) -> &[usize] {
        &self.info_positions
    }

    /// `c = b G` over GF(2).
    pub fn encode(&self, info: &[u8]) -> Result<Vec<u8>, CodeError> {
        if info.len() != self.k() {
            return Err(CodeError::Shape {
                what: "information word",
                expected: self.k(),
                got: info.len(),
            });
        }
        let words = self.n().div_ceil(64);
        let mut acc = vec![0u64; words];
        for (i, &b) in info.iter().enumerate() {
            if b & 1 == 1 {
                for (a, w) in acc.iter_mut().zip(self.bits.row_words(i)) {
                    *a ^= w;
                }
            }
        }
        Ok((0..self.n()).map(|c| ((acc[c / 64] >> (c % 64)) & 1) as u8).collect())
    }

    /// Reads the information bits back out of a codeword.
    pub fn extract_info(&self, codeword: &[u8]) -> Vec<u8> {
        self.info_positions.iter().map(|&p| codeword[p]).collect()
    }
}

/// Derives a generator for the code defined by `h` by Gaussian elimination.
///
/// `k = n - rank(H)`; redundant rows of `h` are tolerated.
pub fn derive_generator(h: &ParityCheckMatrix) -> Result<GeneratorMatrix, CodeError> {
    let n = h.n();
    if n == 0 || h.m() == 0 {
        return Err(CodeError::Parameter("empty parity-check matrix".into()));
    }
    let mut rref = h.bits().clone();
    let pivots = rref.reduce_row_echelon();
    if pivots.len() == n {
        return Err(CodeError::DegenerateCode { n, rank: n });
    }
    let mut is_pivot = vec![false; n];
    for &p in &pivots {
        is_pivot[p] = true;
    }
    let free: Vec<usize> = (0..n).filter(|&c| !is_pivot[c]).collect();
    let mut g = BitMatrix::zeros(free.len(), n);
    for (i, &f) in free.iter().enumerate() {
        g.set(i, f, true);
        for (row, &p) in pivots.iter().enumerate() {
            if rref.get(row, f) {
                g.set(i, p, true);
            }
        }
    }
    Ok(GeneratorMatrix {
        bits: g,
        info_positions: free,
    })
}
