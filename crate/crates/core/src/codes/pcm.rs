use super::gf2::BitMatrix;
use super::CodeError;

/// Parity-check matrix with its Tanner-graph adjacency.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParityCheckMatrix {
    bits: BitMatrix,
    check_adj: Vec<Vec<usize>>,
    var_adj: Vec<Vec<usize>>,
}

impl ParityCheckMatrix {
    pub fn from_bits(bits: BitMatrix) -> Self {
        let check_adj: Vec<Vec<usize>> = (0..bits.rows()).map(|r| bits.ones_in_row(r).collect()).collect();
        let mut var_adj = vec![Vec::new(); bits.cols()];
        for (r, vars) in check_adj.iter().enumerate() {
            for &v in vars {
                var_adj[v].push(r);
            }
        }
        ParityCheckMatrix {
            bits,
            check_adj,
            var_adj,
        }
    }

    pub fn from_dense(rows: &[Vec<u8>]) -> Result<Self, CodeError> {
        for (r, row) in rows.iter().enumerate() {
            if let Some((c, &v)) = row.iter().enumerate().find(|(_, &v)| v > 1) {
                return Err(CodeError::NonBinary {
                    row: r,
                    col: c,
                    value: v,
                });
            }
        }
        let bits = BitMatrix::from_dense(rows)
            .ok_or_else(|| CodeError::Parameter("rows of the parity-check matrix differ in length".into()))?;
        Ok(Self::from_bits(bits))
    }

    /// Builds `H` from per-check lists of variable indices (0-based).
    pub fn from_check_lists(n: usize, checks: &[Vec<usize>]) -> Result<Self, CodeError> {
        let mut bits = BitMatrix::zeros(checks.len(), n);
        for (r, vars) in checks.iter().enumerate() {
            for &v in vars {
                if v >= n {
                    return Err(CodeError::IndexOutOfRange { index: v, bound: n });
                }
                bits.set(r, v, true);
            }
        }
        Ok(Self::from_bits(bits))
    }

    /// The 3x7 Hamming code in the column order `[A | I]`.
    pub fn hamming_7_4() -> Self {
        Self::from_dense(&[
            vec![1, 1, 0, 1, 1, 0, 0],
            vec![1, 0, 1, 1, 0, 1, 0],
            vec![0, 1, 1, 1, 0, 0, 1],
        ])
        .expect("static matrix")
    }

    /// Number of checks (rows).
    pub fn m(&self) -> usize {
        self.bits.rows()
    }

    /// Code length (columns).
    pub fn n(&self) -> usize {
        self.bits.cols()
    }

    pub fn bits(&self) -> &BitMatrix {
        &self.bits
    }

    pub fn get(&self, row: usize, col: usize) -> bool {
        self.bits.get(row, col)
    }

    pub fn check_neighbors(&self, check: usize) -> &[usize] {
        &self.check_adj[check]
    }

    pub fn var_neighbors(&self, var: usize) -> &[usize] {
        &self.var_adj[var]
    }

    pub fn edge_count(&self) -> usize {
        self.check_adj.iter().map(Vec::len).sum()
    }

    pub fn row_weights(&self) -> Vec<usize> {
        self.check_adj.iter().map(Vec::len).collect()
    }

    pub fn col_weights(&self) -> Vec<usize> {
        self.var_adj.iter().map(Vec::len).collect()
    }

    pub fn rank(&self) -> usize {
        self.bits.rank()
    }

    pub fn column(&self, col: usize) -> Vec<u8> {
        (0..self.m()).map(|r| self.bits.get(r, col) as u8).collect()
    }

    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        self.bits.to_dense()
    }

    /// `H c^T` over GF(2).
    pub fn syndrome(&self, word: &[u8]) -> Result<Vec<u8>, CodeError> {
        if word.len() != self.n() {
            return Err(CodeError::Shape {
                what: "syndrome input",
                expected: self.n(),
                got: word.len(),
            });
        }
        Ok(self
            .check_adj
            .iter()
            .map(|vars| vars.iter().fold(0u8, |acc, &v| acc ^ (word[v] & 1)))
            .collect())
    }

    /// True iff every check is satisfied. Panics on length mismatch.
    pub fn is_codeword(&self, word: &[u8]) -> bool {
        assert_eq!(word.len(), self.n());
        self.check_adj
            .iter()
            .all(|vars| vars.iter().fold(0u8, |acc, &v| acc ^ (word[v] & 1)) == 0)
    }
}
