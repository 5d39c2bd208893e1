use autodiff::Mask;

use crate::codes::ParityCheckMatrix;

use super::TransformerError;

/// Which of the `n + m` node positions may attend to each other.
///
/// Positions `0..n` are variable nodes, `n..n+m` check nodes, in the same
/// order as the decoder input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AttentionMask {
    size: usize,
    keep: Vec<bool>,
}

impl AttentionMask {
    pub fn size(&self) -> usize {
        self.size
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.keep[i * self.size + j]
    }

    pub fn keep(&self) -> &[bool] {
        &self.keep
    }

    /// Fraction of allowed pairs.
    pub fn density(&self) -> f64 {
        self.keep.iter().filter(|&&k| k).count() as f64 / self.keep.len() as f64
    }

    pub fn to_mask(&self) -> Mask {
        Mask::new(&[self.size, self.size], self.keep.clone()).expect("square mask")
    }
}

/// Pooled `N x K` mask for linear attention.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LowRankMask {
    rows: usize,
    cols: usize,
    division: usize,
    keep: Vec<bool>,
}

impl LowRankMask {
    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn division(&self) -> usize {
        self.division
    }

    pub fn get(&self, i: usize, j: usize) -> bool {
        self.keep[i * self.cols + j]
    }

    pub fn to_mask(&self) -> Mask {
        Mask::new(&[self.rows, self.cols], self.keep.clone()).expect("rectangular mask")
    }
}

/// Diagonal, Tanner edges, bit pairs sharing a check and check pairs
/// sharing a bit.
pub fn build_mask(h: &ParityCheckMatrix) -> AttentionMask {
    let (n, m) = (h.n(), h.m());
    let size = n + m;
    let mut keep = vec![false; size * size];
    let mut set = |i: usize, j: usize| {
        keep[i * size + j] = true;
        keep[j * size + i] = true;
    };
    for i in 0..size {
        set(i, i);
    }
    for c in 0..m {
        let vars = h.check_neighbors(c);
        for &a in vars {
            set(a, n + c);
            for &b in vars {
                set(a, b);
            }
        }
    }
    for v in 0..n {
        let checks = h.var_neighbors(v);
        for &a in checks {
            for &b in checks {
                set(n + a, n + b);
            }
        }
    }
    AttentionMask { size, keep }
}

pub fn low_rank_width(size: usize, division: usize) -> usize {
    size.div_ceil(division)
}

/// Column `j` of the result is the OR of full-mask columns
/// `j*d .. min((j+1)*d, N)`.
pub fn resize_mask(full: &AttentionMask, division: usize) -> Result<LowRankMask, TransformerError> {
    if division == 0 {
        return Err(TransformerError::Config("mask division must be at least 1".into()));
    }
    let rows = full.size;
    let cols = low_rank_width(rows, division);
    let mut keep = vec![false; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            let end = ((j + 1) * division).min(rows);
            keep[i * cols + j] = (j * division..end).any(|c| full.get(i, c));
        }
    }
    Ok(LowRankMask {
        rows,
        cols,
        division,
        keep,
    })
}
