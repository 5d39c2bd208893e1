//! Protograph (base graph) lifting with circulant permutation blocks.

use super::gf2::BitMatrix;
use super::{CodeError, ParityCheckMatrix};

/// Base matrix of circulant shifts; `-1` marks an all-zero block.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Protograph {
    rows: usize,
    cols: usize,
    shifts: Vec<i64>,
}

impl Protograph {
    pub fn new(rows: usize, cols: usize, shifts: Vec<i64>) -> Result<Self, CodeError> {
        if rows == 0 || cols == 0 || shifts.len() != rows * cols {
            return Err(CodeError::Parameter(format!(
                "{} shifts do not fill a {rows}x{cols} base graph",
                shifts.len()
            )));
        }
        if let Some(&s) = shifts.iter().find(|&&s| s < -1) {
            return Err(CodeError::Parameter(format!("shift {s} below -1")));
        }
        Ok(Protograph { rows, cols, shifts })
    }

    pub fn from_rows(rows: &[Vec<i64>]) -> Result<Self, CodeError> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(CodeError::Parameter("ragged base graph rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shift(&self, r: usize, c: usize) -> i64 {
        self.shifts[r * self.cols + c]
    }

    pub fn shifts(&self) -> &[i64] {
        &self.shifts
    }

    /// Parses `base_m base_n Z` followed by `base_m` rows of shifts.
    pub fn parse(text: &str) -> Result<(Self, usize), CodeError> {
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let (hline, header) = lines.next().ok_or(CodeError::Parse {
            line: 1,
            msg: "empty protograph file".into(),
        })?;
        let dims = parse_ints::<usize>(hline, header)?;
        let [rows, cols, z] = dims[..] else {
            return Err(CodeError::Parse {
                line: hline,
                msg: "header must be `base_m base_n Z`".into(),
            });
        };
        let mut shifts = Vec::with_capacity(rows * cols);
        for _ in 0..rows {
            let (ln, line) = lines.next().ok_or(CodeError::Parse {
                line: hline,
                msg: format!("expected {rows} shift rows"),
            })?;
            let row = parse_ints::<i64>(ln, line)?;
            if row.len() != cols {
                return Err(CodeError::Parse {
                    line: ln,
                    msg: format!("expected {cols} shifts, found {}", row.len()),
                });
            }
            shifts.extend(row);
        }
        if let Some((ln, _)) = lines.next() {
            return Err(CodeError::Parse {
                line: ln,
                msg: "trailing content after the base graph".into(),
            });
        }
        let proto = Self::new(rows, cols, shifts).map_err(|e| CodeError::Parse {
            line: hline,
            msg: e.to_string(),
        })?;
        Ok((proto, z))
    }

    pub fn to_text(&self, z: usize) -> String {
        let mut out = format!("{} {} {}\n", self.rows, self.cols, z);
        for r in 0..self.rows {
            let row: Vec<String> = (0..self.cols).map(|c| self.shift(r, c).to_string()).collect();
            out.push_str(&row.join(" "));
            out.push('\n');
        }
        out
    }
}

fn parse_ints<T: std::str::FromStr>(line: usize, text: &str) -> Result<Vec<T>, CodeError> {
    text.split_whitespace()
        .map(|tok| {
            tok.parse::<T>().map_err(|_| CodeError::Parse {
                line,
                msg: format!("`{tok}` is not an integer"),
            })
        })
        .collect()
}

/// Expands every base entry into a `z x z` block: zero for `-1`, otherwise
/// the identity cyclically shifted right by the entry (row `r` has its one in
/// column `(r + s) mod z`).
pub fn lift_base_graph(base: &Protograph, z: usize) -> Result<ParityCheckMatrix, CodeError> {
    if z == 0 {
        return Err(CodeError::Parameter("lifting factor must be at least 1".into()));
    }
    if let Some(&s) = base.shifts.iter().find(|&&s| s >= z as i64) {
        return Err(CodeError::Parameter(format!(
            "shift {s} out of range for lifting factor {z}"
        )));
    }
    let mut bits = BitMatrix::zeros(base.rows * z, base.cols * z);
    for br in 0..base.rows {
        for bc in 0..base.cols {
            let s = base.shift(br, bc);
            if s < 0 {
                continue;
            }
            for r in 0..z {
                bits.set(br * z + r, bc * z + (r + s as usize) % z, true);
            }
        }
    }
    Ok(ParityCheckMatrix::from_bits(bits))
}
