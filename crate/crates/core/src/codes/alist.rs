//! MacKay alist text format.
//!
//! ```text
//! n m
//! max_col_degree max_row_degree
//! <n column degrees>
//! <m row degrees>
//! <n lines: 1-based check indices of each column, zero padded>
//! <m lines: 1-based variable indices of each row, zero padded>
//! ```

use super::{CodeError, ParityCheckMatrix};

pub fn save_alist(h: &ParityCheckMatrix) -> String {
    let (n, m) = (h.n(), h.m());
    let cw = h.col_weights();
    let rw = h.row_weights();
    let max_c = cw.iter().copied().max().unwrap_or(0);
    let max_r = rw.iter().copied().max().unwrap_or(0);
    let join = |v: &[usize]| v.iter().map(usize::to_string).collect::<Vec<_>>().join(" ");
    let padded = |list: &[usize], width: usize| {
        let mut v: Vec<usize> = list.iter().map(|&i| i + 1).collect();
        v.resize(width, 0);
        join(&v)
    };
    let mut out = String::new();
    out.push_str(&format!("{n} {m}\n{max_c} {max_r}\n"));
    out.push_str(&join(&cw));
    out.push('\n');
    out.push_str(&join(&rw));
    out.push('\n');
    for v in 0..n {
        out.push_str(&padded(h.var_neighbors(v), max_c));
        out.push('\n');
    }
    for c in 0..m {
        out.push_str(&padded(h.check_neighbors(c), max_r));
        out.push('\n');
    }
    out
}

struct Lines<'a> {
    inner: std::iter::Enumerate<std::str::Lines<'a>>,
    last: usize,
}

impl<'a> Lines<'a> {
    /// Next non-blank line parsed as integers, with its 1-based number.
    fn next_ints(&mut self, what: &str) -> Result<(usize, Vec<usize>), CodeError> {
        for (i, line) in self.inner.by_ref() {
            self.last = i + 1;
            if line.trim().is_empty() {
                continue;
            }
            let vals = line
                .split_whitespace()
                .map(|t| {
                    t.parse::<usize>().map_err(|_| CodeError::Parse {
                        line: i + 1,
                        msg: format!("`{t}` is not a non-negative integer"),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            return Ok((i + 1, vals));
        }
        Err(CodeError::Parse {
            line: self.last + 1,
            msg: format!("unexpected end of file, expected {what}"),
        })
    }
}

fn parse_err(line: usize, msg: impl Into<String>) -> CodeError {
    CodeError::Parse { line, msg: msg.into() }
}

pub fn load_alist(text: &str) -> Result<ParityCheckMatrix, CodeError> {
    let mut lines = Lines {
        inner: text.lines().enumerate(),
        last: 0,
    };
    let (ln, dims) = lines.next_ints("dimensions")?;
    let [n, m] = dims[..] else {
        return Err(parse_err(ln, "first line must be `n m`"));
    };
    let (ln, maxes) = lines.next_ints("maximum degrees")?;
    let [max_c, max_r] = maxes[..] else {
        return Err(parse_err(ln, "second line must be `max_col_degree max_row_degree`"));
    };
    let (ln, col_deg) = lines.next_ints("column degrees")?;
    if col_deg.len() != n {
        return Err(parse_err(
            ln,
            format!("expected {n} column degrees, found {}", col_deg.len()),
        ));
    }
    if col_deg.iter().any(|&d| d > max_c) {
        return Err(parse_err(ln, format!("column degree exceeds declared maximum {max_c}")));
    }
    let (ln, row_deg) = lines.next_ints("row degrees")?;
    if row_deg.len() != m {
        return Err(parse_err(
            ln,
            format!("expected {m} row degrees, found {}", row_deg.len()),
        ));
    }
    if row_deg.iter().any(|&d| d > max_r) {
        return Err(parse_err(ln, format!("row degree exceeds declared maximum {max_r}")));
    }

    let mut read_lists = |count: usize, degrees: &[usize], bound: usize, what: &str| {
        let mut lists = Vec::with_capacity(count);
        for (idx, &deg) in degrees.iter().enumerate() {
            let (ln, vals) = lines.next_ints(what)?;
            let (nonzero, padding): (Vec<usize>, Vec<usize>) = vals.iter().partition(|&&v| v != 0);
            if nonzero.len() != deg {
                return Err(parse_err(
                    ln,
                    format!("{what} {}: degree {deg} but {} neighbors", idx + 1, nonzero.len()),
                ));
            }
            if vals[..deg].contains(&0) && !padding.is_empty() {
                return Err(parse_err(ln, "zero padding must follow the neighbor indices"));
            }
            if let Some(&bad) = nonzero.iter().find(|&&v| v > bound) {
                return Err(parse_err(ln, format!("neighbor index {bad} out of range 1..={bound}")));
            }
            let mut list: Vec<usize> = nonzero.iter().map(|v| v - 1).collect();
            let before = list.len();
            list.sort_unstable();
            list.dedup();
            if list.len() != before {
                return Err(parse_err(ln, "repeated neighbor index"));
            }
            lists.push((ln, list));
        }
        Ok(lists)
    };
    let cols = read_lists(n, &col_deg, m, "column")?;
    let rows = read_lists(m, &row_deg, n, "row")?;

    let checks: Vec<Vec<usize>> = rows.iter().map(|(_, l)| l.clone()).collect();
    let h = ParityCheckMatrix::from_check_lists(n, &checks)?;
    for (v, (ln, list)) in cols.iter().enumerate() {
        if h.var_neighbors(v) != list.as_slice() {
            return Err(parse_err(*ln, format!("column {} disagrees with the row lists", v + 1)));
        }
    }
    Ok(h)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hamming_roundtrip() {
        let h = ParityCheckMatrix::hamming_7_4();
        let text = save_alist(&h);
        assert!(text.starts_with("7 3\n3 4\n"));
        let back = load_alist(&text).unwrap();
        assert_eq!(back, h);
        assert_eq!(save_alist(&back), text);
    }

    #[test]
    fn padding_zeros_ignored() {
        // column 3 has degree 1 and is padded
        let text = "3 2\n2 2\n1 2 1\n2 2\n1 0\n1 2\n2 0\n1 2\n2 3\n";
        let h = load_alist(text).unwrap();
        assert_eq!(h.to_dense(), vec![vec![1, 1, 0], vec![0, 1, 1]]);
    }

    #[test]
    fn out_of_range_index_reports_line() {
        let h = ParityCheckMatrix::hamming_7_4();
        let text = save_alist(&h).replacen("1 2 4 5\n", "1 2 4 8\n", 1);
        match load_alist(&text) {
            Err(CodeError::Parse { line, msg }) => {
                assert_eq!(line, 12);
                assert!(msg.contains("8"), "{msg}");
            }
            other => panic!("expected parse error, got {other:?}"),
        }
    }

    #[test]
    fn inconsistent_degrees_rejected() {
        let text = "3 2\n2 2\n1 2 1\n2 2\n1 0\n1 2\n2 0\n1 2\n2 0\n";
        assert!(matches!(load_alist(text), Err(CodeError::Parse { line: 9, .. })));
        let text = "3 2\n2 2\n1 2 1\n2 2\n1 0\n1 2\n1 0\n1 2\n2 3\n";
        assert!(matches!(load_alist(text), Err(CodeError::Parse { .. })));
        assert!(matches!(load_alist("3 2\n"), Err(CodeError::Parse { line: 2, .. })));
    }
}
