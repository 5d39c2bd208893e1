//! Puncturing and shortening.

use num_integer::Integer;

use super::CodeError;

/// Exact code rate as a reduced fraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Rate {
    num: u64,
    den: u64,
}

impl Rate {
    pub fn new(num: u64, den: u64) -> Self {
        assert!(den > 0, "rate with zero denominator");
        let g = num.gcd(&den).max(1);
        Rate {
            num: num / g,
            den: den / g,
        }
    }

    pub fn num(&self) -> u64 {
        self.num
    }

    pub fn den(&self) -> u64 {
        self.den
    }

    pub fn value(&self) -> f64 {
        self.num as f64 / self.den as f64
    }
}

impl PartialOrd for Rate {
    fn partial_cmp(&self, other: &Self) -> Option<std::cmp::Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Rate {
    fn cmp(&self, other: &Self) -> std::cmp::Ordering {
        (self.num as u128 * other.den as u128).cmp(&(other.num as u128 * self.den as u128))
    }
}

impl std::fmt::Display for Rate {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}

fn validate_pattern(pattern: &[usize], bound: usize) -> Result<Vec<bool>, CodeError> {
    let mut hit = vec![false; bound];
    for &p in pattern {
        if p >= bound {
            return Err(CodeError::IndexOutOfRange { index: p, bound });
        }
        if std::mem::replace(&mut hit[p], true) {
            return Err(CodeError::Parameter(format!("index {p} repeated in pattern")));
        }
    }
    Ok(hit)
}

/// Removes the positions in `pattern` from a length-`n` word of a rate-`k/n`
/// code; the record carries the new rate `k / (n - p)`.
pub fn puncture<T: Copy>(word: &[T], pattern: &[usize], k: usize) -> Result<(Vec<T>, Rate), CodeError> {
    let n = word.len();
    let hit = validate_pattern(pattern, n)?;
    if pattern.len() >= n {
        return Err(CodeError::Parameter(format!(
            "cannot puncture {} of {n} positions",
            pattern.len()
        )));
    }
    let kept = word.iter().zip(&hit).filter(|(_, &h)| !h).map(|(&x, _)| x).collect();
    Ok((kept, Rate::new(k as u64, (n - pattern.len()) as u64)))
}

/// Receiver side of [`puncture`]: re-expands to length `n` with erasures
/// (LLR 0) at the punctured positions.
pub fn depuncture(received: &[f64], pattern: &[usize], n: usize) -> Result<Vec<f64>, CodeError> {
    let hit = validate_pattern(pattern, n)?;
    if received.len() + pattern.len() != n {
        return Err(CodeError::Shape {
            what: "punctured word",
            expected: n - pattern.len(),
            got: received.len(),
        });
    }
    let mut it = received.iter();
    Ok(hit
        .iter()
        .map(|&h| if h { 0.0 } else { *it.next().expect("length checked") })
        .collect())
}

/// Fixes the information positions in `pattern` to the known `fill` values.
/// The record carries the new rate `(k - s) / (n - s)`.
pub fn shorten(info: &[u8], pattern: &[usize], fill: &[u8], n: usize) -> Result<(Vec<u8>, Rate), CodeError> {
    let k = info.len();
    validate_pattern(pattern, k)?;
    if fill.len() != pattern.len() {
        return Err(CodeError::Shape {
            what: "shortening fill",
            expected: pattern.len(),
            got: fill.len(),
        });
    }
    if pattern.len() >= k || k >= n {
        return Err(CodeError::Parameter(format!(
            "cannot shorten {} of {k} information bits of a length-{n} code",
            pattern.len()
        )));
    }
    let mut out = info.to_vec();
    for (&p, &f) in pattern.iter().zip(fill) {
        out[p] = f & 1;
    }
    let s = pattern.len() as u64;
    Ok((out, Rate::new(k as u64 - s, n as u64 - s)))
}

/// Receiver side of shortening: re-expands to length `n` placing a
/// saturated LLR (`+clip` for a known 0, `-clip` for a known 1) at each
/// shortened codeword position.
pub fn reinsert_shortened(
    received: &[f64],
    positions: &[usize],
    fill: &[u8],
    n: usize,
    clip: f64,
) -> Result<Vec<f64>, CodeError> {
    let hit = validate_pattern(positions, n)?;
    if fill.len() != positions.len() || received.len() + positions.len() != n {
        return Err(CodeError::Shape {
            what: "shortened word",
            expected: n - positions.len(),
            got: received.len(),
        });
    }
    let mut known = vec![0u8; n];
    for (&p, &f) in positions.iter().zip(fill) {
        known[p] = f & 1;
    }
    let mut it = received.iter();
    Ok((0..n)
        .map(|i| {
            if hit[i] {
                if known[i] == 0 {
                    clip
                } else {
                    -clip
                }
            } else {
                *it.next().expect("length checked")
            }
        })
        .collect())
}
