//! Random (v, c)-regular LDPC construction by socket permutation.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CodeError, ParityCheckMatrix};

const SWAP_ATTEMPTS: usize = 100;
const MAX_PERMUTATIONS: usize = 1000;

/// Builds an `m x n` parity-check matrix with every column of weight `v` and
/// every row of weight `c`, where `m = v n / c`.
///
/// Variable sockets are wired to check sockets through a seeded random
/// permutation. A socket that would create a parallel edge is swapped with a
/// random partner (at most 100 tries) and the whole permutation is redrawn
/// if that fails. No attempt is made to avoid short cycles.
pub fn build_regular_ldpc(n: usize, v: usize, c: usize, seed: u64) -> Result<ParityCheckMatrix, CodeError> {
    if n == 0 || v == 0 || c == 0 {
        return Err(CodeError::Parameter(format!(
            "n, v and c must be positive (n={n}, v={v}, c={c})"
        )));
    }
    if v >= c {
        return Err(CodeError::Parameter(format!(
            "column degree {v} must be below row degree {c} for a positive rate"
        )));
    }
    if (v * n) % c != 0 {
        return Err(CodeError::Parameter(format!(
            "v*n = {} is not divisible by c = {c}",
            v * n
        )));
    }
    let m = v * n / c;
    if n < c || m < v {
        return Err(CodeError::Construction(format!(
            "no simple ({v},{c})-regular graph with n={n} and m={m}"
        )));
    }

    let edges = v * n;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sockets: Vec<usize> = (0..edges).collect();
    for _ in 0..MAX_PERMUTATIONS {
        sockets.shuffle(&mut rng);
        // check_of[s]: check node wired to variable socket s (variable s / v)
        let mut check_of: Vec<usize> = sockets.iter().map(|&p| p / c).collect();
        if resolve_parallel_edges(&mut check_of, v, &mut rng) {
            let mut checks = vec![Vec::with_capacity(c); m];
            for (s, &chk) in check_of.iter().enumerate() {
                checks[chk].push(s / v);
            }
            return ParityCheckMatrix::from_check_lists(n, &checks);
        }
    }
    Err(CodeError::Construction(format!(
        "failed to draw a simple ({v},{c}) graph for n={n} after {MAX_PERMUTATIONS} permutations"
    )))
}

fn conflicts(check_of: &[usize], v: usize, var: usize, skip: usize, check: usize) -> bool {
    (var * v..(var + 1) * v).any(|s| s != skip && check_of[s] == check)
}

fn resolve_parallel_edges(check_of: &mut [usize], v: usize, rng: &mut ChaCha8Rng) -> bool {
    let edges = check_of.len();
    for s in 0..edges {
        let var = s / v;
        if !conflicts(check_of, v, var, s, check_of[s]) {
            continue;
        }
        let mut fixed = false;
        for _ in 0..SWAP_ATTEMPTS {
            let t = rng.random_range(0..edges);
            let other = t / v;
            if other == var {
                continue;
            }
            let (cs, ct) = (check_of[s], check_of[t]);
            if !conflicts(check_of, v, var, s, ct) && !conflicts(check_of, v, other, t, cs) {
                check_of.swap(s, t);
                fixed = true;
                break;
            }
        }
        if !fixed {
            return false;
        }
    }
    (0..edges).all(|s| !conflicts(check_of, v, s / v, s, check_of[s]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn n26_code_has_exact_degrees() {
        let h = build_regular_ldpc(26, 3, 6, 7).unwrap();
        assert_eq!(h.m(), 13);
        assert_eq!(h.n(), 26);
        assert!(h.row_weights().iter().all(|&w| w == 6));
        assert!(h.col_weights().iter().all(|&w| w == 3));
    }

    #[test]
    fn small_code_degrees() {
        let h = build_regular_ldpc(6, 2, 4, 0).unwrap();
        assert_eq!(h.m(), 3);
        assert!(h.row_weights().iter().all(|&w| w == 4));
        assert!(h.col_weights().iter().all(|&w| w == 2));
    }

    #[test]
    fn parameter_errors() {
        assert!(matches!(build_regular_ldpc(10, 3, 4, 0), Err(CodeError::Parameter(_))));
        assert!(matches!(build_regular_ldpc(12, 4, 4, 0), Err(CodeError::Parameter(_))));
        assert!(matches!(build_regular_ldpc(12, 5, 4, 0), Err(CodeError::Parameter(_))));
        assert!(matches!(build_regular_ldpc(2, 1, 4, 0), Err(CodeError::Parameter(_))));
        assert!(matches!(
            build_regular_ldpc(4, 3, 6, 0),
            Err(CodeError::Construction(_))
        ));
    }

    #[test]
    fn seed_determinism() {
        let a = build_regular_ldpc(96, 3, 6, 42).unwrap();
        let b = build_regular_ldpc(96, 3, 6, 42).unwrap();
        let c = build_regular_ldpc(96, 3, 6, 43).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }
}
