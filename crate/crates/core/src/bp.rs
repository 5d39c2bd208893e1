//! Flooding sum-product belief propagation.
//!
//! Check updates use the exact pairwise "boxplus" form of the tanh rule,
//! `a ⊞ b = 2 atanh(tanh(a/2) tanh(b/2))`, evaluated as
//! `sign(a) sign(b) min(|a|, |b|) + ln(1 + e^-|a+b|) - ln(1 + e^-|a-b|)`,
//! which never saturates. Extrinsic outputs come from forward/backward
//! partial combinations, so no division is needed.

use rayon::prelude::*;
use thiserror::Error;

use crate::channel::{hard_decision, LlrVector, LLR_CLIP};
use crate::codes::ParityCheckMatrix;

/// Bound on internal messages. It must exceed the channel clip, otherwise
/// extrinsic evidence can never overturn a saturated channel LLR.
pub const MESSAGE_CLIP: f64 = 60.0;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum BpError {
    #[error("LLR vector has length {got}, code length is {expected}")]
    Shape { expected: usize, got: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct BpOutput {
    /// Channel LLR plus all incoming check messages, clipped to the channel bound.
    pub posterior: LlrVector,
    pub hard: Vec<u8>,
    /// The hard decision satisfies every check.
    pub converged: bool,
    /// Flooding rounds actually run.
    pub iterations: usize,
}

/// Tanner graph in edge-list form; edges are numbered check by check.
#[derive(Clone, Debug)]
struct Tanner {
    n: usize,
    check_start: Vec<usize>,
    edge_var: Vec<usize>,
    var_start: Vec<usize>,
    var_edges: Vec<usize>,
}

impl Tanner {
    fn new(h: &ParityCheckMatrix) -> Self {
        let mut check_start = vec![0];
        let mut edge_var = Vec::with_capacity(h.edge_count());
        for c in 0..h.m() {
            edge_var.extend_from_slice(h.check_neighbors(c));
            check_start.push(edge_var.len());
        }
        let mut per_var = vec![Vec::new(); h.n()];
        for (e, &v) in edge_var.iter().enumerate() {
            per_var[v].push(e);
        }
        let mut var_start = vec![0];
        let mut var_edges = Vec::with_capacity(edge_var.len());
        for list in per_var {
            var_edges.extend(list);
            var_start.push(var_edges.len());
        }
        Tanner {
            n: h.n(),
            check_start,
            edge_var,
            var_start,
            var_edges,
        }
    }

    fn checks(&self) -> impl Iterator<Item = std::ops::Range<usize>> + '_ {
        self.check_start.windows(2).map(|w| w[0]..w[1])
    }

    fn syndrome_is_zero(&self, hard: &[u8]) -> bool {
        self.checks()
            .all(|r| self.edge_var[r].iter().fold(0u8, |acc, &v| acc ^ hard[v]) == 0)
    }
}

/// Per-decode message storage.
#[derive(Clone, Debug)]
pub struct BpWorkspace {
    pub v2c: Vec<f64>,
    pub c2v: Vec<f64>,
    pub iteration: usize,
    pub clip: f64,
    forward: Vec<f64>,
    posterior: Vec<f64>,
}

impl BpWorkspace {
    fn new(edges: usize, n: usize) -> Self {
        BpWorkspace {
            v2c: vec![0.0; edges],
            c2v: vec![0.0; edges],
            iteration: 0,
            clip: MESSAGE_CLIP,
            forward: Vec::new(),
            posterior: vec![0.0; n],
        }
    }
}

#[inline]
pub fn boxplus(a: f64, b: f64) -> f64 {
    let s = if (a < 0.0) != (b < 0.0) { -1.0 } else { 1.0 };
    s * a.abs().min(b.abs()) + (-(a + b).abs()).exp().ln_1p() - (-(a - b).abs()).exp().ln_1p()
}

#[derive(Clone, Debug)]
pub struct BpDecoder {
    graph: Tanner,
    iterations: usize,
    early_stop: bool,
}

impl BpDecoder {
    pub fn new(h: &ParityCheckMatrix, iterations: usize) -> Self {
        BpDecoder {
            graph: Tanner::new(h),
            iterations,
            early_stop: true,
        }
    }

    /// Disables the zero-syndrome exit so every decode runs all iterations.
    pub fn without_early_stop(mut self) -> Self {
        self.early_stop = false;
        self
    }

    pub fn iterations(&self) -> usize {
        self.iterations
    }

    pub fn n(&self) -> usize {
        self.graph.n
    }

    pub fn decode(&self, llr: &[f64]) -> Result<BpOutput, BpError> {
        let g = &self.graph;
        if llr.len() != g.n {
            return Err(BpError::Shape {
                expected: g.n,
                got: llr.len(),
            });
        }
        let mut ws = BpWorkspace::new(g.edge_var.len(), g.n);
        let mut hard = hard_decision(llr);
        let mut converged = g.syndrome_is_zero(&hard);
        ws.posterior.copy_from_slice(llr);
        if !(converged && self.early_stop) {
            for (e, &v) in g.edge_var.iter().enumerate() {
                ws.v2c[e] = llr[v];
            }
            while ws.iteration < self.iterations {
                self.round(llr, &mut ws);
                for (h, &p) in hard.iter_mut().zip(&ws.posterior) {
                    *h = (p < 0.0) as u8;
                }
                converged = g.syndrome_is_zero(&hard);
                if converged && self.early_stop {
                    break;
                }
            }
        }
        Ok(BpOutput {
            posterior: LlrVector::clipped(ws.posterior, LLR_CLIP),
            hard,
            converged,
            iterations: ws.iteration,
        })
    }

    fn round(&self, llr: &[f64], ws: &mut BpWorkspace) {
        let g = &self.graph;
        let clip = ws.clip;
        for r in g.checks() {
            let x = &ws.v2c[r.clone()];
            let out = &mut ws.c2v[r.clone()];
            ws.forward.clear();
            let mut acc = f64::INFINITY;
            for &v in x {
                ws.forward.push(acc);
                acc = boxplus(acc, v);
            }
            let mut back = f64::INFINITY;
            for i in (0..x.len()).rev() {
                out[i] = boxplus(ws.forward[i], back).clamp(-clip, clip);
                back = boxplus(back, x[i]);
            }
        }
        for v in 0..g.n {
            let edges = &g.var_edges[g.var_start[v]..g.var_start[v + 1]];
            let total = llr[v] + edges.iter().map(|&e| ws.c2v[e]).sum::<f64>();
            ws.posterior[v] = total;
            for &e in edges {
                ws.v2c[e] = (total - ws.c2v[e]).clamp(-clip, clip);
            }
        }
        ws.iteration += 1;
    }

    /// Decodes every word independently; output order follows input order.
    pub fn decode_batch(&self, llrs: &[LlrVector]) -> Result<Vec<BpOutput>, BpError> {
        if let Some(bad) = llrs.iter().find(|l| l.len() != self.graph.n) {
            return Err(BpError::Shape {
                expected: self.graph.n,
                got: bad.len(),
            });
        }
        llrs.par_iter().map(|l| self.decode(l.as_slice())).collect()
    }
}

pub fn bp_decode(h: &ParityCheckMatrix, llr: &LlrVector, iters: usize) -> Result<BpOutput, BpError> {
    BpDecoder::new(h, iters).decode(llr.as_slice())
}

pub fn bp_decode_batch(h: &ParityCheckMatrix, llrs: &[LlrVector], iters: usize) -> Result<Vec<BpOutput>, BpError> {
    BpDecoder::new(h, iters).decode_batch(llrs)
}
