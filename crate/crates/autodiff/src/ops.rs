use crate::flops;
use crate::graph::{Graph, NodeId, Op};
use crate::tensor::{broadcast_shape, inverse_perm, numel, permute_data, split_axis, BroadcastMap, Mask, Real, Tensor};
use crate::{AutodiffError, Result};

/// Resolved layout of a (possibly batched) matmul.
#[derive(Clone, Copy, Debug)]
struct MatMulPlan {
    batch: usize,
    m: usize,
    k: usize,
    n: usize,
    lhs_batched: bool,
    rhs_batched: bool,
}

fn matmul_plan(a: &[usize], b: &[usize]) -> Result<(MatMulPlan, Vec<usize>)> {
    let err = || AutodiffError::ShapeMismatch {
        op: "matmul",
        lhs: a.to_vec(),
        rhs: b.to_vec(),
    };
    if a.len() < 2 || b.len() < 2 {
        return Err(err());
    }
    let (m, k) = (a[a.len() - 2], a[a.len() - 1]);
    let (k2, n) = (b[b.len() - 2], b[b.len() - 1]);
    if k != k2 {
        return Err(err());
    }
    let a_batch = &a[..a.len() - 2];
    let b_batch = &b[..b.len() - 2];
    let out_batch = if a_batch.is_empty() {
        b_batch.to_vec()
    } else if b_batch.is_empty() || a_batch == b_batch {
        a_batch.to_vec()
    } else {
        return Err(err());
    };
    let mut out = out_batch.clone();
    out.extend([m, n]);
    Ok((
        MatMulPlan {
            batch: numel(&out_batch),
            m,
            k,
            n,
            lhs_batched: !a_batch.is_empty(),
            rhs_batched: !b_batch.is_empty(),
        },
        out,
    ))
}

fn check_axis(op: &'static str, shape: &[usize], axis: usize) -> Result<()> {
    if axis >= shape.len() {
        return Err(AutodiffError::InvalidAxis {
            op,
            axis,
            shape: shape.to_vec(),
        });
    }
    Ok(())
}

fn map_index(map: &BroadcastMap, materialized: &Option<Vec<usize>>, i: usize) -> usize {
    match map {
        BroadcastMap::Same => i,
        BroadcastMap::Suffix(len) => i % (*len).max(1),
        BroadcastMap::General(_) => materialized.as_ref().expect("materialized")[i],
    }
}

fn materialize(map: &BroadcastMap, out: &[usize]) -> Option<Vec<usize>> {
    match map {
        BroadcastMap::General(_) => Some(map.indices(out)),
        _ => None,
    }
}

#[derive(Clone, Copy)]
enum Binary {
    Add,
    Sub,
    Mul,
}

fn gelu_parts<T: Real>(x: T) -> (T, T) {
    // tanh approximation
    let c = T::lit((2.0 / std::f64::consts::PI).sqrt());
    let a = T::lit(0.044715);
    let half = T::lit(0.5);
    let x3 = x * x * x;
    let u = c * (x + a * x3);
    let t = u.tanh();
    let y = half * x * (T::one() + t);
    let du = c * (T::one() + T::lit(3.0) * a * x * x);
    let dy = half * (T::one() + t) + half * x * (T::one() - t * t) * du;
    (y, dy)
}

fn sigmoid<T: Real>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

impl<T: Real> Graph<T> {
    fn binary(&mut self, kind: Binary, a: NodeId, b: NodeId) -> Result<NodeId> {
        let name = match kind {
            Binary::Add => "add",
            Binary::Sub => "sub",
            Binary::Mul => "mul",
        };
        let sa = self.shape(a).to_vec();
        let sb = self.shape(b).to_vec();
        let out_shape = broadcast_shape(name, &sa, &sb)?;
        let ma = BroadcastMap::new(&sa, &out_shape);
        let mb = BroadcastMap::new(&sb, &out_shape);
        let (ia, ib) = (materialize(&ma, &out_shape), materialize(&mb, &out_shape));
        let da = self.value(a).data();
        let db = self.value(b).data();
        let total = numel(&out_shape);
        let f: fn(T, T) -> T = match kind {
            Binary::Add => |x, y| x + y,
            Binary::Sub => |x, y| x - y,
            Binary::Mul => |x, y| x * y,
        };
        let data: Vec<T> = (0..total)
            .map(|i| f(da[map_index(&ma, &ia, i)], db[map_index(&mb, &ib, i)]))
            .collect();
        flops::charge(total as u64);
        let value = Tensor::new(&out_shape, data)?;
        let op = match kind {
            Binary::Add => Op::Add(a, b),
            Binary::Sub => Op::Sub(a, b),
            Binary::Mul => Op::Mul(a, b),
        };
        Ok(self.push(value, op))
    }

    /// Elementwise sum with trailing-dimension broadcasting.
    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        let s = T::lit(factor);
        let value = self.value(a);
        let data = value.data().iter().map(|&x| x * s).collect();
        flops::charge(value.len() as u64);
        let value = Tensor::new(value.shape(), data)?;
        Ok(self.push(value, Op::Scale(a, s)))
    }

    /// Matrix product over the last two axes.
    ///
    /// Leading (batch) axes must match, or one operand must be a plain 2-D
    /// matrix shared across the other's batch.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (plan, out_shape) = matmul_plan(self.shape(a), self.shape(b))?;
        let MatMulPlan { batch, m, k, n, .. } = plan;
        let da = self.value(a).data();
        let db = self.value(b).data();
        let mut out = vec![T::zero(); numel(&out_shape)];
        if plan.lhs_batched && !plan.rhs_batched {
            // One tall product: (batch*m x k) * (k x n).
            T::gemm(batch * m, k, n, T::one(), da, k, 1, db, n, 1, T::zero(), &mut out, n, 1);
        } else {
            for bi in 0..batch {
                let ao = if plan.lhs_batched { bi * m * k } else { 0 };
                let bo = if plan.rhs_batched { bi * k * n } else { 0 };
                T::gemm(
                    m,
                    k,
                    n,
                    T::one(),
                    &da[ao..],
                    k,
                    1,
                    &db[bo..],
                    n,
                    1,
                    T::zero(),
                    &mut out[bi * m * n..],
                    n,
                    1,
                );
            }
        }
        flops::charge(2 * (batch * m * k * n) as u64);
        let value = Tensor::new(&out_shape, out)?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn permute(&mut self, a: NodeId, perm: &[usize]) -> Result<NodeId> {
        let shape = self.shape(a).to_vec();
        let mut seen = vec![false; shape.len()];
        let valid = perm.len() == shape.len()
            && perm
                .iter()
                .all(|&p| p < shape.len() && !std::mem::replace(&mut seen[p], true));
        if !valid {
            return Err(AutodiffError::InvalidArgument {
                op: "permute",
                msg: format!("{perm:?} is not a permutation of the axes of {shape:?}"),
            });
        }
        let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
        let data = permute_data(self.value(a).data(), &shape, perm);
        let value = Tensor::new(&out_shape, data)?;
        Ok(self.push(value, Op::Permute(a, perm.to_vec())))
    }

    /// Swaps the last two axes.
    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let rank = self.shape(a).len();
        if rank < 2 {
            return Err(AutodiffError::InvalidAxis {
                op: "transpose",
                axis: 1,
                shape: self.shape(a).to_vec(),
            });
        }
        let mut perm: Vec<usize> = (0..rank).collect();
        perm.swap(rank - 2, rank - 1);
        self.permute(a, &perm)
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let value = self.value(a).clone().reshaped(shape)?;
        Ok(self.push(value, Op::Reshape(a)))
    }

    pub fn concat(&mut self, parts: &[NodeId], axis: usize) -> Result<NodeId> {
        let Some(&first) = parts.first() else {
            return Err(AutodiffError::InvalidArgument {
                op: "concat",
                msg: "no inputs".into(),
            });
        };
        let base = self.shape(first).to_vec();
        check_axis("concat", &base, axis)?;
        let mut out_shape = base.clone();
        out_shape[axis] = 0;
        for &p in parts {
            let s = self.shape(p);
            let compatible =
                s.len() == base.len() && s.iter().zip(&base).enumerate().all(|(d, (x, y))| d == axis || x == y);
            if !compatible {
                return Err(AutodiffError::ShapeMismatch {
                    op: "concat",
                    lhs: base,
                    rhs: s.to_vec(),
                });
            }
            out_shape[axis] += s[axis];
        }
        let (outer, _, inner) = split_axis(&out_shape, axis);
        let mut data = Vec::with_capacity(numel(&out_shape));
        for o in 0..outer {
            for &p in parts {
                let v = self.value(p);
                let block = v.shape()[axis] * inner;
                data.extend_from_slice(&v.data()[o * block..(o + 1) * block]);
            }
        }
        let value = Tensor::new(&out_shape, data)?;
        Ok(self.push(value, Op::Concat(parts.to_vec(), axis)))
    }

    /// `len` entries of `axis` starting at `start`.
    pub fn slice(&mut self, a: NodeId, axis: usize, start: usize, len: usize) -> Result<NodeId> {
        let shape = self.shape(a).to_vec();
        check_axis("slice", &shape, axis)?;
        if start + len > shape[axis] {
            return Err(AutodiffError::InvalidArgument {
                op: "slice",
                msg: format!("range {start}..{} exceeds axis {axis} of {shape:?}", start + len),
            });
        }
        let (outer, full, inner) = split_axis(&shape, axis);
        let src = self.value(a).data();
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let from = (o * full + start) * inner;
            data.extend_from_slice(&src[from..from + len * inner]);
        }
        let mut out_shape = shape;
        out_shape[axis] = len;
        let value = Tensor::new(&out_shape, data)?;
        Ok(self.push(value, Op::Slice { src: a, axis, start }))
    }

    /// Sums out `axis`, removing it from the shape.
    pub fn sum_axis(&mut self, a: NodeId, axis: usize) -> Result<NodeId> {
        let shape = self.shape(a).to_vec();
        check_axis("sum_axis", &shape, axis)?;
        let (outer, len, inner) = split_axis(&shape, axis);
        let src = self.value(a).data();
        let mut data = vec![T::zero(); outer * inner];
        for o in 0..outer {
            for i in 0..len {
                let row = &src[(o * len + i) * inner..(o * len + i + 1) * inner];
                for (acc, &x) in data[o * inner..(o + 1) * inner].iter_mut().zip(row) {
                    *acc += x;
                }
            }
        }
        flops::charge(src.len() as u64);
        let mut out_shape = shape;
        out_shape.remove(axis);
        let value = Tensor::new(&out_shape, data)?;
        Ok(self.push(value, Op::SumAxis(a, axis)))
    }

    pub fn mean_axis(&mut self, a: NodeId, axis: usize) -> Result<NodeId> {
        let len = *self.shape(a).get(axis).ok_or_else(|| AutodiffError::InvalidAxis {
            op: "mean_axis",
            axis,
            shape: self.shape(a).to_vec(),
        })?;
        let s = self.sum_axis(a, axis)?;
        self.scale(s, 1.0 / len as f64)
    }

    pub fn sum_all(&mut self, a: NodeId) -> Result<NodeId> {
        let v = self.value(a);
        let total: T = v.data().iter().copied().sum();
        flops::charge(v.len() as u64);
        Ok(self.push(Tensor::scalar(total), Op::SumAll(a)))
    }

    pub fn mean_all(&mut self, a: NodeId) -> Result<NodeId> {
        let count = self.value(a).len().max(1);
        let s = self.sum_all(a)?;
        self.scale(s, 1.0 / count as f64)
    }

    /// Softmax along `axis` with max subtraction.
    pub fn softmax(&mut self, a: NodeId, axis: usize) -> Result<NodeId> {
        let shape = self.shape(a).to_vec();
        check_axis("softmax", &shape, axis)?;
        let (outer, len, inner) = split_axis(&shape, axis);
        let src = self.value(a).data();
        let mut out = vec![T::zero(); src.len()];
        for o in 0..outer {
            for j in 0..inner {
                let at = |i: usize| (o * len + i) * inner + j;
                let max = (0..len).map(|i| src[at(i)]).fold(T::neg_infinity(), T::max);
                let mut total = T::zero();
                for i in 0..len {
                    let e = (src[at(i)] - max).exp();
                    out[at(i)] = e;
                    total += e;
                }
                let inv = T::one() / total;
                for i in 0..len {
                    out[at(i)] *= inv;
                }
            }
        }
        flops::charge(flops::SOFTMAX_PER_ELEMENT * src.len() as u64);
        let value = Tensor::new(&shape, out)?;
        Ok(self.push(value, Op::Softmax(a, axis)))
    }

    fn unary(&mut self, a: NodeId, cost: u64, f: impl Fn(T) -> T, op: Op<T>) -> Result<NodeId> {
        let v = self.value(a);
        let data = v.data().iter().map(|&x| f(x)).collect();
        flops::charge(cost * v.len() as u64);
        let value = Tensor::new(v.shape(), data)?;
        Ok(self.push(value, op))
    }

    pub fn gelu(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, flops::GELU_PER_ELEMENT, |x| gelu_parts(x).0, Op::Gelu(a))
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, 1, |x| x.max(T::zero()), Op::Relu(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.unary(a, 4, sigmoid, Op::Sigmoid(a))
    }

    /// Normalizes each slice along `axis` to zero mean and unit variance,
    /// then applies `gain` and `bias` (both shaped `[shape[axis]]`).
    pub fn layer_norm(&mut self, x: NodeId, axis: usize, gain: NodeId, bias: NodeId, eps: f64) -> Result<NodeId> {
        let shape = self.shape(x).to_vec();
        check_axis("layer_norm", &shape, axis)?;
        if eps <= 0.0 {
            return Err(AutodiffError::InvalidArgument {
                op: "layer_norm",
                msg: format!("eps must be positive, got {eps}"),
            });
        }
        let (outer, len, inner) = split_axis(&shape, axis);
        for p in [gain, bias] {
            if self.shape(p) != [len] {
                return Err(AutodiffError::ShapeMismatch {
                    op: "layer_norm",
                    lhs: shape.clone(),
                    rhs: self.shape(p).to_vec(),
                });
            }
        }
        let src = self.value(x).data();
        let g = self.value(gain).data();
        let b = self.value(bias).data();
        let inv_len = T::one() / T::lit(len as f64);
        let eps = T::lit(eps);
        let mut normalized = vec![T::zero(); src.len()];
        let mut out = vec![T::zero(); src.len()];
        let mut rstd = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            for j in 0..inner {
                let at = |i: usize| (o * len + i) * inner + j;
                let mean = (0..len).map(|i| src[at(i)]).sum::<T>() * inv_len;
                let var = (0..len)
                    .map(|i| {
                        let d = src[at(i)] - mean;
                        d * d
                    })
                    .sum::<T>()
                    * inv_len;
                let r = T::one() / (var + eps).sqrt();
                rstd.push(r);
                for i in 0..len {
                    let xh = (src[at(i)] - mean) * r;
                    normalized[at(i)] = xh;
                    out[at(i)] = xh * g[i] + b[i];
                }
            }
        }
        flops::charge(flops::LAYER_NORM_PER_ELEMENT * src.len() as u64);
        let value = Tensor::new(&shape, out)?;
        Ok(self.push(
            value,
            Op::LayerNorm {
                x,
                gain,
                bias,
                axis,
                normalized,
                rstd,
            },
        ))
    }

    /// Replaces entries whose mask bit is 0 with `fill`.
    ///
    /// The mask is matched against the trailing axes of `a`. Gradient only
    /// reaches positions the mask keeps.
    pub fn masked_fill(&mut self, a: NodeId, mask: &Mask, fill: f64) -> Result<NodeId> {
        let shape = self.shape(a).to_vec();
        let ms = mask.shape();
        let trailing = ms.len() <= shape.len() && shape[shape.len() - ms.len()..] == *ms;
        if !trailing {
            return Err(AutodiffError::ShapeMismatch {
                op: "masked_fill",
                lhs: shape,
                rhs: ms.to_vec(),
            });
        }
        let fill = T::lit(fill);
        let period = mask.keep().len().max(1);
        let src = self.value(a).data();
        let data = src
            .iter()
            .enumerate()
            .map(|(i, &x)| if mask.get(i % period) { x } else { fill })
            .collect();
        flops::charge(src.len() as u64);
        let value = Tensor::new(&shape, data)?;
        Ok(self.push(
            value,
            Op::MaskedFill {
                src: a,
                mask: mask.clone(),
            },
        ))
    }

    /// Mean binary cross-entropy between logits and 0/1 targets.
    pub fn bce_with_logits(&mut self, logits: NodeId, targets: &Tensor<T>) -> Result<NodeId> {
        let z = self.value(logits);
        if z.shape() != targets.shape() {
            return Err(AutodiffError::ShapeMismatch {
                op: "bce_with_logits",
                lhs: z.shape().to_vec(),
                rhs: targets.shape().to_vec(),
            });
        }
        if targets.data().iter().any(|&t| t != T::zero() && t != T::one()) {
            return Err(AutodiffError::InvalidArgument {
                op: "bce_with_logits",
                msg: "targets must be 0 or 1".into(),
            });
        }
        let total: T = z
            .data()
            .iter()
            .zip(targets.data())
            .map(|(&x, &t)| (x.max(T::zero()) - t * x) + (-x.abs()).exp().ln_1p())
            .sum();
        let count = T::lit(z.len().max(1) as f64);
        flops::charge(4 * z.len() as u64);
        Ok(self.push(
            Tensor::scalar(total / count),
            Op::BceWithLogits {
                logits,
                targets: targets.data().to_vec(),
            },
        ))
    }

    pub(crate) fn backward_node(&self, id: NodeId, g: &[T], adj: &mut [Option<Vec<T>>]) {
        let node = &self.nodes[id.0];
        let out_shape = node.value.shape();
        match &node.op {
            Op::Leaf => {}
            &Op::Add(a, b) | &Op::Sub(a, b) => {
                let negate = matches!(node.op, Op::Sub(..));
                for (p, sign) in [(a, false), (b, negate)] {
                    if !self.requires_grad(p) {
                        continue;
                    }
                    let ps = self.shape(p);
                    let map = BroadcastMap::new(ps, out_shape);
                    let mut acc = vec![T::zero(); numel(ps)];
                    map.for_each(out_shape, |i, j| acc[j] += g[i]);
                    if sign {
                        acc.iter_mut().for_each(|x| *x = -*x);
                    }
                    self.accumulate(adj, p, acc);
                }
            }
            &Op::Mul(a, b) => {
                let (sa, sb) = (self.shape(a), self.shape(b));
                let (ma, mb) = (BroadcastMap::new(sa, out_shape), BroadcastMap::new(sb, out_shape));
                let (ia, ib) = (materialize(&ma, out_shape), materialize(&mb, out_shape));
                let (da, db) = (self.value(a).data(), self.value(b).data());
                let total = g.len();
                if self.requires_grad(a) {
                    let mut acc = vec![T::zero(); da.len()];
                    for i in 0..total {
                        acc[map_index(&ma, &ia, i)] += g[i] * db[map_index(&mb, &ib, i)];
                    }
                    self.accumulate(adj, a, acc);
                }
                if self.requires_grad(b) {
                    let mut acc = vec![T::zero(); db.len()];
                    for i in 0..total {
                        acc[map_index(&mb, &ib, i)] += g[i] * da[map_index(&ma, &ia, i)];
                    }
                    self.accumulate(adj, b, acc);
                }
            }
            &Op::Scale(a, s) => {
                self.accumulate(adj, a, g.iter().map(|&x| x * s).collect());
            }
            &Op::MatMul(a, b) => self.backward_matmul(a, b, g, adj),
            Op::Permute(a, perm) => {
                let inv = inverse_perm(perm);
                self.accumulate(adj, *a, permute_data(g, out_shape, &inv));
            }
            &Op::Reshape(a) => self.accumulate(adj, a, g.to_vec()),
            Op::Concat(parts, axis) => {
                let (outer, _, inner) = split_axis(out_shape, *axis);
                let total_len = out_shape[*axis];
                let mut offset = 0;
                for &p in parts {
                    let len = self.shape(p)[*axis];
                    if self.requires_grad(p) {
                        let mut acc = Vec::with_capacity(outer * len * inner);
                        for o in 0..outer {
                            let from = (o * total_len + offset) * inner;
                            acc.extend_from_slice(&g[from..from + len * inner]);
                        }
                        self.accumulate(adj, p, acc);
                    }
                    offset += len;
                }
            }
            &Op::Slice { src, axis, start } => {
                let ss = self.shape(src);
                let (outer, full, inner) = split_axis(ss, axis);
                let len = out_shape[axis];
                let mut acc = vec![T::zero(); numel(ss)];
                for o in 0..outer {
                    let to = (o * full + start) * inner;
                    acc[to..to + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
                }
                self.accumulate(adj, src, acc);
            }
            &Op::SumAxis(a, axis) => {
                let sa = self.shape(a);
                let (outer, len, inner) = split_axis(sa, axis);
                let mut acc = Vec::with_capacity(numel(sa));
                for o in 0..outer {
                    for _ in 0..len {
                        acc.extend_from_slice(&g[o * inner..(o + 1) * inner]);
                    }
                }
                self.accumulate(adj, a, acc);
            }
            &Op::SumAll(a) => {
                self.accumulate(adj, a, vec![g[0]; self.value(a).len()]);
            }
            &Op::Softmax(a, axis) => {
                let y = node.value.data();
                let (outer, len, inner) = split_axis(out_shape, axis);
                let mut acc = vec![T::zero(); y.len()];
                for o in 0..outer {
                    for j in 0..inner {
                        let at = |i: usize| (o * len + i) * inner + j;
                        let dot: T = (0..len).map(|i| g[at(i)] * y[at(i)]).sum();
                        for i in 0..len {
                            acc[at(i)] = y[at(i)] * (g[at(i)] - dot);
                        }
                    }
                }
                self.accumulate(adj, a, acc);
            }
            &Op::Gelu(a) => {
                let x = self.value(a).data();
                let acc = x.iter().zip(g).map(|(&x, &g)| g * gelu_parts(x).1).collect();
                self.accumulate(adj, a, acc);
            }
            &Op::Relu(a) => {
                let x = self.value(a).data();
                let acc = x
                    .iter()
                    .zip(g)
                    .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
                    .collect();
                self.accumulate(adj, a, acc);
            }
            &Op::Sigmoid(a) => {
                let y = node.value.data();
                let acc = y.iter().zip(g).map(|(&y, &g)| g * y * (T::one() - y)).collect();
                self.accumulate(adj, a, acc);
            }
            Op::LayerNorm {
                x,
                gain,
                bias,
                axis,
                normalized,
                rstd,
            } => {
                let (outer, len, inner) = split_axis(out_shape, *axis);
                let gv = self.value(*gain).data();
                let mut dgain = vec![T::zero(); len];
                let mut dbias = vec![T::zero(); len];
                let mut dx = vec![T::zero(); g.len()];
                let inv_len = T::one() / T::lit(len as f64);
                for o in 0..outer {
                    for j in 0..inner {
                        let at = |i: usize| (o * len + i) * inner + j;
                        let r = rstd[o * inner + j];
                        let mut sum_d = T::zero();
                        let mut sum_dx = T::zero();
                        for i in 0..len {
                            let k = at(i);
                            dgain[i] += g[k] * normalized[k];
                            dbias[i] += g[k];
                            let d = g[k] * gv[i];
                            sum_d += d;
                            sum_dx += d * normalized[k];
                        }
                        for i in 0..len {
                            let k = at(i);
                            let d = g[k] * gv[i];
                            dx[k] = r * (d - sum_d * inv_len - normalized[k] * sum_dx * inv_len);
                        }
                    }
                }
                self.accumulate(adj, *x, dx);
                self.accumulate(adj, *gain, dgain);
                self.accumulate(adj, *bias, dbias);
            }
            Op::MaskedFill { src, mask } => {
                let period = mask.keep().len().max(1);
                let acc = g
                    .iter()
                    .enumerate()
                    .map(|(i, &x)| if mask.get(i % period) { x } else { T::zero() })
                    .collect();
                self.accumulate(adj, *src, acc);
            }
            Op::BceWithLogits { logits, targets } => {
                let z = self.value(*logits).data();
                let scale = g[0] / T::lit(z.len().max(1) as f64);
                let acc = z.iter().zip(targets).map(|(&x, &t)| (sigmoid(x) - t) * scale).collect();
                self.accumulate(adj, *logits, acc);
            }
        }
    }

    fn backward_matmul(&self, a: NodeId, b: NodeId, g: &[T], adj: &mut [Option<Vec<T>>]) {
        let (plan, _) = matmul_plan(self.shape(a), self.shape(b)).expect("validated in forward");
        let MatMulPlan { batch, m, k, n, .. } = plan;
        let da = self.value(a).data();
        let db = self.value(b).data();
        if self.requires_grad(a) {
            // dA = dC * B^T
            let mut acc = vec![T::zero(); da.len()];
            if plan.lhs_batched && !plan.rhs_batched {
                T::gemm(batch * m, n, k, T::one(), g, n, 1, db, 1, n, T::zero(), &mut acc, k, 1);
            } else {
                for bi in 0..batch {
                    let bo = if plan.rhs_batched { bi * k * n } else { 0 };
                    let (ao, beta) = if plan.lhs_batched {
                        (bi * m * k, T::zero())
                    } else {
                        (0, T::one())
                    };
                    T::gemm(
                        m,
                        n,
                        k,
                        T::one(),
                        &g[bi * m * n..],
                        n,
                        1,
                        &db[bo..],
                        1,
                        n,
                        beta,
                        &mut acc[ao..],
                        k,
                        1,
                    );
                }
            }
            self.accumulate(adj, a, acc);
        }
        if self.requires_grad(b) {
            // dB = A^T * dC
            let mut acc = vec![T::zero(); db.len()];
            if plan.lhs_batched && !plan.rhs_batched {
                T::gemm(k, batch * m, n, T::one(), da, 1, k, g, n, 1, T::zero(), &mut acc, n, 1);
            } else {
                for bi in 0..batch {
                    let ao = if plan.lhs_batched { bi * m * k } else { 0 };
                    let (bo, beta) = if plan.rhs_batched {
                        (bi * k * n, T::zero())
                    } else {
                        (0, T::one())
                    };
                    T::gemm(
                        k,
                        m,
                        n,
                        T::one(),
                        &da[ao..],
                        1,
                        k,
                        &g[bi * m * n..],
                        n,
                        1,
                        beta,
                        &mut acc[bo..],
                        n,
                        1,
                    );
                }
            }
            self.accumulate(adj, b, acc);
        }
    }
}
