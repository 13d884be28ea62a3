//! Tape-based reverse-mode automatic differentiation over small dense
//! tensors, generic over f32 (training) and f64 (gradient checking).
//!
//! The op set is exactly what the completion network and the PCA fitting
//! baseline need; each op stores its parents and the backward pass walks
//! the tape in reverse, accumulating gradients for leaves that requested
//! them.

mod ops;
mod scalar;
mod tensor;

pub use scalar::Scalar;
pub use tensor::Tensor;

use crate::error::{Error, Result};
use ops::Op;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(pub(crate) usize);

pub(crate) struct Node<T: Scalar> {
    value: Tensor<T>,
    op: Op,
    requires_grad: bool,
}

pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    fn push(&mut self, value: Tensor<T>, op: Op) -> Var {
        // Gradients propagate to any node whose parents need them.
        let requires_grad = match &op {
            Op::Leaf => false,
            other => other.parents().iter().any(|p| self.nodes[p.0].requires_grad),
        };
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf.
    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Non-trainable leaf.
    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(b).shape();
        if ac != br {
            return Err(Error::ShapeError(format!(
                "matmul {ar}x{ac} * {br}x{bc}"
            )));
        }
        let value = Tensor::matmul(self.value(a), self.value(b));
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.value(a).shape() != self.value(b).shape() {
            return Err(Error::ShapeError("add shapes differ".into()));
        }
        let value = self.value(a).zip(self.value(b), |x, y| x + y);
        Ok(self.push(value, Op::Add(a, b)))
    }

    /// `a[m,n] + row[1,n]`, broadcast over rows.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (_, n) = self.value(a).shape();
        if self.value(row).shape() != (1, n) {
            return Err(Error::ShapeError("add_row: row shape mismatch".into()));
        }
        let rowv = self.value(row).data.clone();
        let mut value = self.value(a).clone();
        for r in 0..value.rows {
            for c in 0..value.cols {
                value[(r, c)] = value[(r, c)] + rowv[c];
            }
        }
        Ok(self.push(value, Op::AddRow(a, row)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let f = T::from_f64(factor);
        let value = self.value(a).map(|x| x * f);
        self.push(value, Op::Scale(a, factor))
    }

    /// Elementwise product with a 1x1 variable (learned global scale).
    pub fn mul_scalar_var(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.value(s).shape() != (1, 1) {
            return Err(Error::ShapeError("mul_scalar_var needs a 1x1 factor".into()));
        }
        let f = self.value(s).data[0];
        let value = self.value(a).map(|x| x * f);
        Ok(self.push(value, Op::MulScalarVar(a, s)))
    }

    pub fn gelu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(scalar::gelu);
        self.push(value, Op::Gelu(a))
    }

    /// Row-wise layer norm with learned gain and bias.
    pub fn layer_norm(&mut self, x: Var, gamma: Var, beta: Var) -> Result<Var> {
        let (_, n) = self.value(x).shape();
        if self.value(gamma).shape() != (1, n) || self.value(beta).shape() != (1, n) {
            return Err(Error::ShapeError("layer_norm: gain/bias shape".into()));
        }
        let value = ops::layer_norm_forward(self.value(x), self.value(gamma), self.value(beta));
        Ok(self.push(value, Op::LayerNorm { x, gamma, beta }))
    }

    /// Fused softmax(Q K^T * scale) over rows; keys/queries keep their
    /// feature dimension along columns.
    pub fn attn_softmax(&mut self, q: Var, k: Var, scale: f64) -> Result<Var> {
        let (_, qd) = self.value(q).shape();
        let (_, kd) = self.value(k).shape();
        if qd != kd {
            return Err(Error::ShapeError("attn_softmax: dim mismatch".into()));
        }
        let value = ops::attn_softmax_forward(self.value(q), self.value(k), T::from_f64(scale));
        Ok(self.push(value, Op::AttnSoftmax { q, k, scale }))
    }

    pub fn concat_rows(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ar, ac) = self.value(a).shape();
        let (br, bc) = self.value(b).shape();
        if ac != bc {
            return Err(Error::ShapeError("concat_rows: col mismatch".into()));
        }
        let mut data = Vec::with_capacity((ar + br) * ac);
        data.extend_from_slice(&self.value(a).data);
        data.extend_from_slice(&self.value(b).data);
        let value = Tensor::from_vec(ar + br, ac, data);
        Ok(self.push(value, Op::ConcatRows(a, b)))
    }

    /// Each row repeated `times` consecutively: [r0, r0, .., r1, r1, ..].
    pub fn repeat_rows(&mut self, a: Var, times: usize) -> Var {
        let (r, c) = self.value(a).shape();
        let mut data = Vec::with_capacity(r * times * c);
        for row in 0..r {
            for _ in 0..times {
                data.extend_from_slice(self.value(a).row(row));
            }
        }
        let value = Tensor::from_vec(r * times, c, data);
        self.push(value, Op::RepeatRows(a, times))
    }

    /// The whole block repeated `times` times: [r0..rn, r0..rn, ..].
    pub fn tile_rows(&mut self, a: Var, times: usize) -> Var {
        let (r, c) = self.value(a).shape();
        let mut data = Vec::with_capacity(r * times * c);
        for _ in 0..times {
            data.extend_from_slice(&self.value(a).data);
        }
        let value = Tensor::from_vec(r * times, c, data);
        self.push(value, Op::TileRows(a, times))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let (r, c) = self.value(a).shape();
        if r * c != rows * cols {
            return Err(Error::ShapeError(format!(
                "reshape {r}x{c} -> {rows}x{cols}"
            )));
        }
        let value = Tensor::from_vec(rows, cols, self.value(a).data.clone());
        Ok(self.push(value, Op::Reshape(a)))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.value(a).shape();
        if start + len > r {
            return Err(Error::ShapeError(format!(
                "slice_rows {start}+{len} of {r}"
            )));
        }
        let data = self.value(a).data[start * c..(start + len) * c].to_vec();
        let value = Tensor::from_vec(len, c, data);
        Ok(self.push(value, Op::SliceRows { a, start, len }))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let (r, c) = self.value(a).shape();
        if start + len > c {
            return Err(Error::ShapeError(format!(
                "slice_cols {start}+{len} of {c}"
            )));
        }
        let mut data = Vec::with_capacity(r * len);
        for row in 0..r {
            data.extend_from_slice(&self.value(a).row(row)[start..start + len]);
        }
        let value = Tensor::from_vec(r, len, data);
        Ok(self.push(value, Op::SliceCols { a, start, len }))
    }

    /// Symmetric squared chamfer distance to a constant target, as a 1x1
    /// tensor. Selection indices are treated as locally constant.
    pub fn chamfer_sq_to(&mut self, pred: Var, target: Vec<[f64; 3]>) -> Result<Var> {
        self.chamfer_sq_impl(pred, target, None)
    }

    /// Chamfer with externally fixed nearest-neighbor selections; used to
    /// evaluate the smooth branch the gradient belongs to (finite
    /// difference checks).
    pub fn chamfer_sq_fixed(
        &mut self,
        pred: Var,
        target: Vec<[f64; 3]>,
        selection: (Vec<u32>, Vec<u32>),
    ) -> Result<Var> {
        self.chamfer_sq_impl(pred, target, Some(selection))
    }

    fn chamfer_sq_impl(
        &mut self,
        pred: Var,
        target: Vec<[f64; 3]>,
        selection: Option<(Vec<u32>, Vec<u32>)>,
    ) -> Result<Var> {
        let (_, c) = self.value(pred).shape();
        if c != 3 {
            return Err(Error::ShapeError("chamfer expects Nx3 points".into()));
        }
        if target.is_empty() || self.value(pred).rows == 0 {
            return Err(Error::EmptyInput);
        }
        let (value, fwd_idx, bwd_idx) = match selection {
            None => ops::chamfer_forward(self.value(pred), &target),
            Some((f, b)) => {
                if f.len() != self.value(pred).rows || b.len() != target.len() {
                    return Err(Error::ShapeError("chamfer selection lengths".into()));
                }
                let value = ops::chamfer_value_fixed(self.value(pred), &target, &f, &b);
                (value, f, b)
            }
        };
        Ok(self.push(
            value,
            Op::ChamferSq {
                pred,
                target,
                fwd_idx,
                bwd_idx,
            },
        ))
    }

    /// Selection indices of a chamfer node (per-pred argmin, per-target
    /// argmin).
    pub fn chamfer_selection(&self, v: Var) -> Option<(Vec<u32>, Vec<u32>)> {
        match &self.nodes[v.0].op {
            Op::ChamferSq {
                fwd_idx, bwd_idx, ..
            } => Some((fwd_idx.clone(), bwd_idx.clone())),
            _ => None,
        }
    }

    /// Rotate row-points by the axis-angle vector `aa` (1x3): y_i = R p_i.
    pub fn rotate_points(&mut self, points: Var, aa: Var) -> Result<Var> {
        if self.value(points).cols != 3 || self.value(aa).shape() != (1, 3) {
            return Err(Error::ShapeError("rotate_points shapes".into()));
        }
        let rot = ops::rodrigues(&[
            self.value(aa).data[0].to_f64(),
            self.value(aa).data[1].to_f64(),
            self.value(aa).data[2].to_f64(),
        ]);
        let value = ops::rotate_forward(self.value(points), &rot);
        Ok(self.push(value, Op::RotatePoints { points, aa }))
    }

    /// Barycentric surface samples of a vertex tensor [V,3]:
    /// sample s = (1-u-v) A + u B + v C on face (a,b,c).
    pub fn face_samples(&mut self, verts: Var, samples: Vec<([u32; 3], f64, f64)>) -> Result<Var> {
        if self.value(verts).cols != 3 {
            return Err(Error::ShapeError("face_samples expects Vx3".into()));
        }
        let value = ops::face_samples_forward(self.value(verts), &samples);
        Ok(self.push(value, Op::FaceSamples { verts, samples }))
    }

    /// Mean of all entries, as 1x1.
    pub fn mean_all(&mut self, a: Var) -> Var {
        let t = self.value(a);
        let n = (t.rows * t.cols).max(1);
        let mut acc = T::zero();
        for v in &t.data {
            acc = acc + *v;
        }
        let value = Tensor::from_vec(1, 1, vec![acc / T::from_f64(n as f64)]);
        self.push(value, Op::MeanAll(a))
    }

    /// Backward pass from a scalar (1x1) output. Returns one gradient slot
    /// per node; only nodes that require grad get a tensor.
    pub fn backward(&mut self, output: Var) -> Result<Vec<Option<Tensor<T>>>> {
        if self.value(output).shape() != (1, 1) {
            return Err(Error::ShapeError("backward needs a scalar output".into()));
        }
        let n = self.nodes.len();
        let mut grads: Vec<Option<Tensor<T>>> = vec![None; n];
        let (r, c) = self.value(output).shape();
        grads[output.0] = Some(Tensor::from_vec(r, c, vec![T::one()]));

        for i in (0..n).rev() {
            let Some(grad) = grads[i].take() else { continue };
            if matches!(self.nodes[i].op, Op::Leaf) {
                // Re-store leaf gradients (they are results).
                grads[i] = Some(grad);
                continue;
            }
            if !self.nodes[i].requires_grad {
                continue;
            }
            let op = std::mem::replace(&mut self.nodes[i].op, Op::Leaf);
            ops::backward_op(self, &op, Var(i), &grad, &mut grads)?;
            self.nodes[i].op = op;
        }

        for g in grads.iter().flatten() {
            if g.data.iter().any(|v| !v.to_f64().is_finite()) {
                return Err(Error::NumericalError("gradient"));
            }
        }
        // Drop gradients of non-trainable leaves.
        for i in 0..n {
            if !self.nodes[i].requires_grad {
                grads[i] = None;
            }
        }
        Ok(grads)
    }
}
