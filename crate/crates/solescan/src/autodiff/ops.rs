//! Op definitions, forward helpers, and the backward dispatch.

use crate::autodiff::scalar::{gelu_grad, Scalar};
use crate::autodiff::{Tape, Tensor, Var};
use crate::error::Result;

const LN_EPS: f64 = 1e-5;

pub(crate) enum Op {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    MulScalarVar(Var, Var),
    Gelu(Var),
    LayerNorm {
        x: Var,
        gamma: Var,
        beta: Var,
    },
    AttnSoftmax {
        q: Var,
        k: Var,
        scale: f64,
    },
    ConcatRows(Var, Var),
    RepeatRows(Var, usize),
    TileRows(Var, usize),
    Reshape(Var),
    SliceCols {
        a: Var,
        start: usize,
        len: usize,
    },
    SliceRows {
        a: Var,
        start: usize,
        len: usize,
    },
    ChamferSq {
        pred: Var,
        target: Vec<[f64; 3]>,
        /// Per-pred argmin into target.
        fwd_idx: Vec<u32>,
        /// Per-target argmin into pred.
        bwd_idx: Vec<u32>,
    },
    RotatePoints {
        points: Var,
        aa: Var,
    },
    FaceSamples {
        verts: Var,
        samples: Vec<([u32; 3], f64, f64)>,
    },
    MeanAll(Var),
}

impl Op {
    pub(crate) fn parents(&self) -> Vec<Var> {
        match self {
            Op::Leaf => vec![],
            Op::MatMul(a, b) | Op::Add(a, b) | Op::AddRow(a, b) | Op::ConcatRows(a, b) => {
                vec![*a, *b]
            }
            Op::MulScalarVar(a, s) => vec![*a, *s],
            Op::Scale(a, _)
            | Op::Gelu(a)
            | Op::RepeatRows(a, _)
            | Op::TileRows(a, _)
            | Op::Reshape(a)
            | Op::SliceCols { a, .. }
            | Op::SliceRows { a, .. }
            | Op::MeanAll(a) => vec![*a],
            Op::LayerNorm { x, gamma, beta } => vec![*x, *gamma, *beta],
            Op::AttnSoftmax { q, k, .. } => vec![*q, *k],
            Op::ChamferSq { pred, .. } => vec![*pred],
            Op::RotatePoints { points, aa } => vec![*points, *aa],
            Op::FaceSamples { verts, .. } => vec![*verts],
        }
    }
}

pub(crate) fn layer_norm_forward<T: Scalar>(
    x: &Tensor<T>,
    gamma: &Tensor<T>,
    beta: &Tensor<T>,
) -> Tensor<T> {
    let (rows, cols) = x.shape();
    let mut out = Tensor::zeros(rows, cols);
    let inv_n = T::from_f64(1.0 / cols as f64);
    let eps = T::from_f64(LN_EPS);
    for r in 0..rows {
        let row = x.row(r);
        let mut mean = T::zero();
        for &v in row {
            mean = mean + v;
        }
        mean = mean * inv_n;
        let mut var = T::zero();
        for &v in row {
            let d = v - mean;
            var = var + d * d;
        }
        var = var * inv_n;
        let inv_std = T::one() / (var + eps).sqrt();
        for c in 0..cols {
            out[(r, c)] = gamma.data[c] * ((row[c] - mean) * inv_std) + beta.data[c];
        }
    }
    out
}

pub(crate) fn attn_softmax_forward<T: Scalar>(q: &Tensor<T>, k: &Tensor<T>, scale: T) -> Tensor<T> {
    let mut scores = Tensor::matmul_nt(q, k);
    for v in scores.data.iter_mut() {
        *v = *v * scale;
    }
    // Row-wise softmax with max subtraction.
    for r in 0..scores.rows {
        let row = scores.row_mut(r);
        let mut max = row[0];
        for &v in row.iter() {
            if v > max {
                max = v;
            }
        }
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum = sum + *v;
        }
        let inv = T::one() / sum;
        for v in row.iter_mut() {
            *v = *v * inv;
        }
    }
    scores
}

pub(crate) fn chamfer_forward<T: Scalar>(
    pred: &Tensor<T>,
    target: &[[f64; 3]],
) -> (Tensor<T>, Vec<u32>, Vec<u32>) {
    use nalgebra::Point3;
    let n = pred.rows;
    let m = target.len();
    // Nearest-neighbor selection runs on f64 kd-trees; the distances that
    // enter the value are recomputed in T at the selected pairs so the
    // finite-difference check sees a consistent function.
    let pred_f64: Vec<Point3<f64>> = (0..n)
        .map(|i| {
            let r = pred.row(i);
            Point3::new(r[0].to_f64(), r[1].to_f64(), r[2].to_f64())
        })
        .collect();
    let tgt_f64: Vec<Point3<f64>> = target.iter().map(|p| Point3::new(p[0], p[1], p[2])).collect();
    let pred_tree = crate::geom::KdTree::build(&pred_f64).expect("pred non-empty");
    let tgt_tree = crate::geom::KdTree::build(&tgt_f64).expect("target non-empty");

    let tgt: Vec<[T; 3]> = target
        .iter()
        .map(|p| [T::from_f64(p[0]), T::from_f64(p[1]), T::from_f64(p[2])])
        .collect();
    let d2 = |pr: &[T], t: &[T; 3]| -> T {
        let dx = pr[0] - t[0];
        let dy = pr[1] - t[1];
        let dz = pr[2] - t[2];
        dx * dx + dy * dy + dz * dz
    };
    let mut fwd_idx = vec![0u32; n];
    let mut acc_fwd = T::zero();
    for i in 0..n {
        let (j, _) = tgt_tree.nearest(&pred_f64[i]);
        fwd_idx[i] = j as u32;
        acc_fwd = acc_fwd + d2(pred.row(i), &tgt[j]);
    }
    let mut bwd_idx = vec![0u32; m];
    let mut acc_bwd = T::zero();
    for (j, t) in tgt.iter().enumerate() {
        let (i, _) = pred_tree.nearest(&tgt_f64[j]);
        bwd_idx[j] = i as u32;
        acc_bwd = acc_bwd + d2(pred.row(i), t);
    }
    let total = acc_fwd / T::from_f64(n as f64) + acc_bwd / T::from_f64(m as f64);
    (Tensor::from_vec(1, 1, vec![total]), fwd_idx, bwd_idx)
}

/// Chamfer value with externally supplied selections (smooth branch).
pub(crate) fn chamfer_value_fixed<T: Scalar>(
    pred: &Tensor<T>,
    target: &[[f64; 3]],
    fwd_idx: &[u32],
    bwd_idx: &[u32],
) -> Tensor<T> {
    let n = pred.rows;
    let m = target.len();
    let d2 = |pr: &[T], t: &[f64; 3]| -> T {
        let dx = pr[0] - T::from_f64(t[0]);
        let dy = pr[1] - T::from_f64(t[1]);
        let dz = pr[2] - T::from_f64(t[2]);
        dx * dx + dy * dy + dz * dz
    };
    let mut acc_fwd = T::zero();
    for i in 0..n {
        acc_fwd = acc_fwd + d2(pred.row(i), &target[fwd_idx[i] as usize]);
    }
    let mut acc_bwd = T::zero();
    for (j, t) in target.iter().enumerate() {
        acc_bwd = acc_bwd + d2(pred.row(bwd_idx[j] as usize), t);
    }
    let total = acc_fwd / T::from_f64(n as f64) + acc_bwd / T::from_f64(m as f64);
    Tensor::from_vec(1, 1, vec![total])
}

/// Rotation matrix of an axis-angle vector.
pub(crate) fn rodrigues(aa: &[f64; 3]) -> [[f64; 3]; 3] {
    let theta2 = aa[0] * aa[0] + aa[1] * aa[1] + aa[2] * aa[2];
    let theta = theta2.sqrt();
    let (a, b) = if theta < 1e-4 {
        (1.0 - theta2 / 6.0, 0.5 - theta2 / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta2)
    };
    let k = cross_matrix(aa);
    let k2 = mat_mul(&k, &k);
    let mut r = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            r[i][j] = if i == j { 1.0 } else { 0.0 } + a * k[i][j] + b * k2[i][j];
        }
    }
    r
}

/// Partial derivatives of the Rodrigues matrix w.r.t. each axis-angle
/// component.
pub(crate) fn rodrigues_grad(aa: &[f64; 3]) -> [[[f64; 3]; 3]; 3] {
    let theta2 = aa[0] * aa[0] + aa[1] * aa[1] + aa[2] * aa[2];
    let theta = theta2.sqrt();
    // a = sin/theta, b = (1-cos)/theta^2; the gradients need a'/theta and
    // b'/theta, which stay finite at zero.
    let (a, b, da_over_theta, db_over_theta) = if theta < 1e-4 {
        (
            1.0 - theta2 / 6.0,
            0.5 - theta2 / 24.0,
            -1.0 / 3.0 + theta2 / 30.0,
            -1.0 / 12.0 + theta2 / 180.0,
        )
    } else {
        let (s, c) = theta.sin_cos();
        let a = s / theta;
        let b = (1.0 - c) / theta2;
        let da = (theta * c - s) / theta2;
        let db = (theta * s - 2.0 * (1.0 - c)) / (theta2 * theta);
        (a, b, da / theta, db / theta)
    };
    let k = cross_matrix(aa);
    let k2 = mat_mul(&k, &k);
    let mut out = [[[0.0; 3]; 3]; 3];
    for axis in 0..3 {
        let mut e = [0.0; 3];
        e[axis] = 1.0;
        let ek = cross_matrix(&e);
        let ekk = mat_mul(&ek, &k);
        let kek = mat_mul(&k, &ek);
        let vk = aa[axis];
        for i in 0..3 {
            for j in 0..3 {
                out[axis][i][j] = da_over_theta * vk * k[i][j]
                    + a * ek[i][j]
                    + db_over_theta * vk * k2[i][j]
                    + b * (ekk[i][j] + kek[i][j]);
            }
        }
    }
    out
}

fn cross_matrix(v: &[f64; 3]) -> [[f64; 3]; 3] {
    [
        [0.0, -v[2], v[1]],
        [v[2], 0.0, -v[0]],
        [-v[1], v[0], 0.0],
    ]
}

fn mat_mul(a: &[[f64; 3]; 3], b: &[[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            for k in 0..3 {
                out[i][j] += a[i][k] * b[k][j];
            }
        }
    }
    out
}

pub(crate) fn rotate_forward<T: Scalar>(points: &Tensor<T>, r: &[[f64; 3]; 3]) -> Tensor<T> {
    let rt: Vec<T> = (0..3)
        .flat_map(|i| (0..3).map(move |j| (i, j)))
        .map(|(i, j)| T::from_f64(r[j][i])) // transposed for row-point form
        .collect();
    let rt = Tensor::from_vec(3, 3, rt);
    Tensor::matmul(points, &rt)
}

pub(crate) fn face_samples_forward<T: Scalar>(
    verts: &Tensor<T>,
    samples: &[([u32; 3], f64, f64)],
) -> Tensor<T> {
    let mut out = Tensor::zeros(samples.len(), 3);
    for (s, ([ia, ib, ic], u, v)) in samples.iter().enumerate() {
        let (u, v) = (T::from_f64(*u), T::from_f64(*v));
        let w = T::one() - u - v;
        let a = verts.row(*ia as usize);
        let b = verts.row(*ib as usize);
        let c = verts.row(*ic as usize);
        for k in 0..3 {
            out[(s, k)] = w * a[k] + u * b[k] + v * c[k];
        }
    }
    out
}

fn accumulate<T: Scalar>(
    tape: &Tape<T>,
    grads: &mut [Option<Tensor<T>>],
    v: Var,
    delta: Tensor<T>,
) {
    if !tape.nodes[v.0].requires_grad {
        return;
    }
    match &mut grads[v.0] {
        Some(g) => g.add_in_place(&delta),
        slot @ None => *slot = Some(delta),
    }
}

pub(crate) fn backward_op<T: Scalar>(
    tape: &Tape<T>,
    op: &Op,
    node: Var,
    grad: &Tensor<T>,
    grads: &mut [Option<Tensor<T>>],
) -> Result<()> {
    match op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let da = Tensor::matmul_nt(grad, tape.value(*b));
            let db = Tensor::matmul_tn(tape.value(*a), grad);
            accumulate(tape, grads, *a, da);
            accumulate(tape, grads, *b, db);
        }
        Op::Add(a, b) => {
            accumulate(tape, grads, *a, grad.clone());
            accumulate(tape, grads, *b, grad.clone());
        }
        Op::AddRow(a, row) => {
            accumulate(tape, grads, *a, grad.clone());
            let mut drow = Tensor::zeros(1, grad.cols);
            for r in 0..grad.rows {
                for c in 0..grad.cols {
                    drow.data[c] = drow.data[c] + grad[(r, c)];
                }
            }
            accumulate(tape, grads, *row, drow);
        }
        Op::Scale(a, f) => {
            let f = T::from_f64(*f);
            accumulate(tape, grads, *a, grad.map(|g| g * f));
        }
        Op::MulScalarVar(a, s) => {
            let sval = tape.value(*s).data[0];
            accumulate(tape, grads, *a, grad.map(|g| g * sval));
            let mut ds = T::zero();
            for (g, x) in grad.data.iter().zip(&tape.value(*a).data) {
                ds = ds + *g * *x;
            }
            accumulate(tape, grads, *s, Tensor::from_vec(1, 1, vec![ds]));
        }
        Op::Gelu(a) => {
            let x = tape.value(*a);
            let mut dx = grad.clone();
            for (g, xv) in dx.data.iter_mut().zip(&x.data) {
                *g = *g * gelu_grad(*xv);
            }
            accumulate(tape, grads, *a, dx);
        }
        Op::LayerNorm { x, gamma, beta } => {
            let xv = tape.value(*x);
            let gammav = tape.value(*gamma);
            let (rows, cols) = xv.shape();
            let inv_n = T::from_f64(1.0 / cols as f64);
            let eps = T::from_f64(LN_EPS);
            let mut dx = Tensor::zeros(rows, cols);
            let mut dgamma = Tensor::zeros(1, cols);
            let mut dbeta = Tensor::zeros(1, cols);
            for r in 0..rows {
                let row = xv.row(r);
                let mut mean = T::zero();
                for &v in row {
                    mean = mean + v;
                }
                mean = mean * inv_n;
                let mut var = T::zero();
                for &v in row {
                    let d = v - mean;
                    var = var + d * d;
                }
                var = var * inv_n;
                let inv_std = T::one() / (var + eps).sqrt();

                let mut mean_dxhat = T::zero();
                let mut mean_dxhat_xhat = T::zero();
                let mut xhat = vec![T::zero(); cols];
                let mut dxhat = vec![T::zero(); cols];
                for c in 0..cols {
                    xhat[c] = (row[c] - mean) * inv_std;
                    dxhat[c] = grad[(r, c)] * gammav.data[c];
                    mean_dxhat = mean_dxhat + dxhat[c];
                    mean_dxhat_xhat = mean_dxhat_xhat + dxhat[c] * xhat[c];
                    dgamma.data[c] = dgamma.data[c] + grad[(r, c)] * xhat[c];
                    dbeta.data[c] = dbeta.data[c] + grad[(r, c)];
                }
                mean_dxhat = mean_dxhat * inv_n;
                mean_dxhat_xhat = mean_dxhat_xhat * inv_n;
                for c in 0..cols {
                    dx[(r, c)] = inv_std * (dxhat[c] - mean_dxhat - xhat[c] * mean_dxhat_xhat);
                }
            }
            accumulate(tape, grads, *x, dx);
            accumulate(tape, grads, *gamma, dgamma);
            accumulate(tape, grads, *beta, dbeta);
        }
        Op::AttnSoftmax { q, k, scale } => {
            let p = tape.value(node); // softmax output
            let (rows, cols) = p.shape();
            // dZ = P o (g - rowsum(g o P))
            let mut dz = Tensor::zeros(rows, cols);
            for r in 0..rows {
                let mut dot = T::zero();
                for c in 0..cols {
                    dot = dot + grad[(r, c)] * p[(r, c)];
                }
                for c in 0..cols {
                    dz[(r, c)] = p[(r, c)] * (grad[(r, c)] - dot);
                }
            }
            let s = T::from_f64(*scale);
            let mut dq = Tensor::matmul(&dz, tape.value(*k));
            for v in dq.data.iter_mut() {
                *v = *v * s;
            }
            let mut dk = Tensor::matmul_tn(&dz, tape.value(*q));
            for v in dk.data.iter_mut() {
                *v = *v * s;
            }
            accumulate(tape, grads, *q, dq);
            accumulate(tape, grads, *k, dk);
        }
        Op::ConcatRows(a, b) => {
            let ra = tape.value(*a).rows;
            let cols = grad.cols;
            let da = Tensor::from_vec(ra, cols, grad.data[..ra * cols].to_vec());
            let db = Tensor::from_vec(grad.rows - ra, cols, grad.data[ra * cols..].to_vec());
            accumulate(tape, grads, *a, da);
            accumulate(tape, grads, *b, db);
        }
        Op::RepeatRows(a, times) => {
            let (ra, cols) = tape.value(*a).shape();
            let mut da = Tensor::zeros(ra, cols);
            for r in 0..ra {
                for t in 0..*times {
                    let src = grad.row(r * times + t);
                    let dst = da.row_mut(r);
                    for c in 0..cols {
                        dst[c] = dst[c] + src[c];
                    }
                }
            }
            accumulate(tape, grads, *a, da);
        }
        Op::TileRows(a, times) => {
            let (ra, cols) = tape.value(*a).shape();
            let mut da = Tensor::zeros(ra, cols);
            for t in 0..*times {
                for r in 0..ra {
                    let src = grad.row(t * ra + r);
                    let dst = da.row_mut(r);
                    for c in 0..cols {
                        dst[c] = dst[c] + src[c];
                    }
                }
            }
            accumulate(tape, grads, *a, da);
        }
        Op::Reshape(a) => {
            let (r, c) = tape.value(*a).shape();
            accumulate(tape, grads, *a, Tensor::from_vec(r, c, grad.data.clone()));
        }
        Op::SliceCols { a, start, len } => {
            let (ra, ca) = tape.value(*a).shape();
            let mut da = Tensor::zeros(ra, ca);
            for r in 0..ra {
                for c in 0..*len {
                    da[(r, start + c)] = grad[(r, c)];
                }
            }
            accumulate(tape, grads, *a, da);
        }
        Op::SliceRows { a, start, len } => {
            let (ra, ca) = tape.value(*a).shape();
            let mut da = Tensor::zeros(ra, ca);
            da.data[start * ca..(start + len) * ca].copy_from_slice(&grad.data);
            accumulate(tape, grads, *a, da);
        }
        Op::ChamferSq {
            pred,
            target,
            fwd_idx,
            bwd_idx,
        } => {
            let g = grad.data[0];
            let pv = tape.value(*pred);
            let n = pv.rows;
            let m = target.len();
            let wn = T::from_f64(2.0 / n as f64) * g;
            let wm = T::from_f64(2.0 / m as f64) * g;
            let mut dp = Tensor::zeros(n, 3);
            for i in 0..n {
                let t = &target[fwd_idx[i] as usize];
                for c in 0..3 {
                    dp[(i, c)] = dp[(i, c)] + wn * (pv[(i, c)] - T::from_f64(t[c]));
                }
            }
            for (j, t) in target.iter().enumerate() {
                let i = bwd_idx[j] as usize;
                for c in 0..3 {
                    dp[(i, c)] = dp[(i, c)] + wm * (pv[(i, c)] - T::from_f64(t[c]));
                }
            }
            accumulate(tape, grads, *pred, dp);
        }
        Op::RotatePoints { points, aa } => {
            let aav = tape.value(*aa);
            let aa_f64 = [
                aav.data[0].to_f64(),
                aav.data[1].to_f64(),
                aav.data[2].to_f64(),
            ];
            let r = rodrigues(&aa_f64);
            // Y = P R^T  =>  dP = dY R.
            let r_t: Vec<T> = (0..3)
                .flat_map(|i| (0..3).map(move |j| (i, j)))
                .map(|(i, j)| T::from_f64(r[i][j]))
                .collect();
            let r_mat = Tensor::from_vec(3, 3, r_t);
            let dp = Tensor::matmul(grad, &r_mat);
            accumulate(tape, grads, *points, dp);
            // dR_{rc} = sum_i dY_{i,r} P_{i,c}
            let pv = tape.value(*points);
            let mut dr = [[0.0f64; 3]; 3];
            for i in 0..pv.rows {
                for rr in 0..3 {
                    let gy = grad[(i, rr)].to_f64();
                    if gy != 0.0 {
                        for cc in 0..3 {
                            dr[rr][cc] += gy * pv[(i, cc)].to_f64();
                        }
                    }
                }
            }
            let dr_daa = rodrigues_grad(&aa_f64);
            let mut daa = Tensor::zeros(1, 3);
            for axis in 0..3 {
                let mut acc = 0.0;
                for rr in 0..3 {
                    for cc in 0..3 {
                        acc += dr[rr][cc] * dr_daa[axis][rr][cc];
                    }
                }
                daa.data[axis] = T::from_f64(acc);
            }
            accumulate(tape, grads, *aa, daa);
        }
        Op::FaceSamples { verts, samples } => {
            let (vr, _) = tape.value(*verts).shape();
            let mut dv = Tensor::zeros(vr, 3);
            for (s, ([ia, ib, ic], u, v)) in samples.iter().enumerate() {
                let (u, v) = (T::from_f64(*u), T::from_f64(*v));
                let w = T::one() - u - v;
                for c in 0..3 {
                    let g = grad[(s, c)];
                    dv[(*ia as usize, c)] = dv[(*ia as usize, c)] + w * g;
                    dv[(*ib as usize, c)] = dv[(*ib as usize, c)] + u * g;
                    dv[(*ic as usize, c)] = dv[(*ic as usize, c)] + v * g;
                }
            }
            accumulate(tape, grads, *verts, dv);
        }
        Op::MeanAll(a) => {
            let (r, c) = tape.value(*a).shape();
            let w = grad.data[0] / T::from_f64((r * c) as f64);
            accumulate(tape, grads, *a, Tensor::from_vec(r, c, vec![w; r * c]));
        }
    }
    Ok(())
}
