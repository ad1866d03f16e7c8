//! Differentiable primitives.
//!
//! Every op computes its forward value eagerly and, when any input is
//! tracked, records a backward closure on the shared tape. Gradients are
//! exact reverse-mode accumulation; broadcasting follows the usual
//! right-aligned rules with sum-reduction on the way back.

use std::rc::Rc;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autodiff::matmul::{gemm, Layout};
use crate::autodiff::tape::Tape;
use crate::autodiff::tensor::{NodeRef, Tensor};
use crate::error::{Error, Result};

/// Probability clamp inside the cross-entropy loss.
pub const BCE_CLAMP: f64 = 1e-12;

fn check_finite(op: &'static str, values: &[f64]) -> Result<()> {
    if cfg!(debug_assertions) && values.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric(format!("non-finite value produced by `{op}`")));
    }
    Ok(())
}

fn tape_for(op: &'static str, inputs: &[&Tensor]) -> Result<Option<Tape>> {
    let mut found: Option<Tape> = None;
    for t in inputs {
        if let Some(node) = t.node() {
            match &found {
                None => found = Some(node.tape.clone()),
                Some(tape) => {
                    if !tape.same_tape(&node.tape) {
                        return Err(Error::Contract(format!(
                            "`{op}` received tensors from different tapes"
                        )));
                    }
                }
            }
        }
    }
    Ok(found)
}

fn node_id(t: &Tensor) -> Option<usize> {
    t.node().map(|n| n.id)
}

// ---------------------------------------------------------------------------
// Broadcasting
// ---------------------------------------------------------------------------

/// Right-aligned broadcast plan between two shapes.
#[derive(Clone)]
struct Broadcast {
    out_shape: Vec<usize>,
    a_stride: Vec<usize>,
    b_stride: Vec<usize>,
    len: usize,
    same_shape: bool,
}

impl Broadcast {
    fn new(op: &'static str, a: &[usize], b: &[usize]) -> Result<Self> {
        let nd = a.len().max(b.len());
        let dim = |s: &[usize], i: usize| {
            let pad = nd - s.len();
            if i < pad {
                1
            } else {
                s[i - pad]
            }
        };
        let mut out_shape = vec![0usize; nd];
        for i in 0..nd {
            let (ad, bd) = (dim(a, i), dim(b, i));
            if ad != bd && ad != 1 && bd != 1 {
                return Err(Error::shape(
                    op,
                    format!("cannot broadcast {:?} with {:?}", a, b),
                ));
            }
            out_shape[i] = ad.max(bd);
        }
        let strides_of = |s: &[usize]| {
            let mut st = vec![0usize; nd];
            let mut acc = 1usize;
            for i in (0..nd).rev() {
                let d = dim(s, i);
                st[i] = if d == 1 && out_shape[i] != 1 { 0 } else { acc };
                acc *= d;
            }
            st
        };
        let a_stride = strides_of(a);
        let b_stride = strides_of(b);
        let len = out_shape.iter().product();
        let same_shape = a == b;
        Ok(Broadcast {
            out_shape,
            a_stride,
            b_stride,
            len,
            same_shape,
        })
    }

    /// Visit `(out_index, a_offset, b_offset)` for every output element.
    fn for_each(&self, mut f: impl FnMut(usize, usize, usize)) {
        if self.same_shape {
            for i in 0..self.len {
                f(i, i, i);
            }
            return;
        }
        let nd = self.out_shape.len();
        let mut idx = vec![0usize; nd];
        let (mut ai, mut bi) = (0usize, 0usize);
        for oi in 0..self.len {
            f(oi, ai, bi);
            for d in (0..nd).rev() {
                idx[d] += 1;
                ai += self.a_stride[d];
                bi += self.b_stride[d];
                if idx[d] < self.out_shape[d] {
                    break;
                }
                idx[d] = 0;
                ai -= self.a_stride[d] * self.out_shape[d];
                bi -= self.b_stride[d] * self.out_shape[d];
            }
        }
    }
}

fn binary_forward(bc: &Broadcast, a: &[f64], b: &[f64], f: impl Fn(f64, f64) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; bc.len];
    bc.for_each(|oi, ai, bi| out[oi] = f(a[ai], b[bi]));
    out
}

macro_rules! record_if_tracked {
    ($tape:expr, $len:expr, $back:expr) => {
        match $tape {
            None => None,
            Some(tape) => {
                let id = tape.record($len, Some(Box::new($back)));
                Some(NodeRef { tape, id })
            }
        }
    };
}

// ---------------------------------------------------------------------------
// Elementwise binary ops
// ---------------------------------------------------------------------------

/// Broadcasting addition.
pub fn add(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let bc = Broadcast::new("add", a.shape(), b.shape())?;
    let out = binary_forward(&bc, a.values(), b.values(), |x, y| x + y);
    check_finite("add", &out)?;
    let (a_id, b_id) = (node_id(a), node_id(b));
    let bc_back = bc.clone();
    let node = record_if_tracked!(tape_for("add", &[a, b])?, out.len(), move |g: &[f64], table: &mut _| {
        if let Some(id) = a_id {
            let slot = table.slot_mut(id);
            bc_back.for_each(|oi, ai, _| slot[ai] += g[oi]);
        }
        if let Some(id) = b_id {
            let slot = table.slot_mut(id);
            bc_back.for_each(|oi, _, bi| slot[bi] += g[oi]);
        }
    });
    Ok(Tensor::from_parts(bc.out_shape, Rc::new(out), node))
}

/// Broadcasting subtraction.
pub fn sub(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let bc = Broadcast::new("sub", a.shape(), b.shape())?;
    let out = binary_forward(&bc, a.values(), b.values(), |x, y| x - y);
    check_finite("sub", &out)?;
    let (a_id, b_id) = (node_id(a), node_id(b));
    let bc_back = bc.clone();
    let node = record_if_tracked!(tape_for("sub", &[a, b])?, out.len(), move |g: &[f64], table: &mut _| {
        if let Some(id) = a_id {
            let slot = table.slot_mut(id);
            bc_back.for_each(|oi, ai, _| slot[ai] += g[oi]);
        }
        if let Some(id) = b_id {
            let slot = table.slot_mut(id);
            bc_back.for_each(|oi, _, bi| slot[bi] -= g[oi]);
        }
    });
    Ok(Tensor::from_parts(bc.out_shape, Rc::new(out), node))
}

/// Broadcasting elementwise product.
pub fn mul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let bc = Broadcast::new("mul", a.shape(), b.shape())?;
    let out = binary_forward(&bc, a.values(), b.values(), |x, y| x * y);
    check_finite("mul", &out)?;
    let (a_id, b_id) = (node_id(a), node_id(b));
    let (ad, bd) = (a.data_rc(), b.data_rc());
    let bc_back = bc.clone();
    let node = record_if_tracked!(tape_for("mul", &[a, b])?, out.len(), move |g: &[f64], table: &mut _| {
        if let Some(id) = a_id {
            let slot = table.slot_mut(id);
            bc_back.for_each(|oi, ai, bi| slot[ai] += g[oi] * bd[bi]);
        }
        if let Some(id) = b_id {
            let slot = table.slot_mut(id);
            bc_back.for_each(|oi, ai, bi| slot[bi] += g[oi] * ad[ai]);
        }
    });
    Ok(Tensor::from_parts(bc.out_shape, Rc::new(out), node))
}

/// Multiply by a constant scalar.
pub fn scale(x: &Tensor, c: f64) -> Result<Tensor> {
    let out: Vec<f64> = x.values().iter().map(|v| v * c).collect();
    check_finite("scale", &out)?;
    let x_id = node_id(x);
    let node = record_if_tracked!(tape_for("scale", &[x])?, out.len(), move |g: &[f64], table: &mut _| {
        if let Some(id) = x_id {
            let slot = table.slot_mut(id);
            for (s, gv) in slot.iter_mut().zip(g) {
                *s += c * gv;
            }
        }
    });
    Ok(Tensor::from_parts(x.shape().to_vec(), Rc::new(out), node))
}

// ---------------------------------------------------------------------------
// Matrix multiplication
// ---------------------------------------------------------------------------

/// Matrix product.
///
/// Accepted shapes: `(m,k) @ (k,n)`, `(...,m,k) @ (k,n)` (leading dims
/// folded into rows), and `(...,m,k) @ (...,k,n)` with identical leading
/// dims (batched).
pub fn matmul(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    let (ashape, bshape) = (a.shape(), b.shape());
    if ashape.len() < 2 || bshape.len() < 2 {
        return Err(Error::shape(
            "matmul",
            format!("inputs must be at least 2-D, got {:?} and {:?}", ashape, bshape),
        ));
    }
    let (m, k) = (ashape[ashape.len() - 2], ashape[ashape.len() - 1]);
    let (k2, n) = (bshape[bshape.len() - 2], bshape[bshape.len() - 1]);
    if k != k2 {
        return Err(Error::shape(
            "matmul",
            format!("inner dimensions disagree: {:?} @ {:?}", ashape, bshape),
        ));
    }
    let a_lead = &ashape[..ashape.len() - 2];
    let b_lead = &bshape[..bshape.len() - 2];

    let batched = if b_lead.is_empty() {
        false
    } else if a_lead == b_lead {
        true
    } else {
        return Err(Error::shape(
            "matmul",
            format!("leading dimensions disagree: {:?} @ {:?}", ashape, bshape),
        ));
    };

    let batch: usize = a_lead.iter().product::<usize>().max(1);
    let mut out_shape: Vec<usize> = a_lead.to_vec();
    out_shape.push(m);
    out_shape.push(n);
    let mut out = vec![0.0; batch * m * n];

    let (ad, bd) = (a.values(), b.values());
    if batched {
        for i in 0..batch {
            gemm(
                1.0,
                &ad[i * m * k..(i + 1) * m * k],
                m,
                k,
                Layout::RowMajor,
                &bd[i * k * n..(i + 1) * k * n],
                k,
                n,
                Layout::RowMajor,
                0.0,
                &mut out[i * m * n..(i + 1) * m * n],
            );
        }
    } else {
        gemm(
            1.0,
            ad,
            batch * m,
            k,
            Layout::RowMajor,
            bd,
            k,
            n,
            Layout::RowMajor,
            0.0,
            &mut out,
        );
    }
    check_finite("matmul", &out)?;

    let (a_id, b_id) = (node_id(a), node_id(b));
    let (a_data, b_data) = (a.data_rc(), b.data_rc());
    let node = record_if_tracked!(tape_for("matmul", &[a, b])?, out.len(), move |g: &[f64], table: &mut _| {
        if batched {
            if let Some(id) = a_id {
                let slot = table.slot_mut(id);
                for i in 0..batch {
                    gemm(
                        1.0,
                        &g[i * m * n..(i + 1) * m * n],
                        m,
                        n,
                        Layout::RowMajor,
                        &b_data[i * k * n..(i + 1) * k * n],
                        k,
                        n,
                        Layout::Transposed,
                        1.0,
                        &mut slot[i * m * k..(i + 1) * m * k],
                    );
                }
            }
            if let Some(id) = b_id {
                let slot = table.slot_mut(id);
                for i in 0..batch {
                    gemm(
                        1.0,
                        &a_data[i * m * k..(i + 1) * m * k],
                        m,
                        k,
                        Layout::Transposed,
                        &g[i * m * n..(i + 1) * m * n],
                        m,
                        n,
                        Layout::RowMajor,
                        1.0,
                        &mut slot[i * k * n..(i + 1) * k * n],
                    );
                }
            }
        } else {
            let rows = batch * m;
            if let Some(id) = a_id {
                gemm(
                    1.0,
                    g,
                    rows,
                    n,
                    Layout::RowMajor,
                    &b_data,
                    k,
                    n,
                    Layout::Transposed,
                    1.0,
                    table.slot_mut(id),
                );
            }
            if let Some(id) = b_id {
                gemm(
                    1.0,
                    &a_data,
                    rows,
                    k,
                    Layout::Transposed,
                    g,
                    rows,
                    n,
                    Layout::RowMajor,
                    1.0,
                    table.slot_mut(id),
                );
            }
        }
    });
    Ok(Tensor::from_parts(out_shape, Rc::new(out), node))
}

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

fn stable_sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Logistic sigmoid.
pub fn sigmoid(x: &Tensor) -> Result<Tensor> {
    let out: Vec<f64> = x.values().iter().map(|&v| stable_sigmoid(v)).collect();
    let out = Rc::new(out);
    let x_id = node_id(x);
    let out_back = Rc::clone(&out);
    let node = record_if_tracked!(tape_for("sigmoid", &[x])?, out.len(), move |g: &[f64], table: &mut _| {
        if let Some(id) = x_id {
            let slot = table.slot_mut(id);
            for i in 0..g.len() {
                let o = out_back[i];
                slot[i] += g[i] * o * (1.0 - o);
            }
        }
    });
    Ok(Tensor::from_parts(x.shape().to_vec(), out, node))
}

/// Hyperbolic tangent.
pub fn tanh(x: &Tensor) -> Result<Tensor> {
    let out: Vec<f64> = x.values().iter().map(|v| v.tanh()).collect();
    let out = Rc::new(out);
    let x_id = node_id(x);
    let out_back = Rc::clone(&out);
    let node = record_if_tracked!(tape_for("tanh", &[x])?, out.len(), move |g: &[f64], table: &mut _| {
        if let Some(id) = x_id {
            let slot = table.slot_mut(id);
            for i in 0..g.len() {
                let o = out_back[i];
                slot[i] += g[i] * (1.0 - o * o);
            }
        }
    });
    Ok(Tensor::from_parts(x.shape().to_vec(), out, node))
}

/// Rectified linear unit.
pub fn relu(x: &Tensor) -> Result<Tensor> {
    let out: Vec<f64> = x.values().iter().map(|v| v.max(0.0)).collect();
    let x_id = node_id(x);
    let x_data = x.data_rc();
    let node = record_if_tracked!(tape_for("relu", &[x])?, out.len(), move |g: &[f64], table: &mut _| {
        if let Some(id) = x_id {
            let slot = table.slot_mut(id);
            for i in 0..g.len() {
                if x_data[i] > 0.0 {
                    slot[i] += g[i];
                }
            }
        }
    });
    Ok(Tensor::from_parts(x.shape().to_vec(), Rc::new(out), node))
}

// ---------------------------------------------------------------------------
// Softmax
// ---------------------------------------------------------------------------

/// Softmax over the last axis after adding a broadcastable additive bias.
///
/// Masking uses a large negative bias entry rather than post-hoc zeroing,
/// so masked probabilities underflow to ~0 while rows still sum to 1.
pub fn softmax_with_bias(logits: &Tensor, bias: &Tensor) -> Result<Tensor> {
    softmax_impl(logits, Some(bias))
}

/// Softmax over the last axis.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    softmax_impl(logits, None)
}

/// Per-row bias mapping for a bias broadcast against `logits`: the value
/// offset of the bias row backing each logits row, plus the row length
/// (`n` when the bias keeps the last axis, 0 when it broadcasts a single
/// value along it).
fn bias_row_plan(
    logits_shape: &[usize],
    bias_shape: &[usize],
    n: usize,
) -> Result<(Vec<usize>, usize)> {
    let bc = Broadcast::new("softmax_with_bias", logits_shape, bias_shape)?;
    if bc.out_shape != logits_shape {
        return Err(Error::shape(
            "softmax_with_bias",
            format!("bias {bias_shape:?} must broadcast to logits {logits_shape:?}"),
        ));
    }
    // Last-axis stride is 1 when the bias carries the axis, 0 when it
    // broadcasts across it.
    let row_len = if *bc.b_stride.last().unwrap() == 1 { n } else { 0 };
    let bias_last = bias_shape.last().copied().unwrap_or(1);
    let row_bc = Broadcast::new(
        "softmax_with_bias",
        &logits_shape[..logits_shape.len() - 1],
        &bias_shape[..bias_shape.len().saturating_sub(1)],
    )?;
    let n_rows: usize = logits_shape[..logits_shape.len() - 1].iter().product::<usize>().max(1);
    let mut offsets = vec![0usize; n_rows];
    row_bc.for_each(|oi, _, bi| offsets[oi] = bi * bias_last);
    Ok((offsets, row_len))
}

fn softmax_impl(logits: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    if logits.ndim() == 0 {
        return Err(Error::shape("softmax_with_bias", "logits must have rank >= 1".to_string()));
    }
    let n = *logits.shape().last().unwrap();
    let rows = logits.len() / n;

    let plan = match bias {
        Some(b) => Some(bias_row_plan(logits.shape(), b.shape(), n)?),
        None => None,
    };

    let ld = logits.values();
    let mut out = vec![0.0; logits.len()];
    {
        let bd = bias.map(|b| b.values());
        for r in 0..rows {
            let row_in = &ld[r * n..(r + 1) * n];
            let row_out = &mut out[r * n..(r + 1) * n];
            match (&plan, bd) {
                (Some((offsets, row_len)), Some(bd)) => {
                    let base = offsets[r];
                    if *row_len == 0 {
                        let bval = bd[base];
                        for (o, &v) in row_out.iter_mut().zip(row_in) {
                            *o = v + bval;
                        }
                    } else {
                        for ((o, &v), &bv) in
                            row_out.iter_mut().zip(row_in).zip(&bd[base..base + n])
                        {
                            *o = v + bv;
                        }
                    }
                }
                _ => row_out.copy_from_slice(row_in),
            }
            let m = row_out.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut sum = 0.0;
            for o in row_out.iter_mut() {
                *o = (*o - m).exp();
                sum += *o;
            }
            let inv = 1.0 / sum;
            for o in row_out.iter_mut() {
                *o *= inv;
            }
        }
    }
    check_finite("softmax_with_bias", &out)?;

    let out = Rc::new(out);
    let inputs: Vec<&Tensor> = match bias {
        Some(b) => vec![logits, b],
        None => vec![logits],
    };
    let l_id = node_id(logits);
    let b_id = bias.and_then(node_id);
    let probs = Rc::clone(&out);
    let node = record_if_tracked!(tape_for("softmax_with_bias", &inputs)?, out.len(), move |g: &[f64], table: &mut _| {
        // dz = p * (g - <g, p>) per row; dz flows to both logits and bias.
        // Rows are processed cache-resident; dz is written straight into
        // the logits slot when it is tracked.
        let mut dz_row = vec![0.0; n];
        for r in 0..rows {
            let span = r * n..(r + 1) * n;
            let p = &probs[span.clone()];
            let gr = &g[span.clone()];
            let dot: f64 = p.iter().zip(gr).map(|(pv, gv)| pv * gv).sum();
            for ((d, &pv), &gv) in dz_row.iter_mut().zip(p).zip(gr) {
                *d = pv * (gv - dot);
            }
            if let Some(id) = l_id {
                let slot = table.slot_mut(id);
                for (s, &d) in slot[span.clone()].iter_mut().zip(&dz_row) {
                    *s += d;
                }
            }
            if let Some(id) = b_id {
                let (offsets, row_len) = plan.as_ref().expect("bias id implies plan");
                let slot = table.slot_mut(id);
                let base = offsets[r];
                if *row_len == 0 {
                    slot[base] += dz_row.iter().sum::<f64>();
                } else {
                    for (s, &d) in slot[base..base + n].iter_mut().zip(&dz_row) {
                        *s += d;
                    }
                }
            }
        }
    });
    Ok(Tensor::from_parts(logits.shape().to_vec(), out, node))
}

// ---------------------------------------------------------------------------
// Dropout
// ---------------------------------------------------------------------------

/// Inverted dropout: at train time each element is zeroed with probability
/// `rate` and survivors are scaled by `1/(1-rate)`; in eval mode this is the
/// identity, gradients included.
pub fn dropout(x: &Tensor, rate: f64, training: bool, rng: &mut ChaCha8Rng) -> Result<Tensor> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::Domain(format!("dropout rate {rate} must be in [0, 1)")));
    }
    if !training || rate == 0.0 {
        return Ok(x.clone());
    }
    let keep = 1.0 - rate;
    let inv = 1.0 / keep;
    let mask: Vec<f64> = (0..x.len())
        .map(|_| if rng.gen::<f64>() < rate { 0.0 } else { inv })
        .collect();
    let out: Vec<f64> = x.values().iter().zip(&mask).map(|(v, m)| v * m).collect();
    let x_id = node_id(x);
    let node = record_if_tracked!(tape_for("dropout", &[x])?, out.len(), move |g: &[f64], table: &mut _| {
        if let Some(id) = x_id {
            let slot = table.slot_mut(id);
            for i in 0..g.len() {
                slot[i] += g[i] * mask[i];
            }
        }
    });
    Ok(Tensor::from_parts(x.shape().to_vec(), Rc::new(out), node))
}

// ---------------------------------------------------------------------------
// Causal dilated convolution
// ---------------------------------------------------------------------------

/// 1-D causal dilated convolution.
///
/// `x` is `(batch, time, c_in)`, `kernel` is `(k, c_in, c_out)`; tap `k`
/// reads the input `dilation * k` steps in the past, with implicit left
/// zero-padding, so the output at time `t` depends only on inputs at
/// times `<= t`.
pub fn causal_dilated_conv1d(x: &Tensor, kernel: &Tensor, dilation: usize) -> Result<Tensor> {
    if dilation < 1 {
        return Err(Error::Domain("conv dilation must be >= 1".into()));
    }
    if x.ndim() != 3 || kernel.ndim() != 3 {
        return Err(Error::shape(
            "causal_dilated_conv1d",
            format!(
                "expected x (batch,time,c_in) and kernel (k,c_in,c_out), got {:?} and {:?}",
                x.shape(),
                kernel.shape()
            ),
        ));
    }
    let (b, t, c_in) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let (k, kc_in, c_out) = (kernel.shape()[0], kernel.shape()[1], kernel.shape()[2]);
    if kc_in != c_in {
        return Err(Error::shape(
            "causal_dilated_conv1d",
            format!("kernel expects {kc_in} input channels, x has {c_in}"),
        ));
    }

    // im2col: row (b*t) holds [x[b, t - d*0, :], x[b, t - d*1, :], ...].
    let xd = x.values();
    let mut col = vec![0.0; b * t * k * c_in];
    for bi in 0..b {
        for ti in 0..t {
            let row = (bi * t + ti) * k * c_in;
            for ki in 0..k {
                let lag = dilation * ki;
                if lag > ti {
                    continue;
                }
                let src = (bi * t + (ti - lag)) * c_in;
                col[row + ki * c_in..row + (ki + 1) * c_in]
                    .copy_from_slice(&xd[src..src + c_in]);
            }
        }
    }
    let col = Rc::new(col);

    let mut out = vec![0.0; b * t * c_out];
    gemm(
        1.0,
        &col,
        b * t,
        k * c_in,
        Layout::RowMajor,
        kernel.values(),
        k * c_in,
        c_out,
        Layout::RowMajor,
        0.0,
        &mut out,
    );
    check_finite("causal_dilated_conv1d", &out)?;

    let (x_id, k_id) = (node_id(x), node_id(kernel));
    let kernel_data = kernel.data_rc();
    let col_back = Rc::clone(&col);
    let node = record_if_tracked!(tape_for("causal_dilated_conv1d", &[x, kernel])?, out.len(), move |g: &[f64], table: &mut _| {
        if let Some(id) = k_id {
            gemm(
                1.0,
                &col_back,
                b * t,
                k * c_in,
                Layout::Transposed,
                g,
                b * t,
                c_out,
                Layout::RowMajor,
                1.0,
                table.slot_mut(id),
            );
        }
        if let Some(id) = x_id {
            let mut dcol = vec![0.0; b * t * k * c_in];
            gemm(
                1.0,
                g,
                b * t,
                c_out,
                Layout::RowMajor,
                &kernel_data,
                k * c_in,
                c_out,
                Layout::Transposed,
                0.0,
                &mut dcol,
            );
            let slot = table.slot_mut(id);
            for bi in 0..b {
                for ti in 0..t {
                    let row = (bi * t + ti) * k * c_in;
                    for ki in 0..k {
                        let lag = dilation * ki;
                        if lag > ti {
                            continue;
                        }
                        let dst = (bi * t + (ti - lag)) * c_in;
                        for c in 0..c_in {
                            slot[dst + c] += dcol[row + ki * c_in + c];
                        }
                    }
                }
            }
        }
    });
    Ok(Tensor::from_parts(vec![b, t, c_out], Rc::new(out), node))
}

// ---------------------------------------------------------------------------
// Structural ops
// ---------------------------------------------------------------------------

fn split_at_axis(shape: &[usize], axis: usize) -> (usize, usize) {
    let outer: usize = shape[..axis].iter().product();
    let inner: usize = shape[axis + 1..].iter().product();
    (outer, inner)
}

/// Concatenate along `axis`; all other dimensions must match.
pub fn concat(inputs: &[&Tensor], axis: usize) -> Result<Tensor> {
    if inputs.is_empty() {
        return Err(Error::shape("concat", "no inputs".to_string()));
    }
    let first = inputs[0].shape();
    if axis >= first.len() {
        return Err(Error::shape("concat", format!("axis {axis} out of range for {:?}", first)));
    }
    for t in inputs {
        if t.ndim() != first.len()
            || t.shape()
                .iter()
                .enumerate()
                .any(|(i, &d)| i != axis && d != first[i])
        {
            return Err(Error::shape(
                "concat",
                format!("incompatible shapes {:?} and {:?}", first, t.shape()),
            ));
        }
    }
    let axis_total: usize = inputs.iter().map(|t| t.shape()[axis]).sum();
    let mut out_shape = first.to_vec();
    out_shape[axis] = axis_total;
    let (outer, inner) = split_at_axis(&out_shape, axis);

    let mut out = vec![0.0; outer * axis_total * inner];
    let mut offset = 0;
    for t in inputs {
        let a = t.shape()[axis];
        let td = t.values();
        for o in 0..outer {
            let src = o * a * inner;
            let dst = (o * axis_total + offset) * inner;
            out[dst..dst + a * inner].copy_from_slice(&td[src..src + a * inner]);
        }
        offset += a;
    }

    let ids: Vec<Option<usize>> = inputs.iter().map(|t| node_id(t)).collect();
    let axis_lens: Vec<usize> = inputs.iter().map(|t| t.shape()[axis]).collect();
    let node = record_if_tracked!(tape_for("concat", inputs)?, out.len(), move |g: &[f64], table: &mut _| {
        let mut offset = 0;
        for (id, &a) in ids.iter().zip(&axis_lens) {
            if let Some(id) = id {
                let slot = table.slot_mut(*id);
                for o in 0..outer {
                    let dst = o * a * inner;
                    let src = (o * axis_total + offset) * inner;
                    for i in 0..a * inner {
                        slot[dst + i] += g[src + i];
                    }
                }
            }
            offset += a;
        }
    });
    Ok(Tensor::from_parts(out_shape, Rc::new(out), node))
}

/// Contiguous slice of length `len` starting at `start` along `axis`.
pub fn narrow(x: &Tensor, axis: usize, start: usize, len: usize) -> Result<Tensor> {
    let shape = x.shape();
    if axis >= shape.len() || start + len > shape[axis] {
        return Err(Error::shape(
            "narrow",
            format!("slice {start}..{} out of range on axis {axis} of {:?}", start + len, shape),
        ));
    }
    let (outer, inner) = split_at_axis(shape, axis);
    let a = shape[axis];
    let mut out_shape = shape.to_vec();
    out_shape[axis] = len;

    let xd = x.values();
    let mut out = vec![0.0; outer * len * inner];
    for o in 0..outer {
        let src = (o * a + start) * inner;
        let dst = o * len * inner;
        out[dst..dst + len * inner].copy_from_slice(&xd[src..src + len * inner]);
    }

    let x_id = node_id(x);
    let node = record_if_tracked!(tape_for("narrow", &[x])?, out.len(), move |g: &[f64], table: &mut _| {
        if let Some(id) = x_id {
            let slot = table.slot_mut(id);
            for o in 0..outer {
                let dst = (o * a + start) * inner;
                let src = o * len * inner;
                for i in 0..len * inner {
                    slot[dst + i] += g[src + i];
                }
            }
        }
    });
    Ok(Tensor::from_parts(out_shape, Rc::new(out), node))
}

/// Reinterpret the value buffer under a new shape (no copy).
pub fn reshape(x: &Tensor, new_shape: Vec<usize>) -> Result<Tensor> {
    let expected: usize = new_shape.iter().product();
    if expected != x.len() {
        return Err(Error::shape(
            "reshape",
            format!("cannot reshape {:?} into {:?}", x.shape(), new_shape),
        ));
    }
    let x_id = node_id(x);
    let node = record_if_tracked!(tape_for("reshape", &[x])?, x.len(), move |g: &[f64], table: &mut _| {
        if let Some(id) = x_id {
            let slot = table.slot_mut(id);
            for (s, gv) in slot.iter_mut().zip(g) {
                *s += gv;
            }
        }
    });
    Ok(Tensor::from_parts(new_shape, x.data_rc(), node))
}

/// Reorder axes: output axis `i` is input axis `perm[i]`.
pub fn permute(x: &Tensor, perm: &[usize]) -> Result<Tensor> {
    let nd = x.ndim();
    let mut seen = vec![false; nd];
    if perm.len() != nd || perm.iter().any(|&p| p >= nd || std::mem::replace(&mut seen[p], true)) {
        return Err(Error::shape(
            "permute",
            format!("{:?} is not a permutation of 0..{nd}", perm),
        ));
    }
    let shape = x.shape();
    let mut in_strides = vec![1usize; nd];
    for i in (0..nd.saturating_sub(1)).rev() {
        in_strides[i] = in_strides[i + 1] * shape[i + 1];
    }
    let out_shape: Vec<usize> = perm.iter().map(|&p| shape[p]).collect();
    let mapped_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();

    let xd = x.values();
    let mut out = vec![0.0; x.len()];
    let mut offsets = vec![0usize; x.len()];
    walk_strided(&out_shape, &mapped_strides, |oi, src| {
        out[oi] = xd[src];
        offsets[oi] = src;
    });

    let x_id = node_id(x);
    let node = record_if_tracked!(tape_for("permute", &[x])?, out.len(), move |g: &[f64], table: &mut _| {
        if let Some(id) = x_id {
            let slot = table.slot_mut(id);
            for (gi, &src) in g.iter().zip(&offsets) {
                slot[src] += gi;
            }
        }
    });
    Ok(Tensor::from_parts(out_shape, Rc::new(out), node))
}

fn walk_strided(out_shape: &[usize], strides: &[usize], mut f: impl FnMut(usize, usize)) {
    let len: usize = out_shape.iter().product();
    let nd = out_shape.len();
    let mut idx = vec![0usize; nd];
    let mut src = 0usize;
    for oi in 0..len {
        f(oi, src);
        for d in (0..nd).rev() {
            idx[d] += 1;
            src += strides[d];
            if idx[d] < out_shape[d] {
                break;
            }
            idx[d] = 0;
            src -= strides[d] * out_shape[d];
        }
    }
}

// ---------------------------------------------------------------------------
// Reductions
// ---------------------------------------------------------------------------

/// Mean over one axis (the axis is removed).
pub fn mean_pool(x: &Tensor, axis: usize) -> Result<Tensor> {
    pool(x, axis, true)
}

/// Sum over one axis (the axis is removed).
pub fn sum_pool(x: &Tensor, axis: usize) -> Result<Tensor> {
    pool(x, axis, false)
}

fn pool(x: &Tensor, axis: usize, mean: bool) -> Result<Tensor> {
    let shape = x.shape();
    if axis >= shape.len() {
        return Err(Error::shape(
            "mean_pool",
            format!("axis {axis} out of range for {:?}", shape),
        ));
    }
    let (outer, inner) = split_at_axis(shape, axis);
    let a = shape[axis];
    let w = if mean { 1.0 / a as f64 } else { 1.0 };
    let mut out_shape = shape.to_vec();
    out_shape.remove(axis);

    let xd = x.values();
    let mut out = vec![0.0; outer * inner];
    for o in 0..outer {
        for j in 0..a {
            let src = (o * a + j) * inner;
            let dst = o * inner;
            for i in 0..inner {
                out[dst + i] += xd[src + i];
            }
        }
    }
    if mean {
        for v in out.iter_mut() {
            *v *= w;
        }
    }

    let x_id = node_id(x);
    let node = record_if_tracked!(tape_for("mean_pool", &[x])?, out.len(), move |g: &[f64], table: &mut _| {
        if let Some(id) = x_id {
            let slot = table.slot_mut(id);
            for o in 0..outer {
                for j in 0..a {
                    let dst = (o * a + j) * inner;
                    let src = o * inner;
                    for i in 0..inner {
                        slot[dst + i] += g[src + i] * w;
                    }
                }
            }
        }
    });
    Ok(Tensor::from_parts(out_shape, Rc::new(out), node))
}

// ---------------------------------------------------------------------------
// Loss
// ---------------------------------------------------------------------------

/// Mean binary cross-entropy between predicted probabilities and labels.
///
/// Probabilities are clamped to `[BCE_CLAMP, 1 - BCE_CLAMP]` before the
/// logs; gradients are zero where the clamp is active. Returns a rank-0
/// tensor.
pub fn binary_cross_entropy(probs: &Tensor, labels: &Tensor) -> Result<Tensor> {
    if probs.shape() != labels.shape() {
        return Err(Error::shape(
            "binary_cross_entropy",
            format!("probs {:?} vs labels {:?}", probs.shape(), labels.shape()),
        ));
    }
    if probs.is_empty() {
        return Err(Error::shape("binary_cross_entropy", "empty input".to_string()));
    }
    let n = probs.len() as f64;
    let lo = BCE_CLAMP;
    let hi = 1.0 - BCE_CLAMP;
    let mut total = 0.0;
    for (&p, &y) in probs.values().iter().zip(labels.values()) {
        let pc = p.clamp(lo, hi);
        total += -(y * pc.ln() + (1.0 - y) * (1.0 - pc).ln());
    }
    let loss = total / n;
    if !loss.is_finite() {
        return Err(Error::Numeric("non-finite binary cross-entropy".into()));
    }

    let (p_id, y_id) = (node_id(probs), node_id(labels));
    let (pd, yd) = (probs.data_rc(), labels.data_rc());
    let node = record_if_tracked!(tape_for("binary_cross_entropy", &[probs, labels])?, 1, move |g: &[f64], table: &mut _| {
        let g0 = g[0] / n;
        if let Some(id) = p_id {
            let slot = table.slot_mut(id);
            for i in 0..pd.len() {
                let p = pd[i];
                if p > lo && p < hi {
                    slot[i] += g0 * (p - yd[i]) / (p * (1.0 - p));
                }
            }
        }
        if let Some(id) = y_id {
            let slot = table.slot_mut(id);
            for i in 0..pd.len() {
                let pc = pd[i].clamp(lo, hi);
                slot[i] += g0 * ((1.0 - pc).ln() - pc.ln());
            }
        }
    });
    Ok(Tensor::from_parts(Vec::new(), Rc::new(vec![loss]), node))
}

// ---------------------------------------------------------------------------
// Method sugar
// ---------------------------------------------------------------------------

impl Tensor {
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        add(self, other)
    }
    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        sub(self, other)
    }
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        mul(self, other)
    }
    pub fn scale(&self, c: f64) -> Result<Tensor> {
        scale(self, c)
    }
    pub fn matmul(&self, other: &Tensor) -> Result<Tensor> {
        matmul(self, other)
    }
    pub fn sigmoid(&self) -> Result<Tensor> {
        sigmoid(self)
    }
    pub fn tanh(&self) -> Result<Tensor> {
        tanh(self)
    }
    pub fn relu(&self) -> Result<Tensor> {
        relu(self)
    }
    pub fn softmax(&self) -> Result<Tensor> {
        softmax(self)
    }
    pub fn softmax_with_bias(&self, bias: &Tensor) -> Result<Tensor> {
        softmax_with_bias(self, bias)
    }
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        narrow(self, axis, start, len)
    }
    pub fn reshape(&self, new_shape: Vec<usize>) -> Result<Tensor> {
        reshape(self, new_shape)
    }
    pub fn permute(&self, perm: &[usize]) -> Result<Tensor> {
        permute(self, perm)
    }
    pub fn mean_pool(&self, axis: usize) -> Result<Tensor> {
        mean_pool(self, axis)
    }
    pub fn sum_pool(&self, axis: usize) -> Result<Tensor> {
        sum_pool(self, axis)
    }
}
