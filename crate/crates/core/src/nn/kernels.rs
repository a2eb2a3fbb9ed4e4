//! Scalar-generic forward/backward kernels for each layer kind.
//!
//! Production networks instantiate these at f32; the gradient checker
//! instantiates the same algorithms at f64 so that verification is not
//! drowned by single-precision rounding.
//!
//! Convolution accumulates each output value in a fixed order: bias first,
//! then input channel, then kernel row, then kernel column, adding the
//! padded zero terms like any other. The naive reference used by the test
//! suite follows the same order, making f32 forward outputs reproducible
//! bit for bit. Backward kernels keep a fixed order too but may split
//! accumulators for speed.

use std::ops::AddAssign;

use num_traits::Float;

/// Copies one image's channels into a zero-padded plane buffer of
/// (channels, h + 2*pad, w + 2*pad).
fn fill_padded<T: Float>(input: &[T], ch: usize, h: usize, w: usize, pad: usize, padded: &mut [T]) {
    let hp = h + 2 * pad;
    let wp = w + 2 * pad;
    padded.fill(T::zero());
    for c in 0..ch {
        for y in 0..h {
            let src = &input[(c * h + y) * w..(c * h + y) * w + w];
            let dst = &mut padded[(c * hp + y + pad) * wp + pad..];
            dst[..w].copy_from_slice(src);
        }
    }
}

#[allow(clippy::too_many_arguments)]
pub fn conv2d_forward<T: Float + AddAssign>(
    input: &[T],
    bsz: usize,
    in_ch: usize,
    h: usize,
    w: usize,
    weight: &[T],
    bias: &[T],
    out_ch: usize,
    kernel: usize,
    pad: usize,
) -> Vec<T> {
    let hp = h + 2 * pad;
    let wp = w + 2 * pad;
    let out_h = hp - kernel + 1;
    let out_w = wp - kernel + 1;
    let mut out = vec![T::zero(); bsz * out_ch * out_h * out_w];

    let mut padded = vec![T::zero(); in_ch * hp * wp];
    let mut acc = vec![T::zero(); out_w];
    for b in 0..bsz {
        fill_padded(
            &input[b * in_ch * h * w..(b + 1) * in_ch * h * w],
            in_ch,
            h,
            w,
            pad,
            &mut padded,
        );
        for o in 0..out_ch {
            for y in 0..out_h {
                acc.fill(bias[o]);
                for i in 0..in_ch {
                    for dy in 0..kernel {
                        let row = &padded[(i * hp + y + dy) * wp..(i * hp + y + dy + 1) * wp];
                        for dx in 0..kernel {
                            let wv = weight[((o * in_ch + i) * kernel + dy) * kernel + dx];
                            let src = &row[dx..dx + out_w];
                            for (a, s) in acc.iter_mut().zip(src) {
                                *a += wv * *s;
                            }
                        }
                    }
                }
                let base = ((b * out_ch + o) * out_h + y) * out_w;
                out[base..base + out_w].copy_from_slice(&acc);
            }
        }
    }
    out
}

/// Dot product with four split accumulators; deterministic but reassociated,
/// so it is used in backward paths and the fc layer, not the conv forward.
fn dot<T: Float + AddAssign>(a: &[T], b: &[T]) -> T {
    let mut acc = [T::zero(); 4];
    let chunks = a.len() / 4;
    for k in 0..chunks {
        let i = k * 4;
        acc[0] += a[i] * b[i];
        acc[1] += a[i + 1] * b[i + 1];
        acc[2] += a[i + 2] * b[i + 2];
        acc[3] += a[i + 3] * b[i + 3];
    }
    let mut tail = T::zero();
    for i in chunks * 4..a.len() {
        tail += a[i] * b[i];
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

/// Returns (grad_weight, grad_bias, grad_input).
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward<T: Float + AddAssign>(
    input: &[T],
    bsz: usize,
    in_ch: usize,
    h: usize,
    w: usize,
    weight: &[T],
    out_ch: usize,
    kernel: usize,
    pad: usize,
    grad_out: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let hp = h + 2 * pad;
    let wp = w + 2 * pad;
    let out_h = hp - kernel + 1;
    let out_w = wp - kernel + 1;

    let mut grad_w = vec![T::zero(); weight.len()];
    let mut grad_b = vec![T::zero(); out_ch];
    let mut grad_in = vec![T::zero(); bsz * in_ch * h * w];

    let mut padded = vec![T::zero(); in_ch * hp * wp];
    let mut gpadded = vec![T::zero(); in_ch * hp * wp];
    for b in 0..bsz {
        fill_padded(
            &input[b * in_ch * h * w..(b + 1) * in_ch * h * w],
            in_ch,
            h,
            w,
            pad,
            &mut padded,
        );
        gpadded.fill(T::zero());
        for o in 0..out_ch {
            for y in 0..out_h {
                let go_row = &grad_out[((b * out_ch + o) * out_h + y) * out_w..][..out_w];
                let mut row_sum = T::zero();
                for v in go_row {
                    row_sum += *v;
                }
                grad_b[o] += row_sum;
                for i in 0..in_ch {
                    for dy in 0..kernel {
                        let prow = &padded[(i * hp + y + dy) * wp..(i * hp + y + dy + 1) * wp];
                        let grow = &mut gpadded[(i * hp + y + dy) * wp..(i * hp + y + dy + 1) * wp];
                        for dx in 0..kernel {
                            let widx = ((o * in_ch + i) * kernel + dy) * kernel + dx;
                            grad_w[widx] += dot(go_row, &prow[dx..dx + out_w]);
                            let wv = weight[widx];
                            for (g, go) in grow[dx..dx + out_w].iter_mut().zip(go_row) {
                                *g += wv * *go;
                            }
                        }
                    }
                }
            }
        }
        // strip the padding halo back off
        for i in 0..in_ch {
            for y in 0..h {
                let src = &gpadded[(i * hp + y + pad) * wp + pad..][..w];
                let dst = &mut grad_in[((b * in_ch + i) * h + y) * w..][..w];
                dst.copy_from_slice(src);
            }
        }
    }
    (grad_w, grad_b, grad_in)
}

pub fn relu_forward<T: Float>(input: &[T]) -> Vec<T> {
    input.iter().map(|&v| v.max(T::zero())).collect()
}

pub fn relu_backward<T: Float>(input: &[T], grad_out: &[T]) -> Vec<T> {
    input
        .iter()
        .zip(grad_out)
        .map(|(&x, &g)| if x > T::zero() { g } else { T::zero() })
        .collect()
}

pub fn maxpool2_forward<T: Float>(input: &[T], planes: usize, h: usize, w: usize) -> Vec<T> {
    let oh = h / 2;
    let ow = w / 2;
    let mut out = vec![T::zero(); planes * oh * ow];
    for p in 0..planes {
        for y in 0..oh {
            let r0 = &input[(p * h + 2 * y) * w..][..w];
            let r1 = &input[(p * h + 2 * y + 1) * w..][..w];
            let orow = &mut out[(p * oh + y) * ow..][..ow];
            for x in 0..ow {
                let m = r0[2 * x].max(r0[2 * x + 1]).max(r1[2 * x]).max(r1[2 * x + 1]);
                orow[x] = m;
            }
        }
    }
    out
}

/// Routes each gradient to the first maximum of its window (scan order:
/// top-left, top-right, bottom-left, bottom-right).
pub fn maxpool2_backward<T: Float + AddAssign>(
    input: &[T],
    planes: usize,
    h: usize,
    w: usize,
    grad_out: &[T],
) -> Vec<T> {
    let oh = h / 2;
    let ow = w / 2;
    let mut grad_in = vec![T::zero(); planes * h * w];
    for p in 0..planes {
        for y in 0..oh {
            for x in 0..ow {
                let mut best = T::neg_infinity();
                let mut best_at = (0, 0);
                for dy in 0..2 {
                    for dx in 0..2 {
                        let v = input[(p * h + 2 * y + dy) * w + 2 * x + dx];
                        if v > best {
                            best = v;
                            best_at = (dy, dx);
                        }
                    }
                }
                grad_in[(p * h + 2 * y + best_at.0) * w + 2 * x + best_at.1] +=
                    grad_out[(p * oh + y) * ow + x];
            }
        }
    }
    grad_in
}

pub fn fc_forward<T: Float + AddAssign>(
    input: &[T],
    bsz: usize,
    in_dim: usize,
    weight: &[T],
    bias: &[T],
    out_dim: usize,
) -> Vec<T> {
    let mut out = vec![T::zero(); bsz * out_dim];
    for b in 0..bsz {
        let irow = &input[b * in_dim..][..in_dim];
        for j in 0..out_dim {
            out[b * out_dim + j] = bias[j] + dot(&weight[j * in_dim..][..in_dim], irow);
        }
    }
    out
}

/// Returns (grad_weight, grad_bias, grad_input).
pub fn fc_backward<T: Float + AddAssign>(
    input: &[T],
    bsz: usize,
    in_dim: usize,
    weight: &[T],
    out_dim: usize,
    grad_out: &[T],
) -> (Vec<T>, Vec<T>, Vec<T>) {
    let mut grad_w = vec![T::zero(); weight.len()];
    let mut grad_b = vec![T::zero(); out_dim];
    let mut grad_in = vec![T::zero(); bsz * in_dim];
    for b in 0..bsz {
        let irow = &input[b * in_dim..][..in_dim];
        let girow = &mut grad_in[b * in_dim..b * in_dim + in_dim];
        for j in 0..out_dim {
            let g = grad_out[b * out_dim + j];
            grad_b[j] += g;
            let gwrow = &mut grad_w[j * in_dim..j * in_dim + in_dim];
            for (gw, x) in gwrow.iter_mut().zip(irow) {
                *gw += g * *x;
            }
            let wrow = &weight[j * in_dim..][..in_dim];
            for (gi, wv) in girow.iter_mut().zip(wrow) {
                *gi += g * *wv;
            }
        }
    }
    (grad_w, grad_b, grad_in)
}

/// Mean negative log-likelihood under softmax, with max-subtraction, plus the
/// logit gradient (softmax - onehot) / batch.
pub fn softmax_xent_slices<T: Float + AddAssign>(
    logits: &[T],
    bsz: usize,
    classes: usize,
    labels: &[usize],
) -> (T, Vec<T>) {
    let mut grad = vec![T::zero(); bsz * classes];
    let mut loss = T::zero();
    for b in 0..bsz {
        let row = &logits[b * classes..][..classes];
        let mut max = T::neg_infinity();
        for &v in row {
            max = max.max(v);
        }
        let mut denom = T::zero();
        for &v in row {
            denom += (v - max).exp();
        }
        loss = loss - ((row[labels[b]] - max).exp() / denom).ln();
        for c in 0..classes {
            let p = (row[c] - max).exp() / denom;
            let onehot = if c == labels[b] { T::one() } else { T::zero() };
            grad[b * classes + c] = (p - onehot) / T::from(bsz).unwrap();
        }
    }
    (loss / T::from(bsz).unwrap(), grad)
}
