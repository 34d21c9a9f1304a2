//! Raw math kernels behind the graph ops. All buffers are row-major slices;
//! shape checking happens one level up in the graph.
//!
//! The matmul variants block the streaming dimension four ways so the
//! stationary operand is reloaded four times less often; accumulation order
//! per output element is fixed, keeping results deterministic.

use super::Element;

/// C[m,n] += A[m,k] * B[k,n]
pub fn matmul<T: Element>(a: &[T], b: &[T], m: usize, k: usize, n: usize, c: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let mut i = 0;
    while i + 4 <= m {
        let (r0, rest) = c[i * n..(i + 4) * n].split_at_mut(n);
        let (r1, rest) = rest.split_at_mut(n);
        let (r2, r3) = rest.split_at_mut(n);
        for p in 0..k {
            let a0 = a[i * k + p];
            let a1 = a[(i + 1) * k + p];
            let a2 = a[(i + 2) * k + p];
            let a3 = a[(i + 3) * k + p];
            let b_row = &b[p * n..(p + 1) * n];
            for (j, &bv) in b_row.iter().enumerate() {
                r0[j] += a0 * bv;
                r1[j] += a1 * bv;
                r2[j] += a2 * bv;
                r3[j] += a3 * bv;
            }
        }
        i += 4;
    }
    while i < m {
        let c_row = &mut c[i * n..(i + 1) * n];
        for p in 0..k {
            let a_ip = a[i * k + p];
            let b_row = &b[p * n..(p + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += a_ip * bv;
            }
        }
        i += 1;
    }
}

/// C[m,n] += A^T * B where A is stored [k,m], B is [k,n].
pub fn matmul_tn<T: Element>(a: &[T], b: &[T], k: usize, m: usize, n: usize, c: &mut [T]) {
    debug_assert_eq!(a.len(), k * m);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    let mut p = 0;
    while p + 4 <= k {
        let b0 = &b[p * n..(p + 1) * n];
        let b1 = &b[(p + 1) * n..(p + 2) * n];
        let b2 = &b[(p + 2) * n..(p + 3) * n];
        let b3 = &b[(p + 3) * n..(p + 4) * n];
        for i in 0..m {
            let a0 = a[p * m + i];
            let a1 = a[(p + 1) * m + i];
            let a2 = a[(p + 2) * m + i];
            let a3 = a[(p + 3) * m + i];
            let c_row = &mut c[i * n..(i + 1) * n];
            for j in 0..n {
                c_row[j] += a0 * b0[j] + a1 * b1[j] + a2 * b2[j] + a3 * b3[j];
            }
        }
        p += 4;
    }
    while p < k {
        let a_row = &a[p * m..(p + 1) * m];
        let b_row = &b[p * n..(p + 1) * n];
        for i in 0..m {
            let a_pi = a_row[i];
            let c_row = &mut c[i * n..(i + 1) * n];
            for (cv, &bv) in c_row.iter_mut().zip(b_row) {
                *cv += a_pi * bv;
            }
        }
        p += 1;
    }
}

/// C[m,n] += A * B^T where A is [m,k], B is stored [n,k].
pub fn matmul_nt<T: Element>(a: &[T], b: &[T], m: usize, k: usize, n: usize, c: &mut [T]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), n * k);
    debug_assert_eq!(c.len(), m * n);
    for i in 0..m {
        let a_row = &a[i * k..(i + 1) * k];
        let mut j = 0;
        while j + 4 <= n {
            let b0 = &b[j * k..(j + 1) * k];
            let b1 = &b[(j + 1) * k..(j + 2) * k];
            let b2 = &b[(j + 2) * k..(j + 3) * k];
            let b3 = &b[(j + 3) * k..(j + 4) * k];
            let mut acc0 = T::zero();
            let mut acc1 = T::zero();
            let mut acc2 = T::zero();
            let mut acc3 = T::zero();
            for (p, &av) in a_row.iter().enumerate() {
                acc0 += av * b0[p];
                acc1 += av * b1[p];
                acc2 += av * b2[p];
                acc3 += av * b3[p];
            }
            c[i * n + j] += acc0;
            c[i * n + j + 1] += acc1;
            c[i * n + j + 2] += acc2;
            c[i * n + j + 3] += acc3;
            j += 4;
        }
        while j < n {
            let b_row = &b[j * k..(j + 1) * k];
            let mut acc = T::zero();
            for (&av, &bv) in a_row.iter().zip(b_row) {
                acc += av * bv;
            }
            c[i * n + j] += acc;
            j += 1;
        }
    }
}

/// Spatial extents of a convolution output, if they divide evenly.
pub fn conv_out_extent(h: usize, kh: usize, stride: usize, padding: usize) -> Option<usize> {
    let span = h + 2 * padding;
    if span < kh {
        return None;
    }
    let num = span - kh;
    if num % stride != 0 {
        return None;
    }
    Some(num / stride + 1)
}

/// Unfold one image [C,H,W] into a patch matrix [C*kh*kw, oh*ow].
#[allow(clippy::too_many_arguments)]
pub fn im2col<T: Element>(
    img: &[T],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    oh: usize,
    ow: usize,
    cols: &mut [T],
) {
    debug_assert_eq!(cols.len(), c * kh * kw * oh * ow);
    for cv in cols.iter_mut() {
        *cv = T::zero();
    }
    let ohw = oh * ow;
    for ch in 0..c {
        let img_ch = &img[ch * h * w..(ch + 1) * h * w];
        for i in 0..kh {
            for j in 0..kw {
                let row = &mut cols[(ch * kh * kw + i * kw + j) * ohw..][..ohw];
                for oy in 0..oh {
                    let y = oy * stride + i;
                    if y < padding || y >= h + padding {
                        continue;
                    }
                    let iy = y - padding;
                    let img_row = &img_ch[iy * w..(iy + 1) * w];
                    let out_row = &mut row[oy * ow..(oy + 1) * ow];
                    for (ox, ov) in out_row.iter_mut().enumerate() {
                        let x = ox * stride + j;
                        if x < padding || x >= w + padding {
                            continue;
                        }
                        *ov = img_row[x - padding];
                    }
                }
            }
        }
    }
}

/// Fold a patch-gradient matrix [C*kh*kw, oh*ow] back onto an image gradient,
/// accumulating overlaps.
#[allow(clippy::too_many_arguments)]
pub fn col2im_add<T: Element>(
    cols: &[T],
    c: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    oh: usize,
    ow: usize,
    img_grad: &mut [T],
) {
    let ohw = oh * ow;
    for ch in 0..c {
        let img_ch = &mut img_grad[ch * h * w..(ch + 1) * h * w];
        for i in 0..kh {
            for j in 0..kw {
                let row = &cols[(ch * kh * kw + i * kw + j) * ohw..][..ohw];
                for oy in 0..oh {
                    let y = oy * stride + i;
                    if y < padding || y >= h + padding {
                        continue;
                    }
                    let iy = y - padding;
                    for ox in 0..ow {
                        let x = ox * stride + j;
                        if x < padding || x >= w + padding {
                            continue;
                        }
                        img_ch[iy * w + (x - padding)] += row[oy * ow + ox];
                    }
                }
            }
        }
    }
}

/// Max pool one channel plane; records the flat argmax (first occurrence,
/// row-major) per output element.
#[allow(clippy::too_many_arguments)]
pub fn maxpool_plane<T: Element>(
    plane: &[T],
    _h: usize,
    w: usize,
    window: usize,
    stride: usize,
    oh: usize,
    ow: usize,
    out: &mut [T],
    argmax: &mut [usize],
) {
    for oy in 0..oh {
        for ox in 0..ow {
            let mut best = T::neg_infinity();
            let mut best_idx = 0usize;
            for i in 0..window {
                let y = oy * stride + i;
                let row = &plane[y * w..(y + 1) * w];
                for j in 0..window {
                    let x = ox * stride + j;
                    let v = row[x];
                    if v > best {
                        best = v;
                        best_idx = y * w + x;
                    }
                }
            }
            out[oy * ow + ox] = best;
            argmax[oy * ow + ox] = best_idx;
        }
    }
}

/// Row-wise stabilized softmax cross-entropy.
/// Returns per-row loss and caches the softmax for the backward pass.
pub fn softmax_xent_forward<T: Element>(
    logits: &[T],
    rows: usize,
    classes: usize,
    labels: &[usize],
    probs: &mut [T],
    losses: &mut [T],
) {
    for r in 0..rows {
        let row = &logits[r * classes..(r + 1) * classes];
        let p_row = &mut probs[r * classes..(r + 1) * classes];
        let mut max = row[0];
        for &v in &row[1..] {
            if v > max {
                max = v;
            }
        }
        let mut sum = T::zero();
        for (pv, &v) in p_row.iter_mut().zip(row) {
            let e = (v - max).exp();
            *pv = e;
            sum += e;
        }
        let inv = T::one() / sum;
        for pv in p_row.iter_mut() {
            *pv *= inv;
        }
        // loss = log(sum) - (logit[label] - max)
        losses[r] = sum.ln() - (row[labels[r]] - max);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn naive_nn(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] * b[p * n + j];
                }
            }
        }
        c
    }

    #[test]
    fn blocked_matmuls_match_the_naive_triple_loop() {
        let mut rng = ChaCha8Rng::seed_from_u64(71);
        for &(m, k, n) in &[(1, 1, 1), (3, 5, 7), (4, 8, 4), (9, 6, 13), (16, 32, 8)] {
            let a: Vec<f64> = (0..m * k).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let b: Vec<f64> = (0..k * n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let want = naive_nn(&a, &b, m, k, n);

            let mut c = vec![0.0; m * n];
            matmul(&a, &b, m, k, n, &mut c);
            for (got, want) in c.iter().zip(&want) {
                assert!((got - want).abs() < 1e-12);
            }

            // A^T path: store A transposed as [k,m]
            let mut at = vec![0.0; k * m];
            for i in 0..m {
                for p in 0..k {
                    at[p * m + i] = a[i * k + p];
                }
            }
            let mut c = vec![0.0; m * n];
            matmul_tn(&at, &b, k, m, n, &mut c);
            for (got, want) in c.iter().zip(&want) {
                assert!((got - want).abs() < 1e-12);
            }

            // B^T path: store B transposed as [n,k]
            let mut bt = vec![0.0; n * k];
            for p in 0..k {
                for j in 0..n {
                    bt[j * k + p] = b[p * n + j];
                }
            }
            let mut c = vec![0.0; m * n];
            matmul_nt(&a, &bt, m, k, n, &mut c);
            for (got, want) in c.iter().zip(&want) {
                assert!((got - want).abs() < 1e-12);
            }
        }
    }
}
