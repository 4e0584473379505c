//! Convolution kernels on flat row-major buffers. Everything here is periodic
//! in both spatial axes: indices wrap, there is no zero padding anywhere, so
//! output size is exactly input size divided by the stride.
//!
//! The 2D convolutions gather the wrapped input patches into a dense
//! (Ci*kh*kw) x (oh*ow) matrix first and then run a register-blocked matrix
//! product over it. The extra copy costs far less than the scattered reads it
//! replaces, and one code path serves every grid size from gradient-check
//! toys up to full training fields.

use super::scalar::Scalar;

#[inline(always)]
fn axpy<T: Scalar>(out: &mut [T], x: &[T], a: T) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o = *o + a * v;
    }
}

#[inline(always)]
fn vadd<T: Scalar>(out: &mut [T], x: &[T]) {
    for (o, &v) in out.iter_mut().zip(x) {
        *o = *o + v;
    }
}

/// Dot product kept as eight interleaved partial sums so the adds do not form
/// one serial dependency chain.
#[inline(always)]
fn dot8<T: Scalar>(a: &[T], x: &[T]) -> T {
    let mut p = [T::zero(); 8];
    let mut ia = a.chunks_exact(8);
    let mut ix = x.chunks_exact(8);
    for (ca, cx) in ia.by_ref().zip(ix.by_ref()) {
        for j in 0..8 {
            p[j] = p[j] + ca[j] * cx[j];
        }
    }
    let mut s = T::zero();
    for (&ra, &rx) in ia.remainder().iter().zip(ix.remainder()) {
        s = s + ra * rx;
    }
    for &pj in &p {
        s = s + pj;
    }
    s
}

/// Two dot products sharing one pass over `x`.
#[inline(always)]
fn dot2x8<T: Scalar>(a: &[T], b: &[T], x: &[T]) -> (T, T) {
    let mut pa = [T::zero(); 8];
    let mut pb = [T::zero(); 8];
    let mut ia = a.chunks_exact(8);
    let mut ib = b.chunks_exact(8);
    let mut ix = x.chunks_exact(8);
    for ((ca, cb), cx) in ia.by_ref().zip(ib.by_ref()).zip(ix.by_ref()) {
        for j in 0..8 {
            pa[j] = pa[j] + ca[j] * cx[j];
            pb[j] = pb[j] + cb[j] * cx[j];
        }
    }
    let (mut sa, mut sb) = (T::zero(), T::zero());
    let rx = ix.remainder();
    for (&ra, &rv) in ia.remainder().iter().zip(rx) {
        sa = sa + ra * rv;
    }
    for (&rb, &rv) in ib.remainder().iter().zip(rx) {
        sb = sb + rb * rv;
    }
    for j in 0..8 {
        sa = sa + pa[j];
        sb = sb + pb[j];
    }
    (sa, sb)
}

/// Gathered patch matrix: cols[k][n] = x[ci, (s*oy+ky-ph)%H, (s*ox+kx-pw)%W]
/// with k = (ci*kh+ky)*kw+kx and n = oy*ow+ox. Row k is the input shifted by
/// one tap offset, so building it is two contiguous copies per row (stride 1)
/// or one strided gather (stride 2).
#[allow(clippy::too_many_arguments)]
fn im2col<T: Scalar>(
    x: &[T],
    ci_n: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    cols: &mut [T],
) {
    let (oh, ow) = (h / stride, w / stride);
    let n_n = oh * ow;
    let (ph, pw) = ((kh - 1) / 2, (kw - 1) / 2);
    debug_assert_eq!(cols.len(), ci_n * kh * kw * n_n);
    let mut dest = cols.chunks_exact_mut(n_n);
    for ci in 0..ci_n {
        let xc = &x[ci * h * w..(ci + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let krow = dest.next().unwrap();
                let off = (kx + w - pw) % w;
                for oy in 0..oh {
                    let iy = (oy * stride + ky + h - ph) % h;
                    let xrow = &xc[iy * w..(iy + 1) * w];
                    let drow = &mut krow[oy * ow..(oy + 1) * ow];
                    if stride == 1 {
                        let (lo, hi) = xrow.split_at(off);
                        drow[..w - off].copy_from_slice(hi);
                        drow[w - off..].copy_from_slice(lo);
                    } else {
                        for (ox, d) in drow.iter_mut().enumerate() {
                            // off + stride*ox < 2*w, so one subtract wraps it.
                            let ix = off + stride * ox;
                            *d = xrow[if ix >= w { ix - w } else { ix }];
                        }
                    }
                }
            }
        }
    }
}

/// Adjoint of [`im2col`]: scatter-add the patch rows back onto the grid.
#[allow(clippy::too_many_arguments)]
fn col2im_add<T: Scalar>(
    cols: &[T],
    ci_n: usize,
    h: usize,
    w: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    dx: &mut [T],
) {
    let (oh, ow) = (h / stride, w / stride);
    let n_n = oh * ow;
    let (ph, pw) = ((kh - 1) / 2, (kw - 1) / 2);
    let mut src = cols.chunks_exact(n_n);
    for ci in 0..ci_n {
        let dxc = &mut dx[ci * h * w..(ci + 1) * h * w];
        for ky in 0..kh {
            for kx in 0..kw {
                let krow = src.next().unwrap();
                let off = (kx + w - pw) % w;
                for oy in 0..oh {
                    let iy = (oy * stride + ky + h - ph) % h;
                    let drow = &krow[oy * ow..(oy + 1) * ow];
                    let dxrow = &mut dxc[iy * w..(iy + 1) * w];
                    if stride == 1 {
                        let (lo, hi) = dxrow.split_at_mut(off);
                        vadd(hi, &drow[..w - off]);
                        vadd(lo, &drow[w - off..]);
                    } else {
                        for (ox, &d) in drow.iter().enumerate() {
                            let ix = off + stride * ox;
                            let ix = if ix >= w { ix - w } else { ix };
                            dxrow[ix] = dxrow[ix] + d;
                        }
                    }
                }
            }
        }
    }
}

/// out[m][:] += wt[m][:] * cols. Four output rows advance together so each
/// loaded patch row feeds four multiply-add streams; rows stay L1-resident
/// across the contraction. `out` must be pre-filled (with the bias, or
/// zeros).
fn matmul_acc<T: Scalar>(wt: &[T], m_n: usize, k_n: usize, cols: &[T], n_n: usize, out: &mut [T]) {
    let mut rows = out.chunks_exact_mut(n_n);
    let mut m = 0;
    while m + 4 <= m_n {
        let r0 = rows.next().unwrap();
        let r1 = rows.next().unwrap();
        let r2 = rows.next().unwrap();
        let r3 = rows.next().unwrap();
        for k in 0..k_n {
            let c = &cols[k * n_n..(k + 1) * n_n];
            let w0 = wt[m * k_n + k];
            let w1 = wt[(m + 1) * k_n + k];
            let w2 = wt[(m + 2) * k_n + k];
            let w3 = wt[(m + 3) * k_n + k];
            for i in 0..n_n {
                let cv = c[i];
                r0[i] = r0[i] + w0 * cv;
                r1[i] = r1[i] + w1 * cv;
                r2[i] = r2[i] + w2 * cv;
                r3[i] = r3[i] + w3 * cv;
            }
        }
        m += 4;
    }
    while m < m_n {
        let r = rows.next().unwrap();
        for k in 0..k_n {
            axpy(r, &cols[k * n_n..(k + 1) * n_n], wt[m * k_n + k]);
        }
        m += 1;
    }
}

/// dw[m][k] += dot(g[m], cols[k]) over 2x2 register blocks so each loaded
/// row chunk feeds four partial-sum streams.
fn matmul_nt_acc<T: Scalar>(g: &[T], m_n: usize, n_n: usize, cols: &[T], k_n: usize, dw: &mut [T]) {
    let mut m = 0;
    while m + 2 <= m_n {
        let g0 = &g[m * n_n..(m + 1) * n_n];
        let g1 = &g[(m + 1) * n_n..(m + 2) * n_n];
        let mut k = 0;
        while k + 2 <= k_n {
            let c0 = &cols[k * n_n..(k + 1) * n_n];
            let c1 = &cols[(k + 1) * n_n..(k + 2) * n_n];
            let mut p00 = [T::zero(); 8];
            let mut p01 = [T::zero(); 8];
            let mut p10 = [T::zero(); 8];
            let mut p11 = [T::zero(); 8];
            let mut i0 = g0.chunks_exact(8);
            let mut i1 = g1.chunks_exact(8);
            let mut j0 = c0.chunks_exact(8);
            let mut j1 = c1.chunks_exact(8);
            for (((ga, gb), ca), cb) in i0.by_ref().zip(i1.by_ref()).zip(j0.by_ref()).zip(j1.by_ref()) {
                for j in 0..8 {
                    p00[j] = p00[j] + ga[j] * ca[j];
                    p01[j] = p01[j] + ga[j] * cb[j];
                    p10[j] = p10[j] + gb[j] * ca[j];
                    p11[j] = p11[j] + gb[j] * cb[j];
                }
            }
            let (mut s00, mut s01, mut s10, mut s11) = (T::zero(), T::zero(), T::zero(), T::zero());
            let (ra, rb) = (i0.remainder(), i1.remainder());
            let (rc, rd) = (j0.remainder(), j1.remainder());
            for i in 0..ra.len() {
                s00 = s00 + ra[i] * rc[i];
                s01 = s01 + ra[i] * rd[i];
                s10 = s10 + rb[i] * rc[i];
                s11 = s11 + rb[i] * rd[i];
            }
            for j in 0..8 {
                s00 = s00 + p00[j];
                s01 = s01 + p01[j];
                s10 = s10 + p10[j];
                s11 = s11 + p11[j];
            }
            dw[m * k_n + k] = dw[m * k_n + k] + s00;
            dw[m * k_n + k + 1] = dw[m * k_n + k + 1] + s01;
            dw[(m + 1) * k_n + k] = dw[(m + 1) * k_n + k] + s10;
            dw[(m + 1) * k_n + k + 1] = dw[(m + 1) * k_n + k + 1] + s11;
            k += 2;
        }
        if k < k_n {
            let c0 = &cols[k * n_n..(k + 1) * n_n];
            let (s0, s1) = dot2x8(g0, g1, c0);
            dw[m * k_n + k] = dw[m * k_n + k] + s0;
            dw[(m + 1) * k_n + k] = dw[(m + 1) * k_n + k] + s1;
        }
        m += 2;
    }
    if m < m_n {
        let g0 = &g[m * n_n..(m + 1) * n_n];
        for k in 0..k_n {
            let c = &cols[k * n_n..(k + 1) * n_n];
            dw[m * k_n + k] = dw[m * k_n + k] + dot8(g0, c);
        }
    }
}

/// dcols[k][n] = sum_m wt[m][k] * g[m][n], same row streaming as
/// [`matmul_acc`] with the roles of the two operands swapped (the four
/// weights per output-grad row are contiguous here). Overwrites dcols.
fn matmul_tn<T: Scalar>(wt: &[T], m_n: usize, k_n: usize, g: &[T], n_n: usize, dcols: &mut [T]) {
    let mut rows = dcols.chunks_exact_mut(n_n);
    let mut k = 0;
    while k + 4 <= k_n {
        let r0 = rows.next().unwrap();
        let r1 = rows.next().unwrap();
        let r2 = rows.next().unwrap();
        let r3 = rows.next().unwrap();
        r0.fill(T::zero());
        r1.fill(T::zero());
        r2.fill(T::zero());
        r3.fill(T::zero());
        for m in 0..m_n {
            let c = &g[m * n_n..(m + 1) * n_n];
            let wbase = m * k_n + k;
            let w0 = wt[wbase];
            let w1 = wt[wbase + 1];
            let w2 = wt[wbase + 2];
            let w3 = wt[wbase + 3];
            for i in 0..n_n {
                let gv = c[i];
                r0[i] = r0[i] + w0 * gv;
                r1[i] = r1[i] + w1 * gv;
                r2[i] = r2[i] + w2 * gv;
                r3[i] = r3[i] + w3 * gv;
            }
        }
        k += 4;
    }
    while k < k_n {
        let r = rows.next().unwrap();
        r.fill(T::zero());
        for m in 0..m_n {
            axpy(r, &g[m * n_n..(m + 1) * n_n], wt[m * k_n + k]);
        }
        k += 1;
    }
}

/// out[co,oy,ox] = b[co] + sum_{ci,ky,kx} w[co,ci,ky,kx] * x[ci, (s*oy+ky-ph)%H, (s*ox+kx-pw)%W]
///
/// Odd kernel sides, centered; stride 1 keeps the grid, stride 2 halves it.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_forward<T: Scalar>(
    x: &[T],
    ci_n: usize,
    h: usize,
    w: usize,
    wt: &[T],
    co_n: usize,
    kh: usize,
    kw: usize,
    bias: &[T],
    stride: usize,
    out: &mut [T],
) {
    let n_n = (h / stride) * (w / stride);
    let k_n = ci_n * kh * kw;
    debug_assert_eq!(out.len(), co_n * n_n);
    let mut cols = vec![T::zero(); k_n * n_n];
    im2col(x, ci_n, h, w, kh, kw, stride, &mut cols);
    for co in 0..co_n {
        out[co * n_n..(co + 1) * n_n].fill(bias[co]);
    }
    matmul_acc(wt, co_n, k_n, &cols, n_n, out);
}

/// Adjoint of [`conv2d_forward`]: scatter `g` back into `dx`, `dw`, `db`.
/// All three gradient buffers are accumulated into, not overwritten.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward<T: Scalar>(
    x: &[T],
    ci_n: usize,
    h: usize,
    w: usize,
    wt: &[T],
    co_n: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    g: &[T],
    dx: &mut [T],
    dw: &mut [T],
    db: &mut [T],
) {
    let n_n = (h / stride) * (w / stride);
    let k_n = ci_n * kh * kw;
    for co in 0..co_n {
        let gc = &g[co * n_n..(co + 1) * n_n];
        let mut acc = T::zero();
        for &v in gc {
            acc = acc + v;
        }
        db[co] = db[co] + acc;
    }
    let mut cols = vec![T::zero(); k_n * n_n];
    im2col(x, ci_n, h, w, kh, kw, stride, &mut cols);
    matmul_nt_acc(g, co_n, n_n, &cols, k_n, dw);
    // Reuse the patch buffer for the input-gradient patches; matmul_tn
    // overwrites every entry it owns.
    matmul_tn(wt, co_n, k_n, g, n_n, &mut cols);
    col2im_add(&cols, ci_n, h, w, kh, kw, stride, dx);
}

/// 2x2 stride-2 transposed convolution: the exact upsampling inverse shape of
/// a stride-2 downsampling. Every output pixel is touched by exactly one
/// (ky,kx) tap, so no wrap handling is needed.
///
/// out[co, 2y+ky, 2x+kx] = b[co] + sum_ci x[ci,y,x] * w[ci,co,ky,kx]
pub fn conv_transpose2d_forward<T: Scalar>(
    x: &[T],
    ci_n: usize,
    h: usize,
    w: usize,
    wt: &[T],
    co_n: usize,
    bias: &[T],
    out: &mut [T],
) {
    let (oh, ow) = (2 * h, 2 * w);
    debug_assert_eq!(out.len(), co_n * oh * ow);
    for co in 0..co_n {
        out[co * oh * ow..(co + 1) * oh * ow].fill(bias[co]);
    }
    for ci in 0..ci_n {
        let xc = &x[ci * h * w..(ci + 1) * h * w];
        for co in 0..co_n {
            for ky in 0..2 {
                // Both kx taps land in the same output row, so fill its even
                // and odd columns in one pass over the input row.
                let w0 = wt[((ci * co_n + co) * 2 + ky) * 2];
                let w1 = wt[((ci * co_n + co) * 2 + ky) * 2 + 1];
                for y in 0..h {
                    let xrow = &xc[y * w..(y + 1) * w];
                    let obase = (co * oh + 2 * y + ky) * ow;
                    let orow = &mut out[obase..obase + ow];
                    for (pair, &xv) in orow.chunks_exact_mut(2).zip(xrow) {
                        pair[0] = pair[0] + w0 * xv;
                        pair[1] = pair[1] + w1 * xv;
                    }
                }
            }
        }
    }
}

/// Adjoint of [`conv_transpose2d_forward`]; accumulates into the gradients.
#[allow(clippy::too_many_arguments)]
pub fn conv_transpose2d_backward<T: Scalar>(
    x: &[T],
    ci_n: usize,
    h: usize,
    w: usize,
    wt: &[T],
    co_n: usize,
    g: &[T],
    dx: &mut [T],
    dw: &mut [T],
    db: &mut [T],
) {
    let (oh, ow) = (2 * h, 2 * w);
    for co in 0..co_n {
        let gc = &g[co * oh * ow..(co + 1) * oh * ow];
        let mut acc = T::zero();
        for &v in gc {
            acc = acc + v;
        }
        db[co] = db[co] + acc;
    }
    for ci in 0..ci_n {
        let xc = &x[ci * h * w..(ci + 1) * h * w];
        let dxc = &mut dx[ci * h * w..(ci + 1) * h * w];
        for co in 0..co_n {
            for ky in 0..2 {
                let wbase = ((ci * co_n + co) * 2 + ky) * 2;
                let (w0, w1) = (wt[wbase], wt[wbase + 1]);
                let (mut acc0, mut acc1) = (T::zero(), T::zero());
                for y in 0..h {
                    let gbase = (co * oh + 2 * y + ky) * ow;
                    let grow = &g[gbase..gbase + ow];
                    let xrow = &xc[y * w..(y + 1) * w];
                    let dxrow = &mut dxc[y * w..(y + 1) * w];
                    for ((pair, &xv), d) in grow.chunks_exact(2).zip(xrow).zip(dxrow) {
                        acc0 = acc0 + xv * pair[0];
                        acc1 = acc1 + xv * pair[1];
                        *d = *d + w0 * pair[0] + w1 * pair[1];
                    }
                }
                dw[wbase] = dw[wbase] + acc0;
                dw[wbase + 1] = dw[wbase + 1] + acc1;
            }
        }
    }
}

/// Per-pixel channel contraction (a 1x1 convolution):
/// out[co,p] = b[co] + sum_ci x[ci,p] * w[ci,co], where p runs over H*W.
pub fn pointwise_forward<T: Scalar>(
    x: &[T],
    ci_n: usize,
    pix: usize,
    wt: &[T],
    co_n: usize,
    bias: &[T],
    out: &mut [T],
) {
    debug_assert_eq!(out.len(), co_n * pix);
    for co in 0..co_n {
        out[co * pix..(co + 1) * pix].fill(bias[co]);
    }
    for ci in 0..ci_n {
        let xc = &x[ci * pix..(ci + 1) * pix];
        for co in 0..co_n {
            axpy(&mut out[co * pix..(co + 1) * pix], xc, wt[ci * co_n + co]);
        }
    }
}

/// Adjoint of [`pointwise_forward`]; accumulates into the gradients.
#[allow(clippy::too_many_arguments)]
pub fn pointwise_backward<T: Scalar>(
    x: &[T],
    ci_n: usize,
    pix: usize,
    wt: &[T],
    co_n: usize,
    g: &[T],
    dx: &mut [T],
    dw: &mut [T],
    db: &mut [T],
) {
    for co in 0..co_n {
        let gc = &g[co * pix..(co + 1) * pix];
        let mut acc = T::zero();
        for &v in gc {
            acc = acc + v;
        }
        db[co] = db[co] + acc;
    }
    for ci in 0..ci_n {
        let xc = &x[ci * pix..(ci + 1) * pix];
        let dxc = &mut dx[ci * pix..(ci + 1) * pix];
        for co in 0..co_n {
            let gc = &g[co * pix..(co + 1) * pix];
            dw[ci * co_n + co] = dw[ci * co_n + co] + dot8(xc, gc);
            axpy(dxc, gc, wt[ci * co_n + co]);
        }
    }
}

/// Per-group mean and reciprocal standard deviation, cached by the forward
/// pass so the backward pass does not have to recompute the reductions.
#[derive(Clone, Debug)]
pub struct GroupNormCache<T> {
    pub mean: Vec<T>,
    pub inv_std: Vec<T>,
}

/// y[c,p] = gamma[c] * (x[c,p] - mu_g) * inv_std_g + beta[c], statistics taken
/// over each group of C/G channels jointly with all pixels (biased variance).
pub fn group_norm_forward<T: Scalar>(
    x: &[T],
    c_n: usize,
    pix: usize,
    groups: usize,
    gamma: &[T],
    beta: &[T],
    eps: T,
    out: &mut [T],
) -> GroupNormCache<T> {
    let per = c_n / groups;
    let m = T::from_usize(per * pix).unwrap();
    let mut cache = GroupNormCache {
        mean: Vec::with_capacity(groups),
        inv_std: Vec::with_capacity(groups),
    };
    for gidx in 0..groups {
        let xs = &x[gidx * per * pix..(gidx + 1) * per * pix];
        let mut s = T::zero();
        let mut s2 = T::zero();
        for &v in xs {
            s = s + v;
            s2 = s2 + v * v;
        }
        let mu = s / m;
        let var = s2 / m - mu * mu;
        let inv = T::one() / (var + eps).sqrt();
        cache.mean.push(mu);
        cache.inv_std.push(inv);
        for c in 0..per {
            let ch = gidx * per + c;
            let xc = &x[ch * pix..(ch + 1) * pix];
            let oc = &mut out[ch * pix..(ch + 1) * pix];
            let (ga, be) = (gamma[ch], beta[ch]);
            for (o, &v) in oc.iter_mut().zip(xc) {
                *o = ga * (v - mu) * inv + be;
            }
        }
    }
    cache
}

/// Adjoint of [`group_norm_forward`]; accumulates into the gradients.
#[allow(clippy::too_many_arguments)]
pub fn group_norm_backward<T: Scalar>(
    x: &[T],
    c_n: usize,
    pix: usize,
    groups: usize,
    gamma: &[T],
    cache: &GroupNormCache<T>,
    g: &[T],
    dx: &mut [T],
    dgamma: &mut [T],
    dbeta: &mut [T],
) {
    let per = c_n / groups;
    let m = T::from_usize(per * pix).unwrap();
    for gidx in 0..groups {
        let (mu, inv) = (cache.mean[gidx], cache.inv_std[gidx]);
        // First pass: reductions over the whole group plus per-channel sums.
        let mut s_t = T::zero();
        let mut s_tx = T::zero();
        for c in 0..per {
            let ch = gidx * per + c;
            let xc = &x[ch * pix..(ch + 1) * pix];
            let gc = &g[ch * pix..(ch + 1) * pix];
            let ga = gamma[ch];
            let mut sg = T::zero();
            let mut sgx = T::zero();
            for (&xv, &gv) in xc.iter().zip(gc) {
                let xh = (xv - mu) * inv;
                sg = sg + gv;
                sgx = sgx + gv * xh;
                s_t = s_t + ga * gv;
                s_tx = s_tx + ga * gv * xh;
            }
            dbeta[ch] = dbeta[ch] + sg;
            dgamma[ch] = dgamma[ch] + sgx;
        }
        let (mt, mtx) = (s_t / m, s_tx / m);
        for c in 0..per {
            let ch = gidx * per + c;
            let xc = &x[ch * pix..(ch + 1) * pix];
            let gc = &g[ch * pix..(ch + 1) * pix];
            let dxc = &mut dx[ch * pix..(ch + 1) * pix];
            let ga = gamma[ch];
            for ((d, &xv), &gv) in dxc.iter_mut().zip(xc).zip(gc) {
                let xh = (xv - mu) * inv;
                *d = *d + inv * (ga * gv - mt - xh * mtx);
            }
        }
    }
}
