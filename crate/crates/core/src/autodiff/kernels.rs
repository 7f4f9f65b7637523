//! Dense numeric kernels shared by the tape's forward and backward passes.
//! Parallel loops only ever split over disjoint output ranges, so results
//! are bitwise deterministic regardless of thread scheduling.

use rayon::prelude::*;

/// Work threshold below which parallel dispatch is not worth the overhead.
const PAR_FLOPS: usize = 1 << 15;

/// `out[m,n] = a[m,k] * b[k,n]`
pub fn matmul(a: &[f64], b: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * n);
    let row = |out_row: &mut [f64], i: usize| {
        out_row.fill(0.0);
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    };
    if m * k * n >= PAR_FLOPS {
        out.par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, out_row)| row(out_row, i));
    } else {
        for (i, out_row) in out.chunks_mut(n).enumerate() {
            row(out_row, i);
        }
    }
}

/// `out[m,k] += gy[m,n] * b^T` where `b` is `[k,n]`.
pub fn matmul_bt_acc(gy: &[f64], b: &[f64], m: usize, n: usize, k: usize, out: &mut [f64]) {
    debug_assert_eq!(gy.len(), m * n);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(out.len(), m * k);
    let row = |out_row: &mut [f64], i: usize| {
        let gyrow = &gy[i * n..(i + 1) * n];
        for (p, o) in out_row.iter_mut().enumerate() {
            let brow = &b[p * n..(p + 1) * n];
            let mut acc = 0.0;
            for (g, bv) in gyrow.iter().zip(brow) {
                acc += g * bv;
            }
            *o += acc;
        }
    };
    if m * k * n >= PAR_FLOPS {
        out.par_chunks_mut(k)
            .enumerate()
            .for_each(|(i, out_row)| row(out_row, i));
    } else {
        for (i, out_row) in out.chunks_mut(k).enumerate() {
            row(out_row, i);
        }
    }
}

/// `out[k,n] += a^T * gy` where `a` is `[m,k]`, `gy` is `[m,n]`.
///
/// Accumulates row-major over `i` so both operands stream contiguously; the
/// `k x n` accumulator stays cache-resident. Long inputs are split into
/// fixed-size row chunks whose partial sums are reduced in chunk order, so
/// the result does not depend on thread scheduling.
pub fn matmul_at_acc(a: &[f64], gy: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(gy.len(), m * n);
    debug_assert_eq!(out.len(), k * n);
    let accumulate = |acc: &mut [f64], rows: std::ops::Range<usize>| {
        for i in rows {
            let arow = &a[i * k..(i + 1) * k];
            let gyrow = &gy[i * n..(i + 1) * n];
            for (p, &aip) in arow.iter().enumerate() {
                if aip == 0.0 {
                    continue;
                }
                let acc_row = &mut acc[p * n..(p + 1) * n];
                for (o, &g) in acc_row.iter_mut().zip(gyrow) {
                    *o += aip * g;
                }
            }
        }
    };
    const CHUNK_ROWS: usize = 256;
    if m > CHUNK_ROWS && m * k * n >= PAR_FLOPS {
        let bounds: Vec<usize> = (0..m).step_by(CHUNK_ROWS).collect();
        let partials: Vec<Vec<f64>> = bounds
            .par_iter()
            .map(|&start| {
                let mut acc = vec![0.0; k * n];
                accumulate(&mut acc, start..(start + CHUNK_ROWS).min(m));
                acc
            })
            .collect();
        for partial in &partials {
            for (o, &p) in out.iter_mut().zip(partial) {
                *o += p;
            }
        }
    } else {
        accumulate(out, 0..m);
    }
}

/// `out[m,n] = a[m,k] * b[k,n] + bias[n]` broadcast over rows.
pub fn matmul_bias(a: &[f64], b: &[f64], bias: &[f64], m: usize, k: usize, n: usize, out: &mut [f64]) {
    debug_assert_eq!(bias.len(), n);
    let row = |out_row: &mut [f64], i: usize| {
        out_row.copy_from_slice(bias);
        for p in 0..k {
            let aip = a[i * k + p];
            if aip == 0.0 {
                continue;
            }
            let brow = &b[p * n..(p + 1) * n];
            for (o, &bv) in out_row.iter_mut().zip(brow) {
                *o += aip * bv;
            }
        }
    };
    if m * k * n >= PAR_FLOPS {
        out.par_chunks_mut(n)
            .enumerate()
            .for_each(|(i, out_row)| row(out_row, i));
    } else {
        for (i, out_row) in out.chunks_mut(n).enumerate() {
            row(out_row, i);
        }
    }
}

pub fn conv_out_dim(input: usize, kernel: usize, stride: usize, padding: usize) -> usize {
    (input + 2 * padding - kernel) / stride + 1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConvDims {
    pub c_in: usize,
    pub h: usize,
    pub w: usize,
    pub c_out: usize,
    pub kh: usize,
    pub kw: usize,
    pub stride: usize,
    pub padding: usize,
    pub oh: usize,
    pub ow: usize,
}

impl ConvDims {
    pub fn new(
        c_in: usize,
        h: usize,
        w: usize,
        c_out: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        padding: usize,
    ) -> Self {
        ConvDims {
            c_in,
            h,
            w,
            c_out,
            kh,
            kw,
            stride,
            padding,
            oh: conv_out_dim(h, kh, stride, padding),
            ow: conv_out_dim(w, kw, stride, padding),
        }
    }
}

/// Output positions `o` with `o*stride + k_off - pad` inside `[0, in_dim)`,
/// as a half-open range clipped to `out_dim`.
#[inline]
fn conv_range(k_off: usize, pad: usize, stride: usize, in_dim: usize, out_dim: usize) -> (usize, usize) {
    let lo = if k_off >= pad {
        0
    } else {
        (pad - k_off).div_ceil(stride)
    };
    let max_pos = in_dim + pad - 1;
    if k_off > max_pos {
        return (0, 0);
    }
    let hi = ((max_pos - k_off) / stride + 1).min(out_dim);
    (lo.min(hi), hi)
}

/// Planar CHW convolution with optional bias. Branch-free inner loops over
/// precomputed valid ranges; unit stride takes a contiguous fast path.
pub fn conv2d_fwd(input: &[f64], weight: &[f64], bias: Option<&[f64]>, d: ConvDims, out: &mut [f64]) {
    debug_assert_eq!(input.len(), d.c_in * d.h * d.w);
    debug_assert_eq!(weight.len(), d.c_out * d.c_in * d.kh * d.kw);
    debug_assert_eq!(out.len(), d.c_out * d.oh * d.ow);
    let plane = |out_plane: &mut [f64], co: usize| {
        out_plane.fill(bias.map_or(0.0, |b| b[co]));
        for ci in 0..d.c_in {
            let in_plane = &input[ci * d.h * d.w..(ci + 1) * d.h * d.w];
            for ky in 0..d.kh {
                let (oy_lo, oy_hi) = conv_range(ky, d.padding, d.stride, d.h, d.oh);
                for kx in 0..d.kw {
                    let wv = weight[((co * d.c_in + ci) * d.kh + ky) * d.kw + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let (ox_lo, ox_hi) = conv_range(kx, d.padding, d.stride, d.w, d.ow);
                    if ox_lo >= ox_hi {
                        continue;
                    }
                    for oy in oy_lo..oy_hi {
                        let iy = oy * d.stride + ky - d.padding;
                        let in_row = &in_plane[iy * d.w..(iy + 1) * d.w];
                        let out_row = &mut out_plane[oy * d.ow..(oy + 1) * d.ow];
                        let ix_lo = ox_lo * d.stride + kx - d.padding;
                        if d.stride == 1 {
                            let src = &in_row[ix_lo..ix_lo + (ox_hi - ox_lo)];
                            for (o, &v) in out_row[ox_lo..ox_hi].iter_mut().zip(src) {
                                *o += wv * v;
                            }
                        } else {
                            let mut ix = ix_lo;
                            for o in out_row[ox_lo..ox_hi].iter_mut() {
                                *o += wv * in_row[ix];
                                ix += d.stride;
                            }
                        }
                    }
                }
            }
        }
    };
    if d.c_out * d.c_in * d.kh * d.kw * d.oh * d.ow >= PAR_FLOPS {
        out.par_chunks_mut(d.oh * d.ow)
            .enumerate()
            .for_each(|(co, out_plane)| plane(out_plane, co));
    } else {
        for (co, out_plane) in out.chunks_mut(d.oh * d.ow).enumerate() {
            plane(out_plane, co);
        }
    }
}

/// Input gradient: scatter of `gy * weight`, parallel over input channels.
pub fn conv2d_bwd_input(gy: &[f64], weight: &[f64], d: ConvDims, d_input: &mut [f64]) {
    debug_assert_eq!(gy.len(), d.c_out * d.oh * d.ow);
    debug_assert_eq!(d_input.len(), d.c_in * d.h * d.w);
    let plane = |din_plane: &mut [f64], ci: usize| {
        for co in 0..d.c_out {
            let gy_plane = &gy[co * d.oh * d.ow..(co + 1) * d.oh * d.ow];
            for ky in 0..d.kh {
                let (oy_lo, oy_hi) = conv_range(ky, d.padding, d.stride, d.h, d.oh);
                for kx in 0..d.kw {
                    let wv = weight[((co * d.c_in + ci) * d.kh + ky) * d.kw + kx];
                    if wv == 0.0 {
                        continue;
                    }
                    let (ox_lo, ox_hi) = conv_range(kx, d.padding, d.stride, d.w, d.ow);
                    if ox_lo >= ox_hi {
                        continue;
                    }
                    for oy in oy_lo..oy_hi {
                        let iy = oy * d.stride + ky - d.padding;
                        let din_row = &mut din_plane[iy * d.w..(iy + 1) * d.w];
                        let gy_row = &gy_plane[oy * d.ow..(oy + 1) * d.ow];
                        let ix_lo = ox_lo * d.stride + kx - d.padding;
                        if d.stride == 1 {
                            let dst = &mut din_row[ix_lo..ix_lo + (ox_hi - ox_lo)];
                            for (o, &g) in dst.iter_mut().zip(&gy_row[ox_lo..ox_hi]) {
                                *o += wv * g;
                            }
                        } else {
                            let mut ix = ix_lo;
                            for &g in gy_row[ox_lo..ox_hi].iter() {
                                din_row[ix] += wv * g;
                                ix += d.stride;
                            }
                        }
                    }
                }
            }
        }
    };
    if d.c_out * d.c_in * d.kh * d.kw * d.oh * d.ow >= PAR_FLOPS {
        d_input
            .par_chunks_mut(d.h * d.w)
            .enumerate()
            .for_each(|(ci, din_plane)| plane(din_plane, ci));
    } else {
        for (ci, din_plane) in d_input.chunks_mut(d.h * d.w).enumerate() {
            plane(din_plane, ci);
        }
    }
}

/// Weight gradient, parallel over output channels.
pub fn conv2d_bwd_weight(input: &[f64], gy: &[f64], d: ConvDims, d_weight: &mut [f64]) {
    debug_assert_eq!(d_weight.len(), d.c_out * d.c_in * d.kh * d.kw);
    let block = |dw_block: &mut [f64], co: usize| {
        let gy_plane = &gy[co * d.oh * d.ow..(co + 1) * d.oh * d.ow];
        for ci in 0..d.c_in {
            let in_plane = &input[ci * d.h * d.w..(ci + 1) * d.h * d.w];
            for ky in 0..d.kh {
                let (oy_lo, oy_hi) = conv_range(ky, d.padding, d.stride, d.h, d.oh);
                for kx in 0..d.kw {
                    let (ox_lo, ox_hi) = conv_range(kx, d.padding, d.stride, d.w, d.ow);
                    if ox_lo >= ox_hi {
                        continue;
                    }
                    let mut acc = 0.0;
                    for oy in oy_lo..oy_hi {
                        let iy = oy * d.stride + ky - d.padding;
                        let in_row = &in_plane[iy * d.w..(iy + 1) * d.w];
                        let gy_row = &gy_plane[oy * d.ow..(oy + 1) * d.ow];
                        let ix_lo = ox_lo * d.stride + kx - d.padding;
                        if d.stride == 1 {
                            let src = &in_row[ix_lo..ix_lo + (ox_hi - ox_lo)];
                            for (&v, &g) in src.iter().zip(&gy_row[ox_lo..ox_hi]) {
                                acc += v * g;
                            }
                        } else {
                            let mut ix = ix_lo;
                            for &g in gy_row[ox_lo..ox_hi].iter() {
                                acc += in_row[ix] * g;
                                ix += d.stride;
                            }
                        }
                    }
                    dw_block[(ci * d.kh + ky) * d.kw + kx] += acc;
                }
            }
        }
    };
    let per_co = d.c_in * d.kh * d.kw;
    if d.c_out * per_co * d.oh * d.ow >= PAR_FLOPS {
        d_weight
            .par_chunks_mut(per_co)
            .enumerate()
            .for_each(|(co, dw_block)| block(dw_block, co));
    } else {
        for (co, dw_block) in d_weight.chunks_mut(per_co).enumerate() {
            block(dw_block, co);
        }
    }
}

pub fn conv2d_bwd_bias(gy: &[f64], d: ConvDims, d_bias: &mut [f64]) {
    debug_assert_eq!(d_bias.len(), d.c_out);
    for (co, db) in d_bias.iter_mut().enumerate() {
        let gy_plane = &gy[co * d.oh * d.ow..(co + 1) * d.oh * d.ow];
        *db += gy_plane.iter().sum::<f64>();
    }
}

/// Nearest-neighbor 2x upsample of a CHW plane stack; `oh`/`ow` may be one
/// short of `2h`/`2w` so decoder levels can match odd encoder sizes.
pub fn upsample2x_fwd(input: &[f64], c: usize, h: usize, w: usize, oh: usize, ow: usize, out: &mut [f64]) {
    debug_assert!(oh == 2 * h || oh + 1 == 2 * h);
    debug_assert!(ow == 2 * w || ow + 1 == 2 * w);
    debug_assert_eq!(out.len(), c * oh * ow);
    for ch in 0..c {
        let in_plane = &input[ch * h * w..(ch + 1) * h * w];
        let out_plane = &mut out[ch * oh * ow..(ch + 1) * oh * ow];
        for oy in 0..oh {
            let iy = oy / 2;
            let in_row = &in_plane[iy * w..(iy + 1) * w];
            let out_row = &mut out_plane[oy * ow..(oy + 1) * ow];
            for (ox, o) in out_row.iter_mut().enumerate() {
                *o = in_row[ox / 2];
            }
        }
    }
}

pub fn upsample2x_bwd(gy: &[f64], c: usize, h: usize, w: usize, oh: usize, ow: usize, d_input: &mut [f64]) {
    debug_assert_eq!(d_input.len(), c * h * w);
    for ch in 0..c {
        let gy_plane = &gy[ch * oh * ow..(ch + 1) * oh * ow];
        let din_plane = &mut d_input[ch * h * w..(ch + 1) * h * w];
        for oy in 0..oh {
            let iy = oy / 2;
            for ox in 0..ow {
                din_plane[iy * w + ox / 2] += gy_plane[oy * ow + ox];
            }
        }
    }
}

/// Gathers bilinear samples of a CHW stack at fractional pixel positions:
/// `out[i, ch]` blends the four neighbors of `coords[i]`. Coordinates must
/// already be clamped to `[0, w-1] x [0, h-1]`.
pub fn bilinear_gather_fwd(
    map: &[f64],
    c: usize,
    h: usize,
    w: usize,
    coords: &[(f64, f64)],
    out: &mut [f64],
) {
    debug_assert_eq!(out.len(), coords.len() * c);
    for (i, &(x, y)) in coords.iter().enumerate() {
        let (x0, y0, x1, y1, fx, fy) = crate::grid::bilinear_setup(w, h, x, y);
        let w00 = (1.0 - fx) * (1.0 - fy);
        let w10 = fx * (1.0 - fy);
        let w01 = (1.0 - fx) * fy;
        let w11 = fx * fy;
        let out_row = &mut out[i * c..(i + 1) * c];
        for (ch, o) in out_row.iter_mut().enumerate() {
            let plane = &map[ch * h * w..(ch + 1) * h * w];
            *o = plane[y0 * w + x0] * w00
                + plane[y0 * w + x1] * w10
                + plane[y1 * w + x0] * w01
                + plane[y1 * w + x1] * w11;
        }
    }
}

pub fn bilinear_gather_bwd(
    gy: &[f64],
    c: usize,
    h: usize,
    w: usize,
    coords: &[(f64, f64)],
    d_map: &mut [f64],
) {
    debug_assert_eq!(gy.len(), coords.len() * c);
    debug_assert_eq!(d_map.len(), c * h * w);
    for (i, &(x, y)) in coords.iter().enumerate() {
        let (x0, y0, x1, y1, fx, fy) = crate::grid::bilinear_setup(w, h, x, y);
        let w00 = (1.0 - fx) * (1.0 - fy);
        let w10 = fx * (1.0 - fy);
        let w01 = (1.0 - fx) * fy;
        let w11 = fx * fy;
        let gy_row = &gy[i * c..(i + 1) * c];
        for (ch, &g) in gy_row.iter().enumerate() {
            let plane = &mut d_map[ch * h * w..(ch + 1) * h * w];
            plane[y0 * w + x0] += g * w00;
            plane[y0 * w + x1] += g * w10;
            plane[y1 * w + x0] += g * w01;
            plane[y1 * w + x1] += g * w11;
        }
    }
}
