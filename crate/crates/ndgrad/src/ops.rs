//! Batched kernels over flat NCHW buffers.

use crate::scalar::{matmul, Scalar};

#[derive(Clone, Copy, Debug)]
pub struct ConvGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl ConvGeom {
    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.padding - self.kernel) / self.stride + 1
    }

    fn is_pointwise(&self) -> bool {
        self.kernel == 1 && self.stride == 1 && self.padding == 0
    }

    fn col_rows(&self) -> usize {
        self.channels * self.kernel * self.kernel
    }
}

fn im2col<T: Scalar>(x: &[T], g: &ConvGeom, cols: &mut [T]) {
    let (ho, wo) = (g.out_height(), g.out_width());
    let k = g.kernel;
    for c in 0..g.channels {
        let plane = &x[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let dst = &mut cols[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ki) as isize - g.padding as isize;
                    let dst_row = &mut dst[oy * wo..(oy + 1) * wo];
                    if iy < 0 || iy >= g.height as isize {
                        dst_row.iter_mut().for_each(|v| *v = T::zero());
                        continue;
                    }
                    let src = &plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for (ox, d) in dst_row.iter_mut().enumerate() {
                        let ix = (ox * g.stride + kj) as isize - g.padding as isize;
                        *d = if ix < 0 || ix >= g.width as isize {
                            T::zero()
                        } else {
                            src[ix as usize]
                        };
                    }
                }
            }
        }
    }
}

fn col2im_add<T: Scalar>(cols: &[T], g: &ConvGeom, dx: &mut [T]) {
    let (ho, wo) = (g.out_height(), g.out_width());
    let k = g.kernel;
    for c in 0..g.channels {
        let plane = &mut dx[c * g.height * g.width..(c + 1) * g.height * g.width];
        for ki in 0..k {
            for kj in 0..k {
                let row = (c * k + ki) * k + kj;
                let src = &cols[row * ho * wo..(row + 1) * ho * wo];
                for oy in 0..ho {
                    let iy = (oy * g.stride + ki) as isize - g.padding as isize;
                    if iy < 0 || iy >= g.height as isize {
                        continue;
                    }
                    let dst = &mut plane[iy as usize * g.width..(iy as usize + 1) * g.width];
                    for ox in 0..wo {
                        let ix = (ox * g.stride + kj) as isize - g.padding as isize;
                        if ix >= 0 && (ix as usize) < g.width {
                            dst[ix as usize] += src[oy * wo + ox];
                        }
                    }
                }
            }
        }
    }
}

pub fn conv2d_forward<T: Scalar>(x: &[T], batch: usize, g: &ConvGeom, weight: &[T], bias: &[T]) -> Vec<T> {
    let in_len = g.channels * g.height * g.width;
    let hw = g.out_height() * g.out_width();
    let out_len = g.out_channels * hw;
    let kdim = g.col_rows();
    let mut out = vec![T::zero(); batch * out_len];
    let mut cols = if g.is_pointwise() { Vec::new() } else { vec![T::zero(); kdim * hw] };
    for b in 0..batch {
        let xb = &x[b * in_len..(b + 1) * in_len];
        let ob = &mut out[b * out_len..(b + 1) * out_len];
        let src: &[T] = if g.is_pointwise() {
            xb
        } else {
            im2col(xb, g, &mut cols);
            &cols
        };
        matmul(g.out_channels, kdim, hw, weight, false, src, false, ob, T::one(), T::zero());
        for (o, chunk) in ob.chunks_exact_mut(hw).enumerate() {
            let bv = bias[o];
            chunk.iter_mut().for_each(|v| *v += bv);
        }
    }
    out
}

/// Accumulates into `dweight`/`dbias`; writes (not accumulates) `dx` when given.
#[allow(clippy::too_many_arguments)]
pub fn conv2d_backward<T: Scalar>(
    x: &[T],
    dy: &[T],
    batch: usize,
    g: &ConvGeom,
    weight: &[T],
    dweight: &mut [T],
    dbias: &mut [T],
    mut dx: Option<&mut [T]>,
) {
    let in_len = g.channels * g.height * g.width;
    let hw = g.out_height() * g.out_width();
    let out_len = g.out_channels * hw;
    let kdim = g.col_rows();
    let pointwise = g.is_pointwise();
    let mut cols = if pointwise { Vec::new() } else { vec![T::zero(); kdim * hw] };
    let mut dcols = if pointwise || dx.is_none() { Vec::new() } else { vec![T::zero(); kdim * hw] };
    if let Some(d) = dx.as_deref_mut() {
        d.iter_mut().for_each(|v| *v = T::zero());
    }
    for b in 0..batch {
        let xb = &x[b * in_len..(b + 1) * in_len];
        let dyb = &dy[b * out_len..(b + 1) * out_len];
        for (o, chunk) in dyb.chunks_exact(hw).enumerate() {
            dbias[o] += chunk.iter().copied().sum::<T>();
        }
        let src: &[T] = if pointwise {
            xb
        } else {
            im2col(xb, g, &mut cols);
            &cols
        };
        matmul(g.out_channels, hw, kdim, dyb, false, src, true, dweight, T::one(), T::one());
        if let Some(d) = dx.as_deref_mut() {
            let dxb = &mut d[b * in_len..(b + 1) * in_len];
            if pointwise {
                matmul(kdim, g.out_channels, hw, weight, true, dyb, false, dxb, T::one(), T::zero());
            } else {
                matmul(kdim, g.out_channels, hw, weight, true, dyb, false, &mut dcols, T::one(), T::zero());
                col2im_add(&dcols, g, dxb);
            }
        }
    }
}

/// Per-channel batch statistics over (batch, spatial).
pub fn channel_stats<T: Scalar>(x: &[T], batch: usize, channels: usize, spatial: usize) -> (Vec<T>, Vec<T>) {
    let n = T::from_usize(batch * spatial).unwrap();
    let mut mean = vec![T::zero(); channels];
    let mut var = vec![T::zero(); channels];
    for b in 0..batch {
        for c in 0..channels {
            let off = (b * channels + c) * spatial;
            mean[c] += x[off..off + spatial].iter().copied().sum::<T>();
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    for b in 0..batch {
        for c in 0..channels {
            let off = (b * channels + c) * spatial;
            let m = mean[c];
            var[c] += x[off..off + spatial].iter().map(|&v| (v - m) * (v - m)).sum::<T>();
        }
    }
    var.iter_mut().for_each(|v| *v /= n);
    (mean, var)
}

pub struct MaxPoolGeom {
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
}

impl MaxPoolGeom {
    pub fn out_height(&self) -> usize {
        (self.height + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn out_width(&self) -> usize {
        (self.width + 2 * self.padding - self.kernel) / self.stride + 1
    }
}

/// Returns pooled values and, per output, the flat argmax index within the sample.
pub fn maxpool_forward<T: Scalar>(x: &[T], batch: usize, g: &MaxPoolGeom) -> (Vec<T>, Vec<u32>) {
    let (ho, wo) = (g.out_height(), g.out_width());
    let in_len = g.channels * g.height * g.width;
    let out_len = g.channels * ho * wo;
    let mut out = vec![T::zero(); batch * out_len];
    let mut arg = vec![0u32; batch * out_len];
    for b in 0..batch {
        let xb = &x[b * in_len..(b + 1) * in_len];
        for c in 0..g.channels {
            for oy in 0..ho {
                for ox in 0..wo {
                    let mut best = T::neg_infinity();
                    let mut best_idx = 0usize;
                    for ki in 0..g.kernel {
                        let iy = (oy * g.stride + ki) as isize - g.padding as isize;
                        if iy < 0 || iy >= g.height as isize {
                            continue;
                        }
                        for kj in 0..g.kernel {
                            let ix = (ox * g.stride + kj) as isize - g.padding as isize;
                            if ix < 0 || ix >= g.width as isize {
                                continue;
                            }
                            let idx = (c * g.height + iy as usize) * g.width + ix as usize;
                            if xb[idx] > best {
                                best = xb[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    let o = b * out_len + (c * ho + oy) * wo + ox;
                    out[o] = best;
                    arg[o] = best_idx as u32;
                }
            }
        }
    }
    (out, arg)
}
