//! Raw forward and adjoint kernels. Shapes are validated by the graph layer;
//! everything here assumes consistent extents.
//!
//! Parallel loops split work by independent output planes, so every output
//! scalar is accumulated by one thread in a fixed order and results do not
//! depend on the thread count.

use rayon::prelude::*;

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeometry {
    pub stride: usize,
    pub padding: usize,
}

/// Output extent of a strided, padded correlation along one axis.
pub fn conv_out_extent(input: usize, kernel: usize, geom: ConvGeometry) -> Result<usize> {
    let padded = input + 2 * geom.padding;
    if geom.stride == 0 || padded < kernel || (padded - kernel) % geom.stride != 0 {
        return Err(Error::Config(format!(
            "conv extent {input} with kernel {kernel}, stride {}, padding {} is not integral",
            geom.stride, geom.padding
        )));
    }
    Ok((padded - kernel) / geom.stride + 1)
}

/// Range of output positions `o` for which `o * stride + k - padding` lands
/// inside `[0, input)`.
#[inline]
fn valid_range(out: usize, input: usize, k: usize, geom: ConvGeometry) -> (usize, usize) {
    let s = geom.stride as isize;
    let off = k as isize - geom.padding as isize;
    // o*s + off >= 0  and  o*s + off <= input - 1
    let lo = if off >= 0 { 0 } else { (-off + s - 1) / s };
    let hi_num = input as isize - 1 - off;
    let hi = if hi_num < 0 { -1 } else { hi_num / s };
    let lo = lo.max(0) as usize;
    let hi = (hi + 1).min(out as isize).max(0) as usize;
    (lo, hi.max(lo))
}

/// Cross-correlation `out[b,co] = bias[co] + sum_ci w[co,ci] * in[b,ci]`.
pub fn conv2d(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    geom: ConvGeometry,
) -> Result<Tensor> {
    let (b, cin, h, w) = input.dims4()?;
    let (cout, wcin, kh, kw) = weight.dims4()?;
    if wcin != cin {
        return Err(Error::Config(format!(
            "conv2d: input has {cin} channels but weight expects {wcin}"
        )));
    }
    let oh = conv_out_extent(h, kh, geom)?;
    let ow = conv_out_extent(w, kw, geom)?;
    let x = input.data();
    let wt = weight.data();
    let mut out = vec![0.0; b * cout * oh * ow];
    out.par_chunks_mut(oh * ow)
        .enumerate()
        .for_each(|(plane, dst)| {
            let (bi, co) = (plane / cout, plane % cout);
            if let Some(bias) = bias {
                dst.fill(bias.data()[co]);
            }
            for ci in 0..cin {
                let src = &x[(bi * cin + ci) * h * w..(bi * cin + ci + 1) * h * w];
                for ky in 0..kh {
                    let (oy0, oy1) = valid_range(oh, h, ky, geom);
                    for kx in 0..kw {
                        let wv = wt[((co * cin + ci) * kh + ky) * kw + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        let (ox0, ox1) = valid_range(ow, w, kx, geom);
                        for oy in oy0..oy1 {
                            let iy = oy * geom.stride + ky - geom.padding;
                            let row = &src[iy * w..(iy + 1) * w];
                            let drow = &mut dst[oy * ow..(oy + 1) * ow];
                            if geom.stride == 1 {
                                let ix0 = ox0 + kx - geom.padding;
                                let len = ox1 - ox0;
                                for (d, s) in drow[ox0..ox1].iter_mut().zip(&row[ix0..ix0 + len]) {
                                    *d += wv * s;
                                }
                            } else {
                                for ox in ox0..ox1 {
                                    drow[ox] += wv * row[ox * geom.stride + kx - geom.padding];
                                }
                            }
                        }
                    }
                }
            }
        });
    Tensor::new(vec![b, cout, oh, ow], out)
}

/// Adjoint of [`conv2d`] with respect to its input. `in_hw` is the spatial
/// extent of the forward input.
pub fn conv2d_grad_input(
    grad_out: &Tensor,
    weight: &Tensor,
    in_hw: (usize, usize),
    geom: ConvGeometry,
) -> Result<Tensor> {
    let (b, cout, oh, ow) = grad_out.dims4()?;
    let (wcout, cin, kh, kw) = weight.dims4()?;
    if wcout != cout {
        return Err(Error::Config(format!(
            "conv adjoint: gradient has {cout} channels but weight produces {wcout}"
        )));
    }
    let (h, w) = in_hw;
    let g = grad_out.data();
    let wt = weight.data();
    let mut out = vec![0.0; b * cin * h * w];
    out.par_chunks_mut(h * w)
        .enumerate()
        .for_each(|(plane, dst)| {
            let (bi, ci) = (plane / cin, plane % cin);
            for co in 0..cout {
                let src = &g[(bi * cout + co) * oh * ow..(bi * cout + co + 1) * oh * ow];
                for ky in 0..kh {
                    let (oy0, oy1) = valid_range(oh, h, ky, geom);
                    for kx in 0..kw {
                        let wv = wt[((co * cin + ci) * kh + ky) * kw + kx];
                        if wv == 0.0 {
                            continue;
                        }
                        let (ox0, ox1) = valid_range(ow, w, kx, geom);
                        for oy in oy0..oy1 {
                            let iy = oy * geom.stride + ky - geom.padding;
                            let grow = &src[oy * ow..(oy + 1) * ow];
                            let drow = &mut dst[iy * w..(iy + 1) * w];
                            if geom.stride == 1 {
                                let ix0 = ox0 + kx - geom.padding;
                                let len = ox1 - ox0;
                                for (d, s) in drow[ix0..ix0 + len].iter_mut().zip(&grow[ox0..ox1]) {
                                    *d += wv * s;
                                }
                            } else {
                                for ox in ox0..ox1 {
                                    drow[ox * geom.stride + kx - geom.padding] += wv * grow[ox];
                                }
                            }
                        }
                    }
                }
            }
        });
    Tensor::new(vec![b, cin, h, w], out)
}

/// Gradient of [`conv2d`] with respect to its weight.
pub fn conv2d_grad_weight(
    grad_out: &Tensor,
    input: &Tensor,
    kernel: (usize, usize),
    geom: ConvGeometry,
) -> Result<Tensor> {
    let (b, cout, oh, ow) = grad_out.dims4()?;
    let (ib, cin, h, w) = input.dims4()?;
    if ib != b {
        return Err(Error::shape("conv2d_grad_weight", format!("batch {ib} vs {b}")));
    }
    let (kh, kw) = kernel;
    let g = grad_out.data();
    let x = input.data();
    let mut out = vec![0.0; cout * cin * kh * kw];
    out.par_chunks_mut(cin * kh * kw)
        .enumerate()
        .for_each(|(co, dst)| {
            for ci in 0..cin {
                for ky in 0..kh {
                    let (oy0, oy1) = valid_range(oh, h, ky, geom);
                    for kx in 0..kw {
                        let (ox0, ox1) = valid_range(ow, w, kx, geom);
                        let mut acc = 0.0;
                        for bi in 0..b {
                            let gsrc = &g[(bi * cout + co) * oh * ow..(bi * cout + co + 1) * oh * ow];
                            let xsrc = &x[(bi * cin + ci) * h * w..(bi * cin + ci + 1) * h * w];
                            for oy in oy0..oy1 {
                                let iy = oy * geom.stride + ky - geom.padding;
                                let grow = &gsrc[oy * ow..(oy + 1) * ow];
                                let xrow = &xsrc[iy * w..(iy + 1) * w];
                                if geom.stride == 1 {
                                    let ix0 = ox0 + kx - geom.padding;
                                    let len = ox1 - ox0;
                                    acc += grow[ox0..ox1]
                                        .iter()
                                        .zip(&xrow[ix0..ix0 + len])
                                        .map(|(a, b)| a * b)
                                        .sum::<f64>();
                                } else {
                                    for ox in ox0..ox1 {
                                        acc += grow[ox] * xrow[ox * geom.stride + kx - geom.padding];
                                    }
                                }
                            }
                        }
                        dst[(ci * kh + ky) * kw + kx] = acc;
                    }
                }
            }
        });
    Tensor::new(vec![cout, cin, kh, kw], out)
}

/// Per-channel sum over batch and space of a rank-4 tensor.
pub fn channel_sums(t: &Tensor) -> Result<Vec<f64>> {
    let (b, c, h, w) = t.dims4()?;
    let d = t.data();
    Ok((0..c)
        .map(|ci| {
            (0..b)
                .map(|bi| d[(bi * c + ci) * h * w..(bi * c + ci + 1) * h * w].iter().sum::<f64>())
                .sum()
        })
        .collect())
}

/// Transposed convolution with weight laid out `[cin, cout, k, k]`, no
/// padding. Output extent is `(h - 1) * stride + k`.
pub fn conv_transpose2d(
    input: &Tensor,
    weight: &Tensor,
    bias: Option<&Tensor>,
    stride: usize,
) -> Result<Tensor> {
    let (_, cin, h, w) = input.dims4()?;
    let (wcin, cout, kh, kw) = weight.dims4()?;
    if wcin != cin {
        return Err(Error::Config(format!(
            "conv_transpose2d: input has {cin} channels but weight expects {wcin}"
        )));
    }
    let geom = ConvGeometry { stride, padding: 0 };
    let oh = (h - 1) * stride + kh;
    let ow = (w - 1) * stride + kw;
    let mut out = conv2d_grad_input(input, weight, (oh, ow), geom)?;
    if let Some(bias) = bias {
        let plane = oh * ow;
        for (i, chunk) in out.data_mut().chunks_mut(plane).enumerate() {
            let bv = bias.data()[i % cout];
            chunk.iter_mut().for_each(|v| *v += bv);
        }
    }
    Ok(out)
}

/// Saved statistics of a batch-norm forward pass.
#[derive(Clone, Debug)]
pub struct BnForward {
    pub output: Tensor,
    pub xhat: Tensor,
    pub inv_std: Vec<f64>,
    pub batch_mean: Vec<f64>,
    /// Biased batch variance.
    pub batch_var: Vec<f64>,
}

/// `gamma * (x - mean) / sqrt(var + eps) + beta` per channel. With `stats`
/// set, the given mean/variance are used; otherwise batch statistics.
pub fn batchnorm(
    input: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    stats: Option<(&[f64], &[f64])>,
    eps: f64,
) -> Result<BnForward> {
    let (b, c, h, w) = input.dims4()?;
    if gamma.numel() != c || beta.numel() != c {
        return Err(Error::Config(format!(
            "batchnorm: {c} channels but affine parameters have {} / {}",
            gamma.numel(),
            beta.numel()
        )));
    }
    let n = (b * h * w) as f64;
    let x = input.data();
    let plane = h * w;
    let (mean, var) = match stats {
        Some((m, v)) => (m.to_vec(), v.to_vec()),
        None => {
            let mut mean = vec![0.0; c];
            let mut var = vec![0.0; c];
            for ci in 0..c {
                let mut s = 0.0;
                for bi in 0..b {
                    s += x[(bi * c + ci) * plane..(bi * c + ci + 1) * plane].iter().sum::<f64>();
                }
                let mu = s / n;
                let mut q = 0.0;
                for bi in 0..b {
                    q += x[(bi * c + ci) * plane..(bi * c + ci + 1) * plane]
                        .iter()
                        .map(|v| (v - mu) * (v - mu))
                        .sum::<f64>();
                }
                mean[ci] = mu;
                var[ci] = q / n;
            }
            (mean, var)
        }
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let mut xhat = vec![0.0; x.len()];
    let mut out = vec![0.0; x.len()];
    for bi in 0..b {
        for ci in 0..c {
            let range = (bi * c + ci) * plane..(bi * c + ci + 1) * plane;
            let (g, bt) = (gamma.data()[ci], beta.data()[ci]);
            for i in range {
                let xh = (x[i] - mean[ci]) * inv_std[ci];
                xhat[i] = xh;
                out[i] = g * xh + bt;
            }
        }
    }
    let shape = input.shape().to_vec();
    Ok(BnForward {
        output: Tensor::new(shape.clone(), out)?,
        xhat: Tensor::new(shape, xhat)?,
        inv_std,
        batch_mean: mean,
        batch_var: var,
    })
}

/// Input gradient of batch norm. `train` selects the batch-statistics adjoint.
pub fn batchnorm_grad_input(
    grad_out: &Tensor,
    xhat: &Tensor,
    gamma: &Tensor,
    inv_std: &[f64],
    train: bool,
) -> Result<Tensor> {
    let (b, c, h, w) = grad_out.dims4()?;
    let plane = h * w;
    let n = (b * plane) as f64;
    let g = grad_out.data();
    let xh = xhat.data();
    let mut out = vec![0.0; g.len()];
    for ci in 0..c {
        let scale = gamma.data()[ci] * inv_std[ci];
        let (mut sum_g, mut sum_gx) = (0.0, 0.0);
        if train {
            for bi in 0..b {
                for i in (bi * c + ci) * plane..(bi * c + ci + 1) * plane {
                    sum_g += g[i];
                    sum_gx += g[i] * xh[i];
                }
            }
        }
        for bi in 0..b {
            for i in (bi * c + ci) * plane..(bi * c + ci + 1) * plane {
                out[i] = if train {
                    scale * (g[i] - sum_g / n - xh[i] * sum_gx / n)
                } else {
                    scale * g[i]
                };
            }
        }
    }
    Tensor::new(grad_out.shape().to_vec(), out)
}

/// 2x2 max pooling with stride 2; also returns the flat argmax per output.
pub fn max_pool2(input: &Tensor) -> Result<(Tensor, Vec<usize>)> {
    let (b, c, h, w) = input.dims4()?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Config(format!(
            "max_pool2 needs even extents, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(b * c * oh * ow);
    let mut arg = Vec::with_capacity(b * c * oh * ow);
    for p in 0..b * c {
        let base = p * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let mut best = base + 2 * oy * w + 2 * ox;
                for (dy, dx) in [(0, 1), (1, 0), (1, 1)] {
                    let idx = base + (2 * oy + dy) * w + 2 * ox + dx;
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                arg.push(best);
            }
        }
    }
    Ok((Tensor::new(vec![b, c, oh, ow], out)?, arg))
}

/// `y[b, o] = bias[o] + sum_i w[o, i] x[b, i]`.
pub fn dense(input: &Tensor, weight: &Tensor, bias: Option<&Tensor>) -> Result<Tensor> {
    let (b, cin) = input.dims2()?;
    let (cout, wcin) = weight.dims2()?;
    if wcin != cin {
        return Err(Error::Config(format!(
            "dense: input has {cin} features but weight expects {wcin}"
        )));
    }
    let x = input.data();
    let wt = weight.data();
    let mut out = vec![0.0; b * cout];
    for bi in 0..b {
        for o in 0..cout {
            let mut acc = bias.map_or(0.0, |t| t.data()[o]);
            for i in 0..cin {
                acc += wt[o * cin + i] * x[bi * cin + i];
            }
            out[bi * cout + o] = acc;
        }
    }
    Tensor::new(vec![b, cout], out)
}
