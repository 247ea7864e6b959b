//! Direct-loop convolution, kept as the independent oracle for the im2col path.

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{conv_output_len, ConvGrads, Tensor};

struct Dims {
    n: usize,
    ci: usize,
    h: usize,
    w: usize,
    co: usize,
    kh: usize,
    kw: usize,
    oh: usize,
    ow: usize,
}

fn geometry<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Dims> {
    let (n, ci, h, w) = input.dims4("conv2d_direct")?;
    let (co, wi, kh, kw) = weight.dims4("conv2d_direct")?;
    if wi != ci {
        return Err(Error::dim("conv2d_direct", "channel mismatch"));
    }
    let oh = conv_output_len(h, kh, stride, padding)
        .ok_or_else(|| Error::dim("conv2d_direct", "kernel does not fit"))?;
    let ow = conv_output_len(w, kw, stride, padding)
        .ok_or_else(|| Error::dim("conv2d_direct", "kernel does not fit"))?;
    Ok(Dims {
        n,
        ci,
        h,
        w,
        co,
        kh,
        kw,
        oh,
        ow,
    })
}

/// Seven nested loops, no lowering.
pub fn conv2d_forward_direct<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let Dims {
        n,
        ci,
        h,
        w,
        co,
        kh,
        kw,
        oh,
        ow,
    } = geometry(input, weight, stride, padding)?;
    let x = input.data();
    let k = weight.data();
    let mut out = vec![T::zero(); n * co * oh * ow];
    for b in 0..n {
        for o in 0..co {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = bias.data()[o];
                    for i in 0..ci {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - padding as isize;
                                let ix = (ox * stride + kx) as isize - padding as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                acc += x[((b * ci + i) * h + iy as usize) * w + ix as usize]
                                    * k[((o * ci + i) * kh + ky) * kw + kx];
                            }
                        }
                    }
                    out[((b * co + o) * oh + oy) * ow + ox] = acc;
                }
            }
        }
    }
    Tensor::from_vec(&[n, co, oh, ow], out)
}

/// Scatter-form backward written straight from the forward loop nest.
pub fn conv2d_backward_direct<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_output: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<ConvGrads<T>> {
    let Dims {
        n,
        ci,
        h,
        w,
        co,
        kh,
        kw,
        oh,
        ow,
    } = geometry(input, weight, stride, padding)?;
    if grad_output.dims() != [n, co, oh, ow] {
        return Err(Error::dim("conv2d_backward_direct", "grad_output shape"));
    }
    let x = input.data();
    let k = weight.data();
    let go = grad_output.data();
    let mut gx = vec![T::zero(); x.len()];
    let mut gk = vec![T::zero(); k.len()];
    let mut gb = vec![T::zero(); co];
    for b in 0..n {
        for o in 0..co {
            for oy in 0..oh {
                for ox in 0..ow {
                    let g = go[((b * co + o) * oh + oy) * ow + ox];
                    gb[o] += g;
                    for i in 0..ci {
                        for ky in 0..kh {
                            for kx in 0..kw {
                                let iy = (oy * stride + ky) as isize - padding as isize;
                                let ix = (ox * stride + kx) as isize - padding as isize;
                                if iy < 0 || ix < 0 || iy >= h as isize || ix >= w as isize {
                                    continue;
                                }
                                let xi = ((b * ci + i) * h + iy as usize) * w + ix as usize;
                                let ki = ((o * ci + i) * kh + ky) * kw + kx;
                                gx[xi] += g * k[ki];
                                gk[ki] += g * x[xi];
                            }
                        }
                    }
                }
            }
        }
    }
    Ok(ConvGrads {
        input: Tensor::from_vec(input.dims(), gx)?,
        weight: Tensor::from_vec(weight.dims(), gk)?,
        bias: Tensor::from_vec(&[co], gb)?,
    })
}
