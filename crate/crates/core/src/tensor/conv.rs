//! 2-D convolution lowered to a matrix product through im2col.

use crate::error::{Error, Result};
use crate::scalar::{gemm, Scalar, Transpose};

use super::{Shape, Tensor};

/// Output extent along one spatial axis, or `None` if the kernel does not fit.
pub fn conv_output_len(input: usize, kernel: usize, stride: usize, padding: usize) -> Option<usize> {
    if stride == 0 || input + 2 * padding < kernel {
        return None;
    }
    Some((input + 2 * padding - kernel) / stride + 1)
}

#[derive(Clone, Copy, Debug)]
struct Geometry {
    n: usize,
    in_c: usize,
    h: usize,
    w: usize,
    out_c: usize,
    kh: usize,
    kw: usize,
    out_h: usize,
    out_w: usize,
    stride: usize,
    padding: usize,
}

impl Geometry {
    fn new<T: Scalar>(
        input: &Tensor<T>,
        weight: &Tensor<T>,
        stride: usize,
        padding: usize,
    ) -> Result<Self> {
        let (n, in_c, h, w) = input.dims4("conv2d")?;
        let (out_c, w_in, kh, kw) = weight.dims4("conv2d")?;
        if w_in != in_c {
            return Err(Error::dim(
                "conv2d",
                format!("input has {in_c} channels, weight expects {w_in}"),
            ));
        }
        if stride == 0 {
            return Err(Error::Precondition("conv2d stride must be >= 1".into()));
        }
        let (out_h, out_w) = match (
            conv_output_len(h, kh, stride, padding),
            conv_output_len(w, kw, stride, padding),
        ) {
            (Some(oh), Some(ow)) => (oh, ow),
            _ => {
                return Err(Error::dim(
                    "conv2d",
                    format!("kernel {kh}x{kw} does not fit input {h}x{w} with padding {padding}"),
                ))
            }
        };
        Ok(Geometry {
            n,
            in_c,
            h,
            w,
            out_c,
            kh,
            kw,
            out_h,
            out_w,
            stride,
            padding,
        })
    }

    #[inline]
    fn patch_len(&self) -> usize {
        self.in_c * self.kh * self.kw
    }

    #[inline]
    fn positions(&self) -> usize {
        self.out_h * self.out_w
    }

    /// Unfolds one image into a `[in_c*kh*kw, out_h*out_w]` column matrix.
    fn im2col<T: Scalar>(&self, image: &[T], col: &mut [T]) {
        let p = self.positions();
        for c in 0..self.in_c {
            let plane = &image[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (c * self.kh + ky) * self.kw + kx;
                    let dst = &mut col[row * p..(row + 1) * p];
                    for oy in 0..self.out_h {
                        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                        let line = &mut dst[oy * self.out_w..(oy + 1) * self.out_w];
                        if iy < 0 || iy >= self.h as isize {
                            line.fill(T::zero());
                            continue;
                        }
                        let src = &plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        for (ox, slot) in line.iter_mut().enumerate() {
                            let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                            *slot = if ix < 0 || ix >= self.w as isize {
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

    /// Folds a column-gradient matrix back onto one image, accumulating.
    fn col2im<T: Scalar>(&self, col: &[T], image: &mut [T]) {
        let p = self.positions();
        for c in 0..self.in_c {
            let plane = &mut image[c * self.h * self.w..(c + 1) * self.h * self.w];
            for ky in 0..self.kh {
                for kx in 0..self.kw {
                    let row = (c * self.kh + ky) * self.kw + kx;
                    let src = &col[row * p..(row + 1) * p];
                    for oy in 0..self.out_h {
                        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                        if iy < 0 || iy >= self.h as isize {
                            continue;
                        }
                        let dst = &mut plane[iy as usize * self.w..(iy as usize + 1) * self.w];
                        let line = &src[oy * self.out_w..(oy + 1) * self.out_w];
                        for (ox, &g) in line.iter().enumerate() {
                            let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                            if ix >= 0 && ix < self.w as isize {
                                dst[ix as usize] += g;
                            }
                        }
                    }
                }
            }
        }
    }

    fn output_shape(&self) -> Shape {
        Shape(vec![self.n, self.out_c, self.out_h, self.out_w])
    }
}

/// Cross-correlation with zero padding: `out[n,o] = bias[o] + sum_i input[n,i] * weight[o,i]`.
pub fn conv2d_forward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    bias: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<Tensor<T>> {
    let g = Geometry::new(input, weight, stride, padding)?;
    if bias.dims() != [g.out_c] {
        return Err(Error::dim(
            "conv2d",
            format!("bias shape {} does not match {} output channels", bias.shape(), g.out_c),
        ));
    }
    let p = g.positions();
    let in_stride = g.in_c * g.h * g.w;
    let out_stride = g.out_c * p;
    let mut out = vec![T::zero(); g.n * out_stride];
    let mut col = vec![T::zero(); g.patch_len() * p];
    for n in 0..g.n {
        g.im2col(&input.data()[n * in_stride..(n + 1) * in_stride], &mut col);
        let dst = &mut out[n * out_stride..(n + 1) * out_stride];
        gemm(
            g.out_c,
            g.patch_len(),
            p,
            T::one(),
            weight.data(),
            Transpose::No,
            &col,
            Transpose::No,
            T::zero(),
            dst,
        );
        for (plane, &b) in dst.chunks_exact_mut(p).zip(bias.data()) {
            plane.iter_mut().for_each(|v| *v += b);
        }
    }
    let out = Tensor::from_parts(g.output_shape(), out);
    out.ensure_finite("conv2d forward output")?;
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct ConvGrads<T> {
    pub input: Tensor<T>,
    pub weight: Tensor<T>,
    pub bias: Tensor<T>,
}

/// Exact gradients of `sum(grad_output * conv2d_forward(..))`.
pub fn conv2d_backward<T: Scalar>(
    input: &Tensor<T>,
    weight: &Tensor<T>,
    grad_output: &Tensor<T>,
    stride: usize,
    padding: usize,
) -> Result<ConvGrads<T>> {
    let g = Geometry::new(input, weight, stride, padding)?;
    let expected = g.output_shape();
    if grad_output.shape() != &expected {
        return Err(Error::dim(
            "conv2d_backward",
            format!("grad_output {} but forward output is {expected}", grad_output.shape()),
        ));
    }
    let p = g.positions();
    let k = g.patch_len();
    let in_stride = g.in_c * g.h * g.w;
    let out_stride = g.out_c * p;

    let mut grad_bias = vec![T::zero(); g.out_c];
    let mut grad_weight = vec![T::zero(); g.out_c * k];
    let mut grad_input = vec![T::zero(); input.numel()];
    let mut col = vec![T::zero(); k * p];
    let mut grad_col = vec![T::zero(); k * p];

    for n in 0..g.n {
        let gout = &grad_output.data()[n * out_stride..(n + 1) * out_stride];
        for (gb, plane) in grad_bias.iter_mut().zip(gout.chunks_exact(p)) {
            *gb += plane.iter().copied().sum::<T>();
        }
        g.im2col(&input.data()[n * in_stride..(n + 1) * in_stride], &mut col);
        gemm(
            g.out_c,
            p,
            k,
            T::one(),
            gout,
            Transpose::No,
            &col,
            Transpose::Yes,
            T::one(),
            &mut grad_weight,
        );
        gemm(
            k,
            g.out_c,
            p,
            T::one(),
            weight.data(),
            Transpose::Yes,
            gout,
            Transpose::No,
            T::zero(),
            &mut grad_col,
        );
        g.col2im(&grad_col, &mut grad_input[n * in_stride..(n + 1) * in_stride]);
    }

    let grads = ConvGrads {
        input: Tensor::from_parts(input.shape().clone(), grad_input),
        weight: Tensor::from_parts(weight.shape().clone(), grad_weight),
        bias: Tensor::from_parts(Shape(vec![g.out_c]), grad_bias),
    };
    grads.input.ensure_finite("conv2d grad_input")?;
    grads.weight.ensure_finite("conv2d grad_weight")?;
    grads.bias.ensure_finite("conv2d grad_bias")?;
    Ok(grads)
}
