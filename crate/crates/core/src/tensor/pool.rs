use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::{Shape, Tensor};

/// 2x2 max pooling with stride 2.
///
/// Returns the pooled tensor and, per output element, the flat input index
/// that won its window. Ties go to the first position in row-major order.
pub fn maxpool2d_forward<T: Scalar>(input: &Tensor<T>) -> Result<(Tensor<T>, Vec<usize>)> {
    let (n, c, h, w) = input.dims4("maxpool2d")?;
    if h % 2 != 0 || w % 2 != 0 {
        return Err(Error::Precondition(format!(
            "maxpool2d needs even spatial dims, got {h}x{w}"
        )));
    }
    let (oh, ow) = (h / 2, w / 2);
    let x = input.data();
    let mut out = Vec::with_capacity(n * c * oh * ow);
    let mut argmax = Vec::with_capacity(n * c * oh * ow);
    for plane in 0..n * c {
        let base = plane * h * w;
        for oy in 0..oh {
            for ox in 0..ow {
                let first = base + 2 * oy * w + 2 * ox;
                let mut best = first;
                for idx in [first + 1, first + w, first + w + 1] {
                    if x[idx] > x[best] {
                        best = idx;
                    }
                }
                out.push(x[best]);
                argmax.push(best);
            }
        }
    }
    let out = Tensor::from_parts(Shape(vec![n, c, oh, ow]), out);
    out.ensure_finite("maxpool2d output")?;
    Ok((out, argmax))
}

pub fn maxpool2d_backward<T: Scalar>(
    argmax: &[usize],
    grad_output: &Tensor<T>,
    input_shape: &Shape,
) -> Result<Tensor<T>> {
    if argmax.len() != grad_output.numel() {
        return Err(Error::Internal(format!(
            "{} argmax entries for {} output gradients",
            argmax.len(),
            grad_output.numel()
        )));
    }
    let numel = input_shape.numel();
    let mut grad = vec![T::zero(); numel];
    for (&idx, &g) in argmax.iter().zip(grad_output.data()) {
        if idx >= numel {
            return Err(Error::Internal(format!(
                "argmax index {idx} outside input of {numel} elements"
            )));
        }
        grad[idx] += g;
    }
    Ok(Tensor::from_parts(input_shape.clone(), grad))
}

/// Spatial mean per channel: `[N, C, H, W] -> [N, C]`.
pub fn global_avg_pool_forward<T: Scalar>(input: &Tensor<T>) -> Result<Tensor<T>> {
    let (n, c, h, w) = input.dims4("global_avg_pool")?;
    let area = T::lit((h * w) as f64);
    let out: Vec<T> = input
        .data()
        .chunks_exact(h * w)
        .map(|plane| plane.iter().copied().sum::<T>() / area)
        .collect();
    Ok(Tensor::from_parts(Shape(vec![n, c]), out))
}

pub fn global_avg_pool_backward<T: Scalar>(
    grad_output: &Tensor<T>,
    input_shape: &Shape,
) -> Result<Tensor<T>> {
    let [n, c, h, w] = *input_shape.dims() else {
        return Err(Error::dim("global_avg_pool_backward", "input shape must be rank 4"));
    };
    if grad_output.dims() != [n, c] {
        return Err(Error::dim(
            "global_avg_pool_backward",
            format!("grad_output {} for input {input_shape}", grad_output.shape()),
        ));
    }
    let area = T::lit((h * w) as f64);
    let mut grad = Vec::with_capacity(input_shape.numel());
    for &g in grad_output.data() {
        let share = g / area;
        grad.extend(std::iter::repeat_n(share, h * w));
    }
    Ok(Tensor::from_parts(input_shape.clone(), grad))
}
