use crate::error::{Error, Result};
use crate::scalar::{gemm, Scalar, Transpose};

use super::{Shape, Tensor};

/// `[M, K] x [K, P] -> [M, P]`.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = a.dims2("matmul")?;
    let (k2, p) = b.dims2("matmul")?;
    if k != k2 {
        return Err(Error::dim(
            "matmul",
            format!("inner dims disagree: {} x {}", a.shape(), b.shape()),
        ));
    }
    let mut out = vec![T::zero(); m * p];
    gemm(m, k, p, T::one(), a.data(), Transpose::No, b.data(), Transpose::No, T::zero(), &mut out);
    Ok(Tensor::from_parts(Shape(vec![m, p]), out))
}

/// Returns `(grad_a, grad_b) = (grad_c * B^T, A^T * grad_c)`.
pub fn matmul_backward<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    grad_c: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (m, k) = a.dims2("matmul_backward")?;
    let (k2, p) = b.dims2("matmul_backward")?;
    if k != k2 || grad_c.dims() != [m, p] {
        return Err(Error::dim(
            "matmul_backward",
            format!("{} x {} with grad {}", a.shape(), b.shape(), grad_c.shape()),
        ));
    }
    let mut ga = vec![T::zero(); m * k];
    gemm(m, p, k, T::one(), grad_c.data(), Transpose::No, b.data(), Transpose::Yes, T::zero(), &mut ga);
    let mut gb = vec![T::zero(); k * p];
    gemm(k, m, p, T::one(), a.data(), Transpose::Yes, grad_c.data(), Transpose::No, T::zero(), &mut gb);
    Ok((
        Tensor::from_parts(a.shape().clone(), ga),
        Tensor::from_parts(b.shape().clone(), gb),
    ))
}
