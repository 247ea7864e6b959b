use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Row-wise softmax with max subtraction. Used for inference probabilities.
pub fn softmax_rows<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, c) = logits.dims2("softmax")?;
    logits.ensure_finite("softmax logits")?;
    let mut out = logits.data().to_vec();
    for row in out.chunks_exact_mut(c) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row.iter_mut().for_each(|v| *v /= sum);
    }
    Tensor::from_vec(logits.dims(), out)
}

/// Weighted-mean cross-entropy over a batch and its gradient w.r.t. the logits.
///
/// `loss = sum_n w[t_n] * -log softmax(z_n)[t_n] / sum_n w[t_n]`; without
/// weights every sample counts 1.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    targets: &[usize],
    class_weights: Option<&[T]>,
) -> Result<(T, Tensor<T>)> {
    let (n, c) = logits.dims2("softmax_cross_entropy")?;
    if targets.len() != n {
        return Err(Error::dim(
            "softmax_cross_entropy",
            format!("{} targets for {n} rows", targets.len()),
        ));
    }
    if let Some(&bad) = targets.iter().find(|&&t| t >= c) {
        return Err(Error::Labeling(format!("target {bad} with only {c} classes")));
    }
    if let Some(w) = class_weights {
        if w.len() != c {
            return Err(Error::dim(
                "softmax_cross_entropy",
                format!("{} class weights for {c} classes", w.len()),
            ));
        }
        if w.iter().any(|x| !x.is_finite() || *x <= T::zero()) {
            return Err(Error::Config("class weights must be finite and positive".into()));
        }
    }
    logits.ensure_finite("cross-entropy logits")?;

    let weight_of = |t: usize| class_weights.map_or(T::one(), |w| w[t]);
    let total_weight: T = targets.iter().map(|&t| weight_of(t)).sum();
    let mut probs = softmax_rows(logits)?.into_vec();
    let mut loss = T::zero();
    for (row, (&t, z)) in probs
        .chunks_exact_mut(c)
        .zip(targets.iter().zip(logits.data().chunks_exact(c)))
    {
        let max = z.iter().copied().fold(T::neg_infinity(), T::max);
        let log_sum = z.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        let w = weight_of(t);
        loss += w * (log_sum - (z[t] - max));
        let scale = w / total_weight;
        row[t] -= T::one();
        row.iter_mut().for_each(|g| *g *= scale);
    }
    let loss = loss / total_weight;
    if !loss.is_finite() {
        return Err(Error::NumericFault("cross-entropy loss".into()));
    }
    Ok((loss, Tensor::from_vec(&[n, c], probs)?))
}
