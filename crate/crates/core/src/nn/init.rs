//! Weight initializers.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

use super::Param;

fn fill_gaussian<T: Scalar, R: Rng + ?Sized>(param: &mut Param<T>, std: f64, rng: &mut R) {
    for v in param.value.data_mut() {
        let z: f64 = rng.sample(StandardNormal);
        *v = T::lit(z * std);
    }
}

/// He initialization: i.i.d. `N(0, std = sqrt(2 / fan_out))`.
///
/// For a conv weight `[O, I, Kh, Kw]` the fan-out is `Kh * Kw * O`.
pub fn he_init<T: Scalar, R: Rng + ?Sized>(
    param: &mut Param<T>,
    fan_out: usize,
    rng: &mut R,
) -> Result<()> {
    if fan_out == 0 {
        return Err(Error::Precondition("he_init: fan_out must be positive".into()));
    }
    fill_gaussian(param, (2.0 / fan_out as f64).sqrt(), rng);
    Ok(())
}

/// Standard deviation of the linear-layer weight initializer.
pub const LINEAR_INIT_STD: f64 = 0.01;

/// Small Gaussian initialization for linear weights, `N(0, std = 0.01)`.
pub fn linear_init<T: Scalar, R: Rng + ?Sized>(param: &mut Param<T>, rng: &mut R) -> Result<()> {
    if param.value.shape().rank() != 2 {
        return Err(Error::dim(
            "linear_init",
            format!("expected a 2-D weight, got {}", param.value.shape()),
        ));
    }
    fill_gaussian(param, LINEAR_INIT_STD, rng);
    Ok(())
}
