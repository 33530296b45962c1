//! Small dense linear-algebra helpers for finite-chain generators.

use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// exp(t G) for a sub-Markov generator G (nonnegative off-diagonal entries).
///
/// Uniformization with scaling and squaring: all series terms are
/// nonnegative, so there is no cancellation.
pub fn generator_exp(g: &DMatrix<f64>, t: f64) -> Result<DMatrix<f64>> {
    let n = g.nrows();
    if n != g.ncols() {
        return Err(Error::InvalidInput("generator must be square".into()));
    }
    if t < 0.0 {
        return Err(Error::InvalidInput("generator_exp: t must be nonnegative".into()));
    }
    let lambda = (0..n).map(|i| g[(i, i)].abs()).fold(0.0f64, f64::max);
    if lambda == 0.0 || t == 0.0 {
        let mut out = DMatrix::identity(n, n);
        out += g * t;
        // G with zero diagonal and zero off-diagonal only
        if lambda == 0.0 && g.amax() > 0.0 {
            return Err(Error::MatrixExponentialFailure);
        }
        return Ok(DMatrix::identity(n, n));
    }
    // Split so that lambda * step <= 1, then square back up.
    let mut squarings = 0u32;
    let mut step = t;
    while lambda * step > 1.0 {
        step *= 0.5;
        squarings += 1;
        if squarings > 64 {
            return Err(Error::MatrixExponentialFailure);
        }
    }
    // P = I + G/lambda is sub-stochastic and nonnegative.
    let p = DMatrix::identity(n, n) + g / lambda;
    let rate = lambda * step;
    let mut term = DMatrix::identity(n, n);
    let mut sum = term.clone();
    let mut weight = 1.0f64;
    let mut total = 1.0f64;
    for j in 1..200 {
        term *= &p;
        weight *= rate / j as f64;
        sum += &term * weight;
        total += weight;
        // Poisson tail bound: remaining mass of the weight series.
        if (rate.exp() - total) * term.amax().max(1.0) < 1e-18 {
            break;
        }
    }
    let mut result = sum * (-rate).exp();
    for _ in 0..squarings {
        result = &result * &result;
    }
    Ok(result)
}
