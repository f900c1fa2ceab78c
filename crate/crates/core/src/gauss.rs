//! Isotropic Gaussian log-densities and reporting conventions.

use libm::log;

use crate::error::{CoreError, Result};
use crate::tensor::Tensor;

/// ln(2*pi).
pub const LN_2PI: f64 = 1.8378770664093454835606594728112;
/// ln(10), for base-10 reporting.
pub const LN_10: f64 = 2.3025850929940456840179914546844;

/// Log-density of `x` under an isotropic normal with the given mean tensor
/// and shared scalar variance:
/// `-d/2*ln(2*pi) - d/2*ln(variance) - ||x - mean||^2 / (2*variance)`.
pub fn gaussian_log_density(x: &Tensor, mean: &Tensor, variance: f64) -> Result<f64> {
    if x.shape() != mean.shape() {
        return Err(CoreError::ShapeMismatch(alloc::format!(
            "x {:?} vs mean {:?}",
            x.shape(),
            mean.shape()
        )));
    }
    x.check_finite()?;
    mean.check_finite()?;
    if !(variance > 0.0) || !variance.is_finite() {
        return Err(CoreError::InvalidVariance);
    }
    Ok(gaussian_log_density_slice(x.data(), mean.data(), variance))
}

/// Unchecked slice variant for hot loops; callers guarantee finiteness,
/// matching lengths, and a positive variance.
#[inline]
pub fn gaussian_log_density_slice(x: &[f64], mean: &[f64], variance: f64) -> f64 {
    debug_assert_eq!(x.len(), mean.len());
    debug_assert!(variance > 0.0);
    let d = x.len() as f64;
    let mut sq = 0.0;
    for (xi, mi) in x.iter().zip(mean) {
        let r = xi - mi;
        sq += r * r;
    }
    -0.5 * d * (LN_2PI + log(variance)) - sq / (2.0 * variance)
}

/// Standard-normal log-density of a flat vector.
#[inline]
pub fn std_normal_log_density(x: &[f64]) -> f64 {
    let d = x.len() as f64;
    let sq: f64 = x.iter().map(|v| v * v).sum();
    -0.5 * d * LN_2PI - 0.5 * sq
}

/// Per-dimension negative log-likelihood, the reporting convention
/// some plots use instead of the canonical log-density.
#[inline]
pub fn paper_normalized_nll(log_density: f64, dims: usize) -> f64 {
    -log_density / dims.max(1) as f64
}

/// Natural-log value re-expressed in base 10.
#[inline]
pub fn to_log10(natural_log_value: f64) -> f64 {
    natural_log_value / LN_10
}
