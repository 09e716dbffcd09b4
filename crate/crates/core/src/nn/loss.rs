//! Softplus and the Gaussian negative log-likelihood used by both the
//! supervised loss and the policy-gradient surrogate.

use crate::error::{check_len, Error, Result};

/// Added to `softplus(sigma_raw)` so the predicted spread never reaches zero.
pub const SIGMA_FLOOR: f64 = 1e-4;

/// `0.5 * ln(2 pi)`.
pub const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_8;

/// `ln(1 + e^x)` without overflow for large `|x|`.
#[inline]
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Inverse of [`softplus`] for `y > 0`.
pub fn softplus_inverse(y: f64) -> f64 {
    assert!(y > 0.0, "softplus_inverse needs a positive argument");
    if y > 30.0 {
        y + (-(-y).exp()).ln_1p()
    } else {
        y.exp_m1().ln()
    }
}

/// Spread actually used for a raw decoder output.
#[inline]
pub fn effective_sigma(sigma_raw: f64) -> f64 {
    softplus(sigma_raw) + SIGMA_FLOOR
}

/// Loss value together with its derivatives.
#[derive(Debug, Clone, PartialEq)]
pub struct NllGrad {
    pub loss: f64,
    pub d_mu: Vec<f64>,
    pub d_sigma_raw: Vec<f64>,
}

fn check_lengths(mu: &[f64], sigma_raw: &[f64], target: &[f64]) -> Result<()> {
    check_len("gaussian nll sigma", mu.len(), sigma_raw.len())?;
    check_len("gaussian nll target", mu.len(), target.len())
}

/// Negative log-density of `target` under independent normals with means `mu`
/// and spreads given directly (already positive).
pub fn gaussian_nll_sigma(mu: &[f64], sigma: &[f64], target: &[f64]) -> Result<f64> {
    check_lengths(mu, sigma, target)?;
    if sigma.iter().any(|&s| !(s > 0.0)) {
        return Err(Error::InvalidInput("spread must be positive".into()));
    }
    Ok(mu
        .iter()
        .zip(sigma)
        .zip(target)
        .map(|((m, s), t)| s.ln() + HALF_LN_TWO_PI + (t - m).powi(2) / (2.0 * s * s))
        .sum())
}

/// Negative log-density with spreads `softplus(sigma_raw) + SIGMA_FLOOR`.
pub fn gaussian_nll(mu: &[f64], sigma_raw: &[f64], target: &[f64]) -> Result<f64> {
    check_lengths(mu, sigma_raw, target)?;
    let sigma: Vec<f64> = sigma_raw.iter().map(|&r| effective_sigma(r)).collect();
    gaussian_nll_sigma(mu, &sigma, target)
}

/// [`gaussian_nll`] and its gradient.
pub fn gaussian_nll_with_grad(mu: &[f64], sigma_raw: &[f64], target: &[f64]) -> Result<NllGrad> {
    scaled_gaussian_nll_with_grad(mu, sigma_raw, target, 1.0)
}

/// Negative log-density when the spread is multiplied by `scale`, i.e. under
/// `Normal(mu, (scale * sigma)^2)`. This is the per-step policy log-density
/// used during exploration.
pub fn scaled_gaussian_nll_with_grad(
    mu: &[f64],
    sigma_raw: &[f64],
    target: &[f64],
    scale: f64,
) -> Result<NllGrad> {
    check_lengths(mu, sigma_raw, target)?;
    if !(scale > 0.0) || !scale.is_finite() {
        return Err(Error::InvalidInput(format!("spread scale must be positive, got {scale}")));
    }
    let n = mu.len();
    let mut out = NllGrad {
        loss: 0.0,
        d_mu: Vec::with_capacity(n),
        d_sigma_raw: Vec::with_capacity(n),
    };
    for d in 0..n {
        let s = scale * effective_sigma(sigma_raw[d]);
        let diff = target[d] - mu[d];
        let z2 = diff * diff / (s * s);
        out.loss += s.ln() + HALF_LN_TWO_PI + 0.5 * z2;
        out.d_mu.push(-diff / (s * s));
        // dL/ds * ds/draw
        let d_s = (1.0 - z2) / s;
        out.d_sigma_raw.push(d_s * scale * sigmoid(sigma_raw[d]));
    }
    if !out.loss.is_finite() {
        return Err(Error::NonFinite("gaussian nll"));
    }
    Ok(out)
}
