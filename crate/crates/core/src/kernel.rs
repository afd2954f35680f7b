//! The exponential attention kernel and its truncated Taylor expansion.

use crate::basis::{build_basis_family, BasisFamily};
use crate::error::{Error, Result};
use crate::featuremap::{phi, weighted_inner};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelConfig {
    pub truncation_order: usize,
    pub scale: f64,
}

impl KernelConfig {
    pub fn new(truncation_order: usize, scale: f64) -> Result<Self> {
        if truncation_order == 0 {
            return Err(Error::domain("truncation order must be at least 1"));
        }
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::domain(format!("scale must be positive, got {scale}")));
        }
        Ok(KernelConfig {
            truncation_order,
            scale,
        })
    }

    /// `P` terms at the conventional scale `√d_K`.
    pub fn conventional(truncation_order: usize, key_width: usize) -> Result<Self> {
        Self::new(truncation_order, (key_width as f64).sqrt())
    }
}

fn dot(q: &[f64], k: &[f64]) -> Result<f64> {
    if q.len() != k.len() {
        return Err(Error::domain(format!(
            "query has length {}, key has length {}",
            q.len(),
            k.len()
        )));
    }
    Ok(q.iter().zip(k).map(|(a, b)| a * b).sum())
}

/// `exp(q·k / c)`.
pub fn kernel_exact(q: &[f64], k: &[f64], scale: f64) -> Result<f64> {
    if !(scale > 0.0) {
        return Err(Error::domain(format!("scale must be positive, got {scale}")));
    }
    Ok((dot(q, k)? / scale).exp())
}

/// Truncated kernel bound to a precomputed [`BasisFamily`].
#[derive(Debug, Clone)]
pub struct TruncatedKernel<'a> {
    family: &'a BasisFamily,
}

impl<'a> TruncatedKernel<'a> {
    pub fn new(family: &'a BasisFamily) -> Self {
        TruncatedKernel { family }
    }

    /// `Σ_{p<P} α_p ⟨Φ_p(q), Φ_p(k)⟩_{C_p}`, evaluated through the feature maps.
    /// May be negative: the truncated series is not a positive kernel.
    pub fn eval(&self, q: &[f64], k: &[f64]) -> Result<f64> {
        if q.len() != k.len() {
            return Err(Error::domain("query and key lengths differ"));
        }
        let mut total = 0.0;
        for (basis, &alpha) in self
            .family
            .degree_bases()
            .iter()
            .zip(self.family.taylor_coefficients())
        {
            total += alpha * weighted_inner(&phi(q, basis)?, &phi(k, basis)?, basis)?;
        }
        Ok(total)
    }
}

/// Convenience form that builds the basis family for `config` on each call.
pub fn kernel_truncated(q: &[f64], k: &[f64], config: &KernelConfig) -> Result<f64> {
    if q.len() != k.len() {
        return Err(Error::domain("query and key lengths differ"));
    }
    let family = build_basis_family(q.len(), config.truncation_order, config.scale)?;
    TruncatedKernel::new(&family).eval(q, k)
}

/// `|exp(z) - Σ_{p<P} z^p / p!|`.
pub fn truncation_residual(dot_over_c: f64, truncation_order: usize) -> f64 {
    let mut term = 1.0;
    let mut partial = 0.0;
    for p in 0..truncation_order {
        if p > 0 {
            term *= dot_over_c / p as f64;
        }
        partial += term;
    }
    (dot_over_c.exp() - partial).abs()
}
