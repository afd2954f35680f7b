//! Packed monomial features `Φ_p` and the multiplicity-weighted inner product.
//!
//! `⟨Φ_p(q), Φ_p(k)⟩_{C_p} = (q·k)^p`, with `Φ_p` holding only the `m_p`
//! distinct monomials of `x^{⊗p}`.

use rayon::prelude::*;

use crate::basis::DegreeBasis;
use crate::error::{Error, Result};
use crate::scalar::Field;

/// Features of one vector at one degree.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureVector {
    pub degree: usize,
    pub values: Vec<f64>,
}

impl FeatureVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Plain (unweighted) dot product.
    pub fn dot(&self, other: &FeatureVector) -> Result<f64> {
        if self.degree != other.degree || self.len() != other.len() {
            return Err(Error::domain("feature vectors differ in degree or length"));
        }
        Ok(self.values.iter().zip(&other.values).map(|(a, b)| a * b).sum())
    }
}

/// Product of the gathered factors, left to right. The empty product is one.
#[inline]
pub fn monomial<T: Field>(x: &[T], row: &[u32]) -> T {
    match row.split_first() {
        None => T::ONE,
        Some((&first, rest)) => rest
            .iter()
            .fold(x[first as usize], |acc, &j| acc * x[j as usize]),
    }
}

/// Writes `Φ_p(x)` into `out` (length `m_p`). Widths are the caller's
/// responsibility.
#[inline]
pub fn phi_into<T: Field>(x: &[T], basis: &DegreeBasis, out: &mut [T]) {
    debug_assert_eq!(out.len(), basis.basis_size());
    for (i, o) in out.iter_mut().enumerate() {
        *o = monomial(x, basis.gather_row(i));
    }
}

fn check_width(x: &[f64], basis: &DegreeBasis) -> Result<()> {
    if x.len() != basis.key_width() {
        return Err(Error::domain(format!(
            "vector has length {}, basis key width is {}",
            x.len(),
            basis.key_width()
        )));
    }
    Ok(())
}

pub fn phi(x: &[f64], basis: &DegreeBasis) -> Result<FeatureVector> {
    check_width(x, basis)?;
    let mut values = vec![0.0; basis.basis_size()];
    phi_into(x, basis, &mut values);
    Ok(FeatureVector {
        degree: basis.degree(),
        values,
    })
}

/// `prescale · C_p ⊙ Φ_p(x)`: key-side features with weights folded in, so
/// the query side only needs a plain dot product.
pub fn phi_weighted(x: &[f64], basis: &DegreeBasis, prescale: f64) -> Result<FeatureVector> {
    let mut fv = phi(x, basis)?;
    for (v, &m) in fv.values.iter_mut().zip(basis.multiplicities()) {
        *v *= prescale * m as f64;
    }
    Ok(fv)
}

/// `Σ_i C_p[i] a_i b_i`.
pub fn weighted_inner(a: &FeatureVector, b: &FeatureVector, basis: &DegreeBasis) -> Result<f64> {
    let m = basis.basis_size();
    if a.degree != basis.degree() || b.degree != basis.degree() || a.len() != m || b.len() != m {
        return Err(Error::domain("features do not match the basis degree/size"));
    }
    Ok(a.values
        .iter()
        .zip(&b.values)
        .zip(basis.multiplicities())
        .map(|((x, y), &c)| c as f64 * x * y)
        .sum())
}

/// Evaluates `Φ_p` over many vectors in parallel. Each output depends only on
/// its own input, so results do not depend on the thread count.
pub fn phi_batch(xs: &[&[f64]], basis: &DegreeBasis) -> Result<Vec<FeatureVector>> {
    xs.par_iter().map(|x| phi(x, basis)).collect()
}
