//! Closed-form size and FLOP accounting, in exact integer/rational arithmetic.
//!
//! The per-degree sums are normative. The all-degree closed forms are kept as
//! independent cross-checks; [`CostReport::cross_check`] reports any
//! configuration where the two disagree.

use num_rational::Ratio;

use crate::combinatorics::{binomial, pow};
use crate::error::{Error, Result};

pub type Rational = Ratio<u128>;

fn check_widths(d_k: u64, d_v: u64) -> Result<()> {
    if d_k == 0 || d_v == 0 {
        return Err(Error::domain("d_K and d_V must be at least 1"));
    }
    Ok(())
}

fn check_order(order: u64) -> Result<()> {
    if order == 0 {
        return Err(Error::domain("truncation order must be at least 1"));
    }
    Ok(())
}

fn mul(a: u128, b: u128) -> Result<u128> {
    a.checked_mul(b).ok_or(Error::Overflow("cost product"))
}

/// `m_p = C(d_K + p - 1, p)`.
pub fn basis_size(d_k: u64, p: u64) -> Result<u128> {
    binomial(d_k + p - 1, p)
}

/// `(d_V + 1) · C(d_K + p - 1, p)`.
pub fn hidden_state_size_degree(d_k: u64, d_v: u64, p: u64) -> Result<u128> {
    check_widths(d_k, d_v)?;
    mul(d_v as u128 + 1, basis_size(d_k, p)?)
}

/// `(d_V + 1) · C(d_K + P - 1, P - 1)`.
pub fn hidden_state_size_total(d_k: u64, d_v: u64, order: u64) -> Result<u128> {
    check_widths(d_k, d_v)?;
    check_order(order)?;
    mul(d_v as u128 + 1, binomial(d_k + order - 1, order - 1)?)
}

/// `Σ_{p<P}` of [`hidden_state_size_degree`].
pub fn hidden_state_size_sum(d_k: u64, d_v: u64, order: u64) -> Result<u128> {
    check_order(order)?;
    (0..order).try_fold(0u128, |acc, p| Ok(acc + hidden_state_size_degree(d_k, d_v, p)?))
}

/// `(4 d_V + 2p + 4) · C(d_K + p - 1, p)`.
pub fn flops_per_token_degree(d_k: u64, d_v: u64, p: u64) -> Result<u128> {
    check_widths(d_k, d_v)?;
    mul(4 * d_v as u128 + 2 * p as u128 + 4, basis_size(d_k, p)?)
}

/// `Σ_{p<P}` of [`flops_per_token_degree`]; the normative total.
pub fn flops_per_token_sum(d_k: u64, d_v: u64, order: u64) -> Result<u128> {
    check_order(order)?;
    (0..order).try_fold(0u128, |acc, p| Ok(acc + flops_per_token_degree(d_k, d_v, p)?))
}

/// `(4 d_V + 2 (P d_K + 1)/(d_K + 1) + 2) · C(d_K + P - 1, P - 1)`, exactly.
pub fn flops_per_token_total(d_k: u64, d_v: u64, order: u64) -> Result<Rational> {
    check_widths(d_k, d_v)?;
    check_order(order)?;
    let c = binomial(d_k + order - 1, order - 1)?;
    let middle = Rational::new(2 * (order as u128 * d_k as u128 + 1), d_k as u128 + 1);
    let factor = Rational::from_integer(4 * d_v as u128 + 2) + middle;
    Ok(factor * Rational::from_integer(c))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ConventionalCosts {
    pub kv_cache_elements: u128,
    pub flops_per_token: u128,
}

/// KV cache `n (d_K + d_V)` and forward FLOPs `n (2 d_K + 2 d_V + 3)` for
/// one query and one head.
pub fn conventional_costs(n: u64, d_k: u64, d_v: u64) -> Result<ConventionalCosts> {
    check_widths(d_k, d_v)?;
    if n == 0 {
        return Err(Error::domain("context length must be at least 1"));
    }
    let n = n as u128;
    Ok(ConventionalCosts {
        kv_cache_elements: mul(n, d_k as u128 + d_v as u128)?,
        flops_per_token: mul(n, 2 * d_k as u128 + 2 * d_v as u128 + 3)?,
    })
}

/// `d_K^p`, the size of an unpacked degree-`p` feature map.
pub fn naive_feature_count(d_k: u64, p: u64) -> Result<u128> {
    if d_k == 0 {
        return Err(Error::domain("d_K must be at least 1"));
    }
    let p = u32::try_from(p).map_err(|_| Error::Overflow("integer power"))?;
    pow(d_k, p)
}

/// Smallest `n` with `n (d_K + d_V)` strictly above the fixed state size.
pub fn crossover_context_length(d_k: u64, d_v: u64, order: u64) -> Result<u128> {
    let state = hidden_state_size_total(d_k, d_v, order)?;
    Ok(state / (d_k as u128 + d_v as u128) + 1)
}

/// Total state over `heads` heads splitting model width `d` evenly
/// (`d_K = d_V = d / heads` per head).
pub fn multi_head_state(d: u64, heads: u64, order: u64) -> Result<u128> {
    if heads == 0 || d % heads != 0 {
        return Err(Error::domain(format!("width {d} is not divisible into {heads} heads")));
    }
    let per = d / heads;
    mul(heads as u128, hidden_state_size_total(per, per, order)?)
}

/// Size and FLOP figures for one configuration. Widths are per head; totals
/// are multiplied by the head count.
#[derive(Debug, Clone, PartialEq)]
pub struct CostReport {
    pub key_width: u64,
    pub value_width: u64,
    pub truncation_order: u64,
    pub context_length: u64,
    pub heads: u64,
    pub hidden_state_elements: u128,
    /// Normative per-degree sum; integer-valued.
    pub flops_per_token: Rational,
    pub kv_cache_elements: u128,
    pub conventional_flops_per_token: u128,
    /// `Σ_{p<P} d_K^p`, the unpacked feature count.
    pub naive_feature_elements: u128,
    pub crossover_context_length: u128,
}

/// A configuration where a closed form and its per-degree sum differ.
#[derive(Debug, Clone, PartialEq)]
pub struct Disagreement {
    pub quantity: &'static str,
    pub closed_form: Rational,
    pub per_degree_sum: Rational,
}

impl CostReport {
    pub fn evaluate(d_k: u64, d_v: u64, order: u64, n: u64, heads: u64) -> Result<Self> {
        if heads == 0 {
            return Err(Error::domain("head count must be at least 1"));
        }
        let h = heads as u128;
        let conv = conventional_costs(n, d_k, d_v)?;
        let naive = (0..order).try_fold(0u128, |acc, p| Ok::<_, Error>(acc + naive_feature_count(d_k, p)?))?;
        Ok(CostReport {
            key_width: d_k,
            value_width: d_v,
            truncation_order: order,
            context_length: n,
            heads,
            hidden_state_elements: mul(h, hidden_state_size_sum(d_k, d_v, order)?)?,
            flops_per_token: Rational::from_integer(mul(h, flops_per_token_sum(d_k, d_v, order)?)?),
            kv_cache_elements: mul(h, conv.kv_cache_elements)?,
            conventional_flops_per_token: mul(h, conv.flops_per_token)?,
            naive_feature_elements: mul(h, naive)?,
            crossover_context_length: crossover_context_length(d_k, d_v, order)?,
        })
    }

    /// Compares both closed forms with their per-degree sums.
    pub fn cross_check(&self) -> Result<Vec<Disagreement>> {
        let (dk, dv, order) = (self.key_width, self.value_width, self.truncation_order);
        let mut out = Vec::new();
        let hs_closed = hidden_state_size_total(dk, dv, order)?;
        let hs_sum = hidden_state_size_sum(dk, dv, order)?;
        if hs_closed != hs_sum {
            out.push(Disagreement {
                quantity: "hidden_state",
                closed_form: Rational::from_integer(hs_closed),
                per_degree_sum: Rational::from_integer(hs_sum),
            });
        }
        let fl_closed = flops_per_token_total(dk, dv, order)?;
        let fl_sum = Rational::from_integer(flops_per_token_sum(dk, dv, order)?);
        if fl_closed != fl_sum {
            out.push(Disagreement {
                quantity: "flops_per_token",
                closed_form: fl_closed,
                per_degree_sum: fl_sum,
            });
        }
        Ok(out)
    }
}

/// Renders a rational as an integer when exact, otherwise `num/den`.
pub fn format_rational(r: &Rational) -> String {
    if r.is_integer() {
        r.to_integer().to_string()
    } else {
        format!("{}/{}", r.numer(), r.denom())
    }
}
