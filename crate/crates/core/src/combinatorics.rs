//! Exact integer combinatorics used by the basis and the cost model.

use crate::error::{Error, Result};

/// `C(n, k)` in exact 128-bit arithmetic.
///
/// Uses the running product `C(n-k+i, i) = C(n-k+i-1, i-1) * (n-k+i) / i`,
/// every intermediate of which is itself a binomial coefficient, so the
/// division is always exact.
pub fn binomial(n: u64, k: u64) -> Result<u128> {
    if k > n {
        return Ok(0);
    }
    let k = k.min(n - k);
    let base = (n - k) as u128;
    let mut acc: u128 = 1;
    for i in 1..=k as u128 {
        acc = acc
            .checked_mul(base + i)
            .ok_or(Error::Overflow("binomial coefficient"))?
            / i;
    }
    Ok(acc)
}

/// `base^exp` in exact 128-bit arithmetic.
pub fn pow(base: u64, exp: u32) -> Result<u128> {
    (base as u128)
        .checked_pow(exp)
        .ok_or(Error::Overflow("integer power"))
}

/// Number of distinct orderings of a multiset with the given part counts,
/// `(Σ c)! / Π c!`, built as a product of binomials to avoid factorials.
pub fn multinomial(counts: impl IntoIterator<Item = u64>) -> Result<u64> {
    let mut total = 0u64;
    let mut acc: u64 = 1;
    for c in counts {
        total += c;
        let b = binomial(total, c)?;
        let b = u64::try_from(b).map_err(|_| Error::Overflow("multinomial coefficient"))?;
        acc = acc
            .checked_mul(b)
            .ok_or(Error::Overflow("multinomial coefficient"))?;
    }
    Ok(acc)
}
