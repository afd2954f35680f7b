//! Minimal monomial basis of the symmetric tensor `x^{⊗p}`.
//!
//! The distinct entries of an order-`p` symmetric tensor over `d_K` axes are
//! indexed by nondecreasing tuples `i_1 ≤ … ≤ i_p`. There are
//! `C(d_K + p - 1, p)` of them. Each carries a multiplicity: the number of
//! positions of the full tensor holding the same monomial.
//!
//! Tuples are 1-based in the public API ([`IndexTuple`]) and 0-based in the
//! packed gather table that feature evaluation reads. [`DegreeBasis::tuple`]
//! is the only place that converts between the two.

use crate::combinatorics::{binomial, multinomial};
use crate::error::{Error, Result};

/// Default cap on accumulator elements, `2^28`.
pub const DEFAULT_ELEMENT_BUDGET: u128 = 1 << 28;

/// Nondecreasing tuple of 1-based axis indices.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct IndexTuple(Vec<usize>);

impl IndexTuple {
    pub fn new(indices: Vec<usize>) -> Result<Self> {
        if indices.iter().any(|&i| i == 0) {
            return Err(Error::domain("index tuples are 1-based"));
        }
        if indices.windows(2).any(|w| w[0] > w[1]) {
            return Err(Error::domain(format!("tuple {indices:?} is not nondecreasing")));
        }
        Ok(IndexTuple(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn degree(&self) -> usize {
        self.0.len()
    }
}

/// Enumerates every nondecreasing tuple of length `degree` over `1..=key_width`
/// in strictly increasing lexicographic order.
pub fn enumerate_index_tuples(key_width: usize, degree: usize) -> Result<Vec<IndexTuple>> {
    let mut out = Vec::new();
    for_each_tuple(key_width, degree, |t| out.push(IndexTuple(t.iter().map(|&i| i + 1).collect())))?;
    Ok(out)
}

/// Walks 0-based nondecreasing tuples in lexicographic order.
fn for_each_tuple(key_width: usize, degree: usize, mut f: impl FnMut(&[usize])) -> Result<()> {
    if key_width == 0 {
        return Err(Error::domain("key width must be at least 1"));
    }
    let mut t = vec![0usize; degree];
    loop {
        f(&t);
        // rightmost position that can still grow
        let Some(j) = t.iter().rposition(|&i| i + 1 < key_width) else {
            return Ok(());
        };
        let next = t[j] + 1;
        t[j..].iter_mut().for_each(|i| *i = next);
    }
}

/// Number of distinct permutations of `tuple`: `p! / Π (count of each index)!`.
pub fn tuple_multiplicity(tuple: &IndexTuple) -> Result<u64> {
    // IndexTuple upholds ordering on construction; re-check in case of
    // hand-built values coming through `from_raw_parts`.
    if tuple.0.windows(2).any(|w| w[0] > w[1]) {
        return Err(Error::domain("tuple is not nondecreasing"));
    }
    run_multiplicity(&tuple.0)
}

fn run_multiplicity<T: PartialEq>(sorted: &[T]) -> Result<u64> {
    let runs = sorted
        .chunk_by(|a, b| a == b)
        .map(|run| run.len() as u64);
    multinomial(runs)
}

/// Precomputed gather table and multiplicities for one Taylor degree.
#[derive(Debug, Clone, PartialEq)]
pub struct DegreeBasis {
    degree: usize,
    key_width: usize,
    /// Row-major `basis_size × degree`, 0-based axis indices.
    gather: Vec<u32>,
    multiplicities: Vec<u64>,
}

impl DegreeBasis {
    /// Assembles a basis from already-computed parts without checking any
    /// invariant. `rows` are 1-based. Use [`DegreeBasis::validate`] to audit.
    pub fn from_raw_parts(
        key_width: usize,
        degree: usize,
        rows: &[IndexTuple],
        multiplicities: Vec<u64>,
    ) -> Self {
        let gather = rows
            .iter()
            .flat_map(|r| r.0.iter().map(|&i| (i - 1) as u32))
            .collect();
        DegreeBasis {
            degree,
            key_width,
            gather,
            multiplicities,
        }
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn key_width(&self) -> usize {
        self.key_width
    }

    /// `m_p`, the number of distinct monomials.
    pub fn basis_size(&self) -> usize {
        self.multiplicities.len()
    }

    pub fn multiplicities(&self) -> &[u64] {
        &self.multiplicities
    }

    /// 0-based axis indices of row `i`.
    #[inline]
    pub fn gather_row(&self, i: usize) -> &[u32] {
        &self.gather[i * self.degree..(i + 1) * self.degree]
    }

    /// Row `i` as a 1-based [`IndexTuple`].
    pub fn tuple(&self, i: usize) -> IndexTuple {
        IndexTuple(self.gather_row(i).iter().map(|&j| j as usize + 1).collect())
    }

    pub fn tuples(&self) -> impl Iterator<Item = IndexTuple> + '_ {
        (0..self.basis_size()).map(|i| self.tuple(i))
    }

    /// Checks every structural invariant, naming the first one that fails.
    pub fn validate(&self) -> Result<(), InvariantViolation> {
        let expected = binomial((self.key_width + self.degree) as u64 - 1, self.degree as u64)
            .map_err(|_| InvariantViolation::new("basis_size", "binomial overflow"))?;
        if self.basis_size() as u128 != expected {
            return Err(InvariantViolation::new(
                "basis_size",
                format!("{} rows, expected C(d_K+p-1,p) = {expected}", self.basis_size()),
            ));
        }
        if self.gather.len() != self.basis_size() * self.degree {
            return Err(InvariantViolation::new("row_length", "gather table has wrong shape"));
        }
        let mut prev: Option<&[u32]> = None;
        for i in 0..self.basis_size() {
            let row = self.gather_row(i);
            if row.iter().any(|&j| j as usize >= self.key_width) {
                return Err(InvariantViolation::new("index_range", format!("row {i} out of range")));
            }
            if row.windows(2).any(|w| w[0] > w[1]) {
                return Err(InvariantViolation::new("nondecreasing", format!("row {i}")));
            }
            if let Some(p) = prev {
                if p >= row {
                    return Err(InvariantViolation::new("lexicographic_order", format!("row {i}")));
                }
            }
            prev = Some(row);
        }
        let total: u128 = self.multiplicities.iter().map(|&m| m as u128).sum();
        let full = (self.key_width as u128)
            .checked_pow(self.degree as u32)
            .ok_or_else(|| InvariantViolation::new("multiplicity_sum", "d_K^p overflow"))?;
        if total != full {
            return Err(InvariantViolation::new(
                "multiplicity_sum",
                format!("multiplicities sum to {total}, expected d_K^p = {full}"),
            ));
        }
        for i in 0..self.basis_size() {
            let m = run_multiplicity(self.gather_row(i))
                .map_err(|_| InvariantViolation::new("multiplicity", "overflow"))?;
            if m != self.multiplicities[i] {
                return Err(InvariantViolation::new(
                    "multiplicity",
                    format!("row {i} stores {}, permutation count is {m}", self.multiplicities[i]),
                ));
            }
        }
        Ok(())
    }
}

/// A failed structural check on a basis, naming the invariant.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InvariantViolation {
    pub invariant: &'static str,
    pub detail: String,
}

impl InvariantViolation {
    fn new(invariant: &'static str, detail: impl Into<String>) -> Self {
        InvariantViolation {
            invariant,
            detail: detail.into(),
        }
    }
}

impl std::fmt::Display for InvariantViolation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "invariant `{}` violated: {}", self.invariant, self.detail)
    }
}

impl std::error::Error for InvariantViolation {}

pub fn build_degree_basis(key_width: usize, degree: usize) -> Result<DegreeBasis> {
    let rows = binomial((key_width + degree).saturating_sub(1) as u64, degree as u64)?;
    let mut gather = Vec::with_capacity(rows as usize * degree);
    let mut multiplicities = Vec::with_capacity(rows as usize);
    let mut err = None;
    for_each_tuple(key_width, degree, |t| {
        gather.extend(t.iter().map(|&i| i as u32));
        match run_multiplicity(t) {
            Ok(m) => multiplicities.push(m),
            Err(e) => err = Some(e),
        }
    })?;
    if let Some(e) = err {
        return Err(e);
    }
    Ok(DegreeBasis {
        degree,
        key_width,
        gather,
        multiplicities,
    })
}

/// All degree bases `0..P` at one key width, with the Taylor coefficients
/// `α_p = 1 / (p! c^p)` and the folded key-side weights `α_p · C_p`.
#[derive(Debug, Clone, PartialEq)]
pub struct BasisFamily {
    key_width: usize,
    scale: f64,
    degree_bases: Vec<DegreeBasis>,
    taylor_coefficients: Vec<f64>,
    folded_weights: Vec<Vec<f64>>,
}

/// Builder for [`BasisFamily`]; the scale defaults to `√d_K`.
#[derive(Debug, Clone)]
pub struct BasisFamilyBuilder {
    key_width: usize,
    truncation_order: usize,
    scale: Option<f64>,
    element_budget: u128,
}

impl BasisFamilyBuilder {
    pub fn scale(mut self, scale: f64) -> Self {
        self.scale = Some(scale);
        self
    }

    pub fn element_budget(mut self, budget: u128) -> Self {
        self.element_budget = budget;
        self
    }

    pub fn build(self) -> Result<BasisFamily> {
        let scale = self.scale.unwrap_or((self.key_width as f64).sqrt());
        build_basis_family_with_budget(self.key_width, self.truncation_order, scale, self.element_budget)
    }
}

/// Taylor coefficients `1/(p! c^p)` for `p < order`, by running division.
pub fn taylor_coefficients(order: usize, scale: f64) -> Vec<f64> {
    let mut alpha = 1.0;
    (0..order)
        .map(|p| {
            if p > 0 {
                alpha /= p as f64 * scale;
            }
            alpha
        })
        .collect()
}

pub fn build_basis_family(key_width: usize, truncation_order: usize, scale: f64) -> Result<BasisFamily> {
    build_basis_family_with_budget(key_width, truncation_order, scale, DEFAULT_ELEMENT_BUDGET)
}

pub fn build_basis_family_with_budget(
    key_width: usize,
    truncation_order: usize,
    scale: f64,
    element_budget: u128,
) -> Result<BasisFamily> {
    if key_width == 0 {
        return Err(Error::domain("key width must be at least 1"));
    }
    if truncation_order == 0 {
        return Err(Error::domain("truncation order must be at least 1"));
    }
    if !(scale > 0.0 && scale.is_finite()) {
        return Err(Error::domain(format!("scale must be positive and finite, got {scale}")));
    }
    // total rows over all degrees, C(d_K + P - 1, P - 1)
    let rows = binomial((key_width + truncation_order - 1) as u64, truncation_order as u64 - 1)?;
    if rows > element_budget {
        return Err(Error::ElementBudget {
            required: rows,
            budget: element_budget,
        });
    }
    let degree_bases = (0..truncation_order)
        .map(|p| build_degree_basis(key_width, p))
        .collect::<Result<Vec<_>>>()?;
    let taylor_coefficients = taylor_coefficients(truncation_order, scale);
    let folded_weights = degree_bases
        .iter()
        .zip(&taylor_coefficients)
        .map(|(b, &a)| b.multiplicities.iter().map(|&m| a * m as f64).collect())
        .collect();
    Ok(BasisFamily {
        key_width,
        scale,
        degree_bases,
        taylor_coefficients,
        folded_weights,
    })
}

impl BasisFamily {
    pub fn builder(key_width: usize, truncation_order: usize) -> BasisFamilyBuilder {
        BasisFamilyBuilder {
            key_width,
            truncation_order,
            scale: None,
            element_budget: DEFAULT_ELEMENT_BUDGET,
        }
    }

    pub fn key_width(&self) -> usize {
        self.key_width
    }

    /// `P`, the number of retained Taylor terms.
    pub fn truncation_order(&self) -> usize {
        self.degree_bases.len()
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn degree_bases(&self) -> &[DegreeBasis] {
        &self.degree_bases
    }

    pub fn degree(&self, p: usize) -> &DegreeBasis {
        &self.degree_bases[p]
    }

    pub fn taylor_coefficients(&self) -> &[f64] {
        &self.taylor_coefficients
    }

    /// `α_p · C_p[i]` for every row of degree `p`.
    pub fn folded_weights(&self, p: usize) -> &[f64] {
        &self.folded_weights[p]
    }

    /// Total basis rows across degrees, `C(d_K + P - 1, P - 1)`.
    pub fn total_rows(&self) -> usize {
        self.degree_bases.iter().map(DegreeBasis::basis_size).sum()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tuples(v: &[&[usize]]) -> Vec<IndexTuple> {
        v.iter().map(|t| IndexTuple::new(t.to_vec()).unwrap()).collect()
    }

    #[test]
    fn enumerates_worked_example() {
        assert_eq!(
            enumerate_index_tuples(2, 2).unwrap(),
            tuples(&[&[1, 1], &[1, 2], &[2, 2]])
        );
    }

    #[test]
    fn degree_zero_is_single_empty_tuple() {
        assert_eq!(enumerate_index_tuples(3, 0).unwrap(), tuples(&[&[]]));
        let b = build_degree_basis(5, 0).unwrap();
        assert_eq!(b.basis_size(), 1);
        assert_eq!(b.multiplicities(), &[1]);
        assert_eq!(b.tuple(0).degree(), 0);
        b.validate().unwrap();
    }

    #[test]
    fn rejects_zero_key_width() {
        assert!(matches!(enumerate_index_tuples(0, 2), Err(Error::Domain(_))));
        assert!(matches!(build_degree_basis(0, 1), Err(Error::Domain(_))));
        assert!(matches!(build_basis_family(0, 2, 1.0), Err(Error::Domain(_))));
    }

    #[test]
    fn rejects_bad_family_parameters() {
        assert!(matches!(build_basis_family(4, 0, 1.0), Err(Error::Domain(_))));
        assert!(matches!(build_basis_family(4, 2, 0.0), Err(Error::Domain(_))));
        assert!(matches!(build_basis_family(4, 2, -1.0), Err(Error::Domain(_))));
        assert!(matches!(build_basis_family(4, 2, f64::NAN), Err(Error::Domain(_))));
    }

    #[test]
    fn multiplicity_examples() {
        let m = |t: &[usize]| tuple_multiplicity(&IndexTuple::new(t.to_vec()).unwrap()).unwrap();
        assert_eq!(m(&[1, 2]), 2);
        assert_eq!(m(&[1, 1, 1]), 1);
        assert_eq!(m(&[1, 2, 2]), 3);
        assert_eq!(m(&[1, 2, 3]), 6);
        assert_eq!(m(&[]), 1);
    }

    #[test]
    fn index_tuple_rejects_unsorted_or_zero() {
        assert!(matches!(IndexTuple::new(vec![2, 1]), Err(Error::Domain(_))));
        assert!(matches!(IndexTuple::new(vec![0, 1]), Err(Error::Domain(_))));
    }

    #[test]
    fn degree_basis_examples() {
        let b = build_degree_basis(2, 2).unwrap();
        assert_eq!(b.basis_size(), 3);
        assert_eq!(b.multiplicities(), &[1, 2, 1]);
        let b = build_degree_basis(3, 2).unwrap();
        assert_eq!(b.basis_size(), 6);
        assert_eq!(b.multiplicities().iter().sum::<u64>(), 9);
    }

    #[test]
    fn degenerate_key_width_one() {
        for p in 0..6 {
            let b = build_degree_basis(1, p).unwrap();
            assert_eq!(b.basis_size(), 1);
            assert_eq!(b.multiplicities(), &[1]);
        }
    }

    #[test]
    fn family_coefficients() {
        let f = build_basis_family(2, 3, 1.0).unwrap();
        assert_eq!(f.taylor_coefficients(), &[1.0, 1.0, 0.5]);
        let f = build_basis_family(7, 1, 2.5).unwrap();
        assert_eq!(f.taylor_coefficients(), &[1.0]);
        assert_eq!(f.degree_bases().len(), 1);
        let f = build_basis_family(4, 4, 2.0).unwrap();
        let want = [1.0, 0.5, 0.125, 1.0 / 48.0];
        for (a, b) in f.taylor_coefficients().iter().zip(want) {
            assert!((a - b).abs() <= 1e-15 * b, "{a} vs {b}");
        }
        for (p, b) in f.degree_bases().iter().enumerate() {
            assert_eq!(b.degree(), p);
            assert_eq!(b.key_width(), 4);
        }
    }

    #[test]
    fn default_scale_is_sqrt_key_width() {
        let f = BasisFamily::builder(16, 3).build().unwrap();
        assert_eq!(f.scale(), 4.0);
        assert_eq!(f.taylor_coefficients()[1], 0.25);
    }

    #[test]
    fn folded_weights_are_alpha_times_multiplicity() {
        let f = build_basis_family(2, 3, 1.0).unwrap();
        assert_eq!(f.folded_weights(2), &[0.5, 1.0, 0.5]);
        assert_eq!(f.folded_weights(0), &[1.0]);
    }

    #[test]
    fn element_budget_is_enforced() {
        let err = BasisFamily::builder(64, 4).element_budget(1000).build().unwrap_err();
        assert_eq!(
            err,
            Error::ElementBudget {
                required: 47_905,
                budget: 1000
            }
        );
        assert_eq!(BasisFamily::builder(64, 4).build().unwrap().total_rows(), 47_905);
    }

    #[test]
    fn validate_names_the_broken_invariant() {
        let good = build_degree_basis(3, 2).unwrap();
        let rows: Vec<_> = good.tuples().collect();
        let mut mult = good.multiplicities().to_vec();
        mult[1] += 1;
        let bad = DegreeBasis::from_raw_parts(3, 2, &rows, mult);
        assert_eq!(bad.validate().unwrap_err().invariant, "multiplicity_sum");

        let mut mult = good.multiplicities().to_vec();
        mult.swap(0, 1);
        let bad = DegreeBasis::from_raw_parts(3, 2, &rows, mult);
        assert_eq!(bad.validate().unwrap_err().invariant, "multiplicity");

        let mut swapped = rows.clone();
        swapped.swap(0, 1);
        let bad = DegreeBasis::from_raw_parts(3, 2, &swapped, good.multiplicities().to_vec());
        assert_eq!(bad.validate().unwrap_err().invariant, "lexicographic_order");

        let bad = DegreeBasis::from_raw_parts(3, 2, &rows[1..], good.multiplicities()[1..].to_vec());
        assert_eq!(bad.validate().unwrap_err().invariant, "basis_size");
    }
}
