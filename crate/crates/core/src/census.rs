//! Operation census of one token step (update + read).
//!
//! [`Counted`] is an `f64` wrapper that tallies every multiply, add and
//! divide in a thread-local counter. Running the shared row kernels over it
//! gives an exact count for the code the attention state actually executes.

use std::cell::Cell;
use std::ops::{Add, AddAssign, Div, Mul};

use crate::attention::{accumulate_row, readout_row};
use crate::basis::BasisFamily;
use crate::featuremap::monomial;
use crate::scalar::Field;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct OpCensus {
    pub multiplies: u64,
    pub adds: u64,
    /// Divisions are tallied apart from the multiply/add total.
    pub divides: u64,
}

impl OpCensus {
    /// Multiplies plus adds, the convention of the closed-form FLOP counts.
    pub fn flops(&self) -> u64 {
        self.multiplies + self.adds
    }
}

thread_local! {
    static CENSUS: Cell<OpCensus> = const { Cell::new(OpCensus { multiplies: 0, adds: 0, divides: 0 }) };
}

fn tally(f: impl FnOnce(&mut OpCensus)) {
    CENSUS.with(|c| {
        let mut v = c.get();
        f(&mut v);
        c.set(v);
    });
}

#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Counted(pub f64);

impl Add for Counted {
    type Output = Counted;
    fn add(self, rhs: Counted) -> Counted {
        tally(|c| c.adds += 1);
        Counted(self.0 + rhs.0)
    }
}

impl AddAssign for Counted {
    fn add_assign(&mut self, rhs: Counted) {
        *self = *self + rhs;
    }
}

impl Mul for Counted {
    type Output = Counted;
    fn mul(self, rhs: Counted) -> Counted {
        tally(|c| c.multiplies += 1);
        Counted(self.0 * rhs.0)
    }
}

impl Div for Counted {
    type Output = Counted;
    fn div(self, rhs: Counted) -> Counted {
        tally(|c| c.divides += 1);
        Counted(self.0 / rhs.0)
    }
}

impl Field for Counted {
    const ZERO: Self = Counted(0.0);
    const ONE: Self = Counted(1.0);
    fn from_f64(x: f64) -> Self {
        Counted(x)
    }
    fn to_f64(self) -> f64 {
        self.0
    }
}

/// Counts `f` on this thread, starting from zero.
pub fn count<R>(f: impl FnOnce() -> R) -> (R, OpCensus) {
    let saved = CENSUS.with(|c| c.replace(OpCensus::default()));
    let r = f();
    let counted = CENSUS.with(|c| c.replace(saved));
    (r, counted)
}

/// Census of absorbing one token and reading at one query, following the
/// loop structure of `AttentionState::update` and `AttentionState::read`.
pub fn step_census(family: &BasisFamily, value_width: usize) -> OpCensus {
    let dk = family.key_width();
    let key: Vec<Counted> = (0..dk).map(|i| Counted(1.0 + i as f64)).collect();
    let query = key.clone();
    let value = vec![Counted(1.0); value_width];
    let mut zs: Vec<Vec<Counted>> = family
        .degree_bases()
        .iter()
        .map(|b| vec![Counted::ZERO; b.basis_size()])
        .collect();
    let mut ss: Vec<Vec<Counted>> = family
        .degree_bases()
        .iter()
        .map(|b| vec![Counted::ZERO; b.basis_size() * value_width])
        .collect();

    count(|| {
        for (p, basis) in family.degree_bases().iter().enumerate() {
            let weights = family.folded_weights(p);
            for (i, (z, s_row)) in zs[p].iter_mut().zip(ss[p].chunks_exact_mut(value_width)).enumerate() {
                let w = Counted(weights[i]) * monomial(&key, basis.gather_row(i));
                accumulate_row(w, &value, z, s_row);
            }
        }
        let mut den = Counted::ZERO;
        let mut num = vec![Counted::ZERO; value_width];
        for (p, basis) in family.degree_bases().iter().enumerate() {
            for (i, (&z, s_row)) in zs[p].iter().zip(ss[p].chunks_exact(value_width)).enumerate() {
                let f = monomial(&query, basis.gather_row(i));
                readout_row(f, z, s_row, &mut den, &mut num);
            }
        }
        num.iter().map(|&n| n / den).collect::<Vec<_>>()
    })
    .1
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::basis::build_basis_family;

    #[test]
    fn counts_basic_ops() {
        let ((), c) = count(|| {
            let a = Counted(2.0) * Counted(3.0) + Counted(1.0);
            let _ = a / Counted(2.0);
        });
        assert_eq!(c, OpCensus { multiplies: 1, adds: 1, divides: 1 });
    }

    #[test]
    fn degree_zero_only() {
        // per row: weight mult, z add, d_V mult+add; read: mult+add, d_V mult+add
        let f = build_basis_family(5, 1, 1.0).unwrap();
        let c = step_census(&f, 3);
        assert_eq!(c.multiplies, 1 + 3 + 1 + 3);
        assert_eq!(c.adds, 1 + 3 + 1 + 3);
        assert_eq!(c.divides, 3);
    }

    #[test]
    fn per_row_count_for_higher_degree() {
        // one row at p = 2 (d_K = 1): features cost p - 1 = 1 mult on each side
        let f = build_basis_family(1, 3, 1.0).unwrap();
        let dv: u64 = 4;
        let c = step_census(&f, dv as usize);
        let per_row = |p: u64| 4 * dv + 2 * p.saturating_sub(1) + 4;
        assert_eq!(c.flops(), per_row(0) + per_row(1) + per_row(2));
    }
}
