//! Basis tables: one row per packed monomial.

use serde::Serialize;
use taylorattn::{build_basis_family, Result};

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct BasisRow {
    pub d_k: usize,
    pub degree: usize,
    pub row: usize,
    /// 1-based indices joined by `|`; empty for degree 0.
    pub indices: String,
    pub multiplicity: u64,
}

/// Rows for degrees `0..order` at each width.
pub fn basis_rows(widths: &[usize], order: usize) -> Result<Vec<BasisRow>> {
    let mut out = Vec::new();
    for &d in widths {
        let family = build_basis_family(d, order, (d as f64).sqrt())?;
        for basis in family.degree_bases() {
            for (row, (tuple, &m)) in basis.tuples().zip(basis.multiplicities()).enumerate() {
                let indices = tuple
                    .indices()
                    .iter()
                    .map(|i| i.to_string())
                    .collect::<Vec<_>>()
                    .join("|");
                out.push(BasisRow {
                    d_k: d,
                    degree: basis.degree(),
                    row,
                    indices,
                    multiplicity: m,
                });
            }
        }
    }
    Ok(out)
}
