//! Cost tables over a grid of model widths, truncation orders, context
//! lengths and head counts.

use serde::Serialize;
use taylorattn::basis::{taylor_coefficients, DEFAULT_ELEMENT_BUDGET};
use taylorattn::costmodel::{basis_size, format_rational, hidden_state_size_total, naive_feature_count, CostReport};
use taylorattn::Result;

/// Half-precision resolution.
pub const HALF_RESOLUTION: f64 = 1.0 / 1024.0;
/// Single-precision resolution.
pub const SINGLE_RESOLUTION: f64 = 1.0 / 8_388_608.0;

#[derive(Debug, Clone, PartialEq)]
pub struct CostGrid {
    /// Model widths; each head gets `d / heads`.
    pub widths: Vec<u64>,
    pub truncation_orders: Vec<u64>,
    pub contexts: Vec<u64>,
    pub heads: Vec<u64>,
}

impl Default for CostGrid {
    fn default() -> Self {
        CostGrid {
            widths: vec![16, 32, 64, 128],
            truncation_orders: vec![1, 2, 3, 4, 5, 6],
            contexts: vec![1_000, 10_000, 100_000, 1_000_000],
            heads: vec![1],
        }
    }
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct CostRow {
    pub d_k: u64,
    pub d_v: u64,
    #[serde(rename = "P")]
    pub order: u64,
    pub n: u64,
    pub heads: u64,
    pub hidden_state: u128,
    /// Integer when exact, otherwise `num/den`.
    pub flops_ours: String,
    pub kv_cache: u128,
    pub flops_conv: u128,
    pub naive_features: u128,
    pub crossover_n: u128,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct AlphaRow {
    pub d_k: u64,
    pub scale: f64,
    pub p: usize,
    pub alpha: f64,
    pub half_resolution: f64,
    pub single_resolution: f64,
    pub below_half: bool,
    pub below_single: bool,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct PackingRow {
    pub d_k: u64,
    pub p: u64,
    pub packed: u128,
    pub naive: u128,
    pub ratio: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CostTables {
    pub costs: Vec<CostRow>,
    pub alphas: Vec<AlphaRow>,
    pub packing: Vec<PackingRow>,
    /// Grid points skipped or worth attention, one message each.
    pub flagged: Vec<String>,
}

pub fn emit_cost_tables(grid: &CostGrid) -> Result<CostTables> {
    let mut t = CostTables::default();
    for &d in &grid.widths {
        for &h in &grid.heads {
            if h == 0 || d % h != 0 {
                t.flagged.push(format!("d={d} heads={h}: width does not split evenly"));
                continue;
            }
            let w = d / h;
            for &order in &grid.truncation_orders {
                if let Ok(state) = hidden_state_size_total(w, w, order) {
                    if state > DEFAULT_ELEMENT_BUDGET {
                        t.flagged.push(format!(
                            "d_k={w} P={order}: {state} state elements per head exceed the element budget {DEFAULT_ELEMENT_BUDGET}"
                        ));
                    }
                }
                for &n in &grid.contexts {
                    match CostReport::evaluate(w, w, order, n, h) {
                        Ok(r) => {
                            for dis in r.cross_check()? {
                                t.flagged.push(format!(
                                    "d_k={w} P={order}: {} closed form {} differs from per-degree sum {}",
                                    dis.quantity,
                                    format_rational(&dis.closed_form),
                                    format_rational(&dis.per_degree_sum)
                                ));
                            }
                            t.costs.push(CostRow {
                                d_k: w,
                                d_v: w,
                                order,
                                n,
                                heads: h,
                                hidden_state: r.hidden_state_elements,
                                flops_ours: format_rational(&r.flops_per_token),
                                kv_cache: r.kv_cache_elements,
                                flops_conv: r.conventional_flops_per_token,
                                naive_features: r.naive_feature_elements,
                                crossover_n: r.crossover_context_length,
                            });
                        }
                        Err(e) => t.flagged.push(format!("d_k={w} P={order} n={n} heads={h}: {e}")),
                    }
                }
            }
        }
    }
    let max_order = grid.truncation_orders.iter().copied().max().unwrap_or(0) as usize;
    for &d in &grid.widths {
        let scale = (d as f64).sqrt();
        // one past the largest order: the first dropped term
        for (p, &alpha) in taylor_coefficients(max_order + 1, scale).iter().enumerate() {
            t.alphas.push(AlphaRow {
                d_k: d,
                scale,
                p,
                alpha,
                half_resolution: HALF_RESOLUTION,
                single_resolution: SINGLE_RESOLUTION,
                below_half: alpha < HALF_RESOLUTION,
                below_single: alpha < SINGLE_RESOLUTION,
            });
        }
        for p in 0..max_order as u64 {
            let packed = basis_size(d, p)?;
            let naive = naive_feature_count(d, p)?;
            t.packing.push(PackingRow {
                d_k: d,
                p,
                packed,
                naive,
                ratio: packed as f64 / naive as f64,
            });
        }
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csvout::to_string;

    #[test]
    fn reference_rows() {
        let grid = CostGrid {
            widths: vec![64],
            truncation_orders: vec![4],
            contexts: vec![1_000_000],
            heads: vec![1],
        };
        let t = emit_cost_tables(&grid).unwrap();
        let r = &t.costs[0];
        assert_eq!(r.hidden_state, 3_113_825);
        assert_eq!(r.kv_cache, 128_000_000);
        assert_eq!(r.flops_ours, "12738308");
        let a4 = t.alphas.iter().find(|a| a.p == 4).unwrap();
        assert!(a4.below_half && !a4.below_single);
        assert!((a4.alpha - 1.0 / (24.0 * 4096.0)).abs() < 1e-20);
        assert_eq!(t.alphas.len(), 5);
        let p3 = t.packing.iter().find(|p| p.p == 3).unwrap();
        assert_eq!((p3.packed, p3.naive), (45_760, 262_144));
        assert!(t.flagged.is_empty(), "{:?}", t.flagged);
    }

    #[test]
    fn header_is_fixed() {
        let t = emit_cost_tables(&CostGrid {
            widths: vec![8],
            truncation_orders: vec![2],
            contexts: vec![10],
            heads: vec![1],
        })
        .unwrap();
        let csv = to_string(&t.costs);
        assert_eq!(
            csv.lines().next().unwrap(),
            "d_k,d_v,P,n,heads,hidden_state,flops_ours,kv_cache,flops_conv,naive_features,crossover_n"
        );
    }

    #[test]
    fn heads_split_width_and_flag_remainders() {
        let t = emit_cost_tables(&CostGrid {
            widths: vec![64],
            truncation_orders: vec![4],
            contexts: vec![100],
            heads: vec![1, 3, 8],
        })
        .unwrap();
        assert_eq!(t.costs.len(), 2);
        assert_eq!(t.costs[1].d_k, 8);
        assert!(t.costs[1].hidden_state < t.costs[0].hidden_state);
        assert_eq!(t.flagged.len(), 1);
    }

    #[test]
    fn oversized_states_are_flagged() {
        let t = emit_cost_tables(&CostGrid {
            widths: vec![128],
            truncation_orders: vec![6],
            contexts: vec![1],
            heads: vec![1],
        })
        .unwrap();
        assert_eq!(t.costs.len(), 1);
        assert!(t.flagged[0].contains("element budget"));
    }
}
