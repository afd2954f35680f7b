use faer::linalg::matmul::matmul;
use faer::{Accum, MatMut, MatRef, Par};
use ndarray::{Array2, ArrayView2};

use super::{denominator_guard, AttentionOutput, DenominatorPolicy, ReadoutOptions};
use crate::basis::{BasisFamily, DEFAULT_ELEMENT_BUDGET};
use crate::combinatorics::binomial;
use crate::error::{Error, Result};
use crate::featuremap::monomial;
use crate::scalar::{Field, Precision};

/// Rows of the feature block materialized at once by [`AttentionState::absorb_batch`].
const ROW_TILE: usize = 1024;
/// Tokens per feature block in [`AttentionState::absorb_batch`].
const TOKEN_TILE: usize = 512;

/// Adds one weighted key feature into a state row: `z += w`, `s += w·v`.
#[inline]
pub(crate) fn accumulate_row<T: Field>(weighted: T, value: &[T], z: &mut T, s_row: &mut [T]) {
    *z += weighted;
    for (s, &v) in s_row.iter_mut().zip(value) {
        *s += weighted * v;
    }
}

/// Reads one state row at a query feature: `den += f·z`, `num += f·s`.
#[inline]
pub(crate) fn readout_row<T: Field>(feature: T, z: T, s_row: &[T], den: &mut T, num: &mut [T]) {
    *den += feature * z;
    for (n, &s) in num.iter_mut().zip(s_row) {
        *n += feature * s;
    }
}

#[inline]
fn feature(x: &[f64], x32: &[f32], row: &[u32], precision: Precision) -> f64 {
    match precision {
        Precision::Double => monomial(x, row),
        Precision::Single => monomial(x32, row) as f64,
    }
}

/// Builds token-parallel feature rows, `dst[t] = weight · Π_j axes[row[j]][t]`
/// with the factors multiplied left to right. The product over all but the
/// last index is cached, so consecutive rows sharing that prefix cost one
/// multiply per token.
struct RowBuilder<T> {
    prefix: Option<Vec<u32>>,
    product: Vec<T>,
}

impl<T: Field> RowBuilder<T> {
    fn new(len: usize) -> Self {
        RowBuilder {
            prefix: None,
            product: vec![T::ONE; len],
        }
    }

    fn build(&mut self, axes: &[Vec<T>], row: &[u32], weight: f64, dst: &mut [f64]) {
        let Some((&last, prefix)) = row.split_last() else {
            dst.fill(weight);
            return;
        };
        let last = &axes[last as usize];
        let Some((&first, rest)) = prefix.split_first() else {
            for (d, &x) in dst.iter_mut().zip(last) {
                *d = weight * x.to_f64();
            }
            return;
        };
        if self.prefix.as_deref() != Some(prefix) {
            self.product.copy_from_slice(&axes[first as usize]);
            for &a in rest {
                for (s, &x) in self.product.iter_mut().zip(&axes[a as usize]) {
                    *s = *s * x;
                }
            }
            self.prefix = Some(prefix.to_vec());
        }
        for ((d, &s), &x) in dst.iter_mut().zip(&self.product).zip(last) {
            *d = weight * (s * x).to_f64();
        }
    }
}

fn narrow(x: &[f64], precision: Precision) -> Vec<f32> {
    match precision {
        Precision::Double => Vec::new(),
        Precision::Single => x.iter().map(|&v| v as f32).collect(),
    }
}

/// Per-degree accumulators `Z_p`, `S_p`. Its size depends only on
/// `(d_K, d_V, P)`, never on how many tokens have been absorbed.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionState {
    key_width: usize,
    value_width: usize,
    numerators: Vec<Array2<f64>>,
    denominators: Vec<Vec<f64>>,
    token_count: u64,
}

pub fn init_state(family: &BasisFamily, value_width: usize) -> Result<AttentionState> {
    init_state_with_budget(family, value_width, DEFAULT_ELEMENT_BUDGET)
}

pub fn init_state_with_budget(
    family: &BasisFamily,
    value_width: usize,
    element_budget: u128,
) -> Result<AttentionState> {
    if value_width == 0 {
        return Err(Error::domain("value width must be at least 1"));
    }
    let p = family.truncation_order() as u64;
    let rows = binomial(family.key_width() as u64 + p - 1, p - 1)?;
    let required = rows
        .checked_mul(value_width as u128 + 1)
        .ok_or(Error::Overflow("state element count"))?;
    if required > element_budget {
        return Err(Error::ElementBudget {
            required,
            budget: element_budget,
        });
    }
    let numerators = family
        .degree_bases()
        .iter()
        .map(|b| Array2::zeros((b.basis_size(), value_width)))
        .collect();
    let denominators = family
        .degree_bases()
        .iter()
        .map(|b| vec![0.0; b.basis_size()])
        .collect();
    Ok(AttentionState {
        key_width: family.key_width(),
        value_width,
        numerators,
        denominators,
        token_count: 0,
    })
}

pub fn update_state(
    state: &mut AttentionState,
    key: &[f64],
    value: &[f64],
    family: &BasisFamily,
) -> Result<()> {
    state.update(key, value, family, Precision::Double)
}

pub fn read_output(state: &AttentionState, query: &[f64], family: &BasisFamily) -> Result<AttentionOutput> {
    state.read(query, family, ReadoutOptions::default())
}

impl AttentionState {
    pub fn key_width(&self) -> usize {
        self.key_width
    }

    pub fn value_width(&self) -> usize {
        self.value_width
    }

    pub fn token_count(&self) -> u64 {
        self.token_count
    }

    pub fn truncation_order(&self) -> usize {
        self.denominators.len()
    }

    /// Number of scalar accumulators held, `(d_V + 1)·C(d_K + P - 1, P - 1)`.
    pub fn element_count(&self) -> usize {
        self.numerators.iter().map(|s| s.len()).sum::<usize>()
            + self.denominators.iter().map(Vec::len).sum::<usize>()
    }

    pub fn resident_bytes(&self) -> usize {
        self.element_count() * std::mem::size_of::<f64>()
    }

    pub fn numerator(&self, p: usize) -> ArrayView2<'_, f64> {
        self.numerators[p].view()
    }

    pub fn denominator(&self, p: usize) -> &[f64] {
        &self.denominators[p]
    }

    fn check_family(&self, family: &BasisFamily) -> Result<()> {
        if family.key_width() != self.key_width || family.truncation_order() != self.truncation_order() {
            return Err(Error::domain("state does not belong to this basis family"));
        }
        Ok(())
    }

    /// Absorbs one token: `Z_p += α_p C_p Φ_p(k)`, `S_p += (α_p C_p Φ_p(k)) vᵀ`.
    pub fn update(&mut self, key: &[f64], value: &[f64], family: &BasisFamily, precision: Precision) -> Result<()> {
        self.check_family(family)?;
        if key.len() != self.key_width || value.len() != self.value_width {
            return Err(Error::domain(format!(
                "token widths ({}, {}) do not match state ({}, {})",
                key.len(),
                value.len(),
                self.key_width,
                self.value_width
            )));
        }
        let key32 = narrow(key, precision);
        for (p, basis) in family.degree_bases().iter().enumerate() {
            let weights = family.folded_weights(p);
            let z = &mut self.denominators[p];
            let s = self.numerators[p]
                .as_slice_mut()
                .expect("state matrices are contiguous");
            for (i, (zi, s_row)) in z.iter_mut().zip(s.chunks_exact_mut(self.value_width)).enumerate() {
                let w = weights[i] * feature(key, &key32, basis.gather_row(i), precision);
                accumulate_row(w, value, zi, s_row);
            }
        }
        self.token_count += 1;
        Ok(())
    }

    /// Absorbs a block of tokens at once. Per degree this is
    /// `S_p += F_pᵀ V` with `F_pᵀ` the `m_p × B` weighted key features of the
    /// block, so the numerator update runs as one matrix product. Feature rows
    /// are built token-parallel from the transposed keys, each row keeping the
    /// left-to-right factor order of [`monomial`].
    ///
    /// Equal to repeated [`AttentionState::update`] up to summation order.
    pub fn absorb_batch(
        &mut self,
        keys: &[&[f64]],
        values: &[&[f64]],
        family: &BasisFamily,
        precision: Precision,
    ) -> Result<()> {
        self.check_family(family)?;
        if keys.len() != values.len() {
            return Err(Error::domain("key and value batches differ in length"));
        }
        for (i, (k, v)) in keys.iter().zip(values).enumerate() {
            if k.len() != self.key_width || v.len() != self.value_width {
                return Err(Error::domain("token widths do not match state").at_token(i));
            }
        }
        for (k, v) in keys.chunks(TOKEN_TILE).zip(values.chunks(TOKEN_TILE)) {
            self.absorb_block(k, v, family, precision);
        }
        Ok(())
    }

    fn absorb_block(&mut self, keys: &[&[f64]], values: &[&[f64]], family: &BasisFamily, precision: Precision) {
        let b = keys.len();
        let dv = self.value_width;
        let mut v = vec![0.0f64; b * dv];
        for (t, val) in values.iter().enumerate() {
            v[t * dv..(t + 1) * dv].copy_from_slice(val);
        }
        let v = MatRef::from_row_major_slice(&v, b, dv);
        let axes: Vec<Vec<f64>> = (0..self.key_width)
            .map(|a| keys.iter().map(|k| k[a]).collect())
            .collect();
        let axes32: Vec<Vec<f32>> = match precision {
            Precision::Double => Vec::new(),
            Precision::Single => axes.iter().map(|a| a.iter().map(|&x| x as f32).collect()).collect(),
        };
        let tile = ROW_TILE.min(family.total_rows());
        let mut feats = vec![0.0f64; tile * b];
        let ones = vec![1.0f64; b];
        let ones = MatRef::from_column_major_slice(&ones, b, 1);
        for (p, basis) in family.degree_bases().iter().enumerate() {
            let weights = family.folded_weights(p);
            let m = basis.basis_size();
            let mut rows64 = RowBuilder::<f64>::new(b);
            let mut rows32 = RowBuilder::<f32>::new(b);
            for r0 in (0..m).step_by(ROW_TILE) {
                let r1 = (r0 + ROW_TILE).min(m);
                let f = &mut feats[..(r1 - r0) * b];
                for (dst, i) in f.chunks_exact_mut(b).zip(r0..r1) {
                    let row = basis.gather_row(i);
                    match precision {
                        Precision::Double => rows64.build(&axes, row, weights[i], dst),
                        Precision::Single => rows32.build(&axes32, row, weights[i], dst),
                    }
                }
                let s_all = self.numerators[p].as_slice_mut().expect("numerators are standard layout");
                let s_block = MatMut::from_row_major_slice_mut(&mut s_all[r0 * dv..r1 * dv], r1 - r0, dv);
                let f = MatRef::from_row_major_slice(f, r1 - r0, b);
                matmul(s_block, Accum::Add, f, v, 1.0, Par::Seq);
                let z = MatMut::from_column_major_slice_mut(&mut self.denominators[p][r0..r1], r1 - r0, 1);
                matmul(z, Accum::Add, f, ones, 1.0, Par::Seq);
            }
        }
        self.token_count += b as u64;
    }

    /// Reads `S_T / Z_T` at `query`.
    pub fn read(&self, query: &[f64], family: &BasisFamily, options: ReadoutOptions) -> Result<AttentionOutput> {
        self.check_family(family)?;
        if query.len() != self.key_width {
            return Err(Error::domain(format!(
                "query width {} does not match key width {}",
                query.len(),
                self.key_width
            )));
        }
        if self.token_count == 0 {
            return Err(Error::EmptyContext);
        }
        let query32 = narrow(query, options.precision);
        let mut numerator = vec![0.0; self.value_width];
        let mut denominator = 0.0;
        for (p, basis) in family.degree_bases().iter().enumerate() {
            let s = self.numerators[p].as_slice().expect("state matrices are contiguous");
            for (i, (&zi, s_row)) in self.denominators[p]
                .iter()
                .zip(s.chunks_exact(self.value_width))
                .enumerate()
            {
                let f = feature(query, &query32, basis.gather_row(i), options.precision);
                readout_row(f, zi, s_row, &mut denominator, &mut numerator);
            }
        }
        let threshold = denominator_guard(self.token_count, family.taylor_coefficients()[0]);
        // `!(x >= t)` also catches NaN
        if !(denominator.abs() >= threshold) {
            return match options.policy {
                DenominatorPolicy::Strict => Err(Error::DegenerateDenominator {
                    denominator,
                    threshold,
                    numerator,
                }),
                DenominatorPolicy::FallbackUniform => Ok(self.uniform_output()),
            };
        }
        let output = numerator.iter().map(|n| n / denominator).collect();
        Ok(AttentionOutput {
            output,
            denominator,
            numerator,
        })
    }

    /// Degree-0 readout alone: the mean of all absorbed values.
    fn uniform_output(&self) -> AttentionOutput {
        let denominator = self.denominators[0][0];
        let numerator = self.numerators[0].row(0).to_vec();
        let output = numerator.iter().map(|n| n / denominator).collect();
        AttentionOutput {
            output,
            denominator,
            numerator,
        }
    }

    /// Elementwise sum of two states over disjoint token sets. This is the
    /// associative combine that makes the recurrence scannable.
    pub fn combine(&mut self, other: &AttentionState) -> Result<()> {
        if self.key_width != other.key_width
            || self.value_width != other.value_width
            || self.truncation_order() != other.truncation_order()
        {
            return Err(Error::domain("cannot combine states of different shapes"));
        }
        for (a, b) in self.numerators.iter_mut().zip(&other.numerators) {
            *a += b;
        }
        for (a, b) in self.denominators.iter_mut().zip(&other.denominators) {
            a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
        }
        self.token_count += other.token_count;
        Ok(())
    }

    /// Resets to the zero state without reallocating.
    pub fn clear(&mut self) {
        self.numerators.iter_mut().for_each(|s| s.fill(0.0));
        self.denominators.iter_mut().for_each(|z| z.fill(0.0));
        self.token_count = 0;
    }

    /// Visits every accumulator, degree by degree (denominator then numerator).
    pub fn for_each_element_mut(&mut self, mut f: impl FnMut(&mut f64)) {
        for (z, s) in self.denominators.iter_mut().zip(self.numerators.iter_mut()) {
            z.iter_mut().for_each(&mut f);
            s.iter_mut().for_each(&mut f);
        }
    }

    pub fn elements(&self) -> impl Iterator<Item = f64> + '_ {
        self.denominators
            .iter()
            .zip(&self.numerators)
            .flat_map(|(z, s)| z.iter().copied().chain(s.iter().copied()))
    }
}
