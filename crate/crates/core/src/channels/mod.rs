//! Translation-covariant quantum channels in momentum-transfer form.
//!
//! A covariant channel is stored as a list of [`TransferBlock`]s. Block
//! `(k, q)` holds the fixed-transfer part `A_k^{(q)} = Σ_n g(n) |n+q⟩⟨n|` of
//! Kraus operator `A_k`; averaging a Kraus map over all box translations
//! removes every coherence between different transfers, so the channel acts as
//! `Φ[ρ] = Σ_{k,q} A_k^{(q)} ρ A_k^{(q)†}`. Covariance is exact by construction.

mod dense;
mod families;
pub mod io;

pub use dense::{half_box_measurement, DenseKrausChannel};
pub use families::{
    build_boost, build_boost_family, build_free_evolution, build_grw, build_identity, build_momentum_diagonal,
    BoostMode,
};

use std::collections::HashSet;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::{BoxLattice, MomentumIndex};
use crate::linalg::{CMatrix, CVector};
use crate::states::DensityMatrix;

/// Completeness tolerance `|Σ_{k,q} |g_{k,q}(n)|² - 1|`.
pub const COMPLETENESS_TOL: f64 = 1e-10;

/// Blocks whose largest gain is below this are dropped.
pub const PRUNE_THRESHOLD: f64 = 1e-14;

/// One nonzero-capable matrix element `⟨target|A|source⟩`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GainEntry {
    pub source: usize,
    pub target: usize,
    pub gain: Complex64,
}

/// Fixed-transfer part of one Kraus operator.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferBlock {
    kraus_id: usize,
    transfer: MomentumIndex,
    entries: Vec<GainEntry>,
}

impl TransferBlock {
    /// Builds a block with one entry per source whose target `n + q` stays
    /// inside the window.
    pub fn from_fn(
        lattice: &BoxLattice,
        kraus_id: usize,
        transfer: MomentumIndex,
        mut gain: impl FnMut(usize) -> Complex64,
    ) -> Result<Self> {
        if transfer.dim() != lattice.dim() {
            return Err(Error::DimensionMismatch { expected: lattice.dim(), got: transfer.dim() });
        }
        let entries = (0..lattice.basis_size())
            .filter_map(|source| lattice.shift(source, &transfer).map(|target| (source, target)))
            .map(|(source, target)| GainEntry { source, target, gain: gain(source) })
            .collect();
        Ok(TransferBlock { kraus_id, transfer, entries })
    }

    /// Builds a block from explicit `(source, gain)` pairs; every target must
    /// stay inside the window.
    pub fn from_entries(
        lattice: &BoxLattice,
        kraus_id: usize,
        transfer: MomentumIndex,
        gains: impl IntoIterator<Item = (usize, Complex64)>,
    ) -> Result<Self> {
        if transfer.dim() != lattice.dim() {
            return Err(Error::DimensionMismatch { expected: lattice.dim(), got: transfer.dim() });
        }
        let mut seen = HashSet::new();
        let mut entries = Vec::new();
        for (source, gain) in gains {
            if source >= lattice.basis_size() {
                return Err(Error::FlatIndexOutOfRange { index: source, size: lattice.basis_size() });
            }
            if !seen.insert(source) {
                return Err(Error::Format(format!("duplicate source {source} in block {kraus_id}/{transfer}")));
            }
            let target = lattice.shift(source, &transfer).ok_or_else(|| Error::OutOfWindow {
                transfer: transfer.components().to_vec(),
                source_index: lattice.unflatten(source).map(|n| n.components().to_vec()).unwrap_or_default(),
            })?;
            entries.push(GainEntry { source, target, gain });
        }
        entries.sort_by_key(|e| e.source);
        Ok(TransferBlock { kraus_id, transfer, entries })
    }

    pub fn kraus_id(&self) -> usize {
        self.kraus_id
    }

    pub fn transfer(&self) -> &MomentumIndex {
        &self.transfer
    }

    pub fn entries(&self) -> &[GainEntry] {
        &self.entries
    }

    pub fn max_gain(&self) -> f64 {
        self.entries.iter().fold(0.0, |acc, e| acc.max(e.gain.norm()))
    }

    /// `A^{(q)} ψ`.
    pub fn act(&self, psi: &CVector) -> CVector {
        let mut out = CVector::zeros(psi.len());
        for e in &self.entries {
            out[e.target] += e.gain * psi[e.source];
        }
        out
    }

    /// `‖A^{(q)} ψ‖²`; transfers are injective so no cross terms appear.
    pub fn weight(&self, psi: &CVector) -> f64 {
        self.entries.iter().map(|e| e.gain.norm_sqr() * psi[e.source].norm_sqr()).sum()
    }

    /// Accumulates `A ρ A†` into `out`.
    pub(crate) fn sandwich_into(&self, rho: &CMatrix, out: &mut CMatrix) {
        for a in self.entries.iter().filter(|e| e.gain != Complex64::ZERO) {
            for b in self.entries.iter().filter(|e| e.gain != Complex64::ZERO) {
                out[(a.target, b.target)] += a.gain * rho[(a.source, b.source)] * b.gain.conj();
            }
        }
    }
}

/// What [`CovariantChannel::prune`] removed.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PruneReport {
    pub dropped_blocks: usize,
    /// Largest per-source `|g|²` mass moved into the `q = 0` block.
    pub max_mass_moved: f64,
}

/// Translation-covariant CPTP map in transfer-decomposed form.
#[derive(Clone, Debug, PartialEq)]
pub struct CovariantChannel {
    lattice: BoxLattice,
    blocks: Vec<TransferBlock>,
}

impl CovariantChannel {
    /// Structural validation only: every block lives on `lattice` and each
    /// `(kraus_id, transfer)` pair appears once. Completeness is checked by
    /// [`Self::ensure_complete`].
    pub fn from_blocks(lattice: BoxLattice, blocks: Vec<TransferBlock>) -> Result<Self> {
        let mut keys = HashSet::new();
        for b in &blocks {
            if b.transfer.dim() != lattice.dim() {
                return Err(Error::DimensionMismatch { expected: lattice.dim(), got: b.transfer.dim() });
            }
            for e in &b.entries {
                if lattice.shift(e.source, &b.transfer) != Some(e.target) {
                    return Err(Error::Format(format!(
                        "block {}/{} has an inconsistent entry",
                        b.kraus_id, b.transfer
                    )));
                }
            }
            if !keys.insert((b.kraus_id, b.transfer.clone())) {
                return Err(Error::Validation(format!("duplicate block {}/{}", b.kraus_id, b.transfer)));
            }
        }
        Ok(CovariantChannel { lattice, blocks })
    }

    /// [`Self::from_blocks`] followed by the completeness check.
    pub fn new(lattice: BoxLattice, blocks: Vec<TransferBlock>) -> Result<Self> {
        let ch = Self::from_blocks(lattice, blocks)?;
        ch.ensure_complete(COMPLETENESS_TOL)?;
        Ok(ch)
    }

    pub fn lattice(&self) -> &BoxLattice {
        &self.lattice
    }

    pub fn blocks(&self) -> &[TransferBlock] {
        &self.blocks
    }

    pub fn n_kraus(&self) -> usize {
        self.blocks.iter().map(|b| b.kraus_id).collect::<HashSet<_>>().len()
    }

    /// `Σ_{k,q} |g_{k,q}(n)|²` for every source `n`, in flat order.
    pub fn source_masses(&self) -> Vec<f64> {
        let mut mass = vec![0.0; self.lattice.basis_size()];
        for b in &self.blocks {
            for e in &b.entries {
                mass[e.source] += e.gain.norm_sqr();
            }
        }
        mass
    }

    pub fn completeness_deviation(&self) -> f64 {
        self.source_masses().iter().fold(0.0, |acc, m| acc.max((m - 1.0).abs()))
    }

    pub fn ensure_complete(&self, tol: f64) -> Result<()> {
        let deviation = self.completeness_deviation();
        if deviation > tol {
            return Err(Error::Normalization { what: "Kraus completeness", deviation });
        }
        Ok(())
    }

    /// Raw action on a square matrix of basis size.
    pub fn apply_matrix(&self, rho: &CMatrix) -> CMatrix {
        let n = self.lattice.basis_size();
        let mut out = CMatrix::zeros(n, n);
        for b in &self.blocks {
            b.sandwich_into(rho, &mut out);
        }
        out
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.lattice() != &self.lattice {
            return Err(Error::LatticeMismatch);
        }
        DensityMatrix::from_matrix_unchecked(self.lattice.clone(), self.apply_matrix(rho.matrix()))
    }

    /// `(I_M ⊗ Φ)` on an operator of the doubled space `ancilla ⊗ system`,
    /// indexed `a·N + i`.
    pub fn apply_with_ancilla(&self, ancilla_dim: usize, rho: &CMatrix) -> Result<CMatrix> {
        let n = self.lattice.basis_size();
        let size = ancilla_dim * n;
        if rho.nrows() != size || rho.ncols() != size {
            return Err(Error::Validation(format!("expected {size}x{size} operator")));
        }
        let mut out = CMatrix::zeros(size, size);
        for blk in &self.blocks {
            for a in 0..ancilla_dim {
                for b in 0..ancilla_dim {
                    for x in &blk.entries {
                        for y in &blk.entries {
                            out[(a * n + x.target, b * n + y.target)] +=
                                x.gain * rho[(a * n + x.source, b * n + y.source)] * y.gain.conj();
                        }
                    }
                }
            }
        }
        Ok(out)
    }

    /// Choi matrix `Σ_{ij} |i⟩⟨j| ⊗ Φ(|i⟩⟨j|)`.
    pub fn choi_matrix(&self) -> CMatrix {
        let n = self.lattice.basis_size();
        let mut choi = CMatrix::zeros(n * n, n * n);
        for blk in &self.blocks {
            for x in &blk.entries {
                for y in &blk.entries {
                    choi[(x.source * n + x.target, y.source * n + y.target)] += x.gain * y.gain.conj();
                }
            }
        }
        choi
    }

    /// One dense operator per block; each is covariant on its own.
    pub fn densify(&self) -> DenseKrausChannel {
        let n = self.lattice.basis_size();
        let ops = self
            .blocks
            .iter()
            .map(|b| {
                let mut m = CMatrix::zeros(n, n);
                for e in &b.entries {
                    m[(e.target, e.source)] = e.gain;
                }
                m
            })
            .collect();
        DenseKrausChannel::from_operators_unchecked(self.lattice.clone(), ops)
    }

    /// Drops blocks whose largest gain is below `threshold` and adds the
    /// removed `|g|²` mass of every source to the first `q = 0` block, keeping
    /// its phase. A fresh `q = 0` block is appended when none exists.
    pub fn prune(mut self, threshold: f64) -> Result<(Self, PruneReport)> {
        let n = self.lattice.basis_size();
        let mut moved = vec![0.0; n];
        let before = self.blocks.len();
        self.blocks.retain(|b| {
            if b.max_gain() < threshold {
                for e in &b.entries {
                    moved[e.source] += e.gain.norm_sqr();
                }
                false
            } else {
                true
            }
        });
        let dropped_blocks = before - self.blocks.len();
        let max_mass_moved = moved.iter().copied().fold(0.0, f64::max);
        if max_mass_moved > 0.0 {
            match self.blocks.iter_mut().find(|b| b.transfer.is_zero()) {
                Some(b) => {
                    for e in b.entries.iter_mut() {
                        let m = moved[e.source];
                        if m > 0.0 {
                            let r = (e.gain.norm_sqr() + m).sqrt();
                            let phase = if e.gain == Complex64::ZERO { 0.0 } else { e.gain.arg() };
                            e.gain = Complex64::from_polar(r, phase);
                        }
                    }
                }
                None => {
                    let id = self.blocks.iter().map(|b| b.kraus_id + 1).max().unwrap_or(0);
                    let zero = MomentumIndex::zero(self.lattice.dim());
                    let block =
                        TransferBlock::from_fn(&self.lattice, id, zero, |s| Complex64::new(moved[s].sqrt(), 0.0))?;
                    self.blocks.push(block);
                }
            }
        }
        Ok((self, PruneReport { dropped_blocks, max_mass_moved }))
    }

    /// Applies `steps` times.
    pub fn apply_repeated(&self, rho: &DensityMatrix, steps: usize) -> Result<DensityMatrix> {
        let mut cur = rho.clone();
        for _ in 0..steps {
            cur = self.apply(&cur)?;
        }
        Ok(cur)
    }
}

#[cfg(test)]
mod tests;
