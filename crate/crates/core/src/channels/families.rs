//! Named channel families.

use std::collections::BTreeMap;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{CovariantChannel, TransferBlock, COMPLETENESS_TOL, PRUNE_THRESHOLD};
use crate::error::{Error, Result};
use crate::lattice::{BoxLattice, MomentumIndex};

const ONE: Complex64 = Complex64::new(1.0, 0.0);

fn phase_channel(lattice: &BoxLattice, phase: impl Fn(usize) -> f64) -> Result<CovariantChannel> {
    let block = TransferBlock::from_fn(lattice, 0, MomentumIndex::zero(lattice.dim()), |i| {
        Complex64::from_polar(1.0, phase(i))
    })?;
    CovariantChannel::new(lattice.clone(), vec![block])
}

pub fn build_identity(lattice: &BoxLattice) -> Result<CovariantChannel> {
    let block = TransferBlock::from_fn(lattice, 0, MomentumIndex::zero(lattice.dim()), |_| ONE)?;
    CovariantChannel::new(lattice.clone(), vec![block])
}

/// Spatial translation by `a`: single Kraus operator `e^{i p̂·a/ħ}`.
pub fn build_boost(lattice: &BoxLattice, a: &[f64]) -> Result<CovariantChannel> {
    if a.len() != lattice.dim() {
        return Err(Error::DimensionMismatch { expected: lattice.dim(), got: a.len() });
    }
    if a.iter().any(|c| !c.is_finite()) {
        return Err(Error::Validation("translation vector must be finite".into()));
    }
    let hbar = lattice.hbar();
    phase_channel(lattice, |i| {
        (0..lattice.dim()).map(|ax| lattice.momentum_component(i, ax) * a[ax]).sum::<f64>() / hbar
    })
}

/// Free evolution for time `t`: `e^{-i p̂² t / (2 m ħ)}`.
pub fn build_free_evolution(lattice: &BoxLattice, t: f64, mass: f64) -> Result<CovariantChannel> {
    if !(mass.is_finite() && mass > 0.0) {
        return Err(Error::Validation(format!("mass must be positive, got {mass}")));
    }
    if !t.is_finite() {
        return Err(Error::Validation("time must be finite".into()));
    }
    let hbar = lattice.hbar();
    phase_channel(lattice, |i| {
        let p2: f64 = (0..lattice.dim()).map(|ax| lattice.momentum_component(i, ax).powi(2)).sum();
        -p2 * t / (2.0 * mass * hbar)
    })
}

/// Kraus operators that are functions of momentum only:
/// `A_k = Σ_n √c_k(n) e^{iφ_k(n)} |n⟩⟨n|`. Both tables are indexed
/// `[k][flat n]`; `Σ_k c_k(n)` must be one within `1e-12`.
pub fn build_momentum_diagonal(lattice: &BoxLattice, c: &[Vec<f64>], phi: &[Vec<f64>]) -> Result<CovariantChannel> {
    let n = lattice.basis_size();
    if c.is_empty() || c.len() != phi.len() {
        return Err(Error::Validation(format!(
            "need matching nonempty weight and phase tables, got {} and {}",
            c.len(),
            phi.len()
        )));
    }
    if c.iter().chain(phi).any(|row| row.len() != n) {
        return Err(Error::Validation(format!("every table row must have {n} entries")));
    }
    if c.iter().flatten().any(|&w| !(w.is_finite() && w >= 0.0)) {
        return Err(Error::Validation("weights must be non-negative".into()));
    }
    let deviation = (0..n).map(|i| (c.iter().map(|row| row[i]).sum::<f64>() - 1.0).abs()).fold(0.0, f64::max);
    if deviation > 1e-12 {
        return Err(Error::Normalization { what: "momentum-diagonal weights", deviation });
    }
    let blocks = c
        .iter()
        .zip(phi)
        .enumerate()
        .map(|(k, (ck, pk))| {
            TransferBlock::from_fn(lattice, k, MomentumIndex::zero(lattice.dim()), |i| {
                Complex64::from_polar(ck[i].sqrt(), pk[i])
            })
        })
        .collect::<Result<Vec<_>>>()?;
    CovariantChannel::new(lattice.clone(), blocks)
}

/// GRW-type localization averaged over the localization centre.
///
/// The transfer weights are the Fourier coefficients of a box-periodized
/// Gaussian of width `r_c`, `|w(q)|² ∝ e^{-q̃² r_c²/ħ²}`. A source `n` keeps
/// only transfers with both `n + q` and `n - q` inside the window and its
/// weights are renormalized over that symmetric set, so every `P(·, n)` is
/// even and the mean momentum is conserved exactly. The reduced support near
/// the window edge is a cutoff artifact. With `strength < 1` the identity is
/// mixed in with weight `1 - strength`.
pub fn build_grw(lattice: &BoxLattice, r_c: f64, strength: f64) -> Result<CovariantChannel> {
    if !(r_c.is_finite() && r_c > 0.0) {
        return Err(Error::Validation(format!("r_c must be positive, got {r_c}")));
    }
    if !(0.0..=1.0).contains(&strength) {
        return Err(Error::Validation(format!("strength must lie in [0, 1], got {strength}")));
    }
    let dim = lattice.dim();
    let n_max = lattice.n_max() as i64;
    let unit = lattice.momentum_quantum();
    let hbar = lattice.hbar();
    let axis_weight = |m: i64| (-(m as f64 * unit * r_c / hbar).powi(2)).exp();
    // partial sums Z_1(r) = Σ_{|m| ≤ r} w(m) for r = 0..=n_max
    let partial: Vec<f64> = (0..=n_max).map(|r| (-r..=r).map(axis_weight).sum()).collect();

    let mut blocks = Vec::new();
    let collapse_id = if strength < 1.0 {
        blocks.push(TransferBlock::from_fn(lattice, 0, MomentumIndex::zero(dim), |_| {
            Complex64::new((1.0 - strength).sqrt(), 0.0)
        })?);
        1
    } else {
        0
    };
    for q in lattice.transfer_lattice().indices() {
        let wq: f64 = q.components().iter().map(|&m| axis_weight(m)).product();
        blocks.push(TransferBlock::from_fn(lattice, collapse_id, q.clone(), |source| {
            let mut z = 1.0;
            for (axis, &m) in q.components().iter().enumerate() {
                let room = n_max - lattice.component(source, axis).abs();
                if m.abs() > room {
                    return Complex64::ZERO;
                }
                z *= partial[room as usize];
            }
            Complex64::new((strength * wq / z).sqrt(), 0.0)
        })?);
    }
    let (ch, _) = CovariantChannel::from_blocks(lattice.clone(), blocks)?.prune(PRUNE_THRESHOLD)?;
    ch.ensure_complete(COMPLETENESS_TOL)?;
    Ok(ch)
}

/// Per-axis branch of a boost channel.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoostMode {
    /// `γ_j(n) = γ_j`: shift by a constant.
    Constant,
    /// `γ_j(n) = γ_j - 2 n_j`: reflect `n_j ↦ γ_j - n_j`.
    Reflecting,
}

/// Single Kraus operator `Σ_n |n + γ(n)⟩⟨n|`. Rejects any `γ` that would
/// send some source outside the window.
pub fn build_boost_family(lattice: &BoxLattice, gamma: &[i64], modes: &[BoostMode]) -> Result<CovariantChannel> {
    let dim = lattice.dim();
    if gamma.len() != dim {
        return Err(Error::DimensionMismatch { expected: dim, got: gamma.len() });
    }
    let modes: Vec<BoostMode> = match modes.len() {
        1 => vec![modes[0]; dim],
        m if m == dim => modes.to_vec(),
        m => return Err(Error::DimensionMismatch { expected: dim, got: m }),
    };
    let mut by_transfer: BTreeMap<MomentumIndex, Vec<(usize, Complex64)>> = BTreeMap::new();
    for source in 0..lattice.basis_size() {
        let q: Vec<i64> = (0..dim)
            .map(|ax| {
                let n = lattice.component(source, ax);
                match modes[ax] {
                    BoostMode::Constant => gamma[ax],
                    BoostMode::Reflecting => gamma[ax] - 2 * n,
                }
            })
            .collect();
        let q = MomentumIndex::new(q);
        if lattice.shift(source, &q).is_none() {
            return Err(Error::OutOfWindow {
                transfer: q.components().to_vec(),
                source_index: lattice.unflatten(source)?.components().to_vec(),
            });
        }
        by_transfer.entry(q).or_default().push((source, ONE));
    }
    let blocks = by_transfer
        .into_iter()
        .map(|(q, gains)| TransferBlock::from_entries(lattice, 0, q, gains))
        .collect::<Result<Vec<_>>>()?;
    CovariantChannel::new(lattice.clone(), blocks)
}
