//! Momentum-diffusion functionals of covariant channels and the theorem
//! checks built on them.
//!
//! For a plane-wave input `|n⟩` a covariant channel transfers momentum `m̃`
//! with probability `P(m, n) = Σ_k |⟨n+m|A_k|n⟩|²`. Everything here is a sum
//! over that table weighted by the populations `⟨n|ρ|n⟩`:
//!
//! * `d_j = Σ P m̃_j ρ_nn` is the mean-momentum shift,
//! * `D_j = Σ P (m̃_j² + 2 m̃_j ñ_j) ρ_nn` is the second-moment change,
//! * `Δ_j = D_j - d_j² - 2⟨p_j⟩ d_j` is the variance change.

use std::collections::BTreeMap;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channels::CovariantChannel;
use crate::error::{Error, Result};
use crate::lattice::{BoxLattice, MomentumIndex};
use crate::linalg::CMatrix;
use crate::random;
use crate::states::{moments_from_populations, DensityMatrix, PureState};

/// Default tolerance on `|g|²` mass outside the diagonal or boost pattern.
pub const CLASSIFY_TOL: f64 = 1e-9;

/// Default threshold above which a measured `|Δ|` counts as a spread change.
pub const DELTA_TOL: f64 = 1e-10;

/// `P(·, n)` for one source, indexed by the transfer lattice.
#[derive(Clone, Debug, PartialEq)]
pub struct TransferDistribution {
    lattice: BoxLattice,
    source: MomentumIndex,
    probs: Vec<f64>,
}

impl TransferDistribution {
    pub fn lattice(&self) -> &BoxLattice {
        &self.lattice
    }

    pub fn source(&self) -> &MomentumIndex {
        &self.source
    }

    pub fn transfer_lattice(&self) -> BoxLattice {
        self.lattice.transfer_lattice()
    }

    /// Probabilities in transfer-lattice flat order.
    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn prob(&self, m: &MomentumIndex) -> f64 {
        self.transfer_lattice().flat_index(m).map(|i| self.probs[i]).unwrap_or(0.0)
    }

    pub fn total(&self) -> f64 {
        self.probs.iter().sum()
    }

    /// `Σ_m P m̃_axis`.
    pub fn mean(&self, axis: usize) -> Result<f64> {
        self.lattice.check_axis(axis)?;
        Ok(moments_from_populations(&self.transfer_lattice(), &self.probs, axis).0)
    }

    /// `Σ_m P m̃_axis²`.
    pub fn second_moment(&self, axis: usize) -> Result<f64> {
        self.lattice.check_axis(axis)?;
        Ok(moments_from_populations(&self.transfer_lattice(), &self.probs, axis).1)
    }

    pub fn variance(&self, axis: usize) -> Result<f64> {
        let m1 = self.mean(axis)?;
        Ok(self.second_moment(axis)? - m1 * m1)
    }

    /// Probability of any transfer other than `m = 0`.
    pub fn off_center_mass(&self) -> f64 {
        let zero = self.transfer_lattice().origin();
        self.probs.iter().enumerate().filter(|(i, _)| *i != zero).map(|(_, p)| p).sum()
    }
}

pub fn transfer_distribution(ch: &CovariantChannel, n: &MomentumIndex) -> Result<TransferDistribution> {
    let lattice = ch.lattice();
    let source = lattice.flat_index(n)?;
    let transfers = lattice.transfer_lattice();
    let mut probs = vec![0.0; transfers.basis_size()];
    for b in ch.blocks() {
        if let Some(e) = b.entries().iter().find(|e| e.source == source) {
            probs[transfers.flat_index(b.transfer())?] += e.gain.norm_sqr();
        }
    }
    Ok(TransferDistribution { lattice: lattice.clone(), source: n.clone(), probs })
}

/// `P_axis(m_axis, n)`, indexed by `m_axis + 2·n_max`.
pub fn marginal(td: &TransferDistribution, axis: usize) -> Result<Vec<f64>> {
    td.lattice.check_axis(axis)?;
    let transfers = td.transfer_lattice();
    let offset = transfers.n_max() as i64;
    let mut out = vec![0.0; transfers.side()];
    for (i, p) in td.probs.iter().enumerate() {
        out[(transfers.component(i, axis) + offset) as usize] += p;
    }
    Ok(out)
}

/// Per-source first and second transfer moments `m̄_j(n)`, `m²̄_j(n)`.
///
/// Computing these once per channel turns every functional below into a
/// single pass over the populations.
#[derive(Clone, Debug)]
pub struct MomentTable {
    lattice: BoxLattice,
    mean: Vec<f64>,
    second: Vec<f64>,
}

impl MomentTable {
    pub fn new(ch: &CovariantChannel) -> Self {
        let lattice = ch.lattice().clone();
        let dim = lattice.dim();
        let unit = lattice.momentum_quantum();
        let n = lattice.basis_size();
        let mut mean = vec![0.0; n * dim];
        let mut second = vec![0.0; n * dim];
        for b in ch.blocks() {
            let q = b.transfer().components();
            for e in b.entries() {
                let w = e.gain.norm_sqr();
                for axis in 0..dim {
                    let m = unit * q[axis] as f64;
                    mean[e.source * dim + axis] += w * m;
                    second[e.source * dim + axis] += w * m * m;
                }
            }
        }
        MomentTable { lattice, mean, second }
    }

    pub fn mean(&self, source: usize, axis: usize) -> f64 {
        self.mean[source * self.lattice.dim() + axis]
    }

    pub fn second(&self, source: usize, axis: usize) -> f64 {
        self.second[source * self.lattice.dim() + axis]
    }

    fn check(&self, rho: &DensityMatrix, axis: usize) -> Result<()> {
        if rho.lattice() != &self.lattice {
            return Err(Error::LatticeMismatch);
        }
        self.lattice.check_axis(axis)
    }

    pub fn shift(&self, rho: &DensityMatrix, axis: usize) -> Result<f64> {
        self.check(rho, axis)?;
        Ok(rho.populations().iter().enumerate().map(|(i, w)| self.mean(i, axis) * w).sum())
    }

    pub fn axis_report(&self, rho: &DensityMatrix, axis: usize) -> Result<AxisDiffusion> {
        self.check(rho, axis)?;
        let pops = rho.populations();
        let (p_mean, _) = moments_from_populations(&self.lattice, &pops, axis);
        let mut d = 0.0;
        let mut big_d = 0.0;
        for (i, w) in pops.iter().enumerate() {
            let n = self.lattice.momentum_component(i, axis);
            d += self.mean(i, axis) * w;
            big_d += (self.second(i, axis) + 2.0 * self.mean(i, axis) * n) * w;
        }
        Ok(AxisDiffusion { axis, d, big_d, delta: big_d - d * d - 2.0 * p_mean * d })
    }

    pub fn report(&self, rho: &DensityMatrix) -> Result<DiffusionReport> {
        let axes = (0..self.lattice.dim()).map(|axis| self.axis_report(rho, axis)).collect::<Result<_>>()?;
        Ok(DiffusionReport { axes, class: None })
    }
}

/// `(d_j, D_j, Δ_j)` for one axis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AxisDiffusion {
    pub axis: usize,
    pub d: f64,
    #[serde(rename = "D")]
    pub big_d: f64,
    pub delta: f64,
}

impl AxisDiffusion {
    /// `|Δ - (D - d² - 2⟨p⟩d)|`.
    pub fn consistency_residual(&self, mean_momentum: f64) -> f64 {
        (self.delta - (self.big_d - self.d * self.d - 2.0 * mean_momentum * self.d)).abs()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffusionReport {
    pub axes: Vec<AxisDiffusion>,
    pub class: Option<ChannelClass>,
}

/// `d_j = Tr(p̂_j Φ[ρ]) - Tr(p̂_j ρ)` from the transfer table.
pub fn momentum_shift(ch: &CovariantChannel, rho: &DensityMatrix, axis: usize) -> Result<f64> {
    MomentTable::new(ch).shift(rho, axis)
}

/// `d_j`, `D_j` with the cross term, and `Δ_j`.
pub fn spread_change_full(ch: &CovariantChannel, rho: &DensityMatrix, axis: usize) -> Result<AxisDiffusion> {
    MomentTable::new(ch).axis_report(rho, axis)
}

/// `D_j` without the cross term, `Σ P m̃_j² ρ_nn`. Equals the full `D_j` when
/// the channel shifts no plane wave.
pub fn spread_change_centered(ch: &CovariantChannel, rho: &DensityMatrix, axis: usize) -> Result<f64> {
    let table = MomentTable::new(ch);
    table.check(rho, axis)?;
    Ok(rho.populations().iter().enumerate().map(|(i, w)| table.second(i, axis) * w).sum())
}

/// Full report with classification attached.
pub fn diffusion_report(ch: &CovariantChannel, rho: &DensityMatrix, tol: f64) -> Result<DiffusionReport> {
    let mut report = MomentTable::new(ch).report(rho)?;
    report.class = Some(classify_channel(ch, tol));
    Ok(report)
}

/// `Δ_j` measured directly as `Var_{Φ[ρ]}(p_j) - Var_ρ(p_j)`.
pub fn delta_spread(ch: &CovariantChannel, rho: &DensityMatrix, axis: usize) -> Result<f64> {
    let out = ch.apply(rho)?;
    Ok(out.momentum_spread(axis)? - rho.momentum_spread(axis)?)
}

/// `(d_j, D_j)` as differences of `Tr(p̂ ·)` and `Tr(p̂² ·)` on the applied state.
pub fn direct_moment_changes(ch: &CovariantChannel, rho: &DensityMatrix, axis: usize) -> Result<(f64, f64)> {
    let out = ch.apply(rho)?;
    Ok((out.mean_momentum(axis)? - rho.mean_momentum(axis)?, out.second_moment(axis)? - rho.second_moment(axis)?))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ChannelClass {
    MomentumDiagonal,
    PureBoost,
    Diffusive,
}

impl ChannelClass {
    pub const ALL: [ChannelClass; 3] =
        [ChannelClass::MomentumDiagonal, ChannelClass::PureBoost, ChannelClass::Diffusive];

    pub fn name(self) -> &'static str {
        match self {
            ChannelClass::MomentumDiagonal => "MomentumDiagonal",
            ChannelClass::PureBoost => "PureBoost",
            ChannelClass::Diffusive => "Diffusive",
        }
    }

    /// Whether the class forbids any change of momentum spread.
    pub fn preserves_spread(self) -> bool {
        self != ChannelClass::Diffusive
    }
}

impl std::fmt::Display for ChannelClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// `P(·, n)` as a sparse map from transfer to mass, one map per source.
fn transfer_masses(ch: &CovariantChannel) -> Vec<BTreeMap<MomentumIndex, f64>> {
    let mut out = vec![BTreeMap::new(); ch.lattice().basis_size()];
    for b in ch.blocks() {
        for e in b.entries() {
            *out[e.source].entry(b.transfer().clone()).or_insert(0.0) += e.gain.norm_sqr();
        }
    }
    out
}

/// Structural classification of the transfer table.
///
/// `MomentumDiagonal` when no source sends more than `tol` of its mass to a
/// nonzero transfer. `PureBoost` when every source sends at least `1 - tol` to
/// a single transfer `γ(n)` and, on every axis separately, either `γ_j(n)` or
/// `γ_j(n) + 2 n_j` is the same for all sources. `Diffusive` otherwise.
pub fn classify_channel(ch: &CovariantChannel, tol: f64) -> ChannelClass {
    let lattice = ch.lattice();
    let masses = transfer_masses(ch);
    let off_diagonal =
        |m: &BTreeMap<MomentumIndex, f64>| m.iter().filter(|(q, _)| !q.is_zero()).map(|(_, w)| w).sum::<f64>();
    if masses.iter().all(|m| off_diagonal(m) < tol) {
        return ChannelClass::MomentumDiagonal;
    }
    let mut gammas = Vec::with_capacity(masses.len());
    for m in &masses {
        match m.iter().find(|(_, &w)| w >= 1.0 - tol) {
            Some((q, _)) => gammas.push(q.clone()),
            None => return ChannelClass::Diffusive,
        }
    }
    for axis in 0..lattice.dim() {
        let constant = gammas.iter().all(|g| g.components()[axis] == gammas[0].components()[axis]);
        let reflected = |i: usize| gammas[i].components()[axis] + 2 * lattice.component(i, axis);
        let reflecting = (0..gammas.len()).all(|i| reflected(i) == reflected(0));
        if !(constant || reflecting) {
            return ChannelClass::Diffusive;
        }
    }
    ChannelClass::PureBoost
}

/// Seed for the random members of [`probe_suite`].
pub const PROBE_SEED: u64 = 0x5e_ed0f_d1ff;

/// A probe state with a stable identifier for reports.
#[derive(Clone, Debug)]
pub struct Probe {
    pub id: String,
    pub state: DensityMatrix,
}

/// Every plane wave, every equal superposition of adjacent plane waves along
/// each axis, and `n_random` seeded random mixed states.
pub fn probe_suite(lattice: &BoxLattice, n_random: usize, seed: u64) -> Result<Vec<Probe>> {
    let mut probes = Vec::new();
    for n in lattice.indices() {
        probes.push(Probe {
            id: format!("plane{n}"),
            state: DensityMatrix::from_pure(&PureState::plane_wave(lattice, &n)?),
        });
    }
    for axis in 0..lattice.dim() {
        for n in lattice.indices() {
            if let Some(psi) = random::adjacent_pair(lattice, &n, axis) {
                probes.push(Probe { id: format!("pair{n}+e{axis}"), state: DensityMatrix::from_pure(&psi) });
            }
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in 0..n_random {
        let rank = 1 + i % 4;
        probes.push(Probe { id: format!("random{i}"), state: random::density_matrix(lattice, rank, &mut rng) });
    }
    Ok(probes)
}

/// Largest `|Δ_j|` and largest `Δ_j` over probes and axes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DeltaMeasurement {
    pub max_abs_delta: f64,
    pub max_delta: f64,
    pub min_delta: f64,
}

pub fn measure_delta(ch: &CovariantChannel, probes: &[Probe]) -> Result<DeltaMeasurement> {
    let table = MomentTable::new(ch);
    let mut out = DeltaMeasurement { max_abs_delta: 0.0, max_delta: f64::NEG_INFINITY, min_delta: f64::INFINITY };
    for p in probes {
        for axis in table.report(&p.state)?.axes {
            out.max_abs_delta = out.max_abs_delta.max(axis.delta.abs());
            out.max_delta = out.max_delta.max(axis.delta);
            out.min_delta = out.min_delta.min(axis.delta);
        }
    }
    if probes.is_empty() {
        out.max_delta = 0.0;
        out.min_delta = 0.0;
    }
    Ok(out)
}

/// Whether a structural class agrees with measured spread changes: the first
/// two classes must leave every probe's spread unchanged, a diffusive channel
/// must change it on at least one. A channel that contracts momenta can lower
/// the spread, so the diffusive test is on `|Δ|`.
pub fn class_consistent(class: ChannelClass, measured: &DeltaMeasurement, delta_tol: f64) -> bool {
    let changes = measured.max_abs_delta > delta_tol;
    class.preserves_spread() != changes
}

/// Classification implied by measurements on plane waves alone: if no plane
/// wave has its mean or spread changed by more than `tol`, every `P(·, n)` has
/// zero mean and zero variance, hence is `δ_{m,0}`.
pub fn measured_momentum_diagonal(ch: &CovariantChannel, tol: f64) -> Result<bool> {
    let table = MomentTable::new(ch);
    let lattice = ch.lattice();
    for i in 0..lattice.basis_size() {
        for axis in 0..lattice.dim() {
            let mean = table.mean(i, axis);
            let variance = table.second(i, axis) - mean * mean;
            if mean.abs() > tol || variance.abs() > tol {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Outcome of checking `D_j ≥ (Σ_m P(m,n0) m̃_j²)·⟨n0|ρ|n0⟩` on a suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InheritanceReport {
    pub source: MomentumIndex,
    pub axis: usize,
    /// `Σ_m P(m, n0) m̃_j²`.
    pub transfer_second_moment: f64,
    pub precondition_met: bool,
    pub entries: Vec<InheritanceEntry>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InheritanceEntry {
    pub state: usize,
    pub population: f64,
    #[serde(rename = "D")]
    pub big_d: f64,
    pub bound: f64,
    /// `None` when `⟨n0|ρ|n0⟩ = 0` and the bound says nothing.
    pub holds: Option<bool>,
}

impl InheritanceReport {
    pub fn all_hold(&self) -> bool {
        self.precondition_met && self.entries.iter().all(|e| e.holds != Some(false))
    }
}

/// Checks that a channel diffusing the plane wave `n0` also diffuses every
/// state that overlaps it. A failed precondition is reported, not raised.
pub fn diffusion_inheritance(
    ch: &CovariantChannel,
    n0: &MomentumIndex,
    axis: usize,
    suite: &[DensityMatrix],
) -> Result<InheritanceReport> {
    let lattice = ch.lattice();
    lattice.check_axis(axis)?;
    let source = lattice.flat_index(n0)?;
    let table = MomentTable::new(ch);
    let second = table.second(source, axis);
    let precondition_met = second > 0.0;
    let mut entries = Vec::with_capacity(suite.len());
    for (state, rho) in suite.iter().enumerate() {
        let population = rho.population(n0)?;
        let big_d = table.axis_report(rho, axis)?.big_d;
        let bound = second * population;
        let holds = (population > 0.0 && precondition_met).then_some(big_d >= bound * (1.0 - 1e-12) && big_d > 0.0);
        entries.push(InheritanceEntry { state, population, big_d, bound, holds });
    }
    Ok(InheritanceReport { source: n0.clone(), axis, transfer_second_moment: second, precondition_met, entries })
}

/// `Tr(p̂_axis ρ)` and `Tr(p̂_axis² ρ)` through dense matrix products; an
/// independent route for cross-checking the population formulas.
pub fn dense_moments(lattice: &BoxLattice, rho: &CMatrix, axis: usize) -> Result<(f64, f64)> {
    lattice.check_axis(axis)?;
    let p = CMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        lattice.basis_size(),
        lattice.axis_momenta(axis).into_iter().map(|x| Complex64::new(x, 0.0)),
    ));
    let p_rho = &p * rho;
    let p2_rho = &p * &p_rho;
    Ok((p_rho.trace().re, p2_rho.trace().re))
}
