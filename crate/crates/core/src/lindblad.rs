//! Translation-covariant Lindblad generators in Holevo form.
//!
//! Every jump operator shifts momentum by a fixed transfer `q` and is
//! otherwise a function of momentum, `L_j(q) = Σ_n ℓ_j(q, n) |n+q⟩⟨n|`. The
//! continuum integral over transfers becomes a lattice sum with measure
//! `μ = (2πħ/L)^d`, so
//!
//! `𝓛ρ = μ Σ_{j,q} ( L_j(q) ρ L_j(q)† - ½ {L_j(q)† L_j(q), ρ} )`.
//!
//! `L†L` only sees sources whose target stays inside the window, which keeps
//! the generator exactly trace preserving on the truncated space.

use std::path::Path;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::channels::{io, TransferBlock};
use crate::error::{Error, Result};
use crate::lattice::{BoxLattice, MomentumIndex};
use crate::linalg::{self, CMatrix, I};
use crate::states::{moments_from_populations, DensityMatrix};

/// Drift bound on trace and hermiticity during [`evolve`].
pub const STATE_DRIFT_TOL: f64 = 1e-8;

/// Most negative eigenvalue tolerated during [`evolve`].
pub const POSITIVITY_FLOOR: f64 = -1e-6;

#[derive(Clone, Debug, PartialEq)]
pub struct LindbladGenerator {
    lattice: BoxLattice,
    terms: Vec<TransferBlock>,
    hamiltonian: Option<CMatrix>,
    /// `Σ_{j,q} |ℓ_j(q, n)|²` per source: the diagonal of `Σ L†L`.
    loss: Vec<f64>,
}

impl LindbladGenerator {
    /// Terms are labelled by `kraus_id` (the index `j`); `(j, q)` pairs must be
    /// unique. A Hamiltonian, when given, must be Hermitian within `1e-12`.
    pub fn new(lattice: BoxLattice, terms: Vec<TransferBlock>, hamiltonian: Option<CMatrix>) -> Result<Self> {
        // reuse the structural checks of channel blocks
        let terms = crate::channels::CovariantChannel::from_blocks(lattice.clone(), terms)?.blocks().to_vec();
        if let Some(h) = &hamiltonian {
            let n = lattice.basis_size();
            if h.nrows() != n || h.ncols() != n {
                return Err(Error::Validation(format!("hamiltonian must be {n}x{n}")));
            }
            let deviation = linalg::hermiticity_deviation(h);
            if deviation > 1e-12 {
                return Err(Error::Normalization { what: "hamiltonian hermiticity", deviation });
            }
        }
        if terms.iter().flat_map(|t| t.entries()).any(|e| !(e.gain.re.is_finite() && e.gain.im.is_finite())) {
            return Err(Error::Validation("jump amplitudes must be finite".into()));
        }
        let mut loss = vec![0.0; lattice.basis_size()];
        for t in &terms {
            for e in t.entries() {
                loss[e.source] += e.gain.norm_sqr();
            }
        }
        Ok(LindbladGenerator { lattice, terms, hamiltonian, loss })
    }

    pub fn zero(lattice: &BoxLattice) -> Self {
        Self::new(lattice.clone(), Vec::new(), None).expect("empty generator is valid")
    }

    /// Gaussian transfer kernel of width `r_c`: `ℓ(q, n) = √(rate·W(q)/(μZ))`
    /// with `W(q) = e^{-q̃² r_c²/ħ²}` and `Z = Σ_q W(q)` over every transfer
    /// of the window. A source keeps only transfers with `n ± q` both inside,
    /// so `f(q, n) = f(-q, n)` and the mean momentum never drifts. Away from
    /// the window edge the total jump rate is `rate`.
    pub fn csl_like(lattice: &BoxLattice, r_c: f64, rate: f64) -> Result<Self> {
        if !(r_c.is_finite() && r_c > 0.0) {
            return Err(Error::Validation(format!("r_c must be positive, got {r_c}")));
        }
        if !(rate.is_finite() && rate >= 0.0) {
            return Err(Error::Validation(format!("rate must be non-negative, got {rate}")));
        }
        let unit = lattice.momentum_quantum();
        let hbar = lattice.hbar();
        let mu = measure(lattice);
        let weight = |q: &MomentumIndex| -> f64 {
            q.components().iter().map(|&m| (-(m as f64 * unit * r_c / hbar).powi(2)).exp()).product()
        };
        let transfers = lattice.transfer_lattice();
        let z: f64 = transfers.indices().map(|q| weight(&q)).sum();
        let mut terms = Vec::new();
        for q in transfers.indices() {
            let amp = (rate * weight(&q) / (mu * z)).sqrt();
            if amp < crate::channels::PRUNE_THRESHOLD {
                continue;
            }
            let neg = q.neg();
            let gains = (0..lattice.basis_size())
                .filter(|&s| lattice.shift(s, &q).is_some() && lattice.shift(s, &neg).is_some())
                .map(|s| (s, Complex64::new(amp, 0.0)));
            terms.push(TransferBlock::from_entries(lattice, 0, q.clone(), gains)?);
        }
        terms.retain(|t| !t.entries().is_empty());
        Self::new(lattice.clone(), terms, None)
    }

    /// Only `q = 0` terms: `ℓ_j(0, n) = √(λ_j(n)/μ) e^{iφ_j(n)}`, so the
    /// generator is pure momentum-basis dephasing with rates `λ_j(n)`.
    pub fn momentum_diagonal(lattice: &BoxLattice, rates: &[Vec<f64>], phases: &[Vec<f64>]) -> Result<Self> {
        let n = lattice.basis_size();
        if rates.len() != phases.len() || rates.iter().chain(phases).any(|row| row.len() != n) {
            return Err(Error::Validation(format!("rate and phase tables must be matching rows of {n} entries")));
        }
        if rates.iter().flatten().any(|&r| !(r.is_finite() && r >= 0.0)) {
            return Err(Error::Validation("rates must be non-negative".into()));
        }
        let mu = measure(lattice);
        let zero = MomentumIndex::zero(lattice.dim());
        let terms = rates
            .iter()
            .zip(phases)
            .enumerate()
            .map(|(j, (r, p))| {
                TransferBlock::from_fn(lattice, j, zero.clone(), |s| Complex64::from_polar((r[s] / mu).sqrt(), p[s]))
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(lattice.clone(), terms, None)
    }

    /// Terms stored in the channel file format (`kraus_id` is the label `j`).
    pub fn from_str_terms(text: &str) -> Result<Self> {
        let (lattice, blocks) = io::blocks_from_str(text)?;
        Self::new(lattice, blocks, None)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_str_terms(&std::fs::read_to_string(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, io::blocks_to_string(&self.lattice, &self.terms)?)?;
        Ok(())
    }

    pub fn with_hamiltonian(self, hamiltonian: CMatrix) -> Result<Self> {
        Self::new(self.lattice, self.terms, Some(hamiltonian))
    }

    /// `H = p̂²/(2m)`.
    pub fn free_hamiltonian(lattice: &BoxLattice, mass: f64) -> Result<CMatrix> {
        if !(mass.is_finite() && mass > 0.0) {
            return Err(Error::Validation(format!("mass must be positive, got {mass}")));
        }
        let n = lattice.basis_size();
        Ok(CMatrix::from_fn(n, n, |i, j| {
            if i == j {
                let p2: f64 = (0..lattice.dim()).map(|a| lattice.momentum_component(i, a).powi(2)).sum();
                Complex64::new(p2 / (2.0 * mass), 0.0)
            } else {
                Complex64::ZERO
            }
        }))
    }

    pub fn lattice(&self) -> &BoxLattice {
        &self.lattice
    }

    pub fn terms(&self) -> &[TransferBlock] {
        &self.terms
    }

    pub fn hamiltonian(&self) -> Option<&CMatrix> {
        self.hamiltonian.as_ref()
    }

    /// `μ Σ_{j,q} |ℓ_j(q, n)|²` per source: total jump rate out of `n`.
    pub fn loss_rates(&self) -> Vec<f64> {
        let mu = measure(&self.lattice);
        self.loss.iter().map(|l| mu * l).collect()
    }

    /// Dissipative part `𝓛ρ` on a raw matrix.
    pub fn dissipator_matrix(&self, rho: &CMatrix) -> CMatrix {
        let n = self.lattice.basis_size();
        let mut jumps = CMatrix::zeros(n, n);
        for t in &self.terms {
            t.sandwich_into(rho, &mut jumps);
        }
        let mu = measure(&self.lattice);
        CMatrix::from_fn(n, n, |i, j| mu * (jumps[(i, j)] - 0.5 * (self.loss[i] + self.loss[j]) * rho[(i, j)]))
    }

    /// `-(i/ħ)[H, ρ] + 𝓛ρ`.
    pub fn rhs_matrix(&self, rho: &CMatrix) -> CMatrix {
        let mut out = self.dissipator_matrix(rho);
        if let Some(h) = &self.hamiltonian {
            let comm = h * rho - rho * h;
            out -= comm * (I / self.lattice.hbar());
        }
        out
    }

    fn check(&self, rho: &DensityMatrix) -> Result<()> {
        if rho.lattice() != &self.lattice {
            return Err(Error::LatticeMismatch);
        }
        Ok(())
    }
}

/// `μ = (2πħ/L)^d`.
pub fn measure(lattice: &BoxLattice) -> f64 {
    lattice.momentum_quantum().powi(lattice.dim() as i32)
}

/// `𝓛ρ` (dissipative part only).
pub fn generator_apply(gen: &LindbladGenerator, rho: &DensityMatrix) -> Result<CMatrix> {
    gen.check(rho)?;
    Ok(gen.dissipator_matrix(rho.matrix()))
}

/// Full right-hand side including the Hamiltonian.
pub fn rhs(gen: &LindbladGenerator, rho: &DensityMatrix) -> Result<CMatrix> {
    gen.check(rho)?;
    Ok(gen.rhs_matrix(rho.matrix()))
}

/// `Tr(p̂_j 𝓛ρ)` and `Tr(p̂_j² 𝓛ρ)` per axis from the rate table
/// `f(q, n) = Σ_j |ℓ_j(q, n)|²`:
///
/// `dp = μ Σ f q̃ ρ_nn`, `dp² = μ Σ f (q̃² + 2 ñ q̃) ρ_nn`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MomentRates {
    pub dp_rate: Vec<f64>,
    pub dp2_rate: Vec<f64>,
}

pub fn moment_rates(gen: &LindbladGenerator, rho: &DensityMatrix) -> Result<MomentRates> {
    gen.check(rho)?;
    let lattice = &gen.lattice;
    let dim = lattice.dim();
    let unit = lattice.momentum_quantum();
    let mu = measure(lattice);
    let pops = rho.populations();
    let mut dp_rate = vec![0.0; dim];
    let mut dp2_rate = vec![0.0; dim];
    for t in &gen.terms {
        let q = t.transfer().components();
        for e in t.entries() {
            let w = mu * e.gain.norm_sqr() * pops[e.source];
            for axis in 0..dim {
                let qt = unit * q[axis] as f64;
                let nt = lattice.momentum_component(e.source, axis);
                dp_rate[axis] += w * qt;
                dp2_rate[axis] += w * (qt * qt + 2.0 * nt * qt);
            }
        }
    }
    Ok(MomentRates { dp_rate, dp2_rate })
}

/// Largest nonzero-transfer rate `μ f(q, n)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RateWitness {
    pub transfer: MomentumIndex,
    pub source: MomentumIndex,
    pub mass: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroDiffusion {
    pub is_momentum_diagonal: bool,
    pub witness: Option<RateWitness>,
}

/// Whether every nonzero-transfer rate `μ f(q, n)` is below `tol`; the
/// witness is the largest one found.
pub fn zero_diffusion_reduce(gen: &LindbladGenerator, tol: f64) -> Result<ZeroDiffusion> {
    let lattice = &gen.lattice;
    let mu = measure(lattice);
    let mut rates: std::collections::BTreeMap<(MomentumIndex, usize), f64> = Default::default();
    for t in gen.terms.iter().filter(|t| !t.transfer().is_zero()) {
        for e in t.entries() {
            *rates.entry((t.transfer().clone(), e.source)).or_insert(0.0) += mu * e.gain.norm_sqr();
        }
    }
    let mut witness: Option<RateWitness> = None;
    for ((q, s), mass) in rates {
        if mass > 0.0 && witness.as_ref().is_none_or(|w| mass > w.mass) {
            witness = Some(RateWitness { transfer: q, source: lattice.unflatten(s)?, mass });
        }
    }
    let is_momentum_diagonal = witness.as_ref().is_none_or(|w| w.mass < tol);
    Ok(ZeroDiffusion { is_momentum_diagonal, witness })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryPoint {
    pub t: f64,
    pub trace: f64,
    pub min_eig: f64,
    pub mean_p: Vec<f64>,
    pub spread_p: Vec<f64>,
}

impl TrajectoryPoint {
    fn record(lattice: &BoxLattice, t: f64, rho: &CMatrix) -> Self {
        let pops: Vec<f64> = rho.diagonal().iter().map(|z| z.re).collect();
        let (mean_p, spread_p) = (0..lattice.dim())
            .map(|axis| {
                let (m1, m2) = moments_from_populations(lattice, &pops, axis);
                (m1, m2 - m1 * m1)
            })
            .unzip();
        TrajectoryPoint { t, trace: linalg::trace(rho).re, min_eig: linalg::min_eigenvalue(rho), mean_p, spread_p }
    }

    /// `⟨p_axis²⟩` recovered from mean and spread.
    pub fn second_moment(&self, axis: usize) -> f64 {
        self.spread_p[axis] + self.mean_p[axis] * self.mean_p[axis]
    }
}

#[derive(Clone, Debug)]
pub struct Trajectory {
    pub points: Vec<TrajectoryPoint>,
    pub final_state: DensityMatrix,
}

fn rk4_step(gen: &LindbladGenerator, rho: &CMatrix, h: f64) -> CMatrix {
    let k1 = gen.rhs_matrix(rho);
    let k2 = gen.rhs_matrix(&(rho + &k1 * Complex64::new(h / 2.0, 0.0)));
    let k3 = gen.rhs_matrix(&(rho + &k2 * Complex64::new(h / 2.0, 0.0)));
    let k4 = gen.rhs_matrix(&(rho + &k3 * Complex64::new(h, 0.0)));
    rho + (k1 + k2 * Complex64::new(2.0, 0.0) + k3 * Complex64::new(2.0, 0.0) + k4) * Complex64::new(h / 6.0, 0.0)
}

/// Fixed-step RK4 from `t = 0` to `t_final`; the last step is shortened to
/// land on `t_final`. Every step records a [`TrajectoryPoint`] and aborts if
/// the state drifts from trace one or hermiticity by more than
/// [`STATE_DRIFT_TOL`] or acquires an eigenvalue below [`POSITIVITY_FLOOR`].
pub fn evolve(gen: &LindbladGenerator, rho0: &DensityMatrix, t_final: f64, dt: f64) -> Result<Trajectory> {
    gen.check(rho0)?;
    if !(dt.is_finite() && dt > 0.0) {
        return Err(Error::Validation(format!("dt must be positive, got {dt}")));
    }
    if !(t_final.is_finite() && t_final >= 0.0) {
        return Err(Error::Validation(format!("t_final must be non-negative, got {t_final}")));
    }
    let lattice = &gen.lattice;
    let steps = step_count(t_final, dt);
    let mut rho = rho0.matrix().clone();
    let mut points = Vec::with_capacity(steps + 1);
    points.push(TrajectoryPoint::record(lattice, 0.0, &rho));
    for k in 1..=steps {
        let t_prev = (k - 1) as f64 * dt;
        let t = if k == steps { t_final } else { k as f64 * dt };
        rho = rk4_step(gen, &rho, t - t_prev);
        let point = TrajectoryPoint::record(lattice, t, &rho);
        let trace_dev = (linalg::trace(&rho) - Complex64::new(1.0, 0.0)).norm();
        let herm_dev = linalg::hermiticity_deviation(&rho);
        if trace_dev > STATE_DRIFT_TOL || herm_dev > STATE_DRIFT_TOL {
            return Err(Error::StateDrift { t, trace_dev, herm_dev });
        }
        if point.min_eig < POSITIVITY_FLOOR {
            return Err(Error::PositivityDrift { t, min_eig: point.min_eig });
        }
        points.push(point);
    }
    let final_state = DensityMatrix::from_matrix_unchecked(lattice.clone(), rho)?;
    Ok(Trajectory { points, final_state })
}

/// Number of RK4 steps `evolve` takes.
pub fn step_count(t_final: f64, dt: f64) -> usize {
    let raw = t_final / dt;
    // tolerate roundoff in t_final = k·dt
    let k = (raw - 1e-9 * raw.max(1.0)).ceil();
    k.max(0.0) as usize
}

/// Least-squares line `y = a + b t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineFit {
    pub intercept: f64,
    pub slope: f64,
    /// Largest `|y - fit|` relative to `max |y - y_0|`.
    pub max_relative_residual: f64,
}

pub fn linear_fit(t: &[f64], y: &[f64]) -> Result<LineFit> {
    if t.len() != y.len() || t.len() < 2 {
        return Err(Error::Validation("a line fit needs at least two matching points".into()));
    }
    let n = t.len() as f64;
    let tm = t.iter().sum::<f64>() / n;
    let ym = y.iter().sum::<f64>() / n;
    let stt: f64 = t.iter().map(|x| (x - tm).powi(2)).sum();
    if stt == 0.0 {
        return Err(Error::Validation("line fit needs distinct abscissae".into()));
    }
    let sty: f64 = t.iter().zip(y).map(|(x, v)| (x - tm) * (v - ym)).sum();
    let slope = sty / stt;
    let intercept = ym - slope * tm;
    let scale = y.iter().map(|v| (v - y[0]).abs()).fold(0.0, f64::max).max(f64::MIN_POSITIVE);
    let max_relative_residual =
        t.iter().zip(y).map(|(x, v)| (v - intercept - slope * x).abs()).fold(0.0, f64::max) / scale;
    Ok(LineFit { intercept, slope, max_relative_residual })
}
