//! Pure-state trajectories whose average reproduces a covariant channel.
//!
//! One step applies a single block `A_k^{(q)}` chosen with probability
//! `‖A_k^{(q)} ψ‖²`. Every trajectory owns a ChaCha8 stream selected by its
//! index, so results do not depend on how trajectories are scheduled across
//! threads, and the ensemble sum is always reduced in trajectory order.
//!
//! The error estimate attached to an ensemble average is a heuristic: the
//! per-entry standard errors are combined into a Frobenius norm and scaled by
//! `½√N`, the factor relating Frobenius and trace distance on an `N`-level
//! system.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::channels::CovariantChannel;
use crate::error::{Error, Result};
use crate::lattice::MomentumIndex;
use crate::linalg::{CMatrix, CVector};
use crate::states::{DensityMatrix, PureState};

/// Allowed `|Σ p - 1|` for the outcome distribution of a step.
pub const PROBABILITY_TOL: f64 = 1e-10;

/// Redraws before a degenerate outcome becomes an error.
const RESAMPLE_LIMIT: usize = 8;

#[derive(Clone, Debug)]
pub struct TrajectoryConfig {
    pub seed: u64,
    pub n_steps: usize,
    pub n_trajectories: usize,
    pub channel: CovariantChannel,
}

impl TrajectoryConfig {
    pub fn new(channel: CovariantChannel, seed: u64, n_steps: usize, n_trajectories: usize) -> Result<Self> {
        if n_trajectories == 0 {
            return Err(Error::Validation("need at least one trajectory".into()));
        }
        Ok(TrajectoryConfig { seed, n_steps, n_trajectories, channel })
    }
}

/// Generator for trajectory `index`: stream `index` of the seed.
pub fn trajectory_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Which block fired.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Outcome {
    pub kraus_id: usize,
    pub transfer: MomentumIndex,
    pub probability: f64,
}

/// Inverse-CDF draw over `weights` in order; zero-weight entries are never
/// returned.
fn draw<R: Rng + ?Sized>(weights: &[f64], total: f64, rng: &mut R) -> Option<usize> {
    let u = rng.random::<f64>() * total;
    let mut acc = 0.0;
    let mut last_positive = None;
    for (i, &w) in weights.iter().enumerate() {
        if w <= 0.0 {
            continue;
        }
        acc += w;
        last_positive = Some(i);
        if u < acc {
            return Some(i);
        }
    }
    // u can exceed the running sum by roundoff
    last_positive
}

/// One quantum jump: samples `(k, q)` with probability `‖A_k^{(q)}ψ‖²` and
/// returns the normalized post-jump state.
pub fn step<R: Rng + ?Sized>(psi: &PureState, ch: &CovariantChannel, rng: &mut R) -> Result<(PureState, Outcome)> {
    if psi.lattice() != ch.lattice() {
        return Err(Error::LatticeMismatch);
    }
    let amps = psi.amplitudes();
    let weights: Vec<f64> = ch.blocks().iter().map(|b| b.weight(amps)).collect();
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateSampling("every outcome has zero probability".into()));
    }
    let deviation = (total - 1.0).abs();
    if deviation > PROBABILITY_TOL {
        return Err(Error::Normalization { what: "outcome probabilities", deviation });
    }
    for _ in 0..RESAMPLE_LIMIT {
        let Some(i) = draw(&weights, total, rng) else { break };
        let block = &ch.blocks()[i];
        let out: CVector = block.act(amps);
        let norm = out.norm();
        if norm > 0.0 && norm.is_finite() {
            let post = PureState::new(psi.lattice().clone(), out.unscale(norm))?;
            let outcome =
                Outcome { kraus_id: block.kraus_id(), transfer: block.transfer().clone(), probability: weights[i] };
            return Ok((post, outcome));
        }
    }
    Err(Error::DegenerateSampling(format!("no usable outcome after {RESAMPLE_LIMIT} draws")))
}

/// One outcome-log row.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OutcomeRecord {
    pub trajectory: usize,
    pub step: usize,
    pub kraus_id: usize,
    pub transfer: MomentumIndex,
}

struct TrajectoryResult {
    state: CVector,
    outcomes: Vec<Outcome>,
}

fn check_ensemble(cfg: &TrajectoryConfig, ensemble: &[(f64, PureState)]) -> Result<Vec<f64>> {
    if ensemble.is_empty() {
        return Err(Error::Validation("empty initial ensemble".into()));
    }
    if ensemble.iter().any(|(_, psi)| psi.lattice() != cfg.channel.lattice()) {
        return Err(Error::LatticeMismatch);
    }
    let weights: Vec<f64> = ensemble.iter().map(|(w, _)| *w).collect();
    if weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
        return Err(Error::Validation("ensemble weights must be non-negative".into()));
    }
    let deviation = (weights.iter().sum::<f64>() - 1.0).abs();
    if deviation > 1e-12 {
        return Err(Error::Normalization { what: "ensemble weights", deviation });
    }
    Ok(weights)
}

fn run_one(
    cfg: &TrajectoryConfig,
    ensemble: &[(f64, PureState)],
    weights: &[f64],
    index: usize,
) -> Result<TrajectoryResult> {
    let mut rng = trajectory_rng(cfg.seed, index as u64);
    let member = if ensemble.len() == 1 {
        0
    } else {
        draw(weights, weights.iter().sum(), &mut rng).expect("weights are normalized")
    };
    let mut psi = ensemble[member].1.clone();
    let mut outcomes = Vec::with_capacity(cfg.n_steps);
    for _ in 0..cfg.n_steps {
        let (next, outcome) = step(&psi, &cfg.channel, &mut rng)?;
        psi = next;
        outcomes.push(outcome);
    }
    Ok(TrajectoryResult { state: psi.into_amplitudes(), outcomes })
}

/// Final state of trajectory `index` together with its outcomes.
pub fn run_trajectory(
    cfg: &TrajectoryConfig,
    ensemble: &[(f64, PureState)],
    index: usize,
) -> Result<(PureState, Vec<Outcome>)> {
    let weights = check_ensemble(cfg, ensemble)?;
    let r = run_one(cfg, ensemble, &weights, index)?;
    Ok((PureState::new(cfg.channel.lattice().clone(), r.state)?, r.outcomes))
}

#[derive(Clone, Debug)]
pub struct EnsembleAverage {
    pub state: DensityMatrix,
    /// Heuristic trace-distance error bar; `None` for a single trajectory.
    pub error_estimate: Option<f64>,
    pub n_trajectories: usize,
    /// Largest `|‖ψ‖ - 1|` over final trajectory states.
    pub max_norm_deviation: f64,
    pub outcomes: Option<Vec<OutcomeRecord>>,
}

/// Average of `|ψ⟩⟨ψ|` over `cfg.n_trajectories` trajectories, each starting
/// from a member of `ensemble` drawn with its weight and then taking
/// `cfg.n_steps` jumps.
pub fn ensemble_average(cfg: &TrajectoryConfig, ensemble: &[(f64, PureState)]) -> Result<EnsembleAverage> {
    average(cfg, ensemble, false)
}

/// [`ensemble_average`] that also keeps every outcome.
pub fn ensemble_average_with_log(cfg: &TrajectoryConfig, ensemble: &[(f64, PureState)]) -> Result<EnsembleAverage> {
    average(cfg, ensemble, true)
}

fn average(cfg: &TrajectoryConfig, ensemble: &[(f64, PureState)], keep_log: bool) -> Result<EnsembleAverage> {
    let weights = check_ensemble(cfg, ensemble)?;
    let runs: Vec<TrajectoryResult> =
        (0..cfg.n_trajectories).into_par_iter().map(|i| run_one(cfg, ensemble, &weights, i)).collect::<Result<_>>()?;

    let n = cfg.channel.lattice().basis_size();
    let mut sum = CMatrix::zeros(n, n);
    // Σ |x_ij|² for the per-entry variance
    let mut sum_sq = nalgebra::DMatrix::<f64>::zeros(n, n);
    let mut max_norm_deviation = 0.0f64;
    for r in &runs {
        max_norm_deviation = max_norm_deviation.max((r.state.norm() - 1.0).abs());
        let outer = &r.state * r.state.adjoint();
        sum_sq += outer.map(|z| z.norm_sqr());
        sum += outer;
    }
    let count = cfg.n_trajectories as f64;
    let mean = sum.unscale(count);
    let error_estimate = (cfg.n_trajectories > 1).then(|| {
        let mut total_var = 0.0;
        for i in 0..n {
            for j in 0..n {
                let var = (sum_sq[(i, j)] / count - mean[(i, j)].norm_sqr()).max(0.0) * count / (count - 1.0);
                total_var += var / count;
            }
        }
        0.5 * (n as f64).sqrt() * total_var.sqrt()
    });
    let outcomes = keep_log.then(|| {
        runs.iter()
            .enumerate()
            .flat_map(|(t, r)| {
                r.outcomes.iter().enumerate().map(move |(s, o)| OutcomeRecord {
                    trajectory: t,
                    step: s,
                    kraus_id: o.kraus_id,
                    transfer: o.transfer.clone(),
                })
            })
            .collect()
    });
    Ok(EnsembleAverage {
        state: DensityMatrix::from_matrix_unchecked(cfg.channel.lattice().clone(), mean)?,
        error_estimate,
        n_trajectories: cfg.n_trajectories,
        max_norm_deviation,
        outcomes,
    })
}

/// `Φⁿ[Σ p_i |ψ_i⟩⟨ψ_i|]`, the target of [`ensemble_average`].
pub fn exact_average(cfg: &TrajectoryConfig, ensemble: &[(f64, PureState)]) -> Result<DensityMatrix> {
    check_ensemble(cfg, ensemble)?;
    let rho = DensityMatrix::mix(ensemble)?;
    cfg.channel.apply_repeated(&rho, cfg.n_steps)
}

/// Empirical distribution of single-step transfers from a plane wave.
pub fn transfer_frequencies(
    ch: &CovariantChannel,
    source: &MomentumIndex,
    samples: usize,
    seed: u64,
) -> Result<std::collections::BTreeMap<MomentumIndex, usize>> {
    let psi = PureState::plane_wave(ch.lattice(), source)?;
    let cfg = TrajectoryConfig::new(ch.clone(), seed, 1, samples)?;
    let counts = (0..samples)
        .into_par_iter()
        .map(|i| {
            let mut rng = trajectory_rng(cfg.seed, i as u64);
            step(&psi, ch, &mut rng).map(|(_, o)| o.transfer)
        })
        .collect::<Result<Vec<_>>>()?;
    let mut out = std::collections::BTreeMap::new();
    for q in counts {
        *out.entry(q).or_insert(0) += 1;
    }
    Ok(out)
}

/// Global phase `c` with `ψ_a = c ψ_b` when the two states are parallel.
pub fn relative_phase(a: &PureState, b: &PureState) -> Option<Complex64> {
    let overlap = (b.amplitudes().adjoint() * a.amplitudes())[(0, 0)];
    ((overlap.norm() - 1.0).abs() < 1e-12).then_some(overlap)
}
