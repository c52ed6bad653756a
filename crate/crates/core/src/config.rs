//! TOML experiment configuration.
//!
//! Every table rejects unknown keys. Relative file paths are resolved against
//! the directory holding the config file.

use std::path::{Path, PathBuf};

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::channels::{self, io, BoostMode, CovariantChannel};
use crate::diagnostics::{CLASSIFY_TOL, DELTA_TOL};
use crate::error::{Error, Result};
use crate::lattice::{BoxLattice, MomentumIndex};
use crate::lindblad::LindbladGenerator;
use crate::random;
use crate::states::{DensityMatrix, PureState};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub lattice: LatticeSpec,
    pub channel: Option<ChannelSpec>,
    pub lindblad: Option<LindbladSpec>,
    pub state: Option<StateSpec>,
    #[serde(default)]
    pub run: RunSpec,
    #[serde(default)]
    pub output: OutputSpec,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec {
    pub dim: usize,
    pub n_max: u32,
    pub box_length: f64,
    #[serde(default = "one")]
    pub hbar: f64,
}

impl Default for LatticeSpec {
    fn default() -> Self {
        LatticeSpec { dim: 1, n_max: 4, box_length: 2.0 * std::f64::consts::PI, hbar: 1.0 }
    }
}

fn one() -> f64 {
    1.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ChannelSpec {
    Identity {},
    Boost {
        a: Vec<f64>,
    },
    Free {
        t: f64,
        mass: f64,
    },
    Grw {
        r_c: f64,
        #[serde(default = "one")]
        strength: f64,
    },
    /// Explicit `c`/`phi` tables indexed `[k][flat n]`, or seeded random
    /// tables with `n_kraus` operators when both are omitted.
    MomentumDiagonal {
        c: Option<Vec<Vec<f64>>>,
        phi: Option<Vec<Vec<f64>>>,
        #[serde(default = "two")]
        n_kraus: usize,
        seed: Option<u64>,
    },
    BoostFamily {
        gamma: Vec<i64>,
        mode: Vec<BoostMode>,
    },
    File {
        path: PathBuf,
    },
}

fn two() -> usize {
    2
}

impl ChannelSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            ChannelSpec::Identity {} => "identity",
            ChannelSpec::Boost { .. } => "boost",
            ChannelSpec::Free { .. } => "free",
            ChannelSpec::Grw { .. } => "grw",
            ChannelSpec::MomentumDiagonal { .. } => "momentum_diagonal",
            ChannelSpec::BoostFamily { .. } => "boost_family",
            ChannelSpec::File { .. } => "file",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LindbladSpec {
    Zero {},
    CslLike {
        r_c: f64,
        rate: f64,
    },
    /// Explicit `rates`/`phases` tables indexed `[j][flat n]`, or seeded random
    /// rates in `[0, max_rate)` for `n_terms` terms.
    MomentumDiagonal {
        rates: Option<Vec<Vec<f64>>>,
        phases: Option<Vec<Vec<f64>>>,
        #[serde(default = "two")]
        n_terms: usize,
        #[serde(default = "one")]
        max_rate: f64,
        seed: Option<u64>,
    },
    File {
        path: PathBuf,
    },
}

impl LindbladSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LindbladSpec::Zero {} => "zero",
            LindbladSpec::CslLike { .. } => "csl_like",
            LindbladSpec::MomentumDiagonal { .. } => "momentum_diagonal",
            LindbladSpec::File { .. } => "file",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Amplitude {
    #[serde(default)]
    pub re: f64,
    #[serde(default)]
    pub im: f64,
    pub n: Vec<i64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MixtureMember {
    pub weight: f64,
    pub terms: Vec<Amplitude>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum StateSpec {
    PlaneWave {
        n: Vec<i64>,
    },
    /// Normalized on load.
    Superposition {
        terms: Vec<Amplitude>,
    },
    Mixture {
        members: Vec<MixtureMember>,
    },
    Random {
        rank: usize,
        seed: Option<u64>,
    },
    File {
        path: PathBuf,
    },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunSpec {
    pub seed: u64,
    /// Classification tolerance on `|g|²` mass.
    pub tol: f64,
    /// Threshold on measured `|Δ|`.
    pub delta_tol: f64,
    pub n_steps: usize,
    pub dt: f64,
    pub t_final: f64,
    pub n_trajectories: usize,
    pub n_momentum_diagonal: usize,
    pub n_diffusive: usize,
    /// Random states added to the classification probe suite.
    pub n_random_probes: usize,
    /// Random states for the CPTP check.
    pub cptp_samples: usize,
    /// Displacements for the covariance check; 16 evenly spaced points along
    /// every axis when absent.
    pub displacements: Option<Vec<Vec<f64>>>,
    pub max_trace_distance: f64,
    pub slope_tol: f64,
    pub spread_tol: f64,
    pub log_outcomes: bool,
    /// Size of a re-mixed equivalent ensemble checked alongside the original;
    /// zero turns the check off.
    pub remix_members: usize,
}

impl Default for RunSpec {
    fn default() -> Self {
        RunSpec {
            seed: 0,
            tol: CLASSIFY_TOL,
            delta_tol: DELTA_TOL,
            n_steps: 1,
            dt: 0.01,
            t_final: 1.0,
            n_trajectories: 10_000,
            n_momentum_diagonal: 50,
            n_diffusive: 50,
            n_random_probes: 20,
            cptp_samples: 50,
            displacements: None,
            max_trace_distance: 0.05,
            slope_tol: 1e-6,
            spread_tol: 1e-9,
            log_outcomes: false,
            remix_members: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSpec {
    pub dir: PathBuf,
}

impl Default for OutputSpec {
    fn default() -> Self {
        OutputSpec { dir: PathBuf::from("out") }
    }
}

/// A parsed config plus the directory its relative paths refer to.
#[derive(Clone, Debug)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Format(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<LoadedConfig> {
        let path = path.as_ref();
        let config = Self::from_toml(&std::fs::read_to_string(path)?)?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(LoadedConfig { config, base_dir })
    }

    /// Checks that do not need any file I/O.
    pub fn validate(&self) -> Result<()> {
        self.lattice()?;
        let r = &self.run;
        let positive = |name: &str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::Validation(format!("run.{name} must be positive, got {v}")))
            }
        };
        positive("tol", r.tol)?;
        positive("delta_tol", r.delta_tol)?;
        positive("dt", r.dt)?;
        positive("max_trace_distance", r.max_trace_distance)?;
        positive("slope_tol", r.slope_tol)?;
        positive("spread_tol", r.spread_tol)?;
        if !(r.t_final.is_finite() && r.t_final >= 0.0) {
            return Err(Error::Validation(format!("run.t_final must be non-negative, got {}", r.t_final)));
        }
        if r.n_trajectories == 0 {
            return Err(Error::Validation("run.n_trajectories must be at least 1".into()));
        }
        if let Some(ds) = &r.displacements {
            if ds.iter().any(|d| d.len() != self.lattice.dim) {
                return Err(Error::Validation("every displacement needs one component per axis".into()));
            }
        }
        Ok(())
    }

    pub fn lattice(&self) -> Result<BoxLattice> {
        let l = &self.lattice;
        BoxLattice::new(l.dim, l.n_max, l.box_length, l.hbar)
    }

    pub fn displacements(&self) -> Vec<Vec<f64>> {
        if let Some(ds) = &self.run.displacements {
            return ds.clone();
        }
        let dim = self.lattice.dim;
        let length = self.lattice.box_length;
        let mut out = Vec::new();
        for axis in 0..dim {
            for i in 0..16 {
                let mut x = vec![0.0; dim];
                x[axis] = -length / 2.0 + length * i as f64 / 16.0;
                out.push(x);
            }
        }
        out
    }
}

impl LoadedConfig {
    fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.base_dir.join(path)
        }
    }

    pub fn lattice(&self) -> Result<BoxLattice> {
        self.config.lattice()
    }

    fn check_lattice(&self, found: &BoxLattice, what: &str) -> Result<()> {
        if *found != self.lattice()? {
            return Err(Error::Validation(format!("{what} lattice does not match [lattice]")));
        }
        Ok(())
    }

    pub fn channel_spec(&self) -> Result<&ChannelSpec> {
        self.config.channel.as_ref().ok_or_else(|| Error::Validation("missing [channel] table".into()))
    }

    /// File channels are returned without a completeness check so that
    /// verification can report the violation.
    pub fn channel(&self) -> Result<CovariantChannel> {
        let lat = self.lattice()?;
        match self.channel_spec()? {
            ChannelSpec::Identity {} => channels::build_identity(&lat),
            ChannelSpec::Boost { a } => channels::build_boost(&lat, a),
            ChannelSpec::Free { t, mass } => channels::build_free_evolution(&lat, *t, *mass),
            ChannelSpec::Grw { r_c, strength } => channels::build_grw(&lat, *r_c, *strength),
            ChannelSpec::MomentumDiagonal { c, phi, n_kraus, seed } => match (c, phi) {
                (Some(c), Some(phi)) => channels::build_momentum_diagonal(&lat, c, phi),
                (None, None) => {
                    let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(self.config.run.seed));
                    Ok(random::momentum_diagonal_channel(&lat, *n_kraus, &mut rng))
                }
                _ => Err(Error::Validation("give both c and phi, or neither".into())),
            },
            ChannelSpec::BoostFamily { gamma, mode } => channels::build_boost_family(&lat, gamma, mode),
            ChannelSpec::File { path } => {
                let ch = io::load_channel(self.resolve(path))?;
                self.check_lattice(ch.lattice(), "channel file")?;
                Ok(ch)
            }
        }
    }

    pub fn lindblad_spec(&self) -> Result<&LindbladSpec> {
        self.config.lindblad.as_ref().ok_or_else(|| Error::Validation("missing [lindblad] table".into()))
    }

    pub fn lindblad(&self) -> Result<LindbladGenerator> {
        let lat = self.lattice()?;
        match self.lindblad_spec()? {
            LindbladSpec::Zero {} => Ok(LindbladGenerator::zero(&lat)),
            LindbladSpec::CslLike { r_c, rate } => LindbladGenerator::csl_like(&lat, *r_c, *rate),
            LindbladSpec::MomentumDiagonal { rates, phases, n_terms, max_rate, seed } => match (rates, phases) {
                (Some(r), Some(p)) => LindbladGenerator::momentum_diagonal(&lat, r, p),
                (None, None) => {
                    if !(max_rate.is_finite() && *max_rate > 0.0) {
                        return Err(Error::Validation(format!("max_rate must be positive, got {max_rate}")));
                    }
                    let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(self.config.run.seed));
                    let n = lat.basis_size();
                    let r: Vec<Vec<f64>> =
                        (0..*n_terms).map(|_| (0..n).map(|_| rng.random_range(0.0..*max_rate)).collect()).collect();
                    let p: Vec<Vec<f64>> = (0..*n_terms)
                        .map(|_| (0..n).map(|_| rng.random_range(0.0..2.0 * std::f64::consts::PI)).collect())
                        .collect();
                    LindbladGenerator::momentum_diagonal(&lat, &r, &p)
                }
                _ => Err(Error::Validation("give both rates and phases, or neither".into())),
            },
            LindbladSpec::File { path } => {
                let gen = LindbladGenerator::load(self.resolve(path))?;
                self.check_lattice(gen.lattice(), "generator file")?;
                Ok(gen)
            }
        }
    }

    pub fn state_spec(&self) -> Result<&StateSpec> {
        self.config.state.as_ref().ok_or_else(|| Error::Validation("missing [state] table".into()))
    }

    fn superposition(lat: &BoxLattice, terms: &[Amplitude]) -> Result<PureState> {
        let terms: Vec<(Complex64, MomentumIndex)> =
            terms.iter().map(|a| (Complex64::new(a.re, a.im), MomentumIndex::new(a.n.clone()))).collect();
        PureState::superposition(lat, &terms)
    }

    /// The initial state as a weighted pure-state ensemble. Mixed states read
    /// from files or drawn at random are split into their eigen-ensembles.
    pub fn ensemble(&self) -> Result<Vec<(f64, PureState)>> {
        let lat = self.lattice()?;
        match self.state_spec()? {
            StateSpec::PlaneWave { n } => Ok(vec![(1.0, PureState::plane_wave(&lat, &MomentumIndex::new(n.clone()))?)]),
            StateSpec::Superposition { terms } => Ok(vec![(1.0, Self::superposition(&lat, terms)?)]),
            StateSpec::Mixture { members } => {
                if members.is_empty() {
                    return Err(Error::Validation("mixture needs at least one member".into()));
                }
                members.iter().map(|m| Ok((m.weight, Self::superposition(&lat, &m.terms)?))).collect()
            }
            StateSpec::Random { .. } | StateSpec::File { .. } => Ok(self.density()?.eigen_ensemble()),
        }
    }

    pub fn density(&self) -> Result<DensityMatrix> {
        let lat = self.lattice()?;
        match self.state_spec()? {
            StateSpec::Random { rank, seed } => {
                if *rank == 0 {
                    return Err(Error::Validation("random state rank must be at least 1".into()));
                }
                let mut rng = ChaCha8Rng::seed_from_u64(seed.unwrap_or(self.config.run.seed));
                Ok(random::density_matrix(&lat, *rank, &mut rng))
            }
            StateSpec::File { path } => {
                let rho = io::load_density(self.resolve(path))?;
                self.check_lattice(rho.lattice(), "state file")?;
                DensityMatrix::new(rho.lattice().clone(), rho.into_matrix())
            }
            _ => DensityMatrix::mix(&self.ensemble()?),
        }
    }
}
