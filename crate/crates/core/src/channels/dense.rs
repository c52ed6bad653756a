use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{CovariantChannel, PruneReport, TransferBlock, COMPLETENESS_TOL, PRUNE_THRESHOLD};
use crate::error::{Error, Result};
use crate::lattice::BoxLattice;
use crate::linalg::{self, CMatrix, CVector};
use crate::random;
use crate::states::{DensityMatrix, PureState};

/// Kraus map with explicit dense operators; not assumed covariant.
#[derive(Clone, Debug)]
pub struct DenseKrausChannel {
    lattice: BoxLattice,
    operators: Vec<CMatrix>,
}

impl DenseKrausChannel {
    /// Requires `Σ_k A_k†A_k = 1` within `1e-10`.
    pub fn new(lattice: BoxLattice, operators: Vec<CMatrix>) -> Result<Self> {
        if operators.is_empty() {
            return Err(Error::Validation("a Kraus family needs at least one operator".into()));
        }
        let n = lattice.basis_size();
        if operators.iter().any(|a| a.nrows() != n || a.ncols() != n) {
            return Err(Error::Validation(format!("Kraus operators must be {n}x{n}")));
        }
        let ch = DenseKrausChannel { lattice, operators };
        let deviation = ch.completeness_deviation();
        if deviation > COMPLETENESS_TOL {
            return Err(Error::Normalization { what: "Kraus completeness", deviation });
        }
        Ok(ch)
    }

    pub(crate) fn from_operators_unchecked(lattice: BoxLattice, operators: Vec<CMatrix>) -> Self {
        DenseKrausChannel { lattice, operators }
    }

    pub fn lattice(&self) -> &BoxLattice {
        &self.lattice
    }

    pub fn operators(&self) -> &[CMatrix] {
        &self.operators
    }

    /// Max-abs deviation of `Σ_k A_k†A_k` from the identity.
    pub fn completeness_deviation(&self) -> f64 {
        let n = self.lattice.basis_size();
        let sum = self.operators.iter().fold(CMatrix::zeros(n, n), |acc, a| acc + a.adjoint() * a);
        linalg::max_abs(&(sum - CMatrix::identity(n, n)))
    }

    pub fn apply_matrix(&self, rho: &CMatrix) -> CMatrix {
        let n = self.lattice.basis_size();
        self.operators.iter().fold(CMatrix::zeros(n, n), |acc, a| acc + a * rho * a.adjoint())
    }

    pub fn apply(&self, rho: &DensityMatrix) -> Result<DensityMatrix> {
        if rho.lattice() != &self.lattice {
            return Err(Error::LatticeMismatch);
        }
        DensityMatrix::from_matrix_unchecked(self.lattice.clone(), self.apply_matrix(rho.matrix()))
    }

    /// Keeps the fixed-transfer diagonals of each operator: the exact result
    /// of averaging the map over every translation of the box.
    pub fn covariant_average(&self) -> Result<CovariantChannel> {
        Ok(self.covariant_average_with_report()?.0)
    }

    pub fn covariant_average_with_report(&self) -> Result<(CovariantChannel, PruneReport)> {
        let transfers = self.lattice.transfer_lattice();
        let mut blocks = Vec::new();
        for (k, a) in self.operators.iter().enumerate() {
            for q in transfers.indices() {
                blocks.push(TransferBlock::from_fn(&self.lattice, k, q.clone(), |source| {
                    let target = self.lattice.shift(source, &q).expect("from_fn only visits in-window targets");
                    a[(target, source)]
                })?);
            }
        }
        CovariantChannel::from_blocks(self.lattice.clone(), blocks)?.prune(PRUNE_THRESHOLD)
    }

    /// Largest max-abs violation of `T Φ[ρ] T† = Φ[T ρ T†]`, `T = e^{-i p̂·x/ħ}`,
    /// over the given displacements and a fixed probe set.
    pub fn covariance_check(&self, displacements: &[Vec<f64>]) -> Result<f64> {
        let half = self.lattice.box_length() / 2.0;
        for x in displacements {
            if x.len() != self.lattice.dim() {
                return Err(Error::DimensionMismatch { expected: self.lattice.dim(), got: x.len() });
            }
            if x.iter().any(|c| !(c.abs() <= half)) {
                return Err(Error::Validation(format!("displacement {x:?} outside [-L/2, L/2]")));
            }
        }
        let probes = covariance_probes(&self.lattice)?;
        let mut worst = 0.0f64;
        for x in displacements {
            let t = translation(&self.lattice, x);
            for rho in &probes {
                let lhs = &t * self.apply_matrix(rho) * t.adjoint();
                let rhs = self.apply_matrix(&(&t * rho * t.adjoint()));
                worst = worst.max(linalg::max_abs(&(lhs - rhs)));
            }
        }
        Ok(worst)
    }
}

/// Diagonal translation operator `e^{-i p̂·x/ħ}`.
pub(crate) fn translation(lattice: &BoxLattice, x: &[f64]) -> CMatrix {
    let phases = (0..lattice.basis_size()).map(|i| {
        let phase: f64 = (0..lattice.dim()).map(|a| lattice.momentum_component(i, a) * x[a]).sum();
        Complex64::from_polar(1.0, -phase / lattice.hbar())
    });
    CMatrix::from_diagonal(&CVector::from_iterator(lattice.basis_size(), phases))
}

/// Seeded random mixed states plus an equal superposition of `n = 0` and the
/// first neighbour along each axis. Plane waves are omitted: translations
/// leave them invariant.
fn covariance_probes(lattice: &BoxLattice) -> Result<Vec<CMatrix>> {
    let mut rng = ChaCha8Rng::seed_from_u64(0x0c0f_a41a);
    let mut probes: Vec<CMatrix> = (0..4).map(|_| random::density_matrix(lattice, 3, &mut rng).into_matrix()).collect();
    if lattice.n_max() > 0 {
        for axis in 0..lattice.dim() {
            let zero = crate::lattice::MomentumIndex::zero(lattice.dim());
            let mut step = zero.components().to_vec();
            step[axis] = 1;
            let s = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
            let psi = PureState::superposition(lattice, &[(s, zero), (s, step.into())])?;
            probes.push(DensityMatrix::from_pure(&psi).into_matrix());
        }
    }
    Ok(probes)
}

/// Unsharp measurement of which half of the box (along `axis`) holds the
/// particle: Kraus pair `{√C, √(1-C)}` where `C` is the window-compressed
/// projector onto `x_axis ∈ [-L/2, 0)`. On the untruncated space both
/// operators reduce to the half-box projectors. Not translation covariant.
pub fn half_box_measurement(lattice: &BoxLattice, axis: usize) -> Result<DenseKrausChannel> {
    lattice.check_axis(axis)?;
    let n = lattice.basis_size();
    let mut c = CMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let same_elsewhere =
                (0..lattice.dim()).filter(|&a| a != axis).all(|a| lattice.component(i, a) == lattice.component(j, a));
            if !same_elsewhere {
                continue;
            }
            let d = lattice.component(i, axis) - lattice.component(j, axis);
            c[(i, j)] = if d == 0 {
                Complex64::new(0.5, 0.0)
            } else if d % 2 != 0 {
                Complex64::new(0.0, 1.0 / (std::f64::consts::PI * d as f64))
            } else {
                Complex64::ZERO
            };
        }
    }
    let left = linalg::psd_sqrt(&c);
    let right = linalg::psd_sqrt(&(CMatrix::identity(n, n) - &c));
    DenseKrausChannel::new(lattice.clone(), vec![left, right])
}
