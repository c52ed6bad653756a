//! Quantum states in the momentum eigenbasis and their momentum moments.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::lattice::{BoxLattice, MomentumIndex};
use crate::linalg::{self, CMatrix, CVector};

pub const NORM_TOL: f64 = 1e-12;
pub const HERMITIAN_TOL: f64 = 1e-12;
pub const TRACE_TOL: f64 = 1e-12;
pub const POSITIVITY_TOL: f64 = 1e-10;

/// Normalized wave function in the momentum basis.
#[derive(Clone, Debug, PartialEq)]
pub struct PureState {
    lattice: BoxLattice,
    amplitudes: CVector,
}

impl PureState {
    /// Wraps amplitudes that are already normalized within `1e-12`.
    pub fn new(lattice: BoxLattice, amplitudes: CVector) -> Result<Self> {
        if amplitudes.len() != lattice.basis_size() {
            return Err(Error::Validation(format!(
                "expected {} amplitudes, got {}",
                lattice.basis_size(),
                amplitudes.len()
            )));
        }
        let deviation = (amplitudes.norm() - 1.0).abs();
        if deviation > NORM_TOL {
            return Err(Error::Normalization { what: "state norm", deviation });
        }
        Ok(PureState { lattice, amplitudes })
    }

    /// Rescales arbitrary nonzero amplitudes to unit norm.
    pub fn normalized(lattice: BoxLattice, amplitudes: CVector) -> Result<Self> {
        let norm = amplitudes.norm();
        if !(norm.is_finite() && norm > 0.0) {
            return Err(Error::Validation("cannot normalize a zero or non-finite vector".into()));
        }
        Self::new(lattice, amplitudes.unscale(norm))
    }

    pub fn plane_wave(lattice: &BoxLattice, n: &MomentumIndex) -> Result<Self> {
        let mut amps = CVector::zeros(lattice.basis_size());
        amps[lattice.flat_index(n)?] = Complex64::new(1.0, 0.0);
        Ok(PureState { lattice: lattice.clone(), amplitudes: amps })
    }

    /// `Σ c_i |n_i⟩`, normalized afterwards. Repeated labels add up.
    pub fn superposition(lattice: &BoxLattice, terms: &[(Complex64, MomentumIndex)]) -> Result<Self> {
        let mut amps = CVector::zeros(lattice.basis_size());
        for (c, n) in terms {
            amps[lattice.flat_index(n)?] += *c;
        }
        Self::normalized(lattice.clone(), amps)
    }

    pub fn lattice(&self) -> &BoxLattice {
        &self.lattice
    }

    pub fn amplitudes(&self) -> &CVector {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> CVector {
        self.amplitudes
    }
}

/// Density matrix in the momentum basis.
#[derive(Clone, Debug, PartialEq)]
pub struct DensityMatrix {
    lattice: BoxLattice,
    matrix: CMatrix,
}

/// Measured deviations from the three density-matrix invariants.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct InvariantReport {
    pub hermiticity: f64,
    pub trace_deviation: f64,
    pub min_eigenvalue: f64,
}

impl InvariantReport {
    pub fn passes(&self) -> bool {
        self.hermiticity <= HERMITIAN_TOL && self.trace_deviation <= TRACE_TOL && self.min_eigenvalue >= -POSITIVITY_TOL
    }
}

impl DensityMatrix {
    /// Validates hermiticity, unit trace and positivity.
    pub fn new(lattice: BoxLattice, matrix: CMatrix) -> Result<Self> {
        let rho = Self::from_matrix_unchecked(lattice, matrix)?;
        let report = rho.invariant_report();
        if report.hermiticity > HERMITIAN_TOL {
            return Err(Error::Validation(format!("matrix not Hermitian: {:e}", report.hermiticity)));
        }
        if report.trace_deviation > TRACE_TOL {
            return Err(Error::Normalization { what: "trace", deviation: report.trace_deviation });
        }
        if report.min_eigenvalue < -POSITIVITY_TOL {
            return Err(Error::Validation(format!("matrix not positive: min eigenvalue {:e}", report.min_eigenvalue)));
        }
        Ok(rho)
    }

    /// Shape check only; used for outputs of maps whose invariants are
    /// verified separately.
    pub fn from_matrix_unchecked(lattice: BoxLattice, matrix: CMatrix) -> Result<Self> {
        let n = lattice.basis_size();
        if matrix.nrows() != n || matrix.ncols() != n {
            return Err(Error::Validation(format!(
                "expected {n}x{n} matrix, got {}x{}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        Ok(DensityMatrix { lattice, matrix })
    }

    pub fn from_pure(psi: &PureState) -> Self {
        let a = psi.amplitudes();
        DensityMatrix { lattice: psi.lattice().clone(), matrix: a * a.adjoint() }
    }

    /// `Σ p_k |ψ_k⟩⟨ψ_k|`.
    pub fn mix(ensemble: &[(f64, PureState)]) -> Result<Self> {
        let (_, first) = ensemble.first().ok_or_else(|| Error::Validation("empty ensemble".into()))?;
        let lattice = first.lattice().clone();
        let mut total = 0.0;
        let mut matrix = CMatrix::zeros(lattice.basis_size(), lattice.basis_size());
        for (w, psi) in ensemble {
            if !(w.is_finite() && *w >= 0.0) {
                return Err(Error::Validation(format!("negative or non-finite weight {w}")));
            }
            if psi.lattice() != &lattice {
                return Err(Error::LatticeMismatch);
            }
            total += w;
            let a = psi.amplitudes();
            matrix += (a * a.adjoint()) * Complex64::new(*w, 0.0);
        }
        let deviation = (total - 1.0).abs();
        if deviation > NORM_TOL {
            return Err(Error::Normalization { what: "ensemble weights", deviation });
        }
        Ok(DensityMatrix { lattice, matrix })
    }

    pub fn lattice(&self) -> &BoxLattice {
        &self.lattice
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub fn into_matrix(self) -> CMatrix {
        self.matrix
    }

    pub fn trace(&self) -> Complex64 {
        linalg::trace(&self.matrix)
    }

    pub fn purity(&self) -> f64 {
        (&self.matrix * &self.matrix).diagonal().sum().re
    }

    /// Momentum populations `⟨n|ρ|n⟩` in flat order.
    pub fn populations(&self) -> Vec<f64> {
        self.matrix.diagonal().iter().map(|z| z.re).collect()
    }

    pub fn population(&self, n: &MomentumIndex) -> Result<f64> {
        let i = self.lattice.flat_index(n)?;
        Ok(self.matrix[(i, i)].re)
    }

    pub fn invariant_report(&self) -> InvariantReport {
        InvariantReport {
            hermiticity: linalg::hermiticity_deviation(&self.matrix),
            trace_deviation: (self.trace() - Complex64::new(1.0, 0.0)).norm(),
            min_eigenvalue: linalg::min_eigenvalue(&self.matrix),
        }
    }

    /// `Tr(p̂_axis ρ)`.
    pub fn mean_momentum(&self, axis: usize) -> Result<f64> {
        self.lattice.check_axis(axis)?;
        Ok(moments_from_populations(&self.lattice, &self.populations(), axis).0)
    }

    /// `Tr(p̂_axis² ρ)`.
    pub fn second_moment(&self, axis: usize) -> Result<f64> {
        self.lattice.check_axis(axis)?;
        Ok(moments_from_populations(&self.lattice, &self.populations(), axis).1)
    }

    /// Variance `Tr(p̂²ρ) - Tr(p̂ρ)²`, unclamped.
    pub fn momentum_spread(&self, axis: usize) -> Result<f64> {
        self.lattice.check_axis(axis)?;
        let (m1, m2) = moments_from_populations(&self.lattice, &self.populations(), axis);
        Ok(m2 - m1 * m1)
    }

    pub fn trace_distance(&self, other: &DensityMatrix) -> Result<f64> {
        if self.lattice != other.lattice {
            return Err(Error::LatticeMismatch);
        }
        Ok(linalg::trace_distance(&self.matrix, &other.matrix))
    }

    /// `⟨ψ|ρ|ψ⟩`.
    pub fn fidelity_with(&self, psi: &PureState) -> Result<f64> {
        if self.lattice != *psi.lattice() {
            return Err(Error::LatticeMismatch);
        }
        let a = psi.amplitudes();
        Ok((a.adjoint() * &self.matrix * a)[(0, 0)].re)
    }

    /// Eigen-ensemble `{(λ_i, |e_i⟩)}` keeping eigenvalues above `1e-15`,
    /// weights renormalized to sum to one.
    pub fn eigen_ensemble(&self) -> Vec<(f64, PureState)> {
        let (values, vectors) = linalg::hermitian_eigen(&self.matrix);
        let kept: Vec<usize> = (0..values.len()).filter(|&i| values[i] > 1e-15).collect();
        let total: f64 = kept.iter().map(|&i| values[i]).sum();
        kept.into_iter()
            .map(|i| {
                let v = vectors.column(i).into_owned();
                let norm = v.norm();
                (values[i] / total, PureState { lattice: self.lattice.clone(), amplitudes: v.unscale(norm) })
            })
            .collect()
    }
}

/// Variance clamped at zero for reporting.
pub fn reported_spread(variance: f64) -> f64 {
    variance.max(0.0)
}

/// `(Σ p̃ w, Σ p̃² w)` along `axis` for populations `w`.
pub(crate) fn moments_from_populations(lattice: &BoxLattice, pops: &[f64], axis: usize) -> (f64, f64) {
    let mut m1 = 0.0;
    let mut m2 = 0.0;
    for (i, w) in pops.iter().enumerate() {
        let p = lattice.momentum_component(i, axis);
        m1 += p * w;
        m2 += p * p * w;
    }
    (m1, m2)
}

/// Re-mixes a pure-state ensemble through a `K × r` isometry `u`
/// (`u†u = 1`): `√q_k |φ_k⟩ = Σ_i u_ki √p_i |ψ_i⟩`. Members with vanishing
/// weight are dropped. The resulting ensemble has the same density matrix.
pub fn remix_ensemble(ensemble: &[(f64, PureState)], u: &DMatrix<Complex64>) -> Result<Vec<(f64, PureState)>> {
    if u.ncols() != ensemble.len() {
        return Err(Error::Validation(format!(
            "isometry has {} columns for an ensemble of {}",
            u.ncols(),
            ensemble.len()
        )));
    }
    let gram = u.adjoint() * u;
    let deviation = linalg::max_abs(&(gram - DMatrix::identity(u.ncols(), u.ncols())));
    if deviation > 1e-10 {
        return Err(Error::Normalization { what: "isometry columns", deviation });
    }
    let (_, first) = ensemble.first().ok_or_else(|| Error::Validation("empty ensemble".into()))?;
    let lattice = first.lattice().clone();
    let dim = lattice.basis_size();
    let mut out = Vec::with_capacity(u.nrows());
    for k in 0..u.nrows() {
        let mut v = DVector::<Complex64>::zeros(dim);
        for (i, (p, psi)) in ensemble.iter().enumerate() {
            v += psi.amplitudes() * (u[(k, i)] * p.sqrt());
        }
        let weight = v.norm_squared();
        if weight > 1e-300 {
            let norm = weight.sqrt();
            out.push((weight, PureState { lattice: lattice.clone(), amplitudes: v.unscale(norm) }));
        }
    }
    // renormalize away roundoff in Σ q_k
    let total: f64 = out.iter().map(|(w, _)| w).sum();
    for (w, _) in out.iter_mut() {
        *w /= total;
    }
    Ok(out)
}
