//! Discrete momentum lattice of a particle in a periodic box.
//!
//! Momentum eigenvalues along each axis are `(2πħ/L)·n` with integer `n`; the
//! lattice keeps the window `n ∈ [-n_max, n_max]^dim`. Basis vectors are
//! ordered row-major over components, each component running from `-n_max`
//! to `+n_max`, so the first component is the slowest-varying one.

use std::f64::consts::PI;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Integer momentum label `n` (also used for transfers `m`, `q`, `ℓ`).
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MomentumIndex(Vec<i64>);

impl MomentumIndex {
    pub fn new(components: Vec<i64>) -> Self {
        MomentumIndex(components)
    }

    pub fn zero(dim: usize) -> Self {
        MomentumIndex(vec![0; dim])
    }

    pub fn components(&self) -> &[i64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|&c| c == 0)
    }

    pub fn neg(&self) -> Self {
        MomentumIndex(self.0.iter().map(|c| -c).collect())
    }

    pub fn add(&self, other: &MomentumIndex) -> Self {
        MomentumIndex(self.0.iter().zip(&other.0).map(|(a, b)| a + b).collect())
    }

    pub fn sub(&self, other: &MomentumIndex) -> Self {
        MomentumIndex(self.0.iter().zip(&other.0).map(|(a, b)| a - b).collect())
    }
}

impl From<Vec<i64>> for MomentumIndex {
    fn from(v: Vec<i64>) -> Self {
        MomentumIndex(v)
    }
}

impl<const N: usize> From<[i64; N]> for MomentumIndex {
    fn from(v: [i64; N]) -> Self {
        MomentumIndex(v.to_vec())
    }
}

impl fmt::Display for MomentumIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "(")?;
        for (i, c) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, ")")
    }
}

/// Momentum-space arena: dimension, cutoff, box length and ħ.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoxLattice {
    dim: usize,
    n_max: u32,
    box_length: f64,
    hbar: f64,
}

impl BoxLattice {
    pub fn new(dim: usize, n_max: u32, box_length: f64, hbar: f64) -> Result<Self> {
        if !(1..=3).contains(&dim) {
            return Err(Error::Validation(format!("dimension must be 1, 2 or 3, got {dim}")));
        }
        if !(box_length.is_finite() && box_length > 0.0) {
            return Err(Error::Validation(format!("box length must be positive, got {box_length}")));
        }
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(Error::Validation(format!("hbar must be positive, got {hbar}")));
        }
        Ok(BoxLattice { dim, n_max, box_length, hbar })
    }

    /// Lattice in natural units (ħ = 1).
    pub fn natural(dim: usize, n_max: u32, box_length: f64) -> Result<Self> {
        Self::new(dim, n_max, box_length, 1.0)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_max(&self) -> u32 {
        self.n_max
    }

    pub fn box_length(&self) -> f64 {
        self.box_length
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// Number of momentum values along one axis, `2·n_max + 1`.
    pub fn side(&self) -> usize {
        2 * self.n_max as usize + 1
    }

    pub fn basis_size(&self) -> usize {
        self.side().pow(self.dim as u32)
    }

    /// `2πħ/L`.
    pub fn momentum_quantum(&self) -> f64 {
        2.0 * PI * self.hbar / self.box_length
    }

    /// Lattice with the same box and twice the cutoff; indexes every transfer
    /// `m = n' - n` between two points of `self`.
    pub fn transfer_lattice(&self) -> BoxLattice {
        BoxLattice { n_max: 2 * self.n_max, ..self.clone() }
    }

    pub fn check_axis(&self, axis: usize) -> Result<()> {
        if axis < self.dim {
            Ok(())
        } else {
            Err(Error::InvalidAxis { axis, dim: self.dim })
        }
    }

    pub fn contains(&self, n: &MomentumIndex) -> bool {
        n.dim() == self.dim && n.components().iter().all(|c| c.unsigned_abs() <= self.n_max as u64)
    }

    fn check_index(&self, n: &MomentumIndex) -> Result<()> {
        if n.dim() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: n.dim() });
        }
        if !self.contains(n) {
            return Err(Error::IndexOutOfRange { index: n.components().to_vec(), n_max: self.n_max });
        }
        Ok(())
    }

    /// `(2πħ/L)·n` componentwise.
    pub fn momentum_value(&self, n: &MomentumIndex) -> Result<Vec<f64>> {
        self.check_index(n)?;
        let unit = self.momentum_quantum();
        Ok(n.components().iter().map(|&c| unit * c as f64).collect())
    }

    pub fn flat_index(&self, n: &MomentumIndex) -> Result<usize> {
        self.check_index(n)?;
        let side = self.side() as i64;
        let offset = self.n_max as i64;
        Ok(n.components().iter().fold(0i64, |acc, &c| acc * side + (c + offset)) as usize)
    }

    pub fn unflatten(&self, index: usize) -> Result<MomentumIndex> {
        let size = self.basis_size();
        if index >= size {
            return Err(Error::FlatIndexOutOfRange { index, size });
        }
        Ok(MomentumIndex((0..self.dim).map(|axis| self.component(index, axis)).collect()))
    }

    /// Component `axis` of the momentum label at flat position `index`.
    /// `index` must be below the basis size.
    #[inline]
    pub fn component(&self, index: usize, axis: usize) -> i64 {
        let side = self.side();
        let stride = side.pow((self.dim - 1 - axis) as u32);
        ((index / stride) % side) as i64 - self.n_max as i64
    }

    /// Momentum along `axis` at flat position `index`.
    #[inline]
    pub fn momentum_component(&self, index: usize, axis: usize) -> f64 {
        self.momentum_quantum() * self.component(index, axis) as f64
    }

    /// Momentum along `axis` for every basis vector, in flat order.
    pub fn axis_momenta(&self, axis: usize) -> Vec<f64> {
        (0..self.basis_size()).map(|i| self.momentum_component(i, axis)).collect()
    }

    /// Flat index of `n + q`, or `None` when it leaves the window.
    pub fn shift(&self, index: usize, q: &MomentumIndex) -> Option<usize> {
        debug_assert_eq!(q.dim(), self.dim);
        let side = self.side() as i64;
        let n_max = self.n_max as i64;
        let mut flat = 0i64;
        for axis in 0..self.dim {
            let c = self.component(index, axis) + q.components()[axis];
            if c.abs() > n_max {
                return None;
            }
            flat = flat * side + (c + n_max);
        }
        Some(flat as usize)
    }

    pub fn indices(&self) -> impl Iterator<Item = MomentumIndex> + '_ {
        (0..self.basis_size()).map(move |i| MomentumIndex((0..self.dim).map(|a| self.component(i, a)).collect()))
    }

    /// Flat index of `n = 0`.
    pub fn origin(&self) -> usize {
        (self.basis_size() - 1) / 2
    }
}
