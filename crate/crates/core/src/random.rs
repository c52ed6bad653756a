//! Seeded generators of states, isometries and channels.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::channels::{build_momentum_diagonal, CovariantChannel, TransferBlock};
use crate::lattice::{BoxLattice, MomentumIndex};
use crate::linalg::{CMatrix, CVector};
use crate::states::{DensityMatrix, PureState};

pub fn complex_gaussian<R: Rng + ?Sized>(rng: &mut R) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn ginibre<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    CMatrix::from_fn(rows, cols, |_, _| complex_gaussian(rng))
}

/// Haar-random normalized vector.
pub fn pure_state<R: Rng + ?Sized>(lattice: &BoxLattice, rng: &mut R) -> PureState {
    let v = CVector::from_fn(lattice.basis_size(), |_, _| complex_gaussian(rng));
    PureState::normalized(lattice.clone(), v).expect("gaussian vector is nonzero")
}

/// `G G† / Tr(G G†)` with `G` a `N × rank` Ginibre matrix.
pub fn density_matrix<R: Rng + ?Sized>(lattice: &BoxLattice, rank: usize, rng: &mut R) -> DensityMatrix {
    let g = ginibre(lattice.basis_size(), rank.max(1), rng);
    let m = &g * g.adjoint();
    let tr = m.trace().re;
    DensityMatrix::from_matrix_unchecked(lattice.clone(), m.unscale(tr)).expect("shape matches lattice")
}

/// `rows × cols` matrix with orthonormal columns (`rows ≥ cols`), Haar
/// distributed via QR with the phase of `R`'s diagonal removed.
pub fn isometry<R: Rng + ?Sized>(rows: usize, cols: usize, rng: &mut R) -> CMatrix {
    assert!(rows >= cols, "isometry needs rows >= cols");
    let qr = ginibre(rows, cols, rng).qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..cols {
        let d = r[(j, j)];
        let phase = if d.norm() > 0.0 { d / d.norm() } else { Complex64::new(1.0, 0.0) };
        q.column_mut(j).scale_mut(1.0);
        for i in 0..rows {
            q[(i, j)] *= phase;
        }
    }
    q
}

pub fn unitary<R: Rng + ?Sized>(n: usize, rng: &mut R) -> CMatrix {
    isometry(n, n, rng)
}

/// Random `(c_k(n), φ_k(n))` tables with `Σ_k c_k(n) = 1`.
pub fn momentum_diagonal_tables<R: Rng + ?Sized>(
    lattice: &BoxLattice,
    n_kraus: usize,
    rng: &mut R,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let n = lattice.basis_size();
    let k = n_kraus.max(1);
    let mut c: Vec<Vec<f64>> = (0..k).map(|_| (0..n).map(|_| rng.random::<f64>() + 1e-3).collect()).collect();
    for i in 0..n {
        let total: f64 = c.iter().map(|row| row[i]).sum();
        for row in c.iter_mut() {
            row[i] /= total;
        }
    }
    let phi = (0..k).map(|_| (0..n).map(|_| rng.random_range(0.0..2.0 * PI)).collect()).collect();
    (c, phi)
}

pub fn momentum_diagonal_channel<R: Rng + ?Sized>(
    lattice: &BoxLattice,
    n_kraus: usize,
    rng: &mut R,
) -> CovariantChannel {
    let (c, phi) = momentum_diagonal_tables(lattice, n_kraus, rng);
    build_momentum_diagonal(lattice, &c, &phi).expect("tables are normalized")
}

/// Gains table `[k][transfer flat][source]` turned into blocks, skipping
/// identically-zero blocks.
fn channel_from_table(lattice: &BoxLattice, table: Vec<Vec<Vec<Complex64>>>) -> CovariantChannel {
    let transfers = lattice.transfer_lattice();
    let mut blocks = Vec::new();
    for (k, per_q) in table.into_iter().enumerate() {
        for (qi, gains) in per_q.into_iter().enumerate() {
            if gains.iter().all(|g| *g == Complex64::ZERO) {
                continue;
            }
            let q = transfers.unflatten(qi).expect("transfer index in range");
            blocks.push(TransferBlock::from_fn(lattice, k, q, |s| gains[s]).expect("dimensions agree"));
        }
    }
    CovariantChannel::new(lattice.clone(), blocks).expect("rows normalized per source")
}

/// Normalizes the gains of every source so the off-transfer mass is `frac`
/// and the `q = 0` mass is `1 - frac`. Sources without any admissible
/// nonzero transfer get all their mass on `q = 0`.
fn normalize_sources(lattice: &BoxLattice, table: &mut [Vec<Vec<Complex64>>], frac: f64) {
    let transfers = lattice.transfer_lattice();
    let zero = transfers.origin();
    for s in 0..lattice.basis_size() {
        let off: f64 = table
            .iter()
            .flat_map(|per_q| per_q.iter().enumerate())
            .filter(|(qi, _)| *qi != zero)
            .map(|(_, g)| g[s].norm_sqr())
            .sum();
        let on: f64 = table.iter().map(|per_q| per_q[zero][s].norm_sqr()).sum();
        let (off_scale, on_scale) =
            if off > 0.0 { ((frac / off).sqrt(), ((1.0 - frac) / on).sqrt()) } else { (0.0, (1.0 / on).sqrt()) };
        for per_q in table.iter_mut() {
            for (qi, g) in per_q.iter_mut().enumerate() {
                g[s] *= if qi == zero { on_scale } else { off_scale };
            }
        }
    }
}

/// Random covariant channel with `P(q, n) = P(-q, n)` for every source, so the
/// mean momentum is conserved for every state. Transfers satisfy
/// `|q_i| ≤ max_transfer` and keep both `n ± q` inside the window. The
/// off-transfer mass fraction is drawn once per channel from `[0.01, 0.95]`.
pub fn mean_conserving_channel<R: Rng + ?Sized>(
    lattice: &BoxLattice,
    n_kraus: usize,
    max_transfer: i64,
    rng: &mut R,
) -> CovariantChannel {
    let frac = rng.random_range(0.01..0.95);
    mean_conserving_channel_with_fraction(lattice, n_kraus, max_transfer, frac, rng)
}

pub fn mean_conserving_channel_with_fraction<R: Rng + ?Sized>(
    lattice: &BoxLattice,
    n_kraus: usize,
    max_transfer: i64,
    frac: f64,
    rng: &mut R,
) -> CovariantChannel {
    let transfers = lattice.transfer_lattice();
    let n = lattice.basis_size();
    let k = n_kraus.max(1);
    let mut table = vec![vec![vec![Complex64::ZERO; n]; transfers.basis_size()]; k];
    for per_q in table.iter_mut() {
        for q in transfers.indices() {
            let neg = q.neg();
            // visit each ±q pair once; q = 0 is its own partner
            if q < neg || q.components().iter().any(|c| c.abs() > max_transfer) {
                continue;
            }
            let qi = transfers.flat_index(&q).unwrap();
            let ni = transfers.flat_index(&neg).unwrap();
            for s in 0..n {
                if lattice.shift(s, &q).is_none() || lattice.shift(s, &neg).is_none() {
                    continue;
                }
                let mag = rng.random::<f64>() + 1e-3;
                per_q[qi][s] = Complex64::from_polar(mag, rng.random_range(0.0..2.0 * PI));
                if ni != qi {
                    per_q[ni][s] = Complex64::from_polar(mag, rng.random_range(0.0..2.0 * PI));
                }
            }
        }
    }
    normalize_sources(lattice, &mut table, frac);
    channel_from_table(lattice, table)
}

/// Random covariant channel without any symmetry: the mean momentum
/// generally changes.
pub fn covariant_channel<R: Rng + ?Sized>(
    lattice: &BoxLattice,
    n_kraus: usize,
    max_transfer: i64,
    rng: &mut R,
) -> CovariantChannel {
    let transfers = lattice.transfer_lattice();
    let n = lattice.basis_size();
    let k = n_kraus.max(1);
    let frac = rng.random_range(0.01..0.95);
    let mut table = vec![vec![vec![Complex64::ZERO; n]; transfers.basis_size()]; k];
    for per_q in table.iter_mut() {
        for q in transfers.indices() {
            if q.components().iter().any(|c| c.abs() > max_transfer) {
                continue;
            }
            let qi = transfers.flat_index(&q).unwrap();
            for s in 0..n {
                if lattice.shift(s, &q).is_some() {
                    per_q[qi][s] = complex_gaussian(rng) + Complex64::new(1e-3, 0.0);
                }
            }
        }
    }
    normalize_sources(lattice, &mut table, frac);
    channel_from_table(lattice, table)
}

/// Equal superposition of `n` and `n + e_axis`, when both are in the window.
pub fn adjacent_pair(lattice: &BoxLattice, n: &MomentumIndex, axis: usize) -> Option<PureState> {
    let mut m = n.components().to_vec();
    m[axis] += 1;
    let m = MomentumIndex::new(m);
    if !lattice.contains(&m) {
        return None;
    }
    let s = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    PureState::superposition(lattice, &[(s, n.clone()), (s, m)]).ok()
}
