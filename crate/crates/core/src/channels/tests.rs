use std::f64::consts::PI;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::dense::translation;
use super::*;
use crate::linalg;
use crate::random;
use crate::states::PureState;

fn lat(dim: usize, n_max: u32) -> BoxLattice {
    BoxLattice::natural(dim, n_max, 2.0 * PI).unwrap()
}

fn idx(v: &[i64]) -> MomentumIndex {
    MomentumIndex::new(v.to_vec())
}

fn plane(l: &BoxLattice, n: &[i64]) -> DensityMatrix {
    DensityMatrix::from_pure(&PureState::plane_wave(l, &idx(n)).unwrap())
}

/// Full matrices `A_k^{(q)}` written out entry by entry.
fn expanded_operators(ch: &CovariantChannel) -> Vec<CMatrix> {
    let n = ch.lattice().basis_size();
    ch.blocks()
        .iter()
        .map(|b| {
            let mut a = CMatrix::zeros(n, n);
            for e in b.entries() {
                a[(e.target, e.source)] = e.gain;
            }
            a
        })
        .collect()
}

fn oracle_apply(ch: &CovariantChannel, rho: &CMatrix) -> CMatrix {
    let n = ch.lattice().basis_size();
    expanded_operators(ch).iter().fold(CMatrix::zeros(n, n), |acc, a| acc + a * rho * a.adjoint())
}

fn zoo(l: &BoxLattice, rng: &mut ChaCha8Rng) -> Vec<(&'static str, CovariantChannel)> {
    let dim = l.dim();
    let mut out = vec![
        ("identity", build_identity(l).unwrap()),
        ("boost", build_boost(l, &vec![0.37; dim]).unwrap()),
        ("free", build_free_evolution(l, 0.8, 1.3).unwrap()),
        ("diag", random::momentum_diagonal_channel(l, 3, rng)),
        ("grw", build_grw(l, 0.6, 0.7).unwrap()),
        ("grw_full", build_grw(l, 1.1, 1.0).unwrap()),
        ("reflect", build_boost_family(l, &vec![0; dim], &[BoostMode::Reflecting]).unwrap()),
        ("symmetric", random::mean_conserving_channel(l, 2, 2, rng)),
        ("general", random::covariant_channel(l, 2, 2, rng)),
    ];
    if let Ok(half) = half_box_measurement(l, 0) {
        out.push(("averaged_half_box", half.covariant_average().unwrap()));
    }
    out
}

#[test]
fn every_constructor_is_complete_and_cptp() {
    let mut rng = ChaCha8Rng::seed_from_u64(100);
    for l in [lat(1, 4), lat(2, 2)] {
        for (name, ch) in zoo(&l, &mut rng) {
            assert!(ch.completeness_deviation() <= COMPLETENESS_TOL, "{name}");
            for _ in 0..50 {
                let rho = random::density_matrix(&l, 1 + rand::Rng::random_range(&mut rng, 0..4), &mut rng);
                let r = ch.apply(&rho).unwrap().invariant_report();
                assert!(r.trace_deviation <= 1e-12, "{name}: trace {}", r.trace_deviation);
                assert!(r.hermiticity <= 1e-12, "{name}: herm {}", r.hermiticity);
                assert!(r.min_eigenvalue >= -1e-10, "{name}: eig {}", r.min_eigenvalue);
            }
        }
    }
}

#[test]
fn choi_matrix_and_ancilla_extension_are_positive() {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    for l in [lat(1, 4), lat(2, 1)] {
        let n = l.basis_size();
        assert!(n <= 9);
        for (name, ch) in zoo(&l, &mut rng) {
            let choi = ch.choi_matrix();
            assert!(linalg::hermiticity_deviation(&choi) < 1e-12);
            assert!(linalg::min_eigenvalue(&choi) > -1e-10, "{name}");
            // maximally entangled input on ancilla ⊗ system, plus a random one
            let mut omega = CMatrix::zeros(n * n, n * n);
            for i in 0..n {
                for j in 0..n {
                    omega[(i * n + i, j * n + j)] = Complex64::new(1.0 / n as f64, 0.0);
                }
            }
            let joint =
                random::density_matrix(&BoxLattice::natural(1, ((n * n - 1) / 2) as u32, 1.0).unwrap(), 3, &mut rng);
            for input in [omega, joint.into_matrix()] {
                let out = ch.apply_with_ancilla(n, &input).unwrap();
                assert!(linalg::min_eigenvalue(&out) > -1e-10, "{name}");
                assert!((out.trace().re - 1.0).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn apply_agrees_with_dense_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(102);
    for l in [lat(1, 16), lat(2, 2), lat(3, 1)] {
        assert!(l.basis_size() <= 33);
        for (name, ch) in zoo(&l, &mut rng) {
            for _ in 0..3 {
                let rho = random::density_matrix(&l, 3, &mut rng);
                let fast = ch.apply_matrix(rho.matrix());
                let slow = oracle_apply(&ch, rho.matrix());
                assert!(linalg::max_abs(&(fast - slow)) < 1e-10, "{name}");
            }
        }
    }
}

#[test]
fn mean_conserving_families_keep_mean() {
    let mut rng = ChaCha8Rng::seed_from_u64(103);
    let l = lat(2, 2);
    let channels = [
        build_identity(&l).unwrap(),
        build_free_evolution(&l, 2.0, 0.5).unwrap(),
        build_boost(&l, &[0.3, -1.2]).unwrap(),
        random::momentum_diagonal_channel(&l, 2, &mut rng),
        random::mean_conserving_channel(&l, 3, 2, &mut rng),
        build_grw(&l, 0.4, 0.8).unwrap(),
    ];
    for ch in &channels {
        for _ in 0..10 {
            let rho = random::density_matrix(&l, 2, &mut rng);
            let out = ch.apply(&rho).unwrap();
            for axis in 0..2 {
                assert!((out.mean_momentum(axis).unwrap() - rho.mean_momentum(axis).unwrap()).abs() <= 1e-10);
            }
        }
    }
}

fn same_blocks_up_to_labels(a: &CovariantChannel, b: &CovariantChannel, tol: f64) {
    assert_eq!(a.blocks().len(), b.blocks().len());
    for (x, y) in a.blocks().iter().zip(b.blocks()) {
        assert_eq!(x.transfer(), y.transfer());
        let nonzero =
            |b: &TransferBlock| b.entries().iter().filter(|e| e.gain != Complex64::ZERO).copied().collect::<Vec<_>>();
        let (xs, ys) = (nonzero(x), nonzero(y));
        assert_eq!(xs.len(), ys.len());
        for (ex, ey) in xs.iter().zip(&ys) {
            assert_eq!((ex.source, ex.target), (ey.source, ey.target));
            assert!((ex.gain - ey.gain).norm() <= tol);
        }
    }
}

#[test]
fn densify_then_average_round_trips() {
    let mut rng = ChaCha8Rng::seed_from_u64(104);
    for l in [lat(1, 3), lat(2, 1)] {
        for (name, ch) in zoo(&l, &mut rng) {
            let back = ch.densify().covariant_average().unwrap();
            // one dense operator per block, so Kraus labels become block positions
            same_blocks_up_to_labels(&ch, &back, 1e-12);
            assert!(linalg::max_abs(&(ch.choi_matrix() - back.choi_matrix())) < 1e-12, "{name}");
        }
    }
}

#[test]
fn grw_examples() {
    let l = lat(1, 6);
    assert_eq!(build_grw(&l, 0.5, 0.0).unwrap(), build_identity(&l).unwrap());
    let wide = build_grw(&l, 10.0 * l.box_length(), 1.0).unwrap();
    let masses = wide.source_masses();
    for s in 0..l.basis_size() {
        let on: f64 = wide
            .blocks()
            .iter()
            .filter(|b| b.transfer().is_zero())
            .flat_map(|b| b.entries())
            .filter(|e| e.source == s)
            .map(|e| e.gain.norm_sqr())
            .sum();
        assert!((on - 1.0).abs() < 1e-6 && (masses[s] - 1.0).abs() < 1e-12);
    }
    assert!(build_grw(&l, 0.0, 1.0).is_err());
    assert!(build_grw(&l, -1.0, 1.0).is_err());
    assert!(build_grw(&l, 1.0, 1.5).is_err());
}

#[test]
fn grw_on_plane_wave_is_diagonal_transfer_table() {
    let l = lat(1, 5);
    let ch = build_grw(&l, 0.8, 1.0).unwrap();
    let n0 = 1;
    let out = ch.apply(&plane(&l, &[n0])).unwrap();
    let oracle = oracle_apply(&ch, plane(&l, &[n0]).matrix());
    assert!(linalg::max_abs(&(out.matrix() - &oracle)) < 1e-12);
    // off-diagonal entries vanish, diagonal is P(m, n0) from the Gaussian
    let unit = l.momentum_quantum();
    let room = l.n_max() as i64 - n0.abs();
    let z: f64 = (-room..=room).map(|m| (-(m as f64 * unit * 0.8).powi(2)).exp()).sum();
    for i in 0..l.basis_size() {
        for j in 0..l.basis_size() {
            if i != j {
                assert!(out.matrix()[(i, j)].norm() < 1e-15);
            }
        }
        let m = l.component(i, 0) - n0;
        let expected = if m.abs() <= room { (-(m as f64 * unit * 0.8).powi(2)).exp() / z } else { 0.0 };
        assert!((out.matrix()[(i, i)].re - expected).abs() < 1e-12, "m = {m}");
    }
}

#[test]
fn diagonal_families_leave_populations_and_spread() {
    let mut rng = ChaCha8Rng::seed_from_u64(105);
    let l = lat(1, 6);
    let channels = [
        build_boost(&l, &[1.7]).unwrap(),
        build_free_evolution(&l, 3.1, 0.2).unwrap(),
        random::momentum_diagonal_channel(&l, 4, &mut rng),
    ];
    for ch in &channels {
        for _ in 0..10 {
            let rho = random::density_matrix(&l, 3, &mut rng);
            let out = ch.apply(&rho).unwrap();
            for (a, b) in out.populations().iter().zip(rho.populations()) {
                assert!((a - b).abs() < 1e-14);
            }
            assert!((out.momentum_spread(0).unwrap() - rho.momentum_spread(0).unwrap()).abs() < 1e-12);
        }
        for n in l.indices() {
            let rho = plane(&l, n.components());
            assert!(ch.apply(&rho).unwrap().trace_distance(&rho).unwrap() < 1e-12);
        }
    }
}

#[test]
fn trivial_parameters_give_identity() {
    let l = lat(2, 2);
    let id = build_identity(&l).unwrap();
    assert_eq!(build_boost(&l, &[0.0, 0.0]).unwrap(), id);
    assert_eq!(build_free_evolution(&l, 0.0, 1.0).unwrap(), id);
    assert_eq!(
        build_boost_family(&l, &[0, 0], &[BoostMode::Constant]).unwrap().apply_matrix(&CMatrix::identity(25, 25)),
        CMatrix::identity(25, 25)
    );
    let ones = vec![vec![1.0; 25]];
    let zeros = vec![vec![0.0; 25]];
    assert_eq!(build_momentum_diagonal(&l, &ones, &zeros).unwrap(), id);
    assert!(build_free_evolution(&l, 1.0, 0.0).is_err());
    assert!(build_boost(&l, &[0.0]).is_err());
}

#[test]
fn momentum_diagonal_rejects_bad_tables() {
    let l = lat(1, 2);
    let half = vec![vec![0.5; 5]];
    let zeros = vec![vec![0.0; 5]];
    assert!(matches!(build_momentum_diagonal(&l, &half, &zeros), Err(Error::Normalization { .. })));
    assert!(build_momentum_diagonal(&l, &[], &[]).is_err());
    assert!(build_momentum_diagonal(&l, &[vec![1.0; 4]], &[vec![0.0; 4]]).is_err());
    assert!(build_momentum_diagonal(
        &l,
        &[vec![-1.0, 1.0, 1.0, 1.0, 1.0], vec![2.0, 0.0, 0.0, 0.0, 0.0]],
        &[zeros[0].clone(), zeros[0].clone()]
    )
    .is_err());
}

#[test]
fn reflecting_boost_sends_plane_waves_to_their_mirror() {
    let l = lat(1, 4);
    let ch = build_boost_family(&l, &[0], &[BoostMode::Reflecting]).unwrap();
    for n0 in -4..=4 {
        let out = ch.apply(&plane(&l, &[n0])).unwrap();
        assert!(out.trace_distance(&plane(&l, &[-n0])).unwrap() < 1e-14);
    }
    // γ = 2 reflects about n = 1 and pushes n = -4 to 6, outside the window
    assert!(matches!(build_boost_family(&l, &[2], &[BoostMode::Reflecting]), Err(Error::OutOfWindow { .. })));
    assert!(build_boost_family(&l, &[0, 0], &[BoostMode::Constant]).is_err());
}

#[test]
fn averaging_a_diagonal_dense_map_keeps_it() {
    let l = lat(1, 3);
    let n = l.basis_size();
    let mut rng = ChaCha8Rng::seed_from_u64(106);
    let (c, phi) = random::momentum_diagonal_tables(&l, 2, &mut rng);
    let ops: Vec<CMatrix> = (0..2)
        .map(|k| {
            CMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    Complex64::from_polar(c[k][i].sqrt(), phi[k][i])
                } else {
                    Complex64::ZERO
                }
            })
        })
        .collect();
    let dense = DenseKrausChannel::new(l.clone(), ops).unwrap();
    let avg = dense.covariant_average().unwrap();
    assert_eq!(avg.blocks().len(), 2);
    assert!(avg.blocks().iter().all(|b| b.transfer().is_zero()));
    let rho = random::density_matrix(&l, 3, &mut rng);
    assert!(linalg::max_abs(&(avg.apply_matrix(rho.matrix()) - dense.apply_matrix(rho.matrix()))) < 1e-12);
    assert!(dense.covariance_check(&[vec![0.3], vec![-1.1], vec![PI]]).unwrap() < 1e-12);
}

#[test]
fn empty_or_incomplete_dense_maps_are_rejected() {
    let l = lat(1, 2);
    assert!(matches!(DenseKrausChannel::new(l.clone(), vec![]), Err(Error::Validation(_))));
    let half = CMatrix::identity(5, 5).scale(0.5);
    assert!(matches!(DenseKrausChannel::new(l.clone(), vec![half]), Err(Error::Normalization { .. })));
    let wrong = CMatrix::identity(4, 4);
    assert!(DenseKrausChannel::new(l, vec![wrong]).is_err());
}

/// `(1/L) ∫ dx Σ_k A_k(x) ρ A_k(x)†` with `A(x) = T(x)† A T(x)`, 64-point
/// trapezoid on a full period. The integrand is a trigonometric polynomial of
/// low degree, so the rule is exact up to roundoff.
fn grid_average(dense: &DenseKrausChannel, rho: &CMatrix) -> CMatrix {
    let l = dense.lattice();
    let n = l.basis_size();
    let points = 64;
    let mut acc = CMatrix::zeros(n, n);
    for i in 0..points {
        let x = -l.box_length() / 2.0 + l.box_length() * i as f64 / points as f64;
        let t = translation(l, &[x]);
        for a in dense.operators() {
            let ax = t.adjoint() * a * &t;
            acc += &ax * rho * ax.adjoint();
        }
    }
    acc.unscale(points as f64)
}

#[test]
fn half_box_average_matches_translation_grid() {
    let l = lat(1, 3);
    let dense = half_box_measurement(&l, 0).unwrap();
    let avg = dense.covariant_average().unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(107);
    let s = Complex64::new(std::f64::consts::FRAC_1_SQRT_2, 0.0);
    let sup = DensityMatrix::from_pure(&PureState::superposition(&l, &[(s, idx(&[0])), (s, idx(&[1]))]).unwrap());
    for rho in [sup.clone(), random::density_matrix(&l, 2, &mut rng), random::density_matrix(&l, 5, &mut rng)] {
        let oracle = grid_average(&dense, rho.matrix());
        assert!(linalg::max_abs(&(avg.apply_matrix(rho.matrix()) - oracle)) < 1e-6);
    }
    // the average differs from the raw measurement on a superposition
    assert!(linalg::max_abs(&(avg.apply_matrix(sup.matrix()) - dense.apply_matrix(sup.matrix()))) > 1e-3);
}

#[test]
fn covariance_check_separates_averaged_and_raw_maps() {
    let l = lat(1, 3);
    let dense = half_box_measurement(&l, 0).unwrap();
    let quarter = vec![vec![l.box_length() / 4.0]];
    assert!(dense.covariance_check(&quarter).unwrap() > 0.01);
    let redensified = dense.covariant_average().unwrap().densify();
    let grid: Vec<Vec<f64>> = (0..16).map(|i| vec![-l.box_length() / 2.0 + l.box_length() * i as f64 / 16.0]).collect();
    assert!(redensified.covariance_check(&grid).unwrap() <= 1e-10);
    assert!(dense.covariance_check(&[vec![l.box_length()]]).is_err());
    assert!(dense.covariance_check(&[vec![0.0, 0.0]]).is_err());
}

#[test]
fn half_box_in_two_dimensions() {
    let l = lat(2, 1);
    let dense = half_box_measurement(&l, 1).unwrap();
    assert!(dense.completeness_deviation() < 1e-10);
    assert!(dense.covariance_check(&[vec![0.0, l.box_length() / 4.0]]).unwrap() > 0.01);
    // translations along the other axis commute with it
    assert!(dense.covariance_check(&[vec![1.3, 0.0]]).unwrap() < 1e-12);
    assert!(dense.covariant_average().unwrap().densify().covariance_check(&[vec![0.4, -1.0]]).unwrap() < 1e-10);
}

#[test]
fn prune_moves_mass_into_zero_transfer() {
    let l = lat(1, 2);
    let n = l.basis_size();
    let tiny = 1e-15;
    let main =
        TransferBlock::from_fn(&l, 0, idx(&[0]), |_| Complex64::new((1.0f64 - tiny * tiny).sqrt(), 0.0)).unwrap();
    let side = TransferBlock::from_fn(&l, 0, idx(&[1]), |_| Complex64::new(tiny, 0.0)).unwrap();
    let ch = CovariantChannel::from_blocks(l.clone(), vec![main, side]).unwrap();
    let (pruned, report) = ch.prune(PRUNE_THRESHOLD).unwrap();
    assert_eq!(report.dropped_blocks, 1);
    assert!(report.max_mass_moved > 0.0 && report.max_mass_moved < 1e-29);
    assert_eq!(pruned.blocks().len(), 1);
    assert!(pruned.completeness_deviation() < 1e-15);
    // sources at the edge had no q = 1 entry and are untouched
    assert_eq!(pruned.blocks()[0].entries().len(), n);
}

#[test]
fn structural_errors() {
    let l = lat(1, 2);
    let b = TransferBlock::from_fn(&l, 0, idx(&[0]), |_| Complex64::new(1.0, 0.0)).unwrap();
    assert!(matches!(CovariantChannel::from_blocks(l.clone(), vec![b.clone(), b.clone()]), Err(Error::Validation(_))));
    assert!(TransferBlock::from_fn(&l, 0, idx(&[0, 0]), |_| Complex64::ZERO).is_err());
    assert!(matches!(
        TransferBlock::from_entries(&l, 0, idx(&[1]), [(4, Complex64::new(1.0, 0.0))]),
        Err(Error::OutOfWindow { .. })
    ));
    assert!(TransferBlock::from_entries(&l, 0, idx(&[0]), [(1, Complex64::ZERO), (1, Complex64::ZERO)]).is_err());
    let half = TransferBlock::from_fn(&l, 0, idx(&[0]), |_| Complex64::new(0.5, 0.0)).unwrap();
    assert!(matches!(CovariantChannel::new(l.clone(), vec![half]), Err(Error::Normalization { .. })));
    let other = lat(1, 3);
    let rho = plane(&other, &[0]);
    assert!(matches!(build_identity(&l).unwrap().apply(&rho), Err(Error::LatticeMismatch)));
}

#[test]
fn block_actions_on_vectors() {
    let mut rng = ChaCha8Rng::seed_from_u64(108);
    let l = lat(1, 3);
    let ch = random::covariant_channel(&l, 2, 2, &mut rng);
    let psi = random::pure_state(&l, &mut rng);
    let total: f64 = ch.blocks().iter().map(|b| b.weight(psi.amplitudes())).sum();
    assert!((total - 1.0).abs() < 1e-12);
    let ops = expanded_operators(&ch);
    for (b, a) in ch.blocks().iter().zip(&ops) {
        let direct = a * psi.amplitudes();
        assert!((b.act(psi.amplitudes()) - &direct).norm() < 1e-14);
        assert!((b.weight(psi.amplitudes()) - direct.norm_squared()).abs() < 1e-14);
    }
}
