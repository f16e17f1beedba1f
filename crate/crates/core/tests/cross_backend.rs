use finite_energy::dense::{apply_momentum_annihilation, apply_momentum_creation, DenseModel, DenseObservable, DenseState};
use finite_energy::ising::{exact_canonical, exact_microcanonical, Block4, BlockObservable, FockState, IsingModel};
use finite_energy::{FilterExpansion, FilterSpec, Grid};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn models() -> Vec<(f64, f64)> {
    vec![(1.0, 2.0), (2.0, 1.0), (0.4, 0.4), (-0.7, 0.3)]
}

fn block_spectrum(model: &IsingModel) -> Vec<f64> {
    let mut levels = vec![0.0];
    for k in 0..model.n_blocks() {
        let ev = model.block_eigenvalues(k);
        levels = levels
            .iter()
            .flat_map(|&base| ev.iter().map(move |&e| base + e))
            .collect();
    }
    levels.sort_by(f64::total_cmp);
    levels
}

#[test]
fn block_spectrum_matches_dense() {
    for n in [4, 6, 8, 10] {
        for (g, h) in models() {
            let ff = IsingModel::new(g, h, n).unwrap();
            let dense = DenseModel::transverse_ising(g, h, n).unwrap();
            let want = block_spectrum(&ff);
            for (a, b) in dense.eigenvalues().iter().zip(&want) {
                assert!((a - b).abs() < 1e-10, "N={n} g={g} h={h}: {a} vs {b}");
            }
            assert!((dense.eigenvalues()[0] - ff.ground_energy()).abs() < 1e-10);
        }
    }
}

#[test]
fn fock_energies_variances_and_amplitudes_match_dense() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let n = 8;
    for (g, h) in models() {
        let ff = IsingModel::new(g, h, n).unwrap();
        let dense = DenseModel::transverse_ising(g, h, n).unwrap();
        let mag_ff = BlockObservable::magnetization(&ff);
        let mag_dense = DenseObservable::fermion_density(n).unwrap();
        for _ in 0..25 {
            let p = FockState::random(n / 2, &mut rng);
            let psi = DenseState::fock(n, &p).unwrap();
            let (e, var) = dense.moments(&psi).unwrap();
            assert!((e - ff.state_energy(&p)).abs() < 1e-10);
            assert!((var - ff.state_variance(&p)).abs() < 1e-10);
            let m = dense.expectation(&psi, &mag_dense).unwrap();
            assert!((m - mag_ff.diagonal_value(&p)).abs() < 1e-12);
            let t: f64 = rng.random_range(-5.0..5.0);
            // a(t) = ⟨ψ|e^{-iHt}|ψ⟩ is the conjugate of ⟨p|e^{iHt}|p⟩.
            let a = dense.amplitude(&psi, t).unwrap();
            assert!((a - ff.loschmidt_amplitude(&p, t).conj()).norm() < 1e-10);
        }
    }
}

#[test]
fn vacuum_energy_at_four_sites() {
    let ff = IsingModel::new(1.0, 2.0, 4).unwrap();
    let vac = FockState::uniform(2, 1).unwrap();
    let dense = DenseModel::transverse_ising(1.0, 2.0, 4).unwrap();
    let (e, _) = dense.moments(&DenseState::fock(4, &vac).unwrap()).unwrap();
    assert!((e + 4.0).abs() < 1e-12);
    assert!((ff.state_energy(&vac) + 4.0).abs() < 1e-12);
}

/// Dense matrix of `b_k b_{-k} + b†_{-k} b†_k`, which is `-σ_x ⊕ 0` in block k.
fn pair_operator(n: usize, k: i64) -> DenseObservable {
    let dim = 1usize << n;
    let mut m = vec![Complex64::new(0.0, 0.0); dim * dim];
    for col in 0..dim {
        let mut e = vec![Complex64::new(0.0, 0.0); dim];
        e[col] = 1.0.into();
        let lower = apply_momentum_annihilation(n, k, &apply_momentum_annihilation(n, -k, &e));
        let raise = apply_momentum_creation(n, -k, &apply_momentum_creation(n, k, &e));
        for row in 0..dim {
            m[row * dim + col] = lower[row] + raise[row];
        }
    }
    DenseObservable::from_matrix(n, &m).unwrap()
}

#[test]
fn off_diagonal_block_observable_matches_dense() {
    let n = 8;
    let k = 1;
    let ff = IsingModel::new(1.0, 0.6, n).unwrap();
    let dense = DenseModel::transverse_ising(1.0, 0.6, n).unwrap();
    let mut blocks = vec![Block4::zeros(); n / 2];
    blocks[k][(0, 1)] = (-1.0).into();
    blocks[k][(1, 0)] = (-1.0).into();
    let obs_ff = BlockObservable::new(blocks).unwrap();
    let obs_dense = pair_operator(n, k as i64);
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for _ in 0..10 {
        let p = FockState::random(n / 2, &mut rng);
        let psi = DenseState::fock(n, &p).unwrap();
        let (t1, t2) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let want = dense.observable_amplitude(&psi, &obs_dense, t1, t2).unwrap();
        let got = ff.observable_amplitude(&p, &obs_ff, t1, t2);
        assert!((want - got).norm() < 1e-10, "{want} vs {got}");
    }
}

#[test]
fn two_time_amplitude_identities() {
    let n = 8;
    let ff = IsingModel::new(1.0, 2.0, n).unwrap();
    let dense = DenseModel::transverse_ising(1.0, 2.0, n).unwrap();
    let energy_ff = BlockObservable::energy_density(&ff);
    let energy_dense = dense.hamiltonian_observable(1.0 / n as f64).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..10 {
        let p = FockState::random(n / 2, &mut rng);
        let psi = DenseState::fock(n, &p).unwrap();
        let (t1, t2) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
        let a = dense.observable_amplitude(&psi, &energy_dense, t1, t2).unwrap();
        let b = ff.observable_amplitude(&p, &energy_ff, t1, t2);
        assert!((a - b).norm() < 1e-10);
        // a_{A,ψ}(t1, t2) = a_{A,ψ(t1)}(0, t2 - t1).
        let moved = dense.evolve(&psi, t1).unwrap();
        let c = dense.observable_amplitude(&moved, &energy_dense, 0.0, t2 - t1).unwrap();
        assert!((a - c).norm() < 1e-12);
        // A = 1 at equal times.
        let id = DenseObservable::pauli_sum(n, &[(1.0, vec![])]).unwrap();
        let one = dense.observable_amplitude(&psi, &id, t1, t1).unwrap();
        assert!((one - Complex64::new(1.0, 0.0)).norm() < 1e-12);
    }
}

#[test]
fn trace_sums_match_dense() {
    let n = 8;
    for (g, h) in [(1.0, 2.0), (0.4, 0.4)] {
        let ff = IsingModel::new(g, h, n).unwrap();
        let dense = DenseModel::transverse_ising(g, h, n).unwrap();
        let mag_ff = BlockObservable::magnetization(&ff);
        let mag_dense = DenseObservable::fermion_density(n).unwrap();
        for delta in [0.5, 1.0, 2.0] {
            let spec = FilterSpec::new(delta, n, Grid::Full).unwrap();
            let exp = FilterExpansion::build(spec).unwrap();
            for e in [-4.0, -1.0, 0.0, 2.5] {
                let a = exact_microcanonical(&ff, &mag_ff, e, &exp).unwrap();
                // The expansion at N = 8 keeps M/2 terms or loses only the
                // tail mass; compare against the truncated series in the
                // eigenbasis.
                let levels = dense.eigenvalues();
                let diag = dense.eigen_expectations(&mag_dense).unwrap();
                let (mut num, mut den) = (0.0, 0.0);
                for (&l, &d) in levels.iter().zip(&diag) {
                    let f = exp.scalar_filter(l - e);
                    num += d * f;
                    den += f;
                }
                assert!((a - num / den).abs() < 1e-10 * (1.0 + a.abs()), "{a} vs {}", num / den);
            }
        }
        for beta in [0.0, 0.3, 1.0, 5.0] {
            let a = exact_canonical(&ff, &mag_ff, beta).unwrap();
            let b = dense.canonical_trace(&mag_dense, beta).unwrap();
            assert!((a - b).abs() < 1e-10 * b.abs().max(1e-3));
        }
    }
}
