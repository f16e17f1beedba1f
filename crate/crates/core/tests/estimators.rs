use finite_energy::dense::{DenseModel, DenseObservable, DenseState, Pauli};
use finite_energy::device::{DenseSource, FreeFermionSource};
use finite_energy::estimators::{
    double_filtered_observable, filtered_observable, find_valid_energy, ldos, squared_norm, squared_norm_direct,
    EstimatorOptions,
};
use finite_energy::ising::{BlockObservable, FockState, IsingModel};
use finite_energy::qamc::integrated_weight;
use finite_energy::{Error, FilterExpansion, FilterSpec, Grid};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_product(n: usize, rng: &mut ChaCha8Rng) -> DenseState {
    let sites: Vec<[Complex64; 2]> = (0..n)
        .map(|_| {
            let theta: f64 = rng.random_range(0.0..std::f64::consts::PI);
            let phi: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            [
                Complex64::new((theta / 2.0).cos(), 0.0),
                Complex64::from_polar((theta / 2.0).sin(), phi),
            ]
        })
        .collect();
    DenseState::product(&sites).unwrap()
}

#[test]
fn amplitude_estimators_reproduce_the_truncated_series() {
    let n = 8;
    let model = DenseModel::transverse_ising(1.0, 2.0, n).unwrap();
    let obs = DenseObservable::pauli(n, 3, Pauli::Z).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for delta in [0.5, 1.0] {
        let exp = FilterExpansion::build(FilterSpec::new(delta, n, Grid::Full).unwrap()).unwrap();
        for _ in 0..4 {
            let psi = random_product(n, &mut rng);
            let (e_psi, _) = model.moments(&psi).unwrap();
            let mut src = DenseSource::new(&model);
            let st = model.decompose(&psi).unwrap();
            let d = ldos(&mut src, &psi, e_psi, &exp).unwrap();
            assert!((d.value - model.spectral_truncated_ldos(&st, e_psi, &exp)).abs() < 1e-10);
            let (single, double) = model.truncated_filtered(&psi, &obs, e_psi, &exp).unwrap();
            let opts = EstimatorOptions::default();
            let a = filtered_observable(&mut src, &psi, &obs, e_psi, &exp, opts).unwrap();
            assert!((a.value - single).abs() < 1e-9, "{} vs {single}", a.value);
            let b = double_filtered_observable(&mut src, &psi, &obs, e_psi, &exp, opts).unwrap();
            assert!((b.value - double).abs() < 1e-9, "{} vs {double}", b.value);
        }
    }
}

#[test]
fn squared_norm_agrees_with_double_sum() {
    let n = 8;
    let model = DenseModel::transverse_ising(0.7, 1.3, n).unwrap();
    let id = DenseObservable::pauli_sum(n, &[(1.0, vec![])]).unwrap();
    let exp = FilterExpansion::build(FilterSpec::new(1.0, n, Grid::Full).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let psi = random_product(n, &mut rng);
    let mut src = DenseSource::new(&model);
    for e in [-5.0, -1.0, 2.0] {
        let (a, _) = squared_norm(&mut src, &psi, e, &exp).unwrap();
        let b = squared_norm_direct(&mut src, &psi, &id, e, &exp).unwrap();
        assert!((a - b).norm() < 1e-12, "{a} vs {b}");
    }
}

#[test]
fn backends_agree_on_fock_states() {
    let n = 8;
    let ff = IsingModel::new(1.0, 2.0, n).unwrap();
    let dense = DenseModel::transverse_ising(1.0, 2.0, n).unwrap();
    let h_ff = BlockObservable::energy_density(&ff);
    let h_dense = dense.hamiltonian_observable(1.0 / n as f64).unwrap();
    let exp = FilterExpansion::build(FilterSpec::new(1.0, n, Grid::Full).unwrap()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let opts = EstimatorOptions::default();
    for _ in 0..5 {
        let p = FockState::random(n / 2, &mut rng);
        let psi = DenseState::fock(n, &p).unwrap();
        let e = ff.state_energy(&p) + 0.3;
        let mut a = FreeFermionSource::new(ff.clone());
        let mut b = DenseSource::new(&dense);
        let da = ldos(&mut a, &p, e, &exp).unwrap().value;
        let db = ldos(&mut b, &psi, e, &exp).unwrap().value;
        assert!((da - db).abs() < 1e-10);
        let fa = filtered_observable(&mut a, &p, &h_ff, e, &exp, opts).unwrap().value;
        let fb = filtered_observable(&mut b, &psi, &h_dense, e, &exp, opts).unwrap().value;
        assert!((fa - fb).abs() < 1e-9);
        let ga = double_filtered_observable(&mut a, &p, &h_ff, e, &exp, opts).unwrap().value;
        let gb = double_filtered_observable(&mut b, &psi, &h_dense, e, &exp, opts).unwrap().value;
        assert!((ga - gb).abs() < 1e-9);
    }
}

#[test]
fn grids_with_equal_scale_coincide() {
    let n = 16;
    let model = IsingModel::new(1.0, 2.0, n).unwrap();
    let full = FilterExpansion::build(FilterSpec::new(0.5, n, Grid::Full).unwrap()).unwrap();
    let r = (n as f64).sqrt();
    let opt = FilterExpansion::build(FilterSpec::new(0.5, n, Grid::Optimized { r }).unwrap()).unwrap();
    let mut src = FreeFermionSource::new(model.clone());
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..5 {
        let p = FockState::random(n / 2, &mut rng);
        let e = model.state_energy(&p);
        let a = ldos(&mut src, &p, e, &full).unwrap().value;
        let b = ldos(&mut src, &p, e, &opt).unwrap().value;
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn ldos_carries_gaussian_mass() {
    // ∫ cos^M((x)/s) dx ≈ δ √(2π) when M = (s/δ)², so ∫ D dE ≈ δ √(2π).
    let n = 20;
    let model = IsingModel::new(1.0, 2.0, n).unwrap();
    let mut src = FreeFermionSource::new(model.clone());
    let p = FockState::new(vec![1, 2, 3, 4, 1, 1, 2, 2, 4, 1]).unwrap();
    let e = model.state_energy(&p);
    let sigma = model.state_variance(&p).sqrt();
    for delta in [0.5, 1.0] {
        let exp = FilterExpansion::build(FilterSpec::new(delta, n, Grid::Full).unwrap()).unwrap();
        let bounds = (e - 8.0 * sigma - 8.0 * delta, e + 8.0 * sigma + 8.0 * delta);
        let mass = integrated_weight(&mut src, &p, 0.0, &exp, bounds).unwrap();
        let want = delta * (2.0 * std::f64::consts::PI).sqrt();
        assert!((mass / want - 1.0).abs() < 2e-2, "δ={delta}: {mass} vs {want}");
    }
}

#[test]
fn energy_search_certifies_product_states() {
    let n = 8;
    let model = DenseModel::transverse_ising(1.0, 2.0, n).unwrap();
    let mut src = DenseSource::new(&model);
    let mut rng = ChaCha8Rng::seed_from_u64(33);
    for delta in [0.5, 1.0] {
        let spec = FilterSpec::new(delta, n, Grid::Full).unwrap();
        for _ in 0..5 {
            let psi = random_product(n, &mut rng);
            let report = find_valid_energy(&mut src, &psi, &spec).unwrap();
            assert!(report.success);
            assert!(report.n_at_e >= report.threshold);
            assert!((report.q_at_e - 2.0 * report.n_at_e).abs() < 1e-15);
            assert!(report.interval.0 <= report.chosen_energy && report.chosen_energy <= report.interval.1);
        }
    }
    let too_wide = FilterSpec::new(6.0, n, Grid::Full).unwrap();
    let psi = random_product(n, &mut rng);
    assert!(matches!(find_valid_energy(&mut src, &psi, &too_wide), Err(Error::InvalidArgument(_))));
}

#[test]
fn denominators_below_the_floor_are_unresolvable() {
    let n = 8;
    let model = IsingModel::new(1.0, 2.0, n).unwrap();
    let mut src = FreeFermionSource::new(model.clone());
    // Singly occupied blocks form an eigenstate, so D is a single narrow peak.
    let p = FockState::uniform(n / 2, 3).unwrap();
    let mag = BlockObservable::magnetization(&model);
    let exp = FilterExpansion::build(FilterSpec::new(0.3, n, Grid::Full).unwrap()).unwrap();
    let far = model.state_energy(&p) + 3.0;
    let err = filtered_observable(&mut src, &p, &mag, far, &exp, EstimatorOptions::noisy()).unwrap_err();
    assert!(matches!(err, Error::UnresolvableEnergy { .. }));
}
