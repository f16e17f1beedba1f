use finite_energy::dense::{DenseModel, DenseState, Sector};
use finite_energy::device::{
    moments, reconstruct_signed, wrap_noisy, AmplitudeSource, DenseSource, FreeFermionSource, NoiseSpec,
};
use finite_energy::ising::{FockState, IsingModel};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Open XX chain with fields, and an eigenstate of `⊗_A σ_x ⊗_B σ_y`.
fn xy_setup(seed: u64) -> (DenseModel, DenseState) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 8;
    let jx: Vec<f64> = (0..n - 1).map(|_| rng.random_range(0.5..1.5)).collect();
    let fields: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let model = DenseModel::xy_chain(jx, fields).unwrap();
    let s = std::f64::consts::FRAC_1_SQRT_2;
    let sites: Vec<[Complex64; 2]> = (0..n)
        .map(|i| if i % 2 == 0 { [c(s, 0.0), c(s, 0.0)] } else { [c(s, 0.0), c(0.0, s)] })
        .collect();
    (model, DenseState::product(&sites).unwrap())
}

#[test]
fn chiral_state_has_real_amplitude_and_reconstructs() {
    for seed in [1, 2, 3] {
        let (model, psi) = xy_setup(seed);
        let dt = 0.01;
        let amps: Vec<Complex64> = (0..=2000)
            .map(|j| model.amplitude(&psi, j as f64 * dt).unwrap())
            .collect();
        assert!(amps.iter().all(|a| a.im.abs() < 1e-10));
        let abs2: Vec<f64> = amps.iter().map(|a| a.norm_sqr()).collect();
        let g = reconstruct_signed(&abs2, dt, 0.0, 1e-3).unwrap();
        let worst = g
            .values
            .iter()
            .zip(&amps)
            .map(|(v, a)| (v - a.re).abs())
            .fold(0.0, f64::max);
        assert!(worst < 1e-3, "seed {seed}: max error {worst}");
        for j in [0, 700, 2000] {
            assert!((g.amplitude(j) - amps[j]).norm() < 1e-3);
        }
    }
}

#[test]
fn shot_noise_has_the_stated_spread() {
    let model = IsingModel::new(1.0, 2.0, 8).unwrap();
    let p = FockState::new(vec![1, 2, 3, 4]).unwrap();
    let noise = NoiseSpec {
        cutoff: 0.0,
        shots: Some(10_000),
        seed: 12,
    };
    let mut src = wrap_noisy(FreeFermionSource::new(model), noise).unwrap();
    let draws = 10_000;
    let samples: Vec<Complex64> = (0..draws).map(|_| src.amplitude(&p, 0.0).unwrap()).collect();
    for part in [|z: &Complex64| z.re, |z: &Complex64| z.im] {
        let xs: Vec<f64> = samples.iter().map(part).collect();
        let mean = xs.iter().sum::<f64>() / draws as f64;
        let std = (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (draws - 1) as f64).sqrt();
        // The sample standard deviation has spread σ/√(2n).
        let spread = 0.01 / (2.0 * draws as f64).sqrt();
        assert!((std - 0.01).abs() < 3.0 * spread, "std {std}");
    }
    assert!(samples.iter().all(|a| a.norm() <= 1.0 + 5.0 * 0.01));
}

#[test]
fn noisy_conjugation_symmetry_holds_on_average() {
    let model = IsingModel::new(1.0, 2.0, 8).unwrap();
    let p = FockState::new(vec![2, 1, 1, 3]).unwrap();
    let noise = NoiseSpec {
        cutoff: 0.0,
        shots: Some(100),
        seed: 3,
    };
    let mut src = wrap_noisy(FreeFermionSource::new(model), noise).unwrap();
    let draws = 10_000;
    let t = 0.37;
    let mut diff = Complex64::new(0.0, 0.0);
    for _ in 0..draws {
        diff += src.amplitude(&p, -t).unwrap() - src.amplitude(&p, t).unwrap().conj();
    }
    diff /= draws as f64;
    // Each draw of the difference has σ = √2 · 0.1 per quadrature.
    let sigma = 2f64.sqrt() * 0.1 / (draws as f64).sqrt();
    assert!(diff.re.abs() < 4.0 * sigma && diff.im.abs() < 4.0 * sigma);
}

#[test]
fn noise_is_reproducible_and_absent_without_shots() {
    let model = IsingModel::new(0.5, 1.5, 10).unwrap();
    let p = FockState::uniform(5, 2).unwrap();
    let times = [0.0, 0.3, 1.7];
    let mut clean = FreeFermionSource::new(model.clone());
    let mut wrapped = wrap_noisy(FreeFermionSource::new(model.clone()), NoiseSpec::noiseless()).unwrap();
    assert_eq!(clean.amplitudes(&p, &times).unwrap(), wrapped.amplitudes(&p, &times).unwrap());
    let noise = NoiseSpec {
        cutoff: 0.0,
        shots: Some(50),
        seed: 77,
    };
    let run = || {
        let mut s = wrap_noisy(FreeFermionSource::new(model.clone()), noise).unwrap();
        s.amplitudes(&p, &times).unwrap()
    };
    assert_eq!(run(), run());
}

#[test]
fn moments_from_backends() {
    let model = DenseModel::tilted_ising(1.0, 0.5, -1.05, 10, Sector::Full).unwrap();
    let src = DenseSource::new(&model);
    let psi = DenseState::product_theta(std::f64::consts::FRAC_PI_4, 10).unwrap();
    let (_, sigma) = moments(&src, &psi).unwrap();
    let per_site = sigma * sigma / 10.0;
    assert!((0.5..=5.0).contains(&per_site), "σ²/N = {per_site}");

    // Singly occupied blocks are eigenstates: no spread on either backend.
    let n = 6;
    let dense = DenseModel::transverse_ising(1.0, 2.0, n).unwrap();
    let single = FockState::uniform(n / 2, 3).unwrap();
    let src = FreeFermionSource::new(IsingModel::new(1.0, 2.0, n).unwrap());
    let (e_ff, s_ff) = moments(&src, &single).unwrap();
    let (e_dense, s_dense) = moments(&DenseSource::new(&dense), &DenseState::fock(n, &single).unwrap()).unwrap();
    assert!(s_ff.abs() < 1e-12 && s_dense.abs() < 1e-6);
    assert!((e_ff - e_dense).abs() < 1e-10);
}

const ZERO_TOL: f64 = 1e-2;

/// `Π (t - z_i)^{m_i} (1.5 + sin ωt)` on `t_j = j/100`, `j = 0..=200`, scaled
/// to `max |g| = 1` and `g(0) > 0`; `None` when a zero's nearest sample is
/// not below [`ZERO_TOL`] in `g²`.
fn zero_series(zeros: &[(f64, u32)], omega: f64) -> Option<Vec<f64>> {
    let f = |t: f64| zeros.iter().map(|&(z, m)| (t - z).powi(m as i32)).product::<f64>() * (1.5 + (omega * t).sin());
    let raw: Vec<f64> = (0..=200).map(|j| f(j as f64 * 0.01)).collect();
    let scale = raw[0].signum() / raw.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let g: Vec<f64> = raw.iter().map(|v| v * scale).collect();
    let visible = zeros.iter().all(|&(z, _)| {
        let j = (z / 0.01).round() as usize;
        g[j] * g[j] < ZERO_TOL
    });
    visible.then_some(g)
}

fn sorted_zeros(mut zeros: Vec<(f64, u32)>) -> Vec<(f64, u32)> {
    zeros.sort_by(|a, b| a.0.total_cmp(&b.0));
    zeros
}

fn min_gap(zeros: &[(f64, u32)]) -> f64 {
    zeros.windows(2).map(|w| w[1].0 - w[0].0).fold(f64::INFINITY, f64::min)
}

proptest::proptest! {
    #[test]
    fn separated_zeros_reconstruct_exactly(
        gaps in proptest::collection::vec((0.15f64..0.5, 1u32..=2), 1..4),
        omega in 0.5f64..4.0,
    ) {
        let zeros: Vec<(f64, u32)> = gaps
            .iter()
            .scan(0.1, |t, &(gap, m)| {
                *t += gap;
                Some((*t, m))
            })
            .collect();
        let g = zero_series(&zeros, omega);
        proptest::prop_assume!(g.is_some());
        let g = g.unwrap();
        let abs2: Vec<f64> = g.iter().map(|v| v * v).collect();
        let rec = reconstruct_signed(&abs2, 0.01, 0.0, ZERO_TOL).unwrap();
        for (a, b) in rec.values.iter().zip(&g) {
            proptest::prop_assert!((a - b).abs() < 1e-12, "{} vs {}", a, b);
        }
    }

    #[test]
    fn crowded_zeros_are_exact_or_refused(
        raw in proptest::collection::vec((0.2f64..1.8, 1u32..=2), 2..5),
        omega in 0.5f64..4.0,
    ) {
        let zeros = sorted_zeros(raw);
        proptest::prop_assume!(min_gap(&zeros) >= 0.03);
        let g = zero_series(&zeros, omega);
        proptest::prop_assume!(g.is_some());
        let g = g.unwrap();
        let abs2: Vec<f64> = g.iter().map(|v| v * v).collect();
        match reconstruct_signed(&abs2, 0.01, 0.0, ZERO_TOL) {
            Ok(rec) => {
                for (a, b) in rec.values.iter().zip(&g) {
                    proptest::prop_assert!((a - b).abs() < 1e-12, "{} vs {}", a, b);
                }
            }
            Err(e) => proptest::prop_assert!(matches!(e, finite_energy::Error::UnresolvedZero { .. }), "{}", e),
        }
    }
}
