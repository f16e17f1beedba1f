//! Periodic transverse-field Ising chain in its free-fermion form.
//!
//! After a Fourier transform the Hamiltonian splits into `N/2` independent
//! four-level blocks. Block `k = 1..N/2-1` couples the modes `±k` in the basis
//! `|vac⟩, b†_k b†_{-k}|vac⟩, b†_k|vac⟩, b†_{-k}|vac⟩` (labels 1..4) and reads
//! `H_k = [x_k σ_z + y_k σ_y] ⊕ 0` with `σ_z = diag(-1, 1)`. Block 0 pairs the
//! modes `0` and `N/2` and is diagonal, `H_0 = [x_{0,+} σ_z] ⊕ [x_{0,-} σ_z]`.
//!
//! Every quantity below (Loschmidt amplitudes, traces of filtered operators,
//! thermal averages) factorises over blocks, which keeps `N ≈ 100` exact.

use nalgebra::Matrix4;
use num_complex::Complex64;
use rand::Rng;

use crate::error::{invalid, Error, Result};
use crate::filter::{FilterExpansion, Grid};

pub type Block4 = Matrix4<Complex64>;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModeParams {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

/// `x_k, y_k, z_k` for `k = 1..N/2-1` plus the paired zero block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockSpectrum {
    pub x0: f64,
    pub x_half: f64,
    pub x_plus: f64,
    pub x_minus: f64,
    /// Index `k - 1` holds mode `k`.
    pub modes: Vec<ModeParams>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IsingModel {
    g: f64,
    h: f64,
    n_sites: usize,
    spectrum: BlockSpectrum,
}

impl IsingModel {
    pub fn new(g: f64, h: f64, n_sites: usize) -> Result<Self> {
        if n_sites < 4 || n_sites % 2 != 0 {
            return Err(invalid(format!(
                "free-fermion chain needs an even N >= 4, got {n_sites}"
            )));
        }
        if !g.is_finite() || !h.is_finite() {
            return Err(invalid("couplings must be finite"));
        }
        let n = n_sites as f64;
        let x_of = |k: usize| h + g * (2.0 * std::f64::consts::PI * k as f64 / n).cos();
        let modes = (1..n_sites / 2)
            .map(|k| {
                let x = x_of(k);
                let y = g * (2.0 * std::f64::consts::PI * k as f64 / n).sin();
                ModeParams {
                    x,
                    y,
                    z: x.hypot(y),
                }
            })
            .collect();
        let x0 = x_of(0);
        let x_half = x_of(n_sites / 2);
        Ok(Self {
            g,
            h,
            n_sites,
            spectrum: BlockSpectrum {
                x0,
                x_half,
                x_plus: (x0 + x_half) / 2.0,
                x_minus: (x0 - x_half) / 2.0,
                modes,
            },
        })
    }

    pub fn g(&self) -> f64 {
        self.g
    }

    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn n_sites(&self) -> usize {
        self.n_sites
    }

    pub fn n_blocks(&self) -> usize {
        self.n_sites / 2
    }

    pub fn block_spectrum(&self) -> &BlockSpectrum {
        &self.spectrum
    }

    fn mode(&self, k: usize) -> ModeParams {
        self.spectrum.modes[k - 1]
    }

    /// Energies `E_{0,n}` of the four (eigen)states of block 0.
    fn zero_block_energies(&self) -> [f64; 4] {
        let s = &self.spectrum;
        [-s.x_plus, s.x_plus, -s.x_minus, s.x_minus]
    }

    /// `H_k` as a 4x4 matrix in the block basis.
    pub fn block_hamiltonian(&self, k: usize) -> Block4 {
        let mut hk = Block4::zeros();
        if k == 0 {
            for (i, e) in self.zero_block_energies().into_iter().enumerate() {
                hk[(i, i)] = e.into();
            }
        } else {
            let ModeParams { x, y, .. } = self.mode(k);
            hk[(0, 0)] = (-x).into();
            hk[(1, 1)] = x.into();
            hk[(0, 1)] = -I * y;
            hk[(1, 0)] = I * y;
        }
        hk
    }

    /// Eigenvalues of `H_k` (unordered).
    pub fn block_eigenvalues(&self, k: usize) -> [f64; 4] {
        if k == 0 {
            self.zero_block_energies()
        } else {
            let z = self.mode(k).z;
            [-z, z, 0.0, 0.0]
        }
    }

    /// Diagonal element `⟨label|H_k|label⟩`.
    pub fn block_energy(&self, k: usize, label: u8) -> f64 {
        if k == 0 {
            self.zero_block_energies()[label as usize - 1]
        } else {
            match label {
                1 => -self.mode(k).x,
                2 => self.mode(k).x,
                _ => 0.0,
            }
        }
    }

    pub fn state_energy(&self, state: &FockState) -> f64 {
        state
            .labels()
            .iter()
            .enumerate()
            .map(|(k, &p)| self.block_energy(k, p))
            .sum()
    }

    /// Energy variance `⟨H^2⟩ - ⟨H⟩^2`; only blocks in labels 1/2 with `k != 0`
    /// contribute, each `y_k^2`.
    pub fn state_variance(&self, state: &FockState) -> f64 {
        state
            .labels()
            .iter()
            .enumerate()
            .skip(1)
            .filter(|(_, &p)| p <= 2)
            .map(|(k, _)| self.mode(k).y.powi(2))
            .sum()
    }

    /// Lowest energy a Fock state can have: the sum of per-block minima.
    pub fn min_fock_energy(&self) -> f64 {
        (0..self.n_blocks())
            .map(|k| {
                (1..=4u8)
                    .map(|p| self.block_energy(k, p))
                    .fold(f64::INFINITY, f64::min)
            })
            .sum()
    }

    pub fn ground_energy(&self) -> f64 {
        (0..self.n_blocks())
            .map(|k| self.block_eigenvalues(k).into_iter().fold(f64::INFINITY, f64::min))
            .sum()
    }

    /// `⟨label|e^{iH_k t}|label⟩` in closed form.
    pub fn block_amplitude(&self, k: usize, label: u8, t: f64) -> Complex64 {
        if k == 0 {
            return Complex64::from_polar(1.0, self.zero_block_energies()[label as usize - 1] * t);
        }
        match label {
            1 | 2 => {
                let ModeParams { x, z, .. } = self.mode(k);
                if z == 0.0 {
                    return Complex64::new(1.0, 0.0);
                }
                let (s, c) = (z * t).sin_cos();
                let sign = if label == 1 { -1.0 } else { 1.0 };
                Complex64::new(c, sign * s * x / z)
            }
            _ => Complex64::new(1.0, 0.0),
        }
    }

    /// Loschmidt amplitude `⟨p|e^{iHt}|p⟩` as a product over blocks.
    pub fn loschmidt_amplitude(&self, state: &FockState, t: f64) -> Complex64 {
        state
            .labels()
            .iter()
            .enumerate()
            .map(|(k, &p)| self.block_amplitude(k, p, t))
            .product()
    }

    /// `e^{-iH_k t}` as a 4x4 matrix.
    pub fn block_evolution(&self, k: usize, t: f64) -> Block4 {
        let mut u = Block4::zeros();
        if k == 0 {
            for (i, e) in self.zero_block_energies().into_iter().enumerate() {
                u[(i, i)] = Complex64::from_polar(1.0, -e * t);
            }
            return u;
        }
        let ModeParams { x, y, z } = self.mode(k);
        u[(2, 2)] = 1.0.into();
        u[(3, 3)] = 1.0.into();
        if z == 0.0 {
            u[(0, 0)] = 1.0.into();
            u[(1, 1)] = 1.0.into();
            return u;
        }
        let (s, c) = (z * t).sin_cos();
        // cos(zt) - i sin(zt) (x σ_z + y σ_y)/z
        u[(0, 0)] = Complex64::new(c, s * x / z);
        u[(1, 1)] = Complex64::new(c, -s * x / z);
        u[(0, 1)] = Complex64::new(-s * y / z, 0.0);
        u[(1, 0)] = Complex64::new(s * y / z, 0.0);
        u
    }

    /// `r_k = ¼ tr e^{-iH_k t}` for every block (real by symmetry of the spectrum).
    pub fn block_trace_values(&self, t: f64) -> Vec<f64> {
        let s = &self.spectrum;
        std::iter::once(0.5 * ((s.x_plus * t).cos() + (s.x_minus * t).cos()))
            .chain(s.modes.iter().map(|mode| (mode.z * t / 2.0).cos().powi(2)))
            .collect()
    }

    /// `r_{m,k}` and (given an observable) `s_{m,k} = ¼ tr(A_k e^{-i 2m H_k / scale})`.
    pub fn block_traces(
        &self,
        m: i64,
        scale: f64,
        observable: Option<&BlockObservable>,
    ) -> BlockTraces {
        let t = 2.0 * m as f64 / scale;
        let r = self.block_trace_values(t);
        let s = observable.map(|obs| {
            (0..self.n_blocks())
                .map(|k| (obs.block(k) * self.block_evolution(k, t)).trace() / 4.0)
                .collect()
        });
        BlockTraces { r, s }
    }

    /// `⟨p|e^{iHt₁} A e^{-iHt₂}|p⟩` for a block-sum observable.
    pub fn observable_amplitude(
        &self,
        state: &FockState,
        observable: &BlockObservable,
        t1: f64,
        t2: f64,
    ) -> Complex64 {
        let labels = state.labels();
        let nb = labels.len();
        // Blocks untouched by A contribute ⟨p_q|e^{-iH_q (t2 - t1)}|p_q⟩.
        let plain: Vec<Complex64> = labels
            .iter()
            .enumerate()
            .map(|(k, &p)| self.block_amplitude(k, p, t1 - t2))
            .collect();
        let mut suffix = vec![Complex64::new(1.0, 0.0); nb + 1];
        for k in (0..nb).rev() {
            suffix[k] = suffix[k + 1] * plain[k];
        }
        let mut prefix = Complex64::new(1.0, 0.0);
        let mut total = Complex64::new(0.0, 0.0);
        for (k, &p) in labels.iter().enumerate() {
            let i = p as usize - 1;
            let left = self.block_evolution(k, t1).adjoint();
            let right = self.block_evolution(k, t2);
            let mut elem = Complex64::new(0.0, 0.0);
            for a in 0..4 {
                if left[(i, a)] == Complex64::new(0.0, 0.0) {
                    continue;
                }
                for b in 0..4 {
                    elem += left[(i, a)] * observable.block(k)[(a, b)] * right[(b, i)];
                }
            }
            total += prefix * elem * suffix[k + 1];
            prefix *= plain[k];
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BlockTraces {
    pub r: Vec<f64>,
    pub s: Option<Vec<Complex64>>,
}

/// Product state of the block bases: one label `1..=4` per block `k = 0..N/2-1`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FockState {
    labels: Vec<u8>,
}

impl FockState {
    pub fn new(labels: Vec<u8>) -> Result<Self> {
        if labels.is_empty() {
            return Err(invalid("a Fock state needs at least one block"));
        }
        if let Some(bad) = labels.iter().find(|&&p| !(1..=4).contains(&p)) {
            return Err(invalid(format!("block label {bad} outside 1..=4")));
        }
        Ok(Self { labels })
    }

    pub fn uniform(n_blocks: usize, label: u8) -> Result<Self> {
        Self::new(vec![label; n_blocks])
    }

    pub fn random<R: Rng + ?Sized>(n_blocks: usize, rng: &mut R) -> Self {
        Self {
            labels: (0..n_blocks).map(|_| rng.random_range(1..=4u8)).collect(),
        }
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn n_blocks(&self) -> usize {
        self.labels.len()
    }

    pub fn with_label(&self, k: usize, label: u8) -> Self {
        let mut labels = self.labels.clone();
        labels[k] = label;
        Self { labels }
    }

    pub(crate) fn set_label(&mut self, k: usize, label: u8) {
        self.labels[k] = label;
    }
}

/// Observable `A = Σ_k A_k` with `A_k` acting on block `k` only.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockObservable {
    blocks: Vec<Block4>,
    norm_bound: f64,
}

impl BlockObservable {
    pub fn new(blocks: Vec<Block4>) -> Result<Self> {
        for (k, b) in blocks.iter().enumerate() {
            let dev = (b - b.adjoint()).iter().map(|c| c.norm()).fold(0.0, f64::max);
            if dev > 1e-12 {
                return Err(invalid(format!(
                    "block {k} is not Hermitian (deviation {dev:e})"
                )));
            }
        }
        let norm_bound = blocks
            .iter()
            .map(|b| {
                b.symmetric_eigenvalues()
                    .iter()
                    .map(|l| l.abs())
                    .fold(0.0, f64::max)
            })
            .sum();
        Ok(Self { blocks, norm_bound })
    }

    /// `M = (1/N) Σ_n a†_n a_n`: `diag(0, 2, 1, 1)/N` in every block.
    pub fn magnetization(model: &IsingModel) -> Self {
        let n = model.n_sites() as f64;
        let block = Block4::from_diagonal(&nalgebra::Vector4::new(
            0.0.into(),
            (2.0 / n).into(),
            (1.0 / n).into(),
            (1.0 / n).into(),
        ));
        Self::new(vec![block; model.n_blocks()]).expect("diagonal blocks are Hermitian")
    }

    /// `H/N`.
    pub fn energy_density(model: &IsingModel) -> Self {
        let n = model.n_sites() as f64;
        let blocks = (0..model.n_blocks())
            .map(|k| model.block_hamiltonian(k).map(|c| c / n))
            .collect();
        Self::new(blocks).expect("block Hamiltonians are Hermitian")
    }

    pub fn identity(n_blocks: usize) -> Self {
        let b = Block4::identity().map(|c| c / n_blocks as f64);
        Self::new(vec![b; n_blocks]).expect("identity is Hermitian")
    }

    pub fn block(&self, k: usize) -> &Block4 {
        &self.blocks[k]
    }

    pub fn n_blocks(&self) -> usize {
        self.blocks.len()
    }

    /// `Σ_k ‖A_k‖`, an upper bound on `‖A‖`.
    pub fn norm_bound(&self) -> f64 {
        self.norm_bound
    }

    pub fn is_diagonal(&self) -> bool {
        self.blocks.iter().all(|b| {
            (0..4).all(|i| (0..4).all(|j| i == j || b[(i, j)].norm() == 0.0))
        })
    }

    /// `⟨p|A|p⟩`; the eigenvalue when `A` is diagonal.
    pub fn diagonal_value(&self, state: &FockState) -> f64 {
        state
            .labels()
            .iter()
            .enumerate()
            .map(|(k, &p)| self.blocks[k][(p as usize - 1, p as usize - 1)].re)
            .sum()
    }

    /// `2^{-N} tr A`.
    pub fn normalized_trace(&self) -> f64 {
        self.blocks.iter().map(|b| b.trace().re / 4.0).sum()
    }
}

/// Quantity `L + ln(mantissa)` kept apart so products of many small factors
/// never underflow.
#[derive(Debug, Clone, Copy)]
struct Scaled {
    ln_scale: f64,
    mantissa: Complex64,
}

fn sum_scaled(terms: &[Scaled]) -> (Scaled, f64) {
    let top = terms
        .iter()
        .filter(|t| t.mantissa.norm() > 0.0)
        .map(|t| t.ln_scale + t.mantissa.norm().ln())
        .fold(f64::NEG_INFINITY, f64::max);
    if top == f64::NEG_INFINITY {
        return (
            Scaled {
                ln_scale: 0.0,
                mantissa: 0.0.into(),
            },
            0.0,
        );
    }
    let mut acc = Complex64::new(0.0, 0.0);
    let mut abs_acc = 0.0;
    for t in terms {
        let w = (t.ln_scale - top).exp();
        acc += t.mantissa * w;
        abs_acc += t.mantissa.norm() * w;
    }
    (
        Scaled {
            ln_scale: top,
            mantissa: acc,
        },
        abs_acc,
    )
}

/// Numerical guards for [`exact_microcanonical_with`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExactOptions {
    /// Smallest admissible `2^{-N} tr P`.
    pub floor: f64,
    /// Smallest admissible ratio of the summed denominator to the sum of the
    /// magnitudes of its terms; below it cancellation has eaten the digits.
    pub min_resolution: f64,
}

impl Default for ExactOptions {
    fn default() -> Self {
        Self {
            floor: 1e-300,
            min_resolution: 1e-9,
        }
    }
}

/// `A_δ(E) = tr[A P_δ(E)] / tr[P_δ(E)]` through the block-trace sums.
pub fn exact_microcanonical(
    model: &IsingModel,
    observable: &BlockObservable,
    energy: f64,
    expansion: &FilterExpansion,
) -> Result<f64> {
    exact_microcanonical_with(model, observable, energy, expansion, ExactOptions::default())
}

pub fn exact_microcanonical_with(
    model: &IsingModel,
    observable: &BlockObservable,
    energy: f64,
    expansion: &FilterExpansion,
    options: ExactOptions,
) -> Result<f64> {
    if matches!(expansion.spec().grid, Grid::Optimized { .. }) {
        return Err(invalid(
            "trace sums need a spectrum-wide filter; use the full grid",
        ));
    }
    if observable.n_blocks() != model.n_blocks() {
        return Err(invalid("observable and model have different block counts"));
    }
    let nb = model.n_blocks();
    let mut num_terms = Vec::with_capacity(expansion.coeffs().len());
    let mut den_terms = Vec::with_capacity(expansion.coeffs().len());
    for (&c, &t) in expansion.coeffs().iter().zip(expansion.times()) {
        let r = model.block_trace_values(t);
        let s: Vec<Complex64> = (0..nb)
            .map(|k| (observable.block(k) * model.block_evolution(k, t)).trace() / 4.0)
            .collect();
        let ln_r: Vec<f64> = r.iter().map(|v| v.abs().ln()).collect();
        let sign_r: Vec<f64> = r.iter().map(|v| v.signum()).collect();
        let phase = Complex64::from_polar(c, energy * t);

        let ln_d: f64 = ln_r.iter().sum();
        let sign_d: f64 = sign_r.iter().product();
        den_terms.push(Scaled {
            ln_scale: ln_d,
            mantissa: phase * sign_d,
        });

        // n_m = Σ_k s_k Π_{q≠k} r_q with prefix/suffix log products, which also
        // covers r_{m,k} = 0.
        let mut suffix_ln = vec![0.0; nb + 1];
        let mut suffix_sign = vec![1.0; nb + 1];
        for k in (0..nb).rev() {
            suffix_ln[k] = suffix_ln[k + 1] + ln_r[k];
            suffix_sign[k] = suffix_sign[k + 1] * sign_r[k];
        }
        let mut parts = Vec::with_capacity(nb);
        let (mut pre_ln, mut pre_sign) = (0.0, 1.0);
        for k in 0..nb {
            parts.push(Scaled {
                ln_scale: pre_ln + suffix_ln[k + 1],
                mantissa: s[k] * (pre_sign * suffix_sign[k + 1]),
            });
            pre_ln += ln_r[k];
            pre_sign *= sign_r[k];
        }
        let (n_m, _) = sum_scaled(&parts);
        num_terms.push(Scaled {
            ln_scale: n_m.ln_scale,
            mantissa: n_m.mantissa * phase,
        });
    }
    let (num, _) = sum_scaled(&num_terms);
    let (den, den_abs) = sum_scaled(&den_terms);

    let unresolvable = |reason: String| Error::UnresolvableEnergy { energy, reason };
    let den_mag = den.mantissa.norm();
    if den_mag == 0.0 || den.ln_scale + den.mantissa.re.abs().ln() < options.floor.ln() {
        return Err(unresolvable(format!(
            "normalised trace below the floor {:e}",
            options.floor
        )));
    }
    if den_mag < options.min_resolution * den_abs {
        return Err(unresolvable(format!(
            "cancellation: |Σ| / Σ|terms| = {:e}",
            den_mag / den_abs
        )));
    }
    if den.mantissa.im.abs() > 1e-8 * den.mantissa.re.abs() {
        return Err(unresolvable("imaginary residue above 1e-8 relative".into()));
    }
    Ok((num.ln_scale - den.ln_scale).exp() * num.mantissa.re / den.mantissa.re)
}

/// Canonical average `tr(e^{-βH} A) / tr(e^{-βH}) = Σ_k s̃_k / r̃_k`.
pub fn exact_canonical(model: &IsingModel, observable: &BlockObservable, beta: f64) -> Result<f64> {
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(invalid(format!("inverse temperature must be >= 0, got {beta}")));
    }
    if observable.n_blocks() != model.n_blocks() {
        return Err(invalid("observable and model have different block counts"));
    }
    let mut total = 0.0;
    for k in 0..model.n_blocks() {
        // e^{-β(H_k - λ_min)}: the shared factor e^{-β λ_min} cancels in s̃/r̃.
        let mut boltz = Block4::zeros();
        if k == 0 {
            let energies = model.zero_block_energies();
            let lowest = energies.iter().cloned().fold(f64::INFINITY, f64::min);
            for (i, e) in energies.into_iter().enumerate() {
                boltz[(i, i)] = (-beta * (e - lowest)).exp().into();
            }
        } else {
            let ModeParams { x, y, z } = model.mode(k);
            let damp = (-2.0 * beta * z).exp();
            let even = (1.0 + damp) / 2.0;
            let odd = if z == 0.0 { 0.0 } else { (1.0 - damp) / 2.0 / z };
            boltz[(0, 0)] = (even + odd * x).into();
            boltz[(1, 1)] = (even - odd * x).into();
            boltz[(0, 1)] = I * y * odd;
            boltz[(1, 0)] = -I * y * odd;
            let idle = (-beta * z).exp();
            boltz[(2, 2)] = idle.into();
            boltz[(3, 3)] = idle.into();
        }
        let r = boltz.trace().re;
        let s = (observable.block(k) * boltz).trace().re;
        total += s / r;
    }
    Ok(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::FilterSpec;

    #[test]
    fn block_spectrum_small_chain() {
        let model = IsingModel::new(1.0, 2.0, 4).unwrap();
        let s = model.block_spectrum();
        assert!((s.x0 - 3.0).abs() < 1e-15);
        assert!((s.x_half - 1.0).abs() < 1e-15);
        assert!((s.x_plus - 2.0).abs() < 1e-15);
        assert!((s.x_minus - 1.0).abs() < 1e-15);
        assert!((s.modes[0].x - 2.0).abs() < 1e-15);
        assert!((s.modes[0].y - 1.0).abs() < 1e-15);
        assert!((s.modes[0].z - 5f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn zero_coupling_has_flat_modes() {
        let model = IsingModel::new(0.0, -1.3, 10).unwrap();
        for mode in &model.block_spectrum().modes {
            assert_eq!(mode.y, 0.0);
            assert!((mode.z - 1.3).abs() < 1e-15);
        }
    }

    #[test]
    fn critical_gap_is_small_but_open() {
        let model = IsingModel::new(1.0, 1.0, 100).unwrap();
        let modes = &model.block_spectrum().modes;
        let (argmin, min) = modes
            .iter()
            .enumerate()
            .map(|(i, m)| (i + 1, m.z))
            .fold((0, f64::INFINITY), |a, b| if b.1 < a.1 { b } else { a });
        assert_eq!(argmin, 49);
        assert!(min > 0.0 && min < 0.07);
    }

    #[test]
    fn rejects_odd_or_tiny_chains() {
        assert!(IsingModel::new(1.0, 1.0, 5).is_err());
        assert!(IsingModel::new(1.0, 1.0, 2).is_err());
        assert!(FockState::new(vec![1, 5]).is_err());
        assert!(FockState::new(vec![]).is_err());
    }

    #[test]
    fn vacuum_energy_and_flips() {
        let model = IsingModel::new(1.0, 2.0, 4).unwrap();
        let vac = FockState::uniform(2, 1).unwrap();
        assert!((model.state_energy(&vac) + 4.0).abs() < 1e-14);
        let flipped = vac.with_label(1, 2);
        let x1 = model.block_spectrum().modes[0].x;
        assert!((model.state_energy(&flipped) - model.state_energy(&vac) - 2.0 * x1).abs() < 1e-14);
        let idle = FockState::new(vec![1, 3]).unwrap();
        assert!((model.state_energy(&idle) + model.block_spectrum().x_plus).abs() < 1e-14);
    }

    #[test]
    fn amplitude_limits() {
        let model = IsingModel::new(0.7, 1.1, 12).unwrap();
        let mut rng = rand::rng();
        let state = FockState::random(6, &mut rng);
        let one = model.loschmidt_amplitude(&state, 0.0);
        assert!((one - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        let t = 1.37;
        let a = model.loschmidt_amplitude(&state, t);
        let b = model.loschmidt_amplitude(&state, -t);
        assert!((a - b.conj()).norm() < 1e-14);
        assert!(a.norm() <= 1.0 + 1e-14);

        let mut labels = vec![3u8; 6];
        labels[0] = 3;
        labels[2] = 4;
        let idle = FockState::new(labels).unwrap();
        let x_minus = model.block_spectrum().x_minus;
        let a = model.loschmidt_amplitude(&idle, t);
        assert!((a - Complex64::from_polar(1.0, -x_minus * t)).norm() < 1e-14);
    }

    #[test]
    fn degenerate_mode_amplitude_is_one() {
        // g = h puts z = 0 at k = N/2 only, which is folded into block 0; use
        // g = -h with N/2 odd-free k instead: x_k = h(1 - cos), y_k = -h sin.
        let model = IsingModel::new(0.0, 0.0, 8).unwrap();
        let state = FockState::new(vec![1, 2, 1, 2]).unwrap();
        let a = model.loschmidt_amplitude(&state, 3.0);
        assert!((a - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        let u = model.block_evolution(2, 3.0);
        assert!((u - Block4::identity()).norm() < 1e-15);
    }

    #[test]
    fn block_evolution_matches_amplitude() {
        let model = IsingModel::new(1.0, 2.0, 10).unwrap();
        for k in 0..5 {
            let u = model.block_evolution(k, -0.83);
            for p in 1..=4u8 {
                let i = p as usize - 1;
                let want = model.block_amplitude(k, p, 0.83);
                assert!((u[(i, i)] - want).norm() < 1e-14);
            }
            // Unitarity.
            let uu = u.adjoint() * u;
            assert!((uu - Block4::identity()).norm() < 1e-13);
        }
    }

    #[test]
    fn zeroth_traces() {
        let model = IsingModel::new(1.0, 2.0, 8).unwrap();
        let mag = BlockObservable::magnetization(&model);
        let tr = model.block_traces(0, 8.0, Some(&mag));
        assert!(tr.r.iter().all(|&r| (r - 1.0).abs() < 1e-15));
        for s in tr.s.unwrap() {
            assert!((s.re - 1.0 / 8.0).abs() < 1e-15 && s.im.abs() < 1e-15);
        }
    }

    #[test]
    fn magnetization_limits() {
        let model = IsingModel::new(1.0, 2.0, 20).unwrap();
        let mag = BlockObservable::magnetization(&model);
        assert!((mag.normalized_trace() - 0.5).abs() < 1e-15);
        assert_eq!(mag.diagonal_value(&FockState::uniform(10, 1).unwrap()), 0.0);
        assert!(mag.is_diagonal());
        assert!((mag.norm_bound() - 1.0).abs() < 1e-12);
        assert!((exact_canonical(&model, &mag, 0.0).unwrap() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn identity_filters_to_one() {
        let model = IsingModel::new(1.0, 2.0, 8).unwrap();
        let id = BlockObservable::identity(4);
        let spec = FilterSpec::new(1.0, 8, Grid::Full).unwrap();
        let exp = FilterExpansion::build(spec).unwrap();
        let v = exact_microcanonical(&model, &id, -2.0, &exp).unwrap();
        assert!((v - 1.0).abs() < 1e-10);
    }

    #[test]
    fn infinitely_wide_filter_gives_trace() {
        let model = IsingModel::new(1.0, 2.0, 12).unwrap();
        let mag = BlockObservable::magnetization(&model);
        let spec = FilterSpec::new(1.0, 12, Grid::Full).unwrap();
        let v = exact_microcanonical(&model, &mag, 3.0, &FilterExpansion::identity(spec)).unwrap();
        assert!((v - 0.5).abs() < 1e-14);
    }

    #[test]
    fn known_minimal_fock_energies() {
        let a = IsingModel::new(1.0, 2.0, 20).unwrap();
        assert!((a.min_fock_energy() + 20.0).abs() < 1e-12);
        let b = IsingModel::new(2.0, 1.0, 20).unwrap();
        assert!((b.min_fock_energy() + 14.39).abs() < 5e-3);
    }

    #[test]
    fn canonical_low_temperature_trend() {
        let model = IsingModel::new(0.3, 0.8, 100).unwrap();
        let mag = BlockObservable::magnetization(&model);
        let mut last = f64::INFINITY;
        for beta in [0.0, 0.5, 1.0, 2.0, 5.0, 10.0, 40.0] {
            let m = exact_canonical(&model, &mag, beta).unwrap();
            assert!(m < last);
            last = m;
        }
        // Ground state: every block in its lower eigenvector, whose pair
        // occupation is (1 - x/z)/2.
        let ground: f64 = model
            .block_spectrum()
            .modes
            .iter()
            .map(|m| 1.0 - m.x / m.z)
            .sum::<f64>()
            / 100.0;
        assert!((last - ground).abs() < 1e-8);
        assert!(exact_canonical(&model, &mag, -1.0).is_err());
    }
}
