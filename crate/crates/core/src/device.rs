//! The amplitude oracle a quantum device would provide.
//!
//! Everything downstream consumes [`AmplitudeSource`]: `a(t) = ⟨ψ|e^{-iHt}|ψ⟩`,
//! two-time observable amplitudes `⟨ψ|e^{iHt₁} A e^{-iHt₂}|ψ⟩`, and (where the
//! backend knows them) the energy moments of `ψ`. Backends are the
//! free-fermion chain and dense diagonalisation; [`NoisySource`] adds shot
//! noise on top of either.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dense::{DenseModel, DenseObservable, DenseState, SpectralState};
use crate::error::{invalid, Error, Result};
use crate::ising::{BlockObservable, FockState, IsingModel};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capabilities {
    pub two_time: bool,
    pub moments: bool,
}

pub trait AmplitudeSource {
    type State;
    type Observable;

    fn capabilities(&self) -> Capabilities;

    fn n_sites(&self) -> usize;

    /// `a(t) = ⟨ψ|e^{-iHt}|ψ⟩`.
    fn amplitude(&mut self, state: &Self::State, t: f64) -> Result<Complex64>;

    fn amplitudes(&mut self, state: &Self::State, times: &[f64]) -> Result<Vec<Complex64>> {
        times.iter().map(|&t| self.amplitude(state, t)).collect()
    }

    /// `⟨ψ|e^{iHt₁} A e^{-iHt₂}|ψ⟩`.
    fn observable_amplitude(
        &mut self,
        state: &Self::State,
        obs: &Self::Observable,
        t1: f64,
        t2: f64,
    ) -> Result<Complex64>;

    /// Row-major `times1 x times2` table of two-time amplitudes.
    fn observable_amplitude_grid(
        &mut self,
        state: &Self::State,
        obs: &Self::Observable,
        times1: &[f64],
        times2: &[f64],
    ) -> Result<Vec<Complex64>> {
        let mut out = Vec::with_capacity(times1.len() * times2.len());
        for &t1 in times1 {
            for &t2 in times2 {
                out.push(self.observable_amplitude(state, obs, t1, t2)?);
            }
        }
        Ok(out)
    }

    /// `(E_ψ, σ_ψ)`.
    fn moments(&self, _state: &Self::State) -> Result<(f64, f64)> {
        Err(Error::Capability("energy moments"))
    }
}

/// `(E_ψ, σ_ψ)` from a source, or a capability error.
pub fn moments<S: AmplitudeSource>(source: &S, state: &S::State) -> Result<(f64, f64)> {
    source.moments(state)
}

/// Closed-form amplitudes of Fock states in the free-fermion chain.
#[derive(Debug, Clone)]
pub struct FreeFermionSource {
    model: IsingModel,
    table: Option<AmplitudeTable>,
}

/// `⟨label|e^{-iH_k t_m}|label⟩` for every block, label and time of a grid.
#[derive(Debug, Clone)]
struct AmplitudeTable {
    times: Vec<f64>,
    /// Index `(k * 4 + label - 1) * times.len() + m`.
    values: Vec<Complex64>,
}

impl FreeFermionSource {
    pub fn new(model: IsingModel) -> Self {
        Self { model, table: None }
    }

    pub fn model(&self) -> &IsingModel {
        &self.model
    }

    fn table_for(&mut self, times: &[f64]) -> &AmplitudeTable {
        let stale = self.table.as_ref().is_none_or(|t| t.times != times);
        if stale {
            let nb = self.model.n_blocks();
            let mut values = Vec::with_capacity(nb * 4 * times.len());
            for k in 0..nb {
                for label in 1..=4u8 {
                    values.extend(
                        times
                            .iter()
                            .map(|&t| self.model.block_amplitude(k, label, t).conj()),
                    );
                }
            }
            self.table = Some(AmplitudeTable {
                times: times.to_vec(),
                values,
            });
        }
        self.table.as_ref().unwrap()
    }

    fn check(&self, state: &FockState) -> Result<()> {
        if state.n_blocks() != self.model.n_blocks() {
            return Err(invalid("Fock state does not match the chain"));
        }
        Ok(())
    }
}

impl AmplitudeSource for FreeFermionSource {
    type State = FockState;
    type Observable = BlockObservable;

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            two_time: true,
            moments: true,
        }
    }

    fn n_sites(&self) -> usize {
        self.model.n_sites()
    }

    fn amplitude(&mut self, state: &FockState, t: f64) -> Result<Complex64> {
        self.check(state)?;
        Ok(self.model.loschmidt_amplitude(state, t).conj())
    }

    fn amplitudes(&mut self, state: &FockState, times: &[f64]) -> Result<Vec<Complex64>> {
        self.check(state)?;
        let n_t = times.len();
        let table = self.table_for(times);
        let mut out = vec![Complex64::new(1.0, 0.0); n_t];
        for (k, &label) in state.labels().iter().enumerate() {
            let row = &table.values[(k * 4 + label as usize - 1) * n_t..][..n_t];
            if label >= 3 && k != 0 {
                continue;
            }
            out.iter_mut().zip(row).for_each(|(o, v)| *o *= v);
        }
        Ok(out)
    }

    fn observable_amplitude(
        &mut self,
        state: &FockState,
        obs: &BlockObservable,
        t1: f64,
        t2: f64,
    ) -> Result<Complex64> {
        self.check(state)?;
        if obs.n_blocks() != self.model.n_blocks() {
            return Err(invalid("observable does not match the chain"));
        }
        Ok(self.model.observable_amplitude(state, obs, t1, t2))
    }

    fn moments(&self, state: &FockState) -> Result<(f64, f64)> {
        self.check(state)?;
        Ok((
            self.model.state_energy(state),
            self.model.state_variance(state).sqrt(),
        ))
    }
}

/// Exact amplitudes from a diagonalised model.
#[derive(Debug, Clone)]
pub struct DenseSource<'a> {
    model: &'a DenseModel,
    last: Option<(DenseState, SpectralState)>,
}

impl<'a> DenseSource<'a> {
    pub fn new(model: &'a DenseModel) -> Self {
        Self { model, last: None }
    }

    pub fn model(&self) -> &DenseModel {
        self.model
    }

    fn spectral(&mut self, state: &DenseState) -> Result<&SpectralState> {
        let hit = matches!(&self.last, Some((s, _)) if s == state);
        if !hit {
            let spec = self.model.decompose(state)?;
            self.last = Some((state.clone(), spec));
        }
        Ok(&self.last.as_ref().unwrap().1)
    }
}

impl AmplitudeSource for DenseSource<'_> {
    type State = DenseState;
    type Observable = DenseObservable;

    fn capabilities(&self) -> Capabilities {
        Capabilities {
            two_time: true,
            moments: true,
        }
    }

    fn n_sites(&self) -> usize {
        self.model.n_sites()
    }

    fn amplitude(&mut self, state: &DenseState, t: f64) -> Result<Complex64> {
        let model = self.model;
        Ok(model.spectral_amplitude(self.spectral(state)?, t))
    }

    fn amplitudes(&mut self, state: &DenseState, times: &[f64]) -> Result<Vec<Complex64>> {
        let model = self.model;
        let spec = self.spectral(state)?;
        Ok(times.iter().map(|&t| model.spectral_amplitude(spec, t)).collect())
    }

    fn observable_amplitude(
        &mut self,
        state: &DenseState,
        obs: &DenseObservable,
        t1: f64,
        t2: f64,
    ) -> Result<Complex64> {
        self.model.observable_amplitude(state, obs, t1, t2)
    }

    fn observable_amplitude_grid(
        &mut self,
        state: &DenseState,
        obs: &DenseObservable,
        times1: &[f64],
        times2: &[f64],
    ) -> Result<Vec<Complex64>> {
        self.model.observable_amplitude_grid(state, obs, times1, times2)
    }

    fn moments(&self, state: &DenseState) -> Result<(f64, f64)> {
        let (e, var) = self.model.moments(state)?;
        Ok((e, var.sqrt()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    /// Weights below this are reported as zero (applied to derived weights by
    /// the samplers, not to raw amplitudes).
    pub cutoff: f64,
    /// Repetitions per amplitude; `None` means exact amplitudes.
    pub shots: Option<u64>,
    pub seed: u64,
}

impl NoiseSpec {
    pub fn noiseless() -> Self {
        Self {
            cutoff: 0.0,
            shots: None,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..1.0).contains(&self.cutoff) {
            return Err(invalid(format!("cutoff {} outside [0, 1)", self.cutoff)));
        }
        if self.shots == Some(0) {
            return Err(invalid("shot count must be positive"));
        }
        Ok(())
    }

    /// Standard deviation per quadrature, `1/√L`.
    pub fn sigma(&self) -> f64 {
        self.shots.map_or(0.0, |l| (l as f64).sqrt().recip())
    }
}

/// Adds independent Gaussian noise of standard deviation `1/√L` to the real
/// and imaginary part of every reported amplitude.
#[derive(Debug, Clone)]
pub struct NoisySource<S> {
    inner: S,
    noise: NoiseSpec,
    rng: ChaCha8Rng,
    normal: Option<Normal<f64>>,
}

pub fn wrap_noisy<S: AmplitudeSource>(source: S, noise: NoiseSpec) -> Result<NoisySource<S>> {
    noise.validate()?;
    let normal = match noise.shots {
        Some(_) => Some(Normal::new(0.0, noise.sigma()).map_err(|e| invalid(e.to_string()))?),
        None => None,
    };
    Ok(NoisySource {
        inner: source,
        noise,
        rng: ChaCha8Rng::seed_from_u64(noise.seed),
        normal,
    })
}

impl<S> NoisySource<S> {
    pub fn inner(&self) -> &S {
        &self.inner
    }

    pub fn noise(&self) -> &NoiseSpec {
        &self.noise
    }

    fn perturb(&mut self, a: Complex64) -> Complex64 {
        match &self.normal {
            Some(n) => a + Complex64::new(n.sample(&mut self.rng), n.sample(&mut self.rng)),
            None => a,
        }
    }
}

impl<S: AmplitudeSource> AmplitudeSource for NoisySource<S> {
    type State = S::State;
    type Observable = S::Observable;

    fn capabilities(&self) -> Capabilities {
        self.inner.capabilities()
    }

    fn n_sites(&self) -> usize {
        self.inner.n_sites()
    }

    fn amplitude(&mut self, state: &S::State, t: f64) -> Result<Complex64> {
        let a = self.inner.amplitude(state, t)?;
        Ok(self.perturb(a))
    }

    fn amplitudes(&mut self, state: &S::State, times: &[f64]) -> Result<Vec<Complex64>> {
        let clean = self.inner.amplitudes(state, times)?;
        Ok(clean.into_iter().map(|a| self.perturb(a)).collect())
    }

    fn observable_amplitude(
        &mut self,
        state: &S::State,
        obs: &S::Observable,
        t1: f64,
        t2: f64,
    ) -> Result<Complex64> {
        let a = self.inner.observable_amplitude(state, obs, t1, t2)?;
        Ok(self.perturb(a))
    }

    fn observable_amplitude_grid(
        &mut self,
        state: &S::State,
        obs: &S::Observable,
        times1: &[f64],
        times2: &[f64],
    ) -> Result<Vec<Complex64>> {
        let clean = self.inner.observable_amplitude_grid(state, obs, times1, times2)?;
        Ok(clean.into_iter().map(|a| self.perturb(a)).collect())
    }

    fn moments(&self, state: &S::State) -> Result<(f64, f64)> {
        self.inner.moments(state)
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed for worker `index` derived from a master seed: the SplitMix64 hash of
/// `master + index · φ`, with φ the 64-bit golden-ratio increment.
pub fn split_seed(master: u64, index: u64) -> u64 {
    splitmix64(master.wrapping_add(index.wrapping_mul(0x9E37_79B9_7F4A_7C15)))
}

/// Signed real series `g(t_j) = a(t_j) e^{iμ t_j/2}` on a uniform grid.
#[derive(Debug, Clone, PartialEq)]
pub struct SignedSeries {
    pub dt: f64,
    pub mu: f64,
    pub values: Vec<f64>,
    /// Grid indices after which the sign flips.
    pub flips: Vec<usize>,
}

impl SignedSeries {
    /// `a(t_j) = g(t_j) e^{-iμ t_j/2}`.
    pub fn amplitude(&self, j: usize) -> Complex64 {
        Complex64::from_polar(self.values[j], -self.mu * self.dt * j as f64 / 2.0)
    }
}

/// Least-squares coefficients for `y ≈ Σ_i β_i f_i(x)` with design rows `f(x)`.
fn least_squares(rows: &[Vec<f64>], y: &[f64]) -> Option<Vec<f64>> {
    let cols = rows.first()?.len();
    if rows.len() < cols {
        return None;
    }
    let a = DMatrix::from_fn(rows.len(), cols, |r, c| rows[r][c]);
    let b = DVector::from_column_slice(y);
    let svd = a.svd(true, true);
    if svd.singular_values.min() <= 1e-12 * svd.singular_values.max() {
        return None;
    }
    svd.solve(&b, 0.0).ok().map(|x| x.iter().copied().collect())
}

/// Root of `c0 + c1 x + c2 x²` nearest to `x = 0`.
fn nearest_root(c: &[f64]) -> Option<f64> {
    let (c0, c1, c2) = (c[0], c[1], c[2]);
    if c2.abs() < 1e-12 * c1.abs().max(1e-300) {
        return (c1 != 0.0).then(|| -c0 / c1);
    }
    let disc = c1 * c1 - 4.0 * c2 * c0;
    if disc < 0.0 {
        return (c1 != 0.0).then(|| -c0 / c1);
    }
    let q = -0.5 * (c1 + c1.signum() * disc.sqrt());
    let roots = [q / c2, if q != 0.0 { c0 / q } else { f64::INFINITY }];
    roots.into_iter().min_by(|x, y| x.abs().total_cmp(&y.abs()))
}

/// Fitted `2n` for the hypothesis that `|a|^2 ≈ α (t-t₀)^{2n}` near sample
/// `j`, or `None` when the arms are too short to fit.
fn fitted_order(abs2: &[f64], j: usize, left: &[usize], right: &[usize], dt: f64, n: u32) -> Option<f64> {
    let x = |k: usize| (k as f64 - j as f64) * dt;
    let root = |k: usize| abs2[k].max(0.0).powf(0.5 / n as f64);
    // With the right arm negated, |a|^{1/n} is smooth through t₀ for any n;
    // the minimum sample itself has no definite side and is left out.
    let (rows, ys): (Vec<Vec<f64>>, Vec<f64>) = left
        .iter()
        .map(|&k| (k, 1.0))
        .chain(right.iter().map(|&k| (k, -1.0)))
        .map(|(k, sign)| (vec![1.0, x(k), x(k) * x(k)], sign * root(k)))
        .unzip();
    let t0 = nearest_root(&least_squares(&rows, &ys)?)?;
    // ln|a|^2 = c + 2n ln|t - t₀| + γ (t - t₀); γ absorbs the next zero.
    let (rows, ys): (Vec<Vec<f64>>, Vec<f64>) = left
        .iter()
        .chain(right)
        .chain(std::iter::once(&j))
        .filter(|&&k| abs2[k] > 0.0 && (x(k) - t0).abs() > 1e-9 * dt)
        .map(|&k| (vec![1.0, (x(k) - t0).abs().ln(), x(k) - t0], abs2[k].ln()))
        .unzip();
    let coeffs = if rows.len() >= 4 {
        least_squares(&rows, &ys)?
    } else {
        let rows: Vec<Vec<f64>> = rows.iter().map(|r| r[..2].to_vec()).collect();
        least_squares(&rows, &ys)?
    };
    Some(coeffs[1])
}

const HALF_WINDOW: usize = 6;
/// Minima closer than this many samples are decided jointly.
const CLUSTER_GAP: usize = 2 * HALF_WINDOW;
const MAX_CLUSTER: usize = 3;
/// Residual ratio a sign hypothesis must win by.
const DECISIVE: f64 = 4.0;

/// RMS residual of a least-squares polynomial through `(x, y)`, with `x`
/// rescaled to `[-1, 1]`.
fn poly_residual(points: &[(f64, f64)], degree: usize) -> Option<f64> {
    let span = points.iter().map(|p| p.0.abs()).fold(0.0, f64::max).max(1.0);
    let rows: Vec<Vec<f64>> = points
        .iter()
        .map(|&(x, _)| (0..=degree).map(|p| (x / span).powi(p as i32)).collect())
        .collect();
    let ys: Vec<f64> = points.iter().map(|p| p.1).collect();
    let c = least_squares(&rows, &ys)?;
    let ss: f64 = rows
        .iter()
        .zip(&ys)
        .map(|(r, y)| (r.iter().zip(&c).map(|(a, b)| a * b).sum::<f64>() - y).powi(2))
        .sum();
    Some((ss / points.len() as f64).sqrt())
}

/// Sign flips for a cluster of nearby minima on samples `lo..=hi`: the flip
/// positions (grid indices after which the sign changes) of the decisively
/// smoothest pattern, or `None` when no pattern wins.
///
/// Each minimum `j` either keeps the sign or flips it just before or just
/// after `j`; patterns are grouped by which minima flip and a group scores
/// its best placement. Near the final sample the right arm may be short or
/// empty.
fn cluster_flips(abs2: &[f64], cluster: &[usize], lo: usize, hi: usize) -> Option<Vec<usize>> {
    let (first, last) = (cluster[0], *cluster.last()?);
    let end = abs2.len() - 1;
    let from = first.saturating_sub(HALF_WINDOW).max(lo);
    let to = (last + HALF_WINDOW).min(hi);
    if first - from < 2 || (to - last < 2 && to != end) {
        return None;
    }
    let centre = (from + to) as f64 / 2.0;
    let degree = (to - from + 1).saturating_sub(3).clamp(2, 4 + cluster.len());
    let k = cluster.len();
    let mut best_by_class = vec![(f64::INFINITY, Vec::new()); 1 << k];
    for code in 0..3usize.pow(k as u32) {
        let mut flips = Vec::new();
        let mut class = 0;
        let mut c = code;
        if cluster.iter().enumerate().any(|(i, &j)| j == end && code / 3usize.pow(i as u32) % 3 == 2) {
            continue;
        }
        for (i, &j) in cluster.iter().enumerate() {
            match c % 3 {
                1 => flips.push(j - 1),
                2 => flips.push(j),
                _ => {}
            }
            if c % 3 != 0 {
                class |= 1 << i;
            }
            c /= 3;
        }
        let pts: Vec<(f64, f64)> = (from..=to)
            .map(|s| {
                let sign = if flips.iter().filter(|&&f| s > f).count() % 2 == 0 { 1.0 } else { -1.0 };
                (s as f64 - centre, sign * abs2[s].max(0.0).sqrt())
            })
            .collect();
        let res = poly_residual(&pts, degree)?;
        if res < best_by_class[class].0 {
            best_by_class[class] = (res, flips);
        }
    }
    best_by_class.sort_by(|a, b| a.0.total_cmp(&b.0));
    (best_by_class[0].0 * DECISIVE < best_by_class[1].0).then(|| best_by_class.swap_remove(0).1)
}

/// Recovers the signed amplitude from `|a(t_j)|^2`, `t_j = j·dt`.
///
/// Candidate zeros are local minima below `zero_tol`. Near a zero of order `n`,
/// `g ≈ α (t-t₀)^n` changes sign iff `n` is odd: a low-order polynomial
/// through `±√|a|^2` on a window around the minimum (never past halfway to the
/// next group of candidates) is smooth only under the right sign pattern, so
/// the pattern with the clearly smaller residual wins. Candidates closer than
/// two half-windows are decided together. Near misses and even zeros keep
/// the sign. A falling final sample below `zero_tol` is a candidate too.
/// An undecided minimum is reported with the log-log order `2n` of
/// `|a|^2 ≈ α (t-t₀)^{2n}` fitted under `n = 1`. `g(0) > 0` fixes the global
/// sign.
pub fn reconstruct_signed(abs2: &[f64], dt: f64, mu: f64, zero_tol: f64) -> Result<SignedSeries> {
    if !(dt > 0.0) {
        return Err(invalid("grid spacing must be positive"));
    }
    if abs2.len() < 3 {
        return Err(invalid("need at least three samples"));
    }
    let last = abs2.len() - 1;
    let mut minima: Vec<usize> = (1..last)
        .filter(|&j| abs2[j] < zero_tol && abs2[j] < abs2[j - 1] && abs2[j] <= abs2[j + 1])
        .collect();
    if abs2[last] < zero_tol && abs2[last] < abs2[last - 1] {
        minima.push(last);
    }
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for &j in &minima {
        match clusters.last_mut() {
            Some(c) if j - c[c.len() - 1] < CLUSTER_GAP => c.push(j),
            _ => clusters.push(vec![j]),
        }
    }

    let mut flips = Vec::new();
    for (idx, cluster) in clusters.iter().enumerate() {
        let (first, end) = (cluster[0], cluster[cluster.len() - 1]);
        let lo = if idx == 0 { 0 } else { (clusters[idx - 1].last().copied().unwrap_or(0) + first) / 2 + 1 };
        let hi = clusters.get(idx + 1).map_or(last, |nx| (end + nx[0]) / 2);
        let decided = if cluster.len() <= MAX_CLUSTER {
            cluster_flips(abs2, cluster, lo, hi)
        } else {
            None
        };
        match decided {
            Some(f) => flips.extend(f),
            None => {
                let j = first;
                let right_end = cluster.get(1).map_or(hi, |&nx| (j + nx) / 2);
                let left: Vec<usize> = (lo..j).rev().take(HALF_WINDOW).collect();
                let right: Vec<usize> = (j + 1..=right_end).take(HALF_WINDOW).collect();
                return Err(Error::UnresolvedZero {
                    t_start: left.last().copied().unwrap_or(j) as f64 * dt,
                    t_end: right.last().copied().unwrap_or(j) as f64 * dt,
                    fitted_order: fitted_order(abs2, j, &left, &right, dt, 1).unwrap_or(f64::NAN),
                });
            }
        }
    }
    flips.sort_unstable();

    let mut values = Vec::with_capacity(abs2.len());
    let mut sign = 1.0;
    let mut next = flips.iter().peekable();
    for (j, &v) in abs2.iter().enumerate() {
        values.push(sign * v.max(0.0).sqrt());
        while next.peek() == Some(&&j) {
            sign = -sign;
            next.next();
        }
    }
    Ok(SignedSeries {
        dt,
        mu,
        values,
        flips,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_seeds_differ() {
        let seeds: Vec<u64> = (0..8).map(|i| split_seed(42, i)).collect();
        for i in 0..8 {
            for j in 0..i {
                assert_ne!(seeds[i], seeds[j]);
            }
        }
        assert_eq!(split_seed(42, 3), split_seed(42, 3));
    }

    #[test]
    fn noise_spec_validation() {
        assert!(NoiseSpec { cutoff: 1.0, shots: None, seed: 0 }.validate().is_err());
        assert!(NoiseSpec { cutoff: 0.0, shots: Some(0), seed: 0 }.validate().is_err());
        assert!((NoiseSpec { cutoff: 0.0, shots: Some(10_000), seed: 0 }.sigma() - 0.01).abs() < 1e-15);
    }

    #[test]
    fn cosine_squared_recovers_cosine() {
        let dt = 0.01;
        let n = (3.0 * std::f64::consts::PI / dt) as usize;
        let abs2: Vec<f64> = (0..=n).map(|j| (j as f64 * dt).cos().powi(2)).collect();
        let g = reconstruct_signed(&abs2, dt, 0.0, 1e-3).unwrap();
        assert_eq!(g.flips.len(), 3);
        for (j, v) in g.values.iter().enumerate() {
            assert!((v - (j as f64 * dt).cos()).abs() < 0.01, "t = {}", j as f64 * dt);
        }
    }

    #[test]
    fn quartic_zero_keeps_sign() {
        let dt = 0.01;
        let abs2: Vec<f64> = (0..=200).map(|j| (j as f64 * dt - 1.0).powi(4)).collect();
        let g = reconstruct_signed(&abs2, dt, 0.0, 1e-3).unwrap();
        assert!(g.flips.is_empty());
        assert!(g.values.iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn near_miss_keeps_sign() {
        let dt = 0.01;
        let abs2: Vec<f64> = (0..=200).map(|j| (0.005 + (j as f64 * dt - 1.0).powi(2)).powi(2)).collect();
        let g = reconstruct_signed(&abs2, dt, 0.0, 1e-3).unwrap();
        assert!(g.flips.is_empty());
    }

    #[test]
    fn zero_past_the_last_sample_flips_it() {
        let dt = 0.01;
        let n = ((std::f64::consts::FRAC_PI_2 + 0.004) / dt).ceil() as usize;
        let abs2: Vec<f64> = (0..=n).map(|j| (j as f64 * dt).cos().powi(2)).collect();
        let g = reconstruct_signed(&abs2, dt, 0.0, 1e-3).unwrap();
        assert_eq!(g.flips, vec![n - 1]);
        assert!(g.values[n] < 0.0);
    }

    #[test]
    fn close_zero_pair_is_decided_jointly() {
        let dt = 0.01;
        let f = |t: f64| (t - 1.0003) * (t - 1.0251) * (2.0 + t.sin());
        let abs2: Vec<f64> = (0..=250).map(|j| f(j as f64 * dt).powi(2)).collect();
        let g = reconstruct_signed(&abs2, dt, 0.0, 1e-3).unwrap();
        assert_eq!(g.flips, vec![100, 102]);
        for (j, v) in g.values.iter().enumerate() {
            assert!((v - f(j as f64 * dt)).abs() < 1e-12, "t = {}", j as f64 * dt);
        }
    }

    #[test]
    fn fractional_order_is_unresolved() {
        let dt = 0.01;
        let abs2: Vec<f64> = (0..=200).map(|j| (j as f64 * dt - 1.005).abs().powf(3.0)).collect();
        let err = reconstruct_signed(&abs2, dt, 0.0, 1e-3).unwrap_err();
        assert!(matches!(err, Error::UnresolvedZero { .. }));
    }
}
