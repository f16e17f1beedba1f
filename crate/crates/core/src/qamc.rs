//! Monte Carlo over Fock states with device-supplied weights.
//!
//! Microcanonical averages sample `p` with probability `∝ D_{δ,p}(E)` and
//! average the classical eigenvalue `⟨p|A|p⟩`; canonical averages sample the
//! pair `(p, E)` on an energy grid with weight `e^{-βE} D_{δ,p}(E)`. The weights
//! are never negative, up to truncation and noise, which are clamped.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::device::{split_seed, AmplitudeSource};
use crate::error::{invalid, Error, Result};
use crate::estimators::{filtered_observable, ldos_from_amplitudes, EstimatorOptions, LdosSeries};
use crate::filter::FilterExpansion;
use crate::ising::{BlockObservable, FockState, IsingModel};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyGrid {
    pub e_min: f64,
    pub e_max: f64,
    pub step: f64,
}

impl EnergyGrid {
    pub fn new(e_min: f64, e_max: f64, step: f64) -> Result<Self> {
        if !(step > 0.0) || !(e_min < e_max) {
            return Err(invalid(format!(
                "energy grid needs step > 0 and E_min < E_max (got {e_min}..{e_max} step {step})"
            )));
        }
        Ok(Self { e_min, e_max, step })
    }

    pub fn len(&self) -> usize {
        ((self.e_max - self.e_min) / self.step + 1e-9).floor() as usize + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn energy(&self, i: usize) -> f64 {
        self.e_min + i as f64 * self.step
    }

    pub fn nearest(&self, e: f64) -> usize {
        (((e - self.e_min) / self.step).round().max(0.0) as usize).min(self.len() - 1)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McConfig {
    /// Recorded Metropolis steps after burn-in.
    pub samples: usize,
    /// Burn-in in sweeps of `N/2` proposals.
    pub burn_in: usize,
    pub seed: u64,
    /// Weights below this are treated as zero.
    pub cutoff: f64,
    pub energy_grid: Option<EnergyGrid>,
    /// Number of blocks for the blocked standard error.
    pub blocks: usize,
}

impl Default for McConfig {
    fn default() -> Self {
        Self {
            samples: 100_000,
            burn_in: 1_000,
            seed: 0,
            cutoff: 0.0,
            energy_grid: None,
            blocks: 32,
        }
    }
}

impl McConfig {
    fn validate(&self) -> Result<()> {
        if self.samples == 0 {
            return Err(invalid("need at least one sample"));
        }
        if self.blocks < 2 || self.samples < self.blocks {
            return Err(invalid("need at least two blocks and one sample per block"));
        }
        if !(self.cutoff >= 0.0) {
            return Err(invalid("cutoff must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum McFlag {
    /// Acceptance below 1e-3: the chain is effectively frozen.
    LowAcceptance,
    /// The observable is not diagonal in the Fock basis; every sample paid for
    /// a filtered estimate.
    Expensive,
    /// More than [`UNRESOLVED_LIMIT`] of the samples carried a weight `D` no
    /// larger than the truncation tail mass, so the chain was steered by
    /// truncation error rather than by the filter.
    UnresolvedWeights,
}

/// Tolerated fraction of samples whose weight is within truncation error.
pub const UNRESOLVED_LIMIT: f64 = 0.01;

#[derive(Debug, Clone, PartialEq)]
pub struct McTrace {
    pub estimate: f64,
    pub standard_error: f64,
    pub acceptance_rate: f64,
    pub samples_used: usize,
    /// Amplitude-set requests made to the source.
    pub d_evaluations: usize,
    /// Fraction of samples whose weight `D` did not exceed the truncation
    /// tail mass.
    pub unresolved_fraction: f64,
    pub flags: Vec<McFlag>,
}

impl McTrace {
    pub fn converged(&self) -> bool {
        !self.flags.contains(&McFlag::LowAcceptance) && !self.flags.contains(&McFlag::UnresolvedWeights)
    }
}

/// Block means of a series: `(mean, standard error)` from `blocks` equal blocks
/// (trailing samples that do not fill a block are dropped from the error but
/// kept in the mean).
pub fn blocked_statistics(series: &[f64], blocks: usize) -> (f64, f64) {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    let size = n / blocks;
    if size == 0 {
        return (mean, f64::INFINITY);
    }
    let means: Vec<f64> = series
        .chunks_exact(size)
        .take(blocks)
        .map(|c| c.iter().sum::<f64>() / size as f64)
        .collect();
    let bm = means.iter().sum::<f64>() / blocks as f64;
    let var = means.iter().map(|m| (m - bm).powi(2)).sum::<f64>() / (blocks - 1) as f64;
    (mean, (var / blocks as f64).sqrt())
}

/// Inverse-variance combination of independent chains.
pub fn merge_traces(traces: &[McTrace]) -> Result<McTrace> {
    if traces.is_empty() {
        return Err(invalid("nothing to merge"));
    }
    let all_exact = traces.iter().all(|t| t.standard_error == 0.0);
    let (mut wsum, mut xsum) = (0.0, 0.0);
    for t in traces {
        let w = if all_exact { 1.0 } else { t.standard_error.powi(-2) };
        if !w.is_finite() {
            return Err(invalid("a chain with zero error cannot be merged with noisy ones"));
        }
        wsum += w;
        xsum += w * t.estimate;
    }
    let samples: usize = traces.iter().map(|t| t.samples_used).sum();
    let mut flags: Vec<McFlag> = traces.iter().flat_map(|t| t.flags.clone()).collect();
    flags.sort_by_key(|f| *f as u8);
    flags.dedup();
    Ok(McTrace {
        estimate: xsum / wsum,
        standard_error: if all_exact { 0.0 } else { wsum.sqrt().recip() },
        acceptance_rate: traces
            .iter()
            .map(|t| t.acceptance_rate * t.samples_used as f64)
            .sum::<f64>()
            / samples as f64,
        samples_used: samples,
        d_evaluations: traces.iter().map(|t| t.d_evaluations).sum(),
        unresolved_fraction: traces
            .iter()
            .map(|t| t.unresolved_fraction * t.samples_used as f64)
            .sum::<f64>()
            / samples as f64,
        flags,
    })
}

/// `max(D, 0)`, or `0` below the cutoff.
pub fn sampling_weight(d: f64, cutoff: f64) -> f64 {
    if d < cutoff || d <= 0.0 {
        0.0
    } else {
        d
    }
}

/// Evaluates `A_{δ,p}(E)` per sample: the eigenvalue for diagonal observables,
/// a filtered estimate otherwise.
struct Measurer<'a> {
    obs: &'a BlockObservable,
    diagonal: bool,
}

impl Measurer<'_> {
    fn measure<S>(&self, source: &mut S, p: &FockState, e: f64, exp: &FilterExpansion) -> Result<f64>
    where
        S: AmplitudeSource<State = FockState, Observable = BlockObservable>,
    {
        if self.diagonal {
            Ok(self.obs.diagonal_value(p))
        } else {
            Ok(filtered_observable(source, p, self.obs, e, exp, EstimatorOptions { floor: 0.0 })?.value)
        }
    }
}

/// Greedy coordinate descent on `|E_p - E|` from a random Fock state.
pub fn energy_matched_state<R: Rng + ?Sized>(model: &IsingModel, energy: f64, rng: &mut R) -> FockState {
    let nb = model.n_blocks();
    let mut p = FockState::random(nb, rng);
    let mut current = model.state_energy(&p);
    loop {
        let mut improved = false;
        for k in 0..nb {
            let old = p.labels()[k];
            let base = current - model.block_energy(k, old);
            let (best, e) = (1..=4u8)
                .map(|l| (l, base + model.block_energy(k, l)))
                .min_by(|a, b| (a.1 - energy).abs().total_cmp(&(b.1 - energy).abs()))
                .unwrap();
            if (e - energy).abs() < (current - energy).abs() - 1e-12 {
                p.set_label(k, best);
                current = e;
                improved = true;
            }
        }
        if !improved {
            return p;
        }
    }
}

fn propose<R: Rng + ?Sized>(p: &FockState, rng: &mut R) -> FockState {
    let k = rng.random_range(0..p.n_blocks());
    let old = p.labels()[k];
    let mut new = rng.random_range(1..=3u8);
    if new >= old {
        new += 1;
    }
    p.with_label(k, new)
}

struct Weighted {
    state: FockState,
    amplitudes: Vec<Complex64>,
}

fn fetch<S: AmplitudeSource<State = FockState>>(
    source: &mut S,
    state: FockState,
    exp: &FilterExpansion,
    evaluations: &mut usize,
) -> Result<Weighted> {
    *evaluations += 1;
    let amplitudes = source.amplitudes(&state, exp.nonnegative_times())?;
    Ok(Weighted { state, amplitudes })
}

fn weight_at(w: &Weighted, exp: &FilterExpansion, e: f64, cutoff: f64) -> f64 {
    sampling_weight(ldos_from_amplitudes(exp, &w.amplitudes, e).re, cutoff)
}

/// Microcanonical chain that also reports each recorded state to `visit`.
pub fn metropolis_micro_visit<S, F>(
    source: &mut S,
    model: &IsingModel,
    obs: &BlockObservable,
    energy: f64,
    expansion: &FilterExpansion,
    config: &McConfig,
    mut visit: F,
) -> Result<McTrace>
where
    S: AmplitudeSource<State = FockState, Observable = BlockObservable>,
    F: FnMut(&FockState),
{
    config.validate()?;
    if obs.n_blocks() != model.n_blocks() {
        return Err(invalid("observable does not match the chain"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let measurer = Measurer {
        obs,
        diagonal: obs.is_diagonal(),
    };
    let mut tally = Tally::new(config.samples);
    let tail = expansion.tail_mass();
    let start = energy_matched_state(model, energy, &mut rng);
    let mut current = fetch(source, start, expansion, &mut tally.evaluations)?;
    let mut w = weight_at(&current, expansion, energy, config.cutoff);
    if w <= 0.0 {
        return Err(Error::ColdStart {
            weight: ldos_from_amplitudes(expansion, &current.amplitudes, energy).re,
            cutoff: config.cutoff,
        });
    }
    let burn = config.burn_in * model.n_blocks();
    let mut value = measurer.measure(source, &current.state, energy, expansion)?;
    for step in 0..burn + config.samples {
        let candidate = fetch(source, propose(&current.state, &mut rng), expansion, &mut tally.evaluations)?;
        let w_new = weight_at(&candidate, expansion, energy, config.cutoff);
        let u: f64 = rng.random();
        let accept = w_new > 0.0 && u * w < w_new;
        if accept {
            current = candidate;
            w = w_new;
            value = measurer.measure(source, &current.state, energy, expansion)?;
        }
        if step >= burn {
            tally.record(value, accept, w, tail);
            visit(&current.state);
        }
    }
    Ok(finish(tally, config, !measurer.diagonal))
}

/// Per-chain tallies handed to [`finish`].
struct Tally {
    series: Vec<f64>,
    accepted: usize,
    evaluations: usize,
    unresolved: usize,
}

impl Tally {
    fn new(capacity: usize) -> Self {
        Self {
            series: Vec::with_capacity(capacity),
            accepted: 0,
            evaluations: 0,
            unresolved: 0,
        }
    }

    fn record(&mut self, value: f64, accepted: bool, weight: f64, tail: f64) {
        self.series.push(value);
        self.accepted += accepted as usize;
        self.unresolved += (weight <= tail) as usize;
    }
}

fn finish(tally: Tally, config: &McConfig, expensive: bool) -> McTrace {
    let (estimate, standard_error) = blocked_statistics(&tally.series, config.blocks);
    let n = tally.series.len() as f64;
    let acceptance_rate = tally.accepted as f64 / n;
    let unresolved_fraction = tally.unresolved as f64 / n;
    let mut flags = Vec::new();
    if acceptance_rate < 1e-3 {
        flags.push(McFlag::LowAcceptance);
    }
    if expensive {
        flags.push(McFlag::Expensive);
    }
    if unresolved_fraction > UNRESOLVED_LIMIT {
        flags.push(McFlag::UnresolvedWeights);
    }
    McTrace {
        estimate,
        standard_error,
        acceptance_rate,
        samples_used: tally.series.len(),
        d_evaluations: tally.evaluations,
        unresolved_fraction,
        flags,
    }
}

/// Estimates `A_δ(E)` by sampling Fock states with weight `D_{δ,p}(E)`.
pub fn metropolis_micro<S>(
    source: &mut S,
    model: &IsingModel,
    obs: &BlockObservable,
    energy: f64,
    expansion: &FilterExpansion,
    config: &McConfig,
) -> Result<McTrace>
where
    S: AmplitudeSource<State = FockState, Observable = BlockObservable>,
{
    metropolis_micro_visit(source, model, obs, energy, expansion, config, |_| {})
}

/// Estimates the canonical average at `β` from a joint chain over Fock states
/// and grid energies with weight `e^{-βE} D_{δ,p}(E)`. Steps alternate between
/// a block-label flip and a ±1 energy-grid move.
pub fn metropolis_canonical<S>(
    source: &mut S,
    model: &IsingModel,
    obs: &BlockObservable,
    beta: f64,
    expansion: &FilterExpansion,
    config: &McConfig,
) -> Result<McTrace>
where
    S: AmplitudeSource<State = FockState, Observable = BlockObservable>,
{
    config.validate()?;
    let grid = config
        .energy_grid
        .ok_or_else(|| invalid("canonical sampling needs an energy grid"))?;
    if !(beta >= 0.0 && beta.is_finite()) {
        return Err(invalid("β must be a finite non-negative number"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let measurer = Measurer {
        obs,
        diagonal: obs.is_diagonal(),
    };
    let mut tally = Tally::new(config.samples);
    let tail = expansion.tail_mass();
    let start = FockState::random(model.n_blocks(), &mut rng);
    let mut level = grid.nearest(model.state_energy(&start));
    let mut current = fetch(source, start, expansion, &mut tally.evaluations)?;
    let mut w = weight_at(&current, expansion, grid.energy(level), config.cutoff);
    if w <= 0.0 {
        return Err(Error::ColdStart {
            weight: ldos_from_amplitudes(expansion, &current.amplitudes, grid.energy(level)).re,
            cutoff: config.cutoff,
        });
    }
    let burn = config.burn_in * model.n_blocks();
    let mut value = measurer.measure(source, &current.state, grid.energy(level), expansion)?;
    for step in 0..burn + config.samples {
        let accept = if step % 2 == 0 {
            let candidate = fetch(source, propose(&current.state, &mut rng), expansion, &mut tally.evaluations)?;
            let w_new = weight_at(&candidate, expansion, grid.energy(level), config.cutoff);
            let u: f64 = rng.random();
            let ok = w_new > 0.0 && u * w < w_new;
            if ok {
                current = candidate;
                w = w_new;
            }
            ok
        } else {
            let up = rng.random_bool(0.5);
            let target = if up { level + 1 } else { level.wrapping_sub(1) };
            let u: f64 = rng.random();
            if target >= grid.len() {
                false
            } else {
                let w_new = weight_at(&current, expansion, grid.energy(target), config.cutoff);
                // e^{-β(E' - E)} w'/w
                let ratio = (-beta * (grid.energy(target) - grid.energy(level))).exp() * w_new;
                let ok = w_new > 0.0 && u * w < ratio;
                if ok {
                    level = target;
                    w = w_new;
                }
                ok
            }
        };
        if accept {
            value = measurer.measure(source, &current.state, grid.energy(level), expansion)?;
        }
        if step >= burn {
            tally.record(value, accept, w, tail);
        }
    }
    Ok(finish(tally, config, !measurer.diagonal))
}

/// Runs `chains` independent chains with seeds `split_seed(config.seed, i)`,
/// each on its own source, and merges them by inverse variance.
pub fn run_chains<S, M, F>(chains: usize, threads: usize, config: &McConfig, make_source: M, run: F) -> Result<McTrace>
where
    S: AmplitudeSource,
    M: Fn(usize) -> Result<S> + Sync,
    F: Fn(&mut S, &McConfig) -> Result<McTrace> + Sync,
{
    if chains == 0 {
        return Err(invalid("need at least one chain"));
    }
    let threads = threads.clamp(1, chains);
    let one = |i: usize| -> Result<McTrace> {
        let mut source = make_source(i)?;
        let cfg = McConfig {
            seed: split_seed(config.seed, i as u64),
            ..*config
        };
        run(&mut source, &cfg)
    };
    let mut results: Vec<Option<Result<McTrace>>> = (0..chains).map(|_| None).collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = (0..threads)
            .map(|t| {
                let one = &one;
                scope.spawn(move || {
                    (t..chains)
                        .step_by(threads)
                        .map(|i| (i, one(i)))
                        .collect::<Vec<_>>()
                })
            })
            .collect();
        for h in handles {
            for (i, r) in h.join().expect("chain thread panicked") {
                results[i] = Some(r);
            }
        }
    });
    let traces: Vec<McTrace> = results
        .into_iter()
        .map(|r| r.expect("every chain ran"))
        .collect::<Result<_>>()?;
    merge_traces(&traces)
}

/// How the exhaustive sum weights each Fock state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum WeightRule {
    /// Raw `D_{δ,p}(E)`, signed; reproduces the trace quotient.
    Raw,
    /// The sampling weight `max(D, 0)` with a cutoff.
    Sampling { cutoff: f64 },
}

/// `Σ_p w_p ⟨p|A|p⟩ / Σ_p w_p` over all `4^{N/2}` Fock states, for a diagonal
/// observable. Depth-first over blocks, reusing partial amplitude products.
pub fn exhaustive_microcanonical(
    model: &IsingModel,
    obs: &BlockObservable,
    energy: f64,
    expansion: &FilterExpansion,
    rule: WeightRule,
) -> Result<f64> {
    if !obs.is_diagonal() {
        return Err(invalid("exhaustive sums need a diagonal observable"));
    }
    let nb = model.n_blocks();
    if nb > 12 {
        return Err(Error::Resource(format!("4^{nb} states is too many to enumerate")));
    }
    let times = expansion.nonnegative_times();
    let n_t = times.len();
    let table: Vec<Vec<Vec<Complex64>>> = (0..nb)
        .map(|k| {
            (1..=4u8)
                .map(|l| times.iter().map(|&t| model.block_amplitude(k, l, t).conj()).collect())
                .collect()
        })
        .collect();
    let diag: Vec<[f64; 4]> = (0..nb)
        .map(|k| std::array::from_fn(|i| obs.block(k)[(i, i)].re))
        .collect();
    let mut stack = vec![vec![Complex64::new(1.0, 0.0); n_t]; nb + 1];
    let (mut num, mut den) = (0.0, 0.0);

    fn walk(
        k: usize,
        value: f64,
        ctx: &mut (
            &[Vec<Vec<Complex64>>],
            &[[f64; 4]],
            &mut Vec<Vec<Complex64>>,
            &FilterExpansion,
            f64,
            WeightRule,
            &mut f64,
            &mut f64,
        ),
    ) {
        let nb = ctx.0.len();
        if k == nb {
            let d = ldos_from_amplitudes(ctx.3, &ctx.2[nb], ctx.4).re;
            let w = match ctx.5 {
                WeightRule::Raw => d,
                WeightRule::Sampling { cutoff } => sampling_weight(d, cutoff),
            };
            *ctx.6 += w * value;
            *ctx.7 += w;
            return;
        }
        for l in 0..4 {
            let (head, tail) = ctx.2.split_at_mut(k + 1);
            let parent = &head[k];
            let row = &ctx.0[k][l];
            for ((o, p), a) in tail[0].iter_mut().zip(parent).zip(row) {
                *o = p * a;
            }
            let v = value + ctx.1[k][l];
            walk(k + 1, v, ctx);
        }
    }

    let mut ctx = (
        table.as_slice(),
        diag.as_slice(),
        &mut stack,
        expansion,
        energy,
        rule,
        &mut num,
        &mut den,
    );
    walk(0, 0.0, &mut ctx);
    if den <= 0.0 {
        return Err(Error::UnresolvableEnergy {
            energy,
            reason: "total weight vanishes".into(),
        });
    }
    Ok(num / den)
}

/// `∫_{E₀}^{E₁} e^{-βE} D_{δ,ψ}(E) dE`, integrated term by term in closed form.
pub fn integrated_weight<S: AmplitudeSource>(
    source: &mut S,
    state: &S::State,
    beta: f64,
    expansion: &FilterExpansion,
    bounds: (f64, f64),
) -> Result<f64> {
    let (e0, e1) = bounds;
    if !(e0 < e1) {
        return Err(invalid("integration bounds must satisfy E0 < E1"));
    }
    let series = LdosSeries::fetch(source, state, expansion)?;
    let amps = series.amplitudes();
    let r = expansion.radius();
    let coeffs = &expansion.coeffs()[r..];
    let times = expansion.nonnegative_times();
    let integral = |t: f64| -> Complex64 {
        let k = Complex64::new(-beta, t);
        if k == Complex64::new(0.0, 0.0) {
            Complex64::new(e1 - e0, 0.0)
        } else {
            ((k * e1).exp() - (k * e0).exp()) / k
        }
    };
    let mut total = (amps[0] * integral(0.0)).re * coeffs[0];
    for m in 1..=r {
        // Terms ±m are complex conjugates of each other.
        total += 2.0 * coeffs[m] * (amps[m] * integral(times[m])).re;
    }
    Ok(total)
}

/// Default integration bounds `E'₀ - yδ, E'₁ + yδ`.
pub fn integration_bounds(e_lo: f64, e_hi: f64, delta: f64, y: f64) -> (f64, f64) {
    (e_lo - y * delta, e_hi + y * delta)
}
