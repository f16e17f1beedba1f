//! Filtered estimators built from device amplitudes.
//!
//! With `P = Σ_m c_m e^{-i(H-E)t_m}`:
//!
//! * `D(E) = ⟨ψ|P|ψ⟩ = Re Σ_m c_m e^{iEt_m} a(t_m)`, the broadened local
//!   density of states,
//! * `A_δ(E) = Re⟨ψ|A P|ψ⟩ / D`, the single-filtered observable,
//! * `A'_δ(E) = ⟨ψ|P A P|ψ⟩ / ⟨ψ|P²|ψ⟩`, the double-filtered observable.

use num_complex::Complex64;

use crate::device::AmplitudeSource;
use crate::error::{invalid, Error, Result};
use crate::filter::{FilterExpansion, FilterSpec};

/// Default smallest `|D|` accepted as a denominator for exact amplitudes.
pub const EXACT_FLOOR: f64 = 1e-12;
/// Default floor for shot-noise-limited amplitudes.
pub const NOISY_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorOptions {
    pub floor: f64,
}

impl Default for EstimatorOptions {
    fn default() -> Self {
        Self { floor: EXACT_FLOOR }
    }
}

impl EstimatorOptions {
    pub fn noisy() -> Self {
        Self { floor: NOISY_FLOOR }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSummary {
    pub delta: f64,
    pub x: f64,
    pub order: u64,
    pub radius: usize,
    pub scale: f64,
}

impl From<&FilterExpansion> for GridSummary {
    fn from(e: &FilterExpansion) -> Self {
        Self {
            delta: e.spec().delta,
            x: e.spec().x,
            order: e.order(),
            radius: e.radius(),
            scale: e.scale(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EstimateResult {
    pub value: f64,
    pub raw_numerator: Complex64,
    pub raw_denominator: Complex64,
    /// Operator-norm bound on the truncation error of any filtered quantity.
    pub truncation_bound: f64,
    pub grid: GridSummary,
    /// Number of amplitudes requested from the source.
    pub amplitude_calls: usize,
}

/// `Σ_{m=-R}^{R} c_m e^{iEt_m} a(t_m)` from `a(t_0), ..., a(t_R)`, completing the
/// negative times with `a(-t) = conj a(t)`.
pub fn ldos_from_amplitudes(expansion: &FilterExpansion, amplitudes: &[Complex64], energy: f64) -> Complex64 {
    let r = expansion.radius();
    let coeffs = &expansion.coeffs()[r..];
    let times = expansion.nonnegative_times();
    let mut total = amplitudes[0] * coeffs[0];
    for m in 1..=r {
        let z = amplitudes[m] * Complex64::from_polar(1.0, energy * times[m]);
        total += 2.0 * coeffs[m] * z.re;
    }
    total
}

/// Amplitudes fetched once and reused for any number of energies.
#[derive(Debug, Clone)]
pub struct LdosSeries<'a> {
    expansion: &'a FilterExpansion,
    amplitudes: Vec<Complex64>,
}

impl<'a> LdosSeries<'a> {
    pub fn fetch<S: AmplitudeSource>(
        source: &mut S,
        state: &S::State,
        expansion: &'a FilterExpansion,
    ) -> Result<Self> {
        let amplitudes = source.amplitudes(state, expansion.nonnegative_times())?;
        Ok(Self {
            expansion,
            amplitudes,
        })
    }

    pub fn from_amplitudes(expansion: &'a FilterExpansion, amplitudes: Vec<Complex64>) -> Result<Self> {
        if amplitudes.len() != expansion.radius() + 1 {
            return Err(invalid("need one amplitude per non-negative time"));
        }
        Ok(Self {
            expansion,
            amplitudes,
        })
    }

    pub fn amplitudes(&self) -> &[Complex64] {
        &self.amplitudes
    }

    pub fn raw(&self, energy: f64) -> Complex64 {
        ldos_from_amplitudes(self.expansion, &self.amplitudes, energy)
    }

    pub fn value(&self, energy: f64) -> f64 {
        self.raw(energy).re
    }

    pub fn estimate(&self, energy: f64) -> EstimateResult {
        let raw = self.raw(energy);
        EstimateResult {
            value: raw.re,
            raw_numerator: raw,
            raw_denominator: Complex64::new(1.0, 0.0),
            truncation_bound: self.expansion.truncation_bound(),
            grid: self.expansion.into(),
            amplitude_calls: self.amplitudes.len(),
        }
    }
}

/// `D_{δ,ψ}(E)`.
pub fn ldos<S: AmplitudeSource>(
    source: &mut S,
    state: &S::State,
    energy: f64,
    expansion: &FilterExpansion,
) -> Result<EstimateResult> {
    Ok(LdosSeries::fetch(source, state, expansion)?.estimate(energy))
}

fn unresolvable(energy: f64, d: f64, floor: f64) -> Error {
    Error::UnresolvableEnergy {
        energy,
        reason: format!(
            "filtered norm {d:e} is below the floor {floor:e}; pick E with find_valid_energy"
        ),
    }
}

/// `A_δ(E) = Re⟨ψ|A P|ψ⟩ / ⟨ψ|P|ψ⟩`.
pub fn filtered_observable<S: AmplitudeSource>(
    source: &mut S,
    state: &S::State,
    obs: &S::Observable,
    energy: f64,
    expansion: &FilterExpansion,
    options: EstimatorOptions,
) -> Result<EstimateResult> {
    let series = LdosSeries::fetch(source, state, expansion)?;
    let den = series.raw(energy);
    if den.re.abs() < options.floor || den.re <= 0.0 {
        return Err(unresolvable(energy, den.re, options.floor));
    }
    let row = source.observable_amplitude_grid(state, obs, &[0.0], expansion.times())?;
    let num: Complex64 = expansion
        .coeffs()
        .iter()
        .zip(expansion.times())
        .zip(&row)
        .map(|((&c, &t), &a)| a * Complex64::from_polar(c, energy * t))
        .sum();
    Ok(EstimateResult {
        value: num.re / den.re,
        raw_numerator: num,
        raw_denominator: den,
        truncation_bound: expansion.truncation_bound(),
        grid: expansion.into(),
        amplitude_calls: series.amplitudes().len() + row.len(),
    })
}

/// Times `t_j = 2j/s` for `j = 0..=2R`, the support of the squared series.
pub fn squared_series_times(expansion: &FilterExpansion) -> Vec<f64> {
    let s = expansion.scale();
    (0..=2 * expansion.radius()).map(|j| 2.0 * j as f64 / s).collect()
}

/// `⟨ψ|P²|ψ⟩` through the convolved coefficients and amplitudes up to `t_{2R}`.
pub fn squared_norm<S: AmplitudeSource>(
    source: &mut S,
    state: &S::State,
    energy: f64,
    expansion: &FilterExpansion,
) -> Result<(Complex64, usize)> {
    let times = squared_series_times(expansion);
    let amps = source.amplitudes(state, &times)?;
    let sq = expansion.squared_coeffs();
    let r2 = 2 * expansion.radius();
    let mut total = amps[0] * sq[r2];
    for j in 1..=r2 {
        let z = amps[j] * Complex64::from_polar(1.0, energy * times[j]);
        total += 2.0 * sq[r2 + j] * z.re;
    }
    Ok((total, amps.len()))
}

/// `Σ_{m,m'} c_m c_{m'} e^{iE(t_{m'} - t_m)} a_A(t_m, t_{m'})`, i.e. `⟨ψ|P A P|ψ⟩`.
fn double_sum<S: AmplitudeSource>(
    source: &mut S,
    state: &S::State,
    obs: &S::Observable,
    energy: f64,
    expansion: &FilterExpansion,
) -> Result<(Complex64, usize)> {
    let times = expansion.times();
    let grid = source.observable_amplitude_grid(state, obs, times, times)?;
    let weights: Vec<Complex64> = expansion
        .coeffs()
        .iter()
        .zip(times)
        .map(|(&c, &t)| Complex64::from_polar(c, energy * t))
        .collect();
    let n = times.len();
    let mut total = Complex64::new(0.0, 0.0);
    for (i, wi) in weights.iter().enumerate() {
        let row: Complex64 = grid[i * n..(i + 1) * n]
            .iter()
            .zip(&weights)
            .map(|(a, wj)| a * wj)
            .sum();
        total += wi.conj() * row;
    }
    Ok((total, grid.len()))
}

/// `A'_δ(E) = ⟨ψ|P A P|ψ⟩ / ⟨ψ|P²|ψ⟩`. Costs `(2R+1)^2` two-time amplitudes.
pub fn double_filtered_observable<S: AmplitudeSource>(
    source: &mut S,
    state: &S::State,
    obs: &S::Observable,
    energy: f64,
    expansion: &FilterExpansion,
    options: EstimatorOptions,
) -> Result<EstimateResult> {
    if !source.capabilities().two_time {
        return Err(Error::Capability("two-time amplitudes"));
    }
    let (den, den_calls) = squared_norm(source, state, energy, expansion)?;
    if den.re < options.floor {
        return Err(unresolvable(energy, den.re, options.floor));
    }
    let (num, num_calls) = double_sum(source, state, obs, energy, expansion)?;
    Ok(EstimateResult {
        value: num.re / den.re,
        raw_numerator: num,
        raw_denominator: den,
        truncation_bound: expansion.truncation_bound(),
        grid: expansion.into(),
        amplitude_calls: den_calls + num_calls,
    })
}

/// `⟨ψ|P·1·P|ψ⟩` through the two-time double sum; equals [`squared_norm`].
pub fn squared_norm_direct<S: AmplitudeSource>(
    source: &mut S,
    state: &S::State,
    identity: &S::Observable,
    energy: f64,
    expansion: &FilterExpansion,
) -> Result<Complex64> {
    Ok(double_sum(source, state, identity, energy, expansion)?.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnergySearchReport {
    pub energy_mean: f64,
    pub sigma: f64,
    pub interval: (f64, f64),
    pub r: f64,
    pub slices: u64,
    pub chosen_energy: f64,
    /// `q = 2⟨ψ|P|ψ⟩`.
    pub q_at_e: f64,
    /// `n = ⟨ψ|P|ψ⟩`, compared with the threshold.
    pub n_at_e: f64,
    pub threshold: f64,
    /// `2 · threshold`, the bound expressed for `q`.
    pub q_threshold: f64,
    /// Slices evaluated before stopping.
    pub evaluated: u64,
    pub success: bool,
}

/// `¼ (δ² / (δ² + 2σ²))^{3/2}`, the guaranteed filtered norm inside a good slice.
pub fn norm_threshold(delta: f64, sigma: f64) -> f64 {
    0.25 * (delta * delta / (delta * delta + 2.0 * sigma * sigma)).powf(1.5)
}

/// `r = (3 ln[2(1 + 2σ²/δ²)])^{1/2}`.
pub fn window_radius(delta: f64, sigma: f64) -> f64 {
    (3.0 * (2.0 * (1.0 + 2.0 * sigma * sigma / (delta * delta))).ln()).sqrt()
}

/// Scans `[E_ψ - rσ, E_ψ + rσ]` in `ceil(24 N r σ/δ²)` slices, nearest to `E_ψ`
/// first, and returns the first midpoint whose filtered norm (less the
/// truncation tail) clears [`norm_threshold`]; otherwise the best midpoint
/// with `success = false`.
pub fn find_valid_energy<S: AmplitudeSource>(
    source: &mut S,
    state: &S::State,
    spec: &FilterSpec,
) -> Result<EnergySearchReport> {
    let n = source.n_sites() as f64;
    let delta = spec.delta;
    if delta > n / std::f64::consts::SQRT_2 {
        return Err(invalid(format!("δ = {delta} exceeds N/√2")));
    }
    let (mean, sigma) = source.moments(state)?;
    let expansion = if spec.order() == 0 {
        FilterExpansion::identity(*spec)
    } else {
        FilterExpansion::build(*spec)?
    };
    let series = LdosSeries::fetch(source, state, &expansion)?;
    let tail = expansion.tail_mass();
    let r = window_radius(delta, sigma);
    let threshold = norm_threshold(delta, sigma);
    let half = r * sigma;
    let slices = if sigma == 0.0 {
        1
    } else {
        (24.0 * n * r * sigma / (delta * delta)).ceil().max(1.0) as u64
    };
    let width = 2.0 * half / slices as f64;
    let midpoint = |i: u64| mean - half + (i as f64 + 0.5) * width;

    // Centre-out order: slice indices sorted by distance of their midpoint to E_ψ.
    let centre = (slices - 1) / 2;
    let order = (0..slices).map(|j| {
        let step = j.div_ceil(2);
        if slices % 2 == 1 {
            if j % 2 == 1 { centre - step } else { centre + step }
        } else if j % 2 == 0 {
            centre - step
        } else {
            centre + 1 + step
        }
    });

    let mut best = (f64::NEG_INFINITY, mean);
    let mut evaluated = 0;
    for i in order {
        let e = midpoint(i);
        let d = series.value(e);
        evaluated += 1;
        if d > best.0 {
            best = (d, e);
        }
        if d - tail >= threshold {
            return Ok(EnergySearchReport {
                energy_mean: mean,
                sigma,
                interval: (mean - half, mean + half),
                r,
                slices,
                chosen_energy: e,
                q_at_e: 2.0 * d,
                n_at_e: d,
                threshold,
                q_threshold: 2.0 * threshold,
                evaluated,
                success: true,
            });
        }
    }
    Ok(EnergySearchReport {
        energy_mean: mean,
        sigma,
        interval: (mean - half, mean + half),
        r,
        slices,
        chosen_energy: best.1,
        q_at_e: 2.0 * best.0,
        n_at_e: best.0,
        threshold,
        q_threshold: 2.0 * threshold,
        evaluated,
        success: false,
    })
}

/// Shot counts meeting a target error `ε` on `p/q` with `Δp = εq/3` and
/// `Δq = εq²/6`, requiring three standard deviations of shot noise to fit in
/// each budget.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShotPlan {
    pub delta_p: f64,
    pub delta_q: f64,
    pub shots_p: u64,
    pub shots_q: u64,
    pub shots: u64,
}

pub fn plan_shots(expansion: &FilterExpansion, epsilon: f64, q: f64) -> Result<ShotPlan> {
    if !(epsilon > 0.0 && q > 0.0) {
        return Err(invalid("ε and q must be positive"));
    }
    let r = expansion.radius();
    let c = expansion.coeffs();
    // D uses mirrored data: c_0 a_0 + 2 Σ_{m>0} c_m Re(...).
    let var_d = c[r] * c[r] + 4.0 * c[r + 1..].iter().map(|x| x * x).sum::<f64>();
    let var_p = c.iter().map(|x| x * x).sum::<f64>();
    // q = 2D and p = 2 Re⟨AP⟩; per unit shot-noise variance.
    let std_q = 2.0 * var_d.sqrt();
    let std_p = 2.0 * var_p.sqrt();
    let delta_p = epsilon * q / 3.0;
    let delta_q = epsilon * q * q / 6.0;
    let shots_for = |std: f64, budget: f64| ((3.0 * std / budget).powi(2)).ceil() as u64;
    let shots_p = shots_for(std_p, delta_p).max(1);
    let shots_q = shots_for(std_q, delta_q).max(1);
    Ok(ShotPlan {
        delta_p,
        delta_q,
        shots_p,
        shots_q,
        shots: shots_p.max(shots_q),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn threshold_closed_form() {
        assert!((norm_threshold(1.0, 1.0) - 0.25 * 3f64.powf(-1.5)).abs() < 1e-15);
        // The same bound on q = 2n.
        assert!((2.0 * norm_threshold(1.0, 1.0) - 0.0962).abs() < 1e-4);
        assert!((norm_threshold(1.0, 0.0) - 0.25).abs() < 1e-15);
        assert!((window_radius(1.0, 0.0) - (3.0 * 2f64.ln()).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn shot_plan_scales_inversely_with_epsilon_squared() {
        let spec = FilterSpec::new(1.0, 20, crate::Grid::Full).unwrap();
        let exp = FilterExpansion::build(spec).unwrap();
        let a = plan_shots(&exp, 0.1, 0.5).unwrap();
        let b = plan_shots(&exp, 0.05, 0.5).unwrap();
        assert!((b.shots as f64 / a.shots as f64 - 4.0).abs() < 0.01);
        assert!(plan_shots(&exp, 0.0, 0.5).is_err());
    }
}
