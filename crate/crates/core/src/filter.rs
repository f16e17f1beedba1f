//! Cosine-filter expansion.
//!
//! The filter `cos^M((H - E)/s)` is expanded as a finite sum of evolution
//! operators,
//!
//! ```text
//! cos^M(X) ≈ Σ_{m=-R}^{R} c_m e^{-i 2 m X},   c_m = 2^{-M} C(M, M/2 - m),
//! ```
//!
//! so that with `X = (H - E)/s` every term is `c_m e^{iE t_m} e^{-iH t_m}` at the
//! stroboscopic time `t_m = 2m/s`. The operator-norm error of dropping `|m| > R`
//! is bounded by `2 exp(-x^2/2)` when `R = ceil(x √M)`.

use crate::error::{invalid, Result};

/// Default truncation parameter.
pub const DEFAULT_X: f64 = 3.0;

/// Time grid (equivalently, the norm scale `s` in the cosine argument).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Grid {
    /// `s = N`, valid for any Hamiltonian with spectrum inside `[-N/2, N/2]`.
    Full,
    /// `s = r √N`, adapted to a state whose energy spread is `O(√N)`.
    Optimized { r: f64 },
    /// Explicit scale, for Hamiltonians normalised differently.
    Scaled { scale: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterSpec {
    pub delta: f64,
    pub x: f64,
    pub grid: Grid,
    pub n_sites: usize,
}

impl FilterSpec {
    pub fn new(delta: f64, n_sites: usize, grid: Grid) -> Result<Self> {
        Self::with_x(delta, DEFAULT_X, n_sites, grid)
    }

    pub fn with_x(delta: f64, x: f64, n_sites: usize, grid: Grid) -> Result<Self> {
        if !(delta > 0.0 && delta.is_finite()) {
            return Err(invalid(format!("filter width must be positive, got {delta}")));
        }
        if !(x > 0.0 && x.is_finite()) {
            return Err(invalid(format!("truncation parameter must be positive, got {x}")));
        }
        if n_sites < 2 {
            return Err(invalid(format!("need at least 2 sites, got {n_sites}")));
        }
        match grid {
            Grid::Optimized { r } if !(r > 0.0 && r.is_finite()) => {
                return Err(invalid(format!("grid scale r must be positive, got {r}")))
            }
            Grid::Scaled { scale } if !(scale > 0.0 && scale.is_finite()) => {
                return Err(invalid(format!("norm scale must be positive, got {scale}")))
            }
            _ => {}
        }
        Ok(Self {
            delta,
            x,
            grid,
            n_sites,
        })
    }

    /// Norm scale `s` dividing `H - E` inside the cosine.
    pub fn exponent_scale(&self) -> f64 {
        match self.grid {
            Grid::Full => self.n_sites as f64,
            Grid::Optimized { r } => r * (self.n_sites as f64).sqrt(),
            Grid::Scaled { scale } => scale,
        }
    }

    /// Filter exponent `M`: the nearest even integer to `(s/δ)^2`.
    pub fn order(&self) -> u64 {
        let s = self.exponent_scale();
        nearest_even((s / self.delta).powi(2))
    }

    /// Truncation radius `ceil(x √M)` before clamping to the support `M/2`.
    pub fn nominal_radius(&self) -> u64 {
        let v = self.x * (self.order() as f64).sqrt();
        // Absorb the last-ulp noise of products like 3 * sqrt(1e6).
        (v * (1.0 - 1e-12)).ceil() as u64
    }
}

/// Nearest even integer; exact ties (odd integers) round up.
pub fn nearest_even(v: f64) -> u64 {
    assert!(v >= 0.0 && v.is_finite(), "nearest_even needs a finite non-negative value");
    2 * (v / 2.0 + 0.5).floor() as u64
}

/// Operator-norm error bound `2 exp(-x^2/2)` of the truncated expansion.
pub fn truncation_error_bound(x: f64) -> f64 {
    2.0 * (-x * x / 2.0).exp()
}

/// `f_M(x) = exp(-M x^2 / 2) - cos^M(x)`, the gap between the Gaussian and
/// the cosine filter.
pub fn gaussian_cos_gap(order: u64, x: f64) -> f64 {
    let m = order as f64;
    let a = -m * x * x / 2.0;
    if x.abs() < std::f64::consts::FRAC_PI_2 {
        // e^a (1 - e^{b-a}) with b = M ln cos x.
        -a.exp() * (m * ln_cos_excess(x)).exp_m1()
    } else {
        a.exp() - cosine_power(x, order)
    }
}

/// `ln cos x + x²/2`, accurate where the two terms nearly cancel.
fn ln_cos_excess(x: f64) -> f64 {
    if x.abs() < 0.2 {
        // -Σ_{n≥2} 2^{2n-1}(2^{2n}-1)|B_{2n}| x^{2n} / (n (2n)!)
        const BERNOULLI: [f64; 6] = [1.0 / 30.0, 1.0 / 42.0, 1.0 / 30.0, 5.0 / 66.0, 691.0 / 2730.0, 7.0 / 6.0];
        let x2 = x * x;
        let mut factorial = 24.0;
        let mut power = x2 * x2;
        let mut sum = 0.0;
        for (i, b) in BERNOULLI.iter().enumerate() {
            let n = i as f64 + 2.0;
            let four_n = 2f64.powi(2 * n as i32);
            sum += four_n / 2.0 * (four_n - 1.0) * b * power / (n * factorial);
            factorial *= (2.0 * n + 1.0) * (2.0 * n + 2.0);
            power *= x2;
        }
        -sum
    } else {
        let half = (x / 2.0).sin();
        (-2.0 * half * half).ln_1p() + x * x / 2.0
    }
}

/// `cos^M(x)` for even `M`, computed without integer-overflowing `powi`.
pub fn cosine_power(x: f64, order: u64) -> f64 {
    if order == 0 {
        return 1.0;
    }
    let c = x.cos();
    if order <= i32::MAX as u64 {
        c.powi(order as i32)
    } else {
        let mag = c.abs().powf(order as f64);
        if c < 0.0 && order % 2 == 1 {
            -mag
        } else {
            mag
        }
    }
}

/// `ln |cos^M(x)|`; `-inf` where the cosine vanishes.
pub fn ln_cosine_power(x: f64, order: u64) -> f64 {
    if order == 0 {
        return 0.0;
    }
    order as f64 * x.cos().abs().ln()
}

/// `ln(2^{-2n} C(2n, n))`.
fn ln_central_coefficient(n: u64) -> f64 {
    if n < 32 {
        let mut prod = 1.0f64;
        for j in 1..=n {
            prod *= (2 * j - 1) as f64 / (2 * j) as f64;
        }
        prod.ln()
    } else {
        let n = n as f64;
        let n2 = n * n;
        -0.5 * (std::f64::consts::PI * n).ln() - 1.0 / (8.0 * n)
            + 1.0 / (192.0 * n * n2)
            - 1.0 / (640.0 * n * n2 * n2)
            + 17.0 / (14336.0 * n * n2 * n2 * n2)
    }
}

/// Walks `ln c_m` outward from the centre for `m = 0, 1, ...`.
struct LogCoefficients {
    half: u64,
    m: u64,
    ln_c: f64,
}

impl LogCoefficients {
    fn new(order: u64) -> Self {
        let half = order / 2;
        Self {
            half,
            m: 0,
            ln_c: ln_central_coefficient(half),
        }
    }
}

impl Iterator for LogCoefficients {
    type Item = (u64, f64);

    fn next(&mut self) -> Option<(u64, f64)> {
        if self.m > self.half {
            return None;
        }
        let item = (self.m, self.ln_c);
        let j = self.m as f64;
        let n = self.half as f64;
        if self.m < self.half {
            self.ln_c += (-(2.0 * j + 1.0) / (n + j + 1.0)).ln_1p();
        }
        self.m += 1;
        Some(item)
    }
}

/// `c_m = 2^{-M} C(M, M/2 - m)` for `m = -R..=R`, index `m + R`.
///
/// Evaluated in the log domain from the central term outward, so it stays
/// finite and accurate for `M` in the millions.
pub fn binomial_coefficients(order: u64, radius: u64) -> Result<Vec<f64>> {
    if order % 2 != 0 {
        return Err(invalid(format!("filter order must be even, got {order}")));
    }
    if radius > order / 2 {
        return Err(invalid(format!(
            "truncation radius {radius} exceeds the support M/2 = {}",
            order / 2
        )));
    }
    let r = radius as usize;
    let mut coeffs = vec![0.0; 2 * r + 1];
    for (m, ln_c) in LogCoefficients::new(order).take(r + 1) {
        let c = ln_c.exp();
        coeffs[r + m as usize] = c;
        coeffs[r - m as usize] = c;
    }
    Ok(coeffs)
}

/// Mass `Σ_{|m| > R} c_m` dropped by truncating at `radius`.
fn tail_mass(order: u64, radius: u64) -> f64 {
    let mut tail = 0.0;
    for (_, ln_c) in LogCoefficients::new(order).skip(radius as usize + 1) {
        let c = ln_c.exp();
        if c == 0.0 {
            break;
        }
        tail += 2.0 * c;
    }
    tail
}

/// Positive-time measurement count and longest evolution time, as planned from
/// the nominal radius.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementPlan {
    pub positive_times: u64,
    pub max_time: f64,
}

/// Coefficients `c_m` paired with times `t_m`, `m = -R..=R`.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterExpansion {
    spec: FilterSpec,
    order: u64,
    radius: usize,
    coeffs: Vec<f64>,
    times: Vec<f64>,
    tail: f64,
}

impl FilterExpansion {
    pub fn build(spec: FilterSpec) -> Result<Self> {
        let order = spec.order();
        if order == 0 {
            return Err(invalid(format!(
                "filter order rounds to zero: δ = {} is too wide for scale {}",
                spec.delta,
                spec.exponent_scale()
            )));
        }
        let radius = spec.nominal_radius().min(order / 2);
        Self::from_parts(spec, order, radius)
    }

    /// The `M = 0` expansion (`P = 1`), the limit of infinitely wide filters.
    pub fn identity(spec: FilterSpec) -> Self {
        Self::from_parts(spec, 0, 0).expect("zero order is always valid")
    }

    fn from_parts(spec: FilterSpec, order: u64, radius: u64) -> Result<Self> {
        let coeffs = binomial_coefficients(order, radius)?;
        let scale = spec.exponent_scale();
        let r = radius as i64;
        let times = (-r..=r).map(|m| 2.0 * m as f64 / scale).collect();
        Ok(Self {
            spec,
            order,
            radius: radius as usize,
            coeffs,
            times,
            tail: tail_mass(order, radius),
        })
    }

    pub fn spec(&self) -> &FilterSpec {
        &self.spec
    }

    pub fn order(&self) -> u64 {
        self.order
    }

    /// Effective radius `R` (nominal radius clamped to `M/2`).
    pub fn radius(&self) -> usize {
        self.radius
    }

    pub fn scale(&self) -> f64 {
        self.spec.exponent_scale()
    }

    /// `c_m` for `m = -R..=R` at index `m + R`.
    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    /// `t_m` for `m = -R..=R` at index `m + R`.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn coefficient(&self, m: i64) -> f64 {
        self.coeffs[(m + self.radius as i64) as usize]
    }

    pub fn time(&self, m: i64) -> f64 {
        self.times[(m + self.radius as i64) as usize]
    }

    /// Times `t_0, t_1, ..., t_R`.
    pub fn nonnegative_times(&self) -> &[f64] {
        &self.times[self.radius..]
    }

    /// Longest evolution time actually used, `t_R = 2R/s`.
    pub fn max_time(&self) -> f64 {
        2.0 * self.radius as f64 / self.scale()
    }

    pub fn measurement_plan(&self) -> MeasurementPlan {
        let nominal = if self.order == 0 {
            0
        } else {
            self.spec.nominal_radius()
        };
        MeasurementPlan {
            positive_times: nominal,
            max_time: 2.0 * nominal as f64 / self.scale(),
        }
    }

    /// Exact coefficient mass dropped by truncation; bounds the error of any
    /// filtered amplitude built from `|a(t)| <= 1` data.
    pub fn tail_mass(&self) -> f64 {
        self.tail
    }

    pub fn truncation_bound(&self) -> f64 {
        truncation_error_bound(self.spec.x)
    }

    /// The truncated series evaluated on a scalar energy offset `e - E`:
    /// `Σ c_m e^{-i(e-E) t_m}` (real by symmetry).
    pub fn scalar_filter(&self, offset: f64) -> f64 {
        let r = self.radius;
        let mut acc = self.coeffs[r];
        for m in 1..=r {
            acc += 2.0 * self.coeffs[r + m] * (offset * self.times[r + m]).cos();
        }
        acc
    }

    /// The untruncated filter `cos^M(offset / s)`.
    pub fn exact_filter(&self, offset: f64) -> f64 {
        cosine_power(offset / self.scale(), self.order)
    }

    /// Coefficients of the squared truncated series, `C_j = Σ_m c_m c_{j-m}`
    /// for `j = -2R..=2R` at index `j + 2R`. They multiply `e^{-i 2 j X}`, i.e.
    /// the same time step extended to `t_{±2R}`.
    pub fn squared_coeffs(&self) -> Vec<f64> {
        let n = self.coeffs.len();
        let mut out = vec![0.0; 2 * n - 1];
        for (i, &a) in self.coeffs.iter().enumerate() {
            for (j, &b) in self.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn excess_series_meets_direct_form() {
        for x in [0.15, 0.199, 0.2] {
            let half = (x / 2.0f64).sin();
            let direct = (-2.0 * half * half).ln_1p() + x * x / 2.0;
            assert!((ln_cos_excess(x) - direct).abs() < 1e-10 * direct.abs());
        }
        let v = ln_cos_excess(1e-3);
        assert!((v + 1e-12 / 12.0 + 1e-18 / 45.0).abs() < 1e-26, "{v:e}");
    }

    #[test]
    fn small_orders_match_binomials() {
        let c = binomial_coefficients(2, 1).unwrap();
        assert_eq!(c.len(), 3);
        for (got, want) in c.iter().zip([0.25, 0.5, 0.25]) {
            assert!((got - want).abs() < 1e-15);
        }
        let c = binomial_coefficients(4, 2).unwrap();
        for (got, want) in c.iter().zip([1.0 / 16.0, 0.25, 0.375, 0.25, 1.0 / 16.0]) {
            assert!((got - want).abs() < 1e-15);
        }
    }

    #[test]
    fn rejects_odd_order_and_wide_radius() {
        assert!(binomial_coefficients(3, 1).is_err());
        assert!(binomial_coefficients(4, 3).is_err());
        assert_eq!(binomial_coefficients(0, 0).unwrap(), vec![1.0]);
    }

    #[test]
    fn nearest_even_rounding() {
        assert_eq!(nearest_even(8.9), 8);
        assert_eq!(nearest_even(9.0), 10);
        assert_eq!(nearest_even(7.0), 8);
        assert_eq!(nearest_even(10000.0), 10000);
        assert_eq!(nearest_even(0.4), 0);
        assert_eq!(nearest_even(1.1), 2);
    }

    #[test]
    fn truncation_bound_values() {
        assert!((truncation_error_bound(3.0) - 0.022218).abs() < 1e-6);
        assert_eq!(truncation_error_bound(0.0), 2.0);
        assert!((truncation_error_bound(5.0) - 7.4533e-6).abs() < 1e-9);
    }

    #[test]
    fn optimized_grid_measurement_counts() {
        let narrow = FilterSpec::new(0.1, 100, Grid::Optimized { r: 0.4 }).unwrap();
        let exp = FilterExpansion::build(narrow).unwrap();
        assert_eq!(exp.order(), 1600);
        assert_eq!(exp.radius(), 120);
        assert_eq!(exp.times().len() - 1, 240);
        assert!((exp.max_time() - 60.0).abs() < 1e-12);

        let wide = FilterSpec::new(1.0, 100, Grid::Optimized { r: 0.4 }).unwrap();
        let exp = FilterExpansion::build(wide).unwrap();
        let plan = exp.measurement_plan();
        assert_eq!(plan.positive_times, 12);
        assert!((plan.max_time - 6.0).abs() < 1e-12);
        // M = 16 supports only |m| <= 8; the clamped series is exact.
        assert_eq!(exp.radius(), 8);
        assert_eq!(exp.tail_mass(), 0.0);
    }

    #[test]
    fn full_grid_radius_and_times() {
        let spec = FilterSpec::new(0.1, 100, Grid::Full).unwrap();
        let exp = FilterExpansion::build(spec).unwrap();
        assert_eq!(exp.order(), 1_000_000);
        assert_eq!(exp.radius(), 3000);
        assert!((exp.time(7) - 0.14).abs() < 1e-15);
        assert_eq!(exp.time(0), 0.0);
        assert_eq!(exp.time(-5), -exp.time(5));
    }

    #[test]
    fn zero_order_is_rejected_but_identity_exists() {
        let spec = FilterSpec::new(1e3, 4, Grid::Full).unwrap();
        assert!(FilterExpansion::build(spec).is_err());
        let id = FilterExpansion::identity(spec);
        assert_eq!(id.coeffs(), &[1.0]);
        assert_eq!(id.scalar_filter(12.3), 1.0);
    }

    #[test]
    fn tail_mass_matches_complement() {
        let spec = FilterSpec::new(1.0, 30, Grid::Full).unwrap();
        let exp = FilterExpansion::build(spec).unwrap();
        let kept: f64 = exp.coeffs().iter().sum();
        assert!((kept + exp.tail_mass() - 1.0).abs() < 1e-13);
        assert!(exp.tail_mass() <= exp.truncation_bound());
    }

    #[test]
    fn squared_series_is_convolution() {
        let spec = FilterSpec::new(1.0, 6, Grid::Full).unwrap();
        let exp = FilterExpansion::build(spec).unwrap();
        let sq = exp.squared_coeffs();
        let r = exp.radius() as i64;
        for offset in [0.0, 0.7, -2.3] {
            let single = exp.scalar_filter(offset);
            let mut double = 0.0;
            for j in -2 * r..=2 * r {
                double += sq[(j + 2 * r) as usize] * (offset * 2.0 * j as f64 / exp.scale()).cos();
            }
            assert!((double - single * single).abs() < 1e-13);
        }
    }
}
