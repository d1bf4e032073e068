//! Probability densities on uniform grids and the information functionals
//! built on them: differential entropy, KL divergence, Fisher information,
//! variance, tail variance, scaled convolution and the Ornstein-Uhlenbeck
//! flow toward the standard Gaussian.
//!
//! Conventions used throughout:
//! - all integrals are trapezoidal sums on the grid;
//! - logarithms are natural, entropies in nats;
//! - `0 * log 0 = 0`, and densities inside logarithms are floored at
//!   [`DENSITY_FLOOR`];
//! - every returned density is renormalized to unit trapezoidal mass within
//!   [`EPS_NORM`] and trimmed where it falls below [`TRIM_REL`] times its
//!   maximum.

use crate::error::{Error, Result};
use crate::fft;
use crate::rng::Stream;
use serde::{Deserialize, Serialize};
use std::io::{BufRead, Write};

/// Permitted deviation of the trapezoidal mass from 1.
pub const EPS_NORM: f64 = 1e-6;
/// Floor applied to density values inside logarithms and ratios.
pub const DENSITY_FLOOR: f64 = 1e-300;
/// Relative trim threshold for density supports.
pub const TRIM_REL: f64 = 1e-14;
/// Hard cap on grid sizes produced by convolutions.
pub const MAX_POINTS: usize = 4096;
/// Minimum number of grid points in a valid density.
pub const MIN_POINTS: usize = 16;

/// 0.5 * log(2 pi e), the entropy of the standard Gaussian.
pub fn gaussian_entropy(variance: f64) -> f64 {
    0.5 * (std::f64::consts::TAU * std::f64::consts::E * variance).ln()
}

// ---------------------------------------------------------------------------
// Specs
// ---------------------------------------------------------------------------

/// Mean and variance of one Gaussian component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianSpec {
    pub mean: f64,
    pub variance: f64,
}

impl GaussianSpec {
    pub fn new(mean: f64, variance: f64) -> Result<Self> {
        if !(variance > 0.0) || !variance.is_finite() || !mean.is_finite() {
            return Err(Error::invalid_parameter(format!(
                "Gaussian requires finite mean and variance > 0, got mean {mean}, variance {variance}"
            )));
        }
        Ok(GaussianSpec { mean, variance })
    }

    pub fn pdf(&self, x: f64) -> f64 {
        let d = x - self.mean;
        (-(d * d) / (2.0 * self.variance)).exp() / (std::f64::consts::TAU * self.variance).sqrt()
    }
}

/// A finite Gaussian mixture plus an independent Gaussian perturbation of
/// variance `noise_variance`. The resulting law is the mixture with each
/// component variance widened by the noise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureSpec {
    pub components: Vec<(f64, GaussianSpec)>,
    pub noise_variance: f64,
}

impl MixtureSpec {
    pub fn new(components: Vec<(f64, GaussianSpec)>, noise_variance: f64) -> Result<Self> {
        if components.is_empty() {
            return Err(Error::invalid_parameter("mixture needs at least one component"));
        }
        if !(noise_variance > 0.0) || !noise_variance.is_finite() {
            return Err(Error::invalid_parameter(format!(
                "noise variance must be > 0, got {noise_variance}"
            )));
        }
        let mut total = 0.0;
        for &(w, _) in &components {
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::invalid_parameter(format!("weights must be > 0, got {w}")));
            }
            total += w;
        }
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid_parameter(format!(
                "weights must sum to 1, got {total}"
            )));
        }
        Ok(MixtureSpec { components, noise_variance })
    }

    /// Symmetric two-component mixture at +-`offset` with equal component
    /// variance, plus noise. The workhorse non-Gaussian source.
    pub fn symmetric_bimodal(offset: f64, component_variance: f64, noise_variance: f64) -> Result<Self> {
        MixtureSpec::new(
            vec![
                (0.5, GaussianSpec::new(-offset, component_variance)?),
                (0.5, GaussianSpec::new(offset, component_variance)?),
            ],
            noise_variance,
        )
    }

    pub fn single(variance: f64, noise_variance: f64) -> Result<Self> {
        MixtureSpec::new(vec![(1.0, GaussianSpec::new(0.0, variance)?)], noise_variance)
    }

    /// Exact mean of the law.
    pub fn mean(&self) -> f64 {
        self.components.iter().map(|(w, g)| w * g.mean).sum()
    }

    /// Exact variance of the law (component spread plus noise).
    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.components
            .iter()
            .map(|(w, g)| w * (g.variance + self.noise_variance + (g.mean - m) * (g.mean - m)))
            .sum()
    }

    pub fn pdf(&self, x: f64) -> f64 {
        self.components
            .iter()
            .map(|(w, g)| {
                let v = g.variance + self.noise_variance;
                let d = x - g.mean;
                w * (-(d * d) / (2.0 * v)).exp() / (std::f64::consts::TAU * v).sqrt()
            })
            .sum()
    }
}

// ---------------------------------------------------------------------------
// GridDensity
// ---------------------------------------------------------------------------

/// A probability density sampled on a uniform grid `x_i = lo + i * dx`.
///
/// Values are nonnegative and the trapezoidal mass is 1 within [`EPS_NORM`].
/// Instances are immutable; operations return new densities.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GridDensity {
    lo: f64,
    dx: f64,
    values: Vec<f64>,
}

#[derive(Deserialize)]
struct GridDensityRaw {
    lo: f64,
    dx: f64,
    values: Vec<f64>,
}

impl<'de> Deserialize<'de> for GridDensity {
    fn deserialize<D>(deserializer: D) -> std::result::Result<Self, D::Error>
    where
        D: serde::Deserializer<'de>,
    {
        let raw = GridDensityRaw::deserialize(deserializer)?;
        GridDensity::new(raw.lo, raw.dx, raw.values).map_err(serde::de::Error::custom)
    }
}

impl GridDensity {
    /// Validating constructor: values must already be normalized.
    pub fn new(lo: f64, dx: f64, values: Vec<f64>) -> Result<Self> {
        if !(dx > 0.0) || !dx.is_finite() || !lo.is_finite() {
            return Err(Error::invalid_parameter(format!("bad grid: lo {lo}, dx {dx}")));
        }
        if values.len() < MIN_POINTS {
            return Err(Error::invalid_parameter(format!(
                "grid needs at least {MIN_POINTS} points, got {}",
                values.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(Error::invalid_input("density values must be finite and >= 0"));
        }
        let d = GridDensity { lo, dx, values };
        let mass = d.mass();
        if (mass - 1.0).abs() > EPS_NORM {
            return Err(Error::invalid_input(format!(
                "density mass {mass} outside 1 +- {EPS_NORM}"
            )));
        }
        Ok(d)
    }

    /// Rescale arbitrary nonnegative values to unit mass.
    pub fn from_unnormalized(lo: f64, dx: f64, mut values: Vec<f64>) -> Result<Self> {
        if !(dx > 0.0) || !dx.is_finite() || !lo.is_finite() {
            return Err(Error::invalid_parameter(format!("bad grid: lo {lo}, dx {dx}")));
        }
        if values.len() < MIN_POINTS {
            return Err(Error::invalid_parameter(format!(
                "grid needs at least {MIN_POINTS} points, got {}",
                values.len()
            )));
        }
        for v in values.iter_mut() {
            if !v.is_finite() {
                return Err(Error::invalid_input("density values must be finite"));
            }
            if *v < 0.0 {
                *v = 0.0; // clamp FFT ringing
            }
        }
        let mass = trapezoid(dx, &values);
        if !(mass > 0.0) || !mass.is_finite() {
            return Err(Error::invalid_input(format!("cannot normalize mass {mass}")));
        }
        let inv = 1.0 / mass;
        for v in values.iter_mut() {
            *v *= inv;
        }
        Ok(GridDensity { lo, dx, values })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    pub fn hi(&self) -> f64 {
        self.lo + self.dx * (self.values.len() - 1) as f64
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn x(&self, i: usize) -> f64 {
        self.lo + self.dx * i as f64
    }

    fn mass(&self) -> f64 {
        trapezoid(self.dx, &self.values)
    }

    /// Linear interpolation; zero outside the support.
    pub fn eval(&self, x: f64) -> f64 {
        let t = (x - self.lo) / self.dx;
        if t < 0.0 || t > (self.values.len() - 1) as f64 {
            return 0.0;
        }
        let i = (t as usize).min(self.values.len() - 2);
        let frac = t - i as f64;
        self.values[i] * (1.0 - frac) + self.values[i + 1] * frac
    }

    /// Values of this density sampled on another uniform grid.
    fn resample_values(&self, lo: f64, dx: f64, n: usize) -> Vec<f64> {
        (0..n).map(|i| self.eval(lo + dx * i as f64)).collect()
    }

    // -- moments ------------------------------------------------------------

    pub fn mean(&self) -> f64 {
        let terms: Vec<f64> = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| self.x(i) * v)
            .collect();
        trapezoid(self.dx, &terms)
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        let terms: Vec<f64> = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let d = self.x(i) - m;
                d * d * v
            })
            .collect();
        trapezoid(self.dx, &terms)
    }

    pub fn fourth_central_moment(&self) -> f64 {
        let m = self.mean();
        let terms: Vec<f64> = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let d = self.x(i) - m;
                d * d * d * d * v
            })
            .collect();
        trapezoid(self.dx, &terms)
    }

    // -- information functionals ---------------------------------------------

    /// Differential entropy in nats.
    pub fn entropy(&self) -> f64 {
        let terms: Vec<f64> = self
            .values
            .iter()
            .map(|&v| if v > DENSITY_FLOOR { -v * v.ln() } else { 0.0 })
            .collect();
        trapezoid(self.dx, &terms)
    }

    /// Fisher information via `4 * integral((sqrt(f)')^2)`, central
    /// differences on the square root; bounded integrand where f vanishes.
    pub fn fisher_information(&self) -> f64 {
        let n = self.values.len();
        let s: Vec<f64> = self.values.iter().map(|&v| v.sqrt()).collect();
        let mut deriv = vec![0.0; n];
        deriv[0] = (s[1] - s[0]) / self.dx;
        deriv[n - 1] = (s[n - 1] - s[n - 2]) / self.dx;
        let inv2 = 1.0 / (2.0 * self.dx);
        for i in 1..n - 1 {
            deriv[i] = (s[i + 1] - s[i - 1]) * inv2;
        }
        let terms: Vec<f64> = deriv.iter().map(|&d| d * d).collect();
        4.0 * trapezoid(self.dx, &terms)
    }

    /// Entropy gap to the moment-matched Gaussian:
    /// `0.5 log(2 pi e V) - h`, which equals `KL(f || matched Gaussian)`.
    pub fn gaussianity_gap(&self) -> Result<f64> {
        let v = self.variance();
        if !(v > 0.0) {
            return Err(Error::invalid_input(format!("degenerate variance {v}")));
        }
        Ok(gaussian_entropy(v) - self.entropy())
    }

    /// Second moment restricted to `|X - EX| >= r`.
    pub fn tail_variance(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return Err(Error::invalid_parameter(format!("tail radius must be >= 0, got {r}")));
        }
        let m = self.mean();
        let w: Vec<f64> = self
            .values
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let d = self.x(i) - m;
                d * d * v
            })
            .collect();
        let total = trapezoid(self.dx, &w);
        let inner = partial_trapezoid(self.lo, self.dx, &w, m - r, m + r);
        Ok((total - inner).max(0.0))
    }

    /// Moment-matched Gaussian evaluated analytically on this grid, extended
    /// (grid-aligned) to cover mean +- 8 sigma so that no mass is lost. The
    /// alignment keeps `kl_divergence(self, matched)` free of interpolation,
    /// which is what makes the gap identity hold to 1e-6 and better.
    pub fn matched_gaussian(&self) -> Result<GridDensity> {
        let v = self.variance();
        if !(v > 0.0) {
            return Err(Error::invalid_input(format!("degenerate variance {v}")));
        }
        let m = self.mean();
        let sd = v.sqrt();
        let spec = GaussianSpec { mean: m, variance: v };
        let want_lo = (m - 8.0 * sd).min(self.lo);
        let want_hi = (m + 8.0 * sd).max(self.hi());
        let ext_left = ((self.lo - want_lo) / self.dx).ceil().max(0.0) as usize;
        let ext_right = ((want_hi - self.hi()) / self.dx).ceil().max(0.0) as usize;
        let lo = self.lo - ext_left as f64 * self.dx;
        let n = self.values.len() + ext_left + ext_right;
        let values: Vec<f64> = (0..n).map(|i| spec.pdf(lo + i as f64 * self.dx)).collect();
        GridDensity::new(lo, self.dx, values)
    }

    /// Density of `-X`. Pure index reversal: entropy is preserved exactly.
    pub fn reflect(&self) -> GridDensity {
        let mut values = self.values.clone();
        values.reverse();
        GridDensity { lo: -self.hi(), dx: self.dx, values }
    }

    /// Ornstein-Uhlenbeck flow at time `t > 0`: the law of
    /// `e^{-t} X + sqrt(1 - e^{-2t}) G`, i.e. `X *_{e^{-t}} G`.
    pub fn ou_flow(&self, t: f64) -> Result<GridDensity> {
        if !(t > 0.0) || !t.is_finite() {
            return Err(Error::invalid_parameter(format!("flow time must be > 0, got {t}")));
        }
        let lambda = (-t).exp();
        let shrink = (1.0 - lambda * lambda).sqrt();
        // Pick the Gaussian grid so that after scaling by sqrt(1-e^{-2t}) its
        // spacing matches the scaled input's; avoids needless refinement.
        let target_dx = (self.dx * lambda / shrink).min(16.0 / 255.0);
        let pts = ((16.0 / target_dx).ceil() as usize + 1).clamp(MIN_POINTS, MAX_POINTS);
        let g = make_gaussian(GaussianSpec { mean: 0.0, variance: 1.0 }, 8.0, pts)?;
        scaled_convolve(self, &g, lambda)
    }

    // -- sampling -------------------------------------------------------------

    /// Precompute the CDF for repeated inverse-CDF draws.
    pub fn sampler(&self) -> DensitySampler<'_> {
        let n = self.values.len();
        let mut cdf = vec![0.0; n];
        for i in 1..n {
            cdf[i] = cdf[i - 1] + 0.5 * self.dx * (self.values[i - 1] + self.values[i]);
        }
        let total = cdf[n - 1];
        for c in cdf.iter_mut() {
            *c /= total;
        }
        DensitySampler { density: self, cdf }
    }

    /// Deterministic inverse-CDF sampling; linear interpolation inside cells.
    pub fn sample(&self, rng: &mut Stream, count: usize) -> Vec<f64> {
        let s = self.sampler();
        (0..count).map(|_| s.sample_at(rng.next_unit())).collect()
    }

    // -- serialization ---------------------------------------------------------

    /// CSV with header `x,density`, one row per grid point.
    pub fn write_csv<W: Write>(&self, mut w: W) -> Result<()> {
        writeln!(w, "x,density")?;
        for (i, v) in self.values.iter().enumerate() {
            writeln!(w, "{},{}", self.x(i), v)?;
        }
        Ok(())
    }

    /// Parse the `x,density` CSV form; the grid must be uniform.
    pub fn read_csv<R: BufRead>(r: R) -> Result<GridDensity> {
        let mut xs = Vec::new();
        let mut vs = Vec::new();
        for (lineno, line) in r.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line.starts_with('x')) {
                continue;
            }
            let mut parts = line.split(',');
            let x: f64 = parts
                .next()
                .ok_or_else(|| Error::invalid_input(format!("line {}: missing x", lineno + 1)))?
                .trim()
                .parse()
                .map_err(|e| Error::invalid_input(format!("line {}: {e}", lineno + 1)))?;
            let v: f64 = parts
                .next()
                .ok_or_else(|| Error::invalid_input(format!("line {}: missing density", lineno + 1)))?
                .trim()
                .parse()
                .map_err(|e| Error::invalid_input(format!("line {}: {e}", lineno + 1)))?;
            xs.push(x);
            vs.push(v);
        }
        if xs.len() < MIN_POINTS {
            return Err(Error::invalid_input("too few rows for a density"));
        }
        let dx = (xs[xs.len() - 1] - xs[0]) / (xs.len() - 1) as f64;
        for i in 1..xs.len() {
            if ((xs[i] - xs[i - 1]) - dx).abs() > 1e-9 * dx.abs().max(1.0) {
                return Err(Error::invalid_input("grid is not uniform"));
            }
        }
        GridDensity::new(xs[0], dx, vs)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<GridDensity> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Inverse-CDF sampler with the cumulative sums precomputed.
pub struct DensitySampler<'a> {
    density: &'a GridDensity,
    cdf: Vec<f64>,
}

impl DensitySampler<'_> {
    /// Map a uniform draw in (0,1) to a sample; the CDF is treated as
    /// piecewise linear inside cells.
    pub fn sample_at(&self, u: f64) -> f64 {
        let cdf = &self.cdf;
        let n = cdf.len();
        let mut lo = 0usize;
        let mut hi = n - 1;
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if cdf[mid] <= u {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let span = cdf[hi] - cdf[lo];
        let frac = if span > 0.0 { (u - cdf[lo]) / span } else { 0.5 };
        self.density.lo + self.density.dx * (lo as f64 + frac)
    }
}

// ---------------------------------------------------------------------------
// Quadrature helpers
// ---------------------------------------------------------------------------

/// Trapezoidal sum with pairwise accumulation (deterministic and accurate).
pub(crate) fn trapezoid(dx: f64, terms: &[f64]) -> f64 {
    let n = terms.len();
    if n < 2 {
        return 0.0;
    }
    let inner = pairwise_sum(&terms[1..n - 1]);
    dx * (inner + 0.5 * (terms[0] + terms[n - 1]))
}

pub(crate) fn pairwise_sum(v: &[f64]) -> f64 {
    match v.len() {
        0 => 0.0,
        1 => v[0],
        2 => v[0] + v[1],
        n => {
            let mid = n / 2;
            pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
        }
    }
}

/// Integral of the piecewise-linear interpolant of `w` over `[a, b]`
/// intersected with the grid span.
fn partial_trapezoid(lo: f64, dx: f64, w: &[f64], a: f64, b: f64) -> f64 {
    let n = w.len();
    let hi = lo + dx * (n - 1) as f64;
    let a = a.max(lo);
    let b = b.min(hi);
    if a >= b {
        return 0.0;
    }
    let eval = |x: f64| -> f64 {
        let t = (x - lo) / dx;
        let i = (t as usize).min(n - 2);
        let frac = t - i as f64;
        w[i] * (1.0 - frac) + w[i + 1] * frac
    };
    let ia = ((a - lo) / dx).ceil() as usize;
    let ib = ((b - lo) / dx).floor() as usize;
    if ia > ib {
        // Both endpoints inside one cell.
        return 0.5 * (eval(a) + eval(b)) * (b - a);
    }
    let xa = lo + dx * ia as f64;
    let xb = lo + dx * ib as f64;
    let mut total = 0.5 * (eval(a) + w[ia]) * (xa - a) + 0.5 * (w[ib] + eval(b)) * (b - xb);
    if ib > ia {
        let terms = &w[ia..=ib];
        total += trapezoid(dx, terms);
    }
    total
}

// ---------------------------------------------------------------------------
// Constructors
// ---------------------------------------------------------------------------

/// Gaussian sampled on `mean +- width_sigmas * sd` with `points` grid points.
pub fn make_gaussian(spec: GaussianSpec, width_sigmas: f64, points: usize) -> Result<GridDensity> {
    let spec = GaussianSpec::new(spec.mean, spec.variance)?;
    if points < MIN_POINTS {
        return Err(Error::invalid_parameter(format!("points must be >= {MIN_POINTS}, got {points}")));
    }
    if !(width_sigmas >= 6.0) {
        return Err(Error::invalid_parameter(format!(
            "width must be >= 6 sigmas, got {width_sigmas}"
        )));
    }
    let sd = spec.variance.sqrt();
    let lo = spec.mean - width_sigmas * sd;
    let dx = 2.0 * width_sigmas * sd / (points - 1) as f64;
    let values: Vec<f64> = (0..points).map(|i| spec.pdf(lo + dx * i as f64)).collect();
    GridDensity::from_unnormalized(lo, dx, values)
}

/// Mixture-plus-noise law on an automatically chosen support: each end
/// extends 8 standard deviations past the outermost component.
pub fn make_mixture(spec: &MixtureSpec, points: usize) -> Result<GridDensity> {
    let spec = MixtureSpec::new(spec.components.clone(), spec.noise_variance)?;
    if points < MIN_POINTS {
        return Err(Error::invalid_parameter(format!("points must be >= {MIN_POINTS}, got {points}")));
    }
    let lo = spec
        .components
        .iter()
        .map(|(_, g)| g.mean - 8.0 * (g.variance + spec.noise_variance).sqrt())
        .fold(f64::INFINITY, f64::min);
    let hi = spec
        .components
        .iter()
        .map(|(_, g)| g.mean + 8.0 * (g.variance + spec.noise_variance).sqrt())
        .fold(f64::NEG_INFINITY, f64::max);
    let dx = (hi - lo) / (points - 1) as f64;
    let values: Vec<f64> = (0..points).map(|i| spec.pdf(lo + dx * i as f64)).collect();
    GridDensity::from_unnormalized(lo, dx, values)
}

/// Uniform on `[-half_width, half_width]` blurred by independent Gaussian
/// noise of variance `noise_variance`.
pub fn make_uniform_noise(half_width: f64, noise_variance: f64, points: usize) -> Result<GridDensity> {
    if !(half_width > 0.0) {
        return Err(Error::invalid_parameter(format!("half width must be > 0, got {half_width}")));
    }
    if !(noise_variance > 0.0) {
        return Err(Error::invalid_parameter(format!(
            "noise variance must be > 0, got {noise_variance}"
        )));
    }
    let m = points.max(MIN_POINTS);
    let dx = 2.0 * half_width / (m - 1) as f64;
    let uniform = GridDensity {
        lo: -half_width,
        dx,
        values: vec![1.0 / (2.0 * half_width); m],
    };
    let gpts = ((16.0 * noise_variance.sqrt() / dx).ceil() as usize + 1).clamp(MIN_POINTS, MAX_POINTS);
    let g = make_gaussian(GaussianSpec { mean: 0.0, variance: noise_variance }, 8.0, gpts)?;
    convolve_add(&uniform, &g)
}

// ---------------------------------------------------------------------------
// Binary operations
// ---------------------------------------------------------------------------

/// Density of `c X` for `c != 0`; exact (no resampling).
pub fn scale_density(f: &GridDensity, c: f64) -> Result<GridDensity> {
    if c == 0.0 || !c.is_finite() {
        return Err(Error::invalid_parameter(format!("scale must be nonzero, got {c}")));
    }
    let a = c.abs();
    let values: Vec<f64> = if c > 0.0 {
        f.values.iter().map(|&v| v / a).collect()
    } else {
        f.values.iter().rev().map(|&v| v / a).collect()
    };
    let lo = if c > 0.0 { c * f.lo } else { c * f.hi() };
    Ok(GridDensity { lo, dx: a * f.dx, values })
}

/// Density of `X + Y` for independent `X ~ f1`, `Y ~ f2`.
pub fn convolve_add(f1: &GridDensity, f2: &GridDensity) -> Result<GridDensity> {
    let dx = f1.dx.min(f2.dx);
    let n1 = ((f1.hi() - f1.lo) / dx).round() as usize + 1;
    let n2 = ((f2.hi() - f2.lo) / dx).round() as usize + 1;
    let a = f1.resample_values(f1.lo, dx, n1);
    let b = f2.resample_values(f2.lo, dx, n2);
    let mut out = fft::convolve(&a, &b);
    for v in out.iter_mut() {
        *v *= dx;
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    let lo = f1.lo + f2.lo;
    let (lo, out) = trim_support(lo, dx, out);
    let (lo, dx, out) = cap_points(lo, dx, out, MAX_POINTS);
    GridDensity::from_unnormalized(lo, dx, out)
}

/// Scaled convolution: the law of `lambda X1 + sqrt(1 - lambda^2) X2`.
pub fn scaled_convolve(f1: &GridDensity, f2: &GridDensity, lambda: f64) -> Result<GridDensity> {
    check_lambda(lambda)?;
    let a = scale_density(f1, lambda)?;
    let b = scale_density(f2, (1.0 - lambda * lambda).sqrt())?;
    convolve_add(&a, &b)
}

/// Entropy jump `h(X *_lambda Y) - lambda^2 h(X) - (1-lambda^2) h(Y)`.
/// Nonnegative; zero exactly when both inputs are Gaussian with equal
/// variance.
pub fn entropy_jump(f1: &GridDensity, f2: &GridDensity, lambda: f64) -> Result<f64> {
    check_lambda(lambda)?;
    let mixed = scaled_convolve(f1, f2, lambda)?;
    Ok(mixed.entropy() - (lambda * lambda * f1.entropy() + (1.0 - lambda * lambda) * f2.entropy()))
}

pub(crate) fn check_lambda(lambda: f64) -> Result<()> {
    if !(lambda > 0.0 && lambda < 1.0) {
        return Err(Error::invalid_parameter(format!(
            "lambda must lie strictly inside (0,1), got {lambda}"
        )));
    }
    Ok(())
}

/// KL divergence `integral f1 log(f1/f2)`.
///
/// Incompatible grids are resampled to the union support at the finer
/// spacing; when `f2`'s grid is a grid-aligned extension of `f1`'s (the
/// `matched_gaussian` case) no interpolation happens at all. Values inside
/// the logarithm are floored; bins where both densities are below
/// `TRIM_REL * max` are skipped.
pub fn kl_divergence(f1: &GridDensity, f2: &GridDensity) -> f64 {
    let max1 = f1.values.iter().cloned().fold(0.0, f64::max);
    let max2 = f2.values.iter().cloned().fold(0.0, f64::max);

    let term = |v1: f64, v2: f64| -> f64 {
        if v1 <= DENSITY_FLOOR || (v1 < TRIM_REL * max1 && v2 < TRIM_REL * max2) {
            0.0
        } else {
            v1 * (v1.ln() - v2.max(DENSITY_FLOOR).ln())
        }
    };

    // Aligned fast path: same spacing, f2 covers f1 on the same lattice.
    let aligned = {
        let rel = (f1.dx - f2.dx).abs() / f1.dx;
        let shift = (f1.lo - f2.lo) / f1.dx;
        rel < 1e-12
            && (shift - shift.round()).abs() < 1e-9
            && shift.round() >= 0.0
            && f2.hi() >= f1.hi() - 1e-9 * f1.dx
    };
    if aligned {
        let off = ((f1.lo - f2.lo) / f1.dx).round() as usize;
        let terms: Vec<f64> = f1
            .values
            .iter()
            .enumerate()
            .map(|(i, &v1)| term(v1, f2.values[off + i]))
            .collect();
        return trapezoid(f1.dx, &terms);
    }

    let lo = f1.lo.min(f2.lo);
    let hi = f1.hi().max(f2.hi());
    let dx = f1.dx.min(f2.dx);
    let n = (((hi - lo) / dx).round() as usize + 1).min(1 << 17);
    let dx = (hi - lo) / (n - 1) as f64;
    let a = f1.resample_values(lo, dx, n);
    let b = f2.resample_values(lo, dx, n);
    let terms: Vec<f64> = a.iter().zip(&b).map(|(&v1, &v2)| term(v1, v2)).collect();
    trapezoid(dx, &terms)
}

// ---------------------------------------------------------------------------
// Support management
// ---------------------------------------------------------------------------

/// Drop leading/trailing bins below `TRIM_REL * max`, keeping one guard cell
/// on each side and at least `MIN_POINTS` points.
fn trim_support(lo: f64, dx: f64, values: Vec<f64>) -> (f64, Vec<f64>) {
    let max = values.iter().cloned().fold(0.0, f64::max);
    if max <= 0.0 {
        return (lo, values);
    }
    let thr = TRIM_REL * max;
    let first = values.iter().position(|&v| v > thr).unwrap_or(0);
    let last = values.iter().rposition(|&v| v > thr).unwrap_or(values.len() - 1);
    let first = first.saturating_sub(1);
    let last = (last + 1).min(values.len() - 1);
    if last + 1 - first < MIN_POINTS {
        return (lo, values);
    }
    let trimmed = values[first..=last].to_vec();
    (lo + dx * first as f64, trimmed)
}

/// Resample onto at most `cap` points over the same span.
fn cap_points(lo: f64, dx: f64, values: Vec<f64>, cap: usize) -> (f64, f64, Vec<f64>) {
    if values.len() <= cap {
        return (lo, dx, values);
    }
    let hi = lo + dx * (values.len() - 1) as f64;
    let new_dx = (hi - lo) / (cap - 1) as f64;
    let tmp = GridDensity { lo, dx, values };
    let resampled = tmp.resample_values(lo, new_dx, cap);
    (lo, new_dx, resampled)
}

/// L1 distance between two densities, evaluated on their union grid at the
/// finer spacing. Diagnostic companion to the KL measures.
pub fn l1_distance(a: &GridDensity, b: &GridDensity) -> f64 {
    let lo = a.lo().min(b.lo());
    let hi = a.hi().max(b.hi());
    let dx = a.dx().min(b.dx());
    let n = (((hi - lo) / dx).round() as usize + 1).min(1 << 17);
    let dx = (hi - lo) / (n - 1) as f64;
    let av = a.resample_values(lo, dx, n);
    let bv = b.resample_values(lo, dx, n);
    let terms: Vec<f64> = av.iter().zip(&bv).map(|(x, y)| (x - y).abs()).collect();
    trapezoid(dx, &terms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{Stream, StreamId};

    fn std_gaussian(points: usize) -> GridDensity {
        make_gaussian(GaussianSpec { mean: 0.0, variance: 1.0 }, 8.0, points).unwrap()
    }

    fn bimodal() -> MixtureSpec {
        MixtureSpec::symmetric_bimodal(2.0, 0.5, 0.1).unwrap()
    }

    #[test]
    fn gaussian_moments_match_spec() {
        let g = std_gaussian(1024);
        assert!((g.variance() - 1.0).abs() < 1e-4);
        let g2 = make_gaussian(GaussianSpec { mean: 2.0, variance: 0.25 }, 8.0, 1024).unwrap();
        assert!((g2.mean() - 2.0).abs() < 1e-4);
        let g3 = make_gaussian(GaussianSpec { mean: 3.0, variance: 2.0 }, 8.0, 1024).unwrap();
        assert!((g3.mean() - 3.0).abs() < 1e-4);
        assert!((g3.variance() - 2.0).abs() < 1e-3);
    }

    #[test]
    fn narrow_gaussian_variance() {
        let g = make_gaussian(GaussianSpec { mean: 0.0, variance: 1e-4 }, 8.0, 2048).unwrap();
        assert!((g.variance() - 1e-4).abs() < 0.05 * 1e-4);
    }

    #[test]
    fn gaussian_entropy_closed_form() {
        let g = std_gaussian(1024);
        assert!((g.entropy() - gaussian_entropy(1.0)).abs() < 1e-4);
        let g4 = make_gaussian(GaussianSpec { mean: 0.0, variance: 4.0 }, 8.0, 1024).unwrap();
        assert!((g4.entropy() - (gaussian_entropy(1.0) + 0.5 * 4.0_f64.ln())).abs() < 1e-4);
    }

    #[test]
    fn uniform_entropy_is_log_length() {
        // Uniform on [0,1] sampled exactly on its support: entropy 0.
        let m = 1024;
        let d = GridDensity::new(0.0, 1.0 / (m - 1) as f64, vec![1.0; m]).unwrap();
        assert!(d.entropy().abs() < 2e-3);
    }

    #[test]
    fn invalid_parameters_are_rejected() {
        assert!(GaussianSpec::new(0.0, -1.0).is_err());
        assert!(GaussianSpec::new(0.0, 0.0).is_err());
        assert!(make_gaussian(GaussianSpec { mean: 0.0, variance: 1.0 }, 4.0, 1024).is_err());
        assert!(make_gaussian(GaussianSpec { mean: 0.0, variance: 1.0 }, 8.0, 8).is_err());
        assert!(MixtureSpec::new(vec![], 0.1).is_err());
        let g = std_gaussian(128);
        assert!(g.tail_variance(-1.0).is_err());
        assert!(scale_density(&g, 0.0).is_err());
        assert!(g.ou_flow(0.0).is_err());
        assert!(g.ou_flow(-1.0).is_err());
        assert!(scaled_convolve(&g, &g, 1.0).is_err());
        assert!(scaled_convolve(&g, &g, 0.0).is_err());
    }

    #[test]
    fn mixture_moments() {
        let single = MixtureSpec::single(1.0, 0.25).unwrap();
        let d = make_mixture(&single, 1024).unwrap();
        assert!((d.variance() - 1.25).abs() < 1e-3);

        let bi = bimodal();
        let d = make_mixture(&bi, 1024).unwrap();
        assert!(d.mean().abs() < 1e-3);
        assert!((d.variance() - 4.6).abs() < 1e-2);
        assert!((bi.variance() - 4.6).abs() < 1e-12);
    }

    #[test]
    fn kl_of_identical_density_vanishes() {
        let d = make_mixture(&bimodal(), 1024).unwrap();
        assert!(kl_divergence(&d, &d).abs() < 1e-9);
    }

    #[test]
    fn kl_gaussian_closed_form() {
        let f1 = std_gaussian(1024);
        let f2 = make_gaussian(GaussianSpec { mean: 0.0, variance: 2.0 }, 8.0, 1024).unwrap();
        let expect = 0.5 * (0.5 + 2.0_f64.ln() - 1.0);
        assert!((kl_divergence(&f1, &f2) - expect).abs() < 1e-3);
    }

    #[test]
    fn gap_identity_and_positivity() {
        let g = std_gaussian(1024);
        assert!(g.gaussianity_gap().unwrap().abs() < 1e-4);

        let d = make_mixture(&bimodal(), 1024).unwrap();
        let gap = d.gaussianity_gap().unwrap();
        assert!(gap > 0.1, "bimodal gap {gap}");
        // Quadrature value for this mixture, frozen from an independent
        // fine-grid computation.
        assert!((gap - 0.33898).abs() < 1e-3, "gap {gap}");

        for f in [&g, &d] {
            let matched = f.matched_gaussian().unwrap();
            let kl = kl_divergence(f, &matched);
            assert!(
                (f.gaussianity_gap().unwrap() - kl).abs() < 1e-6,
                "identity violated: gap {} kl {kl}",
                f.gaussianity_gap().unwrap()
            );
        }
    }

    #[test]
    fn tail_variance_examples() {
        let g = std_gaussian(1024);
        assert!((g.tail_variance(0.0).unwrap() - 1.0).abs() < 1e-3);
        assert!(g.tail_variance(8.0).unwrap() < 1e-6);
        // 2 * integral_1^inf x^2 phi(x) dx = 2*(phi(1) + 1 - Phi(1))
        let expect = 0.8012519569012009;
        assert!((g.tail_variance(1.0).unwrap() - expect).abs() < 1e-3);
        // Nonincreasing in R.
        let mut prev = f64::INFINITY;
        for r in [0.0, 0.5, 1.0, 2.0, 4.0] {
            let t = g.tail_variance(r).unwrap();
            assert!(t <= prev + 1e-12);
            prev = t;
        }
    }

    #[test]
    fn fisher_information_examples() {
        for var in [0.5, 1.0, 4.0] {
            let g = make_gaussian(GaussianSpec { mean: 0.0, variance: var }, 8.0, 1024).unwrap();
            let j = g.fisher_information();
            assert!((j - 1.0 / var).abs() < 1e-3 / var, "var {var}: J {j}");
        }
        // Convolving two standard Gaussians at lambda = 1/sqrt(2) is again standard.
        let g = std_gaussian(1024);
        let c = scaled_convolve(&g, &g, std::f64::consts::FRAC_1_SQRT_2).unwrap();
        assert!((c.fisher_information() - 1.0).abs() < 1e-3);
    }

    #[test]
    fn cramer_rao_on_corpus() {
        let ds = [
            std_gaussian(1024),
            make_mixture(&bimodal(), 1024).unwrap(),
            make_uniform_noise(3.0_f64.sqrt(), 0.25, 1024).unwrap(),
        ];
        for d in &ds {
            let prod = d.fisher_information() * d.variance();
            assert!(prod >= 1.0 - 1e-3, "J*V = {prod}");
        }
    }

    #[test]
    fn scaled_convolve_variance_algebra() {
        let f1 = std_gaussian(1024);
        let f2 = make_gaussian(GaussianSpec { mean: 0.0, variance: 4.0 }, 8.0, 1024).unwrap();
        let c = scaled_convolve(&f1, &f2, std::f64::consts::FRAC_1_SQRT_2).unwrap();
        assert!((c.variance() - 2.5).abs() < 1e-2);
    }

    #[test]
    fn gaussian_rotation_invariance() {
        let g = std_gaussian(1024);
        for lambda in [0.3, std::f64::consts::FRAC_1_SQRT_2, 0.9] {
            let c = scaled_convolve(&g, &g, lambda).unwrap();
            let l1: f64 = l1_distance(&c, &g);
            assert!(l1 < 1e-3, "lambda {lambda}: L1 {l1}");
        }
    }

    #[test]
    fn entropy_jump_examples() {
        let g = std_gaussian(1024);
        let j = entropy_jump(&g, &g, std::f64::consts::FRAC_1_SQRT_2).unwrap();
        assert!(j.abs() < 1e-3);

        let g4 = make_gaussian(GaussianSpec { mean: 0.0, variance: 4.0 }, 8.0, 1024).unwrap();
        let j = entropy_jump(&g, &g4, std::f64::consts::FRAC_1_SQRT_2).unwrap();
        // 0.5 log 2.5 - 0.25 log 4, unequal-variance Gaussian pair.
        assert!((j - 0.11157177565710491).abs() < 1e-3);
        assert!(j > 0.0);

        let b = make_mixture(&bimodal(), 1024).unwrap();
        let j = entropy_jump(&b, &b, std::f64::consts::FRAC_1_SQRT_2).unwrap();
        assert!(j > 0.0);
        // Jump at X = Y is the entropy increase of self-convolution.
        let plus = scaled_convolve(&b, &b, std::f64::consts::FRAC_1_SQRT_2).unwrap();
        assert!(plus.entropy() >= b.entropy() - 1e-3);
    }

    #[test]
    fn reflect_examples() {
        let b = make_mixture(&bimodal(), 1024).unwrap();
        let r = b.reflect();
        assert!(l1_distance(&b, &r) < 1e-12, "symmetric density should be invariant");
        assert!((r.entropy() - b.entropy()).abs() < 1e-12);
        assert!((r.mean() + b.mean()).abs() < 1e-9);

        let g = make_gaussian(GaussianSpec { mean: 2.0, variance: 1.0 }, 8.0, 1024).unwrap();
        let r = g.reflect();
        assert!((r.mean() + 2.0).abs() < 1e-6);
    }

    #[test]
    fn ou_flow_examples() {
        let g = std_gaussian(1024);
        for t in [0.1, 0.5, 1.0] {
            let flowed = g.ou_flow(t).unwrap();
            assert!(l1_distance(&flowed, &g) < 1e-3, "Gaussian fixed point at t={t}");
        }
        let f = make_gaussian(GaussianSpec { mean: 0.0, variance: 4.0 }, 8.0, 1024).unwrap();
        for t in [0.2, 1.0] {
            let e2t = (-2.0 * t).exp();
            let flowed = f.ou_flow(t).unwrap();
            assert!((flowed.variance() - (4.0 * e2t + 1.0 - e2t)).abs() < 1e-2);
        }
    }

    #[test]
    fn sampling_moments_and_determinism() {
        let g = std_gaussian(1024);
        let mut s = Stream::new(99, StreamId::Leaf, 0, 0);
        let xs = g.sample(&mut s, 100_000);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() < 0.02);
        assert!((var - 1.0).abs() < 0.02);

        let b = make_mixture(&bimodal(), 1024).unwrap();
        let mut s = Stream::new(7, StreamId::Leaf, 1, 0);
        let xs = b.sample(&mut s, 100_000);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() < 0.03);

        let mut s1 = Stream::new(123, StreamId::Leaf, 5, 2);
        let mut s2 = Stream::new(123, StreamId::Leaf, 5, 2);
        assert_eq!(g.sample(&mut s1, 64), g.sample(&mut s2, 64));
    }

    #[test]
    fn normalization_invariant_after_operations() {
        let b = make_mixture(&bimodal(), 1024).unwrap();
        let g = std_gaussian(1024);
        let results = [
            scaled_convolve(&b, &g, 0.3).unwrap(),
            b.ou_flow(0.5).unwrap(),
            b.reflect(),
            convolve_add(&b, &g).unwrap(),
        ];
        for d in &results {
            assert!((d.mass() - 1.0).abs() <= EPS_NORM, "mass {}", d.mass());
            assert!(d.len() >= MIN_POINTS);
            assert!(d.len() <= MAX_POINTS);
        }
    }

    #[test]
    fn csv_and_json_round_trip() {
        let b = make_mixture(&bimodal(), 256).unwrap();
        let mut buf = Vec::new();
        b.write_csv(&mut buf).unwrap();
        let parsed = GridDensity::read_csv(std::io::BufReader::new(&buf[..])).unwrap();
        assert!(l1_distance(&b, &parsed) < 1e-12);

        let json = b.to_json().unwrap();
        let back = GridDensity::from_json(&json).unwrap();
        assert_eq!(b, back);
    }

    #[test]
    fn deserialization_validates() {
        // Mass far from 1 must be rejected.
        let bad = r#"{"lo":0.0,"dx":0.1,"values":[1,1,1,1,1,1,1,1,1,1,1,1,1,1,1,1]}"#;
        assert!(GridDensity::from_json(bad).is_err());
    }
}
