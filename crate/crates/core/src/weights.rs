//! Real-line weights `w²`, `w*²`, `W²`, the regularized distance `δ`, and the
//! Muckenhoupt and integrability checks run on sampled traces.

use std::f64::consts::PI;
use std::fmt::Write as _;

use num_complex::Complex64;
use serde::Serialize;

use crate::detfun::Spectrum;
use crate::error::{Error, Result};
use crate::exec;
use crate::linalg;
use crate::model::{PerturbedModel, Side};
use crate::Verdict;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Provenance {
    WSq,
    WStarSq,
    BigWSq,
    Synthetic,
}

impl Provenance {
    pub fn as_str(&self) -> &'static str {
        match self {
            Provenance::WSq => "w_sq",
            Provenance::WStarSq => "w_star_sq",
            Provenance::BigWSq => "W_sq",
            Provenance::Synthetic => "synthetic",
        }
    }
}

/// A positive weight sampled at the cell centers `x_i = -R + (i + 1/2) Δ`,
/// `Δ = 2R/m`. The cell-centered grid is symmetric and never hits `x = 0`.
#[derive(Debug, Clone, Serialize)]
pub struct WeightTrace {
    pub r: f64,
    pub x: Vec<f64>,
    pub values: Vec<f64>,
    pub provenance: Provenance,
    /// Positivity floor added to every value, if any.
    pub offset: f64,
}

pub const MIN_SAMPLES: usize = 64;

/// Sample points of a trace on `[-R, R]`.
pub fn sample_points(r: f64, m: usize) -> Result<Vec<f64>> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::InvalidArgument(format!("window R = {r} must be positive")));
    }
    if m < MIN_SAMPLES {
        return Err(Error::InvalidArgument(format!("trace needs at least {MIN_SAMPLES} samples, got {m}")));
    }
    let dx = 2.0 * r / m as f64;
    Ok((0..m).map(|i| -r + (i as f64 + 0.5) * dx).collect())
}

impl WeightTrace {
    pub fn new(r: f64, values: Vec<f64>, provenance: Provenance) -> Result<Self> {
        let x = sample_points(r, values.len())?;
        for (xi, v) in x.iter().zip(&values) {
            if !(*v > 0.0) || !v.is_finite() {
                return Err(Error::NonpositiveWeight { x: *xi, value: *v });
            }
        }
        Ok(Self { r, x, values, provenance, offset: 0.0 })
    }

    /// Samples `v` on the window. Nonpositive samples trigger an offset of
    /// `1e-9 · median` on the whole trace; the offset is recorded.
    pub fn synthetic(r: f64, m: usize, v: impl Fn(f64) -> f64) -> Result<Self> {
        let x = sample_points(r, m)?;
        let mut values: Vec<f64> = x.iter().map(|&t| v(t)).collect();
        let mut offset = 0.0;
        if values.iter().any(|v| *v <= 0.0) {
            let mut sorted = values.clone();
            sorted.sort_by(f64::total_cmp);
            offset = 1e-9 * sorted[sorted.len() / 2].abs().max(f64::MIN_POSITIVE);
            values.iter_mut().for_each(|v| *v += offset);
        }
        let mut t = Self::new(r, values, Provenance::Synthetic)?;
        t.offset = offset;
        Ok(t)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn step(&self) -> f64 {
        2.0 * self.r / self.len() as f64
    }

    /// CSV with columns `x,value,provenance`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("x,value,provenance\n");
        for (x, v) in self.x.iter().zip(&self.values) {
            let _ = writeln!(s, "{x:e},{v:e},{}", self.provenance.as_str());
        }
        s
    }
}

fn sampled(r: f64, m: usize, provenance: Provenance, f: impl Fn(f64) -> Result<f64> + Sync) -> Result<WeightTrace> {
    let x = sample_points(r, m)?;
    let values: Vec<f64> = exec::map_slice(&x, |&t| f(t)).into_iter().collect::<Result<_>>()?;
    WeightTrace::new(r, values, provenance)
}

/// `w²(x) = ‖g(x)‖²`.
pub fn trace_w(model: &PerturbedModel, r: f64, m: usize) -> Result<WeightTrace> {
    sampled(r, m, Provenance::WSq, |x| {
        let c = model.quasi_exponential_coords(Complex64::new(x, 0.0), Side::GSide)?;
        Ok(linalg::norm(&c).powi(2))
    })
}

/// `w*²` by the definition `‖f_*(x_*)‖²`, `x_* = -x`, together with the
/// opposite sign convention `‖f_*(x)‖²` for comparison.
#[derive(Debug, Clone, Serialize)]
pub struct WStarTrace {
    pub trace: WeightTrace,
    pub opposite_sign: Vec<f64>,
    pub max_rel_gap: f64,
}

pub fn trace_w_star(model: &PerturbedModel, r: f64, m: usize) -> Result<WStarTrace> {
    let x = sample_points(r, m)?;
    let pairs: Vec<(f64, f64)> = exec::map_slice(&x, |&t| -> Result<(f64, f64)> {
        let def = model.quasi_exponential_coords(Complex64::new(-t, 0.0), Side::FStarSide)?;
        let alt = model.quasi_exponential_coords(Complex64::new(t, 0.0), Side::FStarSide)?;
        Ok((linalg::norm(&def).powi(2), linalg::norm(&alt).powi(2)))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    let (values, opposite_sign): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let max_rel_gap = values
        .iter()
        .zip(&opposite_sign)
        .map(|(a, b)| (a - b).abs() / a.abs().max(f64::MIN_POSITIVE))
        .fold(0.0, f64::max);
    Ok(WStarTrace { trace: WeightTrace::new(r, values, Provenance::WStarSq)?, opposite_sign, max_rel_gap })
}

/// `δ(z) = d(z) / (1 + d(z))`, `d(z) = dist(z, Λ)` over the computed zeros.
#[derive(Debug, Clone)]
pub struct DeltaField {
    zeros: Vec<Complex64>,
}

impl DeltaField {
    pub fn new(spec: &Spectrum) -> Result<Self> {
        Self::from_points(spec.points())
    }

    pub fn from_points(zeros: Vec<Complex64>) -> Result<Self> {
        if zeros.is_empty() {
            return Err(Error::EmptySpectrum);
        }
        Ok(Self { zeros })
    }

    pub fn distance(&self, z: Complex64) -> f64 {
        self.zeros.iter().map(|l| (z - l).norm()).fold(f64::INFINITY, f64::min)
    }

    pub fn eval(&self, z: Complex64) -> f64 {
        regularized(self.distance(z))
    }
}

/// `d / (1 + d)`.
pub fn regularized(d: f64) -> f64 {
    d / (1.0 + d)
}

pub fn delta_eval(spec: &Spectrum, z: Complex64) -> Result<f64> {
    Ok(DeltaField::new(spec)?.eval(z))
}

/// `W²(x) = |φ(x)|² / (w²(x) δ²(x))`, reusing a `w²` trace on the same window.
pub fn trace_big_w_from(model: &PerturbedModel, spec: &Spectrum, w: &WeightTrace) -> Result<WeightTrace> {
    if let Some(z) = spec.zeros.iter().find(|z| z.lambda.im.abs() < 1e-8) {
        return Err(Error::SpectrumTouchesLine(z.lambda));
    }
    let delta = DeltaField::new(spec)?;
    let values: Vec<f64> = exec::map_range(w.len(), |i| -> Result<f64> {
        let x = w.x[i];
        let phi = model.phi(Complex64::new(x, 0.0))?;
        let d = delta.eval(Complex64::new(x, 0.0));
        Ok(phi.norm_sqr() / (w.values[i] * d * d))
    })
    .into_iter()
    .collect::<Result<_>>()?;
    WeightTrace::new(w.r, values, Provenance::BigWSq)
}

pub fn trace_big_w(model: &PerturbedModel, spec: &Spectrum, r: f64, m: usize) -> Result<WeightTrace> {
    trace_big_w_from(model, spec, &trace_w(model, r, m)?)
}

/// Pointwise ratio band `max/min` of `a / b` over the common samples.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Band {
    pub min: f64,
    pub max: f64,
    pub ratio: f64,
}

pub fn band(a: &WeightTrace, b: &WeightTrace) -> Result<Band> {
    if a.len() != b.len() || a.r != b.r {
        return Err(Error::InvalidArgument("traces sampled on different windows".into()));
    }
    let q: Vec<f64> = a.values.iter().zip(&b.values).map(|(x, y)| x / y).collect();
    let min = q.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = q.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    Ok(Band { min, max, ratio: max / min })
}

/// Restriction of a trace to the samples with `|x| < r`.
pub fn restrict(t: &WeightTrace, r: f64) -> Result<WeightTrace> {
    let keep: Vec<usize> = (0..t.len()).filter(|&i| t.x[i].abs() < r).collect();
    let values = keep.iter().map(|&i| t.values[i]).collect();
    let mut out = WeightTrace::new(r, values, t.provenance)?;
    out.offset = t.offset;
    // Keep the original abscissae; they coincide with the cell centers when
    // `r` is a multiple of the step.
    out.x = keep.iter().map(|&i| t.x[i]).collect();
    Ok(out)
}

/// Dyadic-interval form: `max (avg v)(avg 1/v)` over the dyadic blocks of the
/// window holding at least four samples.
pub fn a2_interval(t: &WeightTrace) -> f64 {
    let m = t.len();
    let mut best: f64 = 1.0;
    let mut level = 0u32;
    while m >> level >= 4 {
        let blocks = 1usize << level;
        let per_level = exec::map_range(blocks, |j| {
            let lo = j * m / blocks;
            let hi = (j + 1) * m / blocks;
            let n = (hi - lo) as f64;
            let s: f64 = t.values[lo..hi].iter().sum();
            let si: f64 = t.values[lo..hi].iter().map(|v| 1.0 / v).sum();
            (s / n) * (si / n)
        });
        best = per_level.into_iter().fold(best, f64::max);
        level += 1;
    }
    best
}

/// Poisson-extension form at one probe height.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct PoissonProbe {
    pub y: f64,
    pub constant: f64,
    pub max_tail_mass: f64,
}

/// `max_x P_y[v](x) · P_y[1/v](x)` over probes `x ∈ [-R/2, R/2]`. The discrete
/// Poisson measure is completed by the closed-form mass outside the window,
/// carried at the edge values, and normalized to total mass one.
pub fn a2_poisson(t: &WeightTrace, y: f64, probes: usize) -> PoissonProbe {
    let dx = t.step();
    let r = t.r;
    let (v_left, v_right) = (t.values[0], t.values[t.len() - 1]);
    let xs: Vec<f64> = (0..probes).map(|k| -r / 2.0 + r * k as f64 / (probes - 1).max(1) as f64).collect();
    let per_probe = exec::map_slice(&xs, |&x| {
        let mut mass = 0.0;
        let mut pv = 0.0;
        let mut pinv = 0.0;
        for (ti, vi) in t.x.iter().zip(&t.values) {
            let k = y / (PI * ((x - ti).powi(2) + y * y)) * dx;
            mass += k;
            pv += k * vi;
            pinv += k / vi;
        }
        let tail_left = 0.5 - ((x + r) / y).atan() / PI;
        let tail_right = 0.5 - ((r - x) / y).atan() / PI;
        mass += tail_left + tail_right;
        pv += tail_left * v_left + tail_right * v_right;
        pinv += tail_left / v_left + tail_right / v_right;
        ((pv / mass) * (pinv / mass), tail_left + tail_right)
    });
    let constant = per_probe.iter().map(|p| p.0).fold(1.0, f64::max);
    let max_tail_mass = per_probe.iter().map(|p| p.1).fold(0.0, f64::max);
    PoissonProbe { y, constant, max_tail_mass }
}

pub const POISSON_PROBES: usize = 41;

/// Constants of one trace.
#[derive(Debug, Clone, Serialize)]
pub struct A2Constants {
    pub r: f64,
    pub interval: f64,
    pub poisson: f64,
    pub probes: Vec<PoissonProbe>,
}

pub fn a2_constants(t: &WeightTrace) -> A2Constants {
    let probes: Vec<PoissonProbe> =
        [t.r / 100.0, t.r / 10.0, t.r / 2.0].iter().map(|&y| a2_poisson(t, y, POISSON_PROBES)).collect();
    let poisson = probes.iter().map(|p| p.constant).fold(1.0, f64::max);
    A2Constants { r: t.r, interval: a2_interval(t), poisson, probes }
}

#[derive(Debug, Clone, Serialize)]
pub struct A2Report {
    pub provenance: Provenance,
    pub constant_interval: f64,
    pub constant_poisson: f64,
    pub poisson_tail_mass: f64,
    pub offset: f64,
    pub at_r: A2Constants,
    pub at_2r: Option<A2Constants>,
    pub interval_ratio: Option<f64>,
    pub poisson_ratio: Option<f64>,
    pub verdict: Verdict,
}

/// Relative drift below which constants count as stable under window doubling.
pub const STABLE_DRIFT: f64 = 0.25;

fn trend_verdict(ratios: &[f64]) -> Verdict {
    if ratios.iter().all(|r| (r - 1.0).abs() < STABLE_DRIFT) {
        Verdict::Stable
    } else if ratios.iter().any(|r| *r >= 1.0 + STABLE_DRIFT) {
        Verdict::Growing
    } else {
        Verdict::Inconclusive
    }
}

/// Both forms of the (A₂) constant, with the doubling trend when a trace on
/// `[-2R, 2R]` at the same step is supplied.
pub fn a2_check(trace: &WeightTrace, doubled: Option<&WeightTrace>) -> A2Report {
    let at_r = a2_constants(trace);
    let at_2r = doubled.map(a2_constants);
    let interval_ratio = at_2r.as_ref().map(|c| c.interval / at_r.interval);
    let poisson_ratio = at_2r.as_ref().map(|c| c.poisson / at_r.poisson);
    let verdict = match (interval_ratio, poisson_ratio) {
        (Some(a), Some(b)) => trend_verdict(&[a, b]),
        _ => Verdict::Inconclusive,
    };
    A2Report {
        provenance: trace.provenance,
        constant_interval: at_r.interval,
        constant_poisson: at_r.poisson,
        poisson_tail_mass: at_r.probes.iter().map(|p| p.max_tail_mass).fold(0.0, f64::max),
        offset: trace.offset,
        at_r,
        at_2r,
        interval_ratio,
        poisson_ratio,
        verdict,
    }
}

#[derive(Debug, Clone, Copy, Serialize)]
pub struct IntegralPair {
    pub at_r: f64,
    pub at_2r: f64,
    pub rel_change: f64,
    pub convergent: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct IntegrabilityReport {
    pub provenance: Provenance,
    /// `∫ v / (1 + x²)`.
    pub direct: IntegralPair,
    /// `∫ v⁻¹ / (1 + x²)`.
    pub reciprocal: IntegralPair,
    pub verdict: Verdict,
}

pub const CONVERGENCE_DRIFT: f64 = 0.10;

fn cauchy_integral(t: &WeightTrace, power: f64) -> f64 {
    let dx = t.step();
    t.x.iter().zip(&t.values).map(|(x, v)| v.powf(power) / (1.0 + x * x) * dx).sum()
}

/// Midpoint quadratures of `∫ v^{±1}/(1 + x²)` on both windows.
pub fn integrability_check(trace: &WeightTrace, doubled: &WeightTrace) -> IntegrabilityReport {
    let pair = |p: f64| {
        let (a, b) = (cauchy_integral(trace, p), cauchy_integral(doubled, p));
        let rel_change = (b - a).abs() / a.abs().max(f64::MIN_POSITIVE);
        IntegralPair { at_r: a, at_2r: b, rel_change, convergent: rel_change < CONVERGENCE_DRIFT }
    };
    let direct = pair(1.0);
    let reciprocal = pair(-1.0);
    let verdict = if direct.convergent && reciprocal.convergent { Verdict::Pass } else { Verdict::Fail };
    IntegrabilityReport { provenance: trace.provenance, direct, reciprocal, verdict }
}
