//! The Fredholm determinant `φ(z) = 1 - z (g(z), f)`: evaluation by two
//! independent formulas, zeros by the argument principle, indicator fits and
//! truncated canonical products.

use std::collections::HashMap;
use std::f64::consts::{FRAC_PI_3, PI};
use std::sync::{Mutex, OnceLock};

use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::exec;
use crate::model::{OperatorKind, PerturbedModel};
use crate::Verdict;

/// Anything that can be evaluated like `φ`. Synthetic functions plug into the
/// zero finder through this trait.
pub trait Analytic: Sync {
    fn eval(&self, z: Complex64) -> Result<Complex64>;

    /// Values at `p + (q - p) k / m` for `k = 0..=m`.
    fn eval_segment(&self, p: Complex64, q: Complex64, m: usize) -> Result<Vec<Complex64>> {
        exec::map_range(m + 1, |k| self.eval(p + (q - p) * (k as f64 / m as f64))).into_iter().collect()
    }
}

/// Adapter turning a closure into an [`Analytic`].
pub struct FnAnalytic<F>(pub F);

impl<F> Analytic for FnAnalytic<F>
where
    F: Fn(Complex64) -> Result<Complex64> + Sync,
{
    fn eval(&self, z: Complex64) -> Result<Complex64> {
        (self.0)(z)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Formula {
    InnerProduct,
    Semigroup,
}

/// `φ` of a [`PerturbedModel`].
pub struct DetFunction<'m> {
    model: &'m PerturbedModel,
    // (weight_k · c(t_k), t_k) for the semigroup formula.
    table: OnceLock<Result<Vec<(Complex64, f64)>>>,
}

impl<'m> DetFunction<'m> {
    pub fn new(model: &'m PerturbedModel) -> Self {
        Self { model, table: OnceLock::new() }
    }

    pub fn model(&self) -> &PerturbedModel {
        self.model
    }

    pub fn eval_with(&self, z: Complex64, formula: Formula) -> Result<Complex64> {
        match formula {
            Formula::InnerProduct => self.model.phi(z),
            Formula::Semigroup => self.eval_semigroup(z),
        }
    }

    fn semigroup_table(&self) -> Result<&[(Complex64, f64)]> {
        let table = self.table.get_or_init(|| {
            let op = self.model.operator();
            if op.kind() != OperatorKind::CanonicalJa {
                return Err(Error::UnsupportedKind);
            }
            let grid = op.grid();
            let a = grid.a();
            let (f, g) = (self.model.f(), self.model.g());
            // c(t) = (V(t)g, f) = ∫_t^a g(x - t) conj f(x) dx.
            let rows = exec::map_slice(grid.nodes(), |&t| {
                let (xs, ws) = grid.sub_rule(t, a);
                xs.iter().zip(&ws).map(|(&x, &w)| g.eval(x - t) * f.eval(x).conj() * w).sum::<Complex64>()
            });
            Ok(rows
                .into_iter()
                .zip(grid.weights())
                .zip(grid.nodes())
                .map(|((c, &w), &t)| (c * w, t))
                .collect())
        });
        table.as_ref().map(|v| v.as_slice()).map_err(Clone::clone)
    }

    /// `1 - z (g, f) - i z² ∫_0^a e^{izt} (V(t)g, f) dt`.
    fn eval_semigroup(&self, z: Complex64) -> Result<Complex64> {
        let table = self.semigroup_table()?;
        let gf = self.model.g().inner(self.model.f())?;
        let i = Complex64::i();
        let integral: Complex64 = table.iter().map(|(wc, t)| wc * (i * z * t).exp()).sum();
        Ok(1.0 - z * gf - i * z * z * integral)
    }

    /// Semigroup formula along a uniform segment. `e^{iz_j t_k}` is advanced by
    /// a geometric recurrence in `j`, reseeded every 64 steps.
    fn semigroup_segment(&self, p: Complex64, q: Complex64, m: usize) -> Result<Vec<Complex64>> {
        let table = self.semigroup_table()?;
        let gf = self.model.g().inner(self.model.f())?;
        let i = Complex64::i();
        let dz = (q - p) / m as f64;
        let ratio: Vec<Complex64> = table.iter().map(|(_, t)| (i * dz * t).exp()).collect();
        let mut phase: Vec<Complex64> = Vec::new();
        let mut out = Vec::with_capacity(m + 1);
        for j in 0..=m {
            let z = p + dz * j as f64;
            if j % 64 == 0 {
                phase = table.iter().map(|(wc, t)| wc * (i * z * t).exp()).collect();
            }
            let integral: Complex64 = phase.iter().sum();
            out.push(1.0 - z * gf - i * z * z * integral);
            for (ph, r) in phase.iter_mut().zip(&ratio) {
                *ph *= r;
            }
        }
        Ok(out)
    }

    /// Exact derivative through the resolvent; used as a cross-check of the
    /// finite-difference derivative.
    pub fn derivative_exact(&self, z: Complex64) -> Result<Complex64> {
        self.model.phi_derivative(z)
    }
}

/// Point values use the inner-product formula. Contour segments use the
/// semigroup recurrence when the shift realization exists, which costs `O(n)`
/// per point instead of a factorization.
impl Analytic for DetFunction<'_> {
    fn eval(&self, z: Complex64) -> Result<Complex64> {
        self.model.phi(z)
    }

    fn eval_segment(&self, p: Complex64, q: Complex64, m: usize) -> Result<Vec<Complex64>> {
        match self.model.operator().kind() {
            OperatorKind::CanonicalJa => self.semigroup_segment(p, q, m),
            OperatorKind::GeneralKernel => {
                exec::map_range(m + 1, |k| self.eval(p + (q - p) * (k as f64 / m as f64))).into_iter().collect()
            }
        }
    }
}

/// A [`DetFunction`] pinned to one formula.
///
/// The resolvent route loses all digits once `a |Im z|` approaches
/// `ln(1/ε) ≈ 36`, because `‖(I - zB)⁻¹‖` grows like `e^{a |Im z|}`. The
/// semigroup formula involves no solve and stays accurate there, so indicator
/// fits should go through it.
pub struct WithFormula<'a, 'm>(pub &'a DetFunction<'m>, pub Formula);

impl Analytic for WithFormula<'_, '_> {
    fn eval(&self, z: Complex64) -> Result<Complex64> {
        self.0.eval_with(z, self.1)
    }
}

impl<'m> DetFunction<'m> {
    /// The formula best suited to far-field evaluation: the semigroup formula
    /// when the shift realization exists, the inner-product formula otherwise.
    pub fn far_field(&self) -> WithFormula<'_, 'm> {
        let formula = match self.model.operator().kind() {
            OperatorKind::CanonicalJa => Formula::Semigroup,
            OperatorKind::GeneralKernel => Formula::InnerProduct,
        };
        WithFormula(self, formula)
    }
}

pub fn eval_phi(det: &DetFunction<'_>, z: Complex64, formula: Formula) -> Result<Complex64> {
    det.eval_with(z, formula)
}

/// Finite-difference derivative along the real and imaginary directions.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Derivative {
    /// Average of the two central differences (the `h²` terms cancel).
    pub value: Complex64,
    pub real_step: Complex64,
    pub imag_step: Complex64,
}

impl Derivative {
    /// Relative disagreement of the two directional differences.
    pub fn mismatch(&self) -> f64 {
        (self.real_step - self.imag_step).norm() / self.value.norm().max(f64::MIN_POSITIVE)
    }
}

/// Central differences with step `1e-6 (1 + |z|)` along `ℝ` and `iℝ`.
pub fn derivative(f: &dyn Analytic, z: Complex64) -> Result<Derivative> {
    let h = 1e-6 * (1.0 + z.norm());
    let hr = Complex64::new(h, 0.0);
    let hi = Complex64::new(0.0, h);
    let real_step = (f.eval(z + hr)? - f.eval(z - hr)?) / (2.0 * hr);
    let imag_step = (f.eval(z + hi)? - f.eval(z - hi)?) / (2.0 * hi);
    Ok(Derivative { value: (real_step + imag_step) / 2.0, real_step, imag_step })
}

/// Axis-aligned rectangle `[re_min, re_max] × [im_min, im_max]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, serde::Deserialize)]
pub struct Rect {
    pub re_min: f64,
    pub re_max: f64,
    pub im_min: f64,
    pub im_max: f64,
}

impl Rect {
    pub fn new(re_min: f64, re_max: f64, im_min: f64, im_max: f64) -> Result<Self> {
        if !(re_min < re_max && im_min < im_max) || ![re_min, re_max, im_min, im_max].iter().all(|v| v.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "degenerate rectangle [{re_min}, {re_max}] x [{im_min}, {im_max}]"
            )));
        }
        Ok(Self { re_min, re_max, im_min, im_max })
    }

    pub fn width(&self) -> f64 {
        self.re_max - self.re_min
    }

    pub fn height(&self) -> f64 {
        self.im_max - self.im_min
    }

    pub fn center(&self) -> Complex64 {
        Complex64::new((self.re_min + self.re_max) / 2.0, (self.im_min + self.im_max) / 2.0)
    }

    pub fn contains(&self, z: Complex64) -> bool {
        (self.re_min..=self.re_max).contains(&z.re) && (self.im_min..=self.im_max).contains(&z.im)
    }

    fn grown(&self, by: f64) -> Self {
        Self { re_min: self.re_min - by, re_max: self.re_max + by, im_min: self.im_min - by, im_max: self.im_max + by }
    }

    fn corners(&self) -> [Complex64; 4] {
        [
            Complex64::new(self.re_min, self.im_min),
            Complex64::new(self.re_max, self.im_min),
            Complex64::new(self.re_max, self.im_max),
            Complex64::new(self.re_min, self.im_max),
        ]
    }
}

/// One refined zero.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct Zero {
    pub lambda: Complex64,
    pub dphi: Complex64,
    pub abs_dphi: f64,
    pub residual: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct Spectrum {
    pub zeros: Vec<Zero>,
    /// The window actually integrated over, after any edge nudge.
    pub window: Rect,
    pub nudge: f64,
    pub winding_total: i64,
    /// Smallest pairwise distance between zeros (infinite for fewer than two).
    pub simplicity_margin: f64,
}

impl Spectrum {
    pub fn len(&self) -> usize {
        self.zeros.len()
    }

    pub fn is_empty(&self) -> bool {
        self.zeros.is_empty()
    }

    pub fn points(&self) -> Vec<Complex64> {
        self.zeros.iter().map(|z| z.lambda).collect()
    }

    /// `dist(Λ, ℝ)` over the computed zeros.
    pub fn distance_to_real_line(&self) -> Option<f64> {
        self.zeros.iter().map(|z| z.lambda.im.abs()).reduce(f64::min)
    }

    /// `min_k |z - λ_k|`.
    pub fn distance(&self, z: Complex64) -> Option<f64> {
        self.zeros.iter().map(|k| (z - k.lambda).norm()).reduce(f64::min)
    }
}

const EDGE_SAMPLES: usize = 256;
const MAX_BISECT: u32 = 24;
const ZERO_TOL: f64 = 1e-12;
const SPLIT_FRACTIONS: [f64; 5] = [0.5123, 0.4689, 0.5561, 0.4317, 0.5893];

struct Contour<'a> {
    f: &'a dyn Analytic,
    cache: Mutex<HashMap<[u64; 4], f64>>,
}

impl<'a> Contour<'a> {
    fn new(f: &'a dyn Analytic) -> Self {
        Self { f, cache: Mutex::new(HashMap::new()) }
    }

    fn value(&self, z: Complex64) -> Result<Complex64> {
        let v = self.f.eval(z)?;
        if !(v.norm() > ZERO_TOL) || !v.re.is_finite() || !v.im.is_finite() {
            return Err(Error::ZeroOnContour(z));
        }
        Ok(v)
    }

    /// Continuous change of `arg f` along the segment `p -> q`.
    fn edge(&self, p: Complex64, q: Complex64) -> Result<f64> {
        let fwd = (p.re, p.im) <= (q.re, q.im);
        let (s, e) = if fwd { (p, q) } else { (q, p) };
        let key = [s.re.to_bits(), s.im.to_bits(), e.re.to_bits(), e.im.to_bits()];
        let cached = self.cache.lock().expect("cache lock").get(&key).copied();
        let phase = match cached {
            Some(v) => v,
            None => {
                let v = self.edge_uncached(s, e)?;
                self.cache.lock().expect("cache lock").insert(key, v);
                v
            }
        };
        Ok(if fwd { phase } else { -phase })
    }

    fn edge_uncached(&self, p: Complex64, q: Complex64) -> Result<f64> {
        let at = |t: f64| p + (q - p) * t;
        let vals = self.f.eval_segment(p, q, EDGE_SAMPLES)?;
        for (k, v) in vals.iter().enumerate() {
            if !(v.norm() > ZERO_TOL) || !v.re.is_finite() || !v.im.is_finite() {
                return Err(Error::ZeroOnContour(at(k as f64 / EDGE_SAMPLES as f64)));
            }
        }
        let mut total = 0.0;
        for k in 0..EDGE_SAMPLES {
            let t0 = k as f64 / EDGE_SAMPLES as f64;
            let t1 = (k + 1) as f64 / EDGE_SAMPLES as f64;
            total += self.refine(&at, t0, t1, vals[k], vals[k + 1], 0)?;
        }
        Ok(total)
    }

    fn refine(
        &self,
        at: &dyn Fn(f64) -> Complex64,
        t0: f64,
        t1: f64,
        v0: Complex64,
        v1: Complex64,
        depth: u32,
    ) -> Result<f64> {
        let d = (v1 / v0).arg();
        if d.abs() <= FRAC_PI_3 {
            return Ok(d);
        }
        if depth >= MAX_BISECT {
            return Err(Error::ZeroOnContour(at((t0 + t1) / 2.0)));
        }
        let tm = (t0 + t1) / 2.0;
        let vm = self.value(at(tm))?;
        Ok(self.refine(at, t0, tm, v0, vm, depth + 1)? + self.refine(at, tm, t1, vm, v1, depth + 1)?)
    }

    fn winding(&self, r: &Rect) -> Result<i64> {
        let c = r.corners();
        let mut total = 0.0;
        for k in 0..4 {
            total += self.edge(c[k], c[(k + 1) % 4])?;
        }
        let w = total / (2.0 * PI);
        let rounded = w.round();
        if (w - rounded).abs() > 1e-6 {
            return Err(Error::ZeroOnContour(r.center()));
        }
        Ok(rounded as i64)
    }
}

fn split(r: &Rect, frac: f64) -> Vec<Rect> {
    let xm = r.re_min + r.width() * frac;
    let ym = r.im_min + r.height() * frac;
    let (w, h) = (r.width(), r.height());
    if w > 2.0 * h {
        vec![Rect { re_max: xm, ..*r }, Rect { re_min: xm, ..*r }]
    } else if h > 2.0 * w {
        vec![Rect { im_max: ym, ..*r }, Rect { im_min: ym, ..*r }]
    } else {
        vec![
            Rect { re_max: xm, im_max: ym, ..*r },
            Rect { re_min: xm, im_max: ym, ..*r },
            Rect { re_max: xm, im_min: ym, ..*r },
            Rect { re_min: xm, im_min: ym, ..*r },
        ]
    }
}

/// Splits a long rectangle into tiles of aspect ratio at most 2.
fn tile(r: &Rect) -> Vec<Rect> {
    let (w, h) = (r.width(), r.height());
    if w > 2.0 * h {
        let k = (w / (2.0 * h)).ceil() as usize;
        (0..k)
            .map(|j| Rect {
                re_min: if j == 0 { r.re_min } else { r.re_min + w * j as f64 / k as f64 },
                re_max: if j + 1 == k { r.re_max } else { r.re_min + w * (j + 1) as f64 / k as f64 },
                ..*r
            })
            .collect()
    } else if h > 2.0 * w {
        let k = (h / (2.0 * w)).ceil() as usize;
        (0..k)
            .map(|j| Rect {
                im_min: if j == 0 { r.im_min } else { r.im_min + h * j as f64 / k as f64 },
                im_max: if j + 1 == k { r.im_max } else { r.im_min + h * (j + 1) as f64 / k as f64 },
                ..*r
            })
            .collect()
    } else {
        vec![*r]
    }
}

fn newton_in(f: &dyn Analytic, r: &Rect) -> Result<Option<Complex64>> {
    let slack = 0.05 * r.width().max(r.height());
    let region = r.grown(slack);
    let mut z = r.center();
    for _ in 0..60 {
        let v = f.eval(z)?;
        if v == Complex64::new(0.0, 0.0) {
            return Ok(Some(z));
        }
        let d = derivative(f, z)?.value;
        if !(d.norm() > 0.0) {
            return Ok(None);
        }
        let step = v / d;
        z -= step;
        if !region.contains(z) || !z.re.is_finite() {
            return Ok(None);
        }
        if step.norm() <= 1e-14 * (1.0 + z.norm()) {
            return Ok(Some(z));
        }
    }
    Ok(None)
}

enum CellOutcome {
    Empty,
    Found(Complex64),
    Split(Vec<(Rect, i64)>),
}

fn process_cell(c: &Contour<'_>, r: &Rect, count: i64) -> Result<CellOutcome> {
    if count == 0 {
        return Ok(CellOutcome::Empty);
    }
    if count < 0 {
        return Err(Error::CountMismatch { winding: count, found: 0 });
    }
    let size = r.width().max(r.height());
    if count == 1 {
        if let Some(z) = newton_in(c.f, r)? {
            return Ok(CellOutcome::Found(z));
        }
        if size < 1e-9 {
            return Err(Error::NewtonFailed(r.center()));
        }
    } else if size < 1e-7 {
        return Err(Error::MultipleZero(r.center(), r.center()));
    }
    let mut last = None;
    for &frac in &SPLIT_FRACTIONS {
        let kids = split(r, frac);
        let counts: Result<Vec<i64>> = kids.iter().map(|k| c.winding(k)).collect();
        match counts {
            Ok(cs) if cs.iter().sum::<i64>() == count => {
                return Ok(CellOutcome::Split(kids.into_iter().zip(cs).collect()));
            }
            Ok(cs) => last = Some(Error::CountMismatch { winding: count, found: cs.iter().sum::<i64>().max(0) as usize }),
            Err(e @ Error::ZeroOnContour(_)) => last = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last.unwrap_or(Error::ZeroOnContour(r.center())))
}

/// Zeros of `f` inside `window` by argument-principle subdivision and Newton
/// refinement. Output is ordered by nondecreasing modulus.
pub fn find_spectrum(f: &dyn Analytic, window: Rect) -> Result<Spectrum> {
    let contour = Contour::new(f);
    let mut last_err = None;
    for nudge in [0.0, 1e-5, 1e-4, 1e-3] {
        let w = window.grown(nudge);
        let tiles = tile(&w);
        let counts: Result<Vec<i64>> = exec::map_slice(&tiles, |t| contour.winding(t)).into_iter().collect();
        match counts {
            Ok(cs) => return finish(f, &contour, w, nudge, tiles.into_iter().zip(cs).collect()),
            Err(e @ Error::ZeroOnContour(_)) => last_err = Some(e),
            Err(e) => return Err(e),
        }
    }
    Err(last_err.unwrap_or(Error::ZeroOnContour(window.center())))
}

fn finish(f: &dyn Analytic, contour: &Contour<'_>, window: Rect, nudge: f64, cells: Vec<(Rect, i64)>) -> Result<Spectrum> {
    let winding_total: i64 = cells.iter().map(|c| c.1).sum();
    let mut pending = cells;
    let mut found = Vec::new();
    while !pending.is_empty() {
        let outcomes = exec::map_slice(&pending, |(r, n)| process_cell(contour, r, *n));
        let mut next = Vec::new();
        for o in outcomes {
            match o? {
                CellOutcome::Empty => {}
                CellOutcome::Found(z) => found.push(z),
                CellOutcome::Split(kids) => next.extend(kids.into_iter().filter(|k| k.1 != 0)),
            }
        }
        pending = next;
    }
    if found.len() as i64 != winding_total {
        return Err(Error::CountMismatch { winding: winding_total, found: found.len() });
    }
    let zeros: Vec<Result<Zero>> = exec::map_slice(&found, |&z| {
        let d = derivative(f, z)?.value;
        let residual = f.eval(z)?.norm();
        let scale = 1.0 + z.norm() * d.norm();
        if residual > 1e-10 * scale {
            return Err(Error::NewtonFailed(z));
        }
        if z.im.abs() < 1e-8 {
            return Err(Error::RealZeroFound(z));
        }
        Ok(Zero { lambda: z, dphi: d, abs_dphi: d.norm(), residual })
    });
    let mut zeros: Vec<Zero> = zeros.into_iter().collect::<Result<_>>()?;
    zeros.sort_by(|a, b| {
        a.lambda
            .norm()
            .total_cmp(&b.lambda.norm())
            .then(a.lambda.re.total_cmp(&b.lambda.re))
            .then(a.lambda.im.total_cmp(&b.lambda.im))
    });
    let mut margin = f64::INFINITY;
    for i in 0..zeros.len() {
        for j in i + 1..zeros.len() {
            let d = (zeros[i].lambda - zeros[j].lambda).norm();
            if d < 1e-6 {
                return Err(Error::MultipleZero(zeros[i].lambda, zeros[j].lambda));
            }
            margin = margin.min(d);
        }
    }
    Ok(Spectrum { zeros, window, nudge, winding_total, simplicity_margin: margin })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Up,
    Down,
}

/// Least-squares slope of `log|φ(±ir)|` against `r`.
#[derive(Debug, Clone, Serialize)]
pub struct IndicatorFit {
    pub direction: Direction,
    pub slope: f64,
    pub intercept: f64,
    pub rms_residual: f64,
    pub radii: Vec<f64>,
    pub log_abs: Vec<f64>,
}

/// Fits over the largest half of the radii (at least three).
pub fn estimate_indicator(f: &dyn Analytic, direction: Direction, radii: &[f64]) -> Result<IndicatorFit> {
    if radii.len() < 3 || radii.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidArgument("need at least three increasing radii".into()));
    }
    let sign = match direction {
        Direction::Up => 1.0,
        Direction::Down => -1.0,
    };
    let values = exec::map_slice(radii, |&r| f.eval(Complex64::new(0.0, sign * r)));
    let mut log_abs = Vec::with_capacity(radii.len());
    for (v, &r) in values.into_iter().zip(radii) {
        let a = v?.norm();
        if !a.is_finite() || a == 0.0 {
            return Err(Error::OverflowGuard(r));
        }
        log_abs.push(a.ln());
    }
    let start = (radii.len() / 2).min(radii.len() - 3);
    let (xs, ys) = (&radii[start..], &log_abs[start..]);
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rms = (xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum::<f64>() / m).sqrt();
    Ok(IndicatorFit { direction, slope, intercept, rms_residual: rms, radii: radii.to_vec(), log_abs })
}

/// `h_φ(±π/2)`, width `l` and exponent `d`.
#[derive(Debug, Clone, Serialize)]
pub struct IndicatorData {
    pub h_up: f64,
    pub h_down: f64,
    pub width: f64,
    pub d: f64,
    pub d_ge_half_width: bool,
    pub up: IndicatorFit,
    pub down: IndicatorFit,
}

pub const INDICATOR_TOL: f64 = 0.05;

pub fn indicator_data(f: &dyn Analytic, radii: &[f64]) -> Result<IndicatorData> {
    let up = estimate_indicator(f, Direction::Up, radii)?;
    let down = estimate_indicator(f, Direction::Down, radii)?;
    let (h_up, h_down) = (up.slope, down.slope);
    let width = h_up + h_down;
    let d = (h_down - h_up) / 2.0;
    Ok(IndicatorData { h_up, h_down, width, d, d_ge_half_width: d >= width / 2.0 - INDICATOR_TOL, up, down })
}

/// `e^{idz} ∏_{|λ_k| ≤ R_cut} (1 - z/λ_k)`.
///
/// Fewer than three zeros inside the cut is an error unless the cut already
/// holds the whole (finite) spectrum.
pub fn product_reconstruction(spec: &Spectrum, d: f64, z: Complex64, r_cut: f64) -> Result<Complex64> {
    let inside: Vec<Complex64> = spec.zeros.iter().map(|k| k.lambda).filter(|l| l.norm() <= r_cut).collect();
    if inside.len() < 3 && inside.len() < spec.len() {
        return Err(Error::InsufficientSpectrum { found: inside.len(), needed: 3 });
    }
    let i = Complex64::i();
    let mut p = (i * d * z).exp();
    for l in inside {
        p *= 1.0 - z / l;
    }
    Ok(p)
}

#[derive(Debug, Clone, Serialize)]
pub struct WidthReport {
    pub width: f64,
    pub zero_count: usize,
    pub verdict: Verdict,
    pub note: String,
}

/// Minimum zero count in the window for the infinite-spectrum hypothesis.
pub const WIDTH_MIN_ZEROS: usize = 10;

pub fn width_positivity_check(spec: &Spectrum, ind: &IndicatorData) -> WidthReport {
    let n = spec.len();
    if n < WIDTH_MIN_ZEROS {
        return WidthReport {
            width: ind.width,
            zero_count: n,
            verdict: Verdict::NotApplicable,
            note: format!("{n} zeros in the window; the infinite-spectrum hypothesis is not met"),
        };
    }
    let ok = ind.width > 0.01;
    WidthReport {
        width: ind.width,
        zero_count: n,
        verdict: if ok { Verdict::Pass } else { Verdict::Fail },
        note: if ok { "positive width".into() } else { "width vanishes although the spectrum is large".into() },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridFunction;
    use crate::model::build_integration_operator;
    use crate::c64;
    use std::f64::consts::LN_2;

    fn s1(n: usize) -> PerturbedModel {
        let op = build_integration_operator(1.0, n).unwrap();
        let one = GridFunction::constant(op.grid(), c64(1.0, 0.0));
        PerturbedModel::new(op, one.clone(), one).unwrap()
    }

    fn s1_zero(k: i32) -> Complex64 {
        c64(PI / 4.0 + 2.0 * PI * k as f64, -LN_2 / 2.0)
    }

    #[test]
    fn formulas_agree_and_normalize() {
        let model = s1(101);
        let det = DetFunction::new(&model);
        for f in [Formula::InnerProduct, Formula::Semigroup] {
            assert_eq!(det.eval_with(c64(0.0, 0.0), f).unwrap(), c64(1.0, 0.0));
        }
        for z in [c64(2.0, 0.5), c64(-13.0, -1.0), c64(30.0, 2.0)] {
            let a = det.eval_with(z, Formula::InnerProduct).unwrap();
            let b = det.eval_with(z, Formula::Semigroup).unwrap();
            assert!((a - b).norm() <= 1e-8 * a.norm().max(1.0), "z={z}: {a} vs {b}");
        }
    }

    #[test]
    fn segment_recurrence_matches_pointwise() {
        let model = s1(101);
        let det = DetFunction::new(&model);
        let (p, q) = (c64(-40.0, -2.0), c64(35.0, 1.5));
        let seg = det.eval_segment(p, q, 300).unwrap();
        for (k, v) in seg.iter().enumerate() {
            let z = p + (q - p) * (k as f64 / 300.0);
            let exact = det.eval(z).unwrap();
            assert!((v - exact).norm() < 1e-9 * exact.norm().max(1.0), "k = {k}");
        }
    }

    #[test]
    fn zero_g_gives_unit_determinant() {
        let op = build_integration_operator(1.0, 21).unwrap();
        let one = GridFunction::constant(op.grid(), c64(1.0, 0.0));
        let model = PerturbedModel::new(op.clone(), one, GridFunction::zeros(op.grid())).unwrap();
        let det = DetFunction::new(&model);
        for z in [c64(3.0, 1.0), c64(-40.0, -2.0)] {
            assert_eq!(det.eval(z).unwrap(), c64(1.0, 0.0));
        }
        let spec = find_spectrum(&det, Rect::new(-10.0, 10.0, -2.0, 2.0).unwrap()).unwrap();
        assert!(spec.is_empty());
    }

    #[test]
    fn derivatives_cross_check() {
        let model = s1(101);
        let det = DetFunction::new(&model);
        for z in [c64(1.0, 0.2), s1_zero(3)] {
            let fd = derivative(&det, z).unwrap();
            let exact = det.derivative_exact(z).unwrap();
            let closed = -(Complex64::i() * z).exp();
            assert!((exact - closed).norm() < 1e-11);
            assert!((fd.value - closed).norm() < 1e-8, "{} vs {closed}", fd.value);
            assert!(fd.mismatch() < 1e-6);
        }
    }

    #[test]
    fn synthetic_quadratic_zeros() {
        let (a, b) = (c64(2.0, 1.0), c64(-3.0, 2.0));
        let f = FnAnalytic(move |z: Complex64| Ok((1.0 - z / a) * (1.0 - z / b)));
        let spec = find_spectrum(&f, Rect::new(-5.0, 5.0, -1.0, 3.0).unwrap()).unwrap();
        assert_eq!(spec.len(), 2);
        assert!((spec.zeros[0].lambda - a).norm() < 1e-12);
        assert!((spec.zeros[1].lambda - b).norm() < 1e-12);
        for z in [c64(0.3, 0.1), c64(-1.0, 2.0)] {
            let p = product_reconstruction(&spec, 0.0, z, 10.0).unwrap();
            assert!((p - f.eval(z).unwrap()).norm() < 1e-12);
        }
    }

    #[test]
    fn s1_zeros_match_closed_form() {
        let model = s1(201);
        let det = DetFunction::new(&model);
        let spec = find_spectrum(&det, Rect::new(-1.0, 20.0, -2.0, 2.0).unwrap()).unwrap();
        // k = 0..3 lie in [-1, 20].
        assert_eq!(spec.len(), 4);
        for (k, z) in spec.zeros.iter().enumerate() {
            assert!((z.lambda - s1_zero(k as i32)).norm() < 1e-8);
        }
        assert!((spec.distance_to_real_line().unwrap() - LN_2 / 2.0).abs() < 1e-9);
    }

    #[test]
    fn real_zero_is_rejected() {
        let f = FnAnalytic(|z: Complex64| Ok(z - 1.0));
        assert!(matches!(
            find_spectrum(&f, Rect::new(-2.0, 2.0, -0.7, 0.9).unwrap()),
            Err(Error::RealZeroFound(_))
        ));
    }

    #[test]
    fn double_zero_is_rejected() {
        let f = FnAnalytic(|z: Complex64| Ok((z - c64(1.0, 1.0)).powi(2)));
        assert!(find_spectrum(&f, Rect::new(-2.0, 2.3, -0.7, 2.9).unwrap()).is_err());
    }

    #[test]
    fn indicator_of_s1() {
        let model = s1(201);
        let det = DetFunction::new(&model);
        let radii: Vec<f64> = (1..=12).map(|k| 5.0 * k as f64).collect();
        let ind = indicator_data(&det.far_field(), &radii).unwrap();
        assert!(ind.h_up.abs() < 0.05, "h_up {}", ind.h_up);
        assert!((ind.h_down - 1.0).abs() < 0.05, "h_down {}", ind.h_down);
        assert!(ind.d_ge_half_width);
        let one = FnAnalytic(|_| Ok(c64(1.0, 0.0)));
        let flat = indicator_data(&one, &radii).unwrap();
        assert!(flat.h_up.abs() < 1e-12 && flat.h_down.abs() < 1e-12);
    }

    #[test]
    fn resolvent_route_is_limited_by_conditioning() {
        let model = s1(201);
        let det = DetFunction::new(&model);
        let exact = |y: f64| (c64(1.0, -1.0) + Complex64::i() * y.exp()).norm().ln();
        let near = det.eval(c64(0.0, -20.0)).unwrap().norm().ln();
        assert!((near - exact(20.0)).abs() < 1e-6);
        let far = det.eval(c64(0.0, -60.0)).unwrap().norm().ln();
        assert!((far - exact(60.0)).abs() > 1.0);
        let semi = det.far_field().eval(c64(0.0, -60.0)).unwrap().norm().ln();
        assert!((semi - exact(60.0)).abs() < 1e-8);
    }

    #[test]
    fn product_needs_zeros_inside_cut() {
        let zeros = (0..5)
            .map(|k| Zero { lambda: s1_zero(k), dphi: c64(1.0, 0.0), abs_dphi: 1.0, residual: 0.0 })
            .collect();
        let spec = Spectrum {
            zeros,
            window: Rect::new(0.0, 40.0, -1.0, 1.0).unwrap(),
            nudge: 0.0,
            winding_total: 5,
            simplicity_margin: 2.0 * PI,
        };
        assert_eq!(product_reconstruction(&spec, 0.5, c64(0.0, 0.0), 20.0).unwrap(), c64(1.0, 0.0));
        assert!(matches!(
            product_reconstruction(&spec, 0.5, c64(1.0, 0.0), 6.0),
            Err(Error::InsufficientSpectrum { found: 1, .. })
        ));
    }

    #[test]
    fn width_check_not_applicable_for_small_spectrum() {
        let spec = Spectrum {
            zeros: vec![],
            window: Rect::new(0.0, 1.0, 0.0, 1.0).unwrap(),
            nudge: 0.0,
            winding_total: 0,
            simplicity_margin: f64::INFINITY,
        };
        let one = FnAnalytic(|_| Ok(c64(1.0, 0.0)));
        let ind = indicator_data(&one, &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(width_positivity_check(&spec, &ind).verdict, Verdict::NotApplicable);
    }
}
