//! Basisness diagnostics for the eigenfunction families `{g(λ_k)}` and
//! `{f_*(λ_{k*})}`: Carleson constants, Gram frame bounds, uniform minimality,
//! biorthogonality, right-regularity, linear resolvent growth and the weighted
//! resolvent estimates.
//!
//! Infinite-family statements are replaced by trends over nested truncations
//! and over window doubling; each report carries the raw numbers it was
//! judged on.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::detfun::Spectrum;
use crate::error::{Error, Result};
use crate::exec;
use crate::linalg::{self, CMatrix, ShiftedLu};
use crate::model::{PerturbedModel, AT_SPECTRUM_TOL};
use crate::weights::{sample_points, DeltaField, STABLE_DRIFT};
use crate::{c64, Verdict};

/// Bands wider than this are reported as failing a two-sided estimate.
pub const BAND_LIMIT: f64 = 20.0;
/// Smallest admissible `|φ'(λ_k)|`.
pub const DERIVATIVE_FLOOR: f64 = 1e-12;
/// Probes closer than this to a computed zero are rejected.
pub const PROBE_MIN_DISTANCE: f64 = 1e-6;
pub const BIORTH_TOL: f64 = 1e-7;
pub const PROBE_PAIR_TOL: f64 = 1e-6;

// ---------------------------------------------------------------- Carleson

/// `inf_k ∏_{j ≠ k} |(μ_k - μ_j) / (μ_k - conj μ_j)|` over the `k_trunc`
/// nearest neighbours of each point (all of them for `None`).
///
/// "Nearest" is in the pseudo-hyperbolic distance, i.e. by the factor itself,
/// so the most contracting factors enter first and the value is
/// nonincreasing in `k_trunc`. Points in the lower half-plane are reflected;
/// mixing both half-planes is an error, as is a point on the axis or a
/// repeated point.
pub fn carleson_constant(points: &[Complex64], k_trunc: Option<usize>) -> Result<f64> {
    if let Some(p) = points.iter().find(|p| p.im == 0.0) {
        return Err(Error::PointOnAxis(*p));
    }
    let upper = points.iter().filter(|p| p.im > 0.0).count();
    if upper != 0 && upper != points.len() {
        return Err(Error::MixedHalfPlanes);
    }
    let pts: Vec<Complex64> = if upper == 0 { points.iter().map(|p| p.conj()).collect() } else { points.to_vec() };
    let n = pts.len();
    let k_trunc = k_trunc.unwrap_or(n).min(n.saturating_sub(1));
    let products = exec::map_range(n, |k| -> Result<f64> {
        let mk = pts[k];
        let mut factors: Vec<f64> =
            (0..n).filter(|&j| j != k).map(|j| (mk - pts[j]).norm() / (mk - pts[j].conj()).norm()).collect();
        if factors.contains(&0.0) {
            return Err(Error::InvalidArgument(format!("repeated point {mk}")));
        }
        factors.sort_by(f64::total_cmp);
        Ok(factors.iter().take(k_trunc).product())
    });
    let mut inf = 1.0f64;
    for p in products {
        inf = inf.min(p?);
    }
    Ok(inf)
}

/// Carleson constants of `Λ ∩ ℂ₊` and `Λ ∩ ℂ₋`, `None` for an empty half.
pub fn carleson_per_half_plane(points: &[Complex64]) -> Result<(Option<f64>, Option<f64>)> {
    let up: Vec<Complex64> = points.iter().copied().filter(|p| p.im > 0.0).collect();
    let down: Vec<Complex64> = points.iter().copied().filter(|p| p.im < 0.0).collect();
    if let Some(p) = points.iter().find(|p| p.im == 0.0) {
        return Err(Error::PointOnAxis(*p));
    }
    let c = |v: &[Complex64]| -> Result<Option<f64>> {
        if v.is_empty() {
            Ok(None)
        } else {
            carleson_constant(v, None).map(Some)
        }
    };
    Ok((c(&up)?, c(&down)?))
}

// ---------------------------------------------------------------- families

/// Eigenvectors `g(λ_k)` of `A` and `f_*(λ_{k*})` of `A*`, in model
/// coordinates, with `φ'(λ_k)`.
#[derive(Debug, Clone)]
pub struct EigenFamily {
    lambdas: Vec<Complex64>,
    g: Vec<Vec<Complex64>>,
    f_star: Vec<Vec<Complex64>>,
    g_norms: Vec<f64>,
    f_star_norms: Vec<f64>,
    dphi: Vec<Complex64>,
}

impl EigenFamily {
    /// Family over the first `count` zeros of `spec` (all of them for `None`).
    pub fn from_model(model: &PerturbedModel, spec: &Spectrum, count: Option<usize>) -> Result<Self> {
        let zeros = &spec.zeros[..count.unwrap_or(spec.len()).min(spec.len())];
        if zeros.is_empty() {
            return Err(Error::EmptySpectrum);
        }
        let data = exec::map_slice(zeros, |z| model.point_data(z.lambda));
        let mut g = Vec::with_capacity(zeros.len());
        let mut f_star = Vec::with_capacity(zeros.len());
        for d in data {
            let d = d?;
            g.push(d.g_z);
            f_star.push(d.f_star);
        }
        Self::from_parts(
            zeros.iter().map(|z| z.lambda).collect(),
            g,
            f_star,
            zeros.iter().map(|z| z.dphi).collect(),
        )
    }

    /// Family from raw coordinate vectors. Vectors must be nonzero and all
    /// lists of equal length.
    pub fn from_parts(
        lambdas: Vec<Complex64>,
        g: Vec<Vec<Complex64>>,
        f_star: Vec<Vec<Complex64>>,
        dphi: Vec<Complex64>,
    ) -> Result<Self> {
        let n = lambdas.len();
        if g.len() != n || f_star.len() != n || dphi.len() != n {
            return Err(Error::InvalidDimension(format!(
                "family of {n} points with {} g-vectors, {} f*-vectors, {} derivatives",
                g.len(),
                f_star.len(),
                dphi.len()
            )));
        }
        let g_norms: Vec<f64> = g.iter().map(|v| linalg::norm(v)).collect();
        let f_star_norms: Vec<f64> = f_star.iter().map(|v| linalg::norm(v)).collect();
        if let Some(k) = (0..n).find(|&k| !(g_norms[k] > 0.0) || !(f_star_norms[k] > 0.0)) {
            return Err(Error::InvalidArgument(format!("zero eigenvector at λ = {}", lambdas[k])));
        }
        Ok(Self { lambdas, g, f_star, g_norms, f_star_norms, dphi })
    }

    pub fn len(&self) -> usize {
        self.lambdas.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lambdas.is_empty()
    }

    pub fn lambdas(&self) -> &[Complex64] {
        &self.lambdas
    }

    pub fn g_vector(&self, k: usize) -> &[Complex64] {
        &self.g[k]
    }

    pub fn f_star_vector(&self, k: usize) -> &[Complex64] {
        &self.f_star[k]
    }

    pub fn g_norms(&self) -> &[f64] {
        &self.g_norms
    }

    pub fn f_star_norms(&self) -> &[f64] {
        &self.f_star_norms
    }

    pub fn derivatives(&self) -> &[Complex64] {
        &self.dphi
    }

    /// Normalized Gram matrix `G_jk = (e_j, e_k)` of one side.
    pub fn gram(&self, side: FamilySide) -> CMatrix {
        let (vecs, norms) = match side {
            FamilySide::G => (&self.g, &self.g_norms),
            FamilySide::FStar => (&self.f_star, &self.f_star_norms),
        };
        let n = self.len();
        let rows = exec::map_range(n, |j| {
            (0..n).map(|k| linalg::dot(&vecs[j], &vecs[k]) / (norms[j] * norms[k])).collect::<Vec<_>>()
        });
        CMatrix::from_fn(n, n, |j, k| rows[j][k])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilySide {
    G,
    FStar,
}

// ---------------------------------------------------------------- frames

#[derive(Debug, Clone, Serialize)]
pub struct FrameReport {
    pub label: String,
    pub n: usize,
    pub truncations: Vec<usize>,
    /// Smallest Gram eigenvalue per truncation.
    pub lower: Vec<f64>,
    /// Largest Gram eigenvalue per truncation.
    pub upper: Vec<f64>,
    pub m_n: f64,
    pub big_m_n: f64,
    pub hermitian_defect: f64,
    pub verdict: Verdict,
}

/// Gram extremes of the normalized family on its leading `N/4`, `N/2`, `N`
/// vectors.
pub fn frame_report(family: &EigenFamily, side: FamilySide) -> Result<FrameReport> {
    let n = family.len();
    if n < 4 {
        return Err(Error::InsufficientSpectrum { found: n, needed: 4 });
    }
    let label = match side {
        FamilySide::G => "g",
        FamilySide::FStar => "f_star",
    };
    frame_report_from_gram(label, &family.gram(side), &[n / 4, n / 2, n])
}

/// Frame report of an arbitrary normalized Gram matrix over the given leading
/// truncation sizes (increasing, the last one the full size).
pub fn frame_report_from_gram(label: &str, gram: &CMatrix, truncations: &[usize]) -> Result<FrameReport> {
    let n = gram.nrows();
    if truncations.len() < 2 || truncations.windows(2).any(|w| w[0] >= w[1]) || truncations.last() != Some(&n) {
        return Err(Error::InvalidArgument(format!("truncations {truncations:?} do not end at {n}")));
    }
    let mut hermitian_defect = 0.0f64;
    for j in 0..n {
        for k in 0..n {
            hermitian_defect = hermitian_defect.max((gram[(j, k)] - gram[(k, j)].conj()).norm());
        }
    }
    let extremes = exec::map_slice(truncations, |&s| linalg::hermitian_extremes(&gram.view((0, 0), (s, s)).into_owned()));
    let lower: Vec<f64> = extremes.iter().map(|e| e.0).collect();
    let upper: Vec<f64> = extremes.iter().map(|e| e.1).collect();
    let m_n = *lower.last().unwrap();
    let big_m_n = *upper.last().unwrap();
    if m_n < 1e-12 {
        return Err(Error::DegenerateGram(m_n));
    }
    Ok(FrameReport {
        label: label.to_string(),
        n,
        truncations: truncations.to_vec(),
        verdict: frame_verdict(&lower, &upper),
        lower,
        upper,
        m_n,
        big_m_n,
        hermitian_defect,
    })
}

/// Degenerating when `m` decreases monotonically by at least a factor of two
/// across the truncations; stable when both extremes drift by less than 25%
/// between the last two truncations.
fn frame_verdict(lower: &[f64], upper: &[f64]) -> Verdict {
    let k = lower.len();
    let monotone = lower.windows(2).all(|w| w[1] < w[0]);
    if monotone && lower[0] >= 2.0 * lower[k - 1] {
        return Verdict::Degenerating;
    }
    let drift = |v: &[f64]| (v[k - 1] - v[k - 2]).abs() / v[k - 2].abs();
    if drift(lower) < STABLE_DRIFT && drift(upper) < STABLE_DRIFT {
        Verdict::Stable
    } else {
        Verdict::Inconclusive
    }
}

/// `∫₀ᵃ e^{iμt} dt`.
fn exp_integral(mu: Complex64, a: f64) -> Complex64 {
    let x = Complex64::i() * mu * a;
    if x.norm() < 1e-4 {
        a * (1.0 + x / 2.0 + x * x / 6.0 + x * x * x / 24.0)
    } else {
        (x.exp() - 1.0) / (Complex64::i() * mu)
    }
}

/// Closed-form normalized Gram matrix of `e^{iλ_k t}` in `L²(0, a)`.
pub fn exponential_gram(lambdas: &[Complex64], a: f64) -> CMatrix {
    let norms: Vec<f64> = lambdas.iter().map(|l| exp_integral(l - l.conj(), a).re.sqrt()).collect();
    let n = lambdas.len();
    let rows = exec::map_range(n, |j| {
        (0..n)
            .map(|k| exp_integral(lambdas[j] - lambdas[k].conj(), a) / (norms[j] * norms[k]))
            .collect::<Vec<_>>()
    });
    CMatrix::from_fn(n, n, |j, k| rows[j][k])
}

/// Exponents `k + δ` (or `k + δ·sign k`) for `k = -n..n`, ordered
/// `0, 1, -1, 2, -2, …` so that leading truncations are symmetric.
pub fn kadec_exponents(n: usize, delta: f64, signed: bool) -> Vec<f64> {
    let shift = |k: i64| if signed { delta * (k.signum() as f64) } else { delta };
    let mut out = vec![shift(0)];
    for k in 1..=n as i64 {
        out.push(k as f64 + shift(k));
        out.push(-k as f64 + shift(-k));
    }
    out
}

/// Frame report of the Kadec family on `[0, 2π]` with truncations at index
/// bounds `n/4`, `n/2`, `n`.
pub fn kadec_frame_report(n: usize, delta: f64, signed: bool) -> Result<FrameReport> {
    if n < 4 {
        return Err(Error::InvalidArgument(format!("Kadec index bound {n} is below 4")));
    }
    let exps: Vec<Complex64> = kadec_exponents(n, delta, signed).into_iter().map(|x| c64(x, 0.0)).collect();
    let gram = exponential_gram(&exps, 2.0 * PI);
    let sizes = [2 * (n / 4) + 1, 2 * (n / 2) + 1, 2 * n + 1];
    let label = format!("kadec delta={delta}{}", if signed { " signed" } else { "" });
    frame_report_from_gram(&label, &gram, &sizes)
}

// ---------------------------------------------------------------- estimates

#[derive(Debug, Clone, Default, Serialize)]
pub struct EstimateWindow {
    pub r: Option<f64>,
    pub strip_c: Option<f64>,
    pub probes: usize,
}

/// Two numbers bracketing an estimate and their ratio. For two-sided (`≍`)
/// estimates `left`/`right` are the band ends; for window-stability checks
/// they are the values at `R` and `2R`; for residuals `right` is the
/// tolerance.
#[derive(Debug, Clone, Serialize)]
pub struct EstimateReport {
    pub id: String,
    pub statement: String,
    pub left: f64,
    pub right: f64,
    pub ratio: f64,
    pub window: EstimateWindow,
    pub values: BTreeMap<String, f64>,
    pub seed: Option<u64>,
    pub verdict: Verdict,
}

impl EstimateReport {
    fn new(id: &str, statement: &str, left: f64, right: f64, ratio: f64, window: EstimateWindow) -> Self {
        Self {
            id: id.into(),
            statement: statement.into(),
            left,
            right,
            ratio,
            window,
            values: BTreeMap::new(),
            seed: None,
            verdict: Verdict::Inconclusive,
        }
    }

    /// `[min, max]` band of `values`, passing when `max/min < BAND_LIMIT`.
    fn band(id: &str, statement: &str, values: &[f64], window: EstimateWindow) -> Self {
        let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let ratio = hi / lo;
        let mut r = Self::new(id, statement, lo, hi, ratio, window);
        r.verdict = if ratio.is_finite() && ratio < BAND_LIMIT { Verdict::Pass } else { Verdict::Fail };
        r
    }

    /// Values at `R` and `2R`, stable when they differ by less than 25%.
    fn doubling(id: &str, statement: &str, at_r: f64, at_2r: f64, window: EstimateWindow) -> Self {
        let ratio = at_r.max(at_2r) / at_r.min(at_2r);
        let mut r = Self::new(id, statement, at_r, at_2r, ratio, window);
        r.verdict = if !ratio.is_finite() {
            Verdict::Fail
        } else if ratio - 1.0 < STABLE_DRIFT {
            Verdict::Stable
        } else {
            Verdict::Growing
        };
        r
    }

    /// Largest residual against a tolerance.
    fn residual(id: &str, statement: &str, worst: f64, tol: f64, window: EstimateWindow) -> Self {
        let mut r = Self::new(id, statement, worst, tol, (worst / tol).max(f64::MIN_POSITIVE), window);
        r.verdict = if worst <= tol { Verdict::Pass } else { Verdict::Fail };
        r
    }

    fn with(mut self, key: &str, value: f64) -> Self {
        self.values.insert(key.into(), value);
        self
    }
}

/// `‖f_*(λ_{k*})‖ ‖g(λ_k)‖ / |φ'(λ_k)|` over the family.
pub fn uniform_minimality(family: &EigenFamily) -> Result<EstimateReport> {
    if family.is_empty() {
        return Err(Error::EmptySpectrum);
    }
    let mut q = Vec::with_capacity(family.len());
    for k in 0..family.len() {
        let d = family.dphi[k].norm();
        if d < DERIVATIVE_FLOOR {
            return Err(Error::DerivativeTooSmall { at: family.lambdas[k], value: d });
        }
        q.push(family.f_star_norms[k] * family.g_norms[k] / d);
    }
    let window = EstimateWindow { probes: family.len(), ..Default::default() };
    Ok(EstimateReport::band(
        "uniform_minimality",
        "‖f_*(λ_k*)‖·‖g(λ_k)‖ / |φ'(λ_k)| over the eigenvalues",
        &q,
        window,
    ))
}

/// Residuals of the three biorthogonality identities: probe pairs against the
/// divided difference of `φ`, eigenvalue/probe pairs, and eigenvalue pairs.
///
/// Every residual is relative to `‖g‖‖f_*‖` of the pair, except the diagonal
/// of the eigenvalue block, which is relative to `|φ'(λ_k)|`.
pub fn biorthogonality_residuals(
    model: &PerturbedModel,
    family: &EigenFamily,
    probes: &[Complex64],
) -> Result<EstimateReport> {
    let data: Vec<_> = exec::map_slice(probes, |&z| model.point_data(z)).into_iter().collect::<Result<_>>()?;
    let det = crate::detfun::DetFunction::new(model);
    let dphi: Vec<Complex64> = exec::map_slice(probes, |&z| crate::detfun::derivative(&det, z).map(|d| d.value))
        .into_iter()
        .collect::<Result<_>>()?;

    let mut pairs = 0.0f64;
    for (i, p) in data.iter().enumerate() {
        for (j, q) in data.iter().enumerate() {
            let lhs = linalg::dot(&p.g_z, &q.f_star);
            let rhs = if i == j { -dphi[i] } else { (p.phi - q.phi) / (q.z - p.z) };
            pairs = pairs.max((lhs - rhs).norm() / (p.g_norm() * q.f_star_norm()));
        }
    }

    let mut eigen_probe = 0.0f64;
    for k in 0..family.len() {
        for q in &data {
            let lhs = linalg::dot(&family.g[k], &q.f_star);
            let rhs = -q.phi / (q.z - family.lambdas[k]);
            eigen_probe = eigen_probe.max((lhs - rhs).norm() / (family.g_norms[k] * q.f_star_norm()));
        }
    }

    let n = family.len();
    let rows = exec::map_range(n, |k| {
        let mut diag = 0.0f64;
        let mut off = 0.0f64;
        for j in 0..n {
            let v = linalg::dot(&family.g[k], &family.f_star[j]);
            if j == k {
                diag = (v + family.dphi[k]).norm() / family.dphi[k].norm();
            } else {
                off = off.max(v.norm() / (family.g_norms[k] * family.f_star_norms[j]));
            }
        }
        (diag, off)
    });
    let diagonal = rows.iter().map(|r| r.0).fold(0.0, f64::max);
    let off_diagonal = rows.iter().map(|r| r.1).fold(0.0, f64::max);
    let eigen = diagonal.max(off_diagonal);

    let window = EstimateWindow { probes: probes.len(), ..Default::default() };
    let mut report = EstimateReport::residual(
        "biorthogonality",
        "(g(λ_k), f_*(λ_j*)) + δ_jk φ'(λ_k) over eigenvalue pairs",
        eigen,
        BIORTH_TOL,
        window,
    )
    .with("probe_pairs", pairs)
    .with("eigen_probe", eigen_probe)
    .with("diagonal", diagonal)
    .with("off_diagonal", off_diagonal);
    if pairs > PROBE_PAIR_TOL || eigen_probe > PROBE_PAIR_TOL {
        report.verdict = Verdict::Fail;
    }
    Ok(report)
}

/// Sampled kernel map `h ↦ √Δ (h, g(x_j)) / ‖g(x_j)‖` on `m` cell centers of
/// `[-R, R]`. `M` is its largest singular value squared; `m` is the smallest
/// on the span of the modes `e^{iωt}`, `ω ∈ (2π/a)ℤ`, `|ω| ≤ R/4`. Endpoint
/// jumps of such combinations leak `O(p/R)` of their energy past the window,
/// about 5% at this band edge and twice that at `R/2`.
pub fn right_regularity_bounds(model: &PerturbedModel, r: f64, m: usize) -> Result<EstimateReport> {
    let x = sample_points(r, m)?;
    let dx = 2.0 * r / m as f64;
    let rows: Vec<Vec<Complex64>> = exec::map_slice(&x, |&t| -> Result<Vec<Complex64>> {
        let g = model.quasi_exponential_coords(c64(t, 0.0), crate::model::Side::GSide)?;
        let ng = linalg::norm(&g);
        if !(ng > 0.0) {
            return Err(Error::NonpositiveWeight { x: t, value: ng * ng });
        }
        let s = dx.sqrt() / ng;
        Ok(g.into_iter().map(|v| v * s).collect())
    })
    .into_iter()
    .collect::<Result<_>>()?;

    // T^H T = Σ_j r_j r_jᴴ, accumulated in fixed chunks for a
    // schedule-independent sum.
    let n = model.grid().n();
    const CHUNK: usize = 128;
    let chunks = exec::map_range(rows.len().div_ceil(CHUNK), |c| {
        let part = &rows[c * CHUNK..((c + 1) * CHUNK).min(rows.len())];
        let t = CMatrix::from_fn(part.len(), n, |j, l| part[j][l]);
        t.transpose() * t.map(|v| v.conj())
    });
    let mut gram = CMatrix::zeros(n, n);
    for c in chunks {
        gram += c;
    }
    let (_, big_m) = linalg::hermitian_extremes(&gram);

    let op = model.operator();
    let a = model.a();
    let kmax = ((r / 4.0) * a / (2.0 * PI)).floor() as i64;
    let modes: Vec<Vec<Complex64>> = (-kmax..=kmax)
        .map(|k| {
            let w = 2.0 * PI * k as f64 / a;
            let v: Vec<Complex64> = op.grid().nodes().iter().map(|&t| (Complex64::i() * w * t).exp()).collect();
            op.to_coords(&v)
        })
        .collect();
    let p = modes.len();
    let e = CMatrix::from_fn(n, p, |l, k| modes[k][l]);
    let q = e.qr().q();
    let restricted = q.adjoint() * &gram * &q;
    let (small_m, band_m) = linalg::hermitian_extremes(&restricted);

    // A single high grid mode, far outside what the window resolves.
    let k_top = (n / 4) as f64;
    let w_top = 2.0 * PI * k_top / a;
    let top: Vec<Complex64> = op.grid().nodes().iter().map(|&t| (Complex64::i() * w_top * t).exp()).collect();
    let top = op.to_coords(&top);
    let gt = &gram * CVec::from_column_slice(&top);
    let captured = linalg::dot(gt.as_slice(), &top).re / (linalg::norm(&top).powi(2) * big_m);

    let window = EstimateWindow { r: Some(r), strip_c: None, probes: m };
    let mut report = EstimateReport::new(
        "right_regularity",
        "extreme singular values squared of h ↦ (h, g(x))/‖g(x)‖ sampled on [-R, R]",
        small_m,
        big_m,
        big_m / small_m,
        window,
    )
    .with("band_modes", p as f64)
    .with("band_upper", band_m)
    .with("top_mode_frequency", w_top)
    .with("top_mode_captured", captured);
    report.verdict = if small_m > 1e-8 * big_m { Verdict::Pass } else { Verdict::Fail };
    Ok(report)
}

type CVec = linalg::CVector;

/// An operator family whose resolvent norm can be sampled.
pub trait ResolventAction: Sync {
    /// `‖(A - z)⁻¹‖`.
    fn resolvent_norm(&self, z: Complex64) -> Result<f64>;
}

impl ResolventAction for PerturbedModel {
    fn resolvent_norm(&self, z: Complex64) -> Result<f64> {
        let h = self.operator().hessenberg();
        let lu = ShiftedLu::new(h, z)?;
        let mut g_z = self.g_coords().to_vec();
        let mut f_star = self.f_coords().to_vec();
        lu.solve(&mut g_z);
        lu.solve_adjoint(&mut f_star);
        let phi = 1.0 - z * linalg::dot(&g_z, self.f_coords());
        if phi.norm() <= AT_SPECTRUM_TOL {
            return Err(Error::AtSpectrum { z, abs_phi: phi.norm() });
        }
        let apply = |x: &[Complex64]| {
            let mut y = x.to_vec();
            lu.solve(&mut y);
            let mut out = h.apply(&y);
            let c = linalg::dot(x, &f_star) / phi;
            out.iter_mut().zip(&g_z).for_each(|(o, g)| *o += c * g);
            out
        };
        let apply_adjoint = |u: &[Complex64]| {
            let mut y = h.apply_adjoint(u);
            lu.solve_adjoint(&mut y);
            let c = linalg::dot(u, &g_z) / phi.conj();
            y.iter_mut().zip(&f_star).for_each(|(o, f)| *o += c * f);
            y
        };
        Ok(linalg::power_norm(h.n(), apply, apply_adjoint, 400, 1e-11))
    }
}

/// A dense matrix with a known spectrum; the resolvent norm comes from an SVD.
#[derive(Debug, Clone)]
pub struct DenseOperator {
    pub matrix: CMatrix,
    pub eigenvalues: Vec<Complex64>,
}

impl ResolventAction for DenseOperator {
    fn resolvent_norm(&self, z: Complex64) -> Result<f64> {
        let n = self.matrix.nrows();
        let shifted = &self.matrix - CMatrix::identity(n, n) * z;
        let s = shifted.singular_values();
        let smin = s.iter().cloned().fold(f64::INFINITY, f64::min);
        if !(smin > 0.0) {
            return Err(Error::AtSpectrum { z, abs_phi: 0.0 });
        }
        Ok(1.0 / smin)
    }
}

/// `‖R_z(A)‖·d(z)` over the probes, `d(z) = dist(z, Λ)`.
pub fn lrg_sample(op: &dyn ResolventAction, spectrum: &[Complex64], probes: &[Complex64]) -> Result<EstimateReport> {
    let field = DeltaField::from_points(spectrum.to_vec())?;
    if let Some(p) = probes.iter().find(|&&p| field.distance(p) < PROBE_MIN_DISTANCE) {
        return Err(Error::ProbeAtSpectrum(*p));
    }
    let vals: Vec<f64> = exec::map_slice(probes, |&z| op.resolvent_norm(z).map(|n| n * field.distance(z)))
        .into_iter()
        .collect::<Result<_>>()?;
    let window = EstimateWindow { probes: probes.len(), ..Default::default() };
    Ok(EstimateReport::band("lrg", "‖R_z(A)‖·dist(z, Λ) over the probes", &vals, window))
}

/// `nx × ny` probes on `[-r, r] × [im_lo, im_hi]`.
pub fn probe_grid(r: f64, im_lo: f64, im_hi: f64, nx: usize, ny: usize) -> Vec<Complex64> {
    let mut out = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        let y = if ny == 1 { im_lo } else { im_lo + (im_hi - im_lo) * j as f64 / (ny - 1) as f64 };
        for i in 0..nx {
            let x = if nx == 1 { 0.0 } else { -r + 2.0 * r * i as f64 / (nx - 1) as f64 };
            out.push(c64(x, y));
        }
    }
    out
}

/// `‖𝓛(z)‖ = ‖g(z)‖‖f_*(z_*)‖/|φ(z)|`, the norm of the rank-one part of the
/// resolvent.
pub fn rank_one_norm(model: &PerturbedModel, z: Complex64) -> Result<f64> {
    let p = model.point_data(z)?;
    if p.phi.norm() <= AT_SPECTRUM_TOL {
        return Err(Error::AtSpectrum { z, abs_phi: p.phi.norm() });
    }
    Ok(p.g_norm() * p.f_star_norm() / p.phi.norm())
}

#[derive(Debug, Clone, Serialize)]
pub struct SuiteConfig {
    pub r: f64,
    pub strip_c: f64,
    pub seed: u64,
    pub draws: usize,
    /// Quadrature step on the real line.
    pub step: f64,
    /// Horizontal probe spacing in the strip scans.
    pub probe_step: f64,
    /// Number of leading eigenvalues in the pole integral.
    pub eigen_count: usize,
}

impl SuiteConfig {
    pub fn new(r: f64, strip_c: f64, seed: u64) -> Self {
        Self { r, strip_c, seed, draws: 32, step: 0.1, probe_step: 0.5, eigen_count: 10 }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.r > 0.0 && self.strip_c > 0.0 && self.step > 0.0 && self.probe_step > 0.0 && self.draws > 0;
        if ok && self.r.is_finite() && self.eigen_count > 0 {
            Ok(())
        } else {
            Err(Error::InvalidArgument(format!("invalid estimate configuration {self:?}")))
        }
    }
}

/// `‖𝓛(z)‖δ(z)` over the strip `|Im z| ≤ c`, and `‖𝓛(z)‖` alone over the
/// wider band `|Im z| ≤ 3c`.
pub fn strip_estimates(model: &PerturbedModel, spec: &Spectrum, cfg: &SuiteConfig) -> Result<[EstimateReport; 2]> {
    cfg.validate()?;
    let delta = DeltaField::new(spec)?;
    let nx = (2.0 * cfg.r / cfg.probe_step).round() as usize + 1;
    let probes: Vec<Complex64> = probe_grid(cfg.r, -3.0 * cfg.strip_c, 3.0 * cfg.strip_c, nx, 13)
        .into_iter()
        .filter(|&z| delta.distance(z) >= PROBE_MIN_DISTANCE)
        .collect();
    let norms: Vec<f64> =
        exec::map_slice(&probes, |&z| rank_one_norm(model, z)).into_iter().collect::<Result<_>>()?;
    let in_strip: Vec<f64> = probes
        .iter()
        .zip(&norms)
        .filter(|(z, _)| z.im.abs() <= cfg.strip_c * (1.0 + 1e-12))
        .map(|(z, n)| n * delta.eval(*z))
        .collect();
    let est_m = EstimateReport::band(
        "rank_one_norm_strip",
        "‖L(z)‖·δ(z) over the strip |Im z| ≤ c",
        &in_strip,
        EstimateWindow { r: Some(cfg.r), strip_c: Some(cfg.strip_c), probes: in_strip.len() },
    );
    let (imin, lo) = norms.iter().enumerate().fold((0, f64::INFINITY), |b, (i, &v)| if v < b.1 { (i, v) } else { b });
    let hi = norms.iter().cloned().fold(0.0, f64::max);
    let mut below = EstimateReport::new(
        "rank_one_norm_lower",
        "inf of ‖L(z)‖ over the band |Im z| ≤ 3c",
        lo,
        hi,
        hi / lo,
        EstimateWindow { r: Some(cfg.r), strip_c: Some(3.0 * cfg.strip_c), probes: probes.len() },
    )
    .with("argmin_re", probes[imin].re)
    .with("argmin_im", probes[imin].im);
    below.verdict = if lo > 0.0 && lo.is_finite() { Verdict::Pass } else { Verdict::Fail };
    Ok([est_m, below])
}

/// `sup_k ∫_{-R}^{R} δ²(λ)/|λ_k - λ|² dλ` over the first `count` zeros.
pub fn pole_integral(spec: &Spectrum, r: f64, step: f64, count: usize) -> Result<f64> {
    let delta = DeltaField::new(spec)?;
    let m = (2.0 * r / step).ceil() as usize;
    let x = sample_points(r, m.max(crate::weights::MIN_SAMPLES))?;
    let dx = 2.0 * r / x.len() as f64;
    let d2: Vec<f64> = x.iter().map(|&t| delta.eval(c64(t, 0.0)).powi(2)).collect();
    let zeros: Vec<Complex64> = spec.points().into_iter().take(count).collect();
    Ok(zeros
        .iter()
        .map(|l| x.iter().zip(&d2).map(|(&t, d)| d / (l - t).norm_sqr()).sum::<f64>() * dx)
        .fold(0.0, f64::max))
}

pub fn pole_integral_report(spec: &Spectrum, cfg: &SuiteConfig) -> Result<EstimateReport> {
    cfg.validate()?;
    let at_r = pole_integral(spec, cfg.r, cfg.step / 2.0, cfg.eigen_count)?;
    let at_2r = pole_integral(spec, 2.0 * cfg.r, cfg.step / 2.0, cfg.eigen_count)?;
    Ok(EstimateReport::doubling(
        "pole_integral",
        "sup over leading λ_k of ∫ δ²(λ)/|λ_k - λ|² dλ on [-R, R] and [-2R, 2R]",
        at_r,
        at_2r,
        EstimateWindow { r: Some(cfg.r), strip_c: None, probes: cfg.eigen_count.min(spec.len()) },
    ))
}

/// Unit-norm random trigonometric polynomials of degree 8 in model
/// coordinates.
pub fn random_draws(model: &PerturbedModel, seed: u64, draws: usize) -> Vec<Vec<Complex64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let op = model.operator();
    let a = model.a();
    (0..draws)
        .map(|_| {
            let coef: Vec<(f64, Complex64)> = (-8..=8)
                .map(|k| {
                    let c = c64(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
                    (2.0 * PI * k as f64 / a, c)
                })
                .collect();
            let v: Vec<Complex64> = op
                .grid()
                .nodes()
                .iter()
                .map(|&t| coef.iter().map(|(w, c)| c * (Complex64::i() * w * t).exp()).sum())
                .collect();
            let mut h = op.to_coords(&v);
            let nh = linalg::norm(&h);
            h.iter_mut().for_each(|x| *x /= nh);
            h
        })
        .collect()
}

/// One pass over the real line for the integral estimates and the band on
/// `δ‖f_*‖‖g‖/|φ|`. Integrals run over `[-R, R]` with the midpoint rule.
pub fn real_line_estimates(
    model: &PerturbedModel,
    spec: &Spectrum,
    family: &EigenFamily,
    cfg: &SuiteConfig,
) -> Result<Vec<EstimateReport>> {
    cfg.validate()?;
    let delta = DeltaField::new(spec)?;
    let m = ((2.0 * cfg.r / cfg.step).ceil() as usize).max(crate::weights::MIN_SAMPLES);
    let x = sample_points(cfg.r, m)?;
    let dx = 2.0 * cfg.r / m as f64;
    let mut draws = random_draws(model, cfg.seed, cfg.draws);
    // Last draw: the normalized first eigenvector.
    draws.push(family.g[0].iter().map(|v| v / family.g_norms[0]).collect());
    let h = model.operator().hessenberg();
    let f_c = model.f_coords();
    let g_c = model.g_coords();

    struct Sample {
        ginv: f64,
        g_sq: f64,
        f_sq: f64,
        phi: Complex64,
        res: Vec<f64>,
        main1: Vec<f64>,
        main2: Vec<f64>,
    }
    let samples: Vec<Sample> = exec::map_slice(&x, |&t| -> Result<Sample> {
        let z = c64(t, 0.0);
        let lu = ShiftedLu::new(h, z)?;
        let mut g_z = g_c.to_vec();
        let mut f_star = f_c.to_vec();
        lu.solve(&mut g_z);
        lu.solve_adjoint(&mut f_star);
        let phi = 1.0 - z * linalg::dot(&g_z, f_c);
        if phi.norm() <= AT_SPECTRUM_TOL {
            return Err(Error::AtSpectrum { z, abs_phi: phi.norm() });
        }
        let d2 = delta.eval(z).powi(2);
        let g_sq = linalg::norm(&g_z).powi(2);
        let f_sq = linalg::norm(&f_star).powi(2);
        let w = d2 / phi.norm_sqr();
        let mut res = Vec::with_capacity(draws.len());
        let mut main1 = Vec::with_capacity(draws.len());
        let mut main2 = Vec::with_capacity(draws.len());
        for hv in &draws {
            // H(I - zH)⁻¹h = ((I - zH)⁻¹h - h)/z on the real line, z ≠ 0.
            let mut y = hv.clone();
            lu.solve(&mut y);
            let hf = linalg::dot(hv, &f_star);
            let coef = hf / phi;
            let r2: f64 = y.iter().zip(hv).zip(&g_z).map(|((yi, hi), gi)| ((yi - hi) / z + coef * gi).norm_sqr()).sum();
            res.push(r2 * d2);
            main1.push(w * g_sq * hf.norm_sqr());
            main2.push(w * f_sq * linalg::dot(hv, &g_z).norm_sqr());
        }
        Ok(Sample { ginv: delta.eval(z) * (f_sq * g_sq).sqrt() / phi.norm(), g_sq, f_sq, phi, res, main1, main2 })
    })
    .into_iter()
    .collect::<Result<_>>()?;

    let nd = draws.len();
    let integral = |pick: &dyn Fn(&Sample) -> &Vec<f64>, d: usize| samples.iter().map(|s| pick(s)[d]).sum::<f64>() * dx;
    let res: Vec<f64> = (0..nd).map(|d| integral(&|s| &s.res, d)).collect();
    let main1: Vec<f64> = (0..nd - 1).map(|d| integral(&|s| &s.main1, d)).collect();
    let main2: Vec<f64> = (0..nd - 1).map(|d| integral(&|s| &s.main2, d)).collect();
    let l0 = family.lambdas[0];
    let pole0 = x.iter().map(|&t| delta.eval(c64(t, 0.0)).powi(2) / (l0 - t).norm_sqr()).sum::<f64>() * dx;

    let win = |probes| EstimateWindow { r: Some(cfg.r), strip_c: None, probes };
    let mut out = Vec::new();
    let ginv: Vec<f64> = samples.iter().map(|s| s.ginv).collect();
    out.push(EstimateReport::band(
        "reciprocal_g_norm",
        "‖g(λ)‖·δ(λ)‖f_*(λ_*)‖/|φ(λ)| on the real line",
        &ginv,
        win(m),
    ));
    let mut r = EstimateReport::band(
        "weighted_resolvent_integral",
        "∫ ‖R_λ(A)h‖² δ²(λ) dλ / ‖h‖² over random h",
        &res[..nd - 1],
        win(m),
    )
    .with("eigenvector_draw", res[nd - 1])
    .with("eigenvector_pole_integral", pole0);
    r.seed = Some(cfg.seed);
    out.push(r);
    for (id, statement, v) in [
        ("weighted_g_integral", "∫ δ²|φ|⁻² ‖g(λ)‖² |(h, f_*(λ_*))|² dλ / ‖h‖² over random h", &main1),
        ("weighted_f_star_integral", "∫ δ²|φ|⁻² ‖f_*(λ_*)‖² |(h, g(λ))|² dλ / ‖h‖² over random h", &main2),
    ] {
        let mut r = EstimateReport::band(id, statement, v, win(m));
        r.seed = Some(cfg.seed);
        out.push(r);
    }

    // Norm expansions over the family on a thinned subset of the samples.
    let stride = (samples.len() / 200).max(1);
    let mut g_ratio = Vec::new();
    let mut f_ratio = Vec::new();
    for (s, &t) in samples.iter().zip(&x).step_by(stride) {
        let (mut sg, mut sf) = (0.0, 0.0);
        for k in 0..family.len() {
            let phik = (s.phi / ((t - family.lambdas[k]) * family.dphi[k])).norm_sqr();
            sg += phik * family.g_norms[k].powi(2);
            sf += phik * family.f_star_norms[k].powi(2);
        }
        g_ratio.push(s.g_sq / sg);
        f_ratio.push(s.f_sq / sf);
    }
    out.push(EstimateReport::band(
        "g_norm_expansion",
        "‖g(λ)‖² / Σ_k |φ_k(λ)|²‖g(λ_k)‖² on the real line",
        &g_ratio,
        win(g_ratio.len()),
    ));
    out.push(EstimateReport::band(
        "f_star_norm_expansion",
        "‖f_*(λ_*)‖² / Σ_k |φ_k(λ)|²‖f_*(λ_k*)‖² on the real line",
        &f_ratio,
        win(f_ratio.len()),
    ));
    Ok(out)
}

/// Every estimate of the suite, in a fixed order.
pub fn estimate_suite(
    model: &PerturbedModel,
    spec: &Spectrum,
    family: &EigenFamily,
    cfg: &SuiteConfig,
) -> Result<Vec<EstimateReport>> {
    let mut out = Vec::new();
    out.extend(strip_estimates(model, spec, cfg)?);
    out.push(pole_integral_report(spec, cfg)?);
    out.extend(real_line_estimates(model, spec, family, cfg)?);
    Ok(out)
}

// ---------------------------------------------------------------- expansions

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpansionTarget {
    /// `g(λ) = Σ_k φ_k(λ) g(λ_k)`.
    GAtLambda,
    /// `f_*(μ_*) = Σ_k conj φ_k(μ) f_*(λ_{k*})`.
    FStarAtMu,
}

/// Relative residual of the expansion truncated to the first `n` family
/// members, `φ_k(λ) = φ(λ) / ((λ - λ_k) φ'(λ_k))`.
pub fn expansion_residual(
    model: &PerturbedModel,
    family: &EigenFamily,
    target: ExpansionTarget,
    point: Complex64,
    n: usize,
) -> Result<f64> {
    if n > family.len() {
        return Err(Error::InvalidArgument(format!("truncation {n} exceeds family size {}", family.len())));
    }
    let p = model.point_data(point)?;
    if p.phi.norm() <= AT_SPECTRUM_TOL || family.lambdas.contains(&point) {
        return Err(Error::AtSpectrum { z: point, abs_phi: p.phi.norm() });
    }
    let (mut acc, basis) = match target {
        ExpansionTarget::GAtLambda => (p.g_z.clone(), &family.g),
        ExpansionTarget::FStarAtMu => (p.f_star.clone(), &family.f_star),
    };
    let scale = linalg::norm(&acc);
    for k in 0..n {
        let phik = p.phi / ((point - family.lambdas[k]) * family.dphi[k]);
        let c = match target {
            ExpansionTarget::GAtLambda => phik,
            ExpansionTarget::FStarAtMu => phik.conj(),
        };
        acc.iter_mut().zip(&basis[k]).for_each(|(a, b)| *a -= c * b);
    }
    Ok(linalg::norm(&acc) / scale)
}
