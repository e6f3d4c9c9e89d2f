//! The operator model: a discretized Volterra operator `B`, the rank-one
//! perturbation `K = B + (·, f) g`, resolvents of `B` and `A = K⁻¹`,
//! quasi-exponentials and the shift semigroup.
//!
//! Internally every vector is carried in coordinates `ṽ = Qᴴ W^{1/2} v`, where
//! `W` holds the quadrature weights and `Q` reduces `W^{1/2} B W^{-1/2}` to upper
//! Hessenberg form `H`. In these coordinates the quadrature inner product is the
//! Euclidean one, the `W`-adjoint of `B` is `Hᴴ`, and every shifted solve costs
//! `O(n²)`.

use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, Schur};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::grid::{Grid, GridFunction, GridKind};
use crate::linalg::{self, with_shifted_lu, CMatrix, CVector, HessenbergForm};

/// Threshold on `|φ(z)|` below which `z` is treated as a point of the spectrum.
pub const AT_SPECTRUM_TOL: f64 = 1e-12;

/// Target for the spectral-radius surrogate of quasinilpotency.
pub const QUASINILPOTENT_TOL: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum OperatorKind {
    CanonicalJa,
    GeneralKernel,
}

/// Discretization of `(Bh)(x) = i ∫_0^x k(x, s) h(s) ds` on a grid of `[0, a]`.
#[derive(Debug)]
pub struct VolterraOperator {
    grid: Arc<Grid>,
    kind: OperatorKind,
    matrix: CMatrix,
    sqrt_w: Vec<f64>,
    hess: HessenbergForm,
    radius: OnceLock<f64>,
}

impl VolterraOperator {
    /// The integration operator `J_a`.
    pub fn canonical(grid: Arc<Grid>) -> Arc<Self> {
        let s = grid.integration_matrix();
        let matrix = s.map(|v| Complex64::new(0.0, v));
        Self::assemble(grid, OperatorKind::CanonicalJa, matrix)
    }

    /// Volterra operator with a general kernel `k(x, s)`.
    pub fn with_kernel(grid: Arc<Grid>, kernel: impl Fn(f64, f64) -> Complex64) -> Arc<Self> {
        let s = grid.integration_matrix();
        let x = grid.nodes();
        let matrix = CMatrix::from_fn(grid.n(), grid.n(), |j, l| {
            Complex64::new(0.0, s[(j, l)]) * kernel(x[j], x[l])
        });
        Self::assemble(grid, OperatorKind::GeneralKernel, matrix)
    }

    /// Wraps an arbitrary matrix acting on grid values. Used for synthetic
    /// comparison models.
    pub fn from_matrix(grid: Arc<Grid>, matrix: CMatrix) -> Result<Arc<Self>> {
        if matrix.nrows() != grid.n() || matrix.ncols() != grid.n() {
            return Err(Error::InvalidDimension(format!(
                "matrix is {}x{}, grid has {} nodes",
                matrix.nrows(),
                matrix.ncols(),
                grid.n()
            )));
        }
        Ok(Self::assemble(grid, OperatorKind::GeneralKernel, matrix))
    }

    fn assemble(grid: Arc<Grid>, kind: OperatorKind, matrix: CMatrix) -> Arc<Self> {
        let sqrt_w: Vec<f64> = grid.weights().iter().map(|w| w.sqrt()).collect();
        let n = grid.n();
        let scaled = CMatrix::from_fn(n, n, |i, j| matrix[(i, j)] * (sqrt_w[i] / sqrt_w[j]));
        let hess = HessenbergForm::new(&scaled);
        Arc::new(Self { grid, kind, matrix, sqrt_w, hess, radius: OnceLock::new() })
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn kind(&self) -> OperatorKind {
        self.kind
    }

    pub fn a(&self) -> f64 {
        self.grid.a()
    }

    pub fn n(&self) -> usize {
        self.grid.n()
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.matrix
    }

    pub(crate) fn hessenberg(&self) -> &HessenbergForm {
        &self.hess
    }

    /// Spectral radius of the discretization (Schur form of `H`).
    pub fn spectral_radius(&self) -> f64 {
        *self.radius.get_or_init(|| {
            let schur = Schur::new(self.hess.to_dense());
            let (_, t) = schur.unpack();
            (0..t.nrows()).map(|i| t[(i, i)].norm()).fold(0.0, f64::max)
        })
    }

    /// Whether the spectral radius meets [`QUASINILPOTENT_TOL`]. In double
    /// precision the computed spectrum of a Volterra discretization sits near
    /// `|μ| ≈ a / ln(1/ε)`, so this is a diagnostic rather than a precondition.
    pub fn is_quasinilpotent(&self) -> bool {
        self.spectral_radius() <= QUASINILPOTENT_TOL
    }

    pub(crate) fn to_coords(&self, v: &[Complex64]) -> Vec<Complex64> {
        let scaled = CVector::from_iterator(v.len(), v.iter().zip(&self.sqrt_w).map(|(x, s)| x * *s));
        let c = self.hess.q().ad_mul(&scaled);
        c.as_slice().to_vec()
    }

    pub(crate) fn from_coords(&self, c: &[Complex64]) -> GridFunction {
        let v = self.hess.q() * CVector::from_column_slice(c);
        let values = v.iter().zip(&self.sqrt_w).map(|(x, s)| x / *s).collect();
        GridFunction::new(self.grid.clone(), values).expect("length matches grid")
    }

    fn check_grid(&self, h: &GridFunction) -> Result<()> {
        let g = h.grid();
        if Arc::ptr_eq(g, &self.grid) || (g.kind() == self.grid.kind() && g.a() == self.grid.a() && g.n() == self.grid.n()) {
            Ok(())
        } else {
            Err(Error::GridMismatch)
        }
    }

    /// `Bh`.
    pub fn apply(&self, h: &GridFunction) -> Result<GridFunction> {
        self.check_grid(h)?;
        let v = &self.matrix * CVector::from_column_slice(h.values());
        GridFunction::new(self.grid.clone(), v.as_slice().to_vec())
    }

    /// `B*h`, the adjoint with respect to the quadrature inner product.
    pub fn apply_adjoint(&self, h: &GridFunction) -> Result<GridFunction> {
        self.check_grid(h)?;
        let w = self.grid.weights();
        let wh = CVector::from_iterator(h.n(), h.values().iter().zip(w).map(|(x, w)| x * *w));
        let v = self.matrix.ad_mul(&wh);
        let values = v.iter().zip(w).map(|(x, w)| x / *w).collect();
        GridFunction::new(self.grid.clone(), values)
    }

    /// `(I - zB)⁻¹ h`.
    pub fn resolvent(&self, z: Complex64, h: &GridFunction) -> Result<GridFunction> {
        self.check_grid(h)?;
        let mut c = self.to_coords(h.values());
        with_shifted_lu(&self.hess, z, |lu| lu.solve(&mut c))?;
        Ok(self.from_coords(&c))
    }

    /// `(I - w B_*)⁻¹ h` with `B_* = -B*`.
    pub fn star_resolvent(&self, w: Complex64, h: &GridFunction) -> Result<GridFunction> {
        self.check_grid(h)?;
        let mut c = self.to_coords(h.values());
        // I + w Hᴴ = (I - ζ H)ᴴ with ζ = -conj(w).
        with_shifted_lu(&self.hess, -w.conj(), |lu| lu.solve_adjoint(&mut c))?;
        Ok(self.from_coords(&c))
    }
}

/// Convenience constructor for the canonical operator on a Chebyshev grid.
pub fn build_integration_operator(a: f64, n: usize) -> Result<Arc<VolterraOperator>> {
    Ok(VolterraOperator::canonical(Grid::new(GridKind::Chebyshev, a, n)?))
}

/// `(I - zB)⁻¹ h`.
pub fn resolvent_b(op: &VolterraOperator, z: Complex64, h: &GridFunction) -> Result<GridFunction> {
    op.resolvent(z, h)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    GSide,
    FStarSide,
}

/// Quasi-exponentials, the determinant and both resolvent pieces at one point,
/// kept in model coordinates.
#[derive(Debug, Clone)]
pub struct PointData {
    pub z: Complex64,
    pub phi: Complex64,
    /// Coordinates of `g(z)`.
    pub g_z: Vec<Complex64>,
    /// Coordinates of `f_*(z_*)`, `z_* = -conj(z)`.
    pub f_star: Vec<Complex64>,
}

impl PointData {
    pub fn g_norm(&self) -> f64 {
        linalg::norm(&self.g_z)
    }

    pub fn f_star_norm(&self) -> f64 {
        linalg::norm(&self.f_star)
    }
}

/// The triple `(B, f, g)`.
#[derive(Debug, Clone)]
pub struct PerturbedModel {
    op: Arc<VolterraOperator>,
    f: GridFunction,
    g: GridFunction,
    f_c: Vec<Complex64>,
    g_c: Vec<Complex64>,
    compat: (f64, f64),
}

impl PerturbedModel {
    pub fn new(op: Arc<VolterraOperator>, f: GridFunction, g: GridFunction) -> Result<Self> {
        op.check_grid(&f)?;
        op.check_grid(&g)?;
        let f_c = op.to_coords(f.values());
        let g_c = op.to_coords(g.values());
        let mut model = Self { op, f, g, f_c, g_c, compat: (0.0, 0.0) };
        let k = model.k_coords();
        let compat = (linalg::smallest_singular_value(&k), linalg::smallest_singular_value(&k.adjoint()));
        let worst = compat.0.min(compat.1);
        if !(worst > AT_SPECTRUM_TOL) {
            return Err(Error::Incompatible(worst));
        }
        model.compat = compat;
        Ok(model)
    }

    pub fn operator(&self) -> &Arc<VolterraOperator> {
        &self.op
    }

    pub fn grid(&self) -> &Arc<Grid> {
        self.op.grid()
    }

    pub fn f(&self) -> &GridFunction {
        &self.f
    }

    pub fn g(&self) -> &GridFunction {
        &self.g
    }

    pub fn a(&self) -> f64 {
        self.op.a()
    }

    /// Smallest singular values of `K` and `K*`.
    pub fn compat_residuals(&self) -> (f64, f64) {
        self.compat
    }

    pub(crate) fn f_coords(&self) -> &[Complex64] {
        &self.f_c
    }

    pub(crate) fn g_coords(&self) -> &[Complex64] {
        &self.g_c
    }

    /// `K` in model coordinates: `H + g̃ f̃ᴴ`.
    pub(crate) fn k_coords(&self) -> CMatrix {
        let n = self.op.n();
        let h = self.op.hess.to_dense();
        CMatrix::from_fn(n, n, |i, j| h[(i, j)] + self.g_c[i] * self.f_c[j].conj())
    }

    /// `φ(z) = 1 - z (g(z), f)`.
    pub fn phi(&self, z: Complex64) -> Result<Complex64> {
        let mut c = self.g_c.clone();
        with_shifted_lu(&self.op.hess, z, |lu| lu.solve(&mut c))?;
        Ok(1.0 - z * linalg::dot(&c, &self.f_c))
    }

    /// `φ'(z) = -(g(z), f) - z (B g(z), f_*(z_*))`, from one factorization.
    pub fn phi_derivative(&self, z: Complex64) -> Result<Complex64> {
        let p = self.point_data(z)?;
        let bg = self.op.hess.apply(&p.g_z);
        Ok(-linalg::dot(&p.g_z, &self.f_c) - z * linalg::dot(&bg, &p.f_star))
    }

    /// `g(z)`, `f_*(z_*)` and `φ(z)` from a single factorization.
    pub fn point_data(&self, z: Complex64) -> Result<PointData> {
        let mut g_z = self.g_c.clone();
        let mut f_star = self.f_c.clone();
        with_shifted_lu(&self.op.hess, z, |lu| {
            lu.solve(&mut g_z);
            lu.solve_adjoint(&mut f_star);
        })?;
        let phi = 1.0 - z * linalg::dot(&g_z, &self.f_c);
        Ok(PointData { z, phi, g_z, f_star })
    }

    /// Coordinates of `g(z)` (g side) or `f_*(z)` (f_* side).
    pub(crate) fn quasi_exponential_coords(&self, z: Complex64, which: Side) -> Result<Vec<Complex64>> {
        match which {
            Side::GSide => {
                let mut c = self.g_c.clone();
                with_shifted_lu(&self.op.hess, z, |lu| lu.solve(&mut c))?;
                Ok(c)
            }
            Side::FStarSide => {
                let mut c = self.f_c.clone();
                with_shifted_lu(&self.op.hess, -z.conj(), |lu| lu.solve_adjoint(&mut c))?;
                Ok(c)
            }
        }
    }

    /// `g(z) = (I - zB)⁻¹ g` or `f_*(z) = (I - z B_*)⁻¹ f`.
    pub fn quasi_exponential(&self, z: Complex64, which: Side) -> Result<GridFunction> {
        Ok(self.op.from_coords(&self.quasi_exponential_coords(z, which)?))
    }

    /// `Kh = Bh + (h, f) g`.
    pub fn apply_k(&self, h: &GridFunction) -> Result<GridFunction> {
        let bh = self.op.apply(h)?;
        bh.add(&self.g.scale(h.inner(&self.f)?))
    }

    /// Resolvent of `A` in coordinates: `H(I - zH)⁻¹h̃ + φ(z)⁻¹ ⟨h̃, f̃_*(z_*)⟩ g̃(z)`.
    pub(crate) fn resolvent_a_coords(&self, z: Complex64, h: &[Complex64]) -> Result<Vec<Complex64>> {
        let mut x = h.to_vec();
        let mut g_z = self.g_c.clone();
        let mut f_star = self.f_c.clone();
        with_shifted_lu(&self.op.hess, z, |lu| {
            lu.solve(&mut x);
            lu.solve(&mut g_z);
            lu.solve_adjoint(&mut f_star);
        })?;
        let phi = 1.0 - z * linalg::dot(&g_z, &self.f_c);
        if phi.norm() <= AT_SPECTRUM_TOL {
            return Err(Error::AtSpectrum { z, abs_phi: phi.norm() });
        }
        let coef = linalg::dot(h, &f_star) / phi;
        let mut out = self.op.hess.apply(&x);
        for (o, gz) in out.iter_mut().zip(&g_z) {
            *o += coef * gz;
        }
        Ok(out)
    }

    /// Adjoint of the coordinate resolvent of `A` applied to `u`.
    #[cfg(test)]
    pub(crate) fn resolvent_a_adjoint_coords(&self, z: Complex64, u: &[Complex64]) -> Result<Vec<Complex64>> {
        // (H R)ᴴ u = Rᴴ Hᴴ u and (⟨·, f̃_*⟩ g̃_z)ᴴ u = ⟨u, g̃_z⟩ f̃_*.
        let mut y = self.op.hess.apply_adjoint(u);
        let mut g_z = self.g_c.clone();
        let mut f_star = self.f_c.clone();
        with_shifted_lu(&self.op.hess, z, |lu| {
            lu.solve_adjoint(&mut y);
            lu.solve(&mut g_z);
            lu.solve_adjoint(&mut f_star);
        })?;
        let phi = 1.0 - z * linalg::dot(&g_z, &self.f_c);
        if phi.norm() <= AT_SPECTRUM_TOL {
            return Err(Error::AtSpectrum { z, abs_phi: phi.norm() });
        }
        let coef = linalg::dot(u, &g_z) / phi.conj();
        for (o, fs) in y.iter_mut().zip(&f_star) {
            *o += coef * fs;
        }
        Ok(y)
    }

    /// `(A - z)⁻¹ h` by the split `B(I - zB)⁻¹h + φ(z)⁻¹ (h, f_*(z_*)) g(z)`.
    pub fn resolvent_a(&self, z: Complex64, h: &GridFunction) -> Result<GridFunction> {
        self.op.check_grid(h)?;
        let c = self.op.to_coords(h.values());
        Ok(self.op.from_coords(&self.resolvent_a_coords(z, &c)?))
    }

    /// `K(I - zK)⁻¹ h` by a dense solve with the rank-one-updated matrix.
    pub fn resolvent_a_dense(&self, z: Complex64, h: &GridFunction) -> Result<GridFunction> {
        self.op.check_grid(h)?;
        let n = self.op.n();
        let k = self.k_coords();
        let shifted = CMatrix::identity(n, n) - &k * z;
        let rhs = CVector::from_vec(self.op.to_coords(h.values()));
        let x = shifted
            .lu()
            .solve(&rhs)
            .ok_or(Error::SingularSolve { z, row: 0, pivot: 0.0 })?;
        let y = &k * x;
        Ok(self.op.from_coords(y.as_slice()))
    }
}

/// The shift `(V(t)h)(x) = h(x - t)` for `x ≥ t`, zero otherwise.
#[derive(Debug, Clone, Copy)]
pub struct SemigroupAction {
    t: f64,
}

impl SemigroupAction {
    pub fn new(op: &VolterraOperator, t: f64) -> Result<Self> {
        if op.kind() != OperatorKind::CanonicalJa {
            return Err(Error::UnsupportedKind);
        }
        if !(0.0..=op.a()).contains(&t) {
            return Err(Error::InvalidArgument(format!("shift {t} outside [0, {}]", op.a())));
        }
        Ok(Self { t })
    }

    pub fn t(&self) -> f64 {
        self.t
    }

    pub fn apply(&self, h: &GridFunction) -> GridFunction {
        let grid = h.grid();
        if self.t == 0.0 {
            return h.clone();
        }
        let values = grid
            .nodes()
            .iter()
            .map(|&x| if x >= self.t { h.eval(x - self.t) } else { Complex64::new(0.0, 0.0) })
            .collect();
        GridFunction::new(grid.clone(), values).expect("length matches grid")
    }
}

pub fn semigroup_apply(op: &VolterraOperator, t: f64, h: &GridFunction) -> Result<GridFunction> {
    op.check_grid(h)?;
    Ok(SemigroupAction::new(op, t)?.apply(h))
}

/// `∫_0^a e^{izt} V(t)h dt` at every node, by the composite trapezoid rule in
/// `t` with `steps` intervals on `[0, x_j]`.
pub fn semigroup_integral(op: &VolterraOperator, z: Complex64, h: &GridFunction, steps: usize) -> Result<GridFunction> {
    op.check_grid(h)?;
    if op.kind() != OperatorKind::CanonicalJa {
        return Err(Error::UnsupportedKind);
    }
    if steps == 0 {
        return Err(Error::InvalidArgument("steps must be positive".into()));
    }
    let i = Complex64::i();
    let values = op
        .grid()
        .nodes()
        .iter()
        .map(|&x| {
            if x == 0.0 {
                return Complex64::new(0.0, 0.0);
            }
            let dt = x / steps as f64;
            let mut s = Complex64::new(0.0, 0.0);
            for k in 0..=steps {
                let t = dt * k as f64;
                let w = if k == 0 || k == steps { 0.5 } else { 1.0 };
                s += (i * z * t).exp() * h.eval(x - t) * w;
            }
            s * dt
        })
        .collect();
    GridFunction::new(op.grid().clone(), values)
}

/// `∫_0^a ‖V(t)h‖² dt`, evaluated with the grid's own rule in `t`.
pub fn semigroup_energy(op: &VolterraOperator, h: &GridFunction) -> Result<f64> {
    op.check_grid(h)?;
    if op.kind() != OperatorKind::CanonicalJa {
        return Err(Error::UnsupportedKind);
    }
    // ‖V(t)h‖² = ∫_0^{a-t} |h|², so the energy is ∫_0^a (a - s)|h(s)|² ds.
    let grid = op.grid();
    Ok(grid
        .nodes()
        .iter()
        .zip(grid.weights())
        .zip(h.values())
        .map(|((&s, &w), v)| w * (grid.a() - s) * v.norm_sqr())
        .sum())
}

/// `∫_{-R}^{R} ‖B(I - λB)⁻¹h‖² dλ` by the trapezoid rule with `m` intervals.
///
/// For the shift realization Plancherel gives the whole-line value
/// `2π ∫_0^a ‖V(t)h‖² dt`; see [`semigroup_energy`].
pub fn resolvent_b_square_integral(op: &VolterraOperator, h: &GridFunction, r: f64, m: usize) -> Result<f64> {
    op.check_grid(h)?;
    if op.kind() != OperatorKind::CanonicalJa {
        return Err(Error::UnsupportedKind);
    }
    if !(r > 0.0) || m < 2 {
        return Err(Error::InvalidArgument("need R > 0 and m ≥ 2".into()));
    }
    if h.is_zero() {
        return Ok(0.0);
    }
    let hc = op.to_coords(h.values());
    let dl = 2.0 * r / m as f64;
    let vals = crate::exec::map_range(m + 1, |k| -> Result<f64> {
        let lambda = Complex64::new(-r + dl * k as f64, 0.0);
        let mut c = hc.clone();
        with_shifted_lu(&op.hess, lambda, |lu| lu.solve(&mut c))?;
        let bc = op.hess.apply(&c);
        Ok(bc.iter().map(|v| v.norm_sqr()).sum())
    });
    let mut total = 0.0;
    for (k, v) in vals.into_iter().enumerate() {
        let w = if k == 0 || k == m { 0.5 } else { 1.0 };
        total += w * v?;
    }
    Ok(total * dl)
}

/// Dense `W`-adjoint matrix of `B` acting on grid values, `W⁻¹ Bᴴ W`.
pub fn adjoint_matrix(op: &VolterraOperator) -> CMatrix {
    let w = op.grid().weights();
    let n = op.n();
    let bh = op.matrix().adjoint();
    DMatrix::from_fn(n, n, |i, j| bh[(i, j)] * (w[j] / w[i]))
}
