//! Grids on `[0, a]`, quadrature weights, and grid functions.
//!
//! Two discretizations are provided. [`GridKind::Chebyshev`] places nodes at
//! first-kind Chebyshev points and integrates with Fejér weights; the
//! indefinite-integral matrix is exact for polynomials of degree `n - 1`, so
//! quasi-exponentials `e^{izt}` are resolved to machine precision once `n`
//! exceeds the oscillation count of the window. [`GridKind::Trapezoid`] is the
//! uniform grid with composite trapezoid weights and cumulative trapezoid
//! integration, second-order accurate and strictly causal.

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GridKind {
    Chebyshev,
    Trapezoid,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    kind: GridKind,
    a: f64,
    nodes: Vec<f64>,
    weights: Vec<f64>,
    bary: Vec<f64>,
}

impl Grid {
    pub fn new(kind: GridKind, a: f64, n: usize) -> Result<Arc<Self>> {
        if n < 2 {
            return Err(Error::InvalidDimension(format!("grid size n = {n} < 2")));
        }
        if !(a > 0.0) || !a.is_finite() {
            return Err(Error::InvalidDimension(format!("interval length a = {a} must be positive")));
        }
        let (nodes, weights) = match kind {
            GridKind::Chebyshev => (chebyshev_nodes(a, n), fejer_weights(a, n)),
            GridKind::Trapezoid => {
                let h = a / (n - 1) as f64;
                let nodes = (0..n).map(|j| if j == n - 1 { a } else { j as f64 * h }).collect();
                let mut w = vec![h; n];
                w[0] = h / 2.0;
                w[n - 1] = h / 2.0;
                (nodes, w)
            }
        };
        let bary = match kind {
            GridKind::Chebyshev => chebyshev_bary(n),
            GridKind::Trapezoid => Vec::new(),
        };
        Ok(Arc::new(Self { kind, a, nodes, weights, bary }))
    }

    pub fn chebyshev(a: f64, n: usize) -> Result<Arc<Self>> {
        Self::new(GridKind::Chebyshev, a, n)
    }

    pub fn trapezoid(a: f64, n: usize) -> Result<Arc<Self>> {
        Self::new(GridKind::Trapezoid, a, n)
    }

    pub fn kind(&self) -> GridKind {
        self.kind
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn n(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Matrix of the map `h -> (x_j -> ∫_0^{x_j} h)` on grid values.
    pub fn integration_matrix(&self) -> DMatrix<f64> {
        match self.kind {
            GridKind::Chebyshev => chebyshev_integration_matrix(self.a, self.n()),
            GridKind::Trapezoid => {
                let n = self.n();
                let h = self.a / (n - 1) as f64;
                DMatrix::from_fn(n, n, |j, k| {
                    if j == 0 || k > j {
                        0.0
                    } else if k == 0 || k == j {
                        h / 2.0
                    } else {
                        h
                    }
                })
            }
        }
    }

    /// Evaluates the grid interpolant of `values` at `x` (barycentric for
    /// Chebyshev grids, piecewise linear for the uniform grid).
    pub fn interpolate(&self, values: &[Complex64], x: f64) -> Complex64 {
        let n = self.n();
        debug_assert_eq!(values.len(), n);
        match self.kind {
            GridKind::Chebyshev => {
                let mut num = Complex64::new(0.0, 0.0);
                let mut den = 0.0;
                for j in 0..n {
                    let d = x - self.nodes[j];
                    if d == 0.0 {
                        return values[j];
                    }
                    let c = self.bary[j] / d;
                    num += values[j] * c;
                    den += c;
                }
                num / den
            }
            GridKind::Trapezoid => {
                let h = self.a / (n - 1) as f64;
                let s = (x / h).clamp(0.0, (n - 1) as f64);
                let j = (s.floor() as usize).min(n - 2);
                let t = s - j as f64;
                values[j] * (1.0 - t) + values[j + 1] * t
            }
        }
    }

    /// Quadrature nodes and weights for `∫_lo^hi` built from this grid's rule
    /// mapped onto the subinterval.
    pub fn sub_rule(&self, lo: f64, hi: f64) -> (Vec<f64>, Vec<f64>) {
        let scale = (hi - lo) / self.a;
        let nodes = self.nodes.iter().map(|&x| lo + x * scale).collect();
        let weights = self.weights.iter().map(|&w| w * scale).collect();
        (nodes, weights)
    }
}

fn chebyshev_angle(j: usize, n: usize) -> f64 {
    std::f64::consts::PI * (2 * j + 1) as f64 / (2 * n) as f64
}

/// First-kind Chebyshev points mapped to `[0, a]`, ascending. Neither endpoint
/// is a node, which keeps the integration matrix injective.
fn chebyshev_nodes(a: f64, n: usize) -> Vec<f64> {
    (0..n).map(|j| a * (1.0 - chebyshev_angle(j, n).cos()) / 2.0).collect()
}

/// Fejér's first rule, exact for polynomials of degree `n - 1`.
fn fejer_weights(a: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let th = chebyshev_angle(j, n);
            let mut v = 1.0;
            for k in 1..=n / 2 {
                let kf = k as f64;
                v -= 2.0 * (2.0 * kf * th).cos() / (4.0 * kf * kf - 1.0);
            }
            v * a / n as f64
        })
        .collect()
}

fn chebyshev_bary(n: usize) -> Vec<f64> {
    (0..n)
        .map(|j| {
            let s = if j % 2 == 0 { 1.0 } else { -1.0 };
            s * chebyshev_angle(j, n).sin()
        })
        .collect()
}

/// Chebyshev spectral integration: values -> Chebyshev coefficients ->
/// antiderivative vanishing at the left endpoint -> values at the nodes.
fn chebyshev_integration_matrix(a: f64, n: usize) -> DMatrix<f64> {
    // On [-1, 1] the nodes are s_j = -cos θ_j, so T_k(s_j) = (-1)^k cos(k θ_j).
    let t_at = |k: usize, j: usize| -> f64 {
        let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
        sign * (k as f64 * chebyshev_angle(j, n)).cos()
    };
    let coeff = DMatrix::from_fn(n, n, |k, j| {
        let c = 2.0 / n as f64 * t_at(k, j);
        if k == 0 {
            c / 2.0
        } else {
            c
        }
    });
    let s: Vec<f64> = (0..n).map(|j| -chebyshev_angle(j, n).cos()).collect();
    let integral = DMatrix::from_fn(n, n, |j, k| match k {
        0 => s[j] + 1.0,
        1 => (s[j] * s[j] - 1.0) / 2.0,
        _ => {
            let kp = (k + 1) as f64;
            let km = (k - 1) as f64;
            let at_s = (t_at(k + 1, j) / kp - t_at(k - 1, j) / km) / 2.0;
            let sign_p = if (k + 1) % 2 == 0 { 1.0 } else { -1.0 };
            let sign_m = if (k - 1) % 2 == 0 { 1.0 } else { -1.0 };
            let at_minus_one = (sign_p / kp - sign_m / km) / 2.0;
            at_s - at_minus_one
        }
    });
    (integral * coeff) * (a / 2.0)
}

/// A complex-valued function sampled on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct GridFunction {
    grid: Arc<Grid>,
    values: Vec<Complex64>,
}

impl GridFunction {
    pub fn new(grid: Arc<Grid>, values: Vec<Complex64>) -> Result<Self> {
        if values.len() != grid.n() {
            return Err(Error::InvalidDimension(format!(
                "{} values for a grid of size {}",
                values.len(),
                grid.n()
            )));
        }
        Ok(Self { grid, values })
    }

    pub fn from_fn(grid: &Arc<Grid>, f: impl Fn(f64) -> Complex64) -> Self {
        let values = grid.nodes().iter().map(|&x| f(x)).collect();
        Self { grid: Arc::clone(grid), values }
    }

    pub fn zeros(grid: &Arc<Grid>) -> Self {
        Self { grid: Arc::clone(grid), values: vec![Complex64::new(0.0, 0.0); grid.n()] }
    }

    pub fn constant(grid: &Arc<Grid>, c: Complex64) -> Self {
        Self::from_fn(grid, |_| c)
    }

    pub fn grid(&self) -> &Arc<Grid> {
        &self.grid
    }

    pub fn values(&self) -> &[Complex64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<Complex64> {
        self.values
    }

    pub fn a(&self) -> f64 {
        self.grid.a()
    }

    pub fn n(&self) -> usize {
        self.values.len()
    }

    pub fn quad_weights(&self) -> &[f64] {
        self.grid.weights()
    }

    pub fn same_grid(&self, other: &GridFunction) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid)
            || (self.grid.kind == other.grid.kind
                && self.grid.a == other.grid.a
                && self.grid.n() == other.grid.n())
    }

    /// `(self, other) = Σ w_i self_i conj(other_i)`.
    pub fn inner(&self, other: &GridFunction) -> Result<Complex64> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch);
        }
        Ok(self
            .values
            .iter()
            .zip(&other.values)
            .zip(self.grid.weights())
            .map(|((u, v), w)| u * v.conj() * *w)
            .sum())
    }

    pub fn norm_sqr(&self) -> f64 {
        self.values
            .iter()
            .zip(self.grid.weights())
            .map(|(u, w)| u.norm_sqr() * w)
            .sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn scale(&self, c: Complex64) -> Self {
        Self { grid: Arc::clone(&self.grid), values: self.values.iter().map(|v| v * c).collect() }
    }

    pub fn add(&self, other: &GridFunction) -> Result<Self> {
        if !self.same_grid(other) {
            return Err(Error::GridMismatch);
        }
        Ok(Self {
            grid: Arc::clone(&self.grid),
            values: self.values.iter().zip(&other.values).map(|(a, b)| a + b).collect(),
        })
    }

    pub fn sub(&self, other: &GridFunction) -> Result<Self> {
        self.add(&other.scale(Complex64::new(-1.0, 0.0)))
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|v| *v == Complex64::new(0.0, 0.0))
    }

    /// Interpolated value at an arbitrary point of `[0, a]`.
    pub fn eval(&self, x: f64) -> Complex64 {
        self.grid.interpolate(&self.values, x)
    }
}
