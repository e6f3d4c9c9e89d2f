//! Dense linear algebra used by the model: Hessenberg reduction, the shifted
//! Hessenberg factorization of `I - zH`, and a few Hermitian helpers.

use std::cell::RefCell;

use nalgebra::{DMatrix, DVector, Hessenberg, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub type CVector = DVector<Complex64>;
pub type CMatrix = DMatrix<Complex64>;

const PIVOT_FLOOR: f64 = 1e-14;

/// Unitary reduction `M = Q H Q^H` with `H` upper Hessenberg, stored row-major.
#[derive(Debug, Clone)]
pub struct HessenbergForm {
    n: usize,
    h: Vec<Complex64>,
    q: CMatrix,
}

impl HessenbergForm {
    pub fn new(m: &CMatrix) -> Self {
        let n = m.nrows();
        let hess = Hessenberg::new(m.clone());
        let (q, hm) = hess.unpack();
        let mut h = vec![Complex64::new(0.0, 0.0); n * n];
        for i in 0..n {
            for j in i.saturating_sub(1)..n {
                h[i * n + j] = hm[(i, j)];
            }
        }
        Self { n, h, q }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn q(&self) -> &CMatrix {
        &self.q
    }

    pub fn entry(&self, i: usize, j: usize) -> Complex64 {
        self.h[i * self.n + j]
    }

    pub fn to_dense(&self) -> CMatrix {
        CMatrix::from_fn(self.n, self.n, |i, j| self.entry(i, j))
    }

    /// `H x`.
    pub fn apply(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        (0..n)
            .map(|i| {
                let row = &self.h[i * n..(i + 1) * n];
                (i.saturating_sub(1)..n).map(|j| row[j] * x[j]).sum()
            })
            .collect()
    }

    /// `H^H x`.
    pub fn apply_adjoint(&self, x: &[Complex64]) -> Vec<Complex64> {
        let n = self.n;
        let mut y = vec![Complex64::new(0.0, 0.0); n];
        for i in 0..n {
            let row = &self.h[i * n..(i + 1) * n];
            let xi = x[i];
            for j in i.saturating_sub(1)..n {
                y[j] += row[j].conj() * xi;
            }
        }
        y
    }
}

/// Gaussian elimination of `I - zH` with adjacent-row partial pivoting.
///
/// One factorization serves both `(I - zH) x = b` and `(I - zH)^H u = d`.
#[derive(Debug, Clone)]
pub struct ShiftedLu {
    n: usize,
    z: Complex64,
    u: Vec<Complex64>,
    mult: Vec<Complex64>,
    swap: Vec<bool>,
}

impl ShiftedLu {
    pub fn new(h: &HessenbergForm, z: Complex64) -> Result<Self> {
        let mut lu = Self::empty(h.n);
        lu.refactor(h, z)?;
        Ok(lu)
    }

    fn empty(n: usize) -> Self {
        Self {
            n,
            z: Complex64::new(0.0, 0.0),
            u: vec![Complex64::new(0.0, 0.0); n * n],
            mult: vec![Complex64::new(0.0, 0.0); n.saturating_sub(1)],
            swap: vec![false; n.saturating_sub(1)],
        }
    }

    pub fn z(&self) -> Complex64 {
        self.z
    }

    pub fn refactor(&mut self, h: &HessenbergForm, z: Complex64) -> Result<()> {
        let n = h.n;
        if self.n != n {
            *self = Self::empty(n);
        }
        self.z = z;
        let m = &mut self.u;
        for i in 0..n {
            let lo = i.saturating_sub(1);
            let row = &mut m[i * n..(i + 1) * n];
            row[..lo].fill(Complex64::new(0.0, 0.0));
            for j in lo..n {
                row[j] = -z * h.h[i * n + j];
            }
            row[i] += 1.0;
        }
        for k in 0..n.saturating_sub(1) {
            let swap = m[(k + 1) * n + k].norm_sqr() > m[k * n + k].norm_sqr();
            if swap {
                for j in k..n {
                    m.swap(k * n + j, (k + 1) * n + j);
                }
            }
            let piv = m[k * n + k];
            if piv.norm() < PIVOT_FLOOR {
                return Err(Error::SingularSolve { z, row: k, pivot: piv.norm() });
            }
            let l = m[(k + 1) * n + k] / piv;
            let (top, bottom) = m.split_at_mut((k + 1) * n);
            let row_k = &top[k * n..(k + 1) * n];
            let row_k1 = &mut bottom[..n];
            row_k1[k] = Complex64::new(0.0, 0.0);
            for j in k + 1..n {
                row_k1[j] -= l * row_k[j];
            }
            self.mult[k] = l;
            self.swap[k] = swap;
        }
        let last = m[n * n - 1];
        if last.norm() < PIVOT_FLOOR {
            return Err(Error::SingularSolve { z, row: n - 1, pivot: last.norm() });
        }
        Ok(())
    }

    /// Solves `(I - zH) x = b` in place.
    pub fn solve(&self, b: &mut [Complex64]) {
        let n = self.n;
        for k in 0..n.saturating_sub(1) {
            if self.swap[k] {
                b.swap(k, k + 1);
            }
            let t = b[k] * self.mult[k];
            b[k + 1] -= t;
        }
        for i in (0..n).rev() {
            let row = &self.u[i * n..(i + 1) * n];
            let mut s = b[i];
            for j in i + 1..n {
                s -= row[j] * b[j];
            }
            b[i] = s / row[i];
        }
    }

    /// Solves `(I - zH)^H u = d` in place.
    pub fn solve_adjoint(&self, d: &mut [Complex64]) {
        let n = self.n;
        for j in 0..n {
            let row = &self.u[j * n..(j + 1) * n];
            let vj = d[j] / row[j].conj();
            d[j] = vj;
            for i in j + 1..n {
                d[i] -= row[i].conj() * vj;
            }
        }
        for k in (0..n.saturating_sub(1)).rev() {
            let t = self.mult[k].conj() * d[k + 1];
            d[k] -= t;
            if self.swap[k] {
                d.swap(k, k + 1);
            }
        }
    }
}

thread_local! {
    static LU_POOL: RefCell<Vec<ShiftedLu>> = const { RefCell::new(Vec::new()) };
}

/// Factors `I - zH` into a pooled buffer and hands it to `f`.
pub fn with_shifted_lu<R>(
    h: &HessenbergForm,
    z: Complex64,
    f: impl FnOnce(&ShiftedLu) -> R,
) -> Result<R> {
    let mut lu = LU_POOL
        .with(|p| p.borrow_mut().pop())
        .unwrap_or_else(|| ShiftedLu::empty(h.n));
    let out = lu.refactor(h, z).map(|_| f(&lu));
    LU_POOL.with(|p| p.borrow_mut().push(lu));
    out
}

pub fn dot(x: &[Complex64], y: &[Complex64]) -> Complex64 {
    // y^H x
    x.iter().zip(y).map(|(a, b)| a * b.conj()).sum()
}

pub fn norm(x: &[Complex64]) -> f64 {
    x.iter().map(|v| v.norm_sqr()).sum::<f64>().sqrt()
}

/// Smallest and largest eigenvalues of a Hermitian matrix.
pub fn hermitian_extremes(m: &CMatrix) -> (f64, f64) {
    let herm = (m + m.adjoint()) * Complex64::new(0.5, 0.0);
    let eig = SymmetricEigen::new(herm);
    let vals = eig.eigenvalues;
    let lo = vals.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = vals.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

/// Largest singular value of a linear map given by its action and adjoint
/// action, by power iteration on `T^H T`.
pub fn power_norm(
    dim: usize,
    apply: impl Fn(&[Complex64]) -> Vec<Complex64>,
    apply_adjoint: impl Fn(&[Complex64]) -> Vec<Complex64>,
    max_iter: usize,
    tol: f64,
) -> f64 {
    // Deterministic start with full support.
    let mut x: Vec<Complex64> = (0..dim)
        .map(|i| Complex64::new(1.0 + 0.37 * (i as f64).sin(), 0.29 * (1.7 * i as f64).cos()))
        .collect();
    let nx = norm(&x);
    x.iter_mut().for_each(|v| *v /= nx);
    let mut sigma = 0.0;
    for _ in 0..max_iter {
        let y = apply(&x);
        let mut w = apply_adjoint(&y);
        let nw = norm(&w);
        if nw == 0.0 || !nw.is_finite() {
            return norm(&y);
        }
        let next = nw.sqrt();
        w.iter_mut().for_each(|v| *v /= nw);
        x = w;
        if (next - sigma).abs() <= tol * next {
            sigma = next;
            break;
        }
        sigma = next;
    }
    sigma
}

/// Smallest singular value of a square matrix via inverse iteration on the LU.
pub fn smallest_singular_value(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let lu = m.clone().lu();
    let adj_lu = m.adjoint().lu();
    let inv_norm = power_norm(
        n,
        |x| lu.solve(&CVector::from_column_slice(x)).map(|v| v.as_slice().to_vec()).unwrap_or_else(|| vec![Complex64::new(f64::INFINITY, 0.0); n]),
        |x| {
            adj_lu
                .solve(&CVector::from_column_slice(x))
                .map(|v| v.as_slice().to_vec())
                .unwrap_or_else(|| vec![Complex64::new(f64::INFINITY, 0.0); n])
        },
        500,
        1e-12,
    );
    if inv_norm.is_finite() && inv_norm > 0.0 {
        1.0 / inv_norm
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn test_matrix(n: usize) -> CMatrix {
        CMatrix::from_fn(n, n, |i, j| {
            let x = (i * 7 + j * 3) as f64;
            Complex64::new((0.3 * x).sin(), (0.11 * x * x).cos()) * 0.2
        })
    }

    #[test]
    fn hessenberg_reconstructs() {
        let m = test_matrix(9);
        let hf = HessenbergForm::new(&m);
        let back = hf.q() * hf.to_dense() * hf.q().adjoint();
        assert!((back - &m).norm() < 1e-12);
    }

    #[test]
    fn shifted_solves_match_dense() {
        let m = test_matrix(12);
        let hf = HessenbergForm::new(&m);
        let h = hf.to_dense();
        let z = Complex64::new(1.3, -0.7);
        let lu = ShiftedLu::new(&hf, z).unwrap();
        let shifted = CMatrix::identity(12, 12) - h * z;
        let b: Vec<Complex64> = (0..12).map(|i| Complex64::new(i as f64, 1.0 - i as f64)).collect();

        let mut x = b.clone();
        lu.solve(&mut x);
        let r = &shifted * CVector::from_column_slice(&x) - CVector::from_column_slice(&b);
        assert!(r.norm() < 1e-11, "residual {}", r.norm());

        let mut u = b.clone();
        lu.solve_adjoint(&mut u);
        let r = shifted.adjoint() * CVector::from_column_slice(&u) - CVector::from_column_slice(&b);
        assert!(r.norm() < 1e-11, "adjoint residual {}", r.norm());
    }

    #[test]
    fn singular_shift_is_reported() {
        let mut m = CMatrix::zeros(3, 3);
        m[(0, 0)] = Complex64::new(1.0, 0.0);
        let hf = HessenbergForm::new(&m);
        let err = ShiftedLu::new(&hf, Complex64::new(1.0, 0.0)).unwrap_err();
        assert!(matches!(err, Error::SingularSolve { .. }));
    }

    #[test]
    fn power_norm_of_diagonal() {
        let d = [3.0, -5.0, 1.0, 0.5];
        let s = power_norm(
            4,
            |x| x.iter().zip(d).map(|(v, s)| v * s).collect(),
            |x| x.iter().zip(d).map(|(v, s)| v * s).collect(),
            200,
            1e-14,
        );
        assert!((s - 5.0).abs() < 1e-10);
    }

    #[test]
    fn smallest_singular_value_of_diagonal() {
        let m = CMatrix::from_diagonal(&CVector::from_vec(vec![
            Complex64::new(2.0, 0.0),
            Complex64::new(0.0, 0.1),
            Complex64::new(-3.0, 0.0),
        ]));
        assert!((smallest_singular_value(&m) - 0.1).abs() < 1e-10);
    }
}
