use std::sync::OnceLock;

use basisdiag::grid::{Grid, GridFunction, GridKind};
use basisdiag::harness::{self, HarnessError, VectorSpec};
use basisdiag::linalg;
use basisdiag::model::{PerturbedModel, VolterraOperator};
use basisdiag::weights::{self, WeightTrace};
use basisdiag::Complex64;
use proptest::prelude::*;

fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Real, non-symmetric data on a modest grid: `g = e^{t/2}`, `f` a bump.
fn model() -> &'static PerturbedModel {
    static M: OnceLock<PerturbedModel> = OnceLock::new();
    M.get_or_init(|| {
        let grid = Grid::new(GridKind::Chebyshev, 1.5, 64).unwrap();
        let op = VolterraOperator::canonical(grid.clone());
        let f = GridFunction::from_fn(&grid, |t| c((-(t - 0.4) * (t - 0.4) * 4.0).exp(), 0.0));
        let g = GridFunction::from_fn(&grid, |t| c((0.5 * t).exp(), 0.0));
        PerturbedModel::new(op, f, g).unwrap()
    })
}

fn point() -> impl Strategy<Value = Complex64> {
    (-15.0f64..15.0, -2.0f64..2.0).prop_map(|(x, y)| c(x, y))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn chebyshev_rule_is_exact_for_polynomials(a in 0.2f64..5.0, k in 0u32..20) {
        let grid = Grid::new(GridKind::Chebyshev, a, 41).unwrap();
        let q: f64 = grid.nodes().iter().zip(grid.weights()).map(|(x, w)| w * x.powi(k as i32)).sum();
        let exact = a.powi(k as i32 + 1) / (k as f64 + 1.0);
        prop_assert!((q - exact).abs() <= 1e-12 * exact.max(1.0));
    }

    #[test]
    fn divided_difference_identity(l in point(), m in point()) {
        prop_assume!((l - m).norm() > 1e-3);
        let model = model();
        let (pl, pm) = (model.point_data(l).unwrap(), model.point_data(m).unwrap());
        let lhs = linalg::dot(&pl.g_z, &pm.f_star);
        let rhs = (pl.phi - pm.phi) / (m - l);
        let scale = linalg::norm(&pl.g_z) * linalg::norm(&pm.f_star);
        prop_assert!((lhs - rhs).norm() <= 1e-10 * scale, "{lhs} vs {rhs}");
    }

    #[test]
    fn real_data_reflects_phi_about_one(z in point()) {
        // B = iJ with J real, so φ(z) - 1 = -z F(iz) with F real on ℝ and
        // φ(-z̄) = 2 - conj φ(z).
        let model = model();
        let a = model.phi(z).unwrap();
        let b = model.phi(c(-z.re, z.im)).unwrap();
        prop_assert!((a.conj() + b - 2.0).norm() <= 1e-11 * a.norm().max(1.0));
    }

    #[test]
    fn split_resolvent_matches_dense(z in point(), coef in prop::collection::vec((-1.0f64..1.0, -1.0f64..1.0), 5)) {
        let model = model();
        prop_assume!(model.phi(z).unwrap().norm() > 1e-3);
        let h = GridFunction::from_fn(model.grid(), |t| {
            coef.iter().enumerate().map(|(k, &(re, im))| c(re, im) * c(0.0, 3.0 * k as f64 * t).exp()).sum()
        });
        prop_assume!(h.norm() > 1e-6);
        let d = model.resolvent_a(z, &h).unwrap().sub(&model.resolvent_a_dense(z, &h).unwrap()).unwrap();
        prop_assert!(d.norm() <= 1e-9 * h.norm());
    }

    #[test]
    fn a2_constants_are_at_least_one_and_scale_free(
        levels in prop::collection::vec(0.05f64..20.0, 8),
        scale in 0.01f64..100.0,
    ) {
        let v = |x: f64| levels[(((x + 10.0) / 2.5).floor() as usize).min(7)];
        let t = WeightTrace::synthetic(10.0, 256, v).unwrap();
        let s = WeightTrace::synthetic(10.0, 256, |x| scale * v(x)).unwrap();
        let (ct, cs) = (weights::a2_interval(&t), weights::a2_interval(&s));
        prop_assert!(ct >= 1.0 - 1e-12);
        prop_assert!((ct - cs).abs() <= 1e-9 * ct);
    }

    #[test]
    fn table_length_is_validated(len in 1usize..80) {
        let mut sc = harness::builtin("S1").unwrap();
        if let harness::ModelSpec::Operator(op) = &mut sc.model {
            op.n = 40;
            op.f = VectorSpec::Table { re: vec![1.0; len], im: vec![] };
        }
        match sc.validate() {
            Ok(()) => prop_assert_eq!(len, 40),
            Err(HarnessError::Validation(v)) => {
                prop_assert_ne!(len, 40);
                prop_assert!(v.iter().any(|m| m.starts_with("model.f.re")));
            }
            Err(e) => prop_assert!(false, "unexpected {}", e),
        }
    }
}
