use krflow_core::hermitian::{log_det, wedge_ratio};
use krflow_core::*;
use num_complex::Complex64;
use proptest::prelude::*;

fn metric() -> impl Strategy<Value = HermitianMatrix> {
    // A A^* + eps I
    (prop::array::uniform4(-2.0f64..2.0), prop::array::uniform4(-2.0f64..2.0), 0.05f64..1.0).prop_map(
        |(re, im, eps)| {
            let a = [
                [Complex64::new(re[0], im[0]), Complex64::new(re[1], im[1])],
                [Complex64::new(re[2], im[2]), Complex64::new(re[3], im[3])],
            ];
            let mut m = [[Complex64::default(); 2]; 2];
            for i in 0..2 {
                for j in 0..2 {
                    for k in 0..2 {
                        m[i][j] += a[i][k] * a[j][k].conj();
                    }
                }
                m[i][i] += eps;
            }
            HermitianMatrix::from_upper(2, m)
        },
    )
}

fn hermitian() -> impl Strategy<Value = HermitianMatrix> {
    (prop::array::uniform3(-3.0f64..3.0), -3.0f64..3.0).prop_map(|(d, im)| {
        let m = [
            [Complex64::new(d[0], 0.0), Complex64::new(d[2], im)],
            [Complex64::new(d[2], -im), Complex64::new(d[1], 0.0)],
        ];
        HermitianMatrix::from_upper(2, m)
    })
}

fn field(spec: GridSpec, m: HermitianMatrix) -> HermitianField {
    HermitianField::constant(spec, &m)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn trace_of_positive_form_is_positive(g in metric(), h in metric()) {
        prop_assert!(g.trace_pair(&h) > 0.0);
    }

    #[test]
    fn wedge_ratio_is_half_trace(g in metric(), a in hermitian()) {
        let spec = GridSpec::new(2, 8).unwrap();
        let w = wedge_ratio(&field(spec, g), &field(spec, a)).unwrap();
        let tr = g.trace_pair(&a);
        prop_assert!((w.values()[0] - 0.5 * tr).abs() <= 1e-12 * (1.0 + tr.abs()) * g.operator_norm() * g.inverse().operator_norm());
    }

    #[test]
    fn log_det_is_concave(g in metric(), h in metric()) {
        let spec = GridSpec::new(2, 8).unwrap();
        let ld = |m: HermitianMatrix| log_det(&field(spec, m)).unwrap().values()[0];
        let mid = g.lin_comb(0.5, &h, 0.5);
        prop_assert!(ld(mid) >= 0.5 * (ld(g) + ld(h)) - 1e-12);
    }

    #[test]
    fn cauchy_schwarz_floor(g in metric(), a in hermitian()) {
        let norm_sq = g.pairing(&a, &a);
        let tr = g.trace_pair(&a);
        prop_assert!(norm_sq >= tr * tr / 2.0 - 1e-9 * (1.0 + norm_sq));
    }

    #[test]
    fn inverse_is_inverse(g in metric()) {
        let cond = g.operator_norm() * g.inverse().operator_norm();
        let id = g.trace_pair(&g);
        prop_assert!((id - 2.0).abs() < 1e-13 * cond);
    }

    #[test]
    fn derivative_is_linear(
        ca in prop::collection::vec(-1.0f64..1.0, 4),
        cb in prop::collection::vec(-1.0f64..1.0, 4),
        a in -3.0f64..3.0,
        b in -3.0f64..3.0,
        axis in 0usize..4,
    ) {
        let spec = GridSpec::new(2, 8).unwrap();
        let grid = Grid::new(spec);
        let mk = |c: &[f64]| ScalarField::from_fn(spec, |x| {
            c[0] * x[0].sin() + c[1] * (x[1] + x[2]).cos() + c[2] * (2.0 * x[3]).sin() + c[3] * (x[0] - x[3]).cos()
        });
        let (f, g) = (mk(&ca), mk(&cb));
        let lhs = grid.fourier_derivative(&f.lin_comb(a, &g, b), axis).unwrap();
        let rhs = grid
            .fourier_derivative(&f, axis)
            .unwrap()
            .lin_comb(a, &grid.fourier_derivative(&g, axis).unwrap(), b);
        prop_assert!(lhs.zip_with(&rhs, |x, y| x - y).sup_norm() < 1e-12);
    }

    #[test]
    fn complex_hessian_is_hermitian(c in prop::collection::vec(-1.0f64..1.0, 3)) {
        let spec = GridSpec::new(2, 8).unwrap();
        let grid = Grid::new(spec);
        let f = ScalarField::from_fn(spec, |x| c[0] * (x[0] + x[3]).sin() + c[1] * (x[1] - x[2]).cos() + c[2] * x[2].sin());
        prop_assert!(grid.complex_hessian(&f).unwrap().is_hermitian());
    }
}

#[test]
fn fuzzer_passes_on_fixed_seed() {
    let r = oracles::algebra_fuzzer(7, 10_000);
    assert!(r.passed(), "{r:?}");
}
