use std::sync::Arc;

use aghf::dynamics::{AffineSystem, ExprFields, Metric};
use aghf::exprlang::Scope;
use aghf::ftt::augment;
use nalgebra::{DMatrix, DVector};
use proptest::prelude::*;

fn expr_system(h: &[&str], f: &[&[&str]]) -> AffineSystem {
    let strings = |v: &[&str]| v.iter().map(|s| s.to_string()).collect::<Vec<_>>();
    let rows: Vec<Vec<String>> = f.iter().map(|r| strings(r)).collect();
    let fields = ExprFields::parse(&Scope::new(h.len()), &strings(h), &rows, None).unwrap();
    AffineSystem::new(Arc::new(fields)).unwrap()
}

/// A few systems with state-dependent drift and control directions.
fn systems() -> Vec<AffineSystem> {
    vec![
        AffineSystem::builtin("unicycle").unwrap(),
        expr_system(
            &["cos(x3) + 0.1*x2", "sin(x3)", "0.2*x1"],
            &[&["0.1*sin(x2)"], &["0.2"], &["1"]],
        ),
        expr_system(
            &["x2", "-sin(x1)", "x4", "0.3*x1*x2"],
            &[&["0", "0.1*x3"], &["1", "0"], &["0.2*cos(x1)", "0"], &["0", "1"]],
        ),
    ]
}

fn state(sys: &AffineSystem, raw: &[f64]) -> Vec<f64> {
    raw[..sys.state_dim()].to_vec()
}

proptest! {
    #[test]
    fn lagrangian_splits_into_penalty_and_input_energy(
        which in 0usize..3,
        raw_x in prop::array::uniform4(-1.5f64..1.5),
        raw_v in prop::array::uniform4(-2.0f64..2.0),
        log_lambda in 0.0f64..4.0,
    ) {
        let sys = &systems()[which];
        let x = state(sys, &raw_x);
        let xdot = state(sys, &raw_v);
        let sys = sys.anchored_at(&x).unwrap();
        let lambda = 10f64.powf(log_lambda);
        let metric = Metric::new(&sys, lambda).unwrap();
        let l = metric.lagrangian(&sys, &x, &xdot).unwrap().value;

        let frame = sys.frame(&x).unwrap();
        let h = DVector::from_vec(sys.drift(&x).unwrap());
        let w = &frame.fbar_inv * (DVector::from_column_slice(&xdot) - h);
        let c = sys.state_dim() - sys.input_dim();
        let v2: f64 = w.iter().take(c).map(|v| v * v).sum();
        let u2: f64 = w.iter().skip(c).map(|u| u * u).sum();
        let expected = lambda * v2 + u2;
        prop_assert!((l - expected).abs() <= 1e-9 * expected.max(1.0), "{} vs {}", l, expected);
    }

    #[test]
    fn lagrangian_gradients_match_finite_differences(
        which in 0usize..3,
        raw_x in prop::array::uniform4(-1.5f64..1.5),
        raw_v in prop::array::uniform4(-2.0f64..2.0),
    ) {
        let sys = &systems()[which];
        let x = state(sys, &raw_x);
        let xdot = state(sys, &raw_v);
        let sys = sys.anchored_at(&x).unwrap();
        let metric = Metric::new(&sys, 50.0).unwrap();
        let eval = metric.lagrangian(&sys, &x, &xdot).unwrap();
        let value = |x: &[f64], v: &[f64]| metric.lagrangian(&sys, x, v).unwrap().value;
        let h = 1e-6;
        for k in 0..x.len() {
            let (mut xp, mut xm) = (x.clone(), x.clone());
            xp[k] += h;
            xm[k] -= h;
            let fd = (value(&xp, &xdot) - value(&xm, &xdot)) / (2.0 * h);
            prop_assert!((eval.dl_dx[k] - fd).abs() <= 1e-5 * fd.abs().max(1.0), "dL/dx{}: {} vs {}", k + 1, eval.dl_dx[k], fd);

            let (mut vp, mut vm) = (xdot.clone(), xdot.clone());
            vp[k] += h;
            vm[k] -= h;
            let fd = (value(&x, &vp) - value(&x, &vm)) / (2.0 * h);
            prop_assert!((eval.dl_dxdot[k] - fd).abs() <= 1e-5 * fd.abs().max(1.0), "dL/dxdot{}: {} vs {}", k + 1, eval.dl_dxdot[k], fd);
        }
    }

    #[test]
    fn metric_is_symmetric_positive_definite(
        which in 0usize..3,
        raw_x in prop::array::uniform4(-1.5f64..1.5),
        log_lambda in 0.0f64..4.0,
    ) {
        let sys = &systems()[which];
        let x = state(sys, &raw_x);
        let sys = sys.anchored_at(&x).unwrap();
        let g = Metric::new(&sys, 10f64.powf(log_lambda)).unwrap().matrix(&sys, &x).unwrap();
        let asym = (&g - g.transpose()).abs().max();
        prop_assert!(asym <= 1e-9 * g.abs().max());
        prop_assert!(g.clone().cholesky().is_some());
    }

    #[test]
    fn gram_schmidt_complement_is_orthonormal(
        which in 0usize..3,
        raw_x in prop::array::uniform4(-1.5f64..1.5),
    ) {
        let sys = &systems()[which];
        let x = state(sys, &raw_x);
        let sys = sys.anchored_at(&x).unwrap();
        let fc = sys.complement_basis(&x).unwrap();
        let f = sys.control_matrix(&x).unwrap();
        let c = fc.ncols();
        let gram = fc.transpose() * &fc;
        prop_assert!((gram - DMatrix::<f64>::identity(c, c)).abs().max() < 1e-12);
        prop_assert!((f.transpose() * &fc).abs().max() < 1e-12);
    }

    #[test]
    fn extended_unicycle_metric_and_lagrangian(
        raw in prop::array::uniform3(-1.5f64..1.5),
        tau in 0.0f64..5.0,
        a in 0.3f64..3.0,
        v in prop::array::uniform5(-2.0f64..2.0),
        log_lambda in 0.0f64..4.0,
    ) {
        let lambda = 10f64.powf(log_lambda);
        let x = [raw[0], raw[1], raw[2], tau, a];
        let aug = augment(&AffineSystem::builtin("unicycle").unwrap()).anchored_at(&x).unwrap();
        let sys = aug.system();
        let metric = Metric::new(sys, lambda).unwrap();

        let g = metric.matrix(sys, &x).unwrap();
        let expected = DMatrix::from_diagonal(&DVector::from_vec(vec![lambda, lambda, 1.0 / (a * a), lambda, 1.0]));
        prop_assert!((&g - &expected).abs().max() <= 1e-9 * lambda);

        let th = raw[2];
        let a2 = a * a;
        let oracle = lambda * (v[0] - a2 * th.cos()).powi(2)
            + lambda * (v[1] - a2 * th.sin()).powi(2)
            + lambda * (v[3] - a2).powi(2)
            + v[2] * v[2] / a2
            + v[4] * v[4];
        let l = metric.lagrangian(sys, &x, &v).unwrap().value;
        prop_assert!((l - oracle).abs() <= 1e-9 * oracle.max(1.0), "{} vs {}", l, oracle);
    }
}
