use nalgebra::DMatrix;
use proptest::prelude::*;
use rominv::grid::{Grid1D, ResistivityField};
use rominv::inversion::{
    adaptive_weights, data_fitting_moments, fit_from_transfer, regularize_nullspace, relative_error, smoothing_1d,
    KktSolver,
};
use rominv::krylov::{operator_1d, RomChain};
use rominv::rational::{NodeFamily, PoleResidue};
use rominv::sensitivity::{jacobian_1d, Output};
use rominv::stieltjes::{eval_cfrac, pole_residue_to_cfrac, solve_fd_scheme, ContinuedFraction};

fn poles(m: usize) -> impl Strategy<Value = PoleResidue> {
    (
        prop::collection::vec(0.3f64..1.0, m),
        prop::collection::vec(0.1f64..2.0, m),
        0.05f64..5.0,
    )
        .prop_map(|(gaps, c, first)| {
            // poles spaced by at least a factor 1.3 so the model is well separated
            let theta: Vec<f64> = gaps
                .iter()
                .scan(first, |t, g| {
                    let out = *t;
                    *t *= 1.3 + 3.0 * g;
                    Some(out)
                })
                .collect();
            PoleResidue::new(theta, c).unwrap()
        })
}

fn field(n: usize) -> impl Strategy<Value = ResistivityField> {
    prop::collection::vec(0.5f64..2.0, n).prop_map(|v| ResistivityField::new(v).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn stieltjes_models_have_positive_coefficients(pr in (1usize..=7).prop_flat_map(poles)) {
        let cf = pole_residue_to_cfrac(&pr).unwrap();
        prop_assert!(cf.kappa.iter().chain(&cf.kappa_hat).all(|&k| k > 0.0));
        for s in [0.01, 0.7, 13.0, 400.0] {
            let y = pr.eval(s);
            prop_assert!((eval_cfrac(&cf, s) / y - 1.0).abs() < 1e-10);
            prop_assert!((solve_fd_scheme(&cf, s).unwrap()[0] / y - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn log_vector_roundtrip(l in prop::collection::vec(-5.0f64..5.0, 2..=16usize).prop_filter("even", |v| v.len() % 2 == 0)) {
        let cf = ContinuedFraction::from_log_vector(&l).unwrap();
        let back = cf.log_vector();
        for (a, b) in l.iter().zip(&back) {
            prop_assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn relative_error_scales(truth in prop::collection::vec(0.5f64..3.0, 1..50), gamma in 0.1f64..4.0) {
        let est: Vec<f64> = truth.iter().map(|v| gamma * v).collect();
        let e = relative_error(&est, &truth).unwrap();
        prop_assert!((e - (gamma - 1.0).abs()).abs() < 1e-12);
        prop_assert_eq!(relative_error(&truth, &truth).unwrap(), 0.0);
    }

    #[test]
    fn m_reduction_terminates_with_admissible_fit(tau in prop::collection::vec(-10.0f64..10.0, 12), m0 in 1usize..=6) {
        // arbitrary moments: the rule either lands on an admissible size <= m0 or reports unusable data
        match data_fitting_moments(&tau, 0.0, m0) {
            Ok(fit) => {
                prop_assert!(fit.m >= 1 && fit.m <= m0);
                prop_assert_eq!(fit.rejected.len(), m0 - fit.m);
                prop_assert!(fit.cf.check_admissible().is_ok());
            }
            Err(e) => prop_assert!(!e.is_inadmissible(), "{e}"),
        }
    }

    #[test]
    fn nullspace_step_preserves_residual(r in field(30), m in 2usize..=4) {
        let grid = Grid1D::new(30).unwrap();
        let (_, jac) = jacobian_1d(&r, &grid, &NodeFamily::zolotarev(m).unwrap(), Output::LogKappa).unwrap();
        let dtilde = smoothing_1d(&grid);
        for weights in [vec![1.0; dtilde.nrows()], adaptive_weights(&dtilde, r.values(), 0.05)] {
            for solver in [KktSolver::TruncatedSvd { discard: 0 }, KktSolver::ProjectedCg { tol: 1e-12, max_iter: 5000 }] {
                let out = regularize_nullspace(r.values(), &jac, &dtilde, &weights, solver).unwrap();
                let a = &jac * nalgebra::DVector::from_column_slice(r.values());
                let b = &jac * nalgebra::DVector::from_column_slice(&out);
                prop_assert!((&a - &b).norm() < 1e-8 * a.norm(), "{solver:?}");
            }
        }
    }

    #[test]
    fn rom_matches_data_at_nodes(r in field(60), m in 1usize..=5) {
        let grid = Grid1D::new(60).unwrap();
        let (op, b) = operator_1d(&r, &grid).unwrap();
        let fam = NodeFamily::zolotarev(m).unwrap();
        let chain = RomChain::new(&op, &b, &fam).unwrap();
        for s in fam.points() {
            let (y, dy) = rominv::forward::transfer_eval(&op, &b, &b, s).unwrap();
            prop_assert!((chain.reduced.transfer(s) / y - 1.0).abs() < 1e-9);
            prop_assert!((chain.reduced.transfer_derivative(s, 1) / dy - 1.0).abs() < 1e-8);
        }
    }

    #[test]
    fn exact_transfer_fit_recovers_preconditioner(r in field(40), m in 2usize..=5) {
        let grid = Grid1D::new(40).unwrap();
        let (op, b) = operator_1d(&r, &grid).unwrap();
        let fam = NodeFamily::zolotarev(m).unwrap();
        let fit = fit_from_transfer(&fam, m, |s| rominv::forward::transfer_eval(&op, &b, &b, s)).unwrap();
        prop_assert_eq!(fit.m, m);
        let l = RomChain::new(&op, &b, &fam).unwrap().log_vector();
        let diff = DMatrix::from_column_slice(2 * m, 1, &fit.target(Output::LogKappa)) - DMatrix::from_column_slice(2 * m, 1, &l);
        prop_assert!(diff.amax() < 1e-5, "{}", diff.amax());
    }
}
