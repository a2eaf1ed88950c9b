use approx::assert_abs_diff_eq;
use dpminimax::btl::{project_theta, project_theta_exact};
use dpminimax::mechanisms::split_budget;
use dpminimax::nonparam::{orbitope_norm, series_eval, OrbitopeGrid};
use dpminimax::sparse::exact_top_s;
use dpminimax::PrivacyBudget;
use proptest::prelude::*;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn projection_is_feasible_and_matches_bisection(z in prop::collection::vec(-3.0f64..3.0, 2..30)) {
        let x = project_theta(&z);
        prop_assert!(x.iter().all(|v| v.abs() <= 1.0 + 1e-9));
        assert_abs_diff_eq!(x.iter().sum::<f64>(), 0.0, epsilon = 1e-8);
        for (a, b) in x.iter().zip(project_theta_exact(&z)) {
            assert_abs_diff_eq!(*a, b, epsilon = 1e-6);
        }
    }

    #[test]
    fn top_s_keeps_largest(v in prop::collection::vec(-5.0f64..5.0, 1..40), s in 0usize..40) {
        let s = s.min(v.len());
        let kept = exact_top_s(&v, s).unwrap();
        prop_assert_eq!(kept.support.len(), s);
        let floor = kept.support.iter().map(|&j| v[j].abs()).fold(f64::INFINITY, f64::min);
        for j in (0..v.len()).filter(|j| !kept.support.contains(j)) {
            prop_assert!(v[j].abs() <= floor);
        }
    }

    #[test]
    fn split_budget_composes_back(eps in 0.01f64..10.0, delta in 1e-9f64..0.1, t in 1usize..50) {
        let b = PrivacyBudget::new(eps, delta).unwrap();
        let total = PrivacyBudget::compose(&vec![split_budget(b, t).unwrap(); t]).unwrap();
        assert_abs_diff_eq!(total.epsilon(), eps, epsilon = 1e-9 * eps);
        assert_abs_diff_eq!(total.delta(), delta, epsilon = 1e-9 * delta);
    }

    #[test]
    fn orbitope_norm_is_homogeneous(t in prop::collection::vec(-1.0f64..1.0, 3), c in 0.1f64..10.0) {
        prop_assume!(t.iter().any(|v| v.abs() > 1e-3));
        let grid = OrbitopeGrid::new(3, 128).unwrap();
        let scaled: Vec<f64> = t.iter().map(|v| c * v).collect();
        let a = orbitope_norm(&t, &grid).unwrap();
        assert_abs_diff_eq!(orbitope_norm(&scaled, &grid).unwrap(), c * a, epsilon = 1e-6 * c * a);
    }

    #[test]
    fn series_is_periodic(theta in prop::collection::vec(-1.0f64..1.0, 1..9), x in 0.0f64..1.0) {
        assert_abs_diff_eq!(series_eval(&theta, x), series_eval(&theta, x + 1.0), epsilon = 1e-9);
    }
}
