use mamba_dsse::metrics::{mae, rmse, MetricsReport};
use proptest::collection::vec;
use proptest::prelude::*;

proptest! {
    #[test]
    fn rmse_is_never_below_mae(pairs in vec((-10.0f64..10.0, -10.0f64..10.0), 1..200)) {
        let (y, yhat): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
        let (m, r) = (mae(&y, &yhat).unwrap(), rmse(&y, &yhat).unwrap());
        prop_assert!(r >= m - 1e-12 * m.max(1.0));
        prop_assert!(m >= 0.0);
    }

    #[test]
    fn report_matches_direct_sums(
        n in 1usize..5,
        rows in vec(vec(-2.0f64..2.0, 16), 1..20),
        shift in -1.0f64..1.0,
    ) {
        let truth: Vec<Vec<f64>> = rows.iter().map(|r| r[..2 * n].to_vec()).collect();
        let pred: Vec<Vec<f64>> = rows.iter().map(|r| r[8..8 + 2 * n].iter().map(|v| v + shift).collect()).collect();
        let report = MetricsReport::compute(&truth, &pred, n).unwrap();
        let abs = |lo: usize, hi: usize| {
            let errs: Vec<f64> = truth.iter().zip(&pred).flat_map(|(t, p)| (lo..hi).map(move |c| (t[c] - p[c]).abs())).collect();
            errs.iter().sum::<f64>() / errs.len() as f64
        };
        prop_assert!((report.magnitude.mae - abs(0, n)).abs() < 1e-12);
        prop_assert!((report.angle.mae - abs(n, 2 * n)).abs() < 1e-12);
        prop_assert!((report.overall.mae - abs(0, 2 * n)).abs() < 1e-12);
        for s in [report.overall, report.magnitude, report.angle] {
            prop_assert!(s.rmse >= s.mae - 1e-12);
        }
        for b in &report.per_bus {
            prop_assert!(b.q1 <= b.median && b.median <= b.q3 && b.q3 <= b.max);
        }
        prop_assert_eq!(report.per_bus.len(), 2 * n);
    }
}
