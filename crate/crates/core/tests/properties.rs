use bbgc::data::{read_csv_from, to_csv_string, ColumnKind, MixedDataset};
use bbgc::eval::nrmse;
use bbgc::gibbs::CorrelationMatrix;
use bbgc::kernels::{dirichlet_flat, inverse_wishart, truncated_normal, RngHandle};
use bbgc::linalg::Matrix;
use bbgc::marginals::{draw_marginal, latent_cutoffs, MarginalDraw};
use bbgc::missingness::{ampute, Amount, MissingnessSpec};
use proptest::prelude::*;

fn values() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-1e3f64..1e3, 2..60)
}

proptest! {
    #[test]
    fn marginal_cdf_is_monotone_and_capped(xs in values(), seed in any::<u64>()) {
        prop_assume!(xs.iter().any(|&x| x != xs[0]));
        let m: MarginalDraw<f64> = draw_marginal(&mut RngHandle::new(seed), &xs).unwrap();
        let n = xs.len() as f64;
        let mut prev = 0.0;
        for k in 0..m.support().len() {
            let c = m.cdf_at_atom(k);
            prop_assert!(c >= prev);
            prev = c;
        }
        prop_assert!((m.cdf(f64::INFINITY) - n / (n + 1.0)).abs() < 1e-12);
        prop_assert_eq!(m.cdf(m.min() - 1.0), 0.0);
    }

    #[test]
    fn quantile_stays_on_support(xs in values(), u in 0.0f64..=1.0, seed in any::<u64>()) {
        prop_assume!(xs.iter().any(|&x| x != xs[0]));
        let m = draw_marginal(&mut RngHandle::new(seed), &xs).unwrap();
        let q = m.quantile(u).unwrap();
        prop_assert!(xs.contains(&q));
        // generalized inverse: F~(q) >= u unless clamped at the top atom
        prop_assert!(m.cdf(q) >= u.min(m.cdf(m.max())) - 1e-12);
    }

    #[test]
    fn cutoffs_are_ordered(cats in prop::collection::vec(1u32..=5, 2..80), seed in any::<u64>()) {
        let xs: Vec<f64> = cats.iter().map(|&c| c as f64).collect();
        prop_assume!(xs.iter().any(|&x| x != xs[0]));
        let m = draw_marginal(&mut RngHandle::new(seed), &xs).unwrap();
        let c = latent_cutoffs(&m, 5);
        let s = c.as_slice();
        prop_assert_eq!(s.len(), 6);
        prop_assert!(s.windows(2).all(|w| w[0] <= w[1]));
        for &x in &cats {
            let (lo, hi) = c.interval(x);
            prop_assert!(lo < hi);
        }
    }

    #[test]
    fn dirichlet_on_simplex(n in 1usize..200, seed in any::<u64>()) {
        let w: Vec<f64> = dirichlet_flat(&mut RngHandle::new(seed), n).unwrap();
        prop_assert!(w.iter().all(|&x| x > 0.0));
        prop_assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn truncated_normal_in_bounds(mu in -20.0f64..20.0, sigma in 0.01f64..5.0, a in -15.0f64..15.0, width in 1e-6f64..10.0, seed in any::<u64>()) {
        let mut rng = RngHandle::new(seed);
        let x = truncated_normal(&mut rng, mu, sigma, a, a + width).unwrap();
        prop_assert!(x > a && x <= a + width, "{} not in ({}, {}]", x, a, a + width);
        let lower = truncated_normal(&mut rng, mu, sigma, f64::NEG_INFINITY, a).unwrap();
        prop_assert!(lower <= a);
    }

    #[test]
    fn normalized_inverse_wishart_is_correlation(p in 1usize..6, extra in 0.0f64..20.0, seed in any::<u64>()) {
        let mut rng = RngHandle::new(seed);
        let psi = Matrix::<f64>::identity(p);
        let s = inverse_wishart(&mut rng, p as f64 + 1.0 + extra, &psi).unwrap();
        let r = CorrelationMatrix::from_covariance(&s).unwrap();
        prop_assert!(r.validate().is_ok());
    }

    #[test]
    fn nrmse_shift_invariant(t in prop::collection::vec(-10.0f64..10.0, 3..30), noise in prop::collection::vec(-1.0f64..1.0, 30), shift in -100.0f64..100.0) {
        let n = t.len();
        prop_assume!(t.iter().any(|&x| (x - t[0]).abs() > 1e-3));
        let truth = Matrix::from_rows(&[t.clone()]);
        let imp = Matrix::from_rows(&[t.iter().zip(&noise).map(|(a, b)| a + b).collect()]);
        let cells: Vec<_> = (0..n).map(|j| (0, j)).collect();
        let a = nrmse(&truth, &imp, &cells).unwrap();
        let b = nrmse(&truth.map(|x| x + shift), &imp.map(|x| x + shift), &cells).unwrap();
        prop_assert!((a - b).abs() < 1e-6 * (1.0 + a));
    }

    #[test]
    fn amputation_then_restoration(n in 5usize..40, p in 2usize..6, rate in 0.05f64..0.6, seed in any::<u64>()) {
        let mut rng = RngHandle::new(seed);
        let vals = (0..n * p).map(|_| Some(rng.std_normal())).collect();
        let d = MixedDataset::with_default_names(vec![ColumnKind::Continuous; p], vals).unwrap();
        let spec = MissingnessSpec::mcar(Amount::Rate(rate), seed);
        let target = (rate * (n * p) as f64).floor() as usize;
        match ampute(&d, &spec) {
            Ok(out) => {
                prop_assert_eq!(out.missing_count(), target);
                prop_assert!((0..p).all(|j| out.observed_count(j) >= 2));
                let cells: Vec<_> = out.index_sets().missing().collect();
                let restored = out.with_filled(cells.into_iter().map(|c| (c, d.get(c.0, c.1).unwrap())));
                prop_assert_eq!(restored, d);
            }
            Err(_) => prop_assert!(target > p * (n - 2)),
        }
    }

    #[test]
    fn mar_keeps_anchors(seed in any::<u64>(), rate in 0.05f64..0.7) {
        let mut rng = RngHandle::new(seed);
        let vals = (0..60 * 4).map(|_| Some(rng.std_normal())).collect();
        let d = MixedDataset::with_default_names(vec![ColumnKind::Continuous; 4], vals).unwrap();
        let out = ampute(&d, &MissingnessSpec::mar(Amount::Rate(rate), vec![1], seed)).unwrap();
        prop_assert_eq!(out.observed_count(1), 60);
    }

    #[test]
    fn csv_round_trip(rows in prop::collection::vec((prop::option::of(-1e6f64..1e6), prop::option::of(1u32..=4)), 2..30)) {
        let vals = rows.iter().flat_map(|&(a, b)| [a, b.map(f64::from)]).collect();
        let d = MixedDataset::new(
            vec!["x".into(), "g".into()],
            vec![ColumnKind::Continuous, ColumnKind::Ordinal { levels: 4 }],
            vals,
        ).unwrap();
        let text = to_csv_string(&d, "NA").unwrap();
        let back: MixedDataset<f64> = read_csv_from(text.as_bytes(), &d.schema(), "NA").unwrap();
        prop_assert_eq!(back, d);
    }
}
