use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use panelconv::estimators::{estimate, EstimatorKind, EstimatorOptions, LagSpec};
use panelconv::linalg::{least_squares, DesignMatrix, Projection, SeKind};
use panelconv::panel::{apply_transform, read_long_csv, write_long_csv, CsvSchema, PanelDataset, SeriesTransform};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Random AR(1) panel with an optional missing-cell pattern at the edges.
fn random_panel(seed: u64, n: usize, t: usize, ragged: bool) -> PanelDataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut y = vec![f64::NAN; n * t];
    let mut x = vec![f64::NAN; n * t];
    for i in 0..n {
        let (lo, hi) = if ragged {
            let lo = rng.random_range(0..3);
            (lo, t - rng.random_range(0..3))
        } else {
            (0, t)
        };
        let mut prev = rng.random::<f64>();
        for s in lo..hi {
            let xv: f64 = rng.random::<f64>() - 0.5;
            prev = 0.2 * i as f64 + 0.6 * prev + 0.3 * xv + 0.1 * (s as f64 * 0.7).sin() + rng.random::<f64>() - 0.5;
            y[i * t + s] = prev;
            x[i * t + s] = xv;
        }
    }
    let countries = (0..n).map(|i| format!("k{i:02}")).collect();
    let vars = BTreeMap::from([("y".to_string(), y), ("x".to_string(), x)]);
    PanelDataset::from_blocks(countries, 1960, t, vars).unwrap()
}

fn opts(p: usize) -> EstimatorOptions {
    EstimatorOptions {
        lags: LagSpec::new(p, 1).unwrap(),
        covariates: vec!["x".into()],
        ..Default::default()
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn csv_round_trip(seed in 0u64..10_000, n in 1usize..6, t in 5usize..9) {
        let panel = random_panel(seed, n, t, true);
        let mut buf = Vec::new();
        write_long_csv(&panel, &mut buf).unwrap();
        let back = read_long_csv(buf.as_slice(), &CsvSchema::default()).unwrap();
        prop_assert_eq!(back, panel);
    }

    #[test]
    fn diff_and_lag_commute(seed in 0u64..10_000, n in 1usize..5, t in 5usize..10, k in 1usize..3) {
        let panel = random_panel(seed, n, t, true);
        let a = apply_transform(&panel, &SeriesTransform::diff("y", "dy")).unwrap();
        let a = apply_transform(&a, &SeriesTransform::lag("dy", k, "out")).unwrap();
        let b = apply_transform(&panel, &SeriesTransform::lag("y", k, "ly")).unwrap();
        let b = apply_transform(&b, &SeriesTransform::diff("ly", "out")).unwrap();
        let (u, v) = (a.block("out").unwrap(), b.block("out").unwrap());
        for (p, q) in u.iter().zip(v) {
            prop_assert!(p.is_nan() == q.is_nan());
            if !p.is_nan() {
                prop_assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn ols_row_permutation(seed in 0u64..10_000, rows in 8usize..30) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = DMatrix::from_fn(rows, 3, |_, j| if j == 0 { 1.0 } else { rng.random::<f64>() });
        let y: Vec<f64> = (0..rows).map(|_| rng.random::<f64>()).collect();
        let mut perm: Vec<usize> = (0..rows).collect();
        perm.reverse();
        perm.rotate_left(seed as usize % rows);
        let xp = DMatrix::from_fn(rows, 3, |i, j| x[(perm[i], j)]);
        let yp: Vec<f64> = perm.iter().map(|&i| y[i]).collect();
        let a = least_squares(&DesignMatrix::from_matrix(x).unwrap(), &y, SeKind::Robust, None).unwrap();
        let b = least_squares(&DesignMatrix::from_matrix(xp).unwrap(), &yp, SeKind::Robust, None).unwrap();
        for (u, v) in a.coefficients.iter().zip(&b.coefficients) {
            prop_assert!((u - v).abs() < 1e-10);
        }
        for (u, v) in a.covariance.iter().zip(&b.covariance) {
            prop_assert!((u - v).abs() < 1e-10);
        }
    }

    #[test]
    fn projection_ignores_duplicate_columns(seed in 0u64..10_000, rows in 6usize..25) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let h = DMatrix::from_fn(rows, 3, |_, _| rng.random::<f64>());
        let mut dup = h.clone().insert_column(3, 0.0);
        dup.set_column(3, &(h.column(1) * 2.5));
        let v = DVector::from_fn(rows, |_, _| rng.random::<f64>());
        let a = Projection::new(&h).unwrap();
        let b = Projection::new(&dup).unwrap();
        prop_assert_eq!(a.rank(), b.rank());
        prop_assert!((a.apply(&v) - b.apply(&v)).amax() < 1e-10);
    }

    #[test]
    fn twfe_invariant_to_country_relabelling(seed in 0u64..10_000, n in 3usize..7, t in 6usize..10) {
        let panel = random_panel(seed, n, t, true);
        let names: Vec<String> = panel.countries().to_vec();
        let mut blocks = BTreeMap::new();
        for v in ["y", "x"] {
            blocks.insert(v.to_string(), panel.block(v).unwrap().to_vec());
        }
        // reversed names reorder the countries after sorting
        let renamed: Vec<String> = names.iter().map(|c| format!("z{}", 99 - c[1..].parse::<i32>().unwrap())).collect();
        let other = PanelDataset::from_blocks(renamed, panel.first_year(), panel.n_years(), blocks).unwrap();
        let a = estimate(EstimatorKind::Twfe, &panel, "y", &opts(1), None).unwrap();
        let b = estimate(EstimatorKind::Twfe, &other, "y", &opts(1), None).unwrap();
        prop_assert!((a.phi.estimate - b.phi.estimate).abs() < 1e-9);
        prop_assert!((a.phi.std_error - b.phi.std_error).abs() < 1e-9);
    }

    #[test]
    fn phi_invariant_to_units(seed in 0u64..10_000, c in 0.01f64..100.0) {
        let panel = random_panel(seed, 6, 12, false);
        let scaled = panel.scaled("y", c).unwrap().scaled("x", c).unwrap();
        for kind in [EstimatorKind::Twfe, EstimatorKind::Dccep] {
            let a = estimate(kind, &panel, "y", &opts(2), None).unwrap();
            let b = estimate(kind, &scaled, "y", &opts(2), None).unwrap();
            prop_assert!((a.phi.estimate - b.phi.estimate).abs() < 1e-8, "{kind}");
            prop_assert!((a.beta[0].estimate - b.beta[0].estimate).abs() < 1e-8);
        }
    }
}

#[test]
fn dccep_duplicated_average_column() {
    for seed in 0..20 {
        let panel = random_panel(seed, 8, 15, false);
        let base = EstimatorOptions {
            lags: LagSpec::new(1, 1).unwrap(),
            covariates: vec!["x".into()],
            ..Default::default()
        };
        let a = estimate(EstimatorKind::Dccep, &panel, "y", &base, None).unwrap();
        let dup = panel.with_variable("x2", panel.block("x").unwrap().to_vec()).unwrap();
        let extra = EstimatorOptions { extra_cs: vec!["x2".into()], ..base.clone() };
        let b = estimate(EstimatorKind::Dccep, &dup, "y", &extra, None).unwrap();
        assert!((a.phi.estimate - b.phi.estimate).abs() < 1e-10);
    }
}
