//! Two-way fixed effects and its group-specific-time-effects variant.
//!
//! Country and year effects are absorbed exactly on unbalanced panels:
//! within-country demeaning followed by a projection on the demeaned year
//! dummies, whose Gram matrix `diag(N_t) - sum_i d_i d_i' / T_i` is small.

use std::collections::{BTreeMap, HashMap};

use nalgebra::{DMatrix, SymmetricEigen};

use super::design::EcmData;
use super::{run, used_counts, EstimateReport, EstimatorKind, EstimatorOptions, Fit, GroupMap};
use crate::error::{Error, Result};
use crate::linalg::{least_squares_absorbed, DesignMatrix, SeKind, RANK_TOLERANCE};
use crate::panel::PanelDataset;

/// Residualizes `cols` on country and year dummies for rows ordered by
/// country. Returns `(countries absorbed, rank of the year block)`.
pub(crate) fn absorb_two_way(
    row_country: &[usize],
    row_year: &[i32],
    cols: &mut [Vec<f64>],
) -> (usize, usize) {
    let n = row_country.len();
    let mut ranges = Vec::new();
    let mut start = 0;
    for r in 1..=n {
        if r == n || row_country[r] != row_country[start] {
            ranges.push(start..r);
            start = r;
        }
    }
    for col in cols.iter_mut() {
        for rg in &ranges {
            let m = col[rg.clone()].iter().sum::<f64>() / rg.len() as f64;
            col[rg.clone()].iter_mut().for_each(|v| *v -= m);
        }
    }

    let mut years: Vec<i32> = row_year.to_vec();
    years.sort_unstable();
    years.dedup();
    let ty = years.len();
    let yidx: Vec<usize> = row_year
        .iter()
        .map(|y| years.binary_search(y).expect("year present"))
        .collect();

    let mut gram = DMatrix::<f64>::zeros(ty, ty);
    for &t in &yidx {
        gram[(t, t)] += 1.0;
    }
    let mut patterns: HashMap<&[usize], f64> = HashMap::new();
    for rg in &ranges {
        *patterns.entry(&yidx[rg.clone()]).or_insert(0.0) += 1.0 / rg.len() as f64;
    }
    for (pat, w) in patterns {
        for &a in pat {
            for &b in pat {
                gram[(a, b)] -= w;
            }
        }
    }
    let eig = SymmetricEigen::new(gram);
    let lmax = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let keep: Vec<usize> = (0..ty)
        .filter(|&j| lmax > 0.0 && eig.eigenvalues[j] > RANK_TOLERANCE * lmax)
        .collect();
    let rank_years = keep.len();
    if rank_years == 0 {
        return (ranges.len(), 0);
    }
    let vecs = eig.eigenvectors.select_columns(&keep);
    let inv_l: Vec<f64> = keep.iter().map(|&j| 1.0 / eig.eigenvalues[j]).collect();

    for col in cols.iter_mut() {
        let mut s = nalgebra::DVector::<f64>::zeros(ty);
        for (r, &t) in yidx.iter().enumerate() {
            s[t] += col[r];
        }
        let mut w = vecs.transpose() * s;
        for (wj, lj) in w.iter_mut().zip(&inv_l) {
            *wj *= lj;
        }
        let c = &vecs * w;
        for rg in &ranges {
            let m = yidx[rg.clone()].iter().map(|&t| c[t]).sum::<f64>() / rg.len() as f64;
            for r in rg.clone() {
                col[r] -= c[yidx[r]] - m;
            }
        }
    }
    (ranges.len(), rank_years)
}

fn columns(data: &EcmData, rows: &[usize]) -> Vec<Vec<f64>> {
    let k = data.k();
    let mut cols = vec![Vec::with_capacity(rows.len()); k + 1];
    for &r in rows {
        cols[0].push(data.target[r]);
        for j in 0..k {
            cols[j + 1].push(data.slopes[r * k + j]);
        }
    }
    cols
}

fn pooled_fit(
    data: &EcmData,
    cols: Vec<Vec<f64>>,
    row_clusters: Vec<usize>,
    absorbed_nested: usize,
    absorbed_other: usize,
    se_kind: SeKind,
) -> Result<Fit> {
    let k = data.k();
    let n = cols[0].len();
    let x = DMatrix::from_fn(n, k, |i, j| cols[j + 1][i]);
    let design = DesignMatrix::new(data.slope_names.clone(), x)?;
    // Country effects are nested in country clusters and do not enter the
    // cluster small-sample scaling.
    let extra = match se_kind {
        SeKind::Clustered => absorbed_other,
        _ => absorbed_nested + absorbed_other,
    };
    let res = least_squares_absorbed(&design, &cols[0], se_kind, Some(&row_clusters), extra)?;
    if res.rank < k {
        return Err(Error::RankDeficient(format!(
            "slope block has rank {} < {k} after absorbing fixed effects",
            res.rank
        )));
    }
    let covariance = res.covariance_matrix();
    Ok(Fit {
        coefficients: res.coefficients,
        covariance,
        used: used_counts(data),
        country_estimates: Vec::new(),
        mg_long_run: None,
    })
}

pub(crate) fn fit_twfe(data: &EcmData, se_kind: SeKind) -> Result<Fit> {
    let rows: Vec<usize> = (0..data.nrows()).collect();
    let mut cols = columns(data, &rows);
    let (nc, ny) = absorb_two_way(&data.row_country, &data.row_year, &mut cols);
    pooled_fit(data, cols, data.row_country.clone(), nc, ny, se_kind)
}

pub(crate) fn fit_fe_gte(data: &EcmData, groups: &GroupMap, se_kind: SeKind) -> Result<Fit> {
    let mut by_group: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (r, &c) in data.row_country.iter().enumerate() {
        let name = &data.countries[c];
        let g = groups.get(name).ok_or_else(|| {
            Error::InvalidSpec(format!("country {name} has no group assignment"))
        })?;
        by_group.entry(g.as_str()).or_default().push(r);
    }
    let k = data.k();
    let mut cols: Vec<Vec<f64>> = vec![Vec::with_capacity(data.nrows()); k + 1];
    let mut clusters = Vec::with_capacity(data.nrows());
    let mut nested = 0;
    let mut other = 0;
    for (g, rows) in &by_group {
        let rc: Vec<usize> = rows.iter().map(|&r| data.row_country[r]).collect();
        let ry: Vec<i32> = rows.iter().map(|&r| data.row_year[r]).collect();
        let mut distinct = rc.clone();
        distinct.dedup();
        if distinct.len() < 2 {
            return Err(Error::InvalidSpec(format!(
                "group {g} holds a single country; group-specific time effects would absorb all of its variation"
            )));
        }
        let mut gcols = columns(data, rows);
        let (nc, ny) = absorb_two_way(&rc, &ry, &mut gcols);
        nested += nc;
        other += ny;
        for (dst, src) in cols.iter_mut().zip(gcols) {
            dst.extend(src);
        }
        clusters.extend(rc);
    }
    pooled_fit(data, cols, clusters, nested, other, se_kind)
}

/// Error-correction regression with country and year fixed effects.
pub fn twfe_estimate(
    panel: &PanelDataset,
    outcome: &str,
    opts: &EstimatorOptions,
) -> Result<EstimateReport> {
    run(EstimatorKind::Twfe, panel, outcome, opts, None)
}

/// Fixed effects with group-specific year effects.
pub fn fe_gte_estimate(
    panel: &PanelDataset,
    outcome: &str,
    groups: &GroupMap,
    opts: &EstimatorOptions,
) -> Result<EstimateReport> {
    run(EstimatorKind::FeGte, panel, outcome, opts, Some(groups))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::LagSpec;
    use crate::linalg::least_squares;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_panel(rng: &mut ChaCha8Rng, n: usize, t: usize) -> PanelDataset {
        let mut y = vec![f64::NAN; n * t];
        let mut x = vec![f64::NAN; n * t];
        for c in 0..n {
            let start = rng.random_range(0..3);
            let end = rng.random_range((start + 4).min(t)..=t);
            for s in start..end {
                y[c * t + s] = rng.random::<f64>() * 2.0;
                x[c * t + s] = rng.random::<f64>();
            }
        }
        PanelDataset::from_blocks(
            (0..n).map(|c| format!("c{c}")).collect(),
            1990,
            t,
            [("y".to_string(), y), ("x".to_string(), x)].into_iter().collect(),
        )
        .unwrap()
    }

    /// Explicit dummy-variable regression as an oracle.
    fn dummy_ols(data: &EcmData) -> Vec<f64> {
        let k = data.k();
        let ncty = data.countries.len();
        let y0 = *data.row_year.iter().min().unwrap();
        let ny = (*data.row_year.iter().max().unwrap() - y0 + 1) as usize;
        let n = data.nrows();
        let x = DMatrix::from_fn(n, k + ncty + ny, |i, j| {
            if j < k {
                data.slopes[i * k + j]
            } else if j < k + ncty {
                f64::from(u8::from(data.row_country[i] == j - k))
            } else {
                f64::from(u8::from((data.row_year[i] - y0) as usize == j - k - ncty))
            }
        });
        let res = least_squares(&DesignMatrix::from_matrix(x).unwrap(), &data.target, SeKind::Classical, None).unwrap();
        res.coefficients[..k].to_vec()
    }

    #[test]
    fn within_equals_dummy_variables() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..20 {
            let n = rng.random_range(3..=6);
            let t = rng.random_range(6..=8);
            let panel = random_panel(&mut rng, n, t);
            let opts = EstimatorOptions {
                lags: LagSpec::new(1, 0).unwrap(),
                covariates: vec!["x".into()],
                ..Default::default()
            };
            let (data, _) = super::super::prepare(&panel, "y", &opts, EstimatorKind::Twfe).unwrap();
            let fit = match fit_twfe(&data, SeKind::Robust) {
                Ok(f) => f,
                Err(_) => continue,
            };
            let oracle = dummy_ols(&data);
            for (a, b) in fit.coefficients.iter().zip(&oracle) {
                assert!((a - b).abs() < 1e-8, "{a} vs {b}");
            }
        }
    }

    #[test]
    fn noise_free_ar1_recovers_rho() {
        let n = 5;
        let t = 12;
        let mut y = vec![0.0; n * t];
        for c in 0..n {
            let alpha = 0.3 + 0.2 * c as f64;
            y[c * t] = c as f64;
            for s in 1..t {
                y[c * t + s] = alpha + 0.7 * y[c * t + s - 1];
            }
        }
        let panel = PanelDataset::from_blocks(
            (0..n).map(|c| format!("c{c}")).collect(),
            2000,
            t,
            [("y".to_string(), y)].into_iter().collect(),
        )
        .unwrap();
        let opts = EstimatorOptions {
            lags: LagSpec::new(1, 0).unwrap(),
            ..Default::default()
        };
        let rep = twfe_estimate(&panel, "y", &opts).unwrap();
        assert!((rep.phi.estimate - 0.3).abs() < 1e-8);
    }

    #[test]
    fn single_group_matches_twfe_and_singletons_fail() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let panel = random_panel(&mut rng, 6, 10);
        let opts = EstimatorOptions {
            lags: LagSpec::new(2, 0).unwrap(),
            ..Default::default()
        };
        let one: GroupMap = panel.countries().iter().map(|c| (c.clone(), "g".into())).collect();
        let a = twfe_estimate(&panel, "y", &opts).unwrap();
        let b = fe_gte_estimate(&panel, "y", &one, &opts).unwrap();
        for (x, y) in a.coefficients.iter().zip(&b.coefficients) {
            assert!((x - y).abs() < 1e-10);
        }
        for (x, y) in a.covariance.iter().zip(&b.covariance) {
            assert!((x - y).abs() < 1e-10);
        }
        let own: GroupMap = panel.countries().iter().map(|c| (c.clone(), c.clone())).collect();
        assert!(fe_gte_estimate(&panel, "y", &own, &opts).is_err());
    }
}
