//! Dynamic common correlated effects: pooled and mean-group.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::design::EcmData;
use super::stats::Estimate;
use super::{run, CountryEstimate, EstimateReport, EstimatorKind, EstimatorOptions, Fit};
use crate::error::{Error, Result};
use crate::linalg::{least_squares_absorbed, DesignMatrix, Projection, SeKind};
use crate::panel::PanelDataset;

/// Per-country residualization of target and slopes on `[1, cs]`.
struct Partialled {
    target: Vec<f64>,
    slopes: Vec<DMatrix<f64>>,
    clusters: Vec<usize>,
    used: Vec<(usize, usize)>,
    absorbed: usize,
}

/// `(country, partialled target, partialled slopes, projection rank)`.
type Piece = (usize, DVector<f64>, DMatrix<f64>, usize);

fn partial_out(data: &EcmData, cols: &[usize]) -> Result<Partialled> {
    let ranges = data.country_ranges();
    let pieces: Vec<Option<Piece>> = ranges
        .par_iter()
        .map(|(c, rg)| {
            let basis = data.cs_basis(rg.clone());
            let proj = Projection::new(&basis)?;
            if rg.len() <= proj.rank() {
                log::warn!(
                    "dropping {}: {} rows do not exceed {} cross-section-average columns",
                    data.countries[*c],
                    rg.len(),
                    proj.rank()
                );
                return Ok(None);
            }
            let y = DVector::from_column_slice(&data.target[rg.clone()]);
            let x = data.slope_matrix(rg.clone()).select_columns(cols);
            Ok(Some((*c, proj.apply(&y), proj.apply_matrix(&x), proj.rank())))
        })
        .collect::<Result<_>>()?;
    let mut out = Partialled {
        target: Vec::new(),
        slopes: Vec::new(),
        clusters: Vec::new(),
        used: Vec::new(),
        absorbed: 0,
    };
    for (c, y, x, rank) in pieces.into_iter().flatten() {
        out.target.extend(y.iter());
        out.clusters.extend(std::iter::repeat_n(c, y.len()));
        out.used.push((c, y.len()));
        out.slopes.push(x);
        out.absorbed += rank;
    }
    if out.used.is_empty() {
        return Err(Error::EmptySample(
            "no country has more rows than cross-section-average columns".into(),
        ));
    }
    Ok(out)
}

fn stack(blocks: &[DMatrix<f64>], k: usize) -> DMatrix<f64> {
    let n: usize = blocks.iter().map(|b| b.nrows()).sum();
    let mut x = DMatrix::zeros(n, k);
    let mut r = 0;
    for b in blocks {
        x.rows_mut(r, b.nrows()).copy_from(b);
        r += b.nrows();
    }
    x
}

fn pooled(
    names: Vec<String>,
    part: &Partialled,
    se_kind: SeKind,
) -> Result<(Vec<f64>, DMatrix<f64>)> {
    let k = names.len();
    let x = stack(&part.slopes, k);
    let extra = if se_kind == SeKind::Clustered { 0 } else { part.absorbed };
    let res = least_squares_absorbed(
        &DesignMatrix::new(names, x)?,
        &part.target,
        se_kind,
        Some(&part.clusters),
        extra,
    )?;
    if res.rank < k {
        return Err(Error::RankDeficient(format!(
            "pooled slope block has rank {} < {k} after cross-section augmentation",
            res.rank
        )));
    }
    let cov = res.covariance_matrix();
    Ok((res.coefficients, cov))
}

pub(crate) fn fit_dccep(data: &EcmData, se_kind: SeKind) -> Result<Fit> {
    let k = data.k();
    let all: Vec<usize> = (0..k).collect();
    let part = partial_out(data, &all)?;
    let before: f64 = data.slopes.iter().step_by(k).map(|v| v * v).sum();
    let after: f64 = part.slopes.iter().map(|b| b.column(0).norm_squared()).sum();
    if after <= 1e-12 * before.max(f64::MIN_POSITIVE) {
        return Err(Error::Estimation(
            "lagged outcome has no variation left after cross-section augmentation".into(),
        ));
    }
    let (coefficients, covariance) = pooled(data.slope_names.clone(), &part, se_kind)?;
    Ok(Fit {
        coefficients,
        covariance,
        used: part.used,
        country_estimates: Vec::new(),
        mg_long_run: None,
    })
}

fn homogeneous_columns(data: &EcmData, names: &[String]) -> Vec<usize> {
    data.slope_names
        .iter()
        .enumerate()
        .filter(|(_, s)| {
            names
                .iter()
                .any(|h| *s == h || s.strip_prefix('L').and_then(|r| r.split_once(".D.")).is_some_and(|(_, v)| v == h))
        })
        .map(|(j, _)| j)
        .collect()
}

pub(crate) fn fit_dccemg(data: &EcmData, homogeneous: &[String], se_kind: SeKind) -> Result<Fit> {
    let k = data.k();
    let hom = homogeneous_columns(data, homogeneous);
    let het: Vec<usize> = (0..k).filter(|j| !hom.contains(j)).collect();

    // Common slopes: stacked regression on data partialled out per country
    // on the heterogeneous slopes and the cross-section averages.
    let (hom_coef, hom_cov) = if hom.is_empty() {
        (Vec::new(), DMatrix::zeros(0, 0))
    } else {
        let ranges = data.country_ranges();
        let mut target = Vec::new();
        let mut blocks = Vec::new();
        let mut clusters = Vec::new();
        let mut absorbed = 0;
        let mut used = Vec::new();
        for (c, rg) in &ranges {
            let s = data.slope_matrix(rg.clone());
            let basis = {
                let h = data.cs_basis(rg.clone());
                let sh = s.select_columns(&het);
                let mut b = DMatrix::zeros(rg.len(), sh.ncols() + h.ncols());
                b.columns_mut(0, sh.ncols()).copy_from(&sh);
                b.columns_mut(sh.ncols(), h.ncols()).copy_from(&h);
                b
            };
            let proj = Projection::new(&basis)?;
            if rg.len() <= proj.rank() {
                continue;
            }
            let y = proj.apply(&DVector::from_column_slice(&data.target[rg.clone()]));
            target.extend(y.iter());
            blocks.push(proj.apply_matrix(&s.select_columns(&hom)));
            clusters.extend(std::iter::repeat_n(*c, rg.len()));
            absorbed += proj.rank();
            used.push((*c, rg.len()));
        }
        let part = Partialled {
            target,
            slopes: blocks,
            clusters,
            used,
            absorbed,
        };
        if part.used.is_empty() {
            return Err(Error::EmptySample("no country identifies the common slopes".into()));
        }
        let names = hom.iter().map(|&j| data.slope_names[j].clone()).collect();
        pooled(names, &part, se_kind)?
    };

    let ranges = data.country_ranges();
    let per_country: Vec<Option<(usize, usize, Vec<f64>)>> = ranges
        .par_iter()
        .map(|(c, rg)| {
            let s = data.slope_matrix(rg.clone());
            let mut y = DVector::from_column_slice(&data.target[rg.clone()]);
            if !hom.is_empty() {
                let sh = s.select_columns(&hom);
                y -= sh * DVector::from_column_slice(&hom_coef);
            }
            let sx = s.select_columns(&het);
            let h = data.cs_basis(rg.clone());
            let ncol = sx.ncols() + h.ncols();
            if rg.len() <= ncol {
                log::warn!(
                    "dropping {}: {} rows for {ncol} regressors",
                    data.countries[*c],
                    rg.len()
                );
                return Ok(None);
            }
            let mut x = DMatrix::zeros(rg.len(), ncol);
            x.columns_mut(0, sx.ncols()).copy_from(&sx);
            x.columns_mut(sx.ncols(), h.ncols()).copy_from(&h);
            let res = least_squares_absorbed(
                &DesignMatrix::from_matrix(x)?,
                y.as_slice(),
                SeKind::Classical,
                None,
                0,
            )?;
            // The slopes must be identified; collinearity among the averages alone is harmless.
            let hproj = Projection::new(&h)?;
            let resid = hproj.apply_matrix(&sx);
            let slope_rank = DesignMatrix::from_matrix(resid.clone())
                .ok()
                .map(|d| {
                    let svd = d.values().clone().svd(false, false);
                    let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
                    svd.singular_values
                        .iter()
                        .filter(|&&s| smax > 0.0 && s > 1e-10 * smax)
                        .count()
                })
                .unwrap_or(0);
            if slope_rank < sx.ncols() {
                log::warn!("dropping {}: slopes not identified", data.countries[*c]);
                return Ok(None);
            }
            let mut coefs = vec![0.0; k];
            for (pos, &j) in het.iter().enumerate() {
                coefs[j] = res.coefficients[pos];
            }
            for (pos, &j) in hom.iter().enumerate() {
                coefs[j] = hom_coef[pos];
            }
            Ok(Some((*c, rg.len(), coefs)))
        })
        .collect::<Result<_>>()?;
    let rows: Vec<(usize, usize, Vec<f64>)> = per_country.into_iter().flatten().collect();
    let n = rows.len();
    if n < 2 {
        return Err(Error::EmptySample(format!(
            "{n} countries survive the per-country regressions; mean group needs 2"
        )));
    }
    let nf = n as f64;
    let mean: Vec<f64> = (0..k)
        .map(|j| rows.iter().map(|r| r.2[j]).sum::<f64>() / nf)
        .collect();
    let mut cov = DMatrix::zeros(k, k);
    for (_, _, c) in &rows {
        let d = DVector::from_iterator(k, c.iter().zip(&mean).map(|(a, m)| a - m));
        cov += &d * d.transpose();
    }
    cov /= nf * (nf - 1.0);
    for a in 0..k {
        for b in 0..k {
            if hom.contains(&a) || hom.contains(&b) {
                cov[(a, b)] = 0.0;
            }
        }
    }
    for (pa, &a) in hom.iter().enumerate() {
        for (pb, &b) in hom.iter().enumerate() {
            cov[(a, b)] = hom_cov[(pa, pb)];
        }
    }

    let b0 = data.beta_offset();
    let country_estimates: Vec<CountryEstimate> = rows
        .iter()
        .map(|(c, nobs, coefs)| {
            let phi = -coefs[0];
            CountryEstimate {
                country: data.countries[*c].clone(),
                nobs: *nobs,
                coefficients: coefs.clone(),
                phi,
                long_run: (0..data.n_covariates)
                    .map(|j| (phi != 0.0).then(|| coefs[b0 + j] / phi))
                    .collect(),
            }
        })
        .collect();
    let mg_long_run = (0..data.n_covariates)
        .map(|j| {
            let vals: Vec<f64> = country_estimates
                .iter()
                .filter_map(|e| e.long_run[j])
                .collect();
            if vals.len() < 2 {
                return None;
            }
            let m = vals.len() as f64;
            let avg = vals.iter().sum::<f64>() / m;
            let var = vals.iter().map(|v| (v - avg).powi(2)).sum::<f64>() / (m * (m - 1.0));
            Some(Estimate::new(data.slope_names[b0 + j].clone(), avg, var.sqrt()))
        })
        .collect();
    Ok(Fit {
        coefficients: mean,
        covariance: cov,
        used: rows.iter().map(|(c, r, _)| (*c, *r)).collect(),
        country_estimates,
        mg_long_run: Some(mg_long_run),
    })
}

/// Pooled dynamic CCE.
pub fn dccep_estimate(
    panel: &PanelDataset,
    outcome: &str,
    opts: &EstimatorOptions,
) -> Result<EstimateReport> {
    run(EstimatorKind::Dccep, panel, outcome, opts, None)
}

/// Mean-group dynamic CCE, optionally with common slopes on a covariate subset.
pub fn dccemg_estimate(
    panel: &PanelDataset,
    outcome: &str,
    opts: &EstimatorOptions,
) -> Result<EstimateReport> {
    run(EstimatorKind::Dccemg, panel, outcome, opts, None)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::estimators::LagSpec;

    /// Either heterogeneous loadings on a common factor with a common
    /// `rho`, or heterogeneous `rho` without a factor; both fit exactly.
    fn factor_panel(n: usize, t: usize, hetero: bool) -> PanelDataset {
        let f: Vec<f64> = (0..t).map(|s| (s as f64 * 0.7).sin() + 0.05 * s as f64).collect();
        let mut y = vec![0.0; n * t];
        for c in 0..n {
            let gamma = if hetero { 0.0 } else { 1.0 + 0.3 * c as f64 };
            let rho = if hetero { 0.4 + 0.05 * c as f64 } else { 0.6 };
            y[c * t] = c as f64 * 0.1;
            for s in 1..t {
                y[c * t + s] = 0.2 + gamma * f[s] + rho * y[c * t + s - 1];
            }
        }
        PanelDataset::from_blocks(
            (0..n).map(|c| format!("c{c:02}")).collect(),
            1960,
            t,
            [("y".to_string(), y)].into_iter().collect(),
        )
        .unwrap()
    }

    #[test]
    fn dccep_exact_on_noise_free_homogeneous_data() {
        // Common loading makes the factor an exact combination of the averages.
        let t = 30;
        let f: Vec<f64> = (0..t).map(|s| (s as f64 * 0.7).sin() + 0.05 * s as f64).collect();
        let n = 6;
        let mut y = vec![0.0; n * t];
        for c in 0..n {
            y[c * t] = c as f64;
            for s in 1..t {
                y[c * t + s] = 0.1 * c as f64 + 1.5 * f[s] + 0.6 * y[c * t + s - 1];
            }
        }
        let panel = PanelDataset::from_blocks(
            (0..n).map(|c| format!("c{c}")).collect(),
            1960,
            t,
            [("y".to_string(), y)].into_iter().collect(),
        )
        .unwrap();
        let opts = EstimatorOptions {
            lags: LagSpec::new(1, 1).unwrap(),
            ..Default::default()
        };
        let rep = dccep_estimate(&panel, "y", &opts).unwrap();
        assert!((rep.phi.estimate - 0.4).abs() < 1e-8, "{}", rep.phi.estimate);
    }

    #[test]
    fn mg_exact_per_country_and_variance_zero_for_identical_countries() {
        let opts = EstimatorOptions {
            lags: LagSpec::new(1, 1).unwrap(),
            ..Default::default()
        };
        let panel = factor_panel(8, 40, true);
        let rep = dccemg_estimate(&panel, "y", &opts).unwrap();
        let mean_phi: f64 = (0..8).map(|c| 0.6 - 0.05 * c as f64).sum::<f64>() / 8.0;
        assert_eq!(rep.country_estimates.len(), 8);
        assert!((rep.phi.estimate - mean_phi).abs() < 1e-6, "{}", rep.phi.estimate);
        let rep = dccemg_estimate(&factor_panel(8, 40, false), "y", &opts).unwrap();
        assert!((rep.phi.estimate - 0.4).abs() < 1e-6, "{}", rep.phi.estimate);

        let t = 25;
        let series: Vec<f64> = (0..t).map(|s| ((s * 7 % 11) as f64).ln_1p()).collect();
        let y: Vec<f64> = (0..2).flat_map(|_| series.clone()).collect();
        let same = PanelDataset::from_blocks(
            (0..2).map(|c| format!("c{c}")).collect(),
            1960,
            t,
            [("y".to_string(), y)].into_iter().collect(),
        )
        .unwrap();
        let opts = EstimatorOptions {
            lags: LagSpec::new(2, 0).unwrap(),
            ..Default::default()
        };
        let rep = dccemg_estimate(&same, "y", &opts).unwrap();
        assert!(rep.covariance.iter().all(|v| *v == 0.0));
    }
}
