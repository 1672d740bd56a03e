//! Effects of time-invariant regressors: filter the dynamics with a pooled
//! estimate, then regress the filtered country intercepts on `z_i`.

use std::collections::BTreeMap;
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimators::{
    half_panel_jackknife, EcmData, EcmLayout, EstimateReport, EstimatorKind, EstimatorOptions,
    Estimate,
};
use crate::linalg::{least_squares, DesignMatrix, SeKind};
use crate::panel::PanelDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FilterSource {
    Twfe,
    TwfeJackknife,
    Dccep,
    #[default]
    DccepJackknife,
}

impl FilterSource {
    pub fn estimator(self) -> EstimatorKind {
        match self {
            FilterSource::Twfe | FilterSource::TwfeJackknife => EstimatorKind::Twfe,
            FilterSource::Dccep | FilterSource::DccepJackknife => EstimatorKind::Dccep,
        }
    }

    pub fn jackknife(self) -> bool {
        matches!(self, FilterSource::TwfeJackknife | FilterSource::DccepJackknife)
    }
}

/// Levels form `y_t = a + sum rho_l y_{t-l} + sum_j sum_m c_jm x_{j,t-m}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelsCoefficients {
    pub ar: Vec<f64>,
    /// Per covariate, lags `0..=covariate_lags`.
    pub covariates: Vec<Vec<f64>>,
}

/// Maps error-correction coefficients (slope order of [`EcmData`]) to levels.
pub fn ecm_to_levels(coefs: &[f64], p: usize, n_cov: usize, covariate_lags: usize) -> Result<LevelsCoefficients> {
    let expected = p + n_cov * (1 + covariate_lags);
    if coefs.len() != expected {
        return Err(Error::Dimension(format!(
            "{} coefficients for p = {p}, {n_cov} covariates and {covariate_lags} difference lags",
            coefs.len()
        )));
    }
    let phi = -coefs[0];
    let psi = &coefs[1..p];
    let mut ar = vec![0.0; p];
    ar[0] = 1.0 - phi + psi.first().copied().unwrap_or(0.0);
    for l in 2..p {
        ar[l - 1] = psi[l - 1] - psi[l - 2];
    }
    if p >= 2 {
        ar[p - 1] = -psi[p - 2];
    }
    let lx = covariate_lags;
    let covariates = (0..n_cov)
        .map(|j| {
            let beta = coefs[p + j];
            let lam = &coefs[p + n_cov + j * lx..p + n_cov + (j + 1) * lx];
            let mut c = vec![0.0; lx + 1];
            c[0] = beta + lam.first().copied().unwrap_or(0.0);
            for m in 1..lx {
                c[m] = lam[m] - lam[m - 1];
            }
            if lx >= 1 {
                c[lx] = -lam[lx - 1];
            }
            c
        })
        .collect();
    Ok(LevelsCoefficients { ar, covariates })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilteredIntercepts {
    pub source: Option<FilterSource>,
    pub countries: Vec<String>,
    pub values: Vec<f64>,
    pub nobs: Vec<usize>,
}

/// `a_i = mean_t (y_it - sum rho_l y_{i,t-l} - sum c_jm x_{j,i,t-m})` over the
/// rows where every term is observed.
pub fn filtered_intercepts(
    panel: &PanelDataset,
    outcome: &str,
    covariates: &[String],
    levels: &LevelsCoefficients,
    source: Option<FilterSource>,
) -> Result<FilteredIntercepts> {
    if levels.covariates.len() != covariates.len() {
        return Err(Error::Dimension(format!(
            "{} covariate coefficient sets for {} covariates",
            levels.covariates.len(),
            covariates.len()
        )));
    }
    let p = levels.ar.len();
    let lx = levels.covariates.first().map_or(0, |c| c.len() - 1);
    if levels.covariates.iter().any(|c| c.len() != lx + 1) || p == 0 {
        return Err(Error::InvalidSpec("inconsistent levels coefficients".into()));
    }
    let data = EcmData::build(
        panel,
        &EcmLayout {
            outcome: outcome.to_string(),
            p,
            covariates: covariates.to_vec(),
            covariate_lags: lx,
            cs_lags: None,
            extra_cs: Vec::new(),
        },
    )?;
    let first = panel.first_year();
    let mut out = FilteredIntercepts {
        source,
        countries: Vec::new(),
        values: Vec::new(),
        nobs: Vec::new(),
    };
    for (c, rg) in data.country_ranges() {
        let y = panel.series(outcome, c)?;
        let xs: Vec<&[f64]> = covariates
            .iter()
            .map(|v| panel.series(v, c))
            .collect::<Result<_>>()?;
        let mut sum = 0.0;
        for r in rg.clone() {
            let t = (data.row_year[r] - first) as usize;
            let mut v = y[t];
            for (l, rho) in levels.ar.iter().enumerate() {
                v -= rho * y[t - l - 1];
            }
            for (x, cj) in xs.iter().zip(&levels.covariates) {
                for (m, cm) in cj.iter().enumerate() {
                    v -= cm * x[t - m];
                }
            }
            sum += v;
        }
        out.countries.push(panel.countries()[c].clone());
        out.values.push(sum / rg.len() as f64);
        out.nobs.push(rg.len());
    }
    Ok(out)
}

/// Filtered intercepts from a pooled estimate in error-correction form.
pub fn filtered_intercepts_from_report(
    panel: &PanelDataset,
    report: &EstimateReport,
    covariates: &[String],
    covariate_lags: usize,
    source: Option<FilterSource>,
) -> Result<FilteredIntercepts> {
    let levels = ecm_to_levels(&report.coefficients, report.lags.p, covariates.len(), covariate_lags)?;
    filtered_intercepts(panel, &report.outcome, covariates, &levels, source)
}

/// Cross-country regressors keyed by country id.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZTable {
    pub names: Vec<String>,
    pub rows: BTreeMap<String, Vec<f64>>,
}

pub fn read_z_csv<R: std::io::Read>(reader: R, country_column: &str) -> Result<ZTable> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cidx = headers
        .iter()
        .position(|h| h == country_column)
        .ok_or_else(|| Error::UnknownVariable(country_column.to_string()))?;
    let names: Vec<String> = headers
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != cidx)
        .map(|(_, h)| h.to_string())
        .collect();
    let mut rows = BTreeMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i as u64 + 2;
        let country = rec.get(cidx).unwrap_or("").to_string();
        let mut vals = Vec::with_capacity(names.len());
        let mut missing = false;
        for (j, field) in rec.iter().enumerate() {
            if j == cidx {
                continue;
            }
            if crate::panel::MISSING_TOKENS.contains(&field) {
                missing = true;
                continue;
            }
            vals.push(field.parse::<f64>().map_err(|_| Error::MalformedRow {
                line,
                message: format!("cannot parse {field:?} as a number"),
            })?);
        }
        if missing {
            log::warn!("dropping {country}: missing time-invariant regressor");
            continue;
        }
        if rows.insert(country.clone(), vals).is_some() {
            return Err(Error::MalformedRow {
                line,
                message: format!("duplicate country {country}"),
            });
        }
    }
    Ok(ZTable { names, rows })
}

pub fn load_z_csv(path: impl AsRef<Path>, country_column: &str) -> Result<ZTable> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_z_csv(file, country_column)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeInvariantResult {
    pub intercept: Estimate,
    pub theta: Vec<Estimate>,
    /// Row-major covariance of `(intercept, theta)`.
    pub covariance: Vec<f64>,
    pub n: usize,
    pub countries: Vec<String>,
}

/// OLS of the filtered intercepts on `[1, z_i]` over the countries present in
/// both inputs, with a heteroskedasticity-robust covariance.
pub fn time_invariant_effects(fi: &FilteredIntercepts, z: &ZTable) -> Result<TimeInvariantResult> {
    let kz = z.names.len();
    let mut ys = Vec::new();
    let mut zs = Vec::new();
    let mut countries = Vec::new();
    for (c, a) in fi.countries.iter().zip(&fi.values) {
        if let Some(row) = z.rows.get(c) {
            ys.push(*a);
            zs.push(row.clone());
            countries.push(c.clone());
        }
    }
    let n = ys.len();
    if n <= kz + 1 {
        return Err(Error::EmptySample(format!(
            "{n} matched countries for {} coefficients",
            kz + 1
        )));
    }
    let x = DMatrix::from_fn(n, kz + 1, |i, j| if j == 0 { 1.0 } else { zs[i][j - 1] });
    let mut names = vec!["intercept".to_string()];
    names.extend(z.names.iter().cloned());
    let res = least_squares(&DesignMatrix::new(names.clone(), x)?, &ys, SeKind::Robust, None)?;
    if res.rank < kz + 1 {
        return Err(Error::RankDeficient(format!(
            "time-invariant regressors have rank {} < {}",
            res.rank,
            kz + 1
        )));
    }
    let se = res.std_errors();
    Ok(TimeInvariantResult {
        intercept: Estimate::new("intercept", res.coefficients[0], se[0]),
        theta: (1..=kz)
            .map(|j| Estimate::new(names[j].clone(), res.coefficients[j], se[j]))
            .collect(),
        covariance: res.covariance.clone(),
        n,
        countries,
    })
}

/// Both steps: pooled first stage by `source`, then the cross-country regression.
pub fn two_step(
    panel: &PanelDataset,
    outcome: &str,
    opts: &EstimatorOptions,
    source: FilterSource,
    z: &ZTable,
) -> Result<(EstimateReport, FilteredIntercepts, TimeInvariantResult)> {
    let kind = source.estimator();
    let report = if source.jackknife() {
        half_panel_jackknife(kind, panel, outcome, opts, None)?
    } else {
        crate::estimators::estimate(kind, panel, outcome, opts, None)?
    };
    let fi = filtered_intercepts_from_report(panel, &report, &opts.covariates, opts.covariate_lags, Some(source))?;
    let tie = time_invariant_effects(&fi, z)?;
    Ok((report, fi, tie))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels_mapping() {
        // phi = 0.1, psi = (0.2, 0.05): rho = (1.1, -0.15, -0.05), sum = 0.9
        let l = ecm_to_levels(&[-0.1, 0.2, 0.05], 3, 0, 0).unwrap();
        let expect = [1.1, -0.15, -0.05];
        for (a, b) in l.ar.iter().zip(expect) {
            assert!((a - b).abs() < 1e-14);
        }
        let l = ecm_to_levels(&[-0.3, 0.5, 0.1, 0.2], 1, 1, 2).unwrap();
        assert_eq!(l.ar, vec![0.7]);
        let c = &l.covariates[0];
        assert!((c[0] - 0.6).abs() < 1e-14 && (c[1] - 0.1).abs() < 1e-14 && (c[2] + 0.2).abs() < 1e-14);
        assert!(ecm_to_levels(&[0.1], 2, 0, 0).is_err());
    }

    #[test]
    fn zero_filter_gives_time_means() {
        let y = vec![1.0, 2.0, 3.0, 4.0];
        let panel = PanelDataset::from_blocks(
            vec!["a".into()],
            2000,
            4,
            [("y".to_string(), y)].into_iter().collect(),
        )
        .unwrap();
        let fi = filtered_intercepts(
            &panel,
            "y",
            &[],
            &LevelsCoefficients {
                ar: vec![0.0],
                covariates: vec![],
            },
            None,
        )
        .unwrap();
        // rows t = 2001..2003
        assert!((fi.values[0] - 3.0).abs() < 1e-14);
    }

    #[test]
    fn dummy_regressor_gives_group_mean_difference() {
        let fi = FilteredIntercepts {
            source: None,
            countries: (0..6).map(|i| format!("c{i}")).collect(),
            values: vec![1.0, 2.0, 3.0, 10.0, 12.0, 14.0],
            nobs: vec![1; 6],
        };
        let z = ZTable {
            names: vec!["d".into()],
            rows: (0..6).map(|i| (format!("c{i}"), vec![f64::from(u8::from(i >= 3))])).collect(),
        };
        let r = time_invariant_effects(&fi, &z).unwrap();
        assert!((r.theta[0].estimate - 10.0).abs() < 1e-12);
        assert!((r.intercept.estimate - 2.0).abs() < 1e-12);
    }

    #[test]
    fn z_csv() {
        let text = "country,z1,z2\na,1,2\nb,NA,3\nc,0.5,1\n";
        let z = read_z_csv(text.as_bytes(), "country").unwrap();
        assert_eq!(z.names, vec!["z1", "z2"]);
        assert_eq!(z.rows.len(), 2);
        assert!(read_z_csv("country,z\na,x\n".as_bytes(), "country").is_err());
    }
}
