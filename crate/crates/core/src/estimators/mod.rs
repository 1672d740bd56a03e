//! Convergence-speed estimators for the error-correction panel model.
//!
//! All panel estimators share one row layout (see [`design`]): the target is
//! `dy_it`, the first slope is `y_{i,t-1}` (its coefficient is `-phi`), then
//! `p - 1` lagged differences `psi`, covariate levels `beta` and optional
//! lagged covariate differences.

pub mod barro;
pub mod cce;
pub mod design;
pub mod jackknife;
pub mod stats;
pub mod twfe;

use std::collections::BTreeMap;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::SeKind;
use crate::panel::PanelDataset;

pub use barro::{barro_estimate, barro_regression, BarroMethod, BarroOptions, BarroRegression, BarroResult};
pub use cce::{dccemg_estimate, dccep_estimate};
pub use design::{EcmData, EcmLayout};
pub use jackknife::{half_panel_jackknife, jackknife_combine};
pub use stats::{long_run_effect, mean_lag, Estimate};
pub use twfe::{fe_gte_estimate, twfe_estimate};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EstimatorKind {
    Barro,
    Twfe,
    FeGte,
    Dccep,
    Dccemg,
}

impl std::fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EstimatorKind::Barro => "Barro",
            EstimatorKind::Twfe => "TWFE",
            EstimatorKind::FeGte => "FE-GTE",
            EstimatorKind::Dccep => "DCCEP",
            EstimatorKind::Dccemg => "DCCEMG",
        })
    }
}

impl EstimatorKind {
    pub fn default_se(self) -> SeKind {
        match self {
            EstimatorKind::Twfe | EstimatorKind::FeGte => SeKind::Clustered,
            _ => SeKind::Robust,
        }
    }
}

/// Lag orders. With `default_rule` set, `p = q = max(1, floor(T_ave^(1/3)))`
/// and the mean-group estimator adds one cross-section-average lag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LagSpec {
    pub p: usize,
    pub q: usize,
    pub default_rule: bool,
}

impl Default for LagSpec {
    fn default() -> Self {
        LagSpec {
            p: 1,
            q: 0,
            default_rule: true,
        }
    }
}

impl LagSpec {
    pub fn new(p: usize, q: usize) -> Result<Self> {
        let spec = LagSpec {
            p,
            q,
            default_rule: false,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !self.default_rule && self.p == 0 {
            return Err(Error::InvalidSpec("lag order p must be at least 1".into()));
        }
        Ok(())
    }

    /// Concrete `(p, q)` for a panel with average span `t_ave`.
    pub fn resolve(&self, t_ave: f64, heterogeneous: bool) -> LagSpec {
        if !self.default_rule {
            return *self;
        }
        let p = (t_ave.max(1.0).cbrt().floor() as usize).max(1);
        LagSpec {
            p,
            q: if heterogeneous { p + 1 } else { p },
            default_rule: true,
        }
    }
}

/// Options shared by the panel estimators.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimatorOptions {
    pub lags: LagSpec,
    pub covariates: Vec<String>,
    /// Lagged covariate differences `dx_{t-s}`, `s = 0..covariate_lags`.
    pub covariate_lags: usize,
    /// Standard-error kind; `None` picks the estimator default.
    pub se_kind: Option<SeKind>,
    /// Covariates with a common slope under the mean-group estimator.
    pub homogeneous_covariates: Vec<String>,
    /// Extra variables averaged into the cross-section proxies (CCE only).
    pub extra_cs: Vec<String>,
}

/// Country to group label, for FE-GTE.
pub type GroupMap = BTreeMap<String, String>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSizes {
    pub n: usize,
    pub t_min: usize,
    pub t_ave: f64,
    pub t_max: usize,
    pub nobs: usize,
}

impl SampleSizes {
    pub fn from_counts(counts: &[usize]) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::EmptySample("no countries in the estimation sample".into()));
        }
        let nobs: usize = counts.iter().sum();
        Ok(SampleSizes {
            n: counts.len(),
            t_min: *counts.iter().min().unwrap(),
            t_ave: nobs as f64 / counts.len() as f64,
            t_max: *counts.iter().max().unwrap(),
            nobs,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryEstimate {
    pub country: String,
    pub nobs: usize,
    pub coefficients: Vec<f64>,
    pub phi: f64,
    /// `beta_j / phi_i` per covariate; `None` when `phi_i = 0`.
    pub long_run: Vec<Option<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub estimator: EstimatorKind,
    pub jackknife: bool,
    pub outcome: String,
    pub lags: LagSpec,
    pub se_kind: SeKind,
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    /// Row-major covariance of `coefficients`.
    pub covariance: Vec<f64>,
    pub phi: Estimate,
    pub psi: Vec<Estimate>,
    pub beta: Vec<Estimate>,
    pub long_run: Vec<Option<Estimate>>,
    pub mean_lag: Option<Estimate>,
    pub country_estimates: Vec<CountryEstimate>,
    pub sample: SampleSizes,
}

impl EstimateReport {
    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        let k = self.coefficients.len();
        DMatrix::from_row_slice(k, k, &self.covariance)
    }
}

/// Output of a fit before derived statistics are attached.
#[derive(Debug, Clone)]
pub(crate) struct Fit {
    pub coefficients: Vec<f64>,
    pub covariance: DMatrix<f64>,
    /// `(country index, rows used)`.
    pub used: Vec<(usize, usize)>,
    pub country_estimates: Vec<CountryEstimate>,
    /// Mean-group long-run effects (averaged per-country ratios).
    pub mg_long_run: Option<Vec<Option<Estimate>>>,
}

pub(crate) fn average_span(panel: &PanelDataset, outcome: &str) -> Result<f64> {
    let mut total = 0usize;
    let mut n = 0usize;
    for c in 0..panel.n_countries() {
        let k = panel.observed_count(outcome, c)?;
        if k > 0 {
            total += k;
            n += 1;
        }
    }
    if n == 0 {
        return Err(Error::EmptySample(format!("{outcome} is never observed")));
    }
    Ok(total as f64 / n as f64)
}

pub(crate) fn prepare(
    panel: &PanelDataset,
    outcome: &str,
    opts: &EstimatorOptions,
    kind: EstimatorKind,
) -> Result<(EcmData, LagSpec)> {
    opts.lags.validate()?;
    for h in &opts.homogeneous_covariates {
        if !opts.covariates.contains(h) {
            return Err(Error::InvalidSpec(format!(
                "homogeneous covariate {h} is not among the covariates"
            )));
        }
    }
    let lags = opts
        .lags
        .resolve(average_span(panel, outcome)?, kind == EstimatorKind::Dccemg);
    let cce = matches!(kind, EstimatorKind::Dccep | EstimatorKind::Dccemg);
    if !cce && !opts.extra_cs.is_empty() {
        return Err(Error::InvalidSpec(format!("{kind} takes no cross-section averages")));
    }
    let data = EcmData::build(
        panel,
        &EcmLayout {
            outcome: outcome.to_string(),
            p: lags.p,
            covariates: opts.covariates.clone(),
            covariate_lags: opts.covariate_lags,
            cs_lags: cce.then_some(lags.q),
            extra_cs: opts.extra_cs.clone(),
        },
    )?;
    Ok((data, lags))
}

pub(crate) fn mean_lag_from(coefs: &[f64], cov: &DMatrix<f64>, p: usize) -> Option<Estimate> {
    let phi = -coefs[0];
    let psi = &coefs[1..p];
    let mut sub = cov.view((0, 0), (p, p)).into_owned();
    for j in 1..p {
        sub[(0, j)] = -sub[(0, j)];
        sub[(j, 0)] = -sub[(j, 0)];
    }
    mean_lag(phi, psi, &sub).ok()
}

pub(crate) fn build_report(
    kind: EstimatorKind,
    outcome: &str,
    data: &EcmData,
    fit: Fit,
    lags: LagSpec,
    se_kind: SeKind,
    jackknife: bool,
) -> Result<EstimateReport> {
    let k = data.k();
    let c = &fit.coefficients;
    let cov = &fit.covariance;
    let se = |j: usize| cov[(j, j)].max(0.0).sqrt();
    let p = data.p;
    let phi = Estimate::new("phi", -c[0], se(0));
    let psi = (1..p)
        .map(|j| Estimate::new(data.slope_names[j].clone(), c[j], se(j)))
        .collect();
    let b0 = data.beta_offset();
    let beta: Vec<Estimate> = (0..data.n_covariates)
        .map(|j| Estimate::new(data.slope_names[b0 + j].clone(), c[b0 + j], se(b0 + j)))
        .collect();
    let long_run = match fit.mg_long_run {
        Some(lr) => lr,
        None => beta
            .iter()
            .enumerate()
            .map(|(j, b)| {
                let bj = b0 + j;
                let sub = DMatrix::from_row_slice(
                    2,
                    2,
                    &[cov[(bj, bj)], -cov[(bj, 0)], -cov[(0, bj)], cov[(0, 0)]],
                );
                long_run_effect(&b.name, b.estimate, phi.estimate, &sub).ok()
            })
            .collect(),
    };
    let counts: Vec<usize> = fit.used.iter().map(|(_, r)| *r).collect();
    Ok(EstimateReport {
        estimator: kind,
        jackknife,
        outcome: outcome.to_string(),
        lags,
        se_kind,
        names: data.slope_names.clone(),
        coefficients: c.clone(),
        covariance: (0..k * k).map(|i| cov[(i / k, i % k)]).collect(),
        mean_lag: mean_lag_from(c, cov, p),
        phi,
        psi,
        beta,
        long_run,
        country_estimates: fit.country_estimates,
        sample: SampleSizes::from_counts(&counts)?,
    })
}

pub(crate) fn used_counts(data: &EcmData) -> Vec<(usize, usize)> {
    data.country_ranges()
        .into_iter()
        .map(|(c, r)| (c, r.len()))
        .collect()
}

/// Runs one panel estimator by kind (Barro is separate; see [`barro_estimate`]).
pub fn estimate(
    kind: EstimatorKind,
    panel: &PanelDataset,
    outcome: &str,
    opts: &EstimatorOptions,
    groups: Option<&GroupMap>,
) -> Result<EstimateReport> {
    match kind {
        EstimatorKind::Twfe => twfe_estimate(panel, outcome, opts),
        EstimatorKind::FeGte => {
            let groups = groups.ok_or_else(|| {
                Error::InvalidSpec("FE-GTE requires a country-to-group mapping".into())
            })?;
            fe_gte_estimate(panel, outcome, groups, opts)
        }
        EstimatorKind::Dccep => dccep_estimate(panel, outcome, opts),
        EstimatorKind::Dccemg => dccemg_estimate(panel, outcome, opts),
        EstimatorKind::Barro => Err(Error::InvalidSpec(
            "Barro regressions run through barro_estimate".into(),
        )),
    }
}

/// Fits on prepared rows; shared by the plain and jackknife entry points.
pub(crate) fn fit_rows(
    kind: EstimatorKind,
    data: &EcmData,
    opts: &EstimatorOptions,
    groups: Option<&GroupMap>,
    se_kind: SeKind,
) -> Result<Fit> {
    match kind {
        EstimatorKind::Twfe => twfe::fit_twfe(data, se_kind),
        EstimatorKind::FeGte => {
            let groups = groups.ok_or_else(|| {
                Error::InvalidSpec("FE-GTE requires a country-to-group mapping".into())
            })?;
            twfe::fit_fe_gte(data, groups, se_kind)
        }
        EstimatorKind::Dccep => cce::fit_dccep(data, se_kind),
        EstimatorKind::Dccemg => cce::fit_dccemg(data, &opts.homogeneous_covariates, se_kind),
        EstimatorKind::Barro => Err(Error::InvalidSpec(
            "Barro regressions run through barro_estimate".into(),
        )),
    }
}

pub(crate) fn run(
    kind: EstimatorKind,
    panel: &PanelDataset,
    outcome: &str,
    opts: &EstimatorOptions,
    groups: Option<&GroupMap>,
) -> Result<EstimateReport> {
    let (data, lags) = prepare(panel, outcome, opts, kind)?;
    let se_kind = opts.se_kind.unwrap_or(kind.default_se());
    let fit = fit_rows(kind, &data, opts, groups, se_kind)?;
    build_report(kind, outcome, &data, fit, lags, se_kind, false)
}
