//! Cross-country Barro regressions of long-horizon growth on initial output.
//!
//! `y_{i,T} - y_{i,0} = a_T + b_T y_{i,0} [+ c_T (y_{i,0} - y^PPP_{i,0})] [+ theta' z_i]`
//! with `b_T = -(1 - (1 - phi)^T)`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use super::stats::{mean_lag, Estimate};
use crate::error::{Error, Result};
use crate::linalg::{gauss_newton_nls, least_squares, DesignMatrix, NlsModel, RegressionResult, SeKind};
use crate::panel::PanelDataset;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarroMethod {
    /// OLS for `b_T`, then `phi` by the delta method.
    #[default]
    Linear,
    /// `phi` estimated directly through `b(phi)`.
    Nls,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BarroOptions {
    pub year0: i32,
    pub year1: i32,
    /// Panel variables read at `year0`.
    #[serde(default)]
    pub covariates: Vec<String>,
    /// PPP-based initial output; enters as `y_0 - ppp_0`.
    #[serde(default)]
    pub ppp_var: Option<String>,
    #[serde(default)]
    pub method: BarroMethod,
    /// NLS only: horizon per country up to its last observation.
    #[serde(default)]
    pub unbalanced_horizons: bool,
    #[serde(default)]
    pub se_kind: SeKind,
}

impl BarroOptions {
    pub fn new(year0: i32, year1: i32) -> Self {
        BarroOptions {
            year0,
            year1,
            covariates: Vec::new(),
            ppp_var: None,
            method: BarroMethod::Linear,
            unbalanced_horizons: false,
            se_kind: SeKind::Robust,
        }
    }
}

/// Raw cross-country regression; coefficient order is
/// `[a_T, b_T, c_T?, z...]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarroRegression {
    pub horizon: usize,
    pub countries: Vec<String>,
    pub has_ppp: bool,
    pub regression: RegressionResult,
}

impl BarroRegression {
    pub fn b(&self) -> f64 {
        self.regression.coefficients[1]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BarroResult {
    pub method: BarroMethod,
    pub horizon: usize,
    pub n: usize,
    pub a_t: Estimate,
    pub b_t: Estimate,
    pub c_t: Option<Estimate>,
    pub phi: Estimate,
    pub theta: Option<Estimate>,
    pub mean_lag: Estimate,
    pub covariates: Vec<Estimate>,
}

/// `phi = 1 - (1 + b)^(1/T)`, defined for `b` in `(-1, 0)`.
pub fn phi_from_b(b: f64, horizon: usize) -> Result<f64> {
    if !(b > -1.0 && b < 0.0) {
        return Err(Error::Undefined(format!(
            "speed of convergence is not recoverable from b_T = {b} outside (-1, 0)"
        )));
    }
    Ok(1.0 - (1.0 + b).powf(1.0 / horizon as f64))
}

pub fn b_from_phi(phi: f64, horizon: usize) -> f64 {
    -(1.0 - (1.0 - phi).powi(horizon as i32))
}

struct Sample {
    countries: Vec<String>,
    growth: Vec<f64>,
    y0: Vec<f64>,
    horizons: Vec<usize>,
    extra: Vec<Vec<f64>>,
    extra_names: Vec<String>,
    has_ppp: bool,
}

fn sample(panel: &PanelDataset, outcome: &str, opts: &BarroOptions, unbalanced: bool) -> Result<Sample> {
    if opts.year1 <= opts.year0 {
        return Err(Error::InvalidSpec(format!(
            "year1 {} must follow year0 {}",
            opts.year1, opts.year0
        )));
    }
    panel.block(outcome)?;
    let mut s = Sample {
        countries: Vec::new(),
        growth: Vec::new(),
        y0: Vec::new(),
        horizons: Vec::new(),
        extra: Vec::new(),
        extra_names: Vec::new(),
        has_ppp: opts.ppp_var.is_some(),
    };
    if let Some(ppp) = &opts.ppp_var {
        panel.block(ppp)?;
        s.extra_names.push(format!("{outcome}-{ppp}"));
    }
    for z in &opts.covariates {
        panel.block(z)?;
        s.extra_names.push(z.clone());
    }
    for country in panel.countries() {
        let y0 = panel.get(country, opts.year0, outcome);
        let (y1, h) = if unbalanced {
            let mut found = None;
            for year in (opts.year0 + 1..=opts.year1).rev() {
                if let Some(v) = panel.get(country, year, outcome) {
                    found = Some((v, (year - opts.year0) as usize));
                    break;
                }
            }
            match found {
                Some((v, h)) => (Some(v), h),
                None => (None, 0),
            }
        } else {
            (
                panel.get(country, opts.year1, outcome),
                (opts.year1 - opts.year0) as usize,
            )
        };
        let (y0, y1) = match (y0, y1) {
            (Some(a), Some(b)) => (a, b),
            _ => {
                return Err(Error::InvalidSpec(format!(
                    "{country} lacks {outcome} at {} or {}; restrict the panel to a balanced window first",
                    opts.year0, opts.year1
                )))
            }
        };
        let mut row = Vec::new();
        if let Some(ppp) = &opts.ppp_var {
            let v = panel.get(country, opts.year0, ppp).ok_or_else(|| {
                Error::InvalidSpec(format!("{country} lacks {ppp} at {}", opts.year0))
            })?;
            row.push(y0 - v);
        }
        for z in &opts.covariates {
            let v = panel.get(country, opts.year0, z).ok_or_else(|| {
                Error::InvalidSpec(format!("{country} lacks {z} at {}", opts.year0))
            })?;
            row.push(v);
        }
        s.countries.push(country.clone());
        s.growth.push(y1 - y0);
        s.y0.push(y0);
        s.horizons.push(h);
        s.extra.push(row);
    }
    let k = 2 + s.extra_names.len();
    if s.countries.len() < k + 2 {
        return Err(Error::EmptySample(format!(
            "{} countries for {k} coefficients",
            s.countries.len()
        )));
    }
    Ok(s)
}

/// Linear Barro regression on the balanced endpoint sample.
pub fn barro_regression(panel: &PanelDataset, outcome: &str, opts: &BarroOptions) -> Result<BarroRegression> {
    let s = sample(panel, outcome, opts, false)?;
    let n = s.countries.len();
    let kz = s.extra_names.len();
    let x = DMatrix::from_fn(n, 2 + kz, |i, j| match j {
        0 => 1.0,
        1 => s.y0[i],
        _ => s.extra[i][j - 2],
    });
    let mut names = vec!["a_T".to_string(), "b_T".to_string()];
    names.extend(s.extra_names.iter().cloned());
    let regression = least_squares(&DesignMatrix::new(names, x)?, &s.growth, opts.se_kind, None)?;
    if regression.rank < 2 + kz {
        return Err(Error::RankDeficient("Barro design is collinear".into()));
    }
    Ok(BarroRegression {
        horizon: (opts.year1 - opts.year0) as usize,
        countries: s.countries,
        has_ppp: s.has_ppp,
        regression,
    })
}

#[allow(clippy::too_many_arguments)]
fn recover(
    method: BarroMethod,
    horizon: usize,
    n: usize,
    a: Estimate,
    b: Estimate,
    phi: Estimate,
    cov_b_c: Option<(f64, f64, f64)>,
    c: Option<Estimate>,
    covariates: Vec<Estimate>,
) -> Result<BarroResult> {
    let lag = mean_lag(phi.estimate, &[], &DMatrix::from_element(1, 1, phi.std_error.powi(2)))?;
    let theta = match (&c, cov_b_c) {
        (Some(c), Some((vbb, vbc, vcc))) => {
            let bb = b.estimate;
            let ph = phi.estimate;
            let dphi_db = -(1.0 / horizon as f64) * (1.0 + bb).powf(1.0 / horizon as f64 - 1.0);
            let g_c = -ph / bb;
            let g_b = -c.estimate * (dphi_db * bb - ph) / (bb * bb);
            let var = g_b * g_b * vbb + 2.0 * g_b * g_c * vbc + g_c * g_c * vcc;
            Some(Estimate::new("theta", g_c * c.estimate, var.max(0.0).sqrt()))
        }
        _ => None,
    };
    Ok(BarroResult {
        method,
        horizon,
        n,
        a_t: a,
        b_t: b,
        c_t: c,
        phi,
        theta,
        mean_lag: lag,
        covariates,
    })
}

struct BarroNls<'a> {
    s: &'a Sample,
}

impl NlsModel for BarroNls<'_> {
    fn n_params(&self) -> usize {
        2 + self.s.extra_names.len()
    }

    fn n_obs(&self) -> usize {
        self.s.countries.len()
    }

    fn residuals(&self, th: &[f64]) -> Vec<f64> {
        (0..self.n_obs())
            .map(|i| {
                let b = b_from_phi(th[1], self.s.horizons[i]);
                let mut fit = th[0] + b * self.s.y0[i];
                for (j, v) in self.s.extra[i].iter().enumerate() {
                    fit += th[2 + j] * v;
                }
                self.s.growth[i] - fit
            })
            .collect()
    }

    fn jacobian(&self, th: &[f64]) -> Option<DMatrix<f64>> {
        let n = self.n_obs();
        let p = self.n_params();
        Some(DMatrix::from_fn(n, p, |i, j| match j {
            0 => -1.0,
            1 => {
                let t = self.s.horizons[i] as i32;
                let db = -(t as f64) * (1.0 - th[1]).powi(t - 1);
                -db * self.s.y0[i]
            }
            _ => -self.s.extra[i][j - 2],
        }))
    }

    fn param_names(&self) -> Vec<String> {
        let mut v = vec!["a_T".to_string(), "phi".to_string()];
        v.extend(self.s.extra_names.iter().cloned());
        v
    }
}

pub fn barro_estimate(panel: &PanelDataset, outcome: &str, opts: &BarroOptions) -> Result<BarroResult> {
    let has_ppp = opts.ppp_var.is_some();
    let cstart = 2 + usize::from(has_ppp);
    match opts.method {
        BarroMethod::Linear => {
            if opts.unbalanced_horizons {
                return Err(Error::InvalidSpec(
                    "unbalanced horizons are supported by the NLS method only".into(),
                ));
            }
            let reg = barro_regression(panel, outcome, opts)?;
            let r = &reg.regression;
            let se = r.std_errors();
            let cov = r.covariance_matrix();
            let h = reg.horizon;
            let b = r.coefficients[1];
            let phi = phi_from_b(b, h)?;
            let dphi = -(1.0 / h as f64) * (1.0 + b).powf(1.0 / h as f64 - 1.0);
            let c = has_ppp.then(|| Estimate::new("c_T", r.coefficients[2], se[2]));
            let cov_bc = has_ppp.then(|| (cov[(1, 1)], cov[(1, 2)], cov[(2, 2)]));
            let covariates = (cstart..r.k())
                .map(|j| Estimate::new(r.names[j].clone(), r.coefficients[j], se[j]))
                .collect();
            recover(
                BarroMethod::Linear,
                h,
                r.nobs,
                Estimate::new("a_T", r.coefficients[0], se[0]),
                Estimate::new("b_T", b, se[1]),
                Estimate::new("phi", phi, dphi.abs() * se[1]),
                cov_bc,
                c,
                covariates,
            )
        }
        BarroMethod::Nls => {
            let s = sample(panel, outcome, opts, opts.unbalanced_horizons)?;
            let balanced = BarroOptions {
                method: BarroMethod::Linear,
                unbalanced_horizons: false,
                ..opts.clone()
            };
            let mut init = vec![0.0; 2 + s.extra_names.len()];
            init[1] = 0.05;
            if let Ok(reg) = barro_regression(panel, outcome, &balanced) {
                init.copy_from_slice(&reg.regression.coefficients);
                init[1] = phi_from_b(reg.b(), reg.horizon).unwrap_or(0.05);
            }
            let r = gauss_newton_nls(&BarroNls { s: &s }, &init, 1e-10, 200, opts.se_kind)?;
            let se = r.std_errors();
            let cov = r.covariance_matrix();
            let h = (opts.year1 - opts.year0) as usize;
            let phi = r.coefficients[1];
            let b = b_from_phi(phi, h);
            let db = -(h as f64) * (1.0 - phi).powi(h as i32 - 1);
            let c = has_ppp.then(|| Estimate::new("c_T", r.coefficients[2], se[2]));
            let cov_bc = has_ppp.then(|| {
                (
                    db * db * cov[(1, 1)],
                    db * cov[(1, 2)],
                    cov[(2, 2)],
                )
            });
            let covariates = (cstart..r.k())
                .map(|j| Estimate::new(r.names[j].clone(), r.coefficients[j], se[j]))
                .collect();
            recover(
                BarroMethod::Nls,
                h,
                r.nobs,
                Estimate::new("a_T", r.coefficients[0], se[0]),
                Estimate::new("b_T", b, db.abs() * se[1]),
                Estimate::new("phi", phi, se[1]),
                cov_bc,
                c,
                covariates,
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ar1_panel(n: usize, t: usize, rho: f64, alpha: f64) -> PanelDataset {
        let mut y = vec![0.0; n * (t + 1)];
        for c in 0..n {
            y[c * (t + 1)] = c as f64 * 0.5 - 1.0;
            for s in 1..=t {
                y[c * (t + 1) + s] = alpha + rho * y[c * (t + 1) + s - 1];
            }
        }
        PanelDataset::from_blocks(
            (0..n).map(|c| format!("c{c}")).collect(),
            0,
            t + 1,
            [("y".to_string(), y)].into_iter().collect(),
        )
        .unwrap()
    }

    #[test]
    fn noiseless_ar1_recovers_b_and_phi() {
        let t = 15;
        let panel = ar1_panel(8, t, 0.9, 0.4);
        let res = barro_estimate(&panel, "y", &BarroOptions::new(0, t as i32)).unwrap();
        assert!((res.b_t.estimate + (1.0 - 0.9f64.powi(t as i32))).abs() < 1e-10);
        assert!((res.phi.estimate - 0.1).abs() < 1e-10);
    }

    #[test]
    fn nls_matches_linear_and_recovers_planted_phi() {
        let t = 12;
        let panel = ar1_panel(10, t, 0.85, 0.2);
        let mut opts = BarroOptions::new(0, t as i32);
        opts.method = BarroMethod::Nls;
        let res = barro_estimate(&panel, "y", &opts).unwrap();
        assert!((res.phi.estimate - 0.15).abs() < 1e-8);
    }

    #[test]
    fn recovery_from_reported_b() {
        let phi = phi_from_b(-0.0876, 29).unwrap();
        assert!((phi - 0.0032).abs() < 1e-4);
        assert!(((1.0 - phi) / phi - 316.0).abs() < 2.0);
        assert!(phi_from_b(0.01, 10).is_err());
    }
}
