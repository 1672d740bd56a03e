//! Replication driver: simulate, estimate, summarize against the truth and,
//! when configured, against a closed-form bias prediction.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bias::{
    barro_asymptotic_bias, kappa_squared, nickell_bias_approx, twfe_bias_stationary_factor,
    twfe_limit_trended, BiasRegime,
};
use crate::dgp::{derive_seed, simulate_panel, DgpSpec, FactorProcessSpec, ScalarLaw};
use crate::error::{Error, Result};
use crate::estimators::barro::b_from_phi;
use crate::estimators::{
    barro_regression, estimate, half_panel_jackknife, BarroOptions, EstimatorKind,
    EstimatorOptions,
};

/// Runs `f(rep, seed_rep)` for every replication; results keep replication
/// order whatever the completion order. `jobs = None` uses the global pool.
pub fn run_replications<T, F>(replications: usize, seed: u64, jobs: Option<usize>, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize, u64) -> T + Sync,
{
    let body = || {
        (0..replications)
            .into_par_iter()
            .map(|r| f(r, derive_seed(seed, r as u64)))
            .collect()
    };
    match jobs {
        Some(j) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(j.max(1))
                .build()
                .map_err(|e| Error::InvalidSpec(format!("thread pool: {e}")))?;
            Ok(pool.install(body))
        }
        None => Ok(body()),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McEstimator {
    pub kind: EstimatorKind,
    #[serde(default)]
    pub jackknife: bool,
    #[serde(default)]
    pub options: EstimatorOptions,
    /// Closed-form prediction to compare the Monte Carlo bias against.
    #[serde(default)]
    pub oracle: Option<BiasRegime>,
    #[serde(default)]
    pub label: Option<String>,
}

impl McEstimator {
    pub fn label(&self) -> String {
        self.label.clone().unwrap_or_else(|| {
            if self.jackknife {
                format!("{}-HJK", self.kind)
            } else {
                self.kind.to_string()
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRow {
    pub replication: usize,
    pub seed: u64,
    pub estimator: String,
    /// `phi_hat` for panel estimators, `b_hat_T` for Barro.
    pub estimate: Option<f64>,
    pub std_error: Option<f64>,
    pub truth: f64,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleComparison {
    pub regime: BiasRegime,
    /// Predicted bias in the units of `estimate`.
    pub predicted_bias: f64,
    /// `(bias - predicted_bias) / mc_se`.
    pub z: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McSummary {
    pub estimator: String,
    pub quantity: String,
    pub replications: usize,
    pub failures: usize,
    pub truth: f64,
    pub mean: f64,
    pub bias: f64,
    pub sd: f64,
    pub mc_se: f64,
    pub mean_se: f64,
    /// Share of replications whose 95% interval covers the truth.
    pub coverage: f64,
    pub oracle: Option<OracleComparison>,
}

/// Population mean of `phi_i = 1 - rho_i`.
pub fn population_phi(spec: &DgpSpec) -> f64 {
    match spec.heterogeneity.rho {
        ScalarLaw::Fixed { value } => 1.0 - value,
        ScalarLaw::Uniform { lo, hi } => 1.0 - 0.5 * (lo + hi),
    }
}

fn fixed_rho(spec: &DgpSpec) -> Result<f64> {
    match spec.heterogeneity.rho {
        ScalarLaw::Fixed { value } => Ok(value),
        _ => Err(Error::InvalidSpec("oracle predictions need a common rho".into())),
    }
}

fn fixed_sigma_u(spec: &DgpSpec) -> Result<f64> {
    match spec.heterogeneity.sigma_u {
        ScalarLaw::Fixed { value } => Ok(value),
        ScalarLaw::Uniform { lo, hi } => Ok(((lo * lo + lo * hi + hi * hi) / 3.0).sqrt()),
    }
}

/// Cross-section over time dispersion ratio `(theta'theta + sigma_eta^2) / sigma_u^2`
/// for the intercept law (with `z ~ N(0, I)`).
pub fn dispersion_ratio(spec: &DgpSpec) -> Result<f64> {
    let a = &spec.heterogeneity.alpha;
    let su = fixed_sigma_u(spec)?;
    if su == 0.0 {
        return Err(Error::Undefined("dispersion ratio with zero error variance".into()));
    }
    Ok((a.theta.iter().map(|v| v * v).sum::<f64>() + a.sigma_eta * a.sigma_eta) / (su * su))
}

/// Predicted bias for `est` under `spec`, in the units of its estimate.
pub fn predicted_bias(spec: &DgpSpec, est: &McEstimator, regime: BiasRegime) -> Result<f64> {
    let rho = fixed_rho(spec)?;
    match regime {
        BiasRegime::Barro => Ok(barro_asymptotic_bias(rho, spec.t, dispersion_ratio(spec)?)?.value),
        BiasRegime::NickellApprox => {
            let rows = spec.t + 1 - est.options.lags.p.max(1);
            Ok(-nickell_bias_approx(rho, rows)?.value)
        }
        BiasRegime::TwfeStationary => {
            let (a, sigma) = match spec.factor {
                FactorProcessSpec::StationaryAr1 { a, sigma } => (a, sigma),
                FactorProcessSpec::IidNormal { sigma } => (0.0, sigma),
                _ => {
                    return Err(Error::InvalidSpec(
                        "stationary-factor prediction needs a stationary factor".into(),
                    ))
                }
            };
            let sf2 = sigma * sigma / (1.0 - a * a);
            let sg2 = spec.heterogeneity.gamma.sigma_eta.powi(2)
                + spec.heterogeneity.gamma.theta.iter().map(|v| v * v).sum::<f64>();
            let su = fixed_sigma_u(spec)?;
            let k2 = kappa_squared(sg2, su * su, rho);
            Ok(-twfe_bias_stationary_factor(rho, k2, a, sf2)?.value)
        }
        BiasRegime::TwfeTrended => {
            let mu = match spec.factor {
                FactorProcessSpec::TrendPlusAr1 { mu, .. } | FactorProcessSpec::RandomWalkWithDrift { mu, .. } => mu,
                _ => 0.0,
            };
            let limit = twfe_limit_trended(rho, mu)?.value;
            Ok((1.0 - limit) - (1.0 - rho))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MonteCarloConfig {
    pub dgp: DgpSpec,
    pub replications: usize,
    pub estimators: Vec<McEstimator>,
}

fn one_replication(cfg: &MonteCarloConfig, rep: usize, seed: u64) -> Vec<ReplicationRow> {
    let mut spec = cfg.dgp.clone();
    spec.seed = seed;
    let phi0 = population_phi(&cfg.dgp);
    let sim = simulate_panel(&spec);
    cfg.estimators
        .iter()
        .map(|est| {
            let truth = if est.kind == EstimatorKind::Barro {
                fixed_rho(&cfg.dgp).map(|r| b_from_phi(1.0 - r, cfg.dgp.t)).unwrap_or(f64::NAN)
            } else {
                phi0
            };
            let outcome = match &sim {
                Err(e) => Err(Error::Estimation(format!("simulation failed: {e}"))),
                Ok((panel, _)) => {
                    if est.kind == EstimatorKind::Barro {
                        let y0 = panel.first_year();
                        barro_regression(panel, "y", &BarroOptions::new(y0, y0 + cfg.dgp.t as i32)).map(|r| {
                            (r.b(), r.regression.std_errors()[1])
                        })
                    } else if est.jackknife {
                        half_panel_jackknife(est.kind, panel, "y", &est.options, None)
                            .map(|r| (r.phi.estimate, r.phi.std_error))
                    } else {
                        estimate(est.kind, panel, "y", &est.options, None)
                            .map(|r| (r.phi.estimate, r.phi.std_error))
                    }
                }
            };
            match outcome {
                Ok((v, se)) => ReplicationRow {
                    replication: rep,
                    seed,
                    estimator: est.label(),
                    estimate: Some(v),
                    std_error: Some(se),
                    truth,
                    error: None,
                },
                Err(e) => ReplicationRow {
                    replication: rep,
                    seed,
                    estimator: est.label(),
                    estimate: None,
                    std_error: None,
                    truth,
                    error: Some(e.to_string()),
                },
            }
        })
        .collect()
}

/// Summary statistics of one estimator's replications.
pub fn summarize(label: &str, quantity: &str, rows: &[&ReplicationRow]) -> McSummary {
    let ok: Vec<&&ReplicationRow> = rows.iter().filter(|r| r.estimate.is_some()).collect();
    let truth = rows.first().map_or(f64::NAN, |r| r.truth);
    let m = ok.len() as f64;
    let vals: Vec<f64> = ok.iter().map(|r| r.estimate.unwrap()).collect();
    let mean = vals.iter().sum::<f64>() / m;
    let sd = if ok.len() > 1 {
        (vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (m - 1.0)).sqrt()
    } else {
        f64::NAN
    };
    let mean_se = ok.iter().map(|r| r.std_error.unwrap()).sum::<f64>() / m;
    let covered = ok
        .iter()
        .filter(|r| (r.estimate.unwrap() - truth).abs() <= 1.96 * r.std_error.unwrap())
        .count();
    McSummary {
        estimator: label.to_string(),
        quantity: quantity.to_string(),
        replications: rows.len(),
        failures: rows.len() - ok.len(),
        truth,
        mean,
        bias: mean - truth,
        sd,
        mc_se: sd / m.sqrt(),
        mean_se,
        coverage: covered as f64 / m,
        oracle: None,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McOutput {
    pub rows: Vec<ReplicationRow>,
    pub summaries: Vec<McSummary>,
}

pub fn run_montecarlo(cfg: &MonteCarloConfig, seed: u64, jobs: Option<usize>) -> Result<McOutput> {
    if cfg.replications == 0 {
        return Err(Error::InvalidSpec("replication count must be at least 1".into()));
    }
    if cfg.estimators.is_empty() {
        return Err(Error::InvalidSpec("no estimators configured".into()));
    }
    cfg.dgp.validate()?;
    let nested = run_replications(cfg.replications, seed, jobs, |r, s| one_replication(cfg, r, s))?;
    let rows: Vec<ReplicationRow> = nested.into_iter().flatten().collect();
    let mut summaries = Vec::new();
    for est in &cfg.estimators {
        let label = est.label();
        let mine: Vec<&ReplicationRow> = rows.iter().filter(|r| r.estimator == label).collect();
        if mine.iter().all(|r| r.estimate.is_none()) {
            return Err(Error::Estimation(format!(
                "all {} replications failed for {label}: {}",
                mine.len(),
                mine[0].error.clone().unwrap_or_default()
            )));
        }
        let quantity = if est.kind == EstimatorKind::Barro { "b_T" } else { "phi" };
        let mut s = summarize(&label, quantity, &mine);
        if let Some(regime) = est.oracle {
            let pb = predicted_bias(&cfg.dgp, est, regime)?;
            s.oracle = Some(OracleComparison {
                regime,
                predicted_bias: pb,
                z: (s.bias - pb) / s.mc_se,
            });
        }
        summaries.push(s);
    }
    Ok(McOutput { rows, summaries })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ordered_and_deterministic() {
        let a = run_replications(50, 9, Some(3), |r, s| (r, s)).unwrap();
        let b = run_replications(50, 9, Some(1), |r, s| (r, s)).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().enumerate().all(|(i, (r, _))| i == *r));
    }
}
