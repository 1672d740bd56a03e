//! Closed-form large-sample bias predictions used as Monte Carlo oracles.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BiasRegime {
    Barro,
    TwfeStationary,
    TwfeTrended,
    NickellApprox,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BiasPrediction {
    pub regime: BiasRegime,
    /// Bias of the estimator, except in the trended regime where it is the
    /// probability limit of `rho_hat` itself.
    pub value: f64,
    /// Implied probability limit of `rho_hat` where meaningful.
    pub implied_rho: Option<f64>,
    pub approximate: bool,
    pub inputs: BTreeMap<String, f64>,
}

fn inputs(pairs: &[(&str, f64)]) -> BTreeMap<String, f64> {
    pairs.iter().map(|(k, v)| (k.to_string(), *v)).collect()
}

fn check_rho(rho: f64) -> Result<()> {
    if !(rho.abs() < 1.0) {
        return Err(Error::InvalidSpec(format!("rho {rho} must lie inside (-1, 1)")));
    }
    Ok(())
}

/// Limit of `b_hat_T - b_T = rho_hat^T - rho^T` in the cross-country
/// regression, where `ratio = (theta' Omega_z theta + sigma_eta^2) / sigma_u^2`.
pub fn barro_asymptotic_bias(rho: f64, t: usize, ratio: f64) -> Result<BiasPrediction> {
    check_rho(rho)?;
    if t == 0 {
        return Err(Error::InvalidSpec("horizon T must be at least 1".into()));
    }
    if !(ratio >= 0.0) {
        return Err(Error::InvalidSpec(format!("dispersion ratio {ratio} must be nonnegative")));
    }
    let rt = rho.powi(t as i32);
    let value = (1.0 - rt) * (1.0 + rho) * ratio / ((1.0 - rho) + (1.0 + rho) * ratio);
    let limit = rt + value;
    if limit >= 1.0 {
        return Err(Error::Undefined(format!(
            "implied rho_hat^T = {limit} is not below one (divergent regime)"
        )));
    }
    let implied = if limit >= 0.0 {
        Some(limit.powf(1.0 / t as f64))
    } else {
        None
    };
    Ok(BiasPrediction {
        regime: BiasRegime::Barro,
        value,
        implied_rho: implied,
        approximate: false,
        inputs: inputs(&[("rho", rho), ("T", t as f64), ("ratio", ratio)]),
    })
}

/// `kappa^2 = sigma_gamma^2 / omega^2` with `omega^2 = sigma_u^2 / (1 - rho^2)`.
pub fn kappa_squared(sigma_gamma2: f64, sigma_u2: f64, rho: f64) -> f64 {
    sigma_gamma2 * (1.0 - rho * rho) / sigma_u2
}

/// Large-`n`, large-`T` TWFE bias with an AR(1) factor of coefficient `a`
/// and variance `sigma_f2`.
pub fn twfe_bias_stationary_factor(rho: f64, kappa2: f64, a: f64, sigma_f2: f64) -> Result<BiasPrediction> {
    check_rho(rho)?;
    if !(a.abs() < 1.0) {
        return Err(Error::InvalidSpec(format!("factor AR coefficient {a} must lie inside (-1, 1)")));
    }
    if !(kappa2 >= 0.0 && sigma_f2 >= 0.0) {
        return Err(Error::InvalidSpec("kappa^2 and factor variance must be nonnegative".into()));
    }
    let s1 = sigma_f2 * a / (1.0 - rho * a);
    let s2 = sigma_f2 * (1.0 + rho * a) / ((1.0 - rho * rho) * (1.0 - rho * a));
    let value = kappa2 * s1 / (1.0 + kappa2 * s2);
    Ok(BiasPrediction {
        regime: BiasRegime::TwfeStationary,
        value,
        implied_rho: Some(rho + value),
        approximate: false,
        inputs: inputs(&[("rho", rho), ("kappa2", kappa2), ("a", a), ("sigma_f2", sigma_f2)]),
    })
}

/// With a trended factor the TWFE estimate of `rho` tends to one.
pub fn twfe_limit_trended(rho: f64, mu: f64) -> Result<BiasPrediction> {
    check_rho(rho)?;
    if mu == 0.0 {
        return Err(Error::InvalidSpec(
            "zero drift: use the stationary-factor prediction".into(),
        ));
    }
    Ok(BiasPrediction {
        regime: BiasRegime::TwfeTrended,
        value: 1.0,
        implied_rho: Some(1.0),
        approximate: false,
        inputs: inputs(&[("rho", rho), ("mu", mu)]),
    })
}

/// Leading-order fixed-effects bias `-(1 + rho) / (T - 1)`.
pub fn nickell_bias_approx(rho: f64, t: usize) -> Result<BiasPrediction> {
    check_rho(rho)?;
    if t < 3 {
        return Err(Error::InvalidSpec(format!("T = {t} too short; need at least 3")));
    }
    let value = -(1.0 + rho) / (t as f64 - 1.0);
    Ok(BiasPrediction {
        regime: BiasRegime::NickellApprox,
        value,
        implied_rho: Some(rho + value),
        approximate: true,
        inputs: inputs(&[("rho", rho), ("T", t as f64)]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn barro_special_case() {
        let p = barro_asymptotic_bias(0.8, 10, 1.0).unwrap();
        let closed = (1.0 - 0.8f64.powi(10)) * 1.8 / 2.0;
        assert!((p.value - closed).abs() < 1e-14);
        assert!((p.value - 0.803).abs() < 5e-4);
        // 0.9103^(1/10)
        assert!((p.implied_rho.unwrap() - 0.99).abs() < 1e-3);
        assert_eq!(barro_asymptotic_bias(0.8, 10, 0.0).unwrap().value, 0.0);
    }

    #[test]
    fn barro_monotone() {
        for &rho in &[0.2, 0.5, 0.9] {
            let mut last = -1.0;
            for r in [0.0, 0.1, 0.5, 1.0, 2.0, 10.0] {
                let v = barro_asymptotic_bias(rho, 10, r).unwrap().value;
                assert!(v > last);
                last = v;
            }
            let mut last = -1.0;
            for t in 1..40 {
                let v = barro_asymptotic_bias(rho, t, 1.0).unwrap().value;
                assert!(v >= last);
                last = v;
            }
        }
    }

    #[test]
    fn stationary_factor() {
        assert_eq!(twfe_bias_stationary_factor(0.5, 1.0, 0.0, 1.0).unwrap().value, 0.0);
        assert_eq!(twfe_bias_stationary_factor(0.5, 0.0, 0.5, 1.0).unwrap().value, 0.0);
        let v = twfe_bias_stationary_factor(0.5, 1.0, 0.5, 1.0).unwrap().value;
        assert!((v - 0.207).abs() < 1e-3, "{v}");
        let small = twfe_bias_stationary_factor(0.5, 1e-9, 0.5, 1.0).unwrap().value;
        assert!(small.abs() < 1e-8);
    }

    #[test]
    fn trended_and_nickell() {
        assert_eq!(twfe_limit_trended(0.5, 0.024).unwrap().value, 1.0);
        assert_eq!(twfe_limit_trended(0.9, -0.01).unwrap().value, 1.0);
        assert!(twfe_limit_trended(0.5, 0.0).is_err());
        assert!((nickell_bias_approx(0.0, 11).unwrap().value + 0.1).abs() < 1e-15);
        assert!(nickell_bias_approx(0.5, 100_000).unwrap().value.abs() < 1e-4);
        assert!(nickell_bias_approx(0.5, 2).is_err());
    }
}
