//! Derived long-run statistics with delta-method standard errors.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub name: String,
    pub estimate: f64,
    pub std_error: f64,
}

impl Estimate {
    pub fn new(name: impl Into<String>, estimate: f64, std_error: f64) -> Self {
        Estimate {
            name: name.into(),
            estimate,
            std_error,
        }
    }
}

fn delta_se(grad: &[f64], cov: &DMatrix<f64>) -> f64 {
    let g = DVector::from_column_slice(grad);
    (g.transpose() * cov * &g)[(0, 0)].max(0.0).sqrt()
}

fn check_cov(cov: &DMatrix<f64>, dim: usize) -> Result<()> {
    if cov.nrows() != dim || cov.ncols() != dim {
        return Err(Error::Dimension(format!(
            "covariance is {}x{}, expected {dim}x{dim}",
            cov.nrows(),
            cov.ncols()
        )));
    }
    Ok(())
}

/// Mean lag `(1 - phi - sum psi) / phi`; `cov` is the covariance of
/// `(phi, psi_1, ..., psi_{p-1})`.
pub fn mean_lag(phi: f64, psi: &[f64], cov: &DMatrix<f64>) -> Result<Estimate> {
    check_cov(cov, 1 + psi.len())?;
    if !(phi > 0.0) {
        return Err(Error::Undefined(format!("mean lag requires phi > 0, got {phi}")));
    }
    let spsi: f64 = psi.iter().sum();
    let value = (1.0 - phi - spsi) / phi;
    let mut grad = vec![-(1.0 - spsi) / (phi * phi)];
    grad.extend(std::iter::repeat_n(-1.0 / phi, psi.len()));
    Ok(Estimate::new("mean_lag", value, delta_se(&grad, cov)))
}

/// Long-run effect `beta / phi`; `cov` is the covariance of `(beta, phi)`.
pub fn long_run_effect(name: &str, beta: f64, phi: f64, cov: &DMatrix<f64>) -> Result<Estimate> {
    check_cov(cov, 2)?;
    if !(phi > 0.0) {
        return Err(Error::Undefined(format!(
            "long-run effect of {name} requires phi > 0, got {phi}"
        )));
    }
    let grad = [1.0 / phi, -beta / (phi * phi)];
    Ok(Estimate::new(name, beta / phi, delta_se(&grad, cov)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    #[test]
    fn arithmetic() {
        let z = DMatrix::zeros(1, 1);
        assert!((mean_lag(0.5, &[], &z).unwrap().estimate - 1.0).abs() < 1e-15);
        assert!(mean_lag(0.0, &[], &z).is_err());
        let z2 = DMatrix::zeros(2, 2);
        assert_eq!(long_run_effect("k", 0.0, 0.4, &z2).unwrap().estimate, 0.0);
        assert!(long_run_effect("k", 0.1, -0.1, &z2).is_err());
    }

    #[test]
    fn delta_method_close_to_parametric_bootstrap() {
        let theta = [0.08, 0.2, 0.05];
        let sd = [0.004, 0.01, 0.01];
        let corr = 0.3;
        let cov = DMatrix::from_fn(3, 3, |i, j| {
            sd[i] * sd[j] * if i == j { 1.0 } else { corr }
        });
        let delta = mean_lag(theta[0], &theta[1..], &cov).unwrap().std_error;
        let chol = cov.clone().cholesky().unwrap();
        let l = chol.l();
        let mut rng = ChaCha8Rng::seed_from_u64(2024);
        let draws: Vec<f64> = (0..1000)
            .map(|_| {
                let e = DVector::from_fn(3, |_, _| StandardNormal.sample(&mut rng));
                let d = &l * e;
                let ph = theta[0] + d[0];
                (1.0 - ph - (theta[1] + d[1]) - (theta[2] + d[2])) / ph
            })
            .collect();
        let m = draws.iter().sum::<f64>() / draws.len() as f64;
        let boot = (draws.iter().map(|v| (v - m).powi(2)).sum::<f64>() / (draws.len() - 1) as f64).sqrt();
        assert!((delta / boot - 1.0).abs() < 0.15, "delta {delta} boot {boot}");
    }
}
