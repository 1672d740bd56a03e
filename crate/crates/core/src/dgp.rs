//! Synthetic panels from the single-factor heterogeneous dynamic model
//! `y_it = alpha_i + gamma_i f_t + rho_i y_{i,t-1} + beta_i' x_it + u_it`.
//!
//! Panel time runs `t = 0..=T`, so a panel of `T + 1` years supports `T`
//! regression periods. Each simulation starts `burn_in` periods earlier at
//! `alpha_i / (1 - rho_i)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::panel::PanelDataset;

pub const MIN_BURN_IN: usize = 200;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum FactorProcessSpec {
    IidNormal {
        sigma: f64,
    },
    StationaryAr1 {
        a: f64,
        sigma: f64,
    },
    /// `f_t = mu t + s_t` with AR(1) `s_t`.
    TrendPlusAr1 {
        mu: f64,
        a: f64,
        sigma: f64,
    },
    RandomWalkWithDrift {
        mu: f64,
        sigma: f64,
    },
    /// Random walk whose drift switches at each breakpoint (panel time).
    PiecewiseDrift {
        breakpoints: Vec<i64>,
        drifts: Vec<f64>,
        sigma: f64,
    },
}

impl FactorProcessSpec {
    pub fn validate(&self) -> Result<()> {
        let sigma = match self {
            FactorProcessSpec::IidNormal { sigma } => *sigma,
            FactorProcessSpec::StationaryAr1 { a, sigma } | FactorProcessSpec::TrendPlusAr1 { a, sigma, .. } => {
                if !(a.abs() < 1.0) {
                    return Err(Error::InvalidSpec(format!("factor AR coefficient {a} not inside (-1, 1)")));
                }
                *sigma
            }
            FactorProcessSpec::RandomWalkWithDrift { sigma, .. } => *sigma,
            FactorProcessSpec::PiecewiseDrift {
                breakpoints,
                drifts,
                sigma,
            } => {
                if drifts.len() != breakpoints.len() + 1 {
                    return Err(Error::InvalidSpec(format!(
                        "{} breakpoints need {} drifts, got {}",
                        breakpoints.len(),
                        breakpoints.len() + 1,
                        drifts.len()
                    )));
                }
                if breakpoints.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(Error::InvalidSpec("breakpoints must be strictly increasing".into()));
                }
                *sigma
            }
        };
        if !(sigma >= 0.0) {
            return Err(Error::InvalidSpec(format!("factor innovation SD {sigma} is negative")));
        }
        Ok(())
    }
}

/// `mean + theta' z + eta`, `eta ~ N(0, sigma_eta^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinearLaw {
    pub mean: f64,
    #[serde(default)]
    pub theta: Vec<f64>,
    #[serde(default)]
    pub sigma_eta: f64,
}

impl LinearLaw {
    pub fn constant(mean: f64) -> Self {
        LinearLaw {
            mean,
            theta: Vec::new(),
            sigma_eta: 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ScalarLaw {
    Fixed { value: f64 },
    Uniform { lo: f64, hi: f64 },
}

impl ScalarLaw {
    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            ScalarLaw::Fixed { value } => value,
            ScalarLaw::Uniform { lo, hi } => {
                if lo == hi {
                    lo
                } else {
                    rng.random_range(lo..hi)
                }
            }
        }
    }

    fn bounds(&self) -> (f64, f64) {
        match *self {
            ScalarLaw::Fixed { value } => (value, value),
            ScalarLaw::Uniform { lo, hi } => (lo, hi),
        }
    }
}

/// Covariate slopes `beta_ij = mean_j + sigma * N(0, 1)`.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BetaLaw {
    pub mean: Vec<f64>,
    #[serde(default)]
    pub sigma: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeterogeneitySpec {
    pub alpha: LinearLaw,
    pub gamma: LinearLaw,
    pub rho: ScalarLaw,
    #[serde(default)]
    pub beta: BetaLaw,
    pub sigma_u: ScalarLaw,
}

impl HeterogeneitySpec {
    /// Dimension of `z_i`, shared by the alpha and gamma laws.
    pub fn z_dim(&self) -> usize {
        self.alpha.theta.len().max(self.gamma.theta.len())
    }

    pub fn validate(&self) -> Result<()> {
        let (lo, hi) = self.rho.bounds();
        if !(lo > -1.0 && hi < 1.0 && lo <= hi) {
            return Err(Error::InvalidSpec(format!(
                "rho law [{lo}, {hi}] must lie strictly inside (-1, 1)"
            )));
        }
        let (slo, shi) = self.sigma_u.bounds();
        if !(slo >= 0.0 && slo <= shi) {
            return Err(Error::InvalidSpec(format!("error SD law [{slo}, {shi}] is invalid")));
        }
        if self.gamma.mean < 0.0 {
            return Err(Error::InvalidSpec(format!(
                "mean factor loading {} must be nonnegative",
                self.gamma.mean
            )));
        }
        if self.alpha.sigma_eta < 0.0 || self.gamma.sigma_eta < 0.0 || self.beta.sigma < 0.0 {
            return Err(Error::InvalidSpec("dispersion parameters must be nonnegative".into()));
        }
        Ok(())
    }
}

/// `x_it = lambda_i f_t + v_it`, `v_it` AR(1); one law for all covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovariateLaw {
    pub count: usize,
    #[serde(default)]
    pub loading_mean: f64,
    #[serde(default)]
    pub loading_sigma: f64,
    #[serde(default)]
    pub ar: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Innovations {
    #[default]
    Gaussian,
    /// Student t rescaled to unit variance.
    StudentT { df: f64 },
}

impl Innovations {
    fn draw(&self, rng: &mut ChaCha8Rng) -> f64 {
        match *self {
            Innovations::Gaussian => StandardNormal.sample(rng),
            Innovations::StudentT { df } => {
                let t: f64 = StudentT::new(df).expect("validated df").sample(rng);
                t * ((df - 2.0) / df).sqrt()
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DgpSpec {
    pub n: usize,
    /// Regression periods; the panel holds `t + 1` years.
    pub t: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in: usize,
    #[serde(default)]
    pub first_year: i32,
    pub factor: FactorProcessSpec,
    pub heterogeneity: HeterogeneitySpec,
    #[serde(default)]
    pub covariates: Option<CovariateLaw>,
    #[serde(default)]
    pub innovations: Innovations,
    #[serde(default)]
    pub seed: u64,
}

fn default_burn_in() -> usize {
    MIN_BURN_IN
}

impl DgpSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.t == 0 {
            return Err(Error::InvalidSpec("n and T must be positive".into()));
        }
        if self.burn_in < MIN_BURN_IN {
            return Err(Error::InvalidSpec(format!(
                "burn-in {} below the minimum of {MIN_BURN_IN}",
                self.burn_in
            )));
        }
        self.factor.validate()?;
        self.heterogeneity.validate()?;
        let kx = self.covariates.as_ref().map_or(0, |c| c.count);
        if self.heterogeneity.beta.mean.len() != kx {
            return Err(Error::InvalidSpec(format!(
                "{} covariate slopes for {kx} covariates",
                self.heterogeneity.beta.mean.len()
            )));
        }
        if let Some(c) = &self.covariates {
            if !(c.ar.abs() < 1.0) || c.sigma < 0.0 || c.loading_sigma < 0.0 {
                return Err(Error::InvalidSpec("covariate law out of range".into()));
            }
        }
        if let Innovations::StudentT { df } = self.innovations {
            if !(df > 2.0) {
                return Err(Error::InvalidSpec(format!("Student t needs df > 2, got {df}")));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let spec: DgpSpec = serde_json::from_str(text)?;
        spec.validate()?;
        Ok(spec)
    }
}

/// Deterministic sub-seed for stream `index` of `seed` (splitmix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed
        .wrapping_add(index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

const STREAM_HETEROGENEITY: u64 = 1;
const STREAM_FACTOR: u64 = 2;
const STREAM_SHOCKS: u64 = 3;
const STREAM_COVARIATES: u64 = 4;

fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}

/// Factor values at panel times `start..start + len`.
fn factor_path(spec: &FactorProcessSpec, start: i64, len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let ar_path = |a: f64, sigma: f64, rng: &mut ChaCha8Rng| {
        let mut s = 0.0;
        for _ in 0..MIN_BURN_IN {
            s = a * s + sigma * normal(rng);
        }
        (0..len)
            .map(|_| {
                s = a * s + sigma * normal(rng);
                s
            })
            .collect::<Vec<f64>>()
    };
    match *spec {
        FactorProcessSpec::IidNormal { sigma } => (0..len).map(|_| sigma * normal(rng)).collect(),
        FactorProcessSpec::StationaryAr1 { a, sigma } => ar_path(a, sigma, rng),
        FactorProcessSpec::TrendPlusAr1 { mu, a, sigma } => ar_path(a, sigma, rng)
            .into_iter()
            .enumerate()
            .map(|(j, s)| mu * (start + j as i64) as f64 + s)
            .collect(),
        FactorProcessSpec::RandomWalkWithDrift { mu, sigma } => {
            let mut f = mu * (start - 1) as f64;
            (0..len)
                .map(|_| {
                    f += mu + sigma * normal(rng);
                    f
                })
                .collect()
        }
        FactorProcessSpec::PiecewiseDrift {
            ref breakpoints,
            ref drifts,
            sigma,
        } => {
            let mut f = drifts[0] * (start - 1) as f64;
            (0..len)
                .map(|j| {
                    let t = start + j as i64;
                    let regime = breakpoints.iter().filter(|&&b| t >= b).count();
                    f += drifts[regime] + sigma * normal(rng);
                    f
                })
                .collect()
        }
    }
}

/// Factor at panel times `1..=t`.
pub fn simulate_factor(spec: &FactorProcessSpec, t: usize, seed: u64) -> Result<Vec<f64>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_FACTOR));
    Ok(factor_path(spec, 1, t, &mut rng))
}

/// Per-country parameter table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryParameters {
    pub alpha: Vec<f64>,
    pub gamma: Vec<f64>,
    pub rho: Vec<f64>,
    /// `n x k` covariate slopes.
    pub beta: Vec<Vec<f64>>,
    pub sigma_u: Vec<f64>,
    /// `n x z_dim`, standard normal.
    pub z: Vec<Vec<f64>>,
}

fn draw_with(spec: &HeterogeneitySpec, n: usize, rng: &mut ChaCha8Rng) -> CountryParameters {
    let zd = spec.z_dim();
    let theta = |law: &LinearLaw, z: &[f64]| -> f64 {
        law.theta.iter().zip(z).map(|(a, b)| a * b).sum()
    };
    let mut out = CountryParameters {
        alpha: Vec::with_capacity(n),
        gamma: Vec::with_capacity(n),
        rho: Vec::with_capacity(n),
        beta: Vec::with_capacity(n),
        sigma_u: Vec::with_capacity(n),
        z: Vec::with_capacity(n),
    };
    for _ in 0..n {
        let z: Vec<f64> = (0..zd).map(|_| normal(rng)).collect();
        let eta_a = normal(rng);
        let eta_g = normal(rng);
        out.alpha
            .push(spec.alpha.mean + theta(&spec.alpha, &z) + spec.alpha.sigma_eta * eta_a);
        out.gamma
            .push(spec.gamma.mean + theta(&spec.gamma, &z) + spec.gamma.sigma_eta * eta_g);
        out.rho.push(spec.rho.draw(rng));
        out.beta.push(
            spec.beta
                .mean
                .iter()
                .map(|m| m + spec.beta.sigma * normal(rng))
                .collect(),
        );
        out.sigma_u.push(spec.sigma_u.draw(rng));
        out.z.push(z);
    }
    out
}

pub fn draw_heterogeneity(spec: &HeterogeneitySpec, n: usize, seed: u64) -> Result<CountryParameters> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, STREAM_HETEROGENEITY));
    Ok(draw_with(spec, n, &mut rng))
}

/// Planted truth behind a simulated panel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthRecord {
    pub seed: u64,
    pub countries: Vec<String>,
    pub parameters: CountryParameters,
    /// Factor at panel times `0..=T`.
    pub factor: Vec<f64>,
    pub covariate_names: Vec<String>,
    /// Covariate loadings `lambda_i`.
    pub covariate_loadings: Vec<f64>,
}

impl TruthRecord {
    pub fn mean_phi(&self) -> f64 {
        let r = &self.parameters.rho;
        r.iter().map(|v| 1.0 - v).sum::<f64>() / r.len() as f64
    }
}

pub fn country_names(n: usize) -> Vec<String> {
    let width = n.to_string().len().max(3);
    (0..n).map(|i| format!("c{:0width$}", i + 1)).collect()
}

pub fn simulate_panel(spec: &DgpSpec) -> Result<(PanelDataset, TruthRecord)> {
    spec.validate()?;
    let n = spec.n;
    let years = spec.t + 1;
    let burn = spec.burn_in;
    let total = burn + years;
    let params = draw_heterogeneity(&spec.heterogeneity, n, spec.seed)?;

    let mut frng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, STREAM_FACTOR));
    let f = factor_path(&spec.factor, -(burn as i64), total, &mut frng);

    let kx = spec.covariates.as_ref().map_or(0, |c| c.count);
    let mut crng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, STREAM_COVARIATES));
    let mut loadings = Vec::with_capacity(n);
    // x[c][j][s] over the whole simulated span
    let mut x: Vec<Vec<Vec<f64>>> = Vec::with_capacity(n);
    if let Some(law) = &spec.covariates {
        for _ in 0..n {
            let lam = law.loading_mean + law.loading_sigma * normal(&mut crng);
            loadings.push(lam);
            let mut cx = Vec::with_capacity(kx);
            for _ in 0..kx {
                let mut v = 0.0;
                let stat_sd = law.sigma / (1.0 - law.ar * law.ar).sqrt();
                v += stat_sd * normal(&mut crng);
                let series: Vec<f64> = f
                    .iter()
                    .map(|ft| {
                        v = law.ar * v + law.sigma * normal(&mut crng);
                        lam * ft + v
                    })
                    .collect();
                cx.push(series);
            }
            x.push(cx);
        }
    }

    let mut srng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, STREAM_SHOCKS));
    let mut y_block = vec![0.0; n * years];
    let mut x_blocks = vec![vec![0.0; n * years]; kx];
    for c in 0..n {
        let a = params.alpha[c];
        let g = params.gamma[c];
        let r = params.rho[c];
        let su = params.sigma_u[c];
        let b = &params.beta[c];
        let mut y = a / (1.0 - r);
        for s in 0..total {
            let mut v = a + g * f[s] + r * y + su * spec.innovations.draw(&mut srng);
            for j in 0..kx {
                v += b[j] * x[c][j][s];
            }
            y = v;
            if s >= burn {
                y_block[c * years + s - burn] = y;
                for j in 0..kx {
                    x_blocks[j][c * years + s - burn] = x[c][j][s];
                }
            }
        }
    }

    let countries = country_names(n);
    let covariate_names: Vec<String> = (1..=kx).map(|j| format!("x{j}")).collect();
    let mut vars = std::collections::BTreeMap::new();
    vars.insert("y".to_string(), y_block);
    for (name, block) in covariate_names.iter().zip(x_blocks) {
        vars.insert(name.clone(), block);
    }
    let panel = PanelDataset::from_blocks(countries.clone(), spec.first_year, years, vars)?;
    let truth = TruthRecord {
        seed: spec.seed,
        countries,
        parameters: params,
        factor: f[burn..].to_vec(),
        covariate_names,
        covariate_loadings: loadings,
    };
    Ok((panel, truth))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn base_spec() -> DgpSpec {
        DgpSpec {
            n: 20,
            t: 30,
            burn_in: 200,
            first_year: 1960,
            factor: FactorProcessSpec::StationaryAr1 { a: 0.5, sigma: 1.0 },
            heterogeneity: HeterogeneitySpec {
                alpha: LinearLaw {
                    mean: 1.0,
                    theta: vec![1.0, -1.0],
                    sigma_eta: 0.5,
                },
                gamma: LinearLaw {
                    mean: 1.0,
                    theta: vec![],
                    sigma_eta: 0.3,
                },
                rho: ScalarLaw::Uniform { lo: 0.3, hi: 0.9 },
                beta: BetaLaw::default(),
                sigma_u: ScalarLaw::Fixed { value: 1.0 },
            },
            covariates: None,
            innovations: Innovations::Gaussian,
            seed: 42,
        }
    }

    #[test]
    fn degenerate_factor_is_zero() {
        let f = simulate_factor(&FactorProcessSpec::IidNormal { sigma: 0.0 }, 50, 1).unwrap();
        assert!(f.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn drift_and_autocorrelation() {
        let f = simulate_factor(&FactorProcessSpec::RandomWalkWithDrift { mu: 0.024, sigma: 0.02 }, 10_000, 3).unwrap();
        let m = f.windows(2).map(|w| w[1] - w[0]).sum::<f64>() / 9_999.0;
        assert!((m - 0.024).abs() < 0.003);

        let f = simulate_factor(&FactorProcessSpec::StationaryAr1 { a: 0.5, sigma: 1.0 }, 20_000, 4).unwrap();
        let mean = f.iter().sum::<f64>() / f.len() as f64;
        let c0: f64 = f.iter().map(|v| (v - mean).powi(2)).sum();
        let c1: f64 = f.windows(2).map(|w| (w[0] - mean) * (w[1] - mean)).sum();
        assert!((c1 / c0 - 0.5).abs() < 0.02);
    }

    #[test]
    fn invalid_specs() {
        assert!(FactorProcessSpec::StationaryAr1 { a: 1.0, sigma: 1.0 }.validate().is_err());
        assert!(FactorProcessSpec::PiecewiseDrift {
            breakpoints: vec![5, 3],
            drifts: vec![0.0, 0.1, 0.2],
            sigma: 0.1
        }
        .validate()
        .is_err());
        let mut s = base_spec();
        s.heterogeneity.rho = ScalarLaw::Uniform { lo: 0.5, hi: 1.0 };
        assert!(simulate_panel(&s).is_err());
        let mut s = base_spec();
        s.burn_in = 10;
        assert!(s.validate().is_err());
    }

    #[test]
    fn deterministic_recursion_converges_to_steady_state() {
        let mut s = base_spec();
        s.heterogeneity.gamma = LinearLaw::constant(0.0);
        s.heterogeneity.sigma_u = ScalarLaw::Fixed { value: 0.0 };
        let (panel, truth) = simulate_panel(&s).unwrap();
        for c in 0..s.n {
            let ss = truth.parameters.alpha[c] / (1.0 - truth.parameters.rho[c]);
            for v in panel.series("y", c).unwrap() {
                assert!((v - ss).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn reproducible_and_seed_sensitive() {
        let s = base_spec();
        let (a, ta) = simulate_panel(&s).unwrap();
        let (b, tb) = simulate_panel(&s).unwrap();
        assert_eq!(a, b);
        assert_eq!(ta, tb);
        let mut s2 = s.clone();
        s2.seed = 43;
        assert_ne!(simulate_panel(&s2).unwrap().0, a);
        assert_eq!(a.n_years(), s.t + 1);
    }

    #[test]
    fn json_round_trip() {
        let mut s = base_spec();
        s.covariates = Some(CovariateLaw {
            count: 1,
            loading_mean: 0.5,
            loading_sigma: 0.1,
            ar: 0.6,
            sigma: 1.0,
        });
        s.heterogeneity.beta = BetaLaw {
            mean: vec![0.2],
            sigma: 0.05,
        };
        let back = DgpSpec::from_json(&s.to_json().unwrap()).unwrap();
        assert_eq!(back, s);
        let (panel, _) = simulate_panel(&s).unwrap();
        assert!(panel.has_variable("x1"));
    }

    #[test]
    fn heterogeneity_moments() {
        let spec = HeterogeneitySpec {
            alpha: LinearLaw {
                mean: 0.0,
                theta: vec![1.0, -1.0],
                sigma_eta: 0.5,
            },
            gamma: LinearLaw {
                mean: 1.0,
                theta: vec![],
                sigma_eta: 0.3,
            },
            rho: ScalarLaw::Fixed { value: 0.5 },
            beta: BetaLaw::default(),
            sigma_u: ScalarLaw::Fixed { value: 1.0 },
        };
        let p = draw_heterogeneity(&spec, 10_000, 8).unwrap();
        let n = 10_000.0;
        let gm = p.gamma.iter().sum::<f64>() / n;
        let gsd = (p.gamma.iter().map(|g| (g - gm).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!((gm - 1.0).abs() < 3.0 * 0.3 / n.sqrt());
        assert!((gsd / 0.3 - 1.0).abs() < 0.02);
    }

    #[test]
    fn degenerate_laws_give_identical_rows() {
        let spec = HeterogeneitySpec {
            alpha: LinearLaw::constant(1.0),
            gamma: LinearLaw::constant(0.5),
            rho: ScalarLaw::Fixed { value: 0.7 },
            beta: BetaLaw {
                mean: vec![0.1],
                sigma: 0.0,
            },
            sigma_u: ScalarLaw::Fixed { value: 1.0 },
        };
        let p = draw_heterogeneity(&spec, 5, 1).unwrap();
        assert!(p.alpha.iter().all(|v| *v == 1.0));
        assert!(p.rho.iter().all(|v| *v == 0.7));
        assert!(p.beta.iter().all(|v| v == &vec![0.1]));
    }
}
