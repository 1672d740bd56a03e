//! Least-squares kernel shared by every estimator.
//!
//! Solutions go through a rank-revealing pseudo-inverse (thin QR followed by
//! an SVD of the triangular factor), so collinear designs yield the
//! minimum-norm coefficient vector and well-defined fitted values.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Singular values below this fraction of the largest one count as zero.
pub const RANK_TOLERANCE: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeKind {
    Classical,
    /// Huber-White heteroskedasticity-robust sandwich.
    #[default]
    Robust,
    /// Cluster-robust sandwich (clusters supplied by the caller).
    Clustered,
}

impl std::fmt::Display for SeKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            SeKind::Classical => "classical",
            SeKind::Robust => "robust",
            SeKind::Clustered => "clustered",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    names: Vec<String>,
    values: DMatrix<f64>,
}

impl DesignMatrix {
    pub fn new(names: Vec<String>, values: DMatrix<f64>) -> Result<Self> {
        if names.len() != values.ncols() {
            return Err(Error::Dimension(format!(
                "{} names for {} columns",
                names.len(),
                values.ncols()
            )));
        }
        if values.nrows() == 0 {
            return Err(Error::Dimension("design has zero rows".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidSpec("design contains missing or non-finite entries".into()));
        }
        Ok(DesignMatrix { names, values })
    }

    /// Unnamed columns `x0, x1, ...`.
    pub fn from_matrix(values: DMatrix<f64>) -> Result<Self> {
        let names = (0..values.ncols()).map(|j| format!("x{j}")).collect();
        Self::new(names, values)
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn nrows(&self) -> usize {
        self.values.nrows()
    }

    pub fn ncols(&self) -> usize {
        self.values.ncols()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionResult {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    /// Row-major `k x k` covariance.
    pub covariance: Vec<f64>,
    pub se_kind: SeKind,
    pub residuals: Vec<f64>,
    pub rank: usize,
    pub nobs: usize,
    /// Gauss-Newton iterations; `None` for direct solves.
    pub iterations: Option<usize>,
}

impl RegressionResult {
    pub fn k(&self) -> usize {
        self.coefficients.len()
    }

    pub fn covariance_matrix(&self) -> DMatrix<f64> {
        let k = self.k();
        DMatrix::from_row_slice(k, k, &self.covariance)
    }

    pub fn std_errors(&self) -> Vec<f64> {
        let k = self.k();
        (0..k).map(|j| self.covariance[j * k + j].max(0.0).sqrt()).collect()
    }

    pub fn coefficient(&self, name: &str) -> Option<f64> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|j| self.coefficients[j])
    }
}

/// Pseudo-inverse factorisation of a design: `X = Q U S V'` with only the
/// retained singular directions kept.
struct PinvFactor {
    /// `k x r`, right singular vectors.
    v: DMatrix<f64>,
    /// Retained singular values.
    s: Vec<f64>,
    /// `min(n,k) x r` left singular vectors of the triangular factor.
    u_r: DMatrix<f64>,
    qr: nalgebra::linalg::QR<f64, nalgebra::Dyn, nalgebra::Dyn>,
    m: usize,
}

impl PinvFactor {
    fn new(x: &DMatrix<f64>) -> Self {
        let m = x.nrows().min(x.ncols());
        let qr = x.clone().qr();
        let r = qr.r();
        let svd = r.svd(true, true);
        let u_full = svd.u.expect("u requested");
        let vt = svd.v_t.expect("v requested");
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&j| smax > 0.0 && svd.singular_values[j] > RANK_TOLERANCE * smax)
            .collect();
        let s: Vec<f64> = keep.iter().map(|&j| svd.singular_values[j]).collect();
        let u_r = u_full.select_columns(&keep);
        let v = vt.transpose().select_columns(&keep);
        PinvFactor { v, s, u_r, qr, m }
    }

    fn rank(&self) -> usize {
        self.s.len()
    }

    fn solve(&self, y: &DVector<f64>) -> DVector<f64> {
        let mut qty = y.clone();
        self.qr.q_tr_mul(&mut qty);
        let head = qty.rows(0, self.m).into_owned();
        let mut w = self.u_r.transpose() * head;
        for (wj, sj) in w.iter_mut().zip(&self.s) {
            *wj /= sj;
        }
        &self.v * w
    }

    /// `(X'X)^+`.
    fn gram_pinv(&self) -> DMatrix<f64> {
        let mut vs = self.v.clone();
        for (j, sj) in self.s.iter().enumerate() {
            vs.column_mut(j).scale_mut(1.0 / (sj * sj));
        }
        &vs * self.v.transpose()
    }
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let k = m.nrows();
    for i in 0..k {
        for j in 0..i {
            let a = 0.5 * (m[(i, j)] + m[(j, i)]);
            m[(i, j)] = a;
            m[(j, i)] = a;
        }
    }
}

/// Sandwich or classical covariance given the bread `(X'X)^+`.
///
/// `extra_params` counts parameters absorbed before the regression (fixed
/// effects, per-unit projections) and enters the small-sample scaling.
pub(crate) fn covariance(
    x: &DMatrix<f64>,
    residuals: &DVector<f64>,
    bread: &DMatrix<f64>,
    rank: usize,
    extra_params: usize,
    se_kind: SeKind,
    clusters: Option<&[usize]>,
) -> Result<DMatrix<f64>> {
    let n = x.nrows();
    let k = x.ncols();
    let dof = n as f64 - (rank + extra_params) as f64;
    let mut cov = match se_kind {
        SeKind::Classical => {
            let s2 = if dof > 0.0 {
                residuals.norm_squared() / dof
            } else {
                f64::NAN
            };
            bread * s2
        }
        SeKind::Robust => {
            let mut meat = DMatrix::<f64>::zeros(k, k);
            for i in 0..n {
                let e2 = residuals[i] * residuals[i];
                if e2 == 0.0 {
                    continue;
                }
                let row = x.row(i);
                for a in 0..k {
                    let ra = row[a] * e2;
                    for b in 0..=a {
                        meat[(a, b)] += ra * row[b];
                    }
                }
            }
            for a in 0..k {
                for b in 0..a {
                    meat[(b, a)] = meat[(a, b)];
                }
            }
            let scale = if dof > 0.0 { n as f64 / dof } else { f64::NAN };
            bread * meat * bread * scale
        }
        SeKind::Clustered => {
            let ids = clusters.ok_or_else(|| {
                Error::InvalidSpec("cluster-robust covariance requires cluster ids".into())
            })?;
            if ids.len() != n {
                return Err(Error::Dimension(format!(
                    "{} cluster ids for {n} observations",
                    ids.len()
                )));
            }
            let mut scores: std::collections::BTreeMap<usize, DVector<f64>> = Default::default();
            for i in 0..n {
                let s = scores.entry(ids[i]).or_insert_with(|| DVector::zeros(k));
                for a in 0..k {
                    s[a] += x[(i, a)] * residuals[i];
                }
            }
            let g = scores.len() as f64;
            let mut meat = DMatrix::<f64>::zeros(k, k);
            for s in scores.values() {
                meat += s * s.transpose();
            }
            let scale = if g > 1.0 && dof > 0.0 {
                g / (g - 1.0) * (n as f64 - 1.0) / dof
            } else {
                f64::NAN
            };
            bread * meat * bread * scale
        }
    };
    symmetrize(&mut cov);
    Ok(cov)
}

/// Pseudo-inverse OLS with absorbed-parameter count for the dof correction.
pub(crate) fn least_squares_absorbed(
    x: &DesignMatrix,
    y: &[f64],
    se_kind: SeKind,
    cluster_ids: Option<&[usize]>,
    extra_params: usize,
) -> Result<RegressionResult> {
    let n = x.nrows();
    if y.len() != n {
        return Err(Error::Dimension(format!(
            "design has {n} rows, outcome has {}",
            y.len()
        )));
    }
    if let Some(ids) = cluster_ids {
        if ids.len() != n {
            return Err(Error::Dimension(format!(
                "{} cluster ids for {n} observations",
                ids.len()
            )));
        }
    }
    let xm = x.values();
    let yv = DVector::from_column_slice(y);
    let factor = PinvFactor::new(xm);
    let beta = factor.solve(&yv);
    let residuals = &yv - xm * &beta;
    let bread = factor.gram_pinv();
    let cov = covariance(
        xm,
        &residuals,
        &bread,
        factor.rank(),
        extra_params,
        se_kind,
        cluster_ids,
    )?;
    Ok(RegressionResult {
        names: x.names().to_vec(),
        coefficients: beta.iter().copied().collect(),
        covariance: cov.transpose().iter().copied().collect(),
        se_kind,
        residuals: residuals.iter().copied().collect(),
        rank: factor.rank(),
        nobs: n,
        iterations: None,
    })
}

/// OLS through the pseudo-inverse: rank-deficient designs give the
/// minimum-norm solution and report their effective rank.
pub fn least_squares(
    x: &DesignMatrix,
    y: &[f64],
    se_kind: SeKind,
    cluster_ids: Option<&[usize]>,
) -> Result<RegressionResult> {
    least_squares_absorbed(x, y, se_kind, cluster_ids, 0)
}

/// Residual maker `M = I - H (H'H)^- H'` held implicitly through an
/// orthonormal basis of the column space of `H`.
#[derive(Debug, Clone)]
pub struct Projection {
    basis: DMatrix<f64>,
}

impl Projection {
    pub fn new(h: &DMatrix<f64>) -> Result<Self> {
        if h.nrows() == 0 {
            return Err(Error::Dimension("projection basis has zero rows".into()));
        }
        if h.ncols() == 0 {
            return Ok(Projection {
                basis: DMatrix::zeros(h.nrows(), 0),
            });
        }
        let svd = h.clone().svd(true, false);
        let u = svd.u.expect("u requested");
        let smax = svd.singular_values.iter().cloned().fold(0.0, f64::max);
        let keep: Vec<usize> = (0..svd.singular_values.len())
            .filter(|&j| smax > 0.0 && svd.singular_values[j] > RANK_TOLERANCE * smax)
            .collect();
        Ok(Projection {
            basis: u.select_columns(&keep),
        })
    }

    pub fn rank(&self) -> usize {
        self.basis.ncols()
    }

    pub fn nrows(&self) -> usize {
        self.basis.nrows()
    }

    /// `M x`.
    pub fn apply(&self, x: &DVector<f64>) -> DVector<f64> {
        if self.rank() == 0 {
            return x.clone();
        }
        let coef = self.basis.transpose() * x;
        x - &self.basis * coef
    }

    /// `M X` column by column.
    pub fn apply_matrix(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        if self.rank() == 0 {
            return x.clone();
        }
        let coef = self.basis.transpose() * x;
        x - &self.basis * coef
    }
}

/// Residuals of each target regressed on `basis`.
pub fn residual_project(basis: &DesignMatrix, targets: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let proj = Projection::new(basis.values())?;
    targets
        .iter()
        .map(|t| {
            if t.len() != basis.nrows() {
                return Err(Error::Dimension(format!(
                    "target of length {} for basis with {} rows",
                    t.len(),
                    basis.nrows()
                )));
            }
            Ok(proj
                .apply(&DVector::from_column_slice(t))
                .iter()
                .copied()
                .collect())
        })
        .collect()
}

/// Residual function `r(theta)` for Gauss-Newton; the Jacobian is of `r`.
pub trait NlsModel {
    fn n_params(&self) -> usize;
    fn n_obs(&self) -> usize;
    fn residuals(&self, theta: &[f64]) -> Vec<f64>;
    /// Analytic Jacobian (`n_obs x n_params`); forward differences when `None`.
    fn jacobian(&self, _theta: &[f64]) -> Option<DMatrix<f64>> {
        None
    }
    fn param_names(&self) -> Vec<String> {
        (0..self.n_params()).map(|j| format!("theta{j}")).collect()
    }
}

fn numeric_jacobian<M: NlsModel + ?Sized>(model: &M, theta: &[f64], r0: &[f64]) -> DMatrix<f64> {
    let n = r0.len();
    let p = theta.len();
    let mut jac = DMatrix::zeros(n, p);
    let mut th = theta.to_vec();
    for j in 0..p {
        let h = 1e-6 * theta[j].abs().max(1.0);
        th[j] = theta[j] + h;
        let r1 = model.residuals(&th);
        th[j] = theta[j];
        for i in 0..n {
            jac[(i, j)] = (r1[i] - r0[i]) / h;
        }
    }
    jac
}

fn finite_vec(r: &[f64]) -> bool {
    r.iter().all(|v| v.is_finite())
}

/// Gauss-Newton with step halving. Convergence requires the gradient
/// `J'r` to fall below `tol`; the covariance is a sandwich at the optimum.
pub fn gauss_newton_nls<M: NlsModel + ?Sized>(
    model: &M,
    init: &[f64],
    tol: f64,
    max_iter: usize,
    se_kind: SeKind,
) -> Result<RegressionResult> {
    let p = model.n_params();
    let n = model.n_obs();
    if init.len() != p {
        return Err(Error::Dimension(format!(
            "initial vector of length {} for {p} parameters",
            init.len()
        )));
    }
    let mut theta = init.to_vec();
    let mut r = model.residuals(&theta);
    if r.len() != n || !finite_vec(&r) {
        return Err(Error::InvalidSpec("residual function undefined at the initial value".into()));
    }
    let jac_at = |theta: &[f64], r: &[f64]| {
        model
            .jacobian(theta)
            .unwrap_or_else(|| numeric_jacobian(model, theta, r))
    };
    let mut jac = jac_at(&theta, &r);
    let mut iterations = 0;
    loop {
        let rv = DVector::from_column_slice(&r);
        let grad = jac.transpose() * &rv;
        let gnorm = grad.norm();
        if gnorm < tol {
            break;
        }
        if iterations >= max_iter {
            return Err(Error::NonConvergence {
                iterations,
                gradient_norm: gnorm,
            });
        }
        let factor = PinvFactor::new(&jac);
        if factor.rank() < p {
            return Err(Error::RankDeficient(format!(
                "Jacobian rank {} < {p} parameters",
                factor.rank()
            )));
        }
        let step = factor.solve(&(-&rv));
        let ssr = rv.norm_squared();
        let mut lambda = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let cand: Vec<f64> = theta
                .iter()
                .zip(step.iter())
                .map(|(t, s)| t + lambda * s)
                .collect();
            let rc = model.residuals(&cand);
            if finite_vec(&rc) && rc.iter().map(|v| v * v).sum::<f64>() <= ssr * (1.0 + 1e-12) {
                accepted = Some((cand, rc));
                break;
            }
            lambda *= 0.5;
        }
        iterations += 1;
        match accepted {
            Some((cand, rc)) => {
                let moved = cand
                    .iter()
                    .zip(&theta)
                    .map(|(a, b)| (a - b).abs())
                    .fold(0.0, f64::max);
                theta = cand;
                r = rc;
                jac = jac_at(&theta, &r);
                if moved == 0.0 {
                    let g = (jac.transpose() * DVector::from_column_slice(&r)).norm();
                    if g >= tol {
                        return Err(Error::NonConvergence {
                            iterations,
                            gradient_norm: g,
                        });
                    }
                }
            }
            None => {
                return Err(Error::NonConvergence {
                    iterations,
                    gradient_norm: gnorm,
                })
            }
        }
    }

    // Sandwich around the model gradient (the Jacobian of the fit is -J_r).
    let factor = PinvFactor::new(&jac);
    if factor.rank() < p {
        return Err(Error::RankDeficient(format!(
            "Jacobian rank {} < {p} parameters at the optimum",
            factor.rank()
        )));
    }
    let bread = factor.gram_pinv();
    let rv = DVector::from_column_slice(&r);
    let cov = covariance(&jac, &rv, &bread, p, 0, se_kind, None)?;
    Ok(RegressionResult {
        names: model.param_names(),
        coefficients: theta,
        covariance: cov.transpose().iter().copied().collect(),
        se_kind,
        residuals: r,
        rank: p,
        nobs: n,
        iterations: Some(iterations),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_matrix(rng: &mut ChaCha8Rng, n: usize, k: usize) -> DMatrix<f64> {
        DMatrix::from_fn(n, k, |_, _| rng.random::<f64>() * 2.0 - 1.0)
    }

    #[test]
    fn constant_fit() {
        let x = DesignMatrix::from_matrix(DMatrix::from_element(3, 1, 1.0)).unwrap();
        let res = least_squares(&x, &[2.0, 2.0, 2.0], SeKind::Classical, None).unwrap();
        assert!((res.coefficients[0] - 2.0).abs() < 1e-14);
        assert!(res.residuals.iter().all(|e| e.abs() < 1e-14));
    }

    #[test]
    fn duplicated_column_keeps_fit() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let col = random_matrix(&mut rng, 20, 1);
        let y: Vec<f64> = (0..20).map(|_| rng.random::<f64>()).collect();
        let single = least_squares(&DesignMatrix::from_matrix(col.clone()).unwrap(), &y, SeKind::Robust, None).unwrap();
        let dup = DMatrix::from_fn(20, 2, |i, _| col[(i, 0)]);
        let double = least_squares(&DesignMatrix::from_matrix(dup).unwrap(), &y, SeKind::Robust, None).unwrap();
        assert_eq!(double.rank, 1);
        for (a, b) in single.residuals.iter().zip(&double.residuals) {
            assert!((a - b).abs() < 1e-12);
        }
        // minimum norm splits the coefficient evenly
        assert!((double.coefficients[0] - single.coefficients[0] / 2.0).abs() < 1e-10);
    }

    #[test]
    fn matches_normal_equations() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let x = random_matrix(&mut rng, 50, 3);
        let y = DVector::from_fn(50, |_, _| rng.random::<f64>());
        // oracle: Cholesky solve of X'X b = X'y
        let xtx = x.transpose() * &x;
        let xty = x.transpose() * &y;
        let oracle = xtx.cholesky().unwrap().solve(&xty);
        let res = least_squares(
            &DesignMatrix::from_matrix(x).unwrap(),
            y.as_slice(),
            SeKind::Classical,
            None,
        )
        .unwrap();
        for j in 0..3 {
            assert!((res.coefficients[j] - oracle[j]).abs() < 1e-10);
        }
    }

    #[test]
    fn robust_equals_classical_under_equal_squared_residuals() {
        // y = +-1 around a zero fit: X columns orthogonal to the residual signs.
        let x = DMatrix::from_row_slice(4, 2, &[1.0, 1.0, 1.0, -1.0, 1.0, 1.0, 1.0, -1.0]);
        let y = [1.0, 1.0, -1.0, -1.0];
        let xd = DesignMatrix::from_matrix(x).unwrap();
        let c = least_squares(&xd, &y, SeKind::Classical, None).unwrap();
        let r = least_squares(&xd, &y, SeKind::Robust, None).unwrap();
        assert!(c.residuals.iter().all(|e| (e.abs() - 1.0).abs() < 1e-12));
        for (a, b) in c.covariance.iter().zip(&r.covariance) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn residuals_orthogonal_to_design() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let x = random_matrix(&mut rng, 40, 4);
        let y: Vec<f64> = (0..40).map(|_| rng.random::<f64>() * 10.0).collect();
        let res = least_squares(&DesignMatrix::from_matrix(x.clone()).unwrap(), &y, SeKind::Robust, None).unwrap();
        let e = DVector::from_vec(res.residuals.clone());
        let inner = x.transpose() * e;
        assert!(inner.amax() < 1e-8 * 10.0);
    }

    #[test]
    fn cluster_errors() {
        let x = DesignMatrix::from_matrix(DMatrix::from_element(3, 1, 1.0)).unwrap();
        assert!(least_squares(&x, &[1.0, 2.0, 3.0], SeKind::Clustered, Some(&[0, 1])).is_err());
        assert!(least_squares(&x, &[1.0, 2.0], SeKind::Classical, None).is_err());
        assert!(DesignMatrix::from_matrix(DMatrix::zeros(0, 1)).is_err());
    }

    #[test]
    fn demeaning_projection() {
        let basis = DesignMatrix::from_matrix(DMatrix::from_element(3, 1, 1.0)).unwrap();
        let out = residual_project(&basis, &[vec![1.0, 2.0, 3.0], vec![5.0, 5.0, 5.0]]).unwrap();
        for (a, b) in out[0].iter().zip([-1.0, 0.0, 1.0]) {
            assert!((a - b).abs() < 1e-14);
        }
        assert!(out[1].iter().all(|v| v.abs() < 1e-14));
        assert!(residual_project(&basis, &[vec![1.0]]).is_err());
    }

    struct Shift;
    impl NlsModel for Shift {
        fn n_params(&self) -> usize {
            1
        }
        fn n_obs(&self) -> usize {
            1
        }
        fn residuals(&self, theta: &[f64]) -> Vec<f64> {
            vec![theta[0] - 5.0]
        }
        fn jacobian(&self, _theta: &[f64]) -> Option<DMatrix<f64>> {
            Some(DMatrix::from_element(1, 1, 1.0))
        }
    }

    #[test]
    fn gauss_newton_one_step_on_linear_residual() {
        let res = gauss_newton_nls(&Shift, &[0.0], 1e-10, 50, SeKind::Classical).unwrap();
        assert!((res.coefficients[0] - 5.0).abs() < 1e-9);
        assert_eq!(res.iterations, Some(1));
    }

    struct Stuck;
    impl NlsModel for Stuck {
        fn n_params(&self) -> usize {
            1
        }
        fn n_obs(&self) -> usize {
            2
        }
        fn residuals(&self, theta: &[f64]) -> Vec<f64> {
            vec![theta[0].sin() + 2.0, theta[0].cos()]
        }
    }

    #[test]
    fn non_convergence_is_reported() {
        let err = gauss_newton_nls(&Stuck, &[0.3], 1e-30, 2, SeKind::Classical).unwrap_err();
        assert!(matches!(err, Error::NonConvergence { .. }), "{err}");
    }
}
