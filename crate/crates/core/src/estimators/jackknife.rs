//! Half-panel jackknife `2 psi - (psi_a + psi_b) / 2`.
//!
//! Each country's usable rows are split into a first and second half (the
//! middle row is dropped when the count is odd). Lagged regressors and
//! cross-section averages keep their full-panel values. Standard errors
//! come from the full-sample fit.

use super::design::EcmData;
use super::stats::Estimate;
use super::{
    build_report, fit_rows, prepare, EstimateReport, EstimatorKind, EstimatorOptions, Fit,
    GroupMap,
};
use crate::error::{Error, Result};
use crate::panel::PanelDataset;

pub fn jackknife_combine(full: f64, first: f64, second: f64) -> f64 {
    2.0 * full - 0.5 * (first + second)
}

/// Row masks for the two halves.
pub(crate) fn half_masks(data: &EcmData) -> (Vec<bool>, Vec<bool>) {
    let n = data.nrows();
    let mut a = vec![false; n];
    let mut b = vec![false; n];
    for (_, rg) in data.country_ranges() {
        let h = rg.len() / 2;
        a[rg.start..rg.start + h].fill(true);
        b[rg.end - h..rg.end].fill(true);
    }
    (a, b)
}

fn combine_opt(full: &Option<Estimate>, a: &Option<Estimate>, b: &Option<Estimate>) -> Option<Estimate> {
    match (full, a, b) {
        (Some(f), Some(a), Some(b)) => Some(Estimate::new(
            f.name.clone(),
            jackknife_combine(f.estimate, a.estimate, b.estimate),
            f.std_error,
        )),
        _ => None,
    }
}

pub fn half_panel_jackknife(
    kind: EstimatorKind,
    panel: &PanelDataset,
    outcome: &str,
    opts: &EstimatorOptions,
    groups: Option<&GroupMap>,
) -> Result<EstimateReport> {
    if kind == EstimatorKind::Barro {
        return Err(Error::InvalidSpec("the jackknife applies to panel estimators".into()));
    }
    let (data, lags) = prepare(panel, outcome, opts, kind)?;
    let se_kind = opts.se_kind.unwrap_or(kind.default_se());
    let full = fit_rows(kind, &data, opts, groups, se_kind)?;
    let (ma, mb) = half_masks(&data);
    let half = |mask: &[bool], label: &str| -> Result<Fit> {
        let sub = data.subset(mask)?;
        fit_rows(kind, &sub, opts, groups, se_kind)
            .map_err(|e| Error::Estimation(format!("{label} half failed: {e}")))
    };
    let fa = half(&ma, "first")?;
    let fb = half(&mb, "second")?;
    let coefficients = full
        .coefficients
        .iter()
        .zip(&fa.coefficients)
        .zip(&fb.coefficients)
        .map(|((f, a), b)| jackknife_combine(*f, *a, *b))
        .collect();
    let mg_long_run = match (&full.mg_long_run, &fa.mg_long_run, &fb.mg_long_run) {
        (Some(f), Some(a), Some(b)) => Some(
            f.iter()
                .zip(a)
                .zip(b)
                .map(|((f, a), b)| combine_opt(f, a, b))
                .collect(),
        ),
        _ => None,
    };
    let fit = Fit {
        coefficients,
        mg_long_run,
        ..full
    };
    build_report(kind, outcome, &data, fit, lags, se_kind, true)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formula() {
        assert!((jackknife_combine(0.9, 0.85, 0.87) - 0.94).abs() < 1e-12);
        assert_eq!(jackknife_combine(0.5, 0.5, 0.5), 0.5);
    }

    #[test]
    fn odd_rows_drop_the_middle() {
        use crate::estimators::EcmLayout;
        let y: Vec<f64> = (0..8).map(|t| (t as f64).sqrt()).collect();
        let panel = PanelDataset::from_blocks(
            vec!["a".into()],
            2000,
            8,
            [("y".to_string(), y)].into_iter().collect(),
        )
        .unwrap();
        let data = EcmData::build(
            &panel,
            &EcmLayout {
                outcome: "y".into(),
                p: 1,
                covariates: vec![],
                covariate_lags: 0,
                cs_lags: None,
                extra_cs: Vec::new(),
            },
        )
        .unwrap();
        assert_eq!(data.nrows(), 7);
        let (a, b) = half_masks(&data);
        assert_eq!(a, vec![true, true, true, false, false, false, false]);
        assert_eq!(b, vec![false, false, false, false, true, true, true]);
    }
}
