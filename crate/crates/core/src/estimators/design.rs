//! Row assembly for the error-correction regression
//! `dy_t = -phi y_{t-1} + sum psi_l dy_{t-l} + beta' x_t + sum lambda_s dx_{t-s}`.

use std::ops::Range;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::panel::{cross_section_averages, PanelDataset};

/// Which columns enter the regression.
#[derive(Debug, Clone)]
pub struct EcmLayout {
    pub outcome: String,
    /// Autoregressive order in levels; `p - 1` lagged differences.
    pub p: usize,
    pub covariates: Vec<String>,
    /// Number of lagged covariate differences `dx_{t-s}`, `s = 0..covariate_lags`.
    pub covariate_lags: usize,
    /// Cross-section average lags `0..=q`; `None` leaves them out.
    pub cs_lags: Option<usize>,
    /// Further variables whose cross-section averages join the factor proxies.
    pub extra_cs: Vec<String>,
}

/// Complete-case rows ordered by country then year.
#[derive(Debug, Clone)]
pub struct EcmData {
    pub countries: Vec<String>,
    pub slope_names: Vec<String>,
    pub cs_names: Vec<String>,
    pub row_country: Vec<usize>,
    pub row_year: Vec<i32>,
    pub target: Vec<f64>,
    /// Row-major `rows x slope_names.len()`.
    pub slopes: Vec<f64>,
    /// Row-major `rows x cs_names.len()`.
    pub cs: Vec<f64>,
    pub p: usize,
    pub n_covariates: usize,
}

pub(crate) fn lag_name(var: &str) -> String {
    format!("L.{var}")
}

impl EcmData {
    pub fn build(panel: &PanelDataset, layout: &EcmLayout) -> Result<Self> {
        if layout.p == 0 {
            return Err(Error::InvalidSpec("autoregressive order p must be at least 1".into()));
        }
        let y = panel.block(&layout.outcome)?;
        let xs: Vec<&[f64]> = layout
            .covariates
            .iter()
            .map(|c| panel.block(c))
            .collect::<Result<_>>()?;
        if layout.covariates.contains(&layout.outcome) {
            return Err(Error::InvalidSpec(format!(
                "outcome {} also listed as a covariate",
                layout.outcome
            )));
        }
        let ny = panel.n_years();
        let p = layout.p;
        let lx = layout.covariate_lags;

        let mut slope_names = vec![lag_name(&layout.outcome)];
        for l in 1..p {
            slope_names.push(format!("L{l}.D.{}", layout.outcome));
        }
        for c in &layout.covariates {
            slope_names.push(c.clone());
        }
        for c in &layout.covariates {
            for s in 0..lx {
                slope_names.push(format!("L{s}.D.{c}"));
            }
        }

        let mut cs_vars: Vec<&str> = vec![layout.outcome.as_str()];
        cs_vars.extend(layout.covariates.iter().map(String::as_str));
        cs_vars.extend(layout.extra_cs.iter().map(String::as_str));
        let (cs_series, cs_names) = match layout.cs_lags {
            Some(q) => {
                let avg = cross_section_averages(panel, &cs_vars)?;
                let names = cs_vars
                    .iter()
                    .flat_map(|v| (0..=q).map(move |j| format!("cs.L{j}.{v}")))
                    .collect();
                (Some((avg, q)), names)
            }
            None => (None, Vec::new()),
        };
        let depth = p.max(lx).max(cs_series.as_ref().map_or(0, |(_, q)| *q));

        let k = slope_names.len();
        let h = cs_names.len();
        let mut out = EcmData {
            countries: panel.countries().to_vec(),
            slope_names,
            cs_names,
            row_country: Vec::new(),
            row_year: Vec::new(),
            target: Vec::new(),
            slopes: Vec::new(),
            cs: Vec::new(),
            p,
            n_covariates: layout.covariates.len(),
        };
        let mut srow = vec![0.0; k];
        let mut hrow = vec![0.0; h];
        for c in 0..panel.n_countries() {
            let yc = &y[c * ny..(c + 1) * ny];
            let xc: Vec<&[f64]> = xs.iter().map(|b| &b[c * ny..(c + 1) * ny]).collect();
            'rows: for t in depth..ny {
                for j in 0..=p {
                    if yc[t - j].is_nan() {
                        continue 'rows;
                    }
                }
                let mut col = 0;
                srow[col] = yc[t - 1];
                col += 1;
                for l in 1..p {
                    srow[col] = yc[t - l] - yc[t - l - 1];
                    col += 1;
                }
                for x in &xc {
                    if x[t].is_nan() {
                        continue 'rows;
                    }
                    srow[col] = x[t];
                    col += 1;
                }
                for x in &xc {
                    for s in 0..lx {
                        let d = x[t - s] - x[t - s - 1];
                        if d.is_nan() {
                            continue 'rows;
                        }
                        srow[col] = d;
                        col += 1;
                    }
                }
                if let Some((avg, q)) = &cs_series {
                    let mut col = 0;
                    for v in &cs_vars {
                        let a = &avg.averages[*v];
                        for j in 0..=*q {
                            match a[t - j] {
                                Some(val) => hrow[col] = val,
                                None => continue 'rows,
                            }
                            col += 1;
                        }
                    }
                }
                out.row_country.push(c);
                out.row_year.push(panel.first_year() + t as i32);
                out.target.push(yc[t] - yc[t - 1]);
                out.slopes.extend_from_slice(&srow);
                out.cs.extend_from_slice(&hrow);
            }
        }
        if out.target.is_empty() {
            return Err(Error::EmptySample(format!(
                "no complete rows for {} with p = {p}",
                layout.outcome
            )));
        }
        Ok(out)
    }

    pub fn nrows(&self) -> usize {
        self.target.len()
    }

    pub fn k(&self) -> usize {
        self.slope_names.len()
    }

    pub fn h(&self) -> usize {
        self.cs_names.len()
    }

    /// Index of the first covariate level column.
    pub fn beta_offset(&self) -> usize {
        self.p
    }

    /// Contiguous row ranges per country that has rows, in country order.
    pub fn country_ranges(&self) -> Vec<(usize, Range<usize>)> {
        let mut out = Vec::new();
        let mut start = 0;
        for r in 1..=self.nrows() {
            if r == self.nrows() || self.row_country[r] != self.row_country[start] {
                out.push((self.row_country[start], start..r));
                start = r;
            }
        }
        out
    }

    pub fn slope_matrix(&self, rows: Range<usize>) -> DMatrix<f64> {
        let k = self.k();
        DMatrix::from_row_slice(rows.len(), k, &self.slopes[rows.start * k..rows.end * k])
    }

    /// `[1, cs]` for the given rows.
    pub fn cs_basis(&self, rows: Range<usize>) -> DMatrix<f64> {
        let h = self.h();
        DMatrix::from_fn(rows.len(), h + 1, |i, j| {
            if j == 0 {
                1.0
            } else {
                self.cs[(rows.start + i) * h + j - 1]
            }
        })
    }

    /// Keeps the rows flagged `true`.
    pub fn subset(&self, keep: &[bool]) -> Result<Self> {
        let k = self.k();
        let h = self.h();
        let mut out = EcmData {
            countries: self.countries.clone(),
            slope_names: self.slope_names.clone(),
            cs_names: self.cs_names.clone(),
            row_country: Vec::new(),
            row_year: Vec::new(),
            target: Vec::new(),
            slopes: Vec::new(),
            cs: Vec::new(),
            p: self.p,
            n_covariates: self.n_covariates,
        };
        for (r, _) in keep.iter().enumerate().filter(|(_, k)| **k) {
            out.row_country.push(self.row_country[r]);
            out.row_year.push(self.row_year[r]);
            out.target.push(self.target[r]);
            out.slopes.extend_from_slice(&self.slopes[r * k..(r + 1) * k]);
            out.cs.extend_from_slice(&self.cs[r * h..(r + 1) * h]);
        }
        if out.target.is_empty() {
            return Err(Error::EmptySample("row subset is empty".into()));
        }
        Ok(out)
    }

    /// Keeps only the rows of the listed countries (by panel index).
    pub fn keep_countries(&self, keep: &[usize]) -> Result<Self> {
        let set: std::collections::BTreeSet<usize> = keep.iter().copied().collect();
        let mask: Vec<bool> = self.row_country.iter().map(|c| set.contains(c)).collect();
        self.subset(&mask)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> PanelDataset {
        let y = vec![
            1.0, 2.0, 4.0, 7.0, 11.0, //
            f64::NAN, 1.0, 1.5, 2.0, 3.0,
        ];
        let x = vec![0.0, 1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0];
        PanelDataset::from_blocks(
            vec!["a".into(), "b".into()],
            2000,
            5,
            [("y".to_string(), y), ("x".to_string(), x)].into_iter().collect(),
        )
        .unwrap()
    }

    #[test]
    fn rows_and_columns() {
        let d = EcmData::build(
            &toy(),
            &EcmLayout {
                outcome: "y".into(),
                p: 2,
                covariates: vec!["x".into()],
                covariate_lags: 1,
                cs_lags: None,
                extra_cs: Vec::new(),
            },
        )
        .unwrap();
        assert_eq!(d.slope_names, vec!["L.y", "L1.D.y", "x", "L0.D.x"]);
        // a: t = 2,3,4; b: y starts in 2001, needs t-2 so t = 3,4
        assert_eq!(d.row_year, vec![2002, 2003, 2004, 2003, 2004]);
        assert_eq!(d.target[0], 2.0);
        assert_eq!(&d.slopes[0..4], &[2.0, 1.0, 2.0, 1.0]);
        assert_eq!(d.country_ranges(), vec![(0, 0..3), (1, 3..5)]);
    }

    #[test]
    fn cross_section_columns() {
        let d = EcmData::build(
            &toy(),
            &EcmLayout {
                outcome: "y".into(),
                p: 1,
                covariates: vec![],
                covariate_lags: 0,
                cs_lags: Some(1),
                extra_cs: Vec::new(),
            },
        )
        .unwrap();
        assert_eq!(d.cs_names, vec!["cs.L0.y", "cs.L1.y"]);
        // 2001 average of y is (2 + 1) / 2, 2000 only has country a.
        assert_eq!(d.row_year[0], 2001);
        assert_eq!(&d.cs[0..2], &[1.5, 1.0]);
        let basis = d.cs_basis(0..2);
        assert_eq!(basis.ncols(), 3);
        assert_eq!(basis[(0, 0)], 1.0);
    }
}
