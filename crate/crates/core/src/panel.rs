//! Unbalanced long panel of countries by calendar years.
//!
//! Every variable is stored as a dense `countries x years` block in
//! country-major order. Missing cells hold `NaN`; within a country the
//! observed years of any variable form one contiguous run.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tokens read as missing values in a long CSV.
pub const MISSING_TOKENS: [&str; 2] = ["", "NA"];

#[derive(Debug, Clone)]
pub struct PanelDataset {
    countries: Vec<String>,
    first_year: i32,
    n_years: usize,
    variables: BTreeMap<String, Vec<f64>>,
}

impl PartialEq for PanelDataset {
    fn eq(&self, other: &Self) -> bool {
        self.countries == other.countries
            && self.first_year == other.first_year
            && self.n_years == other.n_years
            && self.variables.len() == other.variables.len()
            && self.variables.iter().zip(other.variables.iter()).all(
                |((ka, va), (kb, vb))| {
                    ka == kb
                        && va.len() == vb.len()
                        && va
                            .iter()
                            .zip(vb)
                            .all(|(a, b)| (a.is_nan() && b.is_nan()) || a.to_bits() == b.to_bits())
                },
            )
    }
}

impl PanelDataset {
    /// Builds a dataset from dense per-variable blocks (`NaN` = missing).
    ///
    /// Countries are sorted, countries without any observation are dropped and
    /// the year range is trimmed to years holding at least one observation.
    pub fn from_blocks(
        countries: Vec<String>,
        first_year: i32,
        n_years: usize,
        variables: BTreeMap<String, Vec<f64>>,
    ) -> Result<Self> {
        if variables.is_empty() {
            return Err(Error::InvalidSpec("panel needs at least one variable".into()));
        }
        let n = countries.len();
        for (name, block) in &variables {
            if block.len() != n * n_years {
                return Err(Error::Dimension(format!(
                    "variable {name}: {} cells for {n} countries x {n_years} years",
                    block.len()
                )));
            }
        }
        let unique: BTreeSet<&String> = countries.iter().collect();
        if unique.len() != n {
            return Err(Error::InvalidSpec("duplicate country identifier".into()));
        }

        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| countries[a].cmp(&countries[b]));
        let has_obs = |c: usize| {
            variables
                .values()
                .any(|b| b[c * n_years..(c + 1) * n_years].iter().any(|v| !v.is_nan()))
        };
        order.retain(|&c| has_obs(c));
        if order.is_empty() {
            return Err(Error::EmptySample("panel has no observed cells".into()));
        }

        let mut lo = n_years;
        let mut hi = 0;
        for &c in &order {
            for block in variables.values() {
                for (t, v) in block[c * n_years..(c + 1) * n_years].iter().enumerate() {
                    if !v.is_nan() {
                        lo = lo.min(t);
                        hi = hi.max(t);
                    }
                }
            }
        }
        let new_years = hi - lo + 1;
        let new_countries: Vec<String> = order.iter().map(|&c| countries[c].clone()).collect();
        let new_vars: BTreeMap<String, Vec<f64>> = variables
            .into_iter()
            .map(|(name, block)| {
                let mut out = Vec::with_capacity(order.len() * new_years);
                for &c in &order {
                    out.extend_from_slice(&block[c * n_years + lo..c * n_years + hi + 1]);
                }
                (name, out)
            })
            .collect();

        let panel = PanelDataset {
            countries: new_countries,
            first_year: first_year + lo as i32,
            n_years: new_years,
            variables: new_vars,
        };
        panel.check_contiguity()?;
        Ok(panel)
    }

    /// Builds a dataset from individual `(country, year, variable, value)` cells.
    pub fn from_cells<I>(cells: I) -> Result<Self>
    where
        I: IntoIterator<Item = (String, i32, String, Option<f64>)>,
    {
        let mut map: BTreeMap<(String, i32, String), Option<f64>> = BTreeMap::new();
        let mut names = BTreeSet::new();
        let mut countries = BTreeSet::new();
        let (mut lo, mut hi) = (i32::MAX, i32::MIN);
        for (country, year, variable, value) in cells {
            lo = lo.min(year);
            hi = hi.max(year);
            names.insert(variable.clone());
            countries.insert(country.clone());
            let key = (country, year, variable);
            if map.contains_key(&key) {
                return Err(Error::DuplicateCell {
                    country: key.0,
                    year: key.1,
                    variable: key.2,
                });
            }
            map.insert(key, value);
        }
        if names.is_empty() {
            return Err(Error::InvalidSpec("panel needs at least one variable".into()));
        }
        let countries: Vec<String> = countries.into_iter().collect();
        let n_years = (hi - lo + 1) as usize;
        let index: HashMap<&String, usize> =
            countries.iter().enumerate().map(|(i, c)| (c, i)).collect();
        let mut variables: BTreeMap<String, Vec<f64>> = names
            .into_iter()
            .map(|name| (name, vec![f64::NAN; countries.len() * n_years]))
            .collect();
        for ((country, year, variable), value) in &map {
            if let Some(v) = value {
                let c = index[country];
                variables.get_mut(variable).unwrap()[c * n_years + (year - lo) as usize] = *v;
            }
        }
        Self::from_blocks(countries, lo, n_years, variables)
    }

    fn check_contiguity(&self) -> Result<()> {
        for (name, block) in &self.variables {
            for (c, country) in self.countries.iter().enumerate() {
                let row = &block[c * self.n_years..(c + 1) * self.n_years];
                let first = row.iter().position(|v| !v.is_nan());
                let last = row.iter().rposition(|v| !v.is_nan());
                if let (Some(a), Some(b)) = (first, last) {
                    if let Some(gap) = row[a..=b].iter().position(|v| v.is_nan()) {
                        return Err(Error::NonContiguous {
                            country: country.clone(),
                            variable: name.clone(),
                            year: self.first_year + (a + gap) as i32,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn countries(&self) -> &[String] {
        &self.countries
    }

    pub fn n_countries(&self) -> usize {
        self.countries.len()
    }

    pub fn first_year(&self) -> i32 {
        self.first_year
    }

    pub fn last_year(&self) -> i32 {
        self.first_year + self.n_years as i32 - 1
    }

    pub fn n_years(&self) -> usize {
        self.n_years
    }

    pub fn years(&self) -> impl Iterator<Item = i32> + '_ {
        self.first_year..=self.last_year()
    }

    pub fn variable_names(&self) -> impl Iterator<Item = &str> {
        self.variables.keys().map(String::as_str)
    }

    pub fn has_variable(&self, name: &str) -> bool {
        self.variables.contains_key(name)
    }

    pub fn country_index(&self, country: &str) -> Option<usize> {
        self.countries.binary_search_by(|c| c.as_str().cmp(country)).ok()
    }

    /// Number of observed cells across all variables.
    pub fn n_cells(&self) -> usize {
        self.variables
            .values()
            .map(|b| b.iter().filter(|v| !v.is_nan()).count())
            .sum()
    }

    /// Dense block of one variable, country-major; `NaN` marks missing cells.
    pub fn block(&self, variable: &str) -> Result<&[f64]> {
        self.variables
            .get(variable)
            .map(Vec::as_slice)
            .ok_or_else(|| Error::UnknownVariable(variable.to_string()))
    }

    /// Time series of one variable for the country at `country` index,
    /// indexed from `first_year()`; `NaN` marks missing cells.
    pub fn series(&self, variable: &str, country: usize) -> Result<&[f64]> {
        let block = self.block(variable)?;
        Ok(&block[country * self.n_years..(country + 1) * self.n_years])
    }

    pub fn get(&self, country: &str, year: i32, variable: &str) -> Option<f64> {
        let c = self.country_index(country)?;
        if year < self.first_year || year > self.last_year() {
            return None;
        }
        let v = self.series(variable, c).ok()?[(year - self.first_year) as usize];
        (!v.is_nan()).then_some(v)
    }

    /// First and last observed year of `variable` for a country.
    pub fn observed_span(&self, variable: &str, country: usize) -> Result<Option<(i32, i32)>> {
        let row = self.series(variable, country)?;
        let first = row.iter().position(|v| !v.is_nan());
        let last = row.iter().rposition(|v| !v.is_nan());
        Ok(first
            .zip(last)
            .map(|(a, b)| (self.first_year + a as i32, self.first_year + b as i32)))
    }

    pub fn observed_count(&self, variable: &str, country: usize) -> Result<usize> {
        Ok(self
            .series(variable, country)?
            .iter()
            .filter(|v| !v.is_nan())
            .count())
    }

    /// Returns a copy holding only the listed countries (in sorted order).
    pub fn select_countries(&self, keep: &[String]) -> Result<Self> {
        let keep: BTreeSet<&String> = keep.iter().collect();
        let idx: Vec<usize> = (0..self.countries.len())
            .filter(|&c| keep.contains(&self.countries[c]))
            .collect();
        if idx.is_empty() {
            return Err(Error::EmptySample(format!(
                "none of the {} requested countries are in the panel",
                keep.len()
            )));
        }
        let variables = self
            .variables
            .iter()
            .map(|(name, block)| {
                let mut out = Vec::with_capacity(idx.len() * self.n_years);
                for &c in &idx {
                    out.extend_from_slice(&block[c * self.n_years..(c + 1) * self.n_years]);
                }
                (name.clone(), out)
            })
            .collect();
        Self::from_blocks(
            idx.iter().map(|&c| self.countries[c].clone()).collect(),
            self.first_year,
            self.n_years,
            variables,
        )
    }

    /// Returns a copy with an extra variable; fails on a name collision.
    pub fn with_variable(&self, name: &str, block: Vec<f64>) -> Result<Self> {
        if self.variables.contains_key(name) {
            return Err(Error::NameCollision(name.to_string()));
        }
        let mut variables = self.variables.clone();
        variables.insert(name.to_string(), block);
        Self::from_blocks(self.countries.clone(), self.first_year, self.n_years, variables)
    }

    /// Returns a copy with `variable` multiplied by `factor` in every cell.
    pub fn scaled(&self, variable: &str, factor: f64) -> Result<Self> {
        let mut out = self.clone();
        let block = out
            .variables
            .get_mut(variable)
            .ok_or_else(|| Error::UnknownVariable(variable.to_string()))?;
        block.iter_mut().for_each(|v| *v *= factor);
        Ok(out)
    }
}

/// Column layout of a long CSV file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CsvSchema {
    pub country_column: String,
    pub year_column: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        CsvSchema {
            country_column: "country".into(),
            year_column: "year".into(),
        }
    }
}

fn parse_value(field: &str, line: u64, column: &str) -> Result<Option<f64>> {
    let field = field.trim();
    if MISSING_TOKENS.contains(&field) {
        return Ok(None);
    }
    field
        .parse::<f64>()
        .map(|v| (!v.is_nan()).then_some(v))
        .map_err(|_| Error::MalformedRow {
            line,
            message: format!("column {column}: cannot parse {field:?} as a number"),
        })
}

/// Reads a long CSV (`country,year,<var1>,<var2>,...`, one row per country-year).
pub fn load_long_csv(path: impl AsRef<Path>, schema: &CsvSchema) -> Result<PanelDataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_long_csv(file, schema)
}

pub fn read_long_csv<R: std::io::Read>(reader: R, schema: &CsvSchema) -> Result<PanelDataset> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let find = |name: &str| headers.iter().position(|h| h.trim() == name);
    let country_col = find(&schema.country_column).ok_or_else(|| Error::MalformedRow {
        line: 1,
        message: format!("header lacks column {:?}", schema.country_column),
    })?;
    let year_col = find(&schema.year_column).ok_or_else(|| Error::MalformedRow {
        line: 1,
        message: format!("header lacks column {:?}", schema.year_column),
    })?;
    let value_cols: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != country_col && *i != year_col)
        .map(|(i, h)| (i, h.trim().to_string()))
        .collect();
    if value_cols.is_empty() {
        return Err(Error::MalformedRow {
            line: 1,
            message: "no value columns".into(),
        });
    }

    let mut cells = Vec::new();
    let mut seen = BTreeSet::new();
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        if record.len() != headers.len() {
            return Err(Error::MalformedRow {
                line,
                message: format!("expected {} fields, found {}", headers.len(), record.len()),
            });
        }
        let country = record[country_col].trim().to_string();
        if country.is_empty() {
            return Err(Error::MalformedRow {
                line,
                message: "empty country identifier".into(),
            });
        }
        let year: i32 = record[year_col].trim().parse().map_err(|_| Error::MalformedRow {
            line,
            message: format!("year {:?} is not an integer", &record[year_col]),
        })?;
        if !seen.insert((country.clone(), year)) {
            return Err(Error::DuplicateCell {
                country,
                year,
                variable: value_cols[0].1.clone(),
            });
        }
        for (i, name) in &value_cols {
            let value = parse_value(&record[*i], line, name)?;
            cells.push((country.clone(), year, name.clone(), value));
        }
    }
    PanelDataset::from_cells(cells)
}

/// Writes the panel as a long CSV; rows cover each country's observed span.
pub fn write_long_csv<W: std::io::Write>(panel: &PanelDataset, writer: W) -> Result<()> {
    let mut wtr = csv::Writer::from_writer(writer);
    let names: Vec<&str> = panel.variable_names().collect();
    let mut header = vec!["country", "year"];
    header.extend(&names);
    wtr.write_record(&header)?;
    for (c, country) in panel.countries().iter().enumerate() {
        let rows: Vec<usize> = (0..panel.n_years())
            .filter(|&t| {
                names
                    .iter()
                    .any(|v| !panel.series(v, c).map(|s| s[t].is_nan()).unwrap_or(true))
            })
            .collect();
        for t in rows {
            let mut rec = vec![country.clone(), (panel.first_year() + t as i32).to_string()];
            for v in &names {
                let x = panel.series(v, c)?[t];
                rec.push(if x.is_nan() { "NA".into() } else { format!("{x}") });
            }
            wtr.write_record(&rec)?;
        }
    }
    wtr.flush().map_err(|e| Error::io("<csv writer>", e))?;
    Ok(())
}

pub fn save_long_csv(panel: &PanelDataset, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    write_long_csv(panel, std::io::BufWriter::new(file))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransformKind {
    Lag(usize),
    FirstDifference,
    Log,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeriesTransform {
    pub kind: TransformKind,
    pub source: String,
    pub target: String,
}

impl SeriesTransform {
    pub fn lag(source: &str, k: usize, target: &str) -> Self {
        SeriesTransform {
            kind: TransformKind::Lag(k),
            source: source.into(),
            target: target.into(),
        }
    }

    pub fn diff(source: &str, target: &str) -> Self {
        SeriesTransform {
            kind: TransformKind::FirstDifference,
            source: source.into(),
            target: target.into(),
        }
    }

    pub fn log(source: &str, target: &str) -> Self {
        SeriesTransform {
            kind: TransformKind::Log,
            source: source.into(),
            target: target.into(),
        }
    }
}

/// Adds the transformed series as a new variable. The input is left untouched.
pub fn apply_transform(panel: &PanelDataset, t: &SeriesTransform) -> Result<PanelDataset> {
    let src = panel.block(&t.source)?;
    if panel.has_variable(&t.target) {
        return Err(Error::NameCollision(t.target.clone()));
    }
    let ny = panel.n_years();
    let mut out = vec![f64::NAN; src.len()];
    match t.kind {
        TransformKind::Lag(0) => {
            return Err(Error::InvalidSpec("lag order must be at least 1".into()));
        }
        TransformKind::Lag(k) => {
            for c in 0..panel.n_countries() {
                for s in k..ny {
                    out[c * ny + s] = src[c * ny + s - k];
                }
            }
        }
        TransformKind::FirstDifference => {
            for c in 0..panel.n_countries() {
                for s in 1..ny {
                    out[c * ny + s] = src[c * ny + s] - src[c * ny + s - 1];
                }
            }
        }
        TransformKind::Log => {
            for (o, &v) in out.iter_mut().zip(src) {
                if v.is_nan() {
                    continue;
                }
                if v <= 0.0 {
                    return Err(Error::InvalidSpec(format!(
                        "log of non-positive value {v} in {}",
                        t.source
                    )));
                }
                *o = v.ln();
            }
        }
    }
    panel.with_variable(&t.target, out)
}

/// Per-year simple averages over the countries observed in that year.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossSectionAverageSet {
    pub first_year: i32,
    pub averages: BTreeMap<String, Vec<Option<f64>>>,
    pub counts: BTreeMap<String, Vec<usize>>,
}

impl CrossSectionAverageSet {
    pub fn average(&self, variable: &str, year: i32) -> Option<f64> {
        let v = self.averages.get(variable)?;
        let t = usize::try_from(year - self.first_year).ok()?;
        v.get(t).copied().flatten()
    }

    pub fn count(&self, variable: &str, year: i32) -> usize {
        let t = match usize::try_from(year - self.first_year) {
            Ok(t) => t,
            Err(_) => return 0,
        };
        self.counts
            .get(variable)
            .and_then(|c| c.get(t).copied())
            .unwrap_or(0)
    }
}

pub fn cross_section_averages(
    panel: &PanelDataset,
    vars: &[&str],
) -> Result<CrossSectionAverageSet> {
    let ny = panel.n_years();
    let mut averages = BTreeMap::new();
    let mut counts = BTreeMap::new();
    for &name in vars {
        let block = panel.block(name)?;
        let mut sum = vec![0.0; ny];
        let mut cnt = vec![0usize; ny];
        for c in 0..panel.n_countries() {
            for t in 0..ny {
                let v = block[c * ny + t];
                if !v.is_nan() {
                    sum[t] += v;
                    cnt[t] += 1;
                }
            }
        }
        let avg = sum
            .iter()
            .zip(&cnt)
            .map(|(s, &k)| (k > 0).then(|| s / k as f64))
            .collect();
        averages.insert(name.to_string(), avg);
        counts.insert(name.to_string(), cnt);
    }
    Ok(CrossSectionAverageSet {
        first_year: panel.first_year(),
        averages,
        counts,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RestrictRule {
    /// Drop countries with fewer than `min_t` observed years.
    MinT(usize),
    /// Keep countries observed in every year of `start..=end`.
    BalancedWindow { start: i32, end: i32 },
}

/// Drops countries failing `rule` on `variable`.
pub fn restrict(panel: &PanelDataset, variable: &str, rule: &RestrictRule) -> Result<PanelDataset> {
    if let RestrictRule::BalancedWindow { start, end } = rule {
        if start > end {
            return Err(Error::InvalidSpec(format!(
                "balanced window {start}..{end} is empty"
            )));
        }
    }
    let mut keep = Vec::new();
    for (c, country) in panel.countries().iter().enumerate() {
        let ok = match rule {
            RestrictRule::MinT(min_t) => panel.observed_count(variable, c)? >= *min_t,
            RestrictRule::BalancedWindow { start, end } => panel
                .observed_span(variable, c)?
                .is_some_and(|(a, b)| a <= *start && b >= *end),
        };
        if ok {
            keep.push(country.clone());
        }
    }
    if keep.is_empty() {
        return Err(Error::EmptySample(format!(
            "restriction {rule:?} on {variable} dropped all {} countries",
            panel.n_countries()
        )));
    }
    if keep.len() == panel.n_countries() {
        return Ok(panel.clone());
    }
    panel.select_countries(&keep)
}
