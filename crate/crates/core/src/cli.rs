//! Config-driven front end: estimation on data files, Monte Carlo runs,
//! bias tables and the two-step procedure. Every emitted table carries the
//! SHA-256 of the config file and the effective seed.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::bias::{
    barro_asymptotic_bias, nickell_bias_approx, twfe_bias_stationary_factor, BiasRegime,
};
use crate::dgp::{derive_seed, simulate_panel, DgpSpec};
use crate::error::{Error, Result};
use crate::estimators::{
    barro_estimate, estimate, half_panel_jackknife, BarroOptions, EstimateReport, EstimatorKind,
    EstimatorOptions, GroupMap,
};
use crate::montecarlo::{run_montecarlo, McEstimator, McOutput, MonteCarloConfig};
use crate::panel::{load_long_csv, save_long_csv, CsvSchema, PanelDataset};
use crate::two_step::{load_z_csv, two_step, FilterSource};

#[derive(Debug, Parser)]
#[command(name = "panelconv", version, about = "Convergence-rate estimation for dynamic panels")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Estimate on a long-format panel CSV.
    Estimate(RunArgs),
    /// Monte Carlo replications from a simulated design.
    Simulate(RunArgs),
    /// Grid of closed-form bias predictions.
    BiasTable(RunArgs),
    /// Pooled first stage, filtered intercepts, cross-country second stage.
    TwoStep(RunArgs),
}

#[derive(Debug, Clone, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Worker threads for replications and per-country fits.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Overrides the config seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

impl Command {
    pub fn args(&self) -> &RunArgs {
        match self {
            Command::Estimate(a) | Command::Simulate(a) | Command::BiasTable(a) | Command::TwoStep(a) => a,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
    #[serde(alias = "markdown-table")]
    Markdown,
}

impl OutputFormat {
    fn extension(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
            OutputFormat::Markdown => "md",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InputConfig {
    pub path: PathBuf,
    #[serde(default = "default_country")]
    pub country_column: String,
    #[serde(default = "default_year")]
    pub year_column: String,
}

fn default_country() -> String {
    "country".into()
}

fn default_year() -> String {
    "year".into()
}

fn default_outcome() -> String {
    "y".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorEntry {
    pub kind: EstimatorKind,
    #[serde(default)]
    pub jackknife: bool,
    #[serde(default)]
    pub options: EstimatorOptions,
    /// CSV with `country,group` columns (FE-GTE).
    #[serde(default)]
    pub groups: Option<PathBuf>,
    /// Required for `kind = "barro"` in `estimate`.
    #[serde(default)]
    pub barro: Option<BarroOptions>,
    #[serde(default)]
    pub oracle: Option<BiasRegime>,
    #[serde(default)]
    pub label: Option<String>,
}

impl EstimatorEntry {
    fn label(&self) -> String {
        self.to_mc().label()
    }

    fn to_mc(&self) -> McEstimator {
        McEstimator {
            kind: self.kind,
            jackknife: self.jackknife,
            options: self.options.clone(),
            oracle: self.oracle,
            label: self.label.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BiasGrid {
    pub rho: Vec<f64>,
    pub t: Vec<usize>,
    #[serde(default = "one")]
    pub ratio: Vec<f64>,
    /// `kappa^2 sigma_f^2` for the stationary-factor column.
    #[serde(default = "one")]
    pub kappa2: Vec<f64>,
    #[serde(default = "half")]
    pub a: Vec<f64>,
}

fn one() -> Vec<f64> {
    vec![1.0]
}

fn half() -> Vec<f64> {
    vec![0.5]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoStepConfig {
    pub z_path: PathBuf,
    #[serde(default = "default_country")]
    pub z_country_column: String,
    #[serde(default)]
    pub source: FilterSource,
    #[serde(default)]
    pub options: EstimatorOptions,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub input: Option<InputConfig>,
    #[serde(default = "default_outcome")]
    pub outcome: String,
    #[serde(default)]
    pub estimators: Vec<EstimatorEntry>,
    #[serde(default)]
    pub dgp: Option<DgpSpec>,
    #[serde(default)]
    pub replications: Option<usize>,
    #[serde(default)]
    pub seed: Option<u64>,
    /// `simulate`: also write the replication-0 panel and its truth record.
    #[serde(default)]
    pub export_panel: bool,
    #[serde(default)]
    pub grid: Option<BiasGrid>,
    #[serde(default)]
    pub two_step: Option<TwoStepConfig>,
    #[serde(default)]
    pub format: OutputFormat,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// Resolves relative paths against `base`.
    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let Some(inp) = &mut self.input {
            fix(&mut inp.path);
        }
        for e in &mut self.estimators {
            if let Some(g) = &mut e.groups {
                fix(g);
            }
        }
        if let Some(ts) = &mut self.two_step {
            fix(&mut ts.z_path);
        }
    }

    fn require_input(&self) -> Result<&InputConfig> {
        let inp = self
            .input
            .as_ref()
            .ok_or_else(|| Error::InvalidSpec("config.input: required for this command".into()))?;
        if !inp.path.exists() {
            return Err(Error::InvalidSpec(format!(
                "config.input.path: {} does not exist",
                inp.path.display()
            )));
        }
        Ok(inp)
    }
}

/// A rendered table: one header row and rows of JSON scalars.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Value>>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Provenance {
    pub config_sha256: String,
    pub seed: u64,
}

fn cell_text(v: &Value) -> String {
    match v {
        Value::Null => "NA".into(),
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn num(v: f64) -> Value {
    if v.is_finite() {
        json!(v)
    } else {
        Value::Null
    }
}

fn opt(v: Option<f64>) -> Value {
    v.map_or(Value::Null, num)
}

impl Table {
    fn new(name: &str, columns: &[&str]) -> Self {
        Table {
            name: name.into(),
            columns: columns.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn render(&self, format: OutputFormat, prov: &Provenance) -> Result<String> {
        match format {
            OutputFormat::Csv => {
                let mut w = csv::Writer::from_writer(Vec::new());
                let mut header = self.columns.clone();
                header.extend(["config_sha256".to_string(), "seed".to_string()]);
                w.write_record(&header)?;
                let seed = prov.seed.to_string();
                for row in &self.rows {
                    let mut rec: Vec<String> = row.iter().map(cell_text).collect();
                    rec.push(prov.config_sha256.clone());
                    rec.push(seed.clone());
                    w.write_record(&rec)?;
                }
                let bytes = w.into_inner().map_err(|e| Error::Estimation(e.to_string()))?;
                Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
            }
            OutputFormat::Json => {
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|r| {
                        let m: serde_json::Map<String, Value> =
                            self.columns.iter().cloned().zip(r.iter().cloned()).collect();
                        Value::Object(m)
                    })
                    .collect();
                let doc = json!({
                    "table": self.name,
                    "config_sha256": prov.config_sha256,
                    "seed": prov.seed,
                    "columns": self.columns,
                    "rows": rows,
                });
                Ok(serde_json::to_string_pretty(&doc)? + "\n")
            }
            OutputFormat::Markdown => {
                let mut s = format!("### {}\n\n", self.name);
                s += &format!("| {} |\n", self.columns.join(" | "));
                s += &format!("|{}\n", "---|".repeat(self.columns.len()));
                for row in &self.rows {
                    let cells: Vec<String> = row.iter().map(cell_text).collect();
                    s += &format!("| {} |\n", cells.join(" | "));
                }
                s += &format!("\nconfig_sha256: `{}`, seed: {}\n", prov.config_sha256, prov.seed);
                Ok(s)
            }
        }
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_table(dir: &Path, stem: &str, table: &Table, format: OutputFormat, prov: &Provenance) -> Result<PathBuf> {
    let path = dir.join(format!("{stem}.{}", format.extension()));
    write_file(&path, &table.render(format, prov)?)?;
    Ok(path)
}

fn file_stem(label: &str) -> String {
    label
        .chars()
        .map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_lowercase() } else { '_' })
        .collect()
}

/// Coefficients with SEs, then mean lag, long-run effects and sample sizes.
pub fn report_table(label: &str, r: &EstimateReport) -> Table {
    let mut t = Table::new(label, &["term", "estimate", "std_error"]);
    let se = r.covariance_matrix().diagonal();
    for (i, name) in r.names.iter().enumerate() {
        t.rows.push(vec![json!(name), num(r.coefficients[i]), num(se[i].max(0.0).sqrt())]);
    }
    t.rows.push(vec![json!("phi"), num(r.phi.estimate), num(r.phi.std_error)]);
    if let Some(ml) = &r.mean_lag {
        t.rows.push(vec![json!("mean_lag"), num(ml.estimate), num(ml.std_error)]);
    } else {
        t.rows.push(vec![json!("mean_lag"), Value::Null, Value::Null]);
    }
    for (b, lr) in r.beta.iter().zip(&r.long_run) {
        let name = format!("long_run.{}", b.name);
        match lr {
            Some(e) => t.rows.push(vec![json!(name), num(e.estimate), num(e.std_error)]),
            None => t.rows.push(vec![json!(name), Value::Null, Value::Null]),
        }
    }
    let s = &r.sample;
    for (k, v) in [
        ("n", s.n as f64),
        ("T_min", s.t_min as f64),
        ("T_ave", s.t_ave),
        ("T_max", s.t_max as f64),
        ("nobs", s.nobs as f64),
    ] {
        t.rows.push(vec![json!(k), num(v), Value::Null]);
    }
    t
}

fn read_groups(path: &Path) -> Result<GroupMap> {
    let mut rdr = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(err) => Error::io(path, err),
        other => Error::InvalidSpec(format!("{}: {other:?}", path.display())),
    })?;
    let mut out = BTreeMap::new();
    for rec in rdr.records() {
        let rec = rec?;
        if rec.len() < 2 {
            return Err(Error::InvalidSpec(format!("{}: expected country,group", path.display())));
        }
        out.insert(rec[0].to_string(), rec[1].to_string());
    }
    Ok(out)
}

fn load_input(cfg: &RunConfig) -> Result<PanelDataset> {
    let inp = cfg.require_input()?;
    load_long_csv(
        &inp.path,
        &CsvSchema {
            country_column: inp.country_column.clone(),
            year_column: inp.year_column.clone(),
        },
    )
}

fn run_estimate(cfg: &RunConfig, out: &Path, prov: &Provenance) -> Result<Vec<PathBuf>> {
    if cfg.estimators.is_empty() {
        return Err(Error::InvalidSpec("config.estimators: at least one estimator required".into()));
    }
    let panel = load_input(cfg)?;
    let mut written = Vec::new();
    for (i, e) in cfg.estimators.iter().enumerate() {
        let label = e.label();
        log::info!("estimating {label}");
        let table = if e.kind == EstimatorKind::Barro {
            let opts = e.barro.as_ref().ok_or_else(|| {
                Error::InvalidSpec(format!("config.estimators[{i}].barro: required for kind barro"))
            })?;
            barro_table(&label, &barro_estimate(&panel, &cfg.outcome, opts)?)
        } else {
            let groups = e.groups.as_deref().map(read_groups).transpose()?;
            let report = if e.jackknife {
                half_panel_jackknife(e.kind, &panel, &cfg.outcome, &e.options, groups.as_ref())?
            } else {
                estimate(e.kind, &panel, &cfg.outcome, &e.options, groups.as_ref())?
            };
            report_table(&label, &report)
        };
        written.push(write_table(out, &format!("estimate_{}", file_stem(&label)), &table, cfg.format, prov)?);
    }
    Ok(written)
}

fn barro_table(label: &str, r: &crate::estimators::BarroResult) -> Table {
    let mut t = Table::new(label, &["term", "estimate", "std_error"]);
    let mut push = |e: &crate::estimators::Estimate| {
        t.rows.push(vec![json!(e.name), num(e.estimate), num(e.std_error)]);
    };
    push(&r.a_t);
    push(&r.b_t);
    if let Some(c) = &r.c_t {
        push(c);
    }
    for c in &r.covariates {
        push(c);
    }
    push(&r.phi);
    if let Some(th) = &r.theta {
        push(th);
    }
    push(&r.mean_lag);
    t.rows.push(vec![json!("n"), num(r.n as f64), Value::Null]);
    t.rows.push(vec![json!("T"), num(r.horizon as f64), Value::Null]);
    t
}

pub fn replication_table(out: &McOutput) -> Table {
    let mut t = Table::new(
        "replications",
        &["replication", "seed", "estimator", "estimate", "std_error", "truth", "error"],
    );
    for r in &out.rows {
        t.rows.push(vec![
            json!(r.replication),
            json!(r.seed.to_string()),
            json!(r.estimator),
            opt(r.estimate),
            opt(r.std_error),
            num(r.truth),
            r.error.as_ref().map_or(Value::Null, |e| json!(e)),
        ]);
    }
    t
}

pub fn summary_table(out: &McOutput) -> Table {
    let mut t = Table::new(
        "summary",
        &[
            "estimator", "quantity", "replications", "failures", "truth", "mean", "bias", "sd", "mc_se",
            "mean_se", "coverage", "oracle", "predicted_bias", "oracle_z",
        ],
    );
    for s in &out.summaries {
        let (reg, pb, z) = match &s.oracle {
            Some(o) => (json!(o.regime), num(o.predicted_bias), num(o.z)),
            None => (Value::Null, Value::Null, Value::Null),
        };
        t.rows.push(vec![
            json!(s.estimator),
            json!(s.quantity),
            json!(s.replications),
            json!(s.failures),
            num(s.truth),
            num(s.mean),
            num(s.bias),
            num(s.sd),
            num(s.mc_se),
            num(s.mean_se),
            num(s.coverage),
            reg,
            pb,
            z,
        ]);
    }
    t
}

fn run_simulate(cfg: &RunConfig, out: &Path, prov: &Provenance, jobs: Option<usize>) -> Result<Vec<PathBuf>> {
    let dgp = cfg
        .dgp
        .clone()
        .ok_or_else(|| Error::InvalidSpec("config.dgp: required for simulate".into()))?;
    let replications = cfg
        .replications
        .ok_or_else(|| Error::InvalidSpec("config.replications: required for simulate".into()))?;
    if replications == 0 {
        return Err(Error::InvalidSpec("config.replications: must be at least 1".into()));
    }
    dgp.validate()?;
    let mut written = Vec::new();
    if cfg.export_panel {
        let mut spec = dgp.clone();
        spec.seed = derive_seed(prov.seed, 0);
        let (panel, truth) = simulate_panel(&spec)?;
        let p = out.join("panel.csv");
        save_long_csv(&panel, &p)?;
        written.push(p);
        let p = out.join("truth.json");
        write_file(&p, &(serde_json::to_string_pretty(&truth)? + "\n"))?;
        written.push(p);
    }
    if cfg.estimators.is_empty() {
        if !cfg.export_panel {
            return Err(Error::InvalidSpec("config.estimators: at least one estimator required".into()));
        }
        return Ok(written);
    }
    let mc = MonteCarloConfig {
        dgp,
        replications,
        estimators: cfg.estimators.iter().map(EstimatorEntry::to_mc).collect(),
    };
    let result = run_montecarlo(&mc, prov.seed, jobs)?;
    written.push(write_table(out, "replications", &replication_table(&result), cfg.format, prov)?);
    let summary = summary_table(&result);
    written.push(write_table(out, "summary", &summary, OutputFormat::Json, prov)?);
    if cfg.format != OutputFormat::Json {
        written.push(write_table(out, "summary", &summary, cfg.format, prov)?);
    }
    Ok(written)
}

/// One row per grid point; one column per regime.
pub fn bias_table(grid: &BiasGrid) -> Result<Table> {
    let check = |name: &str, ok: bool| {
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidSpec(format!("config.grid.{name}: invalid bounds")))
        }
    };
    check("rho", !grid.rho.is_empty() && grid.rho.iter().all(|r| r.abs() < 1.0))?;
    check("t", !grid.t.is_empty() && grid.t.iter().all(|&t| t >= 1))?;
    check("ratio", !grid.ratio.is_empty() && grid.ratio.iter().all(|&r| r >= 0.0))?;
    check("kappa2", !grid.kappa2.is_empty() && grid.kappa2.iter().all(|&k| k >= 0.0))?;
    check("a", !grid.a.is_empty() && grid.a.iter().all(|a| a.abs() < 1.0))?;
    let mut t = Table::new(
        "bias_table",
        &[
            "rho", "T", "ratio", "kappa2", "a", "barro", "barro_implied_rho", "twfe_stationary", "nickell",
            "twfe_trended_limit",
        ],
    );
    for &rho in &grid.rho {
        for &tt in &grid.t {
            for &ratio in &grid.ratio {
                for &k2 in &grid.kappa2 {
                    for &a in &grid.a {
                        let b = barro_asymptotic_bias(rho, tt, ratio).ok();
                        let s = twfe_bias_stationary_factor(rho, k2, a, 1.0)?;
                        let nk = nickell_bias_approx(rho, tt).ok();
                        t.rows.push(vec![
                            num(rho),
                            json!(tt),
                            num(ratio),
                            num(k2),
                            num(a),
                            opt(b.as_ref().map(|p| p.value)),
                            opt(b.and_then(|p| p.implied_rho)),
                            num(s.value),
                            opt(nk.map(|p| p.value)),
                            num(1.0),
                        ]);
                    }
                }
            }
        }
    }
    Ok(t)
}

fn run_bias_table(cfg: &RunConfig, out: &Path, prov: &Provenance) -> Result<Vec<PathBuf>> {
    let grid = cfg
        .grid
        .as_ref()
        .ok_or_else(|| Error::InvalidSpec("config.grid: required for bias-table".into()))?;
    Ok(vec![write_table(out, "bias_table", &bias_table(grid)?, cfg.format, prov)?])
}

fn run_two_step(cfg: &RunConfig, out: &Path, prov: &Provenance) -> Result<Vec<PathBuf>> {
    let ts = cfg
        .two_step
        .as_ref()
        .ok_or_else(|| Error::InvalidSpec("config.two_step: required for two-step".into()))?;
    if !ts.z_path.exists() {
        return Err(Error::InvalidSpec(format!(
            "config.two_step.z_path: {} does not exist",
            ts.z_path.display()
        )));
    }
    let panel = load_input(cfg)?;
    let z = load_z_csv(&ts.z_path, &ts.z_country_column)?;
    let (report, fi, tie) = two_step(&panel, &cfg.outcome, &ts.options, ts.source, &z)?;
    let label = if ts.source.jackknife() {
        format!("{}-HJK", ts.source.estimator())
    } else {
        ts.source.estimator().to_string()
    };
    let mut written = vec![write_table(out, "first_stage", &report_table(&label, &report), cfg.format, prov)?];
    let mut t = Table::new("filtered_intercepts", &["country", "intercept", "nobs"]);
    for ((c, v), n) in fi.countries.iter().zip(&fi.values).zip(&fi.nobs) {
        t.rows.push(vec![json!(c), num(*v), json!(n)]);
    }
    written.push(write_table(out, "filtered_intercepts", &t, cfg.format, prov)?);
    let mut t = Table::new("second_stage", &["term", "estimate", "std_error"]);
    for e in std::iter::once(&tie.intercept).chain(&tie.theta) {
        t.rows.push(vec![json!(e.name), num(e.estimate), num(e.std_error)]);
    }
    t.rows.push(vec![json!("n"), num(tie.n as f64), Value::Null]);
    written.push(write_table(out, "second_stage", &t, cfg.format, prov)?);
    Ok(written)
}

pub fn config_hash(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Runs one command; returns the files written.
pub fn execute(command: &Command) -> Result<Vec<PathBuf>> {
    let args = command.args();
    let bytes = fs::read(&args.config).map_err(|e| Error::io(&args.config, e))?;
    let text = String::from_utf8(bytes.clone())
        .map_err(|_| Error::InvalidSpec(format!("{}: not valid UTF-8", args.config.display())))?;
    let mut cfg = RunConfig::from_json(&text)?;
    if let Some(base) = args.config.parent() {
        cfg.rebase(base);
    }
    if args.jobs == Some(0) {
        return Err(Error::InvalidSpec("--jobs must be at least 1".into()));
    }
    let prov = Provenance {
        config_sha256: config_hash(&bytes),
        seed: args.seed.or(cfg.seed).unwrap_or(0),
    };
    fs::create_dir_all(&args.out).map_err(|e| Error::io(&args.out, e))?;
    let body = || match command {
        Command::Estimate(_) => run_estimate(&cfg, &args.out, &prov),
        Command::Simulate(_) => run_simulate(&cfg, &args.out, &prov, args.jobs),
        Command::BiasTable(_) => run_bias_table(&cfg, &args.out, &prov),
        Command::TwoStep(_) => run_two_step(&cfg, &args.out, &prov),
    };
    match args.jobs {
        Some(j) => rayon::ThreadPoolBuilder::new()
            .num_threads(j)
            .build()
            .map_err(|e| Error::InvalidSpec(format!("thread pool: {e}")))?
            .install(body),
        None => body(),
    }
}

/// Writes `error.txt` into the output directory when possible.
pub fn write_diagnostic(out: &Path, err: &Error) {
    if fs::create_dir_all(out).is_ok() {
        let _ = fs::write(out.join("error.txt"), format!("error: {err}\n"));
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_point_grid() {
        let g = BiasGrid { rho: vec![0.8], t: vec![10], ratio: vec![1.0], kappa2: vec![0.0], a: vec![0.5] };
        let t = bias_table(&g).unwrap();
        assert_eq!(t.rows.len(), 1);
        assert!((t.rows[0][5].as_f64().unwrap() - 0.803).abs() < 5e-4);
        assert_eq!(t.rows[0][7].as_f64().unwrap(), 0.0);
        let bad = BiasGrid { rho: vec![1.2], ..g };
        assert!(bias_table(&bad).is_err());
    }

    #[test]
    fn csv_embeds_provenance() {
        let mut t = Table::new("x", &["a"]);
        t.rows.push(vec![num(1.5)]);
        let p = Provenance { config_sha256: "ab".into(), seed: 7 };
        assert_eq!(t.render(OutputFormat::Csv, &p).unwrap(), "a,config_sha256,seed\n1.5,ab,7\n");
        assert!(t.render(OutputFormat::Markdown, &p).unwrap().contains("seed: 7"));
    }
}
