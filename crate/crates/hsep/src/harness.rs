//! Experiment plumbing: `key = value` configs, replica scheduling, streaming
//! statistics with min/max tracking, and deterministic CSV/JSON output.
//!
//! Determinism contract: given the same resolved spec (including seed), every
//! output file is byte-identical across runs. Replicas draw from
//! counter-derived streams keyed by `(master seed, replica index)`, so adding
//! replicas extends — never reshuffles — the ensemble; parallel scheduling
//! collects per-replica results in index order before aggregation.

use crate::dynamics::run_trajectory;
use crate::env::{stream_seed, BernoulliEnv};
use crate::kernels::{base_masses, kernel_scaling_probe, tilted_kernel};
use crate::model::{derive_constants, DerivedConstants, ModelParams};
use crate::she::{compare_one_point, solve_she, SheGrid, SheIc};
use crate::stats::{log_log_fit, StreamingMoments};
use crate::transform::{
    make_near_equilibrium_ic, make_step_ic, z_tilde_factor, ScaledReading, ScaledSampler,
};
use crate::verify::{self, tol};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};
use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use thiserror::Error;

/// Code version embedded in every output header.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("config field `{field}`: {msg}")]
    Field { field: String, msg: String },
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

fn field_err(field: &str, msg: impl Into<String>) -> HarnessError {
    HarnessError::Field { field: field.to_string(), msg: msg.into() }
}

/// Flat `key = value` configuration. `#` starts a comment; later duplicate
/// keys override earlier ones; keys are case-sensitive.
#[derive(Debug, Clone, Default)]
pub struct Config {
    map: BTreeMap<String, String>,
}

impl Config {
    pub fn parse(text: &str) -> Result<Self, HarnessError> {
        let mut map = BTreeMap::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| HarnessError::Syntax { line: i + 1, text: raw.to_string() })?;
            let key = k.trim();
            if key.is_empty() {
                return Err(HarnessError::Syntax { line: i + 1, text: raw.to_string() });
            }
            map.insert(key.to_string(), v.trim().to_string());
        }
        Ok(Config { map })
    }

    pub fn from_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })?;
        Self::parse(&text)
    }

    /// Insert or override a key (used for CLI flag overrides).
    pub fn set(&mut self, key: &str, value: impl Into<String>) {
        self.map.insert(key.to_string(), value.into());
    }

    pub fn get(&self, key: &str) -> Option<&str> {
        self.map.get(key).map(|s| s.as_str())
    }

    pub fn f64_or(&self, key: &str, default: f64) -> Result<f64, HarnessError> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => s.parse().map_err(|_| field_err(key, format!("not a number: `{s}`"))),
        }
    }

    pub fn u64_or(&self, key: &str, default: u64) -> Result<u64, HarnessError> {
        match self.get(key) {
            None => Ok(default),
            Some(s) => {
                s.parse().map_err(|_| field_err(key, format!("not a nonnegative integer: `{s}`")))
            }
        }
    }

    pub fn str_or(&self, key: &str, default: &str) -> String {
        self.get(key).unwrap_or(default).to_string()
    }

    pub fn f64_list_or(&self, key: &str, default: &[f64]) -> Result<Vec<f64>, HarnessError> {
        match self.get(key) {
            None => Ok(default.to_vec()),
            Some(s) => s
                .split(',')
                .map(|p| {
                    p.trim()
                        .parse()
                        .map_err(|_| field_err(key, format!("not a number list: `{s}`")))
                })
                .collect(),
        }
    }
}

/// Streaming moments plus range tracking; merge is associative and
/// commutative, and a merged accumulator matches a single-pass one to
/// floating-point accumulation order.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StatsAccumulator {
    pub moments: StreamingMoments,
    pub min: f64,
    pub max: f64,
}

impl Default for StatsAccumulator {
    fn default() -> Self {
        StatsAccumulator {
            moments: StreamingMoments::new(),
            min: f64::INFINITY,
            max: f64::NEG_INFINITY,
        }
    }
}

impl StatsAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, x: f64) {
        self.moments.push(x);
        self.min = self.min.min(x);
        self.max = self.max.max(x);
    }

    pub fn merge(&mut self, other: &StatsAccumulator) {
        self.moments.merge(&other.moments);
        self.min = self.min.min(other.min);
        self.max = self.max.max(other.max);
    }

    pub fn summary(&self) -> Value {
        json!({
            "count": self.moments.count,
            "mean": self.moments.mean,
            "variance": self.moments.sample_variance(),
            "sem": self.moments.sem(),
            "skewness": self.moments.skewness(),
            "min": self.min,
            "max": self.max,
        })
    }
}

/// Initial-condition selector for particle ensembles.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IcKind {
    /// Every non-positive site occupied; the field is delta-calibrated.
    Step,
    /// Stationary-roughness random gaps around density `eps / log(1/rho)`.
    NearEquilibrium,
}

impl IcKind {
    fn parse(s: &str) -> Result<Self, HarnessError> {
        match s {
            "step" => Ok(IcKind::Step),
            "near-eq" | "near_eq" | "near-equilibrium" => Ok(IcKind::NearEquilibrium),
            other => Err(field_err("ic", format!("unknown initial condition `{other}`"))),
        }
    }

    fn name(self) -> &'static str {
        match self {
            IcKind::Step => "step",
            IcKind::NearEquilibrium => "near-eq",
        }
    }
}

/// Fully resolved experiment description; every run is a pure function of
/// this value.
#[derive(Debug, Clone)]
pub struct ExperimentSpec {
    pub nu: f64,
    pub alpha: f64,
    pub j_phases: u32,
    pub rho: f64,
    pub eps_list: Vec<f64>,
    pub ic: IcKind,
    pub replicas: u64,
    pub taus: Vec<f64>,
    pub rs: Vec<f64>,
    pub suite: String,
    pub seed: u64,
    pub out_dir: PathBuf,
    /// Number of leading replicas whose raw readings are written to CSV.
    pub paths_limit: u64,
    pub she_dt: f64,
    pub she_dx: f64,
    pub she_half_width: f64,
    pub she_ic: String,
}

impl ExperimentSpec {
    pub fn from_config(cfg: &Config) -> Result<Self, HarnessError> {
        let spec = ExperimentSpec {
            nu: cfg.f64_or("nu", 0.25)?,
            alpha: cfg.f64_or("alpha", 1.0)?,
            j_phases: cfg.u64_or("j_phases", 1)? as u32,
            rho: cfg.f64_or("rho", 0.5)?,
            eps_list: cfg.f64_list_or("eps", &[0.2])?,
            ic: IcKind::parse(&cfg.str_or("ic", "step"))?,
            replicas: cfg.u64_or("replicas", 100)?,
            taus: cfg.f64_list_or("taus", &[0.5])?,
            rs: cfg.f64_list_or("rs", &[0.0])?,
            suite: cfg.str_or("suite", "identities"),
            seed: cfg.u64_or("seed", 1)?,
            out_dir: PathBuf::from(cfg.str_or("out", "out")),
            paths_limit: cfg.u64_or("paths_limit", 8)?,
            she_dt: cfg.f64_or("she_dt", 5e-4)?,
            she_dx: cfg.f64_or("she_dx", 1.0 / 30.0)?,
            she_half_width: cfg.f64_or("she_half_width", 4.0)?,
            she_ic: cfg.str_or("she_ic", "delta"),
        };
        spec.validate()?;
        Ok(spec)
    }

    fn validate(&self) -> Result<(), HarnessError> {
        if self.replicas < 1 {
            return Err(field_err("replicas", "replica count must be >= 1"));
        }
        if self.eps_list.is_empty() {
            return Err(field_err("eps", "epsilon list must be non-empty"));
        }
        for &e in &self.eps_list {
            if !(e > 0.0 && e < 1.0) {
                return Err(field_err("eps", format!("epsilon {e} outside (0, 1)")));
            }
        }
        if !(self.rho > 0.0 && self.rho < 1.0) {
            return Err(field_err("rho", format!("density {} outside (0, 1)", self.rho)));
        }
        if !(0.0..1.0).contains(&self.nu) {
            return Err(field_err("nu", format!("nu {} outside [0, 1)", self.nu)));
        }
        if self.alpha <= 0.0 {
            return Err(field_err("alpha", "alpha must be positive"));
        }
        if self.j_phases < 1 {
            return Err(field_err("j_phases", "period must be >= 1"));
        }
        if self.taus.is_empty() || self.taus.iter().any(|t| !t.is_finite() || *t < 0.0) {
            return Err(field_err("taus", "times must be finite and nonnegative"));
        }
        if self.rs.is_empty() || self.rs.iter().any(|r| !r.is_finite()) {
            return Err(field_err("rs", "positions must be finite"));
        }
        if !(self.she_dt > 0.0 && self.she_dx > 0.0 && self.she_dt <= self.she_dx * self.she_dx / 2.0)
        {
            return Err(field_err("she_dt", "stability needs 0 < she_dt <= she_dx^2/2"));
        }
        for &r in &self.rs {
            if r.abs() > self.she_half_width {
                return Err(field_err(
                    "rs",
                    format!("position {r} outside the solver domain +-{}", self.she_half_width),
                ));
            }
        }
        Ok(())
    }

    fn params_at(&self, eps: f64) -> Result<ModelParams, HarnessError> {
        ModelParams::from_eps(eps, self.nu, self.alpha, self.j_phases, self.rho)
            .map_err(|e| field_err("eps", e.to_string()))
    }

    /// Resolved parameters in a fixed order for output headers.
    pub fn echo_pairs(&self) -> Vec<(String, String)> {
        let fmt_list = |xs: &[f64]| {
            xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
        };
        vec![
            ("nu".into(), self.nu.to_string()),
            ("alpha".into(), self.alpha.to_string()),
            ("j_phases".into(), self.j_phases.to_string()),
            ("rho".into(), self.rho.to_string()),
            ("eps".into(), fmt_list(&self.eps_list)),
            ("ic".into(), self.ic.name().into()),
            ("replicas".into(), self.replicas.to_string()),
            ("taus".into(), fmt_list(&self.taus)),
            ("rs".into(), fmt_list(&self.rs)),
            ("suite".into(), self.suite.clone()),
            ("seed".into(), self.seed.to_string()),
            ("paths_limit".into(), self.paths_limit.to_string()),
            ("she_dt".into(), self.she_dt.to_string()),
            ("she_dx".into(), self.she_dx.to_string()),
            ("she_half_width".into(), self.she_half_width.to_string()),
            ("she_ic".into(), self.she_ic.clone()),
        ]
    }

    fn echo_json(&self) -> Value {
        Value::Object(
            self.echo_pairs().into_iter().map(|(k, v)| (k, Value::String(v))).collect(),
        )
    }
}

/// Everything a run produced: written files, a machine-readable summary, and
/// the overall verdict.
#[derive(Debug)]
pub struct Bundle {
    pub pass: bool,
    pub files: Vec<PathBuf>,
    pub summary: Value,
}

fn write_text(path: &Path, text: &str) -> Result<(), HarnessError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)
            .map_err(|source| HarnessError::Io { path: dir.to_path_buf(), source })?;
    }
    std::fs::write(path, text)
        .map_err(|source| HarnessError::Io { path: path.to_path_buf(), source })
}

fn csv_header(spec: &ExperimentSpec, columns: &[&str]) -> String {
    let echo = spec
        .echo_pairs()
        .iter()
        .map(|(k, v)| format!("{k} = {v}"))
        .collect::<Vec<_>>()
        .join(", ");
    format!("# version = {VERSION}\n# {echo}\n{}\n", columns.join(","))
}

fn write_json(spec: &ExperimentSpec, path: &Path, body: Value) -> Result<(), HarnessError> {
    let wrapped = json!({
        "version": VERSION,
        "parameters": spec.echo_json(),
        "report": body,
    });
    let mut text = serde_json::to_string_pretty(&wrapped).expect("json serialization");
    text.push('\n');
    write_text(path, &text)
}

/// Per-replica scaled-field readings for one epsilon: the ensemble
/// statistics of `Z` and `log Z` at every `(tau, r)` grid point, plus the
/// raw readings of the first `paths_limit` replicas. For the step initial
/// condition the field is delta-calibrated (`Ztilde`).
struct EnsembleOutput {
    readings: Vec<(u64, Vec<ScaledReading>)>,
    z_stats: Vec<StatsAccumulator>,
    h_stats: Vec<StatsAccumulator>,
}

fn run_scaled_ensemble(
    spec: &ExperimentSpec,
    params: &ModelParams,
    dc: &DerivedConstants,
) -> EnsembleOutput {
    let factor = match spec.ic {
        IcKind::Step => z_tilde_factor(params, dc),
        IcKind::NearEquilibrium => 1.0,
    };
    let probe = ScaledSampler::new(params, dc, &spec.taus, &spec.rs);
    let t_end = probe.last_time();
    // Particle-index coverage over every recorded time.
    let mut lo = i64::MAX;
    let mut hi = i64::MIN;
    for t in 0..=t_end {
        if probe.wants(t) {
            let (l, h) = probe.window(t);
            lo = lo.min(l);
            hi = hi.max(h);
        }
    }
    let per_rep: Vec<Vec<ScaledReading>> = (0..spec.replicas)
        .into_par_iter()
        .map(|rep| {
            let mut sampler = ScaledSampler::new(params, dc, &spec.taus, &spec.rs);
            let mut cfg = match spec.ic {
                IcKind::Step => make_step_ic((hi + 4).max(1) as usize),
                IcKind::NearEquilibrium => {
                    let span_lo =
                        (lo - crate::dynamics::left_influence_width(params) as i64 - 8).min(-1);
                    let span_hi = (hi + 8).max(1);
                    let mut rng =
                        ChaCha8Rng::seed_from_u64(stream_seed(spec.seed, rep, 0x9c_1c));
                    make_near_equilibrium_ic(params, span_lo, span_hi, &mut rng)
                }
            };
            let env = BernoulliEnv::new(spec.seed, rep);
            sampler.record(0, &cfg);
            run_trajectory(&mut cfg, params, &env, 0, t_end, |t, pre, _| {
                sampler.record(t, pre);
            });
            sampler.record(t_end, &cfg);
            let mut rows = sampler.finish();
            for r in rows.iter_mut() {
                r.z *= factor;
                r.h = r.z.ln();
            }
            rows
        })
        .collect();
    let grid_len = spec.taus.len() * spec.rs.len();
    let mut z_stats = vec![StatsAccumulator::new(); grid_len];
    let mut h_stats = vec![StatsAccumulator::new(); grid_len];
    for rows in &per_rep {
        for (i, r) in rows.iter().enumerate() {
            z_stats[i].push(r.z);
            h_stats[i].push(r.h);
        }
    }
    let readings = per_rep
        .into_iter()
        .enumerate()
        .take(spec.paths_limit as usize)
        .map(|(i, rows)| (i as u64, rows))
        .collect();
    EnsembleOutput { readings, z_stats, h_stats }
}

/// `simulate`: particle ensembles across the epsilon list, scaled-field
/// readings on the `(tau, r)` grid, per-point statistics, raw paths for the
/// first replicas.
pub fn run_simulate(spec: &ExperimentSpec) -> Result<Bundle, HarnessError> {
    let mut paths_csv = csv_header(spec, &["eps", "replica", "tau", "r", "z", "log_z"]);
    let mut stats_csv = csv_header(
        spec,
        &[
            "eps", "tau", "r", "count", "mean_z", "var_z", "min_z", "max_z", "mean_log_z",
            "var_log_z",
        ],
    );
    let mut summary = Vec::new();
    for &eps in &spec.eps_list {
        let params = spec.params_at(eps)?;
        let dc = derive_constants(&params);
        let out = run_scaled_ensemble(spec, &params, &dc);
        for (rep, rows) in &out.readings {
            for r in rows {
                let _ = writeln!(
                    paths_csv,
                    "{eps},{rep},{},{},{},{}",
                    r.tau, r.r, r.z, r.h
                );
            }
        }
        let mut grid_summaries = Vec::new();
        for (i, (zs, hs)) in out.z_stats.iter().zip(out.h_stats.iter()).enumerate() {
            let tau = spec.taus[i / spec.rs.len()];
            let r = spec.rs[i % spec.rs.len()];
            let _ = writeln!(
                stats_csv,
                "{eps},{tau},{r},{},{},{},{},{},{},{}",
                zs.moments.count,
                zs.moments.mean,
                zs.moments.sample_variance(),
                zs.min,
                zs.max,
                hs.moments.mean,
                hs.moments.sample_variance(),
            );
            grid_summaries.push(json!({
                "tau": tau, "r": r, "z": zs.summary(), "log_z": hs.summary(),
            }));
        }
        summary.push(json!({ "eps": eps, "grid": grid_summaries }));
    }
    let paths_path = spec.out_dir.join("paths.csv");
    let stats_path = spec.out_dir.join("stats.csv");
    let summary_path = spec.out_dir.join("summary.json");
    write_text(&paths_path, &paths_csv)?;
    write_text(&stats_path, &stats_csv)?;
    write_json(spec, &summary_path, json!({ "ensembles": summary }))?;
    Ok(Bundle {
        pass: true,
        files: vec![paths_path, stats_path, summary_path],
        summary: json!({ "ensembles_run": spec.eps_list.len() }),
    })
}

/// `she`: reference-solver ensemble on the `(tau, r)` grid with the
/// mean-preservation invariant checked against the exact expectation.
pub fn run_she(spec: &ExperimentSpec) -> Result<Bundle, HarnessError> {
    let grid = SheGrid::new(spec.she_dt, spec.she_dx, spec.she_half_width)
        .map_err(|e| field_err("she_dt", e.to_string()))?;
    let ic = match spec.she_ic.as_str() {
        "delta" => SheIc::Delta,
        "constant" => SheIc::Constant(1.0),
        other => return Err(field_err("she_ic", format!("unknown initial condition `{other}`"))),
    };
    let taus = &spec.taus;
    let per_rep: Vec<Vec<Vec<f64>>> = (0..spec.replicas)
        .into_par_iter()
        .map(|rep| {
            let path = solve_she(&ic, &grid, taus, 1.0, spec.seed, rep).expect("validated grid");
            path.rows
        })
        .collect();
    let mut paths_csv = csv_header(spec, &["replica", "tau", "r", "z"]);
    let grid_len = taus.len() * spec.rs.len();
    let mut stats = vec![StatsAccumulator::new(); grid_len];
    for (rep, rows) in per_rep.iter().enumerate() {
        for (ti, row) in rows.iter().enumerate() {
            for (ri, &r) in spec.rs.iter().enumerate() {
                let v = row[grid.index_of(r)];
                stats[ti * spec.rs.len() + ri].push(v);
                if (rep as u64) < spec.paths_limit {
                    let _ = writeln!(paths_csv, "{rep},{},{r},{v}", taus[ti]);
                }
            }
        }
    }
    // Mean preservation: E Z(tau, r) is the heat semigroup applied to the
    // initial data (heat kernel for delta, 1 for constant).
    let mut stats_csv =
        csv_header(spec, &["tau", "r", "count", "mean", "var", "min", "max", "mean_z_score"]);
    let mut worst_z = 0.0_f64;
    let mut rows_json = Vec::new();
    for (i, acc) in stats.iter().enumerate() {
        let tau = taus[i / spec.rs.len()];
        let r = spec.rs[i % spec.rs.len()];
        let expected = match ic {
            SheIc::Delta => {
                if tau > 0.0 {
                    crate::she::heat_kernel_value(tau, r)
                } else {
                    continue;
                }
            }
            SheIc::Constant(v) => v,
            SheIc::Profile(_) => unreachable!(),
        };
        let z_score = (acc.moments.mean - expected) / acc.moments.sem();
        worst_z = worst_z.max(z_score.abs());
        let _ = writeln!(
            stats_csv,
            "{tau},{r},{},{},{},{},{},{z_score}",
            acc.moments.count,
            acc.moments.mean,
            acc.moments.sample_variance(),
            acc.min,
            acc.max,
        );
        rows_json.push(json!({
            "tau": tau, "r": r, "stats": acc.summary(),
            "expected_mean": expected, "mean_z_score": z_score,
        }));
    }
    let pass = worst_z <= tol::Z_BAND;
    let paths_path = spec.out_dir.join("she_paths.csv");
    let stats_path = spec.out_dir.join("she_stats.csv");
    let summary_path = spec.out_dir.join("she_summary.json");
    write_text(&paths_path, &paths_csv)?;
    write_text(&stats_path, &stats_csv)?;
    write_json(
        spec,
        &summary_path,
        json!({
            "grid_points": rows_json,
            "worst_mean_z_score": worst_z,
            "band": tol::Z_BAND,
            "pass": pass,
        }),
    )?;
    Ok(Bundle {
        pass,
        files: vec![paths_path, stats_path, summary_path],
        summary: json!({ "worst_mean_z_score": worst_z, "pass": pass }),
    })
}

/// `compare`: one-point log-field statistics of the delta-calibrated
/// particle ensemble against the reference-solver ensemble at the first
/// `(tau, r)` grid point, across the epsilon list; the gaps must shrink as
/// epsilon decreases and the final variance gap must close to
/// [`tol::COMPARE_VARIANCE_REL`].
pub fn run_compare(spec: &ExperimentSpec) -> Result<Bundle, HarnessError> {
    let tau = spec.taus[0];
    let r = spec.rs[0];
    if tau <= 0.0 {
        return Err(field_err("taus", "comparison time must be positive"));
    }
    // One shared reference ensemble (the target does not depend on epsilon).
    let grid = SheGrid::new(spec.she_dt, spec.she_dx, spec.she_half_width)
        .map_err(|e| field_err("she_dt", e.to_string()))?;
    let she_vals: Vec<f64> = (0..spec.replicas)
        .into_par_iter()
        .map(|rep| {
            let path =
                solve_she(&SheIc::Delta, &grid, &[tau], 1.0, spec.seed ^ 0x5_4e0, rep)
                    .expect("validated grid");
            path.rows[0][grid.index_of(r)].max(f64::MIN_POSITIVE).ln()
        })
        .collect();
    let mut she_acc = StreamingMoments::new();
    for v in she_vals {
        she_acc.push(v);
    }
    let mut eps_sorted = spec.eps_list.clone();
    eps_sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut reports = Vec::new();
    let mut mean_gaps = Vec::new();
    let mut var_gaps = Vec::new();
    let mut compare_spec = spec.clone();
    compare_spec.ic = IcKind::Step;
    compare_spec.taus = vec![tau];
    compare_spec.rs = vec![r];
    for &eps in &eps_sorted {
        let params = compare_spec.params_at(eps)?;
        let dc = derive_constants(&params);
        let out = run_scaled_ensemble(&compare_spec, &params, &dc);
        let particle = out.h_stats[0].moments;
        let rep = compare_one_point(&particle, &she_acc, tau, r, 0.5);
        mean_gaps.push(rep.mean_abs_diff);
        var_gaps.push((rep.var_particle - rep.var_she).abs() / rep.var_she);
        reports.push(json!({
            "eps": eps,
            "report": serde_json::to_value(&rep).expect("report json"),
        }));
    }
    // Trend: gaps non-increasing in eps (mean gaps within MC slack), final
    // variance gap under the pinned bound.
    let mean_slack = 2.0 * she_acc.sem();
    let mean_trend =
        mean_gaps.windows(2).all(|w| w[1] <= w[0] + mean_slack);
    let var_trend = var_gaps.windows(2).all(|w| w[1] <= w[0]);
    let final_var_ok = *var_gaps.last().unwrap() <= tol::COMPARE_VARIANCE_REL;
    let pass = mean_trend && var_trend && final_var_ok;
    let summary = json!({
        "tau": tau, "r": r,
        "she_log_stats": {
            "mean": she_acc.mean, "variance": she_acc.sample_variance(),
            "sem": she_acc.sem(), "skewness": she_acc.skewness(),
        },
        "per_eps": reports,
        "mean_gaps": mean_gaps,
        "variance_gaps": var_gaps,
        "mean_trend_ok": mean_trend,
        "variance_trend_ok": var_trend,
        "final_variance_gap_ok": final_var_ok,
        "final_variance_bound": tol::COMPARE_VARIANCE_REL,
        "pass": pass,
    });
    let path = spec.out_dir.join("compare.json");
    write_json(spec, &path, summary.clone())?;
    Ok(Bundle { pass, files: vec![path], summary })
}

/// `probe-kernels`: dump transition-kernel tables (offset, then one weight
/// per line) and run the scaling probe along a doubling ladder of time
/// separations.
pub fn run_probe_kernels(spec: &ExperimentSpec) -> Result<Bundle, HarnessError> {
    let mut files = Vec::new();
    let mut pass = true;
    let mut probes = Vec::new();
    for &eps in &spec.eps_list {
        let params = spec.params_at(eps)?;
        let dc = derive_constants(&params);
        // Table dump for each phase of the current period.
        let mut dump = String::new();
        let _ = writeln!(dump, "# version = {VERSION}");
        let _ = writeln!(
            dump,
            "# eps = {eps}, nu = {}, alpha = {}, j_phases = {}, rho = {}",
            spec.nu, spec.alpha, spec.j_phases, spec.rho
        );
        for s in 0..spec.j_phases as u64 {
            let masses = base_masses(&params, s);
            let table = tilted_kernel(&params, &dc, s);
            let _ = writeln!(dump, "phase {s}");
            let _ = writeln!(dump, "base_masses {}", fmt_row(&masses));
            let _ = writeln!(dump, "left_edge {}", table.left_edge);
            let _ = writeln!(dump, "offset {}", table.j_offset);
            for (j, w) in table.iter() {
                let _ = writeln!(dump, "{j} {w}");
            }
        }
        let dump_path = spec.out_dir.join(format!("kernel_table_eps{eps}.txt"));
        write_text(&dump_path, &dump)?;
        files.push(dump_path);
        if spec.j_phases == 1 {
            let deltas: Vec<u64> = (4..=12).map(|k| 1u64 << k).collect();
            let rows = kernel_scaling_probe(&params, &dc, &deltas, 1.0, 2.0);
            let xs: Vec<f64> = rows.iter().map(|row| row.delta as f64).collect();
            let sups: Vec<f64> = rows.iter().map(|row| row.sup).collect();
            let fit = log_log_fit(&xs, &sups);
            let sup_ok = fit.slope >= tol::KERNEL_SUP_EXPONENT.0
                && fit.slope <= tol::KERNEL_SUP_EXPONENT.1;
            // Exponential moments are only controlled inside one macroscopic
            // time unit (step count eps^-3); past that they grow and the
            // decay bracket above is the meaningful statistic.
            let exp_window = eps.powi(-3);
            let window_sums: Vec<f64> = rows
                .iter()
                .filter(|row| (row.delta as f64) <= exp_window)
                .map(|row| row.exp_sum)
                .collect();
            let exp_bounded = match (
                window_sums.iter().cloned().reduce(f64::min),
                window_sums.iter().cloned().reduce(f64::max),
            ) {
                (Some(lo), Some(hi)) => hi <= tol::KERNEL_EXP_RATIO * lo,
                _ => true,
            };
            pass &= sup_ok && exp_bounded;
            probes.push(json!({
                "eps": eps,
                "rows": serde_json::to_value(&rows).expect("rows json"),
                "sup_decay_exponent": fit.slope,
                "sup_decay_r2": fit.r2,
                "sup_bracket": tol::KERNEL_SUP_EXPONENT,
                "sup_ok": sup_ok,
                "exp_window": exp_window,
                "exp_sum_bounded": exp_bounded,
            }));
        }
    }
    let report_path = spec.out_dir.join("kernel_probe.json");
    write_json(spec, &report_path, json!({ "probes": probes, "pass": pass }))?;
    files.push(report_path);
    Ok(Bundle { pass, files, summary: json!({ "pass": pass }) })
}

fn fmt_row(xs: &[f64]) -> String {
    xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(" ")
}

/// One verification suite's outcome: identifier, resolved parameters, the
/// measured residuals or exponents, and the verdict.
#[derive(Debug, Clone, Serialize)]
pub struct SuiteReport {
    pub id: String,
    pub parameters: Value,
    pub metrics: Value,
    pub pass: bool,
}

/// `verify`: run the named suite (or `all`) and write one JSON report.
/// Sizes here favour CLI turnaround; the library's acceptance tests run the
/// same checks at full criterion scale.
pub fn run_verify(spec: &ExperimentSpec) -> Result<Bundle, HarnessError> {
    let known = [
        "coupling",
        "kernels",
        "identities",
        "decomposition",
        "qv-approx",
        "martingale",
        "probes",
    ];
    let selected: Vec<&str> = if spec.suite == "all" {
        known.to_vec()
    } else if known.contains(&spec.suite.as_str()) {
        vec![spec.suite.as_str()]
    } else {
        return Err(field_err(
            "suite",
            format!("unknown suite `{}` (expected one of {known:?} or `all`)", spec.suite),
        ));
    };
    let mut reports = Vec::new();
    for name in selected {
        reports.push(match name {
            "coupling" => suite_coupling(spec)?,
            "kernels" => suite_kernels(spec)?,
            "identities" => suite_identities(spec)?,
            "decomposition" => suite_decomposition(spec)?,
            "qv-approx" => suite_qv_approx(spec)?,
            "martingale" => suite_martingale(spec)?,
            "probes" => suite_probes(spec)?,
            _ => unreachable!(),
        });
    }
    let pass = reports.iter().all(|r| r.pass);
    let path = spec.out_dir.join("verify_report.json");
    write_json(
        spec,
        &path,
        json!({
            "suites": serde_json::to_value(&reports).expect("suite json"),
            "pass": pass,
        }),
    )?;
    let summary = json!({
        "suites": reports.iter().map(|r| json!({"id": r.id, "pass": r.pass})).collect::<Vec<_>>(),
        "pass": pass,
    });
    Ok(Bundle { pass, files: vec![path], summary })
}

/// Random strictly-decreasing configuration for identity spot checks.
fn random_config(rng: &mut ChaCha8Rng, max_particles: usize) -> crate::dynamics::ParticleConfig {
    let count = rng.gen_range(2..=max_particles.max(2));
    let min_index = rng.gen_range(-3_i64..=3);
    let mut y = Vec::with_capacity(count);
    let mut pos = rng.gen_range(-5_i64..=5);
    for _ in 0..count {
        y.push(pos);
        pos -= 1 + rng.gen_range(0..6);
    }
    crate::dynamics::ParticleConfig::new(min_index, y)
}

fn random_params(rng: &mut ChaCha8Rng) -> ModelParams {
    loop {
        let q = rng.gen_range(0.05..0.95);
        let nu = rng.gen_range(0.0..q);
        let alpha = rng.gen_range(0.1..3.0);
        let j = rng.gen_range(1..=4);
        let rho = rng.gen_range(0.2..0.9);
        if let Ok(p) = ModelParams::new(q, nu, alpha, j, rho) {
            return p;
        }
    }
}

fn suite_coupling(spec: &ExperimentSpec) -> Result<SuiteReport, HarnessError> {
    let trials = spec.replicas.max(1).min(2000);
    let steps = 20;
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(spec.seed, 0, 0xc0_91));
    let mut mismatches = 0_u64;
    for trial in 0..trials {
        let params = random_params(&mut rng);
        let cfg0 = random_config(&mut rng, 40);
        let env = BernoulliEnv::new(spec.seed, trial);
        let mut seq = cfg0.clone();
        let mut par = cfg0.clone();
        for s in 0..steps {
            crate::dynamics::sequential_step(&mut seq, &params, &env, s);
            let rec = crate::dynamics::parallel_decisions(&par, &params, &env, s);
            crate::dynamics::apply_step(&mut par, &rec);
            if seq != par {
                mismatches += 1;
                break;
            }
        }
    }
    Ok(SuiteReport {
        id: "coupling".into(),
        parameters: json!({ "trials": trials, "steps": steps, "seed": spec.seed }),
        metrics: json!({ "mismatches": mismatches }),
        pass: mismatches == 0,
    })
}

fn suite_kernels(spec: &ExperimentSpec) -> Result<SuiteReport, HarnessError> {
    let tuples = spec.replicas.max(1).min(500);
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(spec.seed, 0, 0x4e_71));
    let mut worst_mass = 0.0_f64;
    let mut worst_mean = 0.0_f64;
    let mut worst_var = 0.0_f64;
    for _ in 0..tuples {
        let params = random_params(&mut rng);
        let dc = derive_constants(&params);
        for s in 0..params.j_phases as u64 {
            let table = tilted_kernel(&params, &dc, s);
            worst_mass = worst_mass.max((table.mass() - 1.0).abs());
            worst_mean = worst_mean.max(table.mean().abs());
            let want_var = dc.r_star * dc.r_star * dc.sigma[(s % params.j_phases as u64) as usize];
            worst_var = worst_var.max((table.variance() - want_var).abs());
        }
    }
    let pass = worst_mass <= tol::KERNEL_MASS_ABS
        && worst_mean <= tol::KERNEL_MEAN_ABS
        && worst_var <= tol::KERNEL_VARIANCE_ABS;
    Ok(SuiteReport {
        id: "kernels".into(),
        parameters: json!({ "tuples": tuples, "seed": spec.seed }),
        metrics: json!({
            "worst_mass_gap": worst_mass,
            "worst_mean": worst_mean,
            "worst_variance_gap": worst_var,
            "tolerances": [tol::KERNEL_MASS_ABS, tol::KERNEL_MEAN_ABS, tol::KERNEL_VARIANCE_ABS],
        }),
        pass,
    })
}

fn suite_identities(spec: &ExperimentSpec) -> Result<SuiteReport, HarnessError> {
    let trials = spec.replicas.max(1).min(500);
    let mut rng = ChaCha8Rng::seed_from_u64(stream_seed(spec.seed, 0, 0x1d_37));
    let mut worst_dual = 0.0_f64;
    let mut worst_cov = 0.0_f64;
    let mut worst_qv = 0.0_f64;
    for _ in 0..trials {
        let params = random_params(&mut rng);
        let dc = derive_constants(&params);
        let cfg = random_config(&mut rng, 14);
        let s = rng.gen_range(0..3 * params.j_phases as u64);
        worst_dual = worst_dual.max(verify::check_duality_evolution(&cfg, &params, s).max_rel);
        worst_cov =
            worst_cov.max(verify::check_conditional_covariance(&cfg, &params, s, 10).max_abs);
        let hi = cfg.max_index();
        let lo = cfg.min_index();
        if hi > lo {
            let n1 = rng.gen_range(lo..=hi);
            let n2 = rng.gen_range(lo..=hi);
            let rep = verify::check_qv_identity(&cfg, &params, &dc, s, n1, n2);
            worst_qv = worst_qv.max(rep.rel_diff);
        }
    }
    let pass = worst_dual <= tol::DUALITY_REL
        && worst_cov <= tol::COVARIANCE_ABS
        && worst_qv <= tol::QV_IDENTITY_REL;
    Ok(SuiteReport {
        id: "identities".into(),
        parameters: json!({ "trials": trials, "seed": spec.seed }),
        metrics: json!({
            "worst_duality_rel": worst_dual,
            "worst_covariance_abs": worst_cov,
            "worst_qv_rel": worst_qv,
            "tolerances": [tol::DUALITY_REL, tol::COVARIANCE_ABS, tol::QV_IDENTITY_REL],
        }),
        pass,
    })
}

fn suite_decomposition(spec: &ExperimentSpec) -> Result<SuiteReport, HarnessError> {
    let reals = spec.replicas.max(1).min(100) as u64;
    let mut rows = Vec::new();
    let mut pass = true;
    for &eps in &spec.eps_list {
        let params = spec.params_at(eps)?;
        let dc = derive_constants(&params);
        for ic in [IcKind::Step, IcKind::NearEquilibrium] {
            let mut worst = 0.0_f64;
            for rep in 0..reals {
                let env = BernoulliEnv::new(spec.seed, rep);
                let cfg0 = match ic {
                    IcKind::Step => make_step_ic(140),
                    IcKind::NearEquilibrium => {
                        let mut rng =
                            ChaCha8Rng::seed_from_u64(stream_seed(spec.seed, rep, 0x9c_1c));
                        make_near_equilibrium_ic(&params, -160, 80, &mut rng)
                    }
                };
                let (n_lo, n_hi) = match ic {
                    IcKind::Step => (20, 80),
                    IcKind::NearEquilibrium => (-60, 40),
                };
                let rep =
                    verify::check_decomposition(&params, &dc, &cfg0, &env, 2, 10, n_lo, n_hi);
                worst = worst.max(rep.max_rel_residual);
            }
            pass &= worst <= tol::DECOMPOSITION_REL;
            rows.push(json!({
                "eps": eps, "ic": ic.name(), "worst_rel_residual": worst,
            }));
        }
    }
    Ok(SuiteReport {
        id: "decomposition".into(),
        parameters: json!({
            "eps": spec.eps_list, "realizations": reals, "seed": spec.seed,
            "horizon": [2, 10],
        }),
        metrics: json!({ "rows": rows, "tolerance": tol::DECOMPOSITION_REL }),
        pass,
    })
}

fn suite_qv_approx(spec: &ExperimentSpec) -> Result<SuiteReport, HarnessError> {
    let replicas = spec.replicas.max(50);
    let mut eps_sorted = spec.eps_list.clone();
    eps_sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let reports: Vec<_> = eps_sorted
        .iter()
        .map(|&eps| verify::check_qv_approx(eps, spec.nu, spec.alpha, spec.rho, 0, replicas, spec.seed))
        .collect();
    let biases: Vec<f64> = reports.iter().map(|r| r.bias_rel.abs()).collect();
    let decreasing = biases.windows(2).all(|w| w[1] <= w[0]);
    let last = reports.last().expect("non-empty eps list");
    let prefactor_ok = (last.prefactor_hat - last.prefactor_target).abs()
        <= tol::QV_PREFACTOR_REL * last.prefactor_target;
    let pass = (eps_sorted.len() < 2 || decreasing) && prefactor_ok;
    Ok(SuiteReport {
        id: "qv-approx".into(),
        parameters: json!({
            "eps": eps_sorted, "replicas": replicas, "seed": spec.seed,
            "nu": spec.nu, "alpha": spec.alpha, "rho": spec.rho,
        }),
        metrics: json!({
            "reports": serde_json::to_value(&reports).expect("report json"),
            "bias_decreasing": decreasing,
            "prefactor_rel_err": (last.prefactor_hat - last.prefactor_target).abs()
                / last.prefactor_target,
            "prefactor_bound": tol::QV_PREFACTOR_REL,
        }),
        pass,
    })
}

fn suite_martingale(spec: &ExperimentSpec) -> Result<SuiteReport, HarnessError> {
    let eps = spec.eps_list[0];
    let params = spec.params_at(eps)?;
    let dc = derive_constants(&params);
    let mspec = verify::MartingaleSpec {
        psi: verify::BumpPsi { center: 0.0, halfwidth: 1.0 },
        tau_checkpoints: vec![0.1, 0.2, 0.3, 0.4, 0.5],
    };
    let replicas = spec.replicas.max(100);
    let report = verify::martingale_problem_stats(&params, &dc, &mspec, replicas, spec.seed);
    let worst_row = report
        .rows
        .iter()
        .max_by(|a, b| a.z_score.abs().partial_cmp(&b.z_score.abs()).unwrap())
        .expect("rows");
    let first_fail = report.rows.iter().find(|r| !r.pass_4_sigma);
    let pass = first_fail.is_none() && report.max_identity_rel <= tol::MARTINGALE_IDENTITY_REL;
    Ok(SuiteReport {
        id: "martingale".into(),
        parameters: json!({
            "eps": eps, "rho": spec.rho, "replicas": replicas, "seed": spec.seed,
            "tau_checkpoints": mspec.tau_checkpoints,
        }),
        metrics: json!({
            "rows": serde_json::to_value(&report.rows).expect("rows json"),
            "worst_z_score": worst_row.z_score,
            "max_identity_rel": report.max_identity_rel,
            "var_over_compensator": report.var_over_compensator,
            "first_failing_tau": first_fail.map(|r| r.tau),
            "band": tol::Z_BAND,
            "identity_tolerance": tol::MARTINGALE_IDENTITY_REL,
        }),
        pass,
    })
}

fn suite_probes(spec: &ExperimentSpec) -> Result<SuiteReport, HarnessError> {
    let eps = spec.eps_list[0];
    let params = spec.params_at(eps)?;
    let dc = derive_constants(&params);
    let replicas = spec.replicas.max(100);
    let blocks = 10;
    let spatial = verify::spatial_structure_probe(
        &params,
        &dc,
        400,
        &[1, 2, 4, 8, 16, 32],
        replicas,
        blocks,
        spec.seed,
    );
    let spatial_ok = tol::bracket_hit(tol::SPATIAL_EXPONENT, spatial.exponent, spatial.exponent_se);
    let taus: Vec<f64> = vec![0.05, 0.1, 0.2, 0.4, 0.8];
    let decay = verify::step_norm_decay_probe(&params, &dc, &taus, replicas, blocks, spec.seed);
    let decay_ok = tol::bracket_hit(tol::STEP_NORM_EXPONENT, decay.exponent, decay.exponent_se);
    let pass = spatial_ok && decay_ok;
    Ok(SuiteReport {
        id: "probes".into(),
        parameters: json!({
            "eps": eps, "rho": spec.rho, "replicas": replicas, "seed": spec.seed,
        }),
        metrics: json!({
            "spatial": serde_json::to_value(&spatial).expect("probe json"),
            "spatial_bracket": tol::SPATIAL_EXPONENT,
            "spatial_ok": spatial_ok,
            "step_decay": serde_json::to_value(&decay).expect("probe json"),
            "step_decay_bracket": tol::STEP_NORM_EXPONENT,
            "step_decay_ok": decay_ok,
        }),
        pass,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_parses_and_overrides() {
        let cfg = Config::parse(
            "# a comment\n eps = 0.4, 0.2 \n rho=0.6\n rho = 0.7 # later wins\n",
        )
        .unwrap();
        assert_eq!(cfg.get("rho"), Some("0.7"));
        assert_eq!(cfg.f64_list_or("eps", &[]).unwrap(), vec![0.4, 0.2]);
        let err = Config::parse("just words\n").unwrap_err();
        assert!(matches!(err, HarnessError::Syntax { line: 1, .. }));
    }

    #[test]
    fn spec_validation_reports_fields() {
        let mut cfg = Config::default();
        cfg.set("replicas", "0");
        let err = ExperimentSpec::from_config(&cfg).unwrap_err();
        match err {
            HarnessError::Field { field, .. } => assert_eq!(field, "replicas"),
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn accumulator_merge_matches_single_pass() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let xs: Vec<f64> = (0..1000).map(|_| rng.gen::<f64>() * 3.0 - 1.0).collect();
        let mut whole = StatsAccumulator::new();
        for &x in &xs {
            whole.push(x);
        }
        let mut left = StatsAccumulator::new();
        let mut right = StatsAccumulator::new();
        for &x in &xs[..500] {
            left.push(x);
        }
        for &x in &xs[500..] {
            right.push(x);
        }
        let mut merged = left;
        merged.merge(&right);
        assert_eq!(merged.moments.count, whole.moments.count);
        assert!((merged.moments.mean - whole.moments.mean).abs() < 1e-12);
        assert!(
            (merged.moments.sample_variance() - whole.moments.sample_variance()).abs() < 1e-12
        );
        assert_eq!(merged.min, whole.min);
        assert_eq!(merged.max, whole.max);
        // Commutativity.
        let mut flipped = right;
        flipped.merge(&left);
        assert!((flipped.moments.mean - merged.moments.mean).abs() < 1e-14);
    }

    fn tiny_spec(dir: &Path) -> ExperimentSpec {
        let mut cfg = Config::default();
        cfg.set("eps", "0.3");
        cfg.set("rho", "0.6");
        cfg.set("replicas", "4");
        cfg.set("taus", "0.0,0.02");
        cfg.set("rs", "0");
        cfg.set("seed", "11");
        cfg.set("out", dir.to_str().unwrap());
        ExperimentSpec::from_config(&cfg).unwrap()
    }

    #[test]
    fn simulate_is_deterministic() {
        let tmp = tempfile::tempdir().unwrap();
        let dir_a = tmp.path().join("a");
        let dir_b = tmp.path().join("b");
        let mut spec_a = tiny_spec(&dir_a);
        spec_a.ic = IcKind::NearEquilibrium;
        let mut spec_b = tiny_spec(&dir_b);
        spec_b.ic = IcKind::NearEquilibrium;
        run_simulate(&spec_a).unwrap();
        run_simulate(&spec_b).unwrap();
        for name in ["paths.csv", "stats.csv"] {
            let a = std::fs::read(dir_a.join(name)).unwrap();
            let b = std::fs::read(dir_b.join(name)).unwrap();
            assert_eq!(a, b, "{name} differs between identical runs");
        }
        // The summary embeds the out directory only through the filesystem,
        // not the content; the JSON bodies must agree too.
        let a = std::fs::read_to_string(dir_a.join("summary.json")).unwrap();
        let b = std::fs::read_to_string(dir_b.join("summary.json")).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn single_replica_time_zero_is_ic_snapshot() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = Config::default();
        cfg.set("eps", "0.3");
        cfg.set("replicas", "1");
        cfg.set("taus", "0.0");
        cfg.set("rs", "-0.2,0,0.2");
        cfg.set("out", tmp.path().to_str().unwrap());
        let spec = ExperimentSpec::from_config(&cfg).unwrap();
        let bundle = run_simulate(&spec).unwrap();
        assert!(bundle.pass);
        let paths = std::fs::read_to_string(tmp.path().join("paths.csv")).unwrap();
        let data_rows: Vec<&str> =
            paths.lines().filter(|l| !l.starts_with('#') && !l.starts_with("eps,")).collect();
        assert_eq!(data_rows.len(), 3, "one row per grid position: {paths}");
        for row in data_rows {
            assert!(row.contains(",0,"), "tau column must be 0: {row}");
        }
    }

    #[test]
    fn split_run_matches_single_run() {
        // Replicas draw from counter-derived streams, so running 0..4 in two
        // halves and merging the per-point statistics must match one pass.
        let tmp = tempfile::tempdir().unwrap();
        let spec = tiny_spec(&tmp.path().join("x"));
        let params = spec.params_at(0.3).unwrap();
        let dc = derive_constants(&params);
        let whole = run_scaled_ensemble(&spec, &params, &dc);
        let mut first = spec.clone();
        first.replicas = 2;
        let mut acc: Vec<StatsAccumulator> =
            run_scaled_ensemble(&first, &params, &dc).z_stats;
        // Second half: replicas 2..4 via the same master seed. Reuse the
        // ensemble runner by shifting which replicas it draws: the runner
        // derives streams from the replica index, so run a 4-replica pass
        // and merge only the tail — equivalent to a remote 2..4 run.
        let tail = run_scaled_ensemble(&spec, &params, &dc);
        let mut tail_acc = vec![StatsAccumulator::new(); acc.len()];
        for (rep, rows) in tail.readings.iter().filter(|(rep, _)| *rep >= 2) {
            let _ = rep;
            for (i, r) in rows.iter().enumerate() {
                tail_acc[i].push(r.z);
            }
        }
        for (a, t) in acc.iter_mut().zip(tail_acc.iter()) {
            a.merge(t);
        }
        for (merged, single) in acc.iter().zip(whole.z_stats.iter()) {
            assert_eq!(merged.moments.count, single.moments.count);
            assert!((merged.moments.mean - single.moments.mean).abs() < 1e-12);
            assert!(
                (merged.moments.sample_variance() - single.moments.sample_variance()).abs()
                    < 1e-12
            );
        }
    }

    #[test]
    fn verify_identities_suite_passes() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = Config::default();
        cfg.set("suite", "identities");
        cfg.set("replicas", "40");
        cfg.set("out", tmp.path().to_str().unwrap());
        let spec = ExperimentSpec::from_config(&cfg).unwrap();
        let bundle = run_verify(&spec).unwrap();
        assert!(bundle.pass, "summary: {}", bundle.summary);
        let report = std::fs::read_to_string(tmp.path().join("verify_report.json")).unwrap();
        let parsed: Value = serde_json::from_str(&report).unwrap();
        assert_eq!(parsed["report"]["pass"], Value::Bool(true));
        assert_eq!(parsed["version"], Value::String(VERSION.into()));
    }

    #[test]
    fn unknown_suite_is_field_error() {
        let tmp = tempfile::tempdir().unwrap();
        let mut cfg = Config::default();
        cfg.set("suite", "nonsense");
        cfg.set("out", tmp.path().to_str().unwrap());
        let spec = ExperimentSpec::from_config(&cfg).unwrap();
        match run_verify(&spec).unwrap_err() {
            HarnessError::Field { field, .. } => assert_eq!(field, "suite"),
            other => panic!("unexpected error {other:?}"),
        }
    }
}
