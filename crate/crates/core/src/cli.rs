//! Configuration documents, result writers and the `rdd` subcommands.
//!
//! A run is described by one JSON document ([`RunConfig`]); command-line
//! flags ([`Overrides`]) take precedence over it. Every subcommand maps its
//! outcome onto an [`ExitStatus`].

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use ndarray::{Array1, Array2};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Gamma};
use serde::{Deserialize, Serialize};

use crate::distortion::{
    compute_dmax_with, fused_distortion, gromov_distortion_bruteforce,
    gromov_distortion_decomposed, Coupling, DmaxOptions, BRUTE_FORCE_CAP,
};
use crate::solver::{ba_solve_problem, solve_problem, AmdProblem, SolverConfig};
use crate::spaces::{
    build_circle, build_sphere_capped, build_uniform_grid_capped, cross_distance_matrix,
    source_pmf, validate_distance_matrix, DiscreteSource, MetricSpace, SourceFamily,
    DEFAULT_POINT_CAP,
};
use crate::sweep::{trace_curve, trace_surface, CurvePoint, SweepOutput, SweepPlan};
use crate::Error;

/// Version of the CSV/JSON result layout.
pub const SCHEMA_VERSION: u32 = 1;

/// Fixed CSV header.
pub const CSV_HEADER: [&str; 7] = [
    "lambda",
    "theta",
    "distortion",
    "rate_nats",
    "rate_bits",
    "iterations",
    "converged",
];

/// Process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExitStatus {
    Success = 0,
    ConfigError = 1,
    PartialFailure = 2,
    CheckFailed = 3,
}

impl ExitStatus {
    pub fn code(self) -> i32 {
        self as i32
    }
}

/// Error raised while loading or applying a configuration.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {message}")]
    Parse { path: String, message: String },
    #[error("{path}: {message}")]
    Invalid { path: String, message: String },
    #[error("cannot write {path}: {message}")]
    Output { path: PathBuf, message: String },
    #[error(transparent)]
    Model(#[from] Error),
}

fn invalid(path: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        path: path.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    #[default]
    Grid,
    Circle,
    Sphere,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FamilyName {
    Gaussian,
    Laplacian,
    Uniform,
}

/// One space: a uniform grid (`dim`, `h`, `K`) or a circle/sphere (`n`,
/// `radius`), optionally with a source family.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceConfig {
    #[serde(default)]
    pub shape: Shape,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub family: Option<FamilyName>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub h: Option<f64>,
    #[serde(
        rename = "K",
        alias = "k",
        default,
        skip_serializing_if = "Option::is_none"
    )]
    pub k: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    #[serde(default)]
    pub lambda_start: f64,
    pub lambda_end: f64,
    #[serde(default = "default_lambda_count")]
    pub lambda_count: usize,
    #[serde(default = "default_thetas")]
    pub theta_values: Vec<f64>,
}

fn default_lambda_count() -> usize {
    100
}

fn default_thetas() -> Vec<f64> {
    vec![1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub max_iter: usize,
    pub w_tol: f64,
    pub seed: u64,
    pub support_floor: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = SolverConfig::default();
        Self {
            max_iter: d.max_iter,
            w_tol: d.w_tol,
            seed: d.seed,
            support_floor: d.support_floor,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    #[default]
    Csv,
    Json,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
    #[serde(default)]
    pub emit_coupling: bool,
    #[serde(default)]
    pub audit: bool,
}

/// A full run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub source: SpaceConfig,
    pub y_space: SpaceConfig,
    #[serde(default = "default_q")]
    pub q: f64,
    #[serde(default = "default_cap")]
    pub point_cap: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub dmax: DmaxOptions,
    #[serde(default)]
    pub output: OutputSection,
    /// Sweep worker threads; defaults to the available parallelism.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

fn default_q() -> f64 {
    2.0
}

fn default_cap() -> usize {
    DEFAULT_POINT_CAP
}

impl RunConfig {
    /// Parses a JSON document strictly, reporting the path of the first
    /// offending key.
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })
    }

    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_json_str(&text)
    }

    /// Range and consistency checks beyond what the schema enforces.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.q >= 1.0 && self.q.is_finite()) {
            return Err(invalid("q", format!("must be >= 1, got {}", self.q)));
        }
        validate_space(&self.source, "source", true)?;
        validate_space(&self.y_space, "y_space", false)?;
        if let Some(s) = &self.sweep {
            if s.lambda_count == 0 {
                return Err(invalid("sweep.lambda_count", "must be >= 1"));
            }
            if !(s.lambda_start >= 0.0 && s.lambda_start.is_finite()) {
                return Err(invalid("sweep.lambda_start", "must be finite and >= 0"));
            }
            if !(s.lambda_end > s.lambda_start && s.lambda_end.is_finite()) {
                return Err(invalid(
                    "sweep.lambda_end",
                    "must be finite and exceed lambda_start",
                ));
            }
            if s.theta_values.is_empty() {
                return Err(invalid("sweep.theta_values", "must be nonempty"));
            }
            for (i, t) in s.theta_values.iter().enumerate() {
                if !(0.0..=1.0).contains(t) {
                    return Err(invalid(
                        &format!("sweep.theta_values[{i}]"),
                        format!("{t} is outside [0, 1]"),
                    ));
                }
            }
        }
        if self.solver.max_iter == 0 {
            return Err(invalid("solver.max_iter", "must be >= 1"));
        }
        if !(self.solver.w_tol >= 0.0) {
            return Err(invalid("solver.w_tol", "must be >= 0"));
        }
        if self.dmax.restarts == 0 {
            return Err(invalid("dmax.restarts", "must be >= 1"));
        }
        if self.jobs == Some(0) {
            return Err(invalid("jobs", "must be >= 1"));
        }
        Ok(())
    }

    fn sweep_section(&self) -> Result<&SweepSection, ConfigError> {
        self.sweep
            .as_ref()
            .ok_or_else(|| invalid("sweep", "section is required for this command"))
    }
}

fn validate_space(s: &SpaceConfig, path: &str, needs_family: bool) -> Result<(), ConfigError> {
    let field = |name: &str| format!("{path}.{name}");
    match s.shape {
        Shape::Grid => {
            for (name, present) in [("n", s.n.is_some()), ("radius", s.radius.is_some())] {
                if present {
                    return Err(invalid(&field(name), "not allowed for shape `grid`"));
                }
            }
            let dim = s
                .dim
                .ok_or_else(|| invalid(&field("dim"), "required for shape `grid`"))?;
            if !(1..=3).contains(&dim) {
                return Err(invalid(
                    &field("dim"),
                    format!("must be 1, 2 or 3, got {dim}"),
                ));
            }
            let h =
                s.h.ok_or_else(|| invalid(&field("h"), "required for shape `grid`"))?;
            if !(h > 0.0 && h.is_finite()) {
                return Err(invalid(&field("h"), format!("must be > 0, got {h}")));
            }
            let k =
                s.k.ok_or_else(|| invalid(&field("K"), "required for shape `grid`"))?;
            if k == 0 {
                return Err(invalid(&field("K"), "must be >= 1"));
            }
        }
        Shape::Circle | Shape::Sphere => {
            for (name, present) in [
                ("dim", s.dim.is_some()),
                ("h", s.h.is_some()),
                ("K", s.k.is_some()),
            ] {
                if present {
                    return Err(invalid(
                        &field(name),
                        "not allowed for circle/sphere shapes",
                    ));
                }
            }
            let n =
                s.n.ok_or_else(|| invalid(&field("n"), "required for circle/sphere shapes"))?;
            if n < 2 {
                return Err(invalid(&field("n"), format!("must be >= 2, got {n}")));
            }
            let r = s
                .radius
                .ok_or_else(|| invalid(&field("radius"), "required for circle/sphere shapes"))?;
            if !(r > 0.0 && r.is_finite()) {
                return Err(invalid(&field("radius"), format!("must be > 0, got {r}")));
            }
        }
    }
    match s.family {
        None if needs_family => return Err(invalid(&field("family"), "required")),
        Some(FamilyName::Gaussian | FamilyName::Laplacian) => {
            let sigma = s
                .sigma
                .ok_or_else(|| invalid(&field("sigma"), "required for gaussian/laplacian"))?;
            if !(sigma > 0.0 && sigma.is_finite()) {
                return Err(invalid(
                    &field("sigma"),
                    format!("must be > 0, got {sigma}"),
                ));
            }
        }
        _ => {}
    }
    Ok(())
}

fn build_space(
    s: &SpaceConfig,
    q: f64,
    cap: usize,
    path: &str,
) -> Result<MetricSpace, ConfigError> {
    let built = match s.shape {
        Shape::Grid => build_uniform_grid_capped(
            s.h.unwrap_or_default(),
            s.k.unwrap_or_default(),
            s.dim.unwrap_or_default(),
            q,
            cap,
        ),
        Shape::Circle => build_circle(s.n.unwrap_or_default(), s.radius.unwrap_or_default(), q),
        Shape::Sphere => build_sphere_capped(
            s.n.unwrap_or_default(),
            s.radius.unwrap_or_default(),
            q,
            cap,
        ),
    };
    built.map_err(|e| invalid(path, e.to_string()))
}

fn family_of(s: &SpaceConfig) -> SourceFamily {
    match s.family {
        Some(FamilyName::Gaussian) => SourceFamily::Gaussian {
            sigma: s.sigma.unwrap_or(1.0),
        },
        Some(FamilyName::Laplacian) => SourceFamily::Laplacian {
            sigma: s.sigma.unwrap_or(1.0),
        },
        Some(FamilyName::Uniform) | None => SourceFamily::Uniform,
    }
}

/// Spaces and source materialized from a validated configuration.
#[derive(Debug, Clone)]
pub struct Instance {
    pub source: DiscreteSource,
    pub y_space: MetricSpace,
}

impl Instance {
    pub fn from_config(config: &RunConfig) -> Result<Self, ConfigError> {
        config.validate()?;
        let x = build_space(&config.source, config.q, config.point_cap, "source")?;
        let y_space = build_space(&config.y_space, config.q, config.point_cap, "y_space")?;
        let source = source_pmf(&x, family_of(&config.source))
            .map_err(|e| invalid("source", e.to_string()))?;
        Ok(Self { source, y_space })
    }

    /// Squared-error cross distances; a dimension mismatch is a config error.
    pub fn cross_distance(&self) -> Result<Array2<f64>, ConfigError> {
        cross_distance_matrix(self.source.space(), &self.y_space)
            .map_err(|e| invalid("y_space", e.to_string()))
    }
}

/// Command-line values that take precedence over the configuration file.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub output: Option<PathBuf>,
    pub format: Option<OutputFormat>,
    pub jobs: Option<usize>,
    pub seed: Option<u64>,
    pub max_iter: Option<usize>,
    pub lambda_start: Option<f64>,
    pub lambda_end: Option<f64>,
    pub lambda_count: Option<usize>,
    pub theta_values: Option<Vec<f64>>,
    pub restarts: Option<usize>,
    pub emit_coupling: bool,
    pub audit: bool,
}

impl Overrides {
    pub fn apply(&self, mut config: RunConfig) -> Result<RunConfig, ConfigError> {
        if let Some(p) = &self.output {
            config.output.path = Some(p.clone());
        }
        if let Some(f) = self.format {
            config.output.format = f;
        }
        if self.jobs.is_some() {
            config.jobs = self.jobs;
        }
        if let Some(s) = self.seed {
            config.solver.seed = s;
            config.dmax.seed = s;
        }
        if let Some(m) = self.max_iter {
            config.solver.max_iter = m;
        }
        if let Some(r) = self.restarts {
            config.dmax.restarts = r;
        }
        config.output.emit_coupling |= self.emit_coupling;
        config.output.audit |= self.audit;
        let touches_sweep = self.lambda_start.is_some()
            || self.lambda_end.is_some()
            || self.lambda_count.is_some()
            || self.theta_values.is_some();
        if touches_sweep {
            let sweep = match config.sweep.take() {
                Some(s) => s,
                None => SweepSection {
                    lambda_start: 0.0,
                    lambda_end: self
                        .lambda_end
                        .ok_or_else(|| invalid("sweep.lambda_end", "required"))?,
                    lambda_count: default_lambda_count(),
                    theta_values: default_thetas(),
                },
            };
            config.sweep = Some(SweepSection {
                lambda_start: self.lambda_start.unwrap_or(sweep.lambda_start),
                lambda_end: self.lambda_end.unwrap_or(sweep.lambda_end),
                lambda_count: self.lambda_count.unwrap_or(sweep.lambda_count),
                theta_values: self.theta_values.clone().unwrap_or(sweep.theta_values),
            });
        }
        Ok(config)
    }
}

fn sweep_plan(config: &RunConfig) -> Result<SweepPlan, ConfigError> {
    let s = config.sweep_section()?;
    let solver = SolverConfig {
        max_iter: config.solver.max_iter,
        w_tol: config.solver.w_tol,
        seed: config.solver.seed,
        support_floor: config.solver.support_floor,
        ..SolverConfig::default()
    };
    let mut plan = SweepPlan::new(
        s.lambda_start,
        s.lambda_end,
        s.lambda_count,
        s.theta_values.clone(),
    )
    .with_solver(solver);
    plan.jobs = config.jobs;
    plan.retain_couplings = config.output.emit_coupling || config.output.audit;
    Ok(plan)
}

fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "NaN".to_string()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.to_string()
    } else {
        format!("{v:.16e}")
    }
}

/// Writes points as CSV with [`CSV_HEADER`] and 17 significant digits.
pub fn write_csv<W: Write>(out: W, points: &[CurvePoint]) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER)?;
    for p in points {
        w.write_record([
            fmt_f64(p.lambda),
            fmt_f64(p.theta),
            fmt_f64(p.distortion),
            fmt_f64(p.rate_nats),
            fmt_f64(p.rate_bits),
            p.iterations_run.to_string(),
            p.converged.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[derive(Serialize)]
struct JsonPoint<'a> {
    lambda: f64,
    theta: f64,
    distortion: f64,
    rate_nats: f64,
    rate_bits: f64,
    iterations: usize,
    converged: bool,
    #[serde(skip_serializing_if = "Option::is_none")]
    error: Option<&'a str>,
}

#[derive(Serialize)]
struct JsonDocument<'a> {
    schema_version: u32,
    config: &'a RunConfig,
    points: Vec<JsonPoint<'a>>,
}

/// Writes points as JSON together with the resolved configuration.
pub fn write_json<W: Write>(
    out: W,
    config: &RunConfig,
    points: &[CurvePoint],
) -> serde_json::Result<()> {
    let doc = JsonDocument {
        schema_version: SCHEMA_VERSION,
        config,
        points: points
            .iter()
            .map(|p| JsonPoint {
                lambda: p.lambda,
                theta: p.theta,
                distortion: p.distortion,
                rate_nats: p.rate_nats,
                rate_bits: p.rate_bits,
                iterations: p.iterations_run,
                converged: p.converged,
                error: p.error.as_deref(),
            })
            .collect(),
    };
    serde_json::to_writer_pretty(out, &doc)
}

/// Writes a dense matrix as headerless CSV.
pub fn write_matrix_csv<W: Write>(out: W, m: &Array2<f64>) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for row in m.rows() {
        w.write_record(row.iter().map(|v| fmt_f64(*v)))?;
    }
    w.flush()?;
    Ok(())
}

/// `<stem>_coupling_<index>.csv` next to the main output.
pub fn coupling_path(output: &Path, index: usize) -> PathBuf {
    let stem = output.file_stem().and_then(|s| s.to_str()).unwrap_or("rdd");
    output.with_file_name(format!("{stem}_coupling_{index}.csv"))
}

fn write_outputs(
    config: &RunConfig,
    sweep: &SweepOutput,
    stdout: &mut dyn Write,
) -> Result<(), ConfigError> {
    let out_err = |path: &Path, e: &dyn std::fmt::Display| ConfigError::Output {
        path: path.to_path_buf(),
        message: e.to_string(),
    };
    match &config.output.path {
        Some(path) => {
            let file = fs::File::create(path).map_err(|e| out_err(path, &e))?;
            let buf = std::io::BufWriter::new(file);
            match config.output.format {
                OutputFormat::Csv => {
                    write_csv(buf, &sweep.points).map_err(|e| out_err(path, &e))?
                }
                OutputFormat::Json => {
                    write_json(buf, config, &sweep.points).map_err(|e| out_err(path, &e))?
                }
            }
            if config.output.emit_coupling {
                for (i, c) in sweep.couplings.iter().enumerate() {
                    if let Some(c) = c {
                        let cp = coupling_path(path, i);
                        let f = fs::File::create(&cp).map_err(|e| out_err(&cp, &e))?;
                        write_matrix_csv(std::io::BufWriter::new(f), c.w())
                            .map_err(|e| out_err(&cp, &e))?;
                    }
                }
            }
        }
        None => {
            let stdout_path = Path::new("<stdout>");
            if config.output.emit_coupling {
                return Err(invalid("output.emit_coupling", "requires output.path"));
            }
            match config.output.format {
                OutputFormat::Csv => {
                    write_csv(&mut *stdout, &sweep.points).map_err(|e| out_err(stdout_path, &e))?
                }
                OutputFormat::Json => {
                    write_json(&mut *stdout, config, &sweep.points)
                        .map_err(|e| out_err(stdout_path, &e))?;
                    writeln!(stdout).map_err(|e| out_err(stdout_path, &e))?;
                }
            }
        }
    }
    Ok(())
}

/// Recomputes every retained point's distortion from its coupling.
fn audit(instance: &Instance, sweep: &SweepOutput, d_cross: Option<&Array2<f64>>) -> Vec<String> {
    let dx = instance.source.space().dist_q();
    let dy = instance.y_space.dist_q();
    let p = instance.source.pmf();
    let mut problems = Vec::new();
    for (i, (pt, c)) in sweep.points.iter().zip(&sweep.couplings).enumerate() {
        let Some(c) = c else { continue };
        match fused_distortion(dx, dy, d_cross, c, p, pt.theta) {
            Ok(d) if (d - pt.distortion).abs() <= 1e-10 * d.abs().max(1.0) => {}
            Ok(d) => problems.push(format!(
                "point {i}: recorded distortion {} but recomputed {d}",
                pt.distortion
            )),
            Err(e) => problems.push(format!("point {i}: {e}")),
        }
    }
    problems
}

fn run_sweep(
    config: &RunConfig,
    surface: bool,
    stdout: &mut dyn Write,
) -> Result<ExitStatus, ConfigError> {
    let instance = Instance::from_config(config)?;
    let plan = sweep_plan(config)?;
    if !surface && plan.theta_values.len() != 1 {
        return Err(invalid(
            "sweep.theta_values",
            "`curve` takes exactly one theta; use `surface` for several",
        ));
    }
    let needs_cross = plan.theta_values.iter().any(|&t| t < 1.0);
    let d_cross = if needs_cross || surface {
        Some(instance.cross_distance()?)
    } else {
        None
    };
    let sweep = if surface {
        trace_surface(
            &instance.source,
            &instance.y_space,
            &plan,
            d_cross.as_ref().expect("built above"),
        )?
    } else {
        trace_curve(&instance.source, &instance.y_space, &plan, d_cross.as_ref())?
    };
    write_outputs(config, &sweep, stdout)?;

    if config.output.audit {
        let problems = audit(&instance, &sweep, d_cross.as_ref());
        if !problems.is_empty() {
            for p in &problems {
                log::error!("audit: {p}");
            }
            return Ok(ExitStatus::CheckFailed);
        }
        log::info!(
            "audit: {} points verified",
            sweep.couplings.iter().flatten().count()
        );
    }
    let failed = sweep.failed_count();
    if failed > 0 {
        log::warn!(
            "{failed} of {} points failed numerically",
            sweep.points.len()
        );
        return Ok(ExitStatus::PartialFailure);
    }
    Ok(ExitStatus::Success)
}

fn report_error(e: &ConfigError) -> ExitStatus {
    eprintln!("error: {e}");
    ExitStatus::ConfigError
}

/// `curve`: one rate-distortion curve for a single theta.
pub fn cmd_curve(config: &RunConfig, stdout: &mut dyn Write) -> ExitStatus {
    run_sweep(config, false, stdout).unwrap_or_else(|e| report_error(&e))
}

/// `surface`: rate-distortion points over the theta x lambda grid.
pub fn cmd_surface(config: &RunConfig, stdout: &mut dyn Write) -> ExitStatus {
    run_sweep(config, true, stdout).unwrap_or_else(|e| report_error(&e))
}

/// `dmax`: zero-rate threshold estimate with per-restart diagnostics.
pub fn cmd_dmax(config: &RunConfig, stdout: &mut dyn Write) -> ExitStatus {
    let mut run = || -> Result<(), ConfigError> {
        let instance = Instance::from_config(config)?;
        let est = compute_dmax_with(
            instance.source.space().dist_q(),
            instance.y_space.dist_q(),
            instance.source.pmf(),
            &config.dmax,
        )?;
        let io = |e: std::io::Error| ConfigError::Output {
            path: PathBuf::from("<stdout>"),
            message: e.to_string(),
        };
        writeln!(stdout, "D_max = {}", fmt_f64(est.value)).map_err(io)?;
        writeln!(stdout, "c1 = {}", fmt_f64(est.c1)).map_err(io)?;
        writeln!(
            stdout,
            "stationarity_gap = {}",
            fmt_f64(est.stationarity_gap)
        )
        .map_err(io)?;
        let r: Vec<String> = est.r.iter().map(|v| fmt_f64(*v)).collect();
        writeln!(stdout, "r = [{}]", r.join(", ")).map_err(io)?;
        for (i, v) in est.restart_values.iter().enumerate() {
            writeln!(stdout, "restart {i}: {}", fmt_f64(*v)).map_err(io)?;
        }
        Ok(())
    };
    match run() {
        Ok(()) => ExitStatus::Success,
        Err(e) => report_error(&e),
    }
}

/// Inputs of the self-check, exposed so that raw matrices can be checked
/// without going through space construction.
#[derive(Debug, Clone)]
pub struct CheckInput {
    pub dx: Array2<f64>,
    pub dy: Array2<f64>,
    pub p: Array1<f64>,
    /// Present when the two spaces share a dimension.
    pub d_cross: Option<Array2<f64>>,
    pub lambdas: Vec<f64>,
    pub max_iter: usize,
    pub seed: u64,
}

impl CheckInput {
    pub fn from_config(config: &RunConfig) -> Result<Self, ConfigError> {
        let instance = Instance::from_config(config)?;
        let d_cross = instance.cross_distance().ok();
        let lambdas = match &config.sweep {
            Some(s) => {
                let plan = SweepPlan::new(s.lambda_start, s.lambda_end, s.lambda_count, vec![0.0]);
                let grid = crate::sweep::lambda_grid(&plan)?;
                let stride = grid.len().div_ceil(5).max(1);
                grid.into_iter().step_by(stride).collect()
            }
            None => vec![0.0, 0.1, 1.0],
        };
        Ok(Self {
            dx: instance.source.space().dist_q().clone(),
            dy: instance.y_space.dist_q().clone(),
            p: instance.source.pmf().clone(),
            d_cross,
            lambdas,
            max_iter: config.solver.max_iter,
            seed: config.solver.seed,
        })
    }
}

/// Tolerance for the decomposition-vs-quadruple-sum comparison.
pub const ORACLE_REL_TOL: f64 = 1e-10;
/// Tolerance for the theta = 0 AMD vs Blahut-Arimoto comparison.
pub const BA_CONSISTENCY_TOL: f64 = 1e-8;

/// Runs the self-checks, writing a human-readable report.
pub fn run_self_check(input: &CheckInput, report: &mut dyn Write) -> ExitStatus {
    for (name, d) in [("dx", &input.dx), ("dy", &input.dy)] {
        if let Err(e) = validate_distance_matrix(d.view()) {
            let _ = writeln!(report, "validation failed for {name}: {e}");
            return ExitStatus::ConfigError;
        }
    }
    let (m, n) = (input.dx.nrows(), input.dy.nrows());
    let mut discrepancies = Vec::new();

    if m * n <= BRUTE_FORCE_CAP {
        let mut rng = ChaCha8Rng::seed_from_u64(input.seed);
        let gamma = Gamma::new(1.0, 1.0).expect("valid gamma parameters");
        let trials = 20;
        let mut worst = 0.0f64;
        for t in 0..trials {
            let w = if t == 0 {
                Coupling::uniform(m, n).into_parts().0
            } else {
                let mut w = Array2::from_shape_fn((m, n), |_| {
                    let g: f64 = gamma.sample(&mut rng);
                    g.max(1e-300)
                });
                for mut row in w.rows_mut() {
                    let s = row.sum();
                    row.mapv_inplace(|v| v / s);
                }
                w
            };
            let result = Coupling::from_conditional(w, input.p.view()).and_then(|c| {
                let brute = gromov_distortion_bruteforce(&input.dx, &input.dy, &c, &input.p)?;
                let fast = gromov_distortion_decomposed(&input.dx, &input.dy, &c, &input.p)?.total;
                Ok((brute, fast))
            });
            match result {
                Ok((brute, fast)) => {
                    let err = (brute - fast).abs() / brute.abs().max(1.0);
                    worst = worst.max(err);
                    if err > ORACLE_REL_TOL {
                        discrepancies.push(format!(
                            "trial {t}: bruteforce {brute} vs decomposed {fast}"
                        ));
                    }
                }
                Err(e) => discrepancies.push(format!("trial {t}: {e}")),
            }
        }
        let _ = writeln!(
            report,
            "decomposition oracle: {trials} trials, worst relative error {worst:.3e}"
        );
    } else {
        let _ = writeln!(
            report,
            "decomposition oracle skipped: M*N = {} exceeds cap {BRUTE_FORCE_CAP}",
            m * n
        );
    }

    match &input.d_cross {
        Some(d) => match ba_consistency(input, d) {
            Ok(worst) => {
                let _ = writeln!(
                    report,
                    "theta=0 vs Blahut-Arimoto: worst deviation {worst:.3e}"
                );
                if worst > BA_CONSISTENCY_TOL {
                    discrepancies.push(format!("theta=0 AMD deviates from BA by {worst:e}"));
                }
            }
            Err(e) => discrepancies.push(format!("BA check: {e}")),
        },
        None => {
            let _ = writeln!(
                report,
                "theta=0 vs Blahut-Arimoto skipped: spaces differ in dimension"
            );
        }
    }

    if discrepancies.is_empty() {
        let _ = writeln!(report, "all checks passed");
        ExitStatus::Success
    } else {
        for d in &discrepancies {
            let _ = writeln!(report, "DISCREPANCY: {d}");
        }
        ExitStatus::CheckFailed
    }
}

fn ba_consistency(input: &CheckInput, d: &Array2<f64>) -> crate::Result<f64> {
    let problem = AmdProblem::new(
        input.dx.clone(),
        input.dy.clone(),
        input.p.clone(),
        Some(d.clone()),
    )?;
    let mut worst = 0.0f64;
    for &lambda in &input.lambdas {
        let cfg = SolverConfig {
            lambda,
            theta: 0.0,
            max_iter: input.max_iter,
            ..SolverConfig::default()
        };
        let amd = solve_problem(&problem, &cfg)?;
        let ba = ba_solve_problem(&problem, lambda, input.max_iter)?;
        worst = worst.max((amd.rate_nats - ba.rate_nats).abs()).max(
            (amd.classical_distortion - ba.classical_distortion).abs()
                / ba.classical_distortion.abs().max(1.0),
        );
    }
    Ok(worst)
}

/// `check`: decomposition oracle and theta = 0 / Blahut-Arimoto consistency
/// on the configured instance.
pub fn cmd_check(config: &RunConfig, stdout: &mut dyn Write) -> ExitStatus {
    match CheckInput::from_config(config) {
        Ok(input) => run_self_check(&input, stdout),
        Err(e) => report_error(&e),
    }
}
