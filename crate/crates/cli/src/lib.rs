//! Command-line front end for the generalized Berwald decision procedure.
//!
//! Exit codes: 0 for a riemannian, classical or generalized Berwald verdict
//! (and for successful auxiliary commands), 1 for not generalized Berwald,
//! 2 for inconclusive, 3 for usage errors, 4 for invalid input, 5 for I/O
//! failures and 6 for numerical failures.

pub mod report;

use std::ffi::OsString;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use berwald_core::averaging::{AveragedMetricData, AveragingConfig};
use berwald_core::berwald::{
    decide, evaluate_point, validate_connection, ClassificationReport, ConnectionField, DecideConfig, ExtremalConnection,
    GlobalVerdict, GridSpec, LeviCivitaConnection, PointStatus, PointVerdict, TransportConfig,
};
use berwald_core::metric::{frame_ground_truth_torsion, ChartPoint, FamilyKind, MetricFamily};
use berwald_core::spec_file::{parse_metric_spec, to_spec_text};
use berwald_core::torsion::extremal::lattice;
use berwald_core::torsion::{PoolSpec, Tolerances};
use berwald_core::Error;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use report::{sci, to_json, write_torsion_csv, TorsionRow};

pub const EXIT_OK: i32 = 0;
pub const EXIT_NOT_GB: i32 = 1;
pub const EXIT_INCONCLUSIVE: i32 = 2;
pub const EXIT_USAGE: i32 = 3;
pub const EXIT_INPUT: i32 = 4;
pub const EXIT_IO: i32 = 5;
pub const EXIT_NUMERICAL: i32 = 6;

/// Version of the JSON report layout.
pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Parser)]
#[command(name = "berwald", version, about = "Extremal compatible connections and generalized Berwald tests")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Classify the metric on a sampled grid.
    Decide {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        grid: GridArgs,
        /// RK4 steps per unit length for the transport check along grid edges; 0 skips it.
        #[arg(long, default_value_t = 1000)]
        transport_steps: usize,
    },
    /// Emit the averaged metric and its Levi-Civita coefficients on a grid.
    Average {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        grid: GridArgs,
    },
    /// Solve for the extremal torsion at one point and trace the chain.
    Torsion {
        #[command(flatten)]
        common: CommonArgs,
        /// Chart coordinates, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true, required = true)]
        point: Vec<f64>,
    },
    /// Parallel transport drift of a connection along a polyline.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
        /// Vertices `x1,x2;y1,y2;...`.
        #[arg(long, allow_hyphen_values = true)]
        path: String,
        /// Initial chart vector, comma separated; repeatable. Defaults to four
        /// directions equispaced in the averaged-orthonormal frame.
        #[arg(long = "vector", allow_hyphen_values = true)]
        vectors: Vec<String>,
        /// RK4 steps per unit chart length.
        #[arg(long, default_value_t = 1000)]
        steps: usize,
        #[arg(long, value_enum, default_value_t = ConnectionKind::Extremal)]
        connection: ConnectionKind,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ConnectionKind {
    /// Reconstructed from the extremal torsion.
    Extremal,
    /// Levi-Civita connection of the averaged metric.
    LeviCivita,
}

#[derive(Debug, Clone, Args)]
pub struct CommonArgs {
    /// Metric definition file.
    #[arg(long)]
    pub metric: PathBuf,
    /// Quadrature resolution: node count on the circle, azimuthal count on the sphere.
    #[arg(long)]
    pub quad_nodes: Option<usize>,
    #[arg(long, default_value_t = 1e-9)]
    pub tol_contact: f64,
    #[arg(long, default_value_t = 1e-7)]
    pub tol_res: f64,
    /// Least-squares residual that marks a point as not generalized Berwald.
    #[arg(long, default_value_t = 1e-3)]
    pub not_gb_trigger: f64,
    /// Seed of the random part of the selection pool.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Lattice size of the selection pool.
    #[arg(long)]
    pub selection: Option<usize>,
    /// Number of seeded random directions added to the selection pool.
    #[arg(long)]
    pub random: Option<usize>,
    /// Size of the held-out validation pool.
    #[arg(long)]
    pub validation: Option<usize>,
    /// Constant factor applied to the averaged metric.
    #[arg(long, default_value_t = 1.0)]
    pub gamma_scale: f64,
    /// JSON report path; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// CSV output path.
    #[arg(long)]
    pub csv: Option<PathBuf>,
}

#[derive(Debug, Clone, Args)]
pub struct GridArgs {
    /// Points per axis.
    #[arg(long, default_value_t = 5)]
    pub grid: usize,
    /// Lower corner of the grid box, comma separated (default all zeros).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub lower: Option<Vec<f64>>,
    /// Upper corner of the grid box, comma separated (default all ones).
    #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
    pub upper: Option<Vec<f64>>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{}: {source}", path.display())]
    Metric { path: PathBuf, source: Error },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Core(#[from] Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Usage(_) => EXIT_USAGE,
            Self::Metric { .. } => EXIT_INPUT,
            Self::Io { .. } => EXIT_IO,
            Self::Core(e) => match e {
                Error::Syntax { .. }
                | Error::UnknownFamily(_)
                | Error::DimensionMismatch { .. }
                | Error::InvalidMetric(_)
                | Error::NonConvex { .. }
                | Error::WrongFamily { .. }
                | Error::UnsupportedDimension(_)
                | Error::StencilOutOfDomain { .. }
                | Error::CurveLeavesChart { .. }
                | Error::ZeroVector => EXIT_INPUT,
                _ => EXIT_NUMERICAL,
            },
        }
    }
}

/// What a run computes, with its task-specific inputs.
#[derive(Debug, Clone, Serialize)]
#[serde(tag = "command", rename_all = "snake_case")]
pub enum Task {
    Decide {
        resolution: usize,
        lower: Option<Vec<f64>>,
        upper: Option<Vec<f64>>,
        transport_steps: usize,
    },
    Average {
        resolution: usize,
        lower: Option<Vec<f64>>,
        upper: Option<Vec<f64>>,
    },
    Torsion {
        point: Vec<f64>,
    },
    Validate {
        path: Vec<Vec<f64>>,
        vectors: Vec<Vec<f64>>,
        steps: usize,
        connection: ConnectionKind,
    },
}

impl Task {
    pub fn name(&self) -> &'static str {
        match self {
            Self::Decide { .. } => "decide",
            Self::Average { .. } => "average",
            Self::Torsion { .. } => "torsion",
            Self::Validate { .. } => "validate",
        }
    }
}

/// Fully parsed run. Output paths are not part of the echoed configuration,
/// so reports written to different files stay byte-identical.
#[derive(Debug, Clone, Serialize)]
pub struct RunConfig {
    pub metric: PathBuf,
    pub task: Task,
    pub quad_nodes: Option<usize>,
    pub selection: Option<usize>,
    pub random: Option<usize>,
    pub validation: Option<usize>,
    pub tol_contact: f64,
    pub tol_res: f64,
    pub not_gb_trigger: f64,
    pub seed: u64,
    pub gamma_scale: f64,
    #[serde(skip)]
    pub out: Option<PathBuf>,
    #[serde(skip)]
    pub csv: Option<PathBuf>,
}

fn parse_list(text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("invalid number `{}` in `{text}`", s.trim())))
        })
        .collect()
}

impl RunConfig {
    pub fn from_cli(cli: Cli) -> Result<Self, CliError> {
        let (common, task) = match cli.command {
            Command::Decide {
                common,
                grid,
                transport_steps,
            } => (
                common,
                Task::Decide {
                    resolution: grid.grid,
                    lower: grid.lower,
                    upper: grid.upper,
                    transport_steps,
                },
            ),
            Command::Average { common, grid } => (
                common,
                Task::Average {
                    resolution: grid.grid,
                    lower: grid.lower,
                    upper: grid.upper,
                },
            ),
            Command::Torsion { common, point } => (common, Task::Torsion { point }),
            Command::Validate {
                common,
                path,
                vectors,
                steps,
                connection,
            } => {
                let path = path.split(';').map(parse_list).collect::<Result<Vec<_>, _>>()?;
                let vectors = vectors.iter().map(|v| parse_list(v)).collect::<Result<Vec<_>, _>>()?;
                (
                    common,
                    Task::Validate {
                        path,
                        vectors,
                        steps,
                        connection,
                    },
                )
            }
        };
        Ok(Self {
            metric: common.metric,
            task,
            quad_nodes: common.quad_nodes,
            selection: common.selection,
            random: common.random,
            validation: common.validation,
            tol_contact: common.tol_contact,
            tol_res: common.tol_res,
            not_gb_trigger: common.not_gb_trigger,
            seed: common.seed,
            gamma_scale: common.gamma_scale,
            out: common.out,
            csv: common.csv,
        })
    }

    /// Checks the invariants that do not depend on the metric: grid
    /// resolutions at least 2, positive finite tolerances and scale,
    /// non-empty pools and paths.
    pub fn validate(&self) -> Result<(), CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        for (name, v) in [
            ("--tol-contact", self.tol_contact),
            ("--tol-res", self.tol_res),
            ("--not-gb-trigger", self.not_gb_trigger),
            ("--gamma-scale", self.gamma_scale),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return usage(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if self.quad_nodes.is_some_and(|q| q < 8) {
            return usage("--quad-nodes must be at least 8".into());
        }
        if self.selection == Some(0) || self.validation == Some(0) {
            return usage("pool sizes must be positive".into());
        }
        match &self.task {
            Task::Decide { resolution, .. } | Task::Average { resolution, .. } if *resolution < 2 => {
                usage(format!("--grid must be at least 2, got {resolution}"))
            }
            Task::Validate { path, steps, .. } => {
                if path.len() < 2 {
                    usage("--path needs at least two vertices".into())
                } else if *steps == 0 {
                    usage("--steps must be positive".into())
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn tolerances(&self) -> Tolerances {
        Tolerances {
            tol_contact: self.tol_contact,
            tol_res: self.tol_res,
            not_gb_trigger: self.not_gb_trigger,
            ..Tolerances::default()
        }
    }

    fn pools(&self, base: PoolSpec) -> PoolSpec {
        PoolSpec {
            selection: self.selection.unwrap_or(base.selection),
            random: self.random.unwrap_or(base.random),
            validation: self.validation.unwrap_or(base.validation),
            seed: self.seed,
        }
    }

    /// Decision settings for a family of dimension `dim`.
    pub fn decide_config(&self, dim: usize) -> Result<DecideConfig, CliError> {
        let mut averaging = match self.quad_nodes {
            Some(q) => AveragingConfig::with_nodes(dim, q)?,
            None => AveragingConfig::for_dim(dim)?,
        };
        averaging.gamma_scale = self.gamma_scale;
        let transport = match &self.task {
            Task::Decide { transport_steps, .. } if *transport_steps > 0 => Some(TransportConfig {
                steps_per_unit: *transport_steps,
                ..TransportConfig::for_dim(dim)
            }),
            _ => None,
        };
        Ok(DecideConfig {
            averaging,
            pools: self.pools(PoolSpec::for_dim(dim)),
            tols: self.tolerances(),
            transport,
        })
    }

    /// Settings of the connection used by `validate`: the transport defaults
    /// unless quadrature or pools are given explicitly.
    pub fn transport_config(&self, dim: usize, steps: usize) -> TransportConfig {
        let base = TransportConfig::for_dim(dim);
        TransportConfig {
            steps_per_unit: steps,
            quad_nodes: self.quad_nodes.unwrap_or(base.quad_nodes),
            pools: self.pools(base.pools),
            ..base
        }
    }
}

#[derive(Serialize)]
struct Tool {
    name: &'static str,
    version: &'static str,
}

#[derive(Serialize)]
struct MetricEcho {
    family: &'static str,
    dim: usize,
    /// Canonical re-serialization of the parsed file.
    canonical: String,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    schema: u32,
    tool: Tool,
    command: &'static str,
    config: &'a RunConfig,
    metric: MetricEcho,
    #[serde(skip_serializing_if = "Option::is_none")]
    verdict: Option<&'static str>,
    report: T,
}

#[derive(Serialize)]
struct AveragePoint {
    p: Vec<f64>,
    gamma: Vec<Vec<f64>>,
    /// `Γ^k_ij` flattened with `k` slowest and `j` fastest.
    christoffel_star: Vec<f64>,
}

#[derive(Serialize)]
struct AverageReport {
    grid: GridSpec,
    quad_nodes: usize,
    points: Vec<AveragePoint>,
}

#[derive(Serialize)]
struct TraceStep {
    step: usize,
    /// Chart components of the reference direction.
    reference: Vec<f64>,
    /// Frame norm of the chain element after this step.
    norm: f64,
}

#[derive(Serialize)]
struct TorsionReport {
    point: PointVerdict,
    trace: Vec<TraceStep>,
    /// Torsion of the frame's flat connection, for frame families.
    ground_truth_chart: Option<Vec<f64>>,
}

#[derive(Serialize)]
struct ValidateReport {
    connection: ConnectionKind,
    steps_per_unit: usize,
    quad_nodes: usize,
    initial: Vec<Vec<f64>>,
    drift: f64,
    /// Drift accepted as compatible: `10 · tol_res`.
    threshold: f64,
}

fn load_metric(path: &Path) -> Result<MetricFamily, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_metric_spec(&text).map_err(|source| CliError::Metric {
        path: path.to_path_buf(),
        source,
    })
}

fn grid_for(dim: usize, resolution: usize, lower: &Option<Vec<f64>>, upper: &Option<Vec<f64>>) -> Result<GridSpec, CliError> {
    let lower = lower.clone().unwrap_or_else(|| vec![0.0; dim]);
    let upper = upper.clone().unwrap_or_else(|| vec![1.0; dim]);
    if lower.len() != dim || upper.len() != dim {
        return Err(Error::DimensionMismatch {
            expected: dim,
            found: if lower.len() != dim { lower.len() } else { upper.len() },
        }
        .into());
    }
    Ok(GridSpec::new(lower, upper, resolution)?)
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn emit_json(cfg: &RunConfig, bytes: &[u8]) -> Result<(), CliError> {
    match &cfg.out {
        Some(path) => write_file(path, bytes),
        None => io::stdout().write_all(bytes).map_err(|source| CliError::Io {
            path: PathBuf::from("<stdout>"),
            source,
        }),
    }
}

fn emit_csv(cfg: &RunConfig, dim: usize, rows: &[TorsionRow<'_>]) -> Result<(), CliError> {
    let Some(path) = &cfg.csv else {
        return Ok(());
    };
    let mut buf = Vec::new();
    write_torsion_csv(&mut buf, dim, rows).expect("writing to memory");
    write_file(path, &buf)
}

fn serialize<T: Serialize>(value: &T) -> Result<Vec<u8>, CliError> {
    to_json(value).map_err(|e| CliError::Io {
        path: PathBuf::from("<json>"),
        source: e.into(),
    })
}

pub fn verdict_exit_code(v: GlobalVerdict) -> i32 {
    match v {
        GlobalVerdict::Riemannian | GlobalVerdict::ClassicalBerwald | GlobalVerdict::GeneralizedBerwald => EXIT_OK,
        GlobalVerdict::NotGeneralizedBerwald => EXIT_NOT_GB,
        GlobalVerdict::Inconclusive => EXIT_INCONCLUSIVE,
    }
}

fn status_exit_code(s: PointStatus) -> i32 {
    match s {
        PointStatus::Passed => EXIT_OK,
        PointStatus::Failed => EXIT_NOT_GB,
        PointStatus::Marginal => EXIT_INCONCLUSIVE,
    }
}

fn status_str(s: PointStatus) -> &'static str {
    match s {
        PointStatus::Passed => "passed",
        PointStatus::Failed => "failed",
        PointStatus::Marginal => "marginal",
    }
}

fn fmt_vec(v: &[f64]) -> String {
    v.iter().copied().map(sci).collect::<Vec<_>>().join(", ")
}

fn envelope<'a, T: Serialize>(cfg: &'a RunConfig, metric: MetricEcho, verdict: Option<&'static str>, report: T) -> Envelope<'a, T> {
    Envelope {
        schema: SCHEMA_VERSION,
        tool: Tool {
            name: "berwald",
            version: env!("CARGO_PKG_VERSION"),
        },
        command: cfg.task.name(),
        config: cfg,
        metric,
        verdict,
        report,
    }
}

/// Executes a validated configuration and returns the process exit code.
pub fn run(cfg: &RunConfig) -> Result<i32, CliError> {
    let family = load_metric(&cfg.metric)?;
    let dim = family.dim();
    let metric = MetricEcho {
        family: family.name(),
        dim,
        canonical: to_spec_text(&family)?,
    };

    match &cfg.task {
        Task::Decide {
            resolution,
            lower,
            upper,
            ..
        } => {
            let grid = grid_for(dim, *resolution, lower, upper)?;
            let report: ClassificationReport = decide(&family, &grid, &cfg.decide_config(dim)?)?;
            let tensors: Vec<_> = report.verdicts.iter().map(PointVerdict::torsion_chart_tensor).collect();
            let rows: Vec<TorsionRow<'_>> = report
                .verdicts
                .iter()
                .zip(&tensors)
                .map(|(v, t)| TorsionRow {
                    point: &v.p,
                    torsion: t,
                    residual: v.residual_max,
                })
                .collect();
            emit_csv(cfg, dim, &rows)?;
            let code = verdict_exit_code(report.global);
            let global = report.global.as_str();
            emit_json(cfg, &serialize(&envelope(cfg, metric, Some(global), &report))?)?;
            Ok(code)
        }
        Task::Average {
            resolution,
            lower,
            upper,
        } => {
            let grid = grid_for(dim, *resolution, lower, upper)?;
            let averaging = cfg.decide_config(dim)?.averaging;
            let points = grid
                .points()
                .iter()
                .map(|p| {
                    let avg = AveragedMetricData::compute(&family, p, &averaging)?;
                    Ok(AveragePoint {
                        p: p.coords.clone(),
                        gamma: avg.gamma.row_iter().map(|r| r.iter().copied().collect()).collect(),
                        christoffel_star: avg.christoffel_star.as_slice().to_vec(),
                    })
                })
                .collect::<Result<Vec<_>, CliError>>()?;
            let report = AverageReport {
                grid,
                quad_nodes: averaging.quad.len(),
                points,
            };
            emit_json(cfg, &serialize(&envelope(cfg, metric, None, report))?)?;
            Ok(EXIT_OK)
        }
        Task::Torsion { point } => {
            if point.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: point.len(),
                }
                .into());
            }
            let p = ChartPoint::new(point.clone());
            let verdict = evaluate_point(&family, &p, &cfg.decide_config(dim)?)?;
            let diag = &verdict.chain_diag;
            let trace: Vec<TraceStep> = diag
                .references
                .iter()
                .zip(&diag.chain_norms)
                .enumerate()
                .map(|(k, (r, &norm))| TraceStep {
                    step: k + 1,
                    reference: r.clone(),
                    norm,
                })
                .collect();
            let mut err = io::stderr().lock();
            let _ = writeln!(err, "route: {:?}, termination: {:?}", diag.route, diag.termination);
            for s in &trace {
                let _ = writeln!(err, "step {}: reference = [{}], |T| = {}", s.step, fmt_vec(&s.reference), sci(s.norm));
            }
            let _ = writeln!(
                err,
                "selection residual = {}, validation residual = {}",
                sci(diag.selection_residual),
                sci(diag.validation_residual)
            );
            let ground_truth_chart = match family.kind() {
                FamilyKind::FrameMinkowski { .. } => Some(frame_ground_truth_torsion(&family, &p)?.comps().to_vec()),
                _ => None,
            };
            let tensor = verdict.torsion_chart_tensor();
            emit_csv(
                cfg,
                dim,
                &[TorsionRow {
                    point: &verdict.p,
                    torsion: &tensor,
                    residual: verdict.residual_max,
                }],
            )?;
            let code = status_exit_code(verdict.status);
            let status = status_str(verdict.status);
            let report = TorsionReport {
                point: verdict,
                trace,
                ground_truth_chart,
            };
            emit_json(cfg, &serialize(&envelope(cfg, metric, Some(status), report))?)?;
            Ok(code)
        }
        Task::Validate {
            path,
            vectors,
            steps,
            connection,
        } => {
            if let Some(bad) = path.iter().chain(vectors).find(|v| v.len() != dim) {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    found: bad.len(),
                }
                .into());
            }
            let tc = cfg.transport_config(dim, *steps);
            let tols = cfg.tolerances();
            let path: Vec<ChartPoint> = path.iter().map(|x| ChartPoint::new(x.clone())).collect();
            let field: Box<dyn ConnectionField + '_> = match connection {
                ConnectionKind::Extremal => Box::new(ExtremalConnection::new(&family, &tc, cfg.gamma_scale, tols)?),
                ConnectionKind::LeviCivita => {
                    let mut averaging = AveragingConfig::with_nodes(dim, tc.quad_nodes)?;
                    averaging.gamma_scale = cfg.gamma_scale;
                    Box::new(LeviCivitaConnection {
                        family: &family,
                        averaging,
                    })
                }
            };
            let initial = if vectors.is_empty() {
                let mut averaging = AveragingConfig::with_nodes(dim, tc.quad_nodes)?;
                averaging.gamma_scale = cfg.gamma_scale;
                let avg = AveragedMetricData::compute(&family, &path[0], &averaging)?;
                lattice(dim, tc.directions, 0.25)
                    .iter()
                    .map(|u| avg.to_chart_vector(u).as_slice().to_vec())
                    .collect()
            } else {
                vectors.clone()
            };
            let drift = validate_connection(&family, field.as_ref(), &path, &initial, *steps)?;
            let threshold = 10.0 * cfg.tol_res;
            let code = if drift <= threshold { EXIT_OK } else { EXIT_INCONCLUSIVE };
            let report = ValidateReport {
                connection: *connection,
                steps_per_unit: *steps,
                quad_nodes: tc.quad_nodes,
                initial,
                drift,
                threshold,
            };
            emit_json(cfg, &serialize(&envelope(cfg, metric, None, report))?)?;
            Ok(code)
        }
    }
}

/// Parses arguments, runs, reports errors on stderr and returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    let result = RunConfig::from_cli(cli).and_then(|cfg| {
        cfg.validate()?;
        run(&cfg)
    });
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
