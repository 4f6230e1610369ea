use std::fmt;
use std::path::PathBuf;
use std::str::FromStr;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

#[derive(Debug, Parser)]
#[command(name = "robsub", version, about = "Robust PCA with outlier-sparsity control")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write synthetic datasets.
    #[command(subcommand)]
    Gen(GenCommand),
    /// Robust PCA for a fixed lambda2, or over a path with a selection rule.
    Fit(FitArgs),
    /// Rank-regularized fit, optionally certified against the convex program.
    Rank(RankArgs),
    /// Online subspace tracking over a stream of rows.
    Track(TrackArgs),
    /// Robust kernel PCA, optionally followed by k-means on the embedding.
    Kpca(KpcaArgs),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct OutputArgs {
    /// Output directory (created if missing).
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
    /// Overwrite existing files.
    #[arg(long)]
    pub force: bool,
    /// Write matrices in the binary layout instead of text.
    #[arg(long)]
    pub binary: bool,
}

#[derive(Debug, Subcommand)]
pub enum GenCommand {
    /// Low-rank plus noise plus sparse entry outliers.
    Lowrank(GenLowrank),
    /// Concentric rings with uniform outliers appended.
    Circles(GenCircles),
    /// Two-parameter logistic item responses with random responders.
    Irt(GenIrt),
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenLowrank {
    #[arg(long, default_value_t = 200)]
    pub n: usize,
    #[arg(long, default_value_t = 200)]
    pub p: usize,
    #[arg(long, default_value_t = 20)]
    pub q: usize,
    /// Probability that an entry carries an outlier.
    #[arg(long, default_value_t = 0.01)]
    pub rho: f64,
    /// Noise variance.
    #[arg(long, default_value_t = 0.01)]
    pub sigma2: f64,
    /// Outlier magnitudes are uniform on [-range, range].
    #[arg(long, default_value_t = 5.0)]
    pub range: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenCircles {
    /// Points per ring.
    #[arg(long, default_value_t = 150)]
    pub per_ring: usize,
    #[arg(long, value_delimiter = ',', default_values_t = [1.0, 2.8, 5.0])]
    pub radii: Vec<f64>,
    /// Per-coordinate noise variance.
    #[arg(long, default_value_t = 0.15)]
    pub sigma2: f64,
    #[arg(long, default_value_t = 5)]
    pub outliers: usize,
    /// Outliers are uniform on [-box, box]^2.
    #[arg(long = "box", default_value_t = 7.0)]
    pub half_width: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct GenIrt {
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long, default_value_t = 200)]
    pub p: usize,
    #[arg(long, default_value_t = 5)]
    pub q: usize,
    /// 1-based inclusive row range redrawn as random responders, e.g. 101:120.
    #[arg(long)]
    pub aberrant: Option<RowRange>,
    /// Endorsement probability of the random responders.
    #[arg(long, default_value_t = 0.5)]
    pub rate: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub output: OutputArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RowRange {
    pub first: usize,
    pub last: usize,
}

impl FromStr for RowRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (a, b) = s.split_once(':').ok_or("expected FIRST:LAST")?;
        let first: usize = a.trim().parse().map_err(|_| format!("bad row {a:?}"))?;
        let last: usize = b.trim().parse().map_err(|_| format!("bad row {b:?}"))?;
        if first == 0 || last < first {
            return Err("rows are 1-based and FIRST <= LAST".into());
        }
        Ok(Self { first, last })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Reg {
    /// Group penalty on whole rows.
    Row,
    /// Entry-wise penalty.
    Entry,
}

impl From<Reg> for robsub::RegularizerKind {
    fn from(r: Reg) -> Self {
        match r {
            Reg::Row => Self::RowL2,
            Reg::Entry => Self::EntryL1,
        }
    }
}

/// Rule for picking a point on a path.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "rule", rename_all = "lowercase")]
pub enum Select {
    /// The first point with exactly (or at least) this many flagged rows.
    Count { n: usize },
    /// The variance-deviation rule with white noise of this variance.
    Noise { sigma2: f64 },
}

impl FromStr for Select {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (rule, arg) = s.split_once(':').ok_or("expected count:N or noise:sigma2=V")?;
        match rule {
            "count" => Ok(Self::Count {
                n: arg.parse().map_err(|_| format!("bad count {arg:?}"))?,
            }),
            "noise" => {
                let v = arg.strip_prefix("sigma2=").ok_or("expected noise:sigma2=V")?;
                let sigma2: f64 = v.parse().map_err(|_| format!("bad variance {v:?}"))?;
                if !(sigma2 > 0.0) {
                    return Err("noise variance must be positive".into());
                }
                Ok(Self::Noise { sigma2 })
            }
            other => Err(format!("unknown selection rule {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct SolverArgs {
    #[arg(long, default_value_t = 100)]
    pub max_iters: usize,
    /// Relative objective change that stops the iteration.
    #[arg(long, default_value_t = 1e-7)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

impl SolverArgs {
    pub fn options(&self) -> robsub::SolverOptions {
        robsub::SolverOptions {
            max_iters: self.max_iters,
            rel_tol: self.tol,
            seed: self.seed,
            record_trace: true,
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct ReportArgs {
    /// Write the JSON report here instead of stdout.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct FitArgs {
    /// Data matrix (text, or binary detected by its magic).
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub q: usize,
    #[arg(long, required_unless_present = "path", conflicts_with = "path")]
    pub lambda2: Option<f64>,
    /// Trace the robustification path instead of a single fit.
    #[arg(long, requires = "select")]
    pub path: bool,
    /// Number of grid points.
    #[arg(long, default_value_t = 200, requires = "path")]
    pub grid: usize,
    /// Smallest grid value as a fraction of the largest.
    #[arg(long, default_value_t = 1e-2, requires = "path")]
    pub eps: f64,
    /// Largest grid value (default: just above the data-driven bound).
    #[arg(long, requires = "path")]
    pub lambda_max: Option<f64>,
    /// count:N or noise:sigma2=V.
    #[arg(long, requires = "path")]
    pub select: Option<Select>,
    /// Cold-start every grid point on worker threads (ROBSUB_THREADS caps them).
    #[arg(long, requires = "path")]
    pub cold: bool,
    /// Write the path as a table (lambda2, support, objective, per-row norms).
    #[arg(long, requires = "path")]
    pub path_out: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t = Reg::Row)]
    pub reg: Reg,
    /// Reweighted refinement rounds applied to the final fit.
    #[arg(long, default_value_t = 0)]
    pub refine: usize,
    #[arg(long, default_value_t = 1e-5)]
    pub delta: f64,
    /// Refinement weight (default lambda2 * delta).
    #[arg(long)]
    pub lambda0: Option<f64>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub report: ReportArgs,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum CenterArg {
    Estimate,
    None,
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct RankArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Rank upper bound.
    #[arg(long)]
    pub qbar: usize,
    /// Nuclear (factor ridge) weight; defaults to the noise preset with --sigma2.
    #[arg(long, required_unless_present = "sigma2")]
    pub lstar: Option<f64>,
    /// Outlier weight; defaults to the noise preset with --sigma2.
    #[arg(long, required_unless_present = "sigma2")]
    pub lambda2: Option<f64>,
    /// Noise variance for the preset weights.
    #[arg(long)]
    pub sigma2: Option<f64>,
    #[arg(long, value_enum, default_value_t = Reg::Row)]
    pub reg: Reg,
    #[arg(long, value_enum, default_value_t = CenterArg::Estimate)]
    pub center: CenterArg,
    /// Run the spectral-norm optimality check.
    #[arg(long)]
    pub certify: bool,
    /// Cross-check against the convex reference solver.
    #[arg(long)]
    pub oracle_spcp: bool,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub report: ReportArgs,
}

/// `auto`, `inf` or a number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(untagged)]
pub enum Lambda2Arg {
    Auto,
    Inf,
    Value(f64),
}

impl FromStr for Lambda2Arg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "auto" => Ok(Self::Auto),
            "inf" => Ok(Self::Inf),
            v => {
                let x: f64 = v
                    .parse()
                    .map_err(|_| format!("expected auto, inf or a number, got {v:?}"))?;
                if !(x > 0.0) {
                    return Err("lambda2 must be positive".into());
                }
                Ok(Self::Value(x))
            }
        }
    }
}

impl fmt::Display for Lambda2Arg {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Auto => f.write_str("auto"),
            Self::Inf => f.write_str("inf"),
            Self::Value(v) => write!(f, "{v}"),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct TrackArgs {
    /// Stream of rows; the first --init rows form the batch phase.
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub q: usize,
    /// Rows used for batch initialization.
    #[arg(long = "init")]
    pub n0: usize,
    #[arg(long, default_value_t = 0.99)]
    pub beta: f64,
    /// auto (with --select), inf, or a value.
    #[arg(long, default_value = "1.65")]
    pub lambda2: Lambda2Arg,
    /// Path rule used by --lambda2 auto.
    #[arg(long)]
    pub select: Option<Select>,
    #[arg(long, default_value_t = 100)]
    pub grid: usize,
    #[arg(long, default_value_t = 1e-2)]
    pub eps: f64,
    /// Reference subspace (p x q) for angle tracking.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Per-step metrics table.
    #[arg(long)]
    pub metrics: Option<PathBuf>,
    /// Also run the non-robust tracker (lambda2 = inf) on the same stream.
    #[arg(long)]
    pub ablate_nonrobust: bool,
    /// Metrics table of the ablation run.
    #[arg(long, requires = "ablate_nonrobust")]
    pub ablation_metrics: Option<PathBuf>,
    /// Re-orthonormalize the subspace every T steps.
    #[arg(long)]
    pub reorth: Option<usize>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub report: ReportArgs,
}

/// How the Gram matrix is built from `--in`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum GramSpec {
    Rbf {
        c: f64,
    },
    Linear,
    /// `--in` is an edge list; `zeta: None` picks the smallest PSD shift.
    Graph {
        zeta: Option<f64>,
    },
    /// `--in` already holds the Gram matrix.
    File,
}

impl FromStr for GramSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let (kind, arg) = s.split_once(':').unwrap_or((s, ""));
        let value = |key: &str| -> Result<f64, String> {
            let v = arg
                .strip_prefix(key)
                .and_then(|r| r.strip_prefix('='))
                .ok_or(format!("expected {kind}:{key}=V"))?;
            v.parse().map_err(|_| format!("bad number {v:?}"))
        };
        match kind {
            "rbf" => Ok(Self::Rbf { c: value("c")? }),
            "linear" if arg.is_empty() => Ok(Self::Linear),
            "graph" if arg == "auto" || arg.is_empty() => Ok(Self::Graph { zeta: None }),
            "graph" => Ok(Self::Graph {
                zeta: Some(value("zeta")?),
            }),
            "file" if arg.is_empty() => Ok(Self::File),
            _ => Err(format!(
                "unknown gram spec {s:?} (rbf:c=V, linear, graph:auto, graph:zeta=V, file)"
            )),
        }
    }
}

#[derive(Debug, Clone, Args, Serialize)]
pub struct KpcaArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// rbf:c=V, linear, graph:auto, graph:zeta=V or file.
    #[arg(long, default_value = "rbf:c=10")]
    pub gram: GramSpec,
    /// Node count for edge lists (default: largest id + 1).
    #[arg(long)]
    pub nodes: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub qbar: usize,
    #[arg(long, default_value_t = 1.0)]
    pub lstar: f64,
    #[arg(long, default_value_t = 1.85)]
    pub lambda2: f64,
    /// Run k-means with this many clusters on the embedding.
    #[arg(long)]
    pub cluster: Option<usize>,
    /// Keep flagged rows when clustering.
    #[arg(long, requires = "cluster")]
    pub keep_outliers: bool,
    /// Ground-truth labels (one integer per row) for the adjusted Rand index.
    #[arg(long, requires = "cluster")]
    pub ari: Option<PathBuf>,
    #[command(flatten)]
    pub solver: SolverArgs,
    #[command(flatten)]
    pub report: ReportArgs,
}
