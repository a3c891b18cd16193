//! Command-line flags. Each command's flag struct doubles as its section of
//! the TOML config file; flags given on the command line win over the file.

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::Deserialize;

#[derive(Debug, Parser)]
#[command(name = "sifa", version, about = "Supervised integrated factor analysis")]
pub struct Cli {
    /// TOML config file; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads for replicate, fold and column parallelism.
    #[arg(long, global = true, env = "SIFA_THREADS")]
    pub threads: Option<usize>,

    /// Seed override for every seeded step.
    #[arg(long, global = true)]
    pub seed: Option<u64>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a benchmark dataset with its ground truth.
    Simulate(SimulateArgs),
    /// Fit the model by EM and write a fit report.
    Fit(FitArgs),
    /// Select ranks by the two-step rule or likelihood cross-validation.
    Rank(RankArgs),
    /// Compare a fit with ground truth and tabulate explained variance.
    Metrics(MetricsArgs),
    /// Time fits of both modes over a list of problem sizes.
    Bench(BenchArgs),
}

/// Top-level layout of the config file.
#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub threads: Option<usize>,
    pub seed: Option<u64>,
    pub simulate: Option<SimulateArgs>,
    pub fit: Option<FitArgs>,
    pub rank: Option<RankArgs>,
    pub metrics: Option<MetricsArgs>,
    pub bench: Option<BenchArgs>,
}

macro_rules! mergeable {
    ($t:ident { $($f:ident),* $(,)? }) => {
        impl $t {
            /// Field-wise `self.or(base)`.
            pub fn merge(self, base: Self) -> Self {
                Self { $($f: self.$f.or(base.$f)),* }
            }
        }
    };
}

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateArgs {
    /// Benchmark setting, 1 to 5.
    #[arg(long)]
    pub setting: Option<u32>,
    #[arg(long)]
    pub n: Option<usize>,
    /// View widths, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub p: Option<Vec<usize>>,
    /// Number of covariates.
    #[arg(long)]
    pub q: Option<usize>,
    /// r0,r1,..,rK
    #[arg(long)]
    pub ranks: Option<String>,
    /// gaussian or t
    #[arg(long)]
    pub noise: Option<String>,
    /// Degrees of freedom of t noise.
    #[arg(long)]
    pub df: Option<f64>,
    /// Per-view noise standard deviations.
    #[arg(long, value_delimiter = ',')]
    pub noise_sd: Option<Vec<f64>>,
    /// csv or tsv
    #[arg(long)]
    pub format: Option<String>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
mergeable!(SimulateArgs { setting, n, p, q, ranks, noise, df, noise_sd, format, out });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FitArgs {
    /// View matrix files, comma-separated.
    #[arg(long, value_delimiter = ',')]
    pub views: Option<Vec<PathBuf>>,
    /// Covariate matrix file; omit for the f = 0 configuration.
    #[arg(long)]
    pub covariates: Option<PathBuf>,
    /// r0,r1,..,rK
    #[arg(long)]
    pub ranks: Option<String>,
    /// general or orthogonal
    #[arg(long)]
    pub mode: Option<String>,
    /// linear, lasso or kernel
    #[arg(long)]
    pub regression: Option<String>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// svd or random
    #[arg(long)]
    pub init: Option<String>,
    /// Keep the input columns as they are.
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    pub no_center: Option<bool>,
    /// frobenius: scale each view to unit norm (general mode only).
    #[arg(long)]
    pub normalize: Option<String>,
    /// Exit with status 4 when EM stops before converging.
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    pub strict: Option<bool>,
    /// Report path.
    #[arg(long)]
    pub out: Option<PathBuf>,
}
mergeable!(FitArgs {
    views, covariates, ranks, mode, regression, tol, max_iters, init, no_center, normalize, strict, out,
});

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RankArgs {
    #[arg(long, value_delimiter = ',')]
    pub views: Option<Vec<PathBuf>>,
    #[arg(long)]
    pub covariates: Option<PathBuf>,
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    pub no_center: Option<bool>,
    /// Variance share for the two-step signal ranks, in (0, 1).
    #[arg(long)]
    pub threshold: Option<f64>,
    /// Run likelihood cross-validation over --candidates.
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    pub lcv: Option<bool>,
    /// Candidate rank sets separated by ';', each r0,r1,..,rK.
    #[arg(long, value_delimiter = ';')]
    pub candidates: Option<Vec<String>>,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub mode: Option<String>,
    #[arg(long)]
    pub regression: Option<String>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
mergeable!(RankArgs {
    views, covariates, no_center, threshold, lcv, candidates, folds, mode, regression, tol, max_iters, out,
});

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MetricsArgs {
    /// Fit report, or a truth manifest.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Truth manifest written by `simulate`.
    #[arg(long)]
    pub truth: Option<PathBuf>,
    /// Tabulate explained variance on the fitted data.
    #[arg(long, num_args = 0..=1, require_equals = true, default_missing_value = "true")]
    pub variance: Option<bool>,
    /// Data files for the variance table; default: those named in the report.
    #[arg(long, value_delimiter = ',')]
    pub views: Option<Vec<PathBuf>>,
    #[arg(long)]
    pub covariates: Option<PathBuf>,
    /// Covariate groups separated by ';', each name:columns with 0-based
    /// columns and ranges, e.g. "geno:0-4;sex:5".
    #[arg(long, value_delimiter = ';')]
    pub groups: Option<Vec<String>>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Delimited variance table.
    #[arg(long)]
    pub table: Option<PathBuf>,
}
mergeable!(MetricsArgs { report, truth, variance, views, covariates, groups, out, table });

#[derive(Debug, Clone, Default, Args, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchArgs {
    /// Sizes separated by ';', each n,p1,..,pK,q.
    #[arg(long, value_delimiter = ';')]
    pub sizes: Option<Vec<String>>,
    #[arg(long)]
    pub repeats: Option<usize>,
    #[arg(long)]
    pub ranks: Option<String>,
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Delimited timing table.
    #[arg(long)]
    pub table: Option<PathBuf>,
}
mergeable!(BenchArgs { sizes, repeats, ranks, tol, max_iters, out, table });
