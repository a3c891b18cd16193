//! JSON documents written and read by the commands. Every document carries a
//! `schema` string; readers reject unknown schemas and unknown fields.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sifa::{BlockFunctions, ConditionReport, RegressionFn, SifaParams};

use crate::error::{CliError, CliResult};
use crate::matrix_io::write_atomic;

pub const FIT_SCHEMA: &str = "sifa-fit-report v1";
pub const TRUTH_SCHEMA: &str = "sifa-truth v1";
pub const PROVENANCE_SCHEMA: &str = "sifa-provenance v1";
pub const RANK_SCHEMA: &str = "sifa-rank-report v1";
pub const METRICS_SCHEMA: &str = "sifa-metrics-report v1";
pub const BENCH_SCHEMA: &str = "sifa-bench-report v1";

pub const VERSION: &str = env!("CARGO_PKG_VERSION");

/// Row-major dense matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixData {
    pub rows: usize,
    pub cols: usize,
    pub values: Vec<f64>,
}

impl From<&DMatrix<f64>> for MatrixData {
    fn from(m: &DMatrix<f64>) -> Self {
        Self {
            rows: m.nrows(),
            cols: m.ncols(),
            values: m.transpose().as_slice().to_vec(),
        }
    }
}

impl MatrixData {
    pub fn to_matrix(&self) -> CliResult<DMatrix<f64>> {
        if self.values.len() != self.rows * self.cols {
            return Err(CliError::invalid(format!(
                "matrix declares {}×{} but holds {} values",
                self.rows,
                self.cols,
                self.values.len()
            )));
        }
        Ok(DMatrix::from_row_slice(self.rows, self.cols, &self.values))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase", deny_unknown_fields)]
pub enum FnData {
    Zero,
    Linear {
        beta: Vec<f64>,
        ridge: f64,
    },
    Lasso {
        beta: Vec<f64>,
        active: Vec<usize>,
        lambda: f64,
        dropped: Vec<usize>,
    },
    Kernel {
        x: MatrixData,
        y: Vec<f64>,
        bandwidth: Vec<f64>,
    },
}

impl From<&RegressionFn<f64>> for FnData {
    fn from(f: &RegressionFn<f64>) -> Self {
        match f {
            RegressionFn::Zero => Self::Zero,
            RegressionFn::Linear { beta, ridge } => Self::Linear {
                beta: beta.as_slice().to_vec(),
                ridge: *ridge,
            },
            RegressionFn::Lasso {
                beta,
                active,
                lambda,
                dropped,
            } => Self::Lasso {
                beta: beta.as_slice().to_vec(),
                active: active.clone(),
                lambda: *lambda,
                dropped: dropped.clone(),
            },
            RegressionFn::Kernel { x, y, bandwidth } => Self::Kernel {
                x: x.into(),
                y: y.as_slice().to_vec(),
                bandwidth: bandwidth.as_slice().to_vec(),
            },
        }
    }
}

impl FnData {
    pub fn to_fn(&self) -> CliResult<RegressionFn<f64>> {
        Ok(match self {
            Self::Zero => RegressionFn::Zero,
            Self::Linear { beta, ridge } => RegressionFn::Linear {
                beta: DVector::from_vec(beta.clone()),
                ridge: *ridge,
            },
            Self::Lasso {
                beta,
                active,
                lambda,
                dropped,
            } => RegressionFn::Lasso {
                beta: DVector::from_vec(beta.clone()),
                active: active.clone(),
                lambda: *lambda,
                dropped: dropped.clone(),
            },
            Self::Kernel { x, y, bandwidth } => RegressionFn::Kernel {
                x: x.to_matrix()?,
                y: DVector::from_vec(y.clone()),
                bandwidth: DVector::from_vec(bandwidth.clone()),
            },
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlockData {
    pub fns: Vec<FnData>,
    pub mix: MatrixData,
}

/// Serialized parameter set θ. Block 0 of `functions` is the joint block.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsData {
    pub v0: Vec<MatrixData>,
    pub v: Vec<MatrixData>,
    pub sigma0: Vec<f64>,
    pub sigma: Vec<Vec<f64>>,
    pub noise_var: Vec<f64>,
    pub functions: Vec<BlockData>,
}

impl From<&SifaParams<f64>> for ParamsData {
    fn from(p: &SifaParams<f64>) -> Self {
        Self {
            v0: p.v0.iter().map(MatrixData::from).collect(),
            v: p.v.iter().map(MatrixData::from).collect(),
            sigma0: p.sigma0.as_slice().to_vec(),
            sigma: p.sigma.iter().map(|s| s.as_slice().to_vec()).collect(),
            noise_var: p.noise_var.clone(),
            functions: p
                .functions
                .iter()
                .map(|b| BlockData {
                    fns: b.fns.iter().map(FnData::from).collect(),
                    mix: (&b.mix).into(),
                })
                .collect(),
        }
    }
}

impl ParamsData {
    pub fn to_params(&self) -> CliResult<SifaParams<f64>> {
        let matrices = |ms: &[MatrixData]| -> CliResult<Vec<DMatrix<f64>>> {
            ms.iter().map(MatrixData::to_matrix).collect()
        };
        let functions = self
            .functions
            .iter()
            .map(|b| {
                Ok(BlockFunctions {
                    fns: b.fns.iter().map(FnData::to_fn).collect::<CliResult<_>>()?,
                    mix: b.mix.to_matrix()?,
                })
            })
            .collect::<CliResult<_>>()?;
        let params = SifaParams {
            functions,
            v0: matrices(&self.v0)?,
            v: matrices(&self.v)?,
            sigma0: DVector::from_vec(self.sigma0.clone()),
            sigma: self.sigma.iter().map(|s| DVector::from_vec(s.clone())).collect(),
            noise_var: self.noise_var.clone(),
        };
        params.check_shapes()?;
        Ok(params)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConditionsData {
    pub a1_min_singular: Vec<f64>,
    pub a2_min_singular: Vec<f64>,
    pub b1_deviation: Vec<f64>,
    pub b2_deviation: Vec<f64>,
    pub joint_orthonormal: f64,
    pub individual_orthonormal: Vec<f64>,
    pub sigma_ordered: bool,
}

impl From<&ConditionReport> for ConditionsData {
    fn from(c: &ConditionReport) -> Self {
        // JSON has no infinity; an empty block reports its bound as 0.
        let finite = |v: &[f64]| v.iter().map(|x| if x.is_finite() { *x } else { 0.0 }).collect();
        Self {
            a1_min_singular: finite(&c.a1_min_singular),
            a2_min_singular: finite(&c.a2_min_singular),
            b1_deviation: c.b1_deviation.clone(),
            b2_deviation: c.b2_deviation.clone(),
            joint_orthonormal: c.joint_orthonormal,
            individual_orthonormal: c.individual_orthonormal.clone(),
            sigma_ordered: c.sigma_ordered,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Centering {
    pub views: Vec<Vec<f64>>,
    pub covariates: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Timings {
    pub load_seconds: f64,
    pub fit_seconds: f64,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitSettings {
    pub mode: String,
    pub regression: String,
    pub tol: f64,
    pub max_iters: usize,
    pub init: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FitReportFile {
    pub schema: String,
    pub version: String,
    /// "supervised" or "JIVE configuration (f=0)".
    pub configuration: String,
    pub ranks: String,
    pub settings: FitSettings,
    pub views: Vec<String>,
    pub covariates: Option<String>,
    /// Column means removed at load; absent with --no-center.
    pub centering: Option<Centering>,
    /// Per-view divisors applied after centering (--normalize frobenius).
    pub normalization: Option<Vec<f64>>,
    pub params: ParamsData,
    /// Posterior means E[U | Y], n×(r0+Σr_k).
    pub scores: MatrixData,
    pub loglik_trace: Vec<f64>,
    pub final_loglik: f64,
    pub iterations: usize,
    pub converged: bool,
    pub conditions: ConditionsData,
    pub timings: Timings,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthFiles {
    pub views: Vec<String>,
    pub covariates: Option<String>,
    pub factors: String,
    pub deterministic: String,
    pub signal: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruthManifest {
    pub schema: String,
    pub version: String,
    pub setting: u32,
    /// Condition set the loadings satisfy.
    pub mode: String,
    pub ranks: String,
    pub n: usize,
    pub dims: Vec<usize>,
    pub q: usize,
    pub seed: u64,
    pub params: ParamsData,
    /// Paths relative to the manifest's directory.
    pub files: TruthFiles,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSpecData {
    pub setting: u32,
    pub n: usize,
    pub dims: Vec<usize>,
    pub q: usize,
    pub ranks: String,
    pub noise: String,
    pub df: Option<f64>,
    pub noise_sd: Vec<f64>,
    pub joint_variance: f64,
    pub individual_variance: f64,
    pub decay: f64,
    pub coef_sd: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub schema: String,
    pub version: String,
    pub command: String,
    pub seed: u64,
    pub spec: SimSpecData,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TwoStepData {
    pub threshold: f64,
    pub view_signal_ranks: Vec<usize>,
    pub combined_signal_rank: usize,
    pub r0_raw: f64,
    pub r0_clamped: bool,
    /// 1-based views whose individual rank was clamped at zero.
    pub clamped_views: Vec<usize>,
    pub ranks: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LcvData {
    pub folds: usize,
    pub candidates: Vec<String>,
    /// `scores[c][f]`: negative held-out log-likelihood.
    pub scores: Vec<Vec<f64>>,
    pub means: Vec<f64>,
    pub selected: String,
    pub unconverged: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RankReport {
    pub schema: String,
    pub version: String,
    pub views: Vec<String>,
    pub two_step: Option<TwoStepData>,
    pub lcv: Option<LcvData>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SubspaceMetrics {
    pub grassmannian_joint: f64,
    pub grassmannian_individual: Vec<f64>,
    pub max_principal_angle: f64,
    pub recovery_error: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceRowData {
    pub view: usize,
    pub joint: f64,
    pub individual: f64,
    pub noise: f64,
    pub joint_groups: Vec<f64>,
    pub joint_unknown: f64,
    pub individual_groups: Vec<f64>,
    pub individual_unknown: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VarianceData {
    pub group_names: Vec<String>,
    pub rows: Vec<VarianceRowData>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub schema: String,
    pub version: String,
    pub report: String,
    pub truth: Option<String>,
    pub subspace: Option<SubspaceMetrics>,
    pub variance: Option<VarianceData>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchRow {
    pub n: usize,
    pub dims: Vec<usize>,
    pub q: usize,
    /// n·Σp_k, the size axis of the timing plot.
    pub entries: usize,
    pub mode: String,
    pub seconds: Vec<f64>,
    pub mean_seconds: f64,
    pub sd_seconds: f64,
    pub iterations: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchReport {
    pub schema: String,
    pub version: String,
    pub ranks: String,
    pub repeats: usize,
    pub seed: u64,
    pub rows: Vec<BenchRow>,
}

pub fn to_json<T: Serialize>(doc: &T) -> CliResult<String> {
    let mut s = serde_json::to_string_pretty(doc)
        .map_err(|e| CliError::invalid(format!("cannot serialize report: {e}")))?;
    s.push('\n');
    Ok(s)
}

pub fn write_json<T: Serialize>(path: &Path, doc: &T) -> CliResult<()> {
    write_atomic(path, to_json(doc)?.as_bytes())
}

/// Reads a document and checks its schema string.
pub fn read_json<T: DeserializeOwned>(path: &Path, schema: &str) -> CliResult<T> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
    let found = value.get("schema").and_then(|s| s.as_str()).unwrap_or("");
    if found != schema {
        return Err(CliError::invalid(format!(
            "{}: expected schema '{schema}', found '{found}'",
            path.display()
        )));
    }
    serde_json::from_value(value).map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))
}

/// Schema string of a JSON document, if it has one.
pub fn schema_of(path: &Path) -> CliResult<String> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let value: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::invalid(format!("{}: {e}", path.display())))?;
    Ok(value
        .get("schema")
        .and_then(|s| s.as_str())
        .unwrap_or("")
        .to_string())
}
