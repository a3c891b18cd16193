use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use sifa::{Mode, MultiViewDataset, RankSet};

use crate::error::{CliError, CliResult};
use crate::matrix_io::read_matrix;
use crate::report::Centering;

pub struct Loaded {
    pub data: MultiViewDataset<f64>,
    pub centering: Option<Centering>,
    pub normalization: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Normalize {
    None,
    Frobenius,
}

pub fn parse_normalize(s: Option<&str>, mode: Mode) -> CliResult<Normalize> {
    match s {
        None | Some("none") => Ok(Normalize::None),
        Some("frobenius") if mode == Mode::Orthogonal => Err(CliError::invalid(
            "--normalize is not applied in orthogonal mode; fit the data on its own scale",
        )),
        Some("frobenius") => Ok(Normalize::Frobenius),
        Some(other) => Err(CliError::invalid(format!("unknown normalization '{other}'"))),
    }
}

/// Reads the views and covariates, centres every column unless `center` is
/// false, then divides each view by `scales` (given) or its Frobenius norm.
pub fn load(
    views: &[PathBuf],
    covariates: Option<&Path>,
    center: bool,
    normalize: Normalize,
    scales: Option<&[f64]>,
) -> CliResult<Loaded> {
    if views.is_empty() {
        return Err(CliError::invalid("--views needs at least one file"));
    }
    let ys: Vec<DMatrix<f64>> = views
        .iter()
        .map(|p| read_matrix(p).map(|m| m.values))
        .collect::<CliResult<_>>()?;
    let x = covariates.map(|p| read_matrix(p).map(|m| m.values)).transpose()?;
    let raw = MultiViewDataset::new(ys, x)?;
    let (mut data, centering) = if center {
        let (d, means) = raw.center();
        let c = Centering {
            views: means.views.iter().map(|m| m.as_slice().to_vec()).collect(),
            covariates: means.covariates.as_ref().map(|m| m.as_slice().to_vec()),
        };
        (d, Some(c))
    } else {
        (raw, None)
    };
    let normalization = match (normalize, scales) {
        (_, Some(s)) => {
            if s.len() != data.num_views() {
                return Err(CliError::invalid(format!(
                    "{} normalization scales for {} views",
                    s.len(),
                    data.num_views()
                )));
            }
            Some(s.to_vec())
        }
        (Normalize::Frobenius, None) => Some(data.views.iter().map(|v| v.values.norm()).collect()),
        (Normalize::None, None) => None,
    };
    if let Some(s) = &normalization {
        for (v, &scale) in data.views.iter_mut().zip(s) {
            if !(scale > 0.0) {
                return Err(CliError::invalid(format!("view {} is identically zero", v.view_id)));
            }
            v.values /= scale;
        }
    }
    Ok(Loaded {
        data,
        centering,
        normalization,
    })
}

pub fn parse_ranks(s: &str) -> CliResult<RankSet> {
    s.parse::<RankSet>().map_err(CliError::from)
}

pub fn parse_mode(s: Option<&str>) -> CliResult<Mode> {
    s.map_or(Ok(Mode::General), |m| m.parse().map_err(CliError::from))
}

pub fn required<T>(v: Option<T>, flag: &str) -> CliResult<T> {
    v.ok_or_else(|| CliError::invalid(format!("missing required {flag}")))
}
