//! CSV and manifest writers.
//!
//! Numbers are written in scientific notation with 17 significant digits,
//! which round-trips every `f64`.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::cli::{CliError, Manifest};
use crate::experiment::MonteCarloResult;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    Lambda,
    Sigma,
}

impl Axis {
    pub fn label(self) -> &'static str {
        match self {
            Axis::Lambda => "lambda",
            Axis::Sigma => "sigma",
        }
    }
}

/// One curve file: an x column and named series over it.
#[derive(Debug, Clone, PartialEq)]
pub struct CurveTable {
    pub title: String,
    /// Written as a leading `axis` column when set.
    pub axis: Option<Axis>,
    pub x_label: &'static str,
    pub xs: Vec<f64>,
    pub series: Vec<(&'static str, Vec<f64>)>,
}

impl CurveTable {
    /// p1/p2 against `axis`, holding the other parameter at grid position
    /// `fixed_index`.
    pub fn pointwise(result: &MonteCarloResult, axis: Axis, fixed_index: usize) -> Self {
        let config = &result.config;
        let (xs, p1, p2, title) = match axis {
            Axis::Lambda => (
                config.lambda_grid.clone(),
                result.p1[fixed_index].clone(),
                result.p2[fixed_index].clone(),
                format!("sigma = {}", config.sigma_grid[fixed_index]),
            ),
            Axis::Sigma => (
                config.sigma_grid.clone(),
                result.p1.iter().map(|row| row[fixed_index]).collect(),
                result.p2.iter().map(|row| row[fixed_index]).collect(),
                format!("lambda = {}", config.lambda_grid[fixed_index]),
            ),
        };
        Self {
            title,
            axis: Some(axis),
            x_label: "value",
            xs,
            series: vec![("p1", p1), ("p2", p2)],
        }
    }

    /// p3/p4 against sigma.
    pub fn path(result: &MonteCarloResult) -> Self {
        Self {
            title: "path failure over the lambda grid".into(),
            axis: None,
            x_label: "sigma",
            xs: result.config.sigma_grid.clone(),
            series: vec![("p3", result.p3.clone()), ("p4", result.p4.clone())],
        }
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        if self.axis.is_some() {
            out.push_str("axis,");
        }
        out.push_str(self.x_label);
        for (name, _) in &self.series {
            out.push(',');
            out.push_str(name);
        }
        out.push('\n');
        for (i, &x) in self.xs.iter().enumerate() {
            if let Some(axis) = self.axis {
                out.push_str(axis.label());
                out.push(',');
            }
            out.push_str(&format_number(x));
            for (_, values) in &self.series {
                let _ = write!(out, ",{}", format_number(values[i]));
            }
            out.push('\n');
        }
        out
    }
}

/// 17 significant digits in scientific notation.
pub fn format_number(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_csv(path: &Path, table: &CurveTable) -> Result<(), CliError> {
    fs::write(path, table.to_csv()).map_err(|e| CliError::io(path, e))
}

pub fn write_manifest(path: &Path, manifest: &Manifest) -> Result<(), CliError> {
    let text =
        serde_json::to_string_pretty(manifest).map_err(|e| CliError::Config(e.to_string()))?;
    fs::write(path, text + "\n").map_err(|e| CliError::io(path, e))
}
