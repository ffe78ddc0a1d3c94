//! JSON manifold description files.
//!
//! ```json
//! {
//!   "name": "conformal",
//!   "dim": 4,
//!   "g": [["exp(0.2*x3)", "0", "0", "0"], ...],
//!   "P": [["1", "0", "0", "0"], ...],
//!   "domain": [[-1, 1], [-1, 1], [-1, 1], [-1, 1]],
//!   "sampling": {"grid": 3, "random": 50, "seed": 0}
//! }
//! ```
//!
//! `domain` and `sampling` (and each of its fields) are optional.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::catalog::SamplingPlan;
use crate::expr::{Expr, ParseError, ScalarField};
use crate::geometry::{ChartError, ManifoldChart};

#[derive(Debug, Error)]
pub enum SpecFileError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed spec file: {0}")]
    Json(#[from] serde_json::Error),
    #[error("dimension must be a positive even number, got {0}")]
    OddDimension(usize),
    #[error("{field} must be a {dim}x{dim} matrix")]
    Shape { field: &'static str, dim: usize },
    #[error("domain must list {0} [lo, hi] pairs")]
    Domain(usize),
    #[error("{field}[{row}][{col}]: {source}")]
    Expression {
        field: &'static str,
        row: usize,
        col: usize,
        #[source]
        source: ParseError,
    },
    #[error(transparent)]
    Chart(#[from] ChartError),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingOverrides {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub random: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

impl SamplingOverrides {
    pub fn apply(&self, mut plan: SamplingPlan) -> SamplingPlan {
        if let Some(g) = self.grid {
            plan.grid = g;
        }
        if let Some(r) = self.random {
            plan.random = r;
        }
        if let Some(s) = self.seed {
            plan.seed = s;
        }
        plan
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldSpecFile {
    pub name: String,
    pub dim: usize,
    pub g: Vec<Vec<String>>,
    #[serde(rename = "P")]
    pub p: Vec<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub domain: Option<Vec<[f64; 2]>>,
    #[serde(default)]
    pub sampling: SamplingOverrides,
}

/// A chart built from a spec file, with any warnings raised while loading.
#[derive(Debug, Clone)]
pub struct LoadedSpec {
    pub chart: ManifoldChart,
    pub sampling: SamplingOverrides,
    pub warnings: Vec<String>,
}

impl ManifoldSpecFile {
    pub fn from_json(text: &str) -> Result<Self, SpecFileError> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn read(path: &Path) -> Result<Self, SpecFileError> {
        let text = std::fs::read_to_string(path).map_err(|source| SpecFileError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    fn parse_matrix(&self, field: &'static str, rows: &[Vec<String>]) -> Result<Vec<ScalarField>, SpecFileError> {
        let d = self.dim;
        if rows.len() != d || rows.iter().any(|r| r.len() != d) {
            return Err(SpecFileError::Shape { field, dim: d });
        }
        let mut out = Vec::with_capacity(d * d);
        for (row, entries) in rows.iter().enumerate() {
            for (col, src) in entries.iter().enumerate() {
                let f = ScalarField::parse(src, d).map_err(|source| SpecFileError::Expression {
                    field,
                    row,
                    col,
                    source,
                })?;
                out.push(f);
            }
        }
        Ok(out)
    }

    /// Parses every expression and builds the chart. A `g` whose entries
    /// differ textually across the diagonal is replaced by
    /// `(g_ij + g_ji)/2` and a warning is recorded.
    pub fn load(&self) -> Result<LoadedSpec, SpecFileError> {
        let d = self.dim;
        if d == 0 || !d.is_multiple_of(2) {
            return Err(SpecFileError::OddDimension(d));
        }
        let mut g = self.parse_matrix("g", &self.g)?;
        let p = self.parse_matrix("P", &self.p)?;
        let mut warnings = Vec::new();
        for i in 0..d {
            for j in (i + 1)..d {
                if self.g[i][j].trim() != self.g[j][i].trim() {
                    warnings.push(format!(
                        "g[{i}][{j}] = `{}` and g[{j}][{i}] = `{}` differ; using their average",
                        self.g[i][j], self.g[j][i]
                    ));
                    let avg = Expr::mul(
                        Expr::constant(0.5),
                        Expr::add(g[i * d + j].expr().clone(), g[j * d + i].expr().clone()),
                    );
                    let f = ScalarField::from_expr(avg, d).expect("same dimension");
                    g[i * d + j] = f.clone();
                    g[j * d + i] = f;
                }
            }
        }
        let domain = match &self.domain {
            Some(box_) if box_.len() != d => return Err(SpecFileError::Domain(d)),
            Some(box_) => box_.iter().map(|[lo, hi]| (*lo, *hi)).collect(),
            None => vec![(-1.0, 1.0); d],
        };
        let chart = ManifoldChart::new(self.name.clone(), d, g, p, domain)?;
        Ok(LoadedSpec {
            chart,
            sampling: self.sampling.clone(),
            warnings,
        })
    }
}

pub fn load_path(path: &Path) -> Result<LoadedSpec, SpecFileError> {
    ManifoldSpecFile::read(path)?.load()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diag_spec(g01: &str, g10: &str) -> String {
        format!(
            r#"{{"name": "t", "dim": 2,
                "g": [["1", "{g01}"], ["{g10}", "1"]],
                "P": [["1", "0"], ["0", "-1"]],
                "sampling": {{"seed": 9}}}}"#
        )
    }

    #[test]
    fn loads_symmetric_spec_without_warnings() {
        let loaded = ManifoldSpecFile::from_json(&diag_spec("0", "0")).unwrap().load().unwrap();
        assert!(loaded.warnings.is_empty());
        assert_eq!(loaded.chart.dim(), 2);
        assert_eq!(loaded.chart.domain(), &[(-1.0, 1.0), (-1.0, 1.0)]);
        assert_eq!(loaded.sampling.apply(SamplingPlan::default()).seed, 9);
    }

    #[test]
    fn textual_asymmetry_is_symmetrized_with_warning() {
        let loaded = ManifoldSpecFile::from_json(&diag_spec("0.2*x1", "x1/5"))
            .unwrap()
            .load()
            .unwrap();
        assert_eq!(loaded.warnings.len(), 1);
        let g = loaded.chart.metric_fields();
        assert!((g[1].eval(&[1.0, 0.0]).unwrap() - 0.2).abs() < 1e-15);
        assert!((g[2].eval(&[1.0, 0.0]).unwrap() - 0.2).abs() < 1e-15);
    }

    #[test]
    fn parse_errors_carry_position() {
        let err = ManifoldSpecFile::from_json(&diag_spec("0", "x1 +* 2")).unwrap().load().unwrap_err();
        let msg = err.to_string();
        assert!(msg.starts_with("g[1][0]: ") && msg.contains("offset"), "{msg}");
        if let SpecFileError::Expression { source, .. } = &err {
            assert_eq!(source.offset(), Some(4));
        }
        assert!(matches!(err, SpecFileError::Expression { row: 1, col: 0, .. }));
    }

    #[test]
    fn rejects_bad_shapes() {
        let odd = r#"{"name": "t", "dim": 3, "g": [], "P": []}"#;
        assert!(matches!(
            ManifoldSpecFile::from_json(odd).unwrap().load(),
            Err(SpecFileError::OddDimension(3))
        ));
        let short = r#"{"name": "t", "dim": 2, "g": [["1"]], "P": [["1","0"],["0","-1"]]}"#;
        assert!(matches!(
            ManifoldSpecFile::from_json(short).unwrap().load(),
            Err(SpecFileError::Shape { field: "g", .. })
        ));
        assert!(ManifoldSpecFile::from_json(r#"{"name": "t"}"#).is_err());
    }
}
