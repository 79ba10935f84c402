//! Edge and node covariates and construction of the per-pair design rows.
//!
//! A design row for the pair `(i, j)` has the layout
//! `(1, A_ij, Y_ij^(1), .., Y_ij^(d1), h_1(Z_i, Z_j), .., h_d2(Z_i, Z_j))`.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, SeedSet};

/// Turns a pair of node covariate values into an edge covariate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TransformKind {
    AbsDiff,
    EqualityIndicator,
}

impl TransformKind {
    pub fn apply(self, zi: f64, zj: f64) -> f64 {
        match self {
            TransformKind::AbsDiff => (zi - zj).abs(),
            TransformKind::EqualityIndicator => f64::from(u8::from(zi == zj)),
        }
    }
}

impl std::str::FromStr for TransformKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "abs-diff" | "absdiff" => Ok(Self::AbsDiff),
            "equal" | "equality" | "equality-indicator" => Ok(Self::EqualityIndicator),
            other => Err(Error::InvalidCovariates(format!(
                "unknown transform `{other}`"
            ))),
        }
    }
}

pub fn transform_node_pair(kind: TransformKind, zi: f64, zj: f64) -> f64 {
    kind.apply(zi, zj)
}

/// Covariates attached to the reference graph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovariateBundle {
    n: usize,
    edge_covs: Vec<DMatrix<f64>>,
    /// `n x d2`, one column per node covariate.
    node_covs: DMatrix<f64>,
    node_transforms: Vec<TransformKind>,
    edge_names: Vec<String>,
    node_names: Vec<String>,
}

impl CovariateBundle {
    pub fn none(n: usize) -> Self {
        Self {
            n,
            edge_covs: Vec::new(),
            node_covs: DMatrix::zeros(n, 0),
            node_transforms: Vec::new(),
            edge_names: Vec::new(),
            node_names: Vec::new(),
        }
    }

    /// Validates shapes, symmetry, zero diagonals and finiteness.
    pub fn new(
        n: usize,
        edge_covs: Vec<DMatrix<f64>>,
        node_covs: DMatrix<f64>,
        node_transforms: Vec<TransformKind>,
    ) -> Result<Self> {
        for (k, y) in edge_covs.iter().enumerate() {
            if y.nrows() != n || y.ncols() != n {
                return Err(Error::InvalidCovariates(format!(
                    "edge covariate {k} is {}x{}, expected {n}x{n}",
                    y.nrows(),
                    y.ncols()
                )));
            }
            if y.iter().any(|v| !v.is_finite()) {
                return Err(Error::InvalidCovariates(format!(
                    "edge covariate {k} has missing or non-finite values"
                )));
            }
            for i in 0..n {
                if y[(i, i)] != 0.0 {
                    return Err(Error::InvalidCovariates(format!(
                        "edge covariate {k} has nonzero diagonal at {i}"
                    )));
                }
                for j in 0..i {
                    if y[(i, j)] != y[(j, i)] {
                        return Err(Error::InvalidCovariates(format!(
                            "edge covariate {k} is asymmetric at ({i}, {j})"
                        )));
                    }
                }
            }
        }
        if node_covs.nrows() != n {
            return Err(Error::InvalidCovariates(format!(
                "node covariate table has {} rows, expected {n}",
                node_covs.nrows()
            )));
        }
        if node_covs.ncols() != node_transforms.len() {
            return Err(Error::InvalidCovariates(format!(
                "{} node covariates but {} transforms",
                node_covs.ncols(),
                node_transforms.len()
            )));
        }
        if node_covs.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidCovariates(
                "node covariates have non-finite values".into(),
            ));
        }
        let edge_names = (1..=edge_covs.len()).map(|k| format!("edge_{k}")).collect();
        let node_names = (1..=node_transforms.len())
            .map(|k| format!("node_{k}"))
            .collect();
        Ok(Self {
            n,
            edge_covs,
            node_covs,
            node_transforms,
            edge_names,
            node_names,
        })
    }

    pub fn with_edge_only(n: usize, edge_covs: Vec<DMatrix<f64>>) -> Result<Self> {
        Self::new(n, edge_covs, DMatrix::zeros(n, 0), Vec::new())
    }

    /// Replaces the default covariate names used in reports.
    pub fn with_names(mut self, edge_names: Vec<String>, node_names: Vec<String>) -> Result<Self> {
        if edge_names.len() != self.edge_covs.len()
            || node_names.len() != self.node_transforms.len()
        {
            return Err(Error::InvalidCovariates(
                "covariate name count mismatch".into(),
            ));
        }
        self.edge_names = edge_names;
        self.node_names = node_names;
        Ok(self)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn edge_count(&self) -> usize {
        self.edge_covs.len()
    }

    pub fn node_count(&self) -> usize {
        self.node_transforms.len()
    }

    pub fn edge_covs(&self) -> &[DMatrix<f64>] {
        &self.edge_covs
    }

    pub fn node_covs(&self) -> &DMatrix<f64> {
        &self.node_covs
    }

    pub fn edge_names(&self) -> &[String] {
        &self.edge_names
    }

    pub fn node_names(&self) -> &[String] {
        &self.node_names
    }

    pub fn node_transforms(&self) -> &[TransformKind] {
        &self.node_transforms
    }

    /// Length of every design row, `d1 + d2 + 2`.
    pub fn design_dim(&self) -> usize {
        self.edge_covs.len() + self.node_transforms.len() + 2
    }

    /// Coefficient names in design-row order.
    pub fn design_labels(&self) -> Vec<String> {
        let mut out = vec!["intercept".to_string(), "network".to_string()];
        out.extend(self.edge_names.iter().cloned());
        out.extend(self.node_names.iter().cloned());
        out
    }

    /// Writes the design row of `(i, j)` into `out` without checks.
    pub(crate) fn fill_row(&self, a: &Graph, i: usize, j: usize, out: &mut [f64]) {
        out[0] = 1.0;
        out[1] = f64::from(a.get(i, j));
        let mut k = 2;
        for y in &self.edge_covs {
            out[k] = y[(i, j)];
            k += 1;
        }
        for (c, kind) in self.node_transforms.iter().enumerate() {
            out[k] = kind.apply(self.node_covs[(i, c)], self.node_covs[(j, c)]);
            k += 1;
        }
    }
}

/// Predictor vector for one vertex pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignRow(pub Vec<f64>);

impl DesignRow {
    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dot(&self, theta: &[f64]) -> f64 {
        self.0.iter().zip(theta).map(|(x, t)| x * t).sum()
    }

    pub fn norm(&self) -> f64 {
        self.0.iter().map(|x| x * x).sum::<f64>().sqrt()
    }
}

pub fn build_design_row(a: &Graph, c: &CovariateBundle, i: usize, j: usize) -> Result<DesignRow> {
    if a.n() != c.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            actual: c.n(),
        });
    }
    if i >= a.n() || j >= a.n() {
        return Err(Error::InvalidCovariates(format!(
            "pair ({i}, {j}) out of range"
        )));
    }
    if i == j {
        return Err(Error::DiagonalPair(i));
    }
    let mut row = vec![0.0; c.design_dim()];
    c.fill_row(a, i, j, &mut row);
    Ok(DesignRow(row))
}

/// Unordered seed pairs as `(i, j)` with `i > j`, each exactly once.
pub fn seed_pairs(seeds: &SeedSet) -> Vec<(usize, usize)> {
    let ids = seeds.ids();
    let mut out = Vec::with_capacity(ids.len() * ids.len().saturating_sub(1) / 2);
    for (k, &i) in ids.iter().enumerate() {
        for &j in &ids[..k] {
            out.push((i, j));
        }
    }
    out
}

/// Design rows on the seed block paired with the observed `b_tilde` edge.
pub fn seed_block_rows(
    a: &Graph,
    b_tilde: &Graph,
    c: &CovariateBundle,
    seeds: &SeedSet,
) -> Result<Vec<(DesignRow, f64)>> {
    if b_tilde.n() != a.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            actual: b_tilde.n(),
        });
    }
    seed_pairs(seeds)
        .into_iter()
        .map(|(i, j)| Ok((build_design_row(a, c, i, j)?, f64::from(b_tilde.get(i, j)))))
        .collect()
}

/// Largest Euclidean norm over all off-diagonal design rows.
pub fn max_design_norm(a: &Graph, c: &CovariateBundle) -> Result<f64> {
    if a.n() != c.n() {
        return Err(Error::DimensionMismatch {
            expected: a.n(),
            actual: c.n(),
        });
    }
    let mut row = vec![0.0; c.design_dim()];
    let mut best: f64 = 0.0;
    for i in 0..a.n() {
        for j in 0..i {
            c.fill_row(a, i, j, &mut row);
            best = best.max(row.iter().map(|x| x * x).sum::<f64>().sqrt());
        }
    }
    Ok(best)
}

/// Per-column divisors for the non-intercept design columns.
///
/// Each column is divided by its largest absolute value on the fitting rows;
/// all-zero columns keep a divisor of 1. The intercept divisor is always 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignScaling {
    pub divisors: Vec<f64>,
}

impl DesignScaling {
    pub fn from_rows<'a, I>(dim: usize, rows: I) -> Self
    where
        I: IntoIterator<Item = &'a DesignRow>,
    {
        let mut max_abs = vec![0.0f64; dim];
        for r in rows {
            for (m, x) in max_abs.iter_mut().zip(r.as_slice()) {
                *m = m.max(x.abs());
            }
        }
        let divisors = max_abs
            .into_iter()
            .enumerate()
            .map(|(k, m)| if k == 0 || m == 0.0 { 1.0 } else { m })
            .collect();
        Self { divisors }
    }

    pub fn scale_row(&self, row: &DesignRow) -> DesignRow {
        DesignRow(
            row.0
                .iter()
                .zip(&self.divisors)
                .map(|(x, s)| x / s)
                .collect(),
        )
    }

    /// Maps coefficients fitted on scaled rows back to original units.
    pub fn unscale_coefficients(&self, theta: &[f64]) -> Vec<f64> {
        theta
            .iter()
            .zip(&self.divisors)
            .map(|(t, s)| t / s)
            .collect()
    }
}
