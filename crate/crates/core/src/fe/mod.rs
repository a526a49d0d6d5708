//! Weighted least squares with absorbed fixed effects and two-way clustered
//! covariance.
//!
//! The pipeline is [`absorb`] (weighted alternating projections onto the
//! complement of the group indicators), [`wls_fit`] (Householder QR on the
//! weight-scaled design) and [`twoway_cluster_vcov`]. By Frisch-Waugh-Lovell
//! the coefficients equal those of the dense regression that includes every
//! group dummy explicitly.

mod absorb;
mod vcov;
mod wls;

use std::collections::HashMap;
use std::hash::Hash;

pub use absorb::{absorb, AbsorbOptions, Absorbed};
pub use vcov::{twoway_cluster_vcov, ClusterAssignment, ClusterVcov};
pub use wls::{wls_fit, WlsFit};

use crate::error::{Error, Result};
use crate::kernel::WeightVector;
use crate::model::DropReason;

/// Relative norm below which a column counts as linearly dependent, either on
/// the fixed effects (after absorption) or on earlier columns (in the QR).
pub const RANK_TOLERANCE: f64 = 1e-7;

/// Named explicit regressors, column-major.
#[derive(Debug, Clone, PartialEq)]
pub struct DesignMatrix {
    names: Vec<String>,
    columns: Vec<Vec<f64>>,
    n_rows: usize,
}

impl DesignMatrix {
    pub fn new(n_rows: usize) -> Self {
        Self {
            names: Vec::new(),
            columns: Vec::new(),
            n_rows,
        }
    }

    pub fn from_columns(names: Vec<String>, columns: Vec<Vec<f64>>) -> Result<Self> {
        let n_rows = columns.first().map_or(0, Vec::len);
        let mut m = Self::new(n_rows);
        for (n, c) in names.into_iter().zip(columns) {
            m.push(n, c)?;
        }
        Ok(m)
    }

    pub fn push(&mut self, name: impl Into<String>, column: Vec<f64>) -> Result<()> {
        let name = name.into();
        if column.len() != self.n_rows {
            return Err(Error::InvalidArgument(format!(
                "column `{name}` has {} rows, expected {}",
                column.len(),
                self.n_rows
            )));
        }
        if self.names.contains(&name) {
            return Err(Error::InvalidArgument(format!("duplicate column `{name}`")));
        }
        self.names.push(name);
        self.columns.push(column);
        Ok(())
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn column(&self, name: &str) -> Option<&[f64]> {
        self.names
            .iter()
            .position(|n| n == name)
            .map(|i| self.columns[i].as_slice())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.columns.len()
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.columns.iter().map(|c| c[i]).collect()
    }
}

/// One fixed-effect dimension: a dense group index per row.
#[derive(Debug, Clone, PartialEq)]
pub struct FeDimension {
    pub name: String,
    keys: Vec<u32>,
    n_groups: usize,
}

impl FeDimension {
    /// Interns arbitrary keys in first-appearance order.
    pub fn from_keys<K, I>(name: impl Into<String>, keys: I) -> Self
    where
        K: Hash + Eq,
        I: IntoIterator<Item = K>,
    {
        let (keys, n_groups) = intern(keys);
        Self {
            name: name.into(),
            keys,
            n_groups,
        }
    }

    pub fn keys(&self) -> &[u32] {
        &self.keys
    }

    pub fn n_groups(&self) -> usize {
        self.n_groups
    }
}

pub(crate) fn intern<K: Hash + Eq, I: IntoIterator<Item = K>>(keys: I) -> (Vec<u32>, usize) {
    let mut map: HashMap<K, u32> = HashMap::new();
    let out = keys
        .into_iter()
        .map(|k| {
            let next = map.len() as u32;
            *map.entry(k).or_insert(next)
        })
        .collect();
    (out, map.len())
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FixedEffectGroups {
    dims: Vec<FeDimension>,
}

impl FixedEffectGroups {
    pub fn new(dims: Vec<FeDimension>) -> Result<Self> {
        if let Some(first) = dims.first() {
            let n = first.keys.len();
            if let Some(d) = dims.iter().find(|d| d.keys.len() != n) {
                return Err(Error::InvalidArgument(format!(
                    "fixed-effect dimension `{}` has {} rows, expected {n}",
                    d.name,
                    d.keys.len()
                )));
            }
        }
        Ok(Self { dims })
    }

    pub fn dims(&self) -> &[FeDimension] {
        &self.dims
    }

    pub fn is_empty(&self) -> bool {
        self.dims.is_empty()
    }
}

/// Result of the full absorb, fit and covariance pipeline.
#[derive(Debug, Clone)]
pub struct FeFit {
    pub names: Vec<String>,
    pub coefficients: Vec<f64>,
    pub vcov: ClusterVcov,
    pub dropped: Vec<(String, DropReason)>,
    pub residuals: Vec<f64>,
    pub sweeps: usize,
    pub singletons: usize,
}

/// Absorbs `groups`, fits by WLS and computes the two-way clustered covariance.
pub fn fit_with_fixed_effects(
    design: &DesignMatrix,
    outcome: &[f64],
    groups: &FixedEffectGroups,
    weights: &WeightVector,
    clusters: &ClusterAssignment,
    options: &AbsorbOptions,
) -> Result<FeFit> {
    let absorbed = absorb(design, outcome, groups, weights, options)?;
    let fit = wls_fit(&absorbed.design, &absorbed.outcome, weights)?;
    let kept = fit.design_columns(&absorbed.design);
    let vcov = vcov::twoway_with_bread(&kept, &fit.residuals, weights, clusters, &fit.bread)?;
    let mut dropped = absorbed.dropped;
    dropped.extend(fit.dropped.iter().cloned());
    Ok(FeFit {
        names: fit.names,
        coefficients: fit.coefficients,
        vcov,
        dropped,
        residuals: fit.residuals,
        sweeps: absorbed.sweeps,
        singletons: absorbed.singletons,
    })
}
