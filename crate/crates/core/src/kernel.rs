//! Kernel weights for the distance-to-limit localisation.

use crate::error::{Error, Result};
use crate::model::{EventPanel, KernelFamily, KernelSpec};

/// Records further than this many bandwidths from the kernel center carry a
/// relative weight below `exp(-50)` and are left out of estimation samples.
pub const SUPPORT_BANDWIDTHS: f64 = 10.0;

/// Unnormalized Gaussian kernel, `exp(-u^2 / 2)`, peak 1 at zero.
pub fn kernel_value(u: f64) -> f64 {
    (-0.5 * u * u).exp()
}

impl KernelSpec {
    /// Scaled kernel argument for a log distance.
    pub fn argument(&self, log_distance: f64) -> f64 {
        (log_distance - self.center) / self.bandwidth
    }

    pub fn weight(&self, log_distance: f64) -> f64 {
        match self.family {
            KernelFamily::Gaussian => kernel_value(self.argument(log_distance)),
        }
    }

    pub fn in_support(&self, log_distance: f64) -> bool {
        self.argument(log_distance).abs() <= SUPPORT_BANDWIDTHS
    }
}

/// Non-negative finite weights with at least one positive entry.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightVector(Vec<f64>);

impl WeightVector {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if let Some(i) = weights.iter().position(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "weight {i} is {} (must be finite and non-negative)",
                weights[i]
            )));
        }
        if !weights.iter().any(|&w| w > 0.0) {
            return Err(Error::InvalidArgument("all weights are zero".into()));
        }
        Ok(Self(weights))
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        Self::new(self.0.iter().map(|w| w * c).collect())
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Per-record kernel weight in panel order.
pub fn panel_weights(panel: &EventPanel, kernel: &KernelSpec) -> Result<WeightVector> {
    kernel.validate()?;
    let weights = panel
        .records()
        .iter()
        .map(|r| r.log_distance().map(|d| kernel.weight(d)))
        .collect::<Result<Vec<_>>>()?;
    WeightVector::new(weights)
}
