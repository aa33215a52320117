//! Convolution smoothing of position sequences.

use serde::{Deserialize, Serialize};

use super::MitigationError;
use crate::geometry::Vec2;
use crate::scene::Trajectory;

/// Odd-length convolution kernel whose weights sum to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSmoother")]
pub struct SmootherSpec {
    kernel: Vec<f64>,
}

#[derive(Deserialize)]
struct RawSmoother {
    kernel: Vec<f64>,
}

impl TryFrom<RawSmoother> for SmootherSpec {
    type Error = MitigationError;
    fn try_from(raw: RawSmoother) -> Result<Self, Self::Error> {
        SmootherSpec::new(raw.kernel)
    }
}

impl Default for SmootherSpec {
    /// Mean of three consecutive positions.
    fn default() -> Self {
        Self { kernel: vec![1.0 / 3.0; 3] }
    }
}

impl SmootherSpec {
    pub fn new(kernel: Vec<f64>) -> Result<Self, MitigationError> {
        if kernel.len().is_multiple_of(2) {
            return Err(MitigationError::InvalidKernel(format!("kernel length {} is not odd", kernel.len())));
        }
        if kernel.iter().any(|w| !w.is_finite()) {
            return Err(MitigationError::InvalidKernel("non-finite weight".into()));
        }
        let sum: f64 = kernel.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(MitigationError::InvalidKernel(format!("weights sum to {sum}, not 1")));
        }
        Ok(Self { kernel })
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    fn half(&self) -> usize {
        self.kernel.len() / 2
    }

    /// Interior points are convolved; the `len/2` points at each end, where
    /// the kernel cannot be centered, pass through unchanged.
    pub fn smooth_points(&self, points: &[Vec2]) -> Result<Vec<Vec2>, MitigationError> {
        if points.len() < self.kernel.len() {
            return Err(MitigationError::TooShort { got: points.len(), need: self.kernel.len() });
        }
        let h = self.half();
        let mut out = points.to_vec();
        for i in h..points.len() - h {
            out[i] = self.kernel.iter().enumerate().map(|(j, &w)| points[i + j - h] * w).sum();
        }
        Ok(out)
    }

    /// Adjoint of [`SmootherSpec::smooth_points`]: maps a gradient with
    /// respect to the smoothed points back onto the raw points.
    pub fn pull_back(&self, grad: &[Vec2]) -> Vec<Vec2> {
        let h = self.half();
        let n = grad.len();
        if n < self.kernel.len() {
            return grad.to_vec();
        }
        let mut out = vec![Vec2::ZERO; n];
        for i in 0..n {
            if i < h || i >= n - h {
                out[i] += grad[i];
            } else {
                for (j, &w) in self.kernel.iter().enumerate() {
                    out[i + j - h] += grad[i] * w;
                }
            }
        }
        out
    }
}

/// Smoothed copy of a trajectory; headings are recomputed from the new
/// positions.
pub fn smooth(traj: &Trajectory, spec: &SmootherSpec) -> Result<Trajectory, MitigationError> {
    let smoothed = spec.smooth_points(&traj.positions())?;
    Ok(traj.with_positions(&smoothed).expect("smoothing keeps coordinates finite").with_reconstructed_headings())
}
