//! Per-axis RMSE of a trace and its root-sum-square aggregates.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sim::SimTrace;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsReport {
    pub rmse_x: f64,
    pub rmse_y: f64,
    pub rmse_z: f64,
    pub rmse_phi: f64,
    pub rmse_theta: f64,
    pub rmse_psi: f64,
    pub rmse_xyz: f64,
    pub rmse_att: f64,
}

/// `√(a² + b² + c²)`.
pub fn aggregate(a: f64, b: f64, c: f64) -> f64 {
    (a * a + b * b + c * c).sqrt()
}

impl MetricsReport {
    /// Build a report from per-axis values; the aggregates follow by root-sum-square.
    pub fn from_axes(axes: [f64; 6]) -> Self {
        Self {
            rmse_x: axes[0],
            rmse_y: axes[1],
            rmse_z: axes[2],
            rmse_phi: axes[3],
            rmse_theta: axes[4],
            rmse_psi: axes[5],
            rmse_xyz: aggregate(axes[0], axes[1], axes[2]),
            rmse_att: aggregate(axes[3], axes[4], axes[5]),
        }
    }

    pub fn axes(&self) -> [f64; 6] {
        [
            self.rmse_x,
            self.rmse_y,
            self.rmse_z,
            self.rmse_phi,
            self.rmse_theta,
            self.rmse_psi,
        ]
    }
}

/// RMSE of each error column over a set of error rows.
pub fn rmse_of_errors<'a>(errors: impl IntoIterator<Item = &'a [f64; 6]>) -> Option<[f64; 6]> {
    let mut sums = [0.0; 6];
    let mut n = 0usize;
    for e in errors {
        for i in 0..6 {
            sums[i] += e[i] * e[i];
        }
        n += 1;
    }
    if n == 0 {
        return None;
    }
    Some(sums.map(|s| (s / n as f64).sqrt()))
}

/// Metrics over rows with `t ≥ transient_cut`.
pub fn compute_rmse(trace: &SimTrace, transient_cut: f64) -> Result<MetricsReport> {
    let kept = trace.rows.iter().filter(|r| r.t >= transient_cut).map(|r| &r.error);
    rmse_of_errors(kept)
        .map(MetricsReport::from_axes)
        .ok_or(Error::EmptyWindow { cut: transient_cut })
}
