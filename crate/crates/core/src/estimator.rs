//! Average-generation quantities, the label-loss estimator, and the
//! normalized prefactor processes.
//!
//! For a snapshot with `Z` living cells of a type, total generation `G` and
//! `Z+` labeled cells, the observables are
//!
//! * average generation `G / Z`,
//! * the label estimate `-(1/(p t)) log(Z+ / Z)`, whose slope in `t`
//!   converges to the same limit as the average generation over `t`,
//! * the normalized processes `w_z = Z / (c_z e^{alpha t})` and
//!   `w_g = G / (c_g t e^{alpha t})`, which share one random prefactor in the
//!   large-`t` limit.
//!
//! Undefined values (extinct type, vanished label, `t = 0` slope) propagate
//! as `None` and reach CSV output as empty fields, never as zeros.

use crate::calibration::{CalibratedConstants, Calibration, MalthusOrdering};
use crate::engine::{Snapshot, Trajectory, TypeCounts};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EstimatorPoint {
    pub t: f64,
    pub cell_type: u8,
    pub avg_gen: Option<f64>,
    pub label_est: Option<f64>,
    pub w_z: f64,
    pub w_g: Option<f64>,
}

/// G/Z for one type, or `None` when the type has no living cells.
pub fn average_generation(counts: &TypeCounts) -> Option<f64> {
    (counts.z > 0).then(|| counts.g as f64 / counts.z as f64)
}

/// `-(1/(p t)) log(fraction)`. A fraction of exactly 1 gives 0 regardless of
/// `p` and `t` (in particular for the p = 0 ensemble); otherwise both must be
/// positive for the estimate to exist.
pub fn label_estimate_from_fraction(fraction: f64, p: f64, t: f64) -> Option<f64> {
    if fraction == 1.0 {
        return Some(0.0);
    }
    (fraction > 0.0 && p > 0.0 && t > 0.0).then(|| -fraction.ln() / (p * t))
}

/// Label estimate from observed counts; `None` when `Z` or `Z+` is zero.
pub fn label_estimate(counts: &TypeCounts, p: f64, t: f64) -> Option<f64> {
    if counts.z == 0 || counts.zpos == 0 {
        return None;
    }
    if counts.zpos == counts.z {
        return Some(0.0);
    }
    label_estimate_from_fraction(counts.zpos as f64 / counts.z as f64, p, t)
}

/// One-ancestor (alpha, z scale, g scale) constants of one cell type.
///
/// Two-type type-2 scalings select by Malthus ordering; in the
/// slow-second-type case the renewal-theorem constants are used (see
/// [`crate::calibration::TwoTypeConstants`]).
pub fn scalings(constants: &CalibratedConstants, cell_type: u8) -> (f64, f64, f64) {
    match constants {
        CalibratedConstants::Single { h, inner, .. } => {
            (inner.alpha, inner.c, inner.c * h * inner.alpha_prime)
        }
        CalibratedConstants::Two(tc) => match (cell_type, tc.ordering) {
            (1, _) => (tc.alpha1, tc.c1, tc.d1),
            (_, MalthusOrdering::Alpha1Less) => (tc.alpha2, tc.c12, tc.d12),
            (_, MalthusOrdering::Alpha2Less) => (tc.alpha1, tc.c21_renewal, tc.d21_renewal),
        },
    }
}

/// Build the estimator point for one type of one snapshot. Normalization
/// uses the calibration's [`crate::calibration::Normalizer`]s, which fold in
/// the run's initial condition so the normalized means approach 1 for any
/// configured start.
pub fn normalized_point(
    snapshot: &Snapshot,
    cell_type: u8,
    p_label_loss: f64,
    calibration: &Calibration,
) -> EstimatorPoint {
    let counts = &snapshot.types[(cell_type - 1) as usize];
    let scales = &calibration.normalizers[(cell_type - 1) as usize];
    let t = snapshot.t;
    let growth = (scales.alpha * t).exp();
    EstimatorPoint {
        t,
        cell_type,
        avg_gen: average_generation(counts),
        label_est: label_estimate(counts, p_label_loss, t),
        w_z: counts.z as f64 / (scales.z_scale * growth),
        w_g: (t > 0.0).then(|| counts.g as f64 / (scales.g_scale * t * growth)),
    }
}

/// Estimator points for every (snapshot, type) of a trajectory, in time-major
/// order. Fails if the calibration was computed for a different law.
pub fn points_for_trajectory(
    trajectory: &Trajectory,
    p_label_loss: f64,
    calibration: &Calibration,
) -> Result<Vec<EstimatorPoint>> {
    if calibration.spec_digest != trajectory.spec_digest {
        return Err(Error::SpecDigestMismatch {
            expected: calibration.spec_digest,
            found: trajectory.spec_digest,
        });
    }
    let n_types = trajectory
        .snapshots
        .first()
        .map(|s| s.types.len())
        .unwrap_or(0);
    let mut points = Vec::with_capacity(trajectory.snapshots.len() * n_types);
    for snapshot in &trajectory.snapshots {
        for cell_type in 1..=n_types as u8 {
            points.push(normalized_point(snapshot, cell_type, p_label_loss, calibration));
        }
    }
    Ok(points)
}
