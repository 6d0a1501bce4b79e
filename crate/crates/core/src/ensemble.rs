//! Parallel ensembles of independent replicates.
//!
//! Replicate `i` draws from `RngStream::new(master_seed, i)`, so the result
//! is a pure function of `(spec, observation times, master_seed)` and is
//! identical whether replicates run serially or across any number of
//! threads.

use rayon::prelude::*;

use crate::calibration::Calibration;
use crate::engine::{simulate, ProcessSpec, Trajectory};
use crate::error::Result;
use crate::estimator::{points_for_trajectory, EstimatorPoint};
use crate::rng::RngStream;

pub fn run_ensemble(
    spec: &ProcessSpec,
    observation_times: &[f64],
    replicates: u32,
    master_seed: u64,
) -> Result<Vec<Trajectory>> {
    (0..replicates as u64)
        .into_par_iter()
        .map(|index| {
            let mut rng = RngStream::new(master_seed, index);
            simulate(spec, &mut rng, observation_times)
        })
        .collect()
}

/// Estimator points for every trajectory of an ensemble, replicate-ordered.
pub fn ensemble_points(
    trajectories: &[Trajectory],
    p_label_loss: f64,
    calibration: &Calibration,
) -> Result<Vec<Vec<EstimatorPoint>>> {
    trajectories
        .par_iter()
        .map(|trajectory| points_for_trajectory(trajectory, p_label_loss, calibration))
        .collect()
}
