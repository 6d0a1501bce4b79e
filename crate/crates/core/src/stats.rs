//! Ensemble statistics: ECDFs, exact two-sample Kolmogorov-Smirnov distance,
//! Pearson correlation, and survival-conditioned summaries.
//!
//! Reductions use pairwise (tree) summation in a fixed order, so summaries
//! are bit-stable regardless of how the ensemble was produced.

use rayon::prelude::*;
use serde::Serialize;

use crate::calibration::Calibration;
use crate::engine::Trajectory;
use crate::error::{Error, Result};
use crate::estimator::EstimatorPoint;

/// Deterministic pairwise sum.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    match xs.len() {
        0 => 0.0,
        1 => xs[0],
        2 => xs[0] + xs[1],
        n => {
            let (a, b) = xs.split_at(n / 2);
            pairwise_sum(a) + pairwise_sum(b)
        }
    }
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    (!xs.is_empty()).then(|| pairwise_sum(xs) / xs.len() as f64)
}

pub fn median(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        return None;
    }
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    Some(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    })
}

/// Right-continuous empirical CDF.
#[derive(Debug, Clone)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn new(samples: &[f64]) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::EmptyInput);
        }
        if samples.iter().any(|x| x.is_nan()) {
            return Err(Error::InvalidConfig("NaN in ECDF sample".into()));
        }
        let mut sorted = samples.to_vec();
        sorted.sort_by(f64::total_cmp);
        Ok(Self { sorted })
    }

    pub fn n(&self) -> usize {
        self.sorted.len()
    }

    /// F(x) = (number of samples <= x) / n.
    pub fn eval(&self, x: f64) -> f64 {
        let count = self.sorted.partition_point(|&v| v <= x);
        count as f64 / self.sorted.len() as f64
    }

    /// The staircase as (value, F(value)) pairs at the jump points.
    pub fn steps(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        let n = self.sorted.len() as f64;
        self.sorted
            .iter()
            .enumerate()
            .map(move |(i, &x)| (x, (i + 1) as f64 / n))
    }
}

/// Exact sup-distance between the two empirical CDFs via a merged walk.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut xs = a.to_vec();
    let mut ys = b.to_vec();
    xs.sort_by(f64::total_cmp);
    ys.sort_by(f64::total_cmp);
    let (na, nb) = (xs.len() as f64, ys.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut best = 0.0f64;
    // integer rank counters: the difference is evaluated fresh at each jump
    // point, so no floating accumulation can push it outside [0, 1]
    while i < xs.len() || j < ys.len() {
        let at_x = match (xs.get(i), ys.get(j)) {
            (Some(&x), Some(&y)) => x <= y,
            (Some(_), None) => true,
            _ => false,
        };
        let jump = if at_x { xs[i] } else { ys[j] };
        while i < xs.len() && xs[i] == jump {
            i += 1;
        }
        while j < ys.len() && ys[j] == jump {
            j += 1;
        }
        best = best.max((i as f64 / na - j as f64 / nb).abs());
    }
    Ok(best)
}

/// Product-moment correlation of paired samples.
pub fn pearson(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(Error::InvalidConfig(
            "pearson requires paired samples of equal length >= 2".into(),
        ));
    }
    let n = a.len() as f64;
    let mean_a = pairwise_sum(a) / n;
    let mean_b = pairwise_sum(b) / n;
    let centered_a: Vec<f64> = a.iter().map(|x| x - mean_a).collect();
    let centered_b: Vec<f64> = b.iter().map(|x| x - mean_b).collect();
    let cov: Vec<f64> = centered_a
        .iter()
        .zip(&centered_b)
        .map(|(x, y)| x * y)
        .collect();
    let var_a: Vec<f64> = centered_a.iter().map(|x| x * x).collect();
    let var_b: Vec<f64> = centered_b.iter().map(|x| x * x).collect();
    let denom = (pairwise_sum(&var_a) * pairwise_sum(&var_b)).sqrt();
    if denom == 0.0 || !denom.is_finite() {
        return Err(Error::DegenerateVariance);
    }
    Ok(pairwise_sum(&cov) / denom)
}

/// Sample mean with its standard error (sd / sqrt(n), Bessel-corrected sd).
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MeanStderr {
    pub n: usize,
    pub mean: f64,
    /// `None` when fewer than two samples are available.
    pub stderr: Option<f64>,
}

pub fn mean_stderr(xs: &[f64]) -> Option<MeanStderr> {
    let n = xs.len();
    if n == 0 {
        return None;
    }
    let m = pairwise_sum(xs) / n as f64;
    let stderr = (n >= 2).then(|| {
        let sq: Vec<f64> = xs.iter().map(|x| (x - m) * (x - m)).collect();
        (pairwise_sum(&sq) / (n - 1) as f64).sqrt() / (n as f64).sqrt()
    });
    Some(MeanStderr { n, mean: m, stderr })
}

/// Unconditional and survival-conditioned variants of one statistic.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct StatPair {
    pub unconditional: Option<MeanStderr>,
    pub surviving: Option<MeanStderr>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CellSummary {
    pub t: f64,
    pub cell_type: u8,
    pub z: StatPair,
    pub g: StatPair,
    pub w_z: StatPair,
    pub w_g: StatPair,
    pub avg_gen: StatPair,
    pub label_est: StatPair,
    /// Median over surviving replicates of |w_z - w_g|.
    pub median_abs_diff: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct EnsembleSummary {
    pub n_total: usize,
    pub n_surviving: usize,
    pub n_capped: usize,
    pub cells: Vec<CellSummary>,
    /// Final-time KS distance between the w_z and w_g samples (survivors),
    /// per cell type.
    pub ks_wz_wg: Vec<(u8, f64)>,
    /// Final-time Pearson correlation of (w_z, w_g) (survivors), per type.
    pub pearson_wz_wg: Vec<(u8, f64)>,
    /// Cross-type prefactor correlations at the final time (two-type only).
    pub pearson_wz1_wz2: Option<f64>,
    pub pearson_wg1_wg2: Option<f64>,
}

/// Survival-conditioned and unconditional ensemble statistics.
///
/// Survival conditioning drops trajectories with no living cells at the
/// final observation time. Capped trajectories are excluded from the
/// per-time tables entirely (their snapshots stop early) and reported by
/// count.
pub fn summarize(
    trajectories: &[Trajectory],
    points: &[Vec<EstimatorPoint>],
    calibration: &Calibration,
) -> Result<EnsembleSummary> {
    if trajectories.is_empty() {
        return Err(Error::EmptyInput);
    }
    if trajectories.len() != points.len() {
        return Err(Error::InconsistentEnsemble(
            "trajectory and estimator-point counts differ".into(),
        ));
    }
    for trajectory in trajectories {
        if trajectory.spec_digest != calibration.spec_digest {
            return Err(Error::SpecDigestMismatch {
                expected: calibration.spec_digest,
                found: trajectory.spec_digest,
            });
        }
    }

    let usable: Vec<usize> = (0..trajectories.len())
        .filter(|&i| !trajectories[i].capped)
        .collect();
    let n_capped = trajectories.len() - usable.len();
    if usable.is_empty() {
        return Err(Error::InconsistentEnsemble(
            "every trajectory hit the population cap".into(),
        ));
    }
    let template = &trajectories[usable[0]];
    let times: Vec<f64> = template.snapshots.iter().map(|s| s.t).collect();
    let n_types = template
        .snapshots
        .first()
        .map(|s| s.types.len())
        .unwrap_or(0);
    if times.is_empty() || n_types == 0 {
        return Err(Error::InconsistentEnsemble("empty trajectories".into()));
    }
    for &i in &usable {
        let same = trajectories[i].snapshots.len() == times.len()
            && trajectories[i]
                .snapshots
                .iter()
                .zip(&times)
                .all(|(s, &t)| s.t == t && s.types.len() == n_types);
        if !same {
            return Err(Error::InconsistentEnsemble(
                "trajectories disagree on observation times".into(),
            ));
        }
        if points[i].len() != times.len() * n_types {
            return Err(Error::InconsistentEnsemble(
                "estimator points do not cover every (time, type)".into(),
            ));
        }
    }

    let survivors: Vec<usize> = usable
        .iter()
        .copied()
        .filter(|&i| !trajectories[i].extinct)
        .collect();

    let cell_indices: Vec<(usize, u8)> = (0..times.len())
        .flat_map(|ti| (1..=n_types as u8).map(move |ct| (ti, ct)))
        .collect();

    let cells: Vec<CellSummary> = cell_indices
        .par_iter()
        .map(|&(time_idx, cell_type)| {
            let point_idx = time_idx * n_types + (cell_type as usize - 1);
            let collect = |rows: &[usize], f: &dyn Fn(usize) -> Option<f64>| -> Vec<f64> {
                rows.iter().filter_map(|&i| f(i)).collect()
            };
            let z_of = |i: usize| {
                Some(trajectories[i].snapshots[time_idx].types[cell_type as usize - 1].z as f64)
            };
            let g_of = |i: usize| {
                Some(trajectories[i].snapshots[time_idx].types[cell_type as usize - 1].g as f64)
            };
            let wz_of = |i: usize| Some(points[i][point_idx].w_z);
            let wg_of = |i: usize| points[i][point_idx].w_g;
            let ag_of = |i: usize| points[i][point_idx].avg_gen;
            let le_of = |i: usize| points[i][point_idx].label_est;

            let pair = |f: &dyn Fn(usize) -> Option<f64>| StatPair {
                unconditional: mean_stderr(&collect(&usable, f)),
                surviving: mean_stderr(&collect(&survivors, f)),
            };

            let diffs: Vec<f64> = survivors
                .iter()
                .filter_map(|&i| {
                    let p = &points[i][point_idx];
                    p.w_g.map(|wg| (p.w_z - wg).abs())
                })
                .collect();

            CellSummary {
                t: times[time_idx],
                cell_type,
                z: pair(&z_of),
                g: pair(&g_of),
                w_z: pair(&wz_of),
                w_g: pair(&wg_of),
                avg_gen: pair(&ag_of),
                label_est: pair(&le_of),
                median_abs_diff: median(&diffs),
            }
        })
        .collect();

    let final_idx = times.len() - 1;
    let mut ks_wz_wg = Vec::new();
    let mut pearson_wz_wg = Vec::new();
    for cell_type in 1..=n_types as u8 {
        let point_idx = final_idx * n_types + (cell_type as usize - 1);
        let pairs: Vec<(f64, f64)> = survivors
            .iter()
            .filter_map(|&i| {
                let p = &points[i][point_idx];
                p.w_g.map(|wg| (p.w_z, wg))
            })
            .collect();
        if pairs.len() >= 2 {
            let wz: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let wg: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            ks_wz_wg.push((cell_type, ks_two_sample(&wz, &wg)?));
            if let Ok(r) = pearson(&wz, &wg) {
                pearson_wz_wg.push((cell_type, r));
            }
        }
    }

    let (pearson_wz1_wz2, pearson_wg1_wg2) = if n_types == 2 {
        let p1 = final_idx * n_types;
        let p2 = p1 + 1;
        let wz_pairs: Vec<(f64, f64)> = survivors
            .iter()
            .map(|&i| (points[i][p1].w_z, points[i][p2].w_z))
            .collect();
        let wg_pairs: Vec<(f64, f64)> = survivors
            .iter()
            .filter_map(|&i| match (points[i][p1].w_g, points[i][p2].w_g) {
                (Some(a), Some(b)) => Some((a, b)),
                _ => None,
            })
            .collect();
        let corr = |pairs: &[(f64, f64)]| -> Option<f64> {
            if pairs.len() < 2 {
                return None;
            }
            let a: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let b: Vec<f64> = pairs.iter().map(|p| p.1).collect();
            pearson(&a, &b).ok()
        };
        (corr(&wz_pairs), corr(&wg_pairs))
    } else {
        (None, None)
    };

    Ok(EnsembleSummary {
        n_total: trajectories.len(),
        n_surviving: survivors.len(),
        n_capped,
        cells,
        ks_wz_wg,
        pearson_wz_wg,
        pearson_wz1_wz2,
        pearson_wg1_wg2,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn ecdf_point_mass() {
        let e = Ecdf::new(&[1.0]).unwrap();
        assert_eq!(e.eval(0.999), 0.0);
        assert_eq!(e.eval(1.0), 1.0);
        assert_eq!(e.eval(5.0), 1.0);
    }

    #[test]
    fn ecdf_quartiles() {
        let e = Ecdf::new(&[1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(e.eval(2.5), 0.5);
        assert_eq!(e.eval(4.0), 1.0);
        assert!(Ecdf::new(&[]).is_err());
    }

    #[test]
    fn ks_examples() {
        assert_eq!(
            ks_two_sample(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap(),
            0.0
        );
        assert_eq!(ks_two_sample(&[0.0, 0.0], &[1.0, 1.0]).unwrap(), 1.0);
        // worked mixed case: ECDFs cross at 0.25
        assert_relative_eq!(
            ks_two_sample(&[1.0, 1.0, 4.0, 4.0], &[1.0, 1.0, 1.0, 4.0]).unwrap(),
            0.25,
            epsilon = 1e-12
        );
        assert!(ks_two_sample(&[], &[1.0]).is_err());
    }

    #[test]
    fn ks_is_symmetric() {
        let a = [0.3, 1.7, 2.2, 5.0, 0.1];
        let b = [0.4, 1.6, 2.0];
        assert_eq!(
            ks_two_sample(&a, &b).unwrap(),
            ks_two_sample(&b, &a).unwrap()
        );
    }

    #[test]
    fn ks_same_law_stays_below_critical_value() {
        use crate::rng::RngStream;
        use rand::Rng;
        // two independent 10^4-draw samples from one continuous law stay
        // below the 5% critical value 1.36 sqrt(2/n) in >= 90% of trials
        let critical = 1.36 * (2.0 / 10_000.0f64).sqrt();
        let mut below = 0;
        let trials = 20;
        for trial in 0..trials {
            let mut rng = RngStream::new(2024, trial);
            let a: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>().powi(2)).collect();
            let b: Vec<f64> = (0..10_000).map(|_| rng.random::<f64>().powi(2)).collect();
            if ks_two_sample(&a, &b).unwrap() < critical {
                below += 1;
            }
        }
        assert!(below * 10 >= trials * 9, "only {below}/{trials} below");
    }

    #[test]
    fn pearson_affine_cases() {
        let a = [1.0, 2.0, 3.0, 4.0];
        let b: Vec<f64> = a.iter().map(|x| 2.0 * x + 3.0).collect();
        assert_relative_eq!(pearson(&a, &b).unwrap(), 1.0, epsilon = 1e-12);
        let neg: Vec<f64> = a.iter().map(|x| -x).collect();
        assert_relative_eq!(pearson(&a, &neg).unwrap(), -1.0, epsilon = 1e-12);
        assert!(matches!(
            pearson(&[1.0, 1.0], &[2.0, 3.0]),
            Err(Error::DegenerateVariance)
        ));
    }

    #[test]
    fn pearson_invariant_under_positive_affine_maps() {
        let a = [0.3, 1.9, 2.6, 3.1, 7.7, 0.2];
        let b = [1.1, 0.4, 2.2, 3.3, 4.0, 0.9];
        let r = pearson(&a, &b).unwrap();
        let a2: Vec<f64> = a.iter().map(|x| 3.7 * x + 11.0).collect();
        let b2: Vec<f64> = b.iter().map(|x| 0.002 * x - 5.0).collect();
        let r2 = pearson(&a2, &b2).unwrap();
        assert!((r - r2).abs() <= 1e-12);
    }

    #[test]
    fn pairwise_sum_matches_naive_on_small_inputs() {
        let xs: Vec<f64> = (0..101).map(|i| (i as f64).sin()).collect();
        let naive: f64 = xs.iter().sum();
        assert_relative_eq!(pairwise_sum(&xs), naive, max_relative = 1e-12);
    }

    #[test]
    fn mean_stderr_counts() {
        assert!(mean_stderr(&[]).is_none());
        let single = mean_stderr(&[4.2]).unwrap();
        assert_eq!(single.stderr, None);
        let pair = mean_stderr(&[1.0, 3.0]).unwrap();
        assert_eq!(pair.mean, 2.0);
        assert_relative_eq!(pair.stderr.unwrap(), 1.0, epsilon = 1e-12);
    }
}
