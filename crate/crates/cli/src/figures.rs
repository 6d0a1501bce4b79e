//! The `figures` command: CSV datasets for the bundled demonstration
//! studies, one file per panel.
//!
//! Panels (single-type study unless noted):
//! * `fig2a`, `fig2b` — 20 surviving paths of `Z(t) e^{-alpha t}` and
//!   `G(t) e^{-alpha t}`, hourly over four days.
//! * `fig3a` — ECDFs of the normalized population and total-generation
//!   prefactors at 96h; `fig3b` — their per-path scatter; `fig3c` — 20 paths
//!   of the difference `w_z - w_g`.
//! * `fig9a`-`fig9d` — two-type ensembles (1000 runs): mean normalized
//!   population sizes and total generations per type, for both Malthus
//!   orderings.
//! * `fig10a`-`fig10c` — two-type per-path prefactor scatters at 96h for
//!   both orderings.
//! * `fig11a`-`fig11d` — two-type average-generation estimation paths
//!   (10 runs each): per-path average generation of type-2 cells, the
//!   label-loss estimate at p = 0.01, and the predicted slope line, starting
//!   from 1 or 100 labeled type-1 cells.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use bhgen_core::calibration::{calibrate, CalibratedConstants, Calibration};
use bhgen_core::engine::{ProcessSpec, Trajectory};
use bhgen_core::ensemble::{ensemble_points, run_ensemble};
use bhgen_core::error::{Error, Result};
use bhgen_core::estimator::{scalings, EstimatorPoint};
use bhgen_core::stats::{mean, Ecdf};

use crate::presets;

pub fn all_panels() -> Vec<&'static str> {
    vec![
        "fig2a", "fig2b", "fig3a", "fig3b", "fig3c", "fig9a", "fig9b", "fig9c", "fig9d",
        "fig10a", "fig10b", "fig10c", "fig11a", "fig11b", "fig11c", "fig11d",
    ]
}

fn hourly(from: u32, to: u32) -> Vec<f64> {
    (from..=to).map(f64::from).collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

struct PanelWriter {
    file: BufWriter<File>,
}

impl PanelWriter {
    fn new(dir: &Path, panel: &str, header: &str) -> Result<Self> {
        let mut file = BufWriter::new(File::create(dir.join(format!("{panel}.csv")))?);
        writeln!(file, "{header}")?;
        Ok(Self { file })
    }

    fn row(&mut self, fields: &[String]) -> Result<()> {
        writeln!(self.file, "{}", fields.join(","))?;
        Ok(())
    }
}

/// Shared single-type ensemble for fig2/fig3.
struct SingleStudy {
    calibration: Calibration,
    times: Vec<f64>,
    trajectories: Vec<Trajectory>,
    points: Vec<Vec<EstimatorPoint>>,
}

impl SingleStudy {
    fn run(replicates: u32, seed: u64) -> Result<Self> {
        let spec = presets::single_type_study(0.0);
        let calibration = calibrate(&spec)?;
        let times = hourly(0, 96);
        let trajectories = run_ensemble(&spec, &times, replicates, seed)?;
        let points = ensemble_points(&trajectories, 0.0, &calibration)?;
        Ok(Self {
            calibration,
            times,
            trajectories,
            points,
        })
    }

    fn survivors(&self) -> Vec<usize> {
        (0..self.trajectories.len())
            .filter(|&i| self.trajectories[i].surviving())
            .collect()
    }

    fn alpha(&self) -> f64 {
        scalings(&self.calibration.constants, 1).0
    }
}

/// Shared two-type ensemble for fig9/fig10.
struct TwoTypeStudy {
    times: Vec<f64>,
    trajectories: Vec<Trajectory>,
    points: Vec<Vec<EstimatorPoint>>,
    ordering_label: &'static str,
}

impl TwoTypeStudy {
    fn run(spec: ProcessSpec, ordering_label: &'static str, seed: u64) -> Result<Self> {
        let calibration = calibrate(&spec)?;
        let times = hourly(0, 96);
        let trajectories = run_ensemble(&spec, &times, 1000, seed)?;
        let points = ensemble_points(&trajectories, spec.p_label_loss, &calibration)?;
        Ok(Self {
            times,
            trajectories,
            points,
            ordering_label,
        })
    }

    fn point(&self, replicate: usize, time_idx: usize, cell_type: u8) -> &EstimatorPoint {
        &self.points[replicate][time_idx * 2 + (cell_type as usize - 1)]
    }
}

pub fn cmd_figures(out_dir: &Path, only: Option<&[String]>) -> Result<()> {
    std::fs::create_dir_all(out_dir)?;
    let wanted: Vec<&str> = match only {
        Some(names) if !names.is_empty() => {
            let all = all_panels();
            for name in names {
                if !all.contains(&name.as_str()) {
                    return Err(Error::InvalidConfig(format!("unknown panel {name:?}")));
                }
            }
            names.iter().map(String::as_str).collect()
        }
        _ => all_panels(),
    };
    let want = |name: &str| wanted.contains(&name);

    if want("fig2a") || want("fig2b") || want("fig3a") || want("fig3b") || want("fig3c") {
        let study = SingleStudy::run(100, 101)?;
        let survivors = study.survivors();
        let alpha = study.alpha();

        if want("fig2a") || want("fig2b") {
            let mut za = want("fig2a")
                .then(|| PanelWriter::new(out_dir, "fig2a", "replicate,t,z_scaled"))
                .transpose()?;
            let mut gb = want("fig2b")
                .then(|| PanelWriter::new(out_dir, "fig2b", "replicate,t,g_scaled"))
                .transpose()?;
            for &i in survivors.iter().take(20) {
                let trajectory = &study.trajectories[i];
                for (ti, snapshot) in trajectory.snapshots.iter().enumerate() {
                    let t = study.times[ti];
                    let decay = (-alpha * t).exp();
                    if let Some(w) = za.as_mut() {
                        w.row(&[
                            i.to_string(),
                            format!("{t:.6}"),
                            (snapshot.types[0].z as f64 * decay).to_string(),
                        ])?;
                    }
                    if let Some(w) = gb.as_mut() {
                        w.row(&[
                            i.to_string(),
                            format!("{t:.6}"),
                            (snapshot.types[0].g as f64 * decay).to_string(),
                        ])?;
                    }
                }
            }
        }

        let final_idx = study.times.len() - 1;
        if want("fig3a") {
            let mut w = PanelWriter::new(out_dir, "fig3a", "series,value,ecdf")?;
            let wz: Vec<f64> = survivors
                .iter()
                .map(|&i| study.points[i][final_idx].w_z)
                .collect();
            let wg: Vec<f64> = survivors
                .iter()
                .filter_map(|&i| study.points[i][final_idx].w_g)
                .collect();
            for (series, samples) in [("w_z", wz), ("w_g", wg)] {
                let ecdf = Ecdf::new(&samples)?;
                for (value, cdf) in ecdf.steps() {
                    w.row(&[series.to_string(), value.to_string(), cdf.to_string()])?;
                }
            }
        }
        if want("fig3b") {
            let mut w = PanelWriter::new(out_dir, "fig3b", "replicate,w_z,w_g")?;
            for &i in &survivors {
                let point = &study.points[i][final_idx];
                if let Some(wg) = point.w_g {
                    w.row(&[i.to_string(), point.w_z.to_string(), wg.to_string()])?;
                }
            }
        }
        if want("fig3c") {
            let mut w = PanelWriter::new(out_dir, "fig3c", "replicate,t,wz_minus_wg")?;
            for &i in survivors.iter().take(20) {
                for (ti, &t) in study.times.iter().enumerate() {
                    let point = &study.points[i][ti];
                    if let Some(wg) = point.w_g {
                        w.row(&[
                            i.to_string(),
                            format!("{t:.6}"),
                            (point.w_z - wg).to_string(),
                        ])?;
                    }
                }
            }
        }
    }

    let need_fast = ["fig9a", "fig9b", "fig10a", "fig10b", "fig10c"]
        .iter()
        .any(|p| want(p));
    let need_slow = ["fig9c", "fig9d", "fig10a", "fig10b", "fig10c"]
        .iter()
        .any(|p| want(p));
    let fast = need_fast
        .then(|| TwoTypeStudy::run(presets::two_type_fast_second(0.0, 1), "alpha1_less", 901))
        .transpose()?;
    let slow = need_slow
        .then(|| TwoTypeStudy::run(presets::two_type_slow_second(0.0, 1), "alpha2_less", 902))
        .transpose()?;

    let mean_panel = |study: &TwoTypeStudy,
                      out: &mut PanelWriter,
                      value: &dyn Fn(&EstimatorPoint) -> Option<f64>|
     -> Result<()> {
        for (ti, &t) in study.times.iter().enumerate() {
            for cell_type in [1u8, 2u8] {
                let samples: Vec<f64> = (0..study.trajectories.len())
                    .filter_map(|i| value(study.point(i, ti, cell_type)))
                    .collect();
                if let Some(mean) = mean(&samples) {
                    out.row(&[
                        format!("{t:.6}"),
                        format!("type{cell_type}"),
                        mean.to_string(),
                    ])?;
                }
            }
        }
        Ok(())
    };

    if let Some(study) = fast.as_ref() {
        if want("fig9a") {
            let mut w = PanelWriter::new(out_dir, "fig9a", "t,series,mean_normalized_z")?;
            mean_panel(study, &mut w, &|p| Some(p.w_z))?;
        }
        if want("fig9b") {
            let mut w = PanelWriter::new(out_dir, "fig9b", "t,series,mean_normalized_g")?;
            mean_panel(study, &mut w, &|p| p.w_g)?;
        }
    }
    if let Some(study) = slow.as_ref() {
        if want("fig9c") {
            let mut w = PanelWriter::new(out_dir, "fig9c", "t,series,mean_normalized_z")?;
            mean_panel(study, &mut w, &|p| Some(p.w_z))?;
        }
        if want("fig9d") {
            let mut w = PanelWriter::new(out_dir, "fig9d", "t,series,mean_normalized_g")?;
            mean_panel(study, &mut w, &|p| p.w_g)?;
        }
    }

    let scatter_panel = |panel: &str,
                         header: &str,
                         x: &dyn Fn(&TwoTypeStudy, usize, usize) -> Option<f64>,
                         y: &dyn Fn(&TwoTypeStudy, usize, usize) -> Option<f64>|
     -> Result<()> {
        let mut w = PanelWriter::new(out_dir, panel, header)?;
        for study in [fast.as_ref(), slow.as_ref()].into_iter().flatten() {
            let final_idx = study.times.len() - 1;
            for i in 0..study.trajectories.len() {
                if !study.trajectories[i].surviving() {
                    continue;
                }
                if let (Some(xv), Some(yv)) = (x(study, i, final_idx), y(study, i, final_idx)) {
                    w.row(&[
                        study.ordering_label.to_string(),
                        i.to_string(),
                        xv.to_string(),
                        yv.to_string(),
                    ])?;
                }
            }
        }
        Ok(())
    };

    if want("fig10a") {
        scatter_panel(
            "fig10a",
            "ordering,replicate,w_z2,w_g2",
            &|s, i, f| Some(s.point(i, f, 2).w_z),
            &|s, i, f| s.point(i, f, 2).w_g,
        )?;
    }
    if want("fig10b") {
        scatter_panel(
            "fig10b",
            "ordering,replicate,w_z1,w_z2",
            &|s, i, f| Some(s.point(i, f, 1).w_z),
            &|s, i, f| Some(s.point(i, f, 2).w_z),
        )?;
    }
    if want("fig10c") {
        scatter_panel(
            "fig10c",
            "ordering,replicate,w_g1,w_g2",
            &|s, i, f| s.point(i, f, 1).w_g,
            &|s, i, f| s.point(i, f, 2).w_g,
        )?;
    }

    // estimator path panels: (spec, initial count, seed)
    type SpecBuilder = fn(f64, u64) -> ProcessSpec;
    let estimator_panels: [(&str, SpecBuilder, u64, u64); 4] = [
        ("fig11a", presets::two_type_fast_second, 1, 1101),
        ("fig11b", presets::two_type_fast_second, 100, 1102),
        ("fig11c", presets::two_type_slow_second, 1, 1103),
        ("fig11d", presets::two_type_slow_second, 100, 1104),
    ];
    for (panel, build, initial, seed) in estimator_panels {
        if !want(panel) {
            continue;
        }
        let p = 0.01;
        let spec = build(p, initial);
        let calibration = calibrate(&spec)?;
        let CalibratedConstants::Two(tc) = &calibration.constants else {
            unreachable!("two-type preset")
        };
        let (_, _, d_scale) = scalings(&calibration.constants, 2);
        let (_, c_scale, _) = scalings(&calibration.constants, 2);
        let slope = d_scale / c_scale; // mu alpha2' or h1 alpha1' by ordering
        debug_assert!(
            (slope - tc.alpha1_prime * 5.0 / 3.0).abs() < 1e-12
                || (slope - tc.alpha2_prime * 2.0).abs() < 1e-12
        );
        let times = hourly(1, 96);
        let trajectories = run_ensemble(&spec, &times, 10, seed)?;
        let points = ensemble_points(&trajectories, p, &calibration)?;
        let mut w = PanelWriter::new(out_dir, panel, "replicate,t,avg_gen,label_est,theory")?;
        for (i, per_replicate) in points.iter().enumerate() {
            for (ti, &t) in times.iter().enumerate() {
                let point = &per_replicate[ti * 2 + 1]; // type 2
                w.row(&[
                    i.to_string(),
                    format!("{t:.6}"),
                    fmt_opt(point.avg_gen),
                    fmt_opt(point.label_est.map(|e| e * t)),
                    (slope * t).to_string(),
                ])?;
            }
        }
    }

    Ok(())
}
