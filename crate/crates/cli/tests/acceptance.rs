//! Acceptance suite: the toolkit's exactness and statistical gates, one test
//! per criterion. Each prints a `criterion NN PASS/FAIL` line with the
//! measured value (visible with `--nocapture`) and asserts it.

use std::process::Command;
use std::sync::OnceLock;
use std::time::{Duration, Instant};

use bhgen::presets;
use bhgen_core::calibration::{calibrate, solve_malthus, two_type_constants, MalthusOrdering};
use bhgen_core::distributions::{LifetimeDistribution, OffspringDistribution};
use bhgen_core::engine::{
    simulate, simulate_with_options, ProcessSpec, SimOptions, Trajectory,
};
use bhgen_core::ensemble::{ensemble_points, run_ensemble};
use bhgen_core::estimator::label_estimate_from_fraction;
use bhgen_core::oracle::{moment_grids, MomentGrid, MomentId};
use bhgen_core::rng::RngStream;
use bhgen_core::stats::{mean_stderr, median, summarize, EnsembleSummary};
use rand::Rng;

fn report(criterion: u32, pass: bool, detail: &str) -> bool {
    println!(
        "criterion {criterion:>2} {}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
    pass
}

// ---------------------------------------------------------------------------
// shared four-day single-type study ensemble (criteria 5-7)
// ---------------------------------------------------------------------------

struct Study {
    times: Vec<f64>,
    trajectories: Vec<Trajectory>,
    summary: EnsembleSummary,
}

const STUDY_SEED: u64 = 20240801;

fn run_study(replicates: u32) -> Study {
    let spec = presets::single_type_study(0.0);
    let calibration = calibrate(&spec).expect("calibration");
    let times = vec![24.0, 48.0, 72.0, 96.0];
    let trajectories = run_ensemble(&spec, &times, replicates, STUDY_SEED).expect("ensemble");
    let points = ensemble_points(&trajectories, 0.0, &calibration).expect("points");
    let summary = summarize(&trajectories, &points, &calibration).expect("summary");
    Study {
        times,
        trajectories,
        summary,
    }
}

fn study() -> &'static Study {
    static STUDY: OnceLock<Study> = OnceLock::new();
    STUDY.get_or_init(|| run_study(1000))
}

#[test]
fn criterion_01_exponential_malthus_closed_form() {
    let start = Instant::now();
    let mut rng = RngStream::new(1, 0);
    let mut max_err: f64 = 0.0;
    for _ in 0..20 {
        let rate = 0.1 + 4.9 * rng.random::<f64>();
        let h = 1.0 + 7.0 * rng.random::<f64>().max(1e-6);
        let alpha = solve_malthus(h, &LifetimeDistribution::Exponential { rate }).unwrap();
        max_err = max_err.max((alpha - rate * (h - 1.0)).abs());
    }
    let elapsed = start.elapsed();
    let pass = max_err <= 1e-10 && elapsed < Duration::from_secs(1);
    assert!(report(
        1,
        pass,
        &format!("max |alpha - rate(h-1)| = {max_err:.2e} (<= 1e-10) over 20 random laws in {elapsed:.2?} (< 1s)")
    ));
}

#[test]
fn criterion_02_deterministic_malthus_closed_form() {
    let mut max_err: f64 = 0.0;
    for (h, value) in [(2.0, 1.0), (1.3, 0.7), (4.5, 2.2), (7.9, 9.3)] {
        let alpha =
            solve_malthus(h, &LifetimeDistribution::Deterministic { value }).unwrap();
        max_err = max_err.max((alpha - h.ln() / value).abs());
    }
    let pass = max_err <= 1e-12;
    assert!(report(
        2,
        pass,
        &format!("max |alpha - ln(h)/c| = {max_err:.2e} (<= 1e-12)")
    ));
}

#[test]
fn criterion_03_markov_oracle_closed_forms() {
    let start = Instant::now();
    let spec = ProcessSpec::single_type(
        LifetimeDistribution::Exponential { rate: 1.0 },
        OffspringDistribution::constant(2),
    );
    let grids = moment_grids(&spec, 1e-3, 10.0).unwrap();
    let ez = grids.iter().find(|g| g.moment == MomentId::EZ).unwrap();
    let eg = grids.iter().find(|g| g.moment == MomentId::EG).unwrap();
    let mut max_rel_z: f64 = 0.0;
    let mut max_rel_g: f64 = 0.0;
    for (i, t) in ez.times().enumerate() {
        let exact_z = t.exp();
        max_rel_z = max_rel_z.max((ez.values[i] - exact_z).abs() / exact_z);
        if i > 0 {
            let exact_g = 2.0 * t * t.exp();
            max_rel_g = max_rel_g.max((eg.values[i] - exact_g).abs() / exact_g);
        }
    }
    let elapsed = start.elapsed();
    let pass =
        max_rel_z <= 1e-3 && max_rel_g <= 1e-3 && elapsed < Duration::from_secs(30);
    assert!(report(
        3,
        pass,
        &format!(
            "max rel err vs e^t: {max_rel_z:.2e}, vs 2t e^t: {max_rel_g:.2e} (<= 1e-3) \
             at dt = 1e-3 over [0, 10] in {elapsed:.2?} (< 30s)"
        )
    ));
}

#[test]
fn criterion_04_galton_watson_identity() {
    let spec = ProcessSpec::single_type(
        LifetimeDistribution::Deterministic { value: 1.0 },
        OffspringDistribution::constant(2),
    );
    let times: Vec<f64> = (0..=12).map(|n| n as f64 + 0.5).collect();
    let trajectory = simulate(&spec, &mut RngStream::new(4, 0), &times).unwrap();
    let mut pass = true;
    for (n, snapshot) in trajectory.snapshots.iter().enumerate() {
        let counts = &snapshot.types[0];
        pass &= counts.z == 1u64 << n && counts.g == n as u64 * counts.z;
    }
    assert!(report(
        4,
        pass,
        "G = n Z exactly (integer equality) for epochs n = 0..=12 of the synchronous doubling tree"
    ));
}

#[test]
fn criterion_05_mc_means_match_oracle_grids() {
    let start = Instant::now();
    let study = run_study(1000);
    let spec = presets::single_type_study(0.0);
    let grids = moment_grids(&spec, 0.05, 96.0).unwrap();
    let grid = |id: MomentId| -> &MomentGrid {
        grids.iter().find(|g| g.moment == id).unwrap()
    };
    let mut worst: f64 = 0.0;
    for (idx, &t) in study.times.iter().enumerate() {
        let z: Vec<f64> = study
            .trajectories
            .iter()
            .map(|tr| tr.snapshots[idx].types[0].z as f64)
            .collect();
        let g: Vec<f64> = study
            .trajectories
            .iter()
            .map(|tr| tr.snapshots[idx].types[0].g as f64)
            .collect();
        for (samples, id) in [(&z, MomentId::EZ), (&g, MomentId::EG)] {
            let stat = mean_stderr(samples).unwrap();
            let expected = grid(id).value_at(t).unwrap();
            let deviations = (stat.mean - expected).abs() / stat.stderr.unwrap();
            worst = worst.max(deviations);
        }
    }
    let elapsed = start.elapsed();
    let pass = worst <= 3.0 && elapsed < Duration::from_secs(60);
    assert!(report(
        5,
        pass,
        &format!(
            "unconditional Z, G means over 1000 runs within {worst:.2} standard errors \
             (3 allowed) of the renewal grids at t = 24, 48, 72, 96h in {elapsed:.2?} (< 60s)"
        )
    ));
}

#[test]
fn criterion_06_prefactor_equality() {
    let summary = &study().summary;
    let pearson = summary
        .pearson_wz_wg
        .iter()
        .find(|(ct, _)| *ct == 1)
        .map(|(_, r)| *r)
        .unwrap();
    let ks = summary
        .ks_wz_wg
        .iter()
        .find(|(ct, _)| *ct == 1)
        .map(|(_, d)| *d)
        .unwrap();
    let pass = pearson >= 0.95 && ks <= 0.08;
    assert!(report(
        6,
        pass,
        &format!(
            "survivors at 96h: pearson(w_z, w_g) = {pearson:.4} (>= 0.95), \
             KS(w_z, w_g) = {ks:.4} (<= 0.08), n = {}",
            summary.n_surviving
        )
    ));
}

#[test]
fn criterion_07_difference_paths_shrink() {
    let summary = &study().summary;
    let med = |t: f64| {
        summary
            .cells
            .iter()
            .find(|c| c.t == t && c.cell_type == 1)
            .and_then(|c| c.median_abs_diff)
            .unwrap()
    };
    let at48 = med(48.0);
    let at96 = med(96.0);
    let pass = at96 < at48;
    assert!(report(
        7,
        pass,
        &format!("median |w_z - w_g| over survivors: {at48:.4} at 48h -> {at96:.4} at 96h (strictly smaller)")
    ));
}

#[test]
fn criterion_08_delabelling_conditional_expectation() {
    // one fixed tree with >= 100 living cells, 10^4 independent re-delabellings
    let spec = presets::single_type_study(0.0);
    let options = SimOptions {
        retain_generations: true,
        record_tree: true,
    };
    let mut tree = None;
    for stream in 0..200 {
        let out = simulate_with_options(
            &spec,
            &mut RngStream::new(88, stream),
            &[96.0],
            options,
        )
        .unwrap();
        let candidate = out.tree.unwrap();
        if candidate.n_living() >= 100 {
            tree = Some(candidate);
            break;
        }
    }
    let tree = tree.expect("a surviving tree with >= 100 living cells");
    let trials = 10_000u64;
    let mut pass = true;
    let mut details = Vec::new();
    for (pi, p) in [0.1, 0.01].into_iter().enumerate() {
        let expected = tree.expected_labeled(p, 1);
        let binomial_var: f64 = tree
            .living_generations(1)
            .iter()
            .map(|&g| {
                let f = (1.0 - p).powi(g as i32);
                f * (1.0 - f)
            })
            .sum();
        let mut rng = RngStream::new(889, pi as u64);
        let total: u64 = (0..trials)
            .map(|_| tree.redelabel(p, &mut rng, 1)[0])
            .sum();
        let mean = total as f64 / trials as f64;
        let stderr = (binomial_var / trials as f64).sqrt();
        let deviations = (mean - expected).abs() / stderr;
        pass &= deviations <= 3.0;
        details.push(format!(
            "p={p}: mean {mean:.3} vs sum (1-p)^g = {expected:.3} ({deviations:.2} binomial SE)"
        ));
    }
    assert!(report(
        8,
        pass,
        &format!(
            "tree with {} living cells, 10^4 re-delabellings; {}",
            tree.n_living(),
            details.join("; ")
        )
    ));
}

#[test]
fn criterion_09_worked_label_estimate() {
    let fraction = (2.0 * 0.99f64.powi(3) + 0.99f64.powi(2)) / 3.0;
    let estimate = label_estimate_from_fraction(fraction, 0.01, 1.0).unwrap();
    let pass = (estimate - 2.6789).abs() <= 1e-4 && (estimate - 8.0 / 3.0).abs() <= 0.05;
    assert!(report(
        9,
        pass,
        &format!(
            "estimate from expected fraction = {estimate:.5} (2.6789 +- 1e-4), \
             |estimate - 8/3| = {:.4} (<= 0.05)",
            (estimate - 8.0 / 3.0).abs()
        )
    ));
}

fn two_type_summary(spec: &ProcessSpec, seed: u64) -> EnsembleSummary {
    let calibration = calibrate(spec).unwrap();
    let times = vec![48.0, 96.0];
    let trajectories = run_ensemble(spec, &times, 1000, seed).unwrap();
    let points = ensemble_points(&trajectories, spec.p_label_loss, &calibration).unwrap();
    summarize(&trajectories, &points, &calibration).unwrap()
}

#[test]
fn criterion_10_two_type_prefactor_correlations() {
    let fast = two_type_summary(&presets::two_type_fast_second(0.0, 1), 1010);
    let slow = two_type_summary(&presets::two_type_slow_second(0.0, 1), 1020);
    let type2 = |s: &EnsembleSummary| {
        s.pearson_wz_wg
            .iter()
            .find(|(ct, _)| *ct == 2)
            .map(|(_, r)| *r)
            .unwrap()
    };
    let fast_r = type2(&fast);
    let slow_r = type2(&slow);
    let cross = slow.pearson_wz1_wz2.unwrap();
    let pass = fast_r >= 0.95 && slow_r >= 0.95 && cross >= 0.85;
    assert!(report(
        10,
        pass,
        &format!(
            "pearson(w_z2, w_g2) at 96h: {fast_r:.4} (alpha1<alpha2), {slow_r:.4} \
             (alpha2<alpha1), both >= 0.95; pearson(w_z1, w_z2) = {cross:.4} (>= 0.85) \
             for alpha2<alpha1"
        )
    ));
}

#[test]
fn criterion_11_two_type_estimator_slope() {
    let p = 1e-2;
    let t_final = 96.0;
    let cases = [
        (
            presets::two_type_fast_second(p, 100),
            MalthusOrdering::Alpha1Less,
            31u64,
        ),
        (
            presets::two_type_slow_second(p, 100),
            MalthusOrdering::Alpha2Less,
            1100u64,
        ),
    ];
    let mut pass = true;
    let mut details = Vec::new();
    for (spec, expected_ordering, seed) in cases {
        let constants = two_type_constants(&spec).unwrap();
        assert_eq!(constants.ordering, expected_ordering);
        let target = match constants.ordering {
            // mu alpha2' when the second type grows faster, h1 alpha1' when slower
            MalthusOrdering::Alpha1Less => 2.0 * constants.alpha2_prime,
            MalthusOrdering::Alpha2Less => 5.0 / 3.0 * constants.alpha1_prime,
        };
        let calibration = calibrate(&spec).unwrap();
        let trajectories = run_ensemble(&spec, &[t_final], 10, seed).unwrap();
        let points = ensemble_points(&trajectories, p, &calibration).unwrap();
        let rel_errs: Vec<f64> = points
            .iter()
            .map(|pts| {
                let estimate = pts[1].label_est.expect("label survives at this scale");
                (estimate - target).abs() / target
            })
            .collect();
        let med = median(&rel_errs).unwrap();
        pass &= med <= 0.20;
        details.push(format!(
            "{}: median |est - target|/target = {med:.3} (target {target:.5})",
            match expected_ordering {
                MalthusOrdering::Alpha1Less => "alpha1<alpha2",
                MalthusOrdering::Alpha2Less => "alpha2<alpha1",
            }
        ));
    }
    assert!(report(
        11,
        pass,
        &format!(
            "100 labeled ancestors, p = 1e-2, t = 96h, 10 runs; {} (<= 0.20)",
            details.join("; ")
        )
    ));
}

#[test]
fn criterion_12_byte_identical_ensembles() {
    let bin = env!("CARGO_BIN_EXE_bhgen");
    let dir = std::env::temp_dir().join(format!("bhgen-acceptance-{}", std::process::id()));
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    let config_path = dir.join("config.json");
    std::fs::write(
        &config_path,
        r#"{
            "version": 1,
            "process": {
                "lifetime": {"kind": "lognormal", "mean": 9.3, "sd": 2.54},
                "offspring": {"outcomes": [0, 2], "probs": [0.2, 0.8]},
                "p_label_loss": 0.01
            },
            "observation_times": [24.0, 48.0],
            "replicates": 64,
            "master_seed": 1234,
            "p_sweep": [0.1]
        }"#,
    )
    .unwrap();

    let run = |out: &str, jobs: &str| {
        let out_dir = dir.join(out);
        let status = Command::new(bin)
            .args([
                "ensemble",
                "--config",
                config_path.to_str().unwrap(),
                "--out",
                out_dir.to_str().unwrap(),
                "--jobs",
                jobs,
            ])
            .status()
            .expect("run bhgen");
        assert!(status.success());
        out_dir
    };
    let a = run("run-a", "1");
    let b = run("run-b", "1");
    let c = run("run-c", "4");

    let mut pass = true;
    let mut checked = 0;
    for file in ["trajectory.csv", "estimator.csv", "estimator_p0.1.csv"] {
        let bytes_a = std::fs::read(a.join(file)).unwrap();
        let bytes_b = std::fs::read(b.join(file)).unwrap();
        let bytes_c = std::fs::read(c.join(file)).unwrap();
        pass &= bytes_a == bytes_b && bytes_a == bytes_c;
        checked += 1;
    }
    let _ = std::fs::remove_dir_all(&dir);
    assert!(report(
        12,
        pass,
        &format!(
            "{checked} CSV outputs byte-identical across repeated runs and --jobs in {{1, 4}}"
        )
    ));
}
