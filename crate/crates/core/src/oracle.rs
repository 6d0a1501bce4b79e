//! Monte-Carlo-independent moment oracles.
//!
//! The first and second moments of the process solve renewal (Volterra)
//! equations of the form `K(t) = f(t) + int_0^t K(t-u) rho(du)` with
//! `rho(du) = w dP(L <= u)`. These are solved by forward substitution on a
//! uniform grid: kernel mass is assembled from CDF increments times the
//! weight at the interval midpoint (no density needed, so point-mass
//! lifetimes work too), and the convolution uses trapezoid weights in `K`,
//! giving a second-order scheme at O(n^2) cost.
//!
//! Moment identifiers, with `E1*` meaning expectation for the two-type
//! process (type-2 quantities fed by type-1 differentiation):
//! `EZ, EG, EZ2, EGZ, EG2` for a single type, `E1Z2, E1G2` for two types.

use serde::{Deserialize, Serialize};

use crate::distributions::LifetimeDistribution;
use crate::engine::{ProcessKind, ProcessSpec};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum MomentId {
    EZ,
    EG,
    EZ2,
    EGZ,
    EG2,
    E1Z2,
    E1G2,
}

impl MomentId {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::EZ => "EZ",
            Self::EG => "EG",
            Self::EZ2 => "EZ2",
            Self::EGZ => "EGZ",
            Self::EG2 => "EG2",
            Self::E1Z2 => "E1Z2",
            Self::E1G2 => "E1G2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Ok(match s {
            "EZ" => Self::EZ,
            "EG" => Self::EG,
            "EZ2" => Self::EZ2,
            "EGZ" => Self::EGZ,
            "EG2" => Self::EG2,
            "E1Z2" => Self::E1Z2,
            "E1G2" => Self::E1G2,
            other => {
                return Err(Error::InvalidConfig(format!(
                    "unknown moment id {other:?}"
                )))
            }
        })
    }
}

/// One moment on the uniform grid {0, dt, ..., n dt}.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentGrid {
    pub moment: MomentId,
    pub dt: f64,
    pub values: Vec<f64>,
}

impl MomentGrid {
    pub fn t_max(&self) -> f64 {
        self.dt * (self.values.len() - 1) as f64
    }

    pub fn times(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.values.len()).map(move |i| i as f64 * self.dt)
    }

    /// Linear interpolation; errors outside the grid.
    pub fn value_at(&self, t: f64) -> Result<f64> {
        if t < 0.0 || t > self.t_max() + 1e-9 {
            return Err(Error::InvalidConfig(format!(
                "t = {t} outside oracle grid [0, {}]",
                self.t_max()
            )));
        }
        let x = (t / self.dt).min((self.values.len() - 1) as f64);
        let i = x.floor() as usize;
        if i + 1 >= self.values.len() {
            return Ok(*self.values.last().expect("non-empty grid"));
        }
        let frac = x - i as f64;
        Ok(self.values[i] * (1.0 - frac) + self.values[i + 1] * frac)
    }
}

/// Kernel mass per grid interval: `out[j] = w(mid_j) (F(t_j) - F(t_{j-1}))`
/// for `j >= 1`; `out[0] = 0`.
pub fn kernel_increments<W: Fn(f64) -> f64>(
    lifetime: &LifetimeDistribution,
    weight: W,
    dt: f64,
    n_steps: usize,
) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_steps + 1);
    out.push(0.0);
    let mut prev_cdf = 0.0;
    for j in 1..=n_steps {
        let t = j as f64 * dt;
        let cdf = lifetime.cdf(t);
        out.push(weight(t - 0.5 * dt) * (cdf - prev_cdf));
        prev_cdf = cdf;
    }
    out
}

/// Solve `K(t) = f(t) + int_0^t K(t-u) rho(du)` by forward substitution.
/// `kernel[j]` is the mass of `rho` on the j-th grid interval. The j = 1
/// term involves the unknown `K[i]`; its half weight moves to the left side.
pub fn solve_volterra(forcing: &[f64], kernel: &[f64]) -> Vec<f64> {
    let n = forcing.len();
    assert_eq!(kernel.len(), n, "forcing and kernel grids must match");
    let mut k = vec![0.0; n];
    if n == 0 {
        return k;
    }
    k[0] = forcing[0];
    for i in 1..n {
        let mut acc = 0.5 * kernel[1] * k[i - 1];
        for j in 2..=i {
            acc += 0.5 * kernel[j] * (k[i - j] + k[i - j + 1]);
        }
        k[i] = (forcing[i] + acc) / (1.0 - 0.5 * kernel[1]);
    }
    k
}

/// Convolution `(g * rho)(t_i)` of a known grid function against a measure,
/// with the same trapezoid-in-`g` rule as the solver.
pub fn measure_convolution(g: &[f64], kernel: &[f64]) -> Vec<f64> {
    let n = g.len();
    assert_eq!(kernel.len(), n, "grids must match");
    let mut out = vec![0.0; n];
    for i in 1..n {
        let mut acc = 0.0;
        for j in 1..=i {
            acc += 0.5 * kernel[j] * (g[i - j] + g[i - j + 1]);
        }
        out[i] = acc;
    }
    out
}

/// Reject grid steps that do not resolve the lifetime law.
pub fn check_resolution(lifetime: &LifetimeDistribution, dt: f64) -> Result<()> {
    let median = lifetime.median();
    let resolved = dt > 0.0 && dt <= median / 50.0;
    if !resolved {
        return Err(Error::GridResolution { dt, median });
    }
    Ok(())
}

/// Default grid step: min(0.05 h, median lifetime / 100).
pub fn default_dt(spec: &ProcessSpec) -> f64 {
    let median = match &spec.kind {
        ProcessKind::SingleType { lifetime, .. } => lifetime.median(),
        ProcessKind::TwoType {
            lifetime1,
            lifetime2,
            ..
        } => lifetime1.median().min(lifetime2.median()),
    };
    (median / 100.0).min(0.05)
}

fn n_steps(dt: f64, t_max: f64) -> usize {
    (t_max / dt - 1e-9).ceil().max(1.0) as usize
}

struct SingleTypeGrids {
    ez: Vec<f64>,
    eg: Vec<f64>,
    ez2: Vec<f64>,
    egz: Vec<f64>,
    eg2: Vec<f64>,
}

/// All five single-ancestor moment grids for one (lifetime, offspring) law.
fn single_type_grids(
    lifetime: &LifetimeDistribution,
    h: f64,
    v: f64,
    dt: f64,
    n: usize,
) -> SingleTypeGrids {
    let p_increments = kernel_increments(lifetime, |_| 1.0, dt, n);
    let rho: Vec<f64> = p_increments.iter().map(|m| h * m).collect();
    let survival: Vec<f64> = (0..=n)
        .map(|i| 1.0 - lifetime.cdf(i as f64 * dt))
        .collect();

    let ez = solve_volterra(&survival, &rho);

    // EG and EZ2 both depend only on EZ.
    let (eg, ez2) = rayon::join(
        || {
            let forcing: Vec<f64> = measure_convolution(&ez, &p_increments)
                .iter()
                .map(|x| h * x)
                .collect();
            solve_volterra(&forcing, &rho)
        },
        || {
            let ez_sq: Vec<f64> = ez.iter().map(|x| x * x).collect();
            let conv = measure_convolution(&ez_sq, &p_increments);
            let forcing: Vec<f64> = survival
                .iter()
                .zip(&conv)
                .map(|(s, c)| s + v * c)
                .collect();
            solve_volterra(&forcing, &rho)
        },
    );

    let egz = {
        let cross: Vec<f64> = ez
            .iter()
            .zip(&eg)
            .map(|(z, g)| z * (g + z))
            .collect();
        let conv_z2 = measure_convolution(&ez2, &p_increments);
        let conv_cross = measure_convolution(&cross, &p_increments);
        let forcing: Vec<f64> = conv_z2
            .iter()
            .zip(&conv_cross)
            .map(|(a, b)| h * a + v * b)
            .collect();
        solve_volterra(&forcing, &rho)
    };

    let eg2 = {
        let linear: Vec<f64> = egz
            .iter()
            .zip(&ez2)
            .map(|(gz, z2)| 2.0 * gz + z2)
            .collect();
        let square: Vec<f64> = ez
            .iter()
            .zip(&eg)
            .map(|(z, g)| (g + z) * (g + z))
            .collect();
        let conv_linear = measure_convolution(&linear, &p_increments);
        let conv_square = measure_convolution(&square, &p_increments);
        let forcing: Vec<f64> = conv_linear
            .iter()
            .zip(&conv_square)
            .map(|(a, b)| h * a + v * b)
            .collect();
        solve_volterra(&forcing, &rho)
    };

    SingleTypeGrids {
        ez,
        eg,
        ez2,
        egz,
        eg2,
    }
}

/// Moment grids for `spec` on the uniform grid with step `dt` up to `t_max`,
/// combined over the spec's initial population.
///
/// Single-type specs produce {EZ, EG, EZ2, EGZ, EG2}; two-type specs produce
/// {E1Z2, E1G2}.
pub fn moment_grids(spec: &ProcessSpec, dt: f64, t_max: f64) -> Result<Vec<MomentGrid>> {
    spec.validate()?;
    let n = n_steps(dt, t_max);
    let grid = |moment, values| MomentGrid { moment, dt, values };

    match &spec.kind {
        ProcessKind::SingleType {
            lifetime,
            offspring,
        } => {
            check_resolution(lifetime, dt)?;
            let (h, v) = offspring.moments();
            let one = single_type_grids(lifetime, h, v, dt, n);
            let n0: u64 = spec.initial.iter().map(|g| g.count).sum();
            let (a, b) = (n0 as f64, (n0 * n0.saturating_sub(1)) as f64);

            // n independent ancestors: means add; second moments pick up the
            // pairwise product terms.
            let ez: Vec<f64> = one.ez.iter().map(|z| a * z).collect();
            let eg: Vec<f64> = one.eg.iter().map(|g| a * g).collect();
            let ez2: Vec<f64> = one
                .ez2
                .iter()
                .zip(&one.ez)
                .map(|(z2, z)| a * z2 + b * z * z)
                .collect();
            let egz: Vec<f64> = one
                .egz
                .iter()
                .zip(one.eg.iter().zip(&one.ez))
                .map(|(gz, (g, z))| a * gz + b * g * z)
                .collect();
            let eg2: Vec<f64> = one
                .eg2
                .iter()
                .zip(&one.eg)
                .map(|(g2, g)| a * g2 + b * g * g)
                .collect();

            Ok(vec![
                grid(MomentId::EZ, ez),
                grid(MomentId::EG, eg),
                grid(MomentId::EZ2, ez2),
                grid(MomentId::EGZ, egz),
                grid(MomentId::EG2, eg2),
            ])
        }
        ProcessKind::TwoType {
            lifetime1,
            lifetime2,
            offspring1,
            offspring2,
        } => {
            check_resolution(lifetime1, dt)?;
            check_resolution(lifetime2, dt)?;
            let (h1, h2) = offspring1.means();
            let (mu, _) = offspring2.moments();

            let p1 = kernel_increments(lifetime1, |_| 1.0, dt, n);
            let rho1: Vec<f64> = p1.iter().map(|m| h1 * m).collect();
            let p2 = kernel_increments(lifetime2, |_| 1.0, dt, n);
            let rho2: Vec<f64> = p2.iter().map(|m| mu * m).collect();
            let survival2: Vec<f64> = (0..=n)
                .map(|i| 1.0 - lifetime2.cdf(i as f64 * dt))
                .collect();

            // single-type grids of the pure type-2 process
            let m22 = solve_volterra(&survival2, &rho2);

            let (g22, m2) = rayon::join(
                || {
                    let forcing: Vec<f64> = measure_convolution(&m22, &p2)
                        .iter()
                        .map(|x| mu * x)
                        .collect();
                    solve_volterra(&forcing, &rho2)
                },
                || {
                    // type-2 mean under one type-1 ancestor: immigration of
                    // h2 fresh type-2 subtrees per type-1 division
                    let forcing: Vec<f64> = measure_convolution(&m22, &p1)
                        .iter()
                        .map(|x| h2 * x)
                        .collect();
                    solve_volterra(&forcing, &rho1)
                },
            );

            let g2 = {
                // every child of a division is one generation deeper, so the
                // type-1 recursion adds m2 and the immigrant subtrees add
                // their own total generation plus one per cell
                let shifted: Vec<f64> = g22.iter().zip(&m22).map(|(g, z)| g + z).collect();
                let conv_own = measure_convolution(&m2, &p1);
                let conv_immigrant = measure_convolution(&shifted, &p1);
                let forcing: Vec<f64> = conv_own
                    .iter()
                    .zip(&conv_immigrant)
                    .map(|(a, b)| h1 * a + h2 * b)
                    .collect();
                solve_volterra(&forcing, &rho1)
            };

            let n1: u64 = spec
                .initial
                .iter()
                .filter(|g| g.cell_type == 1)
                .map(|g| g.count)
                .sum();
            let n2: u64 = spec
                .initial
                .iter()
                .filter(|g| g.cell_type == 2)
                .map(|g| g.count)
                .sum();
            let (a1, a2) = (n1 as f64, n2 as f64);

            let e1z2: Vec<f64> = m2
                .iter()
                .zip(&m22)
                .map(|(from1, from2)| a1 * from1 + a2 * from2)
                .collect();
            let e1g2: Vec<f64> = g2
                .iter()
                .zip(&g22)
                .map(|(from1, from2)| a1 * from1 + a2 * from2)
                .collect();

            Ok(vec![
                grid(MomentId::E1Z2, e1z2),
                grid(MomentId::E1G2, e1g2),
            ])
        }
    }
}
