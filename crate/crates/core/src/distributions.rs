//! Lifetime and offspring laws.
//!
//! [`LifetimeDistribution`] carries sampling, CDF, quantiles and the two
//! Laplace-transform functionals `E(e^{-sL})` and `E(L e^{-sL})` that every
//! derived growth constant consumes. Closed forms are used where they exist
//! (exponential, gamma, deterministic); the lognormal case goes through
//! adaptive Gauss-Kronrod quadrature at relative tolerance 1e-10.
//!
//! Offspring laws are finite pmfs: scalar-valued ([`OffspringDistribution`])
//! for single-type processes and for second-type cells, pair-valued
//! ([`PairOffspringDistribution`]) for first-type cells in the two-type model.

use rand::Rng;
use rand_distr::Distribution as RandDistribution;
use serde::{Deserialize, Serialize};
use statrs::distribution::{Continuous, ContinuousCDF};

use crate::error::{Error, Result};
use crate::quadrature;
use crate::rng::RngStream;

/// Relative tolerance for Laplace-functional quadrature.
const LAPLACE_REL_TOL: f64 = 1e-12;
/// Upper quantile used to truncate quadrature domains.
const TRUNCATION_QUANTILE: f64 = 1.0 - 1e-12;
/// Maximum number of outcomes in an offspring pmf.
const MAX_SUPPORT: usize = 64;

/// A strictly positive lifetime law. Times are in hours.
///
/// The lognormal variant is parameterized by its natural-scale mean and
/// standard deviation and converted internally to log-scale `(mu, sigma)` via
/// `sigma^2 = ln(1 + (sd/mean)^2)`, `mu = ln(mean) - sigma^2/2`.
///
/// Deterministic lifetimes are lattice laws: the asymptotic theory behind the
/// derived constants does not cover them, so calibration outputs computed
/// from them carry a lattice warning. They are supported for the exact
/// synchronous-tree identity checks.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LifetimeDistribution {
    Exponential { rate: f64 },
    LogNormal { mean: f64, sd: f64 },
    Gamma { shape: f64, scale: f64 },
    Deterministic { value: f64 },
}

impl LifetimeDistribution {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Self::Exponential { rate } => rate > 0.0 && rate.is_finite(),
            Self::LogNormal { mean, sd } => {
                mean > 0.0 && sd > 0.0 && mean.is_finite() && sd.is_finite()
            }
            Self::Gamma { shape, scale } => {
                shape > 0.0 && scale > 0.0 && shape.is_finite() && scale.is_finite()
            }
            Self::Deterministic { value } => value > 0.0 && value.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidDistribution(format!(
                "parameters must be positive finite reals: {self:?}"
            )))
        }
    }

    /// True for lattice laws excluded by the renewal-theoretic limits.
    pub fn is_lattice(&self) -> bool {
        matches!(self, Self::Deterministic { .. })
    }

    /// Log-scale parameters of the lognormal variant.
    fn lognormal_params(mean: f64, sd: f64) -> (f64, f64) {
        let sigma2 = (1.0 + (sd / mean).powi(2)).ln();
        (mean.ln() - 0.5 * sigma2, sigma2.sqrt())
    }

    /// Draw one strictly positive lifetime.
    pub fn sample(&self, rng: &mut RngStream) -> f64 {
        loop {
            let x = match *self {
                Self::Exponential { rate } => {
                    rand_distr::Exp::new(rate).expect("validated").sample(rng)
                }
                Self::LogNormal { mean, sd } => {
                    let (mu, sigma) = Self::lognormal_params(mean, sd);
                    rand_distr::LogNormal::new(mu, sigma)
                        .expect("validated")
                        .sample(rng)
                }
                Self::Gamma { shape, scale } => rand_distr::Gamma::new(shape, scale)
                    .expect("validated")
                    .sample(rng),
                Self::Deterministic { value } => value,
            };
            if x > 0.0 {
                return x;
            }
        }
    }

    /// P(L <= t).
    pub fn cdf(&self, t: f64) -> f64 {
        if t < 0.0 {
            return 0.0;
        }
        match *self {
            Self::Exponential { rate } => 1.0 - (-rate * t).exp(),
            Self::LogNormal { mean, sd } => {
                let (mu, sigma) = Self::lognormal_params(mean, sd);
                statrs::distribution::LogNormal::new(mu, sigma)
                    .expect("validated")
                    .cdf(t)
            }
            Self::Gamma { shape, scale } => statrs::distribution::Gamma::new(shape, 1.0 / scale)
                .expect("validated")
                .cdf(t),
            Self::Deterministic { value } => {
                if t >= value {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }

    fn pdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            return 0.0;
        }
        match *self {
            Self::Exponential { rate } => rate * (-rate * t).exp(),
            Self::LogNormal { mean, sd } => {
                let (mu, sigma) = Self::lognormal_params(mean, sd);
                statrs::distribution::LogNormal::new(mu, sigma)
                    .expect("validated")
                    .pdf(t)
            }
            Self::Gamma { shape, scale } => statrs::distribution::Gamma::new(shape, 1.0 / scale)
                .expect("validated")
                .pdf(t),
            Self::Deterministic { .. } => 0.0,
        }
    }

    pub fn mean(&self) -> f64 {
        match *self {
            Self::Exponential { rate } => 1.0 / rate,
            Self::LogNormal { mean, .. } => mean,
            Self::Gamma { shape, scale } => shape * scale,
            Self::Deterministic { value } => value,
        }
    }

    /// Quantile function; used for quadrature truncation and grid sizing.
    pub fn quantile(&self, p: f64) -> f64 {
        debug_assert!((0.0..1.0).contains(&p) || p == 0.0 || p < 1.0);
        match *self {
            Self::Exponential { rate } => -(1.0 - p).ln() / rate,
            Self::LogNormal { mean, sd } => {
                let (mu, sigma) = Self::lognormal_params(mean, sd);
                statrs::distribution::LogNormal::new(mu, sigma)
                    .expect("validated")
                    .inverse_cdf(p)
            }
            Self::Gamma { shape, scale } => statrs::distribution::Gamma::new(shape, 1.0 / scale)
                .expect("validated")
                .inverse_cdf(p),
            Self::Deterministic { value } => value,
        }
    }

    pub fn median(&self) -> f64 {
        self.quantile(0.5)
    }

    /// E(e^{-sL}) for s >= 0; in (0, 1].
    pub fn laplace(&self, s: f64) -> Result<f64> {
        debug_assert!(s >= 0.0);
        if s == 0.0 {
            return Ok(1.0); // E(e^0) = 1 identically, also on the quadrature path
        }
        match *self {
            Self::Exponential { rate } => Ok(rate / (rate + s)),
            Self::Gamma { shape, scale } => Ok((1.0 + scale * s).powf(-shape)),
            Self::Deterministic { value } => Ok((-s * value).exp()),
            Self::LogNormal { .. } => self.laplace_quadrature(s, false),
        }
    }

    /// E(L e^{-sL}) for s >= 0; strictly positive.
    pub fn laplace_weighted(&self, s: f64) -> Result<f64> {
        debug_assert!(s >= 0.0);
        if s == 0.0 {
            return Ok(self.mean());
        }
        match *self {
            Self::Exponential { rate } => Ok(rate / (rate + s).powi(2)),
            Self::Gamma { shape, scale } => {
                Ok(shape * scale * (1.0 + scale * s).powf(-shape - 1.0))
            }
            Self::Deterministic { value } => Ok(value * (-s * value).exp()),
            Self::LogNormal { .. } => self.laplace_quadrature(s, true),
        }
    }

    /// Quadrature route for the Laplace functionals, usable on any
    /// density-backed variant. Exercised in tests against the closed forms.
    pub(crate) fn laplace_quadrature(&self, s: f64, weighted: bool) -> Result<f64> {
        let hi = self.quantile(TRUNCATION_QUANTILE);
        quadrature::integrate(
            |u| {
                let w = if weighted { u } else { 1.0 };
                w * (-s * u).exp() * self.pdf(u)
            },
            0.0,
            hi,
            LAPLACE_REL_TOL,
        )
    }
}

/// Finite scalar offspring pmf.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OffspringDistribution {
    outcomes: Vec<u32>,
    probs: Vec<f64>,
    #[serde(skip)]
    cumulative: Vec<f64>,
}

fn validate_probs(probs: &[f64]) -> Result<()> {
    if probs.iter().any(|&p| !(0.0..=1.0).contains(&p) || p.is_nan()) {
        return Err(Error::InvalidDistribution(
            "offspring weights must lie in [0, 1]".into(),
        ));
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(Error::InvalidDistribution(format!(
            "offspring weights sum to {total}, expected 1 within 1e-12"
        )));
    }
    Ok(())
}

fn cumulative(probs: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    probs
        .iter()
        .map(|p| {
            acc += p;
            acc
        })
        .collect()
}

impl OffspringDistribution {
    pub fn new(outcomes: Vec<u32>, probs: Vec<f64>) -> Result<Self> {
        if outcomes.is_empty() || outcomes.len() != probs.len() {
            return Err(Error::InvalidDistribution(
                "offspring support and weights must be non-empty and equal length".into(),
            ));
        }
        if outcomes.len() > MAX_SUPPORT {
            return Err(Error::InvalidDistribution(format!(
                "offspring support capped at {MAX_SUPPORT} outcomes"
            )));
        }
        let mut seen = outcomes.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidDistribution(
                "offspring support entries must be distinct".into(),
            ));
        }
        validate_probs(&probs)?;
        let cumulative = cumulative(&probs);
        Ok(Self {
            outcomes,
            probs,
            cumulative,
        })
    }

    /// Point mass at `n`.
    pub fn constant(n: u32) -> Self {
        Self::new(vec![n], vec![1.0]).expect("valid point mass")
    }

    pub fn outcomes(&self) -> &[u32] {
        &self.outcomes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// (h, v) = (E(N), E(N(N-1))) as exact finite sums.
    pub fn moments(&self) -> (f64, f64) {
        let mut h = 0.0;
        let mut v = 0.0;
        for (&n, &p) in self.outcomes.iter().zip(&self.probs) {
            let n = n as f64;
            h += n * p;
            v += n * (n - 1.0) * p;
        }
        (h, v)
    }

    pub fn p_zero(&self) -> f64 {
        self.outcomes
            .iter()
            .zip(&self.probs)
            .find(|(&n, _)| n == 0)
            .map(|(_, &p)| p)
            .unwrap_or(0.0)
    }

    pub fn sample(&self, rng: &mut RngStream) -> u32 {
        let u: f64 = rng.random();
        for (i, &c) in self.cumulative.iter().enumerate() {
            if u < c {
                return self.outcomes[i];
            }
        }
        *self.outcomes.last().expect("non-empty support")
    }
}

/// Finite pair-valued offspring pmf for first-type cells of the two-type
/// model; outcome `(n1, n2)` produces `n1` type-1 and `n2` type-2 children.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairOffspringDistribution {
    outcomes: Vec<(u32, u32)>,
    probs: Vec<f64>,
    #[serde(skip)]
    cumulative: Vec<f64>,
}

impl PairOffspringDistribution {
    pub fn new(outcomes: Vec<(u32, u32)>, probs: Vec<f64>) -> Result<Self> {
        if outcomes.is_empty() || outcomes.len() != probs.len() {
            return Err(Error::InvalidDistribution(
                "offspring support and weights must be non-empty and equal length".into(),
            ));
        }
        if outcomes.len() > MAX_SUPPORT {
            return Err(Error::InvalidDistribution(format!(
                "offspring support capped at {MAX_SUPPORT} outcomes"
            )));
        }
        let mut seen = outcomes.clone();
        seen.sort_unstable();
        if seen.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidDistribution(
                "offspring support entries must be distinct".into(),
            ));
        }
        validate_probs(&probs)?;
        let cumulative = cumulative(&probs);
        Ok(Self {
            outcomes,
            probs,
            cumulative,
        })
    }

    /// Expand a total-count pmf with an independent per-child type-2
    /// probability into the equivalent joint pmf: given `n` total children,
    /// the type split is Binomial(n, type2_child_prob).
    pub fn from_total_and_type2_prob(
        total: &OffspringDistribution,
        type2_child_prob: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&type2_child_prob) {
            return Err(Error::InvalidDistribution(
                "per-child type-2 probability must lie in [0, 1]".into(),
            ));
        }
        let beta = type2_child_prob;
        let mut outcomes = Vec::new();
        let mut probs = Vec::new();
        for (&n, &p) in total.outcomes().iter().zip(total.probs()) {
            for n2 in 0..=n {
                let n1 = n - n2;
                let w = p * binomial(n, n2) * beta.powi(n2 as i32) * (1.0 - beta).powi(n1 as i32);
                if w > 0.0 {
                    outcomes.push((n1, n2));
                    probs.push(w);
                }
            }
        }
        Self::new(outcomes, probs)
    }

    pub fn outcomes(&self) -> &[(u32, u32)] {
        &self.outcomes
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    /// Per-coordinate means (h1, h2).
    pub fn means(&self) -> (f64, f64) {
        let mut h1 = 0.0;
        let mut h2 = 0.0;
        for (&(n1, n2), &p) in self.outcomes.iter().zip(&self.probs) {
            h1 += n1 as f64 * p;
            h2 += n2 as f64 * p;
        }
        (h1, h2)
    }

    /// The first-coordinate marginal law (the type-1 sub-population behaves
    /// as a single-type process with this offspring law).
    pub fn marginal_type1(&self) -> OffspringDistribution {
        let mut acc: Vec<(u32, f64)> = Vec::new();
        for (&(n1, _), &p) in self.outcomes.iter().zip(&self.probs) {
            match acc.iter_mut().find(|(n, _)| *n == n1) {
                Some((_, q)) => *q += p,
                None => acc.push((n1, p)),
            }
        }
        acc.sort_unstable_by_key(|&(n, _)| n);
        let (outcomes, probs) = acc.into_iter().unzip();
        OffspringDistribution::new(outcomes, probs).expect("marginal of a valid joint pmf")
    }

    pub fn sample(&self, rng: &mut RngStream) -> (u32, u32) {
        let u: f64 = rng.random();
        for (i, &c) in self.cumulative.iter().enumerate() {
            if u < c {
                return self.outcomes[i];
            }
        }
        *self.outcomes.last().expect("non-empty support")
    }
}

fn binomial(n: u32, k: u32) -> f64 {
    let k = k.min(n - k.min(n));
    let mut out = 1.0;
    for i in 0..k {
        out = out * (n - i) as f64 / (i + 1) as f64;
    }
    out
}

#[cfg(test)]
mod tests {
    // reference values carry their full precision
    #![allow(clippy::excessive_precision)]

    use super::*;
    use approx::assert_relative_eq;

    fn exp1() -> LifetimeDistribution {
        LifetimeDistribution::Exponential { rate: 1.0 }
    }

    fn lognormal_cell() -> LifetimeDistribution {
        LifetimeDistribution::LogNormal {
            mean: 9.3,
            sd: 2.54,
        }
    }

    #[test]
    fn deterministic_sampling_is_point_mass() {
        let d = LifetimeDistribution::Deterministic { value: 9.3 };
        let mut rng = RngStream::new(1, 0);
        assert_eq!(d.sample(&mut rng), 9.3);
        assert_eq!(d.cdf(9.2), 0.0);
        assert_eq!(d.cdf(9.3), 1.0);
        assert!(d.is_lattice());
    }

    #[test]
    fn exponential_sample_mean() {
        let d = exp1();
        let mut rng = RngStream::new(7, 0);
        let n = 1_000_000;
        let sum: f64 = (0..n).map(|_| d.sample(&mut rng)).sum();
        assert!((sum / n as f64 - 1.0).abs() < 0.01);
    }

    #[test]
    fn lognormal_sample_mean_matches_natural_scale() {
        let d = lognormal_cell();
        let mut rng = RngStream::new(11, 0);
        let n = 1_000_000;
        let sum: f64 = (0..n).map(|_| d.sample(&mut rng)).sum();
        assert!((sum / n as f64 - 9.3).abs() < 0.05);
    }

    #[test]
    fn lognormal_parameter_conversion() {
        // natural mean/sd -> log-scale (mu, sigma); moments recovered exactly
        let (mu, sigma) = LifetimeDistribution::lognormal_params(9.3, 2.54);
        let mean = (mu + 0.5 * sigma * sigma).exp();
        let var = ((sigma * sigma).exp() - 1.0) * (2.0 * mu + sigma * sigma).exp();
        assert_relative_eq!(mean, 9.3, max_relative = 1e-12);
        assert_relative_eq!(var.sqrt(), 2.54, max_relative = 1e-12);
        // reference: mu = 2.19404313086, sigma = 0.26822106293
        assert_relative_eq!(mu, 2.1940431308602011, max_relative = 1e-12);
        assert_relative_eq!(sigma, 0.2682210629276126, max_relative = 1e-12);
    }

    #[test]
    fn cdf_examples() {
        assert_eq!(exp1().cdf(0.0), 0.0);
        assert_eq!(lognormal_cell().cdf(0.0), 0.0);
        assert_relative_eq!(exp1().cdf(std::f64::consts::LN_2), 0.5, epsilon = 1e-14);
        assert_eq!(
            LifetimeDistribution::Deterministic { value: 2.0 }.cdf(2.0),
            1.0
        );
    }

    #[test]
    fn laplace_closed_forms() {
        assert_eq!(exp1().laplace(0.0).unwrap(), 1.0);
        assert_relative_eq!(exp1().laplace(1.0).unwrap(), 0.5, epsilon = 1e-15);
        let det = LifetimeDistribution::Deterministic { value: 1.0 };
        assert_relative_eq!(
            det.laplace(std::f64::consts::LN_2).unwrap(),
            0.5,
            epsilon = 1e-15
        );
    }

    #[test]
    fn laplace_weighted_closed_forms() {
        assert_relative_eq!(exp1().laplace_weighted(1.0).unwrap(), 0.25, epsilon = 1e-15);
        assert_relative_eq!(exp1().laplace_weighted(0.0).unwrap(), 1.0, epsilon = 1e-15);
        let det = LifetimeDistribution::Deterministic { value: 3.0 };
        assert_relative_eq!(
            det.laplace_weighted(0.5).unwrap(),
            3.0 * (-1.5f64).exp(),
            epsilon = 1e-15
        );
    }

    #[test]
    fn quadrature_route_matches_closed_forms() {
        // The adaptive quadrature path cross-checked against independent
        // closed forms on density-backed laws.
        let gamma = LifetimeDistribution::Gamma {
            shape: 2.5,
            scale: 3.0,
        };
        for &s in &[0.0, 0.01, 0.1, 0.5, 1.0] {
            let q = gamma.laplace_quadrature(s, false).unwrap();
            assert_relative_eq!(q, gamma.laplace(s).unwrap(), max_relative = 1e-9);
            let qw = gamma.laplace_quadrature(s, true).unwrap();
            assert_relative_eq!(qw, gamma.laplace_weighted(s).unwrap(), max_relative = 1e-9);
        }
        for &s in &[0.0, 0.2, 1.0, 5.0, 10.0] {
            let q = exp1().laplace_quadrature(s, false).unwrap();
            assert_relative_eq!(q, 1.0 / (1.0 + s), max_relative = 1e-9);
        }
    }

    #[test]
    fn lognormal_laplace_reference_values() {
        // High-precision reference values (40-digit quadrature).
        let d = lognormal_cell();
        assert_relative_eq!(
            d.laplace(0.01).unwrap(),
            0.91148541006003629992,
            max_relative = 1e-9
        );
        assert_relative_eq!(
            d.laplace(0.05).unwrap(),
            0.63304797866797339262,
            max_relative = 1e-9
        );
        assert_relative_eq!(
            d.laplace(0.1).unwrap(),
            0.40663624126273653996,
            max_relative = 1e-9
        );
        assert_relative_eq!(
            d.laplace_weighted(0.05).unwrap(),
            5.6933712126707133831,
            max_relative = 1e-9
        );
        assert_relative_eq!(d.laplace_weighted(0.0).unwrap(), 9.3, max_relative = 1e-9);
    }

    #[test]
    fn offspring_moments_examples() {
        let d = OffspringDistribution::new(vec![0, 2], vec![0.2, 0.8]).unwrap();
        let (h, v) = d.moments();
        assert_relative_eq!(h, 1.6, epsilon = 1e-15);
        assert_relative_eq!(v, 1.6, epsilon = 1e-15);

        let (h, v) = OffspringDistribution::constant(2).moments();
        assert_eq!((h, v), (2.0, 2.0));
    }

    #[test]
    fn pair_offspring_expansion_and_means() {
        // two children, each independently type-1 w.p. 5/6
        let total = OffspringDistribution::constant(2);
        let pair = PairOffspringDistribution::from_total_and_type2_prob(&total, 1.0 / 6.0).unwrap();
        let mut pmf: Vec<((u32, u32), f64)> = pair
            .outcomes()
            .iter()
            .copied()
            .zip(pair.probs().iter().copied())
            .collect();
        pmf.sort_unstable_by_key(|&(o, _)| o);
        assert_eq!(pmf.len(), 3);
        assert_relative_eq!(pmf[0].1, 1.0 / 36.0, epsilon = 1e-15); // (0,2)
        assert_relative_eq!(pmf[1].1, 10.0 / 36.0, epsilon = 1e-15); // (1,1)
        assert_relative_eq!(pmf[2].1, 25.0 / 36.0, epsilon = 1e-15); // (2,0)

        let (h1, h2) = pair.means();
        assert_relative_eq!(h1, 5.0 / 3.0, epsilon = 1e-14);
        assert_relative_eq!(h2, 1.0 / 3.0, epsilon = 1e-14);

        let marginal = pair.marginal_type1();
        let (h, _) = marginal.moments();
        assert_relative_eq!(h, 5.0 / 3.0, epsilon = 1e-14);
    }

    #[test]
    fn offspring_sampling_frequencies() {
        let d = OffspringDistribution::new(vec![0, 2], vec![0.2, 0.8]).unwrap();
        let mut rng = RngStream::new(3, 0);
        let n = 1_000_000;
        let zeros = (0..n).filter(|_| d.sample(&mut rng) == 0).count();
        assert!((zeros as f64 / n as f64 - 0.2).abs() < 0.002);

        let total = OffspringDistribution::constant(2);
        let pair = PairOffspringDistribution::from_total_and_type2_prob(&total, 1.0 / 6.0).unwrap();
        let mut rng = RngStream::new(4, 0);
        let sum2: u64 = (0..n).map(|_| pair.sample(&mut rng).1 as u64).sum();
        assert!((sum2 as f64 / n as f64 - 1.0 / 3.0).abs() < 0.002);
    }

    #[test]
    fn invalid_offspring_rejected() {
        assert!(OffspringDistribution::new(vec![0, 0], vec![0.5, 0.5]).is_err());
        assert!(OffspringDistribution::new(vec![0, 2], vec![0.3, 0.8]).is_err());
        assert!(OffspringDistribution::new(vec![], vec![]).is_err());
        assert!(OffspringDistribution::new((0..70).collect(), vec![1.0 / 70.0; 70]).is_err());
    }

    #[test]
    fn sampling_is_deterministic_per_stream() {
        let d = lognormal_cell();
        let mut a = RngStream::new(99, 5);
        let mut b = RngStream::new(99, 5);
        for _ in 0..100 {
            assert_eq!(d.sample(&mut a).to_bits(), d.sample(&mut b).to_bits());
        }
    }
}
