//! Two-parameter Weibull fitting and inclusion probabilities.
//!
//! The maximum-likelihood shape solves the profile equation
//!
//! ```text
//! f(k) = Σ xᵏ ln x / Σ xᵏ − 1/k − mean(ln x) = 0
//! ```
//!
//! which is strictly increasing in `k`, negative near zero and positive for
//! large `k` whenever the samples are not all equal. The scale then follows
//! in closed form as `λ = (mean xᵏ)^(1/k)`. Samples are divided by their
//! maximum before solving so the powers cannot overflow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tail values below this are clamped before fitting.
pub const TAIL_EPSILON: f64 = 1e-12;

const SHAPE_TOLERANCE: f64 = 1e-10;
const MAX_ITERATIONS: usize = 200;

#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WeibullParams {
    pub shape: f64,
    pub scale: f64,
}

impl WeibullParams {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        if !(shape > 0.0 && shape.is_finite() && scale > 0.0 && scale.is_finite()) {
            return Err(Error::invalid(format!(
                "Weibull parameters must be positive and finite (shape {shape}, scale {scale})"
            )));
        }
        Ok(WeibullParams { shape, scale })
    }

    /// Survival function `exp(-(d/λ)^κ)`; underflows to exactly 0.
    pub fn inclusion(&self, d: f64) -> f64 {
        (-(d / self.scale).powf(self.shape)).exp()
    }

    /// `1 - exp(-(x/λ)^κ)` for `x > 0`, 0 otherwise.
    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            -(-(x / self.scale).powf(self.shape)).exp_m1()
        }
    }

    pub fn log_likelihood(&self, samples: &[f64]) -> f64 {
        let (k, l) = (self.shape, self.scale);
        samples
            .iter()
            .map(|&x| k.ln() - l.ln() + (k - 1.0) * (x.ln() - l.ln()) - (x / l).powf(k))
            .sum()
    }
}

/// Inclusion probability of a point at distance `d` from an anchor.
pub fn weibull_inclusion(d: f64, params: &WeibullParams) -> Result<f64> {
    if !(d >= 0.0) {
        return Err(Error::invalid(format!("distance must be non-negative, got {d}")));
    }
    Ok(params.inclusion(d))
}

struct Profile {
    logs: Vec<f64>,
    mean_log: f64,
}

impl Profile {
    /// Returns `(f(k), f'(k), Σ yᵏ)` for the max-normalized samples.
    fn eval(&self, k: f64) -> (f64, f64, f64) {
        let (mut a, mut b, mut c) = (0.0, 0.0, 0.0);
        for &l in &self.logs {
            let w = (k * l).exp();
            a += w;
            b += w * l;
            c += w * l * l;
        }
        let f = b / a - 1.0 / k - self.mean_log;
        let df = (c * a - b * b) / (a * a) + 1.0 / (k * k);
        (f, df, a)
    }
}

/// Maximum-likelihood Weibull fit.
pub fn weibull_fit_mle(samples: &[f64]) -> Result<WeibullParams> {
    if samples.len() < 2 {
        return Err(Error::Degenerate(format!(
            "Weibull fit needs at least 2 samples, got {}",
            samples.len()
        )));
    }
    if let Some(bad) = samples.iter().find(|&&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::invalid(format!(
            "Weibull samples must be positive and finite, got {bad}"
        )));
    }
    let max = samples.iter().copied().fold(f64::MIN, f64::max);
    let min = samples.iter().copied().fold(f64::MAX, f64::min);
    if min == max {
        return Err(Error::Degenerate("all Weibull samples are equal".into()));
    }
    let logs: Vec<f64> = samples.iter().map(|x| (x / max).ln()).collect();
    let mean_log = logs.iter().sum::<f64>() / logs.len() as f64;
    let profile = Profile { logs, mean_log };

    // bracket the root
    let (mut lo, mut hi) = (1.0f64, 1.0f64);
    let mut expansions = 0;
    while profile.eval(lo).0 >= 0.0 {
        lo *= 0.5;
        expansions += 1;
        if expansions > 200 {
            return Err(Error::Degenerate("cannot bracket Weibull shape".into()));
        }
    }
    while profile.eval(hi).0 <= 0.0 {
        hi *= 2.0;
        expansions += 1;
        if expansions > 200 {
            return Err(Error::Degenerate("cannot bracket Weibull shape".into()));
        }
    }

    let mut k = 0.5 * (lo + hi);
    let mut last = f64::INFINITY;
    for _ in 0..MAX_ITERATIONS {
        let (f, df, a) = profile.eval(k);
        last = f.abs();
        // the second test covers brackets collapsed to adjacent floats
        if last <= SHAPE_TOLERANCE || hi - lo <= 4.0 * f64::EPSILON * k {
            let scale = max * (a / profile.logs.len() as f64).powf(1.0 / k);
            return WeibullParams::new(k, scale);
        }
        if f < 0.0 {
            lo = k;
        } else {
            hi = k;
        }
        let newton = k - f / df;
        k = if df > 0.0 && newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
    }
    Err(Error::NotConverged {
        solver: "Weibull shape",
        iterations: MAX_ITERATIONS,
        residual: last,
    })
}

/// Outcome of a tail fit that must always yield parameters.
#[derive(Copy, Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TailFit {
    pub params: WeibullParams,
    /// True when the tail was degenerate and the exponential fallback
    /// (shape 1, scale = tail mean) was used.
    pub fallback: bool,
}

/// Fits a tail of non-negative values. Zeros are clamped to
/// [`TAIL_EPSILON`]; tails with fewer than two distinct values fall back to
/// an exponential with the tail mean as scale.
pub fn fit_tail(values: &[f64]) -> Result<TailFit> {
    if values.is_empty() {
        return Err(Error::Empty("Weibull tail"));
    }
    if values.iter().any(|v| !(*v >= 0.0 && v.is_finite())) {
        return Err(Error::invalid("tail values must be finite and non-negative"));
    }
    let clamped: Vec<f64> = values.iter().map(|&v| v.max(TAIL_EPSILON)).collect();
    if clamped.len() != values.iter().filter(|v| **v >= TAIL_EPSILON).count() {
        log::debug!("clamped zero tail values to {TAIL_EPSILON:e}");
    }
    match weibull_fit_mle(&clamped) {
        Ok(params) => Ok(TailFit {
            params,
            fallback: false,
        }),
        Err(Error::Degenerate(_)) | Err(Error::NotConverged { .. }) => {
            let mean = clamped.iter().sum::<f64>() / clamped.len() as f64;
            Ok(TailFit {
                params: WeibullParams::new(1.0, mean)?,
                fallback: true,
            })
        }
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::util::seeded_rng;
    use proptest::prelude::*;
    use rand_distr::{Distribution, Weibull};

    #[test]
    fn inclusion_values() {
        let p = WeibullParams::new(2.0, 3.0).unwrap();
        assert_eq!(weibull_inclusion(0.0, &p).unwrap(), 1.0);
        assert!((weibull_inclusion(3.0, &p).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        let far = weibull_inclusion(300.0, &p).unwrap();
        assert!(far < 1e-300);
        assert!(weibull_inclusion(-1.0, &p).is_err());
        assert!(weibull_inclusion(f64::NAN, &p).is_err());
    }

    #[test]
    fn rejects_bad_samples() {
        assert!(matches!(weibull_fit_mle(&[2.0, 2.0, 2.0]), Err(Error::Degenerate(_))));
        assert!(matches!(weibull_fit_mle(&[1.0]), Err(Error::Degenerate(_))));
        assert!(matches!(weibull_fit_mle(&[1.0, 0.0]), Err(Error::InvalidArgument(_))));
        assert!(matches!(weibull_fit_mle(&[1.0, -2.0]), Err(Error::InvalidArgument(_))));
        assert!(WeibullParams::new(0.0, 1.0).is_err());
    }

    #[test]
    fn recovers_seeded_parameters() {
        let mut rng = seeded_rng(2024);
        let dist = Weibull::new(2.0, 1.5).unwrap();
        let xs: Vec<f64> = (0..2000).map(|_| dist.sample(&mut rng)).collect();
        let p = weibull_fit_mle(&xs).unwrap();
        assert!((p.shape - 1.5).abs() / 1.5 < 0.07, "{p:?}");
        assert!((p.scale - 2.0).abs() / 2.0 < 0.07, "{p:?}");
    }

    #[test]
    fn profile_root_is_tight() {
        let xs = [0.3, 0.9, 1.7, 2.2, 0.05, 4.0];
        let p = weibull_fit_mle(&xs).unwrap();
        let max = 4.0f64;
        let logs: Vec<f64> = xs.iter().map(|x| (x / max).ln()).collect();
        let mean_log = logs.iter().sum::<f64>() / 6.0;
        let (f, _, _) = Profile { logs, mean_log }.eval(p.shape);
        assert!(f.abs() <= 1e-10);
    }

    #[test]
    fn tail_fallbacks() {
        let t = fit_tail(&[0.0, 0.0]).unwrap();
        assert!(t.fallback);
        assert_eq!(t.params.scale, TAIL_EPSILON);
        let t = fit_tail(&[0.5]).unwrap();
        assert!(t.fallback);
        assert_eq!(t.params, WeibullParams::new(1.0, 0.5).unwrap());
        let t = fit_tail(&[0.0, 0.5, 1.0]).unwrap();
        assert!(!t.fallback);
        assert!(fit_tail(&[]).is_err());
        assert!(fit_tail(&[-1.0, 2.0]).is_err());
    }

    proptest! {
        #[test]
        fn inclusion_monotone(shape in 0.1f64..10.0, scale in 0.01f64..100.0,
                              a in 0.0f64..1e3, b in 0.0f64..1e3) {
            let p = WeibullParams::new(shape, scale).unwrap();
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            let (pl, ph) = (p.inclusion(lo), p.inclusion(hi));
            prop_assert!(pl >= ph);
            prop_assert!((0.0..=1.0).contains(&pl) && (0.0..=1.0).contains(&ph));
        }

        #[test]
        fn fit_is_scale_equivariant(
            xs in prop::collection::vec(0.01f64..50.0, 3..40),
            c in 0.001f64..1000.0,
        ) {
            prop_assume!(xs.iter().any(|x| *x != xs[0]));
            let p = weibull_fit_mle(&xs).unwrap();
            let scaled: Vec<f64> = xs.iter().map(|x| x * c).collect();
            let q = weibull_fit_mle(&scaled).unwrap();
            prop_assert!((p.shape - q.shape).abs() / p.shape <= 1e-6);
            prop_assert!((p.scale * c - q.scale).abs() / q.scale <= 1e-6);
        }
    }
}
