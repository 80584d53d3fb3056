//! Continuous marginal distributions for storm parameters.

use serde::{Deserialize, Serialize};

use crate::stats::{norm_cdf, norm_inv_cdf, norm_pdf};

/// A continuous 1-D distribution usable as a copula marginal.
pub trait Marginal {
    /// Cumulative distribution function.
    fn cdf(&self, x: f64) -> f64;
    /// Quantile function; `u` outside `[0, 1]` is clamped.
    fn inv_cdf(&self, u: f64) -> f64;
    /// Probability density.
    fn pdf(&self, x: f64) -> f64;
}

/// Errors from constructing a marginal distribution.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MarginalError {
    #[error("Weibull scale must be positive, got {0}")]
    BadScale(f64),
    #[error("Weibull shape must be positive, got {0}")]
    BadShape(f64),
    #[error("truncation bounds must satisfy 0 <= lower < upper, got [{lower}, {upper}]")]
    BadBounds { lower: f64, upper: f64 },
    #[error("degenerate truncation: the Weibull CDF does not separate {lower} and {upper}")]
    DegenerateTruncation { lower: f64, upper: f64 },
    #[error("lognormal log-scale must be positive, got {0}")]
    BadLogScale(f64),
}

/// Weibull distribution restricted to `[lower, upper]`.
///
/// With `W(x) = 1 − exp(−(x/a)^b)` the base CDF, the truncated CDF is
/// `F(x) = (W(x) − W(lower)) / (W(upper) − W(lower))` on the support.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncatedWeibull {
    /// Scale parameter `a`.
    pub scale: f64,
    /// Shape parameter `b`.
    pub shape: f64,
    /// Lower truncation bound.
    pub lower: f64,
    /// Upper truncation bound.
    pub upper: f64,
}

impl TruncatedWeibull {
    /// Builds and validates the distribution.
    pub fn new(scale: f64, shape: f64, lower: f64, upper: f64) -> Result<Self, MarginalError> {
        if !(scale > 0.0) || !scale.is_finite() {
            return Err(MarginalError::BadScale(scale));
        }
        if !(shape > 0.0) || !shape.is_finite() {
            return Err(MarginalError::BadShape(shape));
        }
        if !(lower >= 0.0 && lower < upper) || !upper.is_finite() {
            return Err(MarginalError::BadBounds { lower, upper });
        }
        let model = Self {
            scale,
            shape,
            lower,
            upper,
        };
        if !(model.truncation().1 > 0.0) {
            return Err(MarginalError::DegenerateTruncation { lower, upper });
        }
        Ok(model)
    }

    /// Validates the public fields, e.g. after deserialization.
    pub fn validate(&self) -> Result<(), MarginalError> {
        Self::new(self.scale, self.shape, self.lower, self.upper).map(|_| ())
    }

    /// Untruncated Weibull CDF, `1 − exp(−(x/a)^b)`, computed stably.
    fn base_cdf(&self, x: f64) -> f64 {
        -(-(x / self.scale).powf(self.shape)).exp_m1()
    }

    /// `(W(lower), W(upper) − W(lower))` for the truncation window.
    fn truncation(&self) -> (f64, f64) {
        let w_lower = self.base_cdf(self.lower);
        (w_lower, self.base_cdf(self.upper) - w_lower)
    }
}

impl Marginal for TruncatedWeibull {
    fn cdf(&self, x: f64) -> f64 {
        if x <= self.lower {
            0.0
        } else if x >= self.upper {
            1.0
        } else {
            let (w_lower, w_range) = self.truncation();
            ((self.base_cdf(x) - w_lower) / w_range).clamp(0.0, 1.0)
        }
    }

    fn inv_cdf(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        let (w_lower, w_range) = self.truncation();
        let p = w_lower + u * w_range;
        // Invert W(x) = p: x = a · (−ln(1 − p))^{1/b}.
        let x = self.scale * (-(-p).ln_1p()).powf(1.0 / self.shape);
        x.clamp(self.lower, self.upper)
    }

    fn pdf(&self, x: f64) -> f64 {
        if x < self.lower || x > self.upper {
            return 0.0;
        }
        let t = x / self.scale;
        let density =
            (self.shape / self.scale) * t.powf(self.shape - 1.0) * (-t.powf(self.shape)).exp();
        density / self.truncation().1
    }
}

/// Lognormal distribution parameterized by the mean and standard deviation
/// of `ln X`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LognormalMarginal {
    /// Log-location `λ = E[ln X]`.
    pub lambda: f64,
    /// Log-scale `ζ = sd[ln X]`, strictly positive.
    pub zeta: f64,
}

impl LognormalMarginal {
    /// Builds and validates the distribution.
    pub fn new(lambda: f64, zeta: f64) -> Result<Self, MarginalError> {
        if !(zeta > 0.0) || !zeta.is_finite() || !lambda.is_finite() {
            return Err(MarginalError::BadLogScale(zeta));
        }
        Ok(Self { lambda, zeta })
    }

    /// The distribution median, `exp(λ)`.
    pub fn median(&self) -> f64 {
        self.lambda.exp()
    }

    /// Quantile at probability `u` — convenience for bin-scheme closure.
    pub fn quantile(&self, u: f64) -> f64 {
        self.inv_cdf(u)
    }
}

impl Marginal for LognormalMarginal {
    fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else {
            norm_cdf((x.ln() - self.lambda) / self.zeta)
        }
    }

    fn inv_cdf(&self, u: f64) -> f64 {
        (self.lambda + self.zeta * norm_inv_cdf(u.clamp(0.0, 1.0))).exp()
    }

    fn pdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return 0.0;
        }
        norm_pdf((x.ln() - self.lambda) / self.zeta) / (x * self.zeta)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn li_dp() -> TruncatedWeibull {
        TruncatedWeibull::new(25.79, 1.197, 8.0, 28.0).unwrap()
    }

    fn li_vf() -> LognormalMarginal {
        LognormalMarginal::new(2.848, 0.4857).unwrap()
    }

    #[test]
    fn truncated_weibull_hits_its_endpoints() {
        let m = li_dp();
        assert_eq!(m.cdf(8.0), 0.0);
        assert_eq!(m.cdf(28.0), 1.0);
        assert_eq!(m.cdf(5.0), 0.0);
        assert_eq!(m.cdf(100.0), 1.0);
        assert!((m.inv_cdf(0.0) - 8.0).abs() < 1e-9);
        assert!((m.inv_cdf(1.0) - 28.0).abs() < 1e-9);
    }

    #[test]
    fn truncated_weibull_cdf_matches_quadrature_of_its_density() {
        // Independent oracle: Simpson's rule on the truncated density.
        let m = li_dp();
        let simpson = |lo: f64, hi: f64, n: usize| -> f64 {
            let h = (hi - lo) / n as f64;
            let mut s = m.pdf(lo) + m.pdf(hi);
            for k in 1..n {
                let x = lo + k as f64 * h;
                s += m.pdf(x) * if k % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * h / 3.0
        };
        for &x in &[10.0, 14.0, 18.0, 22.0, 26.0] {
            let want = simpson(8.0, x, 4000);
            assert!(
                (m.cdf(x) - want).abs() < 1e-9,
                "x={x}: cdf={} quadrature={want}",
                m.cdf(x)
            );
        }
        // Total mass integrates to one.
        assert!((simpson(8.0, 28.0, 4000) - 1.0).abs() < 1e-9);
    }

    #[test]
    fn lognormal_median_is_exp_lambda() {
        let m = li_vf();
        let median = (2.848f64).exp();
        assert!((median - 17.2536).abs() < 1e-3);
        assert!((m.cdf(median) - 0.5).abs() < 1e-12);
        assert!((m.inv_cdf(0.5) - median).abs() < 1e-9 * median);
    }

    #[test]
    fn lognormal_cdf_matches_quadrature() {
        let m = li_vf();
        let simpson = |lo: f64, hi: f64, n: usize| -> f64 {
            let h = (hi - lo) / n as f64;
            let mut s = m.pdf(lo) + m.pdf(hi);
            for k in 1..n {
                s += m.pdf(lo + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * h / 3.0
        };
        for &x in &[5.0, 12.0, 20.0, 45.0] {
            let want = simpson(1e-9, x, 20_000);
            assert!((m.cdf(x) - want).abs() < 1e-8, "x={x}");
        }
    }

    #[test]
    fn inverse_cdf_round_trips_across_the_support() {
        let w = li_dp();
        for k in 0..=100 {
            let x = 8.0 + 20.0 * k as f64 / 100.0;
            let r = w.inv_cdf(w.cdf(x));
            assert!((r - x).abs() <= 1e-8, "weibull x={x} r={r}");
        }
        let ln = li_vf();
        for k in 1..=100 {
            let x = 60.0 * k as f64 / 100.0;
            let r = ln.inv_cdf(ln.cdf(x));
            assert!((r - x).abs() <= 1e-8 * x.max(1.0), "lognormal x={x} r={r}");
        }
    }

    #[test]
    fn cdfs_are_nondecreasing() {
        let w = li_dp();
        let ln = li_vf();
        let mut prev_w = -1.0;
        let mut prev_l = -1.0;
        for k in 0..400 {
            let x = 0.5 + k as f64 * 0.25;
            let cw = w.cdf(x);
            let cl = ln.cdf(x);
            assert!(cw >= prev_w);
            assert!(cl >= prev_l);
            prev_w = cw;
            prev_l = cl;
        }
    }

    #[test]
    fn constructors_reject_bad_parameters() {
        assert!(matches!(
            TruncatedWeibull::new(-1.0, 1.0, 0.0, 1.0),
            Err(MarginalError::BadScale(_))
        ));
        assert!(matches!(
            TruncatedWeibull::new(1.0, 0.0, 0.0, 1.0),
            Err(MarginalError::BadShape(_))
        ));
        assert!(matches!(
            TruncatedWeibull::new(1.0, 1.0, 5.0, 5.0),
            Err(MarginalError::BadBounds { .. })
        ));
        // Truncation so far in the tail that the CDF cannot separate the
        // bounds in double precision.
        assert!(matches!(
            TruncatedWeibull::new(1.0, 1.0, 800.0, 900.0),
            Err(MarginalError::DegenerateTruncation { .. })
        ));
        assert!(matches!(
            LognormalMarginal::new(1.0, 0.0),
            Err(MarginalError::BadLogScale(_))
        ));
    }
}
