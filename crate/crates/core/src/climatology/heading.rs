//! Directional storm-heading model: a von Mises kernel mixture over
//! historical headings, and its tabulated CDF for copula inversion.

use serde::{Deserialize, Serialize};

use super::marginal::Marginal;
use crate::stats::bessel_i0;

/// Errors from building the directional model.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HeadingError {
    #[error("directional model needs at least one sample with positive weight")]
    NoPositiveWeight,
    #[error("heading weight must be finite and nonnegative, got {0}")]
    BadWeight(f64),
    #[error("heading angle must be a finite value in [-180, 180] degrees, got {0}")]
    BadAngle(f64),
    #[error("von Mises concentration must be positive, got {0}")]
    BadKappa(f64),
    #[error("distance bandwidth must be positive, got {0}")]
    BadBandwidth(f64),
    #[error("tabulation domain [{lo}, {hi}] must be increasing within [-180, 180]")]
    BadDomain { lo: f64, hi: f64 },
    #[error("tabulation needs at least 8 cells, got {0}")]
    TooFewCells(usize),
}

/// One historical heading observation with its distance-derived weight.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HeadingSample {
    /// Heading in degrees, north = 0, eastward positive, in `[-180, 180]`.
    pub theta_deg: f64,
    /// Nonnegative kernel weight.
    pub weight: f64,
}

/// Von Mises kernel mixture over heading samples.
///
/// The density at heading `θ` (per radian, over the full circle) is
/// `g(θ) = Σ_j w_j · exp(κ·cos(θ − θ_j)) / (2π · I₀(κ) · Σ_j w_j)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionalModel {
    /// Heading observations with weights.
    pub samples: Vec<HeadingSample>,
    /// Von Mises concentration `κ`.
    pub kappa: f64,
    /// Distance bandwidth `h_d` (km) used when weighting observations by
    /// their distance to the reference location.
    pub bandwidth_km: f64,
}

impl DirectionalModel {
    /// Builds and validates the model.
    pub fn new(
        samples: Vec<HeadingSample>,
        kappa: f64,
        bandwidth_km: f64,
    ) -> Result<Self, HeadingError> {
        let model = Self {
            samples,
            kappa,
            bandwidth_km,
        };
        model.validate()?;
        Ok(model)
    }

    /// Validates the public fields, e.g. after deserialization.
    pub fn validate(&self) -> Result<(), HeadingError> {
        if !(self.kappa > 0.0) || !self.kappa.is_finite() {
            return Err(HeadingError::BadKappa(self.kappa));
        }
        if !(self.bandwidth_km > 0.0) || !self.bandwidth_km.is_finite() {
            return Err(HeadingError::BadBandwidth(self.bandwidth_km));
        }
        let mut any_positive = false;
        for s in &self.samples {
            if !s.weight.is_finite() || s.weight < 0.0 {
                return Err(HeadingError::BadWeight(s.weight));
            }
            if !s.theta_deg.is_finite() || !(-180.0..=180.0).contains(&s.theta_deg) {
                return Err(HeadingError::BadAngle(s.theta_deg));
            }
            any_positive |= s.weight > 0.0;
        }
        if !any_positive {
            return Err(HeadingError::NoPositiveWeight);
        }
        Ok(())
    }

    /// Mixture density at `theta_deg`, per radian, normalized over the
    /// full circle.
    pub fn density(&self, theta_deg: f64) -> f64 {
        let theta = theta_deg.to_radians();
        let mut weighted = 0.0;
        let mut total_weight = 0.0;
        for s in &self.samples {
            weighted += s.weight * (self.kappa * (theta - s.theta_deg.to_radians()).cos()).exp();
            total_weight += s.weight;
        }
        weighted / (2.0 * std::f64::consts::PI * bessel_i0(self.kappa) * total_weight)
    }

    /// Tabulates the CDF on `[lo_deg, hi_deg]` with `cells` trapezoid
    /// panels and normalizes it to 1 over that domain, yielding an
    /// invertible marginal (the heading conditioned on the domain).
    pub fn tabulate(
        &self,
        lo_deg: f64,
        hi_deg: f64,
        cells: usize,
    ) -> Result<HeadingDistribution, HeadingError> {
        self.validate()?;
        if !(lo_deg < hi_deg) || lo_deg < -180.0 || hi_deg > 180.0 {
            return Err(HeadingError::BadDomain {
                lo: lo_deg,
                hi: hi_deg,
            });
        }
        if cells < 8 {
            return Err(HeadingError::TooFewCells(cells));
        }
        let n = cells + 1;
        let step = (hi_deg - lo_deg) / cells as f64;
        let thetas: Vec<f64> = (0..n).map(|k| lo_deg + k as f64 * step).collect();
        // Density per degree on the domain.
        let dens: Vec<f64> = thetas
            .iter()
            .map(|&t| self.density(t) * std::f64::consts::PI / 180.0)
            .collect();
        let mut cum = vec![0.0; n];
        for k in 1..n {
            cum[k] = cum[k - 1] + 0.5 * (dens[k - 1] + dens[k]) * step;
        }
        let mass = cum[n - 1];
        // Von Mises kernels are strictly positive, so mass > 0 always.
        let cdf: Vec<f64> = cum.iter().map(|c| c / mass).collect();
        let pdf: Vec<f64> = dens.iter().map(|d| d / mass).collect();
        Ok(HeadingDistribution {
            thetas,
            cdf,
            pdf,
            domain_mass: mass,
        })
    }
}

/// Tabulated, domain-conditioned heading distribution.
///
/// CDF and PDF are stored on a uniform grid in degrees; evaluation is by
/// linear interpolation, and the quantile function inverts the piecewise-
/// linear CDF (strictly increasing since the kernel density is positive).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeadingDistribution {
    thetas: Vec<f64>,
    cdf: Vec<f64>,
    pdf: Vec<f64>,
    domain_mass: f64,
}

impl HeadingDistribution {
    /// Domain lower edge (degrees).
    pub fn lo(&self) -> f64 {
        self.thetas[0]
    }

    /// Domain upper edge (degrees).
    pub fn hi(&self) -> f64 {
        *self.thetas.last().expect("non-empty grid")
    }

    /// Probability mass the unconditioned circle density places on the
    /// tabulation domain.
    pub fn domain_mass(&self) -> f64 {
        self.domain_mass
    }

    fn cell_of(&self, x: f64) -> usize {
        let n = self.thetas.len();
        let step = (self.hi() - self.lo()) / (n - 1) as f64;
        (((x - self.lo()) / step) as usize).min(n - 2)
    }
}

impl Marginal for HeadingDistribution {
    fn cdf(&self, x: f64) -> f64 {
        if x <= self.lo() {
            return 0.0;
        }
        if x >= self.hi() {
            return 1.0;
        }
        let k = self.cell_of(x);
        let (x0, x1) = (self.thetas[k], self.thetas[k + 1]);
        let t = (x - x0) / (x1 - x0);
        self.cdf[k] + t * (self.cdf[k + 1] - self.cdf[k])
    }

    fn inv_cdf(&self, u: f64) -> f64 {
        let u = u.clamp(0.0, 1.0);
        // First cell whose upper CDF value reaches u.
        let k = self
            .cdf
            .partition_point(|&c| c < u)
            .clamp(1, self.cdf.len() - 1)
            - 1;
        let (c0, c1) = (self.cdf[k], self.cdf[k + 1]);
        let t = if c1 > c0 { (u - c0) / (c1 - c0) } else { 0.0 };
        let x = self.thetas[k] + t * (self.thetas[k + 1] - self.thetas[k]);
        x.clamp(self.lo(), self.hi())
    }

    fn pdf(&self, x: f64) -> f64 {
        if x < self.lo() || x > self.hi() {
            return 0.0;
        }
        let k = self.cell_of(x);
        let (x0, x1) = (self.thetas[k], self.thetas[k + 1]);
        let t = (x - x0) / (x1 - x0);
        self.pdf[k] + t * (self.pdf[k + 1] - self.pdf[k])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single_sample_model() -> DirectionalModel {
        DirectionalModel::new(
            vec![HeadingSample {
                theta_deg: 0.0,
                weight: 1.0,
            }],
            4.0,
            200.0,
        )
        .unwrap()
    }

    #[test]
    fn single_kernel_peaks_at_its_sample_and_matches_closed_form() {
        let m = single_sample_model();
        // Peak value: exp(κ) / (2π·I₀(κ)).
        let want = (4.0f64).exp() / (2.0 * std::f64::consts::PI * bessel_i0(4.0));
        assert!((m.density(0.0) - want).abs() < 1e-12);
        assert!(m.density(0.0) > m.density(10.0));
        assert!(m.density(10.0) > m.density(40.0));
        // Symmetry about the sample.
        assert!((m.density(25.0) - m.density(-25.0)).abs() < 1e-12);
    }

    #[test]
    fn mixture_density_integrates_to_one_over_the_circle() {
        // Independent trapezoid quadrature oracle.
        let m = DirectionalModel::new(
            vec![
                HeadingSample {
                    theta_deg: -45.0,
                    weight: 2.0,
                },
                HeadingSample {
                    theta_deg: 10.0,
                    weight: 0.5,
                },
                HeadingSample {
                    theta_deg: 160.0,
                    weight: 1.2,
                },
            ],
            4.0,
            200.0,
        )
        .unwrap();
        let n = 100_000;
        let step = 360.0 / n as f64;
        let mut integral = 0.0;
        for k in 0..n {
            let a = -180.0 + k as f64 * step;
            let b = a + step;
            integral += 0.5 * (m.density(a) + m.density(b)) * step.to_radians();
        }
        assert!((integral - 1.0).abs() < 1e-6, "integral = {integral}");
    }

    #[test]
    fn dense_equal_weight_samples_approach_the_uniform_density() {
        let samples: Vec<HeadingSample> = (0..360)
            .map(|k| HeadingSample {
                theta_deg: -180.0 + k as f64 + 0.5,
                weight: 1.0,
            })
            .collect();
        let m = DirectionalModel::new(samples, 4.0, 200.0).unwrap();
        let uniform = 1.0 / (2.0 * std::f64::consts::PI);
        for &t in &[-170.0, -60.0, 0.0, 33.3, 179.0] {
            assert!(
                (m.density(t) - uniform).abs() < 0.01 * uniform,
                "density({t}) = {}",
                m.density(t)
            );
        }
    }

    #[test]
    fn weight_zero_samples_do_not_contribute() {
        let m1 = single_sample_model();
        let m2 = DirectionalModel::new(
            vec![
                HeadingSample {
                    theta_deg: 0.0,
                    weight: 1.0,
                },
                HeadingSample {
                    theta_deg: 90.0,
                    weight: 0.0,
                },
            ],
            4.0,
            200.0,
        )
        .unwrap();
        for &t in &[-120.0, -30.0, 0.0, 77.0] {
            assert!((m1.density(t) - m2.density(t)).abs() < 1e-15);
        }
    }

    #[test]
    fn tabulated_cdf_round_trips_and_reports_domain_mass() {
        let m = single_sample_model();
        let dist = m.tabulate(-180.0, 180.0, 3600).unwrap();
        assert!((dist.cdf(-180.0)).abs() < 1e-15);
        assert!((dist.cdf(180.0) - 1.0).abs() < 1e-15);
        // Full circle: domain mass is the whole density.
        assert!((dist.domain_mass() - 1.0).abs() < 1e-6);
        for &u in &[0.001, 0.1, 0.5, 0.9, 0.999] {
            let x = dist.inv_cdf(u);
            assert!((dist.cdf(x) - u).abs() < 1e-9, "u={u}");
        }
        // Symmetric single kernel at 0: median is 0.
        assert!(dist.inv_cdf(0.5).abs() < 1e-9);
    }

    #[test]
    fn restricted_domain_conditions_the_density() {
        let m = single_sample_model();
        let full = m.tabulate(-180.0, 180.0, 3600).unwrap();
        let part = m.tabulate(-80.0, 80.0, 1600).unwrap();
        assert!(part.domain_mass() < 1.0);
        // Conditioned CDF = (F(x) − F(lo)) / mass within the window.
        let expect =
            (full.cdf(30.0) - full.cdf(-80.0)) / (full.cdf(80.0) - full.cdf(-80.0));
        assert!((part.cdf(30.0) - expect).abs() < 1e-6);
        // All quantiles stay inside the window.
        assert!(part.inv_cdf(0.0) >= -80.0 && part.inv_cdf(1.0) <= 80.0);
    }

    #[test]
    fn validation_rejects_degenerate_models() {
        assert!(matches!(
            DirectionalModel::new(vec![], 4.0, 200.0),
            Err(HeadingError::NoPositiveWeight)
        ));
        assert!(matches!(
            DirectionalModel::new(
                vec![HeadingSample {
                    theta_deg: 0.0,
                    weight: 0.0
                }],
                4.0,
                200.0
            ),
            Err(HeadingError::NoPositiveWeight)
        ));
        assert!(matches!(
            DirectionalModel::new(
                vec![HeadingSample {
                    theta_deg: 200.0,
                    weight: 1.0
                }],
                4.0,
                200.0
            ),
            Err(HeadingError::BadAngle(_))
        ));
        assert!(matches!(
            DirectionalModel::new(
                vec![HeadingSample {
                    theta_deg: 0.0,
                    weight: 1.0
                }],
                -1.0,
                200.0
            ),
            Err(HeadingError::BadKappa(_))
        ));
        let ok = single_sample_model();
        assert!(matches!(
            ok.tabulate(-80.0, -90.0, 100),
            Err(HeadingError::BadDomain { .. })
        ));
        assert!(matches!(
            ok.tabulate(-80.0, 80.0, 4),
            Err(HeadingError::TooFewCells(4))
        ));
    }
}
