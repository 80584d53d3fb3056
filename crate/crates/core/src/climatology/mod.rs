//! Continuous probabilistic model of tropical-cyclone parameters at
//! landfall: intensity classes over the central-pressure deficit, per-class
//! marginal distributions, a directional heading model, and a Gaussian
//! copula tying the four parameters together.

mod dependence;
mod heading;
mod ingest;
mod marginal;

pub use dependence::{kendall_to_pearson, AdjustmentReport, DependenceError, DependenceModel};
pub use heading::{DirectionalModel, HeadingDistribution, HeadingError, HeadingSample};
pub use ingest::{
    fit_kendall_matrix, fit_lognormal_weighted, fit_truncated_weibull_weighted, haversine_km,
    ingest_samples, intensity_prior, read_track_rows, FitError, IngestError, IngestReport,
    SkippedStorm, StormSample, StudyRegion, TrackRow,
};
pub use marginal::{LognormalMarginal, Marginal, MarginalError, TruncatedWeibull};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Intensity class tag: low, medium, or high central-pressure deficit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum ClassLabel {
    #[serde(rename = "LI")]
    Low,
    #[serde(rename = "MI")]
    Medium,
    #[serde(rename = "HI")]
    High,
}

impl ClassLabel {
    /// All labels in canonical order.
    pub const ALL: [ClassLabel; 3] = [ClassLabel::Low, ClassLabel::Medium, ClassLabel::High];

    /// Canonical index: LI = 0, MI = 1, HI = 2.
    pub fn index(self) -> usize {
        match self {
            ClassLabel::Low => 0,
            ClassLabel::Medium => 1,
            ClassLabel::High => 2,
        }
    }

    /// Short display name.
    pub fn as_str(self) -> &'static str {
        match self {
            ClassLabel::Low => "LI",
            ClassLabel::Medium => "MI",
            ClassLabel::High => "HI",
        }
    }
}

impl std::fmt::Display for ClassLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One intensity class: a half-open pressure-deficit interval
/// `[dp_lower, dp_upper)` (the last class includes its upper bound).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityClass {
    pub label: ClassLabel,
    pub dp_lower: f64,
    pub dp_upper: f64,
}

/// Errors from class-partition construction.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ClassError {
    #[error("class boundaries must be strictly increasing, got {0:?}")]
    NotIncreasing([f64; 4]),
    #[error("class boundaries must be finite and nonnegative, got {0:?}")]
    BadBoundary([f64; 4]),
}

/// The three-class partition of the pressure-deficit domain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntensityClasses {
    classes: [IntensityClass; 3],
}

impl IntensityClasses {
    /// The standard partition: LI `[8, 28)`, MI `[28, 48)`, HI `[48, 148]`
    /// hPa.
    pub fn canonical() -> Self {
        Self::from_boundaries([8.0, 28.0, 48.0, 148.0]).expect("canonical boundaries are valid")
    }

    /// Builds a partition from four increasing boundaries
    /// `[lo, b1, b2, hi]`.
    pub fn from_boundaries(b: [f64; 4]) -> Result<Self, ClassError> {
        if b.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(ClassError::BadBoundary(b));
        }
        if !(b[0] < b[1] && b[1] < b[2] && b[2] < b[3]) {
            return Err(ClassError::NotIncreasing(b));
        }
        Ok(Self {
            classes: [
                IntensityClass {
                    label: ClassLabel::Low,
                    dp_lower: b[0],
                    dp_upper: b[1],
                },
                IntensityClass {
                    label: ClassLabel::Medium,
                    dp_lower: b[1],
                    dp_upper: b[2],
                },
                IntensityClass {
                    label: ClassLabel::High,
                    dp_lower: b[2],
                    dp_upper: b[3],
                },
            ],
        })
    }

    /// The class containing `dp` (lower-inclusive; the top class includes
    /// its upper bound). `None` outside the domain.
    pub fn classify(&self, dp: f64) -> Option<ClassLabel> {
        for c in &self.classes {
            if dp >= c.dp_lower && dp < c.dp_upper {
                return Some(c.label);
            }
        }
        if dp == self.classes[2].dp_upper {
            return Some(ClassLabel::High);
        }
        None
    }

    /// Class descriptor for a label.
    pub fn get(&self, label: ClassLabel) -> &IntensityClass {
        &self.classes[label.index()]
    }

    /// All classes in order.
    pub fn iter(&self) -> impl Iterator<Item = &IntensityClass> {
        self.classes.iter()
    }

    /// Domain boundaries `[lo, b1, b2, hi]`.
    pub fn boundaries(&self) -> [f64; 4] {
        [
            self.classes[0].dp_lower,
            self.classes[1].dp_lower,
            self.classes[2].dp_lower,
            self.classes[2].dp_upper,
        ]
    }
}

/// Per-class continuous model: class-truncated pressure-deficit marginal,
/// lognormal translation-speed and size marginals, and the class's
/// dependence structure over (ΔP, V_f, R_max, θ).
#[derive(Debug, Clone)]
pub struct ClassClimatology {
    pub dp: TruncatedWeibull,
    pub vf: LognormalMarginal,
    pub rmax: LognormalMarginal,
    pub dependence: DependenceModel,
}

/// One joint draw of the four continuous storm parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StormDraw {
    pub dp: f64,
    pub vf: f64,
    pub rmax: f64,
    pub theta_deg: f64,
}

/// Errors from assembling a [`StormClimatology`].
#[derive(Debug, thiserror::Error)]
pub enum ClimatologyError {
    #[error(transparent)]
    Marginal(#[from] MarginalError),
    #[error(transparent)]
    Heading(#[from] HeadingError),
    #[error(transparent)]
    Dependence(#[from] DependenceError),
    #[error(transparent)]
    Class(#[from] ClassError),
    #[error("dependence matrix for class {label} has dimension {dim}, expected 4")]
    WrongDependenceDim { label: ClassLabel, dim: usize },
    #[error("intensity prior {0:?} must be nonnegative and sum to 1 within 1e-9")]
    BadPrior([f64; 3]),
}

/// The assembled continuous climatology, immutable after construction.
#[derive(Debug, Clone)]
pub struct StormClimatology {
    classes: IntensityClasses,
    per_class: [ClassClimatology; 3],
    heading: HeadingDistribution,
    intensity_prior: [f64; 3],
}

impl StormClimatology {
    /// Assembles per-class models around a single full-range Weibull for
    /// the pressure deficit: each class's ΔP marginal is that Weibull
    /// re-truncated to the class interval, and (unless an explicit prior
    /// is supplied) the class prior is the Weibull mass of each interval.
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        classes: IntensityClasses,
        dp_scale: f64,
        dp_shape: f64,
        vf: [LognormalMarginal; 3],
        rmax: [LognormalMarginal; 3],
        dependence: [DependenceModel; 3],
        heading: HeadingDistribution,
        explicit_prior: Option<[f64; 3]>,
    ) -> Result<Self, ClimatologyError> {
        let bounds = classes.boundaries();
        let full = TruncatedWeibull::new(dp_scale, dp_shape, bounds[0], bounds[3])?;
        let intensity_prior = match explicit_prior {
            Some(p) => {
                let sum: f64 = p.iter().sum();
                if p.iter().any(|v| !v.is_finite() || *v < 0.0) || (sum - 1.0).abs() > 1e-9 {
                    return Err(ClimatologyError::BadPrior(p));
                }
                p
            }
            None => {
                let mut p = [0.0; 3];
                for (k, c) in classes.iter().enumerate() {
                    p[k] = full.cdf(c.dp_upper) - full.cdf(c.dp_lower);
                }
                p
            }
        };
        for (label, dep) in ClassLabel::ALL.iter().zip(&dependence) {
            if dep.dim() != 4 {
                return Err(ClimatologyError::WrongDependenceDim {
                    label: *label,
                    dim: dep.dim(),
                });
            }
        }
        let [dep_li, dep_mi, dep_hi] = dependence;
        let [vf_li, vf_mi, vf_hi] = vf;
        let [rm_li, rm_mi, rm_hi] = rmax;
        let make = |label: ClassLabel,
                    vf: LognormalMarginal,
                    rmax: LognormalMarginal,
                    dep: DependenceModel|
         -> Result<ClassClimatology, ClimatologyError> {
            let c = classes.get(label);
            Ok(ClassClimatology {
                dp: TruncatedWeibull::new(dp_scale, dp_shape, c.dp_lower, c.dp_upper)?,
                vf,
                rmax,
                dependence: dep,
            })
        };
        Ok(Self {
            classes,
            per_class: [
                make(ClassLabel::Low, vf_li, rm_li, dep_li)?,
                make(ClassLabel::Medium, vf_mi, rm_mi, dep_mi)?,
                make(ClassLabel::High, vf_hi, rm_hi, dep_hi)?,
            ],
            heading,
            intensity_prior,
        })
    }

    /// The class partition.
    pub fn classes(&self) -> &IntensityClasses {
        &self.classes
    }

    /// Per-class continuous model.
    pub fn class_model(&self, label: ClassLabel) -> &ClassClimatology {
        &self.per_class[label.index()]
    }

    /// The tabulated heading marginal shared by all classes.
    pub fn heading(&self) -> &HeadingDistribution {
        &self.heading
    }

    /// Prior probability of each intensity class, `p(i)`.
    pub fn intensity_prior(&self) -> [f64; 3] {
        self.intensity_prior
    }

    /// One draw of (ΔP, V_f, R_max, θ) for the given class: correlated
    /// normals through the class's Cholesky factor, mapped through Φ and
    /// each marginal's quantile function.
    pub fn draw_one(&self, label: ClassLabel, rng: &mut impl rand::Rng) -> StormDraw {
        let model = self.class_model(label);
        let u = model.dependence.sample_uniforms(rng);
        StormDraw {
            dp: model.dp.inv_cdf(u[0]),
            vf: model.vf.inv_cdf(u[1]),
            rmax: model.rmax.inv_cdf(u[2]),
            theta_deg: self.heading.inv_cdf(u[3]),
        }
    }

    /// `n` joint draws for a class, deterministic for a fixed seed.
    pub fn sample_joint(&self, label: ClassLabel, n: usize, seed: u64) -> Vec<StormDraw> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| self.draw_one(label, &mut rng)).collect()
    }
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;

    /// Climatology with the standard parameter set and identity copulas.
    pub(crate) fn reference_climatology(kendall: Option<Vec<Vec<f64>>>) -> StormClimatology {
        let dep = || match &kendall {
            Some(k) => DependenceModel::from_kendall(k).unwrap(),
            None => DependenceModel::identity(4),
        };
        let heading = DirectionalModel::new(
            vec![
                HeadingSample {
                    theta_deg: -30.0,
                    weight: 1.0,
                },
                HeadingSample {
                    theta_deg: 0.0,
                    weight: 1.5,
                },
                HeadingSample {
                    theta_deg: 20.0,
                    weight: 0.8,
                },
            ],
            4.0,
            200.0,
        )
        .unwrap()
        .tabulate(-180.0, 180.0, 3600)
        .unwrap();
        StormClimatology::assemble(
            IntensityClasses::canonical(),
            25.79,
            1.197,
            [
                LognormalMarginal::new(2.848, 0.4857).unwrap(),
                LognormalMarginal::new(2.970, 0.3518).unwrap(),
                LognormalMarginal::new(3.006, 0.5465).unwrap(),
            ],
            [
                LognormalMarginal::new(4.307, 0.4170).unwrap(),
                LognormalMarginal::new(4.097, 0.3597).unwrap(),
                LognormalMarginal::new(4.009, 0.4276).unwrap(),
            ],
            [dep(), dep(), dep()],
            heading,
            None,
        )
        .unwrap()
    }

    #[test]
    fn canonical_classes_partition_the_domain() {
        let cls = IntensityClasses::canonical();
        assert_eq!(cls.classify(8.0), Some(ClassLabel::Low));
        assert_eq!(cls.classify(27.999), Some(ClassLabel::Low));
        assert_eq!(cls.classify(28.0), Some(ClassLabel::Medium));
        assert_eq!(cls.classify(48.0), Some(ClassLabel::High));
        assert_eq!(cls.classify(148.0), Some(ClassLabel::High));
        assert_eq!(cls.classify(7.9), None);
        assert_eq!(cls.classify(148.1), None);
        assert!(IntensityClasses::from_boundaries([8.0, 48.0, 28.0, 148.0]).is_err());
    }

    #[test]
    fn derived_prior_is_the_weibull_mass_of_each_class() {
        let clim = reference_climatology(None);
        let p = clim.intensity_prior();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        // Independent oracle: Simpson quadrature of the full-range
        // truncated Weibull density over each class interval.
        let full = TruncatedWeibull::new(25.79, 1.197, 8.0, 148.0).unwrap();
        let simpson = |lo: f64, hi: f64| -> f64 {
            let n = 4000;
            let h = (hi - lo) / n as f64;
            let mut s = full.pdf(lo) + full.pdf(hi);
            for k in 1..n {
                s += full.pdf(lo + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
            }
            s * h / 3.0
        };
        let expected = [
            simpson(8.0, 28.0),
            simpson(28.0, 48.0),
            simpson(48.0, 148.0),
        ];
        for (got, want) in p.iter().zip(expected) {
            assert!((got - want).abs() < 1e-8, "{got} vs {want}");
        }
        // Low-intensity storms dominate under this Weibull.
        assert!(p[0] > p[1] && p[1] > p[2]);
    }

    #[test]
    fn explicit_prior_overrides_and_is_validated() {
        let clim = reference_climatology(None);
        let heading = clim.heading().clone();
        let rebuilt = StormClimatology::assemble(
            IntensityClasses::canonical(),
            25.79,
            1.197,
            [
                clim.class_model(ClassLabel::Low).vf.clone(),
                clim.class_model(ClassLabel::Medium).vf.clone(),
                clim.class_model(ClassLabel::High).vf.clone(),
            ],
            [
                clim.class_model(ClassLabel::Low).rmax.clone(),
                clim.class_model(ClassLabel::Medium).rmax.clone(),
                clim.class_model(ClassLabel::High).rmax.clone(),
            ],
            [
                DependenceModel::identity(4),
                DependenceModel::identity(4),
                DependenceModel::identity(4),
            ],
            heading.clone(),
            Some([0.5, 0.3, 0.2]),
        )
        .unwrap();
        assert_eq!(rebuilt.intensity_prior(), [0.5, 0.3, 0.2]);

        let bad = StormClimatology::assemble(
            IntensityClasses::canonical(),
            25.79,
            1.197,
            [
                clim.class_model(ClassLabel::Low).vf.clone(),
                clim.class_model(ClassLabel::Medium).vf.clone(),
                clim.class_model(ClassLabel::High).vf.clone(),
            ],
            [
                clim.class_model(ClassLabel::Low).rmax.clone(),
                clim.class_model(ClassLabel::Medium).rmax.clone(),
                clim.class_model(ClassLabel::High).rmax.clone(),
            ],
            [
                DependenceModel::identity(4),
                DependenceModel::identity(4),
                DependenceModel::identity(4),
            ],
            heading,
            Some([0.5, 0.3, 0.4]),
        );
        assert!(matches!(bad, Err(ClimatologyError::BadPrior(_))));
    }

    #[test]
    fn draws_respect_class_truncation_and_heading_domain() {
        let clim = reference_climatology(None);
        for label in ClassLabel::ALL {
            let c = clim.classes().get(label);
            for d in clim.sample_joint(label, 2000, 99) {
                assert!(d.dp >= c.dp_lower && d.dp <= c.dp_upper, "{label}: {}", d.dp);
                assert!(d.vf > 0.0 && d.rmax > 0.0);
                assert!((-180.0..=180.0).contains(&d.theta_deg));
            }
        }
    }

    #[test]
    fn sampling_is_deterministic_per_seed() {
        let clim = reference_climatology(None);
        let a = clim.sample_joint(ClassLabel::Medium, 50, 7);
        let b = clim.sample_joint(ClassLabel::Medium, 50, 7);
        let c = clim.sample_joint(ClassLabel::Medium, 50, 8);
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn identity_copula_marginals_pass_kolmogorov_smirnov() {
        // KS two-sided test at α = 0.01: D_crit = 1.628/√n.
        let clim = reference_climatology(None);
        let n = 50_000;
        let draws = clim.sample_joint(ClassLabel::Low, n, 2024);
        let model = clim.class_model(ClassLabel::Low);
        let d_crit = 1.628 / (n as f64).sqrt();

        let ks = |mut us: Vec<f64>| -> f64 {
            us.sort_by(f64::total_cmp);
            let n = us.len() as f64;
            us.iter()
                .enumerate()
                .map(|(i, &u)| {
                    let lo = i as f64 / n;
                    let hi = (i + 1) as f64 / n;
                    (u - lo).abs().max((hi - u).abs())
                })
                .fold(0.0, f64::max)
        };
        let d_dp = ks(draws.iter().map(|d| model.dp.cdf(d.dp)).collect());
        let d_vf = ks(draws.iter().map(|d| model.vf.cdf(d.vf)).collect());
        let d_rm = ks(draws.iter().map(|d| model.rmax.cdf(d.rmax)).collect());
        let d_th = ks(draws.iter().map(|d| clim.heading().cdf(d.theta_deg)).collect());
        for (name, d) in [("dp", d_dp), ("vf", d_vf), ("rmax", d_rm), ("theta", d_th)] {
            assert!(d < d_crit, "KS({name}) = {d} exceeds {d_crit}");
        }
    }

    #[test]
    fn configured_rank_correlation_is_recovered_from_draws() {
        let tau = vec![
            vec![1.0, 0.5, 0.0, 0.0],
            vec![0.5, 1.0, 0.0, 0.0],
            vec![0.0, 0.0, 1.0, 0.0],
            vec![0.0, 0.0, 0.0, 1.0],
        ];
        let clim = reference_climatology(Some(tau));
        let draws = clim.sample_joint(ClassLabel::High, 20_000, 5);
        let dp: Vec<f64> = draws.iter().map(|d| d.dp).collect();
        let vf: Vec<f64> = draws.iter().map(|d| d.vf).collect();
        let rm: Vec<f64> = draws.iter().map(|d| d.rmax).collect();
        let t_dp_vf = crate::stats::kendall_tau(&dp, &vf).unwrap();
        let t_dp_rm = crate::stats::kendall_tau(&dp, &rm).unwrap();
        assert!((t_dp_vf - 0.5).abs() < 0.03, "tau(dp,vf) = {t_dp_vf}");
        assert!(t_dp_rm.abs() < 0.03, "tau(dp,rmax) = {t_dp_rm}");
    }
}
