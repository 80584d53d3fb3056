//! Study configuration: a JSON schema covering the climatology, bin
//! schemes, landfall geometry, surrogates, error models, recurrence
//! constants, sampling settings, and evidence cases.
//!
//! Configs are validated in full before any computation starts, and every
//! validation failure names the offending field. Unknown fields are
//! rejected so typos surface instead of silently falling back to
//! defaults.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::climatology::{
    DependenceModel, DirectionalModel, HeadingSample, IntensityClasses, LognormalMarginal,
    StormClimatology,
};
use crate::deagg::EvidenceCase;
use crate::discretize::landfall::LandfallConfig;
use crate::discretize::{Axis, BinScheme, TopClosure};
use crate::hazard::RateConfig;
use crate::stats::PiecewiseLinear;
use crate::surrogate::{ErrorModel, ResponseBinScheme, SiteConfig, UniformBins};

/// Configuration loading and validation failures.
#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config {path} is not valid JSON: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("config field {field}: {reason}")]
    Field { field: String, reason: String },
    #[error("file referenced by {field} does not exist: {path}")]
    MissingFile { field: String, path: PathBuf },
}

fn field_err(field: &str, reason: impl Into<String>) -> ConfigError {
    ConfigError::Field {
        field: field.to_string(),
        reason: reason.into(),
    }
}

/// Lognormal parameters: mean and standard deviation of the log.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LognormalParams {
    pub lambda: f64,
    pub zeta: f64,
}

/// Full-range Weibull parameters for the pressure deficit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeibullParams {
    pub scale: f64,
    pub shape: f64,
}

/// One weighted historical heading observation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadingSampleConfig {
    pub theta_deg: f64,
    pub weight: f64,
}

/// Heading model: von Mises kernels around weighted samples, tabulated
/// over a closed domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HeadingConfig {
    pub samples: Vec<HeadingSampleConfig>,
    /// Kernel concentration.
    pub kappa: f64,
    /// Distance-weighting decay, km.
    pub decay_km: f64,
    pub domain_deg: [f64; 2],
    pub grid_cells: usize,
}

/// Climatology parameters: class partition, marginals per class, Kendall
/// matrices per class, and the shared heading model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClimatologyConfig {
    /// `[lo, b1, b2, hi]` pressure-deficit class boundaries, hPa.
    pub class_boundaries: [f64; 4],
    pub dp_weibull: WeibullParams,
    /// Translation-speed lognormals for the low, medium, high classes.
    pub vf_lognormal: [LognormalParams; 3],
    /// Size lognormals for the low, medium, high classes.
    pub rmax_lognormal: [LognormalParams; 3],
    /// Per-class 4×4 Kendall τ matrices over (δp, v_f, r_max, θ);
    /// `null` means independence for that class.
    pub kendall: [Option<Vec<Vec<f64>>>; 3],
    pub heading: HeadingConfig,
    /// Explicit class prior; `null` derives it from the Weibull masses.
    #[serde(default)]
    pub intensity_prior: Option<[f64; 3]>,
}

impl ClimatologyConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        let b = self.class_boundaries;
        if !(b[0] < b[1] && b[1] < b[2] && b[2] < b[3]) {
            return Err(field_err(
                "climatology.class_boundaries",
                format!("{b:?} must be strictly increasing"),
            ));
        }
        if !(self.dp_weibull.scale > 0.0) || !(self.dp_weibull.shape > 0.0) {
            return Err(field_err(
                "climatology.dp_weibull",
                "scale and shape must be positive",
            ));
        }
        for (name, set) in [
            ("vf_lognormal", &self.vf_lognormal),
            ("rmax_lognormal", &self.rmax_lognormal),
        ] {
            for (k, p) in set.iter().enumerate() {
                if !(p.zeta > 0.0) || !p.lambda.is_finite() {
                    return Err(field_err(
                        &format!("climatology.{name}[{k}]"),
                        format!("lambda {} / zeta {} invalid", p.lambda, p.zeta),
                    ));
                }
            }
        }
        for (k, m) in self.kendall.iter().enumerate() {
            if let Some(rows) = m {
                if rows.len() != 4 || rows.iter().any(|r| r.len() != 4) {
                    return Err(field_err(
                        &format!("climatology.kendall[{k}]"),
                        "must be a 4×4 matrix",
                    ));
                }
                for (i, row) in rows.iter().enumerate() {
                    for (j, tau) in row.iter().enumerate() {
                        if tau.abs() > 1.0 || !tau.is_finite() {
                            return Err(field_err(
                                &format!("climatology.kendall[{k}][{i}][{j}]"),
                                format!("Kendall tau {tau} outside [-1, 1]"),
                            ));
                        }
                    }
                }
            }
        }
        let h = &self.heading;
        if h.samples.is_empty() {
            return Err(field_err("climatology.heading.samples", "must be nonempty"));
        }
        if !(h.kappa > 0.0) || !(h.decay_km > 0.0) {
            return Err(field_err(
                "climatology.heading",
                "kappa and decay_km must be positive",
            ));
        }
        if !(h.domain_deg[0] < h.domain_deg[1]) || h.grid_cells < 8 {
            return Err(field_err(
                "climatology.heading",
                "domain must be increasing with at least 8 grid cells",
            ));
        }
        if let Some(p) = self.intensity_prior {
            let sum: f64 = p.iter().sum();
            if p.iter().any(|v| *v < 0.0) || (sum - 1.0).abs() > 1e-9 {
                return Err(field_err(
                    "climatology.intensity_prior",
                    format!("{p:?} must be nonnegative and sum to 1"),
                ));
            }
        }
        Ok(())
    }

    /// Assembles the continuous climatology this config describes.
    pub fn build(&self) -> Result<StormClimatology, ConfigError> {
        self.validate()?;
        let classes = IntensityClasses::from_boundaries(self.class_boundaries)
            .map_err(|e| field_err("climatology.class_boundaries", e.to_string()))?;
        let lognormal = |field: &str, p: &LognormalParams| {
            LognormalMarginal::new(p.lambda, p.zeta)
                .map_err(|e| field_err(field, e.to_string()))
        };
        let vf = [
            lognormal("climatology.vf_lognormal[0]", &self.vf_lognormal[0])?,
            lognormal("climatology.vf_lognormal[1]", &self.vf_lognormal[1])?,
            lognormal("climatology.vf_lognormal[2]", &self.vf_lognormal[2])?,
        ];
        let rmax = [
            lognormal("climatology.rmax_lognormal[0]", &self.rmax_lognormal[0])?,
            lognormal("climatology.rmax_lognormal[1]", &self.rmax_lognormal[1])?,
            lognormal("climatology.rmax_lognormal[2]", &self.rmax_lognormal[2])?,
        ];
        let mut dependence = Vec::with_capacity(3);
        for (k, m) in self.kendall.iter().enumerate() {
            dependence.push(match m {
                Some(rows) => DependenceModel::from_kendall(rows)
                    .map_err(|e| field_err(&format!("climatology.kendall[{k}]"), e.to_string()))?,
                None => DependenceModel::identity(4),
            });
        }
        let dependence: [DependenceModel; 3] = dependence.try_into().expect("three classes");
        let samples: Vec<HeadingSample> = self
            .heading
            .samples
            .iter()
            .map(|s| HeadingSample {
                theta_deg: s.theta_deg,
                weight: s.weight,
            })
            .collect();
        let heading = DirectionalModel::new(samples, self.heading.kappa, self.heading.decay_km)
            .and_then(|m| {
                m.tabulate(
                    self.heading.domain_deg[0],
                    self.heading.domain_deg[1],
                    self.heading.grid_cells,
                )
            })
            .map_err(|e| field_err("climatology.heading", e.to_string()))?;
        StormClimatology::assemble(
            classes,
            self.dp_weibull.scale,
            self.dp_weibull.shape,
            vf,
            rmax,
            dependence,
            heading,
            self.intensity_prior,
        )
        .map_err(|e| field_err("climatology", e.to_string()))
    }
}

/// Bin edges for the four storm-parameter axes. Axis closures are fixed
/// by their semantics: the pressure-deficit and heading domains are
/// bounded (draws beyond them are rejected), while the speed and size
/// axes absorb the upper tail into their last bin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BinsConfig {
    pub dp_edges: Vec<f64>,
    pub vf_edges: Vec<f64>,
    pub rmax_edges: Vec<f64>,
    pub theta_edges: Vec<f64>,
}

impl BinsConfig {
    /// Builds the bin scheme; the landfall-point count supplies the track
    /// axis cardinality.
    pub fn build(&self, n_x0: usize) -> Result<BinScheme, ConfigError> {
        let axis = |field: &str, name: &'static str, edges: &[f64], top: TopClosure| {
            Axis::new(name, edges.to_vec(), top).map_err(|e| field_err(field, e.to_string()))
        };
        BinScheme::new(
            axis("bins.dp_edges", "dp", &self.dp_edges, TopClosure::Closed)?,
            axis("bins.vf_edges", "vf", &self.vf_edges, TopClosure::Open)?,
            axis("bins.rmax_edges", "rmax", &self.rmax_edges, TopClosure::Open)?,
            axis(
                "bins.theta_edges",
                "theta",
                &self.theta_edges,
                TopClosure::Closed,
            )?,
            n_x0,
        )
        .map_err(|e| field_err("bins", e.to_string()))
    }
}

/// Which response model a hazard channel uses.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum SurrogateChoice {
    /// Built-in analytic surge model.
    SyntheticSurge,
    /// Built-in analytic rainfall model.
    SyntheticRain,
    /// Gridded lookup table loaded from CSV, interpolated trilinearly.
    Tabulated { path: PathBuf },
}

/// One hazard channel: surrogate, response grids, and error model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HazardConfigEntry {
    pub label: String,
    pub unit: String,
    pub surrogate: SurrogateChoice,
    /// Predicted-response range `[lo, hi]`.
    pub rhat_range: [f64; 2],
    pub n_rhat_bins: usize,
    pub n_r_bins: usize,
    /// Conditional error standard deviation `σ_c(r̂)` as piecewise-linear
    /// knots; `null` uses the built-in default for the range.
    #[serde(default)]
    pub sigma_knots: Option<Vec<[f64; 2]>>,
    /// Fixed exceedance threshold in response units; `null` defers to
    /// evidence-case values or on-the-fly selection.
    #[serde(default)]
    pub threshold: Option<f64>,
}

impl HazardConfigEntry {
    pub fn validate(&self, index: usize, base_dir: &Path) -> Result<(), ConfigError> {
        let prefix = format!("hazards[{index}]");
        if self.label.is_empty() {
            return Err(field_err(&format!("{prefix}.label"), "must be nonempty"));
        }
        if !(self.rhat_range[0] < self.rhat_range[1])
            || !self.rhat_range.iter().all(|v| v.is_finite())
        {
            return Err(field_err(
                &format!("{prefix}.rhat_range"),
                format!("{:?} must be a finite increasing pair", self.rhat_range),
            ));
        }
        if self.n_rhat_bins == 0 || self.n_r_bins == 0 {
            return Err(field_err(
                &format!("{prefix}.n_rhat_bins / n_r_bins"),
                "bin counts must be positive",
            ));
        }
        if let Some(knots) = &self.sigma_knots {
            if knots.len() < 2 {
                return Err(field_err(
                    &format!("{prefix}.sigma_knots"),
                    "need at least two knots",
                ));
            }
            for (k, knot) in knots.iter().enumerate() {
                if knot[1] < 0.0 || !knot.iter().all(|v| v.is_finite()) {
                    return Err(field_err(
                        &format!("{prefix}.sigma_knots[{k}]"),
                        format!("sigma {} must be finite and nonnegative", knot[1]),
                    ));
                }
                if k > 0 && knots[k - 1][0] >= knot[0] {
                    return Err(field_err(
                        &format!("{prefix}.sigma_knots[{k}]"),
                        "knot abscissae must be strictly increasing",
                    ));
                }
            }
        }
        if let SurrogateChoice::Tabulated { path } = &self.surrogate {
            let resolved = base_dir.join(path);
            if !resolved.exists() {
                return Err(ConfigError::MissingFile {
                    field: format!("{prefix}.surrogate.path"),
                    path: resolved,
                });
            }
        }
        Ok(())
    }

    /// Error model from the configured knots, or the built-in default.
    pub fn error_model(&self) -> Result<ErrorModel, ConfigError> {
        let field = "hazards.sigma_knots";
        match &self.sigma_knots {
            Some(knots) => {
                let pairs: Vec<(f64, f64)> = knots.iter().map(|k| (k[0], k[1])).collect();
                let sigma =
                    PiecewiseLinear::new(&pairs).map_err(|e| field_err(field, e.to_string()))?;
                ErrorModel::new(&ErrorModel::STANDARD_INTERIOR, sigma)
                    .map_err(|e| field_err(field, e.to_string()))
            }
            None => ErrorModel::with_default_sigma(self.rhat_range[0], self.rhat_range[1])
                .map_err(|e| field_err(field, e.to_string())),
        }
    }

    /// Response grids: the configured predicted range, and an actual
    /// range widened by three error standard deviations at each end.
    pub fn response_bins(&self, err: &ErrorModel) -> Result<ResponseBinScheme, ConfigError> {
        let [lo, hi] = self.rhat_range;
        let r_lo = lo - 3.0 * err.sigma(lo);
        let r_hi = hi + 3.0 * err.sigma(hi);
        let build = || -> Result<ResponseBinScheme, crate::surrogate::SurrogateError> {
            ResponseBinScheme::new(
                UniformBins::new(lo, hi, self.n_rhat_bins)?,
                UniformBins::new(r_lo, r_hi, self.n_r_bins)?,
            )
        };
        build().map_err(|e| field_err("hazards.rhat_range", e.to_string()))
    }
}

/// Monte-Carlo sampling settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McsSettings {
    /// Joint draws per intensity class for the parameter tables.
    pub n_joint: u64,
    /// Simulations per parameter combination for the response tables.
    pub n_sim: usize,
    /// Base seed; every stage derives its own stream from it.
    pub seed: u64,
}

/// Top-level study configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub label: String,
    pub climatology: ClimatologyConfig,
    pub bins: BinsConfig,
    pub landfall: LandfallConfig,
    /// Site the synthetic surrogates evaluate at.
    pub site: SiteConfig,
    /// One or two hazard channels.
    pub hazards: Vec<HazardConfigEntry>,
    pub rate: RateConfig,
    pub mcs: McsSettings,
    /// Evidence cases for deaggregation; may be empty.
    #[serde(default)]
    pub evidence: Vec<EvidenceCase>,
    /// No-evidence exceedance probability used when thresholds are
    /// selected from the curve rather than given explicitly.
    #[serde(default = "default_target_ep")]
    pub target_ep: f64,
    /// Output directory, relative to the config file unless absolute.
    pub output_dir: PathBuf,
}

fn default_target_ep() -> f64 {
    0.03
}

impl StudyConfig {
    /// Reads and fully validates a config file. Returns the config and
    /// the directory paths inside it resolve against.
    pub fn load(path: &Path) -> Result<(Self, PathBuf), ConfigError> {
        let text = fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let config: StudyConfig =
            serde_json::from_str(&text).map_err(|source| ConfigError::Json {
                path: path.to_path_buf(),
                source,
            })?;
        let base_dir = path
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."));
        config.validate(&base_dir)?;
        Ok((config, base_dir))
    }

    /// Checks every invariant the schema cannot express. `base_dir`
    /// anchors relative file references.
    pub fn validate(&self, base_dir: &Path) -> Result<(), ConfigError> {
        if self.label.is_empty() {
            return Err(field_err("label", "must be nonempty"));
        }
        self.climatology.validate()?;

        // The class partition must nest inside the pressure-deficit grid.
        let classes = IntensityClasses::from_boundaries(self.climatology.class_boundaries)
            .map_err(|e| field_err("climatology.class_boundaries", e.to_string()))?;
        let bins = self.bins.build(self.landfall.n_points.max(1))?;
        bins.validate_class_nesting(&classes)
            .map_err(|e| field_err("bins.dp_edges", e.to_string()))?;

        if self.landfall.n_points == 0 {
            return Err(field_err("landfall.n_points", "must be positive"));
        }
        if !(self.landfall.lon_west_deg < self.landfall.lon_east_deg) {
            return Err(field_err(
                "landfall",
                "lon_west_deg must be west of lon_east_deg",
            ));
        }
        if self.hazards.is_empty() || self.hazards.len() > 2 {
            return Err(field_err(
                "hazards",
                format!("need 1 or 2 channels, got {}", self.hazards.len()),
            ));
        }
        for (k, hazard) in self.hazards.iter().enumerate() {
            hazard.validate(k, base_dir)?;
        }
        if !(self.rate.lambda > 0.0) || !(self.rate.s_trk > 0.0) {
            return Err(field_err(
                "rate",
                "lambda and s_trk must both be positive",
            ));
        }
        if self.mcs.n_joint < 100 {
            return Err(field_err("mcs.n_joint", "need at least 100 joint draws"));
        }
        if self.mcs.n_sim == 0 {
            return Err(field_err("mcs.n_sim", "must be positive"));
        }
        for (k, case) in self.evidence.iter().enumerate() {
            case.validate()
                .map_err(|e| field_err(&format!("evidence[{k}]"), e.to_string()))?;
            if case.r2.is_some() && self.hazards.len() < 2 {
                return Err(field_err(
                    &format!("evidence[{k}].r2"),
                    "second-channel evidence on a single-hazard study",
                ));
            }
        }
        if !(self.target_ep > 0.0 && self.target_ep < 1.0) {
            return Err(field_err(
                "target_ep",
                format!("{} must lie in (0, 1)", self.target_ep),
            ));
        }
        Ok(())
    }

    /// The class partition described by the climatology block.
    pub fn classes(&self) -> Result<IntensityClasses, ConfigError> {
        IntensityClasses::from_boundaries(self.climatology.class_boundaries)
            .map_err(|e| field_err("climatology.class_boundaries", e.to_string()))
    }

    /// Labels of the EC1/EC2/EC3 pattern for a two-hazard study with
    /// selected thresholds `t1`, `t2`, honoring explicitly configured
    /// evidence first.
    pub fn evidence_or_default(&self, t1: Option<f64>, t2: Option<f64>) -> Vec<EvidenceCase> {
        if !self.evidence.is_empty() {
            return self.evidence.clone();
        }
        let mut cases = Vec::new();
        if let Some(t1) = t1 {
            cases.push(EvidenceCase::ec1(t1));
        }
        if let Some(t2) = t2 {
            cases.push(EvidenceCase::ec2(t2));
        }
        if let (Some(t1), Some(t2)) = (t1, t2) {
            cases.push(EvidenceCase::ec3(t1, t2));
        }
        cases
    }
}
