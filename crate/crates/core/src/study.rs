//! Study pipeline: turns a validated configuration into the discrete
//! tables a hazard network is assembled from, with build telemetry and a
//! JSON persistence format so reruns can skip table construction.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::bn::{FactorDoc, FactorError};
use crate::climatology::{ClassLabel, ClimatologyError};
use crate::config::{ConfigError, StudyConfig, SurrogateChoice};
use crate::discretize::landfall::{build_landfall, LandfallError};
use crate::discretize::{
    conditionalize, discretize_joint, ClassJointSlice, CptSet, DiscreteJointTable,
    DiscretizeError,
};
use crate::hazard::{assemble, AssembledNetwork, HazardChannel, HazardError};
use crate::surrogate::{
    build_r_cpt, build_rhat_cpt, tabulated_model, ClampReport, McsConfig, ResponseBinScheme,
    ResponseModel, SyntheticRain, SyntheticSurge, TabulatedError,
};

/// Failures while building or persisting study artifacts.
#[derive(Debug, thiserror::Error)]
pub enum StudyError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Climatology(#[from] ClimatologyError),
    #[error(transparent)]
    Landfall(#[from] LandfallError),
    #[error(transparent)]
    Discretize(#[from] DiscretizeError),
    #[error(transparent)]
    Surrogate(#[from] crate::surrogate::SurrogateError),
    #[error("tabulated grid {path}: {source}")]
    Tabulated {
        path: PathBuf,
        source: TabulatedError,
    },
    #[error(transparent)]
    Hazard(#[from] HazardError),
    #[error("artifact file {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("artifact file {path} is not valid JSON: {source}")]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("artifact table {table} failed validation: {source}")]
    BadTable { table: String, source: FactorError },
}

/// Derives a decorrelated seed for one named pipeline stage. Builders
/// split their own work into per-combination streams, but streams from
/// different stages would collide under a shared seed, so each stage
/// gets its own (FNV-1a over the tag, splitmix64-finished).
pub fn stage_seed(base: u64, tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for byte in tag.as_bytes() {
        h ^= u64::from(*byte);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    let mut z = base ^ h;
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Wall time of one pipeline stage.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
}

/// Acceptance bookkeeping for one intensity class's joint sampling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassSampling {
    pub class: String,
    pub requested: u64,
    pub accepted: u64,
    pub rejection_fraction: f64,
}

/// Serializable view of a clamp tally.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClampInfo {
    pub clamped: u64,
    pub total: u64,
    pub fraction: f64,
}

impl From<ClampReport> for ClampInfo {
    fn from(r: ClampReport) -> Self {
        Self {
            clamped: r.clamped,
            total: r.total,
            fraction: r.fraction(),
        }
    }
}

/// Clamp tallies for one hazard's two table builds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HazardClamps {
    pub label: String,
    pub rhat: ClampInfo,
    pub r: ClampInfo,
}

/// Zero-mass parent rows filled uniformly during conditionalization,
/// per table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroMassSummary {
    pub dp_given_i: usize,
    pub vf_given_dp: usize,
    pub rmax_given_dp_vf: usize,
    pub theta_given_dp_vf_rmax: usize,
    pub total: usize,
}

/// Everything worth reporting about a build besides the tables
/// themselves.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BuildTelemetry {
    /// Seed the stage seeds were derived from.
    pub seed: u64,
    pub sampling: Vec<ClassSampling>,
    pub zero_mass_rows: ZeroMassSummary,
    pub clamps: Vec<HazardClamps>,
}

/// The discrete tables a study produces, ready for network assembly.
#[derive(Debug, Clone)]
pub struct StudyArtifacts {
    pub label: String,
    pub cpts: CptSet,
    pub channels: Vec<HazardChannel>,
    pub telemetry: BuildTelemetry,
}

impl StudyArtifacts {
    /// Assembles the hazard network these artifacts describe.
    pub fn assemble(&self) -> Result<AssembledNetwork, HazardError> {
        assemble(&self.cpts, self.channels.clone())
    }
}

/// A finished build: the reproducible tables plus this run's wall
/// times. Timings stay outside [`StudyArtifacts`] so the artifact store
/// is byte-identical across reruns.
#[derive(Debug, Clone)]
pub struct StudyBuild {
    pub artifacts: StudyArtifacts,
    pub timings: Vec<StageTiming>,
}

/// Runs the full table-construction pipeline. `base_dir` anchors
/// relative paths in the config; `seed_override` replaces the configured
/// seed when given.
pub fn build_study(
    config: &StudyConfig,
    base_dir: &Path,
    seed_override: Option<u64>,
) -> Result<StudyBuild, StudyError> {
    config.validate(base_dir)?;
    let seed = seed_override.unwrap_or(config.mcs.seed);
    let mut stages = Vec::new();
    let mut timed = |stage: &str, start: Instant| {
        stages.push(StageTiming {
            stage: stage.to_string(),
            seconds: start.elapsed().as_secs_f64(),
        });
    };

    let start = Instant::now();
    let clim = config.climatology.build()?;
    let (geometry, _x0_prior) = build_landfall(&config.landfall)?;
    let bins = config.bins.build(geometry.n_points())?;
    timed("climatology", start);

    // Joint parameter tables, one rejection-sampled slice per class.
    // Class streams are disjoint under one seed.
    let start = Instant::now();
    let joint_seed = stage_seed(seed, "joint");
    let mut slices = Vec::with_capacity(3);
    let mut sampling = Vec::with_capacity(3);
    for label in ClassLabel::ALL {
        let slice = discretize_joint(&clim, &bins, label, config.mcs.n_joint, joint_seed)?;
        sampling.push(ClassSampling {
            class: format!("{label:?}"),
            requested: slice.requested,
            accepted: slice.accepted,
            rejection_fraction: slice.rejection_fraction(),
        });
        slices.push(slice);
    }
    let slices: [ClassJointSlice; 3] = slices.try_into().expect("three classes");
    let table = DiscreteJointTable::new(
        bins.clone(),
        *clim.classes(),
        clim.intensity_prior(),
        slices,
    )?;
    timed("discretize", start);

    let start = Instant::now();
    let (cpts, zero_report) = conditionalize(&table)?;
    let zero_mass_rows = ZeroMassSummary {
        dp_given_i: zero_report.dp_given_i.len(),
        vf_given_dp: zero_report.vf_given_dp.len(),
        rmax_given_dp_vf: zero_report.rmax_given_dp_vf.len(),
        theta_given_dp_vf_rmax: zero_report.theta_given_dp_vf_rmax.len(),
        total: zero_report.total(),
    };
    timed("conditionalize", start);

    // Response tables per channel. Each hazard gets its own stage seeds
    // so draws are not shared across channels.
    let mut channels = Vec::with_capacity(config.hazards.len());
    let mut clamps = Vec::with_capacity(config.hazards.len());
    for (h, entry) in config.hazards.iter().enumerate() {
        let start = Instant::now();
        let model: Box<dyn ResponseModel> = match &entry.surrogate {
            SurrogateChoice::SyntheticSurge => {
                Box::new(SyntheticSurge::new(geometry.clone(), config.site))
            }
            SurrogateChoice::SyntheticRain => {
                Box::new(SyntheticRain::new(geometry.clone(), config.site))
            }
            SurrogateChoice::Tabulated { path } => {
                let resolved = base_dir.join(path);
                let file = fs::File::open(&resolved).map_err(|source| StudyError::Io {
                    path: resolved.clone(),
                    source,
                })?;
                let model = tabulated_model(file, &entry.label, &entry.unit).map_err(
                    |source| StudyError::Tabulated {
                        path: resolved,
                        source,
                    },
                )?;
                Box::new(model)
            }
        };
        let err = entry.error_model()?;
        let rbins = entry.response_bins(&err)?;
        let rhat_cfg = McsConfig {
            n_sim: config.mcs.n_sim,
            seed: stage_seed(seed, &format!("rhat/{}", entry.label)),
            ..McsConfig::default()
        };
        let (rhat_cpt, rhat_clamp) = build_rhat_cpt(model.as_ref(), &bins, &rbins, &rhat_cfg, h)?;
        let r_cfg = McsConfig {
            n_sim: config.mcs.n_sim,
            seed: stage_seed(seed, &format!("r/{}", entry.label)),
            ..McsConfig::default()
        };
        let (r_cpt, r_clamp) = build_r_cpt(&err, &rbins, &r_cfg, h)?;
        clamps.push(HazardClamps {
            label: entry.label.clone(),
            rhat: rhat_clamp.into(),
            r: r_clamp.into(),
        });
        channels.push(HazardChannel {
            label: entry.label.clone(),
            unit: entry.unit.clone(),
            rhat_cpt,
            r_cpt,
            eps_prior: err.prior(),
            rbins,
            threshold: entry.threshold,
        });
        timed(&format!("response/{}", entry.label), start);
    }

    Ok(StudyBuild {
        artifacts: StudyArtifacts {
            label: config.label.clone(),
            cpts,
            channels,
            telemetry: BuildTelemetry {
                seed,
                sampling,
                zero_mass_rows,
                clamps,
            },
        },
        timings: stages,
    })
}

/// On-disk form of one hazard channel.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChannelDoc {
    label: String,
    unit: String,
    rhat_cpt: FactorDoc,
    r_cpt: FactorDoc,
    eps_prior: Vec<f64>,
    rbins: ResponseBinScheme,
    threshold: Option<f64>,
}

/// On-disk form of [`StudyArtifacts`]: every table as a validated
/// factor document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ArtifactsDoc {
    label: String,
    intensity: FactorDoc,
    dp_given_i: FactorDoc,
    vf_given_dp: FactorDoc,
    rmax_given_dp_vf: FactorDoc,
    theta_given_dp_vf_rmax: FactorDoc,
    x0: FactorDoc,
    channels: Vec<ChannelDoc>,
    telemetry: BuildTelemetry,
}

impl StudyArtifacts {
    /// Serializes the artifacts to pretty JSON at `path`, atomically
    /// (write to a sibling temp file, then rename).
    pub fn save(&self, path: &Path) -> Result<(), StudyError> {
        let doc = ArtifactsDoc {
            label: self.label.clone(),
            intensity: FactorDoc::from_factor(&self.cpts.intensity),
            dp_given_i: FactorDoc::from_factor(&self.cpts.dp_given_i),
            vf_given_dp: FactorDoc::from_factor(&self.cpts.vf_given_dp),
            rmax_given_dp_vf: FactorDoc::from_factor(&self.cpts.rmax_given_dp_vf),
            theta_given_dp_vf_rmax: FactorDoc::from_factor(&self.cpts.theta_given_dp_vf_rmax),
            x0: FactorDoc::from_factor(&self.cpts.x0),
            channels: self
                .channels
                .iter()
                .map(|c| ChannelDoc {
                    label: c.label.clone(),
                    unit: c.unit.clone(),
                    rhat_cpt: FactorDoc::from_factor(&c.rhat_cpt),
                    r_cpt: FactorDoc::from_factor(&c.r_cpt),
                    eps_prior: c.eps_prior.clone(),
                    rbins: c.rbins.clone(),
                    threshold: c.threshold,
                })
                .collect(),
            telemetry: self.telemetry.clone(),
        };
        let io_err = |source: std::io::Error| StudyError::Io {
            path: path.to_path_buf(),
            source,
        };
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                fs::create_dir_all(parent).map_err(io_err)?;
            }
        }
        let mut text = serde_json::to_string_pretty(&doc).map_err(|source| StudyError::Json {
            path: path.to_path_buf(),
            source,
        })?;
        text.push('\n');
        let tmp = path.with_extension("json.tmp");
        fs::write(&tmp, text).map_err(io_err)?;
        fs::rename(&tmp, path).map_err(io_err)?;
        Ok(())
    }

    /// Loads and revalidates artifacts saved by [`StudyArtifacts::save`].
    pub fn load(path: &Path) -> Result<Self, StudyError> {
        let text = fs::read_to_string(path).map_err(|source| StudyError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let doc: ArtifactsDoc =
            serde_json::from_str(&text).map_err(|source| StudyError::Json {
                path: path.to_path_buf(),
                source,
            })?;
        let table = |name: &str, doc: &FactorDoc| {
            doc.to_factor().map_err(|source| StudyError::BadTable {
                table: name.to_string(),
                source,
            })
        };
        let cpts = CptSet {
            intensity: table("intensity", &doc.intensity)?,
            dp_given_i: table("dp_given_i", &doc.dp_given_i)?,
            vf_given_dp: table("vf_given_dp", &doc.vf_given_dp)?,
            rmax_given_dp_vf: table("rmax_given_dp_vf", &doc.rmax_given_dp_vf)?,
            theta_given_dp_vf_rmax: table(
                "theta_given_dp_vf_rmax",
                &doc.theta_given_dp_vf_rmax,
            )?,
            x0: table("x0", &doc.x0)?,
        };
        let mut channels = Vec::with_capacity(doc.channels.len());
        for c in &doc.channels {
            channels.push(HazardChannel {
                label: c.label.clone(),
                unit: c.unit.clone(),
                rhat_cpt: table(&format!("{}::rhat_cpt", c.label), &c.rhat_cpt)?,
                r_cpt: table(&format!("{}::r_cpt", c.label), &c.r_cpt)?,
                eps_prior: c.eps_prior.clone(),
                rbins: c.rbins.clone(),
                threshold: c.threshold,
            });
        }
        Ok(Self {
            label: doc.label,
            cpts,
            channels,
            telemetry: doc.telemetry,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::tests::reduced_config;
    use crate::hazard::{hazard_curve, RateConfig};

    fn built() -> StudyArtifacts {
        build_study(&reduced_config(), Path::new("."), None)
            .unwrap()
            .artifacts
    }

    #[test]
    fn stage_seeds_differ_by_tag_and_base() {
        let a = stage_seed(7, "rhat/surge");
        let b = stage_seed(7, "rhat/rain");
        let c = stage_seed(7, "r/surge");
        let d = stage_seed(8, "rhat/surge");
        assert!(a != b && a != c && b != c && a != d);
        // Stable across calls.
        assert_eq!(a, stage_seed(7, "rhat/surge"));
    }

    #[test]
    fn pipeline_builds_an_assemblable_network() {
        let build = build_study(&reduced_config(), Path::new("."), None).unwrap();
        assert!(!build.timings.is_empty());
        let artifacts = build.artifacts;
        assert_eq!(artifacts.channels.len(), 2);
        assert_eq!(artifacts.channels[0].label, "surge");
        assert_eq!(artifacts.telemetry.sampling.len(), 3);
        for s in &artifacts.telemetry.sampling {
            assert!(s.accepted > 0 && s.accepted <= s.requested, "{s:?}");
            assert!((0.0..1.0).contains(&s.rejection_fraction));
        }

        let assembled = artifacts.assemble().unwrap();
        let rate = RateConfig {
            lambda: 1.0e-3,
            s_trk: 18.5,
        };
        for h in 0..2 {
            let curve = hazard_curve(&assembled, h, &rate).unwrap();
            assert!((curve.exceedance[0] - 1.0).abs() < 1e-12);
            assert_eq!(*curve.exceedance.last().unwrap(), 0.0);
        }
    }

    #[test]
    fn same_seed_rebuild_is_identical_and_different_seed_is_not() {
        let a = built();
        let b = built();
        assert_eq!(a.cpts.dp_given_i.values(), b.cpts.dp_given_i.values());
        assert_eq!(
            a.channels[0].rhat_cpt.values(),
            b.channels[0].rhat_cpt.values()
        );
        assert_eq!(a.channels[1].r_cpt.values(), b.channels[1].r_cpt.values());

        let c = build_study(&reduced_config(), Path::new("."), Some(99))
            .unwrap()
            .artifacts;
        assert_eq!(c.telemetry.seed, 99);
        assert_ne!(
            a.channels[0].rhat_cpt.values(),
            c.channels[0].rhat_cpt.values()
        );
    }

    #[test]
    fn channels_use_distinct_draw_streams() {
        // Identical surrogates and grids on both channels must still get
        // independent Monte-Carlo draws, otherwise their error tables
        // would be clones.
        let mut config = reduced_config();
        config.hazards[1] = config.hazards[0].clone();
        config.hazards[1].label = "surge2".to_string();
        let artifacts = build_study(&config, Path::new("."), None)
            .unwrap()
            .artifacts;
        assert_ne!(
            artifacts.channels[0].rhat_cpt.values(),
            artifacts.channels[1].rhat_cpt.values()
        );
        assert_ne!(
            artifacts.channels[0].r_cpt.values(),
            artifacts.channels[1].r_cpt.values()
        );
    }

    #[test]
    fn artifacts_round_trip_through_disk() {
        let artifacts = built();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("artifacts.json");
        artifacts.save(&path).unwrap();
        let back = StudyArtifacts::load(&path).unwrap();

        assert_eq!(back.label, artifacts.label);
        assert_eq!(back.telemetry, artifacts.telemetry);
        assert_eq!(back.cpts.intensity.values(), artifacts.cpts.intensity.values());
        assert_eq!(
            back.cpts.theta_given_dp_vf_rmax.values(),
            artifacts.cpts.theta_given_dp_vf_rmax.values()
        );
        for (a, b) in artifacts.channels.iter().zip(&back.channels) {
            assert_eq!(a.label, b.label);
            assert_eq!(a.rhat_cpt.values(), b.rhat_cpt.values());
            assert_eq!(a.r_cpt.values(), b.r_cpt.values());
            assert_eq!(a.eps_prior, b.eps_prior);
            assert_eq!(a.rbins, b.rbins);
        }

        // The reloaded tables assemble and reproduce the same curve.
        let rate = RateConfig {
            lambda: 1.0e-3,
            s_trk: 18.5,
        };
        let c1 = hazard_curve(&artifacts.assemble().unwrap(), 0, &rate).unwrap();
        let c2 = hazard_curve(&back.assemble().unwrap(), 0, &rate).unwrap();
        assert_eq!(c1.exceedance, c2.exceedance);
    }

    #[test]
    fn corrupt_artifact_tables_are_rejected_on_load() {
        let artifacts = built();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("artifacts.json");
        artifacts.save(&path).unwrap();

        let mut doc: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(&path).unwrap()).unwrap();
        // Break a value count so factor validation must trip.
        doc["intensity"]["values"]
            .as_array_mut()
            .unwrap()
            .pop();
        fs::write(&path, serde_json::to_string(&doc).unwrap()).unwrap();
        match StudyArtifacts::load(&path) {
            Err(StudyError::BadTable { table, .. }) => assert_eq!(table, "intensity"),
            other => panic!("expected BadTable, got {other:?}"),
        }
    }
}
