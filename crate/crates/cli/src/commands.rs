//! The five pipeline commands: build, hazard, deagg, validate, and
//! oracle-check.

use std::path::{Component, Path, PathBuf};

use hazbn::config::StudyConfig;
use hazbn::deagg::{deaggregate, select_threshold, DeaggError};
use hazbn::discretize::landfall::{build_landfall, LandfallGeometry};
use hazbn::discretize::BinScheme;
use hazbn::hazard::{
    direct_jpm_sum, hazard_curve, joint_hazard, AssembledNetwork, HazardCurve,
};
use hazbn::study::{build_study, StudyArtifacts};

use crate::manifest::{
    grid_dims, module_versions, read_json, sha256_file, write_json_atomic, RunManifest,
};
use crate::products::{
    emit_deagg_bundle, emit_hazard_curve, emit_joint_surface, param_priors, CaseStatus,
    ChannelSummary, DeaggSummary, HazardSummary, OracleSummary,
};
use crate::validate::validate_outputs;
use crate::CliError;

/// Agreement required between the network and explicit-summation hazard
/// rates.
pub const ORACLE_TOL: f64 = 1e-9;

pub const ARTIFACTS_FILE: &str = "artifacts.json";
pub const MANIFEST_FILE: &str = "manifest.json";

/// Loads the config and resolves the output directory: `--out` wins,
/// otherwise the configured directory, anchored at the config's parent.
pub fn load_config(
    config_path: &Path,
    out_override: Option<&Path>,
) -> Result<(StudyConfig, PathBuf, PathBuf), CliError> {
    let (config, base_dir) = StudyConfig::load(config_path)?;
    let out_dir = match out_override {
        Some(out) => out.to_path_buf(),
        None if config.output_dir.is_absolute() => config.output_dir.clone(),
        None => normalize(&base_dir.join(&config.output_dir)),
    };
    Ok((config, base_dir, out_dir))
}

/// Lexically collapses `.` and `..` components so printed paths stay
/// readable; never touches the filesystem.
fn normalize(path: &Path) -> PathBuf {
    let mut out = PathBuf::new();
    for part in path.components() {
        match part {
            Component::CurDir => {}
            Component::ParentDir if matches!(out.components().next_back(), Some(Component::Normal(_))) => {
                out.pop();
            }
            other => out.push(other),
        }
    }
    if out.as_os_str().is_empty() {
        out.push(".");
    }
    out
}

fn load_artifacts(out_dir: &Path) -> Result<StudyArtifacts, CliError> {
    let path = out_dir.join(ARTIFACTS_FILE);
    if !path.exists() {
        return Err(CliError::MissingArtifacts(path));
    }
    Ok(StudyArtifacts::load(&path)?)
}

/// The study grid and landfall geometry, rebuilt from config (cheap and
/// draw-free) for axis edges in emitted products.
fn study_grid(config: &StudyConfig) -> Result<(BinScheme, LandfallGeometry), CliError> {
    let (geometry, _) = build_landfall(&config.landfall)
        .map_err(|e| CliError::Engine(format!("landfall grid: {e}")))?;
    let bins = config.bins.build(geometry.n_points())?;
    Ok((bins, geometry))
}

/// `build`: run the table pipeline, persist artifacts and the manifest.
pub fn cmd_build(
    config_path: &Path,
    seed: Option<u64>,
    threads: Option<usize>,
    out_override: Option<&Path>,
) -> Result<(), CliError> {
    let (config, base_dir, out_dir) = load_config(config_path, out_override)?;
    let build = build_study(&config, &base_dir, seed)?;
    let artifacts = build.artifacts;
    artifacts.save(&out_dir.join(ARTIFACTS_FILE))?;
    let manifest = RunManifest {
        label: config.label.clone(),
        modules: module_versions(),
        config_sha256: sha256_file(config_path)?,
        seed: artifacts.telemetry.seed,
        threads,
        dims: grid_dims(&artifacts),
        telemetry: artifacts.telemetry.clone(),
        timings: build.timings,
    };
    write_json_atomic(&out_dir.join(MANIFEST_FILE), &manifest)?;

    println!(
        "build: {} parameter combinations, {} channel(s), seed {}",
        manifest.dims.parameter_combinations,
        manifest.dims.channels.len(),
        manifest.seed
    );
    for stage in &manifest.timings {
        println!("  {:<18} {:8.2}s", stage.stage, stage.seconds);
    }
    for s in &artifacts.telemetry.sampling {
        println!(
            "  {:<18} accepted {}/{} (rejection {:.3})",
            format!("sampling/{}", s.class),
            s.accepted,
            s.requested,
            s.rejection_fraction
        );
    }
    println!("wrote {}", out_dir.join(ARTIFACTS_FILE).display());
    println!("wrote {}", out_dir.join(MANIFEST_FILE).display());
    Ok(())
}

/// Explicit-summation annual rates at every curve edge.
fn direct_rates(
    artifacts: &StudyArtifacts,
    h: usize,
    curve: &HazardCurve,
    config: &StudyConfig,
) -> Result<Vec<f64>, CliError> {
    let channel = &artifacts.channels[h];
    curve
        .thresholds
        .iter()
        .map(|&r_star| {
            direct_jpm_sum(
                &artifacts.cpts,
                &channel.rhat_cpt,
                &channel.r_cpt,
                &channel.eps_prior,
                &channel.rbins,
                &config.rate,
                r_star,
            )
            .map_err(|e| CliError::Engine(format!("direct summation: {e}")))
        })
        .collect()
}

/// `hazard`: emit per-channel curves, the joint surface for two-hazard
/// studies, and a summary. With `oracle`, every curve also carries the
/// explicit-summation column and the two paths must agree.
pub fn cmd_hazard(
    config_path: &Path,
    out_override: Option<&Path>,
    oracle: bool,
) -> Result<(), CliError> {
    let (config, _base_dir, out_dir) = load_config(config_path, out_override)?;
    let artifacts = load_artifacts(&out_dir)?;
    let assembled = artifacts.assemble()?;

    let mut channels = Vec::new();
    let mut max_delta: f64 = 0.0;
    for h in 0..assembled.n_hazards() {
        let curve = hazard_curve(&assembled, h, &config.rate)?;
        let direct = if oracle {
            let rates = direct_rates(&artifacts, h, &curve, &config)?;
            for (bn_rate, direct_rate) in curve.annual_rate.iter().zip(&rates) {
                max_delta = max_delta.max((bn_rate - direct_rate).abs());
            }
            Some(rates)
        } else {
            None
        };
        let path = emit_hazard_curve(&out_dir, &curve, direct.as_deref())?;
        println!("wrote {}", path.display());

        let meta = assembled.channel(h)?;
        let threshold_annual_rate = match meta.threshold {
            Some(_) => Some(config.rate.annual_scale() * assembled.exceedance_probability(h)?),
            None => None,
        };
        channels.push(ChannelSummary {
            label: meta.label.clone(),
            unit: meta.unit.clone(),
            n_response_bins: curve.exceedance.len() - 1,
            threshold: meta.threshold,
            threshold_annual_rate,
        });
    }

    let correlation = if assembled.n_hazards() == 2 {
        let joint = joint_hazard(&assembled)?;
        for path in emit_joint_surface(&out_dir, &joint, &config.rate)? {
            println!("wrote {}", path.display());
        }
        Some(joint.correlation)
    } else {
        None
    };

    let oracle_summary = oracle.then(|| OracleSummary {
        max_abs_delta: max_delta,
        tolerance: ORACLE_TOL,
        passed: max_delta <= ORACLE_TOL,
    });
    let summary = HazardSummary {
        label: config.label.clone(),
        rate: config.rate,
        annual_scale: config.rate.annual_scale(),
        channels,
        correlation,
        oracle: oracle_summary,
    };
    let path = out_dir.join("hazard_summary.json");
    write_json_atomic(&path, &summary)?;
    println!("wrote {}", path.display());
    if let Some(rho) = correlation {
        println!("response correlation: {rho:.6}");
    }

    if oracle {
        println!("oracle: max |network - direct| = {max_delta:.3e} (tolerance {ORACLE_TOL:e})");
        if max_delta > ORACLE_TOL {
            return Err(CliError::Validation(format!(
                "network and direct-summation rates disagree: {max_delta:.3e} > {ORACLE_TOL:e}"
            )));
        }
    }
    Ok(())
}

/// Evidence thresholds for the run: each channel's configured threshold
/// if set, otherwise one selected from the no-evidence curve at
/// `target_ep`. Returns the per-channel threshold values alongside any
/// selection records.
fn resolve_thresholds(
    config: &StudyConfig,
    assembled: &AssembledNetwork,
) -> Result<(Vec<Option<f64>>, Vec<Option<hazbn::deagg::SelectedThreshold>>), CliError> {
    let mut thresholds = Vec::new();
    let mut selected = Vec::new();
    for (h, entry) in config.hazards.iter().enumerate() {
        match entry.threshold {
            Some(t) => {
                thresholds.push(Some(t));
                selected.push(None);
            }
            None => {
                let s = select_threshold(assembled, h, config.target_ep)
                    .map_err(|e| CliError::Engine(format!("threshold selection: {e}")))?;
                thresholds.push(Some(s.threshold));
                selected.push(Some(s));
            }
        }
    }
    Ok((thresholds, selected))
}

/// `deagg`: run every evidence case and emit one bundle per case. A case
/// whose evidence has zero probability is reported and skipped without
/// aborting the others; if any case was skipped the command fails with
/// the zero-evidence exit code at the end.
pub fn cmd_deagg(
    config_path: &Path,
    out_override: Option<&Path>,
    case_filter: &[String],
) -> Result<(), CliError> {
    let (config, _base_dir, out_dir) = load_config(config_path, out_override)?;
    let artifacts = load_artifacts(&out_dir)?;
    let assembled = artifacts.assemble()?;
    let (bins, geometry) = study_grid(&config)?;

    let (thresholds, selected) = resolve_thresholds(&config, &assembled)?;
    let t1 = thresholds.first().copied().flatten();
    let t2 = thresholds.get(1).copied().flatten();
    let mut cases = config.evidence_or_default(t1, t2);
    if !case_filter.is_empty() {
        cases.retain(|c| case_filter.iter().any(|l| l == &c.label));
        if cases.is_empty() {
            return Err(CliError::Config(format!(
                "no evidence case matches the requested labels {case_filter:?}"
            )));
        }
    }
    if cases.is_empty() {
        return Err(CliError::Config(
            "no evidence cases: none configured and no thresholds available".to_string(),
        ));
    }

    let priors = param_priors(&assembled)?;
    let mut response_priors = Vec::new();
    for h in 0..assembled.n_hazards() {
        response_priors.push(assembled.response_marginal(h)?.values().to_vec());
    }

    let mut statuses = Vec::new();
    let mut zero_evidence = 0usize;
    for case in &cases {
        match deaggregate(&assembled, case) {
            Ok(result) => {
                let bundle_dir = out_dir.join(format!("deagg_{}", case.label));
                // The conditional channel is the one that carried no
                // evidence, when exactly one of two did.
                let prior_response = result.conditional.as_ref().map(|c| {
                    response_priors[c.hazard].as_slice()
                });
                let written = emit_deagg_bundle(
                    &bundle_dir,
                    &result,
                    &priors,
                    prior_response,
                    &bins,
                    &geometry,
                    config.climatology.class_boundaries,
                )?;
                for path in written {
                    println!("wrote {}", path.display());
                }
                println!(
                    "case {}: P(evidence) = {:.6e}",
                    case.label, result.evidence_probability
                );
                statuses.push(CaseStatus {
                    label: case.label.clone(),
                    status: "ok".to_string(),
                    evidence_probability: Some(result.evidence_probability),
                    bundle_dir: Some(format!("deagg_{}", case.label)),
                });
            }
            Err(DeaggError::ZeroEvidence { label }) => {
                eprintln!("case {label}: evidence has zero probability; no bundle emitted");
                zero_evidence += 1;
                statuses.push(CaseStatus {
                    label: case.label.clone(),
                    status: "zero-evidence".to_string(),
                    evidence_probability: Some(0.0),
                    bundle_dir: None,
                });
            }
            Err(e) => {
                return Err(CliError::Engine(format!(
                    "deaggregation of {}: {e}",
                    case.label
                )))
            }
        }
    }

    let summary = DeaggSummary {
        label: config.label.clone(),
        target_ep: config.target_ep,
        selected_thresholds: selected,
        cases: statuses,
    };
    let path = out_dir.join("deagg_summary.json");
    write_json_atomic(&path, &summary)?;
    println!("wrote {}", path.display());

    if zero_evidence > 0 {
        return Err(CliError::ZeroEvidence(format!(
            "{zero_evidence} of {} case(s) had zero-probability evidence",
            cases.len()
        )));
    }
    Ok(())
}

/// `validate`: re-read every emitted artifact and re-check its
/// invariants.
pub fn cmd_validate(config_path: &Path, out_override: Option<&Path>) -> Result<(), CliError> {
    let (config, _base_dir, out_dir) = load_config(config_path, out_override)?;
    validate_outputs(&config, config_path, &out_dir)
}

/// `oracle-check`: compare the network hazard curve against the explicit
/// summation at every edge of every channel.
pub fn cmd_oracle_check(config_path: &Path, out_override: Option<&Path>) -> Result<(), CliError> {
    let (config, _base_dir, out_dir) = load_config(config_path, out_override)?;
    let artifacts = load_artifacts(&out_dir)?;
    let assembled = artifacts.assemble()?;

    let mut max_delta: f64 = 0.0;
    for h in 0..assembled.n_hazards() {
        let curve = hazard_curve(&assembled, h, &config.rate)?;
        let rates = direct_rates(&artifacts, h, &curve, &config)?;
        let mut channel_delta: f64 = 0.0;
        for (bn_rate, direct_rate) in curve.annual_rate.iter().zip(&rates) {
            channel_delta = channel_delta.max((bn_rate - direct_rate).abs());
        }
        println!(
            "channel {}: max |network - direct| = {channel_delta:.3e} over {} edges",
            curve.label,
            curve.thresholds.len()
        );
        max_delta = max_delta.max(channel_delta);
    }
    println!("oracle-check: max delta {max_delta:.3e} (tolerance {ORACLE_TOL:e})");
    if max_delta > ORACLE_TOL {
        return Err(CliError::Validation(format!(
            "network and direct-summation rates disagree: {max_delta:.3e} > {ORACLE_TOL:e}"
        )));
    }
    Ok(())
}

/// Re-reads a run manifest. Shared with `validate`.
pub fn load_manifest(out_dir: &Path) -> Result<RunManifest, CliError> {
    read_json(&out_dir.join(MANIFEST_FILE))
}
