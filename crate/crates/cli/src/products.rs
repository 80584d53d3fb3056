//! Plot-ready data products: hazard-curve, joint-surface, and
//! deaggregation CSVs with JSON summaries.
//!
//! Every probability table is checked for normalization before it is
//! written, so a malformed product can never reach disk quietly. CSV
//! fields use shortest-round-trip float formatting, making reruns
//! byte-comparable.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use hazbn::bn::{Evidence, VarId};
use hazbn::deagg::{
    pmf_mean, stacked_contributions, ConditionalHazard, DeaggregationResult, GroupSpec,
    SelectedThreshold, ThirdParam,
};
use hazbn::discretize::landfall::LandfallGeometry;
use hazbn::discretize::BinScheme;
use hazbn::hazard::{
    AssembledNetwork, HazardCurve, JointHazardTable, RateConfig, ThresholdReport,
};
use hazbn::{bn, nodes};

use crate::manifest::{write_atomic, write_json_atomic};
use crate::CliError;

/// Mass tolerance every emitted PMF must meet.
pub const PMF_TOL: f64 = 1e-9;

fn check_mass(what: &str, pmf: &[f64]) -> Result<(), CliError> {
    let total: f64 = pmf.iter().sum();
    if (total - 1.0).abs() > PMF_TOL {
        return Err(CliError::Validation(format!(
            "{what}: probability mass {total} is not 1 within {PMF_TOL:e}"
        )));
    }
    Ok(())
}

/// Serializes CSV records (with a header row) and writes them atomically.
fn write_csv<R: Serialize>(path: &Path, rows: &[R]) -> Result<(), CliError> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    for row in rows {
        wtr.serialize(row).map_err(|source| CliError::Csv {
            path: path.to_path_buf(),
            source,
        })?;
    }
    let bytes = wtr.into_inner().map_err(|source| CliError::Validation(format!(
        "{}: flushing CSV failed: {source}",
        path.display()
    )))?;
    write_atomic(path, &bytes)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct CurveRow {
    pub threshold: f64,
    pub exceedance_probability: f64,
    pub annual_rate: f64,
    /// Explicit-summation cross-check, present under `--oracle`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub direct_annual_rate: Option<f64>,
}

/// Writes one channel's hazard curve. `direct` carries the
/// explicit-summation rates when the oracle column was requested.
pub fn emit_hazard_curve(
    dir: &Path,
    curve: &HazardCurve,
    direct: Option<&[f64]>,
) -> Result<PathBuf, CliError> {
    let rows: Vec<CurveRow> = curve
        .thresholds
        .iter()
        .enumerate()
        .map(|(k, &threshold)| CurveRow {
            threshold,
            exceedance_probability: curve.exceedance[k],
            annual_rate: curve.annual_rate[k],
            direct_annual_rate: direct.map(|d| d[k]),
        })
        .collect();
    let path = dir.join(format!("hazard_curve_{}.csv", curve.label));
    write_csv(&path, &rows)?;
    Ok(path)
}

#[derive(Debug, Serialize, Deserialize)]
pub struct JointPmfRow {
    pub r1_lo: f64,
    pub r1_hi: f64,
    pub r2_lo: f64,
    pub r2_hi: f64,
    pub pmf: f64,
    pub pdf: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct JointExceedanceRow {
    pub r1: f64,
    pub r2: f64,
    pub exceedance_probability: f64,
    pub annual_rate: f64,
}

/// Writes the joint PMF/PDF cells and the edge-grid exceedance surface.
pub fn emit_joint_surface(
    dir: &Path,
    joint: &JointHazardTable,
    rate: &RateConfig,
) -> Result<[PathBuf; 2], CliError> {
    check_mass("joint response PMF", &joint.pmf)?;
    let (n1, n2) = (joint.n1(), joint.n2());
    let mut pmf_rows = Vec::with_capacity(n1 * n2);
    for a in 0..n1 {
        for b in 0..n2 {
            pmf_rows.push(JointPmfRow {
                r1_lo: joint.r1_edges[a],
                r1_hi: joint.r1_edges[a + 1],
                r2_lo: joint.r2_edges[b],
                r2_hi: joint.r2_edges[b + 1],
                pmf: joint.pmf[a * n2 + b],
                pdf: joint.pdf[a * n2 + b],
            });
        }
    }
    let pmf_path = dir.join("joint_pmf.csv");
    write_csv(&pmf_path, &pmf_rows)?;

    let scale = rate.annual_scale();
    let mut exc_rows = Vec::with_capacity((n1 + 1) * (n2 + 1));
    for a in 0..=n1 {
        for b in 0..=n2 {
            let p = joint.exceedance_at_edges(a, b);
            exc_rows.push(JointExceedanceRow {
                r1: joint.r1_edges[a],
                r2: joint.r2_edges[b],
                exceedance_probability: p,
                annual_rate: scale * p,
            });
        }
    }
    let exc_path = dir.join("joint_exceedance.csv");
    write_csv(&exc_path, &exc_rows)?;
    Ok([pmf_path, exc_path])
}

/// One channel's entry in the hazard summary.
#[derive(Debug, Serialize, Deserialize)]
pub struct ChannelSummary {
    pub label: String,
    pub unit: String,
    pub n_response_bins: usize,
    /// Present when the channel has a configured threshold.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold: Option<ThresholdReport>,
    /// Annual rate of exceeding the configured threshold, when present.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threshold_annual_rate: Option<f64>,
}

/// Oracle-comparison record in the hazard summary.
#[derive(Debug, Serialize, Deserialize)]
pub struct OracleSummary {
    pub max_abs_delta: f64,
    pub tolerance: f64,
    pub passed: bool,
}

/// Top-level summary for the hazard products.
#[derive(Debug, Serialize, Deserialize)]
pub struct HazardSummary {
    pub label: String,
    pub rate: RateConfig,
    pub annual_scale: f64,
    pub channels: Vec<ChannelSummary>,
    /// Pearson correlation of the two response channels, two-hazard
    /// studies only.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub correlation: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub oracle: Option<OracleSummary>,
}

/// No-evidence marginals of the six parameter nodes, used as the prior
/// columns in deaggregation output.
pub struct ParamPriors {
    pub intensity: Vec<f64>,
    pub dp: Vec<f64>,
    pub vf: Vec<f64>,
    pub rmax: Vec<f64>,
    pub theta: Vec<f64>,
    pub x0: Vec<f64>,
}

pub fn param_priors(assembled: &AssembledNetwork) -> Result<ParamPriors, CliError> {
    let marginal = |id: &str| -> Result<Vec<f64>, CliError> {
        let result = bn::query(assembled.network(), &[VarId::from(id)], &Evidence::new())
            .map_err(|e| CliError::Engine(format!("prior marginal of {id}: {e}")))?;
        Ok(result.posterior.values().to_vec())
    };
    Ok(ParamPriors {
        intensity: marginal(nodes::INTENSITY)?,
        dp: marginal(nodes::DP)?,
        vf: marginal(nodes::VF)?,
        rmax: marginal(nodes::RMAX)?,
        theta: marginal(nodes::THETA)?,
        x0: marginal(nodes::X0)?,
    })
}

#[derive(Debug, Serialize, Deserialize)]
pub struct PosteriorRow {
    pub parameter: String,
    pub bin: usize,
    pub label: String,
    pub lo: f64,
    pub hi: f64,
    pub prior: f64,
    pub posterior: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct TrackRow {
    pub x0_index: usize,
    pub x0_lon: f64,
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub probability: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct StackedRow {
    pub x0_index: usize,
    pub x0_lon: f64,
    pub theta_lo: f64,
    pub theta_hi: f64,
    pub group: String,
    pub probability: f64,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct ConditionalRow {
    pub r_lo: f64,
    pub r_hi: f64,
    pub prior: f64,
    pub posterior: f64,
}

/// Mean summary of one conditional hazard.
#[derive(Debug, Serialize, Deserialize)]
pub struct ConditionalSummary {
    pub label: String,
    pub unit: String,
    pub prior_mean: f64,
    pub posterior_mean: f64,
}

/// Per-case summary written next to the CSV bundle.
#[derive(Debug, Serialize, Deserialize)]
pub struct CaseSummary {
    pub label: String,
    pub evidence_probability: f64,
    pub thresholds: [Option<ThresholdReport>; 2],
    /// Bin-midpoint means of the parameter marginals before evidence.
    pub prior_means: ParamMeans,
    /// Bin-midpoint means after evidence.
    pub posterior_means: ParamMeans,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub conditional: Option<ConditionalSummary>,
}

/// Midpoint means of the four continuous parameter axes.
#[derive(Debug, Serialize, Deserialize)]
pub struct ParamMeans {
    pub dp: f64,
    pub vf: f64,
    pub rmax: f64,
    pub theta: f64,
}

fn means(bins: &BinScheme, dp: &[f64], vf: &[f64], rmax: &[f64], theta: &[f64]) -> ParamMeans {
    ParamMeans {
        dp: pmf_mean(bins.dp().edges(), dp),
        vf: pmf_mean(bins.vf().edges(), vf),
        rmax: pmf_mean(bins.rmax().edges(), rmax),
        theta: pmf_mean(bins.theta().edges(), theta),
    }
}

/// Intensity-class display names, lowest to highest.
pub const CLASS_NAMES: [&str; 3] = ["LI", "MI", "HI"];

/// Appends one axis's prior/posterior rows in long form.
fn push_axis(
    rows: &mut Vec<PosteriorRow>,
    parameter: &str,
    labels: Option<&[&str]>,
    bounds: &dyn Fn(usize) -> (f64, f64),
    prior: &[f64],
    posterior: &[f64],
) {
    for (b, (&pr, &po)) in prior.iter().zip(posterior).enumerate() {
        let (lo, hi) = bounds(b);
        rows.push(PosteriorRow {
            parameter: parameter.to_string(),
            bin: b,
            label: labels.map_or_else(|| b.to_string(), |l| l[b].to_string()),
            lo,
            hi,
            prior: pr,
            posterior: po,
        });
    }
}

/// Writes one deaggregation case's bundle into `dir`:
/// `posteriors.csv`, `track_joint.csv`, three stacked tables,
/// the conditional-hazard table when present, and `summary.json`.
/// Returns the written paths.
#[allow(clippy::too_many_arguments)]
pub fn emit_deagg_bundle(
    dir: &Path,
    result: &DeaggregationResult,
    priors: &ParamPriors,
    prior_response: Option<&[f64]>,
    bins: &BinScheme,
    geometry: &LandfallGeometry,
    class_boundaries: [f64; 4],
) -> Result<Vec<PathBuf>, CliError> {
    let case_label = &result.case.label;
    let mut written = Vec::new();

    // Parameter posteriors beside their priors, long form.
    let mut rows: Vec<PosteriorRow> = Vec::new();
    let b = class_boundaries;
    push_axis(
        &mut rows,
        "intensity",
        Some(&CLASS_NAMES),
        &|k| (b[k], b[k + 1]),
        &priors.intensity,
        &result.intensity,
    );
    let dp_edges = bins.dp().edges().to_vec();
    push_axis(
        &mut rows,
        "dp",
        None,
        &|k| (dp_edges[k], dp_edges[k + 1]),
        &priors.dp,
        &result.dp,
    );
    let vf_edges = bins.vf().edges().to_vec();
    push_axis(
        &mut rows,
        "vf",
        None,
        &|k| (vf_edges[k], vf_edges[k + 1]),
        &priors.vf,
        &result.vf,
    );
    let rmax_edges = bins.rmax().edges().to_vec();
    push_axis(
        &mut rows,
        "rmax",
        None,
        &|k| (rmax_edges[k], rmax_edges[k + 1]),
        &priors.rmax,
        &result.rmax,
    );
    let theta_edges = bins.theta().edges().to_vec();
    push_axis(
        &mut rows,
        "theta",
        None,
        &|k| (theta_edges[k], theta_edges[k + 1]),
        &priors.theta,
        &result.theta,
    );
    let half = geometry.spacing_deg() / 2.0;
    push_axis(
        &mut rows,
        "x0",
        None,
        &|k| {
            let c = geometry.lon_center(k);
            (c - half, c + half)
        },
        &priors.x0,
        &result.x0,
    );
    for (parameter, pmf) in [
        ("intensity", &result.intensity),
        ("dp", &result.dp),
        ("vf", &result.vf),
        ("rmax", &result.rmax),
        ("theta", &result.theta),
        ("x0", &result.x0),
    ] {
        check_mass(&format!("{case_label}: {parameter} posterior"), pmf)?;
    }
    let path = dir.join("posteriors.csv");
    write_csv(&path, &rows)?;
    written.push(path);

    // Track heat map p(x0, theta | e).
    check_mass(&format!("{case_label}: track joint"), &result.track_joint)?;
    let (nx, nt) = (result.dims.nx, result.dims.nt);
    let mut track_rows = Vec::with_capacity(nx * nt);
    for x in 0..nx {
        for t in 0..nt {
            track_rows.push(TrackRow {
                x0_index: x,
                x0_lon: geometry.lon_center(x),
                theta_lo: theta_edges[t],
                theta_hi: theta_edges[t + 1],
                probability: result.track_joint[x * nt + t],
            });
        }
    }
    let path = dir.join("track_joint.csv");
    write_csv(&path, &track_rows)?;
    written.push(path);

    // Stacked contributions: the track grid decomposed by a third
    // parameter, one group per grid bin of that parameter.
    for (third, edges) in [
        (ThirdParam::Dp, &dp_edges),
        (ThirdParam::Vf, &vf_edges),
        (ThirdParam::Rmax, &rmax_edges),
    ] {
        let groups = GroupSpec::from_cuts(edges, &edges[1..edges.len() - 1]);
        let stacked = stacked_contributions(result, third, &groups)
            .map_err(|e| CliError::Engine(format!("{case_label}: stacked table: {e}")))?;
        check_mass(
            &format!("{case_label}: stacked {:?}", third),
            &stacked.values,
        )?;
        let n_groups = stacked.group_labels.len();
        let mut stack_rows = Vec::with_capacity(nx * nt * n_groups);
        for x in 0..nx {
            for t in 0..nt {
                for g in 0..n_groups {
                    stack_rows.push(StackedRow {
                        x0_index: x,
                        x0_lon: geometry.lon_center(x),
                        theta_lo: theta_edges[t],
                        theta_hi: theta_edges[t + 1],
                        group: stacked.group_labels[g].clone(),
                        probability: stacked.values[(x * nt + t) * n_groups + g],
                    });
                }
            }
        }
        let name = match third {
            ThirdParam::Dp => "stacked_dp.csv",
            ThirdParam::Vf => "stacked_vf.csv",
            ThirdParam::Rmax => "stacked_rmax.csv",
        };
        let path = dir.join(name);
        write_csv(&path, &stack_rows)?;
        written.push(path);
    }

    // Conditional hazard of the non-evidenced channel.
    let mut conditional_summary = None;
    if let Some(cond) = &result.conditional {
        let prior = prior_response.ok_or_else(|| {
            CliError::Engine(format!(
                "{case_label}: conditional hazard present but no prior response marginal"
            ))
        })?;
        check_mass(&format!("{case_label}: conditional hazard"), &cond.pmf)?;
        let cond_rows: Vec<ConditionalRow> = cond
            .pmf
            .iter()
            .enumerate()
            .map(|(k, &po)| ConditionalRow {
                r_lo: cond.edges[k],
                r_hi: cond.edges[k + 1],
                prior: prior[k],
                posterior: po,
            })
            .collect();
        let path = dir.join(format!("conditional_{}.csv", cond.label));
        write_csv(&path, &cond_rows)?;
        written.push(path);
        conditional_summary = Some(conditional_summary_of(cond, prior));
    }

    let summary = CaseSummary {
        label: case_label.clone(),
        evidence_probability: result.evidence_probability,
        thresholds: result.thresholds,
        prior_means: means(bins, &priors.dp, &priors.vf, &priors.rmax, &priors.theta),
        posterior_means: means(bins, &result.dp, &result.vf, &result.rmax, &result.theta),
        conditional: conditional_summary,
    };
    let path = dir.join("summary.json");
    write_json_atomic(&path, &summary)?;
    written.push(path);
    Ok(written)
}

fn conditional_summary_of(cond: &ConditionalHazard, prior: &[f64]) -> ConditionalSummary {
    ConditionalSummary {
        label: cond.label.clone(),
        unit: cond.unit.clone(),
        prior_mean: pmf_mean(&cond.edges, prior),
        posterior_mean: cond.mean(),
    }
}

/// Status of one case in the top-level deaggregation summary.
#[derive(Debug, Serialize, Deserialize)]
pub struct CaseStatus {
    pub label: String,
    /// `"ok"` or `"zero-evidence"`.
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub evidence_probability: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bundle_dir: Option<String>,
}

/// Top-level summary for a deaggregation run.
#[derive(Debug, Serialize, Deserialize)]
pub struct DeaggSummary {
    pub label: String,
    pub target_ep: f64,
    /// Thresholds chosen from the no-evidence curves for channels
    /// without an explicit configured threshold.
    pub selected_thresholds: Vec<Option<SelectedThreshold>>,
    pub cases: Vec<CaseStatus>,
}
