//! Backward-inference deaggregation.
//!
//! Given evidence that one or both hazards exceeded a threshold, the
//! posterior over storm-parameter combinations is
//! `p(x | e) ∝ p(x) · Π_active P(E_h | x)`, evaluated by the same
//! specialized enumeration the forward products use: each combination's
//! likelihood is its predicted-response row dotted with the
//! error-integrated tail mass. Every reported view — single-parameter
//! posteriors, the track joint, stacked contribution tables, and the
//! conditional distribution of the non-evidenced hazard — is a
//! marginalization of that one posterior table.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bn::VarId;
use crate::hazard::{
    blend, response_kernel, snap_threshold, tail_by_rhat, AssembledNetwork, HazardError,
    ThresholdReport,
};
use crate::nodes;

/// Errors from threshold selection and deaggregation.
#[derive(Debug, thiserror::Error)]
pub enum DeaggError {
    #[error("evidence case {0:?} activates no thresholds")]
    NoActiveEvidence(String),
    #[error("evidence case {label:?} has probability zero: thresholds lie beyond all support")]
    ZeroEvidence { label: String },
    #[error("case {label:?} puts evidence on channel {hazard}, but the network has {n_channels}")]
    NoSuchChannel {
        label: String,
        hazard: usize,
        n_channels: usize,
    },
    #[error("target exceedance probability must lie in (0, 1), got {0}")]
    BadTarget(f64),
    #[error("no bin edge reaches exceedance ≤ {target}: all mass sits below grid resolution")]
    TargetUnreachable { target: f64 },
    #[error("partition of {axis} leaves bin {bin} uncovered")]
    BinUncovered { axis: &'static str, bin: usize },
    #[error("partition of {axis} assigns bin {bin} twice")]
    BinRepeated { axis: &'static str, bin: usize },
    #[error(transparent)]
    Hazard(#[from] HazardError),
}

/// Evidence thresholds for a deaggregation run, indexed by hazard
/// channel. At least one must be active.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceCase {
    pub label: String,
    /// Threshold on the first channel's actual response, if evidenced.
    #[serde(default)]
    pub r1: Option<f64>,
    /// Threshold on the second channel's actual response, if evidenced.
    #[serde(default)]
    pub r2: Option<f64>,
}

impl EvidenceCase {
    /// Evidence on the first channel only.
    pub fn ec1(r1: f64) -> Self {
        Self {
            label: "EC1".to_string(),
            r1: Some(r1),
            r2: None,
        }
    }

    /// Evidence on the second channel only.
    pub fn ec2(r2: f64) -> Self {
        Self {
            label: "EC2".to_string(),
            r1: None,
            r2: Some(r2),
        }
    }

    /// Evidence on both channels at once.
    pub fn ec3(r1: f64, r2: f64) -> Self {
        Self {
            label: "EC3".to_string(),
            r1: Some(r1),
            r2: Some(r2),
        }
    }

    pub fn custom(
        label: impl Into<String>,
        r1: Option<f64>,
        r2: Option<f64>,
    ) -> Result<Self, DeaggError> {
        let case = Self {
            label: label.into(),
            r1,
            r2,
        };
        case.validate()?;
        Ok(case)
    }

    pub fn validate(&self) -> Result<(), DeaggError> {
        if self.r1.is_none() && self.r2.is_none() {
            return Err(DeaggError::NoActiveEvidence(self.label.clone()));
        }
        Ok(())
    }

    /// Thresholds by channel index.
    pub fn thresholds(&self) -> [Option<f64>; 2] {
        [self.r1, self.r2]
    }
}

/// Bin counts of the storm-parameter axes, in enumeration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct ParamDims {
    pub nd: usize,
    pub nv: usize,
    pub nr: usize,
    pub nt: usize,
    pub nx: usize,
}

impl ParamDims {
    pub fn n_combos(&self) -> usize {
        self.nd * self.nv * self.nr * self.nt * self.nx
    }
}

/// Conditional distribution of the hazard that carried no evidence.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConditionalHazard {
    /// Channel index of the target hazard.
    pub hazard: usize,
    pub label: String,
    pub unit: String,
    /// Actual-response bin edges, length `pmf.len() + 1`.
    pub edges: Vec<f64>,
    pub pmf: Vec<f64>,
}

impl ConditionalHazard {
    /// Mean response at bin midpoints.
    pub fn mean(&self) -> f64 {
        pmf_mean(&self.edges, &self.pmf)
    }
}

/// Mean of a binned PMF at bin midpoints; `edges` has one more entry
/// than `pmf`.
pub fn pmf_mean(edges: &[f64], pmf: &[f64]) -> f64 {
    pmf.iter()
        .enumerate()
        .map(|(k, p)| p * 0.5 * (edges[k] + edges[k + 1]))
        .sum()
}

/// Full output of one deaggregation run. All PMFs are normalized; the
/// combination posterior is retained so partial-integration views can be
/// derived afterwards.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DeaggregationResult {
    pub case: EvidenceCase,
    /// Per-channel snapped thresholds, where evidence was active.
    pub thresholds: [Option<ThresholdReport>; 2],
    /// `P(evidence)` under the no-evidence joint.
    pub evidence_probability: f64,
    pub dims: ParamDims,
    /// Posterior over intensity classes.
    pub intensity: Vec<f64>,
    pub dp: Vec<f64>,
    pub vf: Vec<f64>,
    pub rmax: Vec<f64>,
    pub theta: Vec<f64>,
    pub x0: Vec<f64>,
    /// `p(x₀, θ | e)`, row-major `nx × nt`.
    pub track_joint: Vec<f64>,
    /// `p(x₀, θ, δp-bin | e)`, row-major `nx × nt × nd`.
    pub track_by_dp: Vec<f64>,
    /// `p(x₀, θ, v_f-bin | e)`, row-major `nx × nt × nv`.
    pub track_by_vf: Vec<f64>,
    /// `p(x₀, θ, r_max-bin | e)`, row-major `nx × nt × nr`.
    pub track_by_rmax: Vec<f64>,
    /// Distribution of the non-evidenced hazard, when exactly one of two
    /// channels carried evidence.
    pub conditional: Option<ConditionalHazard>,
    /// Posterior over every parameter combination, `(((d·nv+v)·nr+r)·nt+t)·nx+x`.
    pub posterior: Vec<f64>,
}

/// A threshold chosen from the no-evidence hazard curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SelectedThreshold {
    /// The chosen bin edge, in response units.
    pub threshold: f64,
    /// Edge index on the actual-response axis.
    pub edge: usize,
    /// Exceedance probability achieved at that edge.
    pub achieved: f64,
}

/// Picks the smallest actual-response bin edge whose no-evidence
/// exceedance probability is at or below `target_ep`.
pub fn select_threshold(
    assembled: &AssembledNetwork,
    hazard: usize,
    target_ep: f64,
) -> Result<SelectedThreshold, DeaggError> {
    if !(target_ep > 0.0 && target_ep <= 1.0) {
        return Err(DeaggError::BadTarget(target_ep));
    }
    let meta = assembled.channel(hazard)?;
    let marginal = assembled.response_marginal(hazard)?;
    let pmf = marginal.values();
    let n = pmf.len();
    let mut exceedance = vec![0.0; n + 1];
    for k in (0..n).rev() {
        exceedance[k] = exceedance[k + 1] + pmf[k];
    }
    for (k, ep) in exceedance.iter().enumerate() {
        if *ep <= target_ep {
            if *ep == 0.0 {
                return Err(DeaggError::TargetUnreachable { target: target_ep });
            }
            return Ok(SelectedThreshold {
                threshold: meta.rbins.r().edge(k),
                edge: k,
                achieved: *ep,
            });
        }
    }
    // Exceedance always reaches 0 at the top edge, so the scan cannot
    // fall through with a positive target.
    unreachable!("exceedance ends at zero");
}

/// Deaggregates one evidence case against the assembled network.
///
/// Runs the specialized enumeration: for every parameter combination the
/// evidence likelihood is the product over active channels of the
/// combination's exceedance probability. The posterior and all its views
/// are accumulated in parallel over pressure-deficit bins and reduced in
/// index order, so results are bit-identical across thread counts.
pub fn deaggregate(
    assembled: &AssembledNetwork,
    case: &EvidenceCase,
) -> Result<DeaggregationResult, DeaggError> {
    case.validate()?;
    let n_channels = assembled.n_hazards();
    let net = assembled.network();
    let requested = case.thresholds();
    for (h, t) in requested.iter().enumerate() {
        if t.is_some() && h >= n_channels {
            return Err(DeaggError::NoSuchChannel {
                label: case.label.clone(),
                hazard: h,
                n_channels,
            });
        }
    }

    let params = crate::hazard::ParamTables::from_network(net)?;
    let dims = ParamDims {
        nd: params.nd,
        nv: params.nv,
        nr: params.nr,
        nt: params.nt,
        nx: params.nx,
    };

    // Per active channel: snapped threshold and per-predicted-bin tail
    // mass; plus the predicted-response tables for all channels.
    let mut reports: [Option<ThresholdReport>; 2] = [None, None];
    let mut tails: Vec<Option<Vec<f64>>> = vec![None; n_channels];
    let mut rhat_vals: Vec<&[f64]> = Vec::with_capacity(n_channels);
    let mut n_rhat = vec![0usize; n_channels];
    for h in 0..n_channels {
        let rhat_cpt = net.cpt(&nodes::rhat(h)).expect("validated network");
        rhat_vals.push(rhat_cpt.values());
        n_rhat[h] = rhat_cpt.cards()[5];
        if let Some(r_star) = requested[h] {
            let meta = assembled.channel(h)?;
            let report = snap_threshold(&meta.rbins, r_star);
            let r_cpt = net.cpt(&nodes::response(h)).expect("validated network");
            let eps = net.cpt(&nodes::epsilon(h)).expect("validated network");
            tails[h] = Some(tail_by_rhat(r_cpt, eps.values(), report.edge));
            reports[h] = Some(report);
        }
    }

    // When exactly one of two channels carries evidence, the other's
    // conditional distribution is accumulated in the same pass.
    let cond_target = match (requested[0].is_some(), n_channels) {
        (true, 2) if requested[1].is_none() => Some(1),
        (false, 2) if requested[1].is_some() => Some(0),
        _ => None,
    };
    let cond_kernel = cond_target.map(|k| {
        let r_cpt = net.cpt(&nodes::response(k)).expect("validated network");
        let eps = net.cpt(&nodes::epsilon(k)).expect("validated network");
        (response_kernel(r_cpt, eps.values()), r_cpt.cards()[2])
    });

    struct Part {
        /// Unnormalized posterior over (v, r, t, x) for one δp bin.
        post: Vec<f64>,
        /// Σ chain(x)·L(x) with the δp prior left out, for the class view.
        h_d: f64,
        /// Unnormalized conditional-hazard accumulator.
        cond: Vec<f64>,
    }

    let (nd, nv, nr, nt, nx) = (dims.nd, dims.nv, dims.nr, dims.nt, dims.nx);
    let parts: Vec<Part> = (0..nd)
        .into_par_iter()
        .map(|d| {
            let n_cond = cond_kernel.as_ref().map_or(0, |(_, n)| *n);
            let mut part = Part {
                post: vec![0.0; nv * nr * nt * nx],
                h_d: 0.0,
                cond: vec![0.0; n_cond],
            };
            let mut q = vec![0.0; n_cond];
            let mut local = 0usize;
            for v in 0..nv {
                for r in 0..nr {
                    for t in 0..nt {
                        for x in 0..nx {
                            let chain = params.vf[d * nv + v]
                                * params.rm[(d * nv + v) * nr + r]
                                * params.th[((d * nv + v) * nr + r) * nt + t]
                                * params.x0[x];
                            let combo = (((d * nv + v) * nr + r) * nt + t) * nx + x;
                            if chain > 0.0 {
                                let mut like = 1.0;
                                for (h, tail) in tails.iter().enumerate() {
                                    if let Some(tail) = tail {
                                        let row = &rhat_vals[h]
                                            [combo * n_rhat[h]..(combo + 1) * n_rhat[h]];
                                        like *=
                                            row.iter().zip(tail).map(|(p, t)| p * t).sum::<f64>();
                                    }
                                }
                                if like > 0.0 {
                                    part.post[local] = params.p_dp[d] * chain * like;
                                    part.h_d += chain * like;
                                    if let (Some(k), Some((kernel, _))) =
                                        (cond_target, &cond_kernel)
                                    {
                                        let row = &rhat_vals[k]
                                            [combo * n_rhat[k]..(combo + 1) * n_rhat[k]];
                                        blend(row, kernel, &mut q);
                                        let w = part.post[local];
                                        for (o, ql) in part.cond.iter_mut().zip(&q) {
                                            *o += w * ql;
                                        }
                                    }
                                }
                            }
                            local += 1;
                        }
                    }
                }
            }
            part
        })
        .collect();

    let z: f64 = parts.iter().map(|p| p.post.iter().sum::<f64>()).sum();
    if z <= 0.0 {
        return Err(DeaggError::ZeroEvidence {
            label: case.label.clone(),
        });
    }

    // Normalize and fold every view out of the combination posterior.
    let mut posterior = Vec::with_capacity(dims.n_combos());
    for part in &parts {
        posterior.extend(part.post.iter().map(|p| p / z));
    }
    let mut dp = vec![0.0; nd];
    let mut vf = vec![0.0; nv];
    let mut rmax = vec![0.0; nr];
    let mut theta = vec![0.0; nt];
    let mut x0 = vec![0.0; nx];
    let mut track_joint = vec![0.0; nx * nt];
    let mut track_by_dp = vec![0.0; nx * nt * nd];
    let mut track_by_vf = vec![0.0; nx * nt * nv];
    let mut track_by_rmax = vec![0.0; nx * nt * nr];
    let mut idx = 0usize;
    for d in 0..nd {
        for v in 0..nv {
            for r in 0..nr {
                for t in 0..nt {
                    for x in 0..nx {
                        let p = posterior[idx];
                        idx += 1;
                        dp[d] += p;
                        vf[v] += p;
                        rmax[r] += p;
                        theta[t] += p;
                        x0[x] += p;
                        let track = x * nt + t;
                        track_joint[track] += p;
                        track_by_dp[track * nd + d] += p;
                        track_by_vf[track * nv + v] += p;
                        track_by_rmax[track * nr + r] += p;
                    }
                }
            }
        }
    }

    // Class posterior: p(i | e) ∝ p(i) Σ_d p(δp_d | i) Σ_rest chain·L.
    let pi = net.cpt(&VarId::from(nodes::INTENSITY)).expect("validated");
    let n_i = pi.cards()[0];
    let dp_i = net
        .cpt(&VarId::from(nodes::DP))
        .expect("validated")
        .values();
    let mut intensity = vec![0.0; n_i];
    for (k, p) in pi.values().iter().enumerate() {
        for (d, part) in parts.iter().enumerate() {
            intensity[k] += p * dp_i[k * nd + d] * part.h_d;
        }
        intensity[k] /= z;
    }

    let conditional = match (cond_target, cond_kernel) {
        (Some(k), Some(_)) => {
            let meta = assembled.channel(k)?;
            let n_cond = meta.rbins.r().n_bins();
            let mut pmf = vec![0.0; n_cond];
            for part in &parts {
                for (o, c) in pmf.iter_mut().zip(&part.cond) {
                    *o += c / z;
                }
            }
            Some(ConditionalHazard {
                hazard: k,
                label: meta.label.clone(),
                unit: meta.unit.clone(),
                edges: (0..=n_cond).map(|l| meta.rbins.r().edge(l)).collect(),
                pmf,
            })
        }
        _ => None,
    };

    Ok(DeaggregationResult {
        case: case.clone(),
        thresholds: reports,
        evidence_probability: z,
        dims,
        intensity,
        dp,
        vf,
        rmax,
        theta,
        x0,
        track_joint,
        track_by_dp,
        track_by_vf,
        track_by_rmax,
        conditional,
        posterior,
    })
}

/// Deaggregates several evidence cases in parallel against the shared
/// network. Results come back in input order.
pub fn deaggregate_all(
    assembled: &AssembledNetwork,
    cases: &[EvidenceCase],
) -> Result<Vec<DeaggregationResult>, DeaggError> {
    cases
        .par_iter()
        .map(|case| deaggregate(assembled, case))
        .collect()
}

/// Which storm parameter a stacked contribution table resolves.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ThirdParam {
    Dp,
    Vf,
    Rmax,
}

impl ThirdParam {
    fn axis_name(self) -> &'static str {
        match self {
            ThirdParam::Dp => "dp",
            ThirdParam::Vf => "vf",
            ThirdParam::Rmax => "rmax",
        }
    }
}

/// One group of third-parameter bins in a stacked decomposition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GroupSpec {
    pub label: String,
    pub bins: Vec<usize>,
}

impl GroupSpec {
    /// Partitions an axis at the given cut values: each bin joins the
    /// group of the last cut at or below its lower edge. Cuts must be
    /// sorted ascending; an empty cut list yields one all-inclusive
    /// group.
    pub fn from_cuts(edges: &[f64], cuts: &[f64]) -> Vec<GroupSpec> {
        let n_bins = edges.len() - 1;
        let mut groups: Vec<GroupSpec> = (0..=cuts.len())
            .map(|g| {
                let label = match (g.checked_sub(1).map(|i| cuts[i]), cuts.get(g)) {
                    (None, Some(hi)) => format!("<{hi}"),
                    (Some(lo), Some(hi)) => format!("{lo}-{hi}"),
                    (Some(lo), None) => format!(">={lo}"),
                    (None, None) => "all".to_string(),
                };
                GroupSpec {
                    label,
                    bins: Vec::new(),
                }
            })
            .collect();
        for b in 0..n_bins {
            let g = cuts.partition_point(|c| *c <= edges[b]);
            groups[g].bins.push(b);
        }
        groups.retain(|g| !g.bins.is_empty());
        groups
    }
}

/// A stacked contribution table: the track joint split across groups of
/// one storm parameter's bins.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StackedTable {
    pub third: ThirdParam,
    pub group_labels: Vec<String>,
    /// Row-major `nx × nt × n_groups` (group fastest).
    pub values: Vec<f64>,
    pub nx: usize,
    pub nt: usize,
}

impl StackedTable {
    /// Mass of one group, summed over the track grid.
    pub fn group_mass(&self, g: usize) -> f64 {
        self.values
            .iter()
            .skip(g)
            .step_by(self.group_labels.len())
            .sum()
    }
}

/// Groups a result's full-resolution track-by-parameter table into a
/// stacked contribution table. The groups must partition the parameter's
/// bins exactly.
pub fn stacked_contributions(
    result: &DeaggregationResult,
    third: ThirdParam,
    groups: &[GroupSpec],
) -> Result<StackedTable, DeaggError> {
    let (table, n_bins) = match third {
        ThirdParam::Dp => (&result.track_by_dp, result.dims.nd),
        ThirdParam::Vf => (&result.track_by_vf, result.dims.nv),
        ThirdParam::Rmax => (&result.track_by_rmax, result.dims.nr),
    };
    let mut owner = vec![usize::MAX; n_bins];
    for (g, group) in groups.iter().enumerate() {
        for &b in &group.bins {
            if b >= n_bins {
                return Err(DeaggError::BinUncovered {
                    axis: third.axis_name(),
                    bin: b,
                });
            }
            if owner[b] != usize::MAX {
                return Err(DeaggError::BinRepeated {
                    axis: third.axis_name(),
                    bin: b,
                });
            }
            owner[b] = g;
        }
    }
    if let Some(bin) = owner.iter().position(|o| *o == usize::MAX) {
        return Err(DeaggError::BinUncovered {
            axis: third.axis_name(),
            bin,
        });
    }

    let (nx, nt) = (result.dims.nx, result.dims.nt);
    let n_groups = groups.len();
    let mut values = vec![0.0; nx * nt * n_groups];
    for track in 0..nx * nt {
        for b in 0..n_bins {
            values[track * n_groups + owner[b]] += table[track * n_bins + b];
        }
    }
    Ok(StackedTable {
        third,
        group_labels: groups.iter().map(|g| g.label.clone()).collect(),
        values,
        nx,
        nt,
    })
}
