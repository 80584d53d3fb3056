//! Network assembly and forward hazard products.
//!
//! The assembled network chains the storm-parameter tables to one or two
//! response channels (predicted response, error term, actual response, and
//! an optional threshold indicator). Hazard curves come from the actual
//! response marginal; an independent direct-summation path evaluates the
//! same exceedance rates by explicit nested summation over every storm
//! parameter combination, bypassing the inference engine entirely, and the
//! two must agree to tight tolerance.

pub mod joint;

pub use joint::{joint_hazard, JointHazardTable};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bn::{
    query, DiscreteNetwork, Evidence, Factor, FactorError, InferError, NetworkError, VarId,
};
use crate::discretize::CptSet;
use crate::nodes;
use crate::surrogate::ResponseBinScheme;

/// Annualization constants for the recurrence integral.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RateConfig {
    /// Storm recurrence rate, storms per year per kilometer of coastline.
    pub lambda: f64,
    /// Track spacing in kilometers.
    pub s_trk: f64,
}

impl RateConfig {
    pub fn validate(&self) -> Result<(), HazardError> {
        if !(self.lambda > 0.0 && self.lambda.is_finite())
            || !(self.s_trk > 0.0 && self.s_trk.is_finite())
        {
            return Err(HazardError::BadRate {
                lambda: self.lambda,
                s_trk: self.s_trk,
            });
        }
        Ok(())
    }

    /// The factor converting an exceedance probability into an annual
    /// exceedance rate.
    pub fn annual_scale(&self) -> f64 {
        self.lambda * self.s_trk
    }
}

/// Errors from assembly and forward computation.
#[derive(Debug, thiserror::Error)]
pub enum HazardError {
    #[error("expected 1 or 2 hazard channels, got {0}")]
    WrongChannelCount(usize),
    #[error("operation needs two hazard channels, network has {0}")]
    NeedsTwoHazards(usize),
    #[error("hazard index {0} out of range ({1} channels)")]
    NoSuchHazard(usize, usize),
    #[error("rate config invalid: lambda = {lambda}, s_trk = {s_trk} (both must be positive)")]
    BadRate { lambda: f64, s_trk: f64 },
    #[error("epsilon prior must be nonnegative and sum to 1, got total {0}")]
    BadEpsilonPrior(f64),
    #[error("{what}: expected cardinality {expected}, found {found}")]
    CardMismatch {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("factor for {what} has scope {found:?}, expected {expected:?}")]
    ScopeMismatch {
        what: String,
        expected: Vec<String>,
        found: Vec<String>,
    },
    #[error("channel {0} has no threshold configured")]
    NoThreshold(usize),
    #[error("joint pairing node would need {entries} entries, over the {cap} cap")]
    JointNodeTooLarge { entries: u128, cap: usize },
    #[error("joint response mass totals {0}, expected 1")]
    JointMass(f64),
    #[error("network is missing node {0}")]
    MissingNode(String),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error(transparent)]
    Infer(#[from] InferError),
    #[error(transparent)]
    Factor(#[from] FactorError),
}

/// How a requested threshold was aligned to the response grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ThresholdReport {
    pub requested: f64,
    /// The bin edge actually used.
    pub snapped: f64,
    /// Index of that edge on the actual-response axis.
    pub edge: usize,
    /// True when snapping changed the value.
    pub moved: bool,
}

/// Input bundle for one hazard channel.
#[derive(Debug, Clone)]
pub struct HazardChannel {
    pub label: String,
    pub unit: String,
    /// `p(r̂ | δp, v_f, r_max, θ, x₀)` for this channel's hazard index.
    pub rhat_cpt: Factor,
    /// `p(r | r̂, ε)`.
    pub r_cpt: Factor,
    /// Standard-normal masses of the ε bins.
    pub eps_prior: Vec<f64>,
    pub rbins: ResponseBinScheme,
    /// Optional exceedance threshold in response units.
    pub threshold: Option<f64>,
}

/// Channel metadata retained after assembly.
#[derive(Debug, Clone)]
pub struct ChannelMeta {
    pub label: String,
    pub unit: String,
    pub rbins: ResponseBinScheme,
    pub threshold: Option<ThresholdReport>,
}

/// The assembled hazard network plus per-channel metadata.
#[derive(Debug, Clone)]
pub struct AssembledNetwork {
    net: DiscreteNetwork,
    channels: Vec<ChannelMeta>,
}

const PARAM_IDS: [&str; 6] = ["i", "dp", "vf", "rmax", "theta", "x0"];

fn check_scope(factor: &Factor, what: &str, expected: &[VarId]) -> Result<(), HazardError> {
    if factor.scope() != expected {
        return Err(HazardError::ScopeMismatch {
            what: what.to_string(),
            expected: expected.iter().map(|v| v.as_str().to_string()).collect(),
            found: factor
                .scope()
                .iter()
                .map(|v| v.as_str().to_string())
                .collect(),
        });
    }
    Ok(())
}

/// Snaps a threshold to the nearest edge of the actual-response axis.
pub(crate) fn snap_threshold(rbins: &ResponseBinScheme, requested: f64) -> ThresholdReport {
    let n = rbins.r().n_bins();
    let mut best = 0usize;
    let mut best_d = f64::INFINITY;
    for k in 0..=n {
        let d = (rbins.r().edge(k) - requested).abs();
        if d < best_d {
            best_d = d;
            best = k;
        }
    }
    let snapped = rbins.r().edge(best);
    ThresholdReport {
        requested,
        snapped,
        edge: best,
        moved: snapped != requested,
    }
}

/// Wires the storm-parameter tables and one or two response channels into
/// a validated network.
///
/// Node layout: intensity class and the five parameter nodes, then per
/// channel `h` the predicted response `rhat{h+1}` (parents: the five
/// parameters), the error node `eps{h+1}` (root, standard-normal bin
/// masses), the actual response `r{h+1}` (parents: predicted response and
/// error), and — when a threshold is configured — a deterministic
/// indicator `e{h+1}` that is true exactly on response bins whose lower
/// edge reaches the snapped threshold.
pub fn assemble(
    cpts: &CptSet,
    channels: Vec<HazardChannel>,
) -> Result<AssembledNetwork, HazardError> {
    if channels.is_empty() || channels.len() > 2 {
        return Err(HazardError::WrongChannelCount(channels.len()));
    }
    let i = VarId::from(nodes::INTENSITY);
    let dp = VarId::from(nodes::DP);
    let vf = VarId::from(nodes::VF);
    let rmax = VarId::from(nodes::RMAX);
    let theta = VarId::from(nodes::THETA);
    let x0 = VarId::from(nodes::X0);

    check_scope(&cpts.intensity, "p(i)", &[i.clone()])?;
    check_scope(&cpts.dp_given_i, "p(dp|i)", &[i.clone(), dp.clone()])?;
    check_scope(&cpts.vf_given_dp, "p(vf|dp)", &[dp.clone(), vf.clone()])?;
    check_scope(
        &cpts.rmax_given_dp_vf,
        "p(rmax|dp,vf)",
        &[dp.clone(), vf.clone(), rmax.clone()],
    )?;
    check_scope(
        &cpts.theta_given_dp_vf_rmax,
        "p(theta|dp,vf,rmax)",
        &[dp.clone(), vf.clone(), rmax.clone(), theta.clone()],
    )?;
    check_scope(&cpts.x0, "p(x0)", &[x0.clone()])?;

    let param_cards = [
        cpts.dp_given_i.cards()[1],
        cpts.vf_given_dp.cards()[1],
        cpts.rmax_given_dp_vf.cards()[2],
        cpts.theta_given_dp_vf_rmax.cards()[3],
        cpts.x0.cards()[0],
    ];

    let mut net = DiscreteNetwork::new();
    net.add_variable(
        i.clone(),
        vec!["LI".to_string(), "MI".to_string(), "HI".to_string()],
    );
    for (id, card) in [&dp, &vf, &rmax, &theta, &x0].iter().zip(param_cards) {
        net.add_variable_with_card((*id).clone(), card);
    }
    net.set_cpt(i.clone(), Vec::new(), cpts.intensity.clone());
    net.set_cpt(dp.clone(), vec![i.clone()], cpts.dp_given_i.clone());
    net.set_cpt(vf.clone(), vec![dp.clone()], cpts.vf_given_dp.clone());
    net.set_cpt(
        rmax.clone(),
        vec![dp.clone(), vf.clone()],
        cpts.rmax_given_dp_vf.clone(),
    );
    net.set_cpt(
        theta.clone(),
        vec![dp.clone(), vf.clone(), rmax.clone()],
        cpts.theta_given_dp_vf_rmax.clone(),
    );
    net.set_cpt(x0.clone(), Vec::new(), cpts.x0.clone());

    let mut metas = Vec::with_capacity(channels.len());
    for (h, ch) in channels.into_iter().enumerate() {
        let rhat_id = nodes::rhat(h);
        let eps_id = nodes::epsilon(h);
        let r_id = nodes::response(h);
        let n_rhat = ch.rbins.rhat().n_bins();
        let n_r = ch.rbins.r().n_bins();
        let n_eps = ch.eps_prior.len();

        let parent_scope = vec![
            dp.clone(),
            vf.clone(),
            rmax.clone(),
            theta.clone(),
            x0.clone(),
        ];
        let mut rhat_scope = parent_scope.clone();
        rhat_scope.push(rhat_id.clone());
        let rhat_cpt = ch.rhat_cpt.reorder(&rhat_scope).map_err(|_| {
            HazardError::ScopeMismatch {
                what: format!("channel {h} predicted-response table"),
                expected: rhat_scope.iter().map(|v| v.as_str().to_string()).collect(),
                found: ch
                    .rhat_cpt
                    .scope()
                    .iter()
                    .map(|v| v.as_str().to_string())
                    .collect(),
            }
        })?;
        for (pos, want) in param_cards.iter().enumerate() {
            if rhat_cpt.cards()[pos] != *want {
                return Err(HazardError::CardMismatch {
                    what: format!(
                        "channel {h} predicted-response table, parent {}",
                        rhat_scope[pos]
                    ),
                    expected: *want,
                    found: rhat_cpt.cards()[pos],
                });
            }
        }
        if rhat_cpt.cards()[5] != n_rhat {
            return Err(HazardError::CardMismatch {
                what: format!("channel {h} predicted-response bins"),
                expected: n_rhat,
                found: rhat_cpt.cards()[5],
            });
        }

        let r_scope = vec![rhat_id.clone(), eps_id.clone(), r_id.clone()];
        let r_cpt = ch
            .r_cpt
            .reorder(&r_scope)
            .map_err(|_| HazardError::ScopeMismatch {
                what: format!("channel {h} actual-response table"),
                expected: r_scope.iter().map(|v| v.as_str().to_string()).collect(),
                found: ch
                    .r_cpt
                    .scope()
                    .iter()
                    .map(|v| v.as_str().to_string())
                    .collect(),
            })?;
        for (pos, want) in [n_rhat, n_eps, n_r].into_iter().enumerate() {
            if r_cpt.cards()[pos] != want {
                return Err(HazardError::CardMismatch {
                    what: format!("channel {h} actual-response table, axis {}", r_scope[pos]),
                    expected: want,
                    found: r_cpt.cards()[pos],
                });
            }
        }

        let eps_total: f64 = ch.eps_prior.iter().sum();
        if ch.eps_prior.iter().any(|p| !p.is_finite() || *p < 0.0)
            || (eps_total - 1.0).abs() > 1e-9
        {
            return Err(HazardError::BadEpsilonPrior(eps_total));
        }

        net.add_variable_with_card(rhat_id.clone(), n_rhat);
        net.add_variable_with_card(eps_id.clone(), n_eps);
        net.add_variable_with_card(r_id.clone(), n_r);
        net.set_cpt(rhat_id.clone(), parent_scope, rhat_cpt);
        net.set_cpt(
            eps_id.clone(),
            Vec::new(),
            Factor::new(vec![eps_id.clone()], vec![n_eps], ch.eps_prior.clone())?,
        );
        net.set_cpt(r_id.clone(), vec![rhat_id, eps_id], r_cpt);

        let threshold = match ch.threshold {
            Some(requested) => {
                let report = snap_threshold(&ch.rbins, requested);
                let e_id = nodes::exceedance(h);
                // Indicator rows: bin `l` exceeds iff its lower edge index
                // reaches the snapped edge.
                let mut values = Vec::with_capacity(n_r * 2);
                for l in 0..n_r {
                    let ind = (l >= report.edge) as usize as f64;
                    values.push(1.0 - ind);
                    values.push(ind);
                }
                net.add_variable(
                    e_id.clone(),
                    vec!["false".to_string(), "true".to_string()],
                );
                net.set_cpt(
                    e_id.clone(),
                    vec![nodes::response(h)],
                    Factor::new(
                        vec![nodes::response(h), e_id.clone()],
                        vec![n_r, 2],
                        values,
                    )?,
                );
                Some(report)
            }
            None => None,
        };

        metas.push(ChannelMeta {
            label: ch.label,
            unit: ch.unit,
            rbins: ch.rbins,
            threshold,
        });
    }

    net.require_valid()?;
    Ok(AssembledNetwork {
        net,
        channels: metas,
    })
}

impl AssembledNetwork {
    pub fn network(&self) -> &DiscreteNetwork {
        &self.net
    }

    pub fn n_hazards(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, h: usize) -> Result<&ChannelMeta, HazardError> {
        self.channels
            .get(h)
            .ok_or(HazardError::NoSuchHazard(h, self.channels.len()))
    }

    /// Marginal distribution over channel `h`'s actual-response bins.
    pub fn response_marginal(&self, h: usize) -> Result<Factor, HazardError> {
        self.channel(h)?;
        let result = query(&self.net, &[nodes::response(h)], &Evidence::new())?;
        Ok(result.posterior)
    }

    /// Probability that channel `h` exceeds its configured threshold,
    /// read from the indicator node.
    pub fn exceedance_probability(&self, h: usize) -> Result<f64, HazardError> {
        let meta = self.channel(h)?;
        if meta.threshold.is_none() {
            return Err(HazardError::NoThreshold(h));
        }
        let result = query(&self.net, &[nodes::exceedance(h)], &Evidence::new())?;
        Ok(result.posterior.values()[1])
    }

    /// A copy of the network with the deterministic response-pairing node
    /// added: one state per (first response bin, second response bin)
    /// combination, with an identity table. Intended for joint queries at
    /// grid sizes where the pairing table is affordable.
    pub fn with_joint_node(&self) -> Result<DiscreteNetwork, HazardError> {
        const CAP: usize = 1 << 27;
        if self.channels.len() != 2 {
            return Err(HazardError::NeedsTwoHazards(self.channels.len()));
        }
        let n1 = self.channels[0].rbins.r().n_bins();
        let n2 = self.channels[1].rbins.r().n_bins();
        let states = n1 * n2;
        let entries = (states as u128) * (states as u128);
        if entries > CAP as u128 {
            return Err(HazardError::JointNodeTooLarge { entries, cap: CAP });
        }
        let mut net = self.net.clone();
        let j = nodes::joint_response();
        let r1 = nodes::response(0);
        let r2 = nodes::response(1);
        let mut values = vec![0.0; states * states];
        for a in 0..n1 {
            for b in 0..n2 {
                let row = a * n2 + b;
                values[row * states + row] = 1.0;
            }
        }
        net.add_variable_with_card(j.clone(), states);
        net.set_cpt(
            j.clone(),
            vec![r1.clone(), r2.clone()],
            Factor::new(vec![r1, r2, j], vec![n1, n2, states], values)?,
        );
        net.require_valid()?;
        Ok(net)
    }
}

/// A marginal hazard curve: exceedance probability and annual exceedance
/// rate at every actual-response bin edge.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HazardCurve {
    pub label: String,
    pub unit: String,
    /// Bin edges, length `n_bins + 1`.
    pub thresholds: Vec<f64>,
    /// `P(R ≥ edge)` per edge; starts at 1, ends at 0, nonincreasing.
    pub exceedance: Vec<f64>,
    /// Exceedance scaled by the annual rate factor.
    pub annual_rate: Vec<f64>,
}

impl HazardCurve {
    /// Exceedance probability at an arbitrary threshold: the mass of bins
    /// whose lower edge is at or above it.
    pub fn exceedance_at(&self, r_star: f64) -> f64 {
        let n = self.thresholds.len() - 1;
        let k = self.thresholds.partition_point(|e| *e < r_star).min(n);
        self.exceedance[k]
    }

    /// Annual exceedance rate at an arbitrary threshold.
    pub fn annual_rate_at(&self, r_star: f64) -> f64 {
        let n = self.thresholds.len() - 1;
        let k = self.thresholds.partition_point(|e| *e < r_star).min(n);
        self.annual_rate[k]
    }
}

/// Computes channel `h`'s hazard curve through the inference engine: the
/// actual-response marginal, suffix-summed into exceedance at every bin
/// edge, then scaled to annual rates.
pub fn hazard_curve(
    assembled: &AssembledNetwork,
    h: usize,
    rate: &RateConfig,
) -> Result<HazardCurve, HazardError> {
    rate.validate()?;
    let meta = assembled.channel(h)?.clone();
    let marginal = assembled.response_marginal(h)?;
    let pmf = marginal.values();
    let n = pmf.len();

    let thresholds: Vec<f64> = (0..=n).map(|k| meta.rbins.r().edge(k)).collect();
    let mut exceedance = vec![0.0; n + 1];
    for k in (0..n).rev() {
        // The full suffix sum can land one ulp above 1; exceedance is a
        // probability, so clamp. Suffix sums are nonincreasing in k, so
        // the clamp preserves monotonicity.
        exceedance[k] = (exceedance[k + 1] + pmf[k]).min(1.0);
    }
    let scale = rate.annual_scale();
    let annual_rate: Vec<f64> = exceedance.iter().map(|p| p * scale).collect();
    Ok(HazardCurve {
        label: meta.label,
        unit: meta.unit,
        thresholds,
        exceedance,
        annual_rate,
    })
}

/// Raw-slice view of the storm-parameter chain, shared by the
/// direct-summation paths. Holds the pressure-deficit marginal with the
/// intensity class already summed out.
pub(crate) struct ParamTables<'a> {
    pub nd: usize,
    pub nv: usize,
    pub nr: usize,
    pub nt: usize,
    pub nx: usize,
    /// `p(dp)` = Σ_i p(i) p(dp|i).
    pub p_dp: Vec<f64>,
    pub vf: &'a [f64],
    pub rm: &'a [f64],
    pub th: &'a [f64],
    pub x0: &'a [f64],
}

impl<'a> ParamTables<'a> {
    /// Reads the parameter chain back out of an assembled network, whose
    /// CPTs are already in canonical scope order.
    pub fn from_network(net: &'a DiscreteNetwork) -> Result<Self, HazardError> {
        let get = |name: &str| {
            net.cpt(&VarId::from(name))
                .ok_or_else(|| HazardError::MissingNode(name.to_string()))
        };
        let intensity = get(nodes::INTENSITY)?;
        let dp_given_i = get(nodes::DP)?;
        let vf_given_dp = get(nodes::VF)?;
        let rmax_given_dp_vf = get(nodes::RMAX)?;
        let theta_given_dp_vf_rmax = get(nodes::THETA)?;
        let x0 = get(nodes::X0)?;

        let nd = dp_given_i.cards()[1];
        let nv = vf_given_dp.cards()[1];
        let nr = rmax_given_dp_vf.cards()[2];
        let nt = theta_given_dp_vf_rmax.cards()[3];
        let nx = x0.cards()[0];

        let pi = intensity.values();
        let dp_i = dp_given_i.values();
        let mut p_dp = vec![0.0; nd];
        for (k, p) in pi.iter().enumerate() {
            for (d, out) in p_dp.iter_mut().enumerate() {
                *out += p * dp_i[k * nd + d];
            }
        }
        Ok(Self {
            nd,
            nv,
            nr,
            nt,
            nx,
            p_dp,
            vf: vf_given_dp.values(),
            rm: rmax_given_dp_vf.values(),
            th: theta_given_dp_vf_rmax.values(),
            x0: x0.values(),
        })
    }

    pub fn from_cpts(cpts: &'a CptSet) -> Result<Self, HazardError> {
        let i = VarId::from(nodes::INTENSITY);
        let dp = VarId::from(nodes::DP);
        let vf = VarId::from(nodes::VF);
        let rmax = VarId::from(nodes::RMAX);
        let theta = VarId::from(nodes::THETA);
        let x0 = VarId::from(nodes::X0);
        check_scope(&cpts.intensity, "p(i)", &[i.clone()])?;
        check_scope(&cpts.dp_given_i, "p(dp|i)", &[i, dp.clone()])?;
        check_scope(&cpts.vf_given_dp, "p(vf|dp)", &[dp.clone(), vf.clone()])?;
        check_scope(
            &cpts.rmax_given_dp_vf,
            "p(rmax|dp,vf)",
            &[dp.clone(), vf.clone(), rmax.clone()],
        )?;
        check_scope(
            &cpts.theta_given_dp_vf_rmax,
            "p(theta|dp,vf,rmax)",
            &[dp, vf, rmax, theta],
        )?;
        check_scope(&cpts.x0, "p(x0)", &[x0])?;

        let nd = cpts.dp_given_i.cards()[1];
        let nv = cpts.vf_given_dp.cards()[1];
        let nr = cpts.rmax_given_dp_vf.cards()[2];
        let nt = cpts.theta_given_dp_vf_rmax.cards()[3];
        let nx = cpts.x0.cards()[0];

        let pi = cpts.intensity.values();
        let dp_i = cpts.dp_given_i.values();
        let mut p_dp = vec![0.0; nd];
        for (k, p) in pi.iter().enumerate() {
            for (d, out) in p_dp.iter_mut().enumerate() {
                *out += p * dp_i[k * nd + d];
            }
        }
        Ok(Self {
            nd,
            nv,
            nr,
            nt,
            nx,
            p_dp,
            vf: cpts.vf_given_dp.values(),
            rm: cpts.rmax_given_dp_vf.values(),
            th: cpts.theta_given_dp_vf_rmax.values(),
            x0: cpts.x0.values(),
        })
    }

    /// Joint weight of parameter combination `(d, v, r, t, x)` with the
    /// class summed out.
    #[inline]
    pub fn weight(&self, d: usize, v: usize, r: usize, t: usize, x: usize) -> f64 {
        self.p_dp[d]
            * self.vf[d * self.nv + v]
            * self.rm[(d * self.nv + v) * self.nr + r]
            * self.th[((d * self.nv + v) * self.nr + r) * self.nt + t]
            * self.x0[x]
    }
}

/// Per-predicted-bin probability that the actual response lands at or
/// above bin `l_min`, with the error integrated out:
/// `t[k] = Σ_j p(ε_j) Σ_{l ≥ l_min} p(r_l | r̂_k, ε_j)`.
pub(crate) fn tail_by_rhat(r_cpt: &Factor, eps_prior: &[f64], l_min: usize) -> Vec<f64> {
    let n_rhat = r_cpt.cards()[0];
    let n_eps = r_cpt.cards()[1];
    let n_r = r_cpt.cards()[2];
    let vals = r_cpt.values();
    (0..n_rhat)
        .map(|k| {
            let mut t = 0.0;
            for (j, pj) in eps_prior.iter().enumerate() {
                let base = (k * n_eps + j) * n_r;
                t += pj * vals[base + l_min..base + n_r].iter().sum::<f64>();
            }
            t
        })
        .collect()
}

/// `q[l] = Σ_k row[k] kernel[k][l]` — one predicted-response row pushed
/// through an error-blended kernel.
pub(crate) fn blend(row: &[f64], kernel: &[f64], q: &mut [f64]) {
    let n = q.len();
    q.iter_mut().for_each(|v| *v = 0.0);
    for (k, pk) in row.iter().enumerate() {
        if *pk == 0.0 {
            continue;
        }
        for (o, kv) in q.iter_mut().zip(&kernel[k * n..(k + 1) * n]) {
            *o += pk * kv;
        }
    }
}

/// Blends the error prior through the actual-response table:
/// `K[k][l] = Σ_j p(ε_j) p(r_l | r̂_k, ε_j)`, i.e. `p(r | r̂)` with the
/// error integrated out. Expects canonical `[rhat, eps, r]` layout.
pub(crate) fn response_kernel(r_cpt: &Factor, eps_prior: &[f64]) -> Vec<f64> {
    let n_rhat = r_cpt.cards()[0];
    let n_eps = r_cpt.cards()[1];
    let n_r = r_cpt.cards()[2];
    let vals = r_cpt.values();
    let mut kernel = vec![0.0; n_rhat * n_r];
    for k in 0..n_rhat {
        for (j, pj) in eps_prior.iter().enumerate().take(n_eps) {
            let row = &vals[(k * n_eps + j) * n_r..(k * n_eps + j + 1) * n_r];
            let out = &mut kernel[k * n_r..(k + 1) * n_r];
            for (o, v) in out.iter_mut().zip(row) {
                *o += pj * v;
            }
        }
    }
    kernel
}

/// Annual exceedance rate at `r_star` by explicit nested summation over
/// every storm-parameter combination, error bin, and predicted-response
/// bin — no factor algebra, no elimination. This is the reference
/// implementation the engine path is checked against.
///
/// Deterministic and thread-count invariant: partial sums are produced per
/// pressure-deficit bin and reduced in index order.
pub fn direct_jpm_sum(
    cpts: &CptSet,
    rhat_cpt: &Factor,
    r_cpt: &Factor,
    eps_prior: &[f64],
    rbins: &ResponseBinScheme,
    rate: &RateConfig,
    r_star: f64,
) -> Result<f64, HazardError> {
    rate.validate()?;
    let params = ParamTables::from_cpts(cpts)?;

    // Identify the channel's node names from the predicted-response table
    // itself, then pin both tables to canonical layout.
    let rhat_id = rhat_cpt
        .scope()
        .iter()
        .find(|v| !PARAM_IDS.contains(&v.as_str()))
        .cloned()
        .ok_or_else(|| HazardError::ScopeMismatch {
            what: "predicted-response table".to_string(),
            expected: vec!["dp, vf, rmax, theta, x0, and a response node".to_string()],
            found: rhat_cpt
                .scope()
                .iter()
                .map(|v| v.as_str().to_string())
                .collect(),
        })?;
    let canonical_rhat = vec![
        VarId::from(nodes::DP),
        VarId::from(nodes::VF),
        VarId::from(nodes::RMAX),
        VarId::from(nodes::THETA),
        VarId::from(nodes::X0),
        rhat_id.clone(),
    ];
    let rhat_cpt = rhat_cpt.reorder(&canonical_rhat)?;

    let eps_id = r_cpt
        .scope()
        .iter()
        .find(|v| v.as_str().starts_with("eps"))
        .cloned()
        .ok_or_else(|| HazardError::ScopeMismatch {
            what: "actual-response table".to_string(),
            expected: vec!["rhat, eps, r".to_string()],
            found: r_cpt
                .scope()
                .iter()
                .map(|v| v.as_str().to_string())
                .collect(),
        })?;
    let r_id = r_cpt
        .scope()
        .iter()
        .find(|v| **v != rhat_id && **v != eps_id)
        .cloned()
        .expect("three-variable scope");
    let r_cpt = r_cpt.reorder(&[rhat_id, eps_id, r_id])?;

    let n_rhat = r_cpt.cards()[0];
    let n_eps = r_cpt.cards()[1];
    let n_r = r_cpt.cards()[2];
    if eps_prior.len() != n_eps {
        return Err(HazardError::CardMismatch {
            what: "epsilon prior".to_string(),
            expected: n_eps,
            found: eps_prior.len(),
        });
    }

    // Tail mass per (predicted bin): Σ_j p(ε_j) Σ_{l: edge_l ≥ r*} p(l|k,j).
    let l_min = (0..n_r)
        .position(|l| rbins.r().edge(l) >= r_star)
        .unwrap_or(n_r);
    let tail = tail_by_rhat(&r_cpt, eps_prior, l_min);

    let rhat_vals = rhat_cpt.values();
    let (nv, nr, nt, nx) = (params.nv, params.nr, params.nt, params.nx);
    let partials: Vec<f64> = (0..params.nd)
        .into_par_iter()
        .map(|d| {
            let mut acc = 0.0;
            for v in 0..nv {
                for r in 0..nr {
                    for t in 0..nt {
                        for x in 0..nx {
                            let w = params.weight(d, v, r, t, x);
                            if w == 0.0 {
                                continue;
                            }
                            let combo = (((d * nv + v) * nr + r) * nt + t) * nx + x;
                            let row = &rhat_vals[combo * n_rhat..(combo + 1) * n_rhat];
                            let mut px = 0.0;
                            for (pk, tk) in row.iter().zip(&tail) {
                                px += pk * tk;
                            }
                            acc += w * px;
                        }
                    }
                }
            }
            acc
        })
        .collect();
    let total: f64 = partials.iter().sum();
    Ok(rate.annual_scale() * total)
}
