//! Joint exceedance over two hazard channels.
//!
//! The pair of actual responses is never materialized as one network node
//! at production grid sizes — the pairing table would dwarf every other
//! factor. Instead the joint mass function is accumulated directly: for
//! each storm-parameter combination the two response distributions are
//! conditionally independent, so their outer product, weighted by the
//! combination's probability, adds one rank-one term to the joint table.
//! On reduced grids the same quantity is cross-checked against a pairing
//! node pushed through the generic inference engine.

use rayon::prelude::*;
use serde::Serialize;

use super::{blend, response_kernel, AssembledNetwork, HazardError, ParamTables, RateConfig};
use crate::nodes;

/// Joint distribution of the two actual responses, with the derived
/// density, exceedance surface, and correlation.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JointHazardTable {
    pub labels: [String; 2],
    pub units: [String; 2],
    /// First-response bin edges, length `n1 + 1`.
    pub r1_edges: Vec<f64>,
    /// Second-response bin edges, length `n2 + 1`.
    pub r2_edges: Vec<f64>,
    /// Joint bin masses, row-major `n1 × n2` (second response fastest).
    pub pmf: Vec<f64>,
    /// Masses divided by bin areas.
    pub pdf: Vec<f64>,
    /// `P[R₁ ≥ e₁, R₂ ≥ e₂]` at every edge pair, `(n1+1) × (n2+1)`.
    pub exceedance: Vec<f64>,
    /// Linear correlation of the two responses at bin midpoints.
    pub correlation: f64,
}

impl JointHazardTable {
    fn from_pmf(
        labels: [String; 2],
        units: [String; 2],
        r1_edges: Vec<f64>,
        r2_edges: Vec<f64>,
        pmf: Vec<f64>,
    ) -> Result<Self, HazardError> {
        let n1 = r1_edges.len() - 1;
        let n2 = r2_edges.len() - 1;
        let total: f64 = pmf.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(HazardError::JointMass(total));
        }

        let w1 = (r1_edges[n1] - r1_edges[0]) / n1 as f64;
        let w2 = (r2_edges[n2] - r2_edges[0]) / n2 as f64;
        let pdf: Vec<f64> = pmf.iter().map(|p| p / (w1 * w2)).collect();

        // Suffix sums: per-row tails over the second response, then
        // per-column tails over the first.
        let mut exceedance = vec![0.0; (n1 + 1) * (n2 + 1)];
        let mut row_tail = vec![0.0; n1 * (n2 + 1)];
        for a in 0..n1 {
            for b in (0..n2).rev() {
                row_tail[a * (n2 + 1) + b] = row_tail[a * (n2 + 1) + b + 1] + pmf[a * n2 + b];
            }
        }
        for b in 0..=n2 {
            for a in (0..n1).rev() {
                // The corner sum can land one ulp above 1; this is a
                // probability, and suffix sums are nonincreasing in a,
                // so clamping preserves monotonicity.
                exceedance[a * (n2 + 1) + b] = (exceedance[(a + 1) * (n2 + 1) + b]
                    + row_tail[a * (n2 + 1) + b])
                    .min(1.0);
            }
        }

        // Correlation at bin midpoints, centered two-pass.
        let mid = |edges: &[f64], k: usize| 0.5 * (edges[k] + edges[k + 1]);
        let mut mu1 = 0.0;
        let mut mu2 = 0.0;
        for a in 0..n1 {
            for b in 0..n2 {
                let p = pmf[a * n2 + b];
                mu1 += p * mid(&r1_edges, a);
                mu2 += p * mid(&r2_edges, b);
            }
        }
        let mut var1 = 0.0;
        let mut var2 = 0.0;
        let mut cov = 0.0;
        for a in 0..n1 {
            let d1 = mid(&r1_edges, a) - mu1;
            for b in 0..n2 {
                let p = pmf[a * n2 + b];
                let d2 = mid(&r2_edges, b) - mu2;
                var1 += p * d1 * d1;
                var2 += p * d2 * d2;
                cov += p * d1 * d2;
            }
        }
        let correlation = if var1 > 0.0 && var2 > 0.0 {
            cov / (var1 * var2).sqrt()
        } else {
            0.0
        };

        Ok(Self {
            labels,
            units,
            r1_edges,
            r2_edges,
            pmf,
            pdf,
            exceedance,
            correlation,
        })
    }

    pub fn n1(&self) -> usize {
        self.r1_edges.len() - 1
    }

    pub fn n2(&self) -> usize {
        self.r2_edges.len() - 1
    }

    /// Exceedance at the edge pair `(a, b)`.
    pub fn exceedance_at_edges(&self, a: usize, b: usize) -> f64 {
        self.exceedance[a * (self.n2() + 1) + b]
    }

    /// `P[R₁ ≥ r1, R₂ ≥ r2]` for arbitrary thresholds: the mass of bins
    /// whose lower edges clear both values.
    pub fn exceedance_prob(&self, r1: f64, r2: f64) -> f64 {
        let a = self.r1_edges.partition_point(|e| *e < r1).min(self.n1());
        let b = self.r2_edges.partition_point(|e| *e < r2).min(self.n2());
        self.exceedance_at_edges(a, b)
    }

    /// Joint exceedance scaled to an annual rate.
    pub fn annual_exceedance(&self, rate: &RateConfig, r1: f64, r2: f64) -> f64 {
        rate.annual_scale() * self.exceedance_prob(r1, r2)
    }

    /// Marginal bin masses of the first response.
    pub fn marginal1(&self) -> Vec<f64> {
        let n2 = self.n2();
        self.pmf.chunks(n2).map(|row| row.iter().sum()).collect()
    }

    /// Marginal bin masses of the second response.
    pub fn marginal2(&self) -> Vec<f64> {
        let n2 = self.n2();
        let mut out = vec![0.0; n2];
        for row in self.pmf.chunks(n2) {
            for (o, p) in out.iter_mut().zip(row) {
                *o += p;
            }
        }
        out
    }
}

/// Computes the joint response table for a two-channel network.
///
/// For each storm-parameter combination `x` the responses factor as
/// `p(r₁, r₂ | x) = p(r₁|x) p(r₂|x)`, each factor obtained by pushing the
/// predicted-response row through the error-blended kernel. The joint
/// table is `Σ_x p(x) p(r₁|x) ⊗ p(r₂|x)`, accumulated in parallel over
/// pressure-deficit bins and reduced in index order, so results are
/// bit-identical across thread counts.
///
/// The table is rate-free; annualization happens at lookup time via
/// [`JointHazardTable::annual_exceedance`], so the correlation and the
/// surface shape are invariant to the recurrence constants.
pub fn joint_hazard(assembled: &AssembledNetwork) -> Result<JointHazardTable, HazardError> {
    if assembled.n_hazards() != 2 {
        return Err(HazardError::NeedsTwoHazards(assembled.n_hazards()));
    }
    let net = assembled.network();
    let params = ParamTables::from_network(net)?;

    let mut kernels: Vec<Vec<f64>> = Vec::with_capacity(2);
    let mut rhat_vals: Vec<&[f64]> = Vec::with_capacity(2);
    let mut n_rhat = [0usize; 2];
    let mut n_r = [0usize; 2];
    for h in 0..2 {
        let r_cpt = net.cpt(&nodes::response(h)).expect("validated network");
        let eps = net.cpt(&nodes::epsilon(h)).expect("validated network");
        kernels.push(response_kernel(r_cpt, eps.values()));
        n_rhat[h] = r_cpt.cards()[0];
        n_r[h] = r_cpt.cards()[2];
        rhat_vals.push(net.cpt(&nodes::rhat(h)).expect("validated network").values());
    }
    let (n1, n2) = (n_r[0], n_r[1]);
    let (nv, nr, nt, nx) = (params.nv, params.nr, params.nt, params.nx);

    let parts: Vec<Vec<f64>> = (0..params.nd)
        .into_par_iter()
        .map(|d| {
            let mut local = vec![0.0; n1 * n2];
            let mut q1 = vec![0.0; n1];
            let mut q2 = vec![0.0; n2];
            for v in 0..nv {
                for r in 0..nr {
                    for t in 0..nt {
                        for x in 0..nx {
                            let w = params.weight(d, v, r, t, x);
                            if w == 0.0 {
                                continue;
                            }
                            let combo = (((d * nv + v) * nr + r) * nt + t) * nx + x;
                            blend(
                                &rhat_vals[0][combo * n_rhat[0]..(combo + 1) * n_rhat[0]],
                                &kernels[0],
                                &mut q1,
                            );
                            blend(
                                &rhat_vals[1][combo * n_rhat[1]..(combo + 1) * n_rhat[1]],
                                &kernels[1],
                                &mut q2,
                            );
                            for (a, qa) in q1.iter().enumerate() {
                                let wa = w * qa;
                                if wa == 0.0 {
                                    continue;
                                }
                                let out = &mut local[a * n2..(a + 1) * n2];
                                for (o, qb) in out.iter_mut().zip(&q2) {
                                    *o += wa * qb;
                                }
                            }
                        }
                    }
                }
            }
            local
        })
        .collect();

    let mut pmf = vec![0.0; n1 * n2];
    for part in &parts {
        for (o, p) in pmf.iter_mut().zip(part) {
            *o += p;
        }
    }

    let ch1 = assembled.channel(0)?;
    let ch2 = assembled.channel(1)?;
    JointHazardTable::from_pmf(
        [ch1.label.clone(), ch2.label.clone()],
        [ch1.unit.clone(), ch2.unit.clone()],
        (0..=n1).map(|k| ch1.rbins.r().edge(k)).collect(),
        (0..=n2).map(|k| ch2.rbins.r().edge(k)).collect(),
        pmf,
    )
}
