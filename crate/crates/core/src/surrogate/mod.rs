//! Storm-response surrogate models and Monte-Carlo construction of the
//! response conditional probability tables.
//!
//! A response model maps a storm parameter vector to a predicted hazard
//! amplitude. The actual response adds a severity-dependent error,
//! `r = r̂ + ε·σ_c(r̂)`, with `ε` a standard normal discretized on fixed
//! bins. Both the predicted-response table `p(r̂ | δp, v_f, r_max, θ, x₀)`
//! and the actual-response table `p(r | r̂, ε)` are built by stratified
//! Monte-Carlo sampling within bin interiors.

mod synthetic;
mod tabulated;

pub use synthetic::{synthetic_models, SiteConfig, SyntheticRain, SyntheticSurge};
pub use tabulated::{tabulated_model, TabulatedError, TabulatedModel};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bn::{Factor, FactorError, VarId};
use crate::discretize::BinScheme;
use crate::nodes;
use crate::stats::{norm_cdf, norm_inv_cdf, PiecewiseError, PiecewiseLinear};

/// Stream offset separating actual-response draws from predicted-response
/// draws under a shared seed.
const R_CPT_STREAM_BASE: u64 = 1 << 40;

/// Clamped-draw fraction above which a build is flagged for attention.
pub const CLAMP_BUDGET: f64 = 0.01;

/// One storm parameter vector: four continuous coordinates plus the
/// landfall-point index.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StormInputs {
    pub dp: f64,
    pub vf: f64,
    pub rmax: f64,
    pub theta_deg: f64,
    pub x0: usize,
}

/// A hazard-response surrogate: predicts the response amplitude for a
/// storm, with site and track geometry baked in at construction.
///
/// Implementations must return a finite value for every input inside the
/// bin-scheme domain.
pub trait ResponseModel: Send + Sync {
    /// Short hazard label, e.g. `"surge"`.
    fn label(&self) -> &str;
    /// Unit of the predicted amplitude, e.g. `"m"`.
    fn unit(&self) -> &str;
    /// Predicted response amplitude.
    fn predict(&self, x: &StormInputs) -> f64;
}

/// Errors from response-table construction.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum SurrogateError {
    #[error("n_sim must be at least 1")]
    ZeroSims,
    #[error("bin range [{lo}, {hi}] must be finite with lo < hi")]
    BadRange { lo: f64, hi: f64 },
    #[error("bin count must be at least 1")]
    ZeroBins,
    #[error("actual-response range [{r_lo}, {r_hi}] must contain the predicted range [{rhat_lo}, {rhat_hi}]")]
    RangeNotContained {
        r_lo: f64,
        r_hi: f64,
        rhat_lo: f64,
        rhat_hi: f64,
    },
    #[error("epsilon interior edges must be finite and strictly increasing")]
    BadEpsilonEdges,
    #[error("sigma_c must be nonnegative, found {0}")]
    NegativeSigma(f64),
    #[error("model {label} returned a non-finite prediction for dp={dp}, vf={vf}, rmax={rmax}, theta={theta}, x0={x0}")]
    NonFinitePrediction {
        label: String,
        dp: f64,
        vf: f64,
        rmax: f64,
        theta: f64,
        x0: usize,
    },
    #[error(transparent)]
    Piecewise(#[from] PiecewiseError),
    #[error(transparent)]
    Factor(#[from] FactorError),
}

/// Equal-width bins over a closed range.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformBins {
    lo: f64,
    hi: f64,
    n: usize,
}

impl UniformBins {
    pub fn new(lo: f64, hi: f64, n: usize) -> Result<Self, SurrogateError> {
        if !lo.is_finite() || !hi.is_finite() || lo >= hi {
            return Err(SurrogateError::BadRange { lo, hi });
        }
        if n == 0 {
            return Err(SurrogateError::ZeroBins);
        }
        Ok(Self { lo, hi, n })
    }

    pub fn lo(&self) -> f64 {
        self.lo
    }

    pub fn hi(&self) -> f64 {
        self.hi
    }

    pub fn n_bins(&self) -> usize {
        self.n
    }

    pub fn width(&self) -> f64 {
        (self.hi - self.lo) / self.n as f64
    }

    /// Edge `k`, for `k` in `0..=n`.
    pub fn edge(&self, k: usize) -> f64 {
        if k == self.n {
            self.hi
        } else {
            self.lo + self.width() * k as f64
        }
    }

    /// Lower and upper edge of bin `k`.
    pub fn bounds(&self, k: usize) -> (f64, f64) {
        (self.edge(k), self.edge(k + 1))
    }

    pub fn midpoint(&self, k: usize) -> f64 {
        let (lo, hi) = self.bounds(k);
        0.5 * (lo + hi)
    }

    /// Bin containing `x`, clamped into range; the flag reports whether
    /// clamping occurred. The top edge belongs to the last bin.
    pub fn bin_of_clamped(&self, x: f64) -> (usize, bool) {
        if !(x >= self.lo) {
            return (0, true);
        }
        if x > self.hi {
            return (self.n - 1, true);
        }
        let k = ((x - self.lo) / self.width()) as usize;
        (k.min(self.n - 1), false)
    }
}

/// Per-hazard response grids: the predicted-response axis and the wider
/// actual-response axis it embeds into.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResponseBinScheme {
    rhat: UniformBins,
    r: UniformBins,
}

impl ResponseBinScheme {
    /// Standard bin counts for the response axes.
    pub const N_RHAT: usize = 40;
    pub const N_R: usize = 80;

    /// Builds the pair, requiring the actual-response range to contain the
    /// predicted range so error-free draws never clamp.
    pub fn new(rhat: UniformBins, r: UniformBins) -> Result<Self, SurrogateError> {
        if r.lo() > rhat.lo() || r.hi() < rhat.hi() {
            return Err(SurrogateError::RangeNotContained {
                r_lo: r.lo(),
                r_hi: r.hi(),
                rhat_lo: rhat.lo(),
                rhat_hi: rhat.hi(),
            });
        }
        Ok(Self { rhat, r })
    }

    /// Standard scheme: 40 predicted bins over the given range, 80 actual
    /// bins over the range widened by three error standard deviations at
    /// each end.
    pub fn covering(
        rhat_lo: f64,
        rhat_hi: f64,
        err: &ErrorModel,
    ) -> Result<Self, SurrogateError> {
        let r_lo = rhat_lo - 3.0 * err.sigma(rhat_lo);
        let r_hi = rhat_hi + 3.0 * err.sigma(rhat_hi);
        Self::new(
            UniformBins::new(rhat_lo, rhat_hi, Self::N_RHAT)?,
            UniformBins::new(r_lo, r_hi, Self::N_R)?,
        )
    }

    pub fn rhat(&self) -> &UniformBins {
        &self.rhat
    }

    pub fn r(&self) -> &UniformBins {
        &self.r
    }
}

/// Severity-dependent error model for one hazard: fixed standard-normal
/// bins for `ε` and a piecewise-linear conditional standard deviation
/// `σ_c(r̂)`.
#[derive(Debug, Clone)]
pub struct ErrorModel {
    /// Full edge list including the infinite tails.
    edges: Vec<f64>,
    sigma_c: PiecewiseLinear,
}

impl ErrorModel {
    /// Standard interior edges, one-unit bins from -3 to 3 with open
    /// tails.
    pub const STANDARD_INTERIOR: [f64; 7] = [-3.0, -2.0, -1.0, 0.0, 1.0, 2.0, 3.0];

    /// Builds an error model from interior `ε` edges and a `σ_c` table.
    pub fn new(interior: &[f64], sigma_c: PiecewiseLinear) -> Result<Self, SurrogateError> {
        if interior.is_empty()
            || interior.iter().any(|e| !e.is_finite())
            || interior.windows(2).any(|w| w[0] >= w[1])
        {
            return Err(SurrogateError::BadEpsilonEdges);
        }
        if let Some(bad) = sigma_c.ys().iter().find(|y| **y < 0.0) {
            return Err(SurrogateError::NegativeSigma(*bad));
        }
        let mut edges = Vec::with_capacity(interior.len() + 2);
        edges.push(f64::NEG_INFINITY);
        edges.extend_from_slice(interior);
        edges.push(f64::INFINITY);
        Ok(Self { edges, sigma_c })
    }

    /// Standard edges with a default severity law
    /// `σ_c(r̂) = floor + slope·r̂` over the given predicted range, with
    /// slope 0.1 and floor 1% of the span.
    pub fn with_default_sigma(rhat_lo: f64, rhat_hi: f64) -> Result<Self, SurrogateError> {
        let floor = 0.01 * (rhat_hi - rhat_lo);
        let sigma = PiecewiseLinear::new(&[
            (rhat_lo, floor + 0.1 * rhat_lo.max(0.0)),
            (rhat_hi, floor + 0.1 * rhat_hi),
        ])?;
        Self::new(&Self::STANDARD_INTERIOR, sigma)
    }

    pub fn n_bins(&self) -> usize {
        self.edges.len() - 1
    }

    /// Lower and upper edge of `ε` bin `k`; the first and last bins are
    /// half-infinite.
    pub fn bin_bounds(&self, k: usize) -> (f64, f64) {
        (self.edges[k], self.edges[k + 1])
    }

    /// Standard-normal mass of each `ε` bin. Sums to 1 exactly by
    /// telescoping.
    pub fn prior(&self) -> Vec<f64> {
        self.edges
            .windows(2)
            .map(|w| norm_cdf(w[1]) - norm_cdf(w[0]))
            .collect()
    }

    /// The `ε` prior as a factor over the hazard's epsilon node.
    pub fn prior_factor(&self, hazard: usize) -> Result<Factor, FactorError> {
        Factor::new(
            vec![nodes::epsilon(hazard)],
            vec![self.n_bins()],
            self.prior(),
        )
    }

    /// Conditional standard deviation at a predicted amplitude.
    pub fn sigma(&self, rhat: f64) -> f64 {
        self.sigma_c.eval(rhat)
    }

    /// Inverse-CDF draw of `ε` from the standard normal truncated to bin
    /// `k`, driven by a uniform variate.
    pub fn sample_in_bin(&self, k: usize, u: f64) -> f64 {
        let (a, b) = self.bin_bounds(k);
        let p_lo = norm_cdf(a);
        let p_hi = norm_cdf(b);
        norm_inv_cdf(p_lo + u * (p_hi - p_lo))
    }
}

/// Monte-Carlo settings for CPT construction.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McsConfig {
    /// Draws per parent-bin combination.
    pub n_sim: usize,
    /// Base seed; each parent combination uses its own stream.
    pub seed: u64,
    /// Minimum parent combinations per parallel work unit.
    pub chunk: usize,
}

impl Default for McsConfig {
    fn default() -> Self {
        Self {
            n_sim: 100,
            seed: 0,
            chunk: 256,
        }
    }
}

impl McsConfig {
    fn validate(&self) -> Result<(), SurrogateError> {
        if self.n_sim == 0 {
            return Err(SurrogateError::ZeroSims);
        }
        Ok(())
    }
}

/// Out-of-range tally from one CPT build.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct ClampReport {
    /// Draws whose response fell outside the bin range and were tallied
    /// into an edge bin.
    pub clamped: u64,
    /// All draws.
    pub total: u64,
}

impl ClampReport {
    pub fn fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.clamped as f64 / self.total as f64
        }
    }

    /// True when the clamped fraction exceeds the reporting budget.
    pub fn exceeds_budget(&self) -> bool {
        self.fraction() > CLAMP_BUDGET
    }
}

fn uniform_in(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    lo + rng.random::<f64>() * (hi - lo)
}

/// Builds the predicted-response table `p(r̂ | δp, v_f, r_max, θ, x₀)` for
/// hazard `hazard` by stratified Monte Carlo: for every parent-bin
/// combination, `n_sim` storms are drawn uniformly inside the four
/// continuous bin interiors (the landfall index is categorical), the model
/// is evaluated, and predictions are tallied into the predicted-response
/// bins.
///
/// Out-of-range predictions clamp into the edge bins and are counted in
/// the report. Rows sum to 1 exactly. Deterministic for a fixed seed and
/// independent of thread count: every combination owns an RNG stream and
/// results merge in index order.
pub fn build_rhat_cpt(
    model: &dyn ResponseModel,
    bins: &BinScheme,
    rbins: &ResponseBinScheme,
    cfg: &McsConfig,
    hazard: usize,
) -> Result<(Factor, ClampReport), SurrogateError> {
    cfg.validate()?;
    let (nd, nv, nr, nt, nx) = (
        bins.dp().n_bins(),
        bins.vf().n_bins(),
        bins.rmax().n_bins(),
        bins.theta().n_bins(),
        bins.n_x0(),
    );
    let n_combos = nd * nv * nr * nt * nx;
    let n_rhat = rbins.rhat().n_bins();

    let rows: Result<Vec<(Vec<f64>, u64)>, SurrogateError> = (0..n_combos)
        .into_par_iter()
        .with_min_len(cfg.chunk.max(1))
        .map(|combo| {
            // Decode with the landfall index fastest, matching the scope
            // order below.
            let x = combo % nx;
            let rest = combo / nx;
            let t = rest % nt;
            let rest = rest / nt;
            let r = rest % nr;
            let rest = rest / nr;
            let v = rest % nv;
            let d = rest / nv;

            let (d_lo, d_hi) = bins.dp().bounds(d);
            let (v_lo, v_hi) = bins.vf().bounds(v);
            let (r_lo, r_hi) = bins.rmax().bounds(r);
            let (t_lo, t_hi) = bins.theta().bounds(t);

            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(combo as u64);
            let mut counts = vec![0u32; n_rhat];
            let mut clamped = 0u64;
            for _ in 0..cfg.n_sim {
                let inputs = StormInputs {
                    dp: uniform_in(&mut rng, d_lo, d_hi),
                    vf: uniform_in(&mut rng, v_lo, v_hi),
                    rmax: uniform_in(&mut rng, r_lo, r_hi),
                    theta_deg: uniform_in(&mut rng, t_lo, t_hi),
                    x0: x,
                };
                let pred = model.predict(&inputs);
                if !pred.is_finite() {
                    return Err(SurrogateError::NonFinitePrediction {
                        label: model.label().to_string(),
                        dp: inputs.dp,
                        vf: inputs.vf,
                        rmax: inputs.rmax,
                        theta: inputs.theta_deg,
                        x0: x,
                    });
                }
                let (k, cl) = rbins.rhat().bin_of_clamped(pred);
                counts[k] += 1;
                clamped += cl as u64;
            }
            let row: Vec<f64> = counts
                .iter()
                .map(|c| *c as f64 / cfg.n_sim as f64)
                .collect();
            Ok((row, clamped))
        })
        .collect();
    let rows = rows?;

    let mut values = Vec::with_capacity(n_combos * n_rhat);
    let mut clamped = 0u64;
    for (row, cl) in rows {
        values.extend_from_slice(&row);
        clamped += cl;
    }
    let scope = vec![
        VarId::from(nodes::DP),
        VarId::from(nodes::VF),
        VarId::from(nodes::RMAX),
        VarId::from(nodes::THETA),
        VarId::from(nodes::X0),
        nodes::rhat(hazard),
    ];
    let cards = vec![nd, nv, nr, nt, nx, n_rhat];
    let factor = Factor::new(scope, cards, values)?;
    Ok((
        factor,
        ClampReport {
            clamped,
            total: (n_combos * cfg.n_sim) as u64,
        },
    ))
}

/// Builds the actual-response table `p(r | r̂, ε)` for hazard `hazard`:
/// for every (predicted bin, error bin) pair, draw the predicted amplitude
/// uniformly in its bin and the error from the standard normal truncated
/// to its bin, compose `r = r̂ + ε·σ_c(r̂)`, and tally actual-response
/// bins.
pub fn build_r_cpt(
    err: &ErrorModel,
    rbins: &ResponseBinScheme,
    cfg: &McsConfig,
    hazard: usize,
) -> Result<(Factor, ClampReport), SurrogateError> {
    cfg.validate()?;
    let n_rhat = rbins.rhat().n_bins();
    let n_eps = err.n_bins();
    let n_r = rbins.r().n_bins();
    let n_combos = n_rhat * n_eps;

    let rows: Vec<(Vec<f64>, u64)> = (0..n_combos)
        .into_par_iter()
        .with_min_len(cfg.chunk.max(1))
        .map(|combo| {
            let k_eps = combo % n_eps;
            let k_rhat = combo / n_eps;
            let (lo, hi) = rbins.rhat().bounds(k_rhat);
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            rng.set_stream(R_CPT_STREAM_BASE + combo as u64);
            let mut counts = vec![0u32; n_r];
            let mut clamped = 0u64;
            for _ in 0..cfg.n_sim {
                let rhat = uniform_in(&mut rng, lo, hi);
                let eps = err.sample_in_bin(k_eps, rng.random::<f64>());
                let r = rhat + eps * err.sigma(rhat);
                let (k, cl) = rbins.r().bin_of_clamped(r);
                counts[k] += 1;
                clamped += cl as u64;
            }
            let row: Vec<f64> = counts
                .iter()
                .map(|c| *c as f64 / cfg.n_sim as f64)
                .collect();
            (row, clamped)
        })
        .collect();

    let mut values = Vec::with_capacity(n_combos * n_r);
    let mut clamped = 0u64;
    for (row, cl) in rows {
        values.extend_from_slice(&row);
        clamped += cl;
    }
    let scope = vec![nodes::rhat(hazard), nodes::epsilon(hazard), nodes::response(hazard)];
    let cards = vec![n_rhat, n_eps, n_r];
    let factor = Factor::new(scope, cards, values)?;
    Ok((
        factor,
        ClampReport {
            clamped,
            total: (n_combos * cfg.n_sim) as u64,
        },
    ))
}
