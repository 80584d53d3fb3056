//! Monte-Carlo discretization of the continuous climatology onto a fixed
//! parameter grid, and conditionalization of the tallied joint into the
//! conditional probability tables used by the network.
//!
//! The storm-parameter grid covers four continuous axes — pressure deficit,
//! translation speed, storm size, and heading — plus a categorical landfall
//! location. Joint draws from the continuous model are tallied into grid
//! cells; draws falling outside the grid (for example headings outside the
//! modeled window) are rejected and the tally is normalized over accepted
//! draws, so every table below is conditional on the storm lying on the
//! grid.

pub mod landfall;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::bn::{Factor, FactorError, VarId};
use crate::climatology::{ClassLabel, IntensityClasses, StormClimatology};
use crate::nodes;

/// Fewest Monte-Carlo draws accepted per class tally.
pub const MIN_TALLY_SAMPLES: u64 = 100;

/// Relative tolerance used to match class boundaries to grid edges.
const EDGE_MATCH_TOL: f64 = 1e-9;

/// Errors from grid construction and discretization.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DiscretizeError {
    #[error("axis {axis} needs at least 2 edges, got {found}")]
    TooFewEdges { axis: &'static str, found: usize },
    #[error("axis {axis} edges must be finite and strictly increasing (violation at index {index})")]
    EdgesNotIncreasing { axis: &'static str, index: usize },
    #[error("landfall grid needs at least one point, got {0}")]
    NoLandfallPoints(usize),
    #[error("class boundary {boundary} hPa does not coincide with any pressure-deficit edge")]
    ClassBoundaryNotOnGrid { boundary: f64 },
    #[error(
        "pressure-deficit axis [{axis_lo}, {axis_hi}] must span the class domain [{domain_lo}, {domain_hi}]"
    )]
    DomainMismatch {
        axis_lo: f64,
        axis_hi: f64,
        domain_lo: f64,
        domain_hi: f64,
    },
    #[error("tally needs at least {minimum} samples, requested {requested}")]
    TooFewSamples { requested: u64, minimum: u64 },
    #[error("every draw for class {label} was rejected; the grid does not cover the class")]
    NothingAccepted { label: ClassLabel },
    #[error("cell table has {found} entries, expected {expected}")]
    WrongCellCount { expected: usize, found: usize },
    #[error("cell probabilities sum to {0}, expected 1 within 1e-9")]
    BadMass(f64),
    #[error("slice for class {label} carries mass outside the class's pressure-deficit bins")]
    SupportOutsideClass { label: ClassLabel },
    #[error("slices must be supplied in class order LI, MI, HI")]
    SlicesOutOfOrder,
    #[error("intensity prior {0:?} must be nonnegative and sum to 1 within 1e-9")]
    BadPrior([f64; 3]),
    #[error(transparent)]
    Factor(#[from] FactorError),
}

/// How an axis treats values at and beyond its last edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TopClosure {
    /// The last bin is `[e_{m-1}, e_m]`; values beyond the last edge are
    /// rejected. Used for axes whose edges are hard physical bounds.
    Closed,
    /// The last bin absorbs everything at or above its lower edge; the
    /// stored top edge only bounds in-bin sampling. Used for axes whose
    /// top edge is a high quantile rather than a hard bound.
    Open,
}

/// One binned axis: an increasing edge list plus a top-closure rule.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Axis {
    edges: Vec<f64>,
    top: TopClosure,
}

impl Axis {
    /// Builds an axis from `n_bins + 1` strictly increasing finite edges.
    pub fn new(
        name: &'static str,
        edges: Vec<f64>,
        top: TopClosure,
    ) -> Result<Self, DiscretizeError> {
        if edges.len() < 2 {
            return Err(DiscretizeError::TooFewEdges {
                axis: name,
                found: edges.len(),
            });
        }
        for (i, w) in edges.windows(2).enumerate() {
            if !w[0].is_finite() || !w[1].is_finite() || w[0] >= w[1] {
                return Err(DiscretizeError::EdgesNotIncreasing {
                    axis: name,
                    index: i + 1,
                });
            }
        }
        Ok(Self { edges, top })
    }

    /// Number of bins.
    pub fn n_bins(&self) -> usize {
        self.edges.len() - 1
    }

    /// The full edge list, including the top edge.
    pub fn edges(&self) -> &[f64] {
        &self.edges
    }

    /// Lower and upper edge of bin `k`.
    pub fn bounds(&self, k: usize) -> (f64, f64) {
        (self.edges[k], self.edges[k + 1])
    }

    /// Midpoint of bin `k`.
    pub fn midpoint(&self, k: usize) -> f64 {
        let (lo, hi) = self.bounds(k);
        0.5 * (lo + hi)
    }

    /// First edge.
    pub fn lo(&self) -> f64 {
        self.edges[0]
    }

    /// Last edge.
    pub fn hi(&self) -> f64 {
        *self.edges.last().unwrap()
    }

    /// Top-closure rule.
    pub fn top(&self) -> TopClosure {
        self.top
    }

    /// Bin containing `x`, or `None` when `x` falls off the grid.
    ///
    /// Bins are lower-inclusive. A closed axis accepts its last edge into
    /// the final bin and rejects beyond it; an open axis accepts anything
    /// at or above the final bin's lower edge.
    pub fn bin_of(&self, x: f64) -> Option<usize> {
        if !x.is_finite() || x < self.edges[0] {
            return None;
        }
        let m = self.n_bins();
        let k = self.edges.partition_point(|e| *e <= x);
        match self.top {
            TopClosure::Open => Some((k - 1).min(m - 1)),
            TopClosure::Closed => {
                if x > self.edges[m] {
                    None
                } else {
                    Some((k - 1).min(m - 1))
                }
            }
        }
    }
}

/// The full storm-parameter grid: four binned axes plus the landfall-point
/// count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BinScheme {
    dp: Axis,
    vf: Axis,
    rmax: Axis,
    theta: Axis,
    n_x0: usize,
}

impl BinScheme {
    /// Assembles a grid from the four axes and the landfall-point count.
    pub fn new(
        dp: Axis,
        vf: Axis,
        rmax: Axis,
        theta: Axis,
        n_x0: usize,
    ) -> Result<Self, DiscretizeError> {
        if n_x0 == 0 {
            return Err(DiscretizeError::NoLandfallPoints(n_x0));
        }
        Ok(Self {
            dp,
            vf,
            rmax,
            theta,
            n_x0,
        })
    }

    /// Checks that the pressure-deficit axis spans the class domain and
    /// that every class boundary lands on a grid edge, so each bin belongs
    /// to exactly one intensity class.
    pub fn validate_class_nesting(
        &self,
        classes: &IntensityClasses,
    ) -> Result<(), DiscretizeError> {
        let b = classes.boundaries();
        if !edges_match(self.dp.lo(), b[0]) || !edges_match(self.dp.hi(), b[3]) {
            return Err(DiscretizeError::DomainMismatch {
                axis_lo: self.dp.lo(),
                axis_hi: self.dp.hi(),
                domain_lo: b[0],
                domain_hi: b[3],
            });
        }
        for boundary in b {
            if !self.dp.edges.iter().any(|e| edges_match(*e, boundary)) {
                return Err(DiscretizeError::ClassBoundaryNotOnGrid { boundary });
            }
        }
        Ok(())
    }

    /// Range of pressure-deficit bins belonging to a class. Call only after
    /// [`Self::validate_class_nesting`] has passed.
    pub fn class_dp_bins(
        &self,
        classes: &IntensityClasses,
        label: ClassLabel,
    ) -> std::ops::Range<usize> {
        let c = classes.get(label);
        let pos = |b: f64| {
            self.dp
                .edges
                .iter()
                .position(|e| edges_match(*e, b))
                .expect("class boundary verified on grid")
        };
        pos(c.dp_lower)..pos(c.dp_upper)
    }

    pub fn dp(&self) -> &Axis {
        &self.dp
    }

    pub fn vf(&self) -> &Axis {
        &self.vf
    }

    pub fn rmax(&self) -> &Axis {
        &self.rmax
    }

    pub fn theta(&self) -> &Axis {
        &self.theta
    }

    /// Number of landfall points.
    pub fn n_x0(&self) -> usize {
        self.n_x0
    }

    /// Cells in the four-axis parameter tally (landfall excluded).
    pub fn n_cells(&self) -> usize {
        self.dp.n_bins() * self.vf.n_bins() * self.rmax.n_bins() * self.theta.n_bins()
    }

    /// Total parameter combinations including the landfall axis.
    pub fn n_combinations(&self) -> usize {
        3 * self.n_cells() * self.n_x0
    }

    /// Flat index of cell `(d, v, r, t)`, heading fastest.
    pub fn cell_index(&self, d: usize, v: usize, r: usize, t: usize) -> usize {
        ((d * self.vf.n_bins() + v) * self.rmax.n_bins() + r) * self.theta.n_bins() + t
    }
}

fn edges_match(a: f64, b: f64) -> bool {
    (a - b).abs() <= EDGE_MATCH_TOL * b.abs().max(1.0)
}

/// Draws rejected during a tally, by first offending coordinate.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize)]
pub struct RejectionCounts {
    pub dp: u64,
    pub vf: u64,
    pub rmax: u64,
    pub theta: u64,
}

impl RejectionCounts {
    /// Total rejected draws.
    pub fn total(&self) -> u64 {
        self.dp + self.vf + self.rmax + self.theta
    }
}

/// Tallied joint distribution of one intensity class over the four
/// parameter axes, normalized over accepted draws.
///
/// Values are laid out row-major over `(dp, vf, rmax, theta)` with heading
/// varying fastest, matching [`BinScheme::cell_index`].
#[derive(Debug, Clone)]
pub struct ClassJointSlice {
    pub label: ClassLabel,
    /// Raw accepted-draw counts per cell.
    pub counts: Vec<u64>,
    /// Accepted draws (the normalizer).
    pub accepted: u64,
    /// Draws requested, accepted plus rejected.
    pub requested: u64,
    /// Rejections by first offending coordinate.
    pub rejections: RejectionCounts,
    /// Cell probabilities, `counts / accepted`.
    pub probs: Vec<f64>,
    /// Per-cell binomial standard error `sqrt(p(1-p)/accepted)`.
    pub std_err: Vec<f64>,
}

impl ClassJointSlice {
    /// Wraps an externally specified cell table (no sampling noise), for
    /// analytically constructed distributions. Counts and standard errors
    /// are zero.
    pub fn from_probs(
        label: ClassLabel,
        bins: &BinScheme,
        probs: Vec<f64>,
    ) -> Result<Self, DiscretizeError> {
        if probs.len() != bins.n_cells() {
            return Err(DiscretizeError::WrongCellCount {
                expected: bins.n_cells(),
                found: probs.len(),
            });
        }
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(DiscretizeError::BadMass(sum));
        }
        let n = probs.len();
        Ok(Self {
            label,
            counts: vec![0; n],
            accepted: 0,
            requested: 0,
            rejections: RejectionCounts::default(),
            probs,
            std_err: vec![0.0; n],
        })
    }

    /// Fraction of requested draws that fell off the grid.
    pub fn rejection_fraction(&self) -> f64 {
        if self.requested == 0 {
            0.0
        } else {
            self.rejections.total() as f64 / self.requested as f64
        }
    }
}

/// Tallies `n_samples` joint draws for one intensity class into the grid.
///
/// Draws with any coordinate off the grid are rejected and counted; the
/// returned probabilities are normalized over accepted draws. The tally is
/// deterministic in `seed`, with a distinct stream per class so the same
/// seed may be reused across classes.
pub fn discretize_joint(
    clim: &StormClimatology,
    bins: &BinScheme,
    label: ClassLabel,
    n_samples: u64,
    seed: u64,
) -> Result<ClassJointSlice, DiscretizeError> {
    bins.validate_class_nesting(clim.classes())?;
    if n_samples < MIN_TALLY_SAMPLES {
        return Err(DiscretizeError::TooFewSamples {
            requested: n_samples,
            minimum: MIN_TALLY_SAMPLES,
        });
    }
    let class_bins = bins.class_dp_bins(clim.classes(), label);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(label.index() as u64);

    let mut counts = vec![0u64; bins.n_cells()];
    let mut rejections = RejectionCounts::default();
    let mut accepted = 0u64;
    for _ in 0..n_samples {
        let draw = clim.draw_one(label, &mut rng);
        // Class-truncated draws can land exactly on the class's upper
        // boundary, which the raw lookup would assign to the next class's
        // first bin; clamping into the class range keeps each slice's
        // support inside its own class.
        let Some(d) = bins.dp.bin_of(draw.dp) else {
            rejections.dp += 1;
            continue;
        };
        let d = d.clamp(class_bins.start, class_bins.end - 1);
        let Some(v) = bins.vf.bin_of(draw.vf) else {
            rejections.vf += 1;
            continue;
        };
        let Some(r) = bins.rmax.bin_of(draw.rmax) else {
            rejections.rmax += 1;
            continue;
        };
        let Some(t) = bins.theta.bin_of(draw.theta_deg) else {
            rejections.theta += 1;
            continue;
        };
        counts[bins.cell_index(d, v, r, t)] += 1;
        accepted += 1;
    }
    if accepted == 0 {
        return Err(DiscretizeError::NothingAccepted { label });
    }

    let n = accepted as f64;
    let probs: Vec<f64> = counts.iter().map(|c| *c as f64 / n).collect();
    let std_err: Vec<f64> = probs.iter().map(|p| (p * (1.0 - p) / n).sqrt()).collect();
    Ok(ClassJointSlice {
        label,
        counts,
        accepted,
        requested: n_samples,
        rejections,
        probs,
        std_err,
    })
}

/// The discretized joint over intensity class and the four parameter axes:
/// class prior times per-class cell tables.
#[derive(Debug, Clone)]
pub struct DiscreteJointTable {
    bins: BinScheme,
    classes: IntensityClasses,
    prior: [f64; 3],
    slices: [ClassJointSlice; 3],
}

impl DiscreteJointTable {
    /// Assembles the full joint, checking the prior, slice order and cell
    /// counts, and that each class's mass stays inside its own
    /// pressure-deficit bins.
    pub fn new(
        bins: BinScheme,
        classes: IntensityClasses,
        prior: [f64; 3],
        slices: [ClassJointSlice; 3],
    ) -> Result<Self, DiscretizeError> {
        bins.validate_class_nesting(&classes)?;
        let sum: f64 = prior.iter().sum();
        if prior.iter().any(|p| !p.is_finite() || *p < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(DiscretizeError::BadPrior(prior));
        }
        if slices
            .iter()
            .zip(ClassLabel::ALL)
            .any(|(s, want)| s.label != want)
        {
            return Err(DiscretizeError::SlicesOutOfOrder);
        }
        for slice in &slices {
            if slice.probs.len() != bins.n_cells() {
                return Err(DiscretizeError::WrongCellCount {
                    expected: bins.n_cells(),
                    found: slice.probs.len(),
                });
            }
            let range = bins.class_dp_bins(&classes, slice.label);
            for d in 0..bins.dp().n_bins() {
                if range.contains(&d) {
                    continue;
                }
                for v in 0..bins.vf().n_bins() {
                    for r in 0..bins.rmax().n_bins() {
                        for t in 0..bins.theta().n_bins() {
                            if slice.probs[bins.cell_index(d, v, r, t)] > 0.0 {
                                return Err(DiscretizeError::SupportOutsideClass {
                                    label: slice.label,
                                });
                            }
                        }
                    }
                }
            }
        }
        Ok(Self {
            bins,
            classes,
            prior,
            slices,
        })
    }

    pub fn bins(&self) -> &BinScheme {
        &self.bins
    }

    pub fn classes(&self) -> &IntensityClasses {
        &self.classes
    }

    pub fn prior(&self) -> [f64; 3] {
        self.prior
    }

    pub fn slice(&self, label: ClassLabel) -> &ClassJointSlice {
        &self.slices[label.index()]
    }

    /// The joint as a factor over `(i, dp, vf, rmax, theta)`, heading
    /// fastest. Sums to 1.
    pub fn to_factor(&self) -> Result<Factor, FactorError> {
        let n_cells = self.bins.n_cells();
        let mut values = Vec::with_capacity(3 * n_cells);
        for (k, slice) in self.slices.iter().enumerate() {
            values.extend(slice.probs.iter().map(|p| self.prior[k] * p));
        }
        let scope = vec![
            VarId::from(nodes::INTENSITY),
            VarId::from(nodes::DP),
            VarId::from(nodes::VF),
            VarId::from(nodes::RMAX),
            VarId::from(nodes::THETA),
        ];
        let cards = vec![
            3,
            self.bins.dp().n_bins(),
            self.bins.vf().n_bins(),
            self.bins.rmax().n_bins(),
            self.bins.theta().n_bins(),
        ];
        Factor::new(scope, cards, values)
    }
}

/// The conditional probability tables factored out of the discrete joint,
/// scoped `[parents..., child]` with the child varying fastest.
#[derive(Debug, Clone)]
pub struct CptSet {
    /// `p(i)` over the intensity class.
    pub intensity: Factor,
    /// `p(dp | i)`.
    pub dp_given_i: Factor,
    /// `p(vf | dp)`.
    pub vf_given_dp: Factor,
    /// `p(rmax | dp, vf)`.
    pub rmax_given_dp_vf: Factor,
    /// `p(theta | dp, vf, rmax)`.
    pub theta_given_dp_vf_rmax: Factor,
    /// `p(x0)`, uniform over landfall points.
    pub x0: Factor,
}

/// Parent rows with zero tallied mass, filled uniformly during
/// conditionalization. Indices are flat row indices over each table's
/// parent scope, last parent fastest.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize)]
pub struct ZeroMassReport {
    pub dp_given_i: Vec<usize>,
    pub vf_given_dp: Vec<usize>,
    pub rmax_given_dp_vf: Vec<usize>,
    pub theta_given_dp_vf_rmax: Vec<usize>,
}

impl ZeroMassReport {
    /// Total uniform-filled rows across all tables.
    pub fn total(&self) -> usize {
        self.dp_given_i.len()
            + self.vf_given_dp.len()
            + self.rmax_given_dp_vf.len()
            + self.theta_given_dp_vf_rmax.len()
    }

    /// True when no row needed filling.
    pub fn is_clean(&self) -> bool {
        self.total() == 0
    }
}

/// Factors the discrete joint into the chain
/// `p(i) p(dp|i) p(vf|dp) p(rmax|dp,vf) p(theta|dp,vf,rmax) p(x0)`.
///
/// Conditioning each table on the pressure-deficit bin rather than the
/// class is exact because the grid nests the class boundaries: the class is
/// a deterministic function of the bin. Parent rows with zero joint mass
/// get a uniform row (they are unreachable, so the fill never contributes)
/// and are reported.
pub fn conditionalize(
    table: &DiscreteJointTable,
) -> Result<(CptSet, ZeroMassReport), DiscretizeError> {
    let joint = table.to_factor()?;
    let i = VarId::from(nodes::INTENSITY);
    let dp = VarId::from(nodes::DP);
    let vf = VarId::from(nodes::VF);
    let rmax = VarId::from(nodes::RMAX);
    let theta = VarId::from(nodes::THETA);

    let intensity = Factor::new(vec![i.clone()], vec![3], table.prior().to_vec())?;
    let (dp_given_i, zr_dp) = conditional_table(&joint, &[i], &dp)?;
    let (vf_given_dp, zr_vf) = conditional_table(&joint, &[dp.clone()], &vf)?;
    let (rmax_given_dp_vf, zr_rmax) = conditional_table(&joint, &[dp.clone(), vf.clone()], &rmax)?;
    let (theta_given_dp_vf_rmax, zr_theta) = conditional_table(&joint, &[dp, vf, rmax], &theta)?;

    let n_x0 = table.bins().n_x0();
    let x0 = Factor::new(
        vec![VarId::from(nodes::X0)],
        vec![n_x0],
        vec![1.0 / n_x0 as f64; n_x0],
    )?;

    Ok((
        CptSet {
            intensity,
            dp_given_i,
            vf_given_dp,
            rmax_given_dp_vf,
            theta_given_dp_vf_rmax,
            x0,
        },
        ZeroMassReport {
            dp_given_i: zr_dp,
            vf_given_dp: zr_vf,
            rmax_given_dp_vf: zr_rmax,
            theta_given_dp_vf_rmax: zr_theta,
        },
    ))
}

/// Marginalizes the joint onto `[parents..., child]` and normalizes each
/// parent row, returning the conditional table and the uniform-filled rows.
fn conditional_table(
    joint: &Factor,
    parents: &[VarId],
    child: &VarId,
) -> Result<(Factor, Vec<usize>), DiscretizeError> {
    let mut keep: Vec<VarId> = parents.to_vec();
    keep.push(child.clone());
    let marg = joint.marginalize_onto(&keep)?;
    let child_card = *marg.cards().last().expect("child in scope");
    let mut values = marg.values().to_vec();
    let mut zero_rows = Vec::new();
    for (row, chunk) in values.chunks_mut(child_card).enumerate() {
        let mass: f64 = chunk.iter().sum();
        if mass <= 0.0 {
            zero_rows.push(row);
            chunk.fill(1.0 / child_card as f64);
        } else {
            for v in chunk.iter_mut() {
                *v /= mass;
            }
        }
    }
    let table = Factor::new(marg.scope().to_vec(), marg.cards().to_vec(), values)?;
    Ok((table, zero_rows))
}
