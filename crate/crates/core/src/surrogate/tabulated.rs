//! Response model backed by a precomputed CSV grid.
//!
//! The grid carries one row per knot: continuous coordinates for pressure
//! deficit, translation speed, and storm size; exact categorical levels
//! for heading and landfall index; and the response value. Queries
//! interpolate multilinearly across the three continuous axes at the
//! matching (heading, landfall) level.

use std::io::Read;

use serde::Deserialize;

use super::{ResponseModel, StormInputs};

/// Matching tolerance for heading levels.
const THETA_TOL: f64 = 1e-6;

/// Errors from loading or querying a tabulated model.
#[derive(Debug, thiserror::Error)]
pub enum TabulatedError {
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error("grid file contains no rows")]
    Empty,
    #[error("row {row} has a non-finite field")]
    NonFiniteField { row: usize },
    #[error("duplicate grid cell at dp={dp}, vf={vf}, rmax={rmax}, theta={theta}, x0={x0}")]
    DuplicateCell {
        dp: f64,
        vf: f64,
        rmax: f64,
        theta: f64,
        x0: usize,
    },
    #[error("grid is not rectangular: missing cell at dp={dp}, vf={vf}, rmax={rmax}, theta={theta}, x0={x0}")]
    MissingCell {
        dp: f64,
        vf: f64,
        rmax: f64,
        theta: f64,
        x0: usize,
    },
    #[error("landfall indices must cover 0..{expected}, missing {missing}")]
    MissingX0Level { expected: usize, missing: usize },
    #[error("axis {axis} needs at least 2 knots")]
    TooFewKnots { axis: &'static str },
    #[error("no heading level within {THETA_TOL} of {theta}")]
    MissingLevel { theta: f64 },
    #[error("landfall index {x0} out of range (grid has {n})")]
    BadIndex { x0: usize, n: usize },
    #[error("query {value} outside the {axis} hull [{lo}, {hi}]")]
    OutsideHull {
        axis: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
}

#[derive(Debug, Deserialize)]
struct GridRow {
    dp: f64,
    vf: f64,
    rmax: f64,
    theta: f64,
    x0: usize,
    value: f64,
}

/// A response model interpolated from a rectangular grid file.
#[derive(Debug, Clone)]
pub struct TabulatedModel {
    label: String,
    unit: String,
    dp_knots: Vec<f64>,
    vf_knots: Vec<f64>,
    rmax_knots: Vec<f64>,
    theta_levels: Vec<f64>,
    n_x0: usize,
    /// Values laid out `[theta][x0][dp][vf][rmax]`, size fastest.
    values: Vec<f64>,
}

/// Loads a tabulated model from CSV with columns
/// `dp, vf, rmax, theta, x0, value`.
pub fn tabulated_model(
    reader: impl Read,
    label: &str,
    unit: &str,
) -> Result<TabulatedModel, TabulatedError> {
    TabulatedModel::from_csv(reader, label, unit)
}

impl TabulatedModel {
    /// Parses and validates a rectangular grid: every combination of the
    /// observed knots and levels must appear exactly once.
    pub fn from_csv(reader: impl Read, label: &str, unit: &str) -> Result<Self, TabulatedError> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut rows = Vec::new();
        for (k, rec) in rdr.deserialize::<GridRow>().enumerate() {
            let row = rec?;
            if !(row.dp.is_finite()
                && row.vf.is_finite()
                && row.rmax.is_finite()
                && row.theta.is_finite()
                && row.value.is_finite())
            {
                return Err(TabulatedError::NonFiniteField { row: k + 1 });
            }
            rows.push(row);
        }
        if rows.is_empty() {
            return Err(TabulatedError::Empty);
        }

        let knots = |pick: fn(&GridRow) -> f64| -> Vec<f64> {
            let mut v: Vec<f64> = rows.iter().map(pick).collect();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let dp_knots = knots(|r| r.dp);
        let vf_knots = knots(|r| r.vf);
        let rmax_knots = knots(|r| r.rmax);
        let theta_levels = knots(|r| r.theta);
        for (axis, k) in [
            ("dp", &dp_knots),
            ("vf", &vf_knots),
            ("rmax", &rmax_knots),
        ] {
            if k.len() < 2 {
                return Err(TabulatedError::TooFewKnots { axis });
            }
        }
        let n_x0 = rows.iter().map(|r| r.x0).max().unwrap() + 1;
        for want in 0..n_x0 {
            if !rows.iter().any(|r| r.x0 == want) {
                return Err(TabulatedError::MissingX0Level {
                    expected: n_x0,
                    missing: want,
                });
            }
        }

        let (nd, nv, nr, nt) = (
            dp_knots.len(),
            vf_knots.len(),
            rmax_knots.len(),
            theta_levels.len(),
        );
        let mut values = vec![f64::NAN; nt * n_x0 * nd * nv * nr];
        let pos = |knots: &[f64], x: f64| knots.iter().position(|k| *k == x).unwrap();
        for row in &rows {
            let idx = (((pos(&theta_levels, row.theta) * n_x0 + row.x0) * nd
                + pos(&dp_knots, row.dp))
                * nv
                + pos(&vf_knots, row.vf))
                * nr
                + pos(&rmax_knots, row.rmax);
            if !values[idx].is_nan() {
                return Err(TabulatedError::DuplicateCell {
                    dp: row.dp,
                    vf: row.vf,
                    rmax: row.rmax,
                    theta: row.theta,
                    x0: row.x0,
                });
            }
            values[idx] = row.value;
        }
        if let Some(flat) = values.iter().position(|v| v.is_nan()) {
            // Decode the first hole for the error message.
            let r = flat % nr;
            let rest = flat / nr;
            let v = rest % nv;
            let rest = rest / nv;
            let d = rest % nd;
            let rest = rest / nd;
            let x = rest % n_x0;
            let t = rest / n_x0;
            return Err(TabulatedError::MissingCell {
                dp: dp_knots[d],
                vf: vf_knots[v],
                rmax: rmax_knots[r],
                theta: theta_levels[t],
                x0: x,
            });
        }

        Ok(Self {
            label: label.to_string(),
            unit: unit.to_string(),
            dp_knots,
            vf_knots,
            rmax_knots,
            theta_levels,
            n_x0,
            values,
        })
    }

    pub fn n_x0(&self) -> usize {
        self.n_x0
    }

    pub fn theta_levels(&self) -> &[f64] {
        &self.theta_levels
    }

    /// The continuous hull `[(dp_lo, dp_hi), (vf_lo, vf_hi), (rmax_lo,
    /// rmax_hi)]`.
    pub fn hull(&self) -> [(f64, f64); 3] {
        let span = |k: &[f64]| (k[0], *k.last().unwrap());
        [
            span(&self.dp_knots),
            span(&self.vf_knots),
            span(&self.rmax_knots),
        ]
    }

    /// Strict query: the heading must match a stored level, the landfall
    /// index must exist, and the continuous coordinates must lie inside
    /// the grid hull.
    pub fn try_predict(&self, x: &StormInputs) -> Result<f64, TabulatedError> {
        let t = self
            .theta_levels
            .iter()
            .position(|lvl| (lvl - x.theta_deg).abs() <= THETA_TOL)
            .ok_or(TabulatedError::MissingLevel { theta: x.theta_deg })?;
        if x.x0 >= self.n_x0 {
            return Err(TabulatedError::BadIndex {
                x0: x.x0,
                n: self.n_x0,
            });
        }
        for (axis, knots, value) in [
            ("dp", &self.dp_knots, x.dp),
            ("vf", &self.vf_knots, x.vf),
            ("rmax", &self.rmax_knots, x.rmax),
        ] {
            let (lo, hi) = (knots[0], *knots.last().unwrap());
            if value < lo || value > hi {
                return Err(TabulatedError::OutsideHull {
                    axis,
                    value,
                    lo,
                    hi,
                });
            }
        }
        Ok(self.interpolate(t, x.x0, x.dp, x.vf, x.rmax))
    }

    /// Bracketing knot index and interpolation weight along one axis,
    /// clamped into the hull.
    fn axis_weight(knots: &[f64], x: f64) -> (usize, f64) {
        let i = knots
            .partition_point(|k| *k <= x)
            .saturating_sub(1)
            .min(knots.len() - 2);
        let (a, b) = (knots[i], knots[i + 1]);
        let w = ((x - a) / (b - a)).clamp(0.0, 1.0);
        (i, w)
    }

    fn interpolate(&self, t: usize, x0: usize, dp: f64, vf: f64, rmax: f64) -> f64 {
        let (nd, nv, nr) = (
            self.dp_knots.len(),
            self.vf_knots.len(),
            self.rmax_knots.len(),
        );
        let (di, dw) = Self::axis_weight(&self.dp_knots, dp);
        let (vi, vw) = Self::axis_weight(&self.vf_knots, vf);
        let (ri, rw) = Self::axis_weight(&self.rmax_knots, rmax);
        let base = (t * self.n_x0 + x0) * nd;
        let at = |d: usize, v: usize, r: usize| {
            self.values[((base + d) * nv + v) * nr + r]
        };
        let mut acc = 0.0;
        for (dd, wd) in [(0, 1.0 - dw), (1, dw)] {
            for (dv, wv) in [(0, 1.0 - vw), (1, vw)] {
                for (dr, wr) in [(0, 1.0 - rw), (1, rw)] {
                    acc += wd * wv * wr * at(di + dd, vi + dv, ri + dr);
                }
            }
        }
        acc
    }
}

impl ResponseModel for TabulatedModel {
    fn label(&self) -> &str {
        &self.label
    }

    fn unit(&self) -> &str {
        &self.unit
    }

    /// Total query: the heading snaps to the nearest stored level, the
    /// landfall index and continuous coordinates clamp into the grid.
    /// Use [`TabulatedModel::try_predict`] to surface mismatches instead.
    fn predict(&self, x: &StormInputs) -> f64 {
        let t = self
            .theta_levels
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                (*a - x.theta_deg).abs().total_cmp(&(*b - x.theta_deg).abs())
            })
            .map(|(i, _)| i)
            .unwrap();
        let x0 = x.x0.min(self.n_x0 - 1);
        self.interpolate(t, x0, x.dp, x.vf, x.rmax)
    }
}
