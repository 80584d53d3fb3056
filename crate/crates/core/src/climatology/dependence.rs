//! Rank-dependence model: Kendall-τ matrices converted entrywise to a
//! Pearson correlation matrix, repaired to positive definiteness when
//! needed, and sampled through a Gaussian copula.

use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::stats::norm_cdf;

/// Errors from dependence-model construction.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DependenceError {
    #[error("Kendall matrix must be square, got {rows}×{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("Kendall matrix entry ({i},{j}) = {value} is outside [-1, 1]")]
    TauOutOfRange { i: usize, j: usize, value: f64 },
    #[error("Kendall matrix is not symmetric at ({i},{j}): {a} vs {b}")]
    NotSymmetric { i: usize, j: usize, a: f64, b: f64 },
    #[error("Kendall matrix diagonal entry {i} is {value}, expected 1")]
    BadDiagonal { i: usize, value: f64 },
    #[error("correlation matrix could not be made positive definite")]
    NotRepairable,
}

/// Converts a Kendall rank correlation to the Pearson correlation of the
/// underlying Gaussian copula, `ρ = sin(π·τ/2)`.
pub fn kendall_to_pearson(tau: f64) -> Result<f64, DependenceError> {
    if !tau.is_finite() || tau.abs() > 1.0 {
        return Err(DependenceError::TauOutOfRange {
            i: 0,
            j: 0,
            value: tau,
        });
    }
    Ok((std::f64::consts::FRAC_PI_2 * tau).sin())
}

/// Report of the positive-definiteness repair applied to a converted
/// correlation matrix.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct AdjustmentReport {
    /// Whether any eigenvalue clipping was required.
    pub adjusted: bool,
    /// Smallest eigenvalue of the raw converted matrix.
    pub min_eigenvalue: f64,
    /// Largest absolute entry change introduced by the repair.
    pub max_entry_delta: f64,
}

/// Gaussian-copula dependence model over an ordered set of variables.
#[derive(Debug, Clone, PartialEq)]
pub struct DependenceModel {
    kendall: DMatrix<f64>,
    pearson: DMatrix<f64>,
    chol_lower: DMatrix<f64>,
    adjustment: AdjustmentReport,
}

/// Eigenvalue floor used when clipping a non-positive-definite matrix.
const EIGEN_FLOOR: f64 = 1e-8;

impl DependenceModel {
    /// Builds the model from a symmetric Kendall-τ matrix with unit
    /// diagonal. The Pearson matrix is the entrywise `sin(π·τ/2)` image;
    /// if that is not positive definite it is repaired by eigenvalue
    /// clipping (floor 1e-8) followed by rescaling to unit diagonal, and
    /// the adjustment is reported.
    pub fn from_kendall(kendall_rows: &[Vec<f64>]) -> Result<Self, DependenceError> {
        let n = kendall_rows.len();
        for (i, row) in kendall_rows.iter().enumerate() {
            if row.len() != n {
                return Err(DependenceError::NotSquare {
                    rows: n,
                    cols: row.len(),
                });
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() || v.abs() > 1.0 {
                    return Err(DependenceError::TauOutOfRange { i, j, value: v });
                }
            }
            if (row[i] - 1.0).abs() > 1e-12 {
                return Err(DependenceError::BadDiagonal {
                    i,
                    value: row[i],
                });
            }
        }
        for i in 0..n {
            for j in (i + 1)..n {
                let (a, b) = (kendall_rows[i][j], kendall_rows[j][i]);
                if (a - b).abs() > 1e-12 {
                    return Err(DependenceError::NotSymmetric { i, j, a, b });
                }
            }
        }
        let kendall = DMatrix::from_fn(n, n, |i, j| kendall_rows[i][j]);
        let mut pearson = DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                1.0
            } else {
                (std::f64::consts::FRAC_PI_2 * kendall_rows[i][j]).sin()
            }
        });
        // Symmetrize exactly against float asymmetry in sin().
        for i in 0..n {
            for j in (i + 1)..n {
                let v = 0.5 * (pearson[(i, j)] + pearson[(j, i)]);
                pearson[(i, j)] = v;
                pearson[(j, i)] = v;
            }
        }

        let eigen = pearson.clone().symmetric_eigen();
        let min_eigenvalue = eigen.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let mut adjustment = AdjustmentReport {
            adjusted: false,
            min_eigenvalue,
            max_entry_delta: 0.0,
        };
        if min_eigenvalue < EIGEN_FLOOR {
            let mut clipped = eigen;
            for v in clipped.eigenvalues.iter_mut() {
                *v = v.max(EIGEN_FLOOR);
            }
            let mut repaired = clipped.recompose();
            // Rescale to a unit diagonal so it stays a correlation matrix.
            let d: Vec<f64> = (0..n).map(|i| repaired[(i, i)].sqrt()).collect();
            for i in 0..n {
                for j in 0..n {
                    repaired[(i, j)] /= d[i] * d[j];
                }
            }
            for i in 0..n {
                repaired[(i, i)] = 1.0;
                for j in (i + 1)..n {
                    let v = 0.5 * (repaired[(i, j)] + repaired[(j, i)]);
                    repaired[(i, j)] = v;
                    repaired[(j, i)] = v;
                }
            }
            let max_entry_delta = (0..n)
                .flat_map(|i| (0..n).map(move |j| (i, j)))
                .map(|(i, j)| (repaired[(i, j)] - pearson[(i, j)]).abs())
                .fold(0.0, f64::max);
            adjustment.adjusted = true;
            adjustment.max_entry_delta = max_entry_delta;
            pearson = repaired;
        }

        // Cholesky, with a small escalating ridge as a last resort (the
        // rescaling step can nudge the smallest eigenvalue below zero).
        let mut ridge = 0.0;
        let chol_lower = loop {
            let mut m = pearson.clone();
            if ridge > 0.0 {
                for i in 0..n {
                    m[(i, i)] += ridge;
                }
            }
            match nalgebra::Cholesky::new(m) {
                Some(c) => break c.l(),
                None => {
                    ridge = if ridge == 0.0 { 1e-12 } else { ridge * 10.0 };
                    if ridge > 1e-6 {
                        return Err(DependenceError::NotRepairable);
                    }
                }
            }
        };
        Ok(Self {
            kendall,
            pearson,
            chol_lower,
            adjustment,
        })
    }

    /// Identity dependence (independence copula) of dimension `n`.
    pub fn identity(n: usize) -> Self {
        let rows: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
            .collect();
        Self::from_kendall(&rows).expect("identity matrix is positive definite")
    }

    /// Number of variables.
    pub fn dim(&self) -> usize {
        self.pearson.nrows()
    }

    /// The configured Kendall-τ matrix.
    pub fn kendall(&self) -> &DMatrix<f64> {
        &self.kendall
    }

    /// The (possibly repaired) Pearson correlation matrix.
    pub fn pearson(&self) -> &DMatrix<f64> {
        &self.pearson
    }

    /// Details of any positive-definiteness repair.
    pub fn adjustment(&self) -> &AdjustmentReport {
        &self.adjustment
    }

    /// Draws one correlated standard-normal vector `z = L·g`.
    pub fn correlated_normals(&self, rng: &mut impl Rng) -> Vec<f64> {
        let n = self.dim();
        let g: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        (0..n)
            .map(|i| {
                let mut z = 0.0;
                for j in 0..=i {
                    z += self.chol_lower[(i, j)] * g[j];
                }
                z
            })
            .collect()
    }

    /// Draws one vector of copula uniforms `u_k = Φ(z_k)`, clamped away
    /// from 0 and 1 so downstream quantile functions stay finite.
    pub fn sample_uniforms(&self, rng: &mut impl Rng) -> Vec<f64> {
        self.correlated_normals(rng)
            .into_iter()
            .map(|z| norm_cdf(z).clamp(1e-16, 1.0 - 1e-16))
            .collect()
    }
}
