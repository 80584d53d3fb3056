//! Shared numerical helpers: standard-normal utilities, Bessel functions,
//! rank statistics, interpolation, and root bracketing.

use statrs::distribution::{ContinuousCDF, Normal};

/// Standard normal CDF, accurate to near machine precision.
///
/// The bulk uses the all-positive-term confluent series for the error
/// function (no cancellation); the tails switch to a continued fraction
/// for the complementary error function so small probabilities keep
/// relative accuracy.
pub fn norm_cdf(z: f64) -> f64 {
    let t = z * std::f64::consts::FRAC_1_SQRT_2;
    if t.abs() <= 3.0 {
        0.5 * (1.0 + erf_series(t))
    } else if t > 0.0 {
        1.0 - 0.5 * erfc_tail(t)
    } else {
        0.5 * erfc_tail(-t)
    }
}

/// erf via the confluent series `erf(x) = 2x e^{-x²}/√π · Σ (2x²)ⁿ/(2n+1)!!`.
/// Every term is positive, so there is no cancellation; used for |x| ≤ 3.
fn erf_series(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for n in 1..200 {
        term *= 2.0 * x2 / (2.0 * n as f64 + 1.0);
        sum += term;
        if term < sum * 1e-17 {
            break;
        }
    }
    2.0 * x * (-x2).exp() / std::f64::consts::PI.sqrt() * sum
}

/// erfc for x ≥ 3 via the continued fraction
/// `erfc(x) = e^{-x²}/√π / (x + (1/2)/(x + 1/(x + (3/2)/(x + …))))`,
/// evaluated by stable backward recurrence.
fn erfc_tail(x: f64) -> f64 {
    let mut val = x;
    for n in (1..=80).rev() {
        val = x + (n as f64 / 2.0) / val;
    }
    (-x * x).exp() / std::f64::consts::PI.sqrt() / val
}

/// Standard normal quantile function.
///
/// `u` is clamped away from 0 and 1 so callers feeding in Monte-Carlo
/// uniforms never receive an infinity. The library quantile is polished
/// with Newton steps against the (erf-based, high-precision) CDF so the
/// round-trip `norm_cdf(norm_inv_cdf(u))` holds to near machine precision.
pub fn norm_inv_cdf(u: f64) -> f64 {
    let u = u.clamp(1e-300, 1.0 - 1e-16);
    let mut z = Normal::standard().inverse_cdf(u);
    for _ in 0..2 {
        let density = norm_pdf(z);
        if density < 1e-290 {
            break;
        }
        z -= (norm_cdf(z) - u) / density;
    }
    z
}

/// Standard normal density.
pub fn norm_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Modified Bessel function of the first kind, order zero.
///
/// Power series; converges quickly for the concentration parameters used by
/// the directional kernel (|x| well below 20).
pub fn bessel_i0(x: f64) -> f64 {
    let q = 0.25 * x * x;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..200 {
        term *= q / ((k * k) as f64);
        sum += term;
        if term < sum * 1e-16 {
            break;
        }
    }
    sum
}

/// Kendall rank-correlation coefficient (tau-a), via Knight's merge-sort
/// counting of discordant pairs in O(n log n).
///
/// Ties are not expected for continuous draws and are counted as concordant
/// by this estimator. Returns `None` for fewer than two observations.
pub fn kendall_tau(xs: &[f64], ys: &[f64]) -> Option<f64> {
    let n = xs.len();
    if n != ys.len() || n < 2 {
        return None;
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| xs[a].total_cmp(&xs[b]).then(ys[a].total_cmp(&ys[b])));
    let mut seq: Vec<f64> = idx.iter().map(|&i| ys[i]).collect();
    let mut buf = vec![0.0; n];
    let discordant = merge_count_inversions(&mut seq, &mut buf);
    let pairs = (n as u64 * (n as u64 - 1) / 2) as f64;
    Some(1.0 - 2.0 * discordant as f64 / pairs)
}

/// Counts inversions in `seq` by bottom-up merge sort, using `buf` as
/// scratch space of the same length. `seq` is sorted in place.
fn merge_count_inversions(seq: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = seq.len();
    let mut inversions = 0u64;
    let mut width = 1;
    while width < n {
        let mut lo = 0;
        while lo + width < n {
            let mid = lo + width;
            let hi = usize::min(lo + 2 * width, n);
            inversions += merge_halves(&mut seq[lo..hi], mid - lo, buf);
            lo = hi;
        }
        width *= 2;
    }
    inversions
}

fn merge_halves(seq: &mut [f64], mid: usize, buf: &mut [f64]) -> u64 {
    let n = seq.len();
    let buf = &mut buf[..n];
    let (mut i, mut j, mut k) = (0usize, mid, 0usize);
    let mut inversions = 0u64;
    while i < mid && j < n {
        if seq[i] <= seq[j] {
            buf[k] = seq[i];
            i += 1;
        } else {
            buf[k] = seq[j];
            j += 1;
            inversions += (mid - i) as u64;
        }
        k += 1;
    }
    while i < mid {
        buf[k] = seq[i];
        i += 1;
        k += 1;
    }
    while j < n {
        buf[k] = seq[j];
        j += 1;
        k += 1;
    }
    seq.copy_from_slice(buf);
    inversions
}

/// Piecewise-linear interpolant over strictly increasing knots.
///
/// Evaluation clamps to the end values outside the knot range.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct PiecewiseLinear {
    xs: Vec<f64>,
    ys: Vec<f64>,
}

impl PiecewiseLinear {
    /// Builds an interpolant from `(x, y)` knots. Fails if fewer than one
    /// knot is given or the abscissae are not strictly increasing.
    pub fn new(knots: &[(f64, f64)]) -> Result<Self, PiecewiseError> {
        if knots.is_empty() {
            return Err(PiecewiseError::Empty);
        }
        for w in knots.windows(2) {
            if !(w[1].0 > w[0].0) {
                return Err(PiecewiseError::NotIncreasing {
                    left: w[0].0,
                    right: w[1].0,
                });
            }
        }
        Ok(Self {
            xs: knots.iter().map(|k| k.0).collect(),
            ys: knots.iter().map(|k| k.1).collect(),
        })
    }

    /// Interpolated value at `x`, clamped to the end knots outside the range.
    pub fn eval(&self, x: f64) -> f64 {
        let n = self.xs.len();
        if x <= self.xs[0] {
            return self.ys[0];
        }
        if x >= self.xs[n - 1] {
            return self.ys[n - 1];
        }
        let hi = self.xs.partition_point(|&k| k <= x);
        let (x0, x1) = (self.xs[hi - 1], self.xs[hi]);
        let (y0, y1) = (self.ys[hi - 1], self.ys[hi]);
        y0 + (y1 - y0) * (x - x0) / (x1 - x0)
    }

    /// Knot abscissae.
    pub fn xs(&self) -> &[f64] {
        &self.xs
    }

    /// Knot ordinates.
    pub fn ys(&self) -> &[f64] {
        &self.ys
    }
}

/// Errors from building a [`PiecewiseLinear`].
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PiecewiseError {
    #[error("piecewise-linear interpolant needs at least one knot")]
    Empty,
    #[error("piecewise-linear knots must be strictly increasing ({left} !< {right})")]
    NotIncreasing { left: f64, right: f64 },
}

/// Minimizes `f` from `x0` by the Nelder–Mead simplex method (standard
/// reflection/expansion/contraction/shrink coefficients 1, 2, ½, ½).
///
/// Returns the best vertex after `max_iter` iterations or once the spread
/// of simplex function values falls below `tol`. Intended for small, smooth
/// problems such as two-parameter maximum-likelihood fits.
pub fn nelder_mead(
    f: impl Fn(&[f64]) -> f64,
    x0: &[f64],
    initial_step: f64,
    max_iter: usize,
    tol: f64,
) -> Vec<f64> {
    let n = x0.len();
    let mut simplex: Vec<Vec<f64>> = Vec::with_capacity(n + 1);
    simplex.push(x0.to_vec());
    for k in 0..n {
        let mut v = x0.to_vec();
        v[k] += initial_step;
        simplex.push(v);
    }
    let mut values: Vec<f64> = simplex.iter().map(|v| f(v)).collect();

    for _ in 0..max_iter {
        // Order vertices by value.
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
        simplex = idx.iter().map(|&i| simplex[i].clone()).collect();
        values = idx.iter().map(|&i| values[i]).collect();
        if (values[n] - values[0]).abs() < tol {
            break;
        }
        // Centroid of all but the worst vertex.
        let centroid: Vec<f64> = (0..n)
            .map(|k| simplex[..n].iter().map(|v| v[k]).sum::<f64>() / n as f64)
            .collect();
        let blend = |t: f64| -> Vec<f64> {
            (0..n)
                .map(|k| centroid[k] + t * (centroid[k] - simplex[n][k]))
                .collect()
        };
        let reflected = blend(1.0);
        let fr = f(&reflected);
        if fr < values[0] {
            let expanded = blend(2.0);
            let fe = f(&expanded);
            if fe < fr {
                simplex[n] = expanded;
                values[n] = fe;
            } else {
                simplex[n] = reflected;
                values[n] = fr;
            }
        } else if fr < values[n - 1] {
            simplex[n] = reflected;
            values[n] = fr;
        } else {
            let contracted = blend(-0.5);
            let fc = f(&contracted);
            if fc < values[n] {
                simplex[n] = contracted;
                values[n] = fc;
            } else {
                // Shrink toward the best vertex.
                let best = simplex[0].clone();
                for v in simplex.iter_mut().skip(1) {
                    for k in 0..n {
                        v[k] = best[k] + 0.5 * (v[k] - best[k]);
                    }
                }
                for (v, slot) in simplex.iter().zip(values.iter_mut()).skip(1) {
                    *slot = f(v);
                }
            }
        }
    }
    let best = (0..=n)
        .min_by(|&a, &b| values[a].total_cmp(&values[b]))
        .expect("simplex is non-empty");
    simplex[best].clone()
}

/// Finds `x` in `[lo, hi]` with `f(x) = target` by bisection, assuming `f`
/// is nondecreasing. Returns the midpoint after the bracket shrinks below
/// `tol` (or 200 iterations).
pub fn bisect_increasing(mut lo: f64, mut hi: f64, target: f64, tol: f64, f: impl Fn(f64) -> f64) -> f64 {
    for _ in 0..200 {
        if hi - lo < tol {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if f(mid) < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}
