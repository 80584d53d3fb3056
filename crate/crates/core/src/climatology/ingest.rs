//! Historical storm-track ingestion: per-storm sample extraction around a
//! coastal reference location, distance weighting, and optional weighted
//! parameter fitting from the extracted samples.

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use super::marginal::{LognormalMarginal, Marginal, TruncatedWeibull};
use super::IntensityClasses;
use crate::stats::{kendall_tau, nelder_mead};

/// One storm-track record as read from CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackRow {
    pub storm_id: String,
    pub timestamp: String,
    pub lat: f64,
    pub lon: f64,
    pub dp_hpa: f64,
    pub vf_kmh: f64,
    pub rmax_km: f64,
    pub theta_deg: f64,
}

/// Capture zone around the coastal reference location (CRL).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudyRegion {
    pub crl_lat: f64,
    pub crl_lon: f64,
    pub capture_radius_km: f64,
}

/// One extracted storm sample: the storm's maximum-intensity track point
/// inside the capture zone, with its distance-derived weight.
#[derive(Debug, Clone, PartialEq)]
pub struct StormSample {
    pub dp: f64,
    pub vf: f64,
    pub rmax: f64,
    pub theta_deg: f64,
    pub distance_to_crl_km: f64,
    pub weight: f64,
}

/// A storm that produced no sample, with the reason.
#[derive(Debug, Clone, PartialEq)]
pub struct SkippedStorm {
    pub storm_id: String,
    pub reason: String,
}

/// Result of sample extraction.
#[derive(Debug, Clone, Default)]
pub struct IngestReport {
    pub samples: Vec<StormSample>,
    pub skipped: Vec<SkippedStorm>,
}

/// Errors from ingestion and prior computation.
#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("failed to read track CSV: {0}")]
    Csv(#[from] csv::Error),
    #[error("no samples provided")]
    NoSamples,
    #[error("total sample weight is zero")]
    ZeroTotalWeight,
    #[error("sample pressure deficit {0} falls outside every intensity class")]
    UnclassifiableSample(f64),
    #[error("capture radius must be positive, got {0}")]
    BadRadius(f64),
    #[error("distance bandwidth must be positive, got {0}")]
    BadBandwidth(f64),
}

/// Errors from weighted parameter fitting.
#[derive(Debug, thiserror::Error)]
pub enum FitError {
    #[error("fit requires at least {needed} observations, got {got}")]
    TooFew { needed: usize, got: usize },
    #[error("observation {0} is outside the admissible domain")]
    BadObservation(f64),
    #[error("weights must be nonnegative with positive total")]
    BadWeights,
    #[error("degenerate data: zero variance in log space")]
    Degenerate,
}

/// Great-circle distance in kilometres (haversine, mean Earth radius).
pub fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    const EARTH_RADIUS_KM: f64 = 6371.0088;
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = (lat2 - lat1).to_radians();
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * a.sqrt().atan2((1.0 - a).sqrt())
}

/// Reads storm-track rows from CSV with a header line.
pub fn read_track_rows<R: std::io::Read>(reader: R) -> Result<Vec<TrackRow>, IngestError> {
    let mut rdr = csv::Reader::from_reader(reader);
    let mut rows = Vec::new();
    for row in rdr.deserialize() {
        rows.push(row?);
    }
    Ok(rows)
}

/// Extracts one sample per storm: the maximum-ΔP track point within
/// `capture_radius_km` of the CRL, weighted by
/// `exp(−½·(d/bandwidth)²)` where `d` is the great-circle distance to the
/// CRL. Storms with no in-zone point, or whose selected point carries
/// invalid fields or a ΔP outside `dp_domain`, are skipped with a reason.
pub fn ingest_samples(
    rows: &[TrackRow],
    region: &StudyRegion,
    bandwidth_km: f64,
    dp_domain: (f64, f64),
) -> Result<IngestReport, IngestError> {
    if !(region.capture_radius_km > 0.0) {
        return Err(IngestError::BadRadius(region.capture_radius_km));
    }
    if !(bandwidth_km > 0.0) {
        return Err(IngestError::BadBandwidth(bandwidth_km));
    }
    let mut by_storm: IndexMap<&str, Vec<&TrackRow>> = IndexMap::new();
    for row in rows {
        by_storm.entry(row.storm_id.as_str()).or_default().push(row);
    }

    let mut report = IngestReport::default();
    for (storm_id, track) in by_storm {
        let in_zone: Vec<(&TrackRow, f64)> = track
            .iter()
            .map(|r| {
                (
                    *r,
                    haversine_km(r.lat, r.lon, region.crl_lat, region.crl_lon),
                )
            })
            .filter(|(_, d)| *d <= region.capture_radius_km)
            .collect();
        let Some((best, distance)) = in_zone
            .iter()
            .max_by(|(a, _), (b, _)| a.dp_hpa.total_cmp(&b.dp_hpa))
            .copied()
        else {
            report.skipped.push(SkippedStorm {
                storm_id: storm_id.to_string(),
                reason: "no track point within the capture radius".to_string(),
            });
            continue;
        };
        let fields = [best.dp_hpa, best.vf_kmh, best.rmax_km, best.theta_deg];
        if fields.iter().any(|v| !v.is_finite()) {
            report.skipped.push(SkippedStorm {
                storm_id: storm_id.to_string(),
                reason: "selected track point has non-finite fields".to_string(),
            });
            continue;
        }
        if best.dp_hpa < dp_domain.0 || best.dp_hpa > dp_domain.1 {
            report.skipped.push(SkippedStorm {
                storm_id: storm_id.to_string(),
                reason: format!(
                    "pressure deficit {} outside domain [{}, {}]",
                    best.dp_hpa, dp_domain.0, dp_domain.1
                ),
            });
            continue;
        }
        if best.vf_kmh <= 0.0 || best.rmax_km <= 0.0 || best.theta_deg.abs() > 180.0 {
            report.skipped.push(SkippedStorm {
                storm_id: storm_id.to_string(),
                reason: "selected track point has out-of-range fields".to_string(),
            });
            continue;
        }
        let weight = (-0.5 * (distance / bandwidth_km).powi(2)).exp();
        report.samples.push(StormSample {
            dp: best.dp_hpa,
            vf: best.vf_kmh,
            rmax: best.rmax_km,
            theta_deg: best.theta_deg,
            distance_to_crl_km: distance,
            weight,
        });
    }
    Ok(report)
}

/// Weighted class frequencies of the samples: `p(i)` over LI/MI/HI.
pub fn intensity_prior(
    samples: &[StormSample],
    classes: &IntensityClasses,
) -> Result<[f64; 3], IngestError> {
    if samples.is_empty() {
        return Err(IngestError::NoSamples);
    }
    let mut mass = [0.0; 3];
    for s in samples {
        let label = classes
            .classify(s.dp)
            .ok_or(IngestError::UnclassifiableSample(s.dp))?;
        mass[label.index()] += s.weight;
    }
    let total: f64 = mass.iter().sum();
    if !(total > 0.0) {
        return Err(IngestError::ZeroTotalWeight);
    }
    Ok([mass[0] / total, mass[1] / total, mass[2] / total])
}

fn check_weights(xs: &[f64], ws: &[f64], needed: usize) -> Result<f64, FitError> {
    if xs.len() < needed || xs.len() != ws.len() {
        return Err(FitError::TooFew {
            needed,
            got: xs.len().min(ws.len()),
        });
    }
    if ws.iter().any(|w| !w.is_finite() || *w < 0.0) {
        return Err(FitError::BadWeights);
    }
    let total: f64 = ws.iter().sum();
    if !(total > 0.0) {
        return Err(FitError::BadWeights);
    }
    Ok(total)
}

/// Weighted maximum-likelihood lognormal fit (closed form in log space).
pub fn fit_lognormal_weighted(xs: &[f64], ws: &[f64]) -> Result<LognormalMarginal, FitError> {
    let total = check_weights(xs, ws, 2)?;
    if let Some(&bad) = xs.iter().find(|x| !(**x > 0.0)) {
        return Err(FitError::BadObservation(bad));
    }
    let lambda: f64 = xs
        .iter()
        .zip(ws)
        .map(|(x, w)| w * x.ln())
        .sum::<f64>()
        / total;
    let var: f64 = xs
        .iter()
        .zip(ws)
        .map(|(x, w)| w * (x.ln() - lambda).powi(2))
        .sum::<f64>()
        / total;
    if !(var > 0.0) {
        return Err(FitError::Degenerate);
    }
    LognormalMarginal::new(lambda, var.sqrt()).map_err(|_| FitError::Degenerate)
}

/// Weighted maximum-likelihood truncated-Weibull fit on `[lower, upper]`,
/// by Nelder–Mead over (log scale, log shape).
pub fn fit_truncated_weibull_weighted(
    xs: &[f64],
    ws: &[f64],
    lower: f64,
    upper: f64,
) -> Result<TruncatedWeibull, FitError> {
    let total = check_weights(xs, ws, 3)?;
    if let Some(&bad) = xs.iter().find(|x| **x < lower || **x > upper) {
        return Err(FitError::BadObservation(bad));
    }
    let mean = xs.iter().zip(ws).map(|(x, w)| w * x).sum::<f64>() / total;
    let neg_log_lik = |p: &[f64]| -> f64 {
        let (scale, shape) = (p[0].exp(), p[1].exp());
        match TruncatedWeibull::new(scale, shape, lower, upper) {
            Ok(model) => -xs
                .iter()
                .zip(ws)
                .map(|(x, w)| w * model.pdf(*x).max(1e-300).ln())
                .sum::<f64>(),
            Err(_) => f64::INFINITY,
        }
    };
    let best = nelder_mead(neg_log_lik, &[mean.max(1e-6).ln(), 0.0], 0.4, 2000, 1e-12);
    TruncatedWeibull::new(best[0].exp(), best[1].exp(), lower, upper)
        .map_err(|_| FitError::Degenerate)
}

/// Pairwise Kendall-τ matrix over (ΔP, V_f, R_max, θ) from the samples.
///
/// Rank statistics are computed unweighted: the distance weighting enters
/// sample selection and the marginal fits, not the concordance counts.
pub fn fit_kendall_matrix(samples: &[StormSample]) -> Result<[[f64; 4]; 4], FitError> {
    if samples.len() < 2 {
        return Err(FitError::TooFew {
            needed: 2,
            got: samples.len(),
        });
    }
    let columns: [Vec<f64>; 4] = [
        samples.iter().map(|s| s.dp).collect(),
        samples.iter().map(|s| s.vf).collect(),
        samples.iter().map(|s| s.rmax).collect(),
        samples.iter().map(|s| s.theta_deg).collect(),
    ];
    let mut m = [[0.0; 4]; 4];
    for i in 0..4 {
        m[i][i] = 1.0;
        for j in (i + 1)..4 {
            let tau = kendall_tau(&columns[i], &columns[j]).ok_or(FitError::TooFew {
                needed: 2,
                got: samples.len(),
            })?;
            m[i][j] = tau;
            m[j][i] = tau;
        }
    }
    Ok(m)
}
