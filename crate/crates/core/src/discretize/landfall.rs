//! Landfall-location grid and straight-line track geometry.
//!
//! Landfall points are equally spaced longitude cell centers along a
//! reference latitude; each point carries equal prior probability. A storm
//! is described by the point it crosses and its heading, which together
//! define a straight track in a local flat-earth approximation around the
//! reference latitude.

use serde::{Deserialize, Serialize};

use crate::bn::{Factor, FactorError, VarId};
use crate::nodes;

/// Kilometers per degree of latitude (and of longitude at the equator).
pub const KM_PER_DEG: f64 = 111.195;

/// Errors from landfall-grid construction and track geometry.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum LandfallError {
    #[error("reference latitude {0} must lie strictly between -90 and 90")]
    BadLatitude(f64),
    #[error("longitude span [{west}, {east}] must be finite with west < east")]
    BadSpan { west: f64, east: f64 },
    #[error("landfall grid needs at least one point, got {0}")]
    TooFewPoints(usize),
    #[error("heading {0} degrees is too close to east-west for a crossing track")]
    SteepHeading(f64),
    #[error(transparent)]
    Factor(#[from] FactorError),
}

/// Configuration of the landfall segment: a latitude, a longitude span,
/// and how many equal cells to split it into.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LandfallConfig {
    pub ref_lat_deg: f64,
    pub lon_west_deg: f64,
    pub lon_east_deg: f64,
    pub n_points: usize,
}

impl LandfallConfig {
    /// The standard segment: latitude 29.5, longitudes -93 to -86, 14
    /// half-degree cells.
    pub fn standard() -> Self {
        Self {
            ref_lat_deg: 29.5,
            lon_west_deg: -93.0,
            lon_east_deg: -86.0,
            n_points: 14,
        }
    }
}

/// The constructed landfall grid: cell-center longitudes along the
/// reference latitude.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LandfallGeometry {
    ref_lat_deg: f64,
    spacing_deg: f64,
    points: Vec<f64>,
}

impl LandfallGeometry {
    pub fn ref_lat_deg(&self) -> f64 {
        self.ref_lat_deg
    }

    /// Width of one cell in degrees of longitude.
    pub fn spacing_deg(&self) -> f64 {
        self.spacing_deg
    }

    /// Cell-center longitudes, west to east.
    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn n_points(&self) -> usize {
        self.points.len()
    }

    /// Longitude of point `k`.
    pub fn lon_center(&self, k: usize) -> f64 {
        self.points[k]
    }

    /// Straight track through point `k` with the given heading.
    pub fn track(&self, k: usize, heading_deg: f64) -> Result<TrackLine, LandfallError> {
        TrackLine::new(self.ref_lat_deg, self.points[k], heading_deg)
    }
}

/// Builds the landfall grid and its uniform probability table.
pub fn build_landfall(cfg: &LandfallConfig) -> Result<(LandfallGeometry, Factor), LandfallError> {
    if !cfg.ref_lat_deg.is_finite() || cfg.ref_lat_deg.abs() >= 90.0 {
        return Err(LandfallError::BadLatitude(cfg.ref_lat_deg));
    }
    if !cfg.lon_west_deg.is_finite()
        || !cfg.lon_east_deg.is_finite()
        || cfg.lon_west_deg >= cfg.lon_east_deg
    {
        return Err(LandfallError::BadSpan {
            west: cfg.lon_west_deg,
            east: cfg.lon_east_deg,
        });
    }
    if cfg.n_points == 0 {
        return Err(LandfallError::TooFewPoints(0));
    }
    let spacing = (cfg.lon_east_deg - cfg.lon_west_deg) / cfg.n_points as f64;
    let points: Vec<f64> = (0..cfg.n_points)
        .map(|k| cfg.lon_west_deg + spacing * (k as f64 + 0.5))
        .collect();
    let prob = Factor::new(
        vec![VarId::from(nodes::X0)],
        vec![cfg.n_points],
        vec![1.0 / cfg.n_points as f64; cfg.n_points],
    )?;
    Ok((
        LandfallGeometry {
            ref_lat_deg: cfg.ref_lat_deg,
            spacing_deg: spacing,
            points,
        },
        prob,
    ))
}

/// A straight storm track through a landfall point.
///
/// Headings are degrees clockwise from north: 0 is due north, positive
/// leans east. The track is a line in a flat-earth frame centered on the
/// landfall latitude, adequate over the few degrees a surge or rain
/// footprint spans.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackLine {
    pub origin_lat_deg: f64,
    pub origin_lon_deg: f64,
    pub heading_deg: f64,
}

impl TrackLine {
    /// Builds a track, rejecting headings within 5 degrees of east-west
    /// where the crossing-longitude geometry degenerates.
    pub fn new(
        origin_lat_deg: f64,
        origin_lon_deg: f64,
        heading_deg: f64,
    ) -> Result<Self, LandfallError> {
        if !heading_deg.is_finite() || heading_deg.abs() >= 85.0 {
            return Err(LandfallError::SteepHeading(heading_deg));
        }
        Ok(Self {
            origin_lat_deg,
            origin_lon_deg,
            heading_deg,
        })
    }

    /// Longitude where the track crosses the given latitude.
    pub fn lon_at_lat(&self, lat_deg: f64) -> f64 {
        let north_deg = lat_deg - self.origin_lat_deg;
        let east_km = north_deg * KM_PER_DEG * self.heading_deg.to_radians().tan();
        self.origin_lon_deg + east_km / (KM_PER_DEG * self.origin_lat_deg.to_radians().cos())
    }

    /// Signed east-west distance in kilometers from a site to the track,
    /// measured along the site's latitude. Positive means the track passes
    /// east of the site.
    pub fn east_offset_km(&self, site_lat_deg: f64, site_lon_deg: f64) -> f64 {
        let dlon = self.lon_at_lat(site_lat_deg) - site_lon_deg;
        dlon * KM_PER_DEG * self.origin_lat_deg.to_radians().cos()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn standard_grid_centers_and_uniform_probability() {
        let (geom, prob) = build_landfall(&LandfallConfig::standard()).unwrap();
        assert_eq!(geom.n_points(), 14);
        assert!((geom.spacing_deg() - 0.5).abs() < 1e-12);
        assert!((geom.lon_center(0) - (-92.75)).abs() < 1e-12);
        assert!((geom.lon_center(13) - (-86.25)).abs() < 1e-12);
        // Consecutive centers are spacing apart.
        for w in geom.points().windows(2) {
            assert!((w[1] - w[0] - 0.5).abs() < 1e-12);
        }
        assert_eq!(prob.values().len(), 14);
        for v in prob.values() {
            assert!((v - 1.0 / 14.0).abs() < 1e-15);
        }
    }

    #[test]
    fn config_validation_rejects_degenerate_segments() {
        let mut cfg = LandfallConfig::standard();
        cfg.n_points = 0;
        assert!(matches!(
            build_landfall(&cfg),
            Err(LandfallError::TooFewPoints(0))
        ));
        let mut cfg = LandfallConfig::standard();
        cfg.lon_west_deg = -86.0;
        cfg.lon_east_deg = -93.0;
        assert!(matches!(
            build_landfall(&cfg),
            Err(LandfallError::BadSpan { .. })
        ));
        let mut cfg = LandfallConfig::standard();
        cfg.ref_lat_deg = 90.0;
        assert!(matches!(
            build_landfall(&cfg),
            Err(LandfallError::BadLatitude(_))
        ));
    }

    #[test]
    fn due_north_track_keeps_its_longitude() {
        let (geom, _) = build_landfall(&LandfallConfig::standard()).unwrap();
        let track = geom.track(3, 0.0).unwrap();
        let x0 = geom.lon_center(3);
        for lat in [28.0, 29.5, 31.0, 33.0] {
            assert!((track.lon_at_lat(lat) - x0).abs() < 1e-12);
        }
    }

    #[test]
    fn slanted_track_shifts_east_going_north() {
        let (geom, _) = build_landfall(&LandfallConfig::standard()).unwrap();
        let track = geom.track(0, 45.0).unwrap();
        let x0 = geom.lon_center(0);
        // One degree north at 45 degrees: eastward displacement equals the
        // northward displacement in km, converted at the origin latitude.
        let expected = x0 + 1.0 / 29.5_f64.to_radians().cos();
        assert!((track.lon_at_lat(30.5) - expected).abs() < 1e-10);
        // Going south, the shift reverses.
        let expected = x0 - 1.0 / 29.5_f64.to_radians().cos();
        assert!((track.lon_at_lat(28.5) - expected).abs() < 1e-10);

        // Negative headings lean west instead.
        let track = geom.track(0, -45.0).unwrap();
        assert!(track.lon_at_lat(30.5) < x0);
    }

    #[test]
    fn east_offset_is_signed_and_scales_with_longitude() {
        let track = TrackLine::new(29.5, -90.0, 0.0).unwrap();
        // Track passes 1 degree east of a site at -91.
        let offset = track.east_offset_km(29.5, -91.0);
        let expected = KM_PER_DEG * 29.5_f64.to_radians().cos();
        assert!((offset - expected).abs() < 1e-9);
        // And west of a site at -89.
        assert!(track.east_offset_km(29.5, -89.0) < 0.0);
    }

    #[test]
    fn near_east_west_headings_are_rejected() {
        assert!(matches!(
            TrackLine::new(29.5, -90.0, 89.0),
            Err(LandfallError::SteepHeading(_))
        ));
        assert!(TrackLine::new(29.5, -90.0, 80.0).is_ok());
    }
}
