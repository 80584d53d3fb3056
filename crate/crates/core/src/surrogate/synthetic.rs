//! Built-in analytic response models for surge and rainfall.
//!
//! These stand in for externally trained surrogates so the full pipeline
//! can run self-contained. They are smooth closed forms chosen for
//! qualitative realism, not fidelity to any particular basin:
//!
//! * **Surge** grows with the pressure deficit, grows moderately with
//!   translation speed, peaks at a resonant storm size, and is strongest
//!   for tracks passing just west of the site (maximum winds east of the
//!   track).
//! * **Rainfall** grows with the pressure deficit and *falls* with
//!   translation speed — a slower storm has more time to accumulate — with
//!   a weaker size effect and a broader track-proximity footprint.

use serde::{Deserialize, Serialize};

use crate::discretize::landfall::{LandfallGeometry, TrackLine};

use super::{ResponseModel, StormInputs};

/// Site location and overall response scales for the analytic models.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SiteConfig {
    pub site_lat_deg: f64,
    pub site_lon_deg: f64,
    /// Peak surge scale in meters.
    pub surge_scale_m: f64,
    /// Peak rainfall scale in millimeters.
    pub rain_scale_mm: f64,
    /// Pressure deficit treated as the saturation intensity, in hPa.
    pub dp_ref_hpa: f64,
}

impl SiteConfig {
    /// A site on the study coastline with round response scales.
    pub fn standard() -> Self {
        Self {
            site_lat_deg: 29.95,
            site_lon_deg: -90.07,
            surge_scale_m: 9.5,
            rain_scale_mm: 230.0,
            dp_ref_hpa: 148.0,
        }
    }
}

/// Signed east-west distance from the site to the storm track, in
/// kilometers, positive when the track passes east of the site. Headings
/// are clamped below the steep-heading cutoff and the landfall index into
/// range, so the offset is defined for any input.
fn track_offset_km(geometry: &LandfallGeometry, site: &SiteConfig, x: &StormInputs) -> f64 {
    let k = x.x0.min(geometry.n_points() - 1);
    let heading = x.theta_deg.clamp(-84.0, 84.0);
    let track = TrackLine::new(geometry.ref_lat_deg(), geometry.lon_center(k), heading)
        .expect("heading clamped below the steep-heading cutoff");
    track.east_offset_km(site.site_lat_deg, site.site_lon_deg)
}

/// Analytic storm-surge model, in meters.
#[derive(Debug, Clone)]
pub struct SyntheticSurge {
    geometry: LandfallGeometry,
    site: SiteConfig,
}

impl SyntheticSurge {
    pub fn new(geometry: LandfallGeometry, site: SiteConfig) -> Self {
        Self { geometry, site }
    }
}

impl ResponseModel for SyntheticSurge {
    fn label(&self) -> &str {
        "surge"
    }

    fn unit(&self) -> &str {
        "m"
    }

    fn predict(&self, x: &StormInputs) -> f64 {
        let s = (x.dp / self.site.dp_ref_hpa).max(0.0);
        let intensity = s.powf(1.25);
        let speed = 0.75 + 0.3 * ((x.vf - 20.0) / 15.0).tanh();
        let size = (x.rmax / 60.0) * (1.0 - x.rmax / 60.0).exp();
        let offset = track_offset_km(&self.geometry, &self.site, x);
        // Peak response when the track passes half a storm size west of
        // the site, putting the strongest winds over it.
        let width = x.rmax + 40.0;
        let prox = (-((offset + 0.5 * x.rmax) / width).powi(2) / 2.0).exp();
        self.site.surge_scale_m * intensity * speed * size * prox
    }
}

/// Analytic rainfall-accumulation model, in millimeters.
#[derive(Debug, Clone)]
pub struct SyntheticRain {
    geometry: LandfallGeometry,
    site: SiteConfig,
}

impl SyntheticRain {
    pub fn new(geometry: LandfallGeometry, site: SiteConfig) -> Self {
        Self { geometry, site }
    }
}

impl ResponseModel for SyntheticRain {
    fn label(&self) -> &str {
        "rainfall"
    }

    fn unit(&self) -> &str {
        "mm"
    }

    fn predict(&self, x: &StormInputs) -> f64 {
        let s = (x.dp / self.site.dp_ref_hpa).max(0.0);
        let intensity = s.powf(1.1);
        // Slower storms rain longer over the same ground.
        let dwell = 0.35 + 0.65 * (-(x.vf - 5.0) / 25.0).exp();
        let size = 0.8 + 0.2 * (x.rmax / 140.0);
        let offset = track_offset_km(&self.geometry, &self.site, x);
        let width = 2.0 * x.rmax + 80.0;
        let prox = (-(offset / width).powi(2) / 2.0).exp();
        self.site.rain_scale_mm * intensity * dwell * size * prox
    }
}

/// Builds the paired surge and rainfall models around one landfall
/// geometry and site.
pub fn synthetic_models(
    geometry: &LandfallGeometry,
    site: &SiteConfig,
) -> (SyntheticSurge, SyntheticRain) {
    (
        SyntheticSurge::new(geometry.clone(), *site),
        SyntheticRain::new(geometry.clone(), *site),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::discretize::landfall::{build_landfall, LandfallConfig};

    fn setup() -> (SyntheticSurge, SyntheticRain) {
        let (geometry, _) = build_landfall(&LandfallConfig::standard()).unwrap();
        synthetic_models(&geometry, &SiteConfig::standard())
    }

    /// Domain-center inputs over the landfall point nearest the site.
    fn center() -> StormInputs {
        StormInputs {
            dp: 78.0,
            vf: 25.0,
            rmax: 60.0,
            theta_deg: 0.0,
            x0: 5, // -90.25, just west of the site at -90.07
        }
    }

    #[test]
    fn surge_increases_with_pressure_deficit() {
        let (surge, _) = setup();
        let x = center();
        let h = 1.0;
        let up = surge.predict(&StormInputs { dp: x.dp + h, ..x });
        let down = surge.predict(&StormInputs { dp: x.dp - h, ..x });
        assert!(
            up > down,
            "finite difference not positive: {up} vs {down}"
        );
        // And across the whole pressure range.
        let lo = surge.predict(&StormInputs { dp: 10.0, ..x });
        let hi = surge.predict(&StormInputs { dp: 146.0, ..x });
        assert!(hi > 4.0 * lo);
    }

    #[test]
    fn rain_decreases_with_translation_speed() {
        let (_, rain) = setup();
        let x = center();
        let slow = rain.predict(&StormInputs { vf: 10.0, ..x });
        let fast = rain.predict(&StormInputs { vf: 40.0, ..x });
        assert!(slow > fast, "slow {slow} should out-rain fast {fast}");
    }

    #[test]
    fn surge_increases_with_translation_speed() {
        let (surge, _) = setup();
        let x = center();
        let slow = surge.predict(&StormInputs { vf: 10.0, ..x });
        let fast = surge.predict(&StormInputs { vf: 40.0, ..x });
        assert!(fast > slow);
    }

    #[test]
    fn surge_is_unimodal_in_storm_size() {
        let (surge, _) = setup();
        let x = center();
        let small = surge.predict(&StormInputs { rmax: 15.0, ..x });
        let resonant = surge.predict(&StormInputs { rmax: 60.0, ..x });
        let large = surge.predict(&StormInputs { rmax: 135.0, ..x });
        assert!(resonant > small && resonant > large);
    }

    #[test]
    fn responses_peak_for_tracks_near_the_site() {
        let (surge, rain) = setup();
        let x = center();
        let near: f64 = (0..14)
            .map(|k| surge.predict(&StormInputs { x0: k, ..x }))
            .fold(0.0, f64::max);
        let far = surge.predict(&StormInputs { x0: 0, ..x });
        assert!(near > 2.0 * far, "near {near} vs far {far}");

        let near_rain: f64 = (0..14)
            .map(|k| rain.predict(&StormInputs { x0: k, ..x }))
            .fold(0.0, f64::max);
        let far_rain = rain.predict(&StormInputs { x0: 0, ..x });
        assert!(near_rain > far_rain);
    }

    #[test]
    fn outputs_are_finite_and_nonnegative_across_the_domain() {
        let (surge, rain) = setup();
        for dp in [8.0, 78.0, 148.0] {
            for vf in [5.0, 25.0, 60.0] {
                for rmax in [10.0, 70.0, 140.0] {
                    for theta in [-80.0, 0.0, 80.0] {
                        for x0 in [0, 7, 13] {
                            let x = StormInputs {
                                dp,
                                vf,
                                rmax,
                                theta_deg: theta,
                                x0,
                            };
                            for (m, v) in
                                [(&surge as &dyn ResponseModel, surge.predict(&x)), (&rain, rain.predict(&x))]
                            {
                                assert!(
                                    v.is_finite() && v >= 0.0,
                                    "{} produced {v} at {x:?}",
                                    m.label()
                                );
                            }
                        }
                    }
                }
            }
        }
    }

    /// Every prediction must reproduce the documented closed form exactly;
    /// this re-evaluates the formulas from scratch as an independent
    /// oracle.
    #[test]
    fn predictions_match_direct_formula_evaluation() {
        let (geometry, _) = build_landfall(&LandfallConfig::standard()).unwrap();
        let site = SiteConfig::standard();
        let (surge, rain) = synthetic_models(&geometry, &site);

        let cases = [
            center(),
            StormInputs {
                dp: 120.0,
                vf: 12.0,
                rmax: 35.0,
                theta_deg: -40.0,
                x0: 8,
            },
            StormInputs {
                dp: 30.0,
                vf: 45.0,
                rmax: 110.0,
                theta_deg: 60.0,
                x0: 2,
            },
        ];
        for x in cases {
            // Track offset rebuilt from first principles.
            let lat = 29.5_f64;
            let lon0 = -93.0 + 0.5 * (x.x0 as f64 + 0.5);
            let dlat = site.site_lat_deg - lat;
            let east_km = dlat * 111.195 * x.theta_deg.to_radians().tan();
            let lon_at_site = lon0 + east_km / (111.195 * lat.to_radians().cos());
            let offset = (lon_at_site - site.site_lon_deg) * 111.195 * lat.to_radians().cos();

            let s = x.dp / 148.0;
            let want_surge = 9.5
                * s.powf(1.25)
                * (0.75 + 0.3 * ((x.vf - 20.0) / 15.0).tanh())
                * ((x.rmax / 60.0) * (1.0 - x.rmax / 60.0).exp())
                * (-((offset + 0.5 * x.rmax) / (x.rmax + 40.0)).powi(2) / 2.0).exp();
            let got = surge.predict(&x);
            assert!(
                (got - want_surge).abs() < 1e-12 * want_surge.max(1.0),
                "surge {got} vs formula {want_surge}"
            );

            let want_rain = 230.0
                * s.powf(1.1)
                * (0.35 + 0.65 * (-(x.vf - 5.0) / 25.0).exp())
                * (0.8 + 0.2 * x.rmax / 140.0)
                * (-(offset / (2.0 * x.rmax + 80.0)).powi(2) / 2.0).exp();
            let got = rain.predict(&x);
            assert!(
                (got - want_rain).abs() < 1e-12 * want_rain.max(1.0),
                "rain {got} vs formula {want_rain}"
            );
        }
    }

    #[test]
    fn labels_and_units_identify_the_hazards() {
        let (surge, rain) = setup();
        assert_eq!(surge.label(), "surge");
        assert_eq!(surge.unit(), "m");
        assert_eq!(rain.label(), "rainfall");
        assert_eq!(rain.unit(), "mm");
    }
}
