//! Great-circle distance and radius membership.
//!
//! The haversine evaluation order here is mirrored term for term by the
//! distance formula embedded in generated workbooks (see
//! [`crate::xlsx::haversine_formula`]), so both produce bit-identical
//! distances for the same inputs.

use thiserror::Error;

use crate::index::{BlockRecord, BoundingBox, CountyNode};

/// IUGG mean Earth radius.
pub const EARTH_RADIUS_KM: f64 = 6371.0088;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid point ({lon}, {lat})")]
    InvalidPoint { lon: f64, lat: f64 },
    #[error("invalid radius {0} km")]
    InvalidRadius(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Result<Self, GeometryError> {
        let ok = lon.is_finite()
            && lat.is_finite()
            && (-180.0..=180.0).contains(&lon)
            && (-90.0..=90.0).contains(&lat);
        if ok {
            Ok(GeoPoint { lon, lat })
        } else {
            Err(GeometryError::InvalidPoint { lon, lat })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiusQuery {
    pub center: GeoPoint,
    pub radius_km: f64,
}

impl RadiusQuery {
    pub fn new(center: GeoPoint, radius_km: f64) -> Result<Self, GeometryError> {
        if radius_km.is_finite() && radius_km >= 0.0 {
            Ok(RadiusQuery { center, radius_km })
        } else {
            Err(GeometryError::InvalidRadius(radius_km))
        }
    }
}

pub fn bbox_center(b: &BoundingBox) -> GeoPoint {
    GeoPoint {
        lon: (b.x_min + b.x_max) / 2.0,
        lat: (b.y_min + b.y_max) / 2.0,
    }
}

/// Haversine distance in kilometres.
pub fn haversine_km(a: GeoPoint, b: GeoPoint) -> f64 {
    let lat1 = a.lat.to_radians();
    let lat2 = b.lat.to_radians();
    let half_dlat = (lat2 - lat1) / 2.0;
    let half_dlon = (b.lon.to_radians() - a.lon.to_radians()) / 2.0;
    let h = half_dlat.sin().powf(2.0) + lat1.cos() * lat2.cos() * half_dlon.sin().powf(2.0);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Blocks of `county` whose bbox center is within the query radius, in GEOID order.
pub fn blocks_within_radius<'a>(county: &'a CountyNode, q: &RadiusQuery) -> Vec<&'a BlockRecord> {
    // Great-circle distance is never shorter than the meridian arc between the
    // two latitudes, so anything outside this band is certainly out of range.
    // The margin keeps rounding from excluding a boundary case.
    let band_deg = (q.radius_km / EARTH_RADIUS_KM).to_degrees() * (1.0 + 1e-9) + 1e-9;
    let mut hits: Vec<&BlockRecord> = county
        .blocks
        .iter()
        .filter(|b| {
            let c = bbox_center(&b.bbox);
            (c.lat - q.center.lat).abs() <= band_deg && haversine_km(q.center, c) <= q.radius_km
        })
        .collect();
    hits.sort_by(|a, b| a.full_fips.cmp(&b.full_fips));
    hits
}

/// Totals over a set of blocks.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AggregateDemographics {
    pub blocks: usize,
    pub population: u64,
    pub under_15: u64,
    pub over_65: u64,
    /// Population-weighted mean density; 0 when the population is 0.
    pub mean_density: f64,
    /// Unweighted mean of the block median ages; 0 for an empty set.
    pub mean_of_median_ages: f64,
}

pub fn aggregate_demographics<'a, I>(blocks: I) -> AggregateDemographics
where
    I: IntoIterator<Item = &'a BlockRecord>,
{
    let mut agg = AggregateDemographics::default();
    let mut weighted_density = 0.0;
    let mut age_sum = 0.0;
    for b in blocks {
        agg.blocks += 1;
        agg.population += b.demo.population;
        agg.under_15 += b.demo.under_15;
        agg.over_65 += b.demo.over_65;
        weighted_density += b.demo.population as f64 * b.demo.density;
        age_sum += b.demo.median_age;
    }
    if agg.population > 0 {
        agg.mean_density = weighted_density / agg.population as f64;
    }
    if agg.blocks > 0 {
        agg.mean_of_median_ages = age_sum / agg.blocks as f64;
    }
    agg
}
