//! Hierarchical country → state → county → block-group boundary index.
//!
//! The index is built once from a flat list of [`BuildRecord`]s and is read-only
//! afterwards. Siblings are always kept in ascending FIPS order, so every
//! traversal of the index is deterministic.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

/// Slack allowed when checking that vertices and child boxes sit inside a box.
pub const CONTAINMENT_TOLERANCE: f64 = 1e-6;

/// Rings whose first and last vertices differ by at most this much are closed.
pub const RING_CLOSURE_TOLERANCE: f64 = 1e-9;

const STATE_DIGITS: usize = 2;
const COUNTY_DIGITS: usize = 3;
const BLOCK_DIGITS: usize = 7;
pub const FIPS_LEN: usize = STATE_DIGITS + COUNTY_DIGITS + BLOCK_DIGITS;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IndexError {
    #[error("no records supplied")]
    EmptyInput,
    #[error("duplicate FIPS {0}")]
    DuplicateFips(String),
    #[error("malformed FIPS {0:?}: expected {FIPS_LEN} decimal digits")]
    MalformedFips(String),
    #[error("FIPS component out of range: {0}")]
    FipsComponentRange(String),
    #[error("{fips}: vertex ({lon}, {lat}) lies outside the declared bounding box")]
    GeometryOutOfBbox { fips: String, lon: f64, lat: f64 },
    #[error("{fips}: {reason}")]
    InvalidGeometry { fips: String, reason: String },
    #[error("{fips}: invalid bounding box: {reason}")]
    InvalidBbox { fips: String, reason: String },
    #[error("{fips}: invalid demographics: {reason}")]
    InvalidDemographics { fips: String, reason: String },
    #[error("{child}: bounding box not contained in parent {parent}")]
    ContainmentViolation { child: String, parent: String },
    #[error("{child}: parent {parent} is not present")]
    MissingParent { child: String, parent: String },
}

/// Axis-aligned box in geographic degrees.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundingBox {
    pub x_min: f64,
    pub x_max: f64,
    pub y_min: f64,
    pub y_max: f64,
}

impl BoundingBox {
    pub fn new(x_min: f64, x_max: f64, y_min: f64, y_max: f64) -> Self {
        BoundingBox {
            x_min,
            x_max,
            y_min,
            y_max,
        }
    }

    /// Checks ordering, finiteness and the lon/lat ranges.
    pub fn validate(&self) -> Result<(), String> {
        let all = [self.x_min, self.x_max, self.y_min, self.y_max];
        if all.iter().any(|v| !v.is_finite()) {
            return Err("non-finite coordinate".into());
        }
        if self.x_min > self.x_max || self.y_min > self.y_max {
            return Err(format!("min exceeds max in {self}"));
        }
        if self.x_min < -180.0 || self.x_max > 180.0 {
            return Err(format!("longitude outside [-180, 180] in {self}"));
        }
        if self.y_min < -90.0 || self.y_max > 90.0 {
            return Err(format!("latitude outside [-90, 90] in {self}"));
        }
        Ok(())
    }

    pub fn contains_point(&self, lon: f64, lat: f64, tol: f64) -> bool {
        lon >= self.x_min - tol
            && lon <= self.x_max + tol
            && lat >= self.y_min - tol
            && lat <= self.y_max + tol
    }

    pub fn contains_box(&self, other: &BoundingBox, tol: f64) -> bool {
        other.x_min >= self.x_min - tol
            && other.x_max <= self.x_max + tol
            && other.y_min >= self.y_min - tol
            && other.y_max <= self.y_max + tol
    }

    pub fn as_array(&self) -> [f64; 4] {
        [self.x_min, self.x_max, self.y_min, self.y_max]
    }
}

impl fmt::Display for BoundingBox {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "[{} {} {} {}]",
            self.x_min, self.x_max, self.y_min, self.y_max
        )
    }
}

/// Polygon vertices stored as flat longitude/latitude arrays.
///
/// Multi-ring polygons keep all rings in the same arrays; `ring_starts` marks
/// the offset at which each ring begins (the first entry is always 0).
#[derive(Debug, Clone, PartialEq, Default)]
pub struct PolygonGeometry {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    pub ring_starts: Vec<usize>,
}

impl PolygonGeometry {
    pub fn from_rings<I, R>(rings: I) -> Self
    where
        I: IntoIterator<Item = R>,
        R: IntoIterator<Item = (f64, f64)>,
    {
        let mut geom = PolygonGeometry::default();
        for ring in rings {
            geom.ring_starts.push(geom.x.len());
            for (lon, lat) in ring {
                geom.x.push(lon);
                geom.y.push(lat);
            }
        }
        geom
    }

    /// A closed axis-aligned rectangle, counter-clockwise from the south-west corner.
    pub fn rectangle(b: &BoundingBox) -> Self {
        Self::from_rings([[
            (b.x_min, b.y_min),
            (b.x_max, b.y_min),
            (b.x_max, b.y_max),
            (b.x_min, b.y_max),
            (b.x_min, b.y_min),
        ]])
    }

    pub fn ring_count(&self) -> usize {
        self.ring_starts.len()
    }

    /// Iterates over rings as `(longitudes, latitudes)` slice pairs.
    pub fn rings(&self) -> impl Iterator<Item = (&[f64], &[f64])> + '_ {
        (0..self.ring_starts.len()).map(move |i| {
            let start = self.ring_starts[i];
            let end = self
                .ring_starts
                .get(i + 1)
                .copied()
                .unwrap_or(self.x.len());
            (&self.x[start..end], &self.y[start..end])
        })
    }

    pub fn vertices(&self) -> impl Iterator<Item = (f64, f64)> + '_ {
        self.x.iter().copied().zip(self.y.iter().copied())
    }

    /// Tight envelope of every vertex, or `None` when there are none.
    pub fn envelope(&self) -> Option<BoundingBox> {
        let mut it = self.vertices();
        let (lon, lat) = it.next()?;
        let mut b = BoundingBox::new(lon, lon, lat, lat);
        for (lon, lat) in it {
            b.x_min = b.x_min.min(lon);
            b.x_max = b.x_max.max(lon);
            b.y_min = b.y_min.min(lat);
            b.y_max = b.y_max.max(lat);
        }
        Some(b)
    }

    /// Structural checks: at least one ring, each ring closed with ≥ 4 finite vertices.
    pub fn validate(&self) -> Result<(), String> {
        if self.x.len() != self.y.len() {
            return Err(format!(
                "coordinate arrays differ in length ({} vs {})",
                self.x.len(),
                self.y.len()
            ));
        }
        if self.ring_starts.first() != Some(&0) {
            return Err("geometry has no rings".into());
        }
        if self.ring_starts.windows(2).any(|w| w[0] >= w[1])
            || self.ring_starts.last().is_some_and(|&s| s >= self.x.len())
        {
            return Err("ring offsets are not strictly increasing".into());
        }
        for (i, (xs, ys)) in self.rings().enumerate() {
            if xs.len() < 4 {
                return Err(format!("ring {i} has {} vertices, need at least 4", xs.len()));
            }
            if xs.iter().chain(ys).any(|v| !v.is_finite()) {
                return Err(format!("ring {i} has a non-finite coordinate"));
            }
            let n = xs.len() - 1;
            if (xs[0] - xs[n]).abs() > RING_CLOSURE_TOLERANCE
                || (ys[0] - ys[n]).abs() > RING_CLOSURE_TOLERANCE
            {
                return Err(format!("ring {i} is not closed"));
            }
        }
        Ok(())
    }
}

/// Per-block population figures.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Demographics {
    pub population: u64,
    pub median_age: f64,
    pub under_15: u64,
    pub over_65: u64,
    /// Persons per square mile.
    pub density: f64,
}

impl Demographics {
    pub fn validate(&self) -> Result<(), String> {
        if self.under_15 + self.over_65 > self.population {
            return Err(format!(
                "under_15 ({}) + over_65 ({}) exceeds population ({})",
                self.under_15, self.over_65, self.population
            ));
        }
        if !(self.median_age.is_finite() && self.median_age >= 0.0) {
            return Err(format!("median_age {} is not a finite non-negative value", self.median_age));
        }
        if !(self.density.is_finite() && self.density >= 0.0) {
            return Err(format!("density {} is not a finite non-negative value", self.density));
        }
        Ok(())
    }
}

/// A census block group.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockRecord {
    pub block_fp: u32,
    pub full_fips: String,
    pub bbox: BoundingBox,
    pub geometry: PolygonGeometry,
    pub demo: Demographics,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountyNode {
    pub county_fp: u16,
    pub name: String,
    pub bbox: BoundingBox,
    pub geometry: PolygonGeometry,
    pub blocks: Vec<BlockRecord>,
}

impl CountyNode {
    pub fn find_block(&self, full_fips: &str) -> Option<&BlockRecord> {
        self.blocks
            .binary_search_by(|b| b.full_fips.as_str().cmp(full_fips))
            .ok()
            .map(|i| &self.blocks[i])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateNode {
    pub state_fp: u8,
    pub name: String,
    pub bbox: BoundingBox,
    pub geometry: PolygonGeometry,
    pub counties: Vec<CountyNode>,
}

impl StateNode {
    pub fn find_county(&self, county_fp: u16) -> Option<&CountyNode> {
        self.counties
            .binary_search_by_key(&county_fp, |c| c.county_fp)
            .ok()
            .map(|i| &self.counties[i])
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DensityBounds {
    pub min: f64,
    pub max: f64,
}

/// The whole boundary and demographics hierarchy.
#[derive(Debug, Clone, PartialEq)]
pub struct CountryIndex {
    pub states: Vec<StateNode>,
    /// Persons per square mile over every block in the index; `(0, 0)` when
    /// the index has no blocks.
    pub density_bounds_absolute: DensityBounds,
}

/// Decomposed 12-digit block FIPS.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct FipsParts {
    pub state_fp: u8,
    pub county_fp: u16,
    pub block_fp: u32,
}

impl FipsParts {
    pub fn parse(full_fips: &str) -> Result<Self, IndexError> {
        if full_fips.len() != FIPS_LEN || !full_fips.bytes().all(|b| b.is_ascii_digit()) {
            return Err(IndexError::MalformedFips(full_fips.to_string()));
        }
        // digits only, so the numeric parses cannot fail
        let state_fp = full_fips[..STATE_DIGITS].parse().unwrap();
        let county_fp = full_fips[STATE_DIGITS..STATE_DIGITS + COUNTY_DIGITS]
            .parse()
            .unwrap();
        let block_fp = full_fips[STATE_DIGITS + COUNTY_DIGITS..].parse().unwrap();
        Ok(FipsParts {
            state_fp,
            county_fp,
            block_fp,
        })
    }

    pub fn format(&self) -> String {
        format!("{:02}{:03}{:07}", self.state_fp, self.county_fp, self.block_fp)
    }
}

/// Formats a block GEOID from numeric components, rejecting components that
/// do not fit the 2+3+7 digit layout.
pub fn format_block_fips(state_fp: u64, county_fp: u64, block_fp: u64) -> Result<String, IndexError> {
    if state_fp > 99 || county_fp > 999 || block_fp > 9_999_999 {
        return Err(IndexError::FipsComponentRange(format!(
            "state {state_fp}, county {county_fp}, block {block_fp}"
        )));
    }
    Ok(format!("{state_fp:02}{county_fp:03}{block_fp:07}"))
}

pub fn county_geoid(state_fp: u8, county_fp: u16) -> String {
    format!("{state_fp:02}{county_fp:03}")
}

/// One input record for [`build_index`].
#[derive(Debug, Clone, PartialEq)]
pub enum BuildRecord {
    State {
        state_fp: u8,
        name: Option<String>,
        bbox: Option<BoundingBox>,
        geometry: PolygonGeometry,
    },
    County {
        state_fp: u8,
        county_fp: u16,
        name: Option<String>,
        bbox: Option<BoundingBox>,
        geometry: PolygonGeometry,
    },
    Block {
        full_fips: String,
        bbox: Option<BoundingBox>,
        geometry: PolygonGeometry,
        demo: Demographics,
    },
}

fn resolve_bbox(
    fips: &str,
    declared: Option<BoundingBox>,
    geometry: &PolygonGeometry,
) -> Result<BoundingBox, IndexError> {
    geometry.validate().map_err(|reason| IndexError::InvalidGeometry {
        fips: fips.to_string(),
        reason,
    })?;
    let bbox = match declared {
        Some(b) => {
            for (lon, lat) in geometry.vertices() {
                if !b.contains_point(lon, lat, CONTAINMENT_TOLERANCE) {
                    return Err(IndexError::GeometryOutOfBbox {
                        fips: fips.to_string(),
                        lon,
                        lat,
                    });
                }
            }
            b
        }
        // validate() guarantees at least four vertices
        None => geometry.envelope().expect("validated geometry has vertices"),
    };
    bbox.validate().map_err(|reason| IndexError::InvalidBbox {
        fips: fips.to_string(),
        reason,
    })?;
    Ok(bbox)
}

/// Builds the index from a flat record list. Records may arrive in any order.
pub fn build_index(records: Vec<BuildRecord>) -> Result<CountryIndex, IndexError> {
    if records.is_empty() {
        return Err(IndexError::EmptyInput);
    }

    let mut states: BTreeMap<u8, StateNode> = BTreeMap::new();
    let mut counties: BTreeMap<(u8, u16), CountyNode> = BTreeMap::new();
    let mut blocks: BTreeMap<String, (FipsParts, BlockRecord)> = BTreeMap::new();

    for record in records {
        match record {
            BuildRecord::State {
                state_fp,
                name,
                bbox,
                geometry,
            } => {
                let fips = format!("{state_fp:02}");
                if state_fp > 99 {
                    return Err(IndexError::FipsComponentRange(fips));
                }
                if states.contains_key(&state_fp) {
                    return Err(IndexError::DuplicateFips(fips));
                }
                let bbox = resolve_bbox(&fips, bbox, &geometry)?;
                states.insert(
                    state_fp,
                    StateNode {
                        state_fp,
                        name: name.unwrap_or_else(|| format!("State_{fips}")),
                        bbox,
                        geometry,
                        counties: Vec::new(),
                    },
                );
            }
            BuildRecord::County {
                state_fp,
                county_fp,
                name,
                bbox,
                geometry,
            } => {
                let fips = county_geoid(state_fp, county_fp);
                if state_fp > 99 || county_fp > 999 {
                    return Err(IndexError::FipsComponentRange(fips));
                }
                if counties.contains_key(&(state_fp, county_fp)) {
                    return Err(IndexError::DuplicateFips(fips));
                }
                let bbox = resolve_bbox(&fips, bbox, &geometry)?;
                counties.insert(
                    (state_fp, county_fp),
                    CountyNode {
                        county_fp,
                        name: name.unwrap_or_else(|| format!("County_{county_fp:03}")),
                        bbox,
                        geometry,
                        blocks: Vec::new(),
                    },
                );
            }
            BuildRecord::Block {
                full_fips,
                bbox,
                geometry,
                demo,
            } => {
                let parts = FipsParts::parse(&full_fips)?;
                if blocks.contains_key(&full_fips) {
                    return Err(IndexError::DuplicateFips(full_fips));
                }
                let bbox = resolve_bbox(&full_fips, bbox, &geometry)?;
                demo.validate()
                    .map_err(|reason| IndexError::InvalidDemographics {
                        fips: full_fips.clone(),
                        reason,
                    })?;
                let record = BlockRecord {
                    block_fp: parts.block_fp,
                    full_fips: full_fips.clone(),
                    bbox,
                    geometry,
                    demo,
                };
                blocks.insert(full_fips, (parts, record));
            }
        }
    }

    let mut density: Option<DensityBounds> = None;

    // BTreeMap iteration is ascending by FIPS string, which keeps each county's
    // block list sorted as it is filled.
    for (fips, (parts, block)) in blocks {
        let county = counties
            .get_mut(&(parts.state_fp, parts.county_fp))
            .ok_or_else(|| IndexError::MissingParent {
                child: fips.clone(),
                parent: county_geoid(parts.state_fp, parts.county_fp),
            })?;
        if !county.bbox.contains_box(&block.bbox, CONTAINMENT_TOLERANCE) {
            return Err(IndexError::ContainmentViolation {
                child: fips,
                parent: county_geoid(parts.state_fp, parts.county_fp),
            });
        }
        let d = block.demo.density;
        density = Some(match density {
            None => DensityBounds { min: d, max: d },
            Some(b) => DensityBounds {
                min: b.min.min(d),
                max: b.max.max(d),
            },
        });
        county.blocks.push(block);
    }

    for ((state_fp, county_fp), county) in counties {
        let child = county_geoid(state_fp, county_fp);
        let state = states
            .get_mut(&state_fp)
            .ok_or_else(|| IndexError::MissingParent {
                child: child.clone(),
                parent: format!("{state_fp:02}"),
            })?;
        if !state.bbox.contains_box(&county.bbox, CONTAINMENT_TOLERANCE) {
            return Err(IndexError::ContainmentViolation {
                child,
                parent: format!("{state_fp:02}"),
            });
        }
        state.counties.push(county);
    }

    Ok(CountryIndex {
        states: states.into_values().collect(),
        density_bounds_absolute: density.unwrap_or(DensityBounds { min: 0.0, max: 0.0 }),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct EntityCounts {
    pub states: usize,
    pub counties: usize,
    pub blocks: usize,
}

impl fmt::Display for EntityCounts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "states={} counties={} blocks={}",
            self.states, self.counties, self.blocks
        )
    }
}

impl CountryIndex {
    pub fn find_state(&self, state_fp: u8) -> Option<&StateNode> {
        self.states
            .binary_search_by_key(&state_fp, |s| s.state_fp)
            .ok()
            .map(|i| &self.states[i])
    }

    /// Resolves a county by its five-digit GEOID.
    pub fn find_county(&self, geoid: &str) -> Option<(&StateNode, &CountyNode)> {
        if geoid.len() != STATE_DIGITS + COUNTY_DIGITS || !geoid.bytes().all(|b| b.is_ascii_digit()) {
            return None;
        }
        let state_fp: u8 = geoid[..STATE_DIGITS].parse().ok()?;
        let county_fp: u16 = geoid[STATE_DIGITS..].parse().ok()?;
        let state = self.find_state(state_fp)?;
        Some((state, state.find_county(county_fp)?))
    }

    /// Finds a block by GEOID, descending state → county → block.
    pub fn lookup_block(&self, full_fips: &str) -> Result<Option<&BlockRecord>, IndexError> {
        let parts = FipsParts::parse(full_fips)?;
        Ok(self
            .find_state(parts.state_fp)
            .and_then(|s| s.find_county(parts.county_fp))
            .and_then(|c| c.find_block(full_fips)))
    }

    pub fn entity_counts(&self) -> EntityCounts {
        let counties = self.states.iter().map(|s| s.counties.len()).sum();
        let blocks = self.counties().map(|(_, c)| c.blocks.len()).sum();
        EntityCounts {
            states: self.states.len(),
            counties,
            blocks,
        }
    }

    /// Every county paired with its state, in ascending FIPS order.
    pub fn counties(&self) -> impl Iterator<Item = (&StateNode, &CountyNode)> + '_ {
        self.states
            .iter()
            .flat_map(|s| s.counties.iter().map(move |c| (s, c)))
    }

    pub fn blocks(&self) -> impl Iterator<Item = &BlockRecord> + '_ {
        self.counties().flat_map(|(_, c)| c.blocks.iter())
    }
}
