//! Boundary-bundle JSON format and synthetic dataset generation.
//!
//! A bundle is a single JSON document:
//!
//! ```json
//! {"format_version": 1, "entities": [
//!   {"kind": "state", "state_fp": 25, "name": "Massachusetts", "rings": [[[lon, lat], ...]]},
//!   {"kind": "county", "state_fp": 25, "county_fp": 17, "rings": [...]},
//!   {"kind": "block", "state_fp": 25, "county_fp": 17, "block_fp": 3531012,
//!    "bbox": [x_min, x_max, y_min, y_max], "rings": [...],
//!    "demographics": {"population": 1116, "median_age": 27.1, "under_15": 120,
//!                     "over_65": 45, "density": 13950.0}}
//! ]}
//! ```

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use serde_json::{json, Map, Value};
use thiserror::Error;

use crate::index::{
    format_block_fips, BoundingBox, BuildRecord, CountryIndex, Demographics, FipsParts,
    PolygonGeometry,
};

pub const FORMAT_VERSION: u64 = 1;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum IngestError {
    #[error("JSON syntax error at byte {offset}: {message}")]
    Syntax { offset: usize, message: String },
    #[error("schema error in {kind} entity {fips}: {message}")]
    Schema {
        kind: String,
        fips: String,
        message: String,
    },
    #[error("unsupported format_version {0}")]
    Version(u64),
    #[error("{child} references missing parent {parent}")]
    DanglingReference { child: String, parent: String },
    #[error("synthetic grid does not fit: {0}")]
    Capacity(String),
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
}

#[derive(Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum EntityDoc {
    State {
        state_fp: u64,
        name: Option<String>,
        bbox: Option<[f64; 4]>,
        rings: Vec<Vec<[f64; 2]>>,
    },
    County {
        state_fp: u64,
        county_fp: u64,
        name: Option<String>,
        bbox: Option<[f64; 4]>,
        rings: Vec<Vec<[f64; 2]>>,
    },
    Block {
        state_fp: u64,
        county_fp: u64,
        block_fp: u64,
        bbox: Option<[f64; 4]>,
        rings: Vec<Vec<[f64; 2]>>,
        demographics: DemographicsDoc,
    },
}

#[derive(Deserialize)]
struct DemographicsDoc {
    population: u64,
    median_age: f64,
    under_15: u64,
    over_65: u64,
    density: f64,
}

fn byte_offset(text: &str, line: usize, column: usize) -> usize {
    if line == 0 {
        return 0;
    }
    let line_start: usize = text
        .split_inclusive('\n')
        .take(line - 1)
        .map(str::len)
        .sum();
    (line_start + column.saturating_sub(1)).min(text.len())
}

/// Best-effort label for an entity that failed schema validation.
fn describe_entity(value: &Value) -> (String, String) {
    let kind = value
        .get("kind")
        .and_then(Value::as_str)
        .unwrap_or("unknown")
        .to_string();
    let part = |key: &str, width: usize| {
        value
            .get(key)
            .and_then(Value::as_u64)
            .map(|v| format!("{v:0width$}"))
    };
    let fips = [part("state_fp", 2), part("county_fp", 3), part("block_fp", 7)]
        .into_iter()
        .map_while(|p| p)
        .collect::<String>();
    (kind, if fips.is_empty() { "?".into() } else { fips })
}

fn geometry_from_rings(rings: Vec<Vec<[f64; 2]>>) -> PolygonGeometry {
    PolygonGeometry::from_rings(rings.into_iter().map(|r| r.into_iter().map(|[x, y]| (x, y))))
}

fn bbox_from_array(b: Option<[f64; 4]>) -> Option<BoundingBox> {
    b.map(|[x_min, x_max, y_min, y_max]| BoundingBox::new(x_min, x_max, y_min, y_max))
}

fn schema_err(kind: &str, fips: String, message: impl Into<String>) -> IngestError {
    IngestError::Schema {
        kind: kind.to_string(),
        fips,
        message: message.into(),
    }
}

/// Parses a bundle into records for [`crate::index::build_index`].
pub fn parse_bundle(bytes: &[u8]) -> Result<Vec<BuildRecord>, IngestError> {
    let text = std::str::from_utf8(bytes).map_err(|e| IngestError::Syntax {
        offset: e.valid_up_to(),
        message: "input is not valid UTF-8".into(),
    })?;
    let doc: Value = serde_json::from_str(text).map_err(|e| IngestError::Syntax {
        offset: byte_offset(text, e.line(), e.column()),
        message: e.to_string(),
    })?;
    let top = doc
        .as_object()
        .ok_or_else(|| schema_err("bundle", "-".into(), "top level must be an object"))?;
    let version = top
        .get("format_version")
        .ok_or_else(|| schema_err("bundle", "-".into(), "missing field `format_version`"))?
        .as_u64()
        .ok_or_else(|| schema_err("bundle", "-".into(), "`format_version` must be an unsigned integer"))?;
    if version != FORMAT_VERSION {
        return Err(IngestError::Version(version));
    }
    let entities = top
        .get("entities")
        .ok_or_else(|| schema_err("bundle", "-".into(), "missing field `entities`"))?
        .as_array()
        .ok_or_else(|| schema_err("bundle", "-".into(), "`entities` must be an array"))?;

    let mut records = Vec::with_capacity(entities.len());
    let mut states = BTreeSet::new();
    let mut counties = BTreeSet::new();
    let mut block_parents = Vec::new();

    for raw in entities {
        let entity: EntityDoc = EntityDoc::deserialize(raw).map_err(|e| {
            let (kind, fips) = describe_entity(raw);
            schema_err(&kind, fips, e.to_string())
        })?;
        let record = match entity {
            EntityDoc::State {
                state_fp,
                name,
                bbox,
                rings,
            } => {
                let fp = u8::try_from(state_fp)
                    .ok()
                    .filter(|v| *v <= 99)
                    .ok_or_else(|| schema_err("state", state_fp.to_string(), "state_fp exceeds 2 digits"))?;
                states.insert(fp);
                BuildRecord::State {
                    state_fp: fp,
                    name,
                    bbox: bbox_from_array(bbox),
                    geometry: geometry_from_rings(rings),
                }
            }
            EntityDoc::County {
                state_fp,
                county_fp,
                name,
                bbox,
                rings,
            } => {
                let label = format!("{state_fp:02}{county_fp:03}");
                let (sfp, cfp) = match (u8::try_from(state_fp), u16::try_from(county_fp)) {
                    (Ok(s), Ok(c)) if s <= 99 && c <= 999 => (s, c),
                    _ => return Err(schema_err("county", label, "FIPS component exceeds its width")),
                };
                counties.insert((sfp, cfp));
                BuildRecord::County {
                    state_fp: sfp,
                    county_fp: cfp,
                    name,
                    bbox: bbox_from_array(bbox),
                    geometry: geometry_from_rings(rings),
                }
            }
            EntityDoc::Block {
                state_fp,
                county_fp,
                block_fp,
                bbox,
                rings,
                demographics: d,
            } => {
                let full_fips = format_block_fips(state_fp, county_fp, block_fp).map_err(|e| {
                    schema_err("block", format!("{state_fp:02}{county_fp:03}{block_fp:07}"), e.to_string())
                })?;
                let parts = FipsParts::parse(&full_fips).expect("formatted FIPS is well formed");
                block_parents.push((full_fips.clone(), parts));
                BuildRecord::Block {
                    full_fips,
                    bbox: bbox_from_array(bbox),
                    geometry: geometry_from_rings(rings),
                    demo: Demographics {
                        population: d.population,
                        median_age: d.median_age,
                        under_15: d.under_15,
                        over_65: d.over_65,
                        density: d.density,
                    },
                }
            }
        };
        records.push(record);
    }

    for (fips, parts) in block_parents {
        if !counties.contains(&(parts.state_fp, parts.county_fp)) {
            return Err(IngestError::DanglingReference {
                child: fips,
                parent: format!("{:02}{:03}", parts.state_fp, parts.county_fp),
            });
        }
    }
    for (state_fp, county_fp) in &counties {
        if !states.contains(state_fp) {
            return Err(IngestError::DanglingReference {
                child: format!("{state_fp:02}{county_fp:03}"),
                parent: format!("{state_fp:02}"),
            });
        }
    }
    Ok(records)
}

fn rings_json(g: &PolygonGeometry) -> Value {
    Value::Array(
        g.rings()
            .map(|(xs, ys)| {
                Value::Array(
                    xs.iter()
                        .zip(ys)
                        .map(|(x, y)| json!([x, y]))
                        .collect(),
                )
            })
            .collect(),
    )
}

fn entity(kind: &str, fields: impl IntoIterator<Item = (&'static str, Value)>) -> Value {
    // serde_json's default map is a BTreeMap, so keys serialize sorted.
    let mut map = Map::new();
    map.insert("kind".into(), Value::from(kind));
    for (k, v) in fields {
        map.insert(k.into(), v);
    }
    Value::Object(map)
}

/// Canonical bundle for an index: sorted keys, entities in ascending FIPS
/// order, shortest round-trip float formatting.
pub fn serialize_bundle(index: &CountryIndex) -> Vec<u8> {
    let mut entities = Vec::new();
    for state in &index.states {
        entities.push(entity(
            "state",
            [
                ("state_fp", json!(state.state_fp)),
                ("name", json!(state.name)),
                ("bbox", json!(state.bbox.as_array())),
                ("rings", rings_json(&state.geometry)),
            ],
        ));
        for county in &state.counties {
            entities.push(entity(
                "county",
                [
                    ("state_fp", json!(state.state_fp)),
                    ("county_fp", json!(county.county_fp)),
                    ("name", json!(county.name)),
                    ("bbox", json!(county.bbox.as_array())),
                    ("rings", rings_json(&county.geometry)),
                ],
            ));
            for block in &county.blocks {
                let d = &block.demo;
                entities.push(entity(
                    "block",
                    [
                        ("state_fp", json!(state.state_fp)),
                        ("county_fp", json!(county.county_fp)),
                        ("block_fp", json!(block.block_fp)),
                        ("bbox", json!(block.bbox.as_array())),
                        ("rings", rings_json(&block.geometry)),
                        (
                            "demographics",
                            json!({
                                "population": d.population,
                                "median_age": d.median_age,
                                "under_15": d.under_15,
                                "over_65": d.over_65,
                                "density": d.density,
                            }),
                        ),
                    ],
                ));
            }
        }
    }
    let doc = json!({ "format_version": FORMAT_VERSION, "entities": entities });
    let mut out = serde_json::to_vec_pretty(&doc).expect("in-memory JSON serialization");
    out.push(b'\n');
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub num_states: u32,
    pub counties_per_state: u32,
    pub blocks_per_county: u32,
    /// Persons per square mile, `(min, max)`.
    pub density_range: (f64, f64),
}

impl SyntheticSpec {
    pub fn new(seed: u64, num_states: u32, counties_per_state: u32, blocks_per_county: u32) -> Self {
        SyntheticSpec {
            seed,
            num_states,
            counties_per_state,
            blocks_per_county,
            density_range: (10.0, 20_000.0),
        }
    }

    fn validate(&self) -> Result<(), IngestError> {
        if self.num_states == 0 || self.counties_per_state == 0 || self.blocks_per_county == 0 {
            return Err(IngestError::InvalidSpec("all counts must be at least 1".into()));
        }
        let (lo, hi) = self.density_range;
        if !(lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo <= hi) {
            return Err(IngestError::InvalidSpec(format!(
                "density range ({lo}, {hi}) must satisfy 0 <= min <= max"
            )));
        }
        Ok(())
    }
}

/// Side of one synthetic block square, degrees.
const BLOCK_DEG: f64 = 0.01;
const ORIGIN_LON: f64 = -125.0;
const ORIGIN_LAT: f64 = 20.0;

/// Columns and rows of the most nearly square grid holding `n` cells.
fn grid_shape(n: u32) -> (u32, u32) {
    let cols = (n as f64).sqrt().ceil() as u32;
    let rows = n.div_ceil(cols);
    (cols, rows)
}

fn tile(x0: f64, y0: f64, w: f64, h: f64, i: u32, cols: u32) -> BoundingBox {
    let (col, row) = ((i % cols) as f64, (i / cols) as f64);
    BoundingBox::new(x0 + col * w, x0 + (col + 1.0) * w, y0 + row * h, y0 + (row + 1.0) * h)
}

/// Deterministic nation of rectangular states, counties and blocks.
///
/// Blocks are `BLOCK_DEG`-sided squares laid out in a near-square grid inside
/// their county; counties are tiled the same way inside states and states
/// inside the nation. Demographics come from a ChaCha8 stream seeded with
/// `spec.seed`.
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<Vec<BuildRecord>, IngestError> {
    spec.validate()?;
    let (bcols, brows) = grid_shape(spec.blocks_per_county);
    let (ccols, crows) = grid_shape(spec.counties_per_state);
    let (scols, srows) = grid_shape(spec.num_states);
    let county_w = bcols as f64 * BLOCK_DEG;
    let county_h = brows as f64 * BLOCK_DEG;
    let state_w = ccols as f64 * county_w;
    let state_h = crows as f64 * county_h;
    let nation_e = ORIGIN_LON + scols as f64 * state_w;
    let nation_n = ORIGIN_LAT + srows as f64 * state_h;
    if nation_e > 180.0 || nation_n > 90.0 {
        return Err(IngestError::Capacity(format!(
            "{scols}x{srows} states of {state_w:.2}x{state_h:.2} degrees exceed the globe"
        )));
    }
    if spec.num_states > 99 || spec.counties_per_state > 999 || spec.blocks_per_county > 9_999_999 {
        return Err(IngestError::Capacity("counts exceed the FIPS digit widths".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (dmin, dmax) = spec.density_range;
    let mut records = Vec::new();
    for s in 0..spec.num_states {
        let state_fp = (s + 1) as u8;
        let sbox = tile(ORIGIN_LON, ORIGIN_LAT, state_w, state_h, s, scols);
        records.push(BuildRecord::State {
            state_fp,
            name: Some(format!("State {state_fp:02}")),
            bbox: None,
            geometry: PolygonGeometry::rectangle(&sbox),
        });
        for c in 0..spec.counties_per_state {
            let county_fp = (2 * c + 1) as u16;
            let cbox = tile(sbox.x_min, sbox.y_min, county_w, county_h, c, ccols);
            records.push(BuildRecord::County {
                state_fp,
                county_fp,
                name: Some(format!("County {county_fp:03}")),
                bbox: None,
                geometry: PolygonGeometry::rectangle(&cbox),
            });
            for b in 0..spec.blocks_per_county {
                let bbox = tile(cbox.x_min, cbox.y_min, BLOCK_DEG, BLOCK_DEG, b, bcols);
                let population: u64 = rng.random_range(0..=5000);
                let under_15 = rng.random_range(0..=population / 3);
                let over_65 = rng.random_range(0..=population / 3);
                let median_age = rng.random_range(20.0..=60.0);
                let density = if dmax > dmin {
                    rng.random_range(dmin..=dmax)
                } else {
                    dmin
                };
                records.push(BuildRecord::Block {
                    full_fips: format_block_fips(state_fp as u64, county_fp as u64, 100_000 + b as u64)
                        .expect("synthetic FIPS components fit"),
                    bbox: None,
                    geometry: PolygonGeometry::rectangle(&bbox),
                    demo: Demographics {
                        population,
                        median_age,
                        under_15,
                        over_65,
                        density,
                    },
                });
            }
        }
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::{build_index, IndexError};

    const MIT_BUNDLE: &str = r#"{
      "format_version": 1,
      "entities": [
        {"kind": "block", "state_fp": 25, "county_fp": 17, "block_fp": 3531012,
         "bbox": [-71.1021, -71.0908, 42.3604, 42.3660],
         "rings": [[[-71.1021, 42.3604], [-71.0908, 42.3604], [-71.0908, 42.3660], [-71.1021, 42.3660], [-71.1021, 42.3604]]],
         "demographics": {"population": 1116, "median_age": 27.1, "under_15": 120, "over_65": 45, "density": 13950},
         "comment": "unknown fields are ignored"},
        {"kind": "county", "county_fp": 17, "state_fp": 25, "name": "Middlesex",
         "rings": [[[-71.8988, 42.1568], [-71.0204, 42.1568], [-71.0204, 42.7366], [-71.8988, 42.7366], [-71.8988, 42.1568]]]},
        {"kind": "state", "state_fp": 25, "name": "Massachusetts",
         "bbox": [-73.5081, -69.9284, 41.2380, 42.8866],
         "rings": [[[-73.5081, 41.2380], [-69.9284, 41.2380], [-69.9284, 42.8866], [-73.5081, 42.8866], [-73.5081, 41.2380]]]}
      ]
    }"#;

    #[test]
    fn parses_mit_block() {
        let records = parse_bundle(MIT_BUNDLE.as_bytes()).unwrap();
        assert_eq!(records.len(), 3);
        let idx = build_index(records).unwrap();
        let b = idx.lookup_block("250173531012").unwrap().unwrap();
        assert_eq!(b.demo.population, 1116);
        assert_eq!(b.demo.median_age, 27.1);
        assert_eq!(b.demo.density, 13950.0);
        assert_eq!(b.block_fp, 3531012);
        assert_eq!(idx.states[0].counties[0].name, "Middlesex");
    }

    #[test]
    fn empty_entities_surface_empty_input() {
        let records = parse_bundle(br#"{"format_version": 1, "entities": []}"#).unwrap();
        assert_eq!(build_index(records), Err(IndexError::EmptyInput));
    }

    #[test]
    fn syntax_error_offset() {
        let text = b"{\"format_version\": 1,\n \"entities\": [}";
        match parse_bundle(text) {
            Err(IngestError::Syntax { offset, .. }) => assert_eq!(offset, 36),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn version_error() {
        assert_eq!(
            parse_bundle(br#"{"format_version": 2, "entities": []}"#),
            Err(IngestError::Version(2))
        );
    }

    #[test]
    fn schema_error_names_entity() {
        let text = br#"{"format_version": 1, "entities": [
            {"kind": "block", "state_fp": 25, "county_fp": 17, "block_fp": 3531012, "rings": []}
        ]}"#;
        match parse_bundle(text) {
            Err(IngestError::Schema { kind, fips, message }) => {
                assert_eq!(kind, "block");
                assert_eq!(fips, "250173531012");
                assert!(message.contains("demographics"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            parse_bundle(br#"{"entities": []}"#),
            Err(IngestError::Schema { .. })
        ));
    }

    #[test]
    fn dangling_block() {
        let text = br#"{"format_version": 1, "entities": [
            {"kind": "state", "state_fp": 1, "rings": [[[0,0],[1,0],[1,1],[0,0]]]},
            {"kind": "block", "state_fp": 1, "county_fp": 3, "block_fp": 1,
             "rings": [[[0,0],[1,0],[1,1],[0,0]]],
             "demographics": {"population": 0, "median_age": 0, "under_15": 0, "over_65": 0, "density": 0}}
        ]}"#;
        assert_eq!(
            parse_bundle(text),
            Err(IngestError::DanglingReference {
                child: "010030000001".into(),
                parent: "01003".into()
            })
        );
    }

    #[test]
    fn synthetic_counts_and_determinism() {
        let spec = SyntheticSpec::new(7, 3, 2, 10);
        let a = generate_synthetic(&spec).unwrap();
        assert_eq!(a.len(), 3 + 6 + 60);
        assert_eq!(a, generate_synthetic(&spec).unwrap());
        let idx = build_index(a).unwrap();
        let counts = idx.entity_counts();
        assert_eq!((counts.states, counts.counties, counts.blocks), (3, 6, 60));
    }

    #[test]
    fn synthetic_invalid_specs() {
        assert!(matches!(
            generate_synthetic(&SyntheticSpec::new(1, 0, 1, 1)),
            Err(IngestError::InvalidSpec(_))
        ));
        let mut spec = SyntheticSpec::new(1, 1, 1, 1);
        spec.density_range = (5.0, 1.0);
        assert!(matches!(generate_synthetic(&spec), Err(IngestError::InvalidSpec(_))));
        assert!(matches!(
            generate_synthetic(&SyntheticSpec::new(1, 99, 999, 9_999_999)),
            Err(IngestError::Capacity(_))
        ));
    }

    #[test]
    fn serialize_one_block_order() {
        let idx = build_index(parse_bundle(MIT_BUNDLE.as_bytes()).unwrap()).unwrap();
        let out = serialize_bundle(&idx);
        let doc: Value = serde_json::from_slice(&out).unwrap();
        let kinds: Vec<_> = doc["entities"]
            .as_array()
            .unwrap()
            .iter()
            .map(|e| e["kind"].as_str().unwrap().to_string())
            .collect();
        assert_eq!(kinds, ["state", "county", "block"]);
        assert_eq!(out, serialize_bundle(&idx));
        let rebuilt = build_index(parse_bundle(&out).unwrap()).unwrap();
        assert_eq!(rebuilt, idx);
    }
}
