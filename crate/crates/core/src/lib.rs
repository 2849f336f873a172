//! Pre-staged geo-demographic analytics: per-county choropleth KML maps and
//! formula-bearing spreadsheet workbooks generated from a hierarchical census
//! boundary index, in parallel and byte-deterministically.

pub mod batch;
pub mod cli;
pub mod colormap;
pub mod geometry;
pub mod index;
pub mod ingest;
pub mod kml;
pub mod xlsx;

pub use batch::{generate_all, layout_path, plan_outputs, Artifact, GenerationConfig, GenerationReport};
pub use colormap::{density_scale, map_color, normalize, rgb_to_kml_hex, ColorScheme, DensityScale, NormalizationMode, Rgb};
pub use geometry::{aggregate_demographics, bbox_center, blocks_within_radius, haversine_km, GeoPoint, RadiusQuery};
pub use index::{build_index, BlockRecord, BoundingBox, BuildRecord, CountryIndex, CountyNode, Demographics, PolygonGeometry, StateNode};
pub use ingest::{generate_synthetic, parse_bundle, serialize_bundle, SyntheticSpec};
pub use kml::{emit_kml, KmlRenderSpec};
pub use xlsx::{build_workbook, emit_xlsx, WorkbookModel};
