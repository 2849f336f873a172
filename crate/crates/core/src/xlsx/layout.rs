//! Per-county workbook layout.
//!
//! ```text
//! rows 1-4   coordinate conversion: DMS (row 2) and DM (row 3) inputs,
//!            decimal results in J:K
//! rows 5-7   radius query: center lon/lat and radius inputs in B5:B7,
//!            in-radius totals in E5:E7
//! row  9     data table header
//! rows 10..  one row per block group, ascending GEOID
//! ```

use crate::geometry::{bbox_center, EARTH_RADIUS_KM};
use crate::index::CountyNode;

use super::dms::{decimal_to_dms, Axis, DmsInput};
use super::formula::recalculate;
use super::model::{CellRef, CellValue, WorkbookModel};
use super::XlsxError;

pub const DEFAULT_RADIUS_KM: f64 = 10.0;

pub const DMS_ROW: u32 = 2;
pub const DM_ROW: u32 = 3;
pub const HEADER_ROW: u32 = 9;
pub const FIRST_DATA_ROW: u32 = 10;

// conversion block columns
pub const LAT_DEG_COL: u32 = 2;
pub const LAT_MIN_COL: u32 = 3;
pub const LAT_SEC_COL: u32 = 4;
pub const LAT_HEM_COL: u32 = 5;
pub const LON_DEG_COL: u32 = 6;
pub const LON_MIN_COL: u32 = 7;
pub const LON_SEC_COL: u32 = 8;
pub const LON_HEM_COL: u32 = 9;
pub const LAT_DECIMAL_COL: u32 = 10;
pub const LON_DECIMAL_COL: u32 = 11;

pub const CENTER_LON: CellRef = CellRef { row: 5, col: 2 };
pub const CENTER_LAT: CellRef = CellRef { row: 6, col: 2 };
pub const RADIUS_KM: CellRef = CellRef { row: 7, col: 2 };
pub const POPULATION_IN_RADIUS: CellRef = CellRef { row: 5, col: 5 };
pub const UNDER_15_IN_RADIUS: CellRef = CellRef { row: 6, col: 5 };
pub const OVER_65_IN_RADIUS: CellRef = CellRef { row: 7, col: 5 };
pub const CASE_RATE: CellRef = CellRef { row: 5, col: 8 };
pub const CASES_IN_RADIUS: CellRef = CellRef { row: 6, col: 8 };
pub const BLOCKS_IN_RADIUS: CellRef = CellRef { row: 7, col: 8 };

pub const DATA_HEADERS: [&str; 11] = [
    "GEOID",
    "Longitude",
    "Latitude",
    "Total Population",
    "Pop Density",
    "Under 15",
    "Over 65",
    "Median Age",
    "Distance (km)",
    "In Radius",
    "Est. Cases",
];

// data table columns
pub const GEOID_COL: u32 = 1;
pub const LON_COL: u32 = 2;
pub const LAT_COL: u32 = 3;
pub const POP_COL: u32 = 4;
pub const DENSITY_COL: u32 = 5;
pub const UNDER_15_COL: u32 = 6;
pub const OVER_65_COL: u32 = 7;
pub const AGE_COL: u32 = 8;
pub const DISTANCE_COL: u32 = 9;
pub const IN_RADIUS_COL: u32 = 10;
pub const CASES_COL: u32 = 11;

fn abs_ref(c: CellRef) -> String {
    format!("${}${}", super::model::column_letters(c.col), c.row)
}

fn rel(row: u32, col: u32) -> String {
    CellRef::new(row, col).to_string()
}

/// Haversine distance from the query center to the block center on `row`.
///
/// Same term order as [`crate::geometry::haversine_km`] with the query center
/// as the first point.
pub fn haversine_formula(row: u32) -> String {
    let lat1 = format!("RADIANS({})", abs_ref(CENTER_LAT));
    let lat2 = format!("RADIANS({})", rel(row, LAT_COL));
    let lon1 = format!("RADIANS({})", abs_ref(CENTER_LON));
    let lon2 = format!("RADIANS({})", rel(row, LON_COL));
    format!(
        "2*{EARTH_RADIUS_KM}*ASIN(MIN(SQRT(SIN(({lat2}-{lat1})/2)^2+COS({lat1})*COS({lat2})*SIN(({lon2}-{lon1})/2)^2),1))"
    )
}

/// `sign · (deg + min/60 + sec/3600)`; `sec_col = None` for DM rows.
fn conversion_formula(row: u32, deg: u32, min: u32, sec: Option<u32>, hem: u32, negative: &str) -> String {
    let mut body = format!("{}+{}/60", rel(row, deg), rel(row, min));
    if let Some(sec) = sec {
        body.push_str(&format!("+{}/3600", rel(row, sec)));
    }
    format!("IF({}=\"{negative}\",-1,1)*({body})", rel(row, hem))
}

fn sheet_name(county: &CountyNode) -> String {
    let cleaned: String = county
        .name
        .chars()
        .map(|c| if "[]:*?/\\".contains(c) { '_' } else { c })
        .take(31)
        .collect();
    let cleaned = cleaned.trim().trim_matches('\'').to_string();
    if cleaned.is_empty() {
        format!("County {:03}", county.county_fp)
    } else {
        cleaned
    }
}

fn put(m: &mut WorkbookModel, row: u32, col: u32, v: CellValue) {
    let fresh = m.define(CellRef::new(row, col), v);
    debug_assert!(fresh, "cell {} defined twice", CellRef::new(row, col));
}

fn put_dms(m: &mut WorkbookModel, row: u32, lat: &DmsInput, lon: &DmsInput, with_seconds: bool) {
    put(m, row, LAT_DEG_COL, CellValue::Number(lat.degrees as f64));
    put(m, row, LAT_MIN_COL, CellValue::Number(lat.minutes as f64));
    put(m, row, LAT_HEM_COL, CellValue::text(lat.hemisphere.letter()));
    put(m, row, LON_DEG_COL, CellValue::Number(lon.degrees as f64));
    put(m, row, LON_MIN_COL, CellValue::Number(lon.minutes as f64));
    put(m, row, LON_HEM_COL, CellValue::text(lon.hemisphere.letter()));
    if with_seconds {
        put(m, row, LAT_SEC_COL, CellValue::Number(lat.seconds));
        put(m, row, LON_SEC_COL, CellValue::Number(lon.seconds));
    }
    let sec = |c| with_seconds.then_some(c);
    put(
        m,
        row,
        LAT_DECIMAL_COL,
        CellValue::formula(conversion_formula(row, LAT_DEG_COL, LAT_MIN_COL, sec(LAT_SEC_COL), LAT_HEM_COL, "S")),
    );
    put(
        m,
        row,
        LON_DECIMAL_COL,
        CellValue::formula(conversion_formula(row, LON_DEG_COL, LON_MIN_COL, sec(LON_SEC_COL), LON_HEM_COL, "W")),
    );
}

/// Lays out the workbook for one county and fills every cached formula value.
///
/// The Est. Cases column and its totals are present only when `case_rate > 0`.
pub fn build_workbook(county: &CountyNode, case_rate: f64) -> Result<WorkbookModel, XlsxError> {
    if county.blocks.is_empty() {
        return Err(XlsxError::EmptyCounty);
    }
    if !(0.0..=1.0).contains(&case_rate) {
        return Err(XlsxError::CaseRate(case_rate));
    }
    let with_cases = case_rate > 0.0;
    let mut m = WorkbookModel::new(sheet_name(county));

    // coordinate conversion block
    let header = [
        "Convert", "Lat Deg", "Lat Min", "Lat Sec", "Lat Hem", "Lon Deg", "Lon Min", "Lon Sec", "Lon Hem",
        "Lat Decimal", "Lon Decimal",
    ];
    for (i, h) in header.iter().enumerate() {
        put(&mut m, 1, i as u32 + 1, CellValue::text(*h));
    }
    let center = bbox_center(&county.bbox);
    let lat = decimal_to_dms(center.lat, Axis::Lat)?;
    let lon = decimal_to_dms(center.lon, Axis::Lon)?;
    put(&mut m, DMS_ROW, 1, CellValue::text("DMS"));
    put_dms(&mut m, DMS_ROW, &lat, &lon, true);
    put(&mut m, DM_ROW, 1, CellValue::text("DM"));
    put_dms(&mut m, DM_ROW, &lat, &lon, false);
    put(
        &mut m,
        4,
        1,
        CellValue::text("Enter coordinates under the headers in rows 2-3; decimal degrees appear in columns J-K."),
    );

    // radius query block
    let last = FIRST_DATA_ROW + county.blocks.len() as u32 - 1;
    let column_range = |col: u32| {
        format!(
            "{}:{}",
            abs_ref(CellRef::new(FIRST_DATA_ROW, col)),
            abs_ref(CellRef::new(last, col))
        )
    };
    let flags = column_range(IN_RADIUS_COL);
    let labelled_input = |m: &mut WorkbookModel, at: CellRef, label: &str, v: f64| {
        put(m, at.row, at.col - 1, CellValue::text(label));
        put(m, at.row, at.col, CellValue::Number(v));
    };
    labelled_input(&mut m, CENTER_LON, "Center Longitude", center.lon);
    labelled_input(&mut m, CENTER_LAT, "Center Latitude", center.lat);
    labelled_input(&mut m, RADIUS_KM, "Radius (km)", DEFAULT_RADIUS_KM);
    for (at, label, col) in [
        (POPULATION_IN_RADIUS, "Population in Radius", POP_COL),
        (UNDER_15_IN_RADIUS, "Under 15 in Radius", UNDER_15_COL),
        (OVER_65_IN_RADIUS, "Over 65 in Radius", OVER_65_COL),
    ] {
        put(&mut m, at.row, at.col - 1, CellValue::text(label));
        put(
            &mut m,
            at.row,
            at.col,
            CellValue::formula(format!("SUMPRODUCT({flags},{})", column_range(col))),
        );
    }
    put(&mut m, BLOCKS_IN_RADIUS.row, BLOCKS_IN_RADIUS.col - 1, CellValue::text("Blocks in Radius"));
    put(
        &mut m,
        BLOCKS_IN_RADIUS.row,
        BLOCKS_IN_RADIUS.col,
        CellValue::formula(format!("SUMPRODUCT({flags})")),
    );
    if with_cases {
        labelled_input(&mut m, CASE_RATE, "Case Rate", case_rate);
        put(&mut m, CASES_IN_RADIUS.row, CASES_IN_RADIUS.col - 1, CellValue::text("Est. Cases in Radius"));
        put(
            &mut m,
            CASES_IN_RADIUS.row,
            CASES_IN_RADIUS.col,
            CellValue::formula(format!("SUMPRODUCT({flags},{})", column_range(CASES_COL))),
        );
    }

    // data table
    let columns = if with_cases { DATA_HEADERS.len() } else { DATA_HEADERS.len() - 1 };
    for (i, h) in DATA_HEADERS.iter().take(columns).enumerate() {
        put(&mut m, HEADER_ROW, i as u32 + 1, CellValue::text(*h));
    }
    let mut blocks: Vec<_> = county.blocks.iter().collect();
    blocks.sort_by(|a, b| a.full_fips.cmp(&b.full_fips));
    for (i, b) in blocks.iter().enumerate() {
        let row = FIRST_DATA_ROW + i as u32;
        let c = bbox_center(&b.bbox);
        let d = &b.demo;
        put(&mut m, row, GEOID_COL, CellValue::text(b.full_fips.clone()));
        put(&mut m, row, LON_COL, CellValue::Number(c.lon));
        put(&mut m, row, LAT_COL, CellValue::Number(c.lat));
        put(&mut m, row, POP_COL, CellValue::Number(d.population as f64));
        put(&mut m, row, DENSITY_COL, CellValue::Number(d.density));
        put(&mut m, row, UNDER_15_COL, CellValue::Number(d.under_15 as f64));
        put(&mut m, row, OVER_65_COL, CellValue::Number(d.over_65 as f64));
        put(&mut m, row, AGE_COL, CellValue::Number(d.median_age));
        put(&mut m, row, DISTANCE_COL, CellValue::formula(haversine_formula(row)));
        put(
            &mut m,
            row,
            IN_RADIUS_COL,
            CellValue::formula(format!("IF({}<={},1,0)", rel(row, DISTANCE_COL), abs_ref(RADIUS_KM))),
        );
        if with_cases {
            put(
                &mut m,
                row,
                CASES_COL,
                CellValue::formula(format!("{}*{}", rel(row, POP_COL), abs_ref(CASE_RATE))),
            );
        }
    }

    m.column_widths.insert(1, 16.0);
    for col in 2..=DATA_HEADERS.len() as u32 {
        m.column_widths.insert(col, 13.0);
    }
    recalculate(&mut m)?;
    Ok(m)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::index::{BlockRecord, BoundingBox, Demographics, PolygonGeometry};
    use crate::xlsx::formula::Evaluator;
    use crate::xlsx::model::FormulaValue;

    fn mit_county() -> CountyNode {
        let bbox = BoundingBox::new(-71.1021, -71.0908, 42.3604, 42.3660);
        let cbox = BoundingBox::new(-71.8988, -71.0204, 42.1568, 42.7366);
        CountyNode {
            county_fp: 17,
            name: "Middlesex".into(),
            bbox: cbox,
            geometry: PolygonGeometry::rectangle(&cbox),
            blocks: vec![BlockRecord {
                block_fp: 3531012,
                full_fips: "250173531012".into(),
                bbox,
                geometry: PolygonGeometry::rectangle(&bbox),
                demo: Demographics {
                    population: 1116,
                    median_age: 27.1,
                    under_15: 120,
                    over_65: 45,
                    density: 13950.0,
                },
            }],
        }
    }

    #[test]
    fn mit_data_row() {
        let m = build_workbook(&mit_county(), 0.0).unwrap();
        let at = |col| m.get(CellRef::new(FIRST_DATA_ROW, col)).cloned();
        assert_eq!(at(GEOID_COL), Some(CellValue::text("250173531012")));
        assert_eq!(at(POP_COL), Some(CellValue::Number(1116.0)));
        assert_eq!(at(DENSITY_COL), Some(CellValue::Number(13950.0)));
        assert_eq!(at(UNDER_15_COL), Some(CellValue::Number(120.0)));
        assert_eq!(at(OVER_65_COL), Some(CellValue::Number(45.0)));
        assert_eq!(at(AGE_COL), Some(CellValue::Number(27.1)));
        assert_eq!(at(CASES_COL), None);
        assert_eq!(m.get(CellRef::new(HEADER_ROW, CASES_COL)), None);
        assert_eq!(m.sheet_name, "Middlesex");
    }

    #[test]
    fn zero_radius_off_center_gives_zero() {
        let mut m = build_workbook(&mit_county(), 0.0).unwrap();
        m.set(CENTER_LON, CellValue::Number(-71.5));
        m.set(CENTER_LAT, CellValue::Number(42.5));
        m.set(RADIUS_KM, CellValue::Number(0.0));
        let ev = Evaluator::new(&m);
        assert_eq!(ev.number(POPULATION_IN_RADIUS).unwrap(), 0.0);
        assert_eq!(ev.number(BLOCKS_IN_RADIUS).unwrap(), 0.0);
    }

    #[test]
    fn case_column_only_with_positive_rate() {
        let m = build_workbook(&mit_county(), 0.01).unwrap();
        assert_eq!(
            m.get(CellRef::new(HEADER_ROW, CASES_COL)),
            Some(&CellValue::text("Est. Cases"))
        );
        match m.get(CellRef::new(FIRST_DATA_ROW, CASES_COL)) {
            Some(CellValue::Formula {
                cached: FormulaValue::Number(v),
                ..
            }) => assert!((v - 11.16).abs() < 1e-9),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(build_workbook(&mit_county(), 1.5), Err(XlsxError::CaseRate(_))));
    }

    #[test]
    fn empty_county() {
        let mut c = mit_county();
        c.blocks.clear();
        assert_eq!(build_workbook(&c, 0.0), Err(XlsxError::EmptyCounty));
    }

    #[test]
    fn default_center_covers_mit_block_at_large_radius() {
        let mut m = build_workbook(&mit_county(), 0.0).unwrap();
        m.set(RADIUS_KM, CellValue::Number(100.0));
        let ev = Evaluator::new(&m);
        assert_eq!(ev.number(POPULATION_IN_RADIUS).unwrap(), 1116.0);
        assert_eq!(ev.number(UNDER_15_IN_RADIUS).unwrap(), 120.0);
        assert_eq!(ev.number(OVER_65_IN_RADIUS).unwrap(), 45.0);
    }

    #[test]
    fn sheet_names_are_sanitized() {
        let mut c = mit_county();
        c.name = "A/B:C[1]* with a rather long county name".into();
        let m = build_workbook(&c, 0.0).unwrap();
        assert!(m.sheet_name.chars().count() <= 31);
        assert!(!m.sheet_name.contains(['/', ':', '[', ']', '*']));
    }
}
