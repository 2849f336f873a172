//! Helpers shared by the integration test targets.
#![allow(dead_code)]

use std::collections::BTreeMap;
use std::io::{Cursor, Read};
use std::path::{Path, PathBuf};

use prestage::index::{BlockRecord, CountryIndex};
use prestage::xlsx::{CellRef, CellValue, FormulaValue, WorkbookModel, PART_NAMES};
use prestage::{build_index, generate_synthetic, SyntheticSpec};
use sha2::{Digest, Sha256};

const NS_MAIN: &str = "http://schemas.openxmlformats.org/spreadsheetml/2006/main";

pub fn synthetic_index(seed: u64, states: u32, counties: u32, blocks: u32) -> CountryIndex {
    build_index(generate_synthetic(&SyntheticSpec::new(seed, states, counties, blocks)).unwrap()).unwrap()
}

/// Relative path → SHA-256 of every regular file under `root`.
pub fn tree_digests(root: &Path) -> BTreeMap<PathBuf, [u8; 32]> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<PathBuf, [u8; 32]>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let bytes = std::fs::read(&path).unwrap();
                out.insert(path.strip_prefix(root).unwrap().to_path_buf(), Sha256::digest(&bytes).into());
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

/// One digest over all paths and contents.
pub fn tree_hash(root: &Path) -> String {
    let mut h = Sha256::new();
    for (path, digest) in tree_digests(root) {
        h.update(path.to_string_lossy().as_bytes());
        h.update([0]);
        h.update(digest);
    }
    h.finalize().iter().map(|b| format!("{b:02x}")).collect()
}

/// Entry names and contents of a zip archive, in archive order.
pub fn zip_entries(bytes: &[u8]) -> Vec<(String, String)> {
    let mut archive = zip::ZipArchive::new(Cursor::new(bytes)).expect("valid zip");
    (0..archive.len())
        .map(|i| {
            let mut f = archive.by_index(i).unwrap();
            let mut s = String::new();
            f.read_to_string(&mut s).unwrap();
            (f.name().to_string(), s)
        })
        .collect()
}

fn child<'a, 'i>(n: roxmltree::Node<'a, 'i>, name: &str) -> Option<roxmltree::Node<'a, 'i>> {
    n.children().find(|c| c.has_tag_name((NS_MAIN, name)))
}

fn text_of(n: roxmltree::Node<'_, '_>) -> String {
    n.text().unwrap_or("").to_string()
}

/// Rebuilds a `WorkbookModel` from `.xlsx` bytes with a zip reader and a
/// generic XML parser.
pub fn read_workbook(bytes: &[u8]) -> WorkbookModel {
    let entries = zip_entries(bytes);
    let names: Vec<&str> = entries.iter().map(|(n, _)| n.as_str()).collect();
    assert_eq!(names, PART_NAMES);
    for (name, body) in &entries {
        roxmltree::Document::parse(body).unwrap_or_else(|e| panic!("{name}: {e}"));
    }

    let workbook = roxmltree::Document::parse(&entries[2].1).unwrap();
    let sheet = workbook
        .descendants()
        .find(|n| n.has_tag_name((NS_MAIN, "sheet")))
        .expect("one sheet");
    let mut model = WorkbookModel::new(sheet.attribute("name").unwrap());

    let doc = roxmltree::Document::parse(&entries[4].1).unwrap();
    for col in doc.descendants().filter(|n| n.has_tag_name((NS_MAIN, "col"))) {
        let min: u32 = col.attribute("min").unwrap().parse().unwrap();
        assert_eq!(col.attribute("max").unwrap().parse::<u32>().unwrap(), min);
        model
            .column_widths
            .insert(min, col.attribute("width").unwrap().parse().unwrap());
    }
    for c in doc.descendants().filter(|n| n.has_tag_name((NS_MAIN, "c"))) {
        let at: CellRef = c.attribute("r").unwrap().parse().unwrap();
        let value = match (c.attribute("t"), child(c, "f")) {
            (Some("inlineStr"), None) => {
                let t = child(child(c, "is").unwrap(), "t").unwrap();
                CellValue::Text(text_of(t))
            }
            (t, Some(f)) => {
                let v = text_of(child(c, "v").unwrap());
                let cached = match t {
                    None | Some("n") => FormulaValue::Number(v.parse().unwrap()),
                    Some("str") => FormulaValue::Text(v),
                    Some("b") => FormulaValue::Bool(v == "1"),
                    Some(other) => panic!("cell {at}: type {other}"),
                };
                CellValue::Formula { expr: text_of(f), cached }
            }
            (None, None) => CellValue::Number(text_of(child(c, "v").unwrap()).parse().unwrap()),
            (Some(other), None) => panic!("cell {at}: type {other}"),
        };
        assert!(model.define(at, value), "cell {at} appears twice");
    }
    model
}

/// KML color `aabbggrr` → (r, g, b) bytes.
pub fn kml_rgb(hex: &str) -> (u8, u8, u8) {
    assert_eq!(hex.len(), 8, "{hex}");
    let byte = |i: usize| u8::from_str_radix(&hex[i..i + 2], 16).unwrap();
    (byte(6), byte(4), byte(2))
}

/// Red minus blue of a KML color, in bytes.
pub fn kml_warmth(hex: &str) -> i32 {
    let (r, _, b) = kml_rgb(hex);
    r as i32 - b as i32
}

/// Fill color of each placemark, keyed by placemark name, in document order.
pub fn kml_fills(text: &str) -> Vec<(String, String)> {
    let doc = roxmltree::Document::parse(text).expect("well-formed KML");
    let styles: BTreeMap<String, String> = doc
        .descendants()
        .filter(|n| n.has_tag_name("Style"))
        .map(|s| {
            let poly = s.descendants().find(|n| n.has_tag_name("PolyStyle")).unwrap();
            let color = poly.children().find(|n| n.has_tag_name("color")).unwrap();
            (s.attribute("id").unwrap().to_string(), color.text().unwrap().to_string())
        })
        .collect();
    doc.descendants()
        .filter(|n| n.has_tag_name("Placemark"))
        .map(|p| {
            let field = |tag: &str| {
                p.children()
                    .find(|n| n.has_tag_name(tag))
                    .and_then(|n| n.text())
                    .unwrap()
                    .to_string()
            };
            let url = field("styleUrl");
            let id = url.strip_prefix('#').unwrap();
            (field("name"), styles[id].clone())
        })
        .collect()
}

/// Brute-force haversine, written independently of the library.
pub fn reference_haversine_km(lon1: f64, lat1: f64, lon2: f64, lat2: f64) -> f64 {
    const R: f64 = 6371.0088;
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let a = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * R * a.sqrt().min(1.0).asin()
}

pub fn block_center(b: &BlockRecord) -> (f64, f64) {
    ((b.bbox.x_min + b.bbox.x_max) / 2.0, (b.bbox.y_min + b.bbox.y_max) / 2.0)
}
