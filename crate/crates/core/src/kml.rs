//! Per-county choropleth KML documents.
//!
//! One placemark per block group, named by its GEOID, with an HTML pop-up of
//! the block's demographics. Fill colors are shared `Style` elements keyed by
//! their color string.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use thiserror::Error;

use crate::colormap::{map_color, normalize, rgb_to_kml_hex, ColorError, ColorScheme, DensityScale};
use crate::index::{BlockRecord, CountyNode, RING_CLOSURE_TOLERANCE};

pub const DEFAULT_FILL_ALPHA: u8 = 0x99;
pub const DEFAULT_LINE_ALPHA: u8 = 0xff;
pub const KML_NAMESPACE: &str = "http://www.opengis.net/kml/2.2";

/// Pop-up row labels, in display order.
pub const POPUP_ROWS: [&str; 6] = [
    "GEOID",
    "Total Population",
    "Population Density (per sq mi)",
    "Population Over 65",
    "Population Under 15",
    "Median Age",
];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KmlError {
    #[error("county has no blocks")]
    EmptyCounty,
    #[error("document name is empty")]
    EmptyName,
    #[error("block {fips}: {reason}")]
    Geometry { fips: String, reason: String },
    #[error("block {fips}: {source}")]
    Color {
        fips: String,
        #[source]
        source: ColorError,
    },
}

pub struct KmlRenderSpec<'a> {
    pub county: &'a CountyNode,
    pub scheme: ColorScheme,
    pub scale: &'a DensityScale,
    pub fill_alpha: u8,
    pub line_alpha: u8,
    pub document_name: String,
}

/// Fill color string for one block under `spec`.
pub fn block_fill(block: &BlockRecord, scheme: ColorScheme, scale: &DensityScale, alpha: u8) -> Result<String, KmlError> {
    let rgb = map_color(scheme, normalize(block.demo.density, scale)).map_err(|source| KmlError::Color {
        fips: block.full_fips.clone(),
        source,
    })?;
    Ok(rgb_to_kml_hex(rgb, alpha))
}

fn escape_xml(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            '\'' => out.push_str("&apos;"),
            c => out.push(c),
        }
    }
    out
}

fn popup_html(block: &BlockRecord) -> String {
    let d = &block.demo;
    let values = [
        block.full_fips.clone(),
        d.population.to_string(),
        format!("{:.0}", d.density),
        d.over_65.to_string(),
        d.under_15.to_string(),
        format!("{:.1}", d.median_age),
    ];
    let mut html = String::from("<table border=\"1\">");
    for (label, value) in POPUP_ROWS.iter().zip(values) {
        let _ = write!(html, "<tr><th>{label}</th><td>{value}</td></tr>");
    }
    html.push_str("</table>");
    html
}

fn write_ring(out: &mut String, fips: &str, xs: &[f64], ys: &[f64]) -> Result<(), KmlError> {
    let geometry_err = |reason: String| KmlError::Geometry {
        fips: fips.to_string(),
        reason,
    };
    if xs.len() < 4 {
        return Err(geometry_err(format!("ring has {} vertices", xs.len())));
    }
    if xs.iter().chain(ys).any(|v| !v.is_finite()) {
        return Err(geometry_err("non-finite coordinate".into()));
    }
    let last = xs.len() - 1;
    if (xs[0] - xs[last]).abs() > RING_CLOSURE_TOLERANCE || (ys[0] - ys[last]).abs() > RING_CLOSURE_TOLERANCE {
        return Err(geometry_err("ring is not closed".into()));
    }
    out.push_str("<Polygon><outerBoundaryIs><LinearRing><coordinates>");
    for (x, y) in xs[..last].iter().zip(&ys[..last]) {
        let _ = write!(out, "{x:.7},{y:.7},0 ");
    }
    // the closing vertex is written as an exact copy of the first
    let _ = write!(out, "{:.7},{:.7},0", xs[0], ys[0]);
    out.push_str("</coordinates></LinearRing></outerBoundaryIs></Polygon>");
    Ok(())
}

fn style_id(hex: &str) -> String {
    format!("c{hex}")
}

/// Renders the county document. Output is a pure function of `spec`.
pub fn emit_kml(spec: &KmlRenderSpec<'_>) -> Result<Vec<u8>, KmlError> {
    if spec.county.blocks.is_empty() {
        return Err(KmlError::EmptyCounty);
    }
    if spec.document_name.trim().is_empty() {
        return Err(KmlError::EmptyName);
    }

    let mut blocks: Vec<&BlockRecord> = spec.county.blocks.iter().collect();
    blocks.sort_by(|a, b| a.full_fips.cmp(&b.full_fips));

    let fills = blocks
        .iter()
        .map(|b| block_fill(b, spec.scheme, spec.scale, spec.fill_alpha))
        .collect::<Result<Vec<_>, _>>()?;
    let styles: BTreeMap<&str, ()> = fills.iter().map(|f| (f.as_str(), ())).collect();
    let line_color = format!("{:02x}ffffff", spec.line_alpha);

    let mut out = String::new();
    out.push_str("<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n");
    let _ = writeln!(out, "<kml xmlns=\"{KML_NAMESPACE}\">");
    out.push_str("<Document>\n");
    let _ = writeln!(out, "<name>{}</name>", escape_xml(&spec.document_name));
    for hex in styles.keys() {
        let _ = writeln!(
            out,
            "<Style id=\"{}\"><LineStyle><color>{line_color}</color><width>1</width></LineStyle>\
             <PolyStyle><color>{hex}</color><fill>1</fill><outline>1</outline></PolyStyle></Style>",
            style_id(hex)
        );
    }
    for (block, fill) in blocks.iter().zip(&fills) {
        out.push_str("<Placemark>\n");
        let _ = writeln!(out, "<name>{}</name>", block.full_fips);
        // "]]>" cannot occur: the table holds only digits and fixed labels
        let _ = writeln!(out, "<description><![CDATA[{}]]></description>", popup_html(block));
        let _ = writeln!(out, "<styleUrl>#{}</styleUrl>", style_id(fill));
        let multi = block.geometry.ring_count() > 1;
        if multi {
            out.push_str("<MultiGeometry>");
        }
        if block.geometry.ring_count() == 0 {
            return Err(KmlError::Geometry {
                fips: block.full_fips.clone(),
                reason: "no rings".into(),
            });
        }
        for (xs, ys) in block.geometry.rings() {
            if xs.len() != ys.len() {
                return Err(KmlError::Geometry {
                    fips: block.full_fips.clone(),
                    reason: "coordinate arrays differ in length".into(),
                });
            }
            write_ring(&mut out, &block.full_fips, xs, ys)?;
        }
        if multi {
            out.push_str("</MultiGeometry>");
        }
        out.push_str("\n</Placemark>\n");
    }
    out.push_str("</Document>\n</kml>\n");
    Ok(out.into_bytes())
}
