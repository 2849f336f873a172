//! Minimal Office Open XML spreadsheet package.
//!
//! Five parts, always in this order, stored uncompressed with the zip epoch
//! timestamp so the archive bytes depend only on the model:
//! `[Content_Types].xml`, `_rels/.rels`, `xl/workbook.xml`,
//! `xl/_rels/workbook.xml.rels`, `xl/worksheets/sheet1.xml`.
//! Strings are written inline; there is no shared-strings part.

use std::fmt::Write as _;
use std::io::{Cursor, Write};

use zip::write::SimpleFileOptions;
use zip::{CompressionMethod, DateTime, ZipWriter};

use super::formula::parse_formula;
use super::model::{CellValue, FormulaValue, WorkbookModel};
use super::XlsxError;

pub const PART_NAMES: [&str; 5] = [
    "[Content_Types].xml",
    "_rels/.rels",
    "xl/workbook.xml",
    "xl/_rels/workbook.xml.rels",
    "xl/worksheets/sheet1.xml",
];

const XML_DECL: &str = "<?xml version=\"1.0\" encoding=\"UTF-8\" standalone=\"yes\"?>\n";
const NS_MAIN: &str = "http://schemas.openxmlformats.org/spreadsheetml/2006/main";
const NS_REL: &str = "http://schemas.openxmlformats.org/officeDocument/2006/relationships";

const CONTENT_TYPES: &str = concat!(
    "<Types xmlns=\"http://schemas.openxmlformats.org/package/2006/content-types\">",
    "<Default Extension=\"rels\" ContentType=\"application/vnd.openxmlformats-package.relationships+xml\"/>",
    "<Default Extension=\"xml\" ContentType=\"application/xml\"/>",
    "<Override PartName=\"/xl/workbook.xml\" ContentType=\"application/vnd.openxmlformats-officedocument.spreadsheetml.sheet.main+xml\"/>",
    "<Override PartName=\"/xl/worksheets/sheet1.xml\" ContentType=\"application/vnd.openxmlformats-officedocument.spreadsheetml.worksheet+xml\"/>",
    "</Types>"
);

const PACKAGE_RELS: &str = concat!(
    "<Relationships xmlns=\"http://schemas.openxmlformats.org/package/2006/relationships\">",
    "<Relationship Id=\"rId1\" Type=\"http://schemas.openxmlformats.org/officeDocument/2006/relationships/officeDocument\" Target=\"xl/workbook.xml\"/>",
    "</Relationships>"
);

const WORKBOOK_RELS: &str = concat!(
    "<Relationships xmlns=\"http://schemas.openxmlformats.org/package/2006/relationships\">",
    "<Relationship Id=\"rId1\" Type=\"http://schemas.openxmlformats.org/officeDocument/2006/relationships/worksheet\" Target=\"worksheets/sheet1.xml\"/>",
    "</Relationships>"
);

fn escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for ch in s.chars() {
        match ch {
            '&' => out.push_str("&amp;"),
            '<' => out.push_str("&lt;"),
            '>' => out.push_str("&gt;"),
            '"' => out.push_str("&quot;"),
            c => out.push(c),
        }
    }
    out
}

/// Checks the model invariants: finite numbers, parseable formulas whose
/// references all point at defined cells, a usable sheet name.
pub fn validate_model(model: &WorkbookModel) -> Result<(), XlsxError> {
    let invalid = |msg: String| Err(XlsxError::InvalidModel(msg));
    let name = &model.sheet_name;
    if name.trim().is_empty() || name.chars().count() > 31 || name.contains(['[', ']', ':', '*', '?', '/', '\\']) {
        return invalid(format!("sheet name {name:?} is not allowed"));
    }
    for (at, v) in &model.cells {
        match v {
            CellValue::Number(n) if !n.is_finite() => return invalid(format!("{at} holds {n}")),
            CellValue::Formula { expr, cached } => {
                if let FormulaValue::Number(n) = cached {
                    if !n.is_finite() {
                        return invalid(format!("{at} caches {n}"));
                    }
                }
                let parsed = parse_formula(expr).map_err(|e| XlsxError::InvalidModel(format!("{at}: {e}")))?;
                if let Some(missing) = parsed.references().into_iter().find(|r| !model.cells.contains_key(r)) {
                    return invalid(format!("{at} references undefined cell {missing}"));
                }
            }
            _ => {}
        }
    }
    for (col, w) in &model.column_widths {
        if *col == 0 || !(w.is_finite() && *w > 0.0) {
            return invalid(format!("column {col} width {w}"));
        }
    }
    Ok(())
}

fn workbook_xml(model: &WorkbookModel) -> String {
    format!(
        "{XML_DECL}<workbook xmlns=\"{NS_MAIN}\" xmlns:r=\"{NS_REL}\"><sheets><sheet name=\"{}\" sheetId=\"1\" r:id=\"rId1\"/></sheets><calcPr calcId=\"0\" fullCalcOnLoad=\"1\"/></workbook>",
        escape(&model.sheet_name)
    )
}

pub fn worksheet_xml(model: &WorkbookModel) -> String {
    let mut out = String::new();
    let _ = write!(out, "{XML_DECL}<worksheet xmlns=\"{NS_MAIN}\" xmlns:r=\"{NS_REL}\">");
    if !model.column_widths.is_empty() {
        out.push_str("<cols>");
        for (col, w) in &model.column_widths {
            let _ = write!(out, "<col min=\"{col}\" max=\"{col}\" width=\"{w}\" customWidth=\"1\"/>");
        }
        out.push_str("</cols>");
    }
    out.push_str("<sheetData>");
    let mut current_row = None;
    for (at, v) in &model.cells {
        if current_row != Some(at.row) {
            if current_row.is_some() {
                out.push_str("</row>");
            }
            let _ = write!(out, "<row r=\"{}\">", at.row);
            current_row = Some(at.row);
        }
        match v {
            CellValue::Number(n) => {
                let _ = write!(out, "<c r=\"{at}\"><v>{n}</v></c>");
            }
            CellValue::Text(s) => {
                let _ = write!(
                    out,
                    "<c r=\"{at}\" t=\"inlineStr\"><is><t xml:space=\"preserve\">{}</t></is></c>",
                    escape(s)
                );
            }
            CellValue::Formula { expr, cached } => {
                let f = escape(expr);
                let _ = match cached {
                    FormulaValue::Number(n) => write!(out, "<c r=\"{at}\"><f>{f}</f><v>{n}</v></c>"),
                    FormulaValue::Text(s) => {
                        write!(out, "<c r=\"{at}\" t=\"str\"><f>{f}</f><v>{}</v></c>", escape(s))
                    }
                    FormulaValue::Bool(b) => {
                        write!(out, "<c r=\"{at}\" t=\"b\"><f>{f}</f><v>{}</v></c>", u8::from(*b))
                    }
                };
            }
        }
    }
    if current_row.is_some() {
        out.push_str("</row>");
    }
    out.push_str("</sheetData></worksheet>");
    out
}

/// Serializes the model into a byte-deterministic `.xlsx` archive.
pub fn emit_xlsx(model: &WorkbookModel) -> Result<Vec<u8>, XlsxError> {
    validate_model(model)?;
    let parts = [
        format!("{XML_DECL}{CONTENT_TYPES}"),
        format!("{XML_DECL}{PACKAGE_RELS}"),
        workbook_xml(model),
        format!("{XML_DECL}{WORKBOOK_RELS}"),
        worksheet_xml(model),
    ];
    let options = SimpleFileOptions::default()
        .compression_method(CompressionMethod::Stored)
        .last_modified_time(DateTime::default())
        .unix_permissions(0o644);
    let mut zip = ZipWriter::new(Cursor::new(Vec::new()));
    for (name, body) in PART_NAMES.iter().zip(parts) {
        zip.start_file(*name, options)?;
        zip.write_all(body.as_bytes())?;
    }
    Ok(zip.finish()?.into_inner())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::xlsx::model::CellRef;

    #[test]
    fn empty_model_is_valid() {
        let m = WorkbookModel::new("Sheet1");
        let bytes = emit_xlsx(&m).unwrap();
        assert_eq!(&bytes[..2], b"PK");
        assert!(worksheet_xml(&m).contains("<sheetData></sheetData>"));
        assert_eq!(bytes, emit_xlsx(&m).unwrap());
    }

    #[test]
    fn dangling_reference_rejected() {
        let mut m = WorkbookModel::new("Sheet1");
        m.set(CellRef::new(1, 1), CellValue::formula("B1+1"));
        assert!(matches!(emit_xlsx(&m), Err(XlsxError::InvalidModel(_))));
        m.set(CellRef::new(1, 2), CellValue::Number(1.0));
        assert!(emit_xlsx(&m).is_ok());
    }

    #[test]
    fn bad_sheet_name_and_numbers() {
        let mut m = WorkbookModel::new("a/b");
        assert!(emit_xlsx(&m).is_err());
        m.sheet_name = "ok".into();
        m.set(CellRef::new(1, 1), CellValue::Number(f64::NAN));
        assert!(emit_xlsx(&m).is_err());
    }

    #[test]
    fn escapes_text_and_formulas() {
        let mut m = WorkbookModel::new("s");
        m.set(CellRef::new(1, 1), CellValue::text("a<b & \"c\""));
        m.set(CellRef::new(1, 2), CellValue::Number(2.0));
        m.set(
            CellRef::new(2, 1),
            CellValue::Formula {
                expr: "IF(B1<=3,1,0)".into(),
                cached: FormulaValue::Number(1.0),
            },
        );
        let xml = worksheet_xml(&m);
        assert!(xml.contains("a&lt;b &amp; &quot;c&quot;"));
        assert!(xml.contains("<f>IF(B1&lt;=3,1,0)</f><v>1</v>"));
    }
}
