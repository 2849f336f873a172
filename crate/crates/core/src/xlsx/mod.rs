//! County spreadsheet workbooks with live coordinate-conversion and
//! radius-query formulas.

pub mod dms;
pub mod formula;
pub mod layout;
pub mod model;
pub mod package;

use thiserror::Error;

pub use dms::{decimal_to_dms, dms_to_decimal, Axis, DmsError, DmsInput, Hemisphere};
pub use formula::{recalculate, Evaluator, FormulaError, Value};
pub use layout::{build_workbook, haversine_formula};
pub use model::{CellRef, CellValue, FormulaValue, WorkbookModel};
pub use package::{emit_xlsx, PART_NAMES};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum XlsxError {
    #[error("county has no blocks")]
    EmptyCounty,
    #[error("case rate {0} outside [0, 1]")]
    CaseRate(f64),
    #[error(transparent)]
    Dms(#[from] DmsError),
    #[error(transparent)]
    Formula(#[from] FormulaError),
    #[error("invalid workbook model: {0}")]
    InvalidModel(String),
    #[error("zip: {0}")]
    Zip(String),
}

impl From<zip::result::ZipError> for XlsxError {
    fn from(e: zip::result::ZipError) -> Self {
        XlsxError::Zip(e.to_string())
    }
}

impl From<std::io::Error> for XlsxError {
    fn from(e: std::io::Error) -> Self {
        XlsxError::Zip(e.to_string())
    }
}
