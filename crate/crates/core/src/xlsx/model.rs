use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

/// 1-based (row, column) cell address. Orders row-major.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct CellRef {
    pub row: u32,
    pub col: u32,
}

impl CellRef {
    pub fn new(row: u32, col: u32) -> Self {
        assert!(row >= 1 && col >= 1, "cell coordinates are 1-based");
        CellRef { row, col }
    }
}

/// Column number → letters (1 → A, 27 → AA).
pub fn column_letters(mut col: u32) -> String {
    let mut out = Vec::new();
    while col > 0 {
        let rem = (col - 1) % 26;
        out.push(b'A' + rem as u8);
        col = (col - 1) / 26;
    }
    out.reverse();
    String::from_utf8(out).expect("ASCII letters")
}

impl fmt::Display for CellRef {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}{}", column_letters(self.col), self.row)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ParseCellRefError(pub String);

impl fmt::Display for ParseCellRefError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "invalid cell reference {:?}", self.0)
    }
}

impl std::error::Error for ParseCellRefError {}

impl FromStr for CellRef {
    type Err = ParseCellRefError;

    /// Accepts `B7` as well as `$B$7`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let err = || ParseCellRefError(s.to_string());
        let t = s.strip_prefix('$').unwrap_or(s);
        let letters = t.bytes().take_while(u8::is_ascii_alphabetic).count();
        if letters == 0 || letters > 3 {
            return Err(err());
        }
        let (cols, rest) = t.split_at(letters);
        let rest = rest.strip_prefix('$').unwrap_or(rest);
        if rest.is_empty() || !rest.bytes().all(|b| b.is_ascii_digit()) {
            return Err(err());
        }
        let col = cols
            .bytes()
            .fold(0u32, |acc, b| acc * 26 + (b.to_ascii_uppercase() - b'A' + 1) as u32);
        let row: u32 = rest.parse().map_err(|_| err())?;
        if row == 0 {
            return Err(err());
        }
        Ok(CellRef { row, col })
    }
}

/// Last computed result of a formula, stored alongside it in the file.
#[derive(Debug, Clone, PartialEq)]
pub enum FormulaValue {
    Number(f64),
    Text(String),
    Bool(bool),
}

#[derive(Debug, Clone, PartialEq)]
pub enum CellValue {
    Number(f64),
    Text(String),
    /// Expression without the leading `=`.
    Formula { expr: String, cached: FormulaValue },
}

impl CellValue {
    pub fn formula(expr: impl Into<String>) -> Self {
        CellValue::Formula {
            expr: expr.into(),
            cached: FormulaValue::Number(0.0),
        }
    }

    pub fn text(s: impl Into<String>) -> Self {
        CellValue::Text(s.into())
    }
}

/// Single-sheet workbook prior to serialization.
#[derive(Debug, Clone, PartialEq)]
pub struct WorkbookModel {
    pub sheet_name: String,
    pub cells: BTreeMap<CellRef, CellValue>,
    /// Column number → width in characters.
    pub column_widths: BTreeMap<u32, f64>,
}

impl WorkbookModel {
    pub fn new(sheet_name: impl Into<String>) -> Self {
        WorkbookModel {
            sheet_name: sheet_name.into(),
            cells: BTreeMap::new(),
            column_widths: BTreeMap::new(),
        }
    }

    /// Defines a cell. Returns `false` (and leaves the grid unchanged) if the
    /// cell was already defined.
    pub fn define(&mut self, at: CellRef, value: CellValue) -> bool {
        use std::collections::btree_map::Entry;
        match self.cells.entry(at) {
            Entry::Vacant(v) => {
                v.insert(value);
                true
            }
            Entry::Occupied(_) => false,
        }
    }

    /// Overwrites a cell, typically a user-input cell in tests.
    pub fn set(&mut self, at: CellRef, value: CellValue) {
        self.cells.insert(at, value);
    }

    pub fn get(&self, at: CellRef) -> Option<&CellValue> {
        self.cells.get(&at)
    }

    pub fn max_row(&self) -> u32 {
        self.cells.keys().map(|c| c.row).max().unwrap_or(0)
    }

    pub fn max_col(&self) -> u32 {
        self.cells.keys().map(|c| c.col).max().unwrap_or(0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn letters() {
        assert_eq!(column_letters(1), "A");
        assert_eq!(column_letters(26), "Z");
        assert_eq!(column_letters(27), "AA");
        assert_eq!(column_letters(703), "AAA");
    }

    #[test]
    fn parse_refs() {
        assert_eq!("B7".parse::<CellRef>().unwrap(), CellRef::new(7, 2));
        assert_eq!("$B$7".parse::<CellRef>().unwrap(), CellRef::new(7, 2));
        assert_eq!("aa10".parse::<CellRef>().unwrap(), CellRef::new(10, 27));
        for bad in ["", "7", "B", "B0", "$$B7", "B7x", "ABCD1"] {
            assert!(bad.parse::<CellRef>().is_err(), "{bad}");
        }
    }

    #[test]
    fn define_refuses_duplicates() {
        let mut m = WorkbookModel::new("s");
        assert!(m.define(CellRef::new(1, 1), CellValue::Number(1.0)));
        assert!(!m.define(CellRef::new(1, 1), CellValue::Number(2.0)));
        assert_eq!(m.get(CellRef::new(1, 1)), Some(&CellValue::Number(1.0)));
    }

    proptest! {
        #[test]
        fn display_parse_round_trip(row in 1u32..1_048_576, col in 1u32..16_384) {
            let c = CellRef::new(row, col);
            prop_assert_eq!(c.to_string().parse::<CellRef>().unwrap(), c);
        }
    }
}
