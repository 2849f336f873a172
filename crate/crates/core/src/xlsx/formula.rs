//! A small spreadsheet-formula evaluator.
//!
//! Covers exactly the portable subset that generated workbooks use:
//! arithmetic (`+ - * / ^`), comparisons, string literals, absolute and
//! relative references, ranges, and the functions `SIN COS ASIN SQRT RADIANS
//! PI IF ABS MIN MAX SUMPRODUCT`. It is used to fill cached values into
//! workbooks and to check that the embedded formulas agree with native code.
//!
//! Precedence follows the usual spreadsheet convention, lowest first:
//! comparison, `+ -`, `* /`, `^`, unary sign, range.

use std::cell::RefCell;
use std::collections::{HashMap, HashSet};

use thiserror::Error;

use super::model::{CellRef, CellValue, FormulaValue, WorkbookModel};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FormulaError {
    #[error("parse error in {expr:?} at {pos}: {message}")]
    Parse {
        expr: String,
        pos: usize,
        message: String,
    },
    #[error("#DIV/0!")]
    DivZero,
    #[error("#NUM!: {0}")]
    Num(String),
    #[error("#VALUE!: {0}")]
    Value(String),
    #[error("#NAME?: unknown function {0}")]
    Name(String),
    #[error("circular reference through {0}")]
    Cycle(CellRef),
    #[error("in {cell}: {source}")]
    InCell {
        cell: CellRef,
        #[source]
        source: Box<FormulaError>,
    },
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Number(f64),
    Text(String),
    Ident(String),
    Op(&'static str),
    LParen,
    RParen,
    Comma,
    Colon,
}

fn tokenize(expr: &str) -> Result<Vec<(usize, Token)>, FormulaError> {
    let err = |pos: usize, message: &str| FormulaError::Parse {
        expr: expr.to_string(),
        pos,
        message: message.to_string(),
    };
    let bytes = expr.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        let start = i;
        match c {
            b' ' | b'\t' | b'\n' | b'\r' => {
                i += 1;
                continue;
            }
            b'0'..=b'9' | b'.' => {
                while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                    i += 1;
                }
                if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                    let mut j = i + 1;
                    if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                        j += 1;
                    }
                    if j < bytes.len() && bytes[j].is_ascii_digit() {
                        i = j;
                        while i < bytes.len() && bytes[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let v: f64 = expr[start..i]
                    .parse()
                    .map_err(|_| err(start, "malformed number"))?;
                out.push((start, Token::Number(v)));
                continue;
            }
            b'"' => {
                let mut s = String::new();
                i += 1;
                loop {
                    let rest = &expr[i..];
                    let Some(q) = rest.find('"') else {
                        return Err(err(start, "unterminated string"));
                    };
                    s.push_str(&rest[..q]);
                    i += q + 1;
                    if bytes.get(i) == Some(&b'"') {
                        s.push('"');
                        i += 1;
                    } else {
                        break;
                    }
                }
                out.push((start, Token::Text(s)));
                continue;
            }
            b'$' | b'A'..=b'Z' | b'a'..=b'z' | b'_' => {
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'$' || bytes[i] == b'_' || bytes[i] == b'.') {
                    i += 1;
                }
                out.push((start, Token::Ident(expr[start..i].to_string())));
                continue;
            }
            b'(' => out.push((start, Token::LParen)),
            b')' => out.push((start, Token::RParen)),
            b',' => out.push((start, Token::Comma)),
            b':' => out.push((start, Token::Colon)),
            b'+' => out.push((start, Token::Op("+"))),
            b'-' => out.push((start, Token::Op("-"))),
            b'*' => out.push((start, Token::Op("*"))),
            b'/' => out.push((start, Token::Op("/"))),
            b'^' => out.push((start, Token::Op("^"))),
            b'&' => out.push((start, Token::Op("&"))),
            b'=' => out.push((start, Token::Op("="))),
            b'<' => {
                let op = match bytes.get(i + 1) {
                    Some(b'=') => "<=",
                    Some(b'>') => "<>",
                    _ => "<",
                };
                i += op.len() - 1;
                out.push((start, Token::Op(op)));
            }
            b'>' => {
                let op = if bytes.get(i + 1) == Some(&b'=') { ">=" } else { ">" };
                i += op.len() - 1;
                out.push((start, Token::Op(op)));
            }
            _ => return Err(err(start, "unexpected character")),
        }
        i += 1;
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
    Concat,
    Eq,
    Ne,
    Lt,
    Le,
    Gt,
    Ge,
}

/// Parsed formula.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Number(f64),
    Text(String),
    Bool(bool),
    Ref(CellRef),
    Range(CellRef, CellRef),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(String, Vec<Expr>),
}

struct Parser<'a> {
    expr: &'a str,
    tokens: Vec<(usize, Token)>,
    pos: usize,
}

impl<'a> Parser<'a> {
    fn err(&self, message: impl Into<String>) -> FormulaError {
        let pos = self
            .tokens
            .get(self.pos)
            .map(|(p, _)| *p)
            .unwrap_or(self.expr.len());
        FormulaError::Parse {
            expr: self.expr.to_string(),
            pos,
            message: message.into(),
        }
    }

    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos).map(|(_, t)| t)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).map(|(_, t)| t.clone());
        self.pos += 1;
        t
    }

    fn expect(&mut self, t: Token) -> Result<(), FormulaError> {
        if self.peek() == Some(&t) {
            self.pos += 1;
            Ok(())
        } else {
            Err(self.err(format!("expected {t:?}")))
        }
    }

    fn peek_op(&self, ops: &[&'static str]) -> Option<&'static str> {
        match self.peek() {
            Some(Token::Op(o)) if ops.contains(o) => Some(o),
            _ => None,
        }
    }

    fn comparison(&mut self) -> Result<Expr, FormulaError> {
        let mut lhs = self.concat()?;
        while let Some(op) = self.peek_op(&["=", "<>", "<", "<=", ">", ">="]) {
            self.pos += 1;
            let rhs = self.concat()?;
            let op = match op {
                "=" => BinOp::Eq,
                "<>" => BinOp::Ne,
                "<" => BinOp::Lt,
                "<=" => BinOp::Le,
                ">" => BinOp::Gt,
                _ => BinOp::Ge,
            };
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn concat(&mut self) -> Result<Expr, FormulaError> {
        let mut lhs = self.additive()?;
        while self.peek_op(&["&"]).is_some() {
            self.pos += 1;
            let rhs = self.additive()?;
            lhs = Expr::Binary(BinOp::Concat, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn additive(&mut self) -> Result<Expr, FormulaError> {
        let mut lhs = self.multiplicative()?;
        while let Some(op) = self.peek_op(&["+", "-"]) {
            self.pos += 1;
            let rhs = self.multiplicative()?;
            let op = if op == "+" { BinOp::Add } else { BinOp::Sub };
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn multiplicative(&mut self) -> Result<Expr, FormulaError> {
        let mut lhs = self.power()?;
        while let Some(op) = self.peek_op(&["*", "/"]) {
            self.pos += 1;
            let rhs = self.power()?;
            let op = if op == "*" { BinOp::Mul } else { BinOp::Div };
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    // `^` is left-associative in spreadsheets: 2^3^2 = 64.
    fn power(&mut self) -> Result<Expr, FormulaError> {
        let mut lhs = self.unary()?;
        while self.peek_op(&["^"]).is_some() {
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Binary(BinOp::Pow, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, FormulaError> {
        match self.peek_op(&["-", "+"]) {
            Some("-") => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some(_) => {
                self.pos += 1;
                self.unary()
            }
            None => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Expr, FormulaError> {
        match self.next() {
            Some(Token::Number(v)) => Ok(Expr::Number(v)),
            Some(Token::Text(s)) => Ok(Expr::Text(s)),
            Some(Token::LParen) => {
                let e = self.comparison()?;
                self.expect(Token::RParen)?;
                Ok(e)
            }
            Some(Token::Ident(name)) => {
                if self.peek() == Some(&Token::LParen) {
                    self.pos += 1;
                    let mut args = Vec::new();
                    if self.peek() != Some(&Token::RParen) {
                        loop {
                            args.push(self.comparison()?);
                            if self.peek() == Some(&Token::Comma) {
                                self.pos += 1;
                            } else {
                                break;
                            }
                        }
                    }
                    self.expect(Token::RParen)?;
                    return Ok(Expr::Call(name.to_ascii_uppercase(), args));
                }
                match name.to_ascii_uppercase().as_str() {
                    "TRUE" => return Ok(Expr::Bool(true)),
                    "FALSE" => return Ok(Expr::Bool(false)),
                    _ => {}
                }
                let start: CellRef = name.parse().map_err(|_| {
                    self.pos -= 1;
                    self.err(format!("unknown name {name}"))
                })?;
                if self.peek() == Some(&Token::Colon) {
                    self.pos += 1;
                    match self.next() {
                        Some(Token::Ident(end)) => {
                            let end: CellRef = end.parse().map_err(|_| self.err("bad range end"))?;
                            Ok(Expr::Range(start, end))
                        }
                        _ => Err(self.err("expected range end")),
                    }
                } else {
                    Ok(Expr::Ref(start))
                }
            }
            _ => {
                self.pos = self.pos.saturating_sub(1);
                Err(self.err("expected a value"))
            }
        }
    }
}

pub fn parse_formula(expr: &str) -> Result<Expr, FormulaError> {
    let expr = expr.strip_prefix('=').unwrap_or(expr);
    let mut p = Parser {
        expr,
        tokens: tokenize(expr)?,
        pos: 0,
    };
    let e = p.comparison()?;
    if p.pos != p.tokens.len() {
        return Err(p.err("trailing input"));
    }
    Ok(e)
}

impl Expr {
    /// Every cell the expression reads, ranges expanded.
    pub fn references(&self) -> Vec<CellRef> {
        let mut out = Vec::new();
        self.collect_refs(&mut out);
        out
    }

    fn collect_refs(&self, out: &mut Vec<CellRef>) {
        match self {
            Expr::Ref(c) => out.push(*c),
            Expr::Range(a, b) => out.extend(range_cells(*a, *b)),
            Expr::Neg(e) => e.collect_refs(out),
            Expr::Binary(_, l, r) => {
                l.collect_refs(out);
                r.collect_refs(out);
            }
            Expr::Call(_, args) => args.iter().for_each(|a| a.collect_refs(out)),
            Expr::Number(_) | Expr::Text(_) | Expr::Bool(_) => {}
        }
    }
}

fn range_cells(a: CellRef, b: CellRef) -> impl Iterator<Item = CellRef> {
    let (r0, r1) = (a.row.min(b.row), a.row.max(b.row));
    let (c0, c1) = (a.col.min(b.col), a.col.max(b.col));
    (r0..=r1).flat_map(move |r| (c0..=c1).map(move |c| CellRef { row: r, col: c }))
}

/// Result of evaluating an expression.
#[derive(Debug, Clone, PartialEq)]
pub enum Value {
    Number(f64),
    Text(String),
    Bool(bool),
    Blank,
    Array(Vec<Value>),
}

impl Value {
    pub fn as_number(&self) -> Result<f64, FormulaError> {
        match self {
            Value::Number(v) => Ok(*v),
            Value::Bool(b) => Ok(if *b { 1.0 } else { 0.0 }),
            Value::Blank => Ok(0.0),
            Value::Text(s) => s
                .trim()
                .parse()
                .map_err(|_| FormulaError::Value(format!("text {s:?} is not a number"))),
            Value::Array(_) => Err(FormulaError::Value("range used as a scalar".into())),
        }
    }

    fn truthy(&self) -> Result<bool, FormulaError> {
        match self {
            Value::Text(s) if s.eq_ignore_ascii_case("true") => Ok(true),
            Value::Text(s) if s.eq_ignore_ascii_case("false") => Ok(false),
            other => Ok(other.as_number()? != 0.0),
        }
    }

    fn as_text(&self) -> Result<String, FormulaError> {
        Ok(match self {
            Value::Text(s) => s.clone(),
            Value::Number(v) => v.to_string(),
            Value::Bool(b) => if *b { "TRUE" } else { "FALSE" }.to_string(),
            Value::Blank => String::new(),
            Value::Array(_) => return Err(FormulaError::Value("range used as a scalar".into())),
        })
    }
}

fn compare(op: BinOp, l: &Value, r: &Value) -> Result<bool, FormulaError> {
    use std::cmp::Ordering;
    let ord = match (l, r) {
        (Value::Text(a), Value::Text(b)) => a.to_lowercase().cmp(&b.to_lowercase()),
        (Value::Text(a), Value::Blank) => a.as_str().cmp(""),
        (Value::Blank, Value::Text(b)) => "".cmp(b.as_str()),
        // numbers sort before text
        (Value::Text(_), _) => Ordering::Greater,
        (_, Value::Text(_)) => Ordering::Less,
        _ => {
            let (a, b) = (l.as_number()?, r.as_number()?);
            a.partial_cmp(&b)
                .ok_or_else(|| FormulaError::Num("comparison with NaN".into()))?
        }
    };
    Ok(match op {
        BinOp::Eq => ord == Ordering::Equal,
        BinOp::Ne => ord != Ordering::Equal,
        BinOp::Lt => ord == Ordering::Less,
        BinOp::Le => ord != Ordering::Greater,
        BinOp::Gt => ord == Ordering::Greater,
        BinOp::Ge => ord != Ordering::Less,
        _ => unreachable!("not a comparison"),
    })
}

fn finite(v: f64, what: &str) -> Result<Value, FormulaError> {
    if v.is_finite() {
        Ok(Value::Number(v))
    } else {
        Err(FormulaError::Num(format!("{what} produced {v}")))
    }
}

/// Evaluates formulas against one workbook, memoizing cell results.
pub struct Evaluator<'m> {
    model: &'m WorkbookModel,
    memo: RefCell<HashMap<CellRef, Value>>,
    active: RefCell<HashSet<CellRef>>,
}

impl<'m> Evaluator<'m> {
    pub fn new(model: &'m WorkbookModel) -> Self {
        Evaluator {
            model,
            memo: RefCell::new(HashMap::new()),
            active: RefCell::new(HashSet::new()),
        }
    }

    pub fn cell(&self, at: CellRef) -> Result<Value, FormulaError> {
        if let Some(v) = self.memo.borrow().get(&at) {
            return Ok(v.clone());
        }
        let value = match self.model.get(at) {
            None => Value::Blank,
            Some(CellValue::Number(v)) => Value::Number(*v),
            Some(CellValue::Text(s)) => Value::Text(s.clone()),
            Some(CellValue::Formula { expr, .. }) => {
                if !self.active.borrow_mut().insert(at) {
                    return Err(FormulaError::Cycle(at));
                }
                let result = parse_formula(expr).and_then(|e| self.eval(&e));
                self.active.borrow_mut().remove(&at);
                result.map_err(|source| match source {
                    e @ (FormulaError::InCell { .. } | FormulaError::Cycle(_)) => e,
                    e => FormulaError::InCell {
                        cell: at,
                        source: Box::new(e),
                    },
                })?
            }
        };
        self.memo.borrow_mut().insert(at, value.clone());
        Ok(value)
    }

    pub fn number(&self, at: CellRef) -> Result<f64, FormulaError> {
        self.cell(at)?.as_number()
    }

    /// Evaluates a free-standing expression in the context of the workbook.
    pub fn evaluate(&self, expr: &str) -> Result<Value, FormulaError> {
        self.eval(&parse_formula(expr)?)
    }

    fn eval(&self, e: &Expr) -> Result<Value, FormulaError> {
        match e {
            Expr::Number(v) => Ok(Value::Number(*v)),
            Expr::Text(s) => Ok(Value::Text(s.clone())),
            Expr::Bool(b) => Ok(Value::Bool(*b)),
            Expr::Ref(c) => self.cell(*c),
            Expr::Range(a, b) => range_cells(*a, *b)
                .map(|c| self.cell(c))
                .collect::<Result<Vec<_>, _>>()
                .map(Value::Array),
            Expr::Neg(inner) => finite(-self.eval(inner)?.as_number()?, "negation"),
            Expr::Binary(op, l, r) => {
                let (l, r) = (self.eval(l)?, self.eval(r)?);
                match op {
                    BinOp::Add => finite(l.as_number()? + r.as_number()?, "+"),
                    BinOp::Sub => finite(l.as_number()? - r.as_number()?, "-"),
                    BinOp::Mul => finite(l.as_number()? * r.as_number()?, "*"),
                    BinOp::Div => {
                        let d = r.as_number()?;
                        if d == 0.0 {
                            return Err(FormulaError::DivZero);
                        }
                        finite(l.as_number()? / d, "/")
                    }
                    BinOp::Pow => finite(l.as_number()?.powf(r.as_number()?), "^"),
                    BinOp::Concat => Ok(Value::Text(l.as_text()? + &r.as_text()?)),
                    cmp => Ok(Value::Bool(compare(*cmp, &l, &r)?)),
                }
            }
            Expr::Call(name, args) => self.call(name, args),
        }
    }

    fn scalar_arg(&self, name: &str, args: &[Expr], n: usize) -> Result<Vec<f64>, FormulaError> {
        if args.len() != n {
            return Err(FormulaError::Value(format!("{name} takes {n} argument(s), got {}", args.len())));
        }
        args.iter().map(|a| self.eval(a)?.as_number()).collect()
    }

    fn call(&self, name: &str, args: &[Expr]) -> Result<Value, FormulaError> {
        match name {
            "PI" => {
                self.scalar_arg(name, args, 0)?;
                Ok(Value::Number(std::f64::consts::PI))
            }
            "SIN" => finite(self.scalar_arg(name, args, 1)?[0].sin(), name),
            "COS" => finite(self.scalar_arg(name, args, 1)?[0].cos(), name),
            "ABS" => finite(self.scalar_arg(name, args, 1)?[0].abs(), name),
            "RADIANS" => finite(self.scalar_arg(name, args, 1)?[0].to_radians(), name),
            "ASIN" => {
                let x = self.scalar_arg(name, args, 1)?[0];
                if !(-1.0..=1.0).contains(&x) {
                    return Err(FormulaError::Num(format!("ASIN({x})")));
                }
                finite(x.asin(), name)
            }
            "SQRT" => {
                let x = self.scalar_arg(name, args, 1)?[0];
                if x < 0.0 {
                    return Err(FormulaError::Num(format!("SQRT({x})")));
                }
                finite(x.sqrt(), name)
            }
            "IF" => {
                if !(2..=3).contains(&args.len()) {
                    return Err(FormulaError::Value("IF takes 2 or 3 arguments".into()));
                }
                if self.eval(&args[0])?.truthy()? {
                    self.eval(&args[1])
                } else if let Some(otherwise) = args.get(2) {
                    self.eval(otherwise)
                } else {
                    Ok(Value::Bool(false))
                }
            }
            "MIN" | "MAX" => {
                let mut acc: Option<f64> = None;
                for a in args {
                    let vals = match self.eval(a)? {
                        // ranges contribute only their numeric cells
                        Value::Array(items) => items
                            .into_iter()
                            .filter_map(|v| match v {
                                Value::Number(n) => Some(n),
                                _ => None,
                            })
                            .collect(),
                        v => vec![v.as_number()?],
                    };
                    for v in vals {
                        acc = Some(match acc {
                            None => v,
                            Some(a) if name == "MIN" => a.min(v),
                            Some(a) => a.max(v),
                        });
                    }
                }
                Ok(Value::Number(acc.unwrap_or(0.0)))
            }
            "SUMPRODUCT" => {
                if args.is_empty() {
                    return Err(FormulaError::Value("SUMPRODUCT needs arguments".into()));
                }
                let arrays = args
                    .iter()
                    .map(|a| match self.eval(a)? {
                        Value::Array(items) => Ok(items),
                        scalar => Ok(vec![scalar]),
                    })
                    .collect::<Result<Vec<_>, FormulaError>>()?;
                let len = arrays[0].len();
                if arrays.iter().any(|a| a.len() != len) {
                    return Err(FormulaError::Value("SUMPRODUCT ranges differ in size".into()));
                }
                // non-numeric entries count as zero
                let num = |v: &Value| match v {
                    Value::Number(n) => *n,
                    _ => 0.0,
                };
                let mut total = 0.0;
                for i in 0..len {
                    total += arrays.iter().map(|a| num(&a[i])).product::<f64>();
                }
                finite(total, name)
            }
            other => Err(FormulaError::Name(other.to_string())),
        }
    }
}

/// Re-evaluates every formula cell and stores the result as its cached value.
pub fn recalculate(model: &mut WorkbookModel) -> Result<(), FormulaError> {
    let results = {
        let ev = Evaluator::new(model);
        let mut results = Vec::new();
        for (at, v) in &model.cells {
            if let CellValue::Formula { .. } = v {
                let cached = match ev.cell(*at)? {
                    Value::Number(n) => FormulaValue::Number(n),
                    Value::Text(s) => FormulaValue::Text(s),
                    Value::Bool(b) => FormulaValue::Bool(b),
                    Value::Blank => FormulaValue::Number(0.0),
                    Value::Array(_) => {
                        return Err(FormulaError::InCell {
                            cell: *at,
                            source: Box::new(FormulaError::Value("formula yields a range".into())),
                        })
                    }
                };
                results.push((*at, cached));
            }
        }
        results
    };
    for (at, value) in results {
        if let Some(CellValue::Formula { cached, .. }) = model.cells.get_mut(&at) {
            *cached = value;
        }
    }
    Ok(())
}
