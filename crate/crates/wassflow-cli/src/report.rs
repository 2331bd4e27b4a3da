//! Checks, experiment outcomes and their serialized form.

use std::collections::BTreeMap;
use std::io;

use serde::ser::Serialize;
use serde::Serialize as DeriveSerialize;
use serde_json::ser::Formatter;

/// Acceptance test applied to one measured value.
#[derive(Clone, Copy, Debug, PartialEq, DeriveSerialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Bound {
    AtMost { limit: f64 },
    AtLeast { limit: f64 },
    Range { lo: f64, hi: f64 },
    /// `value` is `1` for a property that holds and `0` otherwise.
    Holds,
}

impl Bound {
    pub fn admits(&self, v: f64) -> bool {
        match *self {
            Bound::AtMost { limit } => v <= limit,
            Bound::AtLeast { limit } => v >= limit,
            Bound::Range { lo, hi } => (lo..=hi).contains(&v),
            Bound::Holds => v == 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, DeriveSerialize)]
pub struct Check {
    pub name: String,
    /// Acceptance criterion this check belongs to.
    pub criterion: u8,
    pub value: f64,
    pub bound: Bound,
    pub passed: bool,
}

impl Check {
    pub fn new(criterion: u8, name: impl Into<String>, value: f64, bound: Bound) -> Self {
        let passed = bound.admits(value);
        Check { name: name.into(), criterion, value, bound, passed }
    }

    pub fn holds(criterion: u8, name: impl Into<String>, ok: bool) -> Self {
        Self::new(criterion, name, if ok { 1.0 } else { 0.0 }, Bound::Holds)
    }
}

/// CSV table built row by row with 17-significant-digit floats.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub name: String,
    text: String,
}

impl Table {
    pub fn new(name: impl Into<String>, header: &[&str]) -> Self {
        Table { name: name.into(), text: format!("{}\n", header.join(",")) }
    }

    /// Adds a row from preformatted cells.
    pub fn row(&mut self, cells: &[Cell]) {
        let line: Vec<String> = cells.iter().map(Cell::render).collect();
        self.text.push_str(&line.join(","));
        self.text.push('\n');
    }

    pub fn from_text(name: impl Into<String>, text: String) -> Self {
        Table { name: name.into(), text }
    }

    pub fn text(&self) -> &str {
        &self.text
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Cell {
    F(f64),
    I(i64),
    S(String),
}

impl Cell {
    fn render(&self) -> String {
        match self {
            Cell::F(v) => fmt_f64(*v),
            Cell::I(v) => v.to_string(),
            Cell::S(s) => s.clone(),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::I(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}

impl From<String> for Cell {
    fn from(v: String) -> Self {
        Cell::S(v)
    }
}

/// Builds a CSV row from heterogeneous values.
#[macro_export]
macro_rules! row {
    ($($x:expr),* $(,)?) => { &[$($crate::report::Cell::from($x)),*] };
}

/// `v` with 17 significant digits; non-finite values as `nan`, `inf`, `-inf`.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{v:.16e}")
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct Outcome {
    pub checks: Vec<Check>,
    pub metrics: BTreeMap<String, f64>,
    pub tables: Vec<Table>,
}

impl Outcome {
    pub fn check(&mut self, c: Check) {
        self.checks.push(c);
    }

    pub fn metric(&mut self, name: impl Into<String>, v: f64) {
        self.metrics.insert(name.into(), v);
    }

    pub fn table(&mut self, t: Table) {
        self.tables.push(t);
    }

    pub fn passed(&self) -> bool {
        self.checks.iter().all(|c| c.passed)
    }
}

#[derive(Clone, Debug, PartialEq, DeriveSerialize)]
pub struct ExperimentReport {
    pub experiment: String,
    pub passed: bool,
    pub criteria: Vec<u8>,
    pub checks: Vec<Check>,
    pub metrics: BTreeMap<String, f64>,
    pub files: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, DeriveSerialize)]
pub struct RunReport {
    pub passed: bool,
    pub seed: u64,
    pub experiments: Vec<ExperimentReport>,
}

/// `serde_json` formatter printing every float with 17 significant digits.
#[derive(Clone, Copy, Debug, Default)]
pub struct FixedDigits {
    indent: usize,
}

impl FixedDigits {
    fn newline<W: ?Sized + io::Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(b"\n")?;
        for _ in 0..self.indent {
            w.write_all(b"  ")?;
        }
        Ok(())
    }
}

impl Formatter for FixedDigits {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f64) -> io::Result<()> {
        w.write_all(format!("{v:.16e}").as_bytes())
    }

    fn write_f32<W: ?Sized + io::Write>(&mut self, w: &mut W, v: f32) -> io::Result<()> {
        self.write_f64(w, v as f64)
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.indent += 1;
        w.write_all(b"[")
    }

    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.indent -= 1;
        self.newline(w)?;
        w.write_all(b"]")
    }

    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        if !first {
            w.write_all(b",")?;
        }
        self.newline(w)
    }

    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.indent += 1;
        w.write_all(b"{")
    }

    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.indent -= 1;
        self.newline(w)?;
        w.write_all(b"}")
    }

    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        if !first {
            w.write_all(b",")?;
        }
        self.newline(w)
    }

    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        w.write_all(b": ")
    }
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    let mut out = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut out, FixedDigits::default());
    value.serialize(&mut ser).expect("serializing to memory cannot fail");
    out.push(b'\n');
    String::from_utf8(out).expect("serde_json emits UTF-8")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_have_seventeen_significant_digits() {
        assert_eq!(fmt_f64(0.1), "1.0000000000000001e-1");
        let j = to_json(&serde_json::json!({"x": 0.1, "y": [1.5, f64::NAN]}));
        assert!(j.contains("1.0000000000000001e-1"));
        assert!(j.contains("null"));
        let back: serde_json::Value = serde_json::from_str(&j).unwrap();
        assert_eq!(back["x"].as_f64(), Some(0.1));
    }

    #[test]
    fn bounds() {
        assert!(Bound::AtMost { limit: 1.0 }.admits(1.0));
        assert!(!Bound::AtLeast { limit: 1.0 }.admits(0.5));
        assert!(Bound::Range { lo: 3.0, hi: 5.0 }.admits(4.0));
        assert!(!Check::holds(1, "x", false).passed);
    }

    #[test]
    fn table_rows() {
        let mut t = Table::new("a", &["k", "v"]);
        t.row(row![3usize, 0.5]);
        assert_eq!(t.text(), "k,v\n3,5.0000000000000000e-1\n");
    }
}
