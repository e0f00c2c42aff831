//! Tabular output shared by every subcommand.

use std::io::Write;

use anyhow::Result;
use clap::ValueEnum;
use serde_json::{Map, Value};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Pretty,
    Csv,
    Json,
}

#[derive(Debug, Clone)]
pub enum Cell {
    Num(f64),
    Int(i64),
    Text(String),
    Bool(bool),
    Empty,
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Num(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<bool> for Cell {
    fn from(x: bool) -> Self {
        Cell::Bool(x)
    }
}

impl From<&str> for Cell {
    fn from(x: &str) -> Self {
        Cell::Text(x.to_string())
    }
}

impl From<String> for Cell {
    fn from(x: String) -> Self {
        Cell::Text(x)
    }
}

impl<T: Into<Cell>> From<Option<T>> for Cell {
    fn from(x: Option<T>) -> Self {
        x.map_or(Cell::Empty, Into::into)
    }
}

/// Rounds to `digits` significant digits and prints the shortest form.
pub fn fmt_num(x: f64, digits: usize) -> String {
    if !x.is_finite() {
        return format!("{x}");
    }
    if x == 0.0 {
        return "0".into();
    }
    let rounded: f64 = format!("{:.*e}", digits.max(1) - 1, x).parse().expect("valid float");
    let mag = rounded.abs();
    if !(1e-5..1e16).contains(&mag) {
        format!("{rounded:e}")
    } else {
        format!("{rounded}")
    }
}

impl Cell {
    fn text(&self, digits: usize) -> String {
        match self {
            Cell::Num(x) => fmt_num(*x, digits),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Bool(b) => b.to_string(),
            Cell::Empty => String::new(),
        }
    }

    fn json(&self, digits: usize) -> Value {
        match self {
            Cell::Num(x) if x.is_finite() => {
                let r: f64 = fmt_num(*x, digits).parse().expect("valid float");
                serde_json::Number::from_f64(r).map_or(Value::Null, Value::Number)
            }
            Cell::Num(x) => Value::String(x.to_string()),
            Cell::Int(i) => Value::from(*i),
            Cell::Text(s) => Value::String(s.clone()),
            Cell::Bool(b) => Value::Bool(*b),
            Cell::Empty => Value::Null,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Table {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

impl Table {
    pub fn new(name: &str, columns: &[&str]) -> Self {
        Table { name: name.into(), columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len(), "table {}", self.name);
        self.rows.push(row);
    }

    /// Two-column key/value table.
    pub fn summary(name: &str, pairs: Vec<(&str, Cell)>) -> Self {
        let mut t = Table::new(name, &["key", "value"]);
        for (k, v) in pairs {
            t.push(vec![k.into(), v]);
        }
        t
    }
}

#[derive(Debug, Default)]
pub struct Report {
    pub tables: Vec<Table>,
}

impl Report {
    pub fn add(&mut self, t: Table) {
        self.tables.push(t);
    }

    pub fn write(&self, out: &mut dyn Write, format: Format, digits: usize) -> Result<()> {
        match format {
            Format::Pretty => self.pretty(out, digits),
            Format::Csv => self.csv(out, digits),
            Format::Json => {
                let mut root = Map::new();
                for t in &self.tables {
                    let rows = t
                        .rows
                        .iter()
                        .map(|r| {
                            let mut obj = Map::new();
                            for (c, cell) in t.columns.iter().zip(r) {
                                obj.insert(c.clone(), cell.json(digits));
                            }
                            Value::Object(obj)
                        })
                        .collect();
                    root.insert(t.name.clone(), Value::Array(rows));
                }
                serde_json::to_writer_pretty(&mut *out, &Value::Object(root))?;
                writeln!(out)?;
                Ok(())
            }
        }
    }

    fn pretty(&self, out: &mut dyn Write, digits: usize) -> Result<()> {
        for (k, t) in self.tables.iter().enumerate() {
            if k > 0 {
                writeln!(out)?;
            }
            writeln!(out, "[{}]", t.name)?;
            let cells: Vec<Vec<String>> = t.rows.iter().map(|r| r.iter().map(|c| c.text(digits)).collect()).collect();
            let widths: Vec<usize> = (0..t.columns.len())
                .map(|c| cells.iter().map(|r| r[c].chars().count()).chain([t.columns[c].len()]).max().unwrap_or(0))
                .collect();
            let line = |vals: Vec<&str>| {
                vals.iter()
                    .zip(&widths)
                    .map(|(v, w)| format!("{v:<w$}"))
                    .collect::<Vec<_>>()
                    .join("  ")
                    .trim_end()
                    .to_string()
            };
            writeln!(out, "{}", line(t.columns.iter().map(String::as_str).collect()))?;
            for r in &cells {
                writeln!(out, "{}", line(r.iter().map(String::as_str).collect()))?;
            }
        }
        Ok(())
    }

    /// One CSV block per table; blocks after the first are preceded by a
    /// blank line and a `# name` line. Single-table reports are plain CSV.
    fn csv(&self, out: &mut dyn Write, digits: usize) -> Result<()> {
        for (k, t) in self.tables.iter().enumerate() {
            if self.tables.len() > 1 {
                if k > 0 {
                    writeln!(out)?;
                }
                writeln!(out, "# {}", t.name)?;
            }
            let mut w = csv::Writer::from_writer(&mut *out);
            w.write_record(&t.columns)?;
            for r in &t.rows {
                w.write_record(r.iter().map(|c| c.text(digits)))?;
            }
            w.flush()?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn significant_digits() {
        assert_eq!(fmt_num((3.0 - 2f64.sqrt()) / 2.0, 9), "0.792893219");
        assert_eq!(fmt_num(0.75, 9), "0.75");
        assert_eq!(fmt_num(2f64.sqrt(), 3), "1.41");
        assert_eq!(fmt_num(-1234567.891, 4), "-1235000");
        assert_eq!(fmt_num(0.0, 9), "0");
        assert_eq!(fmt_num(9.370282331e-14, 3), "9.37e-14");
    }

    #[test]
    fn csv_single_table_is_plain() {
        let mut r = Report::default();
        let mut t = Table::new("x", &["a", "b"]);
        t.push(vec![1.0f64.into(), "y".into()]);
        r.add(t);
        let mut buf = Vec::new();
        r.write(&mut buf, Format::Csv, 9).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "a,b\n1,y\n");
    }
}
