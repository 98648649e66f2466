use std::fmt::Write as _;

use serde_json::{Map, Value};

use crate::sweep::RowStatus;

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Num(f64),
    Text(String),
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Num(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<&RowStatus> for Cell {
    fn from(s: &RowStatus) -> Self {
        Cell::Text(s.label())
    }
}

/// In-memory result table with a fixed column schema.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
    pub flagged: usize,
}

impl Table {
    pub fn new(columns: Vec<&'static str>) -> Self {
        Self { columns, rows: Vec::new(), flagged: 0 }
    }

    pub fn push(&mut self, row: Vec<Cell>, status: &RowStatus) {
        debug_assert_eq!(row.len() + 1, self.columns.len());
        let mut row = row;
        row.push(status.into());
        if !status.is_ok() {
            self.flagged += 1;
        }
        self.rows.push(row);
    }

    /// Comma-separated text. Numbers use Rust's shortest round-trip
    /// formatting, so output is identical across platforms.
    pub fn to_csv(&self) -> String {
        let mut out = self.columns.join(",");
        out.push('\n');
        for row in &self.rows {
            for (i, cell) in row.iter().enumerate() {
                if i > 0 {
                    out.push(',');
                }
                match cell {
                    Cell::Num(v) => write!(out, "{v:?}").unwrap(),
                    Cell::Text(s) => out.push_str(s),
                }
            }
            out.push('\n');
        }
        out
    }

    /// Array of row objects; non-finite numbers become `null`.
    pub fn to_json(&self) -> String {
        let rows: Vec<Value> = self
            .rows
            .iter()
            .map(|row| {
                let mut m = Map::new();
                for (col, cell) in self.columns.iter().zip(row) {
                    let v = match cell {
                        Cell::Num(x) => serde_json::Number::from_f64(*x).map(Value::Number).unwrap_or(Value::Null),
                        Cell::Text(s) => Value::String(s.clone()),
                    };
                    m.insert(col.to_string(), v);
                }
                Value::Object(m)
            })
            .collect();
        let mut s = serde_json::to_string_pretty(&rows).expect("plain JSON values serialize");
        s.push('\n');
        s
    }

    pub fn column(&self, name: &str) -> Option<Vec<&Cell>> {
        let k = self.columns.iter().position(|c| *c == name)?;
        Some(self.rows.iter().map(|r| &r[k]).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_uses_round_trip_numbers() {
        let mut t = Table::new(vec!["x", "y", "status"]);
        t.push(vec![0.1.into(), 1e-20.into()], &RowStatus::Ok);
        t.push(vec![(-3.0).into(), f64::NAN.into()], &RowStatus::Failed("no, light".into()));
        let csv = t.to_csv();
        assert_eq!(csv, "x,y,status\n0.1,1e-20,ok\n-3.0,NaN,failed:no; light\n");
        assert_eq!(t.flagged, 1);
        for line in csv.lines().skip(1) {
            let x: f64 = line.split(',').next().unwrap().parse().unwrap();
            assert!(x == 0.1 || x == -3.0);
        }
    }

    #[test]
    fn json_rows_are_objects() {
        let mut t = Table::new(vec!["x", "status"]);
        t.push(vec![f64::INFINITY.into()], &RowStatus::Ok);
        let v: Value = serde_json::from_str(&t.to_json()).unwrap();
        assert_eq!(v[0]["x"], Value::Null);
        assert_eq!(v[0]["status"], "ok");
    }
}
