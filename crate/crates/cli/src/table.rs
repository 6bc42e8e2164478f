//! Versioned CSV tables.

use std::fmt::Write;

/// Plain table rendered as CSV with a leading `# <schema>` line.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    pub schema: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(schema: &str, header: &[&str]) -> Self {
        Self { schema: schema.to_string(), header: header.iter().map(|s| s.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        writeln!(out, "# {}", self.schema).unwrap();
        writeln!(out, "{}", self.header.join(",")).unwrap();
        for r in &self.rows {
            writeln!(out, "{}", r.join(",")).unwrap();
        }
        out
    }
}

/// Shortest representation that parses back to the same `f64`.
pub fn num(x: f64) -> String {
    format!("{x:?}")
}

pub fn int(x: impl std::fmt::Display) -> String {
    x.to_string()
}
