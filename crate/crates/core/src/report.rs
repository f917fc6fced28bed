//! Comma-separated result files and the pass/fail summary.

use std::fmt::Display;
use std::fs;
use std::io;
use std::path::Path;

pub const VERSION: &str = concat!("stationary-sde ", env!("CARGO_PKG_VERSION"));

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub name: String,
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(name: &str, header: &[&str]) -> Self {
        Self {
            name: name.to_string(),
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    /// Comment header (`# ` prefixed provenance lines), then the column
    /// header and rows.
    pub fn render(&self, provenance: &str) -> String {
        let mut out = format!("# {VERSION}\n");
        for line in provenance.lines() {
            out.push_str("# ");
            out.push_str(line);
            out.push('\n');
        }
        out.push_str(&self.header.join(","));
        out.push('\n');
        for row in &self.rows {
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn write(&self, dir: &Path, provenance: &str) -> io::Result<()> {
        fs::write(
            dir.join(format!("{}.csv", self.name)),
            self.render(provenance),
        )
    }
}

/// Formats a row of displayable cells.
#[macro_export]
macro_rules! row {
    ($($x:expr),* $(,)?) => {
        vec![$($x.to_string()),*]
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: String,
    pub statistic: f64,
    pub threshold: String,
    pub pass: bool,
}

impl Check {
    pub fn below(name: impl Display, statistic: f64, limit: f64) -> Self {
        Self {
            name: name.to_string(),
            statistic,
            threshold: format!("<{limit}"),
            pass: statistic < limit,
        }
    }

    pub fn above(name: impl Display, statistic: f64, limit: f64) -> Self {
        Self {
            name: name.to_string(),
            statistic,
            threshold: format!(">{limit}"),
            pass: statistic > limit,
        }
    }

    pub fn at_most(name: impl Display, statistic: f64, limit: f64) -> Self {
        Self {
            name: name.to_string(),
            statistic,
            threshold: format!("<={limit}"),
            pass: statistic <= limit,
        }
    }

    /// Informational row that never fails.
    pub fn report(name: impl Display, statistic: f64) -> Self {
        Self {
            name: name.to_string(),
            statistic,
            threshold: "report".to_string(),
            pass: true,
        }
    }
}

pub fn summary_table(checks: &[Check]) -> Table {
    let mut t = Table::new("summary", &["check_name", "statistic", "threshold", "pass"]);
    for c in checks {
        t.push(row![c.name, c.statistic, c.threshold, c.pass]);
    }
    t
}
