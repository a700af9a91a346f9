use std::fmt::Write as _;
use std::str::FromStr;

use crate::align::TableGrid;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExportFormat {
    Csv,
    Latex,
    Json,
}

impl FromStr for ExportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "latex" | "tex" => Ok(Self::Latex),
            "json" => Ok(Self::Json),
            other => Err(Error::InvalidArgument(format!("unknown export format {other:?}"))),
        }
    }
}

pub fn export(grid: &TableGrid, format: ExportFormat) -> String {
    match format {
        ExportFormat::Csv => to_csv(grid),
        ExportFormat::Latex => to_latex(grid),
        ExportFormat::Json => {
            let mut s = serde_json::to_string_pretty(grid).expect("grid serializes");
            s.push('\n');
            s
        }
    }
}

pub fn grid_from_json(text: &str) -> Result<TableGrid> {
    let grid: TableGrid = serde_json::from_str(text)?;
    if grid.cells.len() != grid.n_rows || grid.cells.iter().any(|r| r.len() != grid.n_cols) {
        return Err(Error::Parse("grid shape does not match n_rows/n_cols".into()));
    }
    Ok(grid)
}

fn csv_field(s: &str) -> String {
    if s.contains([',', '"', '\n', '\r']) {
        format!("\"{}\"", s.replace('"', "\"\""))
    } else {
        s.to_string()
    }
}

fn to_csv(grid: &TableGrid) -> String {
    let mut out = String::new();
    for row in &grid.cells {
        let fields: Vec<String> = row.iter().map(|c| csv_field(&c.text)).collect();
        out.push_str(&fields.join(","));
        out.push('\n');
    }
    out
}

fn latex_escape(s: &str) -> String {
    let mut out = String::with_capacity(s.len());
    for c in s.chars() {
        match c {
            '&' | '%' | '$' | '#' | '_' | '{' | '}' => {
                out.push('\\');
                out.push(c);
            }
            '~' => out.push_str("\\textasciitilde{}"),
            '^' => out.push_str("\\textasciicircum{}"),
            '\\' => out.push_str("\\textbackslash{}"),
            _ => out.push(c),
        }
    }
    out
}

fn to_latex(grid: &TableGrid) -> String {
    let mut out = String::new();
    let spec = if grid.n_cols == 0 { String::from("l") } else { "l".repeat(grid.n_cols) };
    writeln!(out, "\\begin{{tabular}}{{{spec}}}").unwrap();
    for row in &grid.cells {
        let fields: Vec<String> = row.iter().map(|c| latex_escape(&c.text)).collect();
        writeln!(out, "{} \\\\", fields.join(" & ")).unwrap();
    }
    out.push_str("\\end{tabular}\n");
    out
}
