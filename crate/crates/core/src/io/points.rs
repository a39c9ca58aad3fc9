use std::path::Path;

use crate::error::{invalid, Error, Result};
use crate::points::Point;

use super::{dataset::detect_delimiter, read_text};

/// Parses a headerless numeric CSV, one point per row. The delimiter is detected among
/// `,`, `;` and tab. Blank lines are skipped.
pub fn parse_points_csv(text: &str) -> Result<Vec<Point>> {
    let first = text.lines().find(|l| !l.trim().is_empty()).unwrap_or("");
    let delim = detect_delimiter(first) as char;
    let mut points = Vec::new();
    let mut width = None;
    for (line_no, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let row = line
            .split(delim)
            .enumerate()
            .map(|(c, cell)| parse_cell(cell, line_no + 1, c + 1))
            .collect::<Result<Point>>()?;
        match width {
            None => width = Some(row.len()),
            Some(w) if w != row.len() => {
                return Err(Error::Parse {
                    row: line_no + 1,
                    column: row.len().min(w) + 1,
                    message: format!("expected {w} columns, found {}", row.len()),
                })
            }
            _ => {}
        }
        points.push(row);
    }
    if points.is_empty() {
        return invalid("point file contains no rows");
    }
    Ok(points)
}

pub(crate) fn parse_cell(cell: &str, row: usize, column: usize) -> Result<f64> {
    let trimmed = cell.trim().trim_matches('"');
    match trimmed.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            row,
            column,
            message: format!("`{trimmed}` is not a finite number"),
        }),
    }
}

pub fn read_points_csv(path: &Path) -> Result<Vec<Point>> {
    parse_points_csv(&read_text(path)?)
}

/// Comma-separated rows using the shortest representation that round-trips exactly.
pub fn write_points_csv(points: &[Point]) -> String {
    let mut out = String::new();
    for p in points {
        let row: Vec<String> = p.iter().map(|v| v.to_string()).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
