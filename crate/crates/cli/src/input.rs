// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::Path;

use crate::error::{CliError, Result};

/// Parses one value per line. A non-numeric first row is taken as a header;
/// blank lines are skipped.
pub fn parse_series(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let row = idx + 1;
        let field = line.trim();
        if field.is_empty() {
            continue;
        }
        if field.contains(',') {
            return Err(CliError::input(format!(
                "row {row}: expected a single column, found `{field}`"
            )));
        }
        let field = field.trim_matches('"');
        match field.parse::<f64>() {
            Ok(v) if v.is_finite() => out.push(v),
            Ok(v) => {
                return Err(CliError::input(format!("row {row}: non-finite value {v}")));
            }
            Err(_) if out.is_empty() && row == 1 => {}
            Err(_) => {
                return Err(CliError::input(format!(
                    "row {row}: `{field}` is not a number"
                )));
            }
        }
    }
    if out.is_empty() {
        return Err(CliError::input("input contains no values"));
    }
    Ok(out)
}

pub fn read_series(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    parse_series(&text).map_err(|e| CliError::input(format!("{}: {e}", path.display())))
}
