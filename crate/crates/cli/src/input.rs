use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Parse one number per line. A non-numeric first line is taken as a
/// header; blank lines are skipped.
pub fn parse_values(text: &str) -> Result<Vec<f64>> {
    let mut values = Vec::new();
    let mut seen_line = false;
    for (i, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() {
            continue;
        }
        match t.parse::<f64>() {
            Ok(v) if v.is_finite() => values.push(v),
            Ok(_) => bail!("line {}: non-finite value '{t}'", i + 1),
            Err(_) if !seen_line => {}
            Err(_) => bail!("line {}: cannot parse '{t}' as a number", i + 1),
        }
        seen_line = true;
    }
    if values.is_empty() {
        bail!("no data values found");
    }
    Ok(values)
}

pub fn read_values(path: &Path) -> Result<Vec<f64>> {
    let text = if path.as_os_str() == "-" {
        std::io::read_to_string(std::io::stdin()).context("reading standard input")?
    } else {
        fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?
    };
    parse_values(&text).with_context(|| format!("in {}", path.display()))
}
