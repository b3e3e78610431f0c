use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::{Error, Result};

/// 17 significant digits, enough to round-trip any `f64` exactly.
/// NaN renders as an empty cell.
pub fn sig17(x: f64) -> String {
    if x.is_nan() {
        String::new()
    } else {
        format!("{x:.16e}")
    }
}

/// Inverse of [`sig17`].
pub fn parse_sig17(cell: &str) -> std::result::Result<f64, std::num::ParseFloatError> {
    if cell.is_empty() {
        Ok(f64::NAN)
    } else {
        cell.parse()
    }
}

/// Writes `lines` (without trailing newlines) to `path`.
pub fn write_lines<I>(path: &Path, lines: I) -> Result<()>
where
    I: IntoIterator<Item = String>,
{
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for line in lines {
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}
