//! Shared export helpers. Every float leaving the crate in CSV or JSON is
//! rounded to six decimal places, and CSV cells are written with a fixed
//! `%.6f` format, so repeated runs serialize byte-identically.

use crate::error::{Error, Result};

/// Round to 6 decimal places. `fmt6(round6(x))` parses back to `round6(x)`
/// exactly, which is what makes export/parse round trips lossless.
pub fn round6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

pub fn fmt6(x: f64) -> String {
    format!("{x:.6}")
}

/// Build a CSV document in memory.
pub fn csv_string<F>(build: F) -> Result<String>
where
    F: FnOnce(&mut csv::Writer<Vec<u8>>) -> csv::Result<()>,
{
    let mut writer = csv::Writer::from_writer(Vec::new());
    build(&mut writer).map_err(csv_err)?;
    let bytes = writer.into_inner().map_err(|e| {
        Error::InvalidSpec(format!("csv writer flush failed: {e}"))
    })?;
    String::from_utf8(bytes).map_err(|_| Error::InvalidSpec("csv output not UTF-8".into()))
}

pub fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        kind => Error::InvalidSpec(format!("csv error: {kind:?}")),
    }
}

/// Pretty JSON with a trailing newline.
pub fn json_string<T: serde::Serialize>(value: &T) -> Result<String> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    Ok(s)
}
