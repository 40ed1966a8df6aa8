//! Plain CSV tables: header row, comma separators, LF endings and floats
//! printed with 17 significant digits so values round-trip exactly.

use std::io::Write;

use crate::error::{Error, Result};

/// Formats `v` with 17 significant digits in scientific notation.
pub fn format_float(v: f64) -> String {
    format!("{v:.16e}")
}

/// Writes equally long columns under `header`.
pub fn write_columns<W: Write>(w: W, header: &[&str], columns: &[&[f64]]) -> Result<(), CsvError> {
    if header.len() != columns.len() {
        return Err(CsvError::Shape(Error::LengthMismatch(format!(
            "{} headers for {} columns",
            header.len(),
            columns.len()
        ))));
    }
    let rows = columns.first().map_or(0, |c| c.len());
    if let Some(c) = columns.iter().find(|c| c.len() != rows) {
        return Err(CsvError::Shape(Error::LengthMismatch(format!(
            "column of length {} in a table of {rows} rows",
            c.len()
        ))));
    }
    let mut writer = ::csv::WriterBuilder::new().from_writer(w);
    writer.write_record(header)?;
    for r in 0..rows {
        writer.write_record(columns.iter().map(|c| format_float(c[r])))?;
    }
    writer.flush().map_err(::csv::Error::from)?;
    Ok(())
}

#[derive(Debug, thiserror::Error)]
pub enum CsvError {
    #[error(transparent)]
    Write(#[from] ::csv::Error),
    #[error(transparent)]
    Shape(Error),
}
