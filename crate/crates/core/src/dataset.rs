//! Plain-text CSV datasets: a header row, one column per field.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};

/// Reads the named columns (in the order given) from CSV text.
pub fn read_columns<R: Read>(reader: R, names: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers()?.clone();
    let idx: Vec<usize> = names
        .iter()
        .map(|n| {
            headers.iter().position(|h| h == *n).ok_or_else(|| Error::Unknown {
                kind: "dataset column",
                name: (*n).to_string(),
            })
        })
        .collect::<Result<_>>()?;
    let mut cols = vec![Vec::new(); names.len()];
    for (row, record) in rdr.records().enumerate() {
        let record = record?;
        for (c, &i) in idx.iter().enumerate() {
            let field = record.get(i).unwrap_or("");
            let v: f64 = field.parse().map_err(|_| {
                Error::InvalidModel(format!("row {}: column `{}` is not a number: {field:?}", row + 1, names[c]))
            })?;
            cols[c].push(v);
        }
    }
    Ok(cols)
}

pub fn read_columns_from_path(path: &Path, names: &[&str]) -> Result<Vec<Vec<f64>>> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_columns(file, names)
}

/// Writes equal-length columns with a header row.
pub fn write_columns(path: &Path, names: &[&str], cols: &[&[f64]]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(names)?;
    let n = cols.first().map_or(0, |c| c.len());
    for i in 0..n {
        w.write_record(cols.iter().map(|c| c[i].to_string()))?;
    }
    w.flush().map_err(|e| Error::io(path, e))?;
    Ok(())
}
