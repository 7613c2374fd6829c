//! p-value matrices from CSV.

use std::path::Path;

use mvfdr::procedures::{Matrix, PValueMatrix};

use crate::error::{CliError, CliResult};

/// Reads an `n x K` matrix of values in `[0, 1]`. A first row containing any
/// non-numeric cell is taken as a header.
pub fn read_pvalues(path: &Path) -> CliResult<PValueMatrix> {
    let file = std::fs::File::open(path).map_err(|e| CliError::Input(format!("{}: {e}", path.display())))?;
    parse_pvalues(file, &path.display().to_string())
}

pub fn parse_pvalues<R: std::io::Read>(reader: R, origin: &str) -> CliResult<PValueMatrix> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(false).flexible(true).trim(csv::Trim::All).from_reader(reader);
    let mut data = Vec::new();
    let mut k = None;
    let mut n = 0;
    for (i, record) in rdr.records().enumerate() {
        let line = i + 1;
        let record = record.map_err(|e| CliError::Input(format!("{origin}: line {line}: {e}")))?;
        if record.iter().all(str::is_empty) {
            continue;
        }
        if i == 0 && record.iter().any(|c| c.parse::<f64>().is_err()) {
            continue;
        }
        let width = *k.get_or_insert(record.len());
        if record.len() != width {
            return Err(CliError::Input(format!(
                "{origin}: line {line} has {} columns, expected {width}",
                record.len()
            )));
        }
        for (j, cell) in record.iter().enumerate() {
            let v: f64 = cell.parse().map_err(|_| {
                CliError::Input(format!("{origin}: line {line}, column {}: `{cell}` is not a number", j + 1))
            })?;
            if !(0.0..=1.0).contains(&v) {
                return Err(CliError::Input(format!(
                    "{origin}: line {line}, column {}: {cell} is outside [0, 1]",
                    j + 1
                )));
            }
            data.push(v);
        }
        n += 1;
    }
    let k = k.ok_or_else(|| CliError::Input(format!("{origin}: no data rows")))?;
    let m = Matrix::new(data, n, k).map_err(|e| CliError::Input(e.to_string()))?;
    PValueMatrix::new(m).map_err(|e| CliError::Input(e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(s: &str) -> CliResult<PValueMatrix> {
        parse_pvalues(s.as_bytes(), "mem")
    }

    #[test]
    fn header_is_optional() {
        let a = parse("x,y\n0.1,0.2\n0.3,0.4\n").unwrap();
        let b = parse("0.1, 0.2\n0.3,0.4\n").unwrap();
        assert_eq!(a, b);
        assert_eq!((a.n(), a.k()), (2, 2));
    }

    #[test]
    fn diagnostics_name_the_cell() {
        let msg = |s: &str| match parse(s) {
            Err(CliError::Input(m)) => m,
            other => panic!("{other:?}"),
        };
        assert!(msg("0.1,0.2\n0.3,1.2\n").contains("line 2, column 2"));
        assert!(msg("0.1,0.2\n0.3,abc\n").contains("`abc`"));
        assert!(msg("0.1,0.2\n0.3\n").contains("line 2 has 1 columns"));
        assert!(msg("").contains("no data"));
    }
}
