//! Reading numeric columns out of CSV files.

use std::io::Read;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum TableError {
    #[error("column {0:?} not found")]
    MissingColumn(String),
    #[error("row {row}: {column} value {value:?} is not a number")]
    NotNumeric { row: usize, column: String, value: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// A CSV table; lines starting with `#` are comments.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn from_reader<R: Read>(reader: R) -> Result<Self, TableError> {
        let mut rdr = csv::ReaderBuilder::new().comment(Some(b'#')).flexible(true).from_reader(reader);
        let headers = rdr.headers()?.iter().map(|h| h.trim().to_string()).collect();
        let rows = rdr
            .records()
            .map(|r| r.map(|rec| rec.iter().map(|v| v.trim().to_string()).collect()))
            .collect::<Result<_, _>>()?;
        Ok(Self { headers, rows })
    }

    pub fn column_index(&self, name: &str) -> Result<usize, TableError> {
        self.headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| TableError::MissingColumn(name.to_string()))
    }

    /// Rows where every requested column is numeric. Empty cells mark
    /// excluded observations and drop the row; any other non-numeric value
    /// is an error.
    pub fn numeric_columns(&self, names: &[&str]) -> Result<Vec<Vec<f64>>, TableError> {
        let idx: Vec<usize> = names.iter().map(|n| self.column_index(n)).collect::<Result<_, _>>()?;
        let mut out = Vec::new();
        'rows: for (r, row) in self.rows.iter().enumerate() {
            let mut values = Vec::with_capacity(idx.len());
            for (&i, name) in idx.iter().zip(names) {
                let cell = row.get(i).map(String::as_str).unwrap_or("");
                if cell.is_empty() {
                    continue 'rows;
                }
                let v: f64 = cell.parse().map_err(|_| TableError::NotNumeric {
                    row: r + 1,
                    column: name.to_string(),
                    value: cell.to_string(),
                })?;
                values.push(v);
            }
            out.push(values);
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn skips_comments_and_excluded_rows() {
        let text = "# schema=1\nS,si,reward\n1,0.9,3\n2,,0\n3,0.1,4\n";
        let t = Table::from_reader(text.as_bytes()).unwrap();
        assert_eq!(t.numeric_columns(&["S", "si"]).unwrap(), vec![vec![1.0, 0.9], vec![3.0, 0.1]]);
        assert!(matches!(t.numeric_columns(&["nope"]), Err(TableError::MissingColumn(_))));
        let bad = Table::from_reader("S\nabc\n".as_bytes()).unwrap();
        assert!(matches!(bad.numeric_columns(&["S"]), Err(TableError::NotNumeric { .. })));
    }
}
