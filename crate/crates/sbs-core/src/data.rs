//! Dataset readers and posterior-sample writers.
//!
//! All files are CSV with a header row and `.` decimal separators.

use crate::error::{Result, SbsError};
use crate::models::lca::LcaData;
use crate::models::logistic::LogisticData;
use crate::models::sbmreg::EdgeData;
use nalgebra::DMatrix;
use std::io::Read;
use std::path::Path;

fn parse_field(raw: &str, row: usize, col: &str) -> Result<f64> {
    raw.trim().parse::<f64>().map_err(|_| {
        SbsError::InvalidData(format!("row {row}, column '{col}': '{raw}' is not a number"))
    })
}

fn parse_binary(raw: &str, row: usize, col: &str) -> Result<u8> {
    match raw.trim() {
        "0" => Ok(0),
        "1" => Ok(1),
        other => Err(SbsError::InvalidData(format!(
            "row {row}, column '{col}': '{other}' is not 0 or 1"
        ))),
    }
}

/// Reads a logistic regression dataset.
///
/// The column named `y` holds the binary response; every other column
/// is a covariate, kept in file order. No intercept column is added.
pub fn read_logistic_csv<R: Read>(reader: R) -> Result<LogisticData> {
    let mut csv = csv::Reader::from_reader(reader);
    let headers = csv.headers()?.clone();
    let y_col = headers.iter().position(|h| h.trim() == "y").ok_or_else(|| {
        SbsError::InvalidData("logistic data needs a column named 'y'".into())
    })?;
    let covariate_cols: Vec<usize> = (0..headers.len()).filter(|&c| c != y_col).collect();
    if covariate_cols.is_empty() {
        return Err(SbsError::InvalidData(
            "logistic data needs at least one covariate column".into(),
        ));
    }

    let mut y = Vec::new();
    let mut rows = Vec::new();
    for (row_idx, record) in csv.records().enumerate() {
        let record = record?;
        y.push(parse_binary(&record[y_col], row_idx, "y")?);
        for &c in &covariate_cols {
            rows.push(parse_field(&record[c], row_idx, &headers[c])?);
        }
    }
    if y.is_empty() {
        return Err(SbsError::InvalidData("logistic data has no rows".into()));
    }
    let x = DMatrix::from_row_slice(y.len(), covariate_cols.len(), &rows);
    LogisticData::new(x, y)
}

/// Reads a latent-class dataset: one row per observation, one binary
/// column per item.
pub fn read_lca_csv<R: Read>(reader: R) -> Result<LcaData> {
    let mut csv = csv::Reader::from_reader(reader);
    let headers = csv.headers()?.clone();
    let mut y = Vec::new();
    for (row_idx, record) in csv.records().enumerate() {
        let record = record?;
        let row: Result<Vec<u8>> = record
            .iter()
            .enumerate()
            .map(|(c, raw)| parse_binary(raw, row_idx, &headers[c]))
            .collect();
        y.push(row?);
    }
    LcaData::new(y)
}

/// Reads an undirected network as a dyad list.
///
/// Columns `i` and `j` hold 0-based node indices, `y` the binary edge
/// indicator; every remaining column is a dyad covariate. Every
/// unordered pair of nodes must appear exactly once; the node count is
/// one more than the largest index seen.
pub fn read_dyads_csv<R: Read>(reader: R) -> Result<EdgeData> {
    let mut csv = csv::Reader::from_reader(reader);
    let headers = csv.headers()?.clone();
    let col = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| {
                SbsError::InvalidData(format!("dyad data needs a column named '{name}'"))
            })
    };
    let i_col = col("i")?;
    let j_col = col("j")?;
    let y_col = col("y")?;
    let covariate_cols: Vec<usize> = (0..headers.len())
        .filter(|&c| c != i_col && c != j_col && c != y_col)
        .collect();

    let mut entries = Vec::new();
    let mut max_node = 0usize;
    for (row_idx, record) in csv.records().enumerate() {
        let record = record?;
        let idx = |c: usize, name: &str| -> Result<usize> {
            record[c].trim().parse::<usize>().map_err(|_| {
                SbsError::InvalidData(format!(
                    "row {row_idx}, column '{name}': '{}' is not a node index",
                    &record[c]
                ))
            })
        };
        let i = idx(i_col, "i")?;
        let j = idx(j_col, "j")?;
        max_node = max_node.max(i).max(j);
        let yv = parse_binary(&record[y_col], row_idx, "y")?;
        let xv: Result<Vec<f64>> = covariate_cols
            .iter()
            .map(|&c| parse_field(&record[c], row_idx, &headers[c]))
            .collect();
        entries.push((i, j, yv, xv?));
    }
    if entries.is_empty() {
        return Err(SbsError::InvalidData("dyad data has no rows".into()));
    }
    EdgeData::from_dyad_list(max_node + 1, entries)
}

/// Opens `path` and applies one of the readers above.
pub fn read_csv_file<T>(
    path: &Path,
    reader: impl FnOnce(std::fs::File) -> Result<T>,
) -> Result<T> {
    let file = std::fs::File::open(path).map_err(|e| {
        SbsError::InvalidData(format!("cannot open {}: {e}", path.display()))
    })?;
    reader(file)
}

/// Writes a weighted posterior sample: one column per parameter, plus a
/// final normalized `weight` column.
pub fn write_particles_csv<W: std::io::Write>(
    writer: W,
    param_names: &[String],
    rows: &[Vec<f64>],
    weights: &[f64],
) -> Result<()> {
    if rows.len() != weights.len() {
        return Err(SbsError::InvalidData(format!(
            "{} particle rows but {} weights",
            rows.len(),
            weights.len()
        )));
    }
    let mut w = csv::Writer::from_writer(writer);
    let mut header: Vec<&str> = param_names.iter().map(String::as_str).collect();
    header.push("weight");
    w.write_record(&header)?;
    for (row, &weight) in rows.iter().zip(weights) {
        if row.len() != param_names.len() {
            return Err(SbsError::InvalidData(format!(
                "particle row has {} values for {} parameters",
                row.len(),
                param_names.len()
            )));
        }
        let mut record: Vec<String> = row.iter().map(|v| format!("{v:.17}")).collect();
        record.push(format!("{weight:.17}"));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn logistic_round_trip() {
        let csv = "x1,y,x2\n0.5,1,-2.0\n-1.5,0,3.25\n0.0,1,0.125\n";
        let data = read_logistic_csv(csv.as_bytes()).unwrap();
        assert_eq!(data.x.nrows(), 3);
        assert_eq!(data.x.ncols(), 2);
        assert_eq!(data.y, vec![1, 0, 1]);
        // covariates keep file order with the response column removed
        assert_eq!(data.x[(0, 0)], 0.5);
        assert_eq!(data.x[(0, 1)], -2.0);
        assert_eq!(data.x[(1, 1)], 3.25);
    }

    #[test]
    fn logistic_requires_response_column() {
        let csv = "x1,x2\n0.5,1.0\n";
        assert!(read_logistic_csv(csv.as_bytes()).is_err());
        let csv = "y\n1\n0\n";
        assert!(read_logistic_csv(csv.as_bytes()).is_err());
        let csv = "x1,y\n0.5,2\n";
        assert!(read_logistic_csv(csv.as_bytes()).is_err());
    }

    #[test]
    fn lca_round_trip_and_validation() {
        let csv = "item1,item2,item3\n1,0,1\n0,0,0\n1,1,1\n0,1,0\n";
        let data = read_lca_csv(csv.as_bytes()).unwrap();
        assert_eq!(data.y.len(), 4);
        assert_eq!(data.q, 3);
        assert_eq!(data.y[0], vec![1, 0, 1]);

        let bad = "item1,item2\n1,2\n";
        assert!(read_lca_csv(bad.as_bytes()).is_err());
    }

    #[test]
    fn dyads_round_trip() {
        // complete 3-node network with one covariate, rows out of order
        let csv = "i,j,y,x1\n1,2,0,0.5\n0,1,1,-1.0\n2,0,1,2.0\n";
        let data = read_dyads_csv(csv.as_bytes()).unwrap();
        assert_eq!(data.n(), 3);
        assert_eq!(data.p(), 1);
        assert_eq!(data.y(data.dyad_index(0, 1)), 1);
        assert_eq!(data.y(data.dyad_index(1, 2)), 0);
        assert_eq!(data.x(data.dyad_index(0, 2)), &[2.0]);
    }

    #[test]
    fn dyads_reject_incomplete_lists() {
        let csv = "i,j,y,x1\n0,1,1,0.0\n0,2,0,0.0\n";
        assert!(read_dyads_csv(csv.as_bytes()).is_err());
        let csv = "i,j,y\n";
        assert!(read_dyads_csv(csv.as_bytes()).is_err());
    }

    #[test]
    fn particle_csv_is_deterministic() {
        let mut rng = seeded(91);
        let rows: Vec<Vec<f64>> = (0..5)
            .map(|_| (0..2).map(|_| rand::Rng::random::<f64>(&mut rng)).collect())
            .collect();
        let weights = vec![0.2; 5];
        let names = vec!["a".to_string(), "b".to_string()];
        let mut buf1 = Vec::new();
        write_particles_csv(&mut buf1, &names, &rows, &weights).unwrap();
        let mut buf2 = Vec::new();
        write_particles_csv(&mut buf2, &names, &rows, &weights).unwrap();
        assert_eq!(buf1, buf2);
        let text = String::from_utf8(buf1).unwrap();
        assert!(text.starts_with("a,b,weight\n"));
        assert_eq!(text.trim().lines().count(), 6);
    }
}
