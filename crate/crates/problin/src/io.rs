//! Input readers: Matrix Market files and CSV point clouds.

use std::io::{BufRead, BufReader, Read};
use std::path::Path;

use nalgebra::DMatrix;

use crate::error::{Error, Result};

/// Read a real Matrix Market file (coordinate or array format, general or
/// symmetric). Symmetric storage may use either triangle; entries are
/// mirrored on read. Parse failures report the byte offset of the offending
/// line.
pub fn read_matrix_market(path: &Path) -> Result<DMatrix<f64>> {
    let file = std::fs::File::open(path).map_err(|e| Error::InputFile {
        path: path.display().to_string(),
        offset: 0,
        reason: e.to_string(),
    })?;
    read_matrix_market_from(BufReader::new(file), &path.display().to_string())
}

fn fail(path: &str, offset: u64, reason: impl Into<String>) -> Error {
    Error::InputFile {
        path: path.to_string(),
        offset,
        reason: reason.into(),
    }
}

#[derive(PartialEq, Clone, Copy)]
enum MtxFormat {
    Coordinate,
    Array,
}

pub fn read_matrix_market_from<R: Read>(reader: BufReader<R>, path: &str) -> Result<DMatrix<f64>> {
    let mut offset: u64 = 0;
    let mut lines = reader.lines();

    // Header: %%MatrixMarket matrix <format> <field> <symmetry>
    let header = match lines.next() {
        Some(Ok(line)) => line,
        Some(Err(e)) => return Err(fail(path, 0, e.to_string())),
        None => return Err(fail(path, 0, "empty file")),
    };
    let header_len = header.len() as u64 + 1;
    let tokens: Vec<String> = header.split_whitespace().map(|t| t.to_lowercase()).collect();
    if tokens.len() < 5 || tokens[0] != "%%matrixmarket" || tokens[1] != "matrix" {
        return Err(fail(path, 0, "not a MatrixMarket matrix header"));
    }
    let format = match tokens[2].as_str() {
        "coordinate" => MtxFormat::Coordinate,
        "array" => MtxFormat::Array,
        other => return Err(fail(path, 0, format!("unsupported format '{other}'"))),
    };
    match tokens[3].as_str() {
        "real" | "integer" => {}
        other => return Err(fail(path, 0, format!("unsupported field '{other}'"))),
    }
    let symmetric = match tokens[4].as_str() {
        "general" => false,
        "symmetric" => true,
        other => return Err(fail(path, 0, format!("unsupported symmetry '{other}'"))),
    };
    offset += header_len;

    // Skip comments, find the size line.
    let mut size_line = None;
    for line in lines.by_ref() {
        let line = line.map_err(|e| fail(path, offset, e.to_string()))?;
        let len = line.len() as u64 + 1;
        if line.starts_with('%') || line.trim().is_empty() {
            offset += len;
            continue;
        }
        size_line = Some((line, offset));
        offset += len;
        break;
    }
    let (size_line, size_offset) =
        size_line.ok_or_else(|| fail(path, offset, "missing size line"))?;
    let dims: Vec<&str> = size_line.split_whitespace().collect();

    match format {
        MtxFormat::Coordinate => {
            if dims.len() != 3 {
                return Err(fail(path, size_offset, "coordinate size line needs 'rows cols nnz'"));
            }
            let rows: usize = dims[0]
                .parse()
                .map_err(|_| fail(path, size_offset, "bad row count"))?;
            let cols: usize = dims[1]
                .parse()
                .map_err(|_| fail(path, size_offset, "bad column count"))?;
            let nnz: usize = dims[2]
                .parse()
                .map_err(|_| fail(path, size_offset, "bad nonzero count"))?;
            let mut m = DMatrix::zeros(rows, cols);
            let mut seen = 0usize;
            for line in lines {
                let line = line.map_err(|e| fail(path, offset, e.to_string()))?;
                let len = line.len() as u64 + 1;
                let trimmed = line.trim();
                if trimmed.is_empty() || trimmed.starts_with('%') {
                    offset += len;
                    continue;
                }
                let mut it = trimmed.split_whitespace();
                let i: usize = it
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| fail(path, offset, "bad row index"))?;
                let j: usize = it
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| fail(path, offset, "bad column index"))?;
                let v: f64 = it
                    .next()
                    .and_then(|t| t.parse().ok())
                    .ok_or_else(|| fail(path, offset, "bad value"))?;
                if i == 0 || j == 0 || i > rows || j > cols {
                    return Err(fail(path, offset, format!("index ({i}, {j}) out of bounds")));
                }
                m[(i - 1, j - 1)] = v;
                if symmetric {
                    m[(j - 1, i - 1)] = v;
                }
                seen += 1;
                offset += len;
            }
            if seen != nnz {
                return Err(fail(
                    path,
                    offset,
                    format!("expected {nnz} entries, found {seen}"),
                ));
            }
            Ok(m)
        }
        MtxFormat::Array => {
            if dims.len() != 2 {
                return Err(fail(path, size_offset, "array size line needs 'rows cols'"));
            }
            let rows: usize = dims[0]
                .parse()
                .map_err(|_| fail(path, size_offset, "bad row count"))?;
            let cols: usize = dims[1]
                .parse()
                .map_err(|_| fail(path, size_offset, "bad column count"))?;
            let expected = if symmetric {
                if rows != cols {
                    return Err(fail(path, size_offset, "symmetric array must be square"));
                }
                rows * (rows + 1) / 2
            } else {
                rows * cols
            };
            let mut values = Vec::with_capacity(expected);
            for line in lines {
                let line = line.map_err(|e| fail(path, offset, e.to_string()))?;
                let len = line.len() as u64 + 1;
                let trimmed = line.trim();
                if trimmed.is_empty() || trimmed.starts_with('%') {
                    offset += len;
                    continue;
                }
                for tok in trimmed.split_whitespace() {
                    let v: f64 = tok
                        .parse()
                        .map_err(|_| fail(path, offset, format!("bad value '{tok}'")))?;
                    values.push(v);
                }
                offset += len;
            }
            if values.len() != expected {
                return Err(fail(
                    path,
                    offset,
                    format!("expected {expected} values, found {}", values.len()),
                ));
            }
            let mut m = DMatrix::zeros(rows, cols);
            let mut it = values.into_iter();
            if symmetric {
                // Column-major lower triangle.
                for j in 0..cols {
                    for i in j..rows {
                        let v = it.next().unwrap();
                        m[(i, j)] = v;
                        m[(j, i)] = v;
                    }
                }
            } else {
                for j in 0..cols {
                    for i in 0..rows {
                        m[(i, j)] = it.next().unwrap();
                    }
                }
            }
            Ok(m)
        }
    }
}

/// Write a dense symmetric matrix in coordinate symmetric format (lower
/// triangle).
pub fn write_matrix_market_symmetric(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    use std::io::Write;
    let n = m.nrows();
    let mut entries = Vec::new();
    for j in 0..n {
        for i in j..n {
            if m[(i, j)] != 0.0 {
                entries.push((i + 1, j + 1, m[(i, j)]));
            }
        }
    }
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "%%MatrixMarket matrix coordinate real symmetric")?;
    writeln!(f, "{} {} {}", n, n, entries.len())?;
    for (i, j, v) in entries {
        writeln!(f, "{i} {j} {v:.17e}")?;
    }
    Ok(())
}

/// Read a CSV point cloud: one point per row, comma-separated floats, an
/// optional non-numeric header row.
pub fn read_points_csv(path: &Path) -> Result<Vec<Vec<f64>>> {
    let file = std::fs::File::open(path).map_err(|e| Error::InputFile {
        path: path.display().to_string(),
        offset: 0,
        reason: e.to_string(),
    })?;
    read_points_csv_from(BufReader::new(file), &path.display().to_string())
}

pub fn read_points_csv_from<R: Read>(reader: BufReader<R>, path: &str) -> Result<Vec<Vec<f64>>> {
    let mut offset: u64 = 0;
    let mut points: Vec<Vec<f64>> = Vec::new();
    let mut dim = None;
    for (lineno, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| fail(path, offset, e.to_string()))?;
        let len = line.len() as u64 + 1;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            offset += len;
            continue;
        }
        let parsed: std::result::Result<Vec<f64>, _> = trimmed
            .split(',')
            .map(|t| t.trim().parse::<f64>())
            .collect();
        match parsed {
            Ok(row) => {
                if let Some(d) = dim {
                    if row.len() != d {
                        return Err(fail(
                            path,
                            offset,
                            format!("row has {} fields, expected {d}", row.len()),
                        ));
                    }
                } else {
                    dim = Some(row.len());
                }
                points.push(row);
            }
            Err(e) => {
                // A non-numeric first row is a header; anything later is an error.
                if lineno > 0 || !points.is_empty() {
                    return Err(fail(path, offset, e.to_string()));
                }
            }
        }
        offset += len;
    }
    if points.is_empty() {
        return Err(fail(path, offset, "no data rows"));
    }
    Ok(points)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use nalgebra::dmatrix;

    fn from_str(s: &str) -> Result<DMatrix<f64>> {
        read_matrix_market_from(BufReader::new(s.as_bytes()), "test.mtx")
    }

    #[test]
    fn coordinate_symmetric_mirrors_lower_triangle() {
        let src = "%%MatrixMarket matrix coordinate real symmetric\n\
                   % comment\n\
                   3 3 4\n\
                   1 1 2.0\n\
                   2 1 -1.0\n\
                   2 2 2.0\n\
                   3 3 1.5\n";
        let m = from_str(src).unwrap();
        assert_relative_eq!(
            m,
            dmatrix![2.0, -1.0, 0.0; -1.0, 2.0, 0.0; 0.0, 0.0, 1.5],
            epsilon = 1e-15
        );
    }

    #[test]
    fn coordinate_symmetric_accepts_upper_triangle() {
        let src = "%%MatrixMarket matrix coordinate real symmetric\n\
                   2 2 2\n\
                   1 2 3.0\n\
                   1 1 1.0\n";
        let m = from_str(src).unwrap();
        assert_relative_eq!(m[(1, 0)], 3.0);
        assert_relative_eq!(m[(0, 1)], 3.0);
    }

    #[test]
    fn array_general_is_column_major() {
        let src = "%%MatrixMarket matrix array real general\n\
                   2 2\n1\n2\n3\n4\n";
        let m = from_str(src).unwrap();
        assert_relative_eq!(m, dmatrix![1.0, 3.0; 2.0, 4.0], epsilon = 1e-15);
    }

    #[test]
    fn array_symmetric_packs_lower_triangle() {
        let src = "%%MatrixMarket matrix array real symmetric\n\
                   2 2\n1\n2\n3\n";
        let m = from_str(src).unwrap();
        assert_relative_eq!(m, dmatrix![1.0, 2.0; 2.0, 3.0], epsilon = 1e-15);
    }

    #[test]
    fn bad_value_reports_byte_offset() {
        let src = "%%MatrixMarket matrix coordinate real general\n\
                   2 2 1\n\
                   1 1 oops\n";
        let expected =
            "%%MatrixMarket matrix coordinate real general\n".len() as u64 + "2 2 1\n".len() as u64;
        match from_str(src) {
            Err(Error::InputFile { offset, .. }) => assert_eq!(offset, expected),
            other => panic!("expected InputFile error, got {other:?}"),
        }
    }

    #[test]
    fn wrong_entry_count_is_an_error() {
        let src = "%%MatrixMarket matrix coordinate real general\n\
                   2 2 3\n\
                   1 1 1.0\n";
        assert!(from_str(src).is_err());
    }

    #[test]
    fn round_trip_through_writer() {
        let m = dmatrix![2.0, -1.0; -1.0, 3.0];
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("m.mtx");
        write_matrix_market_symmetric(&path, &m).unwrap();
        let back = read_matrix_market(&path).unwrap();
        assert_relative_eq!(back, m, epsilon = 1e-15);
    }

    #[test]
    fn csv_reads_points_with_optional_header() {
        let src = "x, y\n0.0, 1.0\n0.5, 0.25\n";
        let pts = read_points_csv_from(BufReader::new(src.as_bytes()), "pts.csv").unwrap();
        assert_eq!(pts, vec![vec![0.0, 1.0], vec![0.5, 0.25]]);
    }

    #[test]
    fn csv_rejects_ragged_rows() {
        let src = "0.0, 1.0\n0.5\n";
        assert!(read_points_csv_from(BufReader::new(src.as_bytes()), "pts.csv").is_err());
    }

    #[test]
    fn csv_rejects_mid_file_garbage() {
        let src = "0.0, 1.0\nfoo, bar\n";
        assert!(read_points_csv_from(BufReader::new(src.as_bytes()), "pts.csv").is_err());
    }
}
