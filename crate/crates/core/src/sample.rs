use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Row-major n × d matrix of observations.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    dim: usize,
    data: Vec<f64>,
}

impl Sample {
    pub fn new(dim: usize, data: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidParameter("sample dimension must be positive".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                got: data.len() % dim,
            });
        }
        Ok(Self { dim, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map(Vec::len).ok_or(Error::EmptySample)?;
        let mut data = Vec::with_capacity(rows.len() * dim);
        for r in rows {
            crate::error::check_dim(dim, r.len())?;
            data.extend_from_slice(r);
        }
        Self::new(dim, data)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn rows(&self) -> impl ExactSizeIterator<Item = &[f64]> + '_ {
        self.data.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.data
    }

    /// Copy with rows sorted by their first coordinate (stable).
    pub fn sorted_by_first(&self) -> Self {
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.sort_by(|&a, &b| self.row(a)[0].total_cmp(&self.row(b)[0]));
        let mut data = Vec::with_capacity(self.data.len());
        for i in idx {
            data.extend_from_slice(self.row(i));
        }
        Self { dim: self.dim, data }
    }

    /// One observation per line, comma separated, shortest round-trip floats.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for row in self.rows() {
            let line: Vec<String> = row.iter().map(|v| v.to_string()).collect();
            writeln!(out, "{}", line.join(","))?;
        }
        Ok(())
    }

    /// Reads a headerless CSV of floats. A first line that does not parse as
    /// numbers is treated as a header and skipped.
    pub fn read_csv<R: Read>(mut input: R) -> Result<Self> {
        let mut text = String::new();
        input
            .read_to_string(&mut text)
            .map_err(|e| Error::Config(format!("reading sample: {e}")))?;
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parsed: std::result::Result<Vec<f64>, _> =
                line.split(',').map(|t| t.trim().parse::<f64>()).collect();
            match parsed {
                Ok(r) => rows.push(r),
                Err(_) if rows.is_empty() && lineno == 0 => continue,
                Err(e) => {
                    return Err(Error::Config(format!("line {}: {e}", lineno + 1)));
                }
            }
        }
        if rows.is_empty() {
            return Err(Error::EmptySample);
        }
        Self::from_rows(&rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip_with_header() {
        let s = Sample::new(2, vec![0.1, -2.5, 1e-300, 3.0]).unwrap();
        let mut buf = b"x,y\n".to_vec();
        s.write_csv(&mut buf).unwrap();
        let back = Sample::read_csv(buf.as_slice()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn ragged_rows_rejected() {
        assert!(Sample::read_csv("1,2\n3\n".as_bytes()).is_err());
        assert!(matches!(Sample::read_csv("".as_bytes()), Err(Error::EmptySample)));
    }

    #[test]
    fn sorting_is_by_first_coordinate() {
        let s = Sample::new(2, vec![3.0, 0.0, 1.0, 1.0, 2.0, 2.0]).unwrap();
        let t = s.sorted_by_first();
        assert_eq!(t.as_slice(), &[1.0, 1.0, 2.0, 2.0, 3.0, 0.0]);
    }
}
