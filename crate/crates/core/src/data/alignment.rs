//! Word-alignment matrices and the pharaoh text format.
//!
//! A pharaoh line is whitespace-separated `i-j` pairs where `i` indexes the
//! source sentence and `j` the target sentence, both 0-based (the GIZA++
//! convention). Ingestion produces a row-stochastic matrix: target row `j`
//! distributes mass `1/links(j)` over its linked source columns; target
//! words without any link get an all-zero row, which the training loss
//! masks out.

use crate::error::{Error, Result};

/// T x T' matrix of alignment probabilities, target rows over source
/// columns. Stored at f64 so divergence costs can be used as test oracles.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignmentMatrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl AlignmentMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        AlignmentMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let r = rows.len();
        let c = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|row| row.len() != c) {
            return Err(Error::shape("ragged alignment rows"));
        }
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            data.extend_from_slice(row);
        }
        Ok(AlignmentMatrix { rows: r, cols: c, data })
    }

    /// Row-normalized matrix over hard links. Duplicate links collapse to
    /// one.
    pub fn from_links(links: &[(usize, usize)], t_len: usize, s_len: usize) -> Result<Self> {
        let mut m = Self::zeros(t_len, s_len);
        for &(i, j) in links {
            if i >= s_len || j >= t_len {
                return Err(Error::shape(format!(
                    "link {i}-{j} outside {s_len} source / {t_len} target tokens"
                )));
            }
            m.data[j * s_len + i] = 1.0;
        }
        for j in 0..t_len {
            let row = &mut m.data[j * s_len..(j + 1) * s_len];
            let degree = row.iter().filter(|&&v| v > 0.0).count();
            if degree > 0 {
                let mass = 1.0 / degree as f64;
                row.iter_mut().filter(|v| **v > 0.0).for_each(|v| *v = mass);
            }
        }
        Ok(m)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn get(&self, t: usize, i: usize) -> f64 {
        self.data[t * self.cols + i]
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.cols..(t + 1) * self.cols]
    }

    pub fn row_is_zero(&self, t: usize) -> bool {
        self.row(t).iter().all(|&v| v == 0.0)
    }

    /// Number of rows carrying alignment mass (the `T_u` of the masked
    /// divergence costs).
    pub fn unmasked_rows(&self) -> usize {
        (0..self.rows).filter(|&t| !self.row_is_zero(t)).count()
    }

    /// Hard links recoverable from the support: every strictly positive
    /// cell. Row normalization never changes the support, so for ingested
    /// matrices these are exactly the pharaoh links.
    pub fn links(&self) -> Vec<(usize, usize)> {
        let mut links = Vec::new();
        for j in 0..self.rows {
            for i in 0..self.cols {
                if self.get(j, i) > 0.0 {
                    links.push((i, j));
                }
            }
        }
        links
    }
}

/// Parses `i-j` pairs from one pharaoh line. An empty line is a valid empty
/// alignment.
pub fn parse_pharaoh(line: &str, line_no: usize) -> Result<Vec<(usize, usize)>> {
    let mut links = Vec::new();
    for piece in line.split_whitespace() {
        let (i, j) = piece
            .split_once('-')
            .ok_or_else(|| Error::format(line_no, format!("bad alignment token `{piece}`")))?;
        let i: usize = i
            .parse()
            .map_err(|_| Error::format(line_no, format!("bad source index in `{piece}`")))?;
        let j: usize = j
            .parse()
            .map_err(|_| Error::format(line_no, format!("bad target index in `{piece}`")))?;
        links.push((i, j));
    }
    Ok(links)
}

/// Parses and row-normalizes one pharaoh line against known sentence
/// lengths. Out-of-range indices report the given line number.
pub fn ingest_alignment(
    pharaoh_line: &str,
    t_len: usize,
    s_len: usize,
    line_no: usize,
) -> Result<AlignmentMatrix> {
    let links = parse_pharaoh(pharaoh_line, line_no)?;
    AlignmentMatrix::from_links(&links, t_len, s_len)
        .map_err(|e| Error::format(line_no, e.to_string()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_sources_on_one_target_split_mass() {
        let m = ingest_alignment("0-0 1-0", 1, 2, 0).unwrap();
        assert_eq!(m.row(0), &[0.5, 0.5]);
    }

    #[test]
    fn monotone_links_give_identity() {
        let m = ingest_alignment("0-0 1-1", 2, 2, 0).unwrap();
        assert_eq!(m.row(0), &[1.0, 0.0]);
        assert_eq!(m.row(1), &[0.0, 1.0]);
    }

    #[test]
    fn empty_line_gives_all_zero_rows() {
        let m = ingest_alignment("", 2, 3, 0).unwrap();
        assert!(m.row_is_zero(0));
        assert!(m.row_is_zero(1));
        assert_eq!(m.unmasked_rows(), 0);
    }

    #[test]
    fn out_of_range_index_is_a_format_error_with_line() {
        let err = ingest_alignment("5-0", 1, 2, 41).unwrap_err();
        match err {
            Error::Format { line, .. } => assert_eq!(line, 41),
            other => panic!("expected format error, got {other:?}"),
        }
    }

    #[test]
    fn malformed_token_is_rejected() {
        assert!(ingest_alignment("0_0", 1, 1, 0).is_err());
        assert!(ingest_alignment("a-0", 1, 1, 0).is_err());
    }

    #[test]
    fn nonzero_rows_sum_to_one() {
        let m = ingest_alignment("0-0 1-0 2-0 0-2", 3, 3, 0).unwrap();
        for t in 0..3 {
            let sum: f64 = m.row(t).iter().sum();
            if m.row_is_zero(t) {
                assert_eq!(sum, 0.0);
            } else {
                assert!((sum - 1.0).abs() < 1e-6);
            }
        }
        assert_eq!(m.unmasked_rows(), 2);
    }

    #[test]
    fn links_recover_the_support() {
        let line = "0-1 2-0 1-1";
        let m = ingest_alignment(line, 2, 3, 0).unwrap();
        let mut links = m.links();
        links.sort_unstable();
        assert_eq!(links, vec![(0, 1), (1, 1), (2, 0)]);
    }
}
