//! Topic membership vectors.

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Nonnegative D-dimensional vector summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct TopicVector {
    weights: Vec<f64>,
}

impl TopicVector {
    /// One- or multi-hot vector from integer labels, L1-normalized.
    pub fn from_labels(labels: &[usize], d: usize) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::usage("topic labels must not be empty"));
        }
        let mut weights = vec![0.0; d];
        for &label in labels {
            if label >= d {
                return Err(Error::usage(format!("topic label {label} outside 0..{d}")));
            }
            weights[label] = 1.0;
        }
        Self::from_weights(weights, d)
    }

    /// Raw nonnegative weights, L1-normalized to sum 1.
    pub fn from_weights(weights: Vec<f64>, d: usize) -> Result<Self> {
        if weights.len() != d {
            return Err(Error::shape(format!("expected {d} topic weights, got {}", weights.len())));
        }
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::usage("topic weights must be finite and nonnegative"));
        }
        let total: f64 = weights.iter().sum();
        if total <= 0.0 {
            return Err(Error::usage("topic weights must not all be zero"));
        }
        Ok(TopicVector { weights: weights.into_iter().map(|w| w / total).collect() })
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weights_f32(&self) -> Vec<f32> {
        self.weights.iter().map(|&w| w as f32).collect()
    }

    /// Parses one topic-file line: either comma-separated integer labels or
    /// D tab-separated floats. Anything containing a tab or a dot is read as
    /// weights.
    pub fn parse_line(line: &str, d: usize, line_no: usize) -> Result<Self> {
        let line = line.trim();
        if line.is_empty() {
            return Err(Error::format(line_no, "empty topic line"));
        }
        let parsed = if line.contains('\t') || line.contains('.') {
            let weights: Vec<f64> = line
                .split('\t')
                .map(|p| p.trim().parse::<f64>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::format(line_no, format!("bad topic weight: {e}")))?;
            Self::from_weights(weights, d)
        } else {
            let labels: Vec<usize> = line
                .split(',')
                .map(|p| p.trim().parse::<usize>())
                .collect::<std::result::Result<_, _>>()
                .map_err(|e| Error::format(line_no, format!("bad topic label: {e}")))?;
            Self::from_labels(&labels, d)
        };
        parsed.map_err(|e| match e {
            Error::Format { .. } => e,
            other => Error::format(line_no, other.to_string()),
        })
    }
}

/// Reads a topic file: one line per sentence.
pub fn read_topics_file(path: &Path, d: usize) -> Result<Vec<TopicVector>> {
    let text = fs::read_to_string(path)
        .map_err(|e| Error::usage(format!("cannot read topics {}: {e}", path.display())))?;
    text.lines()
        .enumerate()
        .map(|(no, line)| TopicVector::parse_line(line, d, no))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_label_is_one_hot() {
        let t = TopicVector::from_labels(&[3], 5).unwrap();
        assert_eq!(t.weights(), &[0.0, 0.0, 0.0, 1.0, 0.0]);
    }

    #[test]
    fn two_labels_split_mass() {
        let t = TopicVector::from_labels(&[1, 2], 4).unwrap();
        assert_eq!(t.weights(), &[0.0, 0.5, 0.5, 0.0]);
    }

    #[test]
    fn weights_are_l1_normalized() {
        let t = TopicVector::from_weights(vec![2.0, 2.0, 4.0], 3).unwrap();
        assert_eq!(t.weights(), &[0.25, 0.25, 0.5]);
    }

    #[test]
    fn zero_and_out_of_range_are_errors() {
        assert!(TopicVector::from_weights(vec![0.0, 0.0], 2).is_err());
        assert!(TopicVector::from_labels(&[4], 4).is_err());
        assert!(TopicVector::from_weights(vec![-1.0, 2.0], 2).is_err());
    }

    #[test]
    fn parse_line_distinguishes_labels_and_weights() {
        let labels = TopicVector::parse_line("1,2", 4, 0).unwrap();
        assert_eq!(labels.weights(), &[0.0, 0.5, 0.5, 0.0]);
        let weights = TopicVector::parse_line("2.0\t2.0\t4.0", 3, 0).unwrap();
        assert_eq!(weights.weights(), &[0.25, 0.25, 0.5]);
    }

    #[test]
    fn weights_sum_to_one() {
        let t = TopicVector::from_weights(vec![0.3, 1.7, 2.2, 0.9], 4).unwrap();
        let sum: f64 = t.weights().iter().sum();
        assert!((sum - 1.0).abs() < 1e-6);
    }
}
