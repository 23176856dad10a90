//! Line-delimited dataset encoding shared by contracts and the test-set digest.
//!
//! Each sample is one line `label,f1,f2,...,fd\n`; features use the shortest
//! round-trip decimal rendering of the scalar type. The encoding is bit-exact:
//! hashing the encoded test set must reproduce the digest a contract stores.

use thiserror::Error;

use crate::scalar::{parse_finite, Scalar};

pub type ClassId = u32;

/// A labeled feature vector.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample<F> {
    pub features: Vec<F>,
    pub label: ClassId,
}

impl<F: Scalar> Sample<F> {
    pub fn new(features: Vec<F>, label: ClassId) -> Self {
        Sample { features, label }
    }

    pub fn dim(&self) -> usize {
        self.features.len()
    }

    pub fn is_finite(&self) -> bool {
        self.features.iter().all(|v| v.is_finite())
    }

    /// Bitwise equality (distinguishes `0.0` from `-0.0`).
    pub fn bit_eq(&self, other: &Self) -> bool {
        self.label == other.label
            && self.features.len() == other.features.len()
            && self
                .features
                .iter()
                .zip(&other.features)
                .all(|(a, b)| a.integer_decode() == b.integer_decode())
    }

    pub fn encode_line(&self, out: &mut String) {
        use std::fmt::Write;
        write!(out, "{}", self.label).expect("write to String");
        for v in &self.features {
            write!(out, ",{v}").expect("write to String");
        }
        out.push('\n');
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum DatasetError {
    #[error("line {line}: {reason}")]
    Malformed { line: usize, reason: String },
    #[error("line {line}: expected {expected} features, found {found}")]
    Dimension { line: usize, expected: usize, found: usize },
    #[error("dataset is not valid UTF-8")]
    Utf8,
}

pub fn encode<F: Scalar>(samples: &[Sample<F>]) -> String {
    let mut out = String::new();
    for s in samples {
        s.encode_line(&mut out);
    }
    out
}

/// Decodes a dataset. When `dim` is given, every line must carry exactly that
/// many features; otherwise the first line fixes the dimension.
pub fn decode<F: Scalar>(payload: &[u8], dim: Option<usize>) -> Result<Vec<Sample<F>>, DatasetError> {
    let text = std::str::from_utf8(payload).map_err(|_| DatasetError::Utf8)?;
    let mut expected = dim;
    let mut samples = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        let line_no = idx + 1;
        if line.is_empty() {
            return Err(DatasetError::Malformed { line: line_no, reason: "empty line".into() });
        }
        let mut fields = line.split(',');
        let label_text = fields.next().unwrap_or_default();
        let label: ClassId = label_text.parse().map_err(|_| DatasetError::Malformed {
            line: line_no,
            reason: format!("bad label `{label_text}`"),
        })?;
        let features = fields
            .map(|f| {
                parse_finite::<F>(f).ok_or_else(|| DatasetError::Malformed {
                    line: line_no,
                    reason: format!("bad feature `{f}`"),
                })
            })
            .collect::<Result<Vec<F>, _>>()?;
        let want = *expected.get_or_insert(features.len());
        if features.len() != want || want == 0 {
            return Err(DatasetError::Dimension { line: line_no, expected: want, found: features.len() });
        }
        samples.push(Sample { features, label });
    }
    Ok(samples)
}
