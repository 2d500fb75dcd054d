//! Cluster label vectors and their CSV form (one integer per line).

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::write_atomic;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelVector {
    labels: Vec<usize>,
    k: usize,
}

impl LabelVector {
    /// `k` is one past the largest label (0 for an empty vector).
    pub fn new(labels: Vec<usize>) -> Self {
        let k = labels.iter().max().map_or(0, |&m| m + 1);
        LabelVector { labels, k }
    }

    /// Builds a vector with an explicit label count, checking `label < k`.
    pub fn with_k(labels: Vec<usize>, k: usize) -> Result<Self> {
        if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::InvalidArgument(format!("label {bad} >= k = {k}")));
        }
        Ok(LabelVector { labels, k })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn distinct(&self) -> usize {
        self.labels.iter().collect::<BTreeSet<_>>().len()
    }

    /// True when every value in `0..k` is used at least once.
    pub fn is_surjective(&self) -> bool {
        self.distinct() == self.k
    }

    /// Renumbers labels in order of first appearance.
    pub fn canonical(&self) -> LabelVector {
        let mut map = vec![usize::MAX; self.k];
        let mut next = 0;
        let labels = self
            .labels
            .iter()
            .map(|&l| {
                if map[l] == usize::MAX {
                    map[l] = next;
                    next += 1;
                }
                map[l]
            })
            .collect();
        LabelVector { labels, k: next }
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::with_capacity(self.labels.len() * 2);
        for l in &self.labels {
            writeln!(s, "{l}").unwrap();
        }
        s
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let labels = text
            .lines()
            .enumerate()
            .filter(|(_, line)| !line.trim().is_empty())
            .map(|(i, line)| {
                line.trim().parse::<usize>().map_err(|_| Error::LabelParse {
                    line: i + 1,
                    content: line.to_string(),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(LabelVector::new(labels))
    }
}

pub fn save_labels(l: &LabelVector, path: impl AsRef<Path>) -> Result<()> {
    write_atomic(path.as_ref(), l.to_csv().as_bytes())
}

pub fn load_labels(path: impl AsRef<Path>) -> Result<LabelVector> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    LabelVector::from_csv(&text)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_layout() {
        assert_eq!(LabelVector::new(vec![0, 1, 1, 0]).to_csv(), "0\n1\n1\n0\n");
    }

    #[test]
    fn empty_file() {
        let l = LabelVector::from_csv("").unwrap();
        assert!(l.is_empty());
        assert_eq!(l.k(), 0);
    }

    #[test]
    fn fractional_line_is_parse_error() {
        match LabelVector::from_csv("1.5\n") {
            Err(Error::LabelParse { line, .. }) => assert_eq!(line, 1),
            other => panic!("unexpected {other:?}"),
        }
        match LabelVector::from_csv("0\n2\nx\n") {
            Err(Error::LabelParse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("l.csv");
        let l = LabelVector::new(vec![3, 0, 2, 2, 1]);
        save_labels(&l, &path).unwrap();
        assert_eq!(fs::read_to_string(&path).unwrap(), "3\n0\n2\n2\n1\n");
        assert_eq!(load_labels(&path).unwrap(), l);
    }

    #[test]
    fn canonical_relabels_by_first_appearance() {
        let l = LabelVector::new(vec![2, 2, 0, 1, 0]).canonical();
        assert_eq!(l.labels(), &[0, 0, 1, 2, 1]);
        assert_eq!(l.k(), 3);
    }

    #[test]
    fn with_k_checks_range() {
        assert!(LabelVector::with_k(vec![0, 3], 3).is_err());
        assert!(!LabelVector::with_k(vec![0, 0], 2).unwrap().is_surjective());
    }
}
