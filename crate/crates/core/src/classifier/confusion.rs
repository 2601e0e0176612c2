use std::fmt;

use serde::{Deserialize, Serialize};

/// Rows are true labels, columns predicted labels.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub labels: Vec<String>,
    pub counts: Vec<Vec<usize>>,
}

impl ConfusionMatrix {
    pub fn new(labels: Vec<String>) -> Self {
        let k = labels.len();
        Self {
            labels,
            counts: vec![vec![0; k]; k],
        }
    }

    pub fn record(&mut self, truth: usize, predicted: usize) {
        self.counts[truth][predicted] += 1;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().flatten().sum()
    }

    pub fn correct(&self) -> usize {
        (0..self.counts.len()).map(|i| self.counts[i][i]).sum()
    }

    pub fn accuracy(&self) -> f64 {
        match self.total() {
            0 => 0.0,
            t => self.correct() as f64 / t as f64,
        }
    }

    pub fn row_sums(&self) -> Vec<usize> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn off_diagonal(&self) -> usize {
        self.total() - self.correct()
    }

    /// The unordered label pair with the most errors between them, counting
    /// both directions, with that count. Ties go to the first pair found.
    pub fn most_confused_pair(&self) -> Option<(usize, usize, usize)> {
        let k = self.counts.len();
        let mut best: Option<(usize, usize, usize)> = None;
        for a in 0..k {
            for b in a + 1..k {
                let n = self.counts[a][b] + self.counts[b][a];
                if n > 0 && best.is_none_or(|(_, _, m)| n > m) {
                    best = Some((a, b, n));
                }
            }
        }
        best
    }

    pub fn merge(&mut self, other: &ConfusionMatrix) {
        for (r, o) in self.counts.iter_mut().zip(&other.counts) {
            for (c, v) in r.iter_mut().zip(o) {
                *c += v;
            }
        }
    }
}

impl fmt::Display for ConfusionMatrix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self
            .labels
            .iter()
            .map(String::len)
            .chain(self.counts.iter().flatten().map(|c| c.to_string().len()))
            .max()
            .unwrap_or(1)
            .max(4);
        write!(f, "{:>width$}", "")?;
        for l in &self.labels {
            write!(f, " {l:>width$}")?;
        }
        writeln!(f, "   <- classified as")?;
        for (l, row) in self.labels.iter().zip(&self.counts) {
            write!(f, "{l:>width$}")?;
            for c in row {
                write!(f, " {c:>width$}")?;
            }
            writeln!(f)?;
        }
        write!(
            f,
            "accuracy {:.2}% ({}/{})",
            100.0 * self.accuracy(),
            self.correct(),
            self.total()
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accuracy_and_pairs() {
        let mut m = ConfusionMatrix::new(vec!["a".into(), "b".into(), "c".into()]);
        for _ in 0..5 {
            m.record(0, 0);
        }
        m.record(1, 2);
        m.record(2, 1);
        m.record(0, 1);
        m.record(2, 2);
        assert_eq!(m.total(), 9);
        assert_eq!(m.correct(), 6);
        assert!((m.accuracy() - 6.0 / 9.0).abs() < 1e-15);
        assert_eq!(m.row_sums(), vec![6, 1, 2]);
        assert_eq!(m.most_confused_pair(), Some((1, 2, 2)));
        let text = m.to_string();
        assert!(text.contains("classified as"));
        assert!(text.contains("66.67%"));
    }

    #[test]
    fn empty_matrix() {
        let m = ConfusionMatrix::new(vec!["a".into(), "b".into()]);
        assert_eq!(m.accuracy(), 0.0);
        assert_eq!(m.most_confused_pair(), None);
    }
}
