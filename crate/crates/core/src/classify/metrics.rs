use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Square confusion matrix; rows are true classes, columns predictions.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    n_classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn new(n_classes: usize) -> Self {
        Self {
            n_classes,
            counts: vec![0; n_classes * n_classes],
        }
    }

    pub fn from_rows(rows: &[Vec<u64>]) -> Result<Self> {
        let n = rows.len();
        if rows.iter().any(|r| r.len() != n) {
            return Err(Error::arg("confusion matrix must be square"));
        }
        Ok(Self {
            n_classes: n,
            counts: rows.concat(),
        })
    }

    pub fn from_pairs(n_classes: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut m = Self::new(n_classes);
        for (t, p) in pairs {
            m.record(t, p)?;
        }
        Ok(m)
    }

    pub fn record(&mut self, truth: usize, predicted: usize) -> Result<()> {
        if truth >= self.n_classes || predicted >= self.n_classes {
            return Err(Error::arg(format!(
                "class pair ({truth}, {predicted}) out of range for {} classes",
                self.n_classes
            )));
        }
        self.counts[truth * self.n_classes + predicted] += 1;
        Ok(())
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn get(&self, truth: usize, predicted: usize) -> u64 {
        self.counts[truth * self.n_classes + predicted]
    }

    pub fn rows(&self) -> Vec<Vec<u64>> {
        self.counts.chunks(self.n_classes.max(1)).map(|r| r.to_vec()).collect()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes).map(|i| self.get(i, i)).sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        (0..self.n_classes).map(|j| self.get(class, j)).sum()
    }

    /// trace / total, or 0 for an empty matrix.
    pub fn accuracy(&self) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.trace() as f64 / total as f64
        }
    }

    /// Recall per class; `None` for classes without test samples.
    pub fn per_class_recall(&self) -> Vec<Option<f64>> {
        (0..self.n_classes)
            .map(|c| {
                let s = self.support(c);
                (s > 0).then(|| self.get(c, c) as f64 / s as f64)
            })
            .collect()
    }

    /// Mean recall over classes that have at least one sample.
    ///
    /// The mean is formed as an exact fraction and rounded once, so e.g.
    /// recalls 9/10 and 4/5 give exactly 0.85.
    pub fn balanced_accuracy(&self) -> f64 {
        let present: Vec<(u64, u64)> = (0..self.n_classes)
            .filter_map(|c| {
                let s = self.support(c);
                (s > 0).then(|| (self.get(c, c), s))
            })
            .collect();
        if present.is_empty() {
            return 0.0;
        }
        match exact_mean_of_fractions(&present) {
            Some((num, den)) => num as f64 / den as f64,
            None => present.iter().map(|&(a, b)| a as f64 / b as f64).sum::<f64>() / present.len() as f64,
        }
    }

    /// Classes with zero support; they are left out of the balanced accuracy.
    pub fn empty_classes(&self) -> Vec<usize> {
        (0..self.n_classes).filter(|&c| self.support(c) == 0).collect()
    }
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// (Σ aᵢ/bᵢ) / k as a reduced fraction, or `None` on overflow.
fn exact_mean_of_fractions(fracs: &[(u64, u64)]) -> Option<(u128, u128)> {
    let (mut num, mut den) = (0u128, 1u128);
    for &(a, b) in fracs {
        let (a, b) = (a as u128, b as u128);
        let g = gcd(den, b);
        let lcm = den.checked_mul(b / g)?;
        num = num.checked_mul(lcm / den)?.checked_add(a.checked_mul(lcm / b)?)?;
        den = lcm;
        let r = gcd(num, den).max(1);
        num /= r;
        den /= r;
    }
    den = den.checked_mul(fracs.len() as u128)?;
    let r = gcd(num, den).max(1);
    Some((num / r, den / r))
}
