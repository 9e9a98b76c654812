//! Probability vectors over finite supports.

use thiserror::Error;

/// Tolerance for accepting a vector as a pmf.
pub const PMF_TOL: f64 = 1e-10;

#[derive(Debug, Error, PartialEq)]
pub enum ProbError {
    #[error("pmf entries must be in [0,1]: entry {index} = {value}")]
    EntryOutOfRange { index: usize, value: f64 },
    #[error("pmf must sum to 1 within {PMF_TOL}: sum = {0}")]
    BadSum(f64),
    #[error("pmf must be nonempty")]
    Empty,
}

/// A probability mass function over a finite, ordered support.
#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector(Vec<f64>);

impl ProbabilityVector {
    pub fn new(weights: Vec<f64>) -> Result<Self, ProbError> {
        if weights.is_empty() {
            return Err(ProbError::Empty);
        }
        for (index, &value) in weights.iter().enumerate() {
            if !(value.is_finite() && (-PMF_TOL..=1.0 + PMF_TOL).contains(&value)) {
                return Err(ProbError::EntryOutOfRange { index, value });
            }
        }
        let sum: f64 = weights.iter().sum();
        if (sum - 1.0).abs() > PMF_TOL {
            return Err(ProbError::BadSum(sum));
        }
        Ok(Self(weights))
    }

    /// Normalizes nonnegative weights into a pmf.
    pub fn normalized(weights: Vec<f64>) -> Result<Self, ProbError> {
        let sum: f64 = weights.iter().sum();
        if !(sum > 0.0 && sum.is_finite()) {
            return Err(ProbError::BadSum(sum));
        }
        Self::new(weights.into_iter().map(|w| w / sum).collect())
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    /// Point mass at `index`.
    pub fn dirac(n: usize, index: usize) -> Self {
        let mut w = vec![0.0; n];
        w[index] = 1.0;
        Self(w)
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn dot(&self, other: &[f64]) -> f64 {
        self.0.iter().zip(other).map(|(a, b)| a * b).sum()
    }

    /// Total variation distance: half the l1 distance (Scheffe identity on
    /// finite supports).
    pub fn tv_distance(&self, other: &Self) -> f64 {
        0.5 * self
            .0
            .iter()
            .zip(&other.0)
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>()
    }
}

impl std::ops::Index<usize> for ProbabilityVector {
    type Output = f64;
    fn index(&self, i: usize) -> &f64 {
        &self.0[i]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn accepts_valid_pmf() {
        let p = ProbabilityVector::new(vec![0.25, 0.5, 0.25]).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(p[1], 0.5);
    }

    #[test]
    fn rejects_bad_sum() {
        assert!(matches!(
            ProbabilityVector::new(vec![0.5, 0.6]),
            Err(ProbError::BadSum(_))
        ));
    }

    #[test]
    fn rejects_negative_entry() {
        assert!(matches!(
            ProbabilityVector::new(vec![1.2, -0.2]),
            Err(ProbError::EntryOutOfRange { .. })
        ));
    }

    #[test]
    fn tv_is_half_l1() {
        let p = ProbabilityVector::new(vec![1.0, 0.0]).unwrap();
        let q = ProbabilityVector::new(vec![0.5, 0.5]).unwrap();
        assert!((p.tv_distance(&q) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn normalizes_weights() {
        let p = ProbabilityVector::normalized(vec![0.5, 1.0, 0.5]).unwrap();
        assert_eq!(p.as_slice(), &[0.25, 0.5, 0.25]);
    }
}
