//! Nonnegative measures on finite, indexed supports.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on total mass for a measure to count as a probability measure.
pub const PROBABILITY_TOL: f64 = 1e-12;

/// Nonnegative weights on `0..len()`, optionally labeled with points on the
/// real line (used for measures of observations).
///
/// Zero-weight atoms are kept so that comparability of two measures can be
/// decided from their zero sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    weights: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    labels: Option<Vec<f64>>,
}

impl DiscreteMeasure {
    pub fn new(weights: Vec<f64>) -> Result<Self> {
        if weights.is_empty() {
            return Err(Error::EmptyInput("measure support"));
        }
        if let Some((i, w)) = weights
            .iter()
            .enumerate()
            .find(|(_, w)| !w.is_finite() || **w < 0.0)
        {
            return Err(Error::InvalidMeasure(format!(
                "weight {i} is {w}, expected a finite nonnegative number"
            )));
        }
        Ok(Self {
            weights,
            labels: None,
        })
    }

    /// Validates that `weights` already sum to one.
    pub fn probability(weights: Vec<f64>) -> Result<Self> {
        let m = Self::new(weights)?;
        if !m.is_probability() {
            return Err(Error::InvalidMeasure(format!(
                "total mass {} is not 1",
                m.total_mass()
            )));
        }
        Ok(m)
    }

    /// Builds a probability measure by normalizing positive total mass.
    pub fn normalize(weights: Vec<f64>) -> Result<Self> {
        Self::new(weights)?.normalized()
    }

    pub fn point_mass(size: usize, index: usize) -> Result<Self> {
        if index >= size {
            return Err(Error::IndexOutOfRange { index, len: size });
        }
        let mut w = vec![0.0; size];
        w[index] = 1.0;
        Self::new(w)
    }

    pub fn uniform(size: usize) -> Result<Self> {
        Self::new(vec![1.0 / size as f64; size])
    }

    pub fn with_labels(mut self, labels: Vec<f64>) -> Result<Self> {
        if labels.len() != self.weights.len() {
            return Err(Error::Dimension {
                left: self.weights.len(),
                right: labels.len(),
            });
        }
        if labels.iter().any(|x| !x.is_finite()) {
            return Err(Error::InvalidMeasure("labels must be finite".into()));
        }
        self.labels = Some(labels);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.weights[i]
    }

    pub fn labels(&self) -> Option<&[f64]> {
        self.labels.as_deref()
    }

    pub fn into_weights(self) -> Vec<f64> {
        self.weights
    }

    pub fn total_mass(&self) -> f64 {
        self.weights.iter().sum()
    }

    pub fn is_probability(&self) -> bool {
        (self.total_mass() - 1.0).abs() <= PROBABILITY_TOL
    }

    pub fn is_zero(&self) -> bool {
        self.weights.iter().all(|&w| w == 0.0)
    }

    pub fn normalized(&self) -> Result<Self> {
        let total = self.total_mass();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::InvalidMeasure(format!(
                "cannot normalize a measure with total mass {total}"
            )));
        }
        Ok(Self {
            weights: self.weights.iter().map(|w| w / total).collect(),
            labels: self.labels.clone(),
        })
    }

    /// `c * self` for `c >= 0`.
    pub fn scaled(&self, c: f64) -> Result<Self> {
        let mut out = Self::new(self.weights.iter().map(|w| w * c).collect())?;
        out.labels = self.labels.clone();
        Ok(out)
    }

    /// Integral of `f` (given by its values on the support).
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.weights.iter().zip(f).map(|(w, v)| w * v).sum()
    }
}

/// `L_n = (1/n) Σ δ_{y_k}` with duplicate observations merged; atoms are
/// sorted by label.
pub fn empirical_measure(ys: &[f64]) -> Result<DiscreteMeasure> {
    if ys.is_empty() {
        return Err(Error::EmptyInput("observation sequence"));
    }
    if ys.iter().any(|y| !y.is_finite()) {
        return Err(Error::InvalidMeasure("observations must be finite".into()));
    }
    let mut sorted = ys.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut labels: Vec<f64> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for y in sorted {
        match labels.last() {
            Some(&last) if last == y => *counts.last_mut().unwrap() += 1,
            _ => {
                labels.push(y);
                counts.push(1);
            }
        }
    }
    let n = ys.len() as f64;
    DiscreteMeasure::new(counts.into_iter().map(|c| c as f64 / n).collect())?.with_labels(labels)
}
