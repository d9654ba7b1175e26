use crate::error::{Error, Result};

/// Observed counts `X_0, ..., X_T`, optionally with a text label per row
/// (dates for real data).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CountSeries {
    values: Vec<u64>,
    labels: Option<Vec<String>>,
}

impl CountSeries {
    pub fn new(values: Vec<u64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidSeries("series is empty".into()));
        }
        Ok(Self {
            values,
            labels: None,
        })
    }

    pub fn with_labels(values: Vec<u64>, labels: Vec<String>) -> Result<Self> {
        if labels.len() != values.len() {
            return Err(Error::InvalidSeries(format!(
                "{} labels for {} values",
                labels.len(),
                values.len()
            )));
        }
        let mut s = Self::new(values)?;
        s.labels = Some(labels);
        Ok(s)
    }

    pub fn values(&self) -> &[u64] {
        &self.values
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    /// Index of the last observation, `T`.
    pub fn last_index(&self) -> usize {
        self.values.len() - 1
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// `X_t` as a float, with zero padding for negative `t`.
    #[inline]
    pub fn lagged(&self, t: usize, lag: usize) -> f64 {
        if lag > t {
            0.0
        } else {
            self.values[t - lag] as f64
        }
    }

    /// Rejects series too short for a lag-`p` fit (at least `p + 2` points).
    pub fn require_order(&self, p: usize) -> Result<()> {
        if self.values.len() < p + 2 {
            return Err(Error::InvalidSeries(format!(
                "{} observations are too few for lag order {p} (need {})",
                self.values.len(),
                p + 2
            )));
        }
        Ok(())
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().map(|&v| v as f64).sum::<f64>() / self.values.len() as f64
    }
}
