use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Multichannel sampled signal (channels × N) with its sampling rate and labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalRecord {
    channels: Vec<Vec<f64>>,
    fs: u32,
    labels: Vec<String>,
}

impl SignalRecord {
    /// Builds a record, checking equal lengths, positive `fs` and unique labels.
    pub fn new(channels: Vec<Vec<f64>>, fs: u32, labels: Vec<String>) -> Result<Self> {
        if fs == 0 {
            return Err(Error::invalid("sampling rate must be positive"));
        }
        if channels.is_empty() {
            return Err(Error::invalid("record needs at least one channel"));
        }
        let n = channels[0].len();
        if n == 0 {
            return Err(Error::invalid("record needs at least one sample"));
        }
        if channels.iter().any(|c| c.len() != n) {
            return Err(Error::invalid("channels differ in length"));
        }
        if labels.len() != channels.len() {
            return Err(Error::invalid("one label per channel required"));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(Error::invalid(format!("duplicate channel label {l:?}")));
            }
        }
        Ok(Self { channels, fs, labels })
    }

    /// Builds a record with labels `ch1`, `ch2`, ...
    pub fn from_channels(channels: Vec<Vec<f64>>, fs: u32) -> Result<Self> {
        let labels = (1..=channels.len()).map(|i| format!("ch{i}")).collect();
        Self::new(channels, fs, labels)
    }

    pub fn fs(&self) -> u32 {
        self.fs
    }

    pub fn fs_f64(&self) -> f64 {
        f64::from(self.fs)
    }

    /// Samples per channel.
    pub fn len(&self) -> usize {
        self.channels[0].len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn n_channels(&self) -> usize {
        self.channels.len()
    }

    pub fn channel(&self, i: usize) -> &[f64] {
        &self.channels[i]
    }

    pub fn channels(&self) -> &[Vec<f64>] {
        &self.channels
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn into_channels(self) -> Vec<Vec<f64>> {
        self.channels
    }

    /// Applies `f` to every channel, keeping labels and sampling rate.
    pub fn map_channels<F>(&self, mut f: F) -> Result<Self>
    where
        F: FnMut(&[f64]) -> Result<Vec<f64>>,
    {
        let channels = self.channels.iter().map(|c| f(c)).collect::<Result<Vec<_>>>()?;
        Self::new(channels, self.fs, self.labels.clone())
    }

    /// Record restricted to the given channel indices.
    pub fn select(&self, idx: &[usize]) -> Result<Self> {
        let mut ch = Vec::with_capacity(idx.len());
        let mut labels = Vec::with_capacity(idx.len());
        for &i in idx {
            if i >= self.n_channels() {
                return Err(Error::invalid(format!("channel {i} out of range")));
            }
            ch.push(self.channels[i].clone());
            labels.push(self.labels[i].clone());
        }
        Self::new(ch, self.fs, labels)
    }
}

/// Strictly increasing 0-based sample indices of R-peaks for one source.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BeatAnnotations {
    indices: Vec<usize>,
    fs: u32,
}

impl BeatAnnotations {
    /// Checks strict monotonicity and a positive sampling rate.
    pub fn new(indices: Vec<usize>, fs: u32) -> Result<Self> {
        if fs == 0 {
            return Err(Error::invalid("sampling rate must be positive"));
        }
        if indices.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::invalid("annotations must be strictly increasing"));
        }
        Ok(Self { indices, fs })
    }

    /// Sorts and deduplicates arbitrary indices before wrapping them.
    pub fn from_unsorted(mut indices: Vec<usize>, fs: u32) -> Result<Self> {
        indices.sort_unstable();
        indices.dedup();
        Self::new(indices, fs)
    }

    pub fn empty(fs: u32) -> Self {
        Self { indices: Vec::new(), fs }
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn fs(&self) -> u32 {
        self.fs
    }

    pub fn fs_f64(&self) -> f64 {
        f64::from(self.fs)
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Fails when any index is outside `[0, n)`.
    pub fn check_bounds(&self, n: usize) -> Result<()> {
        match self.indices.last() {
            Some(&last) if last >= n => Err(Error::invalid(format!(
                "annotation {last} outside signal of length {n}"
            ))),
            _ => Ok(()),
        }
    }

    /// RR intervals in samples.
    pub fn rr_samples(&self) -> Vec<usize> {
        self.indices.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Annotations falling in `[start, end)`, shifted to start at 0.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        let indices = self
            .indices
            .iter()
            .filter(|&&i| i >= start && i < end)
            .map(|&i| i - start)
            .collect();
        Self { indices, fs: self.fs }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn record_validation() {
        assert!(SignalRecord::from_channels(vec![vec![1.0, 2.0], vec![3.0]], 10).is_err());
        assert!(SignalRecord::from_channels(vec![vec![1.0]], 0).is_err());
        assert!(SignalRecord::new(vec![vec![1.0], vec![2.0]], 5, vec!["a".into(), "a".into()]).is_err());
        let r = SignalRecord::from_channels(vec![vec![1.0, 2.0], vec![3.0, 4.0]], 5).unwrap();
        assert_eq!(r.labels(), ["ch1", "ch2"]);
        assert_eq!(r.len(), 2);
    }

    #[test]
    fn annotations_validation() {
        assert!(BeatAnnotations::new(vec![1, 1], 10).is_err());
        assert!(BeatAnnotations::new(vec![3, 2], 10).is_err());
        let a = BeatAnnotations::new(vec![1, 5, 9], 10).unwrap();
        assert!(a.check_bounds(9).is_err());
        assert!(a.check_bounds(10).is_ok());
        assert_eq!(a.rr_samples(), vec![4, 4]);
        assert_eq!(a.slice(2, 9).indices(), &[3]);
    }
}
