//! Time-series container shared by every pipeline stage.

use serde::de::Error as DeError;
use serde::{Deserialize, Deserializer, Serialize};

/// Errors raised by the deterministic analytics operations.
#[derive(Debug, thiserror::Error)]
pub enum AnalyticsError {
    /// Input too short, constant, or otherwise unusable for the operation.
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    /// Two series were required to have equal lengths but do not.
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    /// Segment window outside `1..=len`.
    #[error("invalid window {window} for series of length {len}")]
    InvalidWindow { window: usize, len: usize },
    /// Operation is defined per channel but got a multichannel series.
    #[error("operation requires a single-channel series, got {0} channels")]
    MultiChannel(usize),
    /// Construction-time invariant violation.
    #[error("invalid series: {0}")]
    InvalidSeries(String),
}

/// Ordered real-valued samples with optional channel and sampling metadata.
///
/// Multichannel data is stored channel-major: channel `c` occupies
/// `values[c * per_channel_len .. (c + 1) * per_channel_len]`. Attribute
/// operations apply per channel; the pairwise measures take two
/// single-channel series.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimeSeries {
    values: Vec<f64>,
    channels: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    sample_rate_hz: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    name: Option<String>,
}

impl TimeSeries {
    /// Single-channel series over `values`.
    pub fn new(values: Vec<f64>) -> Result<Self, AnalyticsError> {
        Self::with_channels(values, 1)
    }

    /// Multichannel series; `values.len()` must be a multiple of `channels`.
    pub fn with_channels(values: Vec<f64>, channels: usize) -> Result<Self, AnalyticsError> {
        if values.is_empty() {
            return Err(AnalyticsError::InvalidSeries("length must be >= 1".into()));
        }
        if channels == 0 {
            return Err(AnalyticsError::InvalidSeries(
                "channels must be >= 1".into(),
            ));
        }
        if !values.len().is_multiple_of(channels) {
            return Err(AnalyticsError::InvalidSeries(format!(
                "value count {} is not a multiple of {} channels",
                values.len(),
                channels
            )));
        }
        if let Some(bad) = values.iter().find(|v| !v.is_finite()) {
            return Err(AnalyticsError::InvalidSeries(format!(
                "non-finite sample {bad}"
            )));
        }
        Ok(Self {
            values,
            channels,
            sample_rate_hz: None,
            name: None,
        })
    }

    pub fn with_sample_rate(mut self, hz: f64) -> Result<Self, AnalyticsError> {
        if !(hz.is_finite() && hz > 0.0) {
            return Err(AnalyticsError::InvalidSeries(format!(
                "sample rate must be positive, got {hz}"
            )));
        }
        self.sample_rate_hz = Some(hz);
        Ok(self)
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = Some(name.into());
        self
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Total sample count across all channels.
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        false // length >= 1 is a construction invariant
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn per_channel_len(&self) -> usize {
        self.values.len() / self.channels
    }

    pub fn sample_rate_hz(&self) -> Option<f64> {
        self.sample_rate_hz
    }

    pub fn name(&self) -> Option<&str> {
        self.name.as_deref()
    }

    /// Borrow the sample slice of one channel.
    pub fn channel(&self, idx: usize) -> Result<&[f64], AnalyticsError> {
        if idx >= self.channels {
            return Err(AnalyticsError::InvalidSeries(format!(
                "channel {idx} out of range (have {})",
                self.channels
            )));
        }
        let n = self.per_channel_len();
        Ok(&self.values[idx * n..(idx + 1) * n])
    }

    /// One channel as a standalone single-channel series; the attribute
    /// operations apply per channel.
    pub fn channel_series(&self, idx: usize) -> Result<TimeSeries, AnalyticsError> {
        let values = self.channel(idx)?.to_vec();
        let mut ts = TimeSeries::new(values)?;
        ts.sample_rate_hz = self.sample_rate_hz;
        ts.name = self
            .name
            .as_ref()
            .map(|n| format!("{n}[{idx}]"))
            .or_else(|| (self.channels > 1).then(|| format!("channel {idx}")));
        Ok(ts)
    }

    /// The sample slice, requiring a single-channel series.
    pub fn single_channel(&self) -> Result<&[f64], AnalyticsError> {
        if self.channels != 1 {
            return Err(AnalyticsError::MultiChannel(self.channels));
        }
        Ok(&self.values)
    }
}

/// Accepts either a bare JSON array of numbers or the full object form.
impl<'de> Deserialize<'de> for TimeSeries {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Bare(Vec<f64>),
            Full {
                values: Vec<f64>,
                #[serde(default)]
                channels: Option<usize>,
                #[serde(default)]
                sample_rate_hz: Option<f64>,
                #[serde(default)]
                name: Option<String>,
            },
        }
        match Repr::deserialize(deserializer)? {
            Repr::Bare(values) => TimeSeries::new(values).map_err(DeError::custom),
            Repr::Full {
                values,
                channels,
                sample_rate_hz,
                name,
            } => {
                let mut ts = TimeSeries::with_channels(values, channels.unwrap_or(1))
                    .map_err(DeError::custom)?;
                if let Some(hz) = sample_rate_hz {
                    ts = ts.with_sample_rate(hz).map_err(DeError::custom)?;
                }
                if let Some(name) = name {
                    ts = ts.with_name(name);
                }
                Ok(ts)
            }
        }
    }
}
