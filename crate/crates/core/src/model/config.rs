use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::neuralcore::{DEFAULT_BN_EPS, DEFAULT_BN_MOMENTUM};

/// Network hyper-parameters. Everything else (kernel width, window length)
/// is derived from these.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CleegnConfig {
    /// Number of EEG channels `C`.
    pub channels: usize,
    /// Sampling rate in Hz.
    pub fs: f32,
    /// Number of temporal filters `N_F`.
    pub n_filters: usize,
    /// Training window length in seconds.
    pub window_sec: f32,
    pub bn_eps: f32,
    pub bn_momentum: f32,
}

impl CleegnConfig {
    /// Defaults: `N_F = C`, 4 s windows, batch-norm eps 1e-3 and momentum 0.99.
    pub fn new(channels: usize, fs: f32) -> Self {
        CleegnConfig {
            channels,
            fs,
            n_filters: channels,
            window_sec: 4.0,
            bn_eps: DEFAULT_BN_EPS as f32,
            bn_momentum: DEFAULT_BN_MOMENTUM as f32,
        }
    }

    pub fn with_filters(mut self, n_filters: usize) -> Self {
        self.n_filters = n_filters;
        self
    }

    pub fn with_window_sec(mut self, window_sec: f32) -> Self {
        self.window_sec = window_sec;
        self
    }

    /// Temporal kernel width `floor(fs / 10)` (100 ms of samples).
    pub fn kernel_width(&self) -> usize {
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return 0;
        }
        (self.fs as f64 / 10.0).floor() as usize
    }

    /// Window length `T = floor(fs * window_sec)` in samples.
    pub fn window_len(&self) -> usize {
        let t = self.fs as f64 * self.window_sec as f64;
        if t.is_finite() && t > 0.0 {
            t.floor() as usize
        } else {
            0
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels < 2 {
            return Err(Error::Config(format!("need at least 2 channels, got {}", self.channels)));
        }
        if !(self.fs.is_finite() && self.fs > 0.0) {
            return Err(Error::Config(format!("sampling rate must be positive, got {}", self.fs)));
        }
        let k = self.kernel_width();
        if k == 0 {
            return Err(Error::Config(format!(
                "sampling rate {} Hz gives a zero-width temporal kernel (need fs >= 10)",
                self.fs
            )));
        }
        if self.n_filters == 0 {
            return Err(Error::Config("need at least one temporal filter".into()));
        }
        if self.window_len() < k {
            return Err(Error::Config(format!(
                "window of {} samples is shorter than the temporal kernel ({k})",
                self.window_len()
            )));
        }
        if !(self.bn_eps > 0.0) {
            return Err(Error::Config(format!("batch-norm eps must be positive, got {}", self.bn_eps)));
        }
        if !(self.bn_momentum > 0.0 && self.bn_momentum < 1.0) {
            return Err(Error::Config(format!(
                "batch-norm momentum must lie in (0, 1), got {}",
                self.bn_momentum
            )));
        }
        Ok(())
    }
}

/// Learnable parameters (conv weights and biases, batch-norm scale and
/// shift; running statistics excluded):
/// `k*N_F^2 + (k + 6 + C^2)*N_F + 2*C^2 + 4*C + 3`.
pub fn param_count(config: &CleegnConfig) -> usize {
    let c = config.channels;
    let n = config.n_filters;
    let k = config.kernel_width();
    k * n * n + (k + 6 + c * c) * n + 2 * c * c + 4 * c + 3
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn published_totals() {
        assert_eq!(param_count(&CleegnConfig::new(56, 128.0)), 220_755);
        assert_eq!(param_count(&CleegnConfig::new(20, 125.0)), 14_043);
        assert_eq!(param_count(&CleegnConfig::new(2, 20.0)), 51);
    }

    #[test]
    fn derived_sizes() {
        let c = CleegnConfig::new(56, 128.0);
        assert_eq!((c.kernel_width(), c.window_len()), (12, 512));
        let c = CleegnConfig::new(20, 125.0);
        assert_eq!((c.kernel_width(), c.window_len()), (12, 500));
        assert_eq!(CleegnConfig::new(4, 10.0).kernel_width(), 1);
    }

    #[test]
    fn low_rate_is_rejected() {
        assert!(matches!(CleegnConfig::new(4, 9.5).validate(), Err(Error::Config(_))));
        assert!(CleegnConfig::new(1, 128.0).validate().is_err());
        assert!(CleegnConfig::new(4, 128.0).with_filters(0).validate().is_err());
        assert!(CleegnConfig::new(4, 128.0).with_window_sec(0.05).validate().is_err());
        assert!(CleegnConfig::new(4, 128.0).validate().is_ok());
    }
}
