//! Denoising quality measures and model cost.
//!
//! - `RRMSE_temporal = RMS(x̂ - x) / RMS(x)`
//! - `RRMSE_spectral = RMS(PSD(x̂) - PSD(x)) / RMS(PSD(x))`
//! - `CC`: Pearson correlation of `x̂` and `x`
//!
//! PSDs are one-sided periodograms at 256 Hz from a radix-2 FFT.

mod measures;
mod report;
mod spectral;

pub use measures::{cc, rms, rrmse_spectral, rrmse_temporal};
pub use report::{cost_report, CostReport, MetricReport, PairMetrics};
pub use spectral::{fft, fft_complex, ifft, psd, psd_at, Spectrum};
