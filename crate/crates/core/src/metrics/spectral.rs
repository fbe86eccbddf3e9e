use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::SAMPLE_RATE;

fn check_len(n: usize) -> Result<()> {
    if n < 2 || !n.is_power_of_two() {
        return Err(Error::Dimension(format!(
            "FFT length must be a power of two >= 2, got {n}"
        )));
    }
    Ok(())
}

/// In-place iterative radix-2 decimation-in-time transform.
/// `sign = -1` is the forward transform, `+1` the (unscaled) inverse.
fn transform(buf: &mut [Complex64], sign: f64) {
    let n = buf.len();
    let bits = n.trailing_zeros();
    for i in 0..n {
        let j = i.reverse_bits() >> (usize::BITS - bits);
        if j > i {
            buf.swap(i, j);
        }
    }
    let mut size = 2;
    while size <= n {
        let half = size / 2;
        let step = sign * 2.0 * std::f64::consts::PI / size as f64;
        for start in (0..n).step_by(size) {
            for k in 0..half {
                let w = Complex64::from_polar(1.0, step * k as f64);
                let t = w * buf[start + k + half];
                let u = buf[start + k];
                buf[start + k] = u + t;
                buf[start + k + half] = u - t;
            }
        }
        size *= 2;
    }
}

/// Forward DFT of a real vector whose length is a power of two.
pub fn fft(v: &[f64]) -> Result<Vec<Complex64>> {
    check_len(v.len())?;
    let mut buf: Vec<Complex64> = v.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    transform(&mut buf, -1.0);
    Ok(buf)
}

pub fn fft_complex(v: &[Complex64]) -> Result<Vec<Complex64>> {
    check_len(v.len())?;
    let mut buf = v.to_vec();
    transform(&mut buf, -1.0);
    Ok(buf)
}

/// Inverse DFT, scaled by `1/N`.
pub fn ifft(v: &[Complex64]) -> Result<Vec<Complex64>> {
    check_len(v.len())?;
    let mut buf = v.to_vec();
    transform(&mut buf, 1.0);
    let scale = 1.0 / v.len() as f64;
    buf.iter_mut().for_each(|z| *z *= scale);
    Ok(buf)
}

/// One-sided power spectral density of an epoch.
#[derive(Clone, Debug, PartialEq)]
pub struct Spectrum {
    /// `N/2 + 1` non-negative power values.
    pub power: Vec<f64>,
    /// Bin spacing `fs / N` in Hz.
    pub resolution: f64,
}

impl Spectrum {
    pub fn frequency(&self, bin: usize) -> f64 {
        bin as f64 * self.resolution
    }

    /// `Σ power · Δf`, which equals the mean square of the signal.
    pub fn total_power(&self) -> f64 {
        self.power.iter().sum::<f64>() * self.resolution
    }

    /// Integrated power over bins whose frequency lies in `[lo, hi]`.
    pub fn band_power(&self, lo: f64, hi: f64) -> f64 {
        (0..self.power.len())
            .filter(|&b| (lo..=hi).contains(&self.frequency(b)))
            .map(|b| self.power[b])
            .sum::<f64>()
            * self.resolution
    }
}

/// Windowless periodogram `|X|² / (fs · N)` with interior bins doubled.
pub fn psd(v: &[f64]) -> Result<Spectrum> {
    psd_at(v, SAMPLE_RATE)
}

pub fn psd_at(v: &[f64], fs: f64) -> Result<Spectrum> {
    let n = v.len();
    let spec = fft(v)?;
    let norm = 1.0 / (fs * n as f64);
    let power = (0..=n / 2)
        .map(|k| {
            let p = spec[k].norm_sqr() * norm;
            if k == 0 || k == n / 2 {
                p
            } else {
                2.0 * p
            }
        })
        .collect();
    Ok(Spectrum {
        power,
        resolution: fs / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn impulse_and_constant() {
        let mut imp = vec![0.0; 16];
        imp[0] = 1.0;
        for z in fft(&imp).unwrap() {
            assert!((z - Complex64::new(1.0, 0.0)).norm() < 1e-15);
        }
        let spec = fft(&[2.5; 8]).unwrap();
        assert!((spec[0].re - 20.0).abs() < 1e-12);
        assert!(spec[1..].iter().all(|z| z.norm() < 1e-12));
    }

    #[test]
    fn rejects_non_power_of_two() {
        assert!(fft(&[1.0; 12]).is_err());
        assert!(fft(&[1.0]).is_err());
    }

    #[test]
    fn inverse_round_trip() {
        let v: Vec<f64> = (0..64).map(|i| (i as f64 * 0.7).sin() + 0.1 * i as f64).collect();
        let back = ifft(&fft(&v).unwrap()).unwrap();
        for (a, b) in v.iter().zip(back) {
            assert!((a - b.re).abs() < 1e-12 && b.im.abs() < 1e-12);
        }
    }

    #[test]
    fn zero_signal_zero_psd() {
        let s = psd(&[0.0; 512]).unwrap();
        assert_eq!(s.power.len(), 257);
        assert!(s.power.iter().all(|&p| p == 0.0));
    }

    #[test]
    fn bin_aligned_sinusoid() {
        let v: Vec<f64> = (0..512)
            .map(|i| (2.0 * std::f64::consts::PI * 16.0 * i as f64 / 256.0).sin())
            .collect();
        let s = psd(&v).unwrap();
        let total: f64 = s.power.iter().sum();
        assert_eq!(s.frequency(32), 16.0);
        assert!(s.power[32] / total >= 0.99);
        // unit-amplitude sine has mean square 1/2
        assert!((s.total_power() - 0.5).abs() < 1e-12);
    }
}
