use crate::error::{Error, Result};

use super::spectral::psd;

pub fn rms(v: &[f64]) -> f64 {
    (v.iter().map(|x| x * x).sum::<f64>() / v.len() as f64).sqrt()
}

fn same_len(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::ShapeMismatch {
            op: "metric",
            lhs: vec![a.len()],
            rhs: vec![b.len()],
        });
    }
    Ok(())
}

fn rel_rms(diff_rms: f64, reference_rms: f64, what: &str) -> Result<f64> {
    if reference_rms == 0.0 {
        return Err(Error::Degenerate(format!("{what}: reference has zero RMS")));
    }
    Ok(diff_rms / reference_rms)
}

/// `RMS(xhat - x) / RMS(x)`.
pub fn rrmse_temporal(xhat: &[f64], x: &[f64]) -> Result<f64> {
    same_len(xhat, x)?;
    let diff: Vec<f64> = xhat.iter().zip(x).map(|(a, b)| a - b).collect();
    rel_rms(rms(&diff), rms(x), "rrmse_temporal")
}

/// `RMS(PSD(xhat) - PSD(x)) / RMS(PSD(x))`.
pub fn rrmse_spectral(xhat: &[f64], x: &[f64]) -> Result<f64> {
    same_len(xhat, x)?;
    let (ph, px) = (psd(xhat)?, psd(x)?);
    let diff: Vec<f64> = ph.power.iter().zip(&px.power).map(|(a, b)| a - b).collect();
    rel_rms(rms(&diff), rms(&px.power), "rrmse_spectral")
}

/// Pearson correlation coefficient.
pub fn cc(xhat: &[f64], x: &[f64]) -> Result<f64> {
    same_len(xhat, x)?;
    let n = x.len() as f64;
    let (ma, mb) = (xhat.iter().sum::<f64>() / n, x.iter().sum::<f64>() / n);
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (&a, &b) in xhat.iter().zip(x) {
        let (da, db) = (a - ma, b - mb);
        cov += da * db;
        va += da * da;
        vb += db * db;
    }
    if va == 0.0 || vb == 0.0 {
        return Err(Error::Degenerate("cc: zero-variance input".into()));
    }
    Ok((cov / (va.sqrt() * vb.sqrt())).clamp(-1.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn signal() -> Vec<f64> {
        (0..512)
            .map(|i| (i as f64 * 0.05).sin() + 0.3 * (i as f64 * 0.31).cos() + 0.1)
            .collect()
    }

    #[test]
    fn temporal_identities() {
        let x = signal();
        assert_eq!(rrmse_temporal(&x, &x).unwrap(), 0.0);
        assert_eq!(rrmse_temporal(&vec![0.0; 512], &x).unwrap(), 1.0);
        let twice: Vec<f64> = x.iter().map(|v| 2.0 * v).collect();
        assert!((rrmse_temporal(&twice, &x).unwrap() - 1.0).abs() < 1e-14);
        assert!(matches!(
            rrmse_temporal(&x, &vec![0.0; 512]),
            Err(Error::Degenerate(_))
        ));
        assert!(rrmse_temporal(&x[..10], &x).is_err());
    }

    #[test]
    fn spectral_identities() {
        let x = signal();
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert_eq!(rrmse_spectral(&x, &x).unwrap(), 0.0);
        assert!(rrmse_spectral(&neg, &x).unwrap() < 1e-12);
        assert_eq!(rrmse_spectral(&vec![0.0; 512], &x).unwrap(), 1.0);
        assert!(rrmse_spectral(&x, &vec![0.0; 512]).is_err());
    }

    #[test]
    fn correlation_identities() {
        let x = signal();
        assert!((cc(&x, &x).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        assert!((cc(&neg, &x).unwrap() + 1.0).abs() < 1e-12);
        let affine: Vec<f64> = x.iter().map(|v| 3.5 * v - 7.0).collect();
        assert!((cc(&affine, &x).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(cc(&[1.0; 4], &[1.0, 2.0, 3.0, 4.0]), Err(Error::Degenerate(_))));
    }
}
