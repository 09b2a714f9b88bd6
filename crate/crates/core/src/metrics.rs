//! Recovery quality metrics.

use crate::error::{Error, Result};
use crate::tensor::Tensor;

/// Relative square error `‖x̂ - x‖²_F / ‖x‖²_F`.
pub fn rse(xhat: &Tensor, x: &Tensor) -> Result<f64> {
    xhat.check_same_shape(x)?;
    let denom: f64 = x.data().iter().map(|v| v * v).sum();
    if denom == 0.0 {
        return Err(Error::InvalidArgument("RSE against an all-zero ground truth".into()));
    }
    let num: f64 = xhat.data().iter().zip(x.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    Ok(num / denom)
}

/// Peak signal-to-noise ratio in dB, `10 log10(peak² · numel / ‖x̂ - x‖²_F)`.
///
/// `peak` defaults to `max |x|`. An exact reconstruction yields `+∞`.
pub fn psnr(xhat: &Tensor, x: &Tensor, peak: Option<f64>) -> Result<f64> {
    xhat.check_same_shape(x)?;
    let peak = peak.unwrap_or_else(|| x.max_abs());
    if !(peak > 0.0) || !peak.is_finite() {
        return Err(Error::InvalidArgument(format!("PSNR peak must be positive, got {peak}")));
    }
    let err: f64 = xhat.data().iter().zip(x.data()).map(|(a, b)| (a - b) * (a - b)).sum();
    if err == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (peak * peak * x.numel() as f64 / err).log10())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn sample() -> Tensor {
        Tensor::new(vec![2, 2], vec![1.0, -2.0, 3.0, 0.5]).unwrap()
    }

    #[test]
    fn rse_values() {
        let x = sample();
        assert_eq!(rse(&x, &x).unwrap(), 0.0);
        assert_eq!(rse(&Tensor::zeros(&[2, 2]).unwrap(), &x).unwrap(), 1.0);
        assert_abs_diff_eq!(rse(&x.scale(2.0), &x).unwrap(), 1.0, epsilon = 1e-15);
        assert!(rse(&x, &Tensor::zeros(&[2, 2]).unwrap()).is_err());
    }

    #[test]
    fn psnr_values() {
        let x = sample();
        assert_eq!(psnr(&x, &x, None).unwrap(), f64::INFINITY);
        // error energy equal to peak² · numel
        let xhat = x.map(|v| v + 3.0);
        assert_abs_diff_eq!(psnr(&xhat, &x, Some(3.0)).unwrap(), 0.0, epsilon = 1e-12);
        let half = x.map(|v| v + 1.5);
        let gain = psnr(&half, &x, None).unwrap() - psnr(&xhat, &x, None).unwrap();
        assert_abs_diff_eq!(gain, 20.0 * 2f64.log10(), epsilon = 1e-12);
        assert!(psnr(&x, &Tensor::zeros(&[2, 2]).unwrap(), None).is_err());
    }
}
