use statrs::function::{erf, gamma};

use crate::error::{Error, Result};

/// `P(χ²_df > x)`.
pub fn chi2_survival(x: f64, df: u32) -> Result<f64> {
    if df == 0 {
        return Err(Error::Domain("chi-square survival needs df >= 1".into()));
    }
    if !(x >= 0.0) {
        return Err(Error::Domain(format!("chi-square survival needs x >= 0, got {x}")));
    }
    if x == 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    Ok(gamma::gamma_ur(df as f64 / 2.0, x / 2.0).clamp(0.0, 1.0))
}

/// Upper tail of a gamma distribution with the given shape and scale.
pub fn gamma_survival(x: f64, shape: f64, scale: f64) -> Result<f64> {
    if !(shape > 0.0 && scale > 0.0) || !shape.is_finite() || !scale.is_finite() {
        return Err(Error::Domain(format!(
            "gamma survival needs positive finite shape and scale, got ({shape}, {scale})"
        )));
    }
    if x <= 0.0 {
        return Ok(1.0);
    }
    if x.is_infinite() {
        return Ok(0.0);
    }
    Ok(gamma::gamma_ur(shape, x / scale).clamp(0.0, 1.0))
}

/// Two-sided standard-normal p-value `P(|Z| > |z|)`.
pub fn normal_two_sided(z: f64) -> f64 {
    if z.is_nan() {
        return f64::NAN;
    }
    erf::erfc(z.abs() / std::f64::consts::SQRT_2).clamp(0.0, 1.0)
}
