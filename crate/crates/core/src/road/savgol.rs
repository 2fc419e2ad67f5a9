//! Savitzky–Golay smoothing with polynomial-fit edge handling.

use nalgebra::{DMatrix, DVector};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error)]
pub enum SavgolError {
    #[error("window {0} must be odd and at least 1")]
    BadWindow(usize),
    #[error("polynomial order {order} must be below window {window}")]
    OrderTooHigh { window: usize, order: usize },
    #[error("series of length {len} is shorter than window {window}")]
    TooShort { len: usize, window: usize },
}

/// Weights that evaluate the least-squares polynomial fitted over sample
/// offsets `-h..=h` at offset `at`.
pub fn savgol_weights(window: usize, order: usize, at: f64) -> Result<Vec<f64>, SavgolError> {
    if window % 2 == 0 {
        return Err(SavgolError::BadWindow(window));
    }
    if order >= window {
        return Err(SavgolError::OrderTooHigh { window, order });
    }
    let h = (window / 2) as f64;
    let vander = DMatrix::from_fn(window, order + 1, |r, c| (r as f64 - h).powi(c as i32));
    let basis = DVector::from_fn(order + 1, |c, _| at.powi(c as i32));
    // w = V (VᵀV)⁻¹ e(at)
    let gram = vander.transpose() * &vander;
    let coef = gram
        .cholesky()
        .expect("Vandermonde Gram matrix is positive definite for distinct nodes")
        .solve(&basis);
    Ok((vander * coef).iter().copied().collect())
}

/// Filters `data`; the first and last `window/2` samples take the value of
/// the polynomial fitted to the first or last full window.
pub fn savgol_filter(data: &[f64], window: usize, order: usize) -> Result<Vec<f64>, SavgolError> {
    let centre = savgol_weights(window, order, 0.0)?;
    if data.len() < window {
        return Err(SavgolError::TooShort { len: data.len(), window });
    }
    let h = window / 2;
    let n = data.len();
    let dot = |w: &[f64], start: usize| w.iter().zip(&data[start..start + window]).map(|(a, b)| a * b).sum::<f64>();
    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate().take(n - h).skip(h) {
        *o = dot(&centre, i - h);
    }
    for i in 0..h {
        let w = savgol_weights(window, order, i as f64 - h as f64)?;
        out[i] = dot(&w, 0);
        let w = savgol_weights(window, order, (h - i) as f64)?;
        out[n - 1 - i] = dot(&w, n - window);
    }
    Ok(out)
}
