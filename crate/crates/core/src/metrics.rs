//! Recovery errors.

use crate::error::{Error, Result};
use crate::linalg::{ensure_shape, Matrix, SamplingPattern};

/// `‖M − M̂‖²_F / ‖M‖²_F`.
pub fn nmse(m: &Matrix, m_hat: &Matrix) -> Result<f64> {
    ensure_shape(m_hat, m.nrows(), m.ncols())?;
    let den = m.norm_squared();
    if den == 0.0 {
        return Err(Error::ZeroDenominator("NMSE"));
    }
    Ok((m - m_hat).norm_squared() / den)
}

/// `‖P_Ω(M − M̂)‖²_F / ‖P_Ω(M)‖²_F`.
pub fn rnmse(m: &Matrix, m_hat: &Matrix, pattern: &SamplingPattern) -> Result<f64> {
    ensure_shape(m_hat, m.nrows(), m.ncols())?;
    let den = pattern.apply(m)?.norm_squared();
    if den == 0.0 {
        return Err(Error::ZeroDenominator("RNMSE"));
    }
    Ok(pattern.apply(&(m - m_hat))?.norm_squared() / den)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_and_zero_estimates() {
        let m = Matrix::from_fn(3, 4, |i, j| (i * 4 + j) as f64 - 5.0);
        let omega = SamplingPattern::from_indices(3, 4, [(0, 0), (2, 3)]).unwrap();
        assert_eq!(nmse(&m, &m).unwrap(), 0.0);
        assert_eq!(rnmse(&m, &m, &omega).unwrap(), 0.0);
        assert_eq!(nmse(&m, &Matrix::zeros(3, 4)).unwrap(), 1.0);
    }

    #[test]
    fn zero_denominators() {
        let z = Matrix::zeros(2, 2);
        assert_eq!(nmse(&z, &z), Err(Error::ZeroDenominator("NMSE")));
        let m = Matrix::identity(2, 2);
        let omega = SamplingPattern::from_indices(2, 2, [(0, 1)]).unwrap();
        assert!(rnmse(&m, &z, &omega).is_err());
        assert!(nmse(&m, &Matrix::zeros(3, 2)).is_err());
    }
}
