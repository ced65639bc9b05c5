//! Scalar smooth-extremum primitives: the counter-harmonic mean and the
//! α-softmax. The smooth layers apply these per window; they are exposed here
//! both as public API and as reference points for the layers' fused loops.

use crate::error::{Error, Result};
use crate::{scalar, Scalar};

/// Floor applied before taking logarithms; inputs rescaled into `[1, 2]` sit
/// far above it, so it only guards pathological callers.
pub(crate) fn log_floor<T: Scalar>() -> T {
    scalar(1e-12)
}

/// Counter-harmonic mean of order `p`:
/// `sum(w_i * x_i^p) / sum(w_i * x_i^(p-1))`.
///
/// Powers are evaluated in the log domain with a max-shift on the exponents,
/// which keeps the quotient finite for `|p|` in the hundreds. Tends to
/// `max x_i` as `p -> +inf` and to `min x_i` as `p -> -inf`.
pub fn chm<T: Scalar>(values: &[T], weights: &[T], p: T) -> Result<T> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if values.len() != weights.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} values vs {} weights",
            values.len(),
            weights.len()
        )));
    }
    if weights.iter().any(|&w| w < T::zero()) {
        return Err(Error::NegativeWeight);
    }
    if weights.iter().all(|&w| w == T::zero()) {
        return Err(Error::Domain("all-zero weights".into()));
    }
    if values.iter().any(|&x| x <= T::zero()) {
        if p.fract() != T::zero() {
            return Err(Error::Domain(
                "nonpositive value with non-integer order".into(),
            ));
        }
        // Integer order: evaluate directly; powi handles nonpositive bases.
        let pi = p
            .to_i32()
            .ok_or_else(|| Error::Domain("order out of integer range".into()))?;
        let mut num = T::zero();
        let mut den = T::zero();
        for (&x, &w) in values.iter().zip(weights) {
            num += w * x.powi(pi);
            den += w * x.powi(pi - 1);
        }
        if den == T::zero() {
            return Err(Error::Domain("zero denominator".into()));
        }
        return Ok(num / den);
    }

    // log-domain path: weights sigma_i proportional to w_i * x_i^(p-1),
    // shifted by the largest exponent; the mean is then sum(sigma_i * x_i).
    let floor = log_floor::<T>();
    let logs: Vec<T> = values.iter().map(|&x| x.max(floor).ln()).collect();
    let pm1 = p - T::one();
    let mut shift = T::neg_infinity();
    for (i, &lx) in logs.iter().enumerate() {
        if weights[i] > T::zero() {
            shift = shift.max(pm1 * lx + weights[i].ln());
        }
    }
    let mut num = T::zero();
    let mut den = T::zero();
    for (i, &lx) in logs.iter().enumerate() {
        if weights[i] == T::zero() {
            continue;
        }
        let e = (pm1 * lx + weights[i].ln() - shift).exp();
        num += e * values[i];
        den += e;
    }
    Ok(num / den)
}

/// α-softmax: `sum(x_i * exp(alpha * x_i)) / sum(exp(alpha * x_i))`.
///
/// The largest exponent is subtracted before exponentiation, so every
/// exponential is at most one; the value is unchanged and `|alpha|` in the
/// hundreds stays finite for either sign. Interpolates between the minimum
/// (`alpha -> -inf`), the arithmetic mean (`alpha = 0`) and the maximum
/// (`alpha -> +inf`).
pub fn alpha_softmax<T: Scalar>(values: &[T], alpha: T) -> Result<T> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut shift = T::neg_infinity();
    for &x in values {
        shift = shift.max(alpha * x);
    }
    let mut num = T::zero();
    let mut den = T::zero();
    for &x in values {
        let e = (alpha * x - shift).exp();
        num += e * x;
        den += e;
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn chm_small_orders_by_direct_evaluation() {
        // p = 1: (1 + 2) / (1 + 1); p = 2: (1 + 4) / (1 + 2)
        assert!((chm(&[1.0f64, 2.0], &[1.0, 1.0], 1.0).unwrap() - 1.5).abs() < 1e-15);
        assert!((chm(&[1.0f64, 2.0], &[1.0, 1.0], 2.0).unwrap() - 5.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn chm_large_orders_approach_the_extrema() {
        let v = chm(&[1.0f64, 2.0], &[1.0, 1.0], 100.0).unwrap();
        assert!((v - 2.0).abs() < 1e-6, "{v}");
        let v = chm(&[1.0f64, 2.0], &[1.0, 1.0], -100.0).unwrap();
        assert!((v - 1.0).abs() < 1e-6, "{v}");
        // far beyond naive-power overflow
        let v = chm(&[1.0f64, 1.5, 2.0], &[0.3, 0.5, 0.2], 800.0).unwrap();
        assert!(v.is_finite() && (v - 2.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn chm_of_a_constant_vector_is_the_constant() {
        for p in [-40.0, -1.0, 0.0, 0.5, 3.0, 75.0] {
            let v = chm(&[0.7f64; 5], &[1.0, 2.0, 0.5, 0.1, 3.0], p).unwrap();
            assert!((v - 0.7).abs() < 1e-12, "p={p}: {v}");
        }
    }

    #[test]
    fn chm_domain_errors() {
        assert!(matches!(
            chm(&[1.0f64, -1.0], &[1.0, 1.0], 0.5),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            chm(&[1.0f64, 2.0], &[0.0, 0.0], 1.0),
            Err(Error::Domain(_))
        ));
        assert!(matches!(chm::<f64>(&[], &[], 1.0), Err(Error::EmptyInput)));
        assert!(matches!(
            chm(&[1.0f64], &[1.0, 1.0], 1.0),
            Err(Error::DimensionMismatch(_))
        ));
        // nonpositive values with an integer order evaluate directly
        let v = chm(&[2.0f64, -1.0], &[1.0, 1.0], 2.0).unwrap();
        assert!((v - 5.0).abs() < 1e-15); // (4 + 1) / (2 - 1)
    }

    #[test]
    fn alpha_softmax_zero_is_the_mean() {
        assert_eq!(alpha_softmax(&[1.0f64, 2.0, 3.0], 0.0).unwrap(), 2.0);
    }

    #[test]
    fn alpha_softmax_large_alpha_approaches_max_and_min() {
        let v = alpha_softmax(&[1.0f64, 2.0], 100.0).unwrap();
        assert!((v - 2.0).abs() < 1e-6, "{v}");
        let v = alpha_softmax(&[-5.0f64, 3.0], -100.0).unwrap();
        assert!((v + 5.0).abs() < 1e-6, "{v}");
        // the -100 * -5 = 500 exponent overflows without the shift
        assert!(v.is_finite());
    }

    #[test]
    fn alpha_softmax_matches_unshifted_form_when_safe() {
        let xs = [0.3f64, -0.2, 0.9, 0.05, -0.6];
        for alpha in [-30.0, -2.0, 0.0, 1.5, 25.0] {
            let shifted = alpha_softmax(&xs, alpha).unwrap();
            let num: f64 = xs.iter().map(|&x| x * (alpha * x).exp()).sum();
            let den: f64 = xs.iter().map(|&x| (alpha * x).exp()).sum();
            assert!((shifted - num / den).abs() <= 1e-12);
        }
    }

    #[test]
    fn alpha_softmax_is_nondecreasing_in_alpha() {
        let xs = [0.1f64, 0.7, 0.3, -0.4, 0.65];
        let mut prev = f64::NEG_INFINITY;
        for i in -60..=60 {
            let v = alpha_softmax(&xs, i as f64 * 0.5).unwrap();
            assert!(v >= prev - 1e-12, "alpha={} dropped {prev} -> {v}", i as f64 * 0.5);
            prev = v;
        }
    }
}
