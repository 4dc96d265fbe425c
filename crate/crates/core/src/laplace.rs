//! Discrete Laplace transforms of sampled data: rectangle-rule sums
//! `h_T Σ d_k w(t_k)` with `t_k = k h_T`.

use crate::error::{Error, Result};
use crate::forward::TimeSeries;

/// Below this the kernel `e^{-s t}` no longer contributes in double precision.
const LOG_TINY: f64 = -745.0;

/// Runs `f(k, t, e^{-s t})` over samples until the kernel underflows.
///
/// The exponential is advanced multiplicatively and re-anchored every few
/// thousand steps to keep the recurrence error at rounding level.
fn for_each_kernel(d: &TimeSeries, s: f64, mut f: impl FnMut(usize, f64, f64)) {
    let h = d.step();
    let q = (-s * h).exp();
    let mut e = q;
    const ANCHOR: usize = 4096;
    for k in 0..d.len() {
        let t = d.time(k);
        if k % ANCHOR == 0 {
            if -s * t < LOG_TINY {
                break;
            }
            e = (-s * t).exp();
        }
        f(k, t, e);
        e *= q;
    }
}

fn check(d: &TimeSeries, s: f64) -> Result<()> {
    if d.is_empty() {
        return Err(Error::EmptySeries);
    }
    if !(s >= 0.0) {
        return Err(Error::InvalidArgument(format!("Laplace variable must be nonnegative, got {s}")));
    }
    Ok(())
}

/// `h_T Σ d_k e^{-s t_k}`.
pub fn laplace_transform(d: &TimeSeries, s: f64) -> Result<f64> {
    check(d, s)?;
    let data = d.samples();
    let mut acc = 0.0;
    for_each_kernel(d, s, |k, _, e| acc += data[k] * e);
    Ok(d.step() * acc)
}

/// `-h_T Σ d_k t_k e^{-s t_k}`.
pub fn laplace_derivative(d: &TimeSeries, s: f64) -> Result<f64> {
    check(d, s)?;
    let data = d.samples();
    let mut acc = 0.0;
    for_each_kernel(d, s, |k, t, e| acc += data[k] * t * e);
    Ok(-d.step() * acc)
}

/// Shifted moments `τ_k = ((-1)^k / k!) h_T Σ d_j t_j^k e^{-s̃ t_j}`,
/// `k = 0..K-1`, the Taylor coefficients of the transform at `s̃`.
///
/// Weights are formed as `exp(k log t - s̃ t - log k!)` so that large powers
/// of `t` never overflow on their own.
pub fn laplace_moments(d: &TimeSeries, shift: f64, count: usize) -> Result<Vec<f64>> {
    check(d, shift)?;
    if count == 0 {
        return Ok(Vec::new());
    }
    let mut log_fact = vec![0.0; count];
    for k in 1..count {
        log_fact[k] = log_fact[k - 1] + (k as f64).ln();
    }
    let mut acc = vec![0.0; count];
    let kmax = (count - 1) as f64;
    for (j, &v) in d.samples().iter().enumerate() {
        let t = d.time(j);
        let lt = t.ln();
        let base = -shift * t;
        // past the peak of t^k e^{-s̃t} every weight only shrinks
        if base + kmax * lt.max(0.0) < LOG_TINY && shift * t > kmax {
            break;
        }
        for k in 0..count {
            let lw = base + k as f64 * lt - log_fact[k];
            if lw > LOG_TINY {
                acc[k] += v * lw.exp();
            }
        }
    }
    Ok(acc
        .iter()
        .enumerate()
        .map(|(k, a)| if k % 2 == 0 { 1.0 } else { -1.0 } * d.step() * a)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn exponential(h: f64, t_end: f64) -> TimeSeries {
        let n = (t_end / h).round() as usize;
        TimeSeries::new(h, (1..=n).map(|k| (-(k as f64) * h).exp()).collect()).unwrap()
    }

    #[test]
    fn exponential_transform_and_derivative() {
        let d = exponential(1e-4, 40.0);
        let v = laplace_transform(&d, 1.0).unwrap();
        let dv = laplace_derivative(&d, 1.0).unwrap();
        assert!((v - 0.5).abs() < 1e-4, "{v}");
        assert!((dv + 0.25).abs() < 1e-4, "{dv}");
    }

    #[test]
    fn exponential_moments_at_zero() {
        let d = exponential(1e-4, 60.0);
        let tau = laplace_moments(&d, 0.0, 3).unwrap();
        for (t, e) in tau.iter().zip([1.0, -1.0, 1.0]) {
            assert!((t - e).abs() < 1e-3, "{tau:?}");
        }
    }

    #[test]
    fn zeroth_moment_is_transform() {
        let d = exponential(1e-3, 30.0);
        let tau = laplace_moments(&d, 2.5, 4).unwrap();
        let v = laplace_transform(&d, 2.5).unwrap();
        let dv = laplace_derivative(&d, 2.5).unwrap();
        assert!(((tau[0] - v) / v).abs() < 1e-12);
        assert!(((tau[1] - dv) / dv).abs() < 1e-12);
    }

    #[test]
    fn empty_series_rejected() {
        let d = TimeSeries::new(1.0, vec![]).unwrap();
        assert_eq!(laplace_transform(&d, 1.0), Err(Error::EmptySeries));
    }

    #[test]
    fn large_order_moments_stay_finite() {
        let d = exponential(1e-3, 100.0);
        let tau = laplace_moments(&d, 0.5, 20).unwrap();
        // analytic: ∫ t^k e^{-1.5 t} / k! = 1.5^{-(k+1)}
        for (k, t) in tau.iter().enumerate() {
            let exact = if k % 2 == 0 { 1.0 } else { -1.0 } * 1.5f64.powi(-(k as i32 + 1));
            assert!(((t - exact) / exact).abs() < 2e-3, "k = {k}: {t} vs {exact}");
        }
    }

    #[test]
    fn truncation_error_bounded() {
        // rectangle rule on e^{-t} truncated at T: error ≲ h + e^{-(s+1)T}/(s+1)
        for s in [0.5, 2.0, 10.0] {
            let d = exponential(1e-4, 8.0);
            let v = laplace_transform(&d, s).unwrap();
            let exact = 1.0 / (s + 1.0);
            let bound = 1e-4 + (-(s + 1.0) * 8.0).exp() / s;
            assert!((v - exact).abs() <= bound, "s = {s}");
        }
    }

    proptest! {
        #[test]
        fn positive_data_gives_stieltjes_signs(
            vals in proptest::collection::vec(0.01f64..10.0, 5..200),
            s in 0.1f64..20.0,
        ) {
            let d = TimeSeries::new(0.01, vals).unwrap();
            prop_assert!(laplace_transform(&d, s).unwrap() > 0.0);
            prop_assert!(laplace_derivative(&d, s).unwrap() < 0.0);
            let tau = laplace_moments(&d, s, 6).unwrap();
            let mut fact = 1.0;
            for (k, t) in tau.iter().enumerate() {
                if k > 0 { fact *= k as f64; }
                let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
                prop_assert!(sign * t * fact >= 0.0);
            }
        }
    }
}
