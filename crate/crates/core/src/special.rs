//! Cosine integral and small numeric helpers.

use num_complex::Complex64;

use crate::error::{Error, Result};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Switch point between the power series and the continued-fraction branch.
pub const CI_SWITCH: f64 = 4.0;

/// `Ci(x) = gamma + ln x + int_0^x (cos t - 1)/t dt` for `x > 0`.
pub fn cosine_integral(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::InvalidParameter(format!("Ci needs x > 0, got {x}")));
    }
    Ok(if x <= CI_SWITCH { ci_series(x) } else { ci_continued_fraction(x) })
}

/// `ln x - Ci(x) + gamma = -int_0^x (cos t - 1)/t dt`, well-defined at 0.
///
/// Evaluated by its own series below the switch point so small arguments keep
/// full relative precision.
pub fn log_minus_ci_plus_gamma(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x <= CI_SWITCH {
        -cin_tail(x)
    } else {
        x.ln() - ci_continued_fraction(x) + EULER_GAMMA
    }
}

/// `sum_{n>=1} (-1)^n x^{2n} / (2n (2n)!)`.
fn cin_tail(x: f64) -> f64 {
    let x2 = x * x;
    let mut term = 1.0;
    let mut acc = NeumaierSum::default();
    for n in 1..=40 {
        let m = (2 * n) as f64;
        term *= -x2 / ((m - 1.0) * m);
        let contrib = term / m;
        acc.add(contrib);
        if n >= 30 && contrib.abs() < 1e-18 * acc.value().abs().max(1e-300) {
            break;
        }
    }
    acc.value()
}

pub(crate) fn ci_series(x: f64) -> f64 {
    EULER_GAMMA + x.ln() + cin_tail(x)
}

/// `Ci(x) = -Re E1(ix)`, with `E1` from its continued fraction (modified Lentz).
pub(crate) fn ci_continued_fraction(x: f64) -> f64 {
    let tiny = 1e-300;
    let z = Complex64::new(0.0, x);
    let mut b = z + 1.0;
    let mut c = Complex64::new(1.0 / tiny, 0.0);
    let mut d = b.inv();
    let mut h = d;
    for i in 1..=500 {
        let a = -((i * i) as f64);
        b += 2.0;
        d = (d * a + b).inv();
        c = b + a / c;
        let del = c * d;
        h *= del;
        if (del - 1.0).norm() < 1e-16 {
            break;
        }
    }
    let e1 = h * (-z).exp();
    -e1.re
}

/// Neumaier compensated summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
}

impl NeumaierSum {
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn compensated_sum(values: impl IntoIterator<Item = f64>) -> f64 {
    let mut s = NeumaierSum::default();
    for v in values {
        s.add(v);
    }
    s.value()
}

/// Stable kernels of the coherent-state formulas, all finite at `x = 0`.
pub mod kernels {
    use num_complex::Complex64;

    /// `(e^{-ix} - 1)/x`, limit `-i` at 0.
    pub fn expm1_over(x: f64) -> Complex64 {
        if x.abs() < 1e-4 {
            let x2 = x * x;
            Complex64::new(-x / 2.0 + x * x2 / 24.0, -1.0 + x2 / 6.0 - x2 * x2 / 120.0)
        } else {
            (Complex64::new(0.0, -x).exp() - 1.0) / x
        }
    }

    /// `(e^{-ix} + ix - 1)/x^2`, limit `-1/2` at 0.
    pub fn expm1_lin_over_sq(x: f64) -> Complex64 {
        if x.abs() < 1e-3 {
            let x2 = x * x;
            Complex64::new(-0.5 + x2 / 24.0 - x2 * x2 / 720.0, x / 6.0 - x * x2 / 120.0 + x * x2 * x2 / 5040.0)
        } else {
            (Complex64::new(0.0, -x).exp() + Complex64::new(0.0, x) - 1.0) / (x * x)
        }
    }

    /// `(x - sin x)/x^2`, limit 0 at 0.
    pub fn x_minus_sin_over_sq(x: f64) -> f64 {
        if x.abs() < 1e-3 {
            let x2 = x * x;
            x / 6.0 - x * x2 / 120.0 + x * x2 * x2 / 5040.0
        } else {
            (x - x.sin()) / (x * x)
        }
    }

    /// `sin(x/2)/(x/2)`.
    pub fn sinc_half(x: f64) -> f64 {
        let h = 0.5 * x;
        if h.abs() < 1e-4 {
            1.0 - h * h / 6.0
        } else {
            h.sin() / h
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn branches_agree_at_switch() {
        let a = ci_series(CI_SWITCH);
        let b = ci_continued_fraction(CI_SWITCH);
        assert!((a - b).abs() < 1e-11, "{a} vs {b}");
    }

    #[test]
    fn rejects_nonpositive() {
        assert!(cosine_integral(0.0).is_err());
        assert!(cosine_integral(-1.0).is_err());
    }

    #[test]
    fn kernels_are_continuous() {
        use kernels::*;
        for &x in &[1e-4, 1e-3] {
            let lo = x * (1.0 - 1e-9);
            let hi = x * (1.0 + 1e-9);
            assert!((expm1_over(lo) - expm1_over(hi)).norm() < 1e-9);
            assert!((expm1_lin_over_sq(lo) - expm1_lin_over_sq(hi)).norm() < 1e-9);
            assert!((x_minus_sin_over_sq(lo) - x_minus_sin_over_sq(hi)).abs() < 1e-9);
        }
    }

    #[test]
    fn neumaier_recovers_cancellation() {
        let v = [1e16, 1.0, -1e16];
        assert_eq!(compensated_sum(v), 1.0);
    }
}
