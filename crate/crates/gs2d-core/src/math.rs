//! Float math shims: std intrinsics when available, libm otherwise.

pub(crate) use core::f64::consts::PI;

macro_rules! shim {
    ($name:ident, $libm:ident) => {
        #[inline(always)]
        pub(crate) fn $name(x: f64) -> f64 {
            #[cfg(feature = "std")]
            {
                x.$name()
            }
            #[cfg(not(feature = "std"))]
            {
                libm::$libm(x)
            }
        }
    };
}

shim!(exp, exp);
shim!(ln, log);
shim!(log10, log10);
shim!(sqrt, sqrt);
shim!(tanh, tanh);
shim!(floor, floor);
shim!(ceil, ceil);
shim!(abs, fabs);

#[inline(always)]
pub(crate) fn powi(x: f64, n: i32) -> f64 {
    #[cfg(feature = "std")]
    {
        x.powi(n)
    }
    #[cfg(not(feature = "std"))]
    {
        libm::pow(x, n as f64)
    }
}

/// Logistic function, maps all of R into (0, 1).
#[inline(always)]
pub(crate) fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + exp(-x))
}

/// Inverse of [`sigmoid`]; `p` must lie strictly inside (0, 1).
#[inline(always)]
pub(crate) fn logit(p: f64) -> f64 {
    ln(p / (1.0 - p))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sigmoid_midpoint_and_tails() {
        assert_eq!(sigmoid(0.0), 0.5);
        assert!(sigmoid(20.0) > 0.999_999);
        assert!(sigmoid(-20.0) < 1e-6);
    }

    #[test]
    fn logit_inverts_sigmoid() {
        for &p in &[1e-6, 0.1, 0.4, 0.5, 0.9, 1.0 - 1e-6] {
            assert!((sigmoid(logit(p)) - p).abs() < 1e-12);
        }
    }
}
