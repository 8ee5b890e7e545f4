//! Smoothing kernels on the canonical support `[-1, 1]`.

use serde::{Deserialize, Serialize};

/// Truncation point of the Gaussian kernel in standard deviations.
const GAUSS_CUTOFF: f64 = 3.0;

/// Nonnegative, bounded, compactly supported densities of order (0, 2).
///
/// The bivariate kernel is the tensor product of the univariate one.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KernelSpec {
    #[default]
    Epanechnikov,
    GaussianTruncated,
}

impl KernelSpec {
    /// Univariate kernel κ₁(u), zero outside `(-1, 1)`.
    pub fn eval(self, u: f64) -> f64 {
        if !(u.abs() < 1.0) {
            return 0.0;
        }
        match self {
            KernelSpec::Epanechnikov => 0.75 * (1.0 - u * u),
            KernelSpec::GaussianTruncated => {
                let z = GAUSS_CUTOFF * u;
                let mass = libm::erf(GAUSS_CUTOFF / core::f64::consts::SQRT_2);
                GAUSS_CUTOFF * libm::exp(-0.5 * z * z)
                    / (libm::sqrt(2.0 * core::f64::consts::PI) * mass)
            }
        }
    }

    /// Tensor-product kernel κ₂(u, v) = κ₁(u)κ₁(v).
    pub fn eval2(self, u: f64, v: f64) -> f64 {
        self.eval(u) * self.eval(v)
    }

    pub fn name(self) -> &'static str {
        match self {
            KernelSpec::Epanechnikov => "epanechnikov",
            KernelSpec::GaussianTruncated => "gaussian-truncated",
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Composite Simpson moments ∫ u^p κ(u) du over [-1, 1].
    fn moment(k: KernelSpec, p: i32) -> f64 {
        let n = 20_000;
        let h = 2.0 / n as f64;
        let mut acc = 0.0;
        for i in 0..=n {
            let u = -1.0 + h * i as f64;
            let w = if i == 0 || i == n {
                1.0
            } else if i % 2 == 1 {
                4.0
            } else {
                2.0
            };
            // Support is open; take the one-sided limit at the ends.
            let u_in = u.clamp(-1.0 + 1e-15, 1.0 - 1e-15);
            acc += w * libm::pow(u, p as f64) * k.eval(u_in);
        }
        acc * h / 3.0
    }

    #[test]
    fn order_zero_two_moments() {
        for k in [KernelSpec::Epanechnikov, KernelSpec::GaussianTruncated] {
            assert!((moment(k, 0) - 1.0).abs() < 1e-8, "{k:?} mass");
            assert!(moment(k, 1).abs() < 1e-12, "{k:?} first moment");
            assert!(moment(k, 2) > 0.05, "{k:?} second moment");
        }
        assert!((moment(KernelSpec::Epanechnikov, 2) - 0.2).abs() < 1e-8);
    }

    #[test]
    fn compact_support_and_nonnegative() {
        for k in [KernelSpec::Epanechnikov, KernelSpec::GaussianTruncated] {
            assert_eq!(k.eval(1.0), 0.0);
            assert_eq!(k.eval(-1.5), 0.0);
            assert_eq!(k.eval(f64::NAN), 0.0);
            for i in -100..=100 {
                assert!(k.eval(i as f64 / 100.0) >= 0.0);
            }
        }
    }

    #[test]
    fn bivariate_mass_is_one() {
        let n = 400;
        let h = 2.0 / n as f64;
        let mut acc = 0.0;
        for i in 0..n {
            for j in 0..n {
                let u = -1.0 + h * (i as f64 + 0.5);
                let v = -1.0 + h * (j as f64 + 0.5);
                acc += KernelSpec::GaussianTruncated.eval2(u, v);
            }
        }
        assert!((acc * h * h - 1.0).abs() < 1e-4);
    }
}
