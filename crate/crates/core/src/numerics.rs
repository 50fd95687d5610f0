//! Scalar building blocks: the zero-centered modulo reduction onto the torus
//! `[-1/2, 1/2)`, the standard normal density and distribution function, and
//! the truncated Gaussian moment integrals that the closed-form distortion is
//! assembled from.

use std::f64::consts::FRAC_1_SQRT_2;
use std::fmt;
use std::ops::{Add, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// `1 / sqrt(2 pi)`.
pub const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Reduces `x` onto `[-1/2, 1/2)` as `x - floor(x + 1/2)`.
///
/// This is the unchecked form used in hot loops; NaN propagates. The final
/// correction handles `x = 1/2 - 2^-54`-style inputs where `x + 1/2` rounds
/// up to an integer and the plain formula would return `-1/2 - ulp`.
#[inline]
pub fn wrap(x: f64) -> f64 {
    let r = x - (x + 0.5).floor();
    if r >= 0.5 {
        r - 1.0
    } else if r < -0.5 {
        r + 1.0
    } else {
        r
    }
}

/// A point on the torus, stored as its representative in `[-1/2, 1/2)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Default, Serialize, Deserialize)]
#[serde(try_from = "f64", into = "f64")]
pub struct TorusScalar(f64);

impl TorusScalar {
    pub const ZERO: TorusScalar = TorusScalar(0.0);

    /// Reduces any finite real onto the torus.
    pub fn new(x: f64) -> Result<Self> {
        mod1(x)
    }

    #[inline]
    pub fn value(self) -> f64 {
        self.0
    }

    /// Builds from a value already known to lie in `[-1/2, 1/2)`.
    #[inline]
    pub(crate) fn from_reduced(x: f64) -> Self {
        debug_assert!((-0.5..0.5).contains(&x), "{x} not reduced");
        TorusScalar(x)
    }
}

impl TryFrom<f64> for TorusScalar {
    type Error = Error;

    fn try_from(x: f64) -> Result<Self> {
        mod1(x)
    }
}

impl From<TorusScalar> for f64 {
    fn from(t: TorusScalar) -> f64 {
        t.0
    }
}

impl fmt::Display for TorusScalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.0.fmt(f)
    }
}

impl Add for TorusScalar {
    type Output = TorusScalar;

    fn add(self, rhs: TorusScalar) -> TorusScalar {
        TorusScalar(wrap(self.0 + rhs.0))
    }
}

impl Sub for TorusScalar {
    type Output = TorusScalar;

    fn sub(self, rhs: TorusScalar) -> TorusScalar {
        TorusScalar(wrap(self.0 - rhs.0))
    }
}

impl Neg for TorusScalar {
    type Output = TorusScalar;

    fn neg(self) -> TorusScalar {
        TorusScalar(wrap(-self.0))
    }
}

/// Zero-centered modulo: `x mod 1 = x - floor(x + 1/2)`, in `[-1/2, 1/2)`.
pub fn mod1(x: f64) -> Result<TorusScalar> {
    if !x.is_finite() {
        return Err(Error::Domain(format!("mod1 of non-finite value {x}")));
    }
    Ok(TorusScalar(wrap(x)))
}

/// Standard deviation of a centered Gaussian.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussParams {
    sigma: f64,
}

impl GaussParams {
    pub fn new(sigma: f64) -> Result<Self> {
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Argument(format!(
                "standard deviation must be positive and finite, got {sigma}"
            )));
        }
        Ok(GaussParams { sigma })
    }

    #[inline]
    pub fn sigma(self) -> f64 {
        self.sigma
    }
}

/// Standard normal density `exp(-x^2/2) / sqrt(2 pi)`. Returns 0 at `±inf`.
#[inline]
pub fn std_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal distribution function, `Phi(x) = erfc(-x/sqrt 2)/2`.
#[inline]
pub fn std_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `Q(x) = 1 - Phi(x)`, accurate deep into the tail.
#[inline]
pub fn std_sf(x: f64) -> f64 {
    0.5 * libm::erfc(x * FRAC_1_SQRT_2)
}

/// `Phi(hi) - Phi(lo)` for `lo <= hi`, evaluated on whichever tail avoids
/// cancellation.
pub fn std_mass(lo: f64, hi: f64) -> f64 {
    let m = if lo >= 0.0 {
        std_sf(lo) - std_sf(hi)
    } else if hi <= 0.0 {
        std_cdf(hi) - std_cdf(lo)
    } else {
        1.0 - std_cdf(lo) - std_sf(hi)
    };
    m.max(0.0)
}

/// Density of `N(0, sigma^2)`.
#[inline]
pub fn gauss_pdf(x: f64, sigma: f64) -> f64 {
    std_pdf(x / sigma) / sigma
}

/// The three truncated moments `int_a^b x^k phi_sigma(x) dx`, `k = 0, 1, 2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussMoments {
    pub m0: f64,
    pub m1: f64,
    pub m2: f64,
}

// x * psi(x / sigma), taken as 0 at infinite x.
#[inline]
fn x_psi(x: f64, sigma: f64) -> f64 {
    if x.is_infinite() {
        0.0
    } else {
        x * std_pdf(x / sigma)
    }
}

/// Closed-form truncated moments of `N(0, sigma^2)` over `[a, b]`.
///
/// ```text
/// m0 = Phi(b/s) - Phi(a/s)
/// m1 = s (psi(a/s) - psi(b/s))
/// m2 = s (a psi(a/s) - b psi(b/s)) + s^2 m0
/// ```
///
/// Either endpoint may be infinite.
pub fn gauss_moment_integrals(a: f64, b: f64, g: GaussParams) -> Result<GaussMoments> {
    if a.is_nan() || b.is_nan() {
        return Err(Error::Domain("NaN integration bound".into()));
    }
    if a > b {
        return Err(Error::Argument(format!(
            "integration bounds out of order: a = {a} > b = {b}"
        )));
    }
    let s = g.sigma();
    let (za, zb) = (a / s, b / s);
    let m0 = std_mass(za, zb);
    let m1 = s * (std_pdf(za) - std_pdf(zb));
    // Rounding can push a vanishing m2 a hair below zero.
    let m2 = (s * (x_psi(a, s) - x_psi(b, s)) + s * s * m0).max(0.0);
    Ok(GaussMoments { m0, m1, m2 })
}

/// Neumaier-compensated running sum.
#[derive(Debug, Clone, Copy, Default)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

impl FromIterator<f64> for CompensatedSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = CompensatedSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}
