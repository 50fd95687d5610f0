//! Closed-form distortion of the modulo estimator and Gaussian leakage of
//! the additive-mask baselines.
//!
//! With effective noise `n ~ N(0, sigma^2 I)` the server outputs
//! `[s + n] mod 1`. Per dimension the expected squared error is
//!
//! ```text
//! delta(s) = sum_l { (sigma^2 + l^2)(Phi(b_l/sigma) - Phi(a_l/sigma))
//!                    + (a_l - 2l) sigma psi(a_l/sigma)
//!                    - (b_l - 2l) sigma psi(b_l/sigma) }
//! a_l = l - s - 1/2,  b_l = l - s + 1/2
//! ```
//!
//! and the vector distortion is the sum over dimensions. It is even in `s`,
//! increasing in `|s|`, so on `[-a, a]^D` it lies between `D delta(0)` and
//! `D delta(a)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{gauss_pdf, std_mass, std_pdf, std_sf, CompensatedSum};
use crate::protocol::{db_to_linear, NoiseScheme};

/// Tail-bound target used when choosing the truncation automatically.
pub const TAIL_TARGET: f64 = 1e-12;

/// Standard deviation of the post-scaling channel noise, `sqrt(N_0 / P)`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct EffectiveNoise(f64);

impl EffectiveNoise {
    pub fn new(sigma_eff: f64) -> Result<Self> {
        check_sigma(sigma_eff)?;
        Ok(EffectiveNoise(sigma_eff))
    }

    pub fn from_powers(noise_var: f64, power_scale: f64) -> Result<Self> {
        Self::new((noise_var / power_scale).sqrt())
    }

    /// From `P / N_0` in dB.
    pub fn from_snr_db(p_over_n0_db: f64) -> Result<Self> {
        Self::new(db_to_linear(-p_over_n0_db).sqrt())
    }

    pub fn sigma(self) -> f64 {
        self.0
    }
}

fn check_sigma(sigma: f64) -> Result<()> {
    if sigma > 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "effective noise must be positive and finite, got {sigma}"
        )))
    }
}

/// How many lattice shifts `|l| <= L` enter the series.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Truncation {
    /// Start from `ceil(1/2 + max|s| + 8 sigma)` and grow until the reported
    /// tail bound is at most [`TAIL_TARGET`].
    Auto,
    Fixed(u32),
}

/// A truncated series value with its tail bound.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SeriesValue {
    pub value: f64,
    pub truncation_l: u32,
    pub tail_bound: f64,
}

// Bound on everything beyond |l| > L, summed over `dim` dimensions.
fn tail_bound(dim: usize, max_abs_s: f64, sigma: f64, l: u32) -> f64 {
    let l = f64::from(l);
    let z = (l - max_abs_s - 0.5) / sigma;
    dim as f64 * (sigma * sigma + (l + 1.0) * (l + 1.0)) * 2.0 * std_sf(z)
}

fn choose_truncation(t: Truncation, dim: usize, max_abs_s: f64, sigma: f64) -> Result<(u32, f64)> {
    match t {
        Truncation::Fixed(0) => Err(Error::Argument("truncation L must be at least 1".into())),
        Truncation::Fixed(l) => Ok((l, tail_bound(dim, max_abs_s, sigma, l))),
        Truncation::Auto => {
            let mut l = (0.5 + max_abs_s + 8.0 * sigma).ceil().max(1.0) as u32;
            let mut bound = tail_bound(dim, max_abs_s, sigma, l);
            while bound > TAIL_TARGET {
                l += 1;
                bound = tail_bound(dim, max_abs_s, sigma, l);
            }
            Ok((l, bound))
        }
    }
}

fn delta_1d(s: f64, sigma: f64, big_l: u32) -> f64 {
    delta_1d_signed(s, sigma, big_l, 1.0)
}

// `flip = -1.0` negates the `(a - 2l)` coefficient; used only to check that
// the verification suites catch a wrong closed form.
fn delta_1d_signed(s: f64, sigma: f64, big_l: u32, flip: f64) -> f64 {
    let big_l = i64::from(big_l);
    let mut acc = CompensatedSum::new();
    for l in -big_l..=big_l {
        let l = l as f64;
        let a = l - s - 0.5;
        let b = l - s + 0.5;
        let (za, zb) = (a / sigma, b / sigma);
        acc.add((sigma * sigma + l * l) * std_mass(za, zb));
        acc.add(flip * (a - 2.0 * l) * sigma * std_pdf(za));
        acc.add(-(b - 2.0 * l) * sigma * std_pdf(zb));
    }
    acc.value()
}

fn check_point(s: &[f64]) -> Result<f64> {
    if s.is_empty() {
        return Err(Error::Argument(
            "signal point must have at least one entry".into(),
        ));
    }
    if let Some(x) = s.iter().find(|x| !x.is_finite()) {
        return Err(Error::Domain(format!("non-finite signal entry {x}")));
    }
    Ok(s.iter().fold(0.0, |m, x| m.max(x.abs())))
}

/// Expected squared error `E |[s + n] mod 1 - s|^2` for `n ~ N(0, sigma^2 I)`.
pub fn delta_pointwise(s: &[f64], sigma_eff: f64, truncation: Truncation) -> Result<SeriesValue> {
    check_sigma(sigma_eff)?;
    let max_abs = check_point(s)?;
    let (l, tail_bound) = choose_truncation(truncation, s.len(), max_abs, sigma_eff)?;
    let value = s
        .iter()
        .map(|&sd| delta_1d(sd, sigma_eff, l))
        .collect::<CompensatedSum>()
        .value();
    Ok(SeriesValue {
        value,
        truncation_l: l,
        tail_bound,
    })
}

/// [`delta_pointwise`] with the sign of the `(a - 2l)` term flipped.
pub(crate) fn delta_pointwise_mutated(s: &[f64], sigma_eff: f64) -> Result<f64> {
    check_sigma(sigma_eff)?;
    let max_abs = check_point(s)?;
    let (l, _) = choose_truncation(Truncation::Auto, s.len(), max_abs, sigma_eff)?;
    Ok(s.iter()
        .map(|&sd| delta_1d_signed(sd, sigma_eff, l, -1.0))
        .sum())
}

/// Per-dimension `delta(s_d) - sigma^2`, evaluated without the `sigma^2`
/// bulk so that it keeps full relative precision when wrapping is rare:
/// `sum_{l != 0} (l^2 m0_l - 2 l m1_l)`.
pub fn wrap_excess(s_d: f64, sigma_eff: f64, truncation: Truncation) -> Result<SeriesValue> {
    check_sigma(sigma_eff)?;
    let max_abs = check_point(&[s_d])?;
    let (big_l, tail_bound) = choose_truncation(truncation, 1, max_abs, sigma_eff)?;
    let sigma = sigma_eff;
    let mut acc = CompensatedSum::new();
    for l in (1..=i64::from(big_l)).flat_map(|l| [-l, l]) {
        let l = l as f64;
        let (za, zb) = ((l - s_d - 0.5) / sigma, (l - s_d + 0.5) / sigma);
        let m0 = std_mass(za, zb);
        let m1 = sigma * (std_pdf(za) - std_pdf(zb));
        acc.add(l * l * m0 - 2.0 * l * m1);
    }
    Ok(SeriesValue {
        value: acc.value(),
        truncation_l: big_l,
        tail_bound,
    })
}

/// `D delta(0)` and `D delta(a)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaBounds {
    pub lower: f64,
    pub upper: f64,
}

pub fn delta_bounds(half_width: f64, sigma_eff: f64, dim: usize) -> Result<DeltaBounds> {
    if !(half_width > 0.0 && half_width < 0.5) {
        return Err(Error::Argument(format!(
            "half width must lie in (0, 1/2), got {half_width}"
        )));
    }
    if dim == 0 {
        return Err(Error::Argument("dimension must be at least 1".into()));
    }
    // Same code path as a signal point `s = 0` or `s = a 1` of this
    // dimension, so those points reproduce the bounds bit for bit.
    let lower = delta_pointwise(&vec![0.0; dim], sigma_eff, Truncation::Auto)?.value;
    let upper = delta_pointwise(&vec![half_width; dim], sigma_eff, Truncation::Auto)?.value;
    Ok(DeltaBounds { lower, upper })
}

/// `d delta / d s_d = 2 s_d sum_l phi_sigma(l - s_d + 1/2)` and its sign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DeltaSlope {
    pub value: f64,
    /// -1, 0 or +1.
    pub sign: i8,
}

pub fn delta_derivative(s_d: f64, sigma_eff: f64) -> Result<DeltaSlope> {
    check_sigma(sigma_eff)?;
    let max_abs = check_point(&[s_d])?;
    let (big_l, _) = choose_truncation(Truncation::Auto, 1, max_abs, sigma_eff)?;
    let big_l = i64::from(big_l);
    let lattice: f64 = (-big_l..=big_l)
        .map(|l| gauss_pdf(l as f64 - s_d + 0.5, sigma_eff))
        .collect::<CompensatedSum>()
        .value();
    let value = 2.0 * s_d * lattice;
    let sign = if s_d > 0.0 {
        1
    } else if s_d < 0.0 {
        -1
    } else {
        0
    };
    Ok(DeltaSlope { value, sign })
}

/// Shorthand for [`delta_derivative`]'s sign.
pub fn delta_derivative_sign(s_d: f64, sigma_eff: f64) -> Result<i8> {
    Ok(delta_derivative(s_d, sigma_eff)?.sign)
}

/// A Monte-Carlo estimate with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub stderr: f64,
    pub trials: u64,
}

/// Closed form, bounds and (optionally) simulation for one signal point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistortionReport {
    pub s: Vec<f64>,
    pub sigma_eff: f64,
    pub delta_closed: f64,
    pub delta_mc: Option<McEstimate>,
    pub lower: f64,
    pub upper: f64,
    pub truncation_l: u32,
    pub tail_bound: f64,
}

impl DistortionReport {
    pub fn new(s: &[f64], half_width: f64, sigma_eff: f64, mc: Option<McEstimate>) -> Result<Self> {
        let closed = delta_pointwise(s, sigma_eff, Truncation::Auto)?;
        let bounds = delta_bounds(half_width, sigma_eff, s.len())?;
        Ok(DistortionReport {
            s: s.to_vec(),
            sigma_eff,
            delta_closed: closed.value,
            delta_mc: mc,
            lower: bounds.lower,
            upper: bounds.upper,
            truncation_l: closed.truncation_l,
            tail_bound: closed.tail_bound,
        })
    }

    /// `lower <= delta <= upper + tail_bound`, with rounding slack.
    pub fn within_bounds(&self, slack: f64) -> bool {
        self.lower - slack <= self.delta_closed
            && self.delta_closed <= self.upper + self.tail_bound + slack
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum LeakageMethod {
    ClosedFormGaussian,
    ExactZero,
    Oracle,
}

/// Per-dimension conditional mutual information `I({W_k}; {x_k} | W)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeakageReport {
    pub scheme: NoiseScheme,
    pub leakage_nats_per_dim: f64,
    pub method: LeakageMethod,
}

impl LeakageReport {
    pub fn bits_per_dim(&self) -> f64 {
        self.leakage_nats_per_dim / std::f64::consts::LN_2
    }
}

/// Modulo masking leaks nothing beyond the sum.
pub fn leakage_p2() -> LeakageReport {
    LeakageReport {
        scheme: NoiseScheme::P2Modulo,
        leakage_nats_per_dim: 0.0,
        method: LeakageMethod::ExactZero,
    }
}

/// Gaussian conditional MI of an additive-mask baseline, per dimension.
///
/// Given the sum, the messages have covariance `sigma_w^2 (I - 11^T/K)`.
/// The leakage is `1/2 log det(C_W + C_n) - 1/2 log det(C_n)` with `C_n`
/// the mask covariance. Per-client scaling `x_k = alpha_k e_k` is a
/// bijection and does not change the value. Zero-sum masks have a singular
/// covariance along `1`, so both matrices are restricted to the orthogonal
/// complement of `1` first.
pub fn leakage_gaussian(
    scheme: NoiseScheme,
    clients: usize,
    sigma_w: f64,
) -> Result<LeakageReport> {
    if clients < 2 {
        return Err(Error::Argument(format!(
            "need at least 2 clients, got {clients}"
        )));
    }
    if !(sigma_w > 0.0 && sigma_w.is_finite()) {
        return Err(Error::Argument(format!(
            "message standard deviation must be positive, got {sigma_w}"
        )));
    }
    match scheme.sigma() {
        None => {
            return Err(Error::Argument(
                "Gaussian leakage is defined for the additive-mask schemes only".into(),
            ))
        }
        Some(s) if !(s > 0.0 && s.is_finite()) => {
            return Err(Error::Argument(format!(
                "mask standard deviation must be positive, got {s}"
            )))
        }
        Some(_) => {}
    }
    let k = clients;
    let noise = scheme.mask_covariance(k)?;
    let sw2 = sigma_w * sigma_w;
    let msg: Vec<Vec<f64>> = (0..k)
        .map(|i| {
            (0..k)
                .map(|j| sw2 * (f64::from(u8::from(i == j)) - 1.0 / k as f64))
                .collect()
        })
        .collect();
    let total = add(&msg, &noise);
    let (num, den) = match scheme {
        NoiseScheme::ZeroSum { .. } => {
            let u = ones_complement_basis(k);
            (restrict(&total, &u), restrict(&noise, &u))
        }
        _ => (total, noise),
    };
    let value = 0.5 * (log_det_spd(&num, "message-plus-mask")? - log_det_spd(&den, "mask")?);
    Ok(LeakageReport {
        scheme,
        leakage_nats_per_dim: value.max(0.0),
        method: LeakageMethod::ClosedFormGaussian,
    })
}

fn add(a: &[Vec<f64>], b: &[Vec<f64>]) -> Vec<Vec<f64>> {
    a.iter()
        .zip(b)
        .map(|(r, s)| r.iter().zip(s).map(|(x, y)| x + y).collect())
        .collect()
}

/// Helmert basis of `{v : 1^T v = 0}`, as `K - 1` orthonormal columns
/// returned row-wise (`u[j]` is the `j`-th basis vector).
pub fn ones_complement_basis(k: usize) -> Vec<Vec<f64>> {
    (1..k)
        .map(|j| {
            let norm = ((j * (j + 1)) as f64).sqrt();
            let mut v = vec![0.0; k];
            v[..j].fill(1.0 / norm);
            v[j] = -(j as f64) / norm;
            v
        })
        .collect()
}

// U^T M U with U's columns given as rows of `u`.
fn restrict(m: &[Vec<f64>], u: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let mu: Vec<Vec<f64>> = u
        .iter()
        .map(|v| {
            m.iter()
                .map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    u.iter()
        .map(|vi| {
            mu.iter()
                .map(|mv| vi.iter().zip(mv).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect()
}

/// `log det` of a symmetric positive definite matrix via Cholesky.
pub fn log_det_spd(m: &[Vec<f64>], what: &str) -> Result<f64> {
    let n = m.len();
    let mut l = vec![vec![0.0; n]; n];
    let mut log_det = 0.0;
    for i in 0..n {
        for j in 0..=i {
            let s: f64 = (0..j).map(|p| l[i][p] * l[j][p]).sum();
            if i == j {
                let d = m[i][i] - s;
                if !(d > 0.0 && d.is_finite()) {
                    return Err(Error::Numerical(format!(
                        "{what} covariance is not positive definite: pivot {i} is {d:e}"
                    )));
                }
                l[i][i] = d.sqrt();
                log_det += d.ln();
            } else {
                l[i][j] = (m[i][j] - s) / l[j][j];
            }
        }
    }
    Ok(log_det)
}

/// One row of the analytics table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyticsRow {
    pub scheme: String,
    pub sigma: Option<f64>,
    pub leakage_nats: f64,
    pub leakage_bits: f64,
    pub mse_closed: f64,
    pub mse_mc: Option<f64>,
    pub mc_stderr: Option<f64>,
    #[serde(rename = "L")]
    pub truncation_l: Option<u32>,
    pub tail_bound: Option<f64>,
}

impl AnalyticsRow {
    /// Modulo scheme at signal point `s`: leakage 0, distortion from the
    /// closed form, optionally against simulation.
    pub fn p2(s: &[f64], sigma_eff: f64, mc: Option<McEstimate>) -> Result<Self> {
        let closed = delta_pointwise(s, sigma_eff, Truncation::Auto)?;
        let leak = leakage_p2();
        Ok(AnalyticsRow {
            scheme: leak.scheme.name().into(),
            sigma: Some(sigma_eff),
            leakage_nats: leak.leakage_nats_per_dim,
            leakage_bits: leak.bits_per_dim(),
            mse_closed: closed.value,
            mse_mc: mc.map(|m| m.mean),
            mc_stderr: mc.map(|m| m.stderr),
            truncation_l: Some(closed.truncation_l),
            tail_bound: Some(closed.tail_bound),
        })
    }

    /// Additive-mask baseline over `dim` entries: the estimate is the sum
    /// plus the residual mask plus the effective noise, so its MSE is
    /// `D (1^T C_n 1 + sigma_eff^2)`.
    pub fn baseline(
        scheme: NoiseScheme,
        clients: usize,
        dim: usize,
        sigma_w: f64,
        sigma_eff: f64,
    ) -> Result<Self> {
        let leak = leakage_gaussian(scheme, clients, sigma_w)?;
        let cov = scheme.mask_covariance(clients)?;
        let residual: f64 = cov.iter().flatten().sum();
        Ok(AnalyticsRow {
            scheme: scheme.name().into(),
            sigma: scheme.sigma(),
            leakage_nats: leak.leakage_nats_per_dim,
            leakage_bits: leak.bits_per_dim(),
            mse_closed: dim as f64 * (residual.max(0.0) + sigma_eff * sigma_eff),
            mse_mc: None,
            mc_stderr: None,
            truncation_l: None,
            tail_bound: None,
        })
    }
}

pub fn write_analytics_csv<W: std::io::Write>(rows: &[AnalyticsRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush().map_err(|e| Error::io("<analytics csv>", e))?;
    Ok(())
}
