use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The masking mechanism a client applies before transmission.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum NoiseScheme {
    /// Modulo masking with zero-sum keys on the torus.
    P2Modulo,
    /// i.i.d. `N(0, sigma^2)` masks per client.
    Independent { sigma: f64 },
    /// Masks `G_corr xi` with `G_corr = sigma/sqrt(5) (2 I - C)`, `C` the
    /// one-step right circular shift of the identity.
    Correlated { sigma: f64 },
    /// Masks `lambda (xi_k - xi_{k+1 mod K})` with `lambda = sigma/sqrt(2)`;
    /// they sum to zero across clients and each has variance `sigma^2`.
    ZeroSum { sigma: f64 },
}

impl NoiseScheme {
    pub fn name(&self) -> &'static str {
        match self {
            NoiseScheme::P2Modulo => "p2-modulo",
            NoiseScheme::Independent { .. } => "independent",
            NoiseScheme::Correlated { .. } => "correlated",
            NoiseScheme::ZeroSum { .. } => "zero-sum",
        }
    }

    pub fn sigma(&self) -> Option<f64> {
        match *self {
            NoiseScheme::P2Modulo => None,
            NoiseScheme::Independent { sigma }
            | NoiseScheme::Correlated { sigma }
            | NoiseScheme::ZeroSum { sigma } => Some(sigma),
        }
    }

    /// Same scheme family with a different mask standard deviation.
    pub fn with_sigma(&self, sigma: f64) -> NoiseScheme {
        match self {
            NoiseScheme::P2Modulo => NoiseScheme::P2Modulo,
            NoiseScheme::Independent { .. } => NoiseScheme::Independent { sigma },
            NoiseScheme::Correlated { .. } => NoiseScheme::Correlated { sigma },
            NoiseScheme::ZeroSum { .. } => NoiseScheme::ZeroSum { sigma },
        }
    }

    pub fn is_baseline(&self) -> bool {
        !matches!(self, NoiseScheme::P2Modulo)
    }

    pub fn validate(&self) -> Result<()> {
        match self.sigma() {
            Some(s) if !(s >= 0.0 && s.is_finite()) => Err(Error::Argument(format!(
                "{} mask standard deviation must be finite and >= 0, got {s}",
                self.name()
            ))),
            _ => Ok(()),
        }
    }

    /// `K x K` matrix `A` such that the stacked masks of one dimension are
    /// `A xi` with `xi ~ N(0, I_K)`.
    pub fn mask_generator(&self, clients: usize) -> Result<Vec<Vec<f64>>> {
        let k = clients;
        let mut a = vec![vec![0.0; k]; k];
        match *self {
            NoiseScheme::P2Modulo => {
                return Err(Error::Argument(
                    "modulo masking has no Gaussian mask generator".into(),
                ))
            }
            NoiseScheme::Independent { sigma } => {
                for (i, row) in a.iter_mut().enumerate() {
                    row[i] = sigma;
                }
            }
            NoiseScheme::Correlated { sigma } => {
                let c = sigma / 5f64.sqrt();
                for (i, row) in a.iter_mut().enumerate() {
                    row[i] += 2.0 * c;
                    row[(i + 1) % k] -= c;
                }
            }
            NoiseScheme::ZeroSum { sigma } => {
                let lambda = sigma / 2f64.sqrt();
                for (i, row) in a.iter_mut().enumerate() {
                    row[i] += lambda;
                    row[(i + 1) % k] -= lambda;
                }
            }
        }
        Ok(a)
    }

    /// Per-dimension mask covariance across clients, `A A^T`.
    pub fn mask_covariance(&self, clients: usize) -> Result<Vec<Vec<f64>>> {
        let a = self.mask_generator(clients)?;
        let k = clients;
        Ok((0..k)
            .map(|i| {
                (0..k)
                    .map(|j| (0..k).map(|m| a[i][m] * a[j][m]).sum())
                    .collect()
            })
            .collect())
    }
}

impl fmt::Display for NoiseScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Parses a scheme family name; baselines get `sigma = 0` until set with
/// [`NoiseScheme::with_sigma`].
impl FromStr for NoiseScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "p2-modulo" | "p2" => NoiseScheme::P2Modulo,
            "independent" => NoiseScheme::Independent { sigma: 0.0 },
            "correlated" => NoiseScheme::Correlated { sigma: 0.0 },
            "zero-sum" => NoiseScheme::ZeroSum { sigma: 0.0 },
            other => return Err(Error::Config(format!("unknown scheme `{other}`"))),
        })
    }
}

/// The masks of every client for one round, `masks[k][d]`.
#[derive(Debug, Clone, PartialEq)]
pub struct BaselineMasks {
    scheme: NoiseScheme,
    masks: Vec<Vec<f64>>,
}

impl BaselineMasks {
    /// Draws `D` independent columns `A xi`.
    pub fn draw<R: Rng + ?Sized>(
        scheme: NoiseScheme,
        clients: usize,
        dim: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let a = scheme.mask_generator(clients)?;
        let mut masks = vec![vec![0.0; dim]; clients];
        let mut xi = vec![0.0; clients];
        for d in 0..dim {
            for x in xi.iter_mut() {
                *x = rng.sample(StandardNormal);
            }
            for (k, row) in a.iter().enumerate() {
                masks[k][d] = row.iter().zip(&xi).map(|(g, x)| g * x).sum();
            }
        }
        Ok(BaselineMasks { scheme, masks })
    }

    pub fn scheme(&self) -> NoiseScheme {
        self.scheme
    }

    pub fn mask(&self, k: usize) -> &[f64] {
        &self.masks[k]
    }

    /// `sum_k mask_k`, the part of the masks that survives aggregation.
    pub fn residual(&self) -> Vec<f64> {
        let dim = self.masks.first().map_or(0, Vec::len);
        (0..dim)
            .map(|d| self.masks.iter().map(|m| m[d]).sum())
            .collect()
    }
}

/// `e_k = W_k + mask_k`.
pub fn encode_baseline(message: &[f64], client: usize, masks: &BaselineMasks) -> Result<Vec<f64>> {
    if !masks.scheme.is_baseline() {
        return Err(Error::Argument(
            "additive encoding requested for the modulo scheme".into(),
        ));
    }
    let mask = masks
        .masks
        .get(client)
        .ok_or_else(|| Error::Argument(format!("no mask for client {client}")))?;
    if mask.len() != message.len() {
        return Err(Error::Argument(format!(
            "message has {} entries, mask {}",
            message.len(),
            mask.len()
        )));
    }
    Ok(message.iter().zip(mask).map(|(w, m)| w + m).collect())
}
