use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, Stream};

use super::ProtocolConfig;

/// Fading coefficients of one round and the common power scaling they allow.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelRealization {
    /// Uplink coefficients `h_k`.
    pub gains: Vec<f64>,
    /// Common power scaling factor `P`.
    pub power_scale: f64,
    /// `eavesdrop[k][k']` is the coefficient from client `k'` to client `k`.
    pub eavesdrop: Option<Vec<Vec<f64>>>,
}

impl ChannelRealization {
    /// Channel-inversion scaling `sqrt(P) / h_k`.
    pub fn precoder(&self, k: usize) -> f64 {
        self.power_scale.sqrt() / self.gains[k]
    }

    /// `min_k (P_X / P_E) h_k^2`, the largest feasible `P`.
    pub fn max_power_scale(gains: &[f64], tx_power: f64, msg_power: f64) -> f64 {
        gains
            .iter()
            .map(|h| tx_power / msg_power * h * h)
            .fold(f64::INFINITY, f64::min)
    }

    /// Errors on a zero coefficient or a non-positive scaling factor.
    pub fn check(&self) -> Result<()> {
        if let Some(k) = self.gains.iter().position(|&h| h == 0.0 || !h.is_finite()) {
            return Err(Error::Invariant(format!(
                "channel coefficient h_{k} = {} cannot be inverted",
                self.gains[k]
            )));
        }
        if !(self.power_scale > 0.0 && self.power_scale.is_finite()) {
            return Err(Error::Invariant(format!(
                "power scaling factor must be positive, got {}",
                self.power_scale
            )));
        }
        Ok(())
    }
}

/// One real Rician coefficient `sqrt(k/(k+1)) + sqrt(1/(k+1)) iota`; exact
/// zeros are redrawn.
pub fn rician_gain<R: Rng + ?Sized>(kappa: f64, rng: &mut R) -> f64 {
    if kappa.is_infinite() {
        return 1.0;
    }
    let los = (kappa / (kappa + 1.0)).sqrt();
    let scatter = (1.0 / (kappa + 1.0)).sqrt();
    loop {
        let iota: f64 = rng.sample(StandardNormal);
        let h = los + scatter * iota;
        if h != 0.0 {
            return h;
        }
    }
}

/// Draws the fading of one round and sets `P` to its feasibility maximum.
pub fn draw_channel(cfg: &ProtocolConfig, seed: u64) -> Result<ChannelRealization> {
    cfg.validate()?;
    let k = cfg.clients;
    let gains: Vec<f64> = (0..k)
        .map(|c| {
            rician_gain(
                cfg.rician_kappa,
                &mut stream(seed, Stream::Channel, &[c as u64]),
            )
        })
        .collect();
    let eavesdrop = cfg.eavesdrop.then(|| {
        (0..k)
            .map(|rx| {
                let mut rng = stream(seed, Stream::Eavesdrop, &[rx as u64]);
                (0..k)
                    .map(|tx| {
                        if tx == rx {
                            0.0
                        } else {
                            rician_gain(cfg.rician_kappa, &mut rng)
                        }
                    })
                    .collect()
            })
            .collect()
    });
    let power_scale = ChannelRealization::max_power_scale(&gains, cfg.tx_power, cfg.msg_power);
    let ch = ChannelRealization {
        gains,
        power_scale,
        eavesdrop,
    };
    ch.check()?;
    Ok(ch)
}

/// `z ~ N(0, N_0 I_D)`.
pub fn draw_awgn<R: Rng + ?Sized>(noise_var: f64, dim: usize, rng: &mut R) -> Vec<f64> {
    let sd = noise_var.sqrt();
    (0..dim)
        .map(|_| sd * rng.sample::<f64, _>(StandardNormal))
        .collect()
}

/// Received signal and the per-client energy actually radiated.
#[derive(Debug, Clone, PartialEq)]
pub struct Transmission {
    pub received: Vec<f64>,
    /// `|x_k|^2`.
    pub tx_energy: Vec<f64>,
}

/// Applies channel-inversion precoding `x_k = sqrt(P)/h_k e_k`, passes each
/// `x_k` through its fading coefficient and adds `z`:
/// `y = sum_k h_k x_k + z = sqrt(P) sum_k e_k + z`.
pub fn transmit_and_superpose(
    signals: &[Vec<f64>],
    ch: &ChannelRealization,
    noise: &[f64],
) -> Result<Transmission> {
    ch.check()?;
    if signals.len() != ch.gains.len() {
        return Err(Error::Argument(format!(
            "{} signals for {} channel coefficients",
            signals.len(),
            ch.gains.len()
        )));
    }
    let dim = noise.len();
    if let Some(bad) = signals.iter().position(|e| e.len() != dim) {
        return Err(Error::Argument(format!(
            "signal {bad} has {} entries, noise has {dim}",
            signals[bad].len()
        )));
    }
    let mut received = noise.to_vec();
    let mut tx_energy = Vec::with_capacity(signals.len());
    for (k, e) in signals.iter().enumerate() {
        let (alpha, h) = (ch.precoder(k), ch.gains[k]);
        let mut energy = 0.0;
        for (y, &e) in received.iter_mut().zip(e) {
            let x = alpha * e;
            energy += x * x;
            *y += h * x;
        }
        tx_energy.push(energy);
    }
    Ok(Transmission {
        received,
        tx_energy,
    })
}
