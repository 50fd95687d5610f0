use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::keys::{sample_keys, GeneratorMatrix};
use crate::numerics::{wrap, TorusScalar};
use crate::rng::{derive_seed, stream, Stream};

use super::channel::{draw_awgn, draw_channel, transmit_and_superpose, ChannelRealization};
use super::schemes::{encode_baseline, BaselineMasks};
use super::{MessageModel, NoiseScheme, ProtocolConfig};

/// `e_k = [W_k + S_k] mod 1`.
pub fn encode_p2(message: &[f64], key: &[TorusScalar]) -> Result<Vec<TorusScalar>> {
    if message.len() != key.len() {
        return Err(Error::Argument(format!(
            "message has {} entries, key {}",
            message.len(),
            key.len()
        )));
    }
    Ok(message
        .iter()
        .zip(key)
        .map(|(&w, s)| TorusScalar::from_reduced(wrap(w + s.value())))
        .collect())
}

/// `W_hat = [y / sqrt(P)] mod 1`.
pub fn decode_p2(received: &[f64], power_scale: f64) -> Result<Vec<TorusScalar>> {
    check_power(power_scale)?;
    let g = power_scale.sqrt();
    Ok(received
        .iter()
        .map(|&y| TorusScalar::from_reduced(wrap(y / g)))
        .collect())
}

/// `W_hat = y / sqrt(P)`; whatever part of the masks did not cancel stays in
/// the estimate.
pub fn decode_baseline(received: &[f64], power_scale: f64) -> Result<Vec<f64>> {
    check_power(power_scale)?;
    let g = power_scale.sqrt();
    Ok(received.iter().map(|&y| y / g).collect())
}

fn check_power(p: f64) -> Result<()> {
    if p > 0.0 && p.is_finite() {
        Ok(())
    } else {
        Err(Error::Argument(format!(
            "power scaling factor must be positive, got {p}"
        )))
    }
}

/// Draws `messages[k][d]` per the configured model. Each dimension has its
/// own stream so truncation redraws stay local to that dimension.
pub fn sample_messages(cfg: &ProtocolConfig, seed: u64) -> Vec<Vec<f64>> {
    let (k, dim, a) = (cfg.clients, cfg.dim, cfg.half_width);
    let mut w = vec![vec![0.0; dim]; k];
    let mut col = vec![0.0; k];
    for d in 0..dim {
        let mut rng = stream(seed, Stream::Messages, &[d as u64]);
        match cfg.messages {
            MessageModel::UniformBox => {
                let half = a / k as f64;
                for c in col.iter_mut() {
                    *c = rng.random_range(-half..=half);
                }
            }
            MessageModel::Fixed { value } => col.fill(value / k as f64),
            MessageModel::Gaussian { var, truncate } => {
                let sd = var.sqrt();
                loop {
                    for c in col.iter_mut() {
                        *c = sd * rng.sample::<f64, _>(StandardNormal);
                    }
                    if !truncate || col.iter().sum::<f64>().abs() <= a {
                        break;
                    }
                }
            }
        }
        for (row, &c) in w.iter_mut().zip(&col) {
            row[d] = c;
        }
    }
    w
}

/// Everything measured in one round.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundResult {
    pub seed: u64,
    pub scheme: NoiseScheme,
    /// `W = sum_k W_k`.
    pub w_true: Vec<f64>,
    pub w_hat: Vec<f64>,
    /// `(W_hat[d] - W[d])^2`, measured on the real line.
    pub per_dim_sq_err: Vec<f64>,
    /// Realized `|x_k|^2`.
    pub tx_powers: Vec<f64>,
    /// `(P / h_k^2) P_E D`, the expected energy the budget constrains.
    pub expected_tx_powers: Vec<f64>,
    /// `P_X D`.
    pub tx_budget: f64,
    pub power_scale: f64,
    /// `sqrt(N_0 / P)`.
    pub sigma_eff: f64,
    /// Dimensions where noise carried `W + n` across a half-integer.
    pub wrapped_count: usize,
}

impl RoundResult {
    pub fn mse_per_dim(&self) -> f64 {
        self.per_dim_sq_err.iter().sum::<f64>() / self.per_dim_sq_err.len() as f64
    }

    /// The expected-power budget holds up to rounding in `P`.
    pub fn within_budget(&self) -> bool {
        self.expected_tx_powers
            .iter()
            .all(|&p| p <= self.tx_budget * (1.0 + 1e-12))
    }
}

/// Simulates one aggregation round with `cfg` from `seed`.
///
/// Channel, messages and channel noise come from streams that do not depend
/// on the scheme, so rounds run with the same seed under different schemes
/// see identical fading, messages and noise.
pub fn run_round(cfg: &ProtocolConfig, seed: u64) -> Result<RoundResult> {
    cfg.validate()?;
    let (k, dim) = (cfg.clients, cfg.dim);
    let ch: ChannelRealization = draw_channel(cfg, seed)?;
    let messages = sample_messages(cfg, seed);
    let w_true: Vec<f64> = (0..dim)
        .map(|d| messages.iter().map(|m| m[d]).sum())
        .collect();

    let signals: Vec<Vec<f64>> = match cfg.scheme {
        NoiseScheme::P2Modulo => {
            let generator = GeneratorMatrix::default_for(k)?;
            let bundle = sample_keys(&generator, dim, derive_seed(seed, Stream::KeySeeds, &[]))?;
            messages
                .iter()
                .zip(&bundle.keys)
                .map(|(w, s)| encode_p2(w, s).map(|e| e.into_iter().map(f64::from).collect()))
                .collect::<Result<_>>()?
        }
        scheme => {
            let masks = BaselineMasks::draw(scheme, k, dim, &mut stream(seed, Stream::Masks, &[]))?;
            (0..k)
                .map(|c| encode_baseline(&messages[c], c, &masks))
                .collect::<Result<_>>()?
        }
    };

    let noise = draw_awgn(
        cfg.noise_var,
        dim,
        &mut stream(seed, Stream::ChannelNoise, &[]),
    );
    let tx = transmit_and_superpose(&signals, &ch, &noise)?;

    let sqrt_p = ch.power_scale.sqrt();
    let (w_hat, wrapped_count) = match cfg.scheme {
        NoiseScheme::P2Modulo => {
            let est: Vec<f64> = decode_p2(&tx.received, ch.power_scale)?
                .into_iter()
                .map(f64::from)
                .collect();
            let wrapped = w_true
                .iter()
                .zip(&noise)
                .filter(|(&w, &z)| (w + z / sqrt_p + 0.5).floor() != 0.0)
                .count();
            (est, wrapped)
        }
        _ => (decode_baseline(&tx.received, ch.power_scale)?, 0),
    };
    let per_dim_sq_err = w_hat
        .iter()
        .zip(&w_true)
        .map(|(h, w)| (h - w) * (h - w))
        .collect();
    let expected_tx_powers = ch
        .gains
        .iter()
        .map(|h| ch.power_scale / (h * h) * cfg.msg_power * dim as f64)
        .collect();
    Ok(RoundResult {
        seed,
        scheme: cfg.scheme,
        w_true,
        w_hat,
        per_dim_sq_err,
        tx_powers: tx.tx_energy,
        expected_tx_powers,
        tx_budget: cfg.tx_power * dim as f64,
        power_scale: ch.power_scale,
        sigma_eff: (cfg.noise_var / ch.power_scale).sqrt(),
        wrapped_count,
    })
}

/// Writes rounds in long form: `seed,scheme,kind,index,value` where `kind`
/// is `sq_err` (one row per dimension) or `tx_power` (one row per client).
pub fn write_round_traces<W: Write>(rounds: &[RoundResult], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["seed", "scheme", "kind", "index", "value"])?;
    for r in rounds {
        let seed = r.seed.to_string();
        let scheme = r.scheme.name();
        for (kind, vals) in [("sq_err", &r.per_dim_sq_err), ("tx_power", &r.tx_powers)] {
            for (i, v) in vals.iter().enumerate() {
                w.write_record([
                    seed.as_str(),
                    scheme,
                    kind,
                    &i.to_string(),
                    &format!("{v:e}"),
                ])?;
            }
        }
    }
    w.flush().map_err(|e| Error::io("<round trace>", e))?;
    Ok(())
}
