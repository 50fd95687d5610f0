use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::NoiseScheme;

/// How the private messages `W_k` are drawn for a round.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum MessageModel {
    /// `W_k[d] ~ Unif[-a/K, a/K]`, so the sum always lies in `[-a, a]`.
    UniformBox,
    /// `W_k[d] ~ N(0, var)`. With `truncate`, each dimension is redrawn until
    /// `|sum_k W_k[d]| <= a`.
    Gaussian { var: f64, truncate: bool },
    /// Every client sends `value / K`, so the sum is exactly `value`.
    Fixed { value: f64 },
}

impl MessageModel {
    /// Per-entry second moment of one client's message.
    pub fn client_power(&self, clients: usize, half_width: f64) -> f64 {
        match *self {
            MessageModel::UniformBox => {
                let w = half_width / clients as f64;
                w * w / 3.0
            }
            MessageModel::Gaussian { var, .. } => var,
            MessageModel::Fixed { value } => {
                let v = value / clients as f64;
                v * v
            }
        }
    }
}

/// All parameters of one simulated aggregation round.
///
/// Powers are per entry: `tx_power` bounds `E[|x_k|^2] / D` and `msg_power`
/// is the per-entry second moment assumed for the transmitted signal `e_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolConfig {
    pub clients: usize,
    pub dim: usize,
    /// `a` in `W in [-a, a]^D`.
    pub half_width: f64,
    /// `P_X`.
    pub tx_power: f64,
    /// `P_E`.
    pub msg_power: f64,
    /// `N_0`. Zero gives a noise-free channel.
    pub noise_var: f64,
    /// Linear Rician factor; `inf` is a pure line-of-sight channel.
    pub rician_kappa: f64,
    pub messages: MessageModel,
    pub scheme: NoiseScheme,
    #[serde(default)]
    pub seed: u64,
    /// Also draw the client-to-client coefficients `h_{k,k'}`.
    #[serde(default)]
    pub eavesdrop: bool,
}

impl ProtocolConfig {
    /// `K = 10`, `D = 10`, `a = 1/3`, `kappa = 5 dB`, `N_0 = 1`,
    /// `P_X / N_0 = 15 dB`, Gaussian messages of variance 0.01, with the
    /// message power matched to `scheme`.
    pub fn reference(scheme: NoiseScheme, truncate: bool) -> Self {
        let mut cfg = ProtocolConfig {
            clients: 10,
            dim: 10,
            half_width: 1.0 / 3.0,
            tx_power: db_to_linear(15.0),
            msg_power: 1.0 / 12.0,
            noise_var: 1.0,
            rician_kappa: db_to_linear(5.0),
            messages: MessageModel::Gaussian {
                var: 0.01,
                truncate,
            },
            scheme,
            seed: 0,
            eavesdrop: false,
        };
        cfg.msg_power = cfg.natural_msg_power();
        cfg
    }

    /// Per-entry power of `e_k` implied by the scheme: `1/12` for modulo
    /// masking (uniform on the torus), message power plus mask variance for
    /// the additive masks.
    pub fn natural_msg_power(&self) -> f64 {
        match self.scheme {
            NoiseScheme::P2Modulo => 1.0 / 12.0,
            s => {
                let sigma = s.sigma().unwrap_or(0.0);
                self.messages.client_power(self.clients, self.half_width) + sigma * sigma
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Argument(m));
        if self.clients < 2 {
            return bad(format!("need at least 2 clients, got {}", self.clients));
        }
        if self.dim == 0 {
            return bad("dimension must be at least 1".into());
        }
        if !(self.half_width > 0.0 && self.half_width < 0.5) {
            return bad(format!(
                "half width must lie in (0, 1/2), got {}",
                self.half_width
            ));
        }
        for (name, v) in [("tx_power", self.tx_power), ("msg_power", self.msg_power)] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(format!("{name} must be positive and finite, got {v}"));
            }
        }
        if !(self.noise_var >= 0.0 && self.noise_var.is_finite()) {
            return bad(format!(
                "noise variance must be finite and >= 0, got {}",
                self.noise_var
            ));
        }
        if !(self.rician_kappa > 0.0) {
            return bad(format!(
                "Rician factor must be positive, got {}",
                self.rician_kappa
            ));
        }
        match self.messages {
            MessageModel::Gaussian { var, .. } if !(var > 0.0 && var.is_finite()) => {
                return bad(format!("message variance must be positive, got {var}"));
            }
            MessageModel::Fixed { value } if !value.is_finite() => {
                return bad("fixed message must be finite".into());
            }
            _ => {}
        }
        self.scheme.validate()
    }
}

/// `10^(x/10)`.
pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// `10 log10(x)`.
pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}
