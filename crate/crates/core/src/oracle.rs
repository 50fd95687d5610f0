//! Ground truth engines.
//!
//! The discrete oracle replays the protocol over `Z_q`: keys are integer
//! combinations of uniform seeds mod `q`, clients send `e_k = W_k + S_k mod q`
//! and there is no channel noise. Every mutual information is then a finite
//! sum over integer-weighted outcomes, so a perfectly private view yields
//! exactly `0.0` rather than something small.
//!
//! The Monte-Carlo oracle simulates `[s + n] mod 1` directly.

use std::collections::HashMap;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytics::McEstimate;
use crate::error::{Error, Result};
use crate::keys::GeneratorMatrix;
use crate::numerics::{wrap, CompensatedSum};
use crate::rng::{stream, Stream};

/// Largest joint outcome count the enumerator accepts.
pub const MAX_OUTCOMES: u64 = 100_000_000;

/// How the discrete keys are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum KeyLaw {
    /// `S_k = sum_j g[k][j] N_j mod q` with `N_j` uniform on `Z_q`.
    Generator { generator: GeneratorMatrix },
    /// Independent keys, each uniform on `{0, .., support - 1}`. With
    /// `support = q` this is a one-time pad per client; a smaller support
    /// gives a leaky negative control.
    Independent { support: u32 },
}

/// Who observes what.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum View {
    /// All `e_k`, conditioned on the aggregate.
    Server,
    /// Clients in `holders` pool their messages and keys and observe every
    /// other client's `e_k`. With `aggregate` the view also conditions on
    /// the sum `W`.
    Clients {
        holders: Vec<usize>,
        aggregate: bool,
    },
}

impl View {
    pub fn label(&self) -> String {
        match self {
            View::Server => "server".into(),
            View::Clients { holders, aggregate } => {
                let ids: Vec<String> = holders.iter().map(|h| h.to_string()).collect();
                format!(
                    "client[{}]{}",
                    ids.join(","),
                    if *aggregate { "+aggregate" } else { "" }
                )
            }
        }
    }
}

/// One discrete experiment. `messages[k]` lists `(value, weight)` pairs;
/// probabilities are weights over their total.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscreteScenario {
    pub q: u32,
    pub clients: usize,
    pub messages: Vec<Vec<(u32, u64)>>,
    pub keys: KeyLaw,
    pub view: View,
}

impl DiscreteScenario {
    /// Every client's message uniform on `support`, zero-sum keys from the
    /// default generator.
    pub fn uniform(q: u32, clients: usize, support: &[u32], view: View) -> Result<Self> {
        let generator = GeneratorMatrix::default_for(clients)?;
        let sc = DiscreteScenario {
            q,
            clients,
            messages: vec![support.iter().map(|&v| (v, 1)).collect(); clients],
            keys: KeyLaw::Generator { generator },
            view,
        };
        sc.validate()?;
        Ok(sc)
    }

    pub fn with_keys(mut self, keys: KeyLaw) -> Self {
        self.keys = keys;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.q < 2 {
            return Err(Error::Argument(format!(
                "modulus must be >= 2, got {}",
                self.q
            )));
        }
        if self.clients < 2 {
            return Err(Error::Argument(format!(
                "need at least 2 clients, got {}",
                self.clients
            )));
        }
        if self.messages.len() != self.clients {
            return Err(Error::Argument(format!(
                "{} message laws for {} clients",
                self.messages.len(),
                self.clients
            )));
        }
        for (k, law) in self.messages.iter().enumerate() {
            if law.is_empty() {
                return Err(Error::Argument(format!(
                    "client {k} has an empty message support"
                )));
            }
            if let Some(&(v, w)) = law.iter().find(|&&(v, w)| v >= self.q || w == 0) {
                return Err(Error::Argument(format!(
                    "client {k}: message {v} with weight {w} is not a positive-weight element of Z_{}",
                    self.q
                )));
            }
        }
        match &self.keys {
            KeyLaw::Generator { generator } => {
                if generator.clients() != self.clients {
                    return Err(Error::Argument(format!(
                        "generator has {} rows for {} clients",
                        generator.clients(),
                        self.clients
                    )));
                }
            }
            KeyLaw::Independent { support } => {
                if *support == 0 || *support > self.q {
                    return Err(Error::Argument(format!(
                        "independent key support must be in 1..={}, got {support}",
                        self.q
                    )));
                }
            }
        }
        if let View::Clients { holders, .. } = &self.view {
            let mut h = holders.clone();
            h.sort_unstable();
            h.dedup();
            if h.is_empty() || h.len() != holders.len() || h.len() >= self.clients {
                return Err(Error::Argument(
                    "holders must be distinct and leave at least one other client".into(),
                ));
            }
            if let Some(&bad) = h.iter().find(|&&x| x >= self.clients) {
                return Err(Error::Argument(format!("holder {bad} out of range")));
            }
        }
        Ok(())
    }

    fn key_tuples(&self) -> Result<Vec<Vec<u32>>> {
        let q = u64::from(self.q);
        match &self.keys {
            KeyLaw::Generator { generator } => {
                let j = generator.seeds();
                let count = checked_pow(q, j)?;
                (0..count)
                    .map(|idx| {
                        let seeds = digits(idx, q, j);
                        Ok(generator
                            .rows()
                            .iter()
                            .map(|row| {
                                let s: i64 = row
                                    .iter()
                                    .zip(&seeds)
                                    .map(|(&g, &n)| g * i64::from(n))
                                    .sum();
                                s.rem_euclid(q as i64) as u32
                            })
                            .collect())
                    })
                    .collect()
            }
            KeyLaw::Independent { support } => {
                let m = u64::from(*support);
                let count = checked_pow(m, self.clients)?;
                Ok((0..count).map(|idx| digits(idx, m, self.clients)).collect())
            }
        }
    }

    /// Number of weighted joint outcomes the enumeration visits.
    pub fn outcome_count(&self) -> Result<u64> {
        let mut n = match &self.keys {
            KeyLaw::Generator { generator } => checked_pow(u64::from(self.q), generator.seeds())?,
            KeyLaw::Independent { support } => checked_pow(u64::from(*support), self.clients)?,
        };
        for law in &self.messages {
            n = n.checked_mul(law.len() as u64).ok_or_else(too_big)?;
            if n > MAX_OUTCOMES {
                return Err(too_big());
            }
        }
        if n > MAX_OUTCOMES {
            return Err(too_big());
        }
        Ok(n)
    }
}

fn too_big() -> Error {
    Error::Resource(format!("joint outcome count exceeds {MAX_OUTCOMES}"))
}

fn checked_pow(base: u64, exp: usize) -> Result<u64> {
    let mut n: u64 = 1;
    for _ in 0..exp {
        n = n
            .checked_mul(base)
            .filter(|&n| n <= MAX_OUTCOMES)
            .ok_or_else(too_big)?;
    }
    Ok(n)
}

fn digits(mut idx: u64, base: u64, len: usize) -> Vec<u32> {
    (0..len)
        .map(|_| {
            let d = (idx % base) as u32;
            idx /= base;
            d
        })
        .collect()
}

/// An exactly enumerated mutual information.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExactMI {
    pub value_nats: f64,
    pub enumerated_outcomes: u64,
}

// (conditioning, target, observation) values of one joint outcome.
type Cell = (Vec<u32>, Vec<u32>, Vec<u32>);

/// `I(T; O | C)` for the scenario's view, by full enumeration.
pub fn exact_leakage(sc: &DiscreteScenario) -> Result<ExactMI> {
    sc.validate()?;
    let outcomes = sc.outcome_count()?;
    let keys = sc.key_tuples()?;
    let q = sc.q;
    let k = sc.clients;
    let radices: Vec<u64> = sc.messages.iter().map(|m| m.len() as u64).collect();
    let msg_tuples: u64 = radices.iter().product();

    let (holders, aggregate) = match &sc.view {
        View::Server => (Vec::new(), true),
        View::Clients { holders, aggregate } => (holders.clone(), *aggregate),
    };
    let others: Vec<usize> = (0..k).filter(|c| !holders.contains(c)).collect();

    let counts: HashMap<Cell, u64> = (0..msg_tuples)
        .into_par_iter()
        .fold(HashMap::new, |mut acc: HashMap<Cell, u64>, idx| {
            let mut rem = idx;
            let mut w = Vec::with_capacity(k);
            let mut weight: u64 = 1;
            for (law, &r) in sc.messages.iter().zip(&radices) {
                let (v, wt) = law[(rem % r) as usize];
                rem /= r;
                w.push(v);
                weight *= wt;
            }
            let sum: u32 = w.iter().sum();
            let t: Vec<u32> = others.iter().map(|&c| w[c]).collect();
            for s in &keys {
                let o: Vec<u32> = others.iter().map(|&c| (w[c] + s[c]) % q).collect();
                let mut cond: Vec<u32> = holders.iter().flat_map(|&h| [w[h], s[h]]).collect();
                if aggregate {
                    cond.push(sum);
                }
                *acc.entry((cond, t.clone(), o)).or_insert(0) += weight;
            }
            acc
        })
        .reduce(HashMap::new, |mut a, b| {
            for (key, n) in b {
                *a.entry(key).or_insert(0) += n;
            }
            a
        });

    let mut cells: Vec<(Cell, u64)> = counts.into_iter().collect();
    cells.sort_unstable();
    let mut n_c: HashMap<&[u32], u128> = HashMap::new();
    let mut n_tc: HashMap<(&[u32], &[u32]), u128> = HashMap::new();
    let mut n_oc: HashMap<(&[u32], &[u32]), u128> = HashMap::new();
    let mut total: u128 = 0;
    for ((c, t, o), n) in &cells {
        let n = u128::from(*n);
        *n_c.entry(c).or_insert(0) += n;
        *n_tc.entry((c, t)).or_insert(0) += n;
        *n_oc.entry((c, o)).or_insert(0) += n;
        total += n;
    }
    let mut mi = CompensatedSum::new();
    for ((c, t, o), n) in &cells {
        let n = u128::from(*n);
        let num = n * n_c[c.as_slice()];
        let den = n_tc[&(c.as_slice(), t.as_slice())] * n_oc[&(c.as_slice(), o.as_slice())];
        if num != den {
            mi.add(n as f64 / total as f64 * (num as f64 / den as f64).ln());
        }
    }
    Ok(ExactMI {
        value_nats: mi.value().max(0.0),
        enumerated_outcomes: outcomes,
    })
}

/// `I({W_k}; {e_k} | W)` at the server.
pub fn exact_server_leakage(sc: &DiscreteScenario) -> Result<ExactMI> {
    if sc.view != View::Server {
        return Err(Error::Argument(format!(
            "expected the server view, got {}",
            sc.view.label()
        )));
    }
    exact_leakage(sc)
}

/// `I({W_j}; {e_j} | W_h, S_h [, W])` over the non-holders `j`.
pub fn exact_client_leakage(sc: &DiscreteScenario) -> Result<ExactMI> {
    if sc.view == View::Server {
        return Err(Error::Argument("expected a client view, got server".into()));
    }
    exact_leakage(sc)
}

/// Whether the keys indexed by `subset` are exactly uniform on `Z_q^|subset|`.
pub fn keys_jointly_uniform(generator: &GeneratorMatrix, q: u32, subset: &[usize]) -> Result<bool> {
    if let Some(&bad) = subset.iter().find(|&&k| k >= generator.clients()) {
        return Err(Error::Argument(format!("key index {bad} out of range")));
    }
    let sc = DiscreteScenario {
        q,
        clients: generator.clients(),
        messages: vec![vec![(0, 1)]; generator.clients()],
        keys: KeyLaw::Generator {
            generator: generator.clone(),
        },
        view: View::Server,
    };
    sc.validate()?;
    let mut hist: HashMap<Vec<u32>, u64> = HashMap::new();
    for s in sc.key_tuples()? {
        *hist
            .entry(subset.iter().map(|&k| s[k]).collect())
            .or_insert(0) += 1;
    }
    let cells = checked_pow(u64::from(q), subset.len())?;
    let first = hist.values().next().copied();
    Ok(hist.len() as u64 == cells && hist.values().all(|&n| Some(n) == first))
}

/// Regression record for one oracle evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleRecord {
    pub q: u32,
    #[serde(rename = "K")]
    pub clients: usize,
    pub view: String,
    pub mi_nats: f64,
    pub outcomes: u64,
}

impl OracleRecord {
    pub fn new(sc: &DiscreteScenario, mi: ExactMI) -> Self {
        OracleRecord {
            q: sc.q,
            clients: sc.clients,
            view: sc.view.label(),
            mi_nats: mi.value_nats,
            outcomes: mi.enumerated_outcomes,
        }
    }
}

/// Smallest trial count [`mc_mse`] accepts.
pub const MIN_MC_TRIALS: u64 = 10_000;
/// Trials per independently seeded chunk.
pub const MC_CHUNK: u64 = 1 << 14;

// Count, mean and sum of squared deviations.
#[derive(Clone, Copy)]
struct Moments {
    n: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    fn merge(self, other: Moments) -> Moments {
        let n = self.n + other.n;
        if n == 0.0 {
            return self;
        }
        let d = other.mean - self.mean;
        Moments {
            n,
            mean: self.mean + d * other.n / n,
            m2: self.m2 + other.m2 + d * d * self.n * other.n / n,
        }
    }
}

/// Simulated `E |[s + n] mod 1 - s|^2`, `n ~ N(0, sigma^2 I)`.
///
/// Trials are split into chunks of [`MC_CHUNK`] with chunk `c` reading the
/// stream `(seed, EffectiveNoise, [c])`; the noise therefore depends only on
/// the seed and trial index, not on `s`, `sigma` or the thread count. The
/// stderr is the jackknife one, which for a mean is `sd / sqrt(n)`.
pub fn mc_mse(s: &[f64], sigma_eff: f64, trials: u64, seed: u64) -> Result<McEstimate> {
    if trials < MIN_MC_TRIALS {
        return Err(Error::Argument(format!(
            "need at least {MIN_MC_TRIALS} trials, got {trials}"
        )));
    }
    if !(sigma_eff > 0.0 && sigma_eff.is_finite()) {
        return Err(Error::Argument(format!(
            "effective noise must be positive and finite, got {sigma_eff}"
        )));
    }
    if s.is_empty() || s.iter().any(|x| !x.is_finite()) {
        return Err(Error::Argument(
            "signal point must be non-empty and finite".into(),
        ));
    }
    let chunks = trials.div_ceil(MC_CHUNK);
    let parts: Vec<Moments> = (0..chunks)
        .into_par_iter()
        .map(|c| {
            let len = MC_CHUNK.min(trials - c * MC_CHUNK);
            let mut rng = stream(seed, Stream::EffectiveNoise, &[c]);
            let mut m = Moments {
                n: 0.0,
                mean: 0.0,
                m2: 0.0,
            };
            for _ in 0..len {
                let err: f64 = s
                    .iter()
                    .map(|&sd| {
                        let xi: f64 = rng.sample(StandardNormal);
                        let e = wrap(sd + sigma_eff * xi) - sd;
                        e * e
                    })
                    .sum();
                m.n += 1.0;
                let d = err - m.mean;
                m.mean += d / m.n;
                m.m2 += d * (err - m.mean);
            }
            m
        })
        .collect();
    let m = parts.into_iter().fold(
        Moments {
            n: 0.0,
            mean: 0.0,
            m2: 0.0,
        },
        Moments::merge,
    );
    let var = m.m2 / (m.n - 1.0);
    Ok(McEstimate {
        mean: m.mean,
        stderr: (var / m.n).sqrt(),
        trials,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn server(q: u32, k: usize) -> DiscreteScenario {
        DiscreteScenario::uniform(q, k, &[0, 1], View::Server).unwrap()
    }

    fn client(q: u32, k: usize, holder: usize, aggregate: bool) -> DiscreteScenario {
        let view = View::Clients {
            holders: vec![holder],
            aggregate,
        };
        DiscreteScenario::uniform(q, k, &[0, 1], view).unwrap()
    }

    #[test]
    fn server_view_is_exactly_private() {
        let mi = exact_server_leakage(&server(5, 3)).unwrap();
        assert_eq!(mi.value_nats, 0.0);
        assert_eq!(mi.enumerated_outcomes, 8 * 25);
    }

    #[test]
    fn two_clients_any_message_law() {
        let mut sc = server(2, 2);
        sc.messages = vec![vec![(0, 1), (1, 3)], vec![(0, 5), (1, 2)]];
        assert_eq!(exact_server_leakage(&sc).unwrap().value_nats, 0.0);
    }

    #[test]
    fn leaky_keys_leak() {
        // Keys on a strict subset of Z_q do not hide the messages.
        let sc = server(5, 3).with_keys(KeyLaw::Independent { support: 3 });
        assert!(exact_server_leakage(&sc).unwrap().value_nats > 1e-3);
        // Full-support independent keys are one-time pads.
        let sc = server(5, 3).with_keys(KeyLaw::Independent { support: 5 });
        assert_eq!(exact_server_leakage(&sc).unwrap().value_nats, 0.0);
    }

    #[test]
    fn client_view_private_from_three_clients() {
        for k in 3..=4 {
            for h in 0..k {
                let mi = exact_client_leakage(&client(5, k, h, true)).unwrap();
                assert_eq!(mi.value_nats, 0.0, "K={k} holder {h}");
            }
        }
    }

    #[test]
    fn two_client_view_reveals_the_other_message() {
        // S_2 = -S_1, so client 1 reads W_2 off e_2.
        let mi = exact_client_leakage(&client(3, 2, 0, false)).unwrap();
        assert!((mi.value_nats - std::f64::consts::LN_2).abs() < 1e-15);
        // Once the aggregate is known there is nothing left to learn.
        assert_eq!(
            exact_client_leakage(&client(3, 2, 0, true))
                .unwrap()
                .value_nats,
            0.0
        );
    }

    #[test]
    fn client_without_aggregate_learns_only_the_partial_sum() {
        // K = 3, holder 0: e_1 + e_2 = W_1 + W_2 - S_0 reveals W_1 + W_2,
        // whose entropy for uniform {0,1} messages is 1.5 ln 2 - 0.5 ln 1.
        let mi = exact_client_leakage(&client(5, 3, 0, false))
            .unwrap()
            .value_nats;
        let h_sum = -(0.25f64 * 0.25f64.ln() * 2.0 + 0.5 * 0.5f64.ln());
        assert!((mi - h_sum).abs() < 1e-14, "{mi} vs {h_sum}");
    }

    #[test]
    fn colluding_pair_is_reported() {
        let view = View::Clients {
            holders: vec![0, 1],
            aggregate: true,
        };
        let sc = DiscreteScenario::uniform(3, 4, &[0, 1], view).unwrap();
        let mi = exact_client_leakage(&sc).unwrap();
        assert!(mi.value_nats >= 0.0);
        assert_eq!(OracleRecord::new(&sc, mi).view, "client[0,1]+aggregate");
    }

    #[test]
    fn any_k_minus_one_keys_are_jointly_uniform() {
        for k in 2..=5 {
            let g = GeneratorMatrix::default_for(k).unwrap();
            for q in [2, 3, 5] {
                for skip in 0..k {
                    let subset: Vec<usize> = (0..k).filter(|&i| i != skip).collect();
                    assert!(keys_jointly_uniform(&g, q, &subset).unwrap());
                }
                let all: Vec<usize> = (0..k).collect();
                assert!(!keys_jointly_uniform(&g, q, &all).unwrap());
            }
        }
    }

    #[test]
    fn views_are_checked() {
        assert!(exact_server_leakage(&client(3, 3, 0, true)).is_err());
        assert!(exact_client_leakage(&server(3, 3)).is_err());
        let bad = View::Clients {
            holders: vec![0, 1],
            aggregate: true,
        };
        assert!(DiscreteScenario::uniform(3, 2, &[0, 1], bad).is_err());
        assert!(DiscreteScenario::uniform(3, 3, &[0, 3], View::Server).is_err());
        assert!(DiscreteScenario::uniform(1, 3, &[0], View::Server).is_err());
    }

    #[test]
    fn enumeration_guard() {
        let sc = DiscreteScenario::uniform(1000, 4, &[0, 1], View::Server).unwrap();
        assert!(matches!(exact_leakage(&sc), Err(Error::Resource(_))));
    }

    #[test]
    fn record_json_shape() {
        let sc = server(5, 3);
        let rec = OracleRecord::new(&sc, exact_server_leakage(&sc).unwrap());
        let v: serde_json::Value = serde_json::to_value(&rec).unwrap();
        let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
        keys.sort_unstable();
        assert_eq!(keys, ["K", "mi_nats", "outcomes", "q", "view"]);
    }

    #[test]
    fn mc_small_noise_and_uniform_limits() {
        let e = mc_mse(&[0.0], 0.01, 200_000, 11).unwrap();
        assert!((e.mean - 1e-4).abs() < 3.0 * e.stderr, "{e:?}");
        let e = mc_mse(&[0.0], 100.0, 200_000, 12).unwrap();
        assert!((e.mean - 1.0 / 12.0).abs() < 3.0 * e.stderr, "{e:?}");
    }

    #[test]
    fn mc_stderr_scales_with_trials() {
        let a = mc_mse(&[0.2, -0.1], 0.3, 20_000, 5).unwrap();
        let b = mc_mse(&[0.2, -0.1], 0.3, 200_000, 5).unwrap();
        let ratio = a.stderr / b.stderr;
        assert!((ratio / 10f64.sqrt() - 1.0).abs() < 0.2, "ratio {ratio}");
    }

    #[test]
    fn mc_is_thread_count_independent() {
        let run = |threads| {
            rayon::ThreadPoolBuilder::new()
                .num_threads(threads)
                .build()
                .unwrap()
                .install(|| mc_mse(&[0.25; 3], 0.4, 100_000, 9).unwrap())
        };
        let one = run(1);
        assert_eq!(one, run(3));
        assert_eq!(one, run(8));
    }

    #[test]
    fn mc_rejects_bad_arguments() {
        assert!(mc_mse(&[0.0], 0.1, 9_999, 1).is_err());
        assert!(mc_mse(&[0.0], 0.0, 10_000, 1).is_err());
        assert!(mc_mse(&[], 0.1, 10_000, 1).is_err());
    }
}
