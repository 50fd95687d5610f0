//! Modulo-zero-sum secret keys.
//!
//! `K` key vectors are produced from `J` independent uniform seed vectors on
//! the torus through an integer generator matrix `G` (`K x J`):
//! `S_k = [sum_j G[k][j] N_j] mod 1`. When the columns of `G` sum to zero the
//! keys cancel exactly in the modulo sum, and when every `J`-row submatrix is
//! full rank no smaller subset of keys cancels.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::{wrap, TorusScalar};
use crate::rng::{stream_at, Stream};

/// Largest client count for which the submatrix rank condition is checked by
/// enumeration.
pub const RANK_ENUMERATION_MAX_CLIENTS: usize = 12;

/// Integer matrix with one row per client and one column per seed vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorMatrix {
    rows: Vec<Vec<i64>>,
}

impl GeneratorMatrix {
    /// Wraps a row-major integer matrix. Only the shape is checked here; use
    /// [`GeneratorMatrix::check`] or [`GeneratorMatrix::validate`] for the
    /// cancellation conditions.
    pub fn from_rows(rows: Vec<Vec<i64>>) -> Result<Self> {
        let k = rows.len();
        if k < 2 {
            return Err(Error::Argument(format!(
                "generator needs at least 2 rows, got {k}"
            )));
        }
        let j = rows[0].len();
        if j == 0 || rows.iter().any(|r| r.len() != j) {
            return Err(Error::Argument(
                "generator rows must be non-empty and of equal length".into(),
            ));
        }
        Ok(GeneratorMatrix { rows })
    }

    /// The `K x (K-1)` identity-over-negated-ones construction.
    ///
    /// ```text
    /// K = 3:  [ 1  0 ]
    ///         [ 0  1 ]
    ///         [-1 -1 ]
    /// ```
    pub fn default_for(clients: usize) -> Result<Self> {
        if clients < 2 {
            return Err(Error::Argument(format!(
                "at least 2 clients are required, got {clients}"
            )));
        }
        let j = clients - 1;
        let mut rows: Vec<Vec<i64>> = (0..j)
            .map(|r| (0..j).map(|c| i64::from(r == c)).collect())
            .collect();
        rows.push(vec![-1; j]);
        Ok(GeneratorMatrix { rows })
    }

    pub fn clients(&self) -> usize {
        self.rows.len()
    }

    pub fn seeds(&self) -> usize {
        self.rows[0].len()
    }

    pub fn rows(&self) -> &[Vec<i64>] {
        &self.rows
    }

    pub fn entry(&self, k: usize, j: usize) -> i64 {
        self.rows[k][j]
    }

    /// `1^T G` as a vector of column sums.
    pub fn column_sums(&self) -> Vec<i64> {
        (0..self.seeds())
            .map(|j| self.rows.iter().map(|r| r[j]).sum())
            .collect()
    }

    /// Evaluates both generator conditions.
    pub fn check(&self) -> GeneratorReport {
        let column_sums = self.column_sums();
        let column_sums_zero = column_sums.iter().all(|&c| c == 0);
        let (k, j) = (self.clients(), self.seeds());
        let rank = if j > k {
            RankCheck::Failed {
                singular_subsets: Vec::new(),
                reason: format!("{j} seeds exceed {k} rows"),
            }
        } else if k > RANK_ENUMERATION_MAX_CLIENTS {
            RankCheck::Skipped
        } else {
            let singular: Vec<Vec<usize>> = combinations(k, j)
                .into_iter()
                .filter(|subset| {
                    let m: Vec<Vec<i64>> = subset.iter().map(|&r| self.rows[r].clone()).collect();
                    integer_determinant(&m) == 0
                })
                .collect();
            if singular.is_empty() {
                RankCheck::Passed
            } else {
                RankCheck::Failed {
                    singular_subsets: singular,
                    reason: "singular row subset".into(),
                }
            }
        };
        GeneratorReport {
            column_sums,
            column_sums_zero,
            rank,
        }
    }

    /// Errors unless both conditions hold (rank check skipped above
    /// [`RANK_ENUMERATION_MAX_CLIENTS`]).
    pub fn validate(&self) -> Result<()> {
        let report = self.check();
        if !report.column_sums_zero {
            return Err(Error::Argument(format!(
                "generator columns do not sum to zero: {:?}",
                report.column_sums
            )));
        }
        if let RankCheck::Failed {
            singular_subsets,
            reason,
        } = &report.rank
        {
            return Err(Error::Argument(format!(
                "generator rank condition fails ({reason}); singular row subsets: {singular_subsets:?}"
            )));
        }
        Ok(())
    }
}

/// Outcome of the full-rank-subset check.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "kebab-case")]
pub enum RankCheck {
    Passed,
    Failed {
        singular_subsets: Vec<Vec<usize>>,
        reason: String,
    },
    Skipped,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeneratorReport {
    pub column_sums: Vec<i64>,
    pub column_sums_zero: bool,
    pub rank: RankCheck,
}

impl GeneratorReport {
    pub fn passed(&self) -> bool {
        self.column_sums_zero && !matches!(self.rank, RankCheck::Failed { .. })
    }
}

/// All `r`-element subsets of `0..n` in lexicographic order.
pub(crate) fn combinations(n: usize, r: usize) -> Vec<Vec<usize>> {
    fn go(start: usize, n: usize, r: usize, cur: &mut Vec<usize>, out: &mut Vec<Vec<usize>>) {
        if cur.len() == r {
            out.push(cur.clone());
            return;
        }
        for i in start..n {
            if n - i < r - cur.len() {
                break;
            }
            cur.push(i);
            go(i + 1, n, r, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    go(0, n, r, &mut Vec::with_capacity(r), &mut out);
    out
}

/// Exact determinant of a square integer matrix (fraction-free Bareiss).
pub fn integer_determinant(m: &[Vec<i64>]) -> i128 {
    let n = m.len();
    if n == 0 {
        return 1;
    }
    let mut a: Vec<Vec<i128>> = m
        .iter()
        .map(|r| r.iter().map(|&x| i128::from(x)).collect())
        .collect();
    let mut sign = 1i128;
    let mut prev = 1i128;
    for k in 0..n - 1 {
        if a[k][k] == 0 {
            match (k + 1..n).find(|&i| a[i][k] != 0) {
                Some(i) => {
                    a.swap(k, i);
                    sign = -sign;
                }
                None => return 0,
            }
        }
        for i in k + 1..n {
            for j in k + 1..n {
                a[i][j] = (a[i][j] * a[k][k] - a[i][k] * a[k][j]) / prev;
            }
        }
        prev = a[k][k];
    }
    sign * a[n - 1][n - 1]
}

/// Keys for all clients together with the generator and seed that produced
/// them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SecretKeyBundle {
    pub generator: GeneratorMatrix,
    pub dim: usize,
    pub seed: u64,
    /// `keys[k][d]`.
    pub keys: Vec<Vec<TorusScalar>>,
}

impl SecretKeyBundle {
    pub fn clients(&self) -> usize {
        self.keys.len()
    }

    pub fn key(&self, k: usize) -> &[TorusScalar] {
        &self.keys[k]
    }

    /// `max_d |[sum_k S_k[d]] mod 1|`.
    pub fn zero_sum_residual(&self) -> f64 {
        (0..self.dim)
            .map(|d| wrap(self.keys.iter().map(|k| k[d].value()).sum::<f64>()).abs())
            .fold(0.0, f64::max)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

/// Draws the seed vectors `N_j ~ Unif([-1/2, 1/2)^D)` and forms the keys.
///
/// Seed entry `N_j[d]` is read from position `d` of the `j`-th counter-based
/// stream, so the bundle is the same however the work is split.
pub fn sample_keys(generator: &GeneratorMatrix, dim: usize, seed: u64) -> Result<SecretKeyBundle> {
    if dim == 0 {
        return Err(Error::Argument("key dimension must be at least 1".into()));
    }
    generator.validate()?;
    let seeds: Vec<Vec<f64>> = (0..generator.seeds())
        .map(|j| {
            let mut rng = stream_at(seed, Stream::KeySeeds, &[j as u64], 0);
            (0..dim).map(|_| rng.random::<f64>() - 0.5).collect()
        })
        .collect();
    let keys = generator
        .rows()
        .iter()
        .map(|row| {
            (0..dim)
                .map(|d| {
                    let combo: f64 = row.iter().zip(&seeds).map(|(&g, n)| g as f64 * n[d]).sum();
                    TorusScalar::from_reduced(wrap(combo))
                })
                .collect()
        })
        .collect();
    Ok(SecretKeyBundle {
        generator: generator.clone(),
        dim,
        seed,
        keys,
    })
}

/// Tolerance used by [`verify_bundle`] for the modulo-zero-sum residual.
pub const ZERO_SUM_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BundleReport {
    pub shape_ok: bool,
    pub zero_sum_ok: bool,
    pub zero_sum_residual: f64,
    pub generator: GeneratorReport,
}

impl BundleReport {
    pub fn passed(&self) -> bool {
        self.shape_ok && self.zero_sum_ok && self.generator.passed()
    }
}

/// Checks a bundle without failing: every violated invariant is reported.
pub fn verify_bundle(bundle: &SecretKeyBundle) -> BundleReport {
    let shape_ok = bundle.keys.len() == bundle.generator.clients()
        && bundle.keys.iter().all(|k| k.len() == bundle.dim);
    let zero_sum_residual = if shape_ok {
        bundle.zero_sum_residual()
    } else {
        f64::NAN
    };
    BundleReport {
        shape_ok,
        zero_sum_ok: zero_sum_residual <= ZERO_SUM_TOLERANCE,
        zero_sum_residual,
        generator: bundle.generator.check(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn default_generator_k3() {
        let g = GeneratorMatrix::default_for(3).unwrap();
        assert_eq!(g.rows(), &[vec![1, 0], vec![0, 1], vec![-1, -1]]);
        assert!(g.check().passed());
    }

    #[test]
    fn default_generator_k2_negates() {
        let g = GeneratorMatrix::default_for(2).unwrap();
        assert_eq!(g.rows(), &[vec![1], vec![-1]]);
    }

    #[test]
    fn default_generator_rejects_single_client() {
        assert!(matches!(
            GeneratorMatrix::default_for(1),
            Err(Error::Argument(_))
        ));
    }

    #[test]
    fn every_k_minus_1_rows_of_k4_are_unimodular() {
        let g = GeneratorMatrix::default_for(4).unwrap();
        let subsets = combinations(4, 3);
        assert_eq!(subsets.len(), 4);
        for s in subsets {
            let m: Vec<Vec<i64>> = s.iter().map(|&r| g.rows()[r].clone()).collect();
            assert_eq!(integer_determinant(&m).abs(), 1, "rows {s:?}");
        }
    }

    #[test]
    fn only_full_sum_cancels_for_small_k() {
        // Integer row combinations with coefficients in -2..=2.
        for k in 2..=5usize {
            let g = GeneratorMatrix::default_for(k).unwrap();
            let n = 5usize.pow(k as u32);
            for idx in 0..n {
                let mut c = Vec::with_capacity(k);
                let mut t = idx;
                for _ in 0..k {
                    c.push((t % 5) as i64 - 2);
                    t /= 5;
                }
                let zero =
                    (0..g.seeds()).all(|j| (0..k).map(|r| c[r] * g.entry(r, j)).sum::<i64>() == 0);
                let multiple_of_ones = c.iter().all(|&x| x == c[0]);
                assert_eq!(zero, multiple_of_ones, "k={k} c={c:?}");
            }
        }
    }

    #[test]
    fn determinant_matches_hand_values() {
        assert_eq!(integer_determinant(&[vec![2, 1], vec![1, 3]]), 5);
        assert_eq!(integer_determinant(&[vec![0, 1], vec![1, 0]]), -1);
        assert_eq!(
            integer_determinant(&[vec![1, 2, 3], vec![4, 5, 6], vec![7, 8, 10]]),
            -3
        );
        assert_eq!(integer_determinant(&[vec![1, 2], vec![2, 4]]), 0);
    }

    #[test]
    fn repeated_row_fails_rank_condition() {
        let g = GeneratorMatrix::from_rows(vec![
            vec![1, 0, 0],
            vec![1, 0, 0],
            vec![0, 1, 0],
            vec![-2, -1, 0],
        ])
        .unwrap();
        let report = g.check();
        assert!(report.column_sums_zero);
        assert!(matches!(report.rank, RankCheck::Failed { .. }));
        assert!(sample_keys(&g, 3, 1).is_err());

        let g = GeneratorMatrix::from_rows(vec![
            vec![1, 0, 0],
            vec![0, 1, 0],
            vec![0, 1, 0],
            vec![-1, -2, 0],
        ])
        .unwrap();
        assert!(!g.check().passed());
    }

    #[test]
    fn nonzero_column_sum_is_rejected() {
        let g = GeneratorMatrix::from_rows(vec![vec![1, 0], vec![0, 1], vec![-1, 0]]).unwrap();
        assert!(!g.check().column_sums_zero);
        assert!(matches!(sample_keys(&g, 1, 0), Err(Error::Argument(_))));
    }

    #[test]
    fn k2_and_k3_hand_examples() {
        // The combination step on fixed seed values, as sample_keys applies it.
        let combine = |g: &GeneratorMatrix, n: &[f64]| -> Vec<f64> {
            g.rows()
                .iter()
                .map(|r| wrap(r.iter().zip(n).map(|(&c, &x)| c as f64 * x).sum()))
                .collect()
        };
        let k2 = combine(&GeneratorMatrix::default_for(2).unwrap(), &[0.3]);
        assert_eq!(k2, vec![0.3, -0.3]);
        let k3 = combine(&GeneratorMatrix::default_for(3).unwrap(), &[0.4, 0.3]);
        assert!((k3[0] - 0.4).abs() < 1e-15);
        assert!((k3[1] - 0.3).abs() < 1e-15);
        assert!((k3[2] - 0.3).abs() < 1e-15);
        assert!(wrap(k3.iter().sum()).abs() < 1e-15);
    }

    #[test]
    fn verify_reports_perturbation() {
        let g = GeneratorMatrix::default_for(4).unwrap();
        let mut b = sample_keys(&g, 5, 11).unwrap();
        assert!(verify_bundle(&b).passed());
        b.keys[2][3] = b.keys[2][3] + TorusScalar::new(0.1).unwrap();
        let r = verify_bundle(&b);
        assert!(!r.zero_sum_ok);
        assert!((r.zero_sum_residual - 0.1).abs() < 1e-12);
    }

    #[test]
    fn bundle_json_round_trip() {
        let b = sample_keys(&GeneratorMatrix::default_for(3).unwrap(), 4, 5).unwrap();
        let back = SecretKeyBundle::from_json(&b.to_json().unwrap()).unwrap();
        assert_eq!(b, back);
    }

    #[test]
    fn bundle_is_deterministic() {
        let g = GeneratorMatrix::default_for(6).unwrap();
        assert_eq!(
            sample_keys(&g, 9, 42).unwrap(),
            sample_keys(&g, 9, 42).unwrap()
        );
        assert_ne!(
            sample_keys(&g, 9, 42).unwrap(),
            sample_keys(&g, 9, 43).unwrap()
        );
    }

    // Kolmogorov-Smirnov distance to Unif[-1/2, 1/2).
    fn ks_uniform(mut xs: Vec<f64>) -> f64 {
        xs.sort_by(f64::total_cmp);
        let n = xs.len() as f64;
        xs.iter()
            .enumerate()
            .map(|(i, &x)| {
                let f = x + 0.5;
                (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
            })
            .fold(0.0, f64::max)
    }

    #[test]
    fn keys_are_marginally_uniform() {
        let (k, d, bundles) = (10, 10, 10_000);
        let g = GeneratorMatrix::default_for(k).unwrap();
        let mut per_client = vec![Vec::with_capacity(d * bundles); k];
        for s in 0..bundles as u64 {
            let b = sample_keys(&g, d, s).unwrap();
            assert!(b.zero_sum_residual() <= ZERO_SUM_TOLERANCE);
            for (c, key) in b.keys.iter().enumerate() {
                per_client[c].extend(key.iter().map(|t| t.value()));
            }
        }
        // Critical value at level 1e-3: sqrt(ln(2/alpha) / (2 n)).
        let n = (d * bundles) as f64;
        let crit = ((2.0f64 / 1e-3).ln() / (2.0 * n)).sqrt();
        for (c, xs) in per_client.into_iter().enumerate() {
            let dist = ks_uniform(xs);
            assert!(dist < crit, "client {c}: KS {dist} >= {crit}");
        }
    }

    proptest! {
        #[test]
        fn zero_sum_holds(k in 2usize..16, d in 1usize..32, seed in any::<u64>()) {
            let b = sample_keys(&GeneratorMatrix::default_for(k).unwrap(), d, seed).unwrap();
            prop_assert!(b.zero_sum_residual() <= ZERO_SUM_TOLERANCE);
            prop_assert!(b.keys.iter().flatten().all(|t| (-0.5..0.5).contains(&t.value())));
        }
    }
}
