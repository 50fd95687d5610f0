//! Acceptance criteria 1-7. Runs as a plain binary and prints one line per
//! criterion; exits nonzero if any criterion fails.

use std::process::ExitCode;
use std::time::Instant;

use rand::Rng;

use p2aircomp::analytics::{
    delta_bounds, delta_derivative, delta_pointwise, wrap_excess, Truncation,
};
use p2aircomp::harness::{
    anchor_report, ordering_checks, realization_seed, run_fig1, run_fig2, with_threads,
    ExperimentSpec, MessageVariant, MseEstimator, SweepValues, PINNED_TWO_CLIENT_MI,
};
use p2aircomp::keys::GeneratorMatrix;
use p2aircomp::oracle::{
    exact_client_leakage, exact_server_leakage, keys_jointly_uniform, DiscreteScenario, KeyLaw,
    View,
};
use p2aircomp::protocol::{run_round, MessageModel, NoiseScheme, ProtocolConfig};
use p2aircomp::rng::{stream, Stream};

const SEED: u64 = 20_240_601;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        passed,
        detail: detail.into(),
    }
}

fn closed_form_matches_simulation() -> Outcome {
    let spec = ExperimentSpec::fig1_default();
    let table = match run_fig1(&spec) {
        Ok(t) => t,
        Err(e) => return outcome(false, format!("fig1 failed: {e}")),
    };
    let bad = table.mc_disagreements(3.0);
    let worst = table
        .rows
        .iter()
        .map(|r| ((r.mse_closed - r.mse_mc) / r.stderr).abs())
        .fold(0.0, f64::max);
    let bounds = table.bound_violations().len();
    outcome(
        bad.is_empty() && bounds == 0 && table.rows.len() == 205,
        format!(
            "{} points x {} trials, {} beyond 3 stderr (max |z| {worst:.2}), {bounds} outside bounds",
            table.rows.len(),
            spec.trials,
            bad.len()
        ),
    )
}

fn bounds_and_monotonicity() -> Outcome {
    let a = 1.0 / 3.0;
    let mut rng = stream(SEED, Stream::Round, &[2]);
    let mut sandwich = 0;
    for _ in 0..1000 {
        let sigma = rng.random_range(0.02..2.0);
        let s: Vec<f64> = (0..10).map(|_| rng.random_range(-a..=a)).collect();
        let v = delta_pointwise(&s, sigma, Truncation::Auto).unwrap().value;
        let b = delta_bounds(a, sigma, 10).unwrap();
        if !(b.lower <= v + 1e-12 && v <= b.upper + 1e-12) {
            sandwich += 1;
        }
    }
    let grid: Vec<f64> = (0..200).map(|i| i as f64 * 0.45 / 199.0).collect();
    let d = |s: f64, sigma: f64| {
        delta_pointwise(&[s], sigma, Truncation::Auto)
            .unwrap()
            .value
    };
    let mut mono = 0;
    for sigma in [0.1, 0.25, 0.5, 1.0, 2.0] {
        mono += grid
            .windows(2)
            .filter(|w| d(w[0], sigma) >= d(w[1], sigma))
            .count();
    }
    // At small sigma the increments sit below one ulp of delta; compare the
    // wrap excess delta - sigma^2 instead.
    for sigma in [0.03, 0.05] {
        let ex = |s: f64| wrap_excess(s, sigma, Truncation::Auto).unwrap().value;
        mono += grid.windows(2).filter(|w| ex(w[0]) >= ex(w[1])).count();
    }
    let mut asym = 0.0f64;
    for sigma in [0.02, 0.1, 0.5, 2.0] {
        for &s in &grid {
            asym = asym.max((d(s, sigma) - d(-s, sigma)).abs());
        }
    }
    let mut deriv = 0.0f64;
    for sigma in [0.05, 0.1, 0.2, 0.5, 1.0] {
        for i in 1..=45 {
            for s in [i as f64 * 0.01, -(i as f64) * 0.01] {
                let exact = delta_derivative(s, sigma).unwrap().value;
                let f = |x: f64| wrap_excess(x, sigma, Truncation::Fixed(40)).unwrap().value;
                let c = |h: f64| (f(s + h) - f(s - h)) / (2.0 * h);
                let fd = (4.0 * c(5e-5) - c(1e-4)) / 3.0;
                deriv = deriv.max(((fd - exact) / exact).abs());
            }
        }
    }
    outcome(
        sandwich == 0 && mono == 0 && asym <= 1e-12 && deriv <= 1e-6,
        format!(
            "sandwich violations {sandwich}/1000, monotonicity violations {mono}, \
             max |delta(s)-delta(-s)| {asym:.1e}, derivative max rel err {deriv:.1e}"
        ),
    )
}

fn exact_perfect_privacy() -> Outcome {
    let mut server = 0.0f64;
    let mut client = 0.0f64;
    let mut k2 = Vec::new();
    let mut uniform = true;
    for q in 2..=7u32 {
        for k in 2..=5usize {
            let sc = DiscreteScenario::uniform(q, k, &[0, 1], View::Server).unwrap();
            server = server.max(exact_server_leakage(&sc).unwrap().value_nats);
            let aggregate = k >= 3;
            let view = View::Clients {
                holders: vec![0],
                aggregate,
            };
            let mi = exact_client_leakage(&DiscreteScenario::uniform(q, k, &[0, 1], view).unwrap())
                .unwrap()
                .value_nats;
            if aggregate {
                client = client.max(mi);
            } else {
                k2.push(mi);
            }
            let g = GeneratorMatrix::default_for(k).unwrap();
            for skip in 0..k {
                let subset: Vec<usize> = (0..k).filter(|&i| i != skip).collect();
                uniform &= keys_jointly_uniform(&g, q, &subset).unwrap();
            }
        }
    }
    let k2_min = k2.iter().copied().fold(f64::INFINITY, f64::min);
    let pinned = k2.iter().all(|v| (v - PINNED_TWO_CLIENT_MI).abs() < 1e-12);
    let leaky = DiscreteScenario::uniform(5, 3, &[0, 1], View::Server)
        .unwrap()
        .with_keys(KeyLaw::Independent { support: 3 });
    let neg = exact_server_leakage(&leaky).unwrap().value_nats;
    outcome(
        server <= 1e-12 && client <= 1e-12 && k2_min > 1e-3 && pinned && neg > 0.0 && uniform,
        format!(
            "server max {server:.1e}, client K>=3 max {client:.1e}, client K=2 min {k2_min:.6} \
             (pinned ln 2: {pinned}), independent-key control {neg:.4}, K-1 keys uniform: {uniform}"
        ),
    )
}

fn fig2_ordering() -> Outcome {
    let spec = ExperimentSpec::fig2_default();
    let table = run_fig2(&spec).unwrap();
    let sigmas = [0.05, 0.1, 0.2, 0.4];
    let p2_zero = table
        .rows
        .iter()
        .zip(&table.schemes)
        .all(|(r, s)| *s != NoiseScheme::P2Modulo || r.leakage_nats == 0.0);
    let mut failed = Vec::new();
    let mut total = 0;
    for variant in [MessageVariant::Raw, MessageVariant::Truncated] {
        for c in ordering_checks(&table, &sigmas, variant, MseEstimator::Conditional, 3.0).unwrap()
        {
            total += 1;
            if !c.passed {
                failed.push(format!("{} at {} ({})", c.what, c.sigma, variant));
            }
        }
    }
    // The per-round squared error has no finite mean for the additive
    // schemes, so its paired gaps are reported but not judged.
    let sampled = ordering_checks(
        &table,
        &sigmas,
        MessageVariant::Raw,
        MseEstimator::Sampled,
        3.0,
    )
    .unwrap();
    let sampled_mse: Vec<_> = sampled
        .iter()
        .filter(|c| c.what.starts_with("mse"))
        .collect();
    let sampled_ok = sampled_mse.iter().filter(|c| c.passed).count();
    outcome(
        failed.is_empty() && p2_zero,
        format!(
            "{}/{total} orderings hold on conditional MSE over {} realizations, p2 leakage zero: {p2_zero}; \
             sampled-MSE gaps beyond 3 stderr: {sampled_ok}/{}{}",
            total - failed.len(),
            spec.trials,
            sampled_mse.len(),
            if failed.is_empty() { String::new() } else { format!("; failed: {}", failed.join(", ")) }
        ),
    )
}

fn fig2_anchor() -> Outcome {
    let mut spec = ExperimentSpec::fig2_default();
    spec.sweep[0].values = SweepValues::Names(vec!["p2-modulo".into()]);
    let table = run_fig2(&spec).unwrap();
    let rep = anchor_report(&table).unwrap();
    let values: Vec<String> = rep
        .variants
        .iter()
        .map(|v| {
            format!(
                "{} {:.3} (conditional {:.3})",
                v.message_variant, v.log10_mse, v.log10_mse_conditional
            )
        })
        .collect();
    let window = format!("[{}, {}]", rep.window.0, rep.window.1);
    if rep.all_in_window() {
        return outcome(
            true,
            format!("log10 per-dim MSE {} inside {window}", values.join(", ")),
        );
    }
    // The criterion accepts a documented discrepancy in place of a hit.
    let documented = rep.discrepancy.as_deref().is_some_and(|d| {
        rep.variants
            .iter()
            .all(|v| d.contains(&format!("{:.3}", v.log10_mse)))
    });
    outcome(
        documented,
        format!(
            "window {window} MISSED: log10 per-dim MSE {}; accepted only through the \
             documented-discrepancy clause (documented in report: {documented})",
            values.join(", ")
        ),
    )
}

fn protocol_exactness() -> Outcome {
    let mut worst = 0.0f64;
    let mut over_budget = 0;
    let mut realized_over = 0;
    let mut rounds = 0;
    for k in 2..=12usize {
        for dim in [1usize, 10, 100] {
            let mut cfg = ProtocolConfig::reference(NoiseScheme::P2Modulo, false);
            cfg.clients = k;
            cfg.dim = dim;
            cfg.noise_var = 0.0;
            cfg.half_width = 0.49;
            cfg.messages = MessageModel::UniformBox;
            let mut realized = vec![0.0; k];
            let mut realized_sq = vec![0.0; k];
            let n = 200;
            for r in 0..n {
                let res =
                    run_round(&cfg, realization_seed(SEED + (1000 * k + dim) as u64, r)).unwrap();
                rounds += 1;
                if !res.within_budget() {
                    over_budget += 1;
                }
                for (h, w) in res.w_hat.iter().zip(&res.w_true) {
                    worst = worst.max((h - w).abs());
                }
                for (c, p) in res.tx_powers.iter().enumerate() {
                    // Normalize by the per-round expected energy so rounds with
                    // different fading are comparable.
                    let x = p / res.expected_tx_powers[c];
                    realized[c] += x;
                    realized_sq[c] += x * x;
                }
            }
            for c in 0..k {
                let m = realized[c] / n as f64;
                let var = realized_sq[c] / n as f64 - m * m;
                let se = (var / n as f64).sqrt();
                if m > 1.0 + 3.0 * se {
                    realized_over += 1;
                }
            }
        }
    }
    outcome(
        worst <= 1e-10 && over_budget == 0 && realized_over == 0,
        format!(
            "{rounds} noise-free rounds, max |W_hat - W| {worst:.1e}, expected-power budget violations \
             {over_budget}, clients whose mean realized power exceeds the expected one by 3 stderr {realized_over}"
        ),
    )
}

fn determinism() -> Outcome {
    let mut fig1 = ExperimentSpec::fig1_default();
    fig1.trials = 100_000;
    let fig2 = ExperimentSpec::fig2_default();
    let render = |threads: usize| {
        with_threads(Some(threads), || {
            let mut a = Vec::new();
            run_fig1(&fig1).unwrap().write_csv(&mut a).unwrap();
            let mut b = Vec::new();
            run_fig2(&fig2).unwrap().write_csv(&mut b).unwrap();
            (a, b)
        })
        .unwrap()
    };
    let one = render(1);
    let four = render(4);
    let sixteen = render(16);
    let same = one == four && one == sixteen;
    outcome(
        same,
        format!(
            "fig1 ({} bytes) and fig2 ({} bytes) CSV identical at 1, 4, 16 threads: {same}",
            one.0.len(),
            one.1.len()
        ),
    )
}

fn main() -> ExitCode {
    let criteria: [(&str, fn() -> Outcome); 7] = [
        ("closed form vs simulation", closed_form_matches_simulation),
        (
            "bounds, monotonicity, symmetry, derivative",
            bounds_and_monotonicity,
        ),
        ("exact perfect privacy", exact_perfect_privacy),
        ("fig2 ordering", fig2_ordering),
        ("fig2 anchor", fig2_anchor),
        ("protocol exactness", protocol_exactness),
        ("determinism", determinism),
    ];
    let filter: Vec<String> = std::env::args()
        .skip(1)
        .filter(|a| !a.starts_with('-'))
        .collect();
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let n = i + 1;
        if !filter.is_empty()
            && !filter
                .iter()
                .any(|f| name.contains(f.as_str()) || *f == n.to_string())
        {
            continue;
        }
        let start = Instant::now();
        let o = run();
        if !o.passed {
            failures += 1;
        }
        println!(
            "criterion {n} [{}] {name}: {} ({:.1}s)",
            if o.passed { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    if failures == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
