use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use p2aircomp::analytics::{write_analytics_csv, AnalyticsRow, EffectiveNoise};
use p2aircomp::harness::{
    anchor_report, run_fig1, run_fig2, run_verify, with_threads, write_output, ExperimentKind,
    ExperimentSpec, Suite, VerifyOptions, DEFAULT_SEED,
};
use p2aircomp::keys::{sample_keys, verify_bundle, GeneratorMatrix, SecretKeyBundle};
use p2aircomp::oracle::{exact_leakage, mc_mse, DiscreteScenario, KeyLaw, OracleRecord, View};
use p2aircomp::protocol::NoiseScheme;
use p2aircomp::{Error, Result};

#[derive(Parser)]
#[command(
    name = "p2aircomp",
    version,
    about = "Private over-the-air aggregation: simulation, analytics and oracles"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args, Clone, Default)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// MC draws or fading realizations per point.
    #[arg(long)]
    trials: Option<u64>,
    /// Worker threads; all cores when omitted.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Pointwise MSE curves with bounds, closed form against simulation.
    Fig1 {
        #[command(flatten)]
        common: Common,
    },
    /// MSE against leakage for every scheme, plus the anchor report.
    Fig2 {
        #[command(flatten)]
        common: Common,
        /// Where to write the JSON summary.
        #[arg(long)]
        summary: Option<PathBuf>,
    },
    /// Run verification suites and print a JSON summary.
    Verify {
        #[command(flatten)]
        common: Common,
        /// `all` or a comma-separated list of numerics, keys, protocol,
        /// analytics, oracle, mse, mutation.
        #[arg(long, default_value = "all")]
        suite: String,
    },
    /// Sample a key bundle, or check one.
    Keys {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        clients: Option<usize>,
        #[arg(long)]
        dim: Option<usize>,
        /// Verify this bundle instead of sampling.
        #[arg(long)]
        check: Option<PathBuf>,
    },
    /// Exact leakage over Z_q.
    Oracle {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 5)]
        q: u32,
        #[arg(long, default_value_t = 3)]
        clients: usize,
        #[arg(long, value_enum, default_value_t = ViewArg::Server)]
        view: ViewArg,
        /// Clients pooling their keys in the client view.
        #[arg(long, value_delimiter = ',', default_value = "0")]
        holders: Vec<usize>,
        /// Do not condition the client view on the aggregate.
        #[arg(long)]
        no_aggregate: bool,
        /// Replace the zero-sum keys by independent ones on `{0..m-1}`.
        #[arg(long)]
        independent_support: Option<u32>,
        /// Run the server and client views on q in 2..=7, K in 2..=5.
        #[arg(long)]
        grid: bool,
    },
    /// Distortion and leakage at one point, as an analytics table.
    Mse {
        #[command(flatten)]
        common: Common,
        /// Signal point, comma separated. Overrides --o.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        s: Vec<f64>,
        /// Use s = o 1.
        #[arg(long, allow_hyphen_values = true, default_value_t = 0.0)]
        o: f64,
        #[arg(long)]
        dim: Option<usize>,
        /// Effective noise; overrides --snr-db.
        #[arg(long)]
        sigma_eff: Option<f64>,
        /// P/N0 in dB.
        #[arg(long, allow_hyphen_values = true, default_value_t = 10.0)]
        snr_db: f64,
        /// Baselines to tabulate next to the modulo scheme.
        #[arg(long, value_delimiter = ',')]
        schemes: Vec<String>,
        #[arg(long, default_value_t = 0.1)]
        mask_sigma: f64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum ViewArg {
    Server,
    Client,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                Error::Argument(_) | Error::Config(_) => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}

fn load_spec(common: &Common, kind: ExperimentKind) -> Result<ExperimentSpec> {
    let mut spec = match &common.config {
        Some(p) => ExperimentSpec::from_path(p)?,
        None => ExperimentSpec::default_for(kind),
    };
    if spec.kind != kind {
        return Err(Error::Config(format!(
            "config `{}` is not a {kind:?} experiment",
            spec.name
        )));
    }
    if let Some(s) = common.seed {
        spec.master_seed = s;
    }
    if let Some(t) = common.trials {
        spec.trials = t;
    }
    if let Some(p) = &common.out {
        spec.outputs.csv = Some(p.clone());
    }
    spec.validate()?;
    Ok(spec)
}

fn print_json(path: Option<&Path>, value: &serde_json::Value) -> Result<()> {
    write_output(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        writeln!(w).map_err(|e| Error::io("<json>", e))
    })
}

fn summary_target(csv: Option<&Path>) -> impl Fn(&serde_json::Value) -> Result<()> + '_ {
    move |v| {
        if csv.is_some() {
            print_json(None, v)
        } else {
            eprintln!("{}", serde_json::to_string_pretty(v)?);
            Ok(())
        }
    }
}

fn reject_config(common: &Common, what: &str) -> Result<()> {
    if common.config.is_some() {
        return Err(Error::Argument(format!(
            "`{what}` does not read a config file"
        )));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<bool> {
    match cli.cmd {
        Cmd::Fig1 { common } => {
            let spec = load_spec(&common, ExperimentKind::Fig1)?;
            let table = with_threads(common.threads, || run_fig1(&spec))??;
            let csv = spec.outputs.csv.as_deref();
            write_output(csv, |w| table.write_csv(w))?;
            let bounds = table.bound_violations().len();
            let order = table.order_violations();
            let passed = bounds == 0 && order.is_empty();
            summary_target(csv)(&json!({
                "experiment": spec.name,
                "seed": spec.master_seed,
                "points": table.rows.len(),
                "trials": spec.trials,
                "mc_disagreements_3se": table.mc_disagreements(3.0).len(),
                "bound_violations": bounds,
                "order_violations_db": order,
                "top_snr_relative_spread": table.top_snr_spread(),
                "passed": passed,
            }))?;
            Ok(passed)
        }
        Cmd::Fig2 { common, summary } => {
            let spec = load_spec(&common, ExperimentKind::Fig2)?;
            let table = with_threads(common.threads, || run_fig2(&spec))??;
            let csv = spec.outputs.csv.as_deref();
            write_output(csv, |w| table.write_csv(w))?;
            let anchor = anchor_report(&table)?;
            let p2_zero = table
                .rows
                .iter()
                .zip(&table.schemes)
                .all(|(r, s)| *s != NoiseScheme::P2Modulo || r.leakage_nats == 0.0);
            let doc = json!({
                "experiment": spec.name,
                "seed": spec.master_seed,
                "realizations": spec.trials,
                "rows": table.rows.len(),
                "p2_leakage_zero": p2_zero,
                "anchor": anchor,
                "passed": p2_zero,
            });
            if let Some(d) = &anchor.discrepancy {
                eprintln!("anchor: {d}");
            }
            match summary.or(spec.outputs.json.clone()) {
                Some(p) => print_json(Some(&p), &doc)?,
                None => summary_target(csv)(&doc)?,
            }
            Ok(p2_zero)
        }
        Cmd::Verify { common, suite } => {
            reject_config(&common, "verify")?;
            let suites = Suite::parse_selector(&suite)?;
            let mut opts = VerifyOptions::default();
            if let Some(s) = common.seed {
                opts.seed = s;
            }
            if let Some(t) = common.trials {
                opts.mc_trials = t;
            }
            let report = with_threads(common.threads, || run_verify(&suites, opts))??;
            print_json(common.out.as_deref(), &serde_json::to_value(&report)?)?;
            if common.out.is_some() {
                for s in &report.suites {
                    println!(
                        "{}: {}",
                        s.suite.name(),
                        if s.passed { "pass" } else { "FAIL" }
                    );
                }
            }
            Ok(report.passed)
        }
        Cmd::Keys {
            common,
            clients,
            dim,
            check,
        } => {
            if let Some(path) = check {
                let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
                let bundle = SecretKeyBundle::from_json(&text)?;
                let report = verify_bundle(&bundle);
                print_json(common.out.as_deref(), &serde_json::to_value(&report)?)?;
                return Ok(report.passed());
            }
            let base = match &common.config {
                Some(p) => ExperimentSpec::from_path(p)?.base,
                None => Default::default(),
            };
            let g = GeneratorMatrix::default_for(clients.unwrap_or(base.clients))?;
            let bundle = sample_keys(
                &g,
                dim.unwrap_or(base.dim),
                common.seed.unwrap_or(DEFAULT_SEED),
            )?;
            let text = bundle.to_json()?;
            write_output(common.out.as_deref(), |w| {
                writeln!(w, "{text}").map_err(|e| Error::io("<keys>", e))
            })?;
            Ok(verify_bundle(&bundle).passed())
        }
        Cmd::Oracle {
            common,
            q,
            clients,
            view,
            holders,
            no_aggregate,
            independent_support,
            grid,
        } => {
            reject_config(&common, "oracle")?;
            let mut scenarios = Vec::new();
            if grid {
                for q in 2..=7 {
                    for k in 2..=5 {
                        scenarios.push(DiscreteScenario::uniform(q, k, &[0, 1], View::Server)?);
                        let v = View::Clients {
                            holders: vec![0],
                            aggregate: k >= 3,
                        };
                        scenarios.push(DiscreteScenario::uniform(q, k, &[0, 1], v)?);
                    }
                }
            } else {
                let v = match view {
                    ViewArg::Server => View::Server,
                    ViewArg::Client => View::Clients {
                        holders,
                        aggregate: !no_aggregate,
                    },
                };
                let mut sc = DiscreteScenario::uniform(q, clients, &[0, 1], v)?;
                if let Some(m) = independent_support {
                    sc = sc.with_keys(KeyLaw::Independent { support: m });
                    sc.validate()?;
                }
                scenarios.push(sc);
            }
            let records = with_threads(common.threads, || {
                scenarios
                    .iter()
                    .map(|sc| exact_leakage(sc).map(|mi| OracleRecord::new(sc, mi)))
                    .collect::<Result<Vec<_>>>()
            })??;
            let doc = if records.len() == 1 {
                serde_json::to_value(&records[0])?
            } else {
                serde_json::to_value(&records)?
            };
            print_json(common.out.as_deref(), &doc)?;
            Ok(true)
        }
        Cmd::Mse {
            common,
            s,
            o,
            dim,
            sigma_eff,
            snr_db,
            schemes,
            mask_sigma,
        } => {
            let base = match &common.config {
                Some(p) => ExperimentSpec::from_path(p)?.base,
                None => Default::default(),
            };
            let dim = dim.unwrap_or(base.dim);
            let s = if s.is_empty() { vec![o; dim] } else { s };
            let sigma = match sigma_eff {
                Some(v) => EffectiveNoise::new(v)?,
                None => EffectiveNoise::from_snr_db(snr_db)?,
            }
            .sigma();
            let trials = common.trials.unwrap_or(1_000_000);
            let seed = common.seed.unwrap_or(DEFAULT_SEED);
            let mc = with_threads(common.threads, || mc_mse(&s, sigma, trials, seed))??;
            let mut rows = vec![AnalyticsRow::p2(&s, sigma, Some(mc))?];
            for name in &schemes {
                let scheme: NoiseScheme = name.parse()?;
                if !scheme.is_baseline() {
                    continue;
                }
                rows.push(AnalyticsRow::baseline(
                    scheme.with_sigma(mask_sigma),
                    base.clients,
                    s.len(),
                    base.message_var.sqrt(),
                    sigma,
                )?);
            }
            write_output(common.out.as_deref(), |w| write_analytics_csv(&rows, w))?;
            Ok(true)
        }
    }
}
