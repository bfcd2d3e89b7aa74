use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context, Result};
use clap::{Parser, Subcommand};

use hybrid_sched::baselines::{baseline_run, BaselinePolicy};
use hybrid_sched::dual::{build_dual, certify};
use hybrid_sched::format::{parse_instance, parse_rational, serialize_instance};
use hybrid_sched::metrics::run_cost;
use hybrid_sched::oracle::{brute_force_opt, OracleLimits};
use hybrid_sched::report::{self, Comparison, Row};
use hybrid_sched::workload::{generate, GeneratorConfig, Model, WeightDist};
use hybrid_sched::{Instance, Rational, Scalar};

#[derive(Parser)]
#[command(name = "hybrid-sched", version, about = "Packet scheduling on two-tier reconfigurable networks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one policy and write the event log and per-packet CSV.
    Simulate {
        #[arg(long)]
        instance: PathBuf,
        /// alg, fifo-priority, random-dispatch or least-loaded
        #[arg(long, default_value = "alg")]
        policy: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out_dir: PathBuf,
    },
    /// Run the algorithm, fit the dual and check every bound.
    Verify {
        #[arg(long)]
        instance: PathBuf,
        /// Rational `num/den` or integer.
        #[arg(long)]
        epsilon: String,
        /// Also run the full constraint sweeps and the weak-duality witness.
        #[arg(long)]
        all_lemmas: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Exhaustive optimum of a tiny unit-delay instance.
    Oracle {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long, default_value_t = 8)]
        max_packets: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Write a synthetic instance file.
    Generate {
        /// uniform, zipf-skewed or bursty-onoff
        #[arg(long, default_value = "uniform")]
        model: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 2)]
        sources: usize,
        #[arg(long, default_value_t = 2)]
        destinations: usize,
        #[arg(long, default_value_t = 1)]
        transmitters_per_source: usize,
        #[arg(long, default_value_t = 1)]
        receivers_per_dest: usize,
        #[arg(long, default_value_t = 10)]
        packets: usize,
        #[arg(long, default_value_t = 1.0)]
        edge_prob: f64,
        #[arg(long, default_value_t = 0.5)]
        link_prob: f64,
        #[arg(long, default_value_t = 1)]
        max_edge_delay: u64,
        #[arg(long, default_value_t = 1)]
        max_attach_delay: u64,
        #[arg(long, default_value_t = 6)]
        max_link_delay: u64,
        #[arg(long, default_value_t = 10)]
        release_span: u64,
        /// Weights are drawn as integers in 1..=max-weight.
        #[arg(long, default_value_t = 4)]
        max_weight: u64,
        /// Sizes above 1 are split into unit packets.
        #[arg(long, default_value_t = 1)]
        max_size: u64,
        #[arg(long, default_value_t = 1.0)]
        skew: f64,
        #[arg(long, default_value_t = 3)]
        burst_on: u64,
        #[arg(long, default_value_t = 3)]
        burst_off: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// One CSV row comparing the algorithm, its dual bound, the oracle and the baselines.
    Compare {
        #[arg(long)]
        instance: PathBuf,
        #[arg(long)]
        epsilon: String,
        /// Seed for random-dispatch.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        max_packets: usize,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Bad input: exits with status 2.
#[derive(Debug)]
struct InputError(String);

impl std::fmt::Display for InputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

fn input_err(msg: impl Into<String>) -> anyhow::Error {
    InputError(msg.into()).into()
}

fn load(path: &Path) -> Result<Instance> {
    let text = fs::read_to_string(path)
        .map_err(|e| input_err(format!("{}: {e}", path.display())))?;
    parse_instance(&text).map_err(|e| input_err(format!("{}: {e}", path.display())))
}

fn epsilon(s: &str) -> Result<Rational> {
    let e = parse_rational(s).map_err(|m| input_err(format!("--epsilon: {m}")))?;
    if !Scalar::is_positive(&e) {
        return Err(input_err("--epsilon must be positive"));
    }
    Ok(e)
}

fn csv_bytes<H: AsRef<[u8]>>(header: &[H], rows: &[Row]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| anyhow!("{e}"))
}

fn emit(out: Option<&Path>, bytes: &[u8]) -> Result<()> {
    match out {
        Some(p) => fs::write(p, bytes).with_context(|| format!("writing {}", p.display())),
        None => Ok(io::stdout().write_all(bytes)?),
    }
}

fn simulate(instance: &Path, policy: &str, seed: u64, out_dir: &Path) -> Result<bool> {
    let policy = BaselinePolicy::from_name(policy, seed).map_err(|e| input_err(e.to_string()))?;
    let inst = load(instance)?;
    let log = baseline_run(&inst, policy)?;
    fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let runlog = csv_bytes(&report::RUNLOG_HEADER, &report::runlog_rows(&log))?;
    fs::write(out_dir.join("runlog.csv"), runlog)?;
    let packets = csv_bytes(&report::PACKET_HEADER, &report::packet_rows(&log)?)?;
    fs::write(out_dir.join("packets.csv"), packets)?;
    println!("policy {policy} cost {}", run_cost(&log)?.exact_string());
    Ok(true)
}

fn verify(instance: &Path, eps: &str, all_lemmas: bool, out: Option<&Path>) -> Result<bool> {
    let eps = epsilon(eps)?;
    let inst = load(instance)?;
    let log = baseline_run(&inst, BaselinePolicy::Alg)?;
    let cert = certify(&log, eps, all_lemmas)?;
    emit(out, &csv_bytes(&report::CERT_HEADER, &report::certification_rows(&cert))?)?;
    for r in cert.rows.iter().filter(|r| !r.ok()) {
        eprintln!("check {} failed: {} violations", r.check, r.violations);
    }
    Ok(cert.all_ok())
}

fn oracle(instance: &Path, max_packets: usize, out: Option<&Path>) -> Result<bool> {
    let inst = load(instance)?;
    let res = brute_force_opt(&inst, OracleLimits { max_packets })?;
    emit(out, &csv_bytes(&report::ORACLE_HEADER, &report::oracle_rows(&res))?)?;
    Ok(true)
}

fn compare(instance: &Path, eps: &str, seed: u64, max_packets: usize, out: Option<&Path>) -> Result<bool> {
    let eps = epsilon(eps)?;
    let inst = load(instance)?;
    let alg = baseline_run(&inst, BaselinePolicy::Alg)?;
    let dual = build_dual(&alg, eps.clone())?;
    let oracle_cost = brute_force_opt(&inst, OracleLimits { max_packets })
        .ok()
        .map(|r| r.cost);
    let mut baselines = Vec::new();
    for policy in [
        BaselinePolicy::FifoPriority,
        BaselinePolicy::RandomDispatch { seed },
        BaselinePolicy::LeastLoaded,
    ] {
        let log = baseline_run(&inst, policy)?;
        baselines.push((policy.name().to_string(), run_cost(&log)?));
    }
    let name = instance
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let c = Comparison {
        instance: name,
        epsilon: eps,
        alg_cost: run_cost(&alg)?,
        dual_lower_bound: dual.lower_bound(),
        dual_objective: dual.objective,
        oracle_cost,
        baselines,
    };
    emit(out, &csv_bytes(&c.header(), &[c.row()])?)?;
    Ok(true)
}

fn execute(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::Simulate {
            instance,
            policy,
            seed,
            out_dir,
        } => simulate(&instance, &policy, seed, &out_dir),
        Command::Verify {
            instance,
            epsilon,
            all_lemmas,
            out,
        } => verify(&instance, &epsilon, all_lemmas, out.as_deref()),
        Command::Oracle {
            instance,
            max_packets,
            out,
        } => oracle(&instance, max_packets, out.as_deref()),
        Command::Generate {
            model,
            seed,
            sources,
            destinations,
            transmitters_per_source,
            receivers_per_dest,
            packets,
            edge_prob,
            link_prob,
            max_edge_delay,
            max_attach_delay,
            max_link_delay,
            release_span,
            max_weight,
            max_size,
            skew,
            burst_on,
            burst_off,
            out,
        } => {
            let model: Model = model.parse().map_err(|e: hybrid_sched::workload::GenerateError| input_err(e.to_string()))?;
            let config = GeneratorConfig {
                model,
                sources,
                transmitters_per_source,
                receivers_per_dest,
                destinations,
                packets,
                edge_prob,
                link_prob,
                edge_delay: (1, max_edge_delay),
                attach_delay: (0, max_attach_delay),
                link_delay: (0, max_link_delay),
                release_span,
                weights: WeightDist::Integer { max: max_weight },
                max_size,
                skew,
                burst_on,
                burst_off,
                seed,
            };
            let inst = generate(&config).map_err(|e| input_err(e.to_string()))?;
            fs::write(&out, serialize_instance(&inst))
                .with_context(|| format!("writing {}", out.display()))?;
            Ok(true)
        }
        Command::Compare {
            instance,
            epsilon,
            seed,
            max_packets,
            out,
        } => compare(&instance, &epsilon, seed, max_packets, out.as_deref()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<InputError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::from(1)
            }
        }
    }
}

