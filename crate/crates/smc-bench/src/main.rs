//! `smcbench`: benchmark CLI for the parallel SMC toolkit.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context};
use clap::{Args, Parser, Subcommand};

use smc_bench::config::{parse_f64_list, parse_usize_list, FileConfig};
use smc_bench::experiments::parse_redistribute;
use smc_bench::{
    bench_multisensor, bench_redistribute, bench_sort, bench_worst_case, compare_mh, emit_csv,
    summarise, summary_to_csv, BenchCommon, BenchModel, SortAlgo, VsMhOptions,
};
use smc_core::kernels::LocalSortAlgo;
use smc_core::resample::RedistributeAlgo;

#[derive(Parser)]
#[command(
    name = "smcbench",
    about = "Benchmarks for parallel sequential Monte Carlo: sorting kernels, \
             redistribute variants, particle filters, SMC samplers and the \
             Metropolis-Hastings comparison",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
struct CommonFlags {
    /// Total population / key count N; must be a power of two.
    #[arg(long)]
    n: Option<u64>,
    /// Comma-separated worker counts, e.g. "1,2,4,8".
    #[arg(long)]
    p: Option<String>,
    /// Iterations per run (T).
    #[arg(long)]
    t: Option<usize>,
    /// Timing repetitions per cell.
    #[arg(long)]
    reps: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Records CSV path; a "<path>.summary.csv" companion is written too.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Optional JSON file mirroring these flags (flags win).
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sorting kernels: parallel nearly sort vs bitonic sort (NS, BS, BS+MS).
    Sort {
        #[command(flatten)]
        common: CommonFlags,
        /// Comma-separated algorithms from {NS, BS, BS+MS}.
        #[arg(long)]
        algo: Option<String>,
    },
    /// Redistribute variants (CR, BR, NR) on identical inputs.
    Redistribute {
        #[command(flatten)]
        common: CommonFlags,
        /// Comma-separated algorithms from {CR, BR, NR}.
        #[arg(long)]
        algo: Option<String>,
        /// Rank-0 scalar budget for CR; runs over budget become missing points.
        #[arg(long)]
        cr_limit: Option<u64>,
        /// Local sort inside BR: "ms" (mergesort) or "bs" (serial bitonic).
        #[arg(long)]
        br_local: Option<String>,
    },
    /// Particle filter on the stochastic volatility model.
    PfEcon {
        #[command(flatten)]
        common: CommonFlags,
        #[arg(long)]
        algo: Option<String>,
        /// Force resampling every iteration (threshold N* = N).
        #[arg(long)]
        worst_case: bool,
    },
    /// Particle filter on bearing-only tracking.
    PfBearing {
        #[command(flatten)]
        common: CommonFlags,
        #[arg(long)]
        algo: Option<String>,
        #[arg(long)]
        worst_case: bool,
        /// Sensor count D.
        #[arg(long)]
        d: Option<String>,
    },
    /// SMC sampler on the Student-t target.
    Smcs {
        #[command(flatten)]
        common: CommonFlags,
        #[arg(long)]
        algo: Option<String>,
        #[arg(long)]
        worst_case: bool,
        /// Degrees of freedom of the target.
        #[arg(long)]
        nu: Option<f64>,
        /// Location of the target.
        #[arg(long)]
        mu: Option<f64>,
        /// Random-walk scale of the forward kernel.
        #[arg(long)]
        eps: Option<f64>,
    },
    /// Bearing-only tracking with increasing sensor counts.
    Multisensor {
        #[command(flatten)]
        common: CommonFlags,
        /// Comma-separated sensor counts, e.g. "1,4,16,64".
        #[arg(long)]
        d: Option<String>,
    },
    /// SMC sampler vs Metropolis-Hastings at equal workload and equal time.
    VsMh {
        #[command(flatten)]
        common: CommonFlags,
        #[arg(long)]
        nu: Option<f64>,
        #[arg(long)]
        mu: Option<f64>,
        /// Shared random-walk scale; tuned on an MH pilot when omitted.
        #[arg(long)]
        eps: Option<f64>,
        /// Burn-in; defaults to 10% of the chain length.
        #[arg(long)]
        tau: Option<u64>,
        /// Speed-up overrides for the equal-time phase, one per P.
        #[arg(long)]
        su: Option<String>,
    },
}

struct Effective {
    common: BenchCommon,
    out: PathBuf,
    file: FileConfig,
}

fn effective(flags: &CommonFlags, default_n: u64, default_t: usize) -> anyhow::Result<Effective> {
    let file = match &flags.config {
        Some(path) => {
            FileConfig::load(path).with_context(|| format!("loading config {}", path.display()))?
        }
        None => FileConfig::default(),
    };
    let p_list = match (&flags.p, &file.p) {
        (Some(s), _) => parse_usize_list(s).map_err(anyhow::Error::msg)?,
        (None, Some(v)) => v.clone(),
        (None, None) => vec![1, 2, 4, 8],
    };
    let common = BenchCommon {
        n_total: flags.n.or(file.n).unwrap_or(default_n),
        p_list,
        t_steps: flags.t.or(file.t).unwrap_or(default_t),
        reps: flags.reps.or(file.reps).unwrap_or(20),
        seed: flags.seed.or(file.seed).unwrap_or(1234),
    };
    let out = flags
        .out
        .clone()
        .or_else(|| file.out.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("runs.csv"));
    Ok(Effective { common, out, file })
}

fn parse_sort_algos(s: &str) -> anyhow::Result<Vec<SortAlgo>> {
    s.split(',')
        .map(|v| SortAlgo::parse(v).map_err(anyhow::Error::from))
        .collect()
}

fn parse_redistribute_algos(s: &str) -> anyhow::Result<Vec<RedistributeAlgo>> {
    s.split(',')
        .map(|v| parse_redistribute(v).map_err(anyhow::Error::from))
        .collect()
}

fn parse_br_local(s: &str) -> anyhow::Result<LocalSortAlgo> {
    match s.to_ascii_lowercase().as_str() {
        "ms" | "mergesort" => Ok(LocalSortAlgo::Mergesort),
        "bs" | "bitonic" => Ok(LocalSortAlgo::Bitonic),
        other => bail!("unknown local sort {other} (expected ms or bs)"),
    }
}

fn write_outputs(records: &[smc_bench::RunRecord], out: &Path) -> anyhow::Result<()> {
    emit_csv(records, out).with_context(|| format!("writing {}", out.display()))?;
    let summary = summarise(records);
    let mut summary_path = out.as_os_str().to_owned();
    summary_path.push(".summary.csv");
    std::fs::write(&summary_path, summary_to_csv(&summary))?;
    println!("{} records -> {}", records.len(), out.display());
    for row in &summary {
        let speedup = if row.speedup.is_nan() {
            "-".to_string()
        } else {
            format!("{:.2}", row.speedup)
        };
        println!(
            "  {} {} N={} P={} T={} D={}: median {:.6}s speedup {}",
            row.experiment, row.algo, row.n, row.p, row.t, row.d, row.median_wall_time_s, speedup
        );
    }
    Ok(())
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Sort { common, algo } => {
            let eff = effective(&common, 1 << 14, 0)?;
            let algo_list = algo
                .or(eff.file.algo.clone())
                .unwrap_or_else(|| "NS,BS,BS+MS".to_string());
            let algos = parse_sort_algos(&algo_list)?;
            let records = bench_sort(&eff.common, &algos)?;
            write_outputs(&records, &eff.out)
        }
        Command::Redistribute {
            common,
            algo,
            cr_limit,
            br_local,
        } => {
            let eff = effective(&common, 1 << 14, 0)?;
            let algo_list = algo
                .or(eff.file.algo.clone())
                .unwrap_or_else(|| "CR,BR,NR".to_string());
            let algos = parse_redistribute_algos(&algo_list)?;
            let br = match br_local.or(eff.file.br_local.clone()) {
                Some(s) => parse_br_local(&s)?,
                None => LocalSortAlgo::Mergesort,
            };
            let limit = cr_limit.or(eff.file.cr_limit);
            let records = bench_redistribute(&eff.common, &algos, br, limit)?;
            write_outputs(&records, &eff.out)
        }
        Command::PfEcon {
            common,
            algo,
            worst_case,
        } => {
            let eff = effective(&common, 1 << 14, 100)?;
            let algos = parse_redistribute_algos(
                &algo
                    .or(eff.file.algo.clone())
                    .unwrap_or_else(|| "NR".into()),
            )?;
            let worst = worst_case || eff.file.worst_case.unwrap_or(false);
            let records = bench_worst_case(&BenchModel::Econ, &eff.common, &algos, worst)?;
            write_outputs(&records, &eff.out)
        }
        Command::PfBearing {
            common,
            algo,
            worst_case,
            d,
        } => {
            let eff = effective(&common, 1 << 14, 100)?;
            let algos = parse_redistribute_algos(
                &algo
                    .or(eff.file.algo.clone())
                    .unwrap_or_else(|| "NR".into()),
            )?;
            let worst = worst_case || eff.file.worst_case.unwrap_or(false);
            let d_list = match (&d, &eff.file.d) {
                (Some(s), _) => parse_usize_list(s).map_err(anyhow::Error::msg)?,
                (None, Some(v)) => v.clone(),
                (None, None) => vec![1],
            };
            let mut records = Vec::new();
            for sensors in d_list {
                records.extend(bench_worst_case(
                    &BenchModel::Bearing { sensors },
                    &eff.common,
                    &algos,
                    worst,
                )?);
            }
            write_outputs(&records, &eff.out)
        }
        Command::Smcs {
            common,
            algo,
            worst_case,
            nu,
            mu,
            eps,
        } => {
            let eff = effective(&common, 1 << 14, 100)?;
            let algos = parse_redistribute_algos(
                &algo
                    .or(eff.file.algo.clone())
                    .unwrap_or_else(|| "NR".into()),
            )?;
            let worst = worst_case || eff.file.worst_case.unwrap_or(false);
            let model = BenchModel::StudentT {
                nu: nu.or(eff.file.nu).unwrap_or(5.0),
                mu: mu.or(eff.file.mu).unwrap_or(3.0),
                eps: eps.or(eff.file.eps).unwrap_or(0.5),
            };
            let records = bench_worst_case(&model, &eff.common, &algos, worst)?;
            write_outputs(&records, &eff.out)
        }
        Command::Multisensor { common, d } => {
            let eff = effective(&common, 1 << 14, 10)?;
            let d_list = match (&d, &eff.file.d) {
                (Some(s), _) => parse_usize_list(s).map_err(anyhow::Error::msg)?,
                (None, Some(v)) => v.clone(),
                (None, None) => vec![1, 4, 16, 64],
            };
            let records = bench_multisensor(&d_list, &eff.common, RedistributeAlgo::Nearly)?;
            write_outputs(&records, &eff.out)
        }
        Command::VsMh {
            common,
            nu,
            mu,
            eps,
            tau,
            su,
        } => {
            let eff = effective(&common, 1 << 10, 100)?;
            let su_override = match (&su, &eff.file.su) {
                (Some(s), _) => Some(parse_f64_list(s).map_err(anyhow::Error::msg)?),
                (None, Some(v)) => Some(v.clone()),
                (None, None) => None,
            };
            let opts = VsMhOptions {
                nu: nu.or(eff.file.nu).unwrap_or(5.0),
                mu: mu.or(eff.file.mu).unwrap_or(3.0),
                eps: eps.or(eff.file.eps),
                tau: tau.or(eff.file.tau),
                su_override,
            };
            let (records, report) = compare_mh(&eff.common, &opts)?;
            println!(
                "equal workload: T_MH = {} iterations, MH median {:.6}s (eps = {:.4})",
                report.t_mh_equal_workload, report.mh_median_wall_s, report.eps
            );
            for row in &report.per_p {
                println!(
                    "  P={}: SMCS median {:.6}s, SU_P = {:.3}",
                    row.p, row.smcs_median_wall_s, row.speedup
                );
            }
            println!(
                "equal time: T_MH = {}, MH RMSE = {:.6}",
                report.t_mh_equal_time, report.mh_rmse
            );
            for row in &report.per_p {
                println!(
                    "  P={}: T_SMC = {}, SMCS RMSE = {:.6} (ratio {:.3}, ideal chain ratio {:.4})",
                    row.p,
                    row.t_smcs_equal_time,
                    row.smcs_rmse,
                    row.smcs_rmse / report.mh_rmse,
                    row.ideal_accuracy_ratio
                );
            }
            write_outputs(&records, &eff.out)
        }
    }
}
