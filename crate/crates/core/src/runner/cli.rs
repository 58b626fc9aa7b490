//! Command-line interface.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use super::cache::Cache;
use super::config::SweepConfig;
use super::plot::{emit_plot_data, Recipe};
use super::sweep::{read_results, run_sweep_with_threads};
use super::validate::{validate, Fault};
use crate::codes::{
    bin_codewords, cat_codewords, cat_codewords_minimal, gkp_codewords, gkp_required_dim, mean_photon_number,
    squeezing_db, GkpSpec, RotationCodeSpec,
};
use crate::error::{Error, Result};
use crate::fock::TruncatedSpace;
use crate::measure::Scheme;
use crate::twirl::{effective_variances, monte_carlo_oracle, p_succ, twirl_fidelity, TwirlParams};

#[derive(Parser, Debug)]
#[command(name = "bqec", version, about = "Bosonic qubit telecorrection simulator")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Run the built-in invariant checks.
    Validate {
        #[arg(long, value_enum)]
        inject_fault: Option<FaultArg>,
    },
    /// Code word utilities.
    Codes {
        #[command(subcommand)]
        command: CodesCommand,
    },
    /// Phase POVM H matrices.
    Hmatrix {
        #[command(subcommand)]
        command: HmatrixCommand,
    },
    /// Run a parameter sweep described by a TOML file.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to the `output` entry of the config.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Twirled GKP fidelity, optionally checked by Monte Carlo.
    Twirl {
        #[arg(long)]
        delta_data: f64,
        #[arg(long)]
        delta_anci: f64,
        #[arg(long, default_value_t = 1.0)]
        eta: f64,
        /// Model the detector as loss with rescaled decision boundaries.
        #[arg(long)]
        cc: bool,
        #[arg(long)]
        mc_samples: Option<u64>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Write per-panel CSV tables from sweep results.
    PlotData {
        #[arg(long)]
        recipe: String,
        #[arg(long = "in", required = true, num_args = 1..)]
        inputs: Vec<PathBuf>,
        #[arg(long)]
        out_dir: PathBuf,
    },
}

#[derive(Subcommand, Debug)]
pub enum CodesCommand {
    /// Print code words as JSON.
    Info {
        #[arg(long, value_enum)]
        family: FamilyArg,
        #[arg(long, default_value_t = 1)]
        order: usize,
        #[arg(long)]
        alpha: Option<f64>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        delta: Option<f64>,
        #[arg(long)]
        dim: Option<usize>,
    },
}

#[derive(Subcommand, Debug)]
pub enum HmatrixCommand {
    /// Write `row,col,value` CSV.
    Dump {
        #[arg(long)]
        scheme: Scheme,
        #[arg(long)]
        dim: usize,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FamilyArg {
    Cat,
    Bin,
    Gkp,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum FaultArg {
    HMatrix,
}

fn need<T>(v: Option<T>, flag: &str) -> Result<T> {
    v.ok_or_else(|| Error::Config(format!("--{flag} is required for this family")))
}

fn codes_info(family: FamilyArg, order: usize, alpha: Option<f64>, k: Option<usize>, delta: Option<f64>, dim: Option<usize>) -> Result<()> {
    let words = match family {
        FamilyArg::Cat => {
            let alpha = need(alpha, "alpha")?;
            match dim {
                Some(d) => cat_codewords(&RotationCodeSpec::cat(order, alpha, TruncatedSpace::new(d)?)?)?,
                None => cat_codewords_minimal(order, alpha)?,
            }
        }
        FamilyArg::Bin => {
            let k = need(k, "k")?;
            let d = dim.unwrap_or(k * order + 1);
            bin_codewords(&RotationCodeSpec::bin(order, k, TruncatedSpace::new(d)?)?)?
        }
        FamilyArg::Gkp => {
            let delta = need(delta, "delta")?;
            let d = dim.unwrap_or_else(|| gkp_required_dim(delta));
            gkp_codewords(&GkpSpec::new(delta, TruncatedSpace::new(d)?)?)?
        }
    };
    let mut doc = serde_json::to_value(words.to_document())?;
    doc["mean_photon_number"] = mean_photon_number(&words).into();
    if let Some(delta) = delta.filter(|_| matches!(family, FamilyArg::Gkp)) {
        doc["squeezing_db"] = squeezing_db(delta).into();
    }
    println!("{}", serde_json::to_string_pretty(&doc)?);
    Ok(())
}

fn hmatrix_dump(scheme: Scheme, dim: usize, out: &PathBuf) -> Result<()> {
    let h = Cache::from_env().h_matrix(scheme, dim)?;
    let mut w = csv::Writer::from_path(out)?;
    w.write_record(["row", "col", "value"])?;
    for m in 0..dim {
        for n in 0..dim {
            w.write_record([m.to_string(), n.to_string(), super::sweep::fmt_f64(h.get(m, n))])?;
        }
    }
    w.flush()?;
    Ok(())
}

fn twirl_cmd(dd: f64, da: f64, eta: f64, cc: bool, mc: Option<u64>, seed: u64) -> Result<()> {
    let p = TwirlParams::new(dd, da, eta)?;
    let r = twirl_fidelity(&p, cc)?;
    let (vd, va) = effective_variances(&p, cc);
    let mut out = serde_json::json!({
        "sigma_sq_data": vd,
        "sigma_sq_anci": va,
        "p_succ_data": p_succ(vd.sqrt()),
        "p_succ_anci": p_succ(va.sqrt()),
        "entanglement_fidelity": r.entanglement_fidelity(),
        "avg_gate_fidelity": r.avg_gate_fidelity(),
        "infidelity": r.infidelity(),
    });
    if let Some(n) = mc {
        let est = monte_carlo_oracle(vd.sqrt(), va.sqrt(), n, seed)?;
        out["monte_carlo"] = serde_json::to_value(est)?;
    }
    println!("{}", serde_json::to_string_pretty(&out)?);
    Ok(())
}

fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Validate { inject_fault } => {
            let fault = inject_fault.map(|FaultArg::HMatrix| Fault::PerturbHMatrix);
            let report = validate(fault);
            print!("{}", report.render());
            Ok(if report.passed() { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Codes {
            command:
                CodesCommand::Info {
                    family,
                    order,
                    alpha,
                    k,
                    delta,
                    dim,
                },
        } => codes_info(family, order, alpha, k, delta, dim).map(|_| ExitCode::SUCCESS),
        Command::Hmatrix {
            command: HmatrixCommand::Dump { scheme, dim, out },
        } => hmatrix_dump(scheme, dim, &out).map(|_| ExitCode::SUCCESS),
        Command::Sweep { config, out, threads } => {
            let cfg = SweepConfig::load(&config)?;
            let out = out
                .or_else(|| cfg.output.clone())
                .ok_or_else(|| Error::Config("no output path: pass --out or set `output`".into()))?;
            let summary = run_sweep_with_threads(&cfg, &out, &Cache::from_env(), threads)?;
            eprintln!(
                "{} points: {} computed, {} reused, {} failed",
                summary.points, summary.computed, summary.reused, summary.failed
            );
            Ok(if summary.failed == 0 { ExitCode::SUCCESS } else { ExitCode::from(1) })
        }
        Command::Twirl {
            delta_data,
            delta_anci,
            eta,
            cc,
            mc_samples,
            seed,
        } => twirl_cmd(delta_data, delta_anci, eta, cc, mc_samples, seed).map(|_| ExitCode::SUCCESS),
        Command::PlotData { recipe, inputs, out_dir } => {
            let recipe = Recipe::parse(&recipe)?;
            let mut rows = Vec::new();
            for p in &inputs {
                rows.extend(read_results(p)?);
            }
            for p in emit_plot_data(recipe, &rows, &out_dir)? {
                println!("{}", p.display());
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}

/// Parses arguments, runs the command and maps errors to exit codes:
/// 2 for configuration and usage errors, 1 for everything else.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) | Error::InvalidParameter(_) => 2,
                _ => 1,
            })
        }
    }
}
