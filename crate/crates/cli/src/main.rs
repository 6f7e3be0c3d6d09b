use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use fracneumann::experiments;
use fracneumann::testfn::solve_sigma;
use fracneumann::RunConfig;

#[derive(Parser)]
#[command(
    name = "fracneumann",
    version,
    about = "Singularly perturbed fractional Neumann problem: experiments and certificates"
)]
struct Cli {
    /// Flat `key = value` config file; defaults are used when absent.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory (overrides `output_dir`).
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// RNG seed (overrides `seed`).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    cmd: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Discrete Gauss, Green, constant, extension and dilation identities.
    Identities,
    /// Mountain-pass solve for every ε in `eps_list`.
    Sweep,
    /// Moser ladder and truncation checks on a stored solution.
    Moser {
        #[arg(long)]
        solution: PathBuf,
    },
    /// Prints the half-mass level σ of the tent profile in dimension N.
    Sigma {
        #[arg(long, default_value_t = 1)]
        dim: usize,
    },
    /// Prints the K_q table.
    Constants {
        #[arg(long, value_delimiter = ',', default_value = "1,2,3")]
        dims: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_value = "2,2.5,3,4")]
        q: Vec<f64>,
    },
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::from_path(p).with_context(|| format!("loading {}", p.display()))?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed {
        cfg = cfg.with_override("seed", &seed.to_string())?;
    }
    if let Some(out) = &cli.out {
        cfg = cfg.with_override("output_dir", &out.to_string_lossy())?;
    }
    Ok(cfg)
}

fn status(ok: bool) -> &'static str {
    if ok {
        "ok"
    } else {
        "FAILED"
    }
}

fn run(cli: &Cli) -> Result<bool> {
    match &cli.cmd {
        Command::Sigma { dim } => {
            println!("{}", solve_sigma(*dim)?);
            Ok(true)
        }
        Command::Constants { dims, q } => {
            println!("N,q,K_q");
            for (n, q, k) in experiments::k_q_table(dims, q)? {
                println!("{n},{q},{k}");
            }
            Ok(true)
        }
        Command::Identities => {
            let cfg = load_config(cli)?;
            let report = experiments::run_identity_suite(&cfg)?;
            let path = experiments::write_identity_report(&cfg.output_dir, &cfg, &report)?;
            for e in &report.entries {
                println!(
                    "{:<10} residual={:.3e} tol={:.1e} {}",
                    e.name,
                    e.residual,
                    e.tolerance,
                    status(e.passed)
                );
            }
            if !report.passed {
                eprintln!("failed identities: {}", report.failed().join(", "));
            }
            println!("wrote {}", path.display());
            Ok(report.passed)
        }
        Command::Sweep => {
            let cfg = load_config(cli)?;
            let outcome = experiments::run_scaling_sweep(&cfg)?;
            experiments::write_sweep_outputs(&cfg.output_dir, &cfg, &outcome)?;
            println!("eps,level,level/eps^N,residual,min_u,converged");
            for e in &outcome.entries {
                let r = &e.row;
                println!(
                    "{},{:.6e},{:.6},{:.2e},{:.3e},{}",
                    r.eps, r.level, r.level_over_eps_n, r.residual, r.min_u, r.converged
                );
            }
            let s = &outcome.summary;
            println!(
                "level/eps^N spread {:.3}, smallest-eps level {:.6} vs constant {:.6}: {}",
                s.level_spread,
                s.smallest_eps_level,
                s.constant_level,
                status(s.passed)
            );
            println!("wrote {}", cfg.output_dir.display());
            Ok(s.passed)
        }
        Command::Moser { solution } => {
            let cfg = load_config(cli)?;
            let outcome = experiments::run_moser_check(&cfg, solution)
                .with_context(|| format!("checking {}", solution.display()))?;
            experiments::write_moser_outputs(&cfg.output_dir, &cfg, &outcome)?;
            let l = &outcome.ladder;
            println!(
                "K={:.4} gamma1={:.4} gamma2={:.4} sup_estimate={:.6} max={:.6} {}",
                l.k,
                l.gamma1,
                l.gamma2,
                l.sup_estimate,
                l.actual_max,
                status(l.certified())
            );
            println!(
                "caccioppoli identities {}, chain {}",
                status(outcome.identity_ok),
                status(outcome.chain_ok)
            );
            if let Some(w) = &l.warning {
                eprintln!("warning: {w}");
            }
            Ok(outcome.passed)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
