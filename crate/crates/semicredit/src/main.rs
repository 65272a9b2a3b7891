use std::path::PathBuf;

use anyhow::Context as _;
use clap::{Parser, Subcommand};
use semicredit::config::RunConfig;
use semicredit::harness::{self, CreditReportOptions};
use semicredit::plot;
use semicredit_core::credit::SpecId;
use semicredit_core::envkit::EnvId;
use semicredit_core::trainer::Method;

#[derive(Parser)]
#[command(name = "semicredit", version, about = "Semivalue credit assignment for multiagent control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train every seed of a configuration (flags override the file).
    Train {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Train only this seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        method: Option<Method>,
        #[arg(long)]
        env: Option<EnvId>,
        /// Coalition samples per agent and step.
        #[arg(long)]
        samples: Option<usize>,
        #[arg(long)]
        iters: Option<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Deterministic evaluation of a checkpoint.
    Evaluate {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        env: EnvId,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Per-step, per-agent credit of a frozen policy, as CSV.
    CreditReport {
        #[arg(long)]
        ckpt: PathBuf,
        #[arg(long)]
        env: EnvId,
        #[arg(long)]
        steps: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Semivalue: shapley, banzhaf, loo or fixed:<c>.
        #[arg(long)]
        spec: Option<SpecId>,
        #[arg(long)]
        samples: Option<usize>,
        /// Enumerate all coalitions instead of sampling.
        #[arg(long)]
        exact: bool,
        /// Force these agents to the default action (comma separated).
        #[arg(long, value_delimiter = ',')]
        dummy: Vec<usize>,
        /// Output file; stdout when omitted.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Aggregate run logs and draw learning curves.
    Plot {
        #[arg(required = true)]
        dirs: Vec<PathBuf>,
        #[arg(long, default_value = "plots")]
        out: PathBuf,
    },
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Train {
            config,
            seed,
            method,
            env,
            samples,
            iters,
            out,
        } => {
            let mut cfg = match config {
                Some(p) => RunConfig::load(&p).with_context(|| format!("loading {}", p.display()))?,
                None => RunConfig::default(),
            };
            if let Some(s) = seed {
                cfg.train.seeds = vec![s];
            }
            if let Some(m) = method {
                cfg.train.method = m;
            }
            if let Some(e) = env {
                cfg.train.env = e;
            }
            if let Some(s) = samples {
                cfg.train.samples_per_agent = s;
            }
            if let Some(k) = iters {
                cfg.train.iterations = k;
            }
            if let Some(o) = out {
                cfg.out_dir = o;
            }
            cfg.train.validate()?;
            for &s in &cfg.train.seeds {
                let run = harness::train_seed(&cfg, s)?;
                let last = run.rows.last().map_or(f64::NAN, |r| r.mean_episode_reward);
                println!("seed {s}: {} iterations, final reward {last:.3}, logs in {}", run.rows.len(), run.dir.display());
            }
        }
        Command::Evaluate {
            ckpt,
            env,
            episodes,
            seed,
        } => {
            let s = harness::evaluate(&ckpt, env, episodes, seed)?;
            println!("episodes {}", s.episodes);
            println!("mean_reward {:.6}", s.mean_reward);
            println!("std_reward {:.6}", s.std_reward);
            for (i, a) in s.mean_abs_action.iter().enumerate() {
                println!("mean_abs_action_{i} {a:.6}");
            }
        }
        Command::CreditReport {
            ckpt,
            env,
            steps,
            seed,
            spec,
            samples,
            exact,
            dummy,
            out,
        } => {
            let options = CreditReportOptions {
                spec,
                samples_per_agent: samples,
                exact,
                dummies: dummy,
            };
            let rows = harness::credit_report(&ckpt, env, steps, seed, &options)?;
            match out {
                Some(p) => harness::write_credit_csv(&p, &rows)?,
                None => {
                    println!("iteration,t,agent,psi,coalition_samples");
                    for r in rows {
                        println!("{},{},{},{:.16e},{}", r.iteration, r.t, r.agent, r.psi, r.coalition_samples);
                    }
                }
            }
        }
        Command::Plot { dirs, out } => {
            let result = plot::plot(&dirs, &out)?;
            for w in &result.warnings {
                eprintln!("warning: {w}");
            }
            println!("wrote {} aggregate rows to {}", result.rows.len(), out.display());
        }
    }
    Ok(())
}
