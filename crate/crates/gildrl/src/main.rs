use clap::{Parser, Subcommand};
use gildrl::harness::{

    analyze_run_kl, analyze_run_pca, collect_demos, emit_plots, evaluate_checkpoint,
    run_snapshots, select_behavior, train_expert, train_run, HarnessError, RunConfig, Variant,
};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(
    name = "gildrl",
    about = "Continuous-control RL workbench: DDPG/TD3/SAC, imitation variants, and a meta-learned imitation objective"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a vanilla agent on a dense-reward channel, checkpointing
    /// every evaluation; the final checkpoint is the expert.
    TrainExpert {
        #[arg(long)]
        env: String,
        #[arg(long)]
        algo: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 50_000)]
        steps: u64,
        #[arg(long, default_value_t = 5_000)]
        eval_interval: u64,
        #[arg(long, default_value_t = 1_000)]
        start_steps: u64,
        #[arg(long, default_value_t = 64)]
        hidden_dim: usize,
        #[arg(long, default_value_t = 256)]
        batch_size: usize,
    },
    /// Roll exploit episodes from a checkpoint on the dense channel and
    /// store the state-action pairs.
    CollectDemos {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 1_000)]
        samples: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one training configuration from a key=value config file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Repeatable key=value overrides applied after the file.
        #[arg(long = "override", value_name = "KEY=VALUE")]
        overrides: Vec<String>,
    },
    /// Exploit-mode dense-channel evaluation of a checkpoint.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        env: String,
        #[arg(long, default_value_t = 10)]
        episodes: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Post-hoc analyses over a finished run directory.
    Analyze {
        #[command(subcommand)]
        what: AnalyzeCmd,
    },
    /// Emit SVG charts for a finished run directory.
    Plot {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Pick the first sub-optimal checkpoint that clears the ratio
    /// threshold against the expert's best return.
    SelectBehavior {
        #[arg(long)]
        run: PathBuf,
        #[arg(long, default_value_t = 0.45)]
        rho: f64,
    },
}

#[derive(Subcommand)]
enum AnalyzeCmd {
    /// KL divergence of each actor snapshot from the behavior policy.
    Kl {
        #[arg(long)]
        run: PathBuf,
    },
    /// Top-2 parameter-space projection of the actor snapshots.
    PcaPath {
        #[arg(long)]
        run: PathBuf,
    },
}

fn run(cmd: Cmd) -> Result<(), HarnessError> {
    match cmd {
        Cmd::TrainExpert {
            env,
            algo,
            seed,
            out,
            steps,
            eval_interval,
            start_steps,
            hidden_dim,
            batch_size,
        } => {
            let cfg = RunConfig {
                env_id: env,
                algo,
                variant: Variant::Vanilla,
                total_steps: steps,
                eval_interval,
                seed,
                output_dir: out,
                start_steps,
                hidden_dim,
                batch_size,
                ..RunConfig::default()
            };
            let art = train_expert(&cfg)?;
            let best = art
                .log
                .eval
                .iter()
                .map(|e| e.mean_dense_return)
                .fold(f64::NEG_INFINITY, f64::max);
            println!(
                "expert trained: {} evaluations, max average return {best}",
                art.log.eval.len()
            );
            println!("final checkpoint: {}", art.final_checkpoint.display());
            Ok(())
        }
        Cmd::CollectDemos {
            checkpoint,
            env,
            samples,
            out,
        } => {
            let set = collect_demos(&checkpoint, &env, samples)?;
            set.save(&out)?;
            println!(
                "collected {} pairs at behavior return {}",
                set.len(),
                set.metadata.behavior_return
            );
            println!("wrote {} (+ .meta.json)", out.display());
            Ok(())
        }
        Cmd::Train { config, overrides } => {
            let mut cfg = RunConfig::from_file(&config)?;
            for ov in &overrides {
                let (k, v) = ov.split_once('=').ok_or_else(|| {
                    HarnessError::Config(format!("override {ov:?} is not key=value"))
                })?;
                cfg.apply(k.trim(), v.trim())
                    .map_err(HarnessError::Config)?;
            }
            let art = train_run(&cfg)?;
            if let Some(last) = art.log.eval.last() {
                println!(
                    "run finished: final mean dense return {} (std {})",
                    last.mean_dense_return, last.std_dense_return
                );
            }
            println!("artifacts in {}", cfg.output_dir.display());
            Ok(())
        }
        Cmd::Evaluate {
            checkpoint,
            env,
            episodes,
            seed,
        } => {
            let s = evaluate_checkpoint(&checkpoint, &env, episodes, seed)?;
            let goals = s.reached.iter().filter(|&&r| r).count();
            println!(
                "mean dense return {} (std {}) over {} episodes; {} reached a sparse event",
                s.mean_return,
                s.std_return,
                s.returns.len(),
                goals
            );
            Ok(())
        }
        Cmd::Analyze { what } => match what {
            AnalyzeCmd::Kl { run } => {
                let p = analyze_run_kl(&run)?;
                println!("wrote {}", p.display());
                Ok(())
            }
            AnalyzeCmd::PcaPath { run } => {
                let p = analyze_run_pca(&run)?;
                println!("wrote {} and pca_info.json", p.display());
                Ok(())
            }
        },
        Cmd::Plot { run, out } => {
            for p in emit_plots(&run, &out)? {
                println!("wrote {}", p.display());
            }
            Ok(())
        }
        Cmd::SelectBehavior { run, rho } => {
            let snaps = run_snapshots(&run)?;
            let (path, ck) = select_behavior(&snaps, rho)?;
            println!(
                "behavior checkpoint: {} (step {}, eval return {})",
                path.display(),
                ck.step,
                ck.eval_return
            );
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.cmd) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
