use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lanebench_cli::{backend, commands, config, CliError};
use lanebench_core::expert::{ExpertConfig, MANDATED_QIDS};

/// Closed-loop, question-driven evaluation of language driving policies.
#[derive(Parser)]
#[command(name = "lanebench", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Drive every configured scenario with a policy and store all frames.
    Run {
        /// TOML run configuration; `LANEBENCH_*` variables override it.
        #[arg(short, long)]
        config: Option<PathBuf>,
        /// Built-in policy or http(s) endpoint, overriding the config.
        #[arg(long)]
        policy: Option<String>,
        #[arg(short, long)]
        output: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Repeatable; replaces the configured scenario list.
        #[arg(long = "scenario")]
        scenarios: Vec<String>,
    },
    /// Annotate stored world snapshots with expert answers.
    Annotate {
        /// Directory of snapshots, or a scenario folder containing `states/`.
        states: PathBuf,
        /// Dataset root to write frames into.
        #[arg(short, long)]
        output: PathBuf,
        /// Comma-separated question ids.
        #[arg(long, value_delimiter = ',')]
        qids: Vec<u32>,
    },
    /// Score stored policy answers against the expert answers.
    Score {
        run_dir: PathBuf,
        #[arg(short, long)]
        config: Option<PathBuf>,
    },
    /// Print and write the planning and VQA tables of a run.
    Report { run_dir: PathBuf },
    /// Serve the annotation backend or a built-in policy over HTTP.
    Serve {
        #[command(subcommand)]
        what: Serve,
    },
}

#[derive(Subcommand)]
enum Serve {
    /// Annotation backend over a dataset root.
    Annotation {
        root: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8400")]
        bind: String,
    },
    /// A built-in policy behind POST /infer.
    Policy {
        #[arg(long, default_value = "echo")]
        policy: String,
        #[arg(long, default_value = "127.0.0.1:8500")]
        bind: String,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn execute(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { config: file, policy, output, seed, scenarios } => {
            let mut cfg = config::load_config(file.as_deref(), std::env::vars())?;
            if let Some(p) = policy {
                cfg.policy = p;
            }
            if let Some(o) = output {
                cfg.output_dir = o;
            }
            if let Some(s) = seed {
                cfg.seed = s;
            }
            if !scenarios.is_empty() {
                cfg.scenarios = scenarios;
            }
            config::check(&cfg)?;
            let out = commands::run(&cfg)?;
            for r in &out.records {
                let m = &r.metrics;
                println!("{}: DS {:.2} success {} efficiency {:.2} comfort {:.2}", m.scenario, m.driving_score, m.success, m.efficiency, m.comfort);
            }
            let s = &out.summary;
            println!("all: DS {:.2} SR {:.2} efficiency {:.2} comfort {:.2}", s.driving_score, s.success_rate, s.efficiency, s.comfort);
            if s.aborted > 0 {
                return Err(CliError::Runtime(format!("{} episode(s) aborted on policy failure", s.aborted)));
            }
            Ok(())
        }
        Command::Annotate { states, output, qids } => {
            let qids = if qids.is_empty() { MANDATED_QIDS.to_vec() } else { qids };
            let rep = commands::annotate(&states, &output, &qids, &ExpertConfig::default())?;
            println!("annotated {} frame(s), skipped {}", rep.frames, rep.warnings.len());
            Ok(())
        }
        Command::Score { run_dir, config: file } => {
            let cfg = config::load_config(file.as_deref(), std::env::vars())?;
            let rep = commands::score(&run_dir, &cfg.weights)?;
            for (col, v) in &rep.overall {
                println!("{col}: {v:.2}");
            }
            if rep.flagged > 0 {
                println!("{} answer(s) without expert answers", rep.flagged);
            }
            Ok(())
        }
        Command::Report { run_dir } => {
            print!("{}", commands::report(&run_dir)?.render());
            Ok(())
        }
        Command::Serve { what: Serve::Annotation { root, bind } } => {
            let h = backend::serve_backend(root, &bind).map_err(|e| CliError::Runtime(format!("{bind}: {e}")))?;
            println!("annotation backend on {}", h.url());
            h.wait();
            Ok(())
        }
        Command::Serve { what: Serve::Policy { policy, bind, seed } } => {
            let p = lanebench_core::policy::builtin_policy(&policy, seed).map_err(|e| CliError::Config(e.to_string()))?;
            let h = lanebench_bridge::serve(p, &bind).map_err(|e| CliError::Runtime(e.to_string()))?;
            println!("policy {policy} on {}", h.url());
            h.wait();
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().filter_or("LANEBENCH_LOG", "warn")).init();
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
