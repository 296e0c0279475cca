//! Command-line entry point: train, evaluate, run baselines, and report.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use uavpower::agents::{train, SacAgent};
use uavpower::env::{ScenarioConfig, UavEnv};
use uavpower::{Error, Result};
use uavpower_cli::output;
use uavpower_cli::run::{evaluate_policy, AgentKind, Policy, RunConfig};

#[derive(Parser)]
#[command(
    name = "uavpower",
    version,
    about = "Energy-efficient multi-station power allocation: training, evaluation, and reporting"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a SAC agent as described by a JSON run config.
    Train {
        /// Path to the run configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Output directory for checkpoints, traces, and CSVs.
        #[arg(long)]
        out: PathBuf,
    },
    /// Evaluate a trained checkpoint deterministically.
    Eval {
        /// Checkpoint file written by `train`.
        #[arg(long)]
        checkpoint: PathBuf,
        /// Scenario name (or path to a scenario JSON).
        #[arg(long)]
        scenario: String,
        /// Half-open seed range `a..b`, one episode per seed.
        #[arg(long, default_value = "0..10")]
        seeds: String,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a fixed baseline policy.
    Baseline {
        /// `closest` or `full_power`.
        #[arg(long)]
        policy: String,
        /// Scenario name (or path to a scenario JSON).
        #[arg(long)]
        scenario: String,
        /// Half-open seed range `a..b`, one episode per seed.
        #[arg(long, default_value = "0..10")]
        seeds: String,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Summarize every trace in a run directory.
    Report {
        /// Directory holding `trace_*.json` files.
        dir: PathBuf,
    },
}

fn parse_seed_range(text: &str) -> Result<(u64, u32)> {
    let (a, b) = text
        .split_once("..")
        .ok_or_else(|| Error::Validation(format!("seed range '{text}' is not of the form a..b")))?;
    let start: u64 = a
        .trim()
        .parse()
        .map_err(|_| Error::Validation(format!("bad seed range start '{a}'")))?;
    let end: u64 = b
        .trim()
        .parse()
        .map_err(|_| Error::Validation(format!("bad seed range end '{b}'")))?;
    if end <= start {
        return Err(Error::Validation(format!(
            "seed range {start}..{end} is empty"
        )));
    }
    let count = end - start;
    let count = u32::try_from(count)
        .map_err(|_| Error::Validation(format!("seed range {start}..{end} is too large")))?;
    Ok((start, count))
}

fn resolve_scenario(name_or_path: &str) -> Result<ScenarioConfig> {
    if ScenarioConfig::builtin_names().contains(&name_or_path) {
        return ScenarioConfig::builtin(name_or_path);
    }
    let path = Path::new(name_or_path);
    if path.exists() {
        let text = fs::read_to_string(path)?;
        return ScenarioConfig::from_json(&text);
    }
    Err(Error::Validation(format!(
        "unknown scenario '{name_or_path}' (builtins: {})",
        ScenarioConfig::builtin_names().join(", ")
    )))
}

fn save_checkpoint(agent: &SacAgent, path: &Path) -> Result<()> {
    let text = serde_json::to_string(&agent.to_checkpoint())?;
    output::write_atomic(path, text.as_bytes())
}

fn cmd_train(config_path: &Path, out: &Path) -> Result<()> {
    let config_text = fs::read_to_string(config_path)?;
    let cfg = RunConfig::from_json(&config_text)?;
    if cfg.agent != AgentKind::Sac {
        return Err(Error::Validation(
            "train drives the sac agent; run baselines with the baseline subcommand".into(),
        ));
    }
    let scenario = cfg.scenario.resolve()?;
    fs::create_dir_all(out)?;
    let mut env = UavEnv::new(scenario.clone(), cfg.seed)?;
    let mut agent = SacAgent::new(
        scenario.observation_dim(),
        scenario.action_dim(),
        cfg.sac_params(),
    )?;

    let checkpoint_every = cfg.checkpoint_every_episodes;
    let out_owned = out.to_path_buf();
    let log = train(&mut env, &mut agent, cfg.budget, |agent, stats| {
        if let Some(every) = checkpoint_every {
            if every > 0 && (stats.index + 1) % every == 0 {
                let path = out_owned.join(format!("checkpoint_ep{:06}.json", stats.index + 1));
                save_checkpoint(agent, &path)?;
            }
        }
        Ok(())
    })?;

    save_checkpoint(&agent, &out.join("checkpoint.json"))?;
    output::write_atomic(
        &out.join("train_log.json"),
        serde_json::to_string_pretty(&log)?.as_bytes(),
    )?;
    output::write_manifest(out, "train", &config_text, cfg.seed)?;

    println!(
        "trained {} env steps, {} updates, {} episodes; final temperature {:.6}",
        log.env_steps, log.updates, log.episodes, log.final_alpha
    );

    if cfg.eval_episodes > 0 {
        let policy = Policy::Sac(Box::new(agent));
        let eval_start = cfg.seed.wrapping_add(1_000_000);
        evaluate_policy(&policy, &scenario, eval_start, cfg.eval_episodes, out)?;
        let summary = output::report(out)?;
        output::write_report_csv(out, &summary)?;
        print!("{}", output::render_report_text(&summary));
    }
    Ok(())
}

fn cmd_eval(checkpoint: &Path, scenario: &str, seeds: &str, out: &Path) -> Result<()> {
    let (start, count) = parse_seed_range(seeds)?;
    let cfg = resolve_scenario(scenario)?;
    let agent = SacAgent::load(checkpoint)?;
    if agent.obs_dim() != cfg.observation_dim() || agent.act_dim() != cfg.action_dim() {
        return Err(Error::Validation(format!(
            "checkpoint dims ({}, {}) do not match scenario '{}' dims ({}, {})",
            agent.obs_dim(),
            agent.act_dim(),
            cfg.name,
            cfg.observation_dim(),
            cfg.action_dim()
        )));
    }
    fs::create_dir_all(out)?;
    let policy = Policy::Sac(Box::new(agent));
    evaluate_policy(&policy, &cfg, start, count, out)?;
    let manifest_text = format!(
        "eval checkpoint={} scenario={} seeds={}",
        checkpoint.display(),
        cfg.to_json()?,
        seeds
    );
    output::write_manifest(out, "eval", &manifest_text, start)?;
    let summary = output::report(out)?;
    output::write_report_csv(out, &summary)?;
    print!("{}", output::render_report_text(&summary));
    Ok(())
}

fn cmd_baseline(policy_name: &str, scenario: &str, seeds: &str, out: &Path) -> Result<()> {
    let (start, count) = parse_seed_range(seeds)?;
    let cfg = resolve_scenario(scenario)?;
    let kind = AgentKind::parse(policy_name)?;
    let policy = match kind {
        AgentKind::FullPower => Policy::FullPower,
        AgentKind::Closest => Policy::Closest,
        AgentKind::Sac => {
            return Err(Error::Validation(
                "the sac policy needs a checkpoint; use the eval subcommand".into(),
            ))
        }
    };
    fs::create_dir_all(out)?;
    evaluate_policy(&policy, &cfg, start, count, out)?;
    let manifest_text = format!(
        "baseline policy={policy_name} scenario={} seeds={seeds}",
        cfg.to_json()?
    );
    output::write_manifest(out, "baseline", &manifest_text, start)?;
    let summary = output::report(out)?;
    output::write_report_csv(out, &summary)?;
    print!("{}", output::render_report_text(&summary));
    Ok(())
}

fn cmd_report(dir: &Path) -> Result<()> {
    let summary = output::report(dir)?;
    let traces = output::read_traces(dir)?;
    output::write_figure_csvs(dir, &traces)?;
    output::write_report_csv(dir, &summary)?;
    print!("{}", output::render_report_text(&summary));
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    match &cli.command {
        Command::Train { config, out } => cmd_train(config, out),
        Command::Eval { checkpoint, scenario, seeds, out } => {
            cmd_eval(checkpoint, scenario, seeds, out)
        }
        Command::Baseline { policy, scenario, seeds, out } => {
            cmd_baseline(policy, scenario, seeds, out)
        }
        Command::Report { dir } => cmd_report(dir),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version requests are successful exits; anything else
            // is a usage error.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_usage() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
