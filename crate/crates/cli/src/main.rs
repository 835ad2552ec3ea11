// SPDX-License-Identifier: Apache-2.0

mod campaign;
mod image;
mod keys;
mod scenario;
mod sim;
mod svi2;
mod trace;
mod util;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sevforge_core::campaign::CampaignError;
use sevforge_core::scenario::ScenarioError;
use sevforge_core::sim::SimConfig;

/// Desk-scale model of the AMD-SP voltage fault attack.
#[derive(Debug, Parser)]
#[command(name = "sevforge", version)]
struct Cli {
    /// Seed for every random choice.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// JSON file with CPU profile overrides.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Machine-readable output.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Encode and decode SVI2 packets.
    #[command(subcommand)]
    Svi2(svi2::Svi2Cmd),
    /// Analyse SPI chip-select traces.
    #[command(subcommand)]
    Trace(trace::TraceCmd),
    /// Run the simulated ROM bootloader.
    #[command(subcommand)]
    Sim(sim::SimCmd),
    /// Attack cycles and the parameter search.
    #[command(subcommand)]
    Campaign(campaign::CampaignCmd),
    /// Inspect, verify and modify flash images.
    #[command(subcommand)]
    Image(image::ImageCmd),
    /// Firmware key wrapping and component encryption.
    #[command(subcommand)]
    Crypto(image::CryptoCmd),
    /// Endorsement key derivation.
    #[command(subcommand)]
    Keys(keys::KeysCmd),
    /// End-to-end attack scenarios.
    #[command(subcommand)]
    Scenario(scenario::ScenarioCmd),
}

/// Settings shared by all subcommands.
pub struct Ctx {
    pub seed: u64,
    pub json: bool,
    pub sim_config: SimConfig,
}

/// Exit status for a run that spent its whole budget without a success.
pub const EXIT_BUDGET_EXHAUSTED: u8 = 2;
/// Exit status for unreadable or invalid input.
pub const EXIT_INPUT_ERROR: u8 = 3;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}

fn run(cli: Cli) -> anyhow::Result<ExitCode> {
    let sim_config = match &cli.config {
        Some(p) => SimConfig::from_json(&util::read_text(p)?)?,
        None => SimConfig::default(),
    };
    let ctx = Ctx { seed: cli.seed, json: cli.json, sim_config };
    match cli.command {
        Command::Svi2(c) => svi2::run(&ctx, c),
        Command::Trace(c) => trace::run(&ctx, c),
        Command::Sim(c) => sim::run(&ctx, c),
        Command::Campaign(c) => campaign::run(&ctx, c),
        Command::Image(c) => image::run(&ctx, c),
        Command::Crypto(c) => image::run_crypto(&ctx, c),
        Command::Keys(c) => keys::run(&ctx, c),
        Command::Scenario(c) => scenario::run(&ctx, c),
    }
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain()
        .any(|c| c.downcast_ref::<std::io::Error>().is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe))
}

fn exit_code(e: &anyhow::Error) -> u8 {
    let exhausted = e.chain().any(|c| {
        matches!(c.downcast_ref::<CampaignError>(), Some(CampaignError::BudgetExhausted(_)))
            || matches!(
                c.downcast_ref::<ScenarioError>(),
                Some(ScenarioError::Campaign(CampaignError::BudgetExhausted(_)))
            )
    });
    if exhausted {
        EXIT_BUDGET_EXHAUSTED
    } else {
        EXIT_INPUT_ERROR
    }
}
