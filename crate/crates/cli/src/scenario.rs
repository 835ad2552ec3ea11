// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Subcommand};
use serde::Serialize;
use sevforge_core::keyderive::TcbVersion;
use sevforge_core::scenario::{scenario_debug_override, scenario_forge_attestation, ScenarioConfig};

use crate::util::{print_json, read_text, write_bytes};
use crate::Ctx;

#[derive(Debug, Subcommand)]
pub enum ScenarioCmd {
    /// Run a modified PSP OS despite the ARK check.
    DebugOverride(ScenarioArgs),
    /// Extract the chip secrets and derive CEK, chip ID and VCEKs.
    ForgeAttestation(ScenarioArgs),
}

#[derive(Debug, Args)]
pub struct ScenarioArgs {
    /// Scenario JSON; the flags below override its fields.
    #[arg(long)]
    scenario: Option<PathBuf>,
    #[arg(long)]
    profile: Option<String>,
    /// Genuine flash image.
    #[arg(long)]
    image: Option<PathBuf>,
    /// Attacker's RSA key, PKCS#8 PEM.
    #[arg(long)]
    key: Option<PathBuf>,
    #[arg(long)]
    rk: Option<String>,
    #[arg(long)]
    fuses: Option<PathBuf>,
    #[arg(long)]
    budget: Option<u64>,
    #[arg(long)]
    tcb: Vec<TcbVersion>,
    /// Directory for report.json and the payload image.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

impl ScenarioArgs {
    fn config(self, seed: u64) -> Result<ScenarioConfig> {
        let mut cfg = match &self.scenario {
            Some(p) => ScenarioConfig::from_json(&read_text(p)?)?,
            None => {
                let (Some(image), Some(key)) = (self.image.clone(), self.key.clone()) else {
                    bail!("pass --scenario or both --image and --key");
                };
                ScenarioConfig {
                    profile: "7281".into(),
                    original_image: image,
                    attacker_key: key,
                    root_key: None,
                    fuses: None,
                    budget: 1_000_000,
                    seed,
                    window: None,
                    tcb_versions: vec![],
                    output_dir: None,
                }
            }
        };
        if self.scenario.is_some() {
            if let Some(v) = self.image {
                cfg.original_image = v;
            }
            if let Some(v) = self.key {
                cfg.attacker_key = v;
            }
        }
        if let Some(v) = self.profile {
            cfg.profile = v;
        }
        if self.rk.is_some() {
            cfg.root_key = self.rk;
        }
        if self.fuses.is_some() {
            cfg.fuses = self.fuses;
        }
        if let Some(v) = self.budget {
            cfg.budget = v;
        }
        if !self.tcb.is_empty() {
            cfg.tcb_versions = self.tcb;
        }
        if self.out_dir.is_some() {
            cfg.output_dir = self.out_dir;
        }
        Ok(cfg)
    }
}

fn finish<T: Serialize>(cfg: &ScenarioConfig, report: &T, image: Option<&[u8]>) -> Result<ExitCode> {
    if let Some(dir) = &cfg.output_dir {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        write_bytes(&dir.join("report.json"), serde_json::to_string_pretty(report)?.as_bytes())?;
        if let Some(bytes) = image {
            write_bytes(&dir.join("payload.bin"), bytes)?;
        }
    }
    print_json(report)?;
    Ok(ExitCode::SUCCESS)
}

pub fn run(ctx: &Ctx, cmd: ScenarioCmd) -> Result<ExitCode> {
    match cmd {
        ScenarioCmd::DebugOverride(args) => {
            let cfg = args.config(ctx.seed)?;
            let report = scenario_debug_override(&cfg.load(&ctx.sim_config)?)?;
            finish(&cfg, &report, report.payload.image.as_ref().map(|i| i.as_bytes()))
        }
        ScenarioCmd::ForgeAttestation(args) => {
            let cfg = args.config(ctx.seed)?;
            let report = scenario_forge_attestation(&cfg.load(&ctx.sim_config)?)?;
            finish(&cfg, &report, report.payload.image.as_ref().map(|i| i.as_bytes()))
        }
    }
}
