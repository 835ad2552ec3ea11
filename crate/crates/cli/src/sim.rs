// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::Subcommand;
use serde_json::json;
use sevforge_core::sim::{boot_image_bytes, InjectionSchedule, PROFILE_NAMES};

use crate::util::{emit, print_json, read_bytes, read_text, write_bytes};
use crate::Ctx;

#[derive(Debug, Subcommand)]
pub enum SimCmd {
    /// Boot an image once and print the outcome and CS trace.
    Boot {
        #[arg(long)]
        image: PathBuf,
        #[arg(long, default_value = "7281")]
        profile: String,
        /// Injection schedule JSON; no injection when absent.
        #[arg(long)]
        schedule: Option<PathBuf>,
        /// Where to write the trace CSV; printed after the outcome otherwise.
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Print a CPU profile, e.g. as a starting point for a config file.
    Profile { name: String },
    /// List the built-in profiles.
    Profiles,
}

pub fn run(ctx: &Ctx, cmd: SimCmd) -> Result<ExitCode> {
    match cmd {
        SimCmd::Boot { image, profile, schedule, trace_out } => {
            let profile = ctx.sim_config.profile(&profile)?;
            let schedule = match schedule {
                Some(p) => InjectionSchedule::from_json(&read_text(&p)?)?,
                None => InjectionSchedule::default(),
            };
            let model = profile.fault_model(ctx.seed)?;
            let outcome = boot_image_bytes(&read_bytes(&image)?, &schedule, &model, &profile)?;
            let summary = json!({
                "profile": profile.name,
                "seed": ctx.seed,
                "kind": outcome.kind,
                "fault_minimum_microvolts": outcome.fault_minimum_microvolts,
                "fault_tick": outcome.fault_tick,
                "fault_depth_microvolts": outcome.fault_depth_microvolts,
                "reference_tick": outcome.reference_tick,
                "dropped": outcome.dropped,
            });
            emit(ctx.json, &summary, || {
                let kind = serde_json::to_value(outcome.kind).expect("enum serializes");
                format!("outcome {}", kind.as_str().unwrap_or_default())
            })?;
            let csv = outcome.trace.to_csv();
            match trace_out {
                Some(p) => write_bytes(&p, csv.as_bytes())?,
                None => print!("{csv}"),
            }
        }
        SimCmd::Profile { name } => print_json(&ctx.sim_config.profile(&name)?)?,
        SimCmd::Profiles => {
            emit(ctx.json, &PROFILE_NAMES, || PROFILE_NAMES.join("\n"))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
