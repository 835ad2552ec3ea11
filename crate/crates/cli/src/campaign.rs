// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Result};
use clap::Subcommand;
use serde_json::json;
use sevforge_core::campaign::{search_pipeline, AttemptOutcome, Campaign, RefineConfig, Simulator};
use sevforge_core::image::parse_image;
use sevforge_core::sim::ParamWindow;

use crate::util::{out_line, print_json, read_bytes};
use crate::{Ctx, EXIT_BUDGET_EXHAUSTED};

#[derive(Debug, Subcommand)]
pub enum CampaignCmd {
    /// Attack cycles with parameters drawn from a window; one JSON line per
    /// attempt, then the totals.
    Run {
        #[arg(long, default_value = "7281")]
        profile: String,
        /// Attacker image.
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        budget: u64,
        /// `delay_min,delay_max,duration_min,duration_max`; the profile's
        /// final window when absent.
        #[arg(long)]
        window: Option<String>,
        /// Stop after this many successes.
        #[arg(long)]
        stop_after: Option<u64>,
    },
    /// Delay probes, duration search and optional refinement.
    Search {
        #[arg(long, default_value = "7281")]
        profile: String,
        #[arg(long)]
        original: PathBuf,
        #[arg(long)]
        attacker: PathBuf,
        /// Refinement attempts after the search; none when absent.
        #[arg(long)]
        refine_budget: Option<u64>,
    },
}

fn parse_window(text: &str) -> Result<ParamWindow> {
    let v: Vec<u64> = text.split(',').map(|s| s.trim().parse()).collect::<Result<_, _>>()?;
    let [delay_min, delay_max, duration_min, duration_max] = v[..] else {
        bail!("window needs four comma-separated values, got {text:?}");
    };
    if delay_min > delay_max || duration_min > duration_max {
        bail!("empty window {text:?}");
    }
    Ok(ParamWindow { delay_min, delay_max, duration_min, duration_max })
}

pub fn run(ctx: &Ctx, cmd: CampaignCmd) -> Result<ExitCode> {
    match cmd {
        CampaignCmd::Run { profile, image, budget, window, stop_after } => {
            let sim = Simulator::new(ctx.sim_config.profile(&profile)?)?;
            let image = parse_image(&read_bytes(&image)?)?;
            let window = match window {
                Some(w) => parse_window(&w)?,
                None => sim.profile.final_window,
            };
            let mut campaign = Campaign::new(&sim, ctx.seed);
            for attempt in 0..budget {
                let params = campaign.pick_params(&window);
                let r = campaign.attempt(&params, &image)?;
                let line = json!({
                    "attempt": attempt,
                    "params": r.params,
                    "outcome": r.outcome,
                    "boot": r.boot.kind,
                    "wall_ticks": r.wall_ticks,
                    "seed": r.seed,
                });
                out_line(&line.to_string())?;
                if r.outcome == AttemptOutcome::Success && stop_after.is_some_and(|n| campaign.stats.successes >= n) {
                    break;
                }
            }
            let stats = &campaign.stats;
            out_line(&json!({ "profile": sim.profile.name, "seed": ctx.seed, "window": window, "stats": stats }).to_string())?;
            if stats.successes == 0 {
                eprintln!("no success in {} attempts", stats.attempts);
                return Ok(ExitCode::from(EXIT_BUDGET_EXHAUSTED));
            }
        }
        CampaignCmd::Search { profile, original, attacker, refine_budget } => {
            let sim = Simulator::new(ctx.sim_config.profile(&profile)?)?;
            let original = parse_image(&read_bytes(&original)?)?;
            let attacker = parse_image(&read_bytes(&attacker)?)?;
            let refine = refine_budget.map(RefineConfig::with_budget);
            let report = search_pipeline(&sim, &original, &attacker, ctx.seed, refine.as_ref())?;
            print_json(&report)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
