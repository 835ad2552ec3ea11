// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Result;
use clap::Subcommand;
use serde_json::json;
use sevforge_core::trace::{
    classify_feedback, count_cs_pulses, locate_ark_window, CsTrace, Tick, DEFAULT_FEEDBACK_GUARD,
};

use crate::util::{emit, read_text};
use crate::Ctx;

#[derive(Debug, Subcommand)]
pub enum TraceCmd {
    /// Count CS pulses up to a tick.
    Count {
        trace: PathBuf,
        #[arg(long)]
        until: Option<Tick>,
    },
    /// Did the flash see further reads after the fault?
    Feedback {
        trace: PathBuf,
        #[arg(long)]
        fault_time: Tick,
        #[arg(long, default_value_t = DEFAULT_FEEDBACK_GUARD)]
        guard: Tick,
    },
    /// ARK verification window from duration-zero probe traces.
    Window {
        #[arg(long)]
        invalid: PathBuf,
        #[arg(long)]
        valid: PathBuf,
        #[arg(long)]
        pulse_count: u32,
    },
}

fn load(path: &Path) -> Result<CsTrace> {
    Ok(CsTrace::from_csv(&read_text(path)?)?)
}

pub fn run(ctx: &Ctx, cmd: TraceCmd) -> Result<ExitCode> {
    match cmd {
        TraceCmd::Count { trace, until } => {
            let t = load(&trace)?;
            let n = count_cs_pulses(&t, until.unwrap_or(t.duration_ticks()));
            emit(ctx.json, &json!({ "pulses": n }), || n.to_string())?;
        }
        TraceCmd::Feedback { trace, fault_time, guard } => {
            let f = classify_feedback(&load(&trace)?, fault_time, guard);
            emit(ctx.json, &json!({ "feedback": f }), || format!("{f:?}").to_lowercase())?;
        }
        TraceCmd::Window { invalid, valid, pulse_count } => {
            let w = locate_ark_window(&load(&invalid)?, &load(&valid)?, pulse_count)?;
            emit(ctx.json, &w, || format!("delay {}..={} ({} ticks)", w.first_delay, w.last_delay, w.width()))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
