// SPDX-License-Identifier: Apache-2.0

use std::process::ExitCode;

use anyhow::Result;
use clap::Subcommand;
use serde_json::json;
use sevforge_core::svi2::{decode_command, encode_command, vid_to_voltage, voltage_to_vid, Domain, Svi2Command, Svi2Frame};

use crate::util::{emit, parse_u8};
use crate::Ctx;

#[derive(Debug, Subcommand)]
pub enum Svi2Cmd {
    /// Encode a voltage command.
    Encode {
        #[arg(long, default_value = "both")]
        domain: Domain,
        #[arg(long, value_parser = parse_u8)]
        vid: u8,
        /// Switch telemetry reporting off.
        #[arg(long)]
        telemetry_off: bool,
    },
    /// Decode a frame such as `0x612309c/27`.
    Decode { frame: Svi2Frame },
    /// Output voltage of a VID.
    Voltage {
        #[arg(value_parser = parse_u8)]
        vid: u8,
    },
    /// VID for a voltage in microvolts.
    Vid { microvolts: i64 },
}

pub fn run(ctx: &Ctx, cmd: Svi2Cmd) -> Result<ExitCode> {
    match cmd {
        Svi2Cmd::Encode { domain, vid, telemetry_off } => {
            let frame = encode_command(&Svi2Command::set_vid(domain, vid, !telemetry_off));
            emit(ctx.json, &json!({ "frame": frame }), || frame.to_string())?;
        }
        Svi2Cmd::Decode { frame } => {
            let cmd = decode_command(&frame)?;
            emit(ctx.json, &cmd, || {
                format!(
                    "domain {:?}, vid {:#04x} ({} uV), telemetry {}",
                    cmd.domain,
                    cmd.vid,
                    vid_to_voltage(cmd.vid).output_microvolts(),
                    if cmd.tfn { "unchanged" } else { "off" }
                )
            })?;
        }
        Svi2Cmd::Voltage { vid } => {
            let v = vid_to_voltage(vid);
            emit(ctx.json, &json!({ "vid": vid, "microvolts": v.microvolts() }), || format!("{:.5} V", v.volts()))?;
        }
        Svi2Cmd::Vid { microvolts } => {
            let vid = voltage_to_vid(microvolts)?;
            emit(ctx.json, &json!({ "vid": vid }), || format!("{vid:#04x}"))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
