// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::Subcommand;
use serde_json::json;
use sevforge_core::keyderive::{derive_cek, derive_id, derive_secret_set, derive_vcek, downgrade, SecretSet, TcbVersion};
use sevforge_core::scenario::{derive_vceks, extract_secrets, PublicKey};

use crate::util::{emit, hex_arg, hex_array, parse_u8, print_json, read_text};
use crate::Ctx;

#[derive(Debug, Subcommand)]
pub enum KeysCmd {
    /// CEK public key from the 32-byte CEK secret.
    Cek {
        #[arg(long)]
        secret: String,
    },
    /// Chip ID from the CEK secret.
    Id {
        #[arg(long)]
        secret: String,
    },
    /// All secrets the SEV firmware holds after booting with a TCB version.
    Ladder {
        /// 48-byte VCEK fuse secret.
        #[arg(long)]
        sec255: String,
        #[arg(long)]
        tcb: TcbVersion,
    },
    /// VCEK public key for a TCB version.
    Vcek {
        #[arg(long)]
        sec255: String,
        #[arg(long)]
        tcb: TcbVersion,
    },
    /// VCEK for a lower TCB version from a secret set printed by `ladder`.
    Downgrade {
        #[arg(long)]
        set: PathBuf,
        #[arg(long)]
        target: TcbVersion,
    },
    /// What a PSP OS payload running at `payload-svn` extracts, and the VCEKs
    /// it yields.
    Extract {
        /// Fuse store JSON with `cek_secret` and `vcek_secret_255`.
        #[arg(long)]
        fuses: PathBuf,
        #[arg(long, value_parser = parse_u8, default_value = "255")]
        payload_svn: u8,
        #[arg(long, required = true)]
        tcb: Vec<TcbVersion>,
    },
}

pub fn run(ctx: &Ctx, cmd: KeysCmd) -> Result<ExitCode> {
    match cmd {
        KeysCmd::Cek { secret } => {
            let k = PublicKey::from(&derive_cek(&hex_arg(&secret)?)?);
            emit(ctx.json, &k, || format!("x {}\ny {}", hex::encode(k.x), hex::encode(k.y)))?;
        }
        KeysCmd::Id { secret } => {
            let id = hex::encode(derive_id(&hex_arg(&secret)?)?);
            emit(ctx.json, &json!({ "id": id }), || id.clone())?;
        }
        KeysCmd::Ladder { sec255, tcb } => print_json(&derive_secret_set(&hex_array(&sec255)?, tcb))?,
        KeysCmd::Vcek { sec255, tcb } => {
            let set = derive_secret_set(&hex_array(&sec255)?, tcb);
            let k = PublicKey::from(&derive_vcek(&set.final_secret)?);
            emit(ctx.json, &k, || format!("x {}\ny {}", hex::encode(k.x), hex::encode(k.y)))?;
        }
        KeysCmd::Downgrade { set, target } => {
            let set: SecretSet = serde_json::from_str(&read_text(&set)?)?;
            let k = PublicKey::from(&derive_vcek(&downgrade(&set, target)?)?);
            emit(ctx.json, &k, || format!("x {}\ny {}", hex::encode(k.x), hex::encode(k.y)))?;
        }
        KeysCmd::Extract { fuses, payload_svn, tcb } => {
            let fuses = serde_json::from_str(&read_text(&fuses)?)?;
            let extracted = extract_secrets(&fuses, payload_svn);
            let vceks = derive_vceks(&extracted.rom_stage, &tcb)?;
            print_json(&json!({ "extracted": extracted, "vceks": vceks }))?;
        }
    }
    Ok(ExitCode::SUCCESS)
}
