// SPDX-License-Identifier: Apache-2.0

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::Subcommand;
use serde_json::json;
use sevforge_core::fwcrypto::{
    decrypt_component, decrypt_image_component, encrypt_component, unwrap_ck, unwrap_ikek, wrap_ck, wrap_ikek,
    KeyMaterial, KeyRole,
};
use sevforge_core::image::{insert_payload, parse_image, private_key_from_pem, RsaPrivateKey, replace_ark, verify_chain, ArkRecord, EntryKind, FlashImage};
use sevforge_core::scenario::prepare_payload_image;
use sevforge_core::sim::SimConfig;

use crate::util::{emit, hex_arg, hex_array, parse_u8, print_json, read_bytes, read_text, write_bytes};
use crate::Ctx;

#[derive(Debug, Subcommand)]
pub enum ImageCmd {
    /// Directory, ARK digest and component headers.
    Info { image: PathBuf },
    /// Run the ROM's chain of trust.
    Verify {
        image: PathBuf,
        /// ARK digest held by the ROM, hex.
        #[arg(long, conflicts_with = "profile")]
        rom_digest: Option<String>,
        /// Take the ROM digest from this profile.
        #[arg(long)]
        profile: Option<String>,
        /// Root key, hex; needed for encrypted components.
        #[arg(long)]
        rk: Option<String>,
    },
    /// Swap the ARK for the public half of an RSA key.
    ReplaceArk {
        #[arg(long)]
        image: PathBuf,
        /// PKCS#8 PEM.
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replace a component with a signed, unencrypted payload.
    InsertPayload {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        kind: EntryKind,
        #[arg(long)]
        payload: PathBuf,
        #[arg(long, value_parser = parse_u8)]
        svn: u8,
        /// Signing key, PKCS#8 PEM.
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Attacker ARK, payload as PSP OS and a re-signed SEV firmware.
    Prepare {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        key: PathBuf,
        #[arg(long)]
        payload: PathBuf,
        #[arg(long, value_parser = parse_u8, default_value = "255")]
        svn: u8,
        #[arg(long)]
        rk: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write a component's plaintext body.
    Extract {
        #[arg(long)]
        image: PathBuf,
        #[arg(long)]
        kind: EntryKind,
        #[arg(long)]
        rk: Option<String>,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum CryptoCmd {
    /// Unwrap the iKEK with the root key.
    UnwrapIkek {
        #[arg(long)]
        rk: String,
        #[arg(long)]
        wrapped: String,
    },
    WrapIkek {
        #[arg(long)]
        rk: String,
        #[arg(long)]
        ikek: String,
    },
    /// Unwrap a component key with the iKEK.
    UnwrapCk {
        #[arg(long)]
        ikek: String,
        #[arg(long)]
        wrapped: String,
    },
    WrapCk {
        #[arg(long)]
        ikek: String,
        #[arg(long)]
        ck: String,
    },
    /// AES-CBC encrypt a body with zero padding.
    Encrypt {
        #[arg(long)]
        ck: String,
        #[arg(long)]
        iv: String,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// AES-CBC decrypt; the padding is kept.
    Decrypt {
        #[arg(long)]
        ck: String,
        #[arg(long)]
        iv: String,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn load_image(path: &Path) -> Result<FlashImage> {
    parse_image(&read_bytes(path)?).with_context(|| format!("parsing {}", path.display()))
}

pub fn load_key(path: &Path) -> Result<RsaPrivateKey> {
    private_key_from_pem(&read_text(path)?).with_context(|| format!("loading key {}", path.display()))
}

fn key(role: KeyRole, text: &str) -> Result<KeyMaterial> {
    Ok(KeyMaterial::new(role, &hex_arg(text)?)?)
}

fn root_key(text: &Option<String>) -> Result<Option<KeyMaterial>> {
    text.as_deref().map(|t| key(KeyRole::Root, t)).transpose()
}

pub fn run(ctx: &Ctx, cmd: ImageCmd) -> Result<ExitCode> {
    match cmd {
        ImageCmd::Info { image } => {
            let img = load_image(&image)?;
            let components: Vec<_> = [EntryKind::PspOs, EntryKind::SevFw]
                .into_iter()
                .filter_map(|k| img.component(k).ok().map(|c| (k, c)))
                .map(|(k, c)| {
                    json!({
                        "kind": k,
                        "svn": c.header.svn,
                        "encrypted": c.header.encrypted,
                        "body_size": c.header.body_size,
                    })
                })
                .collect();
            let info = json!({
                "size": img.as_bytes().len(),
                "entries": img.entries(),
                "ark_sha256": hex::encode(img.ark_digest()),
                "embedded_sev_key": img.embedded_sev_key()?.is_some(),
                "components": components,
            });
            print_json(&info)?;
        }
        ImageCmd::Verify { image, rom_digest, profile, rk } => {
            let img = load_image(&image)?;
            let digest = match (rom_digest, profile) {
                (Some(h), _) => hex_array::<32>(&h)?,
                (None, Some(p)) => ctx.sim_config.profile(&p)?.rom_ark_digest,
                (None, None) => SimConfig::default().profile("7281")?.rom_ark_digest,
            };
            let report = verify_chain(&img, &digest, root_key(&rk)?.as_ref());
            emit(ctx.json, &report, || {
                let mut lines: Vec<String> = report
                    .steps
                    .iter()
                    .map(|s| format!("{:<18} {:?}: {}", format!("{:?}", s.step), s.status, s.detail))
                    .collect();
                lines.push(format!("chain {}", if report.passed { "verifies" } else { "does not verify" }));
                lines.join("\n")
            })?;
        }
        ImageCmd::ReplaceArk { image, key, out } => {
            let ark = ArkRecord::from_public_key(&load_key(&key)?.to_public_key())?;
            let img = replace_ark(&load_image(&image)?, &ark)?;
            write_bytes(&out, img.as_bytes())?;
        }
        ImageCmd::InsertPayload { image, kind, payload, svn, key, out } => {
            let img = insert_payload(&load_image(&image)?, &read_bytes(&payload)?, kind, svn, &load_key(&key)?)?;
            write_bytes(&out, img.as_bytes())?;
        }
        ImageCmd::Prepare { image, key, payload, svn, rk, out } => {
            let rk = root_key(&rk)?;
            let prepared = prepare_payload_image(&load_image(&image)?, &load_key(&key)?, &read_bytes(&payload)?, svn, rk.as_ref())?;
            write_bytes(&out, prepared.image.as_ref().expect("freshly built").as_bytes())?;
            emit(ctx.json, &prepared, || format!("ARK sha256 {}", hex::encode(prepared.ark_sha256)))?;
        }
        ImageCmd::Extract { image, kind, rk, out } => {
            let img = load_image(&image)?;
            let comp = img.component(kind)?;
            let body = match root_key(&rk)? {
                Some(rk) if comp.header.encrypted => decrypt_image_component(&img, kind, &rk)?,
                None if comp.header.encrypted => anyhow::bail!("{kind} is encrypted; pass --rk"),
                _ => comp.stored_body[..comp.header.body_size as usize].to_vec(),
            };
            write_bytes(&out, &body)?;
        }
    }
    Ok(ExitCode::SUCCESS)
}

pub fn run_crypto(ctx: &Ctx, cmd: CryptoCmd) -> Result<ExitCode> {
    let out = match cmd {
        CryptoCmd::UnwrapIkek { rk, wrapped } => unwrap_ikek(&key(KeyRole::Root, &rk)?, &key(KeyRole::WrappedIkek, &wrapped)?)?,
        CryptoCmd::WrapIkek { rk, ikek } => wrap_ikek(&key(KeyRole::Root, &rk)?, &key(KeyRole::Ikek, &ikek)?)?,
        CryptoCmd::UnwrapCk { ikek, wrapped } => unwrap_ck(&key(KeyRole::Ikek, &ikek)?, &key(KeyRole::WrappedCk, &wrapped)?)?,
        CryptoCmd::WrapCk { ikek, ck } => wrap_ck(&key(KeyRole::Ikek, &ikek)?, &key(KeyRole::Ck, &ck)?)?,
        CryptoCmd::Encrypt { ck, iv, input, out } => {
            let data = encrypt_component(&key(KeyRole::Ck, &ck)?, &hex_array(&iv)?, &read_bytes(&input)?)?;
            write_bytes(&out, &data)?;
            return Ok(ExitCode::SUCCESS);
        }
        CryptoCmd::Decrypt { ck, iv, input, out } => {
            let data = decrypt_component(&key(KeyRole::Ck, &ck)?, &hex_array(&iv)?, &read_bytes(&input)?)?;
            write_bytes(&out, &data)?;
            return Ok(ExitCode::SUCCESS);
        }
    };
    let text = hex::encode(out.bytes());
    emit(ctx.json, &json!({ "role": format!("{:?}", out.role()), "key": text }), || text.clone())?;
    Ok(ExitCode::SUCCESS)
}
