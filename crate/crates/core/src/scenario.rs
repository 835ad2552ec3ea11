// SPDX-License-Identifier: Apache-2.0

//! End-to-end attack scenarios against the simulated target.
//!
//! Debug override: replace the ARK with the attacker's key, swap in a PSP OS
//! payload, glitch until the ROM skips the ARK check, and show that the
//! payload runs although the chain does not verify.
//!
//! Forge attestation: the same campaign with an extraction payload running
//! at PSP OS SVN 255, followed by offline derivation of the CEK, chip ID and
//! VCEKs for any TCB version with a boot loader SVN of at most 255.

use std::path::{Path, PathBuf};

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::campaign::{AttemptOutcome, Campaign, CampaignError, CampaignStats, GlitchParams, Simulator};
use crate::fwcrypto::{decrypt_image_component, FwCryptoError, KeyMaterial};
use crate::image::{insert_payload, parse_image, private_key_from_pem, RsaPrivateKey, replace_ark, verify_chain, ArkRecord, EntryKind, FlashImage, ImageError, VerificationReport};
use crate::keyderive::{
    derive_cek, derive_id, derive_vcek, downgrade, stage_rom_bl, ChipSecrets, Curve, EndorsementKey, KeyDeriveError,
    KeyKind, RomStageSecrets, SecretSet, TcbVersion,
};
use crate::sim::{BootOutcomeKind, ParamWindow, SimConfig, SimError};
use crate::trace::Tick;

pub const REPORT_SCHEMA: u32 = 1;
pub const DEBUG_OVERRIDE_PAYLOAD: &[u8] = b"sevforge debug-override payload\0";
pub const EXTRACTION_PAYLOAD: &[u8] = b"sevforge extraction payload\0";

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error(transparent)]
    Campaign(#[from] CampaignError),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Image(#[from] ImageError),
    #[error(transparent)]
    Crypto(#[from] FwCryptoError),
    #[error(transparent)]
    Key(#[from] KeyDeriveError),
    #[error("{path}: {reason}")]
    Input { path: PathBuf, reason: String },
    #[error("config: {0}")]
    Config(String),
}

/// Scenario settings as read from a JSON file or the command line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub profile: String,
    pub original_image: PathBuf,
    /// PKCS#8 PEM of the attacker's RSA key.
    pub attacker_key: PathBuf,
    /// Hex root key, needed to re-sign an encrypted SEV firmware.
    #[serde(default)]
    pub root_key: Option<String>,
    /// JSON fuse store; a seeded one is generated when absent.
    #[serde(default)]
    pub fuses: Option<PathBuf>,
    pub budget: u64,
    pub seed: u64,
    /// Sampling window; defaults to the profile's final window.
    #[serde(default)]
    pub window: Option<ParamWindow>,
    #[serde(default)]
    pub tcb_versions: Vec<TcbVersion>,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        serde_json::from_str(text).map_err(|e| ScenarioError::Config(e.to_string()))
    }

    /// Loads every referenced file and resolves the profile.
    pub fn load(&self, sim_config: &SimConfig) -> Result<ScenarioSetup, ScenarioError> {
        let profile = sim_config.profile(&self.profile)?;
        let original = parse_image(&read(&self.original_image)?)?;
        let pem = String::from_utf8(read(&self.attacker_key)?).map_err(|e| input(&self.attacker_key, e))?;
        let attacker_key = private_key_from_pem(&pem).map_err(|e| input(&self.attacker_key, e))?;
        let rk = match &self.root_key {
            Some(h) => Some(KeyMaterial::root(&hex::decode(h).map_err(|e| ScenarioError::Config(format!("root key: {e}")))?)?),
            None => None,
        };
        let fuses = match &self.fuses {
            Some(p) => serde_json::from_slice(&read(p)?).map_err(|e| input(p, e))?,
            None => seeded_fuses(self.seed),
        };
        let window = self.window.unwrap_or(profile.final_window);
        Ok(ScenarioSetup {
            sim: Simulator::new(profile)?,
            original,
            attacker_key,
            rk,
            fuses,
            window,
            budget: self.budget,
            seed: self.seed,
            tcb_versions: self.tcb_versions.clone(),
        })
    }
}

fn read(path: &Path) -> Result<Vec<u8>, ScenarioError> {
    std::fs::read(path).map_err(|e| input(path, e))
}

fn input(path: &Path, e: impl std::fmt::Display) -> ScenarioError {
    ScenarioError::Input { path: path.to_path_buf(), reason: e.to_string() }
}

/// Fuse store drawn from `seed`, for runs without a fixed chip.
pub fn seeded_fuses(seed: u64) -> ChipSecrets {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(2);
    let mut fuses = ChipSecrets { cek_secret: [0; 32], vcek_secret_255: [0; 48] };
    rng.fill_bytes(&mut fuses.cek_secret);
    rng.fill_bytes(&mut fuses.vcek_secret_255);
    fuses
}

/// Everything a scenario needs, already loaded.
#[derive(Debug, Clone)]
pub struct ScenarioSetup {
    pub sim: Simulator,
    pub original: FlashImage,
    pub attacker_key: RsaPrivateKey,
    pub rk: Option<KeyMaterial>,
    pub fuses: ChipSecrets,
    pub window: ParamWindow,
    pub budget: u64,
    pub seed: u64,
    pub tcb_versions: Vec<TcbVersion>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreparedImage {
    #[serde(skip)]
    pub image: Option<FlashImage>,
    pub psp_os_svn: u8,
    #[serde(with = "crate::hexser")]
    pub payload_sha256: [u8; 32],
    #[serde(with = "crate::hexser")]
    pub ark_sha256: [u8; 32],
    /// Whether the SEV firmware was re-signed with the attacker's key.
    pub sev_fw_resigned: bool,
}

/// Builds the attacker image: attacker ARK, `payload` as PSP OS with
/// `svn`, and the SEV firmware re-signed when its plaintext is available.
pub fn prepare_payload_image(
    original: &FlashImage,
    attacker_key: &RsaPrivateKey,
    payload: &[u8],
    svn: u8,
    rk: Option<&KeyMaterial>,
) -> Result<PreparedImage, ScenarioError> {
    let sev_plain = match original.component(EntryKind::SevFw) {
        Ok(c) if !c.header.encrypted => Some(c.stored_body[..c.header.body_size as usize].to_vec()),
        Ok(_) => rk.map(|rk| decrypt_image_component(original, EntryKind::SevFw, rk)).transpose()?,
        Err(ImageError::MissingEntry(_)) => None,
        Err(e) => return Err(e.into()),
    };
    let ark = ArkRecord::from_public_key(&attacker_key.to_public_key())?;
    let mut image = replace_ark(original, &ark)?;
    image = insert_payload(&image, payload, EntryKind::PspOs, svn, attacker_key)?;
    let sev_svn = original.component(EntryKind::SevFw).map(|c| c.header.svn);
    let sev_fw_resigned = match (sev_plain, sev_svn) {
        (Some(body), Ok(sev_svn)) => {
            image = insert_payload(&image, &body, EntryKind::SevFw, sev_svn, attacker_key)?;
            true
        }
        _ => false,
    };
    Ok(PreparedImage {
        psp_os_svn: svn,
        payload_sha256: Sha256::digest(payload).into(),
        ark_sha256: image.ark_digest(),
        sev_fw_resigned,
        image: Some(image),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttemptLogEntry {
    pub attempt: u64,
    pub delay: Tick,
    pub duration: Tick,
    pub outcome: AttemptOutcome,
    pub boot: BootOutcomeKind,
    pub wall_ticks: Tick,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSummary {
    pub window: ParamWindow,
    pub budget: u64,
    pub stats: CampaignStats,
    pub success: GlitchParams,
    pub attempt_log: Vec<AttemptLogEntry>,
}

/// Glitches `image` with parameters from `window` until the ROM skips the
/// ARK check or the budget runs out.
pub fn campaign_until_bypass(
    sim: &Simulator,
    image: &FlashImage,
    window: &ParamWindow,
    budget: u64,
    seed: u64,
) -> Result<CampaignSummary, ScenarioError> {
    let mut campaign = Campaign::new(sim, seed);
    let mut log = Vec::new();
    for attempt in 0..budget {
        let params = campaign.pick_params(window);
        let r = campaign.attempt(&params, image)?;
        log.push(AttemptLogEntry {
            attempt,
            delay: params.delay,
            duration: params.duration,
            outcome: r.outcome,
            boot: r.boot.kind,
            wall_ticks: r.wall_ticks,
            seed: r.seed,
        });
        if r.outcome == AttemptOutcome::Success {
            return Ok(CampaignSummary { window: *window, budget, stats: campaign.stats, success: params, attempt_log: log });
        }
    }
    Err(CampaignError::BudgetExhausted(campaign.stats).into())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DebugOverrideReport {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub profile: String,
    pub payload: PreparedImage,
    pub campaign: CampaignSummary,
    /// How the ROM would judge the payload image without a fault.
    pub verification: VerificationReport,
    /// The PSP OS payload ran: the ROM continued past the ARK check.
    pub payload_executed: bool,
}

pub fn scenario_debug_override(setup: &ScenarioSetup) -> Result<DebugOverrideReport, ScenarioError> {
    let prepared =
        prepare_payload_image(&setup.original, &setup.attacker_key, DEBUG_OVERRIDE_PAYLOAD, 255, setup.rk.as_ref())?;
    let image = prepared.image.as_ref().expect("freshly built");
    let campaign = campaign_until_bypass(&setup.sim, image, &setup.window, setup.budget, setup.seed)?;
    let verification = verify_chain(image, &setup.sim.profile.rom_ark_digest, setup.rk.as_ref());
    let payload_executed = campaign.attempt_log.last().is_some_and(|e| e.boot == BootOutcomeKind::Bypass);
    Ok(DebugOverrideReport {
        schema_version: REPORT_SCHEMA,
        scenario: "debug-override".into(),
        seed: setup.seed,
        profile: setup.sim.profile.name.clone(),
        payload: prepared,
        campaign,
        verification,
        payload_executed,
    })
}

/// What the extraction payload reads out while running at PSP OS level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedSecrets {
    #[serde(with = "crate::hexser")]
    pub cek_secret: [u8; 32],
    pub rom_stage: RomStageSecrets,
}

/// Simulated extraction: the ROM derived its stage secrets for the payload's
/// SVN, and the payload copies them out together with the CEK secret.
pub fn extract_secrets(fuses: &ChipSecrets, payload_svn: u8) -> ExtractedSecrets {
    ExtractedSecrets { cek_secret: fuses.cek_secret, rom_stage: stage_rom_bl(&fuses.vcek_secret_255, payload_svn) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DerivationRoute {
    /// Same boot loader SVN as the payload: finish the ladder.
    Direct,
    /// Lower boot loader SVN: hash the level-0 secret down, then finish.
    Downgrade,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PublicKey {
    pub kind: KeyKind,
    pub curve: Curve,
    #[serde(with = "crate::hexser")]
    pub x: [u8; 48],
    #[serde(with = "crate::hexser")]
    pub y: [u8; 48],
}

impl From<&EndorsementKey> for PublicKey {
    fn from(k: &EndorsementKey) -> Self {
        Self { kind: k.kind, curve: k.curve, x: k.public_x, y: k.public_y }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VcekDerivation {
    pub tcb: TcbVersion,
    pub route: DerivationRoute,
    /// SHA-384 steps applied to the level-0 secret before the ladder resumes.
    pub level0_steps: u32,
    #[serde(with = "crate::hexser")]
    pub final_secret_sha256: [u8; 32],
    pub vcek: PublicKey,
}

/// Final VCEK secret for `target` from the ROM-stage outputs alone.
pub fn vcek_secret_from_rom_stage(
    rom: &RomStageSecrets,
    target: TcbVersion,
) -> Result<([u8; 48], DerivationRoute), KeyDeriveError> {
    if target.boot_loader == rom.v0 {
        return Ok((SecretSet::from_rom_stage(rom, target)?.final_secret, DerivationRoute::Direct));
    }
    let above = SecretSet::from_rom_stage(rom, TcbVersion { boot_loader: rom.v0, ..target })?;
    Ok((downgrade(&above, target)?, DerivationRoute::Downgrade))
}

pub fn derive_vceks(rom: &RomStageSecrets, tcbs: &[TcbVersion]) -> Result<Vec<VcekDerivation>, KeyDeriveError> {
    tcbs.iter()
        .map(|&tcb| {
            let (secret, route) = vcek_secret_from_rom_stage(rom, tcb)?;
            let key = derive_vcek(&secret)?;
            Ok(VcekDerivation {
                tcb,
                route,
                level0_steps: match route {
                    DerivationRoute::Direct => 0,
                    DerivationRoute::Downgrade => u32::from(rom.v0 - 1 - tcb.boot_loader),
                },
                final_secret_sha256: Sha256::digest(secret).into(),
                vcek: PublicKey::from(&key),
            })
        })
        .collect()
}

/// TCB versions derived when the config lists none.
pub fn default_tcb_versions() -> Vec<TcbVersion> {
    ["03:00:00:00:00:00:08:73", "02:00:00:00:00:00:08:73", "00:00:00:00:00:00:00:00", "ff:00:00:00:00:00:ff:ff"]
        .iter()
        .map(|s| s.parse().expect("valid literal"))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgeAttestationReport {
    pub schema_version: u32,
    pub scenario: String,
    pub seed: u64,
    pub profile: String,
    pub payload: PreparedImage,
    pub campaign: CampaignSummary,
    pub extracted: ExtractedSecrets,
    pub cek: PublicKey,
    #[serde(with = "crate::hexser")]
    pub chip_id: [u8; 64],
    pub vceks: Vec<VcekDerivation>,
}

pub fn scenario_forge_attestation(setup: &ScenarioSetup) -> Result<ForgeAttestationReport, ScenarioError> {
    const PAYLOAD_SVN: u8 = 255;
    let prepared =
        prepare_payload_image(&setup.original, &setup.attacker_key, EXTRACTION_PAYLOAD, PAYLOAD_SVN, setup.rk.as_ref())?;
    let image = prepared.image.as_ref().expect("freshly built");
    let campaign = campaign_until_bypass(&setup.sim, image, &setup.window, setup.budget, setup.seed)?;
    let extracted = extract_secrets(&setup.fuses, PAYLOAD_SVN);
    let tcbs = if setup.tcb_versions.is_empty() { default_tcb_versions() } else { setup.tcb_versions.clone() };
    let vceks = derive_vceks(&extracted.rom_stage, &tcbs)?;
    Ok(ForgeAttestationReport {
        schema_version: REPORT_SCHEMA,
        scenario: "forge-attestation".into(),
        seed: setup.seed,
        profile: setup.sim.profile.name.clone(),
        payload: prepared,
        campaign,
        cek: PublicKey::from(&derive_cek(&extracted.cek_secret)?),
        chip_id: derive_id(&extracted.cek_secret)?,
        extracted,
        vceks,
    })
}
