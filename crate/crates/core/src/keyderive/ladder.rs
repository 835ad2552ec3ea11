// SPDX-License-Identifier: Apache-2.0

use serde::{Deserialize, Serialize};

use super::{sha384, KeyDeriveError, Secret48, TcbVersion};

/// Hash `secret` down from SVN 255 to `svn`: `255 - svn` SHA-384 steps.
pub fn incorporate_svn(secret: &Secret48, svn: u8) -> Secret48 {
    hash_steps(*secret, 255 - u32::from(svn))
}

/// `SHA384(0x00 * 8 || secret)`: seals the current SVN before the next one is
/// mixed in.
pub fn lock_secret(secret: &Secret48) -> Secret48 {
    let mut buf = [0u8; 56];
    buf[8..].copy_from_slice(secret);
    sha384(&buf)
}

fn hash_steps(mut s: Secret48, n: u32) -> Secret48 {
    for _ in 0..n {
        s = sha384(&s);
    }
    s
}

/// Secret one hash past the SVN, i.e. the value for `svn - 1`. Absent at SVN 0.
fn below(s: &Secret48, svn: u8) -> Option<Secret48> {
    (svn > 0).then(|| sha384(s))
}

/// Runs levels `start..8` from the locked secret entering `start` and returns
/// the final secret.
fn continue_ladder(
    mut s: Secret48,
    start: usize,
    svns: &[u8; 8],
    per_level: &mut [Option<Secret48>; 8],
) -> Secret48 {
    for j in start..8 {
        s = incorporate_svn(&s, svns[j]);
        per_level[j] = below(&s, svns[j]);
        if j < 7 {
            s = lock_secret(&s);
        }
    }
    sha384(&s)
}

/// The secrets available to the SEV firmware after a boot with `tcb`.
///
/// `per_level[i]` holds the secret one hash below SVN `v_i` on level `i`, or
/// `None` when `v_i` is 0. `final_secret` is the level-7 value and is always
/// present.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SecretSet {
    pub tcb: TcbVersion,
    #[serde(with = "level_hex")]
    pub per_level: [Option<Secret48>; 8],
    #[serde(rename = "final", with = "crate::hexser")]
    pub final_secret: Secret48,
}

impl SecretSet {
    /// Completes the ladder from ROM bootloader outputs. `tcb.boot_loader`
    /// must equal the SVN the ROM stage used.
    pub fn from_rom_stage(rom: &RomStageSecrets, tcb: TcbVersion) -> Result<Self, KeyDeriveError> {
        if tcb.boot_loader != rom.v0 {
            return Err(KeyDeriveError::BadTcb(format!(
                "{tcb}: boot loader SVN must be {:02x}",
                rom.v0
            )));
        }
        let mut per_level = [None; 8];
        per_level[0] = rom.minus_one;
        let final_secret = continue_ladder(rom.locked, 1, &tcb.to_bytes(), &mut per_level);
        Ok(Self { tcb, per_level, final_secret })
    }

    /// Assembles the set from the three boot-stage outputs.
    pub fn from_stages(rom: &RomStageSecrets, psp: &PspOsStage, app: &SevAppStage) -> Self {
        let mut per_level = [None; 8];
        per_level[0] = rom.minus_one;
        per_level[1..7].copy_from_slice(&psp.levels);
        per_level[7] = app.level7;
        Self {
            tcb: TcbVersion::from_bytes([rom.v0, 0, 0, 0, 0, 0, psp.v6, app.v7]),
            per_level,
            final_secret: app.final_secret,
        }
    }

    pub fn level(&self, i: usize) -> Result<&Secret48, KeyDeriveError> {
        self.per_level[i].as_ref().ok_or(KeyDeriveError::AbsentLevel(i))
    }
}

/// Full ladder from the fuse-derived `sec_255` for `tcb`.
pub fn derive_secret_set(sec_255: &Secret48, tcb: TcbVersion) -> SecretSet {
    let mut per_level = [None; 8];
    let final_secret = continue_ladder(*sec_255, 0, &tcb.to_bytes(), &mut per_level);
    SecretSet { tcb, per_level, final_secret }
}

/// Final secret for a lower `target`, computed only from what `set` holds.
pub fn downgrade(set: &SecretSet, target: TcbVersion) -> Result<Secret48, KeyDeriveError> {
    let i = set.tcb.first_difference(&target).ok_or(KeyDeriveError::NoChange)?;
    let (from, to) = (set.tcb.to_bytes()[i], target.to_bytes()[i]);
    if to > from {
        return Err(KeyDeriveError::UpgradeForbidden { index: i, from, to });
    }
    let mut s = hash_steps(*set.level(i)?, u32::from(from - 1 - to));
    if i == 7 {
        return Ok(sha384(&s));
    }
    s = lock_secret(&s);
    let mut scratch = [None; 8];
    Ok(continue_ladder(s, i + 1, &target.to_bytes(), &mut scratch))
}

/// What the ROM bootloader derives from the fuse secret and the PSP OS SVN.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RomStageSecrets {
    pub v0: u8,
    /// `sec_v0_255`, handed to the PSP OS.
    #[serde(with = "crate::hexser")]
    pub locked: Secret48,
    /// `sec_(v0-1)`, absent when `v0` is 0.
    #[serde(with = "crate::hexser::opt")]
    pub minus_one: Option<Secret48>,
}

pub fn stage_rom_bl(fuse_secret: &Secret48, v0: u8) -> RomStageSecrets {
    let s = incorporate_svn(fuse_secret, v0);
    RomStageSecrets { v0, locked: lock_secret(&s), minus_one: below(&s, v0) }
}

/// PSP OS outputs: levels 1 to 6 (TEE and reserved SVNs forced to zero, then
/// the SEV app SVN) and the locked secret for the microcode level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PspOsStage {
    pub v6: u8,
    pub levels: [Option<Secret48>; 6],
    pub handoff: Secret48,
}

pub fn stage_psp_os(sec_v0_255: &Secret48, v6: u8) -> PspOsStage {
    let mut s = *sec_v0_255;
    let mut levels = [None; 6];
    for (slot, v) in levels.iter_mut().zip([0, 0, 0, 0, 0, v6]) {
        s = incorporate_svn(&s, v);
        *slot = below(&s, v);
        s = lock_secret(&s);
    }
    PspOsStage { v6, levels, handoff: s }
}

/// SEV app outputs after incorporating the microcode SVN.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SevAppStage {
    pub v7: u8,
    pub level7: Option<Secret48>,
    pub final_secret: Secret48,
}

pub fn stage_sev_app(handoff: &Secret48, v7: u8) -> SevAppStage {
    let s = incorporate_svn(handoff, v7);
    SevAppStage { v7, level7: below(&s, v7), final_secret: sha384(&s) }
}

mod level_hex {
    use serde::{de::Error as _, Deserialize, Deserializer, Serializer};

    use super::Secret48;

    pub fn serialize<S: Serializer>(levels: &[Option<Secret48>; 8], s: S) -> Result<S::Ok, S::Error> {
        s.collect_seq(levels.iter().map(|l| l.map(hex::encode)))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<[Option<Secret48>; 8], D::Error> {
        let raw: Vec<Option<String>> = Vec::deserialize(d)?;
        if raw.len() != 8 {
            return Err(D::Error::custom(format!("expected 8 levels, got {}", raw.len())));
        }
        let mut out = [None; 8];
        for (slot, item) in out.iter_mut().zip(raw) {
            if let Some(h) = item {
                let v = hex::decode(h).map_err(D::Error::custom)?;
                *slot = Some(v.try_into().map_err(|_| D::Error::custom("level secret must be 48 bytes"))?);
            }
        }
        Ok(out)
    }
}
