// SPDX-License-Identifier: Apache-2.0

use rsa::RsaPublicKey;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha384};

use super::component::{signed_message, Component};
use super::{find_embedded_key, pss, ArkRecord, EntryKind, FlashImage};
use crate::fwcrypto::{decrypt_component, unwrap_ck, unwrap_ikek, KeyMaterial, KeyRole};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ChainStep {
    ArkHash,
    PspOsSignature,
    SevFwSignature,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum StepStatus {
    Pass,
    Fail,
    Skipped,
}

/// Which key verified the SEV firmware.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SevFwKeySource {
    Ark,
    PspOsEmbedded,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StepReport {
    pub step: ChainStep,
    pub status: StepStatus,
    pub detail: String,
    /// SHA-384 of the signed message (header and plaintext body), for
    /// signature steps that got as far as hashing.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub signed_digest: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct VerificationReport {
    pub steps: Vec<StepReport>,
    pub sev_fw_key: Option<SevFwKeySource>,
    /// SVN from the verified PSP OS header; this is what the ROM hands to the
    /// key ladder.
    pub psp_os_svn: Option<u8>,
    pub sev_fw_svn: Option<u8>,
    pub passed: bool,
}

impl VerificationReport {
    pub fn status(&self, step: ChainStep) -> StepStatus {
        self.steps.iter().find(|s| s.step == step).map_or(StepStatus::Skipped, |s| s.status)
    }
}

fn step(step: ChainStep, status: StepStatus, detail: impl Into<String>) -> StepReport {
    StepReport { step, status, detail: detail.into(), signed_digest: None }
}

/// Plaintext body of a component, decrypting through the key hierarchy when
/// needed.
fn plaintext(image: &FlashImage, comp: &Component, rk: Option<&KeyMaterial>) -> Result<Vec<u8>, String> {
    if !comp.header.encrypted {
        return Ok(comp.stored_body.clone());
    }
    let rk = rk.ok_or("component is encrypted and no root key was supplied")?;
    let chain = || -> Result<Vec<u8>, crate::fwcrypto::FwCryptoError> {
        let wrapped_ikek = KeyMaterial::new(KeyRole::WrappedIkek, image.ikek_blob()?)?;
        let ikek = unwrap_ikek(rk, &wrapped_ikek)?;
        let ck = unwrap_ck(&ikek, &KeyMaterial::new(KeyRole::WrappedCk, comp.header.wrapped_ck_bytes())?)?;
        let mut body = decrypt_component(&ck, &comp.header.iv, &comp.stored_body)?;
        body.truncate(comp.header.body_size as usize);
        Ok(body)
    };
    chain().map_err(|e| e.to_string())
}

fn check_signature(
    which: ChainStep,
    image: &FlashImage,
    kind: EntryKind,
    key: &RsaPublicKey,
    rk: Option<&KeyMaterial>,
) -> (StepReport, Option<Vec<u8>>, Option<u8>) {
    let comp = match image.component(kind) {
        Ok(c) => c,
        Err(e) => return (step(which, StepStatus::Fail, e.to_string()), None, None),
    };
    let body = match plaintext(image, &comp, rk) {
        Ok(b) => b,
        Err(e) => return (step(which, StepStatus::Fail, e), None, None),
    };
    let msg = signed_message(&comp.header, &body);
    let digest = hex::encode(Sha384::digest(&msg));
    let ok = pss::verify(key, &msg, &comp.signature);
    let mut report = step(
        which,
        if ok { StepStatus::Pass } else { StepStatus::Fail },
        if ok { "signature valid" } else { "signature invalid" },
    );
    report.signed_digest = Some(digest);
    (report, ok.then_some(body), ok.then_some(comp.header.svn))
}

fn skip_rest(steps: &mut Vec<StepReport>, from: &[ChainStep], why: &str) {
    for s in from {
        steps.push(step(*s, StepStatus::Skipped, why));
    }
}

/// Models the ROM bootloader: hash the ARK record and compare it with the
/// digest burned into ROM, then check the PSP OS signature with the ARK and
/// the SEV firmware signature with the ARK or, when the PSP OS embeds one,
/// with the embedded key. `rk` allows verifying encrypted components.
pub fn verify_chain(image: &FlashImage, rom_digest: &[u8; 32], rk: Option<&KeyMaterial>) -> VerificationReport {
    let mut steps = Vec::with_capacity(3);
    let mut report = VerificationReport { steps: vec![], sev_fw_key: None, psp_os_svn: None, sev_fw_svn: None, passed: false };

    let actual = image.ark_digest();
    if &actual != rom_digest {
        steps.push(step(
            ChainStep::ArkHash,
            StepStatus::Fail,
            format!("ARK digest {} does not match ROM digest {}", hex::encode(actual), hex::encode(rom_digest)),
        ));
        skip_rest(&mut steps, &[ChainStep::PspOsSignature, ChainStep::SevFwSignature], "ARK not trusted");
        report.steps = steps;
        return report;
    }
    steps.push(step(ChainStep::ArkHash, StepStatus::Pass, "ARK digest matches ROM"));

    let ark = match image.ark().and_then(|a| a.to_public_key()) {
        Ok(k) => k,
        Err(e) => {
            steps.push(step(ChainStep::PspOsSignature, StepStatus::Fail, e.to_string()));
            skip_rest(&mut steps, &[ChainStep::SevFwSignature], "PSP OS not trusted");
            report.steps = steps;
            return report;
        }
    };

    let (psp_step, psp_body, psp_svn) = check_signature(ChainStep::PspOsSignature, image, EntryKind::PspOs, &ark, rk);
    steps.push(psp_step);
    let Some(psp_body) = psp_body else {
        skip_rest(&mut steps, &[ChainStep::SevFwSignature], "PSP OS not trusted");
        report.steps = steps;
        return report;
    };
    report.psp_os_svn = psp_svn;

    let (source, sev_key) = match find_embedded_key(&psp_body) {
        None => (SevFwKeySource::Ark, Ok(ark)),
        Some(k) => (SevFwKeySource::PspOsEmbedded, k.and_then(|k: ArkRecord| k.to_public_key())),
    };
    report.sev_fw_key = Some(source);
    match sev_key {
        Ok(key) => {
            let (s, _, svn) = check_signature(ChainStep::SevFwSignature, image, EntryKind::SevFw, &key, rk);
            steps.push(s);
            report.sev_fw_svn = svn;
        }
        Err(e) => steps.push(step(ChainStep::SevFwSignature, StepStatus::Fail, format!("embedded key: {e}"))),
    }
    report.passed = steps.iter().all(|s| s.status == StepStatus::Pass);
    report.steps = steps;
    report
}
