// SPDX-License-Identifier: Apache-2.0

//! Simulated SPI flash image: directory, ARK record, signed (optionally
//! encrypted) components, and the ROM bootloader's verification chain.
//!
//! All integers are little-endian. The byte layout is documented in
//! `docs/FORMATS.md`.
//!
//! ```text
//! 0x00  directory header   "$SFD", version, entry count, image size
//! 0x10  directory entries  kind, offset, length (16 bytes each)
//!       ARK record         hashed by the ROM
//!       wrapped iKEK
//!       PSP OS component   header | body | signature
//!       SEV FW component   header | body | signature
//! ```

mod ark;
mod build;
mod component;
pub mod pss;
mod verify;

use std::fmt;
use std::str::FromStr;

use rsa::pkcs8::DecodePrivateKey;
pub use rsa::RsaPrivateKey;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

pub use ark::{ArkRecord, ARK_HEADER_LEN, ARK_MAGIC};
pub use build::{build_component, build_image, ComponentEncryption, ComponentSpec};
pub use component::{
    signed_message, Component, ComponentHeader, COMPONENT_MAGIC, HEADER_LEN, OFF_BODY_SIZE,
    OFF_ENCRYPTED, OFF_IV, OFF_KEY_BITS, OFF_SIG_LEN, OFF_SIG_OFFSET, OFF_STORED_SIZE, OFF_SVN,
    OFF_WRAPPED_CK, SIGNATURE_LEN,
};
pub use verify::{verify_chain, ChainStep, SevFwKeySource, StepReport, StepStatus, VerificationReport};

pub const DIRECTORY_MAGIC: [u8; 4] = *b"$SFD";
pub const DIRECTORY_VERSION: u16 = 1;
pub const DIRECTORY_HEADER_LEN: usize = 16;
pub const DIRECTORY_ENTRY_LEN: usize = 16;
pub const ALIGNMENT: usize = 16;
/// Fill byte for gaps, matching erased NOR flash.
pub const ERASED: u8 = 0xff;
/// Prefix of a public key blob embedded at the start of the PSP OS body.
pub const EMBEDDED_KEY_MAGIC: [u8; 4] = *b"$EK1";

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ImageError {
    #[error("{entry}: bad magic {found:02x?}")]
    BadMagic { entry: String, found: [u8; 4] },
    #[error("unsupported directory version {0}")]
    UnsupportedVersion(u16),
    #[error("directory declares {declared} bytes but image has {actual}")]
    SizeMismatch { declared: u64, actual: u64 },
    #[error("{entry}: truncated, needs {needed} bytes but only {available} are present")]
    TruncatedBody { entry: String, needed: u64, available: u64 },
    #[error("{first} overlaps {second}")]
    OverlappingEntries { first: String, second: String },
    #[error("{entry}: offset {offset:#x} is not 16-byte aligned")]
    Misaligned { entry: String, offset: u32 },
    #[error("directory entry #{index}: unknown kind {value}")]
    UnknownKind { index: usize, value: u32 },
    #[error("{0} appears more than once")]
    DuplicateEntry(EntryKind),
    #[error("image has no {0} entry")]
    MissingEntry(EntryKind),
    #[error("{0}")]
    BadDirectory(String),
    #[error("{entry}: {reason}")]
    BadComponent { entry: String, reason: String },
    #[error("malformed ARK record: {0}")]
    BadArk(String),
    #[error("{0} is not a signed component")]
    NotAComponent(EntryKind),
    #[error("signing key does not match the key that verifies {0}")]
    SignerMismatch(EntryKind),
    #[error("key error: {0}")]
    Key(String),
    #[error("encryption error: {0}")]
    Crypto(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EntryKind {
    ArkKey,
    PspOs,
    SevFw,
    IkekBlob,
}

impl EntryKind {
    pub const ALL: [EntryKind; 4] = [EntryKind::ArkKey, EntryKind::PspOs, EntryKind::SevFw, EntryKind::IkekBlob];

    pub fn code(self) -> u32 {
        match self {
            EntryKind::ArkKey => 1,
            EntryKind::PspOs => 2,
            EntryKind::SevFw => 3,
            EntryKind::IkekBlob => 4,
        }
    }

    pub fn from_code(v: u32) -> Option<Self> {
        Self::ALL.into_iter().find(|k| k.code() == v)
    }

    pub fn is_component(self) -> bool {
        matches!(self, EntryKind::PspOs | EntryKind::SevFw)
    }

    pub fn name(self) -> &'static str {
        match self {
            EntryKind::ArkKey => "ark-key",
            EntryKind::PspOs => "psp-os",
            EntryKind::SevFw => "sev-fw",
            EntryKind::IkekBlob => "ikek-blob",
        }
    }
}

impl fmt::Display for EntryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EntryKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| format!("unknown entry kind {s:?} (expected ark-key, psp-os, sev-fw or ikek-blob)"))
    }
}

pub(crate) fn entry_name(kind: EntryKind, index: usize) -> String {
    format!("{kind} entry #{index}")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DirectoryEntry {
    pub kind: EntryKind,
    pub offset: u32,
    pub length: u32,
}

impl DirectoryEntry {
    fn range(&self) -> std::ops::Range<usize> {
        self.offset as usize..self.offset as usize + self.length as usize
    }
}

/// A parsed, validated flash image. The original bytes are retained, so
/// serialization is lossless.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FlashImage {
    bytes: Vec<u8>,
    entries: Vec<DirectoryEntry>,
}

pub fn parse_image(bytes: &[u8]) -> Result<FlashImage, ImageError> {
    let len = bytes.len();
    if len < DIRECTORY_HEADER_LEN {
        return Err(ImageError::TruncatedBody {
            entry: "directory".into(),
            needed: DIRECTORY_HEADER_LEN as u64,
            available: len as u64,
        });
    }
    if bytes[..4] != DIRECTORY_MAGIC {
        return Err(ImageError::BadMagic { entry: "directory".into(), found: bytes[..4].try_into().unwrap() });
    }
    let u16_at = |o: usize| u16::from_le_bytes([bytes[o], bytes[o + 1]]);
    let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
    let version = u16_at(4);
    if version != DIRECTORY_VERSION {
        return Err(ImageError::UnsupportedVersion(version));
    }
    let count = u16_at(6) as usize;
    let declared = u32_at(8) as u64;
    if declared != len as u64 {
        return Err(ImageError::SizeMismatch { declared, actual: len as u64 });
    }
    if u32_at(12) != 0 {
        return Err(ImageError::BadDirectory("directory header reserved word is not zero".into()));
    }
    let dir_end = DIRECTORY_HEADER_LEN + count * DIRECTORY_ENTRY_LEN;
    if dir_end > len {
        return Err(ImageError::TruncatedBody {
            entry: "directory".into(),
            needed: dir_end as u64,
            available: len as u64,
        });
    }

    let mut entries = Vec::with_capacity(count);
    for index in 0..count {
        let o = DIRECTORY_HEADER_LEN + index * DIRECTORY_ENTRY_LEN;
        let value = u32_at(o);
        let kind = EntryKind::from_code(value).ok_or(ImageError::UnknownKind { index, value })?;
        let name = entry_name(kind, index);
        if u32_at(o + 12) != 0 {
            return Err(ImageError::BadDirectory(format!("{name}: reserved word is not zero")));
        }
        let e = DirectoryEntry { kind, offset: u32_at(o + 4), length: u32_at(o + 8) };
        if !(e.offset as usize).is_multiple_of(ALIGNMENT) {
            return Err(ImageError::Misaligned { entry: name, offset: e.offset });
        }
        if (e.offset as usize) < dir_end && e.length > 0 {
            return Err(ImageError::OverlappingEntries { first: "directory".into(), second: name });
        }
        let end = e.offset as u64 + e.length as u64;
        if end > len as u64 {
            return Err(ImageError::TruncatedBody { entry: name, needed: end, available: len as u64 });
        }
        entries.push(e);
    }

    for i in 0..count {
        for j in i + 1..count {
            let (a, b) = (entries[i].range(), entries[j].range());
            if a.start < b.end && b.start < a.end {
                return Err(ImageError::OverlappingEntries {
                    first: entry_name(entries[i].kind, i),
                    second: entry_name(entries[j].kind, j),
                });
            }
        }
    }

    for kind in EntryKind::ALL {
        let n = entries.iter().filter(|e| e.kind == kind).count();
        if n > 1 {
            return Err(ImageError::DuplicateEntry(kind));
        }
        if n == 0 && matches!(kind, EntryKind::ArkKey | EntryKind::IkekBlob) {
            return Err(ImageError::MissingEntry(kind));
        }
    }

    for (index, e) in entries.iter().enumerate() {
        let body = &bytes[e.range()];
        match e.kind {
            EntryKind::PspOs | EntryKind::SevFw => {
                Component::parse(e.kind, index, body)?;
            }
            EntryKind::IkekBlob if body.len() != 16 && body.len() != 32 => {
                return Err(ImageError::BadDirectory(format!(
                    "{}: wrapped iKEK must be 16 or 32 bytes, got {}",
                    entry_name(e.kind, index),
                    body.len()
                )));
            }
            // The ARK is hashed before it is interpreted, so it is not
            // validated here.
            _ => {}
        }
    }

    Ok(FlashImage { bytes: bytes.to_vec(), entries })
}

/// Lays out `sections` after a fresh directory, in the given order.
pub(crate) fn layout(sections: &[(EntryKind, Vec<u8>)]) -> Result<FlashImage, ImageError> {
    let dir_end = DIRECTORY_HEADER_LEN + sections.len() * DIRECTORY_ENTRY_LEN;
    let mut offsets = Vec::with_capacity(sections.len());
    let mut cursor = dir_end.next_multiple_of(ALIGNMENT);
    for (_, body) in sections {
        offsets.push(cursor);
        cursor = (cursor + body.len()).next_multiple_of(ALIGNMENT);
    }
    let mut out = vec![ERASED; cursor];
    out[..4].copy_from_slice(&DIRECTORY_MAGIC);
    out[4..6].copy_from_slice(&DIRECTORY_VERSION.to_le_bytes());
    out[6..8].copy_from_slice(&(sections.len() as u16).to_le_bytes());
    out[8..12].copy_from_slice(&(cursor as u32).to_le_bytes());
    out[12..16].fill(0);
    for (i, ((kind, body), off)) in sections.iter().zip(&offsets).enumerate() {
        let o = DIRECTORY_HEADER_LEN + i * DIRECTORY_ENTRY_LEN;
        out[o..o + 4].copy_from_slice(&kind.code().to_le_bytes());
        out[o + 4..o + 8].copy_from_slice(&(*off as u32).to_le_bytes());
        out[o + 8..o + 12].copy_from_slice(&(body.len() as u32).to_le_bytes());
        out[o + 12..o + 16].fill(0);
        out[*off..*off + body.len()].copy_from_slice(body);
    }
    parse_image(&out)
}

impl FlashImage {
    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.bytes.clone()
    }

    pub fn entries(&self) -> &[DirectoryEntry] {
        &self.entries
    }

    pub fn entry(&self, kind: EntryKind) -> Result<&DirectoryEntry, ImageError> {
        self.entries.iter().find(|e| e.kind == kind).ok_or(ImageError::MissingEntry(kind))
    }

    pub fn has_entry(&self, kind: EntryKind) -> bool {
        self.entries.iter().any(|e| e.kind == kind)
    }

    pub fn entry_bytes(&self, kind: EntryKind) -> Result<&[u8], ImageError> {
        Ok(&self.bytes[self.entry(kind)?.range()])
    }

    /// Raw ARK record bytes exactly as stored (what the ROM hashes).
    pub fn ark_bytes(&self) -> &[u8] {
        self.entry_bytes(EntryKind::ArkKey).expect("validated at parse")
    }

    /// SHA-256 of the raw ARK entry, the value a ROM trusting this ARK holds.
    pub fn ark_digest(&self) -> [u8; 32] {
        Sha256::digest(self.ark_bytes()).into()
    }

    pub fn ark(&self) -> Result<ArkRecord, ImageError> {
        ArkRecord::from_bytes(self.ark_bytes())
    }

    pub fn ikek_blob(&self) -> Result<&[u8], ImageError> {
        self.entry_bytes(EntryKind::IkekBlob)
    }

    pub fn component(&self, kind: EntryKind) -> Result<Component, ImageError> {
        if !kind.is_component() {
            return Err(ImageError::NotAComponent(kind));
        }
        let index = self.entries.iter().position(|e| e.kind == kind).ok_or(ImageError::MissingEntry(kind))?;
        Component::parse(kind, index, &self.bytes[self.entries[index].range()])
    }

    /// Replaces one entry's bytes. Same-size replacements are done in place;
    /// otherwise the image is laid out again in directory order.
    pub fn replace_entry(&self, kind: EntryKind, new: &[u8]) -> Result<FlashImage, ImageError> {
        let target = *self.entry(kind)?;
        if new.len() == target.length as usize {
            let mut bytes = self.bytes.clone();
            bytes[target.range()].copy_from_slice(new);
            return parse_image(&bytes);
        }
        let sections: Vec<(EntryKind, Vec<u8>)> = self
            .entries
            .iter()
            .map(|e| (e.kind, if e.kind == kind { new.to_vec() } else { self.bytes[e.range()].to_vec() }))
            .collect();
        layout(&sections)
    }

    /// Key embedded at the start of the PSP OS body, if the body is readable
    /// (unencrypted) and carries one.
    pub fn embedded_sev_key(&self) -> Result<Option<ArkRecord>, ImageError> {
        if !self.has_entry(EntryKind::PspOs) {
            return Ok(None);
        }
        let psp = self.component(EntryKind::PspOs)?;
        if psp.header.encrypted {
            return Ok(None);
        }
        find_embedded_key(&psp.stored_body).transpose()
    }
}

pub fn embedded_key_blob(key: &ArkRecord) -> Vec<u8> {
    let mut b = EMBEDDED_KEY_MAGIC.to_vec();
    b.extend_from_slice(&key.to_bytes());
    b
}

/// Looks for an embedded key at the start of a plaintext PSP OS body.
pub fn find_embedded_key(body: &[u8]) -> Option<Result<ArkRecord, ImageError>> {
    let rest = body.strip_prefix(&EMBEDDED_KEY_MAGIC)?;
    Some(ArkRecord::from_prefix(rest).map(|(k, _)| k))
}

/// Reads an RSA private key from PKCS#8 PEM.
pub fn private_key_from_pem(pem: &str) -> Result<RsaPrivateKey, ImageError> {
    RsaPrivateKey::from_pkcs8_pem(pem).map_err(|e| ImageError::Key(e.to_string()))
}

/// Swaps the ARK record. Nothing else changes, so the image no longer
/// matches a ROM digest taken from the original key.
pub fn replace_ark(image: &FlashImage, new_key: &ArkRecord) -> Result<FlashImage, ImageError> {
    image.replace_entry(EntryKind::ArkKey, &new_key.to_bytes())
}

/// Replaces a component with an unencrypted `payload` carrying `svn`, signed
/// by `signer`, which must hold the key that verifies that component.
pub fn insert_payload(
    image: &FlashImage,
    payload: &[u8],
    kind: EntryKind,
    svn: u8,
    signer: &RsaPrivateKey,
) -> Result<FlashImage, ImageError> {
    if !kind.is_component() {
        return Err(ImageError::NotAComponent(kind));
    }
    image.entry(kind)?;
    let expected = match kind {
        EntryKind::SevFw => match image.embedded_sev_key()? {
            Some(k) => k,
            None => image.ark()?,
        },
        _ => image.ark()?,
    };
    if ArkRecord::from_public_key(&signer.to_public_key())? != expected {
        return Err(ImageError::SignerMismatch(kind));
    }
    let spec = ComponentSpec { kind, body: payload.to_vec(), svn, encryption: None };
    let comp = build_component(&spec, None, signer)?;
    image.replace_entry(kind, &comp.to_bytes())
}

#[cfg(test)]
mod tests;
