// SPDX-License-Identifier: Apache-2.0

//! SEV endorsement key derivation.
//!
//! * The CEK comes from a 32-byte fuse secret: SHA-256 of the secret keys an
//!   SP 800-108 counter-mode KDF (HMAC-SHA256), whose 56 output bytes become
//!   a secp384r1 key pair through the "extra random bits" method.
//! * The chip ID is the secp256k1 public key whose private part is the same
//!   32-byte secret.
//! * The VCEK comes from a 48-byte secret that is pushed down a SHA-384 hash
//!   ladder, one rung per SVN of the TCB version, with each SVN "locked" by a
//!   zero-prefixed hash before the next one is mixed in.
//!
//! Lower SVNs are always reachable from higher ones by hashing further down
//! the ladder, which is what makes TCB downgrades (and the attacker
//! extraction from a payload signed with SVN 255) work.

mod dice;
mod ecc;
mod kdf;
mod ladder;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha384};
use thiserror::Error;

pub use dice::derive_vcek_dice;
pub use ecc::{
    derive_cek, derive_id, derive_vcek, keypair_from_extra_bits, scalar_from_extra_bits, Curve,
    EndorsementKey, KeyKind,
};
pub use kdf::{kdf_counter, CEK_LABEL, VCEK_LABEL};
pub use ladder::{
    derive_secret_set, downgrade, incorporate_svn, lock_secret, stage_psp_os, stage_rom_bl,
    stage_sev_app, PspOsStage, RomStageSecrets, SecretSet, SevAppStage,
};

pub type Secret48 = [u8; 48];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum KeyDeriveError {
    #[error("{what} must be {expected} bytes, got {got}")]
    Length { what: &'static str, expected: usize, got: usize },
    #[error("secret is not a valid secp256k1 private scalar")]
    InvalidScalar,
    #[error("SVN {index} would rise from {from} to {to}; only downgrades are allowed")]
    UpgradeForbidden { index: usize, from: u8, to: u8 },
    #[error("target TCB equals the current TCB")]
    NoChange,
    #[error("level {0} secret is absent (SVN 0)")]
    AbsentLevel(usize),
    #[error("at least one component hash is required")]
    NoComponents,
    #[error("bad TCB version string {0:?}")]
    BadTcb(String),
}

pub(crate) fn sha384(data: &[u8]) -> Secret48 {
    Sha384::digest(data).into()
}

pub(crate) fn fixed<const N: usize>(what: &'static str, b: &[u8]) -> Result<[u8; N], KeyDeriveError> {
    b.try_into()
        .map_err(|_| KeyDeriveError::Length { what, expected: N, got: b.len() })
}

/// SEV-SNP TCB version string: one SVN per byte, in wire order
/// BOOT_LOADER, TEE, four reserved bytes, SNP, MICROCODE.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct TcbVersion {
    pub boot_loader: u8,
    pub tee: u8,
    pub reserved: [u8; 4],
    pub snp: u8,
    pub microcode: u8,
}

impl TcbVersion {
    pub const fn from_bytes(b: [u8; 8]) -> Self {
        Self {
            boot_loader: b[0],
            tee: b[1],
            reserved: [b[2], b[3], b[4], b[5]],
            snp: b[6],
            microcode: b[7],
        }
    }

    pub const fn to_bytes(self) -> [u8; 8] {
        let r = self.reserved;
        [self.boot_loader, self.tee, r[0], r[1], r[2], r[3], self.snp, self.microcode]
    }

    /// First index where `self` and `other` differ.
    pub fn first_difference(&self, other: &TcbVersion) -> Option<usize> {
        let (a, b) = (self.to_bytes(), other.to_bytes());
        (0..8).find(|&i| a[i] != b[i])
    }
}

impl From<[u8; 8]> for TcbVersion {
    fn from(b: [u8; 8]) -> Self {
        Self::from_bytes(b)
    }
}

impl fmt::Display for TcbVersion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let b = self.to_bytes();
        for (i, v) in b.iter().enumerate() {
            if i > 0 {
                f.write_str(":")?;
            }
            write!(f, "{v:02x}")?;
        }
        Ok(())
    }
}

impl FromStr for TcbVersion {
    type Err = KeyDeriveError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        if parts.len() != 8 {
            return Err(KeyDeriveError::BadTcb(s.into()));
        }
        let mut b = [0u8; 8];
        for (slot, p) in b.iter_mut().zip(parts) {
            *slot = u8::from_str_radix(p, 16).map_err(|_| KeyDeriveError::BadTcb(s.into()))?;
        }
        Ok(Self::from_bytes(b))
    }
}

impl Serialize for TcbVersion {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_string())
    }
}

impl<'de> Deserialize<'de> for TcbVersion {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Fuse-derived chip secrets.
#[derive(Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChipSecrets {
    #[serde(with = "crate::hexser")]
    pub cek_secret: [u8; 32],
    #[serde(with = "crate::hexser")]
    pub vcek_secret_255: Secret48,
}

impl fmt::Debug for ChipSecrets {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ChipSecrets").finish_non_exhaustive()
    }
}
