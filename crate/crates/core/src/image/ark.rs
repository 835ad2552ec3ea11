// SPDX-License-Identifier: Apache-2.0

use rsa::traits::PublicKeyParts;
use rsa::{BigUint, RsaPublicKey};
use sha2::{Digest, Sha256};

use super::ImageError;

pub const ARK_MAGIC: [u8; 4] = *b"$ARK";
pub const ARK_HEADER_LEN: usize = 16;

/// RSA public key as stored in flash.
///
/// Layout (little-endian): `"$ARK"`, modulus bit length (u32), public
/// exponent (u32), reserved (u32, zero), then the modulus in
/// `ceil(bits / 8)` little-endian bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ArkRecord {
    modulus: BigUint,
    exponent: u32,
}

impl ArkRecord {
    pub fn new(modulus: BigUint, exponent: u32) -> Result<Self, ImageError> {
        if modulus.bits() == 0 || exponent == 0 {
            return Err(ImageError::BadArk("modulus and exponent must be non-zero".into()));
        }
        Ok(Self { modulus, exponent })
    }

    pub fn from_public_key(key: &RsaPublicKey) -> Result<Self, ImageError> {
        let mut e = key.e().to_bytes_le();
        if e.len() > 4 {
            return Err(ImageError::BadArk("exponent exceeds 32 bits".into()));
        }
        e.resize(4, 0);
        let e = u32::from_le_bytes(e.try_into().unwrap());
        Self::new(key.n().clone(), e)
    }

    pub fn to_public_key(&self) -> Result<RsaPublicKey, ImageError> {
        RsaPublicKey::new(self.modulus.clone(), BigUint::from(self.exponent))
            .map_err(|e| ImageError::BadArk(e.to_string()))
    }

    pub fn modulus(&self) -> &BigUint {
        &self.modulus
    }

    pub fn exponent(&self) -> u32 {
        self.exponent
    }

    pub fn modulus_bits(&self) -> u32 {
        self.modulus.bits() as u32
    }

    pub fn serialized_len(&self) -> usize {
        ARK_HEADER_LEN + (self.modulus_bits() as usize).div_ceil(8)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.serialized_len());
        out.extend_from_slice(&ARK_MAGIC);
        out.extend_from_slice(&self.modulus_bits().to_le_bytes());
        out.extend_from_slice(&self.exponent.to_le_bytes());
        out.extend_from_slice(&[0; 4]);
        let mut m = self.modulus.to_bytes_le();
        m.resize(self.serialized_len() - ARK_HEADER_LEN, 0);
        out.extend_from_slice(&m);
        out
    }

    /// Parses a record that must span `bytes` exactly.
    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ImageError> {
        let (rec, used) = Self::from_prefix(bytes)?;
        if used != bytes.len() {
            return Err(ImageError::BadArk(format!("{} trailing bytes", bytes.len() - used)));
        }
        Ok(rec)
    }

    /// Parses a record at the start of `bytes`, returning it and its length.
    pub fn from_prefix(bytes: &[u8]) -> Result<(Self, usize), ImageError> {
        if bytes.len() < ARK_HEADER_LEN {
            return Err(ImageError::BadArk(format!("record of {} bytes is too short", bytes.len())));
        }
        if bytes[..4] != ARK_MAGIC {
            return Err(ImageError::BadArk(format!("bad magic {:02x?}", &bytes[..4])));
        }
        let word = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let (bits, exponent) = (word(4), word(8));
        if word(12) != 0 {
            return Err(ImageError::BadArk("reserved word is not zero".into()));
        }
        let len = ARK_HEADER_LEN + (bits as usize).div_ceil(8);
        if bytes.len() < len {
            return Err(ImageError::BadArk(format!("{bits}-bit modulus needs {len} bytes, have {}", bytes.len())));
        }
        let modulus = BigUint::from_bytes_le(&bytes[ARK_HEADER_LEN..len]);
        if modulus.bits() as u32 != bits {
            return Err(ImageError::BadArk(format!(
                "declared {bits}-bit modulus has {} significant bits",
                modulus.bits()
            )));
        }
        Ok((Self::new(modulus, exponent)?, len))
    }

    /// SHA-256 of the serialized record, the value the ROM compares against.
    pub fn digest(&self) -> [u8; 32] {
        Sha256::digest(self.to_bytes()).into()
    }
}
