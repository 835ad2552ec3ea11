// SPDX-License-Identifier: Apache-2.0

//! Firmware component decryption hierarchy.
//!
//! The root key rK (fused, unreadable on hardware) unwraps the iKEK stored in
//! flash, the iKEK unwraps the per-component key cK from the component
//! header, and cK decrypts the component body in CBC mode. Key wrapping is
//! raw AES-ECB over the key bytes. Keys are 16 bytes (AES-128) by default;
//! 32-byte keys select AES-256 at any level.
//!
//! There is no authentication: integrity comes only from the signature chain
//! in [`crate::image`].

use std::fmt;

use aes::cipher::{generic_array::GenericArray, BlockDecrypt, BlockDecryptMut, BlockEncrypt, BlockEncryptMut, KeyInit, KeyIvInit};
use aes::{Aes128, Aes256};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::image::{EntryKind, FlashImage, ImageError};

pub const BLOCK: usize = 16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum FwCryptoError {
    #[error("expected a {expected} key, got a {got} key")]
    RoleMismatch { expected: KeyRole, got: KeyRole },
    #[error("{role} must be 16 or 32 bytes, got {len}")]
    LengthError { role: KeyRole, len: usize },
    #[error("ciphertext length {0} is not a multiple of 16")]
    BadLength(usize),
    #[error("{0} is not encrypted")]
    NotEncrypted(EntryKind),
    #[error("recorded body size {recorded} exceeds decrypted length {available}")]
    BadPadding { recorded: usize, available: usize },
    #[error(transparent)]
    Image(#[from] ImageError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KeyRole {
    Root,
    WrappedIkek,
    Ikek,
    WrappedCk,
    Ck,
}

impl fmt::Display for KeyRole {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            KeyRole::Root => "rK",
            KeyRole::WrappedIkek => "wrapped iKEK",
            KeyRole::Ikek => "iKEK",
            KeyRole::WrappedCk => "wrapped cK",
            KeyRole::Ck => "cK",
        })
    }
}

/// Key bytes tagged with their place in the hierarchy.
#[derive(Clone, PartialEq, Eq)]
pub struct KeyMaterial {
    role: KeyRole,
    bytes: Vec<u8>,
}

impl fmt::Debug for KeyMaterial {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("KeyMaterial")
            .field("role", &self.role)
            .field("len", &self.bytes.len())
            .finish_non_exhaustive()
    }
}

impl KeyMaterial {
    pub fn new(role: KeyRole, bytes: &[u8]) -> Result<Self, FwCryptoError> {
        if bytes.len() != 16 && bytes.len() != 32 {
            return Err(FwCryptoError::LengthError { role, len: bytes.len() });
        }
        Ok(Self { role, bytes: bytes.to_vec() })
    }

    pub fn root(bytes: &[u8]) -> Result<Self, FwCryptoError> {
        Self::new(KeyRole::Root, bytes)
    }

    pub fn role(&self) -> KeyRole {
        self.role
    }

    pub fn bytes(&self) -> &[u8] {
        &self.bytes
    }

    fn expect(&self, role: KeyRole) -> Result<&Self, FwCryptoError> {
        if self.role == role {
            Ok(self)
        } else {
            Err(FwCryptoError::RoleMismatch { expected: role, got: self.role })
        }
    }
}

#[allow(clippy::large_enum_variant)]
enum Cipher {
    A128(Aes128),
    A256(Aes256),
}

impl Cipher {
    fn new(key: &[u8]) -> Self {
        match key.len() {
            16 => Cipher::A128(Aes128::new(GenericArray::from_slice(key))),
            32 => Cipher::A256(Aes256::new(GenericArray::from_slice(key))),
            n => unreachable!("KeyMaterial guarantees 16 or 32 bytes, got {n}"),
        }
    }

    fn ecb(&self, data: &mut [u8], encrypt: bool) {
        for block in data.chunks_exact_mut(BLOCK) {
            let b = GenericArray::from_mut_slice(block);
            match (self, encrypt) {
                (Cipher::A128(c), true) => c.encrypt_block(b),
                (Cipher::A128(c), false) => c.decrypt_block(b),
                (Cipher::A256(c), true) => c.encrypt_block(b),
                (Cipher::A256(c), false) => c.decrypt_block(b),
            }
        }
    }
}

fn ecb_transform(key: &KeyMaterial, input: &KeyMaterial, out_role: KeyRole, encrypt: bool) -> KeyMaterial {
    let mut bytes = input.bytes.clone();
    Cipher::new(&key.bytes).ecb(&mut bytes, encrypt);
    KeyMaterial { role: out_role, bytes }
}

/// `iKEK' = AES-ECB-Decrypt(rK, iKEK)`.
pub fn unwrap_ikek(rk: &KeyMaterial, wrapped: &KeyMaterial) -> Result<KeyMaterial, FwCryptoError> {
    rk.expect(KeyRole::Root)?;
    wrapped.expect(KeyRole::WrappedIkek)?;
    Ok(ecb_transform(rk, wrapped, KeyRole::Ikek, false))
}

pub fn wrap_ikek(rk: &KeyMaterial, ikek: &KeyMaterial) -> Result<KeyMaterial, FwCryptoError> {
    rk.expect(KeyRole::Root)?;
    ikek.expect(KeyRole::Ikek)?;
    Ok(ecb_transform(rk, ikek, KeyRole::WrappedIkek, true))
}

/// `cK' = AES-ECB-Decrypt(iKEK', cK)`.
pub fn unwrap_ck(ikek: &KeyMaterial, wrapped: &KeyMaterial) -> Result<KeyMaterial, FwCryptoError> {
    ikek.expect(KeyRole::Ikek)?;
    wrapped.expect(KeyRole::WrappedCk)?;
    Ok(ecb_transform(ikek, wrapped, KeyRole::Ck, false))
}

pub fn wrap_ck(ikek: &KeyMaterial, ck: &KeyMaterial) -> Result<KeyMaterial, FwCryptoError> {
    ikek.expect(KeyRole::Ikek)?;
    ck.expect(KeyRole::Ck)?;
    Ok(ecb_transform(ikek, ck, KeyRole::WrappedCk, true))
}

/// AES-CBC decryption without padding removal.
pub fn decrypt_component(ck: &KeyMaterial, iv: &[u8; 16], data: &[u8]) -> Result<Vec<u8>, FwCryptoError> {
    ck.expect(KeyRole::Ck)?;
    if !data.len().is_multiple_of(BLOCK) {
        return Err(FwCryptoError::BadLength(data.len()));
    }
    let mut buf = data.to_vec();
    let iv = GenericArray::from_slice(iv);
    let blocks = buf.chunks_exact_mut(BLOCK).map(GenericArray::from_mut_slice);
    match ck.bytes.len() {
        16 => {
            let mut d = cbc::Decryptor::<Aes128>::new(GenericArray::from_slice(&ck.bytes), iv);
            blocks.for_each(|b| d.decrypt_block_mut(b));
        }
        _ => {
            let mut d = cbc::Decryptor::<Aes256>::new(GenericArray::from_slice(&ck.bytes), iv);
            blocks.for_each(|b| d.decrypt_block_mut(b));
        }
    }
    Ok(buf)
}

/// Zero-pads `body` to the block size and encrypts it in CBC mode. The
/// caller records `body.len()` to trim after decryption.
pub fn encrypt_component(ck: &KeyMaterial, iv: &[u8; 16], body: &[u8]) -> Result<Vec<u8>, FwCryptoError> {
    ck.expect(KeyRole::Ck)?;
    let mut buf = body.to_vec();
    buf.resize(padded_len(body.len()), 0);
    let iv = GenericArray::from_slice(iv);
    let blocks = buf.chunks_exact_mut(BLOCK).map(GenericArray::from_mut_slice);
    match ck.bytes.len() {
        16 => {
            let mut e = cbc::Encryptor::<Aes128>::new(GenericArray::from_slice(&ck.bytes), iv);
            blocks.for_each(|b| e.encrypt_block_mut(b));
        }
        _ => {
            let mut e = cbc::Encryptor::<Aes256>::new(GenericArray::from_slice(&ck.bytes), iv);
            blocks.for_each(|b| e.encrypt_block_mut(b));
        }
    }
    Ok(buf)
}

pub fn padded_len(len: usize) -> usize {
    len.next_multiple_of(BLOCK)
}

/// Full chain for one image entry: load the wrapped iKEK from flash, unwrap
/// it with `rk`, unwrap the header's cK, decrypt the body and trim it to the
/// recorded size.
pub fn decrypt_image_component(image: &FlashImage, kind: EntryKind, rk: &KeyMaterial) -> Result<Vec<u8>, FwCryptoError> {
    let comp = image.component(kind)?;
    let header = &comp.header;
    if !header.encrypted {
        return Err(FwCryptoError::NotEncrypted(kind));
    }
    let wrapped_ikek = KeyMaterial::new(KeyRole::WrappedIkek, image.ikek_blob()?)?;
    let ikek = unwrap_ikek(rk, &wrapped_ikek)?;
    let wrapped_ck = KeyMaterial::new(KeyRole::WrappedCk, header.wrapped_ck_bytes())?;
    let ck = unwrap_ck(&ikek, &wrapped_ck)?;
    let mut plain = decrypt_component(&ck, &header.iv, &comp.stored_body)?;
    let size = header.body_size as usize;
    if size > plain.len() {
        return Err(FwCryptoError::BadPadding { recorded: size, available: plain.len() });
    }
    plain.truncate(size);
    Ok(plain)
}
