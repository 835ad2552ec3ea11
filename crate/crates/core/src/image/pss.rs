// SPDX-License-Identifier: Apache-2.0

//! RSASSA-PSS with SHA-384, MGF1-SHA-384 and a 48-byte salt derived from the
//! message digest, so signatures (and therefore images) are reproducible.

use rand_chacha::ChaCha8Rng;
use rsa::pss::{Signature, VerifyingKey};
use rsa::signature::Verifier;
use rsa::traits::PublicKeyParts;
use rsa::{BigUint, RsaPrivateKey, RsaPublicKey};
use sha2::{Digest, Sha384};

use super::ImageError;

pub const HASH_LEN: usize = 48;
pub const SALT_LEN: usize = 48;
const SALT_DOMAIN: &[u8] = b"sevforge-pss-salt";

pub fn deterministic_salt(m_hash: &[u8; HASH_LEN]) -> [u8; SALT_LEN] {
    let mut h = Sha384::new();
    h.update(SALT_DOMAIN);
    h.update(m_hash);
    h.finalize().into()
}

fn mgf1(seed: &[u8], len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(len + HASH_LEN);
    let mut counter: u32 = 0;
    while out.len() < len {
        let mut h = Sha384::new();
        h.update(seed);
        h.update(counter.to_be_bytes());
        out.extend_from_slice(&h.finalize());
        counter += 1;
    }
    out.truncate(len);
    out
}

/// EMSA-PSS encoding of `m_hash` for a modulus of `mod_bits` bits.
pub fn emsa_pss_encode(m_hash: &[u8; HASH_LEN], mod_bits: usize) -> Result<Vec<u8>, ImageError> {
    let em_bits = mod_bits - 1;
    let em_len = em_bits.div_ceil(8);
    if em_len < HASH_LEN + SALT_LEN + 2 {
        return Err(ImageError::Key(format!("{mod_bits}-bit modulus is too small for PSS-SHA384")));
    }
    let salt = deterministic_salt(m_hash);
    let mut h = Sha384::new();
    h.update([0u8; 8]);
    h.update(m_hash);
    h.update(salt);
    let h: [u8; HASH_LEN] = h.finalize().into();

    let db_len = em_len - HASH_LEN - 1;
    let mut db = vec![0u8; db_len];
    db[db_len - SALT_LEN - 1] = 0x01;
    db[db_len - SALT_LEN..].copy_from_slice(&salt);
    for (d, m) in db.iter_mut().zip(mgf1(&h, db_len)) {
        *d ^= m;
    }
    db[0] &= 0xff >> (8 * em_len - em_bits);

    let mut em = db;
    em.extend_from_slice(&h);
    em.push(0xbc);
    Ok(em)
}

pub fn sign(key: &RsaPrivateKey, msg: &[u8]) -> Result<Vec<u8>, ImageError> {
    let m_hash: [u8; HASH_LEN] = Sha384::digest(msg).into();
    let em = emsa_pss_encode(&m_hash, key.n().bits())?;
    let m = BigUint::from_bytes_be(&em);
    let s = rsa::hazmat::rsa_decrypt_and_check(key, None::<&mut ChaCha8Rng>, &m)
        .map_err(|e| ImageError::Key(e.to_string()))?;
    let k = key.size();
    let raw = s.to_bytes_be();
    let mut sig = vec![0u8; k - raw.len()];
    sig.extend_from_slice(&raw);
    Ok(sig)
}

pub fn verify(key: &RsaPublicKey, msg: &[u8], sig: &[u8]) -> bool {
    let Ok(sig) = Signature::try_from(sig) else {
        return false;
    };
    VerifyingKey::<Sha384>::new_with_salt_len(key.clone(), SALT_LEN)
        .verify(msg, &sig)
        .is_ok()
}
