// SPDX-License-Identifier: Apache-2.0

use num_bigint::BigUint;
use p384::elliptic_curve::sec1::ToEncodedPoint;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::kdf::{kdf_counter, CEK_LABEL, VCEK_LABEL};
use super::{fixed, KeyDeriveError};

/// Order of the secp384r1 group.
const P384_ORDER: &str = "ffffffffffffffffffffffffffffffffffffffffffffffffc7634d81f4372ddf581a0db248b0a77aecec196accc52973";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Curve {
    Secp384r1,
}

impl Curve {
    pub fn order(self) -> BigUint {
        match self {
            Curve::Secp384r1 => BigUint::parse_bytes(P384_ORDER.as_bytes(), 16).unwrap(),
        }
    }

    pub fn scalar_len(self) -> usize {
        match self {
            Curve::Secp384r1 => 48,
        }
    }

    /// Input width for extra-random-bits key generation: field size plus 64 bits.
    pub fn extra_bits_len(self) -> usize {
        self.scalar_len() + 8
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum KeyKind {
    Cek,
    Vcek,
}

/// ECDSA key pair derived from chip secrets.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EndorsementKey {
    pub kind: KeyKind,
    pub curve: Curve,
    #[serde(with = "crate::hexser")]
    pub private_scalar: [u8; 48],
    #[serde(with = "crate::hexser")]
    pub public_x: [u8; 48],
    #[serde(with = "crate::hexser")]
    pub public_y: [u8; 48],
}

/// Big-endian scalar `d = (c mod (n - 1)) + 1` from `len(n) + 8` random bytes.
pub fn scalar_from_extra_bits(random: &[u8], curve: Curve) -> Result<[u8; 48], KeyDeriveError> {
    if random.len() != curve.extra_bits_len() {
        return Err(KeyDeriveError::Length {
            what: "extra random bits",
            expected: curve.extra_bits_len(),
            got: random.len(),
        });
    }
    let n_minus_1 = curve.order() - 1u32;
    let d = BigUint::from_bytes_be(random) % n_minus_1 + 1u32;
    let bytes = d.to_bytes_be();
    let mut out = [0u8; 48];
    out[48 - bytes.len()..].copy_from_slice(&bytes);
    Ok(out)
}

pub fn keypair_from_extra_bits(random: &[u8], kind: KeyKind) -> Result<EndorsementKey, KeyDeriveError> {
    let private_scalar = scalar_from_extra_bits(random, Curve::Secp384r1)?;
    let sk = p384::SecretKey::from_bytes(&private_scalar.into())
        .expect("scalar is in [1, n-1] by construction");
    let point = sk.public_key().to_encoded_point(false);
    Ok(EndorsementKey {
        kind,
        curve: Curve::Secp384r1,
        private_scalar,
        public_x: fixed("x", point.x().expect("not identity"))?,
        public_y: fixed("y", point.y().expect("uncompressed"))?,
    })
}

pub fn derive_cek(cek_secret: &[u8]) -> Result<EndorsementKey, KeyDeriveError> {
    let secret: [u8; 32] = fixed("CEK secret", cek_secret)?;
    let key = Sha256::digest(secret);
    let random = kdf_counter(&key, CEK_LABEL.as_bytes(), &[], 56);
    keypair_from_extra_bits(&random, KeyKind::Cek)
}

/// The KDF is keyed with the final ladder secret directly.
pub fn derive_vcek(final_secret: &[u8]) -> Result<EndorsementKey, KeyDeriveError> {
    let secret: [u8; 48] = fixed("VCEK final secret", final_secret)?;
    let random = kdf_counter(&secret, VCEK_LABEL.as_bytes(), &[], 56);
    keypair_from_extra_bits(&random, KeyKind::Vcek)
}

/// Chip ID: `X || Y` of the secp256k1 public key for the CEK secret.
/// Secrets outside `[1, n - 1]` are rejected, not reduced.
pub fn derive_id(cek_secret: &[u8]) -> Result<[u8; 64], KeyDeriveError> {
    let secret: [u8; 32] = fixed("CEK secret", cek_secret)?;
    let sk = k256::SecretKey::from_bytes(&secret.into()).map_err(|_| KeyDeriveError::InvalidScalar)?;
    let point = sk.public_key().to_encoded_point(false);
    let mut id = [0u8; 64];
    id[..32].copy_from_slice(point.x().expect("not identity"));
    id[32..].copy_from_slice(point.y().expect("uncompressed"));
    Ok(id)
}
