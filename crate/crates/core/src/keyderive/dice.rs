// SPDX-License-Identifier: Apache-2.0

use super::ecc::{derive_vcek, EndorsementKey};
use super::{sha384, KeyDeriveError, Secret48};

/// Hash-bound VCEK: each component's measurement is folded into the secret
/// with `s = SHA384(s || h)` instead of an SVN ladder step.
pub fn derive_vcek_dice(sec_255: &Secret48, components: &[Secret48]) -> Result<EndorsementKey, KeyDeriveError> {
    if components.is_empty() {
        return Err(KeyDeriveError::NoComponents);
    }
    let mut s = *sec_255;
    let mut buf = [0u8; 96];
    for h in components {
        buf[..48].copy_from_slice(&s);
        buf[48..].copy_from_slice(h);
        s = sha384(&buf);
    }
    derive_vcek(&s)
}
