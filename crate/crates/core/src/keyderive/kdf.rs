// SPDX-License-Identifier: Apache-2.0

use hmac::{Hmac, Mac};
use sha2::Sha256;

pub const CEK_LABEL: &str = "sev-chip-endorsement-key";
pub const VCEK_LABEL: &str = "sev-versioned-chip-endorsement-key";

/// SP 800-108 KDF in counter mode with HMAC-SHA256 as PRF.
///
/// Fixed input per block: `[i]_32be || label || 0x00 || context || [L]_32be`
/// where `i` counts from 1 and `L` is the output length in bits.
pub fn kdf_counter(key: &[u8], label: &[u8], context: &[u8], out_len: usize) -> Vec<u8> {
    let bit_len = (out_len as u32).wrapping_mul(8).to_be_bytes();
    let mut out = Vec::with_capacity(out_len.next_multiple_of(32));
    let mut counter: u32 = 1;
    while out.len() < out_len {
        let mut prf = <Hmac<Sha256> as Mac>::new_from_slice(key).expect("HMAC accepts any key length");
        prf.update(&counter.to_be_bytes());
        prf.update(label);
        prf.update(&[0x00]);
        prf.update(context);
        prf.update(&bit_len);
        out.extend_from_slice(&prf.finalize().into_bytes());
        counter += 1;
    }
    out.truncate(out_len);
    out
}
