// SPDX-License-Identifier: Apache-2.0

use super::{EntryKind, ImageError};
use crate::fwcrypto::padded_len;

pub const COMPONENT_MAGIC: [u8; 4] = *b"$PS1";
pub const HEADER_LEN: usize = 256;
pub const SIGNATURE_LEN: usize = 512;

pub const OFF_BODY_SIZE: usize = 0x04;
pub const OFF_ENCRYPTED: usize = 0x08;
pub const OFF_SVN: usize = 0x09;
pub const OFF_KEY_BITS: usize = 0x0a;
pub const OFF_STORED_SIZE: usize = 0x0c;
pub const OFF_IV: usize = 0x10;
pub const OFF_WRAPPED_CK: usize = 0x20;
pub const OFF_SIG_OFFSET: usize = 0x40;
pub const OFF_SIG_LEN: usize = 0x44;

/// Fixed 256-byte component header. See `docs/FORMATS.md` for the layout.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentHeader {
    /// Plaintext body length; encrypted bodies are zero-padded up to a block.
    pub body_size: u32,
    pub encrypted: bool,
    pub svn: u8,
    /// 128 or 256 when encrypted, 0 otherwise.
    pub key_bits: u16,
    pub stored_size: u32,
    pub iv: [u8; 16],
    /// Wrapped cK; an AES-128 key uses the first 16 bytes.
    pub wrapped_ck: [u8; 32],
    /// Signature position relative to the start of the component.
    pub sig_offset: u32,
    pub sig_len: u32,
}

impl ComponentHeader {
    pub fn plain(body_size: u32, svn: u8) -> Self {
        Self {
            body_size,
            encrypted: false,
            svn,
            key_bits: 0,
            stored_size: body_size,
            iv: [0; 16],
            wrapped_ck: [0; 32],
            sig_offset: HEADER_LEN as u32 + body_size,
            sig_len: SIGNATURE_LEN as u32,
        }
    }

    pub fn encrypted(body_size: u32, svn: u8, iv: [u8; 16], wrapped_ck: &[u8]) -> Self {
        let stored_size = padded_len(body_size as usize) as u32;
        let mut ck = [0u8; 32];
        ck[..wrapped_ck.len()].copy_from_slice(wrapped_ck);
        Self {
            body_size,
            encrypted: true,
            svn,
            key_bits: (wrapped_ck.len() * 8) as u16,
            stored_size,
            iv,
            wrapped_ck: ck,
            sig_offset: HEADER_LEN as u32 + stored_size,
            sig_len: SIGNATURE_LEN as u32,
        }
    }

    pub fn wrapped_ck_bytes(&self) -> &[u8] {
        if self.key_bits == 256 {
            &self.wrapped_ck
        } else {
            &self.wrapped_ck[..16]
        }
    }

    pub fn to_bytes(&self) -> [u8; HEADER_LEN] {
        let mut h = [0u8; HEADER_LEN];
        h[..4].copy_from_slice(&COMPONENT_MAGIC);
        h[OFF_BODY_SIZE..OFF_BODY_SIZE + 4].copy_from_slice(&self.body_size.to_le_bytes());
        h[OFF_ENCRYPTED] = self.encrypted as u8;
        h[OFF_SVN] = self.svn;
        h[OFF_KEY_BITS..OFF_KEY_BITS + 2].copy_from_slice(&self.key_bits.to_le_bytes());
        h[OFF_STORED_SIZE..OFF_STORED_SIZE + 4].copy_from_slice(&self.stored_size.to_le_bytes());
        h[OFF_IV..OFF_IV + 16].copy_from_slice(&self.iv);
        h[OFF_WRAPPED_CK..OFF_WRAPPED_CK + 32].copy_from_slice(&self.wrapped_ck);
        h[OFF_SIG_OFFSET..OFF_SIG_OFFSET + 4].copy_from_slice(&self.sig_offset.to_le_bytes());
        h[OFF_SIG_LEN..OFF_SIG_LEN + 4].copy_from_slice(&self.sig_len.to_le_bytes());
        h
    }

    /// Header bytes covered by the signature: the signature reference
    /// fields are zeroed.
    pub fn signed_bytes(&self) -> [u8; HEADER_LEN] {
        let mut h = self.to_bytes();
        h[OFF_SIG_OFFSET..OFF_SIG_LEN + 4].fill(0);
        h
    }

    pub fn parse(entry: &str, b: &[u8]) -> Result<Self, ImageError> {
        let bad = |reason: String| ImageError::BadComponent { entry: entry.to_string(), reason };
        if b.len() < HEADER_LEN {
            return Err(ImageError::TruncatedBody {
                entry: entry.to_string(),
                needed: HEADER_LEN as u64,
                available: b.len() as u64,
            });
        }
        if b[..4] != COMPONENT_MAGIC {
            return Err(ImageError::BadMagic { entry: entry.to_string(), found: b[..4].try_into().unwrap() });
        }
        let word = |o: usize| u32::from_le_bytes(b[o..o + 4].try_into().unwrap());
        let encrypted = match b[OFF_ENCRYPTED] {
            0 => false,
            1 => true,
            v => return Err(bad(format!("encrypted flag {v:#04x}"))),
        };
        let h = Self {
            body_size: word(OFF_BODY_SIZE),
            encrypted,
            svn: b[OFF_SVN],
            key_bits: u16::from_le_bytes([b[OFF_KEY_BITS], b[OFF_KEY_BITS + 1]]),
            stored_size: word(OFF_STORED_SIZE),
            iv: b[OFF_IV..OFF_IV + 16].try_into().unwrap(),
            wrapped_ck: b[OFF_WRAPPED_CK..OFF_WRAPPED_CK + 32].try_into().unwrap(),
            sig_offset: word(OFF_SIG_OFFSET),
            sig_len: word(OFF_SIG_LEN),
        };
        if b[OFF_SIG_LEN + 4..HEADER_LEN].iter().any(|&x| x != 0) {
            return Err(bad("reserved header bytes are not zero".into()));
        }
        if h.encrypted {
            if h.key_bits != 128 && h.key_bits != 256 {
                return Err(bad(format!("key size {} bits", h.key_bits)));
            }
            if h.key_bits == 128 && h.wrapped_ck[16..].iter().any(|&x| x != 0) {
                return Err(bad("unused wrapped key bytes are not zero".into()));
            }
            if h.stored_size as usize != padded_len(h.body_size as usize) {
                return Err(bad(format!("stored size {} for body of {}", h.stored_size, h.body_size)));
            }
        } else {
            if h.key_bits != 0 || h.iv != [0; 16] || h.wrapped_ck != [0; 32] {
                return Err(bad("unencrypted component carries key material".into()));
            }
            if h.stored_size != h.body_size {
                return Err(bad(format!("stored size {} differs from body size {}", h.stored_size, h.body_size)));
            }
        }
        if h.sig_offset as usize != HEADER_LEN + h.stored_size as usize {
            return Err(bad(format!("signature offset {:#x}", h.sig_offset)));
        }
        if h.sig_len as usize != SIGNATURE_LEN {
            return Err(bad(format!("signature length {}", h.sig_len)));
        }
        Ok(h)
    }
}

/// Header, stored (possibly encrypted) body and signature trailer.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Component {
    pub header: ComponentHeader,
    pub stored_body: Vec<u8>,
    pub signature: Vec<u8>,
}

impl Component {
    pub fn parse(kind: EntryKind, index: usize, b: &[u8]) -> Result<Self, ImageError> {
        let entry = super::entry_name(kind, index);
        let header = ComponentHeader::parse(&entry, b)?;
        let end = header.sig_offset as usize + header.sig_len as usize;
        if b.len() < end {
            return Err(ImageError::TruncatedBody { entry, needed: end as u64, available: b.len() as u64 });
        }
        if b.len() > end {
            return Err(ImageError::BadComponent { entry, reason: format!("{} bytes after the signature", b.len() - end) });
        }
        Ok(Self {
            stored_body: b[HEADER_LEN..header.sig_offset as usize].to_vec(),
            signature: b[header.sig_offset as usize..end].to_vec(),
            header,
        })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.header.to_bytes().to_vec();
        out.extend_from_slice(&self.stored_body);
        out.extend_from_slice(&self.signature);
        out
    }
}

/// Message covered by a component signature: the header with its signature
/// reference zeroed, followed by the plaintext body.
pub fn signed_message(header: &ComponentHeader, plaintext: &[u8]) -> Vec<u8> {
    let mut m = header.signed_bytes().to_vec();
    m.extend_from_slice(plaintext);
    m
}
