// SPDX-License-Identifier: Apache-2.0

use rsa::RsaPrivateKey;

use super::component::{signed_message, Component, ComponentHeader};
use super::{layout, pss, ArkRecord, EntryKind, FlashImage, ImageError};
use crate::fwcrypto::{encrypt_component, wrap_ck, KeyMaterial};

/// Plaintext cK and IV for an encrypted component.
#[derive(Debug, Clone)]
pub struct ComponentEncryption {
    pub ck: KeyMaterial,
    pub iv: [u8; 16],
}

#[derive(Debug, Clone)]
pub struct ComponentSpec {
    pub kind: EntryKind,
    pub body: Vec<u8>,
    pub svn: u8,
    pub encryption: Option<ComponentEncryption>,
}

/// Builds and signs a component. Encryption needs the plaintext iKEK to wrap
/// the component key.
pub fn build_component(
    spec: &ComponentSpec,
    ikek: Option<&KeyMaterial>,
    signer: &RsaPrivateKey,
) -> Result<Component, ImageError> {
    if !spec.kind.is_component() {
        return Err(ImageError::NotAComponent(spec.kind));
    }
    let body_size = u32::try_from(spec.body.len())
        .map_err(|_| ImageError::BadComponent { entry: spec.kind.to_string(), reason: "body exceeds 4 GiB".into() })?;
    let crypto = |e: crate::fwcrypto::FwCryptoError| ImageError::Crypto(e.to_string());
    let (header, stored_body) = match &spec.encryption {
        None => (ComponentHeader::plain(body_size, spec.svn), spec.body.clone()),
        Some(enc) => {
            let ikek = ikek.ok_or_else(|| ImageError::Crypto("encrypting a component needs the iKEK".into()))?;
            let wrapped = wrap_ck(ikek, &enc.ck).map_err(crypto)?;
            let header = ComponentHeader::encrypted(body_size, spec.svn, enc.iv, wrapped.bytes());
            (header, encrypt_component(&enc.ck, &enc.iv, &spec.body).map_err(crypto)?)
        }
    };
    let signature = pss::sign(signer, &signed_message(&header, &spec.body))?;
    Ok(Component { header, stored_body, signature })
}

/// Lays out a complete image: ARK record, wrapped iKEK, then the components
/// in the given order.
pub fn build_image(ark: &ArkRecord, wrapped_ikek: &[u8], components: &[(EntryKind, Component)]) -> Result<FlashImage, ImageError> {
    let mut sections = vec![(EntryKind::ArkKey, ark.to_bytes()), (EntryKind::IkekBlob, wrapped_ikek.to_vec())];
    for (kind, c) in components {
        if !kind.is_component() {
            return Err(ImageError::NotAComponent(*kind));
        }
        sections.push((*kind, c.to_bytes()));
    }
    layout(&sections)
}
