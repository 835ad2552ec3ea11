// SPDX-License-Identifier: Apache-2.0

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rsa::pkcs8::DecodePrivateKey;
use rsa::traits::PublicKeyParts;
use rsa::{BigUint, RsaPrivateKey};
use sha2::{Digest, Sha256, Sha384};

use super::*;
use crate::fwcrypto::{decrypt_component, decrypt_image_component, unwrap_ck, unwrap_ikek, FwCryptoError, KeyMaterial, KeyRole};

const GENUINE_PEM: &str = include_str!("../../fixtures/keys/genuine_ark.pem");
const ATTACKER_PEM: &str = include_str!("../../fixtures/keys/attacker_ark.pem");
const EMBEDDED_PEM: &str = include_str!("../../fixtures/keys/sev_embedded.pem");
const ZEN2: &[u8] = include_bytes!("../../fixtures/images/genuine_zen2.bin");
const ZEN3: &[u8] = include_bytes!("../../fixtures/images/genuine_zen3.bin");
const PAYLOAD: &[u8] = include_bytes!("../../fixtures/images/payload_svn255.bin");

const WRAPPED_IKEK: &str = "00112233445566778899aabbccddeeff";

fn key(pem: &str) -> RsaPrivateKey {
    RsaPrivateKey::from_pkcs8_pem(pem).unwrap()
}

fn record(k: &RsaPrivateKey) -> ArkRecord {
    ArkRecord::from_public_key(&k.to_public_key()).unwrap()
}

fn stream(label: &str, n: usize) -> Vec<u8> {
    let mut out = Vec::new();
    let mut i = 0u32;
    while out.len() < n {
        let mut h = Sha256::new();
        h.update(label.as_bytes());
        h.update(i.to_le_bytes());
        out.extend_from_slice(&h.finalize());
        i += 1;
    }
    out.truncate(n);
    out
}

fn rk() -> KeyMaterial {
    KeyMaterial::root(&(0u8..16).collect::<Vec<_>>()).unwrap()
}

fn seq(start: u8) -> Vec<u8> {
    (start..start + 16).collect()
}

fn digest_of(k: &RsaPrivateKey) -> [u8; 32] {
    record(k).digest()
}

fn plain(kind: EntryKind, body: Vec<u8>, svn: u8) -> ComponentSpec {
    ComponentSpec { kind, body, svn, encryption: None }
}

fn build_zen2() -> FlashImage {
    let g = key(GENUINE_PEM);
    let psp = build_component(&plain(EntryKind::PspOs, stream("psp-os", 3000), 3), None, &g).unwrap();
    let sev = build_component(&plain(EntryKind::SevFw, stream("sev-fw", 5000), 8), None, &g).unwrap();
    build_image(&record(&g), &hex::decode(WRAPPED_IKEK).unwrap(), &[(EntryKind::PspOs, psp), (EntryKind::SevFw, sev)]).unwrap()
}

fn zen3_psp_body() -> Vec<u8> {
    let mut b = embedded_key_blob(&record(&key(EMBEDDED_PEM)));
    b.extend_from_slice(&stream("psp-os-zen3", 2500));
    b
}

fn build_zen3() -> FlashImage {
    let g = key(GENUINE_PEM);
    let e = key(EMBEDDED_PEM);
    let wrapped = KeyMaterial::new(KeyRole::WrappedIkek, &hex::decode(WRAPPED_IKEK).unwrap()).unwrap();
    let ikek = unwrap_ikek(&rk(), &wrapped).unwrap();
    let enc = |ck: u8, iv: u8| {
        Some(ComponentEncryption {
            ck: KeyMaterial::new(KeyRole::Ck, &seq(ck)).unwrap(),
            iv: seq(iv).try_into().unwrap(),
        })
    };
    let psp = ComponentSpec { kind: EntryKind::PspOs, body: zen3_psp_body(), svn: 3, encryption: enc(0xa0, 0xb0) };
    let sev = ComponentSpec { kind: EntryKind::SevFw, body: stream("sev-fw-zen3", 4001), svn: 8, encryption: enc(0xc0, 0xd0) };
    let psp = build_component(&psp, Some(&ikek), &g).unwrap();
    let sev = build_component(&sev, Some(&ikek), &e).unwrap();
    build_image(&record(&g), wrapped.bytes(), &[(EntryKind::PspOs, psp), (EntryKind::SevFw, sev)]).unwrap()
}

fn payload_body() -> Vec<u8> {
    let mut b = b"sevforge extraction payload\0".to_vec();
    b.extend_from_slice(&stream("payload", 500));
    b
}

#[test]
fn builder_matches_golden_images() {
    assert_eq!(build_zen2().as_bytes(), ZEN2);
    assert_eq!(build_zen3().as_bytes(), ZEN3);
}

#[test]
fn attack_pipeline_matches_golden_payload_image() {
    let a = key(ATTACKER_PEM);
    let img = replace_ark(&build_zen2(), &record(&a)).unwrap();
    let img = insert_payload(&img, &payload_body(), EntryKind::PspOs, 255, &a).unwrap();
    let img = insert_payload(&img, &stream("sev-fw", 5000), EntryKind::SevFw, 8, &a).unwrap();
    assert_eq!(img.as_bytes(), PAYLOAD);
    let r = verify_chain(&img, &digest_of(&a), None);
    assert!(r.passed, "{r:?}");
    assert_eq!(r.psp_os_svn, Some(255));
}

#[test]
fn parse_is_lossless() {
    for b in [ZEN2, ZEN3, PAYLOAD] {
        assert_eq!(parse_image(b).unwrap().to_bytes(), b);
    }
}

#[test]
fn golden_structure() {
    let img = parse_image(ZEN2).unwrap();
    let kinds: Vec<EntryKind> = img.entries().iter().map(|e| e.kind).collect();
    assert_eq!(kinds, [EntryKind::ArkKey, EntryKind::IkekBlob, EntryKind::PspOs, EntryKind::SevFw]);
    assert_eq!(img.entries()[0].offset, 80);
    assert_eq!(img.entries()[0].length, 528);
    assert_eq!(img.entries()[1].offset, 608);
    assert_eq!(img.entries()[2].offset, 624);
    assert_eq!(img.ark().unwrap().modulus_bits(), 4096);
    assert_eq!(img.ark().unwrap().exponent(), 65537);
    let psp = img.component(EntryKind::PspOs).unwrap();
    assert_eq!(psp.header.svn, 3);
    assert_eq!(psp.header.body_size, 3000);
    assert!(!psp.header.encrypted);
    assert_eq!(psp.signature.len(), SIGNATURE_LEN);
}

#[test]
fn svn_byte_at_documented_offset() {
    let img = parse_image(PAYLOAD).unwrap();
    let off = img.entry(EntryKind::PspOs).unwrap().offset as usize;
    assert_eq!(PAYLOAD[off + OFF_SVN], 255);
    assert_eq!(off, 624);
}

#[test]
fn genuine_chains_verify() {
    let g = key(GENUINE_PEM);
    let r = verify_chain(&parse_image(ZEN2).unwrap(), &digest_of(&g), None);
    assert!(r.passed);
    assert_eq!(r.sev_fw_key, Some(SevFwKeySource::Ark));
    assert_eq!((r.psp_os_svn, r.sev_fw_svn), (Some(3), Some(8)));

    let zen3 = parse_image(ZEN3).unwrap();
    let r = verify_chain(&zen3, &digest_of(&g), Some(&rk()));
    assert!(r.passed, "{r:?}");
    assert_eq!(r.sev_fw_key, Some(SevFwKeySource::PspOsEmbedded));
}

#[test]
fn encrypted_chain_needs_the_right_root_key() {
    let g = key(GENUINE_PEM);
    let zen3 = parse_image(ZEN3).unwrap();
    let r = verify_chain(&zen3, &digest_of(&g), None);
    assert_eq!(r.status(ChainStep::PspOsSignature), StepStatus::Fail);
    assert_eq!(r.status(ChainStep::SevFwSignature), StepStatus::Skipped);

    let wrong = KeyMaterial::root(&[0x55; 16]).unwrap();
    let garbage = decrypt_image_component(&zen3, EntryKind::PspOs, &wrong).unwrap();
    assert_ne!(garbage, zen3_psp_body());
    let r = verify_chain(&zen3, &digest_of(&g), Some(&wrong));
    assert_eq!(r.status(ChainStep::ArkHash), StepStatus::Pass);
    assert_eq!(r.status(ChainStep::PspOsSignature), StepStatus::Fail);
    assert!(!r.passed);
}

#[test]
fn attacker_ark_fails_against_genuine_rom() {
    let g = key(GENUINE_PEM);
    let img = parse_image(PAYLOAD).unwrap();
    let r = verify_chain(&img, &digest_of(&g), None);
    assert_eq!(r.status(ChainStep::ArkHash), StepStatus::Fail);
    assert_eq!(r.status(ChainStep::PspOsSignature), StepStatus::Skipped);
    assert_eq!(r.status(ChainStep::SevFwSignature), StepStatus::Skipped);
    assert!(!r.passed);
}

#[test]
fn tampered_sev_body_fails_signature() {
    let g = key(GENUINE_PEM);
    let mut bytes = ZEN2.to_vec();
    let e = *parse_image(ZEN2).unwrap().entry(EntryKind::SevFw).unwrap();
    bytes[e.offset as usize + HEADER_LEN + 1234] ^= 0x01;
    let r = verify_chain(&parse_image(&bytes).unwrap(), &digest_of(&g), None);
    assert_eq!(r.status(ChainStep::PspOsSignature), StepStatus::Pass);
    assert_eq!(r.status(ChainStep::SevFwSignature), StepStatus::Fail);
}

#[test]
fn any_ark_bit_flip_breaks_the_hash() {
    let g = key(GENUINE_PEM);
    let img = parse_image(ZEN2).unwrap();
    let e = *img.entry(EntryKind::ArkKey).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(256);
    for _ in 0..256 {
        let bit = rng.gen_range(0..e.length as usize * 8);
        let mut b = ZEN2.to_vec();
        b[e.offset as usize + bit / 8] ^= 1 << (bit % 8);
        let r = verify_chain(&parse_image(&b).unwrap(), &digest_of(&g), None);
        assert_eq!(r.status(ChainStep::ArkHash), StepStatus::Fail, "bit {bit}");
    }
}

#[test]
fn non_functional_modulus_bit_flip() {
    let g = key(GENUINE_PEM);
    let img = parse_image(ZEN2).unwrap();
    let mut m = img.ark().unwrap().modulus().clone();
    m ^= BigUint::from(1u32) << 1000;
    let flipped = ArkRecord::new(m, 65537).unwrap();
    let r = verify_chain(&replace_ark(&img, &flipped).unwrap(), &digest_of(&g), None);
    assert_eq!(r.status(ChainStep::ArkHash), StepStatus::Fail);
}

#[test]
fn replace_ark_with_same_key_is_identity() {
    let img = parse_image(ZEN2).unwrap();
    let same = replace_ark(&img, &img.ark().unwrap()).unwrap();
    assert_eq!(same.as_bytes(), ZEN2);
}

#[test]
fn replace_ark_changes_only_the_ark() {
    let img = parse_image(ZEN2).unwrap();
    let e = *img.entry(EntryKind::ArkKey).unwrap();
    let swapped = replace_ark(&img, &record(&key(ATTACKER_PEM))).unwrap();
    for (i, (a, b)) in ZEN2.iter().zip(swapped.as_bytes()).enumerate() {
        if !(e.offset as usize..(e.offset + e.length) as usize).contains(&i) {
            assert_eq!(a, b, "byte {i}");
        }
    }
}

#[test]
fn insert_payload_checks_signer() {
    let img = parse_image(ZEN2).unwrap();
    let a = key(ATTACKER_PEM);
    assert_eq!(
        insert_payload(&img, b"payload", EntryKind::PspOs, 255, &a),
        Err(ImageError::SignerMismatch(EntryKind::PspOs))
    );
    assert_eq!(
        insert_payload(&img, b"payload", EntryKind::ArkKey, 255, &a),
        Err(ImageError::NotAComponent(EntryKind::ArkKey))
    );
}

#[test]
fn resized_payload_relocates_following_entries() {
    let g = key(GENUINE_PEM);
    let img = insert_payload(&parse_image(ZEN2).unwrap(), b"short payload", EntryKind::PspOs, 255, &g).unwrap();
    let r = verify_chain(&img, &digest_of(&g), None);
    assert!(r.passed);
    assert_eq!(r.psp_os_svn, Some(255));
    assert_eq!(img.component(EntryKind::SevFw).unwrap(), parse_image(ZEN2).unwrap().component(EntryKind::SevFw).unwrap());
}

#[test]
fn signed_digest_matches_independent_rehash() {
    let g = key(GENUINE_PEM);
    let img = parse_image(ZEN2).unwrap();
    let r = verify_chain(&img, &digest_of(&g), None);
    for (kind, step) in [(EntryKind::PspOs, ChainStep::PspOsSignature), (EntryKind::SevFw, ChainStep::SevFwSignature)] {
        let e = *img.entry(kind).unwrap();
        let raw = &ZEN2[e.offset as usize..(e.offset + e.length) as usize];
        let body_len = u32::from_le_bytes(raw[4..8].try_into().unwrap()) as usize;
        let mut msg = raw[..HEADER_LEN].to_vec();
        msg[0x40..0x48].fill(0);
        msg.extend_from_slice(&raw[HEADER_LEN..HEADER_LEN + body_len]);
        let s = r.steps.iter().find(|s| s.step == step).unwrap();
        assert_eq!(s.signed_digest.as_deref(), Some(hex::encode(Sha384::digest(&msg)).as_str()));
    }
}

#[test]
fn decrypt_component_chain_composition() {
    let img = parse_image(ZEN3).unwrap();
    let plain = decrypt_image_component(&img, EntryKind::PspOs, &rk()).unwrap();
    assert_eq!(plain, zen3_psp_body());

    let comp = img.component(EntryKind::PspOs).unwrap();
    let ikek = unwrap_ikek(&rk(), &KeyMaterial::new(KeyRole::WrappedIkek, img.ikek_blob().unwrap()).unwrap()).unwrap();
    let ck = unwrap_ck(&ikek, &KeyMaterial::new(KeyRole::WrappedCk, comp.header.wrapped_ck_bytes()).unwrap()).unwrap();
    assert_eq!(ck.bytes(), seq(0xa0));
    let mut stepwise = decrypt_component(&ck, &comp.header.iv, &comp.stored_body).unwrap();
    stepwise.truncate(comp.header.body_size as usize);
    assert_eq!(stepwise, plain);

    assert_eq!(decrypt_image_component(&img, EntryKind::SevFw, &rk()).unwrap(), stream("sev-fw-zen3", 4001));
    assert_eq!(
        decrypt_image_component(&parse_image(ZEN2).unwrap(), EntryKind::PspOs, &rk()),
        Err(FwCryptoError::NotEncrypted(EntryKind::PspOs))
    );
}

#[test]
fn pss_encoding_is_recovered_by_public_operation() {
    let g = key(GENUINE_PEM);
    let msg = b"message";
    let sig = pss::sign(&g, msg).unwrap();
    let em = BigUint::from_bytes_be(&sig).modpow(g.e(), g.n()).to_bytes_be();
    let m_hash: [u8; 48] = Sha384::digest(msg).into();
    let mut expected = pss::emsa_pss_encode(&m_hash, 4096).unwrap();
    while expected[0] == 0 {
        expected.remove(0);
    }
    assert_eq!(em, expected);
    assert!(pss::verify(&g.to_public_key(), msg, &sig));
    assert!(!pss::verify(&g.to_public_key(), b"messagf", &sig));
    assert_eq!(pss::sign(&g, msg).unwrap(), sig);
}

#[test]
fn verifier_accepts_randomized_salt_signatures() {
    use rsa::pss::BlindedSigningKey;
    use rsa::signature::{RandomizedSigner, SignatureEncoding};
    let g = key(GENUINE_PEM);
    let sk = BlindedSigningKey::<Sha384>::new_with_salt_len(g.clone(), 48);
    let sig = sk.sign_with_rng(&mut ChaCha8Rng::seed_from_u64(3), b"m").to_vec();
    assert!(pss::verify(&g.to_public_key(), b"m", &sig));
}

fn set_entry(bytes: &mut [u8], index: usize, kind: u32, offset: u32, length: u32) {
    let o = DIRECTORY_HEADER_LEN + index * DIRECTORY_ENTRY_LEN;
    bytes[o..o + 4].copy_from_slice(&kind.to_le_bytes());
    bytes[o + 4..o + 8].copy_from_slice(&offset.to_le_bytes());
    bytes[o + 8..o + 12].copy_from_slice(&length.to_le_bytes());
}

#[test]
fn malformed_images_name_the_entry() {
    let img = parse_image(ZEN2).unwrap();
    let psp = *img.entry(EntryKind::PspOs).unwrap();
    let sev = *img.entry(EntryKind::SevFw).unwrap();

    let mut b = ZEN2.to_vec();
    set_entry(&mut b, 3, 3, psp.offset + 16, sev.length);
    assert_eq!(
        parse_image(&b),
        Err(ImageError::OverlappingEntries { first: "psp-os entry #2".into(), second: "sev-fw entry #3".into() })
    );

    let mut b = ZEN2.to_vec();
    b[psp.offset as usize] = b'X';
    assert!(matches!(parse_image(&b), Err(ImageError::BadMagic { entry, .. }) if entry == "psp-os entry #2"));

    let mut b = ZEN2.to_vec();
    set_entry(&mut b, 3, 3, sev.offset, sev.length + 4096);
    assert!(matches!(parse_image(&b), Err(ImageError::TruncatedBody { entry, .. }) if entry == "sev-fw entry #3"));

    let mut b = ZEN2.to_vec();
    set_entry(&mut b, 3, 3, sev.offset + 4, sev.length);
    assert!(matches!(parse_image(&b), Err(ImageError::Misaligned { .. })));

    let mut b = ZEN2.to_vec();
    b[0] = b'#';
    assert!(matches!(parse_image(&b), Err(ImageError::BadMagic { entry, .. }) if entry == "directory"));

    assert!(matches!(parse_image(&ZEN2[..ZEN2.len() - 16]), Err(ImageError::SizeMismatch { .. })));

    let mut b = ZEN2.to_vec();
    set_entry(&mut b, 3, 1, sev.offset, sev.length);
    assert_eq!(parse_image(&b), Err(ImageError::DuplicateEntry(EntryKind::ArkKey)));
}

#[test]
fn entry_kind_names_round_trip() {
    for k in EntryKind::ALL {
        assert_eq!(k.name().parse::<EntryKind>().unwrap(), k);
        assert_eq!(EntryKind::from_code(k.code()), Some(k));
    }
}
