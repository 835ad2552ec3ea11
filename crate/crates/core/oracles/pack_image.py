#!/usr/bin/env python3
"""Independent packer for the golden flash images under fixtures/images.

Uses Python integers for RSA, hashlib for hashing and the `cryptography`
package only for AES and PEM loading. Run from the crate root:

    python3 oracles/pack_image.py
"""
import hashlib
import json
import struct
from pathlib import Path

from cryptography.hazmat.primitives import serialization
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes

ROOT = Path(__file__).resolve().parent.parent
KEYS = ROOT / "fixtures" / "keys"
OUT = ROOT / "fixtures" / "images"

RK = bytes(range(16))
WRAPPED_IKEK = bytes.fromhex("00112233445566778899aabbccddeeff")


def stream(label, n):
    out = b""
    i = 0
    while len(out) < n:
        out += hashlib.sha256(label.encode() + struct.pack("<I", i)).digest()
        i += 1
    return out[:n]


def load_key(name):
    k = serialization.load_pem_private_key((KEYS / f"{name}.pem").read_bytes(), None)
    nums = k.private_numbers()
    return nums.public_numbers.n, nums.public_numbers.e, nums.d


def ark_record(n, e):
    bits = n.bit_length()
    return b"$ARK" + struct.pack("<III", bits, e, 0) + n.to_bytes((bits + 7) // 8, "little")


def mgf1(seed, length):
    out = b""
    c = 0
    while len(out) < length:
        out += hashlib.sha384(seed + struct.pack(">I", c)).digest()
        c += 1
    return out[:length]


def pss_sign(key, msg):
    n, _, d = key
    mod_bits = n.bit_length()
    em_bits = mod_bits - 1
    em_len = (em_bits + 7) // 8
    m_hash = hashlib.sha384(msg).digest()
    salt = hashlib.sha384(b"sevforge-pss-salt" + m_hash).digest()
    h = hashlib.sha384(b"\x00" * 8 + m_hash + salt).digest()
    ps = b"\x00" * (em_len - 48 - 48 - 2)
    db = ps + b"\x01" + salt
    masked = bytes(a ^ b for a, b in zip(db, mgf1(h, len(db))))
    masked = bytes([masked[0] & (0xFF >> (8 * em_len - em_bits))]) + masked[1:]
    em = masked + h + b"\xbc"
    s = pow(int.from_bytes(em, "big"), d, n)
    return s.to_bytes((mod_bits + 7) // 8, "big")


def ecb(key, data, encrypt):
    c = Cipher(algorithms.AES(key), modes.ECB())
    op = c.encryptor() if encrypt else c.decryptor()
    return op.update(data) + op.finalize()


def cbc_encrypt(key, iv, data):
    op = Cipher(algorithms.AES(key), modes.CBC(iv)).encryptor()
    return op.update(data) + op.finalize()


def header(body_size, svn, stored_size, encrypted=False, key_bits=0, iv=b"\x00" * 16, wrapped_ck=b"\x00" * 32, sig=True):
    h = bytearray(256)
    h[0:4] = b"$PS1"
    struct.pack_into("<I", h, 0x04, body_size)
    h[0x08] = 1 if encrypted else 0
    h[0x09] = svn
    struct.pack_into("<H", h, 0x0A, key_bits)
    struct.pack_into("<I", h, 0x0C, stored_size)
    h[0x10:0x20] = iv
    h[0x20:0x40] = wrapped_ck.ljust(32, b"\x00")
    if sig:
        struct.pack_into("<II", h, 0x40, 256 + stored_size, 512)
    return bytes(h)


def component(body, svn, signer, enc=None):
    """enc = (ikek, ck, iv) for an encrypted component."""
    if enc is None:
        stored = body
        hdr_args = dict(body_size=len(body), svn=svn, stored_size=len(body))
    else:
        ikek, ck, iv = enc
        padded = body + b"\x00" * (-len(body) % 16)
        stored = cbc_encrypt(ck, iv, padded)
        hdr_args = dict(body_size=len(body), svn=svn, stored_size=len(stored), encrypted=True,
                        key_bits=len(ck) * 8, iv=iv, wrapped_ck=ecb(ikek, ck, True))
    signed_hdr = header(**hdr_args, sig=False)
    sig = pss_sign(signer, signed_hdr + body)
    return header(**hdr_args) + stored + sig


def layout(sections):
    dir_end = 16 + 16 * len(sections)
    cursor = (dir_end + 15) // 16 * 16
    offsets = []
    for _, b in sections:
        offsets.append(cursor)
        cursor = (cursor + len(b) + 15) // 16 * 16
    img = bytearray(b"\xff" * cursor)
    img[0:16] = b"$SFD" + struct.pack("<HHII", 1, len(sections), cursor, 0)
    for i, ((kind, body), off) in enumerate(zip(sections, offsets)):
        img[16 + 16 * i:32 + 16 * i] = struct.pack("<IIII", kind, off, len(body), 0)
        img[off:off + len(body)] = body
    return bytes(img)


ARK, PSP, SEV, IKEK = 1, 2, 3, 4


def main():
    OUT.mkdir(parents=True, exist_ok=True)
    genuine = load_key("genuine_ark")
    attacker = load_key("attacker_ark")
    embedded = load_key("sev_embedded")
    genuine_rec = ark_record(genuine[0], genuine[1])
    attacker_rec = ark_record(attacker[0], attacker[1])
    embedded_rec = ark_record(embedded[0], embedded[1])

    psp_body = stream("psp-os", 3000)
    sev_body = stream("sev-fw", 5000)
    zen2 = layout([
        (ARK, genuine_rec),
        (IKEK, WRAPPED_IKEK),
        (PSP, component(psp_body, 3, genuine)),
        (SEV, component(sev_body, 8, genuine)),
    ])
    (OUT / "genuine_zen2.bin").write_bytes(zen2)

    ikek = ecb(RK, WRAPPED_IKEK, False)
    psp3 = b"$EK1" + embedded_rec + stream("psp-os-zen3", 2500)
    sev3 = stream("sev-fw-zen3", 4001)
    zen3 = layout([
        (ARK, genuine_rec),
        (IKEK, WRAPPED_IKEK),
        (PSP, component(psp3, 3, genuine, (ikek, bytes(range(0xA0, 0xB0)), bytes(range(0xB0, 0xC0))))),
        (SEV, component(sev3, 8, embedded, (ikek, bytes(range(0xC0, 0xD0)), bytes(range(0xD0, 0xE0))))),
    ])
    (OUT / "genuine_zen3.bin").write_bytes(zen3)

    payload = b"sevforge extraction payload\x00" + stream("payload", 500)
    attack = layout([
        (ARK, attacker_rec),
        (IKEK, WRAPPED_IKEK),
        (PSP, component(payload, 255, attacker)),
        (SEV, component(sev_body, 8, attacker)),
    ])
    (OUT / "payload_svn255.bin").write_bytes(attack)

    meta = {
        "genuine_rom_digest": hashlib.sha256(genuine_rec).hexdigest(),
        "attacker_rom_digest": hashlib.sha256(attacker_rec).hexdigest(),
        "rk": RK.hex(),
        "ikek": ikek.hex(),
        "genuine_zen2_sha256": hashlib.sha256(zen2).hexdigest(),
        "genuine_zen3_sha256": hashlib.sha256(zen3).hexdigest(),
        "payload_svn255_sha256": hashlib.sha256(attack).hexdigest(),
        "payload_svn_offset": 0x09,
        "psp_os_offset": struct.unpack_from("<I", attack, 16 + 16 * 2 + 4)[0],
    }
    (OUT / "images.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(json.dumps(meta, indent=2))


if __name__ == "__main__":
    main()
