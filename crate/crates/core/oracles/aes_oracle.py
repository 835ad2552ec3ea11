#!/usr/bin/env python3
"""AES known-answer values for the firmware key hierarchy, via the `cryptography` package."""
from cryptography.hazmat.primitives.ciphers import Cipher, algorithms, modes


def ecb_dec(k, b):
    d = Cipher(algorithms.AES(k), modes.ECB()).decryptor()
    return d.update(b) + d.finalize()


def ecb_enc(k, b):
    e = Cipher(algorithms.AES(k), modes.ECB()).encryptor()
    return e.update(b) + e.finalize()


def cbc_dec(k, iv, b):
    d = Cipher(algorithms.AES(k), modes.CBC(iv)).decryptor()
    return d.update(b) + d.finalize()


rk = bytes.fromhex("000102030405060708090a0b0c0d0e0f")
wrapped_ikek = bytes.fromhex("00112233445566778899aabbccddeeff")
ikek = ecb_dec(rk, wrapped_ikek)
print("ikek:", ikek.hex())
wrapped_ck = bytes.fromhex("f0e0d0c0b0a090807060504030201000")
ck = ecb_dec(ikek, wrapped_ck)
print("ck:", ck.hex())
iv = bytes.fromhex("101112131415161718191a1b1c1d1e1f")
ct = bytes.fromhex("6bc1bee22e409f96e93d7e117393172a")
print("cbc block:", cbc_dec(ck, iv, ct).hex())
# FIPS-197 appendix C.1
print("fips197 enc:", ecb_enc(rk, bytes.fromhex("00112233445566778899aabbccddeeff")).hex())
