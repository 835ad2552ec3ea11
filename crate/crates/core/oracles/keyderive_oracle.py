#!/usr/bin/env python3
"""Straight-line reference computations for the key-derivation golden values.

Independent of the Rust code: plain hashlib/hmac and textbook affine EC math.
Run it and paste the printed values into the frozen test constants.
"""
import hashlib
import hmac

# secp384r1
P384_P = 2**384 - 2**128 - 2**96 + 2**32 - 1
P384_A = P384_P - 3
P384_B = int("b3312fa7e23ee7e4988e056be3f82d19181d9c6efe8141120314088f5013875ac656398d8a2ed19d2a85c8edd3ec2aef", 16)
P384_N = int("ffffffffffffffffffffffffffffffffffffffffffffffffc7634d81f4372ddf581a0db248b0a77aecec196accc52973", 16)
P384_G = (
    int("aa87ca22be8b05378eb1c71ef320ad746e1d3b628ba79b9859f741e082542a385502f25dbf55296c3a545e3872760ab7", 16),
    int("3617de4a96262c6f5d9e98bf9292dc29f8f41dbd289a147ce9da3113b5f0b8c00a60b1ce1d7e819d7a431d7c90ea0e5f", 16),
)

# secp256k1
K1_P = 2**256 - 2**32 - 977
K1_A = 0
K1_N = int("fffffffffffffffffffffffffffffffebaaedce6af48a03bbfd25e8cd0364141", 16)
K1_G = (
    int("79be667ef9dcbbac55a06295ce870b07029bfcdb2dce28d959f2815b16f81798", 16),
    int("483ada7726a3c4655da4fbfc0e1108a8fd17b448a68554199c47d08ffb10d4b8", 16),
)


def ec_add(p, a, P, Q):
    if P is None:
        return Q
    if Q is None:
        return P
    if P[0] == Q[0] and (P[1] + Q[1]) % p == 0:
        return None
    if P == Q:
        lam = (3 * P[0] * P[0] + a) * pow(2 * P[1], -1, p) % p
    else:
        lam = (Q[1] - P[1]) * pow(Q[0] - P[0], -1, p) % p
    x = (lam * lam - P[0] - Q[0]) % p
    y = (lam * (P[0] - x) - P[1]) % p
    return (x, y)


def ec_mul(p, a, k, G):
    R = None
    Q = G
    while k:
        if k & 1:
            R = ec_add(p, a, R, Q)
        Q = ec_add(p, a, Q, Q)
        k >>= 1
    return R


def sha384(b):
    return hashlib.sha384(b).digest()


def kdf_counter(key, label, context, out_len):
    out = b""
    i = 1
    while len(out) < out_len:
        msg = i.to_bytes(4, "big") + label + b"\x00" + context + (out_len * 8).to_bytes(4, "big")
        out += hmac.new(key, msg, hashlib.sha256).digest()
        i += 1
    return out[:out_len]


def scalar_from_extra_bits(b56):
    return int.from_bytes(b56, "big") % (P384_N - 1) + 1


def keypair(b56):
    d = scalar_from_extra_bits(b56)
    return d, ec_mul(P384_P, P384_A, d, P384_G)


def cek(secret32):
    return keypair(kdf_counter(hashlib.sha256(secret32).digest(), b"sev-chip-endorsement-key", b"", 56))


def vcek(final48):
    return keypair(kdf_counter(final48, b"sev-versioned-chip-endorsement-key", b"", 56))


def chain(s, svn):
    for _ in range(255 - svn):
        s = sha384(s)
    return s


def lock(s):
    return sha384(b"\x00" * 8 + s)


def ladder(sec255, tcb):
    """Returns (levels, final) where levels[i] = SHA384(sec_..._v_i)."""
    s = sec255
    levels = []
    for i, v in enumerate(tcb):
        s = chain(s, v)
        levels.append(sha384(s))
        if i < 7:
            s = lock(s)
    return levels, sha384(s)


def hx(b):
    return b.hex()


def main():
    print("kdf 0x0b:", hx(kdf_counter(b"\x0b" * 32, b"sev-chip-endorsement-key", b"", 56)))
    print("kdf 0x0b 32:", hx(kdf_counter(b"\x0b" * 32, b"sev-chip-endorsement-key", b"", 32)))

    rnd = hashlib.sha512(b"extra random bits fixture").digest()[:56]
    print("scalar(rnd):", format(scalar_from_extra_bits(rnd), "096x"))

    cek_secret = bytes(range(1, 33))
    d, Q = cek(cek_secret)
    print("cek scalar:", format(d, "096x"))
    print("cek x:", format(Q[0], "096x"))
    print("cek y:", format(Q[1], "096x"))

    idp = ec_mul(K1_P, K1_A, int.from_bytes(cek_secret, "big"), K1_G)
    print("id:", format(idp[0], "064x") + format(idp[1], "064x"))

    zero48 = b"\x00" * 48
    print("incorporate(0^48, 0):", hx(chain(zero48, 0)))
    print("lock(0^48):", hx(lock(zero48)))

    tcb = [0x03, 0, 0, 0, 0, 0, 0x08, 0x73]
    levels, final = ladder(zero48, tcb)
    for i, l in enumerate(levels):
        print(f"level[{i}]:", hx(l))
    print("final:", hx(final))
    d, Q = vcek(final)
    print("vcek scalar:", format(d, "096x"))
    print("vcek x:", format(Q[0], "096x"))
    print("vcek y:", format(Q[1], "096x"))

    fuse = bytes(0x40 + i for i in range(48))
    s = chain(fuse, 3)
    print("rom_bl v0=3 locked:", hx(lock(s)))
    print("rom_bl v0=3 minus1:", hx(sha384(s)))

    # PSP OS stage: v1..v5 = 0, v6 = 8, starting from the locked v0 secret above
    s = lock(s)
    for i, v in enumerate([0, 0, 0, 0, 0, 8]):
        s = chain(s, v)
        s = lock(s)
    print("psp_os handoff (v6=8):", hx(s))

    h = [hashlib.sha384(f"component-{i}".encode()).digest() for i in range(3)]
    s = zero48
    for c in h:
        s = sha384(s + c)
    d, Q = vcek(s)
    print("dice final:", hx(s))
    print("dice x:", format(Q[0], "096x"))
    print("dice y:", format(Q[1], "096x"))


if __name__ == "__main__":
    main()
