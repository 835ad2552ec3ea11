#!/usr/bin/env python3
"""Packs SVI2 frames straight from the layout table in docs/FORMATS.md."""

LAYOUT = [  # (name, width) in wire order, first transmitted bit first
    ("start", 5), ("vdd", 1), ("vddnb", 1), ("rsvd", 1), ("ack0", 1),
    ("psi0_l", 1), ("vid_hi", 7), ("ack1", 1),
    ("vid_lo", 1), ("psi1_l", 1), ("tfn", 1), ("ll_trim", 3), ("offset_trim", 2), ("ack2", 1),
]


def pack(fields):
    bits = ""
    for name, width in LAYOUT:
        bits += format(fields.get(name, 0), f"0{width}b")
    assert len(bits) == 27
    return int(bits, 2)


def command(vdd, vddnb, vid, power_state, tfn, ll=0b011, off=0b10):
    return pack({
        "start": 0b11000, "vdd": vdd, "vddnb": vddnb,
        "psi0_l": power_state & 1, "vid_hi": vid >> 1,
        "vid_lo": vid & 1, "psi1_l": power_state >> 1, "tfn": int(tfn),
        "ll_trim": ll, "offset_trim": off,
    })


if __name__ == "__main__":
    print("soc vid=0x18 ps=3 tfn=0:", format(command(0, 1, 0x18, 3, False), "07x"))
    print("core vid=0x58 ps=3 tfn=1:", format(command(1, 0, 0x58, 3, True), "07x"))
    print("both vid=0xff ps=0 tfn=0 ll=5 off=1:", format(command(1, 1, 0xFF, 0, False, 5, 1), "07x"))
