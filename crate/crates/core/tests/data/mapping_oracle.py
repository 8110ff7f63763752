#!/usr/bin/env python3
"""Brute-force reference for identity-to-index mapping and public seed
derivation. Writes mapping_fixtures.json next to this script.

digest = SHAKE256(R || id) with 32 bytes of output. The 256-bit digest is
split into h equal big-endian segments; segment c selects row
(segment mod m) in column c. The public seed is the byte-wise sum mod 256
of the selected 32-byte entries. Matrix entry (row r, column c) has byte
j equal to (r*37 + c*11 + j*3 + 1) mod 256.
"""

import hashlib
import json
import os

HANDLES = [
    ("APNIC", bytes([0x01] * 32)),
    ("APNIC||CNNIC||CN1", bytes(range(32))),
    ("CA000002", bytes([0xFF] * 32)),
    ("例||テスト", bytes([0x5A] * 32)),
]


def entry(r, c):
    return bytes((r * 37 + c * 11 + j * 3 + 1) % 256 for j in range(32))


def indices(digest, m, h):
    value = int.from_bytes(digest, "big")
    width = 256 // h
    rows = []
    for c in range(h):
        shift = 256 - (c + 1) * width
        segment = (value >> shift) & ((1 << width) - 1)
        rows.append(segment % m)
    return rows


def public_seed(rows):
    acc = [0] * 32
    for c, r in enumerate(rows):
        for j, b in enumerate(entry(r, c)):
            acc[j] = (acc[j] + b) % 256
    return bytes(acc)


def main():
    fixtures = []
    for m, h in [(4, 4), (32, 32)]:
        cases = []
        for ident, r in HANDLES:
            digest = hashlib.shake_256(r + ident.encode("utf-8")).digest(32)
            rows = indices(digest, m, h)
            cases.append(
                {
                    "id": ident,
                    "r": r.hex(),
                    "digest": digest.hex(),
                    "indices": rows,
                    "rho": public_seed(rows).hex(),
                }
            )
        fixtures.append({"m": m, "h": h, "cases": cases})
    out = os.path.join(os.path.dirname(os.path.abspath(__file__)), "mapping_fixtures.json")
    with open(out, "w", encoding="utf-8") as f:
        json.dump({"fixtures": fixtures}, f, indent=1, ensure_ascii=False)
        f.write("\n")


if __name__ == "__main__":
    main()
