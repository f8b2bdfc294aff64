"""Independent reference for the qowf angle expansion.

Writes qowf_golden.txt: one vector per line,
    <input hex> <bit length> <n> <theta_1> <phi_1> ... <theta_n> <phi_n>
with angles printed to 12 decimal places.
"""
import hashlib
import math

DOMAIN = b"qcheque/qowf/v1"


def words(data: bytes, bits: int, count: int):
    out = []
    counter = 0
    while len(out) < count:
        h = hashlib.sha256(DOMAIN + bits.to_bytes(8, "big") + data + counter.to_bytes(8, "big")).digest()
        out += [int.from_bytes(h[i:i + 8], "big") for i in range(0, 32, 8)]
        counter += 1
    return out[:count]


def angles(data: bytes, bits: int, n: int):
    w = words(data, bits, 2 * n)
    res = []
    for j in range(n):
        u1 = (w[2 * j] >> 11) / float(1 << 53)
        u2 = (w[2 * j + 1] >> 11) / float(1 << 53)
        res.append((math.acos(math.sqrt(u1)), 2 * math.pi * u2))
    return res


VECTORS = [
    (b"alice".hex(), 40, 3),
    (b"alicf".hex(), 40, 3),  # one bit away from the previous vector
    ("00", 8, 1),
    ("80", 1, 2),
    ("fe", 7, 4),
    ("deadbeef" * 8, 256, 8),
    ("0123456789abcdef", 64, 5),
]

with open("qowf_golden.txt", "w") as f:
    for hx, bits, n in VECTORS:
        fields = [hx, str(bits), str(n)]
        for t, p in angles(bytes.fromhex(hx), bits, n):
            fields += ["%.12f" % t, "%.12f" % p]
        f.write(" ".join(fields) + "\n")
