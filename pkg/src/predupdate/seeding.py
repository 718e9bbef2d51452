"""Child-seed derivation.

``derive_seed(root, tag, index)`` is::

    h = splitmix64(root ^ fnv1a64(tag))
    h = splitmix64(h ^ index)

with all arithmetic modulo 2**64.  Every random stream in the package is
seeded this way, so results never depend on a global generator or on the
order in which streams are created.
"""

MASK = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK
    return x ^ (x >> 31)


def fnv1a64(text: str) -> int:
    h = 0xCBF29CE484222325
    for b in text.encode("utf-8"):
        h = ((h ^ b) * 0x100000001B3) & MASK
    return h


def derive_seed(root: int, tag: str, index: int = 0) -> int:
    h = splitmix64((int(root) & MASK) ^ fnv1a64(tag))
    return splitmix64(h ^ (int(index) & MASK))
