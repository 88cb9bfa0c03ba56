import hashlib


def derive_seed(*parts: object) -> int:
    """Stable 63-bit seed from any sequence of printable parts.

    Independent of PYTHONHASHSEED, so derived streams are identical across
    processes and runs.
    """
    digest = hashlib.blake2b("\x1f".join(map(str, parts)).encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") >> 1
