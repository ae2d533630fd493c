import hashlib


def cell_seed(master: int, phi: float, rate: int, alpha: float, replicate: int) -> int:
    """64-bit seed for one simulation cell, independent of sweep ordering."""
    key = f"{int(master)}|{float(phi):.9g}|{int(rate)}|{float(alpha):.9g}|{int(replicate)}"
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little")


def derived_seed(master: int, label: str) -> int:
    key = f"{int(master)}|{label}"
    return int.from_bytes(hashlib.sha256(key.encode()).digest()[:8], "little")
