import re
import time
from datetime import datetime, timezone
from typing import Iterable, List

import numpy as np

_HEX64 = re.compile(r"^[0-9a-f]{16}$")


def f64_to_hex(values) -> List[str]:
    """Encode float64 values as 16-hex-digit big-endian IEEE-754 bit patterns."""
    raw = np.ascontiguousarray(values, dtype=">f8").ravel().tobytes().hex()
    return [raw[i:i + 16] for i in range(0, len(raw), 16)]


def hex_to_f64(codes: Iterable[str]) -> np.ndarray:
    codes = list(codes)
    for pos, c in enumerate(codes):
        if not isinstance(c, str) or not _HEX64.match(c):
            raise ValueError(f"malformed float bit pattern at position {pos}: {c!r}")
    buf = bytes.fromhex("".join(codes))
    return np.frombuffer(buf, dtype=">f8").astype(np.float64)


def derive_seed(seed: int, *stream: int) -> int:
    """Child seed for an independent random stream (per chunk, per worker...)."""
    seq = np.random.SeedSequence([int(seed) & 0xFFFFFFFF, *[int(s) for s in stream]])
    return int(seq.generate_state(1, dtype=np.uint32)[0])


def now_utc():
    return datetime.now(timezone.utc)


def clock() -> float:
    return time.perf_counter()
