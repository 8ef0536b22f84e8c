"""SplitMix64 source of the shared hidden-state sequence.

Both stations regenerate the same angle stream from a common 64-bit seed.
The k-th output of SplitMix64 is ``mix(seed + (k + 1) * GAMMA)``, so the
stream is computed in closed form per index, which makes element k depend
only on ``(seed, k)`` and lets numpy produce whole runs at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

MASK64 = (1 << 64) - 1
GAMMA = 0x9E3779B97F4A7C15
_M1 = 0xBF58476D1CE4E5B9
_M2 = 0x94D049BB133111EB

TWO_PI = 2.0 * math.pi
_INV_2_53 = 2.0**-53


@dataclass(frozen=True)
class SeedState:
    state: int

    def __post_init__(self):
        if not 0 <= self.state <= MASK64:
            raise ValueError(f"state out of 64-bit range: {self.state}")


def mix64(z: int) -> int:
    """SplitMix64 output finalizer on a Python int."""
    z = ((z ^ (z >> 30)) * _M1) & MASK64
    z = ((z ^ (z >> 27)) * _M2) & MASK64
    return z ^ (z >> 31)


def next_raw(s: SeedState) -> tuple[SeedState, int]:
    state = (s.state + GAMMA) & MASK64
    return SeedState(state), mix64(state)


def _mix64_array(z: np.ndarray) -> np.ndarray:
    # uint64 array arithmetic wraps modulo 2**64
    z = (z ^ (z >> np.uint64(30))) * np.uint64(_M1)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(_M2)
    return z ^ (z >> np.uint64(31))


def raw_stream(seed: int, n: int) -> np.ndarray:
    """First ``n`` SplitMix64 outputs for ``seed`` as a uint64 array."""
    if n < 0:
        raise ValueError("n must be >= 0")
    seed = int(seed) & MASK64
    k = np.arange(1, n + 1, dtype=np.uint64)
    return _mix64_array(np.uint64(seed) + k * np.uint64(GAMMA))


def u64_to_angle(x: int) -> float:
    """Map a 64-bit word to [0, 2*pi) using its top 53 bits."""
    return TWO_PI * ((int(x) >> 11) * _INV_2_53)


def hidden_state_stream(seed: int, n: int) -> np.ndarray:
    """The shared sequence of hidden states, one angle in [0, 2*pi) per trial."""
    x = raw_stream(seed, n)
    return TWO_PI * ((x >> np.uint64(11)).astype(np.float64) * _INV_2_53)


def derive_seed(seed: int, tag: int) -> int:
    """Seed for an independent sub-stream, separated from ``seed`` by ``tag``."""
    return mix64((int(seed) ^ mix64(tag & MASK64)) & MASK64)


def parse_seed(text: str | int) -> int:
    """Accept a decimal or 0x-prefixed hex seed."""
    if isinstance(text, bool):
        raise ValueError(f"invalid seed: {text!r}")
    if isinstance(text, int):
        value = text
    else:
        s = str(text).strip().lower()
        try:
            value = int(s, 16) if s.startswith("0x") else int(s, 10)
        except ValueError:
            raise ValueError(f"invalid seed: {text!r}") from None
    if not 0 <= value <= MASK64:
        raise ValueError(f"seed out of 64-bit range: {text!r}")
    return value


def format_seed(seed: int) -> str:
    return f"0x{seed:016x}"
