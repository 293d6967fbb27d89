"""Positional-information kernels: sinusoidal tables, ALiBi biases, RoPE rotations.

All kernels are pure functions of their arguments and work for any sequence
length; nothing is tied to a training-time maximum. The cached variants
memoize per-length tables and return read-only arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

DEFAULT_ROPE_BASE = 10000.0
SINUSOID_BASE = 10000.0


class OddDimensionError(ValueError):
    pass


@dataclass(frozen=True)
class Sinusoidal:
    """Fixed sin/cos features added to token embeddings at the input."""


@dataclass(frozen=True)
class ALiBi:
    """Per-head linear distance biases added to pre-softmax attention scores."""

    slopes: tuple[float, ...]

    def __post_init__(self):
        if not self.slopes:
            raise ValueError("ALiBi needs at least one slope")


@dataclass(frozen=True)
class Rotary:
    """Position-dependent 2D rotations of adjacent query/key dimension pairs."""

    base: float = DEFAULT_ROPE_BASE

    def __post_init__(self):
        if self.base <= 1:
            raise ValueError(f"rotary base must be > 1, got {self.base}")


PositionalScheme = Sinusoidal | ALiBi | Rotary

SCHEME_NAMES = ("sape", "alibi", "rope")


def scheme_name(scheme: PositionalScheme) -> str:
    if isinstance(scheme, Sinusoidal):
        return "sape"
    if isinstance(scheme, ALiBi):
        return "alibi"
    return "rope"


def scheme_from_name(
    name: str,
    num_heads: int,
    slopes: tuple[float, ...] | None = None,
    rope_base: float = DEFAULT_ROPE_BASE,
) -> PositionalScheme:
    """Resolve a CLI/config scheme string (``sape`` | ``alibi`` | ``rope``)."""
    key = name.strip().lower()
    if key == "sape":
        return Sinusoidal()
    if key == "alibi":
        if slopes is None:
            slopes = default_alibi_slopes(num_heads)
        if len(slopes) != num_heads:
            raise ValueError(f"need {num_heads} ALiBi slopes, got {len(slopes)}")
        return ALiBi(slopes=tuple(slopes))
    if key == "rope":
        return Rotary(base=rope_base)
    raise ValueError(f"unknown positional scheme {name!r}; expected one of {SCHEME_NAMES}")


def sinusoid_table(max_len: int, d_model: int) -> np.ndarray:
    """Sin/cos positional features: (max_len, d_model) with entries in [-1, 1].

    Even columns 2i hold sin(pos / 10000^(2i/d)), odd columns 2i+1 the cosine
    at the same frequency, so row 0 alternates 0 and 1.
    """
    if d_model % 2 != 0:
        raise OddDimensionError(f"d_model must be even, got {d_model}")
    if max_len < 1:
        raise ValueError(f"max_len must be >= 1, got {max_len}")
    positions = np.arange(max_len, dtype=np.float64)[:, None]
    freqs = SINUSOID_BASE ** (-np.arange(0, d_model, 2, dtype=np.float64) / d_model)
    angles = positions * freqs[None, :]
    table = np.empty((max_len, d_model), dtype=np.float64)
    table[:, 0::2] = np.sin(angles)
    table[:, 1::2] = np.cos(angles)
    return table


def default_alibi_slopes(num_heads: int) -> tuple[float, ...]:
    """Geometric slope ladder m_h = -2^(-8h/H), h = 1..H.

    The distance bias enters the score as ``slope * |i - j|``, so slopes are
    negative: attention decays with distance, fastest for the first head.
    """
    if num_heads < 1:
        raise ValueError(f"num_heads must be >= 1, got {num_heads}")
    return tuple(-(2.0 ** (-8.0 * h / num_heads)) for h in range(1, num_heads + 1))


def alibi_bias(seq_len: int, slopes: tuple[float, ...] | np.ndarray) -> np.ndarray:
    """Per-head bias matrices bias[h, i, j] = slopes[h] * |i - j|.

    Each entry is a single multiplication of exact integers by the slope, so
    results are bit-reproducible in double precision.
    """
    if seq_len < 1:
        raise ValueError(f"seq_len must be >= 1, got {seq_len}")
    slopes = np.asarray(slopes, dtype=np.float64)
    if slopes.size == 0:
        raise ValueError("slopes must be non-empty")
    idx = np.arange(seq_len, dtype=np.float64)
    distance = np.abs(idx[:, None] - idx[None, :])
    return slopes[:, None, None] * distance[None, :, :]


def rope_angles(seq_len: int, d: int, base: float = DEFAULT_ROPE_BASE) -> np.ndarray:
    """Rotation angles theta[pos, i] = pos / base^(2i/d), shape (seq_len, d/2)."""
    if d % 2 != 0:
        raise OddDimensionError(f"dimension must be even, got {d}")
    positions = np.arange(seq_len, dtype=np.float64)[:, None]
    freqs = base ** (-np.arange(0, d, 2, dtype=np.float64) / d)
    return positions * freqs[None, :]


def rope_tables(
    seq_len: int, d: int, base: float = DEFAULT_ROPE_BASE
) -> tuple[np.ndarray, np.ndarray]:
    """cos/sin tables of shape (seq_len, d/2) for batched rotation."""
    angles = rope_angles(seq_len, d, base)
    return np.cos(angles), np.sin(angles)


def rope_rotate(vec: np.ndarray, pos: float, base: float = DEFAULT_ROPE_BASE) -> np.ndarray:
    """Rotate each adjacent pair (x_2i, x_2i+1) of one vector by theta[pos, i].

    A pure rotation: the output has the same length and the same L2 norm as
    the input.
    """
    vec = np.asarray(vec, dtype=np.float64)
    d = vec.shape[-1]
    if d % 2 != 0:
        raise OddDimensionError(f"vector length must be even, got {d}")
    theta = pos * base ** (-np.arange(0, d, 2, dtype=np.float64) / d)
    cos, sin = np.cos(theta), np.sin(theta)
    out = np.empty_like(vec)
    x0, x1 = vec[..., 0::2], vec[..., 1::2]
    out[..., 0::2] = x0 * cos - x1 * sin
    out[..., 1::2] = x0 * sin + x1 * cos
    return out


@lru_cache(maxsize=64)
def cached_sinusoid_table(max_len: int, d_model: int) -> np.ndarray:
    table = sinusoid_table(max_len, d_model)
    table.flags.writeable = False
    return table


@lru_cache(maxsize=64)
def cached_alibi_bias(seq_len: int, slopes: tuple[float, ...]) -> np.ndarray:
    bias = alibi_bias(seq_len, slopes)
    bias.flags.writeable = False
    return bias


@lru_cache(maxsize=64)
def cached_rope_tables(seq_len: int, d: int, base: float) -> tuple[np.ndarray, np.ndarray]:
    cos, sin = rope_tables(seq_len, d, base)
    cos.flags.writeable = False
    sin.flags.writeable = False
    return cos, sin
