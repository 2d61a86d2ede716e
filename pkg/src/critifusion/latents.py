"""Core latent tensor type, seeded Gaussian sampling, and serialization.

Latents are C x H x W float32 arrays.  Randomness uses the Philox
counter-based generator keyed by the caller's 64-bit seed; Gaussian draws
go through the inverse normal CDF applied to 53-bit uniforms so that the
stream can be reproduced bit-exactly in any language with the same
primitives.
"""

from __future__ import annotations

import hashlib
import io
import struct
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtri

MAGIC = b"CRTFLAT1"
MIN_DIM = 2
MAX_DIM = 4096


class LatentError(ValueError):
    """Base class for latent construction/parsing failures."""


class DimensionBoundsError(LatentError):
    """Requested dimensions fall outside the supported range."""


class BadMagicError(LatentError):
    """Serialized stream does not start with the CRTFLAT1 magic."""


class TruncatedStreamError(LatentError):
    """Serialized stream ended before the declared payload was read."""


class DimensionOverflowError(LatentError):
    """Serialized header declares dimensions outside the supported range."""


def _check_dims(channels: int, height: int, width: int) -> None:
    if channels < 1:
        raise DimensionBoundsError(f"channels must be >= 1, got {channels}")
    for name, value in (("height", height), ("width", width)):
        if not (MIN_DIM <= value <= MAX_DIM):
            raise DimensionBoundsError(
                f"{name} must be in [{MIN_DIM}, {MAX_DIM}], got {value}"
            )


@dataclass(frozen=True)
class LatentField:
    """Real-valued C x H x W latent tensor.

    ``values`` has shape (channels, height, width) and is frozen after
    construction.  In-memory arithmetic is 64-bit; the serialized format
    stores 32-bit floats, so fields built from float32-representable
    values round-trip bit-exactly.
    """

    channels: int
    height: int
    width: int
    values: np.ndarray

    def __post_init__(self):
        _check_dims(self.channels, self.height, self.width)
        arr = np.asarray(self.values, dtype=np.float64)
        if arr.shape != (self.channels, self.height, self.width):
            raise LatentError(
                f"values shape {arr.shape} does not match "
                f"({self.channels}, {self.height}, {self.width})"
            )
        if not np.all(np.isfinite(arr)):
            raise LatentError("latent values must be finite")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def shape(self) -> tuple[int, int, int]:
        return (self.channels, self.height, self.width)

    def with_values(self, values: np.ndarray) -> "LatentField":
        return LatentField(self.channels, self.height, self.width, values)


@dataclass(frozen=True)
class ChannelStats:
    """Per-channel min/max/mean/population-variance of a LatentField."""

    minimum: tuple[float, ...]
    maximum: tuple[float, ...]
    mean: tuple[float, ...]
    variance: tuple[float, ...]


@dataclass(frozen=True)
class VaeScale:
    """Latent scale factor applied on encode (multiply) / decode (divide)."""

    gamma: float

    def __post_init__(self):
        if not (self.gamma > 0):
            raise LatentError(f"gamma must be positive, got {self.gamma}")


def _gaussian_stream(seed: int, count: int, stream: int = 0) -> np.ndarray:
    """Deterministic standard-normal draws.

    Philox4x64 keyed by (seed, stream); each 64-bit word is reduced to a
    53-bit integer k and mapped to the open-interval uniform
    u = (k + 0.5) * 2**-53, then through the inverse normal CDF.
    """
    gen = np.random.Generator(np.random.Philox(key=[seed & (2**64 - 1), stream]))
    words = gen.integers(0, 2**64, size=count, dtype=np.uint64)
    u = ((words >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return ndtri(u)


def sample_gaussian_latent(
    channels: int, height: int, width: int, seed: int
) -> LatentField:
    """Draw a seeded N(0, I) latent; identical (dims, seed) give identical bits."""
    _check_dims(channels, height, width)
    n = channels * height * width
    draws = _gaussian_stream(seed, n).astype(np.float32)
    return LatentField(channels, height, width, draws.reshape(channels, height, width))


def apply_vae_scale(field: LatentField, scale: VaeScale, direction: str) -> LatentField:
    """Encode multiplies values by gamma, decode divides."""
    if direction == "encode":
        out = field.values * scale.gamma
    elif direction == "decode":
        out = field.values / scale.gamma
    else:
        raise LatentError(f"direction must be 'encode' or 'decode', got {direction!r}")
    return field.with_values(out)


def latent_stats(field: LatentField) -> ChannelStats:
    """Exact per-channel min/max/mean/population-variance (64-bit accumulation)."""
    v = field.values.astype(np.float64).reshape(field.channels, -1)
    mean = v.mean(axis=1)
    var = np.mean((v - mean[:, None]) ** 2, axis=1)
    return ChannelStats(
        minimum=tuple(v.min(axis=1)),
        maximum=tuple(v.max(axis=1)),
        mean=tuple(mean),
        variance=tuple(var),
    )


def write_latent(field: LatentField, sink) -> None:
    """Serialize: magic, three u32le dims, then float32le values (C outermost).

    ``sink`` is a binary file object or a path.
    """
    if not hasattr(sink, "write"):
        with open(sink, "wb") as fh:
            write_latent(field, fh)
        return
    sink.write(MAGIC)
    sink.write(struct.pack("<III", field.channels, field.height, field.width))
    sink.write(field.values.astype("<f4").tobytes())


def read_latent(source) -> LatentField:
    """Parse a CRTFLAT1 stream from a binary file object or a path."""
    if not hasattr(source, "read"):
        with open(source, "rb") as fh:
            return read_latent(fh)
    magic = source.read(len(MAGIC))
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    header = source.read(12)
    if len(header) != 12:
        raise TruncatedStreamError("truncated header")
    channels, height, width = struct.unpack("<III", header)
    if channels < 1 or channels > 2**16:
        raise DimensionOverflowError(f"channel count {channels} out of range")
    if not (MIN_DIM <= height <= MAX_DIM and MIN_DIM <= width <= MAX_DIM):
        raise DimensionOverflowError(f"dimensions {height}x{width} out of range")
    n = channels * height * width
    payload = source.read(4 * n)
    if len(payload) != 4 * n:
        raise TruncatedStreamError(
            f"expected {4 * n} payload bytes, got {len(payload)}"
        )
    values = np.frombuffer(payload, dtype="<f4").reshape(channels, height, width)
    return LatentField(channels, height, width, values)


def latent_bytes(field: LatentField) -> bytes:
    buf = io.BytesIO()
    write_latent(field, buf)
    return buf.getvalue()


def latent_digest(field: LatentField) -> str:
    """SHA-256 of the serialized bytes; stable content identity for records."""
    return hashlib.sha256(latent_bytes(field)).hexdigest()
