"""Confidence-adaptive scheduling: alignment score -> corrective parameters.

The map is affine in (1 - s): low confidence raises the img2img strength,
guidance, step count, and low-band preservation together; scores above the
skip threshold disable the corrective pass entirely.
"""

from __future__ import annotations

import math
from dataclasses import dataclass


class AlignmentInputError(ValueError):
    pass


@dataclass(frozen=True)
class CadrConfig:
    """Endpoint A (values at s = 1) and the spans added as s falls to 0."""

    lam_min: float = 0.12
    g_min: float = 3.6
    t_min: int = 16
    rho_min: float = 0.60
    lam_span: float = 0.18
    g_span: float = 1.4
    t_span: int = 14
    rho_span: float = 0.25
    skip_threshold: float = 0.9

    def __post_init__(self):
        for name in ("lam_span", "g_span", "t_span", "rho_span"):
            if getattr(self, name) < 0:
                raise AlignmentInputError(f"{name} must be >= 0")
        if not (0.0 < self.skip_threshold <= 1.0):
            raise AlignmentInputError("skip threshold must be in (0, 1]")


@dataclass(frozen=True)
class CadrParams:
    """Corrective-pass hyperparameters: strength, guidance, steps, mask ratio."""

    lam: float
    g: float
    T_prime: int
    rho: float


def cadr_from_alignment(s: float, config: CadrConfig = CadrConfig()) -> CadrParams:
    """Affine interpolation of the corrective hyperparameters from score s.

    s is clamped to [0, 1] first.  Above the skip threshold the step count
    is 0 and the remaining fields report their s = 1 endpoints so records
    stay schema-complete.  The step count rounds half-up.
    """
    if not math.isfinite(s):
        raise AlignmentInputError(f"alignment score must be finite, got {s}")
    s = min(max(s, 0.0), 1.0)
    if s > config.skip_threshold:
        return CadrParams(
            lam=config.lam_min,
            g=config.g_min,
            T_prime=0,
            rho=config.rho_min,
        )
    u = 1.0 - s
    lam = min(config.lam_min + u * config.lam_span, config.lam_min + config.lam_span)
    g = min(config.g_min + u * config.g_span, config.g_min + config.g_span)
    rho = min(config.rho_min + u * config.rho_span, config.rho_min + config.rho_span)
    t_prime = int(math.floor(config.t_min + u * config.t_span + 0.5))
    t_prime = min(max(t_prime, config.t_min), config.t_min + config.t_span)
    return CadrParams(lam=lam, g=g, T_prime=t_prime, rho=rho)
