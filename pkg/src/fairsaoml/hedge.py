"""Confidence-potential expert weighting.

The potential maps an expert's signed regret-like statistic R and its
absolute-increment total C to a raw weight; normalized weights over the
whole pool drive the meta combination.
"""
from __future__ import annotations

import math
from typing import Dict, Tuple

from .errors import ConfigurationError, NumericalFailureError

ZERO_TOTAL_THRESHOLD = 1e-12


def phi(r: float, c: float) -> float:
    """exp([r]_+^2 / 3c), with the convention phi = 1 whenever [r]_+ = 0."""
    rp = max(r, 0.0)
    if rp == 0.0:
        return 1.0
    if c <= 0.0:
        # unreachable while |R| <= C holds
        raise ConfigurationError("phi undefined for positive r with c <= 0")
    return math.exp(rp * rp / (3.0 * c))


def raw_weight(r: float, c: float) -> float:
    return 0.5 * (phi(r + 1.0, c + 1.0) - phi(r - 1.0, c - 1.0))


def normalize(stats: Dict[object, Tuple[float, float]]) -> Dict[object, float]:
    """Normalized weights over all experts; uniform fallback at zero total."""
    if not stats:
        raise ConfigurationError("cannot normalize an empty pool")
    raw = {key: raw_weight(r, c) for key, (r, c) in stats.items()}
    total = sum(raw.values())
    if total < ZERO_TOTAL_THRESHOLD:
        u = 1.0 / len(raw)
        return {key: u for key in raw}
    return {key: w / total for key, w in raw.items()}


def update_rc(r: float, c: float, meta_value: float, expert_value: float) -> Tuple[float, float]:
    """Accumulate the meta-minus-expert objective gap into (R, C)."""
    if not (math.isfinite(meta_value) and math.isfinite(expert_value)):
        raise NumericalFailureError("non-finite objective value in R/C update")
    delta = meta_value - expert_value
    return r + delta, c + abs(delta)
