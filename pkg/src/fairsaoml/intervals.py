"""The three interval families (DI, AGC, DGC) and their target-set queries.

DI keeps every suffix interval alive; AGC/DGC are geometric covers with a
configurable base. All queries are pure and stateless.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional

from .errors import ConfigurationError

DI = "di"
AGC = "agc"
DGC = "dgc"


@dataclass(frozen=True, order=True)
class Interval:
    start: int
    end: int  # inclusive

    def __post_init__(self):
        if not (1 <= self.start <= self.end):
            raise ConfigurationError(f"bad interval [{self.start}, {self.end}]")

    @property
    def length(self) -> int:
        return self.end - self.start + 1

    def contains(self, t: int) -> bool:
        return self.start <= t <= self.end


@dataclass(frozen=True)
class IntervalScheme:
    kind: str
    horizon: Optional[int] = None  # required iff kind == AGC
    base: int = 2

    def __post_init__(self):
        if self.kind not in (DI, AGC, DGC):
            raise ConfigurationError(f"unknown interval scheme {self.kind!r}")
        if self.base < 2:
            raise ConfigurationError("base must be >= 2")
        if self.kind == AGC and (self.horizon is None or self.horizon < 1):
            raise ConfigurationError("AGC requires the horizon in advance")
        if self.kind in (DI, DGC) and self.horizon is not None:
            raise ConfigurationError(f"{self.kind} must not fix a horizon")


@dataclass(frozen=True)
class TargetSet:
    round: int
    intervals: tuple  # unique Interval, all starting at `round` (DI: all ending at it)
    # (nominal_length, interval) per family member; AGC truncation can give an
    # interval a shorter actual length than its subset's nominal one
    members: tuple = ()


def ilog(base: int, n: int) -> int:
    """floor(log_base(n)) by exact integer arithmetic."""
    if n < 1:
        raise ConfigurationError("ilog needs n >= 1")
    k, p = 0, base
    while p <= n:
        k += 1
        p *= base
    return k


def target_set(scheme: IntervalScheme, t: int) -> TargetSet:
    """Intervals whose expert restarts at round t."""
    if t < 1:
        raise ConfigurationError("t must be >= 1")
    b = scheme.base
    members = []
    if scheme.kind == DI:
        members = [(t - i + 1, Interval(i, t)) for i in range(1, t + 1)]
    elif scheme.kind == AGC:
        T = scheme.horizon
        if t > T:
            raise ConfigurationError(f"t={t} beyond the fixed horizon T={T}")
        for k in range(ilog(b, T)):
            if (t - 1) % b ** k == 0:
                members.append((b ** k, Interval(t, min(T, t + b ** k - 1))))
    else:  # DGC
        k = 0
        while b ** k <= t:
            if t % b ** k == 0:
                members.append((b ** k, Interval(t, t + b ** k - 1)))
            k += 1
    unique = tuple(sorted(set(iv for _, iv in members)))
    return TargetSet(round=t, intervals=unique, members=tuple(members))


def enumerate_full_set(scheme: IntervalScheme, up_to: int) -> List[Interval]:
    """All intervals of the family that intersect [1, up_to].

    For DI the family is horizon-dependent; it is enumerated with the
    horizon taken as up_to.
    """
    if up_to < 1:
        raise ConfigurationError("up_to must be >= 1")
    b = scheme.base
    out: List[Interval] = []
    if scheme.kind == DI:
        for k in range(1, up_to + 1):
            for q in range(k, up_to + 1):
                out.append(Interval(k, q))
    elif scheme.kind == AGC:
        T = scheme.horizon
        for k in range(ilog(b, T)):
            i = 1
            while (i - 1) * b ** k + 1 <= min(T, up_to):
                out.append(Interval((i - 1) * b ** k + 1, min(T, i * b ** k)))
                i += 1
    else:  # DGC
        k = 0
        while b ** k <= up_to:
            i = 1
            while i * b ** k <= up_to:
                out.append(Interval(i * b ** k, (i + 1) * b ** k - 1))
                i += 1
            k += 1
    return out


def brute_force_target_set(scheme: IntervalScheme, t: int, up_to: int) -> TargetSet:
    """Oracle: filter the enumerated family by the membership predicate.

    AGC/DGC select intervals containing t but not t-1; DI selects the
    intervals ending at t.
    """
    if t > up_to:
        raise ConfigurationError("t must be <= up_to")
    full = enumerate_full_set(scheme, up_to)
    if scheme.kind == DI:
        picked = [iv for iv in full if iv.end == t]
    else:
        picked = [iv for iv in full if iv.contains(t) and not iv.contains(t - 1)]
    return TargetSet(round=t, intervals=tuple(sorted(set(picked))))


def expected_census(scheme: IntervalScheme, t: int) -> dict:
    """Total and maximum-active expert counts at round t."""
    if t < 1:
        raise ConfigurationError("t must be >= 1")
    if scheme.kind == DI:
        total = t
    elif scheme.kind == AGC:
        total = ilog(scheme.base, scheme.horizon)
    else:
        total = ilog(scheme.base, t) + 1
    return {"total": total, "active_max": total}
