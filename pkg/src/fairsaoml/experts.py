"""Expert universe: activation subroutines, replacement, and activity bookkeeping.

The pool is keyed by interval length — activation replaces at most one
predecessor per length, which keeps the census at the closed-form counts
for every scheme.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Tuple

from .errors import InternalConsistencyError
from .intervals import AGC, DGC, DI, Interval, IntervalScheme, TargetSet
from .model_core import ParamPair, TaskBatch


@dataclass(frozen=True)
class GradientBoundConsts:
    s_radius: float
    g_bound: float

    @classmethod
    def default(cls, epsilon: float, dim: int) -> "GradientBoundConsts":
        s = math.sqrt(1.0 + 2.0 * epsilon) - 1.0
        return cls(s_radius=s, g_bound=math.sqrt(dim) + s)


def stepsize(interval: Interval, bounds: GradientBoundConsts) -> float:
    return bounds.s_radius / (bounds.g_bound * math.sqrt(interval.length))


def update_g_bound(bounds: GradientBoundConsts, batch: TaskBatch) -> GradientBoundConsts:
    """Running max over the dimension term and observed feature norms."""
    max_norm = float(max((batch.features ** 2).sum(axis=1)) ** 0.5)
    floor = math.sqrt(batch.dim) + bounds.s_radius
    return GradientBoundConsts(bounds.s_radius,
                               max(bounds.g_bound, floor, max_norm))


@dataclass
class ExpertState:
    interval: Interval
    params: ParamPair
    eta: float
    r_stat: float = 0.0
    c_stat: float = 0.0
    last_active: int = 0
    active: bool = False


@dataclass
class ExpertPool:
    scheme: IntervalScheme
    bounds: GradientBoundConsts
    experts: Dict[int, ExpertState] = field(default_factory=dict)  # keyed by length
    containment_activity: bool = False  # strict interval-containment variant

    def activate(self, t: int, target: TargetSet, meta: ParamPair) -> List[Tuple[Interval, bool]]:
        """Run the scheme's activation subroutine for every target interval.

        Returns (interval, inherited_rc) per activated expert.
        """
        if target.round != t:
            raise InternalConsistencyError("target set round does not match t")
        snapshot = dict(self.experts)
        report = []
        for length, iv in sorted(target.members, reverse=True):
            if self.scheme.kind == DI:
                pred = snapshot.get(length - 1)
            else:
                pred = snapshot.get(length)
                if self.scheme.kind == AGC and pred is None and snapshot:
                    raise InternalConsistencyError(
                        f"AGC expected a length-{length} predecessor at t={t}")
            r, c = (pred.r_stat, pred.c_stat) if pred is not None else (0.0, 0.0)
            self.experts[length] = ExpertState(
                interval=iv,
                params=meta.copy(),
                eta=self.bounds.s_radius / (self.bounds.g_bound * math.sqrt(length)),
                r_stat=r,
                c_stat=c,
                last_active=t,
                active=True,
            )
            report.append((iv, pred is not None))
        restarted = {length for length, _ in target.members}
        for length, exp in self.experts.items():
            if length in restarted:
                continue
            exp.active = (self.containment_activity and exp.interval.contains(t))
        return report

    def partition(self, t: int) -> Tuple[List[ExpertState], List[ExpertState]]:
        active = [e for e in self.experts.values() if e.active]
        sleeping = [e for e in self.experts.values() if not e.active]
        return active, sleeping

    def rc_stats(self) -> Dict[int, Tuple[float, float]]:
        return {length: (e.r_stat, e.c_stat) for length, e in self.experts.items()}
