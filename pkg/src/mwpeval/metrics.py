"""Aggregate rates over joint outcomes.

Conventions, fixed here and relied on everywhere else:

* quadrant counts partition the triplets: n = sRsC + sRuC + uRsC + uRuC;
* r_rate = (sRsC + sRuC) / n, the reasoning success rate;
* c_rate = (sRsC + uRsC) / n, the correction success rate;
* e_r = sRsC / (sRsC + uRsC): of the triplets whose wrong solution got
  corrected, how many were also solved directly;
* e_c = sRsC / (sRsC + sRuC): of the triplets solved directly, how many
  also got corrected.

e_r and e_c are undefined when their denominator is 0 and are reported
as None, never 0 or NaN. With every quadrant populated, e_r > e_c holds
exactly when uRsC < sRuC.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Any, Callable, Iterable, Sequence, TypeVar

import numpy as np

from .errors import DataError
from .prompting import DopLevel, TaskKind
from .scoring import JointOutcome, Outcome, Quadrant

T = TypeVar("T")


@dataclass(frozen=True)
class QuadrantCounts:
    srsc: int
    sruc: int
    ursc: int
    uruc: int

    def __post_init__(self) -> None:
        for name in ("srsc", "sruc", "ursc", "uruc"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 0:
                raise DataError(f"quadrant count {name} must be a non-negative int, got {value!r}")

    @property
    def n(self) -> int:
        return self.srsc + self.sruc + self.ursc + self.uruc

    def to_dict(self) -> dict[str, int]:
        return {
            Quadrant.SRSC.value: self.srsc,
            Quadrant.SRUC.value: self.sruc,
            Quadrant.URSC.value: self.ursc,
            Quadrant.URUC.value: self.uruc,
        }


def quadrants(joints: Iterable[JointOutcome]) -> QuadrantCounts:
    """Count joint outcomes per quadrant. Duplicate triplet ids raise."""
    seen: set[str] = set()
    tally = {q: 0 for q in Quadrant}
    for joint in joints:
        if joint.triplet_id in seen:
            raise DataError(f"duplicate joint outcome for triplet {joint.triplet_id!r}")
        seen.add(joint.triplet_id)
        tally[joint.quadrant] += 1
    return QuadrantCounts(
        srsc=tally[Quadrant.SRSC],
        sruc=tally[Quadrant.SRUC],
        ursc=tally[Quadrant.URSC],
        uruc=tally[Quadrant.URUC],
    )


def rates(counts: QuadrantCounts) -> tuple[float, float]:
    """(r_rate, c_rate). Raises on an empty population."""
    if counts.n == 0:
        raise DataError("rates are undefined over zero triplets")
    return (
        (counts.srsc + counts.sruc) / counts.n,
        (counts.srsc + counts.ursc) / counts.n,
    )


def e_ratios(counts: QuadrantCounts) -> tuple[float | None, float | None]:
    """(e_r, e_c); None where the denominator is empty."""
    e_r = counts.srsc / (counts.srsc + counts.ursc) if counts.srsc + counts.ursc else None
    e_c = counts.srsc / (counts.srsc + counts.sruc) if counts.srsc + counts.sruc else None
    return e_r, e_c


def dop_pass_rates(outcomes: Iterable[Outcome]) -> dict[DopLevel, float]:
    """Correction success rate per mode over scored outcomes.

    All outcomes must come from one model; mixing models in one pool
    would average incomparable things."""
    models: set[str] = set()
    totals: dict[DopLevel, int] = {}
    hits: dict[DopLevel, int] = {}
    for outcome in outcomes:
        if outcome.task is not TaskKind.CORRECTION:
            continue
        models.add(outcome.model)
        if len(models) > 1:
            raise DataError(f"outcomes mix models: {sorted(models)}")
        assert outcome.dop is not None
        totals[outcome.dop] = totals.get(outcome.dop, 0) + 1
        hits[outcome.dop] = hits.get(outcome.dop, 0) + int(outcome.success)
    return {level: hits[level] / totals[level] for level in totals}


def success_rate(outcomes: Sequence[Outcome]) -> float:
    if not outcomes:
        raise DataError("success rate is undefined over zero outcomes")
    return sum(o.success for o in outcomes) / len(outcomes)


def bootstrap_ci(
    observations: Sequence[T],
    statistic: Callable[[Sequence[T]], float],
    resamples: int = 1000,
    level: float = 0.95,
    seed: int = 0,
) -> tuple[float, float]:
    """Percentile bootstrap interval for statistic over observations.

    Deterministic for a given seed; record the seed wherever the
    interval is reported.
    """
    if resamples < 100:
        raise DataError(f"resamples must be >= 100 for a usable interval, got {resamples}")
    if not 0 < level < 1:
        raise DataError(f"level must be in (0, 1), got {level}")
    if not observations:
        raise DataError("cannot bootstrap zero observations")
    rng = np.random.default_rng(seed)
    n = len(observations)
    stats = np.empty(resamples, dtype=float)
    for i in range(resamples):
        picks = rng.integers(0, n, size=n)
        stats[i] = statistic([observations[j] for j in picks])
    alpha = (1.0 - level) / 2.0
    low, high = np.quantile(stats, [alpha, 1.0 - alpha])
    return float(low), float(high)


UNDEFINED_MARK = "—"


def round_rate(value: float, places: int = 3) -> float:
    """Half-up presentation rounding, e.g. 0.8595 -> 0.86 at 2 places."""
    quantum = Decimal(1).scaleb(-places)
    return float(Decimal(repr(value)).quantize(quantum, rounding=ROUND_HALF_UP))


def format_rate(value: float | None, places: int = 3) -> str:
    """Fixed-width decimal string; an em dash for undefined values."""
    if value is None:
        return UNDEFINED_MARK
    quantum = Decimal(1).scaleb(-places)
    return str(Decimal(repr(value)).quantize(quantum, rounding=ROUND_HALF_UP))
