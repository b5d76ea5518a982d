"""Streaming-statistics primitives shared by all detectors.

Each function is pure and matches an independent brute-force reference
(see tests): exact for integer gap/spread statistics, to 1e-9 relative
for ratios.
"""

from __future__ import annotations

import math
from typing import Iterable, Mapping, Sequence


class InsufficientData(ValueError):
    """A statistic is undefined on this input.

    Detectors treat this as "insufficient data" and stay silent rather
    than emitting a finding.
    """


def max_gap(timestamps: Sequence[int]) -> int:
    """Largest consecutive difference in an ascending sequence.

    Returns 0 for fewer than two elements.
    """
    if len(timestamps) < 2:
        return 0
    best = 0
    prev = timestamps[0]
    for t in timestamps[1:]:
        d = t - prev
        if d > best:
            best = d
        prev = t
    return best


def arrival_spread(arrivals_by_member: Mapping) -> int:
    """max(ts) - min(ts) over each member's first arrival."""
    if not arrivals_by_member:
        raise InsufficientData("arrival_spread needs at least one member")
    vals = arrivals_by_member.values()
    return max(vals) - min(vals)


def jitter_cv(gaps: Sequence[float]) -> float:
    """Population standard deviation over mean of inter-arrival gaps.

    Scale-invariant: cv(k * gaps) == cv(gaps) for k > 0.
    """
    n = len(gaps)
    if n < 2:
        raise InsufficientData("jitter_cv needs at least two gaps")
    mean = sum(gaps) / n
    if mean <= 0:
        raise InsufficientData("jitter_cv undefined for zero mean")
    var = sum((g - mean) ** 2 for g in gaps) / n
    return math.sqrt(var) / mean


def utilization(bytes_in_window: int, window_len_ns: int, capacity_bytes_per_s: float) -> float:
    """Fraction of link capacity consumed over the window."""
    if window_len_ns <= 0:
        raise ValueError("window length must be positive")
    if capacity_bytes_per_s <= 0:
        raise ValueError("capacity must be positive")
    return (bytes_in_window * 1e9 / window_len_ns) / capacity_bytes_per_s


def group_skew(volume_by_group: Mapping) -> tuple[float, object]:
    """Heavy-side imbalance: (max volume / mean volume, heaviest group).

    Ties on the maximum are broken by the lowest group id.
    """
    if len(volume_by_group) < 2:
        raise InsufficientData("group_skew needs at least two groups")
    total = sum(volume_by_group.values())
    if total <= 0:
        raise InsufficientData("group_skew undefined for zero total volume")
    mean = total / len(volume_by_group)
    best_group = None
    best_vol = None
    for g in sorted(volume_by_group):
        v = volume_by_group[g]
        if best_vol is None or v > best_vol:
            best_vol = v
            best_group = g
    return best_vol / mean, best_group


def group_thinness(volume_by_group: Mapping) -> tuple[float, object]:
    """Thin-side imbalance: (mean volume / min volume, thinnest group).

    The heavy-side ratio saturates below 2 for small groups when one
    member merely shrinks, so under-contributing members are flagged
    with mean/min instead.  Ties broken by the lowest group id.
    """
    if len(volume_by_group) < 2:
        raise InsufficientData("group_thinness needs at least two groups")
    total = sum(volume_by_group.values())
    if total <= 0:
        raise InsufficientData("group_thinness undefined for zero total volume")
    mean = total / len(volume_by_group)
    thin_group = None
    thin_vol = None
    for g in sorted(volume_by_group):
        v = volume_by_group[g]
        if thin_vol is None or v < thin_vol:
            thin_vol = v
            thin_group = g
    if thin_vol <= 0:
        return math.inf, thin_group
    return mean / thin_vol, thin_group


def ewma_update(prev: float | None, sample: float, alpha: float) -> float:
    """One exponentially weighted moving average step.

    The first sample initializes the baseline directly.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must be in (0, 1]")
    if prev is None:
        return sample
    return alpha * sample + (1.0 - alpha) * prev


def median(values: Iterable[float]) -> float:
    """Median of a non-empty iterable."""
    vals = sorted(values)
    if not vals:
        raise InsufficientData("median of empty sequence")
    n = len(vals)
    mid = n // 2
    if n % 2:
        return vals[mid]
    return (vals[mid - 1] + vals[mid]) / 2


def ols_slope(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Ordinary least squares slope of ys against xs."""
    n = len(xs)
    if n < 2 or n != len(ys):
        raise InsufficientData("ols_slope needs two or more points")
    mx = sum(xs) / n
    my = sum(ys) / n
    sxx = sum((x - mx) ** 2 for x in xs)
    if sxx == 0:
        return 0.0
    sxy = sum((x - mx) * (y - my) for x, y in zip(xs, ys))
    return sxy / sxx


def coalesce(timestamps: Sequence[int], min_gap_ns: int) -> list[int]:
    """Collapse timestamps closer than min_gap_ns into single arrivals.

    Multi-packet bursts become one arrival so gap statistics reflect
    burst spacing rather than intra-burst micro-gaps.
    """
    out: list[int] = []
    for t in timestamps:
        if not out or t - out[-1] >= min_gap_ns:
            out.append(t)
    return out
