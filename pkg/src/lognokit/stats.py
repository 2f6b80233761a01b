"""Cohort summaries and the Mann-Whitney rank test."""

from __future__ import annotations

import math
import statistics
import sys
from dataclasses import asdict, dataclass
from enum import Enum
from itertools import combinations
from typing import Iterable, Sequence

from .errors import EmptySample, TooFewReports

EXACT_MAX_N = 12


@dataclass(frozen=True)
class CohortStats:
    n_samples: int
    duration_mean: float
    duration_std: float
    n_logn_mean: float
    n_logn_std: float
    snr_mean: float
    snr_std: float

    def to_dict(self) -> dict:
        return asdict(self)


def cohort_stats(reports: Iterable) -> CohortStats:
    """Sample mean and standard deviation (n - 1 denominator) of duration,
    component count and SNR over per-movement results.

    Anything with ``duration_s``, ``n_components`` and ``snr_db`` attributes
    will do.
    """
    reports = list(reports)
    if len(reports) < 2:
        raise TooFewReports(f"need at least 2 reports, got {len(reports)}")
    d = [float(r.duration_s) for r in reports]
    k = [float(r.n_components) for r in reports]
    s = [float(r.snr_db) for r in reports]
    return CohortStats(
        n_samples=len(reports),
        duration_mean=statistics.fmean(d), duration_std=statistics.stdev(d),
        n_logn_mean=statistics.fmean(k), n_logn_std=statistics.stdev(k),
        snr_mean=statistics.fmean(s), snr_std=statistics.stdev(s),
    )


class RankMethod(str, Enum):
    EXACT = "Exact"
    NORMAL_APPROX = "NormalApprox"


@dataclass(frozen=True)
class RankTestResult:
    u_statistic: float
    p_two_sided: float
    method: RankMethod

    def to_dict(self) -> dict:
        return {"u_statistic": self.u_statistic, "p_two_sided": self.p_two_sided,
                "method": self.method.value}


def midranks(values: Sequence[float]) -> tuple[list[float], list[int]]:
    """1-based ranks with ties sharing their average rank, plus tie-group sizes."""
    order = sorted(range(len(values)), key=lambda i: values[i])
    ranks = [0.0] * len(values)
    groups = []
    i = 0
    while i < len(order):
        j = i
        while j + 1 < len(order) and values[order[j + 1]] == values[order[i]]:
            j += 1
        r = 0.5 * (i + j) + 1.0
        for m in range(i, j + 1):
            ranks[order[m]] = r
        groups.append(j - i + 1)
        i = j + 1
    return ranks, groups


def exact_u_distribution(n_a: int, n_b: int) -> dict[float, int]:
    """Counts of U_a over every assignment of ranks 1..n to sample a."""
    offset = n_a * (n_a + 1) / 2
    counts: dict[float, int] = {}
    for combo in combinations(range(1, n_a + n_b + 1), n_a):
        u = sum(combo) - offset
        counts[u] = counts.get(u, 0) + 1
    return counts


def _clamp_p(p: float) -> float:
    return min(1.0, max(p, sys.float_info.min))


def mann_whitney_u(a: Sequence[float], b: Sequence[float]) -> RankTestResult:
    """Two-sided Mann-Whitney U test; ``u_statistic`` is U for sample ``a``.

    Small tie-free problems (``len(a) + len(b) <= 12``) get the exact null
    distribution by enumeration. Otherwise the normal approximation with tie
    and continuity corrections is used.
    """
    a = [float(x) for x in a]
    b = [float(x) for x in b]
    if not a or not b:
        raise EmptySample("both samples need at least one value")
    if any(math.isnan(x) for x in a + b):
        raise ValueError("samples contain NaN")
    n_a, n_b = len(a), len(b)
    n = n_a + n_b
    ranks, groups = midranks(a + b)
    u = math.fsum(ranks[:n_a]) - n_a * (n_a + 1) / 2
    ties = any(g > 1 for g in groups)

    if n <= EXACT_MAX_N and not ties:
        dist = exact_u_distribution(n_a, n_b)
        total = sum(dist.values())
        lower = sum(c for v, c in dist.items() if v <= u) / total
        upper = sum(c for v, c in dist.items() if v >= u) / total
        return RankTestResult(u, _clamp_p(2.0 * min(lower, upper)), RankMethod.EXACT)

    mean = n_a * n_b / 2.0
    tie_term = sum(g ** 3 - g for g in groups) / (n * (n - 1)) if n > 1 else 0.0
    var = n_a * n_b / 12.0 * ((n + 1) - tie_term)
    if var <= 0:
        return RankTestResult(u, 1.0, RankMethod.NORMAL_APPROX)
    z = max(abs(u - mean) - 0.5, 0.0) / math.sqrt(var)
    return RankTestResult(u, _clamp_p(math.erfc(z / math.sqrt(2.0))), RankMethod.NORMAL_APPROX)
