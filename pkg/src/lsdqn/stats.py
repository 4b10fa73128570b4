"""Learning-curve statistics: signed-rank comparison and score reporting."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import MisalignedCurves, TooFewPairs


@dataclass
class LearningCurve:
    """Per-epoch evaluation records of one run.

    steps are strictly increasing; returns[i] holds the per-episode returns
    behind mean_returns[i]. meta carries run identity (variant, seed, lambda)
    for reporting.
    """

    steps: list[int]
    mean_returns: list[float]
    returns: list[tuple[float, ...]]
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not (len(self.steps) == len(self.mean_returns) == len(self.returns)):
            raise MisalignedCurves("curve fields have unequal lengths")
        if any(b <= a for a, b in zip(self.steps, self.steps[1:])):
            raise MisalignedCurves("curve steps must be strictly increasing")

    def std_returns(self) -> list[float]:
        return [float(np.std(r)) for r in self.returns]


@dataclass
class WilcoxonResult:
    statistic: float  # min(W+, W-)
    w_plus: float
    w_minus: float
    n_effective: int
    p_value: float
    method: str  # "exact" | "normal"


def _average_ranks(values: np.ndarray) -> np.ndarray:
    """Ranks starting at 1; tied values share the average of their ranks."""
    order = np.argsort(values, kind="stable")
    ranks = np.empty(len(values))
    i = 0
    while i < len(values):
        j = i
        while j + 1 < len(values) and values[order[j + 1]] == values[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def _exact_p(ranks: np.ndarray, w_min: float) -> float:
    """Two-sided p by full enumeration of sign assignments.

    The distribution of W+ over all 2^n sign patterns is built by dynamic
    programming over doubled ranks (integers even with midrank ties); this
    equals brute-force enumeration exactly. p = 2 * P(W+ <= min(W+, W-)),
    using the symmetry of the null distribution, capped at 1.
    """
    doubled = np.rint(2.0 * ranks).astype(np.int64)
    total = int(doubled.sum())
    counts = np.zeros(total + 1, dtype=np.int64)
    counts[0] = 1
    for r in doubled:
        shifted = np.zeros_like(counts)
        shifted[r:] = counts[: total + 1 - r]
        counts = counts + shifted
    threshold = int(math.floor(2.0 * w_min + 1e-9))
    below = int(counts[: threshold + 1].sum())
    return min(1.0, 2.0 * below / float(2 ** len(ranks)))


def _normal_p(ranks: np.ndarray, w_min: float, n: int) -> float:
    """Normal approximation with tie-corrected variance and continuity
    correction."""
    mu = n * (n + 1) / 4.0
    var = n * (n + 1) * (2 * n + 1) / 24.0
    _, tie_counts = np.unique(ranks, return_counts=True)
    var -= float(((tie_counts**3 - tie_counts) / 48.0).sum())
    if var <= 0:
        return 1.0
    z = (w_min - mu + 0.5) / math.sqrt(var)
    return min(1.0, 2.0 * 0.5 * math.erfc(-z / math.sqrt(2.0)))


def wilcoxon_signed_rank(x, y, method: str = "auto") -> WilcoxonResult:
    """Two-sided Wilcoxon signed-rank test on paired samples.

    Zero differences are dropped; at least 5 nonzero pairs are required.
    |differences| are ranked with average-rank tie handling. The p-value is
    exact (full enumeration of the 2^n sign assignments) for n <= 25 and a
    tie-corrected, continuity-corrected normal approximation above, unless
    `method` forces one of "exact"/"normal".
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError(f"x and y must be equal-length vectors, got {x.shape}, {y.shape}")
    if method not in ("auto", "exact", "normal"):
        raise ValueError(f"unknown method {method!r}")
    diffs = x - y
    diffs = diffs[diffs != 0.0]
    n = len(diffs)
    if n < 5:
        raise TooFewPairs(f"need >= 5 nonzero paired differences, got {n}")
    ranks = _average_ranks(np.abs(diffs))
    w_plus = float(ranks[diffs > 0].sum())
    w_minus = float(ranks[diffs < 0].sum())
    w_min = min(w_plus, w_minus)
    use_exact = method == "exact" or (method == "auto" and n <= 25)
    if use_exact:
        p = _exact_p(ranks, w_min)
        used = "exact"
    else:
        p = _normal_p(ranks, w_min, n)
        used = "normal"
    return WilcoxonResult(
        statistic=w_min,
        w_plus=w_plus,
        w_minus=w_minus,
        n_effective=n,
        p_value=p,
        method=used,
    )


def max_average_score(curve: LearningCurve) -> float:
    """Highest per-epoch mean return along the curve."""
    if not curve.mean_returns:
        raise MisalignedCurves("empty curve")
    return float(max(curve.mean_returns))


def score_delta(curve: LearningCurve, baseline: LearningCurve) -> list[float]:
    """Elementwise mean-return differences at aligned steps."""
    if curve.steps != baseline.steps:
        raise MisalignedCurves(
            f"steps differ: {curve.steps[:3]}... vs {baseline.steps[:3]}..."
        )
    return [a - b for a, b in zip(curve.mean_returns, baseline.mean_returns)]


def relative_weight_distance(w: np.ndarray, w_base: np.ndarray) -> float:
    """||w - w_base||_2 / ||w_base||_2."""
    w = np.asarray(w, dtype=np.float64).ravel()
    w_base = np.asarray(w_base, dtype=np.float64).ravel()
    if w.shape != w_base.shape:
        raise ValueError(f"length mismatch: {w.shape} vs {w_base.shape}")
    base = float(np.linalg.norm(w_base))
    if base == 0.0:
        raise ValueError("base weights have zero norm")
    return float(np.linalg.norm(w - w_base)) / base


def compare_runs(curves: list[LearningCurve], baseline_index: int = 0) -> list[dict]:
    """Per-variant max score plus Wilcoxon p against the baseline curve.

    The row for the baseline itself, and any comparison with too few
    nonzero differences, carries the sentinel "TooFewPairs" in place of a
    p-value.
    """
    baseline = curves[baseline_index]
    rows = []
    for i, curve in enumerate(curves):
        row = {
            "variant": str(curve.meta.get("variant", f"run{i}")),
            "max_score": max_average_score(curve),
            "p_vs_baseline": "TooFewPairs",
            "statistic": "",
            "n_effective": 0,
        }
        if i != baseline_index:
            if curve.steps != baseline.steps:
                raise MisalignedCurves("curves must share evaluation steps")
            try:
                res = wilcoxon_signed_rank(curve.mean_returns, baseline.mean_returns)
                row.update(
                    p_vs_baseline=res.p_value,
                    statistic=res.statistic,
                    n_effective=res.n_effective,
                )
            except TooFewPairs:
                pass
        rows.append(row)
    return rows
