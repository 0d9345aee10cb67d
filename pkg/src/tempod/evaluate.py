"""Ranking metrics, FDR/FPR curves, and empirical verification of the
detection-rate bounds.

AUROC is the probability that a uniformly random positive item outscores a
uniformly random negative one, ties counted half, which equals the
trapezoidal area under the ROC curve.  Both the rank-based value and the
curve are computed and must agree; tests cross-check them against
brute-force pair counting.

The three bound checks mirror the detection theory: commission FDR at
threshold ``theta_c <= 0`` is bounded by ``-theta_c / (lam1 - theta_c)``
when the inserted process has rate ``lam1``; omission FPR over true
inter-event intervals at ``theta_o >= 0`` equals ``exp(-theta_o)`` (the
p-value is uniform under the model, so this is an equality, not just a
bound); omission FDR on Poisson data with removal probability ``p1`` is
bounded by ``exp(-p1 * theta_o)``.  :func:`verify_bounds` replays the
simulate/inject/score pipeline with the ground-truth model over seeded
repetitions and reports empirical means, stds, and bound violations using
a 2-std, min-30-flagged convention.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import stats

from .detect import (
    AT_EVENT,
    KIND_COMMISSION,
    KIND_OMISSION,
    RandomScorer,
    ScoredItem,
    run_detection,
)
from .events import Dataset, split_train_test
from .inject import ConstantSchedule, empirical_rate, inject_commission, inject_omission
from .models.groundtruth import GroundTruthGamma, GroundTruthPoisson
from .seeding import derive_seed
from .simulate import (
    DEFAULT_CTMC,
    DEFAULT_GAMMA,
    DEFAULT_POISSON,
    simulate_dataset,
)

__all__ = [
    "RocResult",
    "ThresholdCurves",
    "BoundCurve",
    "BoundReport",
    "auroc",
    "fdr_fpr_curves",
    "theorem1_bound",
    "theorem2_bound",
    "theorem3_bound",
    "verify_bounds",
    "outlier_ratio",
]


@dataclass(frozen=True, eq=False)
class RocResult:
    """AUROC with the underlying ROC polyline and class counts."""

    auroc: float
    fpr: np.ndarray
    tpr: np.ndarray
    n_pos: int
    n_neg: int


def _split_items(items: list[ScoredItem]) -> tuple[np.ndarray, np.ndarray]:
    if not items:
        raise ValueError("no items")
    kinds = {it.kind for it in items}
    if len(kinds) > 1:
        raise ValueError(f"items mix kinds {sorted(kinds)}; score one kind at a time")
    scores = np.asarray([it.score for it in items], dtype=np.float64)
    truths = np.asarray([it.truth for it in items], dtype=np.int64)
    return scores, truths


def auroc(items: list[ScoredItem]) -> RocResult:
    """Rank-based AUROC (ties half) plus the trapezoid-equivalent curve."""
    scores, truths = _split_items(items)
    n_pos = int(truths.sum())
    n_neg = int(truths.size - n_pos)
    if n_pos == 0 or n_neg == 0:
        raise ValueError(f"need both classes, got {n_pos} positive / {n_neg} negative")
    ranks = stats.rankdata(scores, method="average")
    u = float(ranks[truths == 1].sum()) - n_pos * (n_pos + 1) / 2.0
    value = u / (n_pos * n_neg)

    # ROC polyline: walk distinct scores descending, one vertex per plateau
    order = np.argsort(-scores, kind="mergesort")
    sorted_truth = truths[order]
    sorted_scores = scores[order]
    boundaries = np.nonzero(np.diff(sorted_scores))[0]
    cut = np.concatenate((boundaries + 1, [scores.size]))
    tp = np.concatenate(([0], np.cumsum(sorted_truth)[cut - 1]))
    fp = np.concatenate(([0], cut - np.cumsum(sorted_truth)[cut - 1]))
    fpr = fp / n_neg
    tpr = tp / n_pos
    fpr.flags.writeable = False
    tpr.flags.writeable = False
    return RocResult(value, fpr, tpr, n_pos, n_neg)


def outlier_ratio(items: list[ScoredItem]) -> float:
    """Fraction of items whose ground truth is positive."""
    if not items:
        raise ValueError("no items")
    return float(np.mean([it.truth for it in items]))


@dataclass(frozen=True, eq=False)
class ThresholdCurves:
    """Per-threshold confusion summaries for one detection run.

    ``fdr`` is NaN where nothing is flagged (score > threshold never holds).
    """

    thresholds: np.ndarray
    fdr: np.ndarray
    fpr: np.ndarray
    flagged: np.ndarray


def fdr_fpr_curves(
    items: list[ScoredItem],
    kind: str,
    thresholds,
    restrict: str = "all",
) -> ThresholdCurves:
    """Empirical FDR and FPR at each threshold (flag when score > theta).

    ``restrict="inter-event-only"`` keeps only omission items whose
    endpoints are both observed target events, the precondition of the
    omission FPR statement; such items must carry boundary metadata (they
    do when produced by :func:`~tempod.detect.run_detection`).
    """
    if kind not in (KIND_COMMISSION, KIND_OMISSION):
        raise ValueError(f"unknown kind {kind!r}")
    use = [it for it in items if it.kind == kind]
    if restrict == "inter-event-only":
        if kind != KIND_OMISSION:
            raise ValueError("inter-event restriction applies to omission items")
        missing = [it for it in use if it.boundary is None]
        if missing:
            raise ValueError("items lack boundary metadata; rerun detection to restrict")
        use = [it for it in use if it.boundary == f"{AT_EVENT}:{AT_EVENT}"]
    elif restrict != "all":
        raise ValueError(f'restrict must be "all" or "inter-event-only", got {restrict!r}')
    if not use:
        raise ValueError("no items to evaluate")
    thresholds = np.asarray(thresholds, dtype=np.float64)
    if thresholds.ndim != 1 or np.any(np.diff(thresholds) < 0):
        raise ValueError("thresholds must be a sorted 1-d grid")
    scores = np.asarray([it.score for it in use])
    truths = np.asarray([it.truth for it in use])
    n_neg = int((truths == 0).sum())
    fdr = np.full(thresholds.size, np.nan)
    fpr = np.full(thresholds.size, np.nan)
    flagged_counts = np.zeros(thresholds.size, dtype=np.int64)
    for k, theta in enumerate(thresholds):
        flagged = scores > theta
        n_flagged = int(flagged.sum())
        flagged_counts[k] = n_flagged
        fp = int((flagged & (truths == 0)).sum())
        if n_flagged:
            fdr[k] = fp / n_flagged
        if n_neg:
            fpr[k] = fp / n_neg
    return ThresholdCurves(thresholds, fdr, fpr, flagged_counts)


def theorem1_bound(theta_c: float, lam1: float) -> float:
    """Commission FDR bound ``-theta_c / (lam1 - theta_c)`` for theta_c <= 0."""
    if theta_c > 0:
        raise ValueError(f"theta_c must be <= 0, got {theta_c}")
    if not lam1 > 0:
        raise ValueError(f"lam1 must be > 0, got {lam1}")
    return (-theta_c) / (lam1 - theta_c)


def theorem2_bound(theta_o: float) -> float:
    """Omission FPR bound (and limit) ``exp(-theta_o)`` on inter-event intervals."""
    if theta_o < 0:
        raise ValueError(f"theta_o must be >= 0, got {theta_o}")
    return math.exp(-theta_o)


def theorem3_bound(theta_o: float, p1: float) -> float:
    """Omission FDR bound ``exp(-p1 * theta_o)`` for Poisson data."""
    if theta_o < 0:
        raise ValueError(f"theta_o must be >= 0, got {theta_o}")
    if not 0.0 <= p1 <= 1.0:
        raise ValueError(f"p1 must be in [0, 1], got {p1}")
    return math.exp(-p1 * theta_o)


@dataclass(frozen=True, eq=False)
class BoundCurve:
    """Aggregated empirical rates against a theoretical bound.

    ``violations`` holds grid indices where the empirical mean exceeds the
    bound by more than ``2 * std`` with at least ``min_flagged`` items
    flagged on average.
    """

    name: str
    statistic: str  # "fdr" | "fpr"
    thresholds: np.ndarray
    empirical_mean: np.ndarray
    empirical_std: np.ndarray
    bound: np.ndarray
    flagged_mean: np.ndarray
    violations: tuple
    min_flagged: int

    def to_dict(self) -> dict:
        def listify(a):
            return [None if (isinstance(x, float) and math.isnan(x)) else x for x in a.tolist()]

        return {
            "name": self.name,
            "statistic": self.statistic,
            "thresholds": self.thresholds.tolist(),
            "empirical_mean": listify(self.empirical_mean),
            "empirical_std": listify(self.empirical_std),
            "bound": self.bound.tolist(),
            "flagged_mean": self.flagged_mean.tolist(),
            "violations": list(self.violations),
            "min_flagged": self.min_flagged,
        }


def _aggregate(
    name: str,
    statistic: str,
    thresholds: np.ndarray,
    per_rep: list[np.ndarray],
    flagged: list[np.ndarray],
    bound: np.ndarray,
    min_flagged: int,
) -> BoundCurve:
    stacked = np.vstack(per_rep)
    flagged_mean = np.vstack(flagged).mean(axis=0)
    with np.errstate(invalid="ignore"):
        mean = np.nanmean(stacked, axis=0)
        std = np.nanstd(stacked, axis=0, ddof=1)
    violations = tuple(
        int(k)
        for k in range(thresholds.size)
        if flagged_mean[k] >= min_flagged
        and not math.isnan(mean[k])
        and mean[k] > bound[k] + 2.0 * std[k]
    )
    return BoundCurve(
        name, statistic, thresholds, mean, std, bound, flagged_mean, violations, min_flagged
    )


@dataclass(frozen=True)
class BoundReport:
    """Everything :func:`verify_bounds` measured."""

    process: str
    alpha0: float
    repetitions: int
    lam1: float
    curves: tuple
    equality_max_dev_std: float | None = None  # worst |mean-bound|/std on the FPR curve

    @property
    def ok(self) -> bool:
        return all(not c.violations for c in self.curves)

    def curve(self, name: str) -> BoundCurve:
        for c in self.curves:
            if c.name == name:
                return c
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {
            "process": self.process,
            "alpha0": self.alpha0,
            "repetitions": self.repetitions,
            "lam1": self.lam1,
            "ok": self.ok,
            "equality_max_dev_std": self.equality_max_dev_std,
            "curves": [c.to_dict() for c in self.curves],
        }


DEFAULT_COMMISSION_GRID = {
    "poisson": tuple(np.round(np.linspace(-1.05, -0.15, 10), 6)) + (-0.12,),
    "gamma": tuple(np.round(np.linspace(-8.0, -0.5, 16), 6)),
}
DEFAULT_OMISSION_GRID = (0.25, 0.5, 0.75, 1.0, 1.5, 2.0, 2.5, 3.0)


def verify_bounds(
    process: str,
    alpha0: float,
    repetitions: int,
    seed: int,
    *,
    n_sequences: int = 40,
    span: tuple = (0.0, 1000.0),
    train_fraction: float = 0.5,
    commission_grid=None,
    omission_grid=DEFAULT_OMISSION_GRID,
    min_flagged: int = 30,
) -> BoundReport:
    """Measure empirical FDR/FPR of ground-truth scoring against the bounds.

    Each repetition simulates a fresh dataset, splits it, corrupts the test
    half with a constant schedule at ``alpha0``, scores with the analytic
    generator model, and accumulates threshold curves:

    * commission FDR vs ``theorem1_bound`` with ``lam1 = alpha0 * mean
      empirical test rate``;
    * omission FPR on true inter-event intervals vs ``theorem2_bound``
      (an equality; the report records the worst deviation in std units);
    * omission FDR on checkpoint items vs ``theorem3_bound`` with
      ``p1 = alpha0`` (Poisson process only; the statement needs
      memorylessness).
    """
    if process not in ("poisson", "gamma"):
        raise ValueError(f'process must be "poisson" or "gamma", got {process!r}')
    if repetitions < 2:
        raise ValueError("need at least 2 repetitions for std bands")
    schedule = ConstantSchedule(alpha0)
    c_grid = np.asarray(
        DEFAULT_COMMISSION_GRID[process] if commission_grid is None else commission_grid,
        dtype=np.float64,
    )
    c_grid = np.sort(c_grid)
    o_grid = np.asarray(omission_grid, dtype=np.float64)
    o_grid = np.sort(o_grid)

    fdr_c: list[np.ndarray] = []
    flag_c: list[np.ndarray] = []
    fpr_o: list[np.ndarray] = []
    flag_o_neg: list[np.ndarray] = []
    fdr_o: list[np.ndarray] = []
    flag_o: list[np.ndarray] = []
    lam_tests: list[float] = []

    for rep in range(repetitions):
        rep_seed = derive_seed(seed, "verify", rep)
        data = simulate_dataset(
            process,
            n_sequences,
            span,
            derive_seed(rep_seed, "simulate"),
            ctmc=DEFAULT_CTMC,
            poisson=DEFAULT_POISSON,
            gamma=DEFAULT_GAMMA,
        )
        train, test = split_train_test(data, train_fraction, derive_seed(rep_seed, "split"))
        lam_train = empirical_rate(train)
        lam_tests.append(empirical_rate(test))
        if process == "poisson":
            model = GroundTruthPoisson(DEFAULT_POISSON.rates)
        else:
            model = GroundTruthGamma(DEFAULT_GAMMA.params)

        corrupted_c, _ = inject_commission(test, schedule, derive_seed(rep_seed, "commission"))
        items_c = run_detection(model, corrupted_c, lam_train, derive_seed(rep_seed, "detect-c"))
        curves = fdr_fpr_curves(items_c, KIND_COMMISSION, c_grid)
        fdr_c.append(curves.fdr)
        flag_c.append(curves.flagged)

        corrupted_o, _ = inject_omission(test, schedule, derive_seed(rep_seed, "omission"))
        inter = run_detection(
            model, corrupted_o, lam_train, derive_seed(rep_seed, "detect-o"), items="inter-event"
        )
        curves = fdr_fpr_curves(inter, KIND_OMISSION, o_grid, restrict="inter-event-only")
        fpr_o.append(curves.fpr)
        flag_o_neg.append(curves.flagged)
        if process == "poisson":
            chain = run_detection(
                model, corrupted_o, lam_train, derive_seed(rep_seed, "detect-o"), items="chain"
            )
            curves = fdr_fpr_curves(chain, KIND_OMISSION, o_grid)
            fdr_o.append(curves.fdr)
            flag_o.append(curves.flagged)

    lam1 = alpha0 * float(np.mean(lam_tests))
    curves_out = [
        _aggregate(
            "commission-fdr",
            "fdr",
            c_grid,
            fdr_c,
            flag_c,
            np.asarray([theorem1_bound(t, lam1) for t in c_grid]),
            min_flagged,
        ),
        _aggregate(
            "omission-fpr-inter-event",
            "fpr",
            o_grid,
            fpr_o,
            flag_o_neg,
            np.asarray([theorem2_bound(t) for t in o_grid]),
            min_flagged,
        ),
    ]
    if fdr_o:
        curves_out.append(
            _aggregate(
                "omission-fdr-poisson",
                "fdr",
                o_grid,
                fdr_o,
                flag_o,
                np.asarray([theorem3_bound(t, alpha0) for t in o_grid]),
                min_flagged,
            )
        )

    fpr_curve = curves_out[1]
    with np.errstate(invalid="ignore", divide="ignore"):
        dev = np.abs(fpr_curve.empirical_mean - fpr_curve.bound) / fpr_curve.empirical_std
    max_dev = float(np.nanmax(dev)) if np.any(np.isfinite(dev)) else None
    return BoundReport(
        process=process,
        alpha0=alpha0,
        repetitions=repetitions,
        lam1=lam1,
        curves=tuple(curves_out),
        equality_max_dev_std=max_dev,
    )
