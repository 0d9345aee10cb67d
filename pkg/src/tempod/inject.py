"""Outlier injection: corrupt clean datasets and record ground truth.

Commission outliers are extra target events drawn from an independent
inhomogeneous Poisson process with intensity ``alpha(t) * lambda_hat``,
where ``lambda_hat`` is the empirical target rate of the dataset being
corrupted, then merged into the sequences.  Omission outliers remove each
target event independently with probability ``alpha(t)``, except that the
earliest target event of every sequence is always kept.

``alpha(t)`` is a :class:`RateSchedule`: constant, periodic
``alpha0 * (1 + sin(2 pi t / p)) / 2``, or a piecewise-constant random step
function ``alpha0 * g(t)`` with per-step, per-sequence uniform draws.
"""

from __future__ import annotations

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace

import numpy as np

from .events import (
    TARGET_MARK,
    Dataset,
    EventSequence,
    MarkedEvent,
    OutlierLabels,
    sorted_events,
)
from .seeding import derive_rng, derive_seed

__all__ = [
    "RateSchedule",
    "ConstantSchedule",
    "PeriodicSchedule",
    "PiecewiseSchedule",
    "InjectionReport",
    "schedule_from_config",
    "eval_schedule",
    "empirical_rate",
    "inject_commission",
    "inject_omission",
]


class RateSchedule(ABC):
    """Outlier-rate function alpha(t) on absolute time."""

    @abstractmethod
    def value(self, t):
        """alpha(t) for scalar or array ``t``."""

    @abstractmethod
    def max_value(self) -> float:
        """A tight upper bound of alpha over all t (thinning envelope)."""

    def localize(self, sequence_index: int) -> "RateSchedule":
        """The schedule instance used for one sequence (default: shared)."""
        return self

    @abstractmethod
    def to_config(self) -> dict:
        """JSON-safe description, invertible by :func:`schedule_from_config`."""

    @abstractmethod
    def label(self) -> str:
        """Short content-derived name used in result tables."""


def _check_alpha0(alpha0: float) -> None:
    if not (math.isfinite(alpha0) and alpha0 >= 0):
        raise ValueError(f"alpha0 must be finite and >= 0, got {alpha0}")


@dataclass(frozen=True)
class ConstantSchedule(RateSchedule):
    alpha0: float

    def __post_init__(self) -> None:
        _check_alpha0(self.alpha0)

    def value(self, t):
        return np.full_like(np.asarray(t, dtype=np.float64), self.alpha0)

    def max_value(self) -> float:
        return self.alpha0

    def to_config(self) -> dict:
        return {"kind": "constant", "alpha0": self.alpha0}

    def label(self) -> str:
        return f"const-{self.alpha0:g}"


@dataclass(frozen=True)
class PeriodicSchedule(RateSchedule):
    """alpha(t) = alpha0 * (1 + sin(2 pi t / period)) / 2."""

    alpha0: float
    period: float

    def __post_init__(self) -> None:
        _check_alpha0(self.alpha0)
        if not self.period > 0:
            raise ValueError(f"period must be > 0, got {self.period}")

    def value(self, t):
        t = np.asarray(t, dtype=np.float64)
        return self.alpha0 * (1.0 + np.sin(2.0 * np.pi * t / self.period)) / 2.0

    def max_value(self) -> float:
        return self.alpha0

    def to_config(self) -> dict:
        return {"kind": "periodic", "alpha0": self.alpha0, "period": self.period}

    def label(self) -> str:
        return f"sin-{self.alpha0:g}-p{self.period:g}"


@dataclass(frozen=True)
class PiecewiseSchedule(RateSchedule):
    """alpha(t) = alpha0 * u_k on [k*step, (k+1)*step), u_k ~ Uniform[0, 1].

    The step draws are keyed by (seed, step index), so evaluation at any
    time is reproducible without materializing the whole span.
    ``localize`` derives an independent seed per sequence, giving each
    sequence its own random step function as required.
    """

    alpha0: float
    step: float
    seed: int

    def __post_init__(self) -> None:
        _check_alpha0(self.alpha0)
        if not self.step > 0:
            raise ValueError(f"step must be > 0, got {self.step}")

    def _step_value(self, k: int) -> float:
        return float(derive_rng(self.seed, "step", k).uniform())

    def value(self, t):
        t = np.asarray(t, dtype=np.float64)
        ks = np.floor(t / self.step).astype(np.int64)
        uniq = {int(k): self._step_value(int(k)) for k in np.unique(ks)}
        g = np.vectorize(uniq.__getitem__, otypes=[np.float64])(ks) if ks.size else ks.astype(np.float64)
        return self.alpha0 * g

    def max_value(self) -> float:
        return self.alpha0

    def localize(self, sequence_index: int) -> "PiecewiseSchedule":
        return replace(self, seed=derive_seed(self.seed, "sequence", sequence_index))

    def to_config(self) -> dict:
        return {"kind": "piecewise", "alpha0": self.alpha0, "step": self.step, "seed": self.seed}

    def label(self) -> str:
        return f"steps-{self.alpha0:g}-s{self.step:g}"


def schedule_from_config(config: dict) -> RateSchedule:
    kind = config.get("kind")
    if kind == "constant":
        return ConstantSchedule(float(config["alpha0"]))
    if kind == "periodic":
        return PeriodicSchedule(float(config["alpha0"]), float(config["period"]))
    if kind == "piecewise":
        return PiecewiseSchedule(float(config["alpha0"]), float(config["step"]), int(config["seed"]))
    raise ValueError(f"unknown schedule kind {kind!r}")


def eval_schedule(schedule: RateSchedule, t):
    """alpha(t); scalar in, scalar out."""
    out = schedule.value(t)
    return float(out) if np.isscalar(t) or np.asarray(t).ndim == 0 else out


@dataclass(frozen=True)
class InjectionReport:
    """What an injection did.

    ``event_ratio`` is the event-level realized ratio: inserted / total
    target events after corruption (commission), or removed / original
    target events (omission).  For commission this is exactly the outlier
    ratio over scored items; for omission the item-level ratio depends on
    the checkpoint layout and is computed by the evaluator on scored items.
    """

    kind: str
    empirical_rate: float
    n_added: int
    n_removed: int
    n_target_before: int
    n_target_after: int
    n_collisions: int
    event_ratio: float
    schedule: dict

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "empirical_rate": self.empirical_rate,
            "n_added": self.n_added,
            "n_removed": self.n_removed,
            "n_target_before": self.n_target_before,
            "n_target_after": self.n_target_after,
            "n_collisions": self.n_collisions,
            "event_ratio": self.event_ratio,
            "schedule": self.schedule,
        }


def empirical_rate(dataset: Dataset) -> float:
    """Pooled target-event rate: total count over total span length."""
    total_span = sum(seq.length for seq in dataset.sequences)
    if total_span <= 0:
        raise ValueError("total span length must be > 0")
    total_events = sum(seq.n_target for seq in dataset.sequences)
    return total_events / total_span


def _require_clean(dataset: Dataset) -> None:
    for seq, labels in dataset:
        if labels is not None and not labels.empty:
            raise ValueError(f"sequence {seq.id!r} already carries outlier labels")


def inject_commission(
    dataset: Dataset, schedule: RateSchedule, seed: int
) -> tuple[Dataset, InjectionReport]:
    """Insert extra target events at rate ``alpha(t) * empirical_rate``.

    Candidate times come from a homogeneous Poisson process at the schedule's
    envelope rate and are thinned by ``alpha(t) / max alpha``, which is exact
    for all schedule variants.  Inserted times colliding with an existing
    target time are nudged up by the smallest representable increment (the
    report counts how often).  Original events are never moved or removed.
    """
    _require_clean(dataset)
    lam_hat = empirical_rate(dataset)
    envelope = schedule.max_value() * lam_hat
    items = []
    n_added_total = 0
    n_collisions = 0
    n_before = sum(seq.n_target for seq in dataset.sequences)
    for i, (seq, _) in enumerate(dataset):
        local = schedule.localize(i)
        rng = derive_rng(seed, "commission", i)
        accepted: list[float] = []
        if envelope > 0:
            n_cand = rng.poisson(envelope * seq.length)
            cand = np.sort(rng.uniform(seq.begin, seq.end, size=n_cand))
            keep = rng.uniform(size=n_cand) < local.value(cand) / schedule.max_value()
            taken = set(seq.target_times.tolist())
            for t in cand[keep]:
                t = float(t)
                while t in taken:
                    t = float(np.nextafter(t, np.inf))
                    n_collisions += 1
                if t > seq.end:
                    continue
                taken.add(t)
                accepted.append(t)
        if accepted:
            events = sorted_events(
                list(seq.events) + [MarkedEvent(t, TARGET_MARK) for t in accepted]
            )
            seq = seq.replace_events(events)
        n_added_total += len(accepted)
        items.append((seq, OutlierLabels(commission=frozenset(accepted))))
    n_after = n_before + n_added_total
    report = InjectionReport(
        kind="commission",
        empirical_rate=lam_hat,
        n_added=n_added_total,
        n_removed=0,
        n_target_before=n_before,
        n_target_after=n_after,
        n_collisions=n_collisions,
        event_ratio=n_added_total / n_after if n_after else 0.0,
        schedule=schedule.to_config(),
    )
    return dataset.with_items(items), report


def inject_omission(
    dataset: Dataset, schedule: RateSchedule, seed: int
) -> tuple[Dataset, InjectionReport]:
    """Remove target events independently with probability ``alpha(t)``.

    The earliest target event of each sequence is exempt, so every
    non-empty sequence keeps its leading target anchor.  Context events are
    untouched.
    """
    _require_clean(dataset)
    if schedule.max_value() > 1.0:
        raise ValueError(
            f"removal probability alpha(t) may reach {schedule.max_value():g} > 1"
        )
    lam_hat = empirical_rate(dataset)
    items = []
    n_removed_total = 0
    n_before = sum(seq.n_target for seq in dataset.sequences)
    for i, (seq, _) in enumerate(dataset):
        local = schedule.localize(i)
        rng = derive_rng(seed, "omission", i)
        targets = seq.target_times
        removed: list[float] = []
        if targets.size > 1:
            candidates = targets[1:]  # keep the earliest target event
            drop = rng.uniform(size=candidates.size) < local.value(candidates)
            removed = [float(t) for t in candidates[drop]]
        if removed:
            removed_set = set(removed)
            events = tuple(
                ev for ev in seq.events if not (ev.is_target and ev.t in removed_set)
            )
            seq = seq.replace_events(events)
        n_removed_total += len(removed)
        items.append((seq, OutlierLabels(removed=tuple(removed))))
    report = InjectionReport(
        kind="omission",
        empirical_rate=lam_hat,
        n_added=0,
        n_removed=n_removed_total,
        n_target_before=n_before,
        n_target_after=n_before - n_removed_total,
        n_collisions=0,
        event_ratio=n_removed_total / n_before if n_before else 0.0,
        schedule=schedule.to_config(),
    )
    return dataset.with_items(items), report
