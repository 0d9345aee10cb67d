"""Online outlier scoring at target events and checkpoints.

Commission: every observed target event gets ``s_c = -lambda0(t | H)``.
Omission: blank stretches are scored at checkpoints.  There is a
checkpoint at every target event; scanning forward from the span start,
whenever the next target event (or the span end) is further than
``w = 2 / lambda_hat_train`` from the previous checkpoint, a new one is
drawn uniformly on the ``w``-window just passed and becomes the new
scan origin.  Each checkpoint scores the interval back to its predecessor
with ``s_o = integral of lambda0``, so every scored interval has length at
most ``w`` and at the typical training rate covers about two expected
events.  No checkpoint is forced at the span end; trailing intervals arise
only from the w-rule.

Posterior transforms of both scores (known or distributed outlier rate)
are provided as pure functions; they are strictly monotone in the score,
so rankings (and AUROC) are unchanged by them.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .events import BlankInterval, Dataset, EventSequence, History, OutlierLabels
from .models.base import CifModel
from .models.length import LenModel, len_commission_score
from .seeding import derive_rng, derive_seed

__all__ = [
    "Checkpoint",
    "ScoredItem",
    "RandomScorer",
    "KIND_COMMISSION",
    "KIND_OMISSION",
    "commission_score",
    "commission_posterior",
    "commission_posterior_marginal",
    "omission_score",
    "omission_pvalue",
    "omission_posterior_poisson",
    "omission_posterior_marginal",
    "generate_checkpoints",
    "run_detection",
    "items_to_csv",
    "items_from_csv",
]

KIND_COMMISSION = "commission"
KIND_OMISSION = "omission"

AT_EVENT = "event"
GENERATED = "generated"
SPAN_BEGIN = "begin"


@dataclass(frozen=True, slots=True)
class Checkpoint:
    """A time at which an omission score is requested.

    ``prev`` is the previous checkpoint time (span begin for the first);
    the scored interval is ``(prev, time]``.  ``prev_kind`` records what
    the left endpoint was, which lets the evaluator restrict to true
    inter-event intervals when a bound requires them.
    """

    time: float
    kind: str  # "event" | "generated"
    prev: float
    prev_kind: str  # "begin" | "event" | "generated"


@dataclass(frozen=True, slots=True)
class ScoredItem:
    """One scored unit: a target event (commission) or an interval (omission).

    ``t_or_begin`` is the event time for commission items, the interval
    begin for omission items; ``end`` is None for commission.  ``boundary``
    is omission metadata ("event:event" when both endpoints are observed
    target events) and is not part of the CSV contract.
    """

    seq_id: str
    kind: str
    t_or_begin: float
    end: float | None
    score: float
    truth: int
    boundary: str | None = None


class RandomScorer:
    """Reference scorer: iid uniform(0, 1) scores, ignoring the data."""

    def __repr__(self) -> str:  # pragma: no cover
        return "RandomScorer()"


# ---------------------------------------------------------------------------
# scores and posteriors


def commission_score(model: CifModel, seq: EventSequence, t_n: float) -> float:
    """``s_c(t_n) = -lambda0(t_n | H)`` for an observed target event."""
    times = seq.target_times
    idx = np.searchsorted(times, t_n)
    if idx >= times.size or times[idx] != t_n:
        raise ValueError(f"t={t_n} is not a target event of sequence {seq.id!r}")
    return float(-model.event_intensities(seq)[idx])


def commission_posterior(lam0: float, lam1: float) -> float:
    """p(inserted | event) = lam1 / (lam0 + lam1) for known rates."""
    if lam0 < 0 or lam1 < 0:
        raise ValueError("intensities must be >= 0")
    if lam0 + lam1 == 0:
        raise ValueError("lam0 + lam1 must be > 0")
    return lam1 / (lam0 + lam1)


def _as_distribution(support, weights):
    support = np.asarray(support, dtype=np.float64)
    if support.ndim != 1 or support.size == 0:
        raise ValueError("support must be a non-empty 1-d collection")
    if weights is None:
        w = np.full(support.size, 1.0 / support.size)
    else:
        w = np.asarray(weights, dtype=np.float64)
        if w.shape != support.shape or np.any(w < 0) or w.sum() <= 0:
            raise ValueError("weights must be non-negative and sum to > 0")
        w = w / w.sum()
    return support, w


def commission_posterior_marginal(s_c: float, support, weights=None) -> float:
    """Posterior with the inserted-process rate marginalized over a finite
    distribution: ``1 + E[s_c / (lam1 - s_c)]``.  Increasing in ``s_c``."""
    support, w = _as_distribution(support, weights)
    if np.any(support <= 0):
        raise ValueError("all lam1 support points must be > 0")
    if s_c > 0:
        raise ValueError(f"s_c is a negated intensity and must be <= 0, got {s_c}")
    return float(1.0 + np.sum(w * (s_c / (support - s_c))))


def omission_score(model: CifModel, interval: BlankInterval, seq: EventSequence) -> float:
    """``s_o(B) = integral of lambda0 over B`` given the history at its start."""
    return float(model.interval_integrals(seq, np.asarray([[interval.begin, interval.end]]))[0])


def omission_pvalue(s_o: float) -> float:
    """p-value of observing a blank at least this charged: ``exp(-s_o)``."""
    if s_o < 0:
        raise ValueError(f"s_o must be >= 0, got {s_o}")
    return math.exp(-s_o)


def omission_posterior_poisson(s_o: float, p1: float) -> float:
    """p(some removal in B) = 1 - exp(-p1 * s_o) for removal probability p1."""
    if s_o < 0:
        raise ValueError(f"s_o must be >= 0, got {s_o}")
    if not 0.0 <= p1 <= 1.0:
        raise ValueError(f"p1 must be in [0, 1], got {p1}")
    return -math.expm1(-p1 * s_o)


def omission_posterior_marginal(s_o: float, support, weights=None) -> float:
    """Poisson posterior with p1 marginalized: ``1 - E[exp(-p1 s_o)]``.
    Increasing in ``s_o``."""
    if s_o < 0:
        raise ValueError(f"s_o must be >= 0, got {s_o}")
    support, w = _as_distribution(support, weights)
    if np.any(support < 0) or np.any(support > 1):
        raise ValueError("p1 support must lie in [0, 1]")
    return float(1.0 - np.sum(w * np.exp(-support * s_o)))


# ---------------------------------------------------------------------------
# checkpoints


def generate_checkpoints(seq: EventSequence, lam_train: float, seed: int) -> list[Checkpoint]:
    """Checkpoints at every target event plus generated ones in long blanks.

    ``w = 2 / lam_train``.  The scan origin starts at the span begin and is
    not itself a checkpoint.  While the next target event (or the span end)
    lies beyond origin + w, a generated checkpoint is drawn uniformly on
    (origin, origin + w) and the origin advances to it; an at-event
    checkpoint then closes the stretch at the event.
    """
    if not lam_train > 0:
        raise ValueError("lam_train must be > 0")
    w = 2.0 / lam_train
    rng = derive_rng(seed, "checkpoints", seq.id)
    out: list[Checkpoint] = []
    prev = seq.begin
    prev_kind = SPAN_BEGIN

    def march_until(stop: float) -> None:
        nonlocal prev, prev_kind
        while prev + w < stop:
            c = float(rng.uniform(prev, prev + w))
            out.append(Checkpoint(c, GENERATED, prev, prev_kind))
            prev, prev_kind = c, GENERATED

    for t in seq.target_times:
        t = float(t)
        march_until(t)
        out.append(Checkpoint(t, AT_EVENT, prev, prev_kind))
        prev, prev_kind = t, AT_EVENT
    march_until(seq.end)
    return out


def _interval_truth(labels: OutlierLabels | None, begin: float, end: float) -> int:
    # removed time in half-open (begin, end]
    if labels is None or not labels.removed:
        return 0
    removed = labels.removed_array
    return int(np.searchsorted(removed, end, side="right") > np.searchsorted(removed, begin, side="right"))


# ---------------------------------------------------------------------------
# detection runs


def _commission_scores(model, seq: EventSequence, rng) -> np.ndarray:
    if isinstance(model, CifModel):
        return -model.event_intensities(seq)
    if isinstance(model, LenModel):
        return model.commission_scores(seq)
    if isinstance(model, RandomScorer):
        return rng.uniform(size=seq.n_target)
    raise TypeError(f"cannot score with {type(model).__name__}")


def _omission_scores(model, seq: EventSequence, bounds: np.ndarray, rng) -> np.ndarray:
    if isinstance(model, CifModel):
        return model.interval_integrals(seq, bounds)
    if isinstance(model, LenModel):
        return bounds[:, 1] - bounds[:, 0]
    if isinstance(model, RandomScorer):
        return rng.uniform(size=len(bounds))
    raise TypeError(f"cannot score with {type(model).__name__}")


def _omission_bounds(
    seq: EventSequence, lam_train: float, seed: int, items: str
) -> tuple[np.ndarray, list[str]]:
    if items == "chain":
        cps = generate_checkpoints(seq, lam_train, seed)
        bounds = np.asarray([[cp.prev, cp.time] for cp in cps], dtype=np.float64).reshape(-1, 2)
        boundary = [f"{cp.prev_kind}:{cp.kind}" for cp in cps]
    elif items == "inter-event":
        times = seq.target_times
        bounds = np.column_stack((times[:-1], times[1:]))
        boundary = [f"{AT_EVENT}:{AT_EVENT}"] * len(bounds)
    else:
        raise ValueError(f'items must be "chain" or "inter-event", got {items!r}')
    return bounds, boundary


def run_detection(
    model,
    dataset: Dataset,
    lam_train: float,
    seed: int,
    *,
    items: str = "chain",
) -> list[ScoredItem]:
    """Score a labeled dataset and emit every scored item.

    ``model`` is a :class:`CifModel`, a :class:`LenModel`, or a
    :class:`RandomScorer`.  ``items`` selects the omission units: "chain"
    for the checkpoint scheme, "inter-event" for consecutive observed
    target pairs only (the unit Theorem-style FPR statements are about).
    Output order: dataset order, commission items then omission items per
    sequence, each by time.
    """
    out: list[ScoredItem] = []
    for seq, labels in dataset:
        commission = set() if labels is None else labels.commission
        c_rng = derive_rng(seed, "rnd-commission", seq.id)
        scores = _commission_scores(model, seq, c_rng)
        for t, s in zip(seq.target_times, scores):
            out.append(
                ScoredItem(seq.id, KIND_COMMISSION, float(t), None, float(s), int(t in commission))
            )
        bounds, boundary = _omission_bounds(seq, lam_train, derive_seed(seed, "checkpoints"), items)
        o_rng = derive_rng(seed, "rnd-omission", seq.id)
        o_scores = _omission_scores(model, seq, bounds, o_rng) if len(bounds) else np.empty(0)
        for (b, e), s, kinds in zip(bounds, o_scores, boundary):
            out.append(
                ScoredItem(
                    seq.id,
                    KIND_OMISSION,
                    float(b),
                    float(e),
                    float(s),
                    _interval_truth(labels, float(b), float(e)),
                    kinds,
                )
            )
    return out


# ---------------------------------------------------------------------------
# CSV contract: seq_id, kind, t_or_begin, end, score, truth

_CSV_HEADER = ["seq_id", "kind", "t_or_begin", "end", "score", "truth"]


def items_to_csv(items: list[ScoredItem]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(_CSV_HEADER)
    for it in items:
        writer.writerow(
            [
                it.seq_id,
                it.kind,
                repr(it.t_or_begin),
                "" if it.end is None else repr(it.end),
                repr(it.score),
                it.truth,
            ]
        )
    return buf.getvalue()


def items_from_csv(text: str) -> list[ScoredItem]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if header != _CSV_HEADER:
        raise ValueError(f"unexpected CSV header {header!r}")
    out = []
    for row in reader:
        if not row:
            continue
        seq_id, kind, t_or_begin, end, score, truth = row
        out.append(
            ScoredItem(
                seq_id,
                kind,
                float(t_or_begin),
                None if end == "" else float(end),
                float(score),
                int(truth),
            )
        )
    return out
