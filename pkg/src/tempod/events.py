"""Domain types for marked event sequences and their on-disk format.

A sequence holds timestamped events on an explicit closed span.  The mark
``"x"`` is reserved for target events (the monitored type); every other mark
is a context type drawn from the dataset's declared context-mark set.  At
equal timestamps context events sort before target events, so a context
event at time t is already visible when a target event at t is scored.

The canonical file format is UTF-8 JSON Lines: a header line declaring the
context marks followed by one record per sequence::

    {"context_marks": ["c0", "c1"]}
    {"id": "s1", "span": [0.0, 1000.0], "events": [{"t": 1.5, "mark": "x"}, ...],
     "labels": {"commission": [12.3], "removed": [45.6]}}

The ``labels`` member is optional and records ground truth for corrupted
data: times of inserted target events and times of removed ones.  Floats
round-trip exactly (shortest-repr JSON encoding).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Iterator

import numpy as np

__all__ = [
    "TARGET_MARK",
    "DatasetFormatError",
    "MarkedEvent",
    "EventSequence",
    "History",
    "BlankInterval",
    "OutlierLabels",
    "Dataset",
    "sorted_events",
    "blank_intervals",
    "load_dataset",
    "save_dataset",
    "dataset_to_jsonl",
    "dataset_from_jsonl",
    "split_train_test",
]

TARGET_MARK = "x"


class DatasetFormatError(ValueError):
    """A dataset file or record violates the format or a type invariant."""


@dataclass(frozen=True, slots=True)
class MarkedEvent:
    """A single timestamped event.

    Parameters
    ----------
    t : float
        Event time, in the dataset's (undeclared) time unit.
    mark : str
        Event type; ``"x"`` is the target type, anything else is context.
    """

    t: float
    mark: str

    def __post_init__(self) -> None:
        if not math.isfinite(self.t):
            raise DatasetFormatError(f"event time must be finite, got {self.t!r}")
        if not self.mark:
            raise DatasetFormatError("event mark must be a non-empty string")

    @property
    def is_target(self) -> bool:
        return self.mark == TARGET_MARK


def _sort_key(event: MarkedEvent) -> tuple[float, int]:
    # context before target at equal t; stable for equal (t, kind)
    return (event.t, 1 if event.is_target else 0)


def sorted_events(events: "list[MarkedEvent] | tuple[MarkedEvent, ...]") -> tuple[MarkedEvent, ...]:
    """Sort events by time with context-before-target ties, stably."""
    return tuple(sorted(events, key=_sort_key))


@dataclass(frozen=True)
class EventSequence:
    """An immutable event sequence on a closed span ``[begin, end]``.

    The span is explicit rather than inferred from event times because the
    blank stretches at both ends carry information for omission scoring.

    Invariants enforced at construction: positive-length span, all event
    times inside the span, events sorted by ``(t, context-before-target)``,
    and no two target events at exactly the same time.
    """

    id: str
    begin: float
    end: float
    events: tuple[MarkedEvent, ...]

    def __post_init__(self) -> None:
        if not self.id:
            raise DatasetFormatError("sequence id must be non-empty")
        if not (math.isfinite(self.begin) and math.isfinite(self.end)):
            raise DatasetFormatError(f"sequence {self.id!r}: span must be finite")
        if not self.begin < self.end:
            raise DatasetFormatError(
                f"sequence {self.id!r}: span [{self.begin}, {self.end}] must have positive length"
            )
        prev: MarkedEvent | None = None
        for k, ev in enumerate(self.events):
            if not self.begin <= ev.t <= self.end:
                raise DatasetFormatError(
                    f"sequence {self.id!r}: event {k} at t={ev.t} outside span"
                    f" [{self.begin}, {self.end}]"
                )
            if prev is not None:
                if ev.t < prev.t:
                    raise DatasetFormatError(
                        f"sequence {self.id!r}: event {k} at t={ev.t} out of order"
                    )
                if ev.t == prev.t:
                    if prev.is_target and ev.is_target:
                        raise DatasetFormatError(
                            f"sequence {self.id!r}: duplicate target event at t={ev.t}"
                        )
                    if prev.is_target and not ev.is_target:
                        raise DatasetFormatError(
                            f"sequence {self.id!r}: context event after target at t={ev.t}"
                        )
            prev = ev

    @property
    def span(self) -> tuple[float, float]:
        return (self.begin, self.end)

    @property
    def length(self) -> float:
        return self.end - self.begin

    @cached_property
    def target_times(self) -> np.ndarray:
        """Times of target events, ascending (float64, read-only)."""
        out = np.array([ev.t for ev in self.events if ev.is_target], dtype=np.float64)
        out.flags.writeable = False
        return out

    @cached_property
    def context_events(self) -> tuple[MarkedEvent, ...]:
        return tuple(ev for ev in self.events if not ev.is_target)

    @property
    def n_target(self) -> int:
        return int(self.target_times.size)

    def replace_events(self, events: tuple[MarkedEvent, ...]) -> "EventSequence":
        return EventSequence(self.id, self.begin, self.end, events)


@dataclass(frozen=True)
class History:
    """A read-only view of the events observed strictly before ``t_query``.

    ``combined`` selects whether context events are visible (the combined
    history) or only target events (the target-only history).  Use
    :meth:`before` for the view at an instant, :meth:`upto` for the view
    "just after" an instant (an event at exactly t is then in scope, which
    is the conditioning needed at an interval's left edge), and
    :meth:`for_event` for the positional history of an event to be scored:
    everything sorted before it, which by the tie rule includes context
    events sharing its timestamp.
    """

    sequence: EventSequence
    t_query: float
    combined: bool
    cutoff: int  # events[:cutoff] are in view, pre mark filtering

    @classmethod
    def before(cls, seq: EventSequence, t: float, combined: bool = True) -> "History":
        cutoff = sum(1 for ev in seq.events if ev.t < t)
        return cls(seq, t, combined, cutoff)

    @classmethod
    def upto(cls, seq: EventSequence, t: float, combined: bool = True) -> "History":
        t_plus = float(np.nextafter(t, np.inf))
        cutoff = sum(1 for ev in seq.events if ev.t < t_plus)
        return cls(seq, t_plus, combined, cutoff)

    @classmethod
    def for_event(cls, seq: EventSequence, event_index: int, combined: bool = True) -> "History":
        return cls(seq, seq.events[event_index].t, combined, event_index)

    def events(self) -> Iterator[MarkedEvent]:
        for ev in self.sequence.events[: self.cutoff]:
            if self.combined or ev.is_target:
                yield ev

    def target_times(self) -> np.ndarray:
        return np.array([ev.t for ev in self.events() if ev.is_target], dtype=np.float64)

    def last_target_time(self) -> float | None:
        for ev in reversed(self.sequence.events[: self.cutoff]):
            if ev.is_target:
                return ev.t
        return None


@dataclass(frozen=True, slots=True)
class BlankInterval:
    """An interval of a sequence containing no target event strictly inside."""

    begin: float
    end: float
    seq_id: str

    def __post_init__(self) -> None:
        if not self.begin < self.end:
            raise ValueError(f"blank interval must have begin < end, got [{self.begin}, {self.end}]")

    @property
    def length(self) -> float:
        return self.end - self.begin


@dataclass(frozen=True)
class OutlierLabels:
    """Ground truth for a corrupted sequence.

    ``commission`` holds times of target events inserted by the corruption;
    ``removed`` holds times of target events deleted by it, ascending.
    """

    commission: frozenset = field(default_factory=frozenset)
    removed: tuple = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "commission", frozenset(float(t) for t in self.commission))
        object.__setattr__(self, "removed", tuple(sorted(float(t) for t in self.removed)))

    @property
    def empty(self) -> bool:
        return not self.commission and not self.removed

    @cached_property
    def removed_array(self) -> np.ndarray:
        out = np.array(self.removed, dtype=np.float64)
        out.flags.writeable = False
        return out


def _validate_labels(seq: EventSequence, labels: OutlierLabels) -> None:
    targets = set(seq.target_times.tolist())
    extra = labels.commission - targets
    if extra:
        raise DatasetFormatError(
            f"sequence {seq.id!r}: commission labels not among target times: {sorted(extra)[:3]}"
        )
    clash = set(labels.removed) & targets
    if clash:
        raise DatasetFormatError(
            f"sequence {seq.id!r}: removed times still present as targets: {sorted(clash)[:3]}"
        )


@dataclass(frozen=True)
class Dataset:
    """A set of sequences with a shared declared context-mark set.

    ``items`` pairs each sequence with its outlier labels (``None`` for
    clean data).  Iterating a dataset yields those pairs in file order.
    """

    context_marks: tuple
    items: tuple

    def __post_init__(self) -> None:
        marks = tuple(self.context_marks)
        if TARGET_MARK in marks:
            raise DatasetFormatError(f'"{TARGET_MARK}" is reserved and cannot be a context mark')
        if len(set(marks)) != len(marks):
            raise DatasetFormatError("duplicate context marks in declaration")
        object.__setattr__(self, "context_marks", marks)
        object.__setattr__(self, "items", tuple((s, l) for s, l in self.items))
        allowed = set(marks) | {TARGET_MARK}
        seen_ids: set[str] = set()
        for seq, labels in self.items:
            if seq.id in seen_ids:
                raise DatasetFormatError(f"duplicate sequence id {seq.id!r}")
            seen_ids.add(seq.id)
            for ev in seq.events:
                if ev.mark not in allowed:
                    raise DatasetFormatError(
                        f"sequence {seq.id!r}: undeclared mark {ev.mark!r}"
                    )
            if labels is not None:
                _validate_labels(seq, labels)

    def __iter__(self) -> Iterator[tuple[EventSequence, OutlierLabels | None]]:
        return iter(self.items)

    def __len__(self) -> int:
        return len(self.items)

    @property
    def sequences(self) -> tuple[EventSequence, ...]:
        return tuple(seq for seq, _ in self.items)

    @property
    def labeled(self) -> bool:
        return all(labels is not None for _, labels in self.items)

    def with_items(self, items) -> "Dataset":
        return Dataset(self.context_marks, tuple(items))


def blank_intervals(seq: EventSequence) -> list[BlankInterval]:
    """Inter-target gaps plus the leading and trailing span edges.

    Zero-length edges (a target exactly at a span endpoint) are skipped, so
    the returned intervals partition the span minus the target-event points.
    For a sequence with ``n`` target events strictly inside the span this
    yields ``n + 1`` intervals; with no targets at all, the whole span.
    """
    times = seq.target_times
    knots = [seq.begin, *times.tolist(), seq.end]
    out: list[BlankInterval] = []
    for a, b in zip(knots[:-1], knots[1:]):
        if a < b:
            out.append(BlankInterval(a, b, seq.id))
    return out


# ---------------------------------------------------------------------------
# On-disk format


def _record_to_pair(record: dict, line_no: int) -> tuple[EventSequence, OutlierLabels | None]:
    try:
        span = record["span"]
        events = tuple(MarkedEvent(float(e["t"]), str(e["mark"])) for e in record["events"])
        seq = EventSequence(str(record["id"]), float(span[0]), float(span[1]), events)
    except (KeyError, IndexError, TypeError) as exc:
        raise DatasetFormatError(f"line {line_no}: malformed record ({exc})") from exc
    labels: OutlierLabels | None = None
    if "labels" in record and record["labels"] is not None:
        raw = record["labels"]
        labels = OutlierLabels(
            commission=frozenset(float(t) for t in raw.get("commission", [])),
            removed=tuple(float(t) for t in raw.get("removed", [])),
        )
    return seq, labels


def _parse_lines(lines) -> Dataset:
    items: list[tuple[EventSequence, OutlierLabels | None]] = []
    context_marks: tuple[str, ...] | None = None
    for line_no, line in enumerate(lines, start=1):
        line = line.strip()
        if not line:
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetFormatError(f"line {line_no}: invalid JSON ({exc.msg})") from exc
        if context_marks is None:
            if not isinstance(record, dict) or "context_marks" not in record:
                raise DatasetFormatError('line 1: expected header {"context_marks": [...]}')
            context_marks = tuple(str(m) for m in record["context_marks"])
            continue
        try:
            items.append(_record_to_pair(record, line_no))
        except DatasetFormatError as exc:
            if str(exc).startswith("line "):
                raise
            raise DatasetFormatError(f"line {line_no}: {exc}") from exc
    if context_marks is None:
        raise DatasetFormatError("empty input: missing context-mark header")
    return Dataset(context_marks, tuple(items))


def load_dataset(path: "str | Path") -> Dataset:
    """Load and validate a JSON-Lines dataset file.

    Raises
    ------
    DatasetFormatError
        On parse errors or invariant violations, naming the offending line.
    """
    with Path(path).open("r", encoding="utf-8") as fh:
        return _parse_lines(fh)


def _pair_to_record(seq: EventSequence, labels: OutlierLabels | None) -> dict:
    record: dict = {
        "id": seq.id,
        "span": [seq.begin, seq.end],
        "events": [{"t": ev.t, "mark": ev.mark} for ev in seq.events],
    }
    if labels is not None:
        record["labels"] = {
            "commission": sorted(labels.commission),
            "removed": list(labels.removed),
        }
    return record


def dataset_to_jsonl(dataset: Dataset) -> str:
    lines = [json.dumps({"context_marks": list(dataset.context_marks)})]
    for seq, labels in dataset:
        lines.append(json.dumps(_pair_to_record(seq, labels)))
    return "\n".join(lines) + "\n"


def dataset_from_jsonl(text: str) -> Dataset:
    return _parse_lines(text.splitlines())


def save_dataset(dataset: Dataset, path: "str | Path") -> None:
    """Write a dataset in the canonical JSON-Lines format."""
    Path(path).write_text(dataset_to_jsonl(dataset), encoding="utf-8")


def split_train_test(dataset: Dataset, fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Disjoint split with ``ceil(fraction * N)`` training sequences.

    The permutation is seeded; both halves keep the original file order.
    """
    if not 0.0 < fraction < 1.0:
        raise ValueError(f"fraction must be in (0, 1), got {fraction}")
    n = len(dataset)
    if n < 2:
        raise ValueError("need at least 2 sequences to split")
    n_train = math.ceil(fraction * n)
    perm = np.random.default_rng(seed).permutation(n)
    train_idx = set(perm[:n_train].tolist())
    train = [dataset.items[i] for i in range(n) if i in train_idx]
    test = [dataset.items[i] for i in range(n) if i not in train_idx]
    return dataset.with_items(train), dataset.with_items(test)
