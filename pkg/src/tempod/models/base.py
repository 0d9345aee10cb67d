"""Conditional-intensity model interface and sequence log-likelihood.

A :class:`CifModel` answers two queries about the target process given an
observed history: the intensity ``lambda0(t | H)`` and the cumulative
intensity ``integral of lambda0 over (b, e)``, the latter valid only when
no target event lies inside the open interval.  Implementations are
immutable after construction and safe to share across threads.

Point queries take a :class:`~tempod.events.History`; the batch methods
(:meth:`CifModel.event_intensities`, :meth:`CifModel.interval_integrals`)
score a whole sequence causally in one call and are what the detector and
the likelihood use.
"""

from __future__ import annotations

from abc import ABC, abstractmethod

import numpy as np

from ..events import EventSequence, History

__all__ = ["CifModel", "log_likelihood"]

VIEW_COMBINED = "combined"
VIEW_TARGET = "target"


class CifModel(ABC):
    """Behavioral contract for conditional-intensity models."""

    #: which events condition the model: "combined" or "target"
    view: str = VIEW_COMBINED

    @abstractmethod
    def intensity(self, t: float, history: History) -> float:
        """lambda0(t | history), >= 0."""

    @abstractmethod
    def cumulative(self, begin: float, end: float, history: History) -> float:
        """Integral of lambda0 over (begin, end) given the history at ``begin``.

        Valid only when no target event known to the caller lies strictly
        inside (begin, end).  Additive over adjacent subintervals and zero
        when ``begin == end``.
        """

    # -- batch paths -------------------------------------------------------
    # Defaults fall back to the point queries; implementations override
    # them with vectorized versions.

    def event_intensities(self, seq: EventSequence) -> np.ndarray:
        """lambda0 at every target event, conditioned on what precedes it.

        The history of the k-th target event is everything sorted before it,
        which by the tie rule includes context events at its own timestamp.
        """
        out = []
        for idx, ev in enumerate(seq.events):
            if ev.is_target:
                hist = History.for_event(seq, idx, combined=self.view == VIEW_COMBINED)
                out.append(self.intensity(ev.t, hist))
        return np.asarray(out, dtype=np.float64)

    def interval_integrals(self, seq: EventSequence, bounds: np.ndarray) -> np.ndarray:
        """Cumulative intensity over each (begin, end) row of ``bounds``."""
        bounds = np.asarray(bounds, dtype=np.float64)
        out = np.empty(len(bounds), dtype=np.float64)
        for k, (b, e) in enumerate(bounds):
            hist = History.upto(seq, b, combined=self.view == VIEW_COMBINED)
            out[k] = self.cumulative(b, e, hist)
        return out


def log_likelihood(model: CifModel, seq: EventSequence) -> float:
    """Sequence log-likelihood: sum of log lambda0 at target events minus
    the integrated intensity over the whole span.

    Returns ``-inf`` when the model assigns zero intensity to an observed
    event (the distinguished impossible-data value).
    """
    lam = model.event_intensities(seq)
    knots = np.concatenate(([seq.begin], seq.target_times, [seq.end]))
    bounds = np.column_stack((knots[:-1], knots[1:]))
    bounds = bounds[bounds[:, 0] < bounds[:, 1]]
    total = float(model.interval_integrals(seq, bounds).sum())
    if np.any(lam <= 0.0):
        return float("-inf")
    return float(np.log(lam).sum() - total)
