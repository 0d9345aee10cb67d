"""Gap-length baseline: scores from the empirical CDF of training gaps.

All inter-event lengths (gaps between consecutive target events; span-edge
gaps excluded) are pooled across the training sequences into one sorted
pool with empirical CDF ``F``.  A target event whose gap from its
predecessor (span start for the first event) lands in either CDF tail is
suspicious: the commission score is ``-min(F(gap), 1 - F(gap))``.  The
omission score of a blank interval is simply its length.
"""

from __future__ import annotations

import numpy as np

from ..events import BlankInterval, Dataset, EventSequence

__all__ = ["LenModel", "len_fit", "len_commission_score", "len_omission_score"]


class LenModel:
    """Empirical CDF of pooled training inter-event lengths."""

    def __init__(self, lengths) -> None:
        pool = np.sort(np.asarray(lengths, dtype=np.float64))
        if pool.size == 0:
            raise ValueError("length pool is empty")
        if np.any(pool < 0) or not np.all(np.isfinite(pool)):
            raise ValueError("lengths must be finite and >= 0")
        pool.flags.writeable = False
        self.lengths = pool

    def cdf(self, gap):
        """F(gap): fraction of pool values <= gap (right-continuous step)."""
        gap_arr = np.asarray(gap, dtype=np.float64)
        out = np.searchsorted(self.lengths, gap_arr, side="right") / self.lengths.size
        return float(out) if gap_arr.ndim == 0 else out

    def commission_scores(self, seq: EventSequence) -> np.ndarray:
        times = seq.target_times
        gaps = np.diff(times, prepend=seq.begin)
        f = self.cdf(gaps)
        return -np.minimum(f, 1.0 - f)

    def to_config(self) -> dict:
        return {"kind": "len", "lengths": self.lengths.tolist()}


def len_fit(train: Dataset) -> LenModel:
    """Pool every inter-event gap of the training sequences."""
    gaps = [np.diff(seq.target_times) for seq in train.sequences if seq.n_target >= 2]
    pool = np.concatenate(gaps) if gaps else np.empty(0)
    if pool.size == 0:
        raise ValueError("training data has no inter-event interval")
    return LenModel(pool)


def len_commission_score(model: LenModel, gap: float) -> float:
    """-min(F(gap), 1 - F(gap)); highest when the gap is in a CDF tail."""
    if gap < 0:
        raise ValueError(f"gap must be >= 0, got {gap}")
    f = model.cdf(gap)
    return -min(f, 1.0 - f)


def len_omission_score(interval: BlankInterval) -> float:
    """The interval's length; longer blanks are more suspicious."""
    return interval.length
