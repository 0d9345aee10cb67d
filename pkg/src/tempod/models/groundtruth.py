"""Analytic intensity models of the synthetic generators.

Both models reconstruct the context state path from a sequence's context
events (marks ``"c<state>"``).  Between switches the state is the last
switch's target, exactly.  Before the first switch the initial state is
recovered by flipping the first switch's new state, which is exact for
2-state chains (every jump flips); for larger chains the fallback is a
configurable default state, since the stretch before the first observed
switch is genuinely ambiguous there.

``GroundTruthPoisson`` has intensity ``f(x(t))``.  ``GroundTruthGamma`` is
the renewal hazard ``h(tau) = pdf(tau) / sf(tau)`` of the Gamma gap
distribution whose parameters froze at the last observed target event (or
span start), with ``tau`` the elapsed time since then; its cumulative is
the log-survival difference, computed in log space so survival values down
to the underflow edge stay exact.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy import stats

from ..events import EventSequence, History
from .base import VIEW_COMBINED, CifModel

__all__ = ["GroundTruthPoisson", "GroundTruthGamma", "gt_gamma_hazard", "context_state_path"]


@lru_cache(maxsize=1024)
def context_state_path(seq: EventSequence, n_states: int, fallback_initial: int = 0):
    """(switch_times, states) with the initial state prepended at index 0.

    ``states[k]`` is the state holding between switches ``k-1`` and ``k``;
    boundaries are right-continuous: the state AT a switch time is the new
    one.  For a 2-state chain the initial state is the flip of the first
    switch's target (every jump flips), which recovers the generator state
    exactly; otherwise ``fallback_initial`` is used until the first switch.
    """
    times = []
    states = []
    for ev in seq.context_events:
        if not ev.mark.startswith("c"):
            raise ValueError(f"context mark {ev.mark!r} does not encode a state")
        times.append(ev.t)
        state = int(ev.mark[1:])
        if not 0 <= state < n_states:
            raise ValueError(f"context mark {ev.mark!r} outside the {n_states}-state chain")
        states.append(state)
    if times and n_states == 2:
        initial = 1 - states[0]
    else:
        initial = fallback_initial
    switch_times = np.asarray(times, dtype=np.float64)
    state_arr = np.asarray([initial, *states], dtype=np.int64)
    switch_times.flags.writeable = False
    state_arr.flags.writeable = False
    return switch_times, state_arr


def _states_at(seq: EventSequence, t: np.ndarray, n_states: int, fallback_initial: int) -> np.ndarray:
    switch_times, states = context_state_path(seq, n_states, fallback_initial)
    idx = np.searchsorted(switch_times, t, side="right")
    return states[idx]


class GroundTruthPoisson(CifModel):
    """Piecewise-constant intensity ``f(x(t))`` from the true generator."""

    view = VIEW_COMBINED

    def __init__(self, rates, fallback_initial: int = 0):
        self.rates = np.asarray(rates, dtype=np.float64)
        if self.rates.ndim != 1 or np.any(self.rates < 0):
            raise ValueError("rates must be a 1-d array of values >= 0")
        self.fallback_initial = int(fallback_initial)

    def _cumulative_curve(self, seq: EventSequence):
        switch_times, states = context_state_path(seq, len(self.rates), self.fallback_initial)
        knots = np.concatenate(([seq.begin], switch_times, [seq.end]))
        seg_rates = self.rates[states]
        cum = np.concatenate(([0.0], np.cumsum(seg_rates * np.diff(knots))))
        return knots, cum

    def intensity(self, t: float, history: History) -> float:
        state = _states_at(history.sequence, np.asarray([t]), len(self.rates), self.fallback_initial)[0]
        return float(self.rates[state])

    def cumulative(self, begin: float, end: float, history: History) -> float:
        return float(self.interval_integrals(history.sequence, np.asarray([[begin, end]]))[0])

    def event_intensities(self, seq: EventSequence) -> np.ndarray:
        return self.rates[_states_at(seq, seq.target_times, len(self.rates), self.fallback_initial)]

    def interval_integrals(self, seq: EventSequence, bounds: np.ndarray) -> np.ndarray:
        bounds = np.asarray(bounds, dtype=np.float64)
        knots, cum = self._cumulative_curve(seq)
        # piecewise-linear cumulative curve: interp is exact
        return np.interp(bounds[:, 1], knots, cum) - np.interp(bounds[:, 0], knots, cum)

    def to_config(self) -> dict:
        return {
            "kind": "gt-poisson",
            "rates": self.rates.tolist(),
            "fallback_initial": self.fallback_initial,
        }


def gt_gamma_hazard(a: float, b: float, tau) -> "float | np.ndarray":
    """Hazard of a Gamma(shape ``a``, rate ``b``) gap at elapsed time ``tau``.

    Computed as ``exp(logpdf - logsf)``, stable far into the tail where the
    survival function underflows a direct ratio.
    """
    if not (a > 0 and b > 0):
        raise ValueError(f"shape and rate must be > 0, got a={a}, b={b}")
    tau_arr = np.asarray(tau, dtype=np.float64)
    if np.any(tau_arr < 0):
        raise ValueError("tau must be >= 0")
    with np.errstate(divide="ignore"):
        log_h = stats.gamma.logpdf(tau_arr, a, scale=1.0 / b) - stats.gamma.logsf(
            tau_arr, a, scale=1.0 / b
        )
    out = np.exp(log_h)
    return float(out) if np.isscalar(tau) or tau_arr.ndim == 0 else out


class GroundTruthGamma(CifModel):
    """Renewal hazard of the generator's Gamma gap distribution.

    The hazard clock restarts at the last observed target event; detection
    runs on observed (possibly corrupted) data, so after an omission the
    clock keeps running from the previous surviving event.
    """

    view = VIEW_COMBINED

    def __init__(self, params, fallback_initial: int = 0):
        arr = np.asarray(params, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[1] != 2 or np.any(arr <= 0):
            raise ValueError("params must be (n_states, 2) positive (shape, rate) pairs")
        self.shapes = arr[:, 0].copy()
        self.rates = arr[:, 1].copy()
        self.fallback_initial = int(fallback_initial)

    def _origin_params(self, seq: EventSequence, origins: np.ndarray):
        states = _states_at(seq, origins, len(self.shapes), self.fallback_initial)
        return self.shapes[states], self.rates[states]

    def _origins_for(self, seq: EventSequence, at: np.ndarray, inclusive: bool) -> np.ndarray:
        """Last observed target time <= at (or < at), span begin if none."""
        side = "right" if inclusive else "left"
        idx = np.searchsorted(seq.target_times, at, side=side)
        origins = np.empty_like(at)
        mask = idx > 0
        origins[mask] = seq.target_times[idx[mask] - 1]
        origins[~mask] = seq.begin
        return origins

    def intensity(self, t: float, history: History) -> float:
        t0 = history.last_target_time()
        origin = history.sequence.begin if t0 is None else t0
        a, b = self._origin_params(history.sequence, np.asarray([origin]))
        return float(gt_gamma_hazard(float(a[0]), float(b[0]), t - origin))

    def cumulative(self, begin: float, end: float, history: History) -> float:
        return float(self.interval_integrals(history.sequence, np.asarray([[begin, end]]))[0])

    def event_intensities(self, seq: EventSequence) -> np.ndarray:
        times = seq.target_times
        origins = np.concatenate(([seq.begin], times[:-1]))
        a, b = self._origin_params(seq, origins)
        tau = times - origins
        with np.errstate(divide="ignore"):
            log_h = stats.gamma.logpdf(tau, a, scale=1.0 / b) - stats.gamma.logsf(
                tau, a, scale=1.0 / b
            )
        return np.exp(log_h)

    def interval_integrals(self, seq: EventSequence, bounds: np.ndarray) -> np.ndarray:
        bounds = np.asarray(bounds, dtype=np.float64)
        origins = self._origins_for(seq, bounds[:, 0], inclusive=True)
        a, b = self._origin_params(seq, origins)
        scale = 1.0 / b
        upper = stats.gamma.logsf(bounds[:, 1] - origins, a, scale=scale)
        lower = stats.gamma.logsf(bounds[:, 0] - origins, a, scale=scale)
        return lower - upper

    def to_config(self) -> dict:
        return {
            "kind": "gt-gamma",
            "params": np.column_stack((self.shapes, self.rates)).tolist(),
            "fallback_initial": self.fallback_initial,
        }
