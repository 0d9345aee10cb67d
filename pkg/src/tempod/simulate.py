"""Synthetic generators: CTMC context plus context-modulated target processes.

The context is a finite-state continuous-time Markov chain; every state
switch emits a context event marked ``"c<state>"``.  Target events follow
either an inhomogeneous Poisson process whose rate is a per-state constant,
or a renewal process whose inter-event gaps are Gamma distributed with
per-state (shape, rate) parameters frozen at the time of the previous
target event (span start acts as a virtual previous event; an in-flight
gap is not resampled when the state switches).

The Poisson process is sampled exactly segment by segment, not by thinning:
within each constant-state segment the event count is Poisson and the times
are uniform.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property

import numpy as np

from .events import TARGET_MARK, Dataset, EventSequence, MarkedEvent, sorted_events
from .seeding import derive_seed

__all__ = [
    "CtmcSpec",
    "PoissonSpec",
    "GammaSpec",
    "ContextTrajectory",
    "sample_ctmc",
    "sample_poisson_targets",
    "sample_gamma_targets",
    "simulate_dataset",
    "DEFAULT_CTMC",
    "DEFAULT_POISSON",
    "DEFAULT_GAMMA",
]


@dataclass(frozen=True)
class CtmcSpec:
    """Generator matrix and initial distribution of the context chain.

    ``rates`` is the square generator Q: off-diagonal entries are
    transition rates (>= 0) and each row sums to zero.  ``initial`` is the
    initial-state distribution; ``None`` means uniform.
    """

    rates: tuple
    initial: tuple | None = None

    def __post_init__(self) -> None:
        q = np.asarray(self.rates, dtype=np.float64)
        if q.ndim != 2 or q.shape[0] != q.shape[1] or q.shape[0] < 1:
            raise ValueError(f"Q must be a square matrix, got shape {q.shape}")
        off = q - np.diag(np.diag(q))
        if np.any(off < 0):
            raise ValueError("off-diagonal rates must be >= 0")
        if np.any(np.abs(q.sum(axis=1)) > 1e-9 * max(1.0, np.abs(q).max())):
            raise ValueError("each Q row must sum to 0")
        object.__setattr__(self, "rates", tuple(map(tuple, q.tolist())))
        if self.initial is not None:
            p = np.asarray(self.initial, dtype=np.float64)
            if p.shape != (q.shape[0],) or np.any(p < 0) or not math.isclose(p.sum(), 1.0, rel_tol=1e-9):
                raise ValueError("initial must be a distribution over the states")
            object.__setattr__(self, "initial", tuple(p.tolist()))

    @property
    def n_states(self) -> int:
        return len(self.rates)

    @cached_property
    def q(self) -> np.ndarray:
        out = np.asarray(self.rates, dtype=np.float64)
        out.flags.writeable = False
        return out

    @cached_property
    def initial_probs(self) -> np.ndarray:
        if self.initial is None:
            out = np.full(self.n_states, 1.0 / self.n_states)
        else:
            out = np.asarray(self.initial, dtype=np.float64)
        out.flags.writeable = False
        return out

    @property
    def context_marks(self) -> tuple:
        return tuple(f"c{k}" for k in range(self.n_states))


@dataclass(frozen=True)
class PoissonSpec:
    """Per-state target intensities for the piecewise-constant Poisson process."""

    rates: tuple

    def __post_init__(self) -> None:
        rates = tuple(float(r) for r in self.rates)
        if not rates or any(r < 0 or not math.isfinite(r) for r in rates):
            raise ValueError(f"rates must be finite and >= 0, got {self.rates}")
        object.__setattr__(self, "rates", rates)

    @property
    def n_states(self) -> int:
        return len(self.rates)


@dataclass(frozen=True)
class GammaSpec:
    """Per-state (shape, rate) of the Gamma renewal gap distribution."""

    params: tuple

    def __post_init__(self) -> None:
        params = tuple((float(a), float(b)) for a, b in self.params)
        if not params or any(a <= 0 or b <= 0 for a, b in params):
            raise ValueError(f"shape and rate must be > 0, got {self.params}")
        object.__setattr__(self, "params", params)

    @property
    def n_states(self) -> int:
        return len(self.params)


@dataclass(frozen=True)
class ContextTrajectory:
    """A piecewise-constant state path on a span.

    ``switches`` lists (time, new state) strictly increasing inside the
    span.  The path is right-continuous: at a switch time the new state is
    already active, consistent with the context-before-target tie rule.
    """

    begin: float
    end: float
    initial_state: int
    switches: tuple

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "switches", tuple((float(t), int(s)) for t, s in self.switches)
        )
        prev: float | None = None
        for t, _ in self.switches:
            if not (self.begin < t < self.end):
                raise ValueError(f"switch at t={t} outside span ({self.begin}, {self.end})")
            if prev is not None and t <= prev:
                raise ValueError("switch times must be strictly increasing")
            prev = t

    @cached_property
    def _times(self) -> np.ndarray:
        out = np.array([t for t, _ in self.switches], dtype=np.float64)
        out.flags.writeable = False
        return out

    @cached_property
    def _states(self) -> np.ndarray:
        out = np.array([self.initial_state, *(s for _, s in self.switches)], dtype=np.int64)
        out.flags.writeable = False
        return out

    def state_at(self, t) -> np.ndarray:
        """State of the right-continuous path at time(s) t."""
        idx = np.searchsorted(self._times, np.asarray(t, dtype=np.float64), side="right")
        return self._states[idx]

    def segments(self):
        """Yield (start, end, state) covering [begin, end]."""
        bounds = [self.begin, *(t for t, _ in self.switches), self.end]
        for k in range(len(bounds) - 1):
            if bounds[k] < bounds[k + 1]:
                yield bounds[k], bounds[k + 1], int(self._states[k])

    def context_events(self) -> list[MarkedEvent]:
        return [MarkedEvent(t, f"c{s}") for t, s in self.switches]


def sample_ctmc(spec: CtmcSpec, span: tuple, seed: int) -> ContextTrajectory:
    """Sample a context path: exponential holds, jump chain proportional to Q.

    A state whose exit rate is zero is absorbing; the path then stays there
    for the rest of the span.
    """
    begin, end = float(span[0]), float(span[1])
    rng = np.random.default_rng(seed)
    q = spec.q
    state = int(rng.choice(spec.n_states, p=spec.initial_probs))
    initial = state
    switches: list[tuple[float, int]] = []
    t = begin
    while True:
        exit_rate = -q[state, state]
        if exit_rate <= 0:
            break
        t += rng.exponential(1.0 / exit_rate)
        if t >= end:
            break
        probs = q[state].copy()
        probs[state] = 0.0
        probs /= probs.sum()
        state = int(rng.choice(spec.n_states, p=probs))
        switches.append((t, state))
    return ContextTrajectory(begin, end, initial, tuple(switches))


def sample_poisson_targets(spec: PoissonSpec, traj: ContextTrajectory, seed: int) -> np.ndarray:
    """Exact sampling of the piecewise-constant-rate Poisson target process."""
    rng = np.random.default_rng(seed)
    times: list[np.ndarray] = []
    for start, stop, state in traj.segments():
        lam = spec.rates[state]
        if lam <= 0:
            continue
        n = rng.poisson(lam * (stop - start))
        if n:
            times.append(rng.uniform(start, stop, size=n))
    if not times:
        return np.empty(0, dtype=np.float64)
    return np.sort(np.concatenate(times))


def sample_gamma_targets(spec: GammaSpec, traj: ContextTrajectory, seed: int) -> np.ndarray:
    """Gamma renewal target process modulated by the context state.

    Each gap is drawn with the (shape, rate) of the state at the previous
    target event; the span start is the virtual first origin.  Events past
    the span end are discarded, ending the sequence.
    """
    rng = np.random.default_rng(seed)
    times: list[float] = []
    t = traj.begin
    while True:
        a, b = spec.params[int(traj.state_at(t))]
        t = t + rng.gamma(a, 1.0 / b)
        if t >= traj.end:
            break
        times.append(t)
    return np.asarray(times, dtype=np.float64)


DEFAULT_CTMC = CtmcSpec(rates=((-0.05, 0.05), (0.05, -0.05)))
DEFAULT_POISSON = PoissonSpec(rates=(0.1, 1.0))
DEFAULT_GAMMA = GammaSpec(params=((10.0, 10.0), (100.0, 10.0)))


def simulate_dataset(
    kind: str,
    n_sequences: int,
    span: tuple,
    seed: int,
    *,
    ctmc: CtmcSpec = DEFAULT_CTMC,
    poisson: PoissonSpec = DEFAULT_POISSON,
    gamma: GammaSpec = DEFAULT_GAMMA,
) -> Dataset:
    """Simulate an outlier-free dataset of ``n_sequences`` sequences.

    ``kind`` selects the target process ("poisson" or "gamma").  Each
    sequence gets its own derived seeds, so the dataset is reproducible and
    sequences are independent.
    """
    if kind not in ("poisson", "gamma"):
        raise ValueError(f'kind must be "poisson" or "gamma", got {kind!r}')
    if n_sequences < 1:
        raise ValueError("n_sequences must be >= 1")
    target_spec = poisson if kind == "poisson" else gamma
    if target_spec.n_states != ctmc.n_states:
        raise ValueError(
            f"target spec covers {target_spec.n_states} states, chain has {ctmc.n_states}"
        )
    items = []
    width = max(3, len(str(n_sequences - 1)))
    for i in range(n_sequences):
        traj = sample_ctmc(ctmc, span, derive_seed(seed, "ctmc", i))
        target_seed = derive_seed(seed, "targets", i)
        if kind == "poisson":
            target_times = sample_poisson_targets(poisson, traj, target_seed)
        else:
            target_times = sample_gamma_targets(gamma, traj, target_seed)
        events = sorted_events(
            traj.context_events() + [MarkedEvent(float(t), TARGET_MARK) for t in target_times]
        )
        seq = EventSequence(f"{kind}-{i:0{width}d}", float(span[0]), float(span[1]), events)
        items.append((seq, None))
    return Dataset(ctmc.context_marks, tuple(items))
