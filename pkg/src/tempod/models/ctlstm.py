"""Trainable continuous-time LSTM intensity model.

The recurrence consumes the input events of a sequence (the combined
context + target stream, or the target stream alone, depending on the
view) and maintains a cell state that decays between events: after
event i the cell relaxes from ``c`` toward a limit ``cbar`` at
elementwise rate ``delta``, the hidden state is
``o * tanh(c(t))``, and the target intensity is a scaled softplus of a
linear readout, which keeps it positive everywhere.  Before the first
input event the model sits in a fixed rest state whose intensity is
``scale * log 2``.

Likelihood integrals are estimated by stratified Monte-Carlo: each
inter-input-event segment is cut into strata no longer than the
reciprocal of the configured samples-per-unit rate and one uniform
point is drawn per stratum.  Training draws fresh points each
iteration from the seed chain; scoring-time integrals reseed per
(sequence, interval) so a score does not depend on what else is in the
batch.

Everything numeric runs in float64 through the kernels in
``_ctlstm_kernels``; gradients are exact reverse-mode derivatives of
the Monte-Carlo objective, so they check out against finite
differences under common random numbers.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np
from scipy.special import expit

from ..events import TARGET_MARK, Dataset, EventSequence, History
from ..seeding import derive_rng, derive_seed
from .base import VIEW_COMBINED, VIEW_TARGET, CifModel
from ._ctlstm_kernels import N_GATES, eval_lambda, seq_ll_grad, seq_states

__all__ = [
    "TrainConfig",
    "TrainLogEntry",
    "SizeRun",
    "TrainResult",
    "TrainingDiverged",
    "CtLstmModel",
    "CtLstmTrajectory",
    "param_count",
    "ctlstm_forward",
    "ctlstm_value",
    "ctlstm_gradient",
    "ctlstm_train",
]

#: iterations between validation evaluations and log entries
EVAL_EVERY = 10

_INIT_SCALE = 0.1
_ADAM_BETA1 = 0.9
_ADAM_BETA2 = 0.999
_ADAM_EPS = 1e-8


class TrainingDiverged(RuntimeError):
    """Raised when the training objective becomes non-finite."""


@dataclass(frozen=True)
class TrainConfig:
    """Knobs for :func:`ctlstm_train`.

    ``mc_samples_per_unit`` of ``None`` means match the empirical
    target rate of the training data, which makes the average stratum
    one expected inter-event gap long.
    """

    hidden_grid: tuple[int, ...] = (8, 16, 32)
    val_fraction: float = 0.2
    mc_samples_per_unit: float | None = None
    step_size: float = 1e-2
    budget: int = 2000
    patience: int = 50
    seed: int = 0
    tolerance: float = 1e-4

    def __post_init__(self) -> None:
        grid = tuple(int(h) for h in self.hidden_grid)
        if not grid or any(h < 1 for h in grid):
            raise ValueError(f"hidden_grid must be positive sizes, got {self.hidden_grid}")
        object.__setattr__(self, "hidden_grid", grid)
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError(f"val_fraction must be in (0, 1), got {self.val_fraction}")
        if self.mc_samples_per_unit is not None and self.mc_samples_per_unit <= 0:
            raise ValueError("mc_samples_per_unit must be positive or None")
        if self.step_size <= 0:
            raise ValueError(f"step_size must be positive, got {self.step_size}")
        if self.budget < 1 or self.patience < 1:
            raise ValueError("budget and patience must be >= 1")
        if self.tolerance < 0:
            raise ValueError(f"tolerance must be >= 0, got {self.tolerance}")

    def to_dict(self) -> dict:
        return {
            "hidden_grid": list(self.hidden_grid),
            "val_fraction": self.val_fraction,
            "mc_samples_per_unit": self.mc_samples_per_unit,
            "step_size": self.step_size,
            "budget": self.budget,
            "patience": self.patience,
            "seed": self.seed,
            "tolerance": self.tolerance,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TrainConfig":
        known = {f: data[f] for f in cls.__dataclass_fields__ if f in data}
        extra = set(data) - set(known)
        if extra:
            raise ValueError(f"unknown training config keys: {sorted(extra)}")
        if "hidden_grid" in known:
            known["hidden_grid"] = tuple(known["hidden_grid"])
        return cls(**known)


class TrainLogEntry(NamedTuple):
    iteration: int
    train_nll: float
    val_nll: float


@dataclass(frozen=True)
class SizeRun:
    """Outcome of training one hidden size from the grid."""

    hidden: int
    val_nll: float
    iterations: int
    log: tuple[TrainLogEntry, ...]

    def to_dict(self) -> dict:
        return {
            "hidden": self.hidden,
            "val_nll": self.val_nll,
            "iterations": self.iterations,
            "log": [[e.iteration, e.train_nll, e.val_nll] for e in self.log],
        }


@dataclass(frozen=True)
class TrainResult:
    model: "CtLstmModel"
    runs: tuple[SizeRun, ...]

    @property
    def selected(self) -> SizeRun:
        for run in self.runs:
            if run.hidden == self.model.hidden:
                return run
        raise LookupError(f"no run for hidden size {self.model.hidden}")

    def to_dict(self) -> dict:
        return {
            "selected_hidden": self.model.hidden,
            "runs": [run.to_dict() for run in self.runs],
        }


def param_count(n_marks: int, hidden: int) -> int:
    g7 = N_GATES * hidden
    return n_marks * hidden + 2 * g7 * hidden + g7 + hidden + 1


class _ParamViews(NamedTuple):
    emb: np.ndarray
    w_in: np.ndarray
    w_rec: np.ndarray
    bias: np.ndarray
    w_out: np.ndarray


def _unpack(vec: np.ndarray, n_marks: int, hidden: int) -> _ParamViews:
    """Reshaped views into a flat parameter vector (raw scale excluded).

    The raw softplus scale parameter is the last entry of the vector
    and is read separately because it must be re-read after in-place
    updates.
    """
    d = hidden
    g7 = N_GATES * d
    a = 0
    emb = vec[a:a + n_marks * d].reshape(n_marks, d)
    a += n_marks * d
    w_in = vec[a:a + g7 * d].reshape(g7, d)
    a += g7 * d
    w_rec = vec[a:a + g7 * d].reshape(g7, d)
    a += g7 * d
    bias = vec[a:a + g7]
    a += g7
    w_out = vec[a:a + d]
    return _ParamViews(emb, w_in, w_rec, bias, w_out)


class _McGrid(NamedTuple):
    """Fixed stratification of a union of segments; only the uniform
    draw inside each stratum changes between samplings."""

    lo: np.ndarray
    hi: np.ndarray
    widths: np.ndarray
    intervals: np.ndarray

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lo, self.hi)


def _strata_grid(edges: np.ndarray, base_interval: int, per_unit: float) -> _McGrid:
    """Strata of width <= 1/per_unit covering each segment between
    consecutive edges; segment j belongs to interval base_interval + j."""
    lengths = np.diff(edges)
    keep = lengths > 0.0
    seg_idx = np.nonzero(keep)[0]
    lengths = lengths[keep]
    counts = np.maximum(1, np.ceil(lengths * per_unit)).astype(np.int64)
    widths_per_seg = lengths / counts
    widths = np.repeat(widths_per_seg, counts)
    intervals = np.repeat(base_interval + seg_idx, counts)
    starts = np.repeat(edges[:-1][keep], counts)
    offsets = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    lo = starts + offsets * widths
    return _McGrid(lo, lo + widths, widths, intervals)


class _StateCache(NamedTuple):
    c: np.ndarray
    cbar: np.ndarray
    delta: np.ndarray
    ogate: np.ndarray
    hev: np.ndarray


@dataclass(frozen=True, eq=False)
class CtLstmModel(CifModel):
    """Trained continuous-time LSTM as a conditional-intensity model.

    ``marks`` fixes the embedding row per mark (the target mark is
    always present; a target-view model knows only the target mark).
    ``params`` is the flat parameter vector laid out as
    [embeddings, input weights, recurrent weights, bias, output
    weights, raw scale].
    """

    marks: tuple[str, ...]
    hidden: int
    params: np.ndarray
    view: str = VIEW_COMBINED
    mc_samples_per_unit: float = 1.0
    mc_seed: int = 0
    train_config: TrainConfig | None = None

    def __post_init__(self) -> None:
        if self.view not in (VIEW_COMBINED, VIEW_TARGET):
            raise ValueError(f"unknown view {self.view!r}")
        marks = tuple(self.marks)
        object.__setattr__(self, "marks", marks)
        if TARGET_MARK not in marks:
            raise ValueError(f"mark table must include {TARGET_MARK!r}")
        if len(set(marks)) != len(marks):
            raise ValueError("duplicate marks in mark table")
        if self.view == VIEW_TARGET and marks != (TARGET_MARK,):
            raise ValueError("a target-view model knows only the target mark")
        if self.hidden < 1:
            raise ValueError(f"hidden size must be >= 1, got {self.hidden}")
        vec = np.ascontiguousarray(np.asarray(self.params, dtype=np.float64).ravel())
        expected = param_count(len(marks), self.hidden)
        if vec.size != expected:
            raise ValueError(f"expected {expected} parameters, got {vec.size}")
        if not np.all(np.isfinite(vec)):
            raise ValueError("parameters must be finite")
        vec.flags.writeable = False
        object.__setattr__(self, "params", vec)
        if not self.mc_samples_per_unit > 0:
            raise ValueError("mc_samples_per_unit must be positive")

    # -- parameter access --------------------------------------------------

    @cached_property
    def _views(self) -> _ParamViews:
        return _unpack(self.params, len(self.marks), self.hidden)

    @property
    def scale(self) -> float:
        """The softplus scale s > 0 of the intensity head."""
        return float(np.logaddexp(0.0, self.params[-1]))

    @cached_property
    def _mark_index(self) -> dict[str, int]:
        return {mark: i for i, mark in enumerate(self.marks)}

    # -- input preparation -------------------------------------------------

    def _arrays_from_events(self, events) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        if self.view == VIEW_TARGET:
            events = [ev for ev in events if ev.is_target]
        times = np.empty(len(events), dtype=np.float64)
        marks = np.empty(len(events), dtype=np.int64)
        targets = []
        index = self._mark_index
        for i, ev in enumerate(events):
            times[i] = ev.t
            try:
                marks[i] = index[ev.mark]
            except KeyError:
                raise ValueError(f"mark {ev.mark!r} unknown to this model") from None
            if ev.is_target:
                targets.append(i)
        return times, marks, np.asarray(targets, dtype=np.int64)

    def _arrays(self, seq: EventSequence) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self._arrays_from_events(seq.events)

    def _states(self, begin: float, times: np.ndarray, marks: np.ndarray) -> _StateCache:
        views = self._views
        proj = np.ascontiguousarray(views.emb @ views.w_in.T + views.bias)
        status, bad, c, cbar, delta, ogate, hev, *_ = seq_states(
            begin, times, marks, proj, views.w_rec, self.hidden)
        if status != 0:
            raise FloatingPointError(f"non-finite hidden state after input event {bad}")
        return _StateCache(c, cbar, delta, ogate, hev)

    def _eval(self, begin: float, times: np.ndarray, st: _StateCache,
              ts: np.ndarray, ivs: np.ndarray) -> np.ndarray:
        lam, *_ = eval_lambda(begin, times, ts, ivs,
                              st.c, st.cbar, st.delta, st.ogate,
                              self._views.w_out, self.scale)
        return lam

    # -- CifModel interface ------------------------------------------------

    def intensity(self, t: float, history: History) -> float:
        seq = history.sequence
        if self.view == VIEW_TARGET:
            events = [ev for ev in history.events() if ev.is_target]
        else:
            events = list(history.events())
        times, marks, _ = self._arrays_from_events(events)
        # left limit: an event exactly at t conditions lambda(t) only
        # if it is a context event (the tie rule sorts it first)
        before = sum(1 for ev in events if ev.t < t or (ev.t == t and not ev.is_target))
        st = self._states(seq.begin, times, marks)
        lam = self._eval(seq.begin, times, st,
                         np.array([t], dtype=np.float64),
                         np.array([before], dtype=np.int64))
        return float(lam[0])

    def cumulative(self, begin: float, end: float, history: History) -> float:
        if end < begin:
            raise ValueError(f"end {end} before begin {begin}")
        if end == begin:
            return 0.0
        seq = history.sequence
        events = [ev for ev in history.events() if ev.t <= begin]
        times, marks, _ = self._arrays_from_events(events)
        st = self._states(seq.begin, times, marks)
        grid = _strata_grid(np.array([begin, end]), len(times), self.mc_samples_per_unit)
        rng = derive_rng(self.mc_seed, "cumulative", seq.id,
                         repr(float(begin)), repr(float(end)))
        lam = self._eval(seq.begin, times, st, grid.sample(rng), grid.intervals)
        return float(np.dot(grid.widths, lam))

    # -- batch paths (one forward pass per sequence) -----------------------

    def event_intensities(self, seq: EventSequence) -> np.ndarray:
        times, marks, ev_pos = self._arrays(seq)
        st = self._states(seq.begin, times, marks)
        if ev_pos.size == 0:
            return np.empty(0, dtype=np.float64)
        x = st.hev[ev_pos] @ self._views.w_out
        s = self.scale
        return s * np.logaddexp(0.0, x / s)

    def interval_integrals(self, seq: EventSequence, bounds: np.ndarray) -> np.ndarray:
        """Filtration integrals: input events inside (begin, end) update
        the state along the way, exactly as an online scorer would see
        them."""
        bounds = np.asarray(bounds, dtype=np.float64)
        times, marks, _ = self._arrays(seq)
        st = self._states(seq.begin, times, marks)
        out = np.empty(len(bounds), dtype=np.float64)
        for k, (b, e) in enumerate(bounds):
            if e < b:
                raise ValueError(f"end {e} before begin {b}")
            if e == b:
                out[k] = 0.0
                continue
            i0 = int(np.searchsorted(times, b, side="right"))
            i1 = int(np.searchsorted(times, e, side="left"))
            edges = np.concatenate(([b], times[i0:i1], [e]))
            grid = _strata_grid(edges, i0, self.mc_samples_per_unit)
            rng = derive_rng(self.mc_seed, "cumulative", seq.id,
                             repr(float(b)), repr(float(e)))
            lam = self._eval(seq.begin, times, st, grid.sample(rng), grid.intervals)
            out[k] = float(np.dot(grid.widths, lam))
        return out

    def to_config(self) -> dict:
        views = self._views
        named = {
            "embeddings": views.emb,
            "input_weights": views.w_in,
            "recurrent_weights": views.w_rec,
            "bias": views.bias,
            "output_weights": views.w_out,
            "scale_raw": self.params[-1:],
        }
        return {
            "kind": "ctlstm",
            "view": self.view,
            "marks": list(self.marks),
            "hidden": self.hidden,
            "params": {
                name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
                for name, arr in named.items()
            },
            "mc_samples_per_unit": self.mc_samples_per_unit,
            "mc_seed": self.mc_seed,
            "train_config": None if self.train_config is None else self.train_config.to_dict(),
        }

    @classmethod
    def from_config(cls, config: dict) -> "CtLstmModel":
        marks = tuple(config["marks"])
        hidden = int(config["hidden"])
        parts = config["params"]
        order = ["embeddings", "input_weights", "recurrent_weights",
                 "bias", "output_weights", "scale_raw"]
        missing = [name for name in order if name not in parts]
        if missing:
            raise ValueError(f"missing parameter blocks: {missing}")
        vec = np.concatenate([np.asarray(parts[name]["data"], dtype=np.float64)
                              for name in order])
        tc = config.get("train_config")
        return cls(
            marks=marks,
            hidden=hidden,
            params=vec,
            view=config["view"],
            mc_samples_per_unit=float(config["mc_samples_per_unit"]),
            mc_seed=int(config["mc_seed"]),
            train_config=None if tc is None else TrainConfig.from_dict(tc),
        )


# -- trajectory inspection -------------------------------------------------


@dataclass(frozen=True, eq=False)
class CtLstmTrajectory:
    """Per-interval states of one sequence, for inspection and tests.

    ``times`` are the input event times; interval j covers
    (times[j-1], times[j]] and row j of each state array applies there.
    """

    begin: float
    end: float
    times: np.ndarray
    c: np.ndarray
    cbar: np.ndarray
    delta: np.ndarray
    ogate: np.ndarray
    w_out: np.ndarray
    scale: float

    @property
    def n_intervals(self) -> int:
        return len(self.times) + 1

    def interval_of(self, ts) -> np.ndarray:
        return np.searchsorted(self.times, np.asarray(ts, dtype=np.float64), side="left")

    def cell_at(self, t: float) -> np.ndarray:
        """c(t): decays from c toward cbar within the interval."""
        j = int(self.interval_of(t))
        anchor = self.begin if j == 0 else self.times[j - 1]
        decay = np.exp(-self.delta[j] * (t - anchor))
        return self.cbar[j] + (self.c[j] - self.cbar[j]) * decay

    def intensity_at(self, ts) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(ts, dtype=np.float64))
        ivs = self.interval_of(ts)
        lam, *_ = eval_lambda(self.begin, self.times, ts, ivs,
                              self.c, self.cbar, self.delta, self.ogate,
                              self.w_out, self.scale)
        return lam


def ctlstm_forward(model: CtLstmModel, seq: EventSequence) -> CtLstmTrajectory:
    """Run the recurrence over the sequence and return the state path."""
    times, marks, _ = model._arrays(seq)
    st = model._states(seq.begin, times, marks)
    return CtLstmTrajectory(
        begin=seq.begin, end=seq.end, times=times,
        c=st.c, cbar=st.cbar, delta=st.delta, ogate=st.ogate,
        w_out=model._views.w_out.copy(), scale=model.scale)


# -- likelihood value and gradient ----------------------------------------


def _sequence_grid(times: np.ndarray, begin: float, end: float, per_unit: float) -> _McGrid:
    edges = np.concatenate(([begin], times, [end]))
    return _strata_grid(edges, 0, per_unit)


def _ll_grad_raw(vec: np.ndarray, n_marks: int, hidden: int,
                 begin: float, times: np.ndarray, marks: np.ndarray,
                 ev_pos: np.ndarray, pts: np.ndarray, ivs: np.ndarray,
                 widths: np.ndarray):
    views = _unpack(vec, n_marks, hidden)
    s = float(np.logaddexp(0.0, vec[-1]))
    status, bad, ll, gemb, gwxc, gwhc, gbc, gw, gs = seq_ll_grad(
        begin, times, marks, ev_pos, pts, ivs, widths,
        views.emb, views.w_in, views.w_rec, views.bias, views.w_out, s)
    if status != 0:
        raise FloatingPointError(f"non-finite hidden state after input event {bad}")
    grad = np.empty_like(vec)
    g = _unpack(grad, n_marks, hidden)
    g.emb[:] = gemb
    g.w_in[:] = gwxc
    g.w_rec[:] = gwhc
    g.bias[:] = gbc
    g.w_out[:] = gw
    grad[-1] = gs * expit(vec[-1])
    return ll, grad


def _model_mc(model: CtLstmModel, seq: EventSequence, times: np.ndarray,
              mc_seed: int) -> tuple[_McGrid, np.ndarray]:
    grid = _sequence_grid(times, seq.begin, seq.end, model.mc_samples_per_unit)
    rng = derive_rng(mc_seed, "likelihood-mc", seq.id)
    return grid, grid.sample(rng)


def ctlstm_value(model: CtLstmModel, seq: EventSequence, *, mc_seed: int = 0) -> float:
    """Monte-Carlo log-likelihood with points fixed by ``mc_seed``.

    Uses the same point set as :func:`ctlstm_gradient` for the same
    seed, so finite differences of this value match the gradient.
    """
    ll, _ = ctlstm_gradient(model, seq, mc_seed=mc_seed)
    return ll


def ctlstm_gradient(model: CtLstmModel, seq: EventSequence,
                    *, mc_seed: int = 0) -> tuple[float, np.ndarray]:
    """Log-likelihood and its exact gradient for one sequence.

    The gradient is of the Monte-Carlo objective itself (common random
    numbers drawn from ``mc_seed``), flat in the model's parameter
    layout.
    """
    times, marks, ev_pos = model._arrays(seq)
    grid, pts = _model_mc(model, seq, times, mc_seed)
    return _ll_grad_raw(model.params, len(model.marks), model.hidden,
                        seq.begin, times, marks, ev_pos,
                        pts, grid.intervals, grid.widths)


# -- training --------------------------------------------------------------


class _SeqData(NamedTuple):
    begin: float
    end: float
    times: np.ndarray
    marks: np.ndarray
    ev_pos: np.ndarray
    grid: _McGrid


def _prepare(seqs, marks: tuple[str, ...], view: str, per_unit: float) -> list[_SeqData]:
    probe = CtLstmModel(marks=marks, hidden=1,
                        params=np.zeros(param_count(len(marks), 1)),
                        view=view, mc_samples_per_unit=per_unit)
    out = []
    for seq in seqs:
        times, midx, ev_pos = probe._arrays(seq)
        grid = _sequence_grid(times, seq.begin, seq.end, per_unit)
        out.append(_SeqData(seq.begin, seq.end, times, midx, ev_pos, grid))
    return out


def ctlstm_train(data: Dataset, config: TrainConfig,
                 view: str = VIEW_COMBINED) -> TrainResult:
    """Fit the model by full-batch adaptive gradient ascent on the
    Monte-Carlo log-likelihood.

    An internal validation split (``config.val_fraction`` of the
    sequences, at least one, drawn from the seed chain) drives early
    stopping and the hidden-size choice: each size in the grid is
    trained until its validation NLL stops improving for
    ``config.patience`` iterations or the budget runs out, and the size
    with the lowest validation NLL wins.  Validation uses one fixed
    point set so values are comparable across iterations and sizes.

    Returns the selected model plus per-size logs of
    (iteration, train NLL, validation NLL).
    """
    seqs = data.sequences
    if len(seqs) < 2:
        raise ValueError("training needs at least two sequences for the internal validation split")
    if view == VIEW_TARGET:
        marks = (TARGET_MARK,)
    else:
        marks = tuple(data.context_marks) + (TARGET_MARK,)
    total_span = sum(seq.end - seq.begin for seq in seqs)
    total_events = sum(seq.n_target for seq in seqs)
    rate = max(total_events / total_span, 1e-3)
    per_unit = config.mc_samples_per_unit if config.mc_samples_per_unit is not None else rate
    prepared = _prepare(seqs, marks, view, per_unit)

    order = derive_rng(config.seed, "validation-split").permutation(len(seqs))
    n_val = min(max(1, round(config.val_fraction * len(seqs))), len(seqs) - 1)
    val_idx = np.sort(order[:n_val])
    train_idx = np.sort(order[n_val:])

    val_rng = derive_rng(config.seed, "validation-mc")
    val_pts = {int(i): prepared[i].grid.sample(val_rng) for i in val_idx}

    nm = len(marks)
    rho0 = float(np.log(np.expm1(rate / np.log(2.0))))

    def batch(vec: np.ndarray, hidden: int, indices: np.ndarray, pts_for) -> tuple[float, np.ndarray]:
        nll = 0.0
        grad = np.zeros_like(vec)
        for i in indices:
            sd = prepared[int(i)]
            ll, g = _ll_grad_raw(vec, nm, hidden, sd.begin, sd.times, sd.marks,
                                 sd.ev_pos, pts_for(int(i)), sd.grid.intervals,
                                 sd.grid.widths)
            nll -= ll
            grad -= g
        return nll, grad

    runs: list[SizeRun] = []
    winners: dict[int, np.ndarray] = {}
    for hidden in config.hidden_grid:
        init_rng = derive_rng(config.seed, "init", hidden)
        vec = init_rng.uniform(-_INIT_SCALE, _INIT_SCALE, param_count(nm, hidden))
        views = _unpack(vec, nm, hidden)
        views.bias[:] = 0.0
        vec[-1] = rho0

        m = np.zeros_like(vec)
        v = np.zeros_like(vec)
        best_val = np.inf
        best_vec = vec.copy()
        best_it = 0
        log: list[TrainLogEntry] = []
        it = -1
        for it in range(config.budget):
            epoch_rng = derive_rng(config.seed, "epoch-mc", hidden, it)
            epoch_pts = {int(i): prepared[int(i)].grid.sample(epoch_rng) for i in train_idx}
            nll, grad = batch(vec, hidden, train_idx, epoch_pts.__getitem__)
            if not np.isfinite(nll):
                raise TrainingDiverged(
                    f"training NLL became non-finite at iteration {it} (hidden size {hidden})")
            if it % EVAL_EVERY == 0:
                val_nll = 0.0
                for i in val_idx:
                    sd = prepared[int(i)]
                    ll, _ = _ll_grad_raw(vec, nm, hidden, sd.begin, sd.times,
                                         sd.marks, sd.ev_pos, val_pts[int(i)],
                                         sd.grid.intervals, sd.grid.widths)
                    val_nll -= ll
                if not np.isfinite(val_nll):
                    raise TrainingDiverged(
                        f"validation NLL became non-finite at iteration {it} (hidden size {hidden})")
                log.append(TrainLogEntry(it, nll, val_nll))
                improved = (not np.isfinite(best_val)
                            or val_nll < best_val - config.tolerance * abs(best_val))
                if improved:
                    best_val = val_nll
                    best_vec = vec.copy()
                    best_it = it
                elif it - best_it >= config.patience:
                    break
            step = it + 1
            m = _ADAM_BETA1 * m + (1.0 - _ADAM_BETA1) * grad
            v = _ADAM_BETA2 * v + (1.0 - _ADAM_BETA2) * grad * grad
            mhat = m / (1.0 - _ADAM_BETA1 ** step)
            vhat = v / (1.0 - _ADAM_BETA2 ** step)
            vec -= config.step_size * mhat / (np.sqrt(vhat) + _ADAM_EPS)
        runs.append(SizeRun(hidden, float(best_val), it + 1, tuple(log)))
        winners[hidden] = best_vec

    chosen = min(runs, key=lambda run: run.val_nll).hidden
    model = CtLstmModel(
        marks=marks,
        hidden=chosen,
        params=winners[chosen],
        view=view,
        mc_samples_per_unit=per_unit,
        mc_seed=derive_seed(config.seed, "scoring-mc"),
        train_config=config,
    )
    return TrainResult(model=model, runs=tuple(runs))
