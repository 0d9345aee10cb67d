"""Staged experiment pipeline with validated configs and manifests.

Each stage (simulate, inject, train, detect, evaluate, verify-bounds,
and the full run) is a function from a pydantic config plus input data
to a dict of output files, rendered as text so callers can write them
anywhere.  Every stage emits a ``manifest.json`` naming the command,
the resolved config, its hash, the seed, and the package version; a
rerun from a manifest's config reproduces the output files byte for
byte because no stage records timestamps, paths, or machine state.

The full experiment run follows the evaluation protocol: simulate,
split, inject the test half per outlier type and schedule, fit each
requested method on the train half, score, and tabulate AUROC per
(setting, method) over repetitions.  Repetitions use derived seeds and
may run in parallel; aggregation order is fixed so the result does not
depend on the worker count.
"""

from __future__ import annotations

import hashlib
import json
from concurrent.futures import ProcessPoolExecutor
from typing import Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from . import __version__
from .detect import KIND_COMMISSION, KIND_OMISSION, RandomScorer, items_to_csv, run_detection
from .evaluate import BoundReport, auroc, outlier_ratio, verify_bounds
from .events import Dataset, dataset_to_jsonl, split_train_test
from .inject import (
    RateSchedule,
    empirical_rate,
    inject_commission,
    inject_omission,
    schedule_from_config,
)
from .models import (
    GroundTruthGamma,
    GroundTruthPoisson,
    TrainConfig,
    ctlstm_train,
    len_fit,
    model_to_dict,
)
from .seeding import derive_seed
from .simulate import (
    DEFAULT_CTMC,
    DEFAULT_GAMMA,
    DEFAULT_POISSON,
    CtmcSpec,
    GammaSpec,
    PoissonSpec,
)

__all__ = [
    "StageError",
    "ScheduleSpec",
    "ProcessSpec",
    "SimulateConfig",
    "InjectConfig",
    "TrainJobConfig",
    "DetectConfig",
    "VerifyConfig",
    "ExperimentConfig",
    "config_digest",
    "build_manifest",
    "manifest_json",
    "stage_simulate",
    "stage_inject",
    "stage_train",
    "stage_detect",
    "evaluate_items",
    "stage_evaluate",
    "stage_verify_bounds",
    "bound_curves_csv",
    "run_experiment",
]

METHODS = ("RND", "LEN", "PPOD", "CPPOD", "GT")

_VIEW_OF_METHOD = {"PPOD": "target", "CPPOD": "combined"}


class StageError(RuntimeError):
    """A pipeline stage failed; the message names the stage."""


class _StrictModel(BaseModel):
    model_config = ConfigDict(extra="forbid")


class ScheduleSpec(_StrictModel):
    """Outlier-rate schedule description.

    The piecewise kind needs a seed for its step heights; leaving it
    unset lets the enclosing stage derive one from its own seed chain.
    """

    kind: Literal["constant", "periodic", "piecewise"]
    alpha0: float = Field(gt=0)
    period: Optional[float] = Field(default=None, gt=0)
    step: Optional[float] = Field(default=None, gt=0)
    seed: Optional[int] = None

    @model_validator(mode="after")
    def _check_kind_fields(self) -> "ScheduleSpec":
        if self.kind == "periodic" and self.period is None:
            raise ValueError("periodic schedule needs a period")
        if self.kind == "piecewise" and self.step is None:
            raise ValueError("piecewise schedule needs a step length")
        return self

    def build(self, fallback_seed: int) -> RateSchedule:
        config = {"kind": self.kind, "alpha0": self.alpha0}
        if self.kind == "periodic":
            config["period"] = self.period
        elif self.kind == "piecewise":
            config["step"] = self.step
            config["seed"] = self.seed if self.seed is not None else fallback_seed
        return schedule_from_config(config)


class ProcessSpec(_StrictModel):
    """Synthetic generator: a context chain plus a state-modulated
    target process ("poisson" rates or "gamma" shape/rate pairs)."""

    process: Literal["poisson", "gamma"]
    q: list[list[float]] = Field(
        default_factory=lambda: [list(row) for row in DEFAULT_CTMC.rates])
    rates: list[float] = Field(default_factory=lambda: list(DEFAULT_POISSON.rates))
    gamma_params: list[tuple[float, float]] = Field(
        default_factory=lambda: [tuple(p) for p in DEFAULT_GAMMA.params])

    def ctmc_spec(self) -> CtmcSpec:
        return CtmcSpec(rates=tuple(tuple(row) for row in self.q))

    def poisson_spec(self) -> PoissonSpec:
        return PoissonSpec(rates=tuple(self.rates))

    def gamma_spec(self) -> GammaSpec:
        return GammaSpec(params=tuple(tuple(p) for p in self.gamma_params))

    def n_states(self) -> int:
        return len(self.q)

    def gt_model(self):
        if self.process == "poisson":
            return GroundTruthPoisson(rates=tuple(self.rates))
        return GroundTruthGamma(params=tuple(tuple(p) for p in self.gamma_params))

    @model_validator(mode="after")
    def _check_states(self) -> "ProcessSpec":
        n = len(self.q)
        if n == 0:
            raise ValueError("q must have at least one state")
        if any(len(row) != n for row in self.q):
            raise ValueError("q must be square")
        per_state = self.rates if self.process == "poisson" else self.gamma_params
        if len(per_state) != n:
            raise ValueError(
                f"{self.process} parameters cover {len(per_state)} states, chain has {n}")
        return self


class SimulateConfig(ProcessSpec):
    n_sequences: int = Field(default=40, ge=1)
    span: tuple[float, float] = (0.0, 1000.0)
    seed: int = 0

    @model_validator(mode="after")
    def _check_span(self) -> "SimulateConfig":
        if not self.span[1] > self.span[0]:
            raise ValueError(f"span must have positive length, got {self.span}")
        return self

    def simulate(self) -> Dataset:
        return simulate_from(self, self.seed)


def simulate_from(config: SimulateConfig, seed: int) -> Dataset:
    from .simulate import simulate_dataset

    return simulate_dataset(
        config.process, config.n_sequences, config.span, seed,
        ctmc=config.ctmc_spec(), poisson=config.poisson_spec(),
        gamma=config.gamma_spec())


class InjectConfig(_StrictModel):
    kind: Literal["commission", "omission"]
    schedule: ScheduleSpec
    seed: int = 0


class TrainSpec(_StrictModel):
    hidden_grid: list[int] = [8, 16, 32]
    val_fraction: float = 0.2
    mc_samples_per_unit: Optional[float] = None
    step_size: float = 1e-2
    budget: int = 2000
    patience: int = 50
    seed: int = 0
    tolerance: float = 1e-4

    def to_train_config(self) -> TrainConfig:
        return TrainConfig(
            hidden_grid=tuple(self.hidden_grid),
            val_fraction=self.val_fraction,
            mc_samples_per_unit=self.mc_samples_per_unit,
            step_size=self.step_size,
            budget=self.budget,
            patience=self.patience,
            seed=self.seed,
            tolerance=self.tolerance,
        )


class TrainJobConfig(_StrictModel):
    """What to fit: the history view plus the trainer knobs."""

    view: Literal["combined", "target"] = "combined"
    train: TrainSpec = Field(default_factory=TrainSpec)


class DetectConfig(_StrictModel):
    seed: int = 0
    items: Literal["chain", "inter-event"] = "chain"
    rate: Optional[float] = Field(default=None, gt=0)


class VerifyConfig(_StrictModel):
    process: Literal["poisson", "gamma"]
    alpha0: float = Field(default=0.1, gt=0)
    repetitions: int = Field(default=10, ge=1)
    seed: int = 0
    n_sequences: int = Field(default=40, ge=2)
    span: tuple[float, float] = (0.0, 1000.0)
    train_fraction: float = Field(default=0.5, gt=0, lt=1)


class ExperimentConfig(ProcessSpec):
    """One full experiment: data shape, corruption schedules per
    outlier type, methods to compare, and the master seed.

    ``out`` names a default output directory for the CLI; it is
    excluded from manifests because it is about where results land,
    not what they are.
    """

    n_sequences: int = Field(default=40, ge=2)
    span: tuple[float, float] = (0.0, 1000.0)
    train_fraction: float = Field(default=0.5, gt=0, lt=1)
    commission: list[ScheduleSpec] = Field(
        default_factory=lambda: [ScheduleSpec(kind="constant", alpha0=0.1)])
    omission: list[ScheduleSpec] = Field(
        default_factory=lambda: [ScheduleSpec(kind="constant", alpha0=0.1)])
    methods: list[Literal["RND", "LEN", "PPOD", "CPPOD", "GT"]] = ["RND", "LEN", "GT"]
    train: TrainSpec = Field(default_factory=TrainSpec)
    repetitions: int = Field(default=1, ge=1)
    seed: int = 0
    out: Optional[str] = None

    @model_validator(mode="after")
    def _check_methods(self) -> "ExperimentConfig":
        if not self.methods:
            raise ValueError("at least one method is required")
        if len(set(self.methods)) != len(self.methods):
            raise ValueError("duplicate methods")
        if not self.span[1] > self.span[0]:
            raise ValueError(f"span must have positive length, got {self.span}")
        if not (self.commission or self.omission):
            raise ValueError("at least one schedule is required")
        return self


# -- manifests -------------------------------------------------------------


def config_digest(config: dict) -> str:
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def build_manifest(command: str, config: BaseModel, *, exclude: set[str] = frozenset()) -> dict:
    resolved = config.model_dump(mode="json", exclude=set(exclude))
    return {
        "command": command,
        "config": resolved,
        "config_hash": config_digest(resolved),
        "seed": resolved.get("seed"),
        "version": __version__,
    }


def manifest_json(command: str, config: BaseModel, *, exclude: set[str] = frozenset()) -> str:
    return _dumps(build_manifest(command, config, exclude=exclude))


def _dumps(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


# -- single stages ---------------------------------------------------------


def stage_simulate(config: SimulateConfig) -> dict[str, str]:
    data = config.simulate()
    return {
        "dataset.jsonl": dataset_to_jsonl(data),
        "manifest.json": manifest_json("simulate", config),
    }


def stage_inject(config: InjectConfig, data: Dataset) -> dict[str, str]:
    schedule = config.schedule.build(derive_seed(config.seed, "schedule"))
    if config.kind == KIND_COMMISSION:
        injected, report = inject_commission(data, schedule, config.seed)
    else:
        injected, report = inject_omission(data, schedule, config.seed)
    return {
        "dataset.jsonl": dataset_to_jsonl(injected),
        "report.json": _dumps(report.to_dict()),
        "manifest.json": manifest_json("inject", config),
    }


def stage_train(config: TrainJobConfig, data: Dataset) -> dict[str, str]:
    result = ctlstm_train(data, config.train.to_train_config(), view=config.view)
    return {
        "model.json": _dumps(model_to_dict(result.model)),
        "training.json": _dumps(result.to_dict()),
        "manifest.json": manifest_json("train", config),
    }


def stage_detect(config: DetectConfig, model, data: Dataset,
                 train: Dataset | None = None) -> dict[str, str]:
    rate = config.rate
    if rate is None:
        if train is None:
            raise ValueError("detect needs either an explicit rate or training data")
        rate = empirical_rate(train)
    items = run_detection(model, data, rate, config.seed, items=config.items)
    return {
        "items.csv": items_to_csv(items),
        "manifest.json": manifest_json("detect", config),
    }


def evaluate_items(items) -> dict:
    """AUROC, outlier ratio, and counts per item kind present.

    A kind whose items are all one class (nothing was injected for it,
    or everything was) gets a null AUROC rather than an error: a scored
    items file normally carries both kinds but only one was corrupted.
    """
    if not items:
        raise ValueError("no scored items to evaluate")
    metrics: dict[str, dict] = {}
    for kind in (KIND_COMMISSION, KIND_OMISSION):
        sub = [item for item in items if item.kind == kind]
        if not sub:
            continue
        n_pos = sum(item.truth for item in sub)
        metrics[kind] = {
            "auroc": auroc(sub).auroc if 0 < n_pos < len(sub) else None,
            "n_pos": n_pos,
            "n_neg": len(sub) - n_pos,
            "outlier_ratio": outlier_ratio(sub),
        }
    return metrics


def stage_evaluate(items) -> dict[str, str]:
    return {"metrics.json": _dumps(evaluate_items(items))}


def stage_verify_bounds(config: VerifyConfig) -> dict[str, str]:
    report = verify_bounds(
        config.process, config.alpha0, config.repetitions, config.seed,
        n_sequences=config.n_sequences, span=config.span,
        train_fraction=config.train_fraction)
    return {
        "bounds.json": _dumps(report.to_dict()),
        "curves.csv": bound_curves_csv(report),
        "manifest.json": manifest_json("verify-bounds", config),
    }


def bound_curves_csv(report: BoundReport) -> str:
    """Flat curve table for external plotting, one row per threshold."""
    lines = ["curve,threshold,bound,empirical_mean,empirical_std,flagged_mean,violation"]
    for curve in report.curves:
        violated = set(curve.violations)
        for i, theta in enumerate(curve.thresholds):
            lines.append(",".join([
                curve.name,
                repr(float(theta)),
                repr(float(curve.bound[i])),
                repr(float(curve.empirical_mean[i])),
                repr(float(curve.empirical_std[i])),
                repr(float(curve.flagged_mean[i])),
                "1" if i in violated else "0",
            ]))
    return "\n".join(lines) + "\n"


# -- full experiment -------------------------------------------------------


def _fit_methods(config: ExperimentConfig, train_data: Dataset, rep_seed: int) -> dict:
    models: dict[str, object] = {}
    for method in config.methods:
        if method == "RND":
            models[method] = RandomScorer()
        elif method == "LEN":
            models[method] = len_fit(train_data)
        elif method == "GT":
            models[method] = config.gt_model()
        else:
            view = _VIEW_OF_METHOD[method]
            spec = config.train.model_copy(
                update={"seed": derive_seed(rep_seed, "train", view)})
            models[method] = ctlstm_train(
                train_data, spec.to_train_config(), view=view).model
    return models


def _run_repetition(config: ExperimentConfig, rep: int) -> dict:
    rep_seed = derive_seed(config.seed, "rep", rep)

    def stage(name, fn, *args, **kwargs):
        try:
            return fn(*args, **kwargs)
        except Exception as exc:
            raise StageError(f"stage {name!r} failed in repetition {rep}: {exc}") from exc

    sim = SimulateConfig(
        process=config.process, q=config.q, rates=config.rates,
        gamma_params=config.gamma_params, n_sequences=config.n_sequences,
        span=config.span, seed=derive_seed(rep_seed, "simulate"))
    data = stage("simulate", sim.simulate)
    train_data, test_data = stage("split", split_train_test,
                                  data, config.train_fraction,
                                  derive_seed(rep_seed, "split"))
    rate = empirical_rate(train_data)
    models = stage("fit", _fit_methods, config, train_data, rep_seed)

    aurocs: dict[str, dict[str, float]] = {}
    ratios: dict[str, float] = {}
    jobs = [(KIND_COMMISSION, sched, inject_commission) for sched in config.commission]
    jobs += [(KIND_OMISSION, sched, inject_omission) for sched in config.omission]
    for kind, sched_spec, inject in jobs:
        schedule = sched_spec.build(derive_seed(rep_seed, "schedule", kind))
        label = schedule.label()
        setting = f"{kind}/{label}"
        injected, _report = stage("inject", inject, test_data, schedule,
                                  derive_seed(rep_seed, "inject", kind, label))
        per_method: dict[str, float] = {}
        for method in config.methods:
            items = stage("detect", run_detection, models[method], injected, rate,
                          derive_seed(rep_seed, "detect", kind, label, method))
            kind_items = [item for item in items if item.kind == kind]
            per_method[method] = stage("evaluate", lambda: auroc(kind_items).auroc)
            if setting not in ratios:
                ratios[setting] = outlier_ratio(kind_items)
        aurocs[setting] = per_method
    return {"aurocs": aurocs, "ratios": ratios}


def _rep_worker(config_json: str, rep: int) -> dict:
    return _run_repetition(ExperimentConfig(**json.loads(config_json)), rep)


def _summary(values: list[float]) -> dict:
    arr = np.asarray(values, dtype=np.float64)
    std = float(np.std(arr, ddof=1)) if arr.size > 1 else 0.0
    return {
        "mean": float(arr.mean()),
        "std": std,
        "stderr": std / float(np.sqrt(arr.size)),
        "per_rep": [float(v) for v in arr],
    }


def run_experiment(config: ExperimentConfig, jobs: int = 1) -> dict[str, str]:
    """Run the configured experiment and render its output files.

    Returns {"results.json": ..., "manifest.json": ...}; the caller
    decides where to write them.  ``jobs`` caps worker processes for
    the repetitions; results are identical for any worker count.
    """
    jobs = max(1, min(jobs, config.repetitions))
    if jobs > 1:
        config_json = json.dumps(config.model_dump(mode="json"))
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            reps = list(pool.map(_rep_worker, [config_json] * config.repetitions,
                                 range(config.repetitions)))
    else:
        reps = [_run_repetition(config, rep) for rep in range(config.repetitions)]

    settings = sorted(reps[0]["aurocs"])
    table: dict[str, dict] = {}
    for setting in settings:
        table[setting] = {
            "methods": {
                method: _summary([rep["aurocs"][setting][method] for rep in reps])
                for method in config.methods
            },
            "outlier_ratio": _summary([rep["ratios"][setting] for rep in reps]),
        }
    results = {
        "process": config.process,
        "n_sequences": config.n_sequences,
        "span": list(config.span),
        "train_fraction": config.train_fraction,
        "repetitions": config.repetitions,
        "methods": list(config.methods),
        "settings": table,
    }
    return {
        "results.json": _dumps(results),
        "manifest.json": manifest_json("run", config, exclude={"out"}),
    }
