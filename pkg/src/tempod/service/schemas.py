"""Request and response bodies for the HTTP service.

Datasets, models, and scored items travel inline in their canonical
text formats (JSON-Lines datasets, JSON models, CSV item tables), so
a service round trip produces exactly the files the CLI would write.
"""

from __future__ import annotations

from typing import Optional

from pydantic import BaseModel, ConfigDict, Field

from ..pipeline import (
    DetectConfig,
    ExperimentConfig,
    InjectConfig,
    SimulateConfig,
    TrainJobConfig,
    VerifyConfig,
)

__all__ = [
    "DatasetPayload",
    "SimulateRequest",
    "InjectRequest",
    "TrainRequest",
    "DetectRequest",
    "EvaluateRequest",
    "VerifyRequest",
    "RunRequest",
    "HealthResponse",
    "FilesResponse",
]


class _Strict(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DatasetPayload(_Strict):
    jsonl: str = Field(min_length=1)


class SimulateRequest(_Strict):
    config: SimulateConfig


class InjectRequest(_Strict):
    config: InjectConfig
    dataset: DatasetPayload


class TrainRequest(_Strict):
    config: TrainJobConfig = Field(default_factory=TrainJobConfig)
    dataset: DatasetPayload


class DetectRequest(_Strict):
    """Score a dataset with a serialized model.

    Either ``config.rate`` or ``train`` (a dataset to take the
    empirical rate from) must be present.
    """

    config: DetectConfig = Field(default_factory=DetectConfig)
    model: dict
    dataset: DatasetPayload
    train: Optional[DatasetPayload] = None


class EvaluateRequest(_Strict):
    items_csv: str = Field(min_length=1)


class VerifyRequest(_Strict):
    config: VerifyConfig


class RunRequest(_Strict):
    config: ExperimentConfig
    jobs: int = Field(default=1, ge=1)


class HealthResponse(_Strict):
    status: str
    version: str


class FilesResponse(_Strict):
    """Stage output as {relative path: file text}."""

    files: dict[str, str]
