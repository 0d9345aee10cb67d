"""Commission/omission outlier detection for continuous-time event sequences.

The package simulates context-modulated event streams, corrupts them with
labeled outliers, scores events and blank intervals with point-process
intensity models (analytic ground truth, a gap-length baseline, and a
trainable continuous-time LSTM), and evaluates rankings and detection-rate
bounds.  A FastAPI service wraps the pipeline; the ``tempod`` CLI is a thin
client of it.
"""

from .events import (
    BlankInterval,
    Dataset,
    DatasetFormatError,
    EventSequence,
    History,
    MarkedEvent,
    OutlierLabels,
    blank_intervals,
    load_dataset,
    save_dataset,
    split_train_test,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "BlankInterval",
    "Dataset",
    "DatasetFormatError",
    "EventSequence",
    "History",
    "MarkedEvent",
    "OutlierLabels",
    "blank_intervals",
    "load_dataset",
    "save_dataset",
    "split_train_test",
]
