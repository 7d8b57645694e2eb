"""Sequential one-axis-at-a-time hyperparameter search.

Axes are swept in a fixed order; while sweeping axis k, earlier axes are
locked to their winners and later axes sit at their first-listed defaults.
The winner of an axis is the probe with the best validation accuracy (ties:
lower validation loss, then earlier candidate order). Trial count is the sum
of axis sizes, never the product.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field, replace

from .config import format_kv, parse_kv
from .errors import ConfigError, DataError, FabricnetError
from .layers import Model, SpecTemplate
from .seeding import derive_seed
from .train import HyperParams, TrainLog, train

AXIS_ORDER = (
    "learning_rate", "batch_size", "hidden_layers", "dropout_p", "l2_lambda", "activation",
)

_AXIS_PARSERS = {
    "learning_rate": float,
    "batch_size": int,
    "hidden_layers": int,
    "dropout_p": float,
    "l2_lambda": float,
    "activation": str,
}


@dataclass(frozen=True)
class SearchSpace:
    """Candidate lists per axis plus the probe length in epochs."""

    learning_rate: tuple[float, ...] = (1e-1, 1e-2, 1e-3, 1e-4)
    batch_size: tuple[int, ...] = (8, 16, 32)
    hidden_layers: tuple[int, ...] = (1, 2, 3)
    dropout_p: tuple[float, ...] = (0.0, 0.25, 0.5)
    l2_lambda: tuple[float, ...] = (0.0, 1e-4, 1e-3)
    activation: tuple[str, ...] = ("relu", "sigmoid")
    probe_epochs: int = 10

    def __post_init__(self):
        for axis in AXIS_ORDER:
            if len(getattr(self, axis)) == 0:
                raise ConfigError(f"search axis {axis!r} has no candidates")
        if self.probe_epochs < 1:
            raise ConfigError(f"probe_epochs must be positive, got {self.probe_epochs}")

    def candidates(self, axis: str) -> tuple:
        return getattr(self, axis)

    def trial_count(self) -> int:
        return sum(len(getattr(self, axis)) for axis in AXIS_ORDER)

    def to_kv(self) -> dict[str, str]:
        kv = {axis: ",".join(repr(v) if isinstance(v, float) else str(v)
                             for v in getattr(self, axis))
              for axis in AXIS_ORDER}
        kv["probe_epochs"] = str(self.probe_epochs)
        return kv

    def to_text(self) -> str:
        return format_kv(self.to_kv())

    @classmethod
    def from_kv(cls, kv: dict[str, str]) -> "SearchSpace":
        kwargs = {}
        for axis, cast in _AXIS_PARSERS.items():
            if axis in kv:
                try:
                    kwargs[axis] = tuple(cast(v.strip()) for v in kv[axis].split(","))
                except ValueError as exc:
                    raise ConfigError(f"axis {axis!r}: {exc}") from exc
        if "probe_epochs" in kv:
            try:
                kwargs["probe_epochs"] = int(kv["probe_epochs"])
            except ValueError as exc:
                raise ConfigError(f"probe_epochs: {exc}") from exc
        return cls(**kwargs)

    @classmethod
    def from_text(cls, text: str) -> "SearchSpace":
        return cls.from_kv(parse_kv(text))


@dataclass
class TrialRecord:
    """One probe: the full hyperparameters tried and how the probe ended."""

    axis: str
    hp: HyperParams
    seed: int
    val_accuracy: float | None = None
    val_loss: float | None = None
    seconds: float = field(default=0.0, compare=False)
    failed: bool = False
    error: str | None = None

    def to_json(self) -> str:
        payload = {
            "axis": self.axis,
            "hp": self.hp.to_kv(),
            "seed": self.seed,
            "val_accuracy": self.val_accuracy,
            "val_loss": self.val_loss,
            "failed": self.failed,
            "error": self.error,
        }
        return json.dumps(payload)


def _trial_seed(seed: int, axis: str, candidate) -> int:
    # Keyed on the candidate value, not its list position, so duplicated
    # candidates probe identically and tie-breaking stays meaningful.
    return derive_seed(seed, f"trial:{axis}={candidate!r}")


def coordinate_search(space: SearchSpace, template: SpecTemplate, train_set, val_set,
                      seed: int, on_trial=None) -> tuple[HyperParams, list[TrialRecord]]:
    """Sweep each axis in order, locking its winner before moving on.

    Failed probes are recorded (failed=True) and never win. Returns the locked
    hyperparameters (epochs = probe_epochs) and every trial in run order.
    """
    if len(train_set) == 0 or len(val_set) == 0:
        raise DataError("tuning needs non-empty train and validation sets")
    locked = {axis: space.candidates(axis)[0] for axis in AXIS_ORDER}
    trials: list[TrialRecord] = []

    for axis in AXIS_ORDER:
        best_idx: int | None = None
        axis_trials: list[TrialRecord] = []
        for candidate in space.candidates(axis):
            hp = HyperParams(epochs=space.probe_epochs, **{**locked, axis: candidate})
            trial_seed = _trial_seed(seed, axis, candidate)
            record = TrialRecord(axis=axis, hp=hp, seed=trial_seed)
            t0 = time.perf_counter()
            try:
                spec = template.build(hp)
                _, log = train(spec, hp, train_set, val_set, trial_seed)
                record.val_accuracy = log.records[-1].val_acc
                record.val_loss = log.records[-1].val_loss
            except FabricnetError as exc:
                record.failed = True
                record.error = f"{type(exc).__name__}: {exc}"
            record.seconds = time.perf_counter() - t0
            axis_trials.append(record)
            trials.append(record)
            if on_trial is not None:
                on_trial(record)
        for i, rec in enumerate(axis_trials):
            if rec.failed:
                continue
            if best_idx is None:
                best_idx = i
                continue
            best = axis_trials[best_idx]
            if (rec.val_accuracy, -rec.val_loss) > (best.val_accuracy, -best.val_loss):
                best_idx = i
        if best_idx is None:
            raise DataError(f"every probe on axis {axis!r} failed; no winner")
        locked[axis] = space.candidates(axis)[best_idx]

    best_hp = HyperParams(epochs=space.probe_epochs, **locked)
    return best_hp, trials


def final_train(best: HyperParams, template: SpecTemplate, train_set, val_set,
                epochs: int, seed: int) -> tuple[Model, TrainLog]:
    """Full-length run with the winning hyperparameters."""
    hp = replace(best, epochs=epochs)
    spec = template.build(hp)
    return train(spec, hp, train_set, val_set, seed)
