"""fabricnet: a small from-scratch CNN engine and printed-fabric defect
classification pipeline (defect-free / color spot / misprint)."""

__version__ = "0.1.0"

from .data import (
    ClassLabel,
    Dataset,
    Manifest,
    ManifestRow,
    Sample,
    SynthParams,
    augment,
    load_dataset,
    load_image,
    model_input,
    split,
    synth_fabric,
    write_image,
)
from .errors import (
    ConfigError,
    DataError,
    DimensionError,
    FabricnetError,
    GeometryError,
    NumericError,
    StaleTapeError,
    StorageError,
)
from .layers import (
    GradientSet,
    LayerSpec,
    Model,
    ModelSpec,
    SpecTemplate,
    TapeCache,
    backward,
    build,
    forward,
)
from .metrics import ConfusionMatrix, MetricReport, binary_metrics, confusion, emit, report
from .tensor import ConvGeom, Tensor, conv2d, elementwise, matmul, maxpool2d
from .train import (
    HyperParams,
    TrainLog,
    cross_entropy,
    evaluate,
    load_checkpoint,
    save_checkpoint,
    sgd_step,
    train,
)
from .tuning import SearchSpace, TrialRecord, coordinate_search, final_train

__all__ = [
    "__version__",
    "ClassLabel", "Dataset", "Manifest", "ManifestRow", "Sample", "SynthParams",
    "augment", "load_dataset", "load_image", "model_input", "split", "synth_fabric",
    "write_image",
    "ConfigError", "DataError", "DimensionError", "FabricnetError", "GeometryError",
    "NumericError", "StaleTapeError", "StorageError",
    "GradientSet", "LayerSpec", "Model", "ModelSpec", "SpecTemplate", "TapeCache",
    "backward", "build", "forward",
    "ConfusionMatrix", "MetricReport", "binary_metrics", "confusion", "emit", "report",
    "ConvGeom", "Tensor", "conv2d", "elementwise", "matmul", "maxpool2d",
    "HyperParams", "TrainLog", "cross_entropy", "evaluate", "load_checkpoint",
    "save_checkpoint", "sgd_step", "train",
    "SearchSpace", "TrialRecord", "coordinate_search", "final_train",
]
