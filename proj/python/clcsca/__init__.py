"""Point-cloud attention network: geometry primitives, synthetic shape data,
and a three-path pyramid network with cross-level and cross-scale attention.

The heavy lifting lives in the compiled extension; this package re-exports
its public surface.
"""

from ._core import (
    ContractError,
    Dataset,
    DatasetPair,
    FormatError,
    Network,
    TrainResult,
    __version__,
    ball_query,
    classification_class_names,
    fps,
    gen_part_shape,
    gen_shape,
    interpolate,
    knn,
    load_dataset,
    lr_at_epoch,
    make_dataset,
    save_dataset,
    segmentation_category_names,
    segmentation_part_sets,
    train,
)

__all__ = [
    "ContractError",
    "Dataset",
    "DatasetPair",
    "FormatError",
    "Network",
    "TrainResult",
    "__version__",
    "ball_query",
    "classification_class_names",
    "fps",
    "gen_part_shape",
    "gen_shape",
    "interpolate",
    "knn",
    "load_dataset",
    "lr_at_epoch",
    "make_dataset",
    "save_dataset",
    "segmentation_category_names",
    "segmentation_part_sets",
    "train",
]
