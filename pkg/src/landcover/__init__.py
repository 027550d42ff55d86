"""Multispectral land-cover classification toolkit."""

__version__ = "0.1.0"

from .ann import (BackpropMLPClassifier, MlpModel, SignatureClass, SignatureSet, TrainConfig,  # noqa: E402
                  TrainingPair, classify_pattern, classify_raster, extract_training_pairs,
                  init_weights, load_model, save_model, train)
from .eval import (ConfusionMatrix, class_histogram, commission_error, confusion_matrix,  # noqa: E402
                   map_accuracy, omission_error, overall_accuracy)
from .exceptions import ConfigError, DegenerateInputError, FormatError, LandcoverError  # noqa: E402
from .kmeans import ClusterModel, ImprovedKMeans, KmeansConfig, cluster  # noqa: E402
from .raster import (BandNormalizer, LabelMap, Raster, load_label_map, load_raster,  # noqa: E402
                     median_filter, normalize_bands, render_thematic, save_label_map, save_raster)

__all__ = [
    "BackpropMLPClassifier", "BandNormalizer", "ClusterModel", "ConfigError", "ConfusionMatrix",
    "DegenerateInputError", "FormatError", "ImprovedKMeans", "KmeansConfig", "LabelMap",
    "LandcoverError", "MlpModel", "Raster", "SignatureClass", "SignatureSet", "TrainConfig",
    "TrainingPair", "class_histogram", "classify_pattern", "classify_raster", "cluster",
    "commission_error", "confusion_matrix", "extract_training_pairs", "init_weights",
    "load_label_map", "load_model", "load_raster", "map_accuracy", "median_filter",
    "normalize_bands", "omission_error", "overall_accuracy", "render_thematic", "save_label_map",
    "save_model", "save_raster", "train",
]
