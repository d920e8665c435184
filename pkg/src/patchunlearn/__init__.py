"""Certified patch-based unlearning for piecewise-linear classifiers.

Edit a trained ReLU network in place of retraining it: carve out the exact
linear region around a training point, synthesize a minimal logit offset
that flips the prediction there, and gate the offset with ReLU support
gadgets so the rest of the input space is provably untouched.
"""

from .bounds import (BoxBounds, certified_margins, preactivation_bounds,
                     relaxed_region, robust_radius)
from .data import (DataParseError, Dataset, StandardizeStats,
                   TrainingDivergedError, domain_box_for, gen_blobs, init_mlp,
                   load_csv, load_idx, train_mlp)
from .lp import LpError, LpProblem, LpSolution, solve_lp
from .metrics import (MetricsDelta, accuracy, cross_entropy_losses,
                      mean_training_loss, mia_recall, unlearn_metrics)
from .network import (ActivationPattern, AffineLayer, FeatureMap, MlpNetwork,
                      ModelParseError, ShapeError, UnsupportedVersionError,
                      activation_pattern, forward, load_model, predict,
                      save_model)
from .patching import (ConfusionNetwork, PatchBoundError, PatchedModel,
                       PatchNetwork, SupportNetwork, assemble_patch, bump,
                       compute_H, load_patched_model, logits_of,
                       optimize_confusion, patched_forward, patched_predict,
                       predict_of, save_patched_model, support_eval)
from .regions import (DegenerateRegionError, EmptyRegionError, LinearRegion,
                      RegionAffineMap, max_affine_over_region, prune_parallel,
                      region_affine_map, region_of, region_purity,
                      sample_region)
from .reporting import (parse_report, report_to_text, write_manifest,
                        write_metrics_csv, write_plot_data, write_report,
                        write_timing_sidecar)
from .unlearn import (IterationRecord, RequestError, UnlearnReport,
                      UnlearnRequest, kmeans, run_request, unlearn_class,
                      unlearn_multipoint, unlearn_single)

__version__ = "0.1.0"

__all__ = [
    "ActivationPattern", "AffineLayer", "BoxBounds", "ConfusionNetwork",
    "DataParseError", "Dataset", "DegenerateRegionError", "EmptyRegionError",
    "FeatureMap", "IterationRecord", "LinearRegion", "LpError", "LpProblem",
    "LpSolution", "MetricsDelta", "MlpNetwork", "ModelParseError",
    "PatchBoundError", "PatchNetwork", "PatchedModel", "RegionAffineMap",
    "RequestError", "ShapeError", "StandardizeStats", "SupportNetwork",
    "TrainingDivergedError", "UnlearnReport", "UnlearnRequest",
    "UnsupportedVersionError", "accuracy", "activation_pattern",
    "assemble_patch", "bump", "certified_margins", "compute_H",
    "cross_entropy_losses", "domain_box_for", "forward", "gen_blobs",
    "init_mlp", "kmeans", "load_csv", "load_idx", "load_model",
    "load_patched_model", "logits_of", "max_affine_over_region",
    "mean_training_loss", "mia_recall", "optimize_confusion", "parse_report",
    "patched_forward", "patched_predict", "preactivation_bounds", "predict",
    "predict_of", "prune_parallel", "region_affine_map", "region_of",
    "region_purity", "relaxed_region", "report_to_text", "robust_radius",
    "run_request", "sample_region", "save_model", "save_patched_model",
    "solve_lp", "support_eval", "train_mlp", "unlearn_class",
    "unlearn_metrics", "unlearn_multipoint", "unlearn_single",
    "write_manifest", "write_metrics_csv", "write_plot_data", "write_report",
    "write_timing_sidecar",
]
