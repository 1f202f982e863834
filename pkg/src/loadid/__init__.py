"""Appliance identification from power-consumption signals.

Pipeline: windowed time-domain descriptors (:mod:`loadid.features`), fuzzy
neighborhood scatter matrices (:mod:`loadid.scatter`), FNPA-QR and baseline
projections (:mod:`loadid.reduction`), bagged CART trees and k-NN
(:mod:`loadid.classifier`), and cross-validated scoring
(:mod:`loadid.evaluation`).
"""

from .dataset import LabeledSignalSet, RawSignal, load_manifest, synth_dataset, window
from .errors import DataError, LoadIdError, NumericalError
from .features import DescriptorKind, FeatureMatrix, extract
from .reduction import Projection, fit_fnpa_qr, fit_flda, fit_lda, fit_pca, project
from .classifier import fit_bdt, fit_knn, fit_tree, predict_bdt, predict_knn, predict_tree
from .evaluation import ExperimentConfig, ExperimentReport, run_experiment

__version__ = "0.1.0"

__all__ = [
    "LabeledSignalSet", "RawSignal", "load_manifest", "synth_dataset", "window",
    "DataError", "LoadIdError", "NumericalError",
    "DescriptorKind", "FeatureMatrix", "extract",
    "Projection", "fit_fnpa_qr", "fit_flda", "fit_lda", "fit_pca", "project",
    "fit_bdt", "fit_knn", "fit_tree", "predict_bdt", "predict_knn", "predict_tree",
    "ExperimentConfig", "ExperimentReport", "run_experiment",
]
