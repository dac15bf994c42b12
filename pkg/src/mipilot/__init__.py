"""Motor-imagery EEG classification: CSP features, Fisher LDA and
polynomial-kernel SVM, a streaming decision pipeline and a command link."""

from .csp import CSP, CspModel, apply_csp, extract_features, fit_csp
from .lda import FisherLDA, FitReport, LdaModel, classify_lda, fit_lda, project
from .signal import (BandPassFilter, BandSpec, EegTrial, SpatialCovariance, bandpass,
                     class_mean_covariance, epochs, normalized_covariance, select_channels)
from .svm import (BinarySvmModel, KernelSpec, MultiClassSvmModel, PolySVC, classify_binary,
                  decision_value, fit_binary_svm, fit_multiclass, kernel_eval,
                  predict_multiclass)
from .workflow import make_pipeline

__version__ = "0.1.0"

__all__ = [
    "BandPassFilter", "BandSpec", "BinarySvmModel", "CSP", "CspModel", "EegTrial",
    "FisherLDA", "FitReport", "KernelSpec", "LdaModel", "MultiClassSvmModel", "PolySVC",
    "SpatialCovariance", "apply_csp", "bandpass", "class_mean_covariance", "classify_binary",
    "classify_lda", "decision_value", "epochs", "extract_features", "fit_binary_svm",
    "fit_csp", "fit_lda", "fit_multiclass", "kernel_eval", "make_pipeline",
    "normalized_covariance", "predict_multiclass", "project", "select_channels",
]
