"""dabench: shallow unsupervised domain adaptation with realistic model selection.

The package provides:

* importance-weighting, optimal-transport, mapping, and subspace adaptation
  methods producing weights / transport plans / affine maps / projections,
* weighted linear and RBF-kernel logistic base estimators,
* unsupervised model-selection scorers (IW, DEV, PE, SND, CircV, MixVal)
  plus the supervised oracle,
* simulated shift generators and CSV ingestion for pre-embedded data,
* a nested cross-validation benchmark harness with caching, result tables,
  and the ``bench`` command-line entry point.
"""

from .core import (
    MASKED,
    DomainDataset,
    PredictionSet,
    SplitPlan,
    accuracy,
    macro_f1,
    stratified_split,
)
from .estimators import (
    EstimatorSpec,
    ProbPredictor,
    fit_kernel_logistic,
    fit_linear_logistic,
    select_base_estimator,
)

__version__ = "0.1.0"

__all__ = [
    "MASKED",
    "DomainDataset",
    "PredictionSet",
    "SplitPlan",
    "accuracy",
    "macro_f1",
    "stratified_split",
    "EstimatorSpec",
    "ProbPredictor",
    "fit_linear_logistic",
    "fit_kernel_logistic",
    "select_base_estimator",
    "__version__",
]
