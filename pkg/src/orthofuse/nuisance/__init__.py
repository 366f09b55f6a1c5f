from .learners import (
    KINDS,
    MODELS,
    NuisanceFit,
    NuisanceLearnerSpec,
    fit_classifier,
    fit_regressor,
    fit_task_nuisances,
    predict,
)

__all__ = [
    "KINDS",
    "MODELS",
    "NuisanceFit",
    "NuisanceLearnerSpec",
    "fit_classifier",
    "fit_regressor",
    "fit_task_nuisances",
    "predict",
]
