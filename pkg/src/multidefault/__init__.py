"""Conditional expectations and martingale checks for multivariate default
systems under a conditional density hypothesis."""
from ._core import BACKEND
from .conditional import (
    condexp_G,
    condexp_G_marked,
    condexp_G_nonordered,
    condexp_G_ordered,
    condexp_G_single,
    condexp_H,
    conditional_law_G,
    symmetrize_density,
    tail_integral,
)
from .errors import (
    ModelError,
    NegativeDensityError,
    NotAdaptedError,
    NotMartingaleError,
    UnsupportedError,
    UnvalidatedModelError,
)
from .martingale import (
    GMartingaleCandidate,
    change_measure_density,
    check_immersion,
    check_initial_enlargement_martingale,
    check_mtilde_condition,
    check_nonordered_characterization,
    check_ordered_characterization,
    construct_G_martingale,
    construct_two_default_martingale,
)
from .model import (
    DensityModel,
    JointMeasure,
    ObservationScheme,
    PayoffSpec,
    ReferenceMeasure,
    ScenarioTree,
    build_joint_measure,
    observation_partition,
    validate_density_model,
)
from .oracle import AtomTable, brute_force_condexp, sample_system
from .prediction import (
    PredictionMeasure,
    predict_generic,
    predict_marked,
    predict_nonordered,
    predict_ordered,
    predict_single_default,
)

__version__ = "0.1.0"

__all__ = [
    "AtomTable",
    "BACKEND",
    "DensityModel",
    "GMartingaleCandidate",
    "JointMeasure",
    "ModelError",
    "NegativeDensityError",
    "NotAdaptedError",
    "NotMartingaleError",
    "ObservationScheme",
    "PayoffSpec",
    "PredictionMeasure",
    "ReferenceMeasure",
    "ScenarioTree",
    "UnsupportedError",
    "UnvalidatedModelError",
    "brute_force_condexp",
    "build_joint_measure",
    "change_measure_density",
    "check_immersion",
    "check_initial_enlargement_martingale",
    "check_mtilde_condition",
    "check_nonordered_characterization",
    "check_ordered_characterization",
    "condexp_G",
    "condexp_G_marked",
    "condexp_G_nonordered",
    "condexp_G_ordered",
    "condexp_G_single",
    "condexp_H",
    "conditional_law_G",
    "construct_G_martingale",
    "construct_two_default_martingale",
    "observation_partition",
    "predict_generic",
    "predict_marked",
    "predict_nonordered",
    "predict_ordered",
    "predict_single_default",
    "sample_system",
    "symmetrize_density",
    "tail_integral",
    "validate_density_model",
    "__version__",
]
