"""subtori - persistence of lower-dimensional invariant tori on parameter sub-manifolds."""

from subtori.conditions import condition_report
from subtori.engine import TransformChain, kam_step, run_iteration
from subtori.model import ModelHamiltonian, NormalForm, ParamChart, pullback_to_chart
from subtori.scenarios import BUILTIN_SCENARIOS, initial_model, load_scenario
from subtori.series import Dims, FTSeries
from subtori.verifier import verify_torus

__version__ = "0.1.0"
__all__ = [
    "BUILTIN_SCENARIOS",
    "Dims",
    "FTSeries",
    "ModelHamiltonian",
    "NormalForm",
    "ParamChart",
    "TransformChain",
    "condition_report",
    "initial_model",
    "kam_step",
    "load_scenario",
    "pullback_to_chart",
    "run_iteration",
    "verify_torus",
]
