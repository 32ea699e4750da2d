"""Navigation with natural-language cost generation and retuning.

A receding-horizon controller whose cost function is composed from a small
differentiable expression language and rewritten or retuned at runtime by a
pipeline of language-model assistants, plus a social-force pedestrian
simulator, an experiment harness, and a live session service.
"""

from .costspec import (
    BUILTIN_TERMS,
    CostSpec,
    CostTerm,
    ParameterSet,
    ParamValue,
    ValidationError,
    builtin,
    closest_human_binding,
    compose_cost,
    default_path_spec,
)
from .dsl import EvalError, ParseError, evaluate, grad, parse_expr, pretty
from .mpc import (
    CostRejected,
    MpcConfig,
    NavController,
    PlanningScene,
    PlanStatus,
    TrajectoryPlan,
    corridor_constraints,
    generate_seeds,
    human_constraint,
    solve,
    stage_cost,
)
from .world import (
    ControlInput,
    Human,
    HumanPrediction,
    ReferencePath,
    RobotState,
    Scenario,
    ScenarioError,
    load_scenario,
    path_project,
    predict_humans,
    unicycle_step,
)

__version__ = "0.1.0"
