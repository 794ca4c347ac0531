"""nestnet: exact nested ReLU networks.

The IR (``core_ir``) represents ReLU nets whose activation slots may
call other nets, registered by content fingerprint so shared helpers
are stored once.  Builders (``constructive``) emit nets whose behavior
on stated input sets is an exact rational identity, and the harness
(``verify``) checks those identities with exact arithmetic.  A small
float trainer (``train``) reuses the same IR for gradient experiments.
"""

from .core_ir import (
    IDENTITY,
    RELU,
    AffineMap,
    NestNet,
    Prim,
    SubNet,
    affine_net,
    closure,
    compose,
    eval_scalar,
    expand,
    height,
    identity_affine,
    merge_registries,
    net_backend,
    net_eval,
    parallel,
    param_count,
    validate,
)
from .errors import (
    BackendMismatchError,
    DivergenceError,
    GapConditionError,
    NestNetError,
    RegistryCollisionError,
    ResourceLimitError,
    ValidationError,
)
from .limits import DEFAULT_LIMITS, Limits, max_cases
from .numerics import (
    EXACT,
    FLOAT,
    PiecewiseLinear1D,
    as_exact,
    format_rational,
    parse_rational,
    pwl_eval,
    pwl_from_points,
    pwl_of_net,
    rat,
    to_float,
)
from .serialize import (
    deserialize_net,
    fingerprint,
    load_net,
    net_to_f64,
    register_id,
    save_net,
    serialize_net,
)
from .targets import (
    ModulusSpec,
    TargetFunction,
    parse_target,
    target_abs_shift,
    target_const,
    target_hinge2,
)
from .constructive import (
    ApproximatorBuild,
    InteriorBuild,
    TriflingRegion,
    approximator_full,
    approximator_interior,
    bit_extract_net,
    bit_pair_net,
    build_full,
    build_interior,
    cpl_to_net,
    floor_base,
    floor_nested,
    g_builder,
    indexed_bit_sum_net,
    max_pair_net,
    mid_net,
    min_pair_net,
    phi1_grid_net,
    point_fit_net,
    psi1_map,
    step_function_net,
)
from .verify import (
    ErrorReport,
    GridSpec,
    ScalingStudy,
    check_param_bound,
    exhaustive_bit_check,
    measure_error,
    scaling_study,
    theorem_bound,
)
from .train import (
    SpiralConfig,
    TrainConfig,
    TrainableNet,
    build_experiment_nets,
    evaluate_accuracy,
    spiral_dataset,
    standardize,
    train,
)

__version__ = "0.1.0"
