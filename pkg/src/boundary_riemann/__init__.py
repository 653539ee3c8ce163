"""Boundary Riemann problems for non-characteristic hyperbolic systems.

Boundary layers, wave-fan curves from the envelope fixed point, self-similar
viscous profiles and the assembled boundary Riemann solution.
"""

from .errors import *  # noqa: F401,F403
from .layers import (
    DecayReport,
    LayerTrajectory,
    MembershipResult,
    decay_report,
    layer_from_seed,
    membership,
    phi_s,
    stable_basis,
)
from .models import (
    BUILTIN_NAMES,
    DomainBox,
    HyperbolicModel,
    VerifyReport,
    builtin,
    load_model,
    make_model,
    model_from_config,
    verify_model,
)
from .riemann import (
    ComparisonReport,
    FanSolution,
    boundary_map,
    compare_limits,
    evaluate_fan,
    solve_boundary_riemann,
)
from .selfsim import (
    MeshPolicy,
    ViscousProfile,
    continuation_ladder,
    inner_rescale,
    solve_profile,
    transition_width,
)
from .spectral import beta_coefficients, decompose_derivative, eigendecompose
from .wavefan import (
    ClosureFields,
    WaveFanCurve,
    classify,
    envelope,
    fan_curve,
    lax_oracle,
    leading_order_closure,
)

__version__ = "0.1.0"
