"""Gain-kernel computation and learning for 2x2 counter-convecting plants."""

from .analysis import (
    EpsilonReport,
    ResidualReport,
    StabilityReport,
    epsilon_estimate,
    fit_decay,
    lyapunov_v1,
    norm_equivalence_constants,
    p2_lower_bound,
    phi,
    psi1,
    residual_operators,
)
from .coefficients import (
    CoefficientFamily,
    CoefficientSet,
    gamma_family,
    sample_random,
    sup_bounds,
)
from .controller import GainVector, control_value, forward_transform, inverse_transform
from .data_store import Dataset, SampleRecord, generate, read, write
from .kernel_solver import (
    KernelField,
    KernelSet,
    gain_slice,
    solve_inverse_kernels,
    solve_kappa_c,
    solve_kernels,
)
from .neural_op import (
    DeepONetModel,
    TrainConfig,
    encode_input,
    evaluate,
    forward,
    infer_gains,
    load_model,
    save_model,
    train,
)
from .numerics import (
    IntervalGrid,
    TriangularGrid,
    interp_linear,
    trapezoid_integral,
    tri_interp,
)
from .plant_sim import (
    ControllerSpec,
    PlantState,
    SimTrace,
    cfl_dt,
    reference_initial_state,
    simulate,
    simulate_target,
    step,
    trace_to_csv,
)

__all__ = [name for name in dir() if not name.startswith("_")]
