"""Memory-kernel quantum master equations from classical environment noise.

The package implements two integro-differential master equations whose
kernels derive from a classical bath hopping between configurational
states, the exact joint system-bath Lindblad representation that serves
as their oracle, a renewal quantum-jump unravelling with waiting-time
statistics, and a relative-entropy witness of information backflow.
"""

__version__ = "0.1.0"

from .embedding import (
    BipartiteModel,
    Case,
    Channel,
    ancilla_block,
    ancilla_generator,
    ancilla_populations,
    coupling_generator,
    evolve_bipartite,
    rate_equation_rhs,
    reduced_system,
    total_generator,
)
from .environment import (
    KernelTable,
    RateMatrix,
    delta_kernel,
    memory_kernel,
    pauli_evolve,
    pauli_generator,
    survival_probability,
    two_state_kernel,
    two_state_rates,
)
from .errors import (
    ClosureError,
    DegenerateSteadyStateError,
    GridMismatchError,
    HorizonError,
    PostMarkovError,
    RenewalStructureError,
    StateInvariantError,
    UsageError,
)
from .fluorescence import (
    FluorescenceParams,
    build_model,
    markovian_waiting_density,
    mean_emission_rate,
    preset,
)
from .jumps import (
    ClosureVerdict,
    EnsembleAverage,
    JumpProcess,
    PropagatorTable,
    RenewalSpec,
    TrajectoryRecord,
    WaitingTimeTable,
    build_waiting_tables,
    check_closure,
    conditional_propagator,
    ensemble_average,
    prepare_jump_process,
    renewal_spec,
    run_ensemble,
    sample_trajectory,
)
from .master import (
    integrate_case,
    integrate_case1,
    integrate_case2,
    stationary_state,
)
from .operators import (
    dissipator,
    expm_apply,
    hamiltonian_superop,
    kron,
    partial_trace,
    steady_state,
    validate_density_matrix,
)
from .witness import (
    EntropySeries,
    detect_backflow,
    entropy_series,
    relative_entropy,
)
