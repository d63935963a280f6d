"""Monte Carlo BSDE engine for counterparty credit risk valuation adjustments."""

__version__ = "0.1.0"

from .bsde import (  # noqa: E402
    BackwardSolution,
    DriverSpec,
    SolverConfig,
    TerminalSpec,
    assemble_jump_solution,
    solve_backward,
    solve_linear_closed_form,
    stochastic_exponential,
)
from .credit import (  # noqa: E402
    CollateralSpec,
    DefaultTimes,
    IntensityModel,
    RecoverySpec,
    close_out_values,
    simulate_default_times,
)
from .factors import (  # noqa: E402
    FactorProjection,
    average_projection,
    discrepancy_delta,
    reduction_error_report,
    simulate_reduced,
    spectral_decompose,
)
from .hermite import HermiteBasis, HermiteRegressor, basis_eval  # noqa: E402
from .paths import (  # noqa: E402
    AssetModel,
    BrownianBatch,
    PathEnsemble,
    arithmetic_model,
    build_time_grid,
    generate_brownian,
    geometric_model,
    linear_model,
    simulate_euler,
    simulate_milstein,
)
from .xva import (  # noqa: E402
    NettingSet,
    RateDeck,
    XvaReport,
    approx_adjustment_MVhat,
    riskless_value,
    solve_reduced_MVhat,
    xva_decompose_MV,
)
