"""Small-noise skew of index options with rough volatility components."""

__version__ = "0.1.0"

from .asymptotics import (
    MostLikelyConfiguration,
    SmileAsymptotics,
    implied_variance_expansion,
    index_skew,
    index_skew_one_factor,
    index_skew_two_factor,
    index_spot_variance,
    most_likely_configuration,
    single_asset_skew,
)
from .energy import (
    EnergyResult,
    ExpansionCoefficients,
    SolverOptions,
    component_log_moves,
    energy_curve,
    energy_objective,
    expansion_coefficients,
    phi_component,
    phi_index,
    smile_from_energy,
    solve_energy,
)
from .kernel import KernelWeights, PathGrid, VelocityPath, kappa, kappa_numeric, kernel_value, lift_path
from .model import (
    Component,
    CorrelationMatrix,
    FactorMode,
    IndexModel,
    VolFunction,
    cholesky,
    load_model,
    rho_inverse_quadratic,
    validate,
)
from .montecarlo import (
    McConfig,
    McSmile,
    digital_price,
    implied_vol_bachelier,
    implied_vol_bs,
    mc_smile,
    rate_check,
    simulate_terminal,
    vanilla_price,
)
