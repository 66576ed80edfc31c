"""Polarization drift compensation with two reference channels, and the
QBER budget of a polarization-encoded BB84 link."""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    AmbiguousAxisError,
    ConfigError,
    DegenerateReferencesError,
    ExtrapolationError,
    UndefinedRateError,
    ValidationError,
)
from .polarization import (  # noqa: E402
    D,
    H,
    R,
    JonesVector,
    PolUnitary,
    StokesVector,
    fidelity,
    qber_from_visibility,
    rotation_between,
    stokes_from_jones,
)
from .compensator import compensator_exact, reference_lock  # noqa: E402
from .engine import ScenarioConfig, TimeSeriesPoint, run_scenario  # noqa: E402
from .scenarios import (  # noqa: E402
    scenario_keyexchange_phases,
    scenario_scramble_sweep,
    scenario_static,
)

__all__ = [
    "AmbiguousAxisError", "ConfigError", "DegenerateReferencesError", "ExtrapolationError",
    "UndefinedRateError", "ValidationError", "D", "H", "R", "JonesVector", "PolUnitary",
    "StokesVector", "fidelity", "qber_from_visibility", "rotation_between", "stokes_from_jones",
    "compensator_exact", "reference_lock", "ScenarioConfig", "TimeSeriesPoint", "run_scenario",
    "scenario_keyexchange_phases", "scenario_scramble_sweep", "scenario_static",
]
