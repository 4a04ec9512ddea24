"""Circuit model, linear response, nonlinear dynamics and fitting of a
dissipatively coupled acousto-mechanical device."""

__version__ = "0.1.0"

from .errors import (
    AcoustomechError,
    ConfigError,
    NumericalError,
    PhaseUnwrapWarning,
    PhysicsDomainError,
    ValidityWarning,
)
from .spectrum import ComplexSpectrum
from .circuit import (
    MbvdParams,
    MembraneCapacitor,
    ModeCharacterization,
    OvertoneBranch,
    coupling_ratio,
    desk_params,
    dissipative_coupling_strength,
    extract_mode_params,
    finite_difference_couplings,
    impedance,
    reflection_s11,
)
from .linear_response import (
    DriveConfig,
    EnhancedCouplings,
    SystemParams,
    amit_spectrum,
    effective_linewidth,
    enhanced_couplings,
    group_delay,
    reference_system,
    probe_transmission,
)
from .nonlinear import (
    CombSpectrum,
    TimeTrace,
    TwoToneDrive,
    comb_spectrum,
    integrate_eom,
    kerr_coefficient,
    lissajous,
)
from .fitting import FitResult, fit_amit_window, fit_reflection_mode, fit_ringdown
from .config import ScenarioConfig, dump_config, load_config, parse_config
from .runner import Scenario, fsr_check, run_scenario
