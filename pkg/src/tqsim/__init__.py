"""Classical simulator of tailored quench spectroscopy for Green's functions."""
from .operators import PauliString, PauliSum, ScaledObservable, majorana_parts, parity_operator
from .models import FHParams, LayeredHamiltonian, XXZParams, build_fermi_hubbard, build_model, build_xxz, rescale_to_norm
from .states import (
    EigenSystem,
    ParityTrace,
    SectorData,
    ThermalState,
    eigendecompose_with_parity,
    perturb_state,
    sector_thermal_states,
    solve_sector_data,
    thermal_state,
)
from .evolution import PropagatorSpec, effective_eigensystem, exact_step, expectation_series, trotter_step
from .tqs import (
    CorrelatorSeries,
    QuenchKind,
    ShotConfig,
    eigenstate_correlator,
    emulate_shots,
    fermionic_correlator,
    im_correlator,
    otoc,
    quench_function,
    re_correlator_parity,
    thermal_correlator,
    trace_term,
)
from .music import build_hankel, correlation_R, find_minima, music, noise_space
from .greens import GreensFunction, evaluate_G, greens_from_series, lehmann_exact, spectral_function

__version__ = "0.1.0"
