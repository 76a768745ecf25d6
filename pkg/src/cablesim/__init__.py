"""cablesim: compartmental Hodgkin-Huxley cable-equation simulator.

Seven time integrators (FTCS, BTCS, exponential Euler, Hines-Crank-Nicolson,
RK21, RK41, and a lagging-stencil second-order Taylor scheme) over branched
compartment trees, with a Von Neumann stability toolkit and an
action-potential waveform analysis suite.
"""

from .backend import HAS_NUMBA, default_backend, resolve_backend
from .channels import (CalciumPool, ChannelSpec, ChannelState, GateKinetics,
                       RateTerm, TableCurve, calcium_step,
                       channel_conductance, gate_steady_init, gate_step)
from .hines import HinesSystem, hines_solve
from .integrators import (SimState, coefficients_AB, load_state,
                          make_initial_state, run_simulation, save_state,
                          step_btcs, step_exp_euler, step_ftcs, step_hcn,
                          step_rk21, step_rk41, step_taylor2)
from .model import CalciumParams, CompiledModel, compile_model
from .morphology import (AxialCoupling, Compartment, MorphologyTree,
                         axial_couplings, build_tree, default_theta_path)
from .schemes import SchemeKind, parse_scheme
from .stability import (GrowthFactor, PlaneWaveSpectrum, SchemeCoefficients,
                        StepLimit, butcher_limit, growth_factor,
                        min_over_cycle_limit, spectral_centroid, step_limit)
from .trace import CoefficientRecord, SimTrace

__version__ = "0.1.0"

__all__ = [
    "AxialCoupling", "CalciumParams", "CalciumPool", "ChannelSpec",
    "ChannelState", "CoefficientRecord", "Compartment", "CompiledModel",
    "GateKinetics", "GrowthFactor", "HAS_NUMBA", "HinesSystem",
    "MorphologyTree", "PlaneWaveSpectrum", "RateTerm", "SchemeCoefficients",
    "SchemeKind", "SimState", "SimTrace", "StepLimit", "TableCurve",
    "axial_couplings", "build_tree", "butcher_limit", "calcium_step",
    "channel_conductance", "coefficients_AB", "compile_model",
    "default_backend", "default_theta_path", "gate_steady_init", "gate_step",
    "growth_factor", "hines_solve", "load_state", "make_initial_state",
    "min_over_cycle_limit", "parse_scheme", "resolve_backend",
    "run_simulation", "save_state", "spectral_centroid", "step_btcs",
    "step_exp_euler", "step_ftcs", "step_hcn", "step_limit", "step_rk21",
    "step_rk41", "step_taylor2",
]
