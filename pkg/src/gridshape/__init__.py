"""Storage-based frequency shaping for low-inertia power systems.

Submodules
----------
lti
    Rational transfer functions, state-space realizations, balanced
    truncation and fixed-step RK4.
plant
    Single-area, multi-machine and two-area grid models.
controllers
    Virtual inertia, frequency shaping, iDroop and per-machine laws.
metrics
    Nadir, RoCoF, steady state and storage sizing from trajectories.
sim
    Closed-loop simulation.
cli
    Scenario runner, sweeps and report output.
"""

from .controllers import (ControllerKind, ControllerSpec, FsTuning, TuningTargets, ViTuning, augment_lowpass,
                          fs_controller, fs_tune, idroop_controller, mm_allocate, mm_controller, shaped_loop,
                          vi_controller, vi_min_inertia, vi_tune)
from .lti import (RationalTransfer, StateSpace, Trajectory, balanced_truncation, closed_loop, final_step_value,
                  initial_step_rate, realize, rk4, rk4_lti, transfer)
from .metrics import MetricsReport, analyze_trajectory, energy_estimate, predict_metrics, vi_power_closed_form
from .plant import (GB_AREA, GB_DP, TWO_AREA_DEFAULT, AreaParameters, FirstOrder, Hydro, IEEEG1,
                    MachineParameters, TwoAreaModel, area_state_space, multi_machine_state_space, open_loop_plant)
from .sim import DisturbanceSpec, simulate_closed_loop, simulate_two_area

__version__ = "0.1.0"

__all__ = [
    "AreaParameters", "ControllerKind", "ControllerSpec", "DisturbanceSpec", "FirstOrder", "FsTuning", "GB_AREA",
    "GB_DP", "Hydro", "IEEEG1", "MachineParameters", "MetricsReport", "RationalTransfer", "StateSpace",
    "TWO_AREA_DEFAULT", "Trajectory", "TuningTargets", "TwoAreaModel", "ViTuning", "analyze_trajectory",
    "area_state_space", "augment_lowpass", "balanced_truncation", "closed_loop", "energy_estimate",
    "final_step_value", "fs_controller", "fs_tune", "idroop_controller", "initial_step_rate", "mm_allocate",
    "mm_controller", "multi_machine_state_space", "open_loop_plant", "predict_metrics", "realize", "rk4",
    "rk4_lti", "shaped_loop", "simulate_closed_loop", "simulate_two_area", "transfer", "vi_controller",
    "vi_min_inertia", "vi_power_closed_form", "vi_tune",
]
