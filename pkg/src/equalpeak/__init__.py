"""
Tuning of multiple tuned mass dampers to an all-equal-peak design.

The controlled compliance of a modal host fitted with grounded-host
absorbers is evaluated through a low-rank Woodbury update; the absorber
masses, dampings and stiffnesses are then optimized by a p-norm homotopy
on the resonance peak amplitudes, starting from a per-mode closed-form
tuning.
"""

from .coupling import (AbsorberSet, ComplianceChannel, compliance_and_derivative,
                       compliance_param_gradient, compliance_param_gradients, compliance_sweep,
                       controlled_compliance, direct_compliance_oracle, pseudo_inverse_compliance)
from .errors import EqualPeakError
from .homotopy import (HomotopyConfig, PnormProblem, TuningResult, cost_fp, grad_fp,
                       run_homotopy, solve_pnorm)
from .host import (ChainSpec, ModalHostModel, PlateSpec, build_chain_modal, build_plate_modal,
                   modal_from_matrices, plate_static_displacement)
from .peaks import Peak, PeakSet, find_all_peaks, find_peaks, locate_peak
from .tuning import build_initial_design, initial_peak_guesses, nishihara_asami

__version__ = "0.1.0"

__all__ = [
    "AbsorberSet", "ChainSpec", "ComplianceChannel", "EqualPeakError", "HomotopyConfig",
    "ModalHostModel", "Peak", "PeakSet", "PlateSpec", "PnormProblem", "TuningResult",
    "build_chain_modal", "build_initial_design", "build_plate_modal",
    "compliance_and_derivative", "compliance_param_gradient", "compliance_param_gradients",
    "compliance_sweep", "controlled_compliance", "cost_fp", "direct_compliance_oracle",
    "find_all_peaks", "find_peaks", "grad_fp", "initial_peak_guesses", "locate_peak",
    "modal_from_matrices", "nishihara_asami", "plate_static_displacement",
    "pseudo_inverse_compliance", "run_homotopy", "solve_pnorm",
]
