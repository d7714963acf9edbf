"""Simulation and reconstruction for imaging with undetected photons.

Two photon-pair sources share an idler path through an object; only the
signal photons reach the camera.  The object's transmission shows up as
fringe visibility and phase in the signal counting rate.
"""
from .grid import FieldGrid, ObjectMask, PhaseScreen, PlaneMapping, load_mask, make_grid
from .correlation import (DeltaKernel, GaussianKernel, TabulatedKernel, evaluate_kernel,
                          gaussian_kernel, position_pdf_from_amplitude)
from .interferometer import (FringeStack, InterferometerConfig, RateMap, add_shot_noise,
                             fringe_stack, rate_map_delta, rate_map_general)
from .oracle import build_state, compare_oracle, oracle_rate, oracle_rate_map
from .reconstruction import (fit_fringes, image_subtraction, measure_magnification, phase_image,
                             visibility_image)

__version__ = "0.1.0"

__all__ = [
    "FieldGrid", "ObjectMask", "PhaseScreen", "PlaneMapping", "load_mask", "make_grid",
    "DeltaKernel", "GaussianKernel", "TabulatedKernel", "evaluate_kernel", "gaussian_kernel",
    "position_pdf_from_amplitude",
    "FringeStack", "InterferometerConfig", "RateMap", "add_shot_noise", "fringe_stack",
    "rate_map_delta", "rate_map_general",
    "build_state", "compare_oracle", "oracle_rate", "oracle_rate_map",
    "fit_fringes", "image_subtraction", "measure_magnification", "phase_image", "visibility_image",
]
