"""Radiomap inpainting: exemplar fills with propagation-aware priorities,
template / perturbation reconstruction, baselines and a synthetic generator."""

from .core import (MissingValueError, RegionMask, ScalarGrid, Scene, Transmitter, as_arrays,
                   extract_patch)
from .inpaint import (ExemplarParams, InpaintError, TemplateParams, TpiParams, giw_smooth,
                      run_small_scale, run_template, run_tpi)
from .baselines import idw_interp, mbi, mean_fill, rbf_interp
from .synth import ScenarioSpec, generate, make_mask, random_scenario
from .io import mse, ne, read_grid, read_mask, write_grid, write_mask

__version__ = "0.1.0"
