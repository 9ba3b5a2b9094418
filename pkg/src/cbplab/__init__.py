"""Sections versus measures of rotation-invariant convex bodies in C^n: a numerical laboratory."""
__version__ = "0.1.0"

from .geometry import Density, Direction, StarBody, circle_average  # noqa: E402
from .fourier import FtConfig, HomogeneousFunction, PdConfig, ft_homogeneous, pd_test  # noqa: E402
from .sections import (body_measure, section_measure_direct,  # noqa: E402
                       section_measure_fourier)
from .busemann_petty import (BpConfig, run_affirmative_scan,  # noqa: E402
                             run_counterexample)

__all__ = ["__version__", "Density", "Direction", "StarBody", "circle_average", "FtConfig",
           "HomogeneousFunction", "PdConfig", "ft_homogeneous", "pd_test", "body_measure",
           "section_measure_direct", "section_measure_fourier", "BpConfig",
           "run_affirmative_scan", "run_counterexample"]
