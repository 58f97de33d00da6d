"""Mean-metric complexity and discrete-spectrum diagnostics for amenable group actions."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("folnerlab")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

from .groups import GroupSpec, parse_group, folner_window, shulman_constant  # noqa: E402
from .systems import BUILTIN_SYSTEMS, DynamicalSystem, GroundTruth, make_system, product_lift  # noqa: E402
from .meanmetric import GroupMeasure, folner_measure, mean_distance, uniform_on  # noqa: E402
from .complexity import (  # noqa: E402
    ComplexityEstimate,
    ComplexityProfile,
    Verdict,
    boundedness_verdict,
    covering_estimate,
    folner_profile,
    max_mean_search,
)
from .spectrum import cross_validate, l2_distance, orbit_net_profile  # noqa: E402

__all__ = [
    "GroupSpec",
    "parse_group",
    "folner_window",
    "shulman_constant",
    "BUILTIN_SYSTEMS",
    "DynamicalSystem",
    "GroundTruth",
    "make_system",
    "product_lift",
    "GroupMeasure",
    "folner_measure",
    "mean_distance",
    "uniform_on",
    "ComplexityEstimate",
    "ComplexityProfile",
    "Verdict",
    "boundedness_verdict",
    "covering_estimate",
    "folner_profile",
    "max_mean_search",
    "cross_validate",
    "l2_distance",
    "orbit_net_profile",
]
