"""Volume of unit vector fields on the twice-punctured round sphere.

The submodules are

* ``geometry``     the round sphere chart, Mercator coordinate, connection, curvature
* ``fields``       meridian, latitude, T-type and synthetic unit fields
* ``first_order``  A-components, the magnus quantity and the three residuals
* ``quadrature``   volume integrals, bounds and the Omega-region comparison
* ``topology``     winding against parallel transport and pole indices
* ``minimizer``    family and grid searches for small-volume fields
* ``cli``          the ``volfield`` command
"""

from .fields import (
    LatitudeField,
    LatitudeSpec,
    MeridianField,
    TTypeField,
    TTypeSpec,
    ZetaSpec,
    latitude,
    meridian,
)
from .first_order import a_components, el_residual, magnus, residual_report
from .geometry import ConvergenceError, DomainError, SphereChart
from .minimizer import BudgetExhausted, minimize_grid, minimize_in_family
from .quadrature import DomainRegion, bcj_lower_bound, omega_compare, volume, volume_meridian_closed
from .topology import index_at_poles, winding_relative_parallel

__version__ = "0.1.0"

__all__ = [
    "BudgetExhausted", "ConvergenceError", "DomainError", "DomainRegion", "LatitudeField",
    "LatitudeSpec", "MeridianField", "SphereChart", "TTypeField", "TTypeSpec", "ZetaSpec",
    "a_components", "bcj_lower_bound", "el_residual", "index_at_poles", "latitude", "magnus",
    "meridian", "minimize_grid", "minimize_in_family", "omega_compare", "residual_report",
    "volume", "volume_meridian_closed", "winding_relative_parallel",
]
