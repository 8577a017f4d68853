"""Galerkin boundary elements for two-dimensional exterior elastic scattering.

Burton-Miller combined formulation with regularized hypersingular operators;
same-element integrals are evaluated exactly through Hankel-function series.
"""

from .core import (
    BlockMatrix, DomainError, ElasticMedium, ElastoBEMError, GeometryError, InvalidMediumError,
    SingularSystemError, medium_wavenumbers,
)
from .geometry import (
    BoundaryMesh, Circle, Composite, Ellipse, Kite, MixedScene, Polygon, RightTriangle, RoundedTriangle,
    Star, reference_map, sample_curve,
)
from .quadrature import GaussRule, SingularTable, gauss_legendre, oracle_moment, singular_table
from .specfun import SeriesCoefficients, bessel_jy, f1_series, f2_series, f3_series, f_direct, hankel1, series_coefficients
from .assembly import (
    KernelContext, assemble_adjoint_double_layer, assemble_double_layer, assemble_hypersingular, assemble_mass,
    assemble_single_layer, fundamental_tensor,
)
from .solver import (
    BoundarySolution, Manufactured, PlanePWave, PointSourceP, SolverConfig, boundary_errors, build_system,
    convergence_study, incident_traction, lu_solve, represent_field, solve,
)

__version__ = "0.1.0"
