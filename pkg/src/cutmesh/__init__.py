"""Higher-order meshing of implicitly defined geometries.

The package reconstructs the zero set of a level-set function given by
nodal values on a simplicial background mesh, decomposes the cut
elements into conforming higher-order sub-elements, and builds
quadrature rules on the implied interfaces and volumes.  The interface
inherits the background interpolation order, so integrals converge at
the optimal rate of the underlying discretization.
"""

from .convergence_harness import (
    ErrorRecord,
    RateEstimate,
    StudyConfig,
    estimate_rate,
    run_combined_study,
    run_interface_study,
    run_volume_study,
)
from .decomposition import (
    DecompositionResult,
    SubElement,
    decompose_element,
    decompose_mesh,
    decompose_multi,
    map_to_physical,
    simplexify,
)
from .errors import (
    ConfigError,
    CutmeshError,
    DecompositionError,
    DegenerateGradientError,
    InsufficientDataError,
    InvalidArgumentError,
    RefinementExhaustedError,
    RootSearchError,
    SingularPointError,
    ValidityError,
)
from .levelset import (
    AnalyticField,
    bumpy_sphere,
    circle,
    custom,
    flower,
    named_field,
    plane,
    sample_to_mesh,
    sphere,
)
from .mesh import BackgroundMesh, build_structured_mesh, default_box
from .quadrature import (
    DEFAULT_ORDER,
    QuadratureRule,
    build_rule,
    element_measure,
    integrate,
    map_rule,
    map_rule_surface,
    map_rule_volume,
)
from .reconstruction import (
    InterfaceElement,
    ReconstructionConfig,
    SearchVariant,
    check_validity,
    classify_topology,
    reconstruct_2d,
    reconstruct_3d,
)
from .reference_elements import ElementFamily, MAX_ORDER, reference_element

__version__ = "0.1.0"
